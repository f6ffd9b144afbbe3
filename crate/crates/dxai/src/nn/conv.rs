//! Convolution, pooling and resampling kernels shared by the graph ops.
//!
//! All batch loops parallelize over samples with a fixed partition and
//! write disjoint output slices, so results are bit-reproducible
//! regardless of thread scheduling.

use rayon::prelude::*;

use super::scalar::Scalar;
use super::tensor::Tensor;

/// c(m,n) = a(m,k) * b(k,n)
pub fn matmul_nn<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [S]) {
    S::gemm(m, k, n, S::ONE, a, b, S::ZERO, c);
}

/// c(m,n) = a(m,k) * b(n,k)^T
pub fn matmul_nt<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [S]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            S::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            S::ZERO,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c(m,n) = a(k,m)^T * b(k,n)
pub fn matmul_tn<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [S]) {
    assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            S::ONE,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            S::ZERO,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv_out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Unfold one sample (cin, h, w) into a (cin*kh*kw, ho*wo) column matrix.
fn im2col<S: Scalar>(
    x: &[S],
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    col: &mut [S],
) {
    debug_assert_eq!(col.len(), cin * kh * kw * ho * wo);
    let n = ho * wo;
    for ci in 0..cin {
        let x_c = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * n;
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    let dst = &mut col[row + oy * wo..row + (oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(S::ZERO);
                        continue;
                    }
                    let x_row = &x_c[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        dst[ox] = if ix < 0 || ix >= w as isize {
                            S::ZERO
                        } else {
                            x_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Fold a column-matrix gradient back onto the input sample, accumulating.
fn col2im_add<S: Scalar>(
    col: &[S],
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    dx: &mut [S],
) {
    let n = ho * wo;
    for ci in 0..cin {
        let dx_c = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * n;
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &col[row + oy * wo..row + (oy + 1) * wo];
                    let dx_row = &mut dx_c[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dx_row[ix as usize] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Batched 2-d convolution; weight shape (cout, cin, kh, kw).
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    stride: usize,
    pad: usize,
) -> Tensor<S> {
    let (b, cin, h, w) = input.dims4();
    let ws = weight.shape();
    assert_eq!(ws.len(), 4);
    let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
    assert_eq!(ws[1], cin, "conv channel mismatch");
    let ho = conv_out_size(h, kh, stride, pad);
    let wo = conv_out_size(w, kw, stride, pad);
    let k = cin * kh * kw;
    let n = ho * wo;

    let mut out = vec![S::ZERO; b * cout * n];
    let in_data = input.as_slice();
    let w_data = weight.as_slice();
    out.par_chunks_mut(cout * n).enumerate().for_each(|(s, out_s)| {
        let mut col = vec![S::ZERO; k * n];
        im2col(
            &in_data[s * cin * h * w..(s + 1) * cin * h * w],
            cin,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
            &mut col,
        );
        matmul_nn(cout, k, n, w_data, &col, out_s);
        if let Some(bias) = bias {
            let bd = bias.as_slice();
            for co in 0..cout {
                let v = bd[co];
                for o in &mut out_s[co * n..(co + 1) * n] {
                    *o += v;
                }
            }
        }
    });
    Tensor::new(vec![b, cout, ho, wo], out)
}

/// Gradients of [`conv2d_forward`]; any of the three outputs can be skipped.
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    grad_out: &Tensor<S>,
    stride: usize,
    pad: usize,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> (Option<Tensor<S>>, Option<Tensor<S>>, Option<Tensor<S>>) {
    let (b, cin, h, w) = input.dims4();
    let ws = weight.shape();
    let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
    let (_, _, ho, wo) = grad_out.dims4();
    let k = cin * kh * kw;
    let n = ho * wo;
    let in_data = input.as_slice();
    let w_data = weight.as_slice();
    let g_data = grad_out.as_slice();

    let mut dx = if need_dx {
        Some(vec![S::ZERO; b * cin * h * w])
    } else {
        None
    };

    // dX: parallel over samples, disjoint slices.
    if let Some(dx) = dx.as_mut() {
        dx.par_chunks_mut(cin * h * w).enumerate().for_each(|(s, dx_s)| {
            let mut dcol = vec![S::ZERO; k * n];
            matmul_tn(k, cout, n, w_data, &g_data[s * cout * n..(s + 1) * cout * n], &mut dcol);
            col2im_add(&dcol, cin, h, w, kh, kw, stride, pad, ho, wo, dx_s);
        });
    }

    // dW: per-sample partials reduced in sample order for determinism.
    let dw = if need_dw {
        let partials: Vec<Vec<S>> = (0..b)
            .into_par_iter()
            .map(|s| {
                let mut col = vec![S::ZERO; k * n];
                im2col(
                    &in_data[s * cin * h * w..(s + 1) * cin * h * w],
                    cin,
                    h,
                    w,
                    kh,
                    kw,
                    stride,
                    pad,
                    ho,
                    wo,
                    &mut col,
                );
                let mut dw_s = vec![S::ZERO; cout * k];
                matmul_nt(cout, n, k, &g_data[s * cout * n..(s + 1) * cout * n], &col, &mut dw_s);
                dw_s
            })
            .collect();
        let mut dw = vec![S::ZERO; cout * k];
        for p in partials {
            for (d, v) in dw.iter_mut().zip(p) {
                *d += v;
            }
        }
        Some(Tensor::new(ws.to_vec(), dw))
    } else {
        None
    };

    let db = if need_db {
        let mut db = vec![S::ZERO; cout];
        for s in 0..b {
            for co in 0..cout {
                let base = (s * cout + co) * n;
                let mut acc = S::ZERO;
                for &g in &g_data[base..base + n] {
                    acc += g;
                }
                db[co] += acc;
            }
        }
        Some(Tensor::new(vec![cout], db))
    } else {
        None
    };

    (dx.map(|d| Tensor::new(vec![b, cin, h, w], d)), dw, db)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let (b, c, h, w) = input.dims4();
    let src = input.as_slice();
    let mut out = vec![S::ZERO; b * c * 4 * h * w];
    let (ho, wo) = (2 * h, 2 * w);
    out.par_chunks_mut(c * ho * wo).enumerate().for_each(|(s, out_s)| {
        for ci in 0..c {
            let plane = &src[(s * c + ci) * h * w..(s * c + ci + 1) * h * w];
            let out_p = &mut out_s[ci * ho * wo..(ci + 1) * ho * wo];
            for y in 0..h {
                for x in 0..w {
                    let v = plane[y * w + x];
                    let o = 2 * y * wo + 2 * x;
                    out_p[o] = v;
                    out_p[o + 1] = v;
                    out_p[o + wo] = v;
                    out_p[o + wo + 1] = v;
                }
            }
        }
    });
    Tensor::new(vec![b, c, ho, wo], out)
}

pub fn upsample2_backward<S: Scalar>(grad_out: &Tensor<S>, h: usize, w: usize) -> Tensor<S> {
    let (b, c, ho, wo) = grad_out.dims4();
    debug_assert_eq!((ho, wo), (2 * h, 2 * w));
    let g = grad_out.as_slice();
    let mut dx = vec![S::ZERO; b * c * h * w];
    dx.par_chunks_mut(c * h * w).enumerate().for_each(|(s, dx_s)| {
        for ci in 0..c {
            let g_p = &g[(s * c + ci) * ho * wo..(s * c + ci + 1) * ho * wo];
            let dx_p = &mut dx_s[ci * h * w..(ci + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let o = 2 * y * wo + 2 * x;
                    dx_p[y * w + x] = g_p[o] + g_p[o + 1] + g_p[o + wo] + g_p[o + wo + 1];
                }
            }
        }
    });
    Tensor::new(vec![b, c, h, w], dx)
}

/// 2x2 mean pooling with stride 2 (spatial sizes must be even).
pub fn avgpool2_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let (b, c, h, w) = input.dims4();
    assert!(h % 2 == 0 && w % 2 == 0, "avgpool2 needs even spatial size, got {h}x{w}");
    let (ho, wo) = (h / 2, w / 2);
    let src = input.as_slice();
    let quarter = S::from_f64(0.25);
    let mut out = vec![S::ZERO; b * c * ho * wo];
    out.par_chunks_mut(c * ho * wo).enumerate().for_each(|(s, out_s)| {
        for ci in 0..c {
            let plane = &src[(s * c + ci) * h * w..(s * c + ci + 1) * h * w];
            let out_p = &mut out_s[ci * ho * wo..(ci + 1) * ho * wo];
            for y in 0..ho {
                for x in 0..wo {
                    let i = 2 * y * w + 2 * x;
                    out_p[y * wo + x] =
                        (plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]) * quarter;
                }
            }
        }
    });
    Tensor::new(vec![b, c, ho, wo], out)
}

pub fn avgpool2_backward<S: Scalar>(grad_out: &Tensor<S>, h: usize, w: usize) -> Tensor<S> {
    let (b, c, ho, wo) = grad_out.dims4();
    let g = grad_out.as_slice();
    let quarter = S::from_f64(0.25);
    let mut dx = vec![S::ZERO; b * c * h * w];
    dx.par_chunks_mut(c * h * w).enumerate().for_each(|(s, dx_s)| {
        for ci in 0..c {
            let g_p = &g[(s * c + ci) * ho * wo..(s * c + ci + 1) * ho * wo];
            let dx_p = &mut dx_s[ci * h * w..(ci + 1) * h * w];
            for y in 0..ho {
                for x in 0..wo {
                    let v = g_p[y * wo + x] * quarter;
                    let i = 2 * y * w + 2 * x;
                    dx_p[i] = v;
                    dx_p[i + 1] = v;
                    dx_p[i + w] = v;
                    dx_p[i + w + 1] = v;
                }
            }
        }
    });
    Tensor::new(vec![b, c, h, w], dx)
}

/// Max pooling; returns output and flat argmax indices into each sample.
pub fn maxpool_forward<S: Scalar>(
    input: &Tensor<S>,
    k: usize,
    stride: usize,
) -> (Tensor<S>, Vec<u32>) {
    let (b, c, h, w) = input.dims4();
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let src = input.as_slice();
    let mut out = vec![S::ZERO; b * c * ho * wo];
    let mut arg = vec![0u32; b * c * ho * wo];
    out.par_chunks_mut(c * ho * wo)
        .zip(arg.par_chunks_mut(c * ho * wo))
        .enumerate()
        .for_each(|(s, (out_s, arg_s))| {
            for ci in 0..c {
                let plane = &src[(s * c + ci) * h * w..(s * c + ci + 1) * h * w];
                for y in 0..ho {
                    for x in 0..wo {
                        let mut best = plane[y * stride * w + x * stride];
                        let mut best_i = (y * stride * w + x * stride) as u32;
                        for ky in 0..k {
                            for kx in 0..k {
                                let i = (y * stride + ky) * w + (x * stride + kx);
                                if plane[i] > best {
                                    best = plane[i];
                                    best_i = i as u32;
                                }
                            }
                        }
                        out_s[ci * ho * wo + y * wo + x] = best;
                        arg_s[ci * ho * wo + y * wo + x] = (ci * h * w) as u32 + best_i;
                    }
                }
            }
        });
    (Tensor::new(vec![b, c, ho, wo], out), arg)
}

pub fn maxpool_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    argmax: &[u32],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Tensor<S> {
    let g = grad_out.as_slice();
    let per = grad_out.numel() / b;
    let mut dx = vec![S::ZERO; b * c * h * w];
    dx.par_chunks_mut(c * h * w).enumerate().for_each(|(s, dx_s)| {
        for i in 0..per {
            dx_s[argmax[s * per + i] as usize] += g[s * per + i];
        }
    });
    Tensor::new(vec![b, c, h, w], dx)
}
