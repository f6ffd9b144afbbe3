use std::sync::Arc;

use super::scalar::Scalar;

/// Dense row-major tensor with copy-on-write storage.
///
/// Clones share the underlying buffer, so passing tensors between the
/// graph, parameter stores and checkpoints is cheap; mutation goes through
/// [`Tensor::make_mut`], which copies only when the buffer is shared.
#[derive(Clone, Debug)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match buffer length {}",
            shape,
            data.len()
        );
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![S::ZERO; n])
    }

    pub fn full(shape: Vec<usize>, value: S) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn scalar(value: S) -> Self {
        Tensor::new(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn make_mut(&mut self) -> &mut [S] {
        Arc::make_mut(&mut self.data)
    }

    /// Reinterpret the buffer with a new shape of equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.numel());
        Tensor {
            shape,
            data: Arc::clone(&self.data),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn scalar_value(&self) -> S {
        assert_eq!(self.numel(), 1, "expected scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Interpret as (batch, channels, height, width).
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.shape.len(), 4, "expected 4-d tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    /// Interpret as (rows, cols).
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "expected 2-d tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    /// Lossy element-type conversion (used to run f32-trained models in f64).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            self.shape.clone(),
            self.data.iter().map(|x| T::from_f64(x.to_f64())).collect(),
        )
    }
}
