//! Dense 4-D tensor in NCHW layout.

use crate::error::{Error, Result};

/// Dense batch-major tensor: `(batch, channels, height, width)`, contiguous
/// row-major `f32` storage, with an optional same-shape gradient buffer.
///
/// All feature maps, network inputs and learnable weights in this crate are
/// `Tensor`s; 1-D parameters (biases, batch-norm scales) use [`Param`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    /// Zero-filled tensor. All dimensions must be >= 1.
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Tensor {
        assert!(
            n >= 1 && c >= 1 && h >= 1 && w >= 1,
            "tensor dimensions must be >= 1, got ({n},{c},{h},{w})"
        );
        Tensor {
            shape: [n, c, h, w],
            data: vec![0.0; n * c * h * w],
            grad: None,
        }
    }

    /// Wraps an existing buffer. Fails if the length does not equal N*C*H*W.
    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!(
                "tensor dimensions must be >= 1, got {shape:?}"
            )));
        }
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "Tensor::from_vec",
                expected: format!("{expected} values for shape {shape:?}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    /// Tensor with every element drawn from `f`.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut() -> f32) -> Tensor {
        let len = shape.iter().product();
        let data = (0..len).map(|_| f()).collect();
        Tensor::from_vec(shape, data).expect("length matches by construction")
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Owned-buffer access for the parameter walker; length must stay fixed.
    pub(crate) fn data_vec_mut(&mut self) -> &mut Vec<f32> {
        &mut self.data
    }

    /// Split borrow of values and gradient for the parameter walker.
    pub(crate) fn values_grad_mut(&mut self) -> (&mut Vec<f32>, &mut Option<Vec<f32>>) {
        (&mut self.data, &mut self.grad)
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Number of elements in one sample (C*H*W).
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    /// Contiguous view of sample `n`.
    pub fn sample(&self, n: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Contiguous view of channel `c` of sample `n` (an H*W plane).
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    /// Value at (n, c, y, x). Test/diagnostic path; kernels index flat slices.
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        let [_, cs, hs, ws] = self.shape;
        self.data[((n * cs + c) * hs + y) * ws + x]
    }

    /// Allocates (or keeps) the gradient buffer, zero-filled.
    pub fn alloc_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    /// Replaces the gradient buffer; the buffer must match the data length.
    pub fn set_grad(&mut self, grad: Vec<f32>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::set_grad",
                expected: format!("{} values", self.data.len()),
                actual: format!("{} values", grad.len()),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn take_grad(&mut self) -> Option<Vec<f32>> {
        self.grad.take()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Reshape without copying. The element count must be preserved.
    pub fn reshape(mut self, shape: [usize; 4]) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                context: "Tensor::reshape",
                expected: format!("product {} (shape {:?})", self.data.len(), self.shape),
                actual: format!("product {expected} (shape {shape:?})"),
            });
        }
        self.shape = shape;
        Ok(self)
    }
}

/// A 1-D learnable parameter (bias, batch-norm gamma/beta, PReLU slopes)
/// with its optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub values: Vec<f32>,
    pub grad: Option<Vec<f32>>,
}

impl Param {
    pub fn new(values: Vec<f32>) -> Param {
        Param { values, grad: None }
    }

    pub fn filled(len: usize, value: f32) -> Param {
        Param::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn set_grad(&mut self, grad: Vec<f32>) {
        debug_assert_eq!(grad.len(), self.values.len());
        self.grad = Some(grad);
    }
}
