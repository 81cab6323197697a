use crate::error::{Error, Result};

/// Dense n-dimensional array of 64-bit floats with an optional gradient
/// slot of the same length.
///
/// `Tensor` is the value carrier at module boundaries (model parameters,
/// batches, exported gradients). Computation happens on a [`super::Tape`],
/// which stores node values internally and can export any node back into
/// a `Tensor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// A constant tensor (no gradient tracking).
    pub fn new(shape: impl Into<Vec<usize>>, values: Vec<f64>) -> Result<Self> {
        Self::build(shape.into(), values, false)
    }

    /// A differentiable leaf tensor.
    pub fn with_grad(shape: impl Into<Vec<usize>>, values: Vec<f64>) -> Result<Self> {
        Self::build(shape.into(), values, true)
    }

    fn build(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Parameter(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(Error::Input(format!(
                "shape {shape:?} wants {len} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("tensor contains a non-finite value".into()));
        }
        Ok(Tensor {
            shape,
            values,
            requires_grad,
            grad: None,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; len],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Gradient of the last backward pass, if this tensor was exported
    /// from a tape with gradients populated.
    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub(crate) fn attach_grad(&mut self, grad: Vec<f64>) {
        debug_assert_eq!(grad.len(), self.values.len());
        self.grad = Some(grad);
    }
}
