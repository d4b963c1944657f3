//! Dense tensors with tape-recorded reverse-mode differentiation.
//!
//! The primitive set is exactly what the steering network needs: strided
//! same-padded convolution (cross-correlation convention), matmul, pointwise
//! algebra, softmax, reductions, shape surgery and inverted dropout. Every
//! application is recorded on a [`Tape`]; [`Tape::backward`] replays the
//! records in reverse to accumulate leaf gradients.
//!
//! Values are held in f64 storage. A tape in [`Precision::Single`] (the
//! default) rounds every leaf and every primitive output through f32, so the
//! numbers the network sees carry 32-bit precision end to end; gradient
//! checking runs tapes in [`Precision::Double`] so finite differences are not
//! drowned by rounding noise.

mod checkpoint;
mod gradcheck;
mod kernels;
mod tape;

pub use checkpoint::{load_params, save_params, ParamSet};
pub use gradcheck::{check_op_adjoints, gradient_check, GradCheckReport, LeafReport, OpAdjointReport};
pub use tape::{Gradients, Precision, Primitive, Tape, ValueId};

use crate::{Error, Result};

/// Dense N-dimensional array of finite reals, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting extent/length mismatches and non-finite
    /// elements.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::invalid(format!("zero extent in shape {shape:?}")));
        }
        if data.len() != expect {
            return Err(Error::invalid(format!(
                "shape {shape:?} wants {expect} elements, got {}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "tensor::new" });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    /// Rank-0 scalar.
    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn from_f32(shape: Vec<usize>, data: &[f32]) -> Result<Self> {
        Tensor::new(shape, data.iter().map(|&v| v as f64).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Element at a full multi-index; for tests and small-scale inspection.
    pub fn at(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.rank());
        let mut flat = 0;
        for (i, (&ix, &ext)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(ix < ext, "index {ix} out of extent {ext} at axis {i}");
            flat = flat * ext + ix;
        }
        self.data[flat]
    }

    /// Rounds every element through f32.
    pub(crate) fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
