use std::sync::Arc;

use super::{kernels, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ValueId(pub(crate) usize);

/// Element precision policy of a tape.
///
/// `Single` rounds every leaf and primitive output through f32 (the training
/// default); `Double` keeps full f64 and exists for gradient checking.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum BroadcastKind {
    Same,
    Scalar,
    LastAxis,
}

/// Primitive kinds applicable through [`Tape::apply`].
#[derive(Clone, Debug)]
pub enum Primitive {
    /// Strided cross-correlation with zero "same" padding.
    /// Inputs: image `[H,W,Ci]`, kernel `[kh,kw,Ci,Co]`.
    Conv2d { stride: usize },
    MatMul,
    Add,
    Mul,
    Tanh,
    Sigmoid,
    Relu,
    Abs,
    Softmax { axis: usize },
    /// `None` sums every axis down to a rank-0 scalar.
    ReduceSum { axis: Option<usize> },
    Reshape { shape: Vec<usize> },
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    /// Inverted dropout with a caller-supplied 0/1 mask.
    Dropout { keep: f64, mask: Arc<Vec<f64>> },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Conv2d { .. } => "conv2d",
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Mul => "multiply",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Relu => "relu",
            Primitive::Abs => "abs",
            Primitive::Softmax { .. } => "softmax",
            Primitive::ReduceSum { .. } => "reduce-sum",
            Primitive::Reshape { .. } => "reshape",
            Primitive::Concat { .. } => "concat",
            Primitive::Slice { .. } => "slice",
            Primitive::Dropout { .. } => "dropout",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Primitive::Conv2d { .. }
            | Primitive::MatMul
            | Primitive::Add
            | Primitive::Mul
            | Primitive::Concat { .. } => 2,
            _ => 1,
        }
    }
}

pub(super) struct Node {
    pub(super) value: Tensor,
    /// `None` marks a leaf.
    pub(super) op: Option<(Primitive, Vec<ValueId>)>,
}

/// Ordered record of primitive applications.
///
/// Topological order holds by construction: an op can only reference ids the
/// tape has already produced. Construction and backward are single-threaded;
/// finished tensors read out of a tape are plain immutable data.
pub struct Tape {
    pub(super) nodes: Vec<Node>,
    precision: Precision,
}

impl Tape {
    pub fn new(precision: Precision) -> Self {
        Tape {
            nodes: Vec::new(),
            precision,
        }
    }

    /// Single-precision tape; the default for everything but gradcheck.
    pub fn single() -> Self {
        Tape::new(Precision::Single)
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn round(&self, t: &mut Tensor) {
        if self.precision == Precision::Single {
            t.quantize_f32();
        }
    }

    /// Registers an input value (parameter or data) on the tape.
    pub fn leaf(&mut self, mut value: Tensor) -> ValueId {
        self.round(&mut value);
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node { value, op: None });
        id
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn is_leaf(&self, id: ValueId) -> bool {
        self.nodes[id.0].op.is_none()
    }

    pub fn leaf_ids(&self) -> Vec<ValueId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].op.is_none())
            .map(ValueId)
            .collect()
    }

    /// Applies a primitive and records it. Rejects shape mismatches (the
    /// diagnostic names both shapes) and non-finite outputs.
    pub fn apply(&mut self, prim: Primitive, inputs: &[ValueId]) -> Result<ValueId> {
        if inputs.len() != prim.arity() {
            return Err(Error::invalid(format!(
                "{} expects {} inputs, got {}",
                prim.name(),
                prim.arity(),
                inputs.len()
            )));
        }
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(Error::invalid(format!(
                    "{}: input id {} not on this tape",
                    prim.name(),
                    id.0
                )));
            }
        }
        let tensors: Vec<&Tensor> = inputs.iter().map(|&id| &self.nodes[id.0].value).collect();
        let mut out = kernels::forward(&prim, &tensors)?;
        if !out.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: prim.name() });
        }
        self.round(&mut out);
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node {
            value: out,
            op: Some((prim, inputs.to_vec())),
        });
        Ok(id)
    }

    // -- convenience builders over `apply` ---------------------------------

    pub fn conv2d(&mut self, input: ValueId, kernel: ValueId, stride: usize) -> Result<ValueId> {
        self.apply(Primitive::Conv2d { stride }, &[input, kernel])
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn tanh(&mut self, x: ValueId) -> Result<ValueId> {
        self.apply(Primitive::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: ValueId) -> Result<ValueId> {
        self.apply(Primitive::Sigmoid, &[x])
    }

    pub fn relu(&mut self, x: ValueId) -> Result<ValueId> {
        self.apply(Primitive::Relu, &[x])
    }

    pub fn abs(&mut self, x: ValueId) -> Result<ValueId> {
        self.apply(Primitive::Abs, &[x])
    }

    pub fn softmax(&mut self, x: ValueId, axis: usize) -> Result<ValueId> {
        self.apply(Primitive::Softmax { axis }, &[x])
    }

    pub fn reduce_sum(&mut self, x: ValueId, axis: Option<usize>) -> Result<ValueId> {
        self.apply(Primitive::ReduceSum { axis }, &[x])
    }

    pub fn reshape(&mut self, x: ValueId, shape: &[usize]) -> Result<ValueId> {
        self.apply(
            Primitive::Reshape {
                shape: shape.to_vec(),
            },
            &[x],
        )
    }

    pub fn concat(&mut self, a: ValueId, b: ValueId, axis: usize) -> Result<ValueId> {
        self.apply(Primitive::Concat { axis }, &[a, b])
    }

    pub fn slice(&mut self, x: ValueId, axis: usize, start: usize, len: usize) -> Result<ValueId> {
        self.apply(Primitive::Slice { axis, start, len }, &[x])
    }

    pub fn dropout(&mut self, x: ValueId, keep: f64, mask: Arc<Vec<f64>>) -> Result<ValueId> {
        self.apply(Primitive::Dropout { keep, mask }, &[x])
    }

    /// Multiplies by a constant scalar (recorded as a fresh leaf).
    pub fn scale(&mut self, x: ValueId, c: f64) -> Result<ValueId> {
        let c = self.leaf(Tensor::scalar(c));
        self.mul(x, c)
    }

    /// `a - b`, composed from the primitive set.
    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    // -- reverse pass -------------------------------------------------------

    /// Accumulates gradients of `seed . output` with respect to every node.
    ///
    /// The seed must match the output's shape. Leaves that do not influence
    /// the output report zero gradients.
    pub fn backward(&self, output: ValueId, seed: &Tensor) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyInput("backward on empty tape"));
        }
        let out_shape = self.nodes[output.0].value.shape();
        if seed.shape() != out_shape {
            return Err(Error::ShapeMismatch {
                op: "backward seed",
                lhs: seed.shape().to_vec(),
                rhs: out_shape.to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.clone());
        for idx in (0..=output.0).rev() {
            let Some((prim, inputs)) = &self.nodes[idx].op else {
                continue;
            };
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let tensors: Vec<&Tensor> = inputs.iter().map(|&id| &self.nodes[id.0].value).collect();
            let gs = kernels::vjp(prim, &tensors, &self.nodes[idx].value, &gout)?;
            for (&input, g) in inputs.iter().zip(gs) {
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(g),
                }
            }
            grads[idx] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    // -- forward replay -----------------------------------------------------

    /// Overwrites a leaf's value; shape must match.
    pub fn set_leaf(&mut self, id: ValueId, mut value: Tensor) -> Result<()> {
        if self.nodes[id.0].op.is_some() {
            return Err(Error::invalid(format!("node {} is not a leaf", id.0)));
        }
        if value.shape() != self.nodes[id.0].value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_leaf",
                lhs: value.shape().to_vec(),
                rhs: self.nodes[id.0].value.shape().to_vec(),
            });
        }
        self.round(&mut value);
        self.nodes[id.0].value = value;
        Ok(())
    }

    /// Recomputes every non-leaf value from current leaf values. Identical
    /// leaves reproduce identical outputs bit for bit.
    pub fn replay(&mut self) -> Result<()> {
        for idx in 0..self.nodes.len() {
            let Some((prim, inputs)) = &self.nodes[idx].op else {
                continue;
            };
            let prim = prim.clone();
            let inputs = inputs.clone();
            let tensors: Vec<&Tensor> = inputs.iter().map(|&id| &self.nodes[id.0].value).collect();
            let mut out = kernels::forward(&prim, &tensors)?;
            if !out.data().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { op: prim.name() });
            }
            self.round(&mut out);
            self.nodes[idx].value = out;
        }
        Ok(())
    }
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ValueId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a node, materializing zeros for untouched leaves.
    pub fn get_or_zero(&self, id: ValueId, tape: &Tape) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(id).shape()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_tape_backward() {
        // y = x via reshape; seed 1 -> gradient 1
        let mut tape = Tape::new(Precision::Double);
        let x = tape.leaf(t(&[1], &[3.0]));
        let y = tape.reshape(x, &[1]).unwrap();
        let g = tape.backward(y, &t(&[1], &[1.0])).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn bilinear_form_gradient() {
        // y = sum(a * b) with a fixed -> grad for b equals a
        let mut tape = Tape::new(Precision::Double);
        let a = tape.leaf(t(&[3], &[2.0, -1.0, 0.5]));
        let b = tape.leaf(t(&[3], &[1.0, 4.0, -2.0]));
        let p = tape.mul(a, b).unwrap();
        let y = tape.reduce_sum(p, None).unwrap();
        let g = tape.backward(y, &Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[2.0, -1.0, 0.5]);
        assert_eq!(g.get(a).unwrap().data(), &[1.0, 4.0, -2.0]);
    }

    #[test]
    fn unused_leaf_reports_zero_gradient() {
        let mut tape = Tape::single();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let unused = tape.leaf(t(&[4], &[9.0; 4]));
        let y = tape.reduce_sum(x, None).unwrap();
        let g = tape.backward(y, &Tensor::scalar(1.0)).unwrap();
        assert!(g.get(unused).is_none());
        let z = g.get_or_zero(unused, &tape);
        assert_eq!(z.shape(), &[4]);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_bad_seed_shape() {
        let mut tape = Tape::single();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let y = tape.reduce_sum(x, None).unwrap();
        assert!(tape.backward(y, &t(&[2], &[1.0, 1.0])).is_err());
    }

    #[test]
    fn conv_identity_kernel_passthrough() {
        // 1x1 identity kernel, stride 1 -> input unchanged
        let mut tape = Tape::new(Precision::Double);
        let img = tape.leaf(t(&[3, 4, 1], &(0..12).map(|v| v as f64).collect::<Vec<_>>()));
        let k = tape.leaf(t(&[1, 1, 1, 1], &[1.0]));
        let out = tape.conv2d(img, k, 1).unwrap();
        assert_eq!(tape.value(out).shape(), &[3, 4, 1]);
        assert_eq!(tape.value(out).data(), tape.value(img).data());
    }

    #[test]
    fn softmax_of_equal_entries_is_uniform() {
        let mut tape = Tape::new(Precision::Double);
        let x = tape.leaf(t(&[5], &[0.7; 5]));
        let y = tape.softmax(x, 0).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_matches_direct_summation_oracle() {
        // 4x4 single-channel image, hand-picked 3x3 kernel, stride 2, same
        // padding. Expected values computed by the brute-force sum below and
        // frozen here.
        let img_data: Vec<f64> = vec![
            1.0, 2.0, -1.0, 0.5, //
            0.0, 3.0, 1.5, -2.0, //
            2.0, -1.0, 0.0, 1.0, //
            -0.5, 1.0, 2.0, 0.0,
        ];
        let ker_data: Vec<f64> = vec![
            0.25, -0.5, 0.75, //
            1.0, 0.0, -1.0, //
            -0.25, 0.5, 0.125,
        ];

        // independent direct-summation oracle (cross-correlation, zero pad)
        let brute = |img: &[f64], ker: &[f64]| -> Vec<f64> {
            let (h, w, kh, kw, s) = (4i64, 4i64, 3i64, 3i64, 2i64);
            let (oh, ow) = (2i64, 2i64);
            // same padding: total = (oh-1)*s + kh - h = 1 -> top 0, bottom 1
            let (pad_top, pad_left) = (0i64, 0i64);
            let mut out = vec![0.0; (oh * ow) as usize];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy * s - pad_top + ky;
                            let ix = ox * s - pad_left + kx;
                            if iy >= 0 && iy < h && ix >= 0 && ix < w {
                                acc += img[(iy * w + ix) as usize] * ker[(ky * kw + kx) as usize];
                            }
                        }
                    }
                    out[(oy * ow + ox) as usize] = acc;
                }
            }
            out
        };
        let expect = brute(&img_data, &ker_data);
        // frozen oracle output for this image/kernel pair
        assert_eq!(expect, vec![-4.0, 1.5, -1.5, 1.5]);

        let mut tape = Tape::new(Precision::Double);
        let img = tape.leaf(t(&[4, 4, 1], &img_data));
        let k = tape.leaf(t(&[3, 3, 1, 1], &ker_data));
        let out = tape.conv2d(img, k, 2).unwrap();
        assert_eq!(tape.value(out).shape(), &[2, 2, 1]);
        for (got, want) in tape.value(out).data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn replay_reproduces_outputs_bitwise() {
        let mut tape = Tape::single();
        let x = tape.leaf(t(&[4], &[0.3, -0.7, 1.1, 0.05]));
        let w = tape.leaf(t(&[4, 2], &[0.1, -0.2, 0.4, 0.9, -0.3, 0.6, 0.2, -0.8]));
        let h = tape.matmul(x, w).unwrap();
        let y = tape.tanh(h).unwrap();
        let before = tape.value(y).data().to_vec();
        tape.replay().unwrap();
        let after = tape.value(y).data().to_vec();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(&after));
    }

    #[test]
    fn single_precision_rounds_through_f32() {
        let mut tape = Tape::single();
        let x = tape.leaf(Tensor::scalar(0.1));
        assert_eq!(tape.value(x).item(), 0.1f32 as f64);
        let mut dtape = Tape::new(Precision::Double);
        let xd = dtape.leaf(Tensor::scalar(0.1));
        assert_eq!(dtape.value(xd).item(), 0.1);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::single();
        let a = tape.leaf(t(&[2, 3], &[0.0; 6]));
        let b = tape.leaf(t(&[4, 2], &[0.0; 8]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn dropout_scales_by_inverse_keep() {
        let mut tape = Tape::new(Precision::Double);
        let x = tape.leaf(t(&[4], &[1.0, 2.0, 3.0, 4.0]));
        let mask = Arc::new(vec![1.0, 0.0, 1.0, 0.0]);
        let y = tape.dropout(x, 0.5, mask).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 0.0, 6.0, 0.0]);
    }

    #[test]
    fn dropout_sum_is_unbiased_under_inverted_scaling() {
        // expectation of reduce-sum(dropout(x)) over random masks equals the
        // unmasked sum; checked over 1000 masks within a 3-sigma band
        use rand::Rng;
        let keep = 0.7;
        let n = 64usize;
        let values: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 1.5).collect();
        let clean_sum: f64 = values.iter().sum();
        let mut rng = crate::rng::stream(12, 13, 0);
        let trials = 1000;
        let mut sums = Vec::with_capacity(trials);
        for _ in 0..trials {
            let mask: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < keep { 1.0 } else { 0.0 })
                .collect();
            let mut tape = Tape::new(Precision::Double);
            let x = tape.leaf(t(&[n], &values));
            let d = tape.dropout(x, keep, Arc::new(mask)).unwrap();
            let s = tape.reduce_sum(d, None).unwrap();
            sums.push(tape.value(s).item());
        }
        let mean: f64 = sums.iter().sum::<f64>() / trials as f64;
        // variance of one masked sum: sum_i x_i^2 (1-p)/p
        let var_one: f64 = values.iter().map(|v| v * v).sum::<f64>() * (1.0 - keep) / keep;
        let sigma_mean = (var_one / trials as f64).sqrt();
        assert!(
            (mean - clean_sum).abs() < 3.0 * sigma_mean,
            "mean {mean} vs clean {clean_sum} (3 sigma {})",
            3.0 * sigma_mean
        );
    }
}
