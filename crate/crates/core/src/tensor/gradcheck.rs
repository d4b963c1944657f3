//! Central-difference verification of the reverse pass.
//!
//! The oracle side never touches the backward code: it replays the tape
//! forward at perturbed leaf values and differences a fixed random projection
//! of the output. Checking runs on a double-precision copy of the tape so f32
//! rounding cannot masquerade as an adjoint bug.

use rand::Rng;

use super::tape::{Node, Precision, Tape, ValueId};
use super::{kernels, Tensor};
use crate::rng;
use crate::{Error, Result};

const FD_STEP: f64 = 1e-4;
/// Relative error denominator floor; below this scale the comparison is
/// effectively absolute.
const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct LeafReport {
    pub leaf: ValueId,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub per_leaf: Vec<LeafReport>,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.per_leaf.iter().all(|r| r.pass)
    }

    pub fn worst(&self) -> f64 {
        self.per_leaf.iter().fold(0.0, |m, r| m.max(r.max_rel_err))
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn double_copy(tape: &Tape) -> Result<Tape> {
    let mut work = Tape::new(Precision::Double);
    for node in &tape.nodes {
        work.nodes.push(Node {
            value: node.value.clone(),
            op: node.op.clone(),
        });
    }
    work.replay()?;
    Ok(work)
}

/// Deterministic projection weights for collapsing the output to a scalar.
/// A uniform seed would be blind to adjoint bugs that cancel under
/// summation (softmax rows always sum to one, for instance).
fn projection(len: usize) -> Vec<f64> {
    let mut r = rng::stream(0x5eed_cafe, 17, len as u64);
    (0..len).map(|_| 0.5 + r.random::<f64>()).collect()
}

/// Compares analytic leaf gradients against central finite differences.
///
/// Reports the max relative error per leaf; the check passes when every leaf
/// stays within `tolerance`.
pub fn gradient_check(tape: &Tape, output: ValueId, tolerance: f64) -> Result<GradCheckReport> {
    if !(tolerance > 0.0) {
        return Err(Error::invalid(format!("tolerance {tolerance} must be > 0")));
    }
    if tape.is_empty() {
        return Err(Error::EmptyInput("gradient_check on empty tape"));
    }
    let mut work = double_copy(tape)?;
    let out_len = work.value(output).len();
    let proj = projection(out_len);
    let seed = Tensor::new(work.value(output).shape().to_vec(), proj.clone())?;
    let grads = work.backward(output, &seed)?;

    let objective = |tape: &Tape| -> f64 {
        tape.value(output)
            .data()
            .iter()
            .zip(&proj)
            .map(|(&v, &w)| v * w)
            .sum()
    };

    let mut per_leaf = Vec::new();
    for leaf in work.leaf_ids() {
        let base = work.value(leaf).clone();
        let analytic = grads.get_or_zero(leaf, &work);
        let mut max_rel_err = 0.0_f64;
        for e in 0..base.len() {
            let mut plus = base.clone();
            plus.data_mut()[e] += FD_STEP;
            work.set_leaf(leaf, plus)?;
            work.replay()?;
            let fp = objective(&work);

            let mut minus = base.clone();
            minus.data_mut()[e] -= FD_STEP;
            work.set_leaf(leaf, minus)?;
            work.replay()?;
            let fm = objective(&work);

            let numeric = (fp - fm) / (2.0 * FD_STEP);
            max_rel_err = max_rel_err.max(rel_err(analytic.data()[e], numeric));
        }
        work.set_leaf(leaf, base)?;
        per_leaf.push(LeafReport {
            leaf,
            max_rel_err,
            pass: max_rel_err <= tolerance,
        });
    }
    work.replay()?;
    Ok(GradCheckReport {
        tolerance,
        per_leaf,
    })
}

#[derive(Clone, Debug)]
pub struct OpAdjointReport {
    pub op: &'static str,
    pub node_index: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Checks every recorded op's vjp against finite differences of that op's
/// forward rule alone, so a failure names the offending primitive.
/// `corrupt` perturbs the adjoint of the named primitive; it exists for
/// negative-control tests.
pub fn check_op_adjoints(
    tape: &Tape,
    tolerance: f64,
    corrupt: Option<&'static str>,
) -> Result<Vec<OpAdjointReport>> {
    let work = double_copy(tape)?;
    let mut reports = Vec::new();
    for (idx, node) in work.nodes.iter().enumerate() {
        let Some((prim, input_ids)) = &node.op else {
            continue;
        };
        let inputs: Vec<Tensor> = input_ids
            .iter()
            .map(|&id| work.value(id).clone())
            .collect();
        let refs: Vec<&Tensor> = inputs.iter().collect();
        let out = kernels::forward(prim, &refs)?;
        let proj = projection(out.len());
        let seed = Tensor::new(out.shape().to_vec(), proj.clone())?;
        let mut analytic = kernels::vjp(prim, &refs, &out, &seed)?;
        if corrupt == Some(prim.name()) {
            for g in &mut analytic {
                for v in g.data_mut() {
                    *v *= 1.5;
                }
            }
        }
        let mut max_rel_err = 0.0_f64;
        for (which, input) in inputs.iter().enumerate() {
            for e in 0..input.len() {
                let eval = |delta: f64| -> Result<f64> {
                    let mut bumped = inputs.clone();
                    bumped[which].data_mut()[e] += delta;
                    let refs: Vec<&Tensor> = bumped.iter().collect();
                    let o = kernels::forward(prim, &refs)?;
                    Ok(o.data().iter().zip(&proj).map(|(&v, &w)| v * w).sum())
                };
                let numeric = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
                max_rel_err = max_rel_err.max(rel_err(analytic[which].data()[e], numeric));
            }
        }
        reports.push(OpAdjointReport {
            op: prim.name(),
            node_index: idx,
            max_rel_err,
            pass: max_rel_err <= tolerance,
        });
    }
    Ok(reports)
}
