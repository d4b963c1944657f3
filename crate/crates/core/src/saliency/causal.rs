//! Occlusion-based causality: mask a cluster's hulls, re-run the whole
//! rollout (the LSTM carries state, so everything recomputes), and compare
//! MAE over the cluster's frame span.

use super::mask::mask_blob;
use super::{CausalReport, ClusterVerdict, FrameHull, SaliencyCluster, SaliencyConfig, Verdict};
use crate::model::Predictor;
use crate::preprocess::{theta_from_u, ProcessedFrame, VehicleParams};
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct CausalDelta {
    pub baseline_mae_deg: f64,
    pub masked_mae_deg: f64,
    pub delta_mae_deg: f64,
}

fn span_mae(
    window: &[ProcessedFrame],
    u_hats: &[f64],
    vehicle: &VehicleParams,
    span: (usize, usize),
) -> f64 {
    let (a, b) = span;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in a..=b.min(window.len() - 1) {
        let f = &window[t];
        let theta = theta_from_u(f.u_target, f.v_smooth, vehicle);
        let theta_hat = theta_from_u(u_hats[t], f.v_smooth, vehicle);
        sum += (theta - theta_hat).abs();
        count += 1;
    }
    sum / count.max(1) as f64
}

/// Runs the predictor on the original window and on a copy with the
/// cluster's hull masked in every frame it spans, then reports
/// `masked MAE - baseline MAE` (degrees) over that span.
pub fn causal_effect(
    predictor: &dyn Predictor,
    window: &[ProcessedFrame],
    cluster: &SaliencyCluster,
    vehicle: &VehicleParams,
) -> Result<CausalDelta> {
    if window.is_empty() {
        return Err(Error::EmptyInput("causal_effect on empty window"));
    }
    if cluster.hulls.is_empty() {
        return Err(Error::invalid(format!(
            "cluster {} has no hulls attached",
            cluster.id
        )));
    }
    let baseline_u = predictor.predict_u(window)?;
    let mut masked_frames: Vec<ProcessedFrame> = window.to_vec();
    for (&t, hull) in &cluster.hulls {
        if t < masked_frames.len() {
            masked_frames[t] = mask_blob(&masked_frames[t], hull)?;
        }
    }
    let masked_u = predictor.predict_u(&masked_frames)?;

    let span = cluster.frame_span();
    let baseline_mae_deg = span_mae(window, &baseline_u, vehicle, span);
    let masked_mae_deg = span_mae(window, &masked_u, vehicle, span);
    Ok(CausalDelta {
        baseline_mae_deg,
        masked_mae_deg,
        delta_mae_deg: masked_mae_deg - baseline_mae_deg,
    })
}

/// Applies the causality threshold: a blob is causal iff its delta exceeds
/// `tau_causal_deg`. Per-cluster tests are independent read-only rollouts
/// and run in parallel; the report itself assembles in cluster order.
pub fn filter_blobs(
    predictor: &dyn Predictor,
    window: &[ProcessedFrame],
    clusters: &[SaliencyCluster],
    vehicle: &VehicleParams,
    config: &SaliencyConfig,
    window_id: usize,
) -> Result<CausalReport> {
    config.validate()?;
    let deltas: Vec<Result<CausalDelta>> = par::map(clusters, |cluster| {
        causal_effect(predictor, window, cluster, vehicle)
    });
    let mut verdicts = Vec::with_capacity(clusters.len());
    let mut spurious = 0usize;
    for (cluster, delta) in clusters.iter().zip(deltas) {
        let delta = delta?;
        let verdict = if delta.delta_mae_deg > config.tau_causal_deg {
            Verdict::Causal
        } else {
            Verdict::Spurious
        };
        if verdict == Verdict::Spurious {
            spurious += 1;
        }
        verdicts.push(ClusterVerdict {
            cluster_id: cluster.id,
            frame_span: cluster.frame_span(),
            hull_vertices: cluster
                .hulls
                .iter()
                .map(|(&frame, vertices)| FrameHull {
                    frame,
                    vertices: vertices.clone(),
                })
                .collect(),
            baseline_mae_deg: delta.baseline_mae_deg,
            masked_mae_deg: delta.masked_mae_deg,
            delta_mae_deg: delta.delta_mae_deg,
            verdict,
        });
    }
    let spurious_fraction = if verdicts.is_empty() {
        0.0
    } else {
        spurious as f64 / verdicts.len() as f64
    };
    Ok(CausalReport {
        window_id,
        clusters: verdicts,
        spurious_fraction,
    })
}
