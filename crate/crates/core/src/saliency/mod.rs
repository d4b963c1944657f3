//! Fine-grained decoder: attention heat maps, particle sampling, space-time
//! clustering, per-frame convex hulls, occlusion-based causality testing and
//! blob filtering.
//!
//! The flow per window: `build_map` per frame -> `sample_particles` ->
//! `cluster_particles` -> `attach_hulls` -> `causal_effect` per cluster ->
//! `filter_blobs`. Spurious blobs (masking them does not hurt prediction)
//! are dropped from the displayed explanation.

mod causal;
mod dbscan;
mod hull;
mod map;
mod mask;
mod particles;

pub use causal::{causal_effect, filter_blobs, CausalDelta};
pub use dbscan::{cluster_particles, Clustering};
pub use hull::{convex_hull, dilate_degenerate, frame_hull, point_in_hull, Pt};
pub use map::{build_map, AttentionMap, MAP_UPSAMPLE};
pub use mask::{mask_blob, warp_saliency};
pub use particles::{sample_particles, Particle, ParticleSet};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyConfig {
    /// Particles drawn per frame (with replacement).
    pub particles_per_frame: usize,
    /// DBSCAN neighborhood radius in scaled pixel units.
    pub eps: f64,
    /// DBSCAN core-point threshold, counting duplicates with multiplicity.
    pub min_pts: usize,
    /// Pixels of distance per frame step along the time axis.
    pub time_scale: f64,
    /// A blob is causal when masking it raises MAE by more than this
    /// (degrees).
    pub tau_causal_deg: f64,
    /// Side length of warped saliency patches.
    pub warp_size: usize,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        SaliencyConfig {
            particles_per_frame: 500,
            eps: 5.0,
            min_pts: 5,
            time_scale: 4.0,
            tau_causal_deg: 0.1,
            warp_size: 64,
        }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<()> {
        // tau may be negative: that forces every blob causal, which the
        // threshold tests rely on
        if self.particles_per_frame == 0
            || self.eps <= 0.0
            || self.min_pts == 0
            || self.time_scale <= 0.0
            || !self.tau_causal_deg.is_finite()
            || self.warp_size == 0
        {
            return Err(crate::Error::invalid(format!("saliency config {self:?}")));
        }
        Ok(())
    }
}

/// A DBSCAN blob of attention particles with its per-frame convex hulls.
#[derive(Clone, Debug)]
pub struct SaliencyCluster {
    pub id: usize,
    /// Indices into the particle set, in original order.
    pub members: Vec<usize>,
    /// Frame offset (within the window) -> CCW hull vertices. Populated by
    /// [`attach_hulls`]; degenerate frames are dilated into real polygons.
    pub hulls: BTreeMap<usize, Vec<Pt>>,
}

impl SaliencyCluster {
    /// Inclusive frame-offset span covered by this cluster's hulls.
    pub fn frame_span(&self) -> (usize, usize) {
        let first = self.hulls.keys().next().copied().unwrap_or(0);
        let last = self.hulls.keys().next_back().copied().unwrap_or(first);
        (first, last)
    }
}

/// Computes per-frame hulls for a cluster's members.
pub fn attach_hulls(cluster: &mut SaliencyCluster, particles: &ParticleSet) {
    let mut by_frame: BTreeMap<usize, Vec<Pt>> = BTreeMap::new();
    for &m in &cluster.members {
        let p = &particles.particles[m];
        by_frame
            .entry(p.t)
            .or_default()
            .push((p.x as i64, p.y as i64));
    }
    cluster.hulls = by_frame
        .into_iter()
        .map(|(t, pts)| (t, frame_hull(&pts, particles.width, particles.height)))
        .collect();
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Causal,
    Spurious,
}

/// Per-cluster causality outcome plus its geometry, ready for reporting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub cluster_id: usize,
    /// Inclusive window-relative frame span.
    pub frame_span: (usize, usize),
    pub hull_vertices: Vec<FrameHull>,
    pub baseline_mae_deg: f64,
    pub masked_mae_deg: f64,
    pub delta_mae_deg: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameHull {
    pub frame: usize,
    pub vertices: Vec<(i64, i64)>,
}

/// Verdicts for every cluster of one window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CausalReport {
    pub window_id: usize,
    pub clusters: Vec<ClusterVerdict>,
    /// #spurious / #clusters; 0 for an empty window.
    pub spurious_fraction: f64,
}

/// One JSON line per cluster plus one summary line per window.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReportRecord {
    Cluster {
        window_id: usize,
        cluster_id: usize,
        frame_span: (usize, usize),
        hull_vertices: Vec<FrameHull>,
        baseline_mae_deg: f64,
        masked_mae_deg: f64,
        delta_mae_deg: f64,
        verdict: Verdict,
    },
    Summary {
        window_id: usize,
        clusters: usize,
        causal: usize,
        spurious: usize,
        spurious_fraction: f64,
    },
}

/// Serializes a window report as JSON lines.
pub fn report_to_jsonl(report: &CausalReport) -> String {
    let mut out = String::new();
    for c in &report.clusters {
        let rec = ReportRecord::Cluster {
            window_id: report.window_id,
            cluster_id: c.cluster_id,
            frame_span: c.frame_span,
            hull_vertices: c.hull_vertices.clone(),
            baseline_mae_deg: c.baseline_mae_deg,
            masked_mae_deg: c.masked_mae_deg,
            delta_mae_deg: c.delta_mae_deg,
            verdict: c.verdict,
        };
        out.push_str(&serde_json::to_string(&rec).expect("report serializes"));
        out.push('\n');
    }
    let causal = report
        .clusters
        .iter()
        .filter(|c| c.verdict == Verdict::Causal)
        .count();
    let rec = ReportRecord::Summary {
        window_id: report.window_id,
        clusters: report.clusters.len(),
        causal,
        spurious: report.clusters.len() - causal,
        spurious_fraction: report.spurious_fraction,
    };
    out.push_str(&serde_json::to_string(&rec).expect("report serializes"));
    out.push('\n');
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<ReportRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| crate::Error::parse("report jsonl", e.to_string()))
        })
        .collect()
}
