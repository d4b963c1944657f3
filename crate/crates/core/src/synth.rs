//! Deterministic synthetic driving scenes with ground-truth steering and
//! ground-truth causal/spurious region masks.
//!
//! The road is a perspective projection of a constant-curvature path whose
//! curvature follows a clamped Ornstein-Uhlenbeck process. Lane markings are
//! rendered with soft subpixel edges so their geometry can be inverted
//! precisely; bright distractor rectangles live strictly above the horizon
//! and draw from an rng stream independent of the curvature stream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::{GrayImage, RgbImage};
use crate::preprocess::{theta_from_u, TelemetrySample, VehicleParams};
use crate::rng;
use crate::{par, Error, Result};

pub const FRAME_W: usize = 160;
pub const FRAME_H: usize = 80;
/// Row of the horizon line; everything causal renders below it.
pub const HORIZON_Y: usize = 28;
/// Depth scale: a row y below the horizon sees the road at
/// z = DEPTH_SCALE / (y - HORIZON_Y) meters.
const DEPTH_SCALE: f64 = 51.0;
/// Pixels per (meter / meter-of-depth) of lateral offset.
const FOCAL_X: f64 = 90.0;
/// Optical center on the pixel grid (column centers run 0..159).
const CENTER_X: f64 = 79.5;

const ROAD_COLOR: [f64; 3] = [72.0, 72.0, 78.0];
// Same color as the road: the ground plane must carry no geometry signal of
// its own, so the lane markings are the only causal steering cue and the
// ground-truth causal mask is exact.
const GRASS_COLOR: [f64; 3] = [72.0, 72.0, 78.0];
const LANE_COLOR: [f64; 3] = [250.0, 235.0, 90.0];
const SKY_TOP: [f64; 3] = [118.0, 158.0, 215.0];
const SKY_HORIZON: [f64; 3] = [175.0, 198.0, 235.0];

/// Lane-mask threshold on marking coverage.
const LANE_MASK_MIN_COVERAGE: f64 = 0.25;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneParams {
    pub seed: u64,
    pub frames: usize,
    /// Seconds between frames.
    pub dt: f64,
    pub velocity_mps: f64,
    /// Ornstein-Uhlenbeck mean-reversion rate (1/s).
    pub ou_rate: f64,
    /// Ornstein-Uhlenbeck volatility.
    pub ou_volatility: f64,
    /// Curvature clamp bound, 1/m.
    pub u_clamp: f64,
    pub lane_width_m: f64,
    pub lane_line_halfwidth_m: f64,
    /// Per-frame spawn probability of a new sky distractor.
    pub distractor_rate: f64,
    pub vehicle: VehicleParams,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            seed: 0,
            frames: 200,
            dt: 0.05,
            velocity_mps: 23.0,
            ou_rate: 0.35,
            ou_volatility: 0.012,
            u_clamp: 0.04,
            lane_width_m: 3.6,
            lane_line_halfwidth_m: 0.09,
            distractor_rate: 0.15,
            vehicle: VehicleParams::default(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        if self.frames == 0 || self.dt <= 0.0 || self.velocity_mps < 0.0 {
            return Err(Error::invalid(format!("scene params {self:?}")));
        }
        if !(self.u_clamp > 0.0 && self.u_clamp <= 0.1) {
            return Err(Error::invalid(format!(
                "u clamp {} outside (0, 0.1]",
                self.u_clamp
            )));
        }
        Ok(())
    }
}

/// Ground-truth pixel masks for one frame: lane markings are the causal
/// region, distractors the spurious one. The two never intersect.
#[derive(Clone, Debug)]
pub struct FrameMasks {
    pub lane: GrayImage,
    pub distractor: GrayImage,
}

pub struct SceneOutput {
    pub frames: Vec<RgbImage>,
    pub telemetry: Vec<TelemetrySample>,
    pub masks: Vec<FrameMasks>,
    /// Generating curvature per frame, 1/m.
    pub u_true: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Distractor {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    frames_left: usize,
    tint: u8,
}

const TAG_CURVATURE: u64 = 110;
const TAG_DISTRACTOR: u64 = 111;
const TAG_TEXTURE: u64 = 112;

/// Per-pixel speckle in [-amp, amp], a pure hash of (seed, frame, x, y) so
/// frames can render in parallel.
fn speckle(seed: u64, t: usize, x: usize, y: usize, amp: f64) -> f64 {
    let mut z = seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z ^= (x as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= (y as u64).wrapping_mul(0x94d0_49bb_1331_11eb);
    z = z.wrapping_mul(0xd6e8_feb8_6659_fd93);
    z ^= z >> 32;
    ((z & 0xffff) as f64 / 65535.0 * 2.0 - 1.0) * amp
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Screen centers of the two lane markings at depth z for curvature u.
fn lane_centers(u: f64, z: f64, half_lane: f64) -> (f64, f64) {
    let path = 0.5 * u * z * z;
    let left = CENTER_X + FOCAL_X * (path - half_lane) / z;
    let right = CENTER_X + FOCAL_X * (path + half_lane) / z;
    (left, right)
}

fn marking_halfwidth_px(z: f64, halfwidth_m: f64) -> f64 {
    (FOCAL_X * halfwidth_m / z).clamp(0.9, 4.0)
}

/// Trapezoidal coverage of a marking centered at `c` for pixel column `x`.
fn marking_coverage(x: usize, c: f64, halfwidth_px: f64) -> f64 {
    (halfwidth_px + 0.5 - (x as f64 - c).abs()).clamp(0.0, 1.0)
}

fn render_frame(params: &SceneParams, t: usize, u: f64, distractors: &[Distractor]) -> (RgbImage, FrameMasks) {
    let mut img = RgbImage::new(FRAME_W, FRAME_H);
    let mut lane_mask = GrayImage::new(FRAME_W, FRAME_H);
    let mut distractor_mask = GrayImage::new(FRAME_W, FRAME_H);
    let half_lane = params.lane_width_m / 2.0;
    let road_half = params.lane_width_m; // shoulders as wide as the lane

    for y in 0..FRAME_H {
        if y <= HORIZON_Y {
            let f = y as f64 / HORIZON_Y as f64;
            for x in 0..FRAME_W {
                let px = [
                    to_u8(SKY_TOP[0] + f * (SKY_HORIZON[0] - SKY_TOP[0])),
                    to_u8(SKY_TOP[1] + f * (SKY_HORIZON[1] - SKY_TOP[1])),
                    to_u8(SKY_TOP[2] + f * (SKY_HORIZON[2] - SKY_TOP[2])),
                ];
                img.set(x, y, px);
            }
            continue;
        }
        let z = DEPTH_SCALE / (y - HORIZON_Y) as f64;
        let (left_c, right_c) = lane_centers(u, z, half_lane);
        let mid = (left_c + right_c) / 2.0;
        let road_px = FOCAL_X * road_half / z;
        let hw = marking_halfwidth_px(z, params.lane_line_halfwidth_m);
        for x in 0..FRAME_W {
            let on_road = (x as f64 - mid).abs() <= road_px;
            let base = if on_road { ROAD_COLOR } else { GRASS_COLOR };
            let noise = speckle(params.seed, t, x, y, 5.0);
            let cov = marking_coverage(x, left_c, hw).max(marking_coverage(x, right_c, hw));
            let mut px = [0u8; 3];
            for c in 0..3 {
                let v = base[c] + noise + cov * (LANE_COLOR[c] - base[c] - noise);
                px[c] = to_u8(v);
            }
            img.set(x, y, px);
            if cov >= LANE_MASK_MIN_COVERAGE {
                lane_mask.set(x, y, 255);
            }
        }
    }

    for d in distractors {
        for y in d.y0..(d.y0 + d.h).min(HORIZON_Y.saturating_sub(2)) {
            for x in d.x0..(d.x0 + d.w).min(FRAME_W) {
                img.set(x, y, [255, 250, d.tint]);
                distractor_mask.set(x, y, 255);
            }
        }
    }

    (
        img,
        FrameMasks {
            lane: lane_mask,
            distractor: distractor_mask,
        },
    )
}

/// Renders the full sequence: frames, telemetry rows at frame timestamps,
/// ground-truth masks and the generating curvature. Deterministic per seed;
/// frames render in parallel from per-frame derived streams.
pub fn generate_sequence(params: &SceneParams) -> Result<SceneOutput> {
    params.validate()?;

    // clamped OU curvature path
    let mut u_true = Vec::with_capacity(params.frames);
    let mut curvature_rng = rng::stream(params.seed, TAG_CURVATURE, 0);
    let mut u = 0.0f64;
    let sqrt_dt = params.dt.sqrt();
    for _ in 0..params.frames {
        u_true.push(u);
        let noise = rng::normal(&mut curvature_rng);
        u += -params.ou_rate * u * params.dt + params.ou_volatility * sqrt_dt * noise;
        u = u.clamp(-params.u_clamp, params.u_clamp);
    }

    // distractor lifecycle from its own stream
    let mut active: Vec<Distractor> = Vec::new();
    let mut per_frame_distractors: Vec<Vec<Distractor>> = Vec::with_capacity(params.frames);
    let mut distractor_rng = rng::stream(params.seed, TAG_DISTRACTOR, 0);
    for _ in 0..params.frames {
        active.retain_mut(|d| {
            if d.frames_left == 0 {
                return false;
            }
            d.frames_left -= 1;
            true
        });
        if distractor_rng.random::<f64>() < params.distractor_rate {
            let w = distractor_rng.random_range(8..22);
            let h = distractor_rng.random_range(4..=9);
            let x0 = distractor_rng.random_range(0..FRAME_W - w);
            // keep a clear band of sky between distractors and the road
            // region so the two ground-truth masks stay well separated
            let y0 = distractor_rng.random_range(2..=(HORIZON_Y - 12 - h));
            let frames_left = distractor_rng.random_range(4..14);
            let tint = distractor_rng.random_range(200..=250) as u8;
            active.push(Distractor {
                x0,
                y0,
                w,
                h,
                frames_left,
                tint,
            });
        }
        per_frame_distractors.push(active.clone());
    }

    let rendered: Vec<(RgbImage, FrameMasks)> = par::map_range(params.frames, |t| {
        render_frame(params, t, u_true[t], &per_frame_distractors[t])
    });
    let mut frames = Vec::with_capacity(params.frames);
    let mut masks = Vec::with_capacity(params.frames);
    for (img, m) in rendered {
        frames.push(img);
        masks.push(m);
    }

    let telemetry = (0..params.frames)
        .map(|t| TelemetrySample {
            timestamp: t as f64 * params.dt,
            steering_deg: theta_from_u(u_true[t], params.velocity_mps, &params.vehicle),
            velocity_mps: params.velocity_mps,
        })
        .collect();

    let _ = rng::stream(params.seed, TAG_TEXTURE, 0); // reserved stream id
    Ok(SceneOutput {
        frames,
        telemetry,
        masks,
        u_true,
    })
}

/// Analytic controller: recovers the generating curvature from the rendered
/// lane geometry by weighted subpixel centroids and least squares over rows.
/// Returns `None` when too few rows show both markings (the failure
/// sentinel), e.g. after the lane region has been masked out.
pub fn oracle_controller(frame: &RgbImage, masks: &FrameMasks) -> Option<f64> {
    // lane-ness score: markings are high R+G, low B relative to road/grass
    let score = |x: usize, y: usize| -> f64 {
        let [r, g, b] = frame.get(x, y);
        ((r as f64 + g as f64 - 2.0 * b as f64) / 255.0 - 0.15).max(0.0)
    };

    let mut num = 0.0;
    let mut den = 0.0;
    let mut rows_used = 0usize;
    for y in (HORIZON_Y + 1)..FRAME_H {
        // column runs of lane-mask pixels in this row
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut x = 0;
        while x < FRAME_W {
            if masks.lane.get(x, y) != 0 {
                let start = x;
                while x < FRAME_W && masks.lane.get(x, y) != 0 {
                    x += 1;
                }
                runs.push((start, x));
            } else {
                x += 1;
            }
        }
        if runs.len() != 2 {
            continue;
        }
        let centroid = |run: (usize, usize)| -> Option<f64> {
            let lo = run.0.saturating_sub(2);
            let hi = (run.1 + 2).min(FRAME_W);
            let mut mass = 0.0;
            let mut moment = 0.0;
            for xx in lo..hi {
                let s = score(xx, y);
                mass += s;
                moment += s * xx as f64;
            }
            if mass > 0.3 {
                Some(moment / mass)
            } else {
                None
            }
        };
        let (Some(cl), Some(cr)) = (centroid(runs[0]), centroid(runs[1])) else {
            continue;
        };
        let z = DEPTH_SCALE / (y - HORIZON_Y) as f64;
        // mid = CENTER_X + (FOCAL_X/2) * u * z
        let predictor = 0.5 * FOCAL_X * z;
        let observed = (cl + cr) / 2.0 - CENTER_X;
        num += observed * predictor;
        den += predictor * predictor;
        rows_used += 1;
    }
    if rows_used < 6 || den == 0.0 {
        return None;
    }
    Some(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_volatility_means_straight_road() {
        let params = SceneParams {
            seed: 3,
            frames: 20,
            ou_volatility: 0.0,
            ..SceneParams::default()
        };
        let out = generate_sequence(&params).unwrap();
        assert!(out.u_true.iter().all(|&u| u == 0.0));
        assert!(out.telemetry.iter().all(|s| s.steering_deg == 0.0));
        // straight road: lane mask symmetric about the center column
        let mask = &out.masks[0].lane;
        for y in HORIZON_Y + 1..FRAME_H {
            for x in 0..FRAME_W / 2 {
                assert_eq!(mask.get(x, y), mask.get(FRAME_W - 1 - x, y), "({x},{y})");
            }
        }
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let params = SceneParams {
            seed: 11,
            frames: 12,
            ..SceneParams::default()
        };
        let a = generate_sequence(&params).unwrap();
        let b = generate_sequence(&params).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.data(), fb.data());
        }
        assert_eq!(a.telemetry, b.telemetry);
    }

    #[test]
    fn lane_mask_nonempty_and_disjoint_from_distractors() {
        let params = SceneParams {
            seed: 17,
            frames: 60,
            distractor_rate: 0.6,
            ..SceneParams::default()
        };
        let out = generate_sequence(&params).unwrap();
        let mut saw_distractor = false;
        for m in &out.masks {
            assert!(m.lane.count_nonzero() > 0);
            saw_distractor |= m.distractor.count_nonzero() > 0;
            for y in 0..FRAME_H {
                for x in 0..FRAME_W {
                    assert!(
                        !(m.lane.get(x, y) != 0 && m.distractor.get(x, y) != 0),
                        "overlap at ({x},{y})"
                    );
                }
            }
        }
        assert!(saw_distractor, "distractor rate 0.6 produced none in 60 frames");
    }

    #[test]
    fn oracle_recovers_generating_curvature() {
        let params = SceneParams {
            seed: 23,
            frames: 200,
            ..SceneParams::default()
        };
        let out = generate_sequence(&params).unwrap();
        let mut worst = 0.0f64;
        for t in 0..params.frames {
            let got = oracle_controller(&out.frames[t], &out.masks[t])
                .unwrap_or_else(|| panic!("sentinel at frame {t}"));
            worst = worst.max((got - out.u_true[t]).abs());
        }
        assert!(worst < 5e-4, "worst recovery error {worst}");
    }

    #[test]
    fn oracle_zero_on_straight_road() {
        let params = SceneParams {
            seed: 5,
            frames: 3,
            ou_volatility: 0.0,
            ..SceneParams::default()
        };
        let out = generate_sequence(&params).unwrap();
        let u = oracle_controller(&out.frames[0], &out.masks[0]).unwrap();
        assert!(u.abs() < 1e-4, "{u}");
    }

    #[test]
    fn oracle_sentinel_when_lane_masked_away() {
        let params = SceneParams {
            seed: 29,
            frames: 2,
            ..SceneParams::default()
        };
        let out = generate_sequence(&params).unwrap();
        let mut frame = out.frames[0].clone();
        let mask = &out.masks[0];
        for y in 0..FRAME_H {
            for x in 0..FRAME_W {
                if mask.lane.get(x, y) != 0 {
                    frame.set(x, y, [0, 0, 0]);
                }
            }
        }
        assert!(oracle_controller(&frame, mask).is_none());
    }

    #[test]
    fn distractors_uncorrelated_with_curvature() {
        let params = SceneParams {
            seed: 31,
            frames: 5000,
            ..SceneParams::default()
        };
        let out = generate_sequence(&params).unwrap();
        let presence: Vec<f64> = out
            .masks
            .iter()
            .map(|m| if m.distractor.count_nonzero() > 0 { 1.0 } else { 0.0 })
            .collect();
        let n = presence.len() as f64;
        let mean_p: f64 = presence.iter().sum::<f64>() / n;
        let mean_u: f64 = out.u_true.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var_p = 0.0;
        let mut var_u = 0.0;
        for (p, u) in presence.iter().zip(&out.u_true) {
            cov += (p - mean_p) * (u - mean_u);
            var_p += (p - mean_p).powi(2);
            var_u += (u - mean_u).powi(2);
        }
        let rho = cov / (var_p.sqrt() * var_u.sqrt()).max(1e-12);
        assert!(rho.abs() < 0.05, "correlation {rho}");
    }
}
