//! Attention heat maps: nearest-neighbor upsampling of the attention grid by
//! a fixed factor of eight, then a normalized separable Gaussian blur with
//! clamped borders.

use crate::decoder::AttentionWeights;
use crate::{Error, Result};

/// Upsampling factor from attention grid to map; the conv stack's cumulative
/// stride, so the map matches the input frame pixel-for-pixel.
pub const MAP_UPSAMPLE: usize = 8;

const BLUR_SIGMA: f64 = 4.0;
const BLUR_RADIUS: usize = 8;

/// Non-negative heat map at input-frame resolution.
#[derive(Clone, Debug)]
pub struct AttentionMap {
    pub w: usize,
    pub h: usize,
    values: Vec<f64>,
    /// Timestamp of the source frame.
    pub timestamp: f64,
}

impl AttentionMap {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.w + x]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0.0);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 % self.w, best.0 / self.w)
    }

    /// Test/CLI constructor for maps not derived from attention.
    pub fn from_values(w: usize, h: usize, values: Vec<f64>, timestamp: f64) -> Result<Self> {
        if values.len() != w * h {
            return Err(Error::invalid(format!(
                "map values {} for {w}x{h}",
                values.len()
            )));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("map values must be finite and >= 0"));
        }
        Ok(AttentionMap {
            w,
            h,
            values,
            timestamp,
        })
    }
}

fn gaussian_kernel() -> Vec<f64> {
    let mut k: Vec<f64> = (-(BLUR_RADIUS as i64)..=BLUR_RADIUS as i64)
        .map(|i| (-((i * i) as f64) / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable blur with border-clamped sampling; preserves constants and,
/// away from the borders, total mass.
fn blur(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let r = BLUR_RADIUS as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let sx = (x as i64 + j as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * values[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let sy = (y as i64 + j as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Expands attention weights over a grid into a full-resolution heat map.
pub fn build_map(
    alpha: &AttentionWeights,
    grid: (usize, usize),
    timestamp: f64,
) -> Result<AttentionMap> {
    let (gh, gw) = grid;
    if alpha.len() != gh * gw {
        return Err(Error::ShapeMismatch {
            op: "build_map",
            lhs: vec![alpha.len()],
            rhs: vec![gh, gw],
        });
    }
    let (h, w) = (gh * MAP_UPSAMPLE, gw * MAP_UPSAMPLE);
    let mut up = vec![0.0; w * h];
    let weights = alpha.as_slice();
    for y in 0..h {
        let gy = y / MAP_UPSAMPLE;
        for x in 0..w {
            let gx = x / MAP_UPSAMPLE;
            up[y * w + x] = weights[gy * gw + gx];
        }
    }
    let blurred = blur(&up, w, h);
    Ok(AttentionMap {
        w,
        h,
        values: blurred,
        timestamp,
    })
}
