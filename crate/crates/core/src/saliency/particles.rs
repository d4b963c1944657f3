//! Attention-conditioned particle sampling: per frame, N pixel positions
//! drawn i.i.d. with replacement, proportional to the heat map, tagged with
//! their frame offset and pooled into one space-time set.

use rand::Rng;

use super::map::AttentionMap;
use super::SaliencyConfig;
use crate::{par, rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Particle {
    /// Pixel column.
    pub x: usize,
    /// Pixel row.
    pub y: usize,
    /// Frame offset within the window.
    pub t: usize,
}

#[derive(Clone, Debug)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub width: usize,
    pub height: usize,
    /// Number of frames sampled.
    pub frames: usize,
}

const TAG_PARTICLES: u64 = 90;

/// Draws `config.particles_per_frame` positions per map. Rejects maps with
/// no mass (nothing to condition on). Each frame draws from its own rng
/// stream, so frames parallelize without changing the result.
pub fn sample_particles(
    maps: &[AttentionMap],
    config: &SaliencyConfig,
    seed: u64,
) -> Result<ParticleSet> {
    config.validate()?;
    if maps.is_empty() {
        return Err(Error::EmptyInput("no attention maps"));
    }
    let (w, h) = (maps[0].w, maps[0].h);
    for m in maps {
        if m.w != w || m.h != h {
            return Err(Error::ShapeMismatch {
                op: "sample_particles",
                lhs: vec![m.w, m.h],
                rhs: vec![w, h],
            });
        }
        if !(m.total_mass() > 0.0) {
            return Err(Error::invalid(
                "attention map with zero total mass".to_string(),
            ));
        }
    }
    let n = config.particles_per_frame;
    let per_frame: Vec<Vec<Particle>> = par::map_range(maps.len(), |t| {
        let map = &maps[t];
        // inclusive prefix sums over pixel mass
        let mut cdf = Vec::with_capacity(map.values().len());
        let mut acc = 0.0;
        for &v in map.values() {
            acc += v;
            cdf.push(acc);
        }
        let total = acc;
        let mut r = rng::stream(seed, TAG_PARTICLES, t as u64);
        (0..n)
            .map(|_| {
                let target = r.random::<f64>() * total;
                let idx = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
                Particle {
                    x: idx % w,
                    y: idx / w,
                    t,
                }
            })
            .collect()
    });
    Ok(ParticleSet {
        particles: per_frame.into_iter().flatten().collect(),
        width: w,
        height: h,
        frames: maps.len(),
    })
}
