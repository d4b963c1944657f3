//! DBSCAN over particles in (x, y, time_scale * t) with Euclidean distance.
//!
//! Neighborhoods use `dist <= eps`; duplicates count with multiplicity, and
//! a point's neighborhood includes itself. Points are processed in canonical
//! coordinate order (t, y, x), which makes cluster ids and border-point
//! assignment (first expanding cluster wins, i.e. the lowest id) a pure
//! function of the point multiset: permuting the input permutes labels with
//! it, nothing more.

use std::collections::HashMap;

use super::{ParticleSet, SaliencyCluster, SaliencyConfig};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Clustering {
    /// Cluster id per particle (original order); `None` marks noise.
    pub labels: Vec<Option<usize>>,
    /// Clusters in discovery order; hulls are attached separately.
    pub clusters: Vec<SaliencyCluster>,
}

impl Clustering {
    pub fn noise_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_none())
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn cluster_particles(particles: &ParticleSet, config: &SaliencyConfig) -> Result<Clustering> {
    config.validate()?;
    let n = particles.particles.len();
    if n == 0 {
        return Err(Error::EmptyInput("no particles to cluster"));
    }
    let pts: Vec<[f64; 3]> = particles
        .particles
        .iter()
        .map(|p| [p.x as f64, p.y as f64, config.time_scale * p.t as f64])
        .collect();

    // canonical scan order: (t, y, x)
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by_key(|&i| {
        let p = &particles.particles[i];
        (p.t, p.y, p.x)
    });

    // eps-sized grid hash for neighbor candidates
    let eps = config.eps;
    let eps2 = eps * eps;
    let cell = |v: f64| (v / eps).floor() as i64;
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        grid.entry((cell(p[0]), cell(p[1]), cell(p[2])))
            .or_default()
            .push(i);
    }
    let neighbors = |i: usize| -> Vec<usize> {
        let p = pts[i];
        let (cx, cy, cz) = (cell(p[0]), cell(p[1]), cell(p[2]));
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in bucket {
                            let q = pts[j];
                            let d2 = (p[0] - q[0]).powi(2)
                                + (p[1] - q[1]).powi(2)
                                + (p[2] - q[2]).powi(2);
                            if d2 <= eps2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out
    };

    let core: Vec<bool> = (0..n).map(|i| neighbors(i).len() >= config.min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &seed in &order {
        if labels[seed].is_some() || !core[seed] {
            continue;
        }
        let id = clusters.len();
        let mut members = Vec::new();
        labels[seed] = Some(id);
        members.push(seed);
        let mut queue = vec![seed];
        while let Some(i) = queue.pop() {
            for j in neighbors(i) {
                if labels[j].is_none() {
                    labels[j] = Some(id);
                    members.push(j);
                    if core[j] {
                        queue.push(j);
                    }
                }
            }
        }
        clusters.push(members);
    }

    let clusters = clusters
        .into_iter()
        .enumerate()
        .map(|(id, mut members)| {
            members.sort_unstable();
            SaliencyCluster {
                id,
                members,
                hulls: Default::default(),
            }
        })
        .collect();
    Ok(Clustering { labels, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::Particle;
    use rand::Rng;

    fn set(particles: Vec<Particle>) -> ParticleSet {
        ParticleSet {
            particles,
            width: 160,
            height: 80,
            frames: 20,
        }
    }

    fn config(eps: f64, min_pts: usize) -> SaliencyConfig {
        SaliencyConfig {
            eps,
            min_pts,
            time_scale: 4.0,
            ..SaliencyConfig::default()
        }
    }

    fn blob(x: usize, y: usize, t: usize, count: usize) -> Vec<Particle> {
        (0..count)
            .map(|k| Particle {
                x: x + k % 2,
                y: y + (k / 2) % 2,
                t,
            })
            .collect()
    }

    #[test]
    fn two_far_groups_make_two_clusters() {
        let mut ps = blob(10, 10, 0, 6);
        ps.extend(blob(120, 60, 0, 6)); // separated by far more than 10 eps
        let out = cluster_particles(&set(ps), &config(3.0, 5)).unwrap();
        assert_eq!(out.clusters.len(), 2);
        assert!(out.noise_indices().is_empty());
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut ps = blob(10, 10, 0, 6);
        ps.push(Particle { x: 100, y: 40, t: 10 });
        let out = cluster_particles(&set(ps), &config(3.0, 5)).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.noise_indices().len(), 1);
    }

    #[test]
    fn duplicates_count_with_multiplicity() {
        // 5 copies of one point reach min_pts=5 alone
        let ps = vec![Particle { x: 30, y: 30, t: 2 }; 5];
        let out = cluster_particles(&set(ps), &config(2.0, 5)).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].members.len(), 5);
    }

    #[test]
    fn time_axis_separates_distant_frames() {
        // same pixel, frames 0 and 10: scaled distance 40 with eps 5
        let mut ps = blob(50, 20, 0, 5);
        ps.extend(blob(50, 20, 10, 5));
        let out = cluster_particles(&set(ps), &config(5.0, 5)).unwrap();
        assert_eq!(out.clusters.len(), 2);
    }

    /// Brute-force reference: O(n^2) neighborhoods, connected components of
    /// the core graph, borders to the lowest cluster id in canonical order.
    fn brute_force(particles: &ParticleSet, cfg: &SaliencyConfig) -> Vec<Option<usize>> {
        let n = particles.particles.len();
        let pts: Vec<[f64; 3]> = particles
            .particles
            .iter()
            .map(|p| [p.x as f64, p.y as f64, cfg.time_scale * p.t as f64])
            .collect();
        let d2 = |a: usize, b: usize| -> f64 {
            (pts[a][0] - pts[b][0]).powi(2)
                + (pts[a][1] - pts[b][1]).powi(2)
                + (pts[a][2] - pts[b][2]).powi(2)
        };
        let eps2 = cfg.eps * cfg.eps;
        let nbrs: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| d2(i, j) <= eps2).collect())
            .collect();
        let core: Vec<bool> = (0..n).map(|i| nbrs[i].len() >= cfg.min_pts).collect();

        // union-find over core-core edges
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        for i in 0..n {
            if !core[i] {
                continue;
            }
            for &j in &nbrs[i] {
                if core[j] {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri] = rj;
                    }
                }
            }
        }
        // canonical order of components: first core point in (t, y, x) order
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by_key(|&i| {
            let p = &particles.particles[i];
            (p.t, p.y, p.x)
        });
        let mut comp_id: HashMap<usize, usize> = HashMap::new();
        for &i in &order {
            if core[i] {
                let root = find(&mut parent, i);
                let next = comp_id.len();
                comp_id.entry(root).or_insert(next);
            }
        }
        let mut labels = vec![None; n];
        for i in 0..n {
            if core[i] {
                labels[i] = Some(comp_id[&find(&mut parent, i)]);
            } else {
                // border: lowest cluster id among reachable cores
                labels[i] = nbrs[i]
                    .iter()
                    .filter(|&&j| core[j])
                    .map(|&j| comp_id[&find(&mut parent, j)])
                    .min();
            }
        }
        labels
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        let cfg = config(5.0, 5);
        for case in 0..10 {
            let mut rng = crate::rng::stream(900 + case, 91, 0);
            let ps: Vec<Particle> = (0..200)
                .map(|_| Particle {
                    x: rng.random_range(0..60),
                    y: rng.random_range(0..30),
                    t: rng.random_range(0..6),
                })
                .collect();
            let pset = set(ps);
            let got = cluster_particles(&pset, &cfg).unwrap();
            let want = brute_force(&pset, &cfg);
            assert_eq!(got.labels, want, "case {case}");
        }
    }

    #[test]
    fn labels_invariant_under_permutation() {
        let cfg = config(5.0, 4);
        let mut rng = crate::rng::stream(42, 92, 0);
        let ps: Vec<Particle> = (0..150)
            .map(|_| Particle {
                x: rng.random_range(0..50),
                y: rng.random_range(0..25),
                t: rng.random_range(0..4),
            })
            .collect();
        let base = cluster_particles(&set(ps.clone()), &cfg).unwrap();

        // reversed input: labels must follow the permutation exactly
        let rev: Vec<Particle> = ps.iter().rev().copied().collect();
        let permuted = cluster_particles(&set(rev), &cfg).unwrap();
        let n = ps.len();
        for i in 0..n {
            assert_eq!(base.labels[i], permuted.labels[n - 1 - i], "particle {i}");
        }
    }
}
