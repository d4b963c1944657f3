// scratch calibration harness; not part of the deliverable
use std::time::Instant;

use steerviz::dataset::downscale_mask;
use steerviz::decoder::AttentionWeights;
use steerviz::model::SteeringModel;
use steerviz::preprocess::{process_sequence, PipelineConfig};
use steerviz::saliency::{
    attach_hulls, build_map, cluster_particles, filter_blobs, sample_particles, SaliencyConfig,
    Verdict,
};
use steerviz::synth::{generate_sequence, SceneParams};
use steerviz::training::{constant_mean_baseline, consecutive_windows, evaluate_mae, train, LossConfig, PenaltyForm, TrainConfig};

fn dilate(mask: &steerviz::image::GrayImage, r: i64) -> steerviz::image::GrayImage {
    let mut out = steerviz::image::GrayImage::new(mask.w, mask.h);
    for y in 0..mask.h {
        for x in 0..mask.w {
            if mask.get(x, y) == 0 {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < mask.w && (ny as usize) < mask.h {
                        out.set(nx as usize, ny as usize, 255);
                    }
                }
            }
        }
    }
    out
}

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}
fn env_u64(name: &str, default: u64) -> u64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let seed = env_u64("SEED", 1);
    let steps = env_u64("STEPS", 2000) as usize;
    let lr = env_f64("LR", 1e-4);
    let lambda = env_f64("LAMBDA", 0.01);
    let frames_n = env_u64("FRAMES", 2000) as usize;
    let eps = env_f64("EPS", 2.5);
    let min_pts = env_u64("MINPTS", 8) as usize;
    let nparticles = env_u64("NPART", 500) as usize;
    let tau = env_f64("TAU", 0.1);
    let skip_causal = env_u64("SKIP_CAUSAL", 0) == 1;

    let ou_rate = env_f64("OU_RATE", 0.35);
    let ou_vol = env_f64("OU_VOL", 0.012);
    let scene_params = SceneParams {
        seed: 100 + seed,
        frames: frames_n,
        ou_rate,
        ou_volatility: ou_vol,
        ..SceneParams::default()
    };
    let eval_params = SceneParams {
        seed: 1000 + seed,
        frames: 500,
        ..scene_params.clone()
    };
    let process = |scene: &steerviz::synth::SceneOutput, pipeline: &PipelineConfig| {
        let raw: Vec<(usize, f64, steerviz::image::RgbImage)> = scene
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| (i + 1, scene.telemetry[i].timestamp, f.clone()))
            .collect();
        process_sequence(&raw, &scene.telemetry, pipeline).unwrap()
    };
    let scene = generate_sequence(&scene_params).unwrap();
    let eval_scene = generate_sequence(&eval_params).unwrap();
    let mut pipeline = PipelineConfig::default();
    pipeline.target_h = 40;
    pipeline.target_w = 80;
    pipeline.smoothing = Some(steerviz::preprocess::SmoothingConfig {
        alpha_s: env_f64("ALPHA", 0.05),
    });
    let train_frames = process(&scene, &pipeline);
    let eval_frames = process(&eval_scene, &pipeline);

    let baseline = constant_mean_baseline(&train_frames, &eval_frames, &pipeline.vehicle).unwrap();
    println!("train {} eval {}", train_frames.len(), eval_frames.len());
    println!("baseline MAE {} deg", baseline.format());

    let mut cfg = TrainConfig::desk_scale();
    cfg.seed = seed;
    cfg.steps = steps;
    cfg.adam.lr = lr;
    cfg.loss = LossConfig { lambda, penalty_form: PenaltyForm::Squared, window: 20 };

    let ckpt = std::env::var("CKPT").ok();
    let model = match &ckpt {
        Some(path) if std::path::Path::new(path).exists() => {
            println!("loading cached checkpoint {path}");
            let params = steerviz::tensor::load_params(std::path::Path::new(path)).unwrap();
            SteeringModel::from_params(cfg.model.clone(), params).unwrap()
        }
        _ => {
            let t0 = Instant::now();
            let out = train(&train_frames, &pipeline.vehicle, &cfg, None).unwrap();
            let train_secs = t0.elapsed().as_secs_f64();
            println!(
                "train {steps} steps lr {lr} lambda {lambda}: {:.1}s ({:.1} ms/step)",
                train_secs,
                train_secs * 1000.0 / steps as f64
            );
            for m in out.metrics.iter().step_by((steps / 10).max(1)) {
                println!("  step {:4} loss {:.4} mae {:.3}", m.step, m.train_loss, m.train_mae_deg);
            }
            if let Some(path) = &ckpt {
                steerviz::tensor::save_params(std::path::Path::new(path), &out.model.params).unwrap();
            }
            out.model
        }
    };
    let report = evaluate_mae(&eval_frames, &model, &pipeline.vehicle, 20).unwrap();
    println!("heldout MAE {} deg; ratio {:.3}", report.format(), report.mae_deg / baseline.mae_deg);

    if skip_causal {
        return;
    }
    causal_stats(&model, &eval_frames, &eval_scene, 0, &pipeline, eps, min_pts, nparticles, tau, seed);
    probe_stats(&model, &eval_frames, &eval_scene, &pipeline, tau, seed);
}

/// Ground-truth-probe clusters: particle maps built from the known masks,
/// verdicts from the trained model.
fn probe_stats(
    model: &SteeringModel,
    eval_frames: &[steerviz::preprocess::ProcessedFrame],
    scene: &steerviz::synth::SceneOutput,
    pipeline: &PipelineConfig,
    tau: f64,
    seed: u64,
) {
    let saliency = SaliencyConfig {
        tau_causal_deg: tau,
        ..SaliencyConfig::default()
    };
    let mut lane_total = 0;
    let mut lane_causal = 0;
    let mut dis_total = 0;
    let mut dis_spurious = 0;
    let mut lane_deltas: Vec<f64> = Vec::new();
    let mut dis_deltas: Vec<f64> = Vec::new();
    let windows = consecutive_windows(eval_frames, 20);
    let t0 = Instant::now();
    for (wid, &(s, e)) in windows.iter().enumerate() {
        let window = &eval_frames[s..e];
        let maps: Vec<steerviz::saliency::AttentionMap> = window
            .iter()
            .map(|f| {
                let masks = &scene.masks[f.index - 1];
                let lane = downscale_mask(&masks.lane, 2);
                let dis = downscale_mask(&masks.distractor, 2);
                let mut v = vec![0.0f64; 80 * 40];
                for y in 0..40 {
                    for x in 0..80 {
                        if lane.get(x, y) != 0 || dis.get(x, y) != 0 {
                            v[y * 80 + x] = 1.0;
                        }
                    }
                }
                steerviz::saliency::AttentionMap::from_values(80, 40, v, f.timestamp).unwrap()
            })
            .collect();
        let particles = sample_particles(&maps, &saliency, seed ^ ((wid as u64) << 7)).unwrap();
        let clustering = cluster_particles(&particles, &saliency).unwrap();
        let mut clusters = clustering.clusters;
        for c in &mut clusters {
            attach_hulls(c, &particles);
        }
        let report = filter_blobs(model, window, &clusters, &pipeline.vehicle, &saliency, wid).unwrap();
        for cv in &report.clusters {
            let mut touches_lane = false;
            let mut inside_distractor = !cv.hull_vertices.is_empty();
            for fh in &cv.hull_vertices {
                let masks = &scene.masks[window[fh.frame].index - 1];
                let lane = downscale_mask(&masks.lane, 2);
                let dis = dilate(&downscale_mask(&masks.distractor, 2), 4);
                for y in 0..lane.h {
                    for x in 0..lane.w {
                        let p = (x as i64, y as i64);
                        if steerviz::saliency::point_in_hull(&fh.vertices, p) {
                            if lane.get(x, y) != 0 {
                                touches_lane = true;
                            }
                            if dis.get(x, y) == 0 {
                                inside_distractor = false;
                            }
                        }
                    }
                }
            }
            if touches_lane {
                lane_total += 1;
                lane_deltas.push(cv.delta_mae_deg);
                if cv.delta_mae_deg < 0.1 {
                    let size: usize = clusters
                        .iter()
                        .find(|c| c.id == cv.cluster_id)
                        .map(|c| c.members.len())
                        .unwrap_or(0);
                    println!(
                        "  weak lane cluster: window {wid} id {} size {size} span {:?} delta {:.3}",
                        cv.cluster_id, cv.frame_span, cv.delta_mae_deg
                    );
                }
                if cv.verdict == Verdict::Causal {
                    lane_causal += 1;
                }
            } else if inside_distractor {
                dis_total += 1;
                dis_deltas.push(cv.delta_mae_deg);
                if cv.verdict == Verdict::Spurious {
                    dis_spurious += 1;
                }
            }
        }
    }
    let fmt = |v: &mut Vec<f64>| -> String {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.is_empty() {
            return "none".into();
        }
        format!(
            "min {:.3} p10 {:.3} p25 {:.3} med {:.3} p75 {:.3} p90 {:.3} max {:.3}",
            v[0],
            v[v.len() / 10],
            v[v.len() / 4],
            v[v.len() / 2],
            v[3 * v.len() / 4],
            v[9 * v.len() / 10],
            v[v.len() - 1]
        )
    };
    println!("probe stage: {:.1}s", t0.elapsed().as_secs_f64());
    println!("lane deltas: {}", fmt(&mut lane_deltas));
    println!("distractor deltas: {}", fmt(&mut dis_deltas));
    println!(
        "probe lane clusters {lane_total}, causal {lane_causal} ({:.2})",
        lane_causal as f64 / lane_total.max(1) as f64
    );
    println!(
        "probe distractor clusters {dis_total}, spurious {dis_spurious} ({:.2})",
        dis_spurious as f64 / dis_total.max(1) as f64
    );
}

#[allow(clippy::too_many_arguments)]
fn causal_stats(
    model: &SteeringModel,
    eval_frames: &[steerviz::preprocess::ProcessedFrame],
    scene: &steerviz::synth::SceneOutput,
    split: usize,
    pipeline: &PipelineConfig,
    eps: f64,
    min_pts: usize,
    nparticles: usize,
    tau: f64,
    seed: u64,
) {
    let saliency = SaliencyConfig {
        particles_per_frame: nparticles,
        eps,
        min_pts,
        time_scale: 4.0,
        tau_causal_deg: tau,
        warp_size: 64,
    };
    let grid = model.config.encoder.grid();
    let mut lane_total = 0;
    let mut lane_causal = 0;
    let mut dis_total = 0;
    let mut dis_spurious = 0;
    let mut cluster_count = 0;
    let mut noise_frac_sum = 0.0;
    let windows = consecutive_windows(eval_frames, 20);
    let t0 = Instant::now();
    for (wid, &(s, e)) in windows.iter().enumerate() {
        let window = &eval_frames[s..e];
        let pred = model.predict_window(window).unwrap();
        let maps: Vec<_> = window
            .iter()
            .zip(pred.alphas)
            .map(|(f, a)| build_map(&AttentionWeights::new(a).unwrap(), grid, f.timestamp).unwrap())
            .collect();
        let particles = sample_particles(&maps, &saliency, seed ^ (wid as u64) << 13).unwrap();
        if wid == 0 {
            let sky = particles.particles.iter().filter(|p| p.y < 14).count();
            let mut on_distractor = 0usize;
            for p in &particles.particles {
                let masks = &scene.masks[window[p.t].index - 1];
                let dis = downscale_mask(&masks.distractor, 2);
                if dis.get(p.x, p.y) != 0 {
                    on_distractor += 1;
                }
            }
            let n = particles.particles.len();
            println!(
                "  window 0: {n} particles, sky {sky} ({:.3}), on-distractor {on_distractor} ({:.4})",
                sky as f64 / n as f64,
                on_distractor as f64 / n as f64
            );
            let m0 = &maps[0];
            let total = m0.total_mass();
            let sky_mass: f64 = (0..14).map(|y| (0..80).map(|x| m0.get(x, y)).sum::<f64>()).sum();
            println!(
                "  map 0: max {:.5}, mean {:.5}, sky mass {:.3}",
                m0.max_value(),
                total / 3200.0,
                sky_mass / total
            );
        }
        let clustering = cluster_particles(&particles, &saliency).unwrap();
        noise_frac_sum += clustering.noise_indices().len() as f64 / particles.particles.len() as f64;
        let mut clusters = clustering.clusters;
        for c in &mut clusters {
            attach_hulls(c, &particles);
        }
        let report = filter_blobs(model, window, &clusters, &pipeline.vehicle, &saliency, wid).unwrap();
        cluster_count += report.clusters.len();
        // classify clusters against ground truth (desk = half resolution);
        // the containment test uses a distractor mask dilated by the blur
        // radius at this resolution
        for cv in &report.clusters {
            let mut touches_lane = false;
            let mut inside_distractor = !cv.hull_vertices.is_empty();
            for fh in &cv.hull_vertices {
                let masks = &scene.masks[window[fh.frame].index - 1];
                let lane = downscale_mask(&masks.lane, 2);
                let dis = dilate(&downscale_mask(&masks.distractor, 2), 4);
                for y in 0..lane.h {
                    for x in 0..lane.w {
                        let p = (x as i64, y as i64);
                        if steerviz::saliency::point_in_hull(&fh.vertices, p) {
                            if lane.get(x, y) != 0 {
                                touches_lane = true;
                            }
                            if dis.get(x, y) == 0 {
                                inside_distractor = false;
                            }
                        }
                    }
                }
            }
            let _ = split;
            if touches_lane {
                lane_total += 1;
                if cv.verdict == Verdict::Causal {
                    lane_causal += 1;
                }
            }
            if inside_distractor && !touches_lane {
                dis_total += 1;
                if cv.verdict == Verdict::Spurious {
                    dis_spurious += 1;
                }
            }
        }
    }
    println!(
        "causal stage: {:.1}s, {} windows, {} clusters, mean noise frac {:.2}",
        t0.elapsed().as_secs_f64(),
        windows.len(),
        cluster_count,
        noise_frac_sum / windows.len() as f64
    );
    println!(
        "lane-overlap clusters {lane_total}, causal {lane_causal} ({:.2})",
        lane_causal as f64 / lane_total.max(1) as f64
    );
    println!(
        "distractor-contained clusters {dis_total}, spurious {dis_spurious} ({:.2})",
        dis_spurious as f64 / dis_total.max(1) as f64
    );
}
