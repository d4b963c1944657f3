//! Subcommand implementations. Every run records its exact configuration,
//! seed and version in `run.json`; re-running with the same inputs writes
//! byte-identical outputs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use steerviz::dataset;
use steerviz::decoder::AttentionWeights;
use steerviz::image::RgbImage;
use steerviz::model::{ModelConfig, SteeringModel};
use steerviz::overlay::render_overlay;
use steerviz::preprocess::{self, PipelineConfig, ProcessedFrame};
use steerviz::saliency::{
    attach_hulls, build_map, cluster_particles, filter_blobs, report_to_jsonl, sample_particles,
    AttentionMap, Pt, Verdict,
};
use steerviz::synth::generate_sequence;
use steerviz::tensor::{load_params, save_params};
use steerviz::training::{consecutive_windows, evaluate_mae, pretrain_cnn, train};

use crate::config::RunConfig;

#[derive(Serialize)]
struct RunRecord<'a> {
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

fn write_run_json(out: &Path, command: &str, cfg: &RunConfig) -> anyhow::Result<()> {
    let record = RunRecord {
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&record)?;
    fs::write(out.join("run.json"), text + "\n")?;
    Ok(())
}

fn load_and_preprocess(
    dataset_dir: &Path,
    pipeline: &PipelineConfig,
) -> anyhow::Result<Vec<ProcessedFrame>> {
    let telemetry = dataset::load_telemetry(dataset_dir)?;
    let raw = dataset::load_frames(dataset_dir)?;
    let frames = preprocess::process_sequence(&raw, &telemetry, pipeline)?;
    if frames.is_empty() {
        bail!("no frames survived preprocessing");
    }
    Ok(frames)
}

fn load_model(checkpoint: &Path) -> anyhow::Result<SteeringModel> {
    let params = load_params(checkpoint)?;
    let model_json = checkpoint
        .parent()
        .unwrap_or(Path::new("."))
        .join("model.json");
    let text = fs::read_to_string(&model_json).with_context(|| {
        format!(
            "reading {} (expected next to the checkpoint)",
            model_json.display()
        )
    })?;
    let config: ModelConfig = serde_json::from_str(&text)?;
    Ok(SteeringModel::from_params(config, params)?)
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    let scene = generate_sequence(&cfg.scene)?;
    dataset::write_dataset(out, &scene)?;
    write_run_json(out, "synth", cfg)?;
    println!(
        "wrote {} frames to {} (seed {})",
        scene.frames.len(),
        out.display(),
        cfg.seed
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, dataset_dir: &Path, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    let frames = load_and_preprocess(dataset_dir, &cfg.pipeline)?;
    let initial = match &cfg.pretrain {
        Some(pretrain_cfg) => {
            let pre = pretrain_cnn(&frames, &cfg.train.model.encoder, pretrain_cfg)?;
            Some(pre.encoder_params)
        }
        None => None,
    };
    let output = train(&frames, &cfg.pipeline.vehicle, &cfg.train, initial)?;

    save_params(&out.join("checkpoint.capt"), &output.model.params)?;
    fs::write(
        out.join("model.json"),
        serde_json::to_string_pretty(&output.model.config)? + "\n",
    )?;
    let mut metrics = String::from("step,train_loss,train_mae_deg\n");
    for m in &output.metrics {
        metrics.push_str(&format!("{},{},{}\n", m.step, m.train_loss, m.train_mae_deg));
    }
    fs::write(out.join("metrics.csv"), metrics)?;
    write_run_json(out, "train", cfg)?;

    if let Some(last) = output.metrics.last() {
        println!(
            "trained {} steps; final train loss {:.6}, train MAE {:.3} deg",
            output.metrics.len(),
            last.train_loss,
            last.train_mae_deg
        );
    }
    Ok(())
}

const SWEEP_ALPHAS: [f64; 6] = [0.01, 0.05, 0.1, 0.3, 0.5, 1.0];

pub fn cmd_evaluate(
    cfg: &RunConfig,
    dataset_dir: &Path,
    checkpoint: &Path,
    out: Option<&Path>,
    alpha_sweep: bool,
) -> anyhow::Result<()> {
    let model = load_model(checkpoint)?;
    let frames = load_and_preprocess(dataset_dir, &cfg.pipeline)?;
    let report = evaluate_mae(&frames, &model, &cfg.pipeline.vehicle, cfg.eval_window)?;
    println!("MAE {} deg ({} frames)", report.format(), report.frames);

    if alpha_sweep {
        let Some(out) = out else {
            bail!("--alpha-sweep needs --out for the CSV");
        };
        fs::create_dir_all(out)?;
        let telemetry = dataset::load_telemetry(dataset_dir)?;
        let raw = dataset::load_frames(dataset_dir)?;
        let mut csv = String::from("alpha_s,mae_deg,sd_deg\n");
        let eval_with = |pipeline: &PipelineConfig| -> anyhow::Result<(f64, f64)> {
            let frames = preprocess::process_sequence(&raw, &telemetry, pipeline)?;
            let r = evaluate_mae(&frames, &model, &pipeline.vehicle, cfg.eval_window)?;
            Ok((r.mae_deg, r.sd_deg))
        };
        for alpha in SWEEP_ALPHAS {
            let mut pipeline = cfg.pipeline.clone();
            pipeline.smoothing = Some(steerviz::preprocess::SmoothingConfig { alpha_s: alpha });
            let (mae, sd) = eval_with(&pipeline)?;
            csv.push_str(&format!("{alpha},{mae},{sd}\n"));
        }
        // unsmoothed pipeline as the reference row
        let mut pipeline = cfg.pipeline.clone();
        pipeline.smoothing = None;
        let (mae, sd) = eval_with(&pipeline)?;
        csv.push_str(&format!("raw,{mae},{sd}\n"));
        fs::write(out.join("alpha_sweep.csv"), csv)?;
        write_run_json(out, "evaluate", cfg)?;
        println!("wrote {}", out.join("alpha_sweep.csv").display());
    }
    Ok(())
}

/// Display copy of a raw frame at the model's working resolution.
fn display_frame(
    raw_by_index: &HashMap<usize, &RgbImage>,
    frame: &ProcessedFrame,
) -> anyhow::Result<RgbImage> {
    let raw = raw_by_index
        .get(&frame.index)
        .with_context(|| format!("raw frame {} missing", frame.index))?;
    Ok(preprocess::crop_resize(raw, frame.w, frame.h)?)
}

fn window_maps(
    model: &SteeringModel,
    window: &[ProcessedFrame],
) -> anyhow::Result<Vec<AttentionMap>> {
    let grid = model.config.encoder.grid();
    let pred = model.predict_window(window)?;
    let mut maps = Vec::with_capacity(window.len());
    for (frame, alpha) in window.iter().zip(pred.alphas) {
        let weights = AttentionWeights::new(alpha)?;
        maps.push(build_map(&weights, grid, frame.timestamp)?);
    }
    Ok(maps)
}

fn check_map_extents(model: &SteeringModel) -> anyhow::Result<()> {
    let (gh, gw) = model.config.encoder.grid();
    let enc = &model.config.encoder;
    if gh * 8 != enc.input_h || gw * 8 != enc.input_w {
        bail!(
            "encoder stride chain must downsample by 8 for overlays: grid {}x{} vs input {}x{}",
            gh,
            gw,
            enc.input_h,
            enc.input_w
        );
    }
    Ok(())
}

pub fn cmd_attend(
    cfg: &RunConfig,
    dataset_dir: &Path,
    checkpoint: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    let model = load_model(checkpoint)?;
    check_map_extents(&model)?;
    let frames = load_and_preprocess(dataset_dir, &cfg.pipeline)?;
    let raw = dataset::load_frames(dataset_dir)?;
    let raw_by_index: HashMap<usize, &RgbImage> =
        raw.iter().map(|(i, _, img)| (*i, img)).collect();

    for (s, e) in consecutive_windows(&frames, cfg.eval_window) {
        let window = &frames[s..e];
        let maps = window_maps(&model, window)?;
        for (frame, map) in window.iter().zip(&maps) {
            let display = display_frame(&raw_by_index, frame)?;
            let overlay = render_overlay(&display, map, None)?;
            steerviz::image::write_ppm(
                &out.join(format!("overlay_{:06}.ppm", frame.index)),
                &overlay,
            )?;
        }
    }
    write_run_json(out, "attend", cfg)?;
    println!("wrote {} overlays to {}", frames.len(), out.display());
    Ok(())
}

pub fn cmd_causal(
    cfg: &RunConfig,
    dataset_dir: &Path,
    checkpoint: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    let model = load_model(checkpoint)?;
    check_map_extents(&model)?;
    let frames = load_and_preprocess(dataset_dir, &cfg.pipeline)?;
    let raw = dataset::load_frames(dataset_dir)?;
    let raw_by_index: HashMap<usize, &RgbImage> =
        raw.iter().map(|(i, _, img)| (*i, img)).collect();

    let mut jsonl = String::new();
    let windows = consecutive_windows(&frames, cfg.eval_window);
    let mut total_clusters = 0usize;
    let mut total_causal = 0usize;
    for (window_id, &(s, e)) in windows.iter().enumerate() {
        let window = &frames[s..e];
        let maps = window_maps(&model, window)?;
        let particle_seed = cfg
            .seed
            .wrapping_add((window_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let particles = sample_particles(&maps, &cfg.saliency, particle_seed)?;
        let clustering = cluster_particles(&particles, &cfg.saliency)?;
        let mut clusters = clustering.clusters;
        for c in &mut clusters {
            attach_hulls(c, &particles);
        }
        let report = filter_blobs(
            &model,
            window,
            &clusters,
            &cfg.pipeline.vehicle,
            &cfg.saliency,
            window_id,
        )?;
        total_clusters += report.clusters.len();
        total_causal += report
            .clusters
            .iter()
            .filter(|c| c.verdict == Verdict::Causal)
            .count();

        for (t, frame) in window.iter().enumerate() {
            let causal_hulls: Vec<Vec<Pt>> = report
                .clusters
                .iter()
                .filter(|c| c.verdict == Verdict::Causal)
                .flat_map(|c| {
                    c.hull_vertices
                        .iter()
                        .filter(|fh| fh.frame == t)
                        .map(|fh| fh.vertices.clone())
                })
                .collect();
            let display = display_frame(&raw_by_index, frame)?;
            let overlay = render_overlay(&display, &maps[t], Some(&causal_hulls))?;
            steerviz::image::write_ppm(
                &out.join(format!("refined_{:06}.ppm", frame.index)),
                &overlay,
            )?;
        }
        jsonl.push_str(&report_to_jsonl(&report));
    }
    fs::write(out.join("causal_report.jsonl"), jsonl)?;
    write_run_json(out, "causal", cfg)?;
    println!(
        "{} windows, {} clusters ({} causal, {} spurious); report at {}",
        windows.len(),
        total_clusters,
        total_causal,
        total_clusters - total_causal,
        out.join("causal_report.jsonl").display()
    );
    Ok(())
}
