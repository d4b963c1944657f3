//! On-disk dataset layout:
//!
//! ```text
//! dataset/
//!   frames/frame_000001.ppm       (or .png with the `png` feature)
//!   frames.csv                    index,timestamp
//!   telemetry.csv                 timestamp,steering_deg,velocity_mps
//!   masks/lane_000001.pgm         optional ground-truth causal region
//!   masks/distractor_000001.pgm   optional ground-truth spurious region
//! ```
//!
//! Frame indices are 1-based in filenames and in `frames.csv`. Numeric
//! columns are written with Rust's shortest-round-trip f64 formatting, so a
//! dataset re-written from the same values is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use crate::image::{self, GrayImage, RgbImage};
use crate::preprocess::TelemetrySample;
use crate::synth::{FrameMasks, SceneOutput};
use crate::{Error, Result};

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("frames").join(format!("frame_{index:06}.ppm"))
}

fn existing_frame_path(dir: &Path, index: usize) -> Result<PathBuf> {
    let ppm = frame_path(dir, index);
    if ppm.exists() {
        return Ok(ppm);
    }
    let png = dir.join("frames").join(format!("frame_{index:06}.png"));
    if png.exists() {
        return Ok(png);
    }
    Err(Error::invalid(format!(
        "frame {index} not found under {}",
        dir.join("frames").display()
    )))
}

/// Writes a generated scene as a complete dataset tree.
pub fn write_dataset(dir: &Path, scene: &SceneOutput) -> Result<()> {
    fs::create_dir_all(dir.join("frames"))?;
    fs::create_dir_all(dir.join("masks"))?;

    let mut frames_csv = String::from("index,timestamp\n");
    for (i, frame) in scene.frames.iter().enumerate() {
        let index = i + 1;
        image::write_ppm(&frame_path(dir, index), frame)?;
        frames_csv.push_str(&format!("{index},{}\n", scene.telemetry[i].timestamp));
    }
    fs::write(dir.join("frames.csv"), frames_csv)?;

    let mut telemetry_csv = String::from("timestamp,steering_deg,velocity_mps\n");
    for s in &scene.telemetry {
        telemetry_csv.push_str(&format!(
            "{},{},{}\n",
            s.timestamp, s.steering_deg, s.velocity_mps
        ));
    }
    fs::write(dir.join("telemetry.csv"), telemetry_csv)?;

    for (i, m) in scene.masks.iter().enumerate() {
        let index = i + 1;
        image::write_pgm(&dir.join("masks").join(format!("lane_{index:06}.pgm")), &m.lane)?;
        image::write_pgm(
            &dir.join("masks").join(format!("distractor_{index:06}.pgm")),
            &m.distractor,
        )?;
    }
    Ok(())
}

pub fn load_telemetry(dir: &Path) -> Result<Vec<TelemetrySample>> {
    let path = dir.join("telemetry.csv");
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("timestamp,steering_deg,velocity_mps") => {}
        other => {
            return Err(Error::parse(
                path.display().to_string(),
                format!("bad header {other:?}"),
            ))
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| {
                    Error::parse(
                        path.display().to_string(),
                        format!("line {}: missing {name}", lineno + 2),
                    )
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| {
                    Error::parse(
                        path.display().to_string(),
                        format!("line {}: {name}: {e}", lineno + 2),
                    )
                })
        };
        out.push(TelemetrySample {
            timestamp: next("timestamp")?,
            steering_deg: next("steering_deg")?,
            velocity_mps: next("velocity_mps")?,
        });
    }
    if out.len() < 2 {
        return Err(Error::EmptyInput("telemetry.csv needs at least 2 rows"));
    }
    Ok(out)
}

/// `(index, timestamp)` rows of frames.csv, in file order.
pub fn load_frame_index(dir: &Path) -> Result<Vec<(usize, f64)>> {
    let path = dir.join("frames.csv");
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("index,timestamp") => {}
        other => {
            return Err(Error::parse(
                path.display().to_string(),
                format!("bad header {other:?}"),
            ))
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (idx, ts) = line.split_once(',').ok_or_else(|| {
            Error::parse(
                path.display().to_string(),
                format!("line {}: expected two fields", lineno + 2),
            )
        })?;
        let index: usize = idx.trim().parse().map_err(|e| {
            Error::parse(path.display().to_string(), format!("index: {e}"))
        })?;
        let timestamp: f64 = ts.trim().parse().map_err(|e| {
            Error::parse(path.display().to_string(), format!("timestamp: {e}"))
        })?;
        out.push((index, timestamp));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("frames.csv has no rows"));
    }
    Ok(out)
}

/// Loads all raw frames as `(index, timestamp, image)`.
pub fn load_frames(dir: &Path) -> Result<Vec<(usize, f64, RgbImage)>> {
    let index = load_frame_index(dir)?;
    let mut out = Vec::with_capacity(index.len());
    for (idx, ts) in index {
        let path = existing_frame_path(dir, idx)?;
        out.push((idx, ts, image::read_frame_image(&path)?));
    }
    Ok(out)
}

/// Ground-truth masks for one frame index, when present.
pub fn load_masks(dir: &Path, index: usize) -> Result<Option<FrameMasks>> {
    let lane = dir.join("masks").join(format!("lane_{index:06}.pgm"));
    let distractor = dir.join("masks").join(format!("distractor_{index:06}.pgm"));
    if !lane.exists() || !distractor.exists() {
        return Ok(None);
    }
    Ok(Some(FrameMasks {
        lane: image::read_pgm(&lane)?,
        distractor: image::read_pgm(&distractor)?,
    }))
}

/// Downscales a mask by integer factors with any-nonzero pooling, for
/// comparing ground truth against reduced-resolution pipelines.
pub fn downscale_mask(mask: &GrayImage, factor: usize) -> GrayImage {
    let (w, h) = (mask.w / factor, mask.h / factor);
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut any = 0u8;
            'scan: for dy in 0..factor {
                for dx in 0..factor {
                    if mask.get(x * factor + dx, y * factor + dy) != 0 {
                        any = 255;
                        break 'scan;
                    }
                }
            }
            out.set(x, y, any);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sequence, SceneParams};

    fn temp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("steerviz_dataset_test").join(name);
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn round_trip_scene_through_disk() {
        let dir = temp_dir("round_trip");
        let scene = generate_sequence(&SceneParams {
            seed: 7,
            frames: 5,
            ..SceneParams::default()
        })
        .unwrap();
        write_dataset(&dir, &scene).unwrap();

        let telemetry = load_telemetry(&dir).unwrap();
        assert_eq!(telemetry, scene.telemetry);

        let frames = load_frames(&dir).unwrap();
        assert_eq!(frames.len(), 5);
        assert_eq!(frames[0].0, 1);
        assert_eq!(frames[2].2.data(), scene.frames[2].data());

        let masks = load_masks(&dir, 3).unwrap().unwrap();
        assert_eq!(masks.lane, scene.masks[2].lane);
        assert!(load_masks(&dir, 99).unwrap().is_none());
    }

    #[test]
    fn telemetry_header_is_enforced() {
        let dir = temp_dir("bad_header");
        fs::write(dir.join("telemetry.csv"), "time,steer,vel\n0,0,0\n1,0,0\n").unwrap();
        assert!(load_telemetry(&dir).is_err());
    }

    #[test]
    fn missing_frame_file_is_reported() {
        let dir = temp_dir("missing_frame");
        fs::write(dir.join("frames.csv"), "index,timestamp\n1,0.0\n").unwrap();
        fs::create_dir_all(dir.join("frames")).unwrap();
        let err = load_frames(&dir).unwrap_err().to_string();
        assert!(err.contains("frame 1"), "{err}");
    }

    #[test]
    fn mask_downscale_pools_any_nonzero() {
        let mut m = GrayImage::new(4, 4);
        m.set(1, 1, 255);
        let half = downscale_mask(&m, 2);
        assert_eq!(half.get(0, 0), 255);
        assert_eq!(half.get(1, 0), 0);
        assert_eq!(half.get(0, 1), 0);
    }
}
