//! Raw telemetry and frames to training-ready form: interpolation to frame
//! timestamps, exponential smoothing, steering-angle/inverse-turning-radius
//! conversion, crop+resize, HSV normalization and stop-frame exclusion.

use serde::{Deserialize, Serialize};

use crate::image::RgbImage;
use crate::tensor::Tensor;
use crate::{par, Error, Result};

/// Frames with smoothed velocity below this are excluded as stopped.
pub const STOP_VELOCITY_MPS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub timestamp: f64,
    pub steering_deg: f64,
    pub velocity_mps: f64,
}

/// Ackermann steering constants. The defaults are typical passenger-car
/// magnitudes used by the synthetic scenes; real datasets carry their own.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Steering-wheel to road-wheel ratio.
    pub k_s: f64,
    /// Slip coefficient, s^2/m^2.
    pub k_slip: f64,
    /// Wheelbase, meters.
    pub d_w: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            k_s: 16.0,
            k_slip: 0.004,
            d_w: 2.7,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if self.d_w <= 0.0 || self.k_s <= 0.0 || self.k_slip < 0.0 {
            return Err(Error::invalid(format!("vehicle params {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha_s: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        // the best-performing smoothing factor for steering estimation
        SmoothingConfig { alpha_s: 0.05 }
    }
}

/// A preprocessed frame: HSV pixels in [0,1] plus its aligned targets.
#[derive(Clone, Debug)]
pub struct ProcessedFrame {
    /// Interleaved H,S,V in [0,1], row-major.
    pub pixels: Vec<f32>,
    pub h: usize,
    pub w: usize,
    /// Position in the original frame sequence; used to detect gaps left by
    /// stop-frame exclusion.
    pub index: usize,
    pub timestamp: f64,
    /// Inverse turning radius target, 1/m.
    pub u_target: f64,
    /// Smoothed velocity, m/s.
    pub v_smooth: f64,
}

impl ProcessedFrame {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f32(vec![self.h, self.w, 3], &self.pixels).expect("finite pixels")
    }
}

// ---------------------------------------------------------------------------
// telemetry

/// Linear interpolation of steering and velocity at each query time.
/// Queries outside the sampled range are rejected; no extrapolation.
pub fn interpolate_telemetry(
    samples: &[TelemetrySample],
    query_times: &[f64],
) -> Result<Vec<TelemetrySample>> {
    if samples.len() < 2 {
        return Err(Error::EmptyInput("need at least 2 telemetry samples"));
    }
    for pair in samples.windows(2) {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at t={}",
                pair[1].timestamp
            )));
        }
    }
    let first = samples[0].timestamp;
    let last = samples[samples.len() - 1].timestamp;
    let mut out = Vec::with_capacity(query_times.len());
    for &t in query_times {
        if t < first || t > last {
            return Err(Error::OutOfRange {
                query: t,
                first,
                last,
            });
        }
        // segment with samples[i].timestamp <= t <= samples[i+1].timestamp
        let i = match samples.binary_search_by(|s| s.timestamp.partial_cmp(&t).unwrap()) {
            Ok(exact) => {
                out.push(samples[exact]);
                continue;
            }
            Err(ins) => ins - 1,
        };
        let (a, b) = (&samples[i], &samples[i + 1]);
        let f = (t - a.timestamp) / (b.timestamp - a.timestamp);
        out.push(TelemetrySample {
            timestamp: t,
            steering_deg: a.steering_deg + f * (b.steering_deg - a.steering_deg),
            velocity_mps: a.velocity_mps + f * (b.velocity_mps - a.velocity_mps),
        });
    }
    Ok(out)
}

/// Simple exponential smoothing, initialized at the first raw value:
/// `s[t] = alpha * y[t] + (1 - alpha) * s[t-1]`.
pub fn smooth_series(values: &[f64], config: SmoothingConfig) -> Vec<f64> {
    let a = config.alpha_s;
    assert!((0.0..=1.0).contains(&a), "alpha_s {a} outside [0,1]");
    let mut out = Vec::with_capacity(values.len());
    let mut prev = match values.first() {
        Some(&v) => v,
        None => return out,
    };
    out.push(prev);
    for &y in &values[1..] {
        prev = a * y + (1.0 - a) * prev;
        out.push(prev);
    }
    out
}

/// Ackermann geometry: steering angle (degrees) from inverse turning radius.
pub fn theta_from_u(u: f64, v: f64, params: &VehicleParams) -> f64 {
    u * params.d_w * params.k_s * (1.0 + params.k_slip * v * v)
}

/// Algebraic inverse of [`theta_from_u`].
pub fn u_from_theta(theta: f64, v: f64, params: &VehicleParams) -> f64 {
    theta / (params.d_w * params.k_s * (1.0 + params.k_slip * v * v))
}

// ---------------------------------------------------------------------------
// frames

/// Center-crops to the target aspect ratio, then nearest-neighbor resizes.
/// The source must be at least as large as the target in both extents.
pub fn crop_resize(image: &RgbImage, target_w: usize, target_h: usize) -> Result<RgbImage> {
    if image.w < target_w || image.h < target_h {
        return Err(Error::invalid(format!(
            "image {}x{} smaller than target {}x{}",
            image.w, image.h, target_w, target_h
        )));
    }
    // ratio h:w reduced to lowest terms keeps the cropped region exact
    let g = gcd(target_h, target_w);
    let (rh, rw) = (target_h / g, target_w / g);
    let mut crop_h = image.h.min(image.w * rh / rw);
    crop_h -= crop_h % rh;
    let crop_w = crop_h / rh * rw;
    let cropped = image.crop_center(crop_w, crop_h)?;
    Ok(cropped.resize_nearest(target_w, target_h))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Hexcone RGB -> HSV with every channel scaled to [0,1]. Hue of achromatic
/// pixels is 0.
pub fn hsv_normalize(image: &RgbImage) -> Vec<f32> {
    let mut out = Vec::with_capacity(image.w * image.h * 3);
    for px in image.data().chunks_exact(3) {
        let [h, s, v] = rgb8_to_hsv(px[0], px[1], px[2]);
        out.extend_from_slice(&[h, s, v]);
    }
    out
}

pub fn rgb8_to_hsv(r: u8, g: u8, b: u8) -> [f32; 3] {
    let r = r as f64 / 255.0;
    let g = g as f64 / 255.0;
    let b = b as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h6 = if delta <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    [(h6 / 6.0) as f32, s as f32, v as f32]
}

/// Drops frames whose smoothed velocity marks the vehicle as stopped,
/// preserving order.
pub fn filter_stopped(frames: Vec<ProcessedFrame>) -> Vec<ProcessedFrame> {
    frames
        .into_iter()
        .filter(|f| f.v_smooth >= STOP_VELOCITY_MPS)
        .collect()
}

// ---------------------------------------------------------------------------
// end-to-end pipeline

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub target_h: usize,
    pub target_w: usize,
    /// `None` skips smoothing entirely (raw interpolated series).
    pub smoothing: Option<SmoothingConfig>,
    pub vehicle: VehicleParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            target_h: 80,
            target_w: 160,
            smoothing: Some(SmoothingConfig::default()),
            vehicle: VehicleParams::default(),
        }
    }
}

/// Runs the full preprocessing chain over raw frames and telemetry.
///
/// Telemetry is interpolated to frame timestamps first and smoothed second;
/// frames outside the telemetry range are dropped. Pixel work fans out in
/// parallel; the result is deterministic either way.
pub fn process_sequence(
    raw_frames: &[(usize, f64, RgbImage)],
    telemetry: &[TelemetrySample],
    config: &PipelineConfig,
) -> Result<Vec<ProcessedFrame>> {
    config.vehicle.validate()?;
    if telemetry.len() < 2 {
        return Err(Error::EmptyInput("need at least 2 telemetry samples"));
    }
    let first = telemetry[0].timestamp;
    let last = telemetry[telemetry.len() - 1].timestamp;
    let in_range: Vec<&(usize, f64, RgbImage)> = raw_frames
        .iter()
        .filter(|(_, t, _)| *t >= first && *t <= last)
        .collect();
    if in_range.is_empty() {
        return Err(Error::EmptyInput("no frames within telemetry range"));
    }
    let times: Vec<f64> = in_range.iter().map(|(_, t, _)| *t).collect();
    let interp = interpolate_telemetry(telemetry, &times)?;

    let thetas: Vec<f64> = interp.iter().map(|s| s.steering_deg).collect();
    let vels: Vec<f64> = interp.iter().map(|s| s.velocity_mps).collect();
    let (thetas, vels) = match config.smoothing {
        Some(cfg) => (smooth_series(&thetas, cfg), smooth_series(&vels, cfg)),
        None => (thetas, vels),
    };

    let frames = par::map_range(in_range.len(), |i| -> Result<ProcessedFrame> {
        let (index, timestamp, img) = in_range[i];
        let resized = crop_resize(img, config.target_w, config.target_h)?;
        Ok(ProcessedFrame {
            pixels: hsv_normalize(&resized),
            h: config.target_h,
            w: config.target_w,
            index: *index,
            timestamp: *timestamp,
            u_target: u_from_theta(thetas[i], vels[i], &config.vehicle),
            v_smooth: vels[i],
        })
    });
    let frames: Result<Vec<ProcessedFrame>> = frames.into_iter().collect();
    Ok(filter_stopped(frames?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::nearest_index;
    use proptest::prelude::*;

    fn sample(t: f64, theta: f64, v: f64) -> TelemetrySample {
        TelemetrySample {
            timestamp: t,
            steering_deg: theta,
            velocity_mps: v,
        }
    }

    #[test]
    fn interpolation_hits_knot_points_exactly() {
        let s = vec![sample(0.0, 1.0, 5.0), sample(2.0, 3.0, 7.0)];
        let out = interpolate_telemetry(&s, &[0.0, 2.0]).unwrap();
        assert_eq!(out[0], s[0]);
        assert_eq!(out[1], s[1]);
    }

    #[test]
    fn interpolation_midpoint() {
        let s = vec![sample(0.0, 0.0, 0.0), sample(2.0, 4.0, 2.0)];
        let out = interpolate_telemetry(&s, &[1.0]).unwrap();
        assert_eq!(out[0].steering_deg, 2.0);
        assert_eq!(out[0].velocity_mps, 1.0);
    }

    #[test]
    fn interpolation_rejects_out_of_range() {
        let s = vec![sample(0.0, 0.0, 0.0), sample(1.0, 1.0, 1.0)];
        assert!(interpolate_telemetry(&s, &[1.5]).is_err());
        assert!(interpolate_telemetry(&s, &[-0.1]).is_err());
    }

    #[test]
    fn interpolation_matches_two_point_formula() {
        // independent oracle: direct two-point interpolation per query
        let mut rng = crate::rng::stream(99, 0, 0);
        use rand::Rng;
        let mut t = 0.0;
        let mut samples = Vec::new();
        for _ in 0..50 {
            t += 0.1 + rng.random::<f64>();
            samples.push(sample(t, rng.random::<f64>() * 20.0 - 10.0, rng.random::<f64>() * 30.0));
        }
        let first = samples[0].timestamp;
        let last = samples.last().unwrap().timestamp;
        for _ in 0..200 {
            let q = first + rng.random::<f64>() * (last - first);
            let got = interpolate_telemetry(&samples, &[q]).unwrap()[0];
            let i = samples.iter().rposition(|s| s.timestamp <= q).unwrap();
            let (a, b) = (&samples[i], &samples[(i + 1).min(samples.len() - 1)]);
            let expect = if i + 1 == samples.len() {
                a.steering_deg
            } else {
                (a.steering_deg * (b.timestamp - q) + b.steering_deg * (q - a.timestamp))
                    / (b.timestamp - a.timestamp)
            };
            assert!((got.steering_deg - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_alpha_one_is_identity() {
        let v = vec![3.0, -1.0, 4.0, 1.5];
        assert_eq!(smooth_series(&v, SmoothingConfig { alpha_s: 1.0 }), v);
    }

    #[test]
    fn smoothing_direct_substitution() {
        let out = smooth_series(&[0.0, 10.0], SmoothingConfig { alpha_s: 0.5 });
        assert_eq!(out, vec![0.0, 5.0]);
    }

    #[test]
    fn smoothing_default_alpha_is_best_setting() {
        assert_eq!(SmoothingConfig::default().alpha_s, 0.05);
    }

    #[test]
    fn theta_u_round_trip_and_hand_value() {
        let p = VehicleParams {
            k_s: 2.0,
            k_slip: 0.01,
            d_w: 2.5,
        };
        // theta=10, v=10: u = 10 / (2.5 * 2 * (1 + 0.01*100)) = 1.0
        assert!((u_from_theta(10.0, 10.0, &p) - 1.0).abs() < 1e-12);
        assert_eq!(theta_from_u(0.0, 33.0, &p), 0.0);
        let p2 = VehicleParams {
            k_s: 1.0,
            k_slip: 0.0,
            d_w: 1.0,
        };
        assert_eq!(theta_from_u(0.5, 3.0, &p2), 0.5);
    }

    proptest! {
        #[test]
        fn round_trip_u_theta(u in -0.5f64..0.5, v in 0.0f64..40.0) {
            let p = VehicleParams::default();
            let back = u_from_theta(theta_from_u(u, v, &p), v, &p);
            prop_assert!((back - u).abs() < 1e-9);
        }

        #[test]
        fn theta_is_odd_and_increasing_in_u(u in 1e-6f64..0.5, v in 0.0f64..40.0) {
            let p = VehicleParams::default();
            let pos = theta_from_u(u, v, &p);
            let neg = theta_from_u(-u, v, &p);
            prop_assert!((pos + neg).abs() < 1e-12);
            prop_assert!(theta_from_u(u * 2.0, v, &p) > pos);
        }

        #[test]
        fn smoothing_bounded_by_prefix_extremes(
            values in prop::collection::vec(-100.0f64..100.0, 1..40),
            alpha in 0.0f64..=1.0,
        ) {
            let out = smooth_series(&values, SmoothingConfig { alpha_s: alpha });
            let mut lo = values[0];
            let mut hi = values[0];
            for (i, &s) in out.iter().enumerate() {
                lo = lo.min(values[i]);
                hi = hi.max(values[i]);
                prop_assert!(s >= lo - 1e-9 && s <= hi + 1e-9);
            }
        }

        #[test]
        fn constant_series_is_smoothing_fixed_point(c in -50.0f64..50.0, alpha in 0.0f64..=1.0) {
            let v = vec![c; 17];
            let out = smooth_series(&v, SmoothingConfig { alpha_s: alpha });
            for s in out {
                prop_assert!((s - c).abs() < 1e-9);
            }
        }
    }

    fn gradient_image(w: usize, h: usize) -> RgbImage {
        let mut img = RgbImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, [(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        img
    }

    #[test]
    fn crop_resize_identity_on_exact_size() {
        let img = gradient_image(160, 80);
        let out = crop_resize(&img, 160, 80).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn crop_resize_exact_decimation() {
        let img = gradient_image(320, 160);
        let out = crop_resize(&img, 160, 80).unwrap();
        for y in 0..80 {
            for x in 0..160 {
                assert_eq!(out.get(x, y), img.get(2 * x + 1, 2 * y + 1));
            }
        }
    }

    #[test]
    fn crop_resize_matches_reference_scaler() {
        // 640x480 -> crop to 640x320 centered -> nearest to 160x80, checked
        // against an independent per-pixel oracle
        let img = gradient_image(640, 480);
        let out = crop_resize(&img, 160, 80).unwrap();
        let y0 = (480 - 320) / 2;
        for y in 0..80 {
            for x in 0..160 {
                let sy = nearest_index(y, 320, 80) + y0;
                let sx = nearest_index(x, 640, 160);
                assert_eq!(out.get(x, y), img.get(sx, sy), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn crop_resize_rejects_small_images() {
        let img = gradient_image(100, 100);
        assert!(crop_resize(&img, 160, 80).is_err());
    }

    #[test]
    fn crop_preserves_target_aspect_exactly() {
        for (w, h) in [(161, 200), (320, 81), (641, 480), (1280, 87)] {
            let img = gradient_image(w, h);
            // reconstruct the crop the function performs
            let mut crop_h = h.min(w / 2);
            crop_h -= crop_h % 1;
            let crop_w = crop_h * 2;
            assert_eq!(crop_w, 2 * crop_h);
            assert!(crop_resize(&img, 160, 80).is_ok());
        }
    }

    #[test]
    fn hsv_of_pure_red_and_gray() {
        assert_eq!(rgb8_to_hsv(255, 0, 0), [0.0, 1.0, 1.0]);
        let [h, s, v] = rgb8_to_hsv(128, 128, 128);
        assert_eq!(h, 0.0);
        assert_eq!(s, 0.0);
        assert!((v - 128.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn hsv_round_trip_within_one_step() {
        // reference inverse conversion
        fn hsv_to_rgb8(h: f32, s: f32, v: f32) -> [f64; 3] {
            let h6 = (h as f64) * 6.0;
            let s = s as f64;
            let v = v as f64;
            let c = v * s;
            let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
            let m = v - c;
            let (r, g, b) = match h6 as usize {
                0 => (c, x, 0.0),
                1 => (x, c, 0.0),
                2 => (0.0, c, x),
                3 => (0.0, x, c),
                4 => (x, 0.0, c),
                _ => (c, 0.0, x),
            };
            [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
        }
        let mut rng = crate::rng::stream(5, 0, 0);
        use rand::Rng;
        for _ in 0..2000 {
            let (r, g, b) = (rng.random::<u8>(), rng.random::<u8>(), rng.random::<u8>());
            let [h, s, v] = rgb8_to_hsv(r, g, b);
            let back = hsv_to_rgb8(h, s, v);
            assert!((back[0] - r as f64).abs() <= 1.0, "{r},{g},{b} -> {back:?}");
            assert!((back[1] - g as f64).abs() <= 1.0);
            assert!((back[2] - b as f64).abs() <= 1.0);
        }
    }

    fn frame_with_velocity(idx: usize, v: f64) -> ProcessedFrame {
        ProcessedFrame {
            pixels: vec![0.0; 12],
            h: 2,
            w: 2,
            index: idx,
            timestamp: idx as f64,
            u_target: 0.0,
            v_smooth: v,
        }
    }

    #[test]
    fn filter_stopped_cases() {
        let fast: Vec<_> = (0..4).map(|i| frame_with_velocity(i, 5.0)).collect();
        assert_eq!(filter_stopped(fast.clone()).len(), 4);

        let stopped: Vec<_> = (0..4).map(|i| frame_with_velocity(i, 0.0)).collect();
        assert!(filter_stopped(stopped).is_empty());

        // mixed sequence: retained indices match a direct threshold scan
        let vels = [0.2, 5.0, 0.9, 1.0, 3.0, 0.0, 2.0];
        let mixed: Vec<_> = vels
            .iter()
            .enumerate()
            .map(|(i, &v)| frame_with_velocity(i, v))
            .collect();
        let kept: Vec<usize> = filter_stopped(mixed).iter().map(|f| f.index).collect();
        let expect: Vec<usize> = vels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(kept, expect);
    }
}
