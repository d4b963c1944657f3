//! Blob occlusion and warping. Masking zeroes every pixel inside or on a
//! hull, in all channels, in the model's input space; warping resamples a
//! hull's bounding box to a fixed square patch.

use super::hull::{point_in_hull, Pt};
use crate::image::bilinear_resample;
use crate::preprocess::ProcessedFrame;
use crate::{Error, Result};

fn check_hull(hull: &[Pt], w: usize, h: usize) -> Result<()> {
    if hull.len() < 3 {
        return Err(Error::invalid(format!(
            "hull with {} vertices cannot be rasterized",
            hull.len()
        )));
    }
    for &(x, y) in hull {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            return Err(Error::invalid(format!(
                "hull vertex ({x},{y}) outside {w}x{h} frame"
            )));
        }
    }
    Ok(())
}

/// Returns a copy of the frame with the hull's interior (and boundary)
/// zeroed. Pixels outside are untouched; masking is idempotent.
pub fn mask_blob(frame: &ProcessedFrame, hull: &[Pt]) -> Result<ProcessedFrame> {
    check_hull(hull, frame.w, frame.h)?;
    let mut out = frame.clone();
    let min_x = hull.iter().map(|p| p.0).min().unwrap().max(0) as usize;
    let max_x = hull.iter().map(|p| p.0).max().unwrap() as usize;
    let min_y = hull.iter().map(|p| p.1).min().unwrap().max(0) as usize;
    let max_y = hull.iter().map(|p| p.1).max().unwrap() as usize;
    for y in min_y..=max_y.min(frame.h - 1) {
        for x in min_x..=max_x.min(frame.w - 1) {
            if point_in_hull(hull, (x as i64, y as i64)) {
                let base = (y * frame.w + x) * 3;
                out.pixels[base] = 0.0;
                out.pixels[base + 1] = 0.0;
                out.pixels[base + 2] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Resamples the hull's axis-aligned bounding box to a `size` x `size` x 3
/// patch with align-corners bilinear interpolation.
pub fn warp_saliency(frame: &ProcessedFrame, hull: &[Pt], size: usize) -> Result<Vec<f32>> {
    check_hull(hull, frame.w, frame.h)?;
    let min_x = hull.iter().map(|p| p.0).min().unwrap() as usize;
    let max_x = hull.iter().map(|p| p.0).max().unwrap() as usize;
    let min_y = hull.iter().map(|p| p.1).min().unwrap() as usize;
    let max_y = hull.iter().map(|p| p.1).max().unwrap() as usize;
    let (cw, ch) = (max_x - min_x + 1, max_y - min_y + 1);
    let mut crop = Vec::with_capacity(cw * ch * 3);
    for y in min_y..=max_y {
        let row = &frame.pixels[(y * frame.w + min_x) * 3..(y * frame.w + max_x + 1) * 3];
        crop.extend_from_slice(row);
    }
    Ok(bilinear_resample(&crop, ch, cw, 3, size, size))
}
