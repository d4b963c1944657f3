//! Heat-map overlays: per-frame normalized attention rendered as a
//! red-weighted blend, optionally restricted to causal hulls with their
//! outlines drawn.

use crate::image::RgbImage;
use crate::saliency::{point_in_hull, AttentionMap, Pt};
use crate::{Error, Result};

const OUTLINE_COLOR: [u8; 3] = [60, 255, 80];

fn blend_pixel(px: [u8; 3], m: f64) -> [u8; 3] {
    let r = px[0] as f64;
    let g = px[1] as f64;
    let b = px[2] as f64;
    [
        (r + m * (255.0 - r)).round().clamp(0.0, 255.0) as u8,
        (g * (1.0 - m)).round().clamp(0.0, 255.0) as u8,
        (b * (1.0 - m)).round().clamp(0.0, 255.0) as u8,
    ]
}

fn draw_line(img: &mut RgbImage, a: Pt, b: Pt, color: [u8; 3]) {
    let (mut x0, mut y0) = (a.0, a.1);
    let (x1, y1) = (b.0, b.1);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as usize) < img.w && (y0 as usize) < img.h {
            img.set(x0 as usize, y0 as usize, color);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Blends the map (normalized to [0,1] by its own max) into the frame's red
/// channel. Where the normalized map is 0 the frame passes through
/// unchanged. With `causal_hulls` given, only pixels inside one of the hulls
/// are blended and hull outlines are drawn on top.
pub fn render_overlay(
    frame: &RgbImage,
    map: &AttentionMap,
    causal_hulls: Option<&[Vec<Pt>]>,
) -> Result<RgbImage> {
    if frame.w != map.w || frame.h != map.h {
        return Err(Error::ShapeMismatch {
            op: "render_overlay",
            lhs: vec![frame.w, frame.h],
            rhs: vec![map.w, map.h],
        });
    }
    let max = map.max_value();
    let mut out = frame.clone();
    if max > 0.0 {
        for y in 0..frame.h {
            for x in 0..frame.w {
                let m = map.get(x, y) / max;
                if m == 0.0 {
                    continue;
                }
                if let Some(hulls) = causal_hulls {
                    let p = (x as i64, y as i64);
                    if !hulls.iter().any(|h| point_in_hull(h, p)) {
                        continue;
                    }
                }
                out.set(x, y, blend_pixel(frame.get(x, y), m));
            }
        }
    }
    if let Some(hulls) = causal_hulls {
        for hull in hulls {
            for i in 0..hull.len() {
                draw_line(&mut out, hull[i], hull[(i + 1) % hull.len()], OUTLINE_COLOR);
            }
        }
    }
    Ok(out)
}
