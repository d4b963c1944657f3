//! 8-bit image buffers and the dataset's on-disk image formats.
//!
//! Binary PPM (P6) is the native frame format: trivial to parse, byte-exact
//! to diff, no dependencies. Grayscale masks use PGM (P5). PNG ingestion is
//! available behind the `png` feature.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Interleaved RGB, row-major, 8 bits per channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub w: usize,
    pub h: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(w: usize, h: usize) -> Self {
        RgbImage {
            w,
            h,
            data: vec![0; w * h * 3],
        }
    }

    pub fn from_raw(w: usize, h: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != w * h * 3 {
            return Err(Error::invalid(format!(
                "raw rgb buffer {} bytes for {w}x{h}",
                data.len()
            )));
        }
        Ok(RgbImage { w, h, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Center crop to `(cw, ch)`.
    pub fn crop_center(&self, cw: usize, ch: usize) -> Result<RgbImage> {
        if cw > self.w || ch > self.h {
            return Err(Error::invalid(format!(
                "crop {cw}x{ch} larger than image {}x{}",
                self.w, self.h
            )));
        }
        let x0 = (self.w - cw) / 2;
        let y0 = (self.h - ch) / 2;
        let mut out = RgbImage::new(cw, ch);
        for y in 0..ch {
            let src = ((y0 + y) * self.w + x0) * 3;
            let dst = y * cw * 3;
            out.data[dst..dst + cw * 3].copy_from_slice(&self.data[src..src + cw * 3]);
        }
        Ok(out)
    }

    /// Nearest-neighbor resize with half-pixel centers:
    /// `src = floor((dst + 0.5) * src_extent / dst_extent)`.
    pub fn resize_nearest(&self, ow: usize, oh: usize) -> RgbImage {
        let mut out = RgbImage::new(ow, oh);
        let xs: Vec<usize> = (0..ow)
            .map(|x| nearest_index(x, self.w, ow))
            .collect();
        for y in 0..oh {
            let sy = nearest_index(y, self.h, oh);
            for (x, &sx) in xs.iter().enumerate() {
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }
}

#[inline]
pub fn nearest_index(dst: usize, src_extent: usize, dst_extent: usize) -> usize {
    let pos = (dst as f64 + 0.5) * src_extent as f64 / dst_extent as f64;
    (pos.floor() as usize).min(src_extent - 1)
}

/// Single-channel, row-major, 8 bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub w: usize,
    pub h: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(w: usize, h: usize) -> Self {
        GrayImage {
            w,
            h,
            data: vec![0; w * h],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.w + x] = v;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

// ---------------------------------------------------------------------------
// PPM / PGM

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.w, img.h).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.w, img.h).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

fn parse_netpbm_header<'a>(bytes: &'a [u8], magic: &str, ctx: &str) -> Result<(usize, usize, usize)> {
    // magic, then three whitespace-separated decimal fields; '#' comments run
    // to end of line.
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(Error::parse(ctx, format!("expected {magic} header")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(ctx, "truncated header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| Error::parse(ctx, format!("{e}")))?;
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::parse(ctx, "missing separator before pixel data"));
    }
    pos += 1;
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::parse(ctx, format!("unsupported maxval {maxval}")));
    }
    Ok((w, h, pos))
}

pub fn decode_ppm(bytes: &[u8], ctx: &str) -> Result<RgbImage> {
    let (w, h, pos) = parse_netpbm_header(bytes, "P6", ctx)?;
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(Error::parse(ctx, "truncated pixel data"));
    }
    RgbImage::from_raw(w, h, bytes[pos..pos + need].to_vec())
}

pub fn decode_pgm(bytes: &[u8], ctx: &str) -> Result<GrayImage> {
    let (w, h, pos) = parse_netpbm_header(bytes, "P5", ctx)?;
    let need = w * h;
    if bytes.len() < pos + need {
        return Err(Error::parse(ctx, "truncated pixel data"));
    }
    Ok(GrayImage {
        w,
        h,
        data: bytes[pos..pos + need].to_vec(),
    })
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    Ok(fs::write(path, encode_ppm(img))?)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(&fs::read(path)?, &path.display().to_string())
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    Ok(fs::write(path, encode_pgm(img))?)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?, &path.display().to_string())
}

#[cfg(feature = "png")]
pub fn read_png(path: &Path) -> Result<RgbImage> {
    let file = fs::File::open(path)?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf[..w * h * 3].to_vec(),
        png::ColorType::Rgba => {
            let mut out = Vec::with_capacity(w * h * 3);
            for px in buf[..w * h * 4].chunks_exact(4) {
                out.extend_from_slice(&px[..3]);
            }
            out
        }
        png::ColorType::Grayscale => {
            let mut out = Vec::with_capacity(w * h * 3);
            for &v in &buf[..w * h] {
                out.extend_from_slice(&[v, v, v]);
            }
            out
        }
        other => {
            return Err(Error::parse(
                path.display().to_string(),
                format!("unsupported png color type {other:?}"),
            ))
        }
    };
    RgbImage::from_raw(w, h, rgb)
}

/// Reads a frame image, dispatching on extension.
pub fn read_frame_image(path: &Path) -> Result<RgbImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => read_ppm(path),
        #[cfg(feature = "png")]
        Some("png") => read_png(path),
        #[cfg(not(feature = "png"))]
        Some("png") => Err(Error::invalid(format!(
            "{}: png support not compiled in (enable the `png` feature)",
            path.display()
        ))),
        _ => Err(Error::invalid(format!(
            "{}: unsupported image extension",
            path.display()
        ))),
    }
}

// ---------------------------------------------------------------------------
// float-plane resampling

/// Bilinear resample of an interleaved float plane, align-corners mapping
/// (`src = dst * (src_extent-1) / (dst_extent-1)`), so equal extents copy
/// pixels exactly.
pub fn bilinear_resample(
    src: &[f32],
    sh: usize,
    sw: usize,
    channels: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    assert_eq!(src.len(), sh * sw * channels);
    let mut out = vec![0.0f32; oh * ow * channels];
    let fy = if oh > 1 {
        (sh - 1) as f64 / (oh - 1) as f64
    } else {
        0.0
    };
    let fx = if ow > 1 {
        (sw - 1) as f64 / (ow - 1) as f64
    } else {
        0.0
    };
    for y in 0..oh {
        let sy = y as f64 * fy;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = sy - y0 as f64;
        for x in 0..ow {
            let sx = x as f64 * fx;
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = sx - x0 as f64;
            for c in 0..channels {
                let p00 = src[(y0 * sw + x0) * channels + c] as f64;
                let p01 = src[(y0 * sw + x1) * channels + c] as f64;
                let p10 = src[(y1 * sw + x0) * channels + c] as f64;
                let p11 = src[(y1 * sw + x1) * channels + c] as f64;
                let top = p00 + (p01 - p00) * tx;
                let bot = p10 + (p11 - p10) * tx;
                out[(y * ow + x) * channels + c] = (top + (bot - top) * ty) as f32;
            }
        }
    }
    out
}
