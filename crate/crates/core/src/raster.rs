//! Single-channel images and projective warping.
//!
//! Warping uses inverse mapping: output pixel `(x, y)` samples the source at
//! `H⁻¹(x + 0.5, y + 0.5) − (0.5, 0.5)`, i.e. pixel centers map to pixel
//! centers. Samples outside `[0, w−1] x [0, h−1]` take the fill value.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader, Luma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2, ViewingWindow};

/// Background intensity outside the viewing window.
pub const DEFAULT_FILL: f32 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Image(format!("intensity {v} outside [0, 1]")));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        GrayImage::new(
            width,
            height,
            bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Sets a pixel, clamping the value into `[0, 1]`.
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// 8-bit quantization, round half up.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }
}

fn quantize(v: f32) -> u8 {
    (f64::from(v) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl WindowMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} mask cells for {width}x{height}",
                data.len()
            )));
        }
        Ok(WindowMask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Keeps a pixel only if every pixel within Chebyshev distance `radius`
    /// is inside the canvas and set.
    pub fn eroded(&self, radius: usize) -> WindowMask {
        let (w, h) = (self.width, self.height);
        let mut data = vec![false; w * h];
        for y in radius..h.saturating_sub(radius) {
            for x in radius..w.saturating_sub(radius) {
                data[y * w + x] = (y - radius..=y + radius)
                    .all(|yy| (x - radius..=x + radius).all(|xx| self.data[yy * w + xx]));
            }
        }
        WindowMask {
            width: w,
            height: h,
            data,
        }
    }
}

/// Warps `img` by `h` onto a canvas of the same size.
///
/// Rows are processed in parallel; each pixel's arithmetic is independent of
/// the others, so the result does not depend on the thread count.
pub fn warp_image(img: &GrayImage, h: &Homography, fill: f32) -> Result<GrayImage> {
    if !(0.0..=1.0).contains(&fill) {
        return Err(Error::Image(format!("fill {fill} outside [0, 1]")));
    }
    let m = h.invert()?.matrix();
    let (w, ht) = (img.width, img.height);
    let src = &img.data;
    let max_x = (w - 1) as f64;
    let max_y = (ht - 1) as f64;

    let mut out = vec![fill; w * ht];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let yc = y as f64 + 0.5;
        let (r0, r1, r2) = (m[0][1] * yc, m[1][1] * yc, m[2][1] * yc);
        for (x, px) in row.iter_mut().enumerate() {
            let xc = x as f64 + 0.5;
            let d = m[2][0] * xc + r2 + m[2][2];
            if !(d.abs() > 1e-12) {
                continue;
            }
            let sx = (m[0][0] * xc + r0 + m[0][2]) / d - 0.5;
            let sy = (m[1][0] * xc + r1 + m[1][2]) / d - 0.5;
            if !(sx >= 0.0 && sx <= max_x && sy >= 0.0 && sy <= max_y) {
                continue;
            }
            let x0 = (sx.floor() as usize).min(w.saturating_sub(2));
            let y0 = (sy.floor() as usize).min(ht.saturating_sub(2));
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(ht - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let p00 = f64::from(src[y0 * w + x0]);
            let p10 = f64::from(src[y0 * w + x1]);
            let p01 = f64::from(src[y1 * w + x0]);
            let p11 = f64::from(src[y1 * w + x1]);
            let top = p00 * (1.0 - fx) + p10 * fx;
            let bottom = p01 * (1.0 - fx) + p11 * fx;
            *px = ((top * (1.0 - fy) + bottom * fy) as f32).clamp(0.0, 1.0);
        }
    });
    Ok(GrayImage {
        width: w,
        height: ht,
        data: out,
    })
}

/// Rasterizes the window quadrilateral: a pixel is set when its center lies
/// strictly inside the boundary `p1_left → p1_right → p2_right → p2_left`.
pub fn render_mask(win: &ViewingWindow, width: usize, height: usize) -> Result<WindowMask> {
    win.validate()?;
    if !(win.area() > 1e-9) {
        return Err(Error::InvalidWindow {
            reason: "zero-area window".into(),
            corners: format!("{:?}", win.to_annotation()),
        });
    }
    let poly = win.polygon();
    let mut data = vec![false; width * height];
    let mut crossings = Vec::with_capacity(4);
    for (y, row) in data.chunks_mut(width.max(1)).enumerate() {
        let yc = y as f64 + 0.5;
        crossings.clear();
        for i in 0..4 {
            let (a, b) = (poly[i], poly[(i + 1) % 4]);
            if (a.y <= yc) != (b.y <= yc) {
                crossings.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            let (lo, hi) = (span[0], span[1]);
            // first center strictly right of lo, last strictly left of hi
            let start = (lo - 0.5).floor() + 1.0;
            let end = (hi - 0.5).ceil() - 1.0;
            let start = start.max(0.0);
            let end = end.min(width as f64 - 1.0);
            if start <= end {
                for cell in &mut row[start as usize..=end as usize] {
                    *cell = true;
                }
            }
        }
    }
    WindowMask::new(width, height, data)
}

/// Area-averaging resize to a smaller (or equal) size.
pub fn downsample(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Image(format!(
            "zero output dimension {out_w}x{out_h}"
        )));
    }
    if out_w > img.width || out_h > img.height {
        return Err(Error::DimensionMismatch(format!(
            "cannot downsample {}x{} to {out_w}x{out_h}",
            img.width, img.height
        )));
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let wx = axis_weights(img.width, out_w);
    let wy = axis_weights(img.height, out_h);

    // horizontal pass
    let mut tmp = vec![0.0f64; out_w * img.height];
    for y in 0..img.height {
        let src = &img.data[y * img.width..(y + 1) * img.width];
        for (ox, taps) in wx.iter().enumerate() {
            tmp[y * out_w + ox] = taps.iter().map(|&(j, wgt)| f64::from(src[j]) * wgt).sum();
        }
    }
    let mut data = vec![0.0f32; out_w * out_h];
    for (oy, taps) in wy.iter().enumerate() {
        for ox in 0..out_w {
            let v: f64 = taps.iter().map(|&(j, wgt)| tmp[j * out_w + ox] * wgt).sum();
            data[oy * out_w + ox] = (v as f32).clamp(0.0, 1.0);
        }
    }
    Ok(GrayImage {
        width: out_w,
        height: out_h,
        data,
    })
}

/// Source taps and weights for each output cell; cell `i` covers
/// `[i·n/m, (i+1)·n/m)` in source units.
fn axis_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    (0..m)
        .map(|i| {
            let (lo, hi) = (i * n, (i + 1) * n);
            let first = lo / m;
            let last = (hi - 1) / m;
            (first..=last)
                .filter_map(|j| {
                    let overlap = hi.min((j + 1) * m).saturating_sub(lo.max(j * m));
                    (overlap > 0).then(|| (j, overlap as f64 / n as f64))
                })
                .collect()
        })
        .collect()
}

/// Peak signal-to-noise ratio over masked pixels, peak = 1.
pub fn psnr(a: &GrayImage, b: &GrayImage, mask: &WindowMask) -> Result<f64> {
    if a.width != b.width
        || a.height != b.height
        || a.width != mask.width
        || a.height != mask.height
    {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{} with mask {}x{}",
            a.width, a.height, b.width, b.height, mask.width, mask.height
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((&pa, &pb), &keep) in a.data.iter().zip(&b.data).zip(&mask.data) {
        if keep {
            let d = f64::from(pa) - f64::from(pb);
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = sum / count as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

/// Brightest sample location, used by displacement checks.
pub fn argmax(img: &GrayImage) -> Point2 {
    let (i, _) =
        img.data.iter().enumerate().fold(
            (0, f32::MIN),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        );
    Point2::new((i % img.width) as f64, (i / img.width) as f64)
}

/// Decodes PNG or binary PGM; color input is converted with BT.601 luma weights.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| Error::format(path, e))
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    let decoded = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::Image(e.to_string()))?
        .decode()
        .map_err(|e| Error::Image(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f32> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|b| f32::from(b) / 255.0)
            .collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f32::from(p.0[0]) / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|b| f32::from(b) / 65535.0)
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| (0.299 * p.0[0] + 0.587 * p.0[1] + 0.114 * p.0[2]).clamp(0.0, 1.0))
            .collect(),
    };
    GrayImage::new(w, h, data)
}

/// Writes an 8-bit PNG or binary PGM (chosen by extension).
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => ImageFormat::Png,
        Some("pgm") | Some("pnm") => ImageFormat::Pnm,
        other => {
            return Err(Error::format(
                path,
                format!("unsupported image extension {other:?} (use .png or .pgm)"),
            ))
        }
    };
    let bytes = encode_image(img, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_image(img: &GrayImage, format: ImageFormat) -> Result<Vec<u8>> {
    let buf = image::ImageBuffer::<Luma<u8>, _>::from_raw(
        img.width as u32,
        img.height as u32,
        img.to_u8(),
    )
    .ok_or_else(|| Error::Image("buffer size mismatch".into()))?;
    let mut out = Cursor::new(Vec::new());
    match format {
        ImageFormat::Pnm => {
            use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
            let enc =
                PnmEncoder::new(&mut out).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
            buf.write_with_encoder(enc)
                .map_err(|e| Error::Image(e.to_string()))?;
        }
        _ => buf
            .write_to(&mut out, format)
            .map_err(|e| Error::Image(e.to_string()))?,
    }
    Ok(out.into_inner())
}
