//! Synthetic lung-ultrasound-like frames with known viewing windows.
//!
//! Each 256x256 frame is black outside its window. Inside, a depth-graded
//! tissue level is modulated by clipped log-normal speckle, with a bright
//! pleural line near the probe face. Positive frames add 2–4 streaks running
//! away from the probe (B-line-like); negative frames add 2–4 bands parallel
//! to it at multiples of the pleural depth (A-line-like). Structures are laid
//! out on a unit square and mapped onto the window by the projective map taking
//! the square to the window corners, so streaks fan out radially in a convex
//! frame and stay vertical in a rectangle.
//!
//! Frames come in videos of up to 8 consecutive frames sharing probe, label
//! and geometry. Randomness is derived from `(seed, video)` for geometry and
//! `(seed, frame index)` for texture, so generation is independent of the
//! number of workers.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{write_manifest, Label, ManifestRecord};
use crate::error::{Error, Result};
use crate::geometry::{estimate_homography, Point2, ProbeKind, ViewingWindow};
use crate::raster::{render_mask, save_image, GrayImage};
use crate::rng::ItemRng;

pub const CANVAS: usize = 256;
pub const FRAMES_PER_VIDEO: usize = 8;
pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const IMAGE_DIR: &str = "images";

/// Slope range of generated convex fans.
pub const CONVEX_SLOPE_RANGE: (f64, f64) = (1.5, 3.5);

/// Half-width ranges of the probe face. Linear probes have a wider near field.
const CONVEX_TOP_HALF: (f64, f64) = (15.0, 30.0);
const LINEAR_HALF: (f64, f64) = (50.0, 80.0);

/// Flare slope at which a linear window still fits on the canvas.
const LINEAR_FIT_SLOPE: f64 = 2.5;

/// Lateral lanes that streaks are drawn around.
const STREAK_LANES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Video-level structure shared by all frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoScene {
    pub window: ViewingWindow,
    pub label: Label,
    /// Normalized depth of the pleural line.
    pub pleura: f64,
    /// Lateral positions of streaks (positive) or band depth multiples
    /// (negative), in unit-square coordinates.
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub index: usize,
    pub id: String,
    pub video_id: String,
    pub scene: VideoScene,
}

fn sample_window(probe: ProbeKind, rng: &mut ItemRng) -> ViewingWindow {
    let c = CANVAS as f64;
    let top = rng.range(8.0, 30.0).round();
    let center = c / 2.0 + rng.range(-6.0, 6.0).round();
    let annotation = match probe {
        ProbeKind::Convex => {
            let slope = rng.range(CONVEX_SLOPE_RANGE.0, CONVEX_SLOPE_RANGE.1);
            let top_half = rng.range(CONVEX_TOP_HALF.0, CONVEX_TOP_HALF.1).round();
            let wanted = rng.range(170.0, 220.0);
            let max_half = c / 2.0 - 10.0;
            let depth = wanted.min((max_half - top_half) * slope).min(c - 6.0 - top);
            let run = depth / slope;
            [
                center - top_half,
                top,
                center - top_half - run,
                top + depth,
                center + top_half,
                top,
                center + top_half + run,
                top + depth,
            ]
        }
        ProbeKind::Linear => {
            let half = rng.range(LINEAR_HALF.0, LINEAR_HALF.1).round();
            // deep enough to look like a fan once flared at the default slope
            let depth = rng
                .range(170.0, 220.0)
                .min((c / 2.0 - 10.0 - half) * LINEAR_FIT_SLOPE)
                .min(c - 6.0 - top)
                .round();
            [
                center - half,
                top,
                center - half,
                top + depth,
                center + half,
                top,
                center + half,
                top + depth,
            ]
        }
    };
    ViewingWindow::from_annotation(annotation, probe).expect("generated window is valid")
}

fn sample_scene(probe: ProbeKind, label: Label, rng: &mut ItemRng) -> VideoScene {
    let window = sample_window(probe, rng);
    let pleura = rng.range(0.14, 0.18);
    let count = rng.int_inclusive(2, 4) as usize;
    let features = match label {
        Label::Positive => {
            let mut lanes = STREAK_LANES;
            rng.shuffle(&mut lanes);
            let mut picked: Vec<f64> = lanes[..count]
                .iter()
                .map(|&u| u + rng.range(-0.03, 0.03))
                .collect();
            picked.sort_by(f64::total_cmp);
            picked
        }
        Label::Negative => (2..2 + count).map(|m| m as f64).collect(),
    };
    VideoScene {
        window,
        label,
        pleura,
        features,
    }
}

/// Lays out probes, labels, videos and ids for `n` frames.
///
/// `round(n · convex_fraction)` frames are convex. Within each probe kind the
/// labels split as evenly as possible, so the overall label counts differ by
/// at most one.
pub fn plan(n: usize, convex_fraction: f64, seed: u64) -> Result<Vec<FramePlan>> {
    if n == 0 {
        return Err(Error::Image("phantom count must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&convex_fraction) {
        return Err(Error::Image(format!(
            "convex fraction {convex_fraction} outside [0, 1]"
        )));
    }
    let n_convex = ((n as f64 * convex_fraction).round() as usize).min(n);
    let n_linear = n - n_convex;
    let cells = [
        (ProbeKind::Convex, Label::Positive, n_convex.div_ceil(2)),
        (ProbeKind::Convex, Label::Negative, n_convex / 2),
        (ProbeKind::Linear, Label::Positive, n_linear / 2),
        (ProbeKind::Linear, Label::Negative, n_linear.div_ceil(2)),
    ];
    let mut videos: Vec<(ProbeKind, Label, usize)> = Vec::new();
    for (probe, label, count) in cells {
        let mut left = count;
        while left > 0 {
            let len = left.min(FRAMES_PER_VIDEO);
            videos.push((probe, label, len));
            left -= len;
        }
    }
    ItemRng::derive(seed, "phantom/videos", 0).shuffle(&mut videos);

    let mut frames = Vec::with_capacity(n);
    for (v, &(probe, label, len)) in videos.iter().enumerate() {
        let scene = sample_scene(
            probe,
            label,
            &mut ItemRng::derive(seed, "phantom/video", v as u64),
        );
        for _ in 0..len {
            let index = frames.len();
            frames.push(FramePlan {
                index,
                id: format!("f{index:05}"),
                video_id: format!("v{v:04}"),
                scene: scene.clone(),
            });
        }
    }
    Ok(frames)
}

fn bump(d: f64, width: f64) -> f64 {
    let t = d / width;
    (-t * t).exp()
}

/// Renders one frame.
pub fn render(frame: &FramePlan, seed: u64) -> GrayImage {
    let scene = &frame.scene;
    let w = &scene.window;
    let mask = render_mask(w, CANVAS, CANVAS).expect("generated window is valid");
    let mut rng = ItemRng::derive(seed, "phantom/frame", frame.index as u64);
    // small per-frame motion of the structures
    let drift = rng.range(-0.01, 0.01);
    let gain = rng.range(0.9, 1.1);

    let to_square = estimate_homography(
        &w.corners(),
        &[
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
        ],
    )
    .expect("generated window is in general position");
    let mut data = vec![0.0f32; CANVAS * CANVAS];
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            if !mask.get(x, y) {
                continue;
            }
            let Ok(q) = to_square.apply(Point2::new(x as f64 + 0.5, y as f64 + 0.5)) else {
                continue;
            };
            let (u, v) = (q.x, q.y);
            let pleura = scene.pleura + drift;
            let mut level = 0.18 + 0.45 * bump(v - pleura, 0.012);
            match scene.label {
                Label::Positive => {
                    if v > pleura {
                        let fade = 1.0 - 0.3 * v;
                        for &center in &scene.features {
                            level += 0.35 * fade * bump(u - center - drift, 0.11);
                        }
                    }
                }
                Label::Negative => {
                    for &m in &scene.features {
                        let at = m * pleura;
                        if at < 0.97 {
                            level += 0.35 * (1.0 - 0.4 * v) * bump(v - at, 0.02);
                        }
                    }
                }
            }
            let speckle = (0.35 * rng.standard_normal()).exp().clamp(0.3, 2.5);
            data[y * CANVAS + x] = ((gain * level * speckle) as f32).clamp(0.0, 1.0);
        }
    }
    GrayImage::new(CANVAS, CANVAS, data).expect("phantom intensities are in range")
}

pub fn record_for(frame: &FramePlan) -> ManifestRecord {
    ManifestRecord {
        id: frame.id.clone(),
        path: format!("{IMAGE_DIR}/{}.png", frame.id),
        probe: frame.scene.window.probe,
        label: frame.scene.label,
        video_id: Some(frame.video_id.clone()),
        window: Some(frame.scene.window.to_annotation()),
    }
}

/// Writes `n` PNG frames under `out_dir/images/` and `out_dir/manifest.jsonl`.
pub fn generate(
    n: usize,
    convex_fraction: f64,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestRecord>> {
    let out_dir = out_dir.as_ref();
    let frames = plan(n, convex_fraction, seed)?;
    let image_dir = out_dir.join(IMAGE_DIR);
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    frames
        .par_iter()
        .map(|f| save_image(&render(f, seed), out_dir.join(&record_for(f).path)))
        .collect::<Result<()>>()?;
    let records: Vec<ManifestRecord> = frames.iter().map(record_for).collect();
    write_manifest(&records, out_dir.join(MANIFEST_NAME))?;
    Ok(records)
}

/// Generates frames in memory, paired with their manifest records.
pub fn generate_in_memory(
    n: usize,
    convex_fraction: f64,
    seed: u64,
) -> Result<Vec<(ManifestRecord, GrayImage)>> {
    let frames = plan(n, convex_fraction, seed)?;
    Ok(frames
        .par_iter()
        .map(|f| (record_for(f), render(f, seed)))
        .collect())
}
