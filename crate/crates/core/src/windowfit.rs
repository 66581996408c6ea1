//! Viewing-window estimation from pixel content.
//!
//! The frame is binarized at a threshold, the leftmost and rightmost bright
//! columns of every occupied row are collected, and a line `x = a + b·y` is
//! fitted to each side by least squares over the middle rows of the occupied
//! band. The curved near-field top and far-field arc of a convex fan fall
//! outside that band. Corners are where the fitted lines meet the first and
//! last occupied rows.

use crate::error::{Error, Result};
use crate::geometry::{Point2, ProbeKind, ViewingWindow};
use crate::raster::GrayImage;

pub const DEFAULT_THRESHOLD: f32 = 0.04;
/// Minimum fraction of above-threshold pixels.
pub const MIN_OCCUPANCY: f64 = 0.05;
/// Fraction of occupied rows, centered, used for the line fits.
pub const FIT_BAND: f64 = 0.6;
/// Both edges steeper than this (|dy/dx|) classify the frame as linear.
pub const LINEAR_SLOPE_CUTOFF: f64 = 20.0;

/// Least-squares fit of `x = intercept + gradient·y`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EdgeLine {
    intercept: f64,
    gradient: f64,
}

impl EdgeLine {
    fn fit(samples: &[(f64, f64)]) -> Option<EdgeLine> {
        let n = samples.len() as f64;
        let my = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let mx = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let (mut syy, mut sxy) = (0.0, 0.0);
        for &(y, x) in samples {
            syy += (y - my) * (y - my);
            sxy += (y - my) * (x - mx);
        }
        if !(syy > 0.0) {
            return None;
        }
        let gradient = sxy / syy;
        Some(EdgeLine {
            intercept: mx - gradient * my,
            gradient,
        })
    }

    fn x_at(&self, y: f64) -> f64 {
        self.intercept + self.gradient * y
    }

    /// |dy/dx| of the line; infinite for a vertical edge.
    fn steepness(&self) -> f64 {
        1.0 / self.gradient.abs()
    }
}

/// Estimates the window corners and probe kind of a frame.
pub fn estimate_window(img: &GrayImage, threshold: f32) -> Result<ViewingWindow> {
    let (w, h) = (img.width(), img.height());
    let data = img.data();

    let mut occupied = 0usize;
    // (row, leftmost column, rightmost column)
    let mut rows: Vec<(usize, usize, usize)> = Vec::new();
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        let mut extent: Option<(usize, usize)> = None;
        for (x, &v) in row.iter().enumerate() {
            if v > threshold {
                occupied += 1;
                extent = Some(match extent {
                    None => (x, x),
                    Some((lo, _)) => (lo, x),
                });
            }
        }
        if let Some((lo, hi)) = extent {
            rows.push((y, lo, hi));
        }
    }

    let occupancy = occupied as f64 / (w * h) as f64;
    if occupancy < MIN_OCCUPANCY {
        return Err(Error::NoWindowFound(format!(
            "{:.2}% of pixels above {threshold}, need {:.0}%",
            occupancy * 100.0,
            MIN_OCCUPANCY * 100.0
        )));
    }

    let n = rows.len();
    let skip = ((1.0 - FIT_BAND) / 2.0 * n as f64).floor() as usize;
    let band = &rows[skip..n - skip];
    if band.len() < 3 {
        return Err(Error::EstimationFailed(format!(
            "only {} rows in the fitting band",
            band.len()
        )));
    }

    // left boundary sits at the left edge of the leftmost bright pixel, right
    // boundary at the right edge of the rightmost one
    let left_samples: Vec<(f64, f64)> = band
        .iter()
        .map(|&(y, lo, _)| (y as f64 + 0.5, lo as f64))
        .collect();
    let right_samples: Vec<(f64, f64)> = band
        .iter()
        .map(|&(y, _, hi)| (y as f64 + 0.5, hi as f64 + 1.0))
        .collect();
    let fit_err = || Error::EstimationFailed("degenerate edge fit".into());
    let left = EdgeLine::fit(&left_samples).ok_or_else(fit_err)?;
    let right = EdgeLine::fit(&right_samples).ok_or_else(fit_err)?;

    let top = rows[0].0 as f64;
    let bottom = rows[n - 1].0 as f64 + 1.0;
    if left.x_at(top) >= right.x_at(top) || left.x_at(bottom) >= right.x_at(bottom) {
        return Err(Error::EstimationFailed(
            "fitted edges cross inside the occupied band".into(),
        ));
    }

    let probe = if left.steepness() > LINEAR_SLOPE_CUTOFF && right.steepness() > LINEAR_SLOPE_CUTOFF
    {
        ProbeKind::Linear
    } else {
        ProbeKind::Convex
    };

    ViewingWindow::new(
        Point2::new(left.x_at(top), top),
        Point2::new(left.x_at(bottom), bottom),
        Point2::new(right.x_at(top), top),
        Point2::new(right.x_at(bottom), bottom),
        probe,
    )
    .map_err(|e| Error::EstimationFailed(e.to_string()))
}
