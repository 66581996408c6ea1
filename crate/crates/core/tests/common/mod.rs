//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use fanwarp::geometry::{estimate_homography, Homography, Point2, ViewingWindow};
use fanwarp::raster::GrayImage;
use fanwarp::rng::ItemRng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

/// Per-pixel reference: inverse-map the pixel center, then weight the four
/// neighbours bilinearly.
pub fn oracle_warp(img: &GrayImage, h: &Homography, fill: f32) -> GrayImage {
    let inv = h.invert().unwrap();
    let (w, ht) = (img.width(), img.height());
    let mut out = GrayImage::filled(w, ht, fill).unwrap();
    for y in 0..ht {
        for x in 0..w {
            let Ok(s) = inv.apply(p(x as f64 + 0.5, y as f64 + 0.5)) else {
                continue;
            };
            let (sx, sy) = (s.x - 0.5, s.y - 0.5);
            if !(sx >= 0.0 && sx <= (w - 1) as f64 && sy >= 0.0 && sy <= (ht - 1) as f64) {
                continue;
            }
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(ht - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let v = |xx: usize, yy: usize| f64::from(img.get(xx, yy));
            let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
            let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
            out.set(
                x,
                y,
                ((top * (1.0 - fy) + bottom * fy) as f32).clamp(0.0, 1.0),
            );
        }
    }
    out
}

pub fn noise_image(w: usize, h: usize, rng: &mut ItemRng) -> GrayImage {
    let data = (0..w * h).map(|_| rng.uniform() as f32).collect();
    GrayImage::new(w, h, data).unwrap()
}

/// Maps the frame corners to randomly displaced copies of themselves.
pub fn random_homography(w: usize, h: usize, rng: &mut ItemRng) -> Homography {
    let (wf, hf) = (w as f64, h as f64);
    let src = [p(0.0, 0.0), p(0.0, hf), p(wf, 0.0), p(wf, hf)];
    let jitter = 0.3 * wf.min(hf);
    let dst = src.map(|q| {
        p(
            q.x + rng.range(-jitter, jitter),
            q.y + rng.range(-jitter, jitter),
        )
    });
    estimate_homography(&src, &dst).unwrap()
}

/// Pair counting: a positive above a negative scores 1, a tie 1/2.
pub fn auc_oracle(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positives[i] && !positives[j] {
                pairs += 1;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Scores on a coarse grid so that ties are common.
pub fn scored_set(rng: &mut ItemRng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.int_inclusive(2, 200) as usize;
    let levels = rng.int_inclusive(2, 40);
    let scores = (0..n)
        .map(|_| rng.int_inclusive(0, levels) as f64 / levels as f64)
        .collect();
    let positives = (0..n).map(|_| rng.uniform() < 0.4).collect();
    (scores, positives)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Two-sided KS statistic against a normal truncated below at `lo`.
pub fn ks_truncated_normal(samples: &mut [f64], mean: f64, sd: f64, lo: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let normal = Normal::new(mean, sd).unwrap();
    let below = normal.cdf(lo);
    let cdf = |x: f64| ((normal.cdf(x) - below) / (1.0 - below)).max(0.0);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn max_corner_error(a: &ViewingWindow, b: &ViewingWindow) -> f64 {
    a.corners()
        .iter()
        .zip(b.corners())
        .map(|(x, y)| x.distance(&y))
        .fold(0.0, f64::max)
}
