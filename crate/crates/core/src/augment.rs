//! Slope-resampling projective augmentation.
//!
//! One slope is drawn per image and applied to both lateral window edges:
//! convex frames draw around their own slope, linear frames around
//! [`AugmentPolicy::linear_center`], so rectangles become flared trapezoids.
//! The image is then warped by the homography taking the old corners to the
//! new ones.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    edge_slopes, estimate_homography, resample_window, EdgeSlope, Homography, ProbeKind,
    ViewingWindow,
};
use crate::raster::{warp_image, GrayImage, DEFAULT_FILL};
use crate::rng::ItemRng;

/// Maximum horizontal offset, in pixels, between the top and bottom corner of
/// an edge for a linear window to count as rectangular.
pub const RECTANGLE_TOLERANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub convex_sigma: f64,
    pub linear_center: f64,
    pub linear_sigma: f64,
    pub s_min: f64,
    pub max_retries: u32,
    /// Warp linear frames toward a convex-looking window. When false, linear
    /// frames pass through untouched.
    pub apply_linear_transform: bool,
    /// Jitter the window slope of convex frames. When false, convex frames
    /// pass through untouched.
    pub apply_convex_jitter: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            convex_sigma: 0.15,
            linear_center: 2.5,
            linear_sigma: 0.15,
            s_min: 0.5,
            max_retries: 10,
            apply_linear_transform: true,
            apply_convex_jitter: true,
        }
    }
}

impl AugmentPolicy {
    /// A policy that never changes an image.
    pub fn disabled() -> Self {
        AugmentPolicy {
            apply_linear_transform: false,
            apply_convex_jitter: false,
            ..AugmentPolicy::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPolicy(msg));
        for (name, v) in [
            ("convex_sigma", self.convex_sigma),
            ("linear_sigma", self.linear_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !(self.s_min.is_finite() && self.s_min > 0.0) {
            return bad(format!("s_min must be > 0, got {}", self.s_min));
        }
        if !(self.linear_center.is_finite() && self.linear_center >= self.s_min) {
            return bad(format!(
                "linear_center {} must be >= s_min {}",
                self.linear_center, self.s_min
            ));
        }
        if self.max_retries < 1 {
            return bad("max_retries must be >= 1".into());
        }
        Ok(())
    }

    /// Reads a policy file: JSON when the extension is `.json`, TOML otherwise.
    /// Missing keys keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let policy: AugmentPolicy = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::format(path, e))?
        } else {
            toml::from_str(&text).map_err(|e| Error::format(path, e))?
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Draws from `Normal(center, sigma)`, redrawing up to `max_retries` times
/// while the draw is below `s_min`, then clamping to `s_min`.
pub fn sample_slope(
    center: f64,
    sigma: f64,
    s_min: f64,
    max_retries: u32,
    rng: &mut ItemRng,
) -> EdgeSlope {
    let draw = if sigma == 0.0 {
        center
    } else {
        let mut v = rng.normal(center, sigma);
        let mut retries = 0;
        while v < s_min && retries < max_retries {
            v = rng.normal(center, sigma);
            retries += 1;
        }
        v
    };
    EdgeSlope::new(draw.max(s_min)).unwrap_or(EdgeSlope::VERTICAL)
}

/// The geometric half of one augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPlan {
    pub slope: EdgeSlope,
    pub window: ViewingWindow,
    pub homography: Homography,
}

fn plan_for_slope(
    w: &ViewingWindow,
    slope: EdgeSlope,
    policy: &AugmentPolicy,
) -> Result<AugmentPlan> {
    let window = resample_window(w, slope, policy.s_min)?;
    let homography = estimate_homography(&w.corners(), &window.corners())?;
    Ok(AugmentPlan {
        slope,
        window,
        homography,
    })
}

/// Center of the slope distribution for a convex window: the mean of its
/// finite edge slopes, or `linear_center` when both edges are vertical.
pub fn convex_center(w: &ViewingWindow, policy: &AugmentPolicy) -> Result<f64> {
    let (left, right) = edge_slopes(w)?;
    let finite: Vec<f64> = [left, right]
        .into_iter()
        .map(EdgeSlope::value)
        .filter(|v| v.is_finite())
        .collect();
    Ok(match finite.as_slice() {
        [a, b] => (a + b) / 2.0,
        [a] => *a,
        _ => {
            log::warn!(
                "convex window {:?} has vertical edges; centering slope at {}",
                w.to_annotation(),
                policy.linear_center
            );
            policy.linear_center
        }
    })
}

pub fn plan_convex(
    w: &ViewingWindow,
    policy: &AugmentPolicy,
    rng: &mut ItemRng,
) -> Result<AugmentPlan> {
    policy.validate()?;
    if w.probe != ProbeKind::Convex {
        return Err(probe_mismatch(w, ProbeKind::Convex));
    }
    let center = convex_center(w, policy)?;
    let slope = sample_slope(
        center,
        policy.convex_sigma,
        policy.s_min,
        policy.max_retries,
        rng,
    );
    plan_for_slope(w, slope, policy)
}

pub fn plan_linear(
    w: &ViewingWindow,
    policy: &AugmentPolicy,
    rng: &mut ItemRng,
) -> Result<AugmentPlan> {
    policy.validate()?;
    if w.probe != ProbeKind::Linear {
        return Err(probe_mismatch(w, ProbeKind::Linear));
    }
    w.validate()?;
    if !w.is_rectangular(RECTANGLE_TOLERANCE) {
        return Err(Error::InvalidWindow {
            reason: format!("linear window is not rectangular within {RECTANGLE_TOLERANCE} px"),
            corners: format!("{:?}", w.to_annotation()),
        });
    }
    let slope = sample_slope(
        policy.linear_center,
        policy.linear_sigma,
        policy.s_min,
        policy.max_retries,
        rng,
    );
    plan_for_slope(w, slope, policy)
}

fn probe_mismatch(w: &ViewingWindow, expected: ProbeKind) -> Error {
    Error::InvalidWindow {
        reason: format!("expected a {expected} window, got {}", w.probe),
        corners: format!("{:?}", w.to_annotation()),
    }
}

fn apply_plan(img: &GrayImage, plan: &AugmentPlan) -> Result<(GrayImage, ViewingWindow)> {
    let image = if plan.homography == Homography::IDENTITY {
        img.clone()
    } else {
        warp_image(img, &plan.homography, DEFAULT_FILL)?
    };
    Ok((image, plan.window))
}

/// Jitters the fan angle of a convex frame.
pub fn augment_convex(
    img: &GrayImage,
    w: &ViewingWindow,
    policy: &AugmentPolicy,
    rng: &mut ItemRng,
) -> Result<(GrayImage, ViewingWindow)> {
    apply_plan(img, &plan_convex(w, policy, rng)?)
}

/// Warps a rectangular linear frame into a flared trapezoid.
pub fn augment_linear(
    img: &GrayImage,
    w: &ViewingWindow,
    policy: &AugmentPolicy,
    rng: &mut ItemRng,
) -> Result<(GrayImage, ViewingWindow)> {
    apply_plan(img, &plan_linear(w, policy, rng)?)
}

/// Dispatches on probe kind, honoring the policy's pass-through switches.
pub fn augment(
    img: &GrayImage,
    w: &ViewingWindow,
    policy: &AugmentPolicy,
    rng: &mut ItemRng,
) -> Result<(GrayImage, ViewingWindow)> {
    match w.probe {
        ProbeKind::Convex if policy.apply_convex_jitter => augment_convex(img, w, policy, rng),
        ProbeKind::Linear if policy.apply_linear_transform => augment_linear(img, w, policy, rng),
        _ => {
            w.validate()?;
            Ok((img.clone(), *w))
        }
    }
}
