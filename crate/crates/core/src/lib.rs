//! Projective viewing-window augmentation for ultrasound frames.
//!
//! Linear-probe frames are warped so their rectangular viewing window becomes
//! a flared, convex-looking trapezoid; convex-probe frames get their fan angle
//! jittered. Every augmentation is a homography estimated from four window
//! corners and applied by inverse mapping with bilinear sampling.

pub mod augment;
pub mod baseline;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod phantom;
pub mod raster;
pub mod rng;
pub mod windowfit;

pub use error::{Error, Result};
