//! Viewing-window corner model, edge slopes, corner resampling, and the
//! exact four-point homography.
//!
//! Coordinates are pixels with `y` increasing downward. Window corners live in
//! the continuous plane where pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
//!
//! The slope of a lateral window edge is its vertical depth divided by how far
//! the bottom corner sits *outward* from the top corner. A vertical edge (the
//! rectangular window of a linear probe) has slope `+inf`; smaller slopes flare
//! wider.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the triangle-area collinearity test.
const COLLINEAR_EPS: f64 = 1e-9;
/// Minimum |det| of a normalized homography.
const SINGULAR_DET: f64 = 1e-12;
/// Minimum |denominator| when mapping a point.
const INFINITY_DENOM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Convex,
    Linear,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 2] = [ProbeKind::Convex, ProbeKind::Linear];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeKind::Convex => "convex",
            ProbeKind::Linear => "linear",
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "convex" => Ok(ProbeKind::Convex),
            "linear" => Ok(ProbeKind::Linear),
            other => Err(format!(
                "unknown probe kind {other:?} (allowed: convex, linear)"
            )),
        }
    }
}

/// Depth over outward run of one lateral window edge; `+inf` for a vertical
/// or inward-leaning edge.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EdgeSlope(f64);

impl EdgeSlope {
    pub const VERTICAL: EdgeSlope = EdgeSlope(f64::INFINITY);

    /// Returns `None` unless `value > 0` (NaN rejected, `+inf` allowed).
    pub fn new(value: f64) -> Option<Self> {
        (value > 0.0).then_some(EdgeSlope(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_vertical(self) -> bool {
        self.0.is_infinite()
    }
}

/// The four corners of an ultrasound viewing window.
///
/// `p1_*` are the top corners (probe face), `p2_*` the bottom corners.
/// Fields are public so annotations can be inspected freely; every operation
/// re-validates with [`ViewingWindow::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewingWindow {
    pub p1_left: Point2,
    pub p2_left: Point2,
    pub p1_right: Point2,
    pub p2_right: Point2,
    pub probe: ProbeKind,
}

impl ViewingWindow {
    pub fn new(
        p1_left: Point2,
        p2_left: Point2,
        p1_right: Point2,
        p2_right: Point2,
        probe: ProbeKind,
    ) -> Result<Self> {
        let w = ViewingWindow {
            p1_left,
            p2_left,
            p1_right,
            p2_right,
            probe,
        };
        w.validate()?;
        Ok(w)
    }

    /// Builds a window from the 8-number annotation
    /// `[p1lx, p1ly, p2lx, p2ly, p1rx, p1ry, p2rx, p2ry]`.
    pub fn from_annotation(a: [f64; 8], probe: ProbeKind) -> Result<Self> {
        ViewingWindow::new(
            Point2::new(a[0], a[1]),
            Point2::new(a[2], a[3]),
            Point2::new(a[4], a[5]),
            Point2::new(a[6], a[7]),
            probe,
        )
    }

    pub fn to_annotation(&self) -> [f64; 8] {
        [
            self.p1_left.x,
            self.p1_left.y,
            self.p2_left.x,
            self.p2_left.y,
            self.p1_right.x,
            self.p1_right.y,
            self.p2_right.x,
            self.p2_right.y,
        ]
    }

    /// Corners in annotation order: top-left, bottom-left, top-right, bottom-right.
    pub fn corners(&self) -> [Point2; 4] {
        [self.p1_left, self.p2_left, self.p1_right, self.p2_right]
    }

    /// Corners in boundary order (top-left, top-right, bottom-right, bottom-left).
    pub fn polygon(&self) -> [Point2; 4] {
        [self.p1_left, self.p1_right, self.p2_right, self.p2_left]
    }

    pub fn area(&self) -> f64 {
        let poly = self.polygon();
        let mut twice = 0.0;
        for i in 0..4 {
            let a = poly[i];
            let b = poly[(i + 1) % 4];
            twice += a.x * b.y - b.x * a.y;
        }
        0.5 * twice.abs()
    }

    /// True when both lateral edges are vertical within `tol` pixels.
    pub fn is_rectangular(&self, tol: f64) -> bool {
        (self.p1_left.x - self.p2_left.x).abs() <= tol
            && (self.p1_right.x - self.p2_right.x).abs() <= tol
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let t = |p: Point2| Point2::new(p.x + dx, p.y + dy);
        ViewingWindow {
            p1_left: t(self.p1_left),
            p2_left: t(self.p2_left),
            p1_right: t(self.p1_right),
            p2_right: t(self.p2_right),
            probe: self.probe,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidWindow {
                reason: reason.to_string(),
                corners: self.corner_dump(),
            })
        };
        if !self.corners().iter().all(Point2::is_finite) {
            return fail("non-finite corner");
        }
        if !(self.p1_left.y < self.p2_left.y && self.p1_right.y < self.p2_right.y) {
            return fail("top corners must lie above bottom corners");
        }
        if !(self.p1_left.x < self.p1_right.x && self.p2_left.x < self.p2_right.x) {
            return fail("left corners must lie left of right corners");
        }
        if find_collinear(&self.corners()).is_some() {
            return fail("three corners are collinear");
        }
        Ok(())
    }

    fn corner_dump(&self) -> String {
        format!(
            "p1_left={} p2_left={} p1_right={} p2_right={}",
            self.p1_left, self.p2_left, self.p1_right, self.p2_right
        )
    }
}

/// Returns the first triple of indices whose points are collinear, if any.
fn find_collinear(pts: &[Point2; 4]) -> Option<[usize; 3]> {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.into_iter().find(|&[i, j, k]| {
        let (a, b, c) = (pts[i], pts[j], pts[k]);
        let (ux, uy) = (b.x - a.x, b.y - a.y);
        let (vx, vy) = (c.x - a.x, c.y - a.y);
        let cross = ux * vy - uy * vx;
        let scale = (ux * ux + uy * uy).max(vx * vx + vy * vy);
        !(cross.abs() > COLLINEAR_EPS * scale)
    })
}

/// Old slopes of the left and right edges.
pub fn edge_slopes(w: &ViewingWindow) -> Result<(EdgeSlope, EdgeSlope)> {
    w.validate()?;
    let slope = |depth: f64, run: f64| {
        if run <= 0.0 {
            EdgeSlope::VERTICAL
        } else {
            EdgeSlope(depth / run)
        }
    };
    let left = slope(w.p2_left.y - w.p1_left.y, w.p1_left.x - w.p2_left.x);
    let right = slope(w.p2_right.y - w.p1_right.y, w.p2_right.x - w.p1_right.x);
    Ok((left, right))
}

/// Moves the bottom corners so both lateral edges have slope `new_slope`.
///
/// Top corners and the bottom-row depths are held fixed. An edge whose current
/// slope already equals `new_slope` keeps its corner untouched.
pub fn resample_window(
    w: &ViewingWindow,
    new_slope: EdgeSlope,
    min_slope: f64,
) -> Result<ViewingWindow> {
    let (old_left, old_right) = edge_slopes(w)?;
    let s = new_slope.value();
    if s < min_slope {
        return Err(Error::SlopeTooSmall {
            slope: s,
            min: min_slope,
        });
    }
    let mut out = *w;
    if old_left != new_slope {
        out.p2_left.x = w.p1_left.x - (w.p2_left.y - w.p1_left.y) / s;
    }
    if old_right != new_slope {
        out.p2_right.x = w.p1_right.x + (w.p2_right.y - w.p1_right.y) / s;
    }
    out.validate()?;
    Ok(out)
}

/// A normalized 3x3 projective transform, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Normalizes `m` and checks invertibility.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        if !m.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::NotInvertible { det: f64::NAN });
        }
        let h = Homography { m: normalize(m) };
        let det = h.determinant();
        if !(det.abs() > SINGULAR_DET) {
            return Err(Error::NotInvertible { det });
        }
        Ok(h)
    }

    pub fn from_row_major(v: [f64; 9]) -> Result<Self> {
        Homography::from_matrix([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    /// Uniform scale about the origin.
    pub fn scale(factor: f64) -> Result<Self> {
        Homography::from_matrix([[factor, 0.0, 0.0], [0.0, factor, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.m)
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        apply_homography(self, p)
    }

    pub fn invert(&self) -> Result<Homography> {
        invert(self)
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn compose(&self, inner: &Homography) -> Result<Homography> {
        let (a, b) = (&self.m, &inner.m);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Homography::from_matrix(out)
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = Error;

    fn try_from(v: [f64; 9]) -> Result<Self> {
        Homography::from_row_major(v)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_row_major()
    }
}

fn normalize(mut m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let scale = if m[2][2].abs() > 1e-9 {
        m[2][2]
    } else {
        m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    };
    if scale != 1.0 {
        m.iter_mut().flatten().for_each(|v| *v /= scale);
    }
    m
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Projective action `(x, y) -> ((m00 x + m01 y + m02) / d, (m10 x + m11 y + m12) / d)`.
pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2> {
    let m = &h.m;
    let d = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    if !(d.abs() > INFINITY_DENOM) {
        return Err(Error::AtInfinity { x: p.x, y: p.y });
    }
    Ok(Point2::new(
        (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / d,
        (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / d,
    ))
}

/// Inverse via the adjugate.
pub fn invert(h: &Homography) -> Result<Homography> {
    let m = &h.m;
    let det = det3(m);
    if !(det.abs() > SINGULAR_DET) {
        return Err(Error::NotInvertible { det });
    }
    let adj = [
        [
            m[1][1] * m[2][2] - m[1][2] * m[2][1],
            m[0][2] * m[2][1] - m[0][1] * m[2][2],
            m[0][1] * m[1][2] - m[0][2] * m[1][1],
        ],
        [
            m[1][2] * m[2][0] - m[1][0] * m[2][2],
            m[0][0] * m[2][2] - m[0][2] * m[2][0],
            m[0][2] * m[1][0] - m[0][0] * m[1][2],
        ],
        [
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
            m[0][1] * m[2][0] - m[0][0] * m[2][1],
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
        ],
    ];
    let inv = adj.map(|row| row.map(|v| v / det));
    Homography::from_matrix(inv)
}

/// Exact four-point direct linear transform with `m22 = 1`.
///
/// Solves the 8x8 system by Gaussian elimination with partial pivoting.
/// Identical quadruples short-circuit to the identity.
pub fn estimate_homography(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Homography> {
    for (side, pts) in [("source", src), ("destination", dst)] {
        if !pts.iter().all(Point2::is_finite) {
            return Err(Error::InvalidWindow {
                reason: format!("non-finite {side} point"),
                corners: format!("{pts:?}"),
            });
        }
        if let Some(indices) = find_collinear(pts) {
            return Err(Error::Collinear { side, indices });
        }
    }
    if src == dst {
        return Ok(Homography::IDENTITY);
    }

    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = (src[i].x, src[i].y);
        let (u, v) = (dst[i].x, dst[i].y);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
    }
    let h = solve_augmented(&mut a)?;
    Homography::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
}

/// Solves an augmented `N x (N+1)` system in place.
fn solve_augmented<const N: usize, const M: usize>(a: &mut [[f64; M]; N]) -> Result<[f64; N]> {
    debug_assert_eq!(M, N + 1);
    let magnitude = a
        .iter()
        .flat_map(|row| row[..N].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tiny = magnitude * 1e-14;

    for col in 0..N {
        let pivot_row = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        let pivot = a[pivot_row][col];
        if !(pivot.abs() > tiny) {
            return Err(Error::SingularSystem { column: col, pivot });
        }
        a.swap(col, pivot_row);
        for row in col + 1..N {
            let factor = a[row][col] / pivot;
            if factor != 0.0 {
                for k in col..M {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
    }

    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut acc = a[row][N];
        for k in row + 1..N {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn flared_window() -> ViewingWindow {
        ViewingWindow::new(
            p(40.0, 10.0),
            p(10.0, 90.0),
            p(60.0, 10.0),
            p(90.0, 90.0),
            ProbeKind::Convex,
        )
        .unwrap()
    }

    fn unit_square() -> [Point2; 4] {
        [p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0), p(1.0, 1.0)]
    }

    #[test]
    fn slope_of_flared_edge() {
        let (left, right) = edge_slopes(&flared_window()).unwrap();
        assert!((left.value() - 80.0 / 30.0).abs() < 1e-12);
        assert_eq!(left, right);
    }

    #[test]
    fn vertical_edge_has_infinite_slope() {
        let w = ViewingWindow::new(
            p(40.0, 10.0),
            p(40.0, 90.0),
            p(60.0, 10.0),
            p(60.0, 90.0),
            ProbeKind::Linear,
        )
        .unwrap();
        let (left, right) = edge_slopes(&w).unwrap();
        assert!(left.is_vertical() && right.is_vertical());
    }

    #[test]
    fn inward_leaning_edge_reports_infinity() {
        let w = ViewingWindow::new(
            p(40.0, 10.0),
            p(45.0, 90.0),
            p(60.0, 10.0),
            p(70.0, 90.0),
            ProbeKind::Convex,
        )
        .unwrap();
        let (left, right) = edge_slopes(&w).unwrap();
        assert!(left.is_vertical());
        assert_eq!(right.value(), 8.0);
    }

    #[test]
    fn invalid_window_dumps_corners() {
        let err = ViewingWindow::new(
            p(40.0, 90.0),
            p(10.0, 10.0),
            p(60.0, 10.0),
            p(90.0, 90.0),
            ProbeKind::Convex,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("p1_left=(40, 90)"), "{msg}");
    }

    #[test]
    fn collinear_corners_rejected() {
        // bottom-left lies on the line through both top corners' extension
        let err = ViewingWindow::new(
            p(0.0, 0.0),
            p(10.0, 10.0),
            p(5.0, 5.0),
            p(20.0, 30.0),
            ProbeKind::Convex,
        );
        assert!(err.is_err());
    }

    #[test]
    fn resample_with_old_slope_is_identity() {
        let w = flared_window();
        let (left, _) = edge_slopes(&w).unwrap();
        let out = resample_window(&w, left, 0.5).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn resample_to_two_and_a_half() {
        let w = flared_window();
        let out = resample_window(&w, EdgeSlope::new(2.5).unwrap(), 0.5).unwrap();
        assert_eq!(out.p2_left, p(8.0, 90.0));
        assert_eq!(out.p2_right, p(92.0, 90.0));
        assert_eq!(out.p1_left, w.p1_left);
        assert_eq!(out.p1_right, w.p1_right);
    }

    #[test]
    fn resample_rectangle_flares_it() {
        let w = ViewingWindow::new(
            p(40.0, 10.0),
            p(40.0, 90.0),
            p(60.0, 10.0),
            p(60.0, 90.0),
            ProbeKind::Linear,
        )
        .unwrap();
        let out = resample_window(&w, EdgeSlope::new(2.5).unwrap(), 0.5).unwrap();
        assert_eq!(out.p2_left, p(8.0, 90.0));
        assert_eq!(out.p2_right, p(92.0, 90.0));
        assert_eq!(out.probe, ProbeKind::Linear);
    }

    #[test]
    fn resample_rejects_small_slope() {
        let w = flared_window();
        let err = resample_window(&w, EdgeSlope::new(0.3).unwrap(), 0.5).unwrap_err();
        assert!(matches!(err, Error::SlopeTooSmall { .. }));
        let upright = resample_window(&w, EdgeSlope::VERTICAL, 0.5).unwrap();
        assert!(upright.is_rectangular(0.0));
    }

    #[test]
    fn identity_from_equal_quadruples() {
        let h = estimate_homography(&unit_square(), &unit_square()).unwrap();
        assert_eq!(h, Homography::IDENTITY);
    }

    #[test]
    fn translation_recovered() {
        let dst = unit_square().map(|q| p(q.x + 5.0, q.y));
        let h = estimate_homography(&unit_square(), &dst).unwrap();
        let expected = Homography::translation(5.0, 0.0).to_row_major();
        for (a, b) in h.to_row_major().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trapezoid_maps_corners_and_edge_midpoint() {
        let dst = [p(0.0, 0.0), p(1.0, 0.0), p(-0.5, 1.0), p(1.5, 1.0)];
        let h = estimate_homography(&unit_square(), &dst).unwrap();
        for (s, d) in unit_square().iter().zip(&dst) {
            let q = h.apply(*s).unwrap();
            assert!(q.distance(d) < 1e-9);
        }
        let mid = h.apply(p(0.5, 1.0)).unwrap();
        assert!(mid.distance(&p(0.5, 1.0)) < 1e-9);
    }

    #[test]
    fn collinear_source_names_points() {
        let src = [p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0), p(0.0, 1.0)];
        match estimate_homography(&src, &unit_square()) {
            Err(Error::Collinear { side, indices }) => {
                assert_eq!(side, "source");
                assert_eq!(indices, [0, 1, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn apply_identity_and_translation() {
        assert_eq!(
            Homography::IDENTITY.apply(p(3.5, 7.0)).unwrap(),
            p(3.5, 7.0)
        );
        assert_eq!(
            Homography::translation(5.0, 0.0)
                .apply(p(1.0, 1.0))
                .unwrap(),
            p(6.0, 1.0)
        );
    }

    #[test]
    fn apply_at_infinity_errors() {
        let h = Homography::from_row_major([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            h.apply(p(-1.0, 3.0)),
            Err(Error::AtInfinity { .. })
        ));
    }

    #[test]
    fn invert_simple_cases() {
        assert_eq!(Homography::IDENTITY.invert().unwrap(), Homography::IDENTITY);
        assert_eq!(
            Homography::translation(5.0, 0.0).invert().unwrap(),
            Homography::translation(-5.0, 0.0)
        );
    }

    #[test]
    fn singular_matrix_rejected() {
        let err =
            Homography::from_row_major([1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotInvertible { .. }));
    }

    #[test]
    fn normalization_falls_back_to_frobenius() {
        let h = Homography::from_row_major([1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let norm: f64 = h.to_row_major().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let h = Homography::from_row_major([2.0, 0.0, 4.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(h, Homography::translation(2.0, 0.0));
    }

    #[test]
    fn json_is_nine_numbers() {
        let h = Homography::translation(5.0, -1.0);
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, "[1.0,0.0,5.0,0.0,1.0,-1.0,0.0,0.0,1.0]");
        let back: Homography = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn annotation_order_is_fixed() {
        let w = flared_window();
        assert_eq!(
            w.to_annotation(),
            [40.0, 10.0, 10.0, 90.0, 60.0, 10.0, 90.0, 90.0]
        );
        assert_eq!(
            ViewingWindow::from_annotation(w.to_annotation(), w.probe).unwrap(),
            w
        );
    }
}
