//! Per-vertex shape descriptor: convexity sign and interior angle.
//!
//! Vertices are expected in screen-clockwise order. Under that order a vertex
//! where the outline turns right (outward) has a positive cross product z and
//! is convex; z = 0 (collinear) counts as concave.

use crate::dce::PolygonShape;
use crate::error::{Error, Result};
use crate::imaging::Point2;

/// Interior angles of degenerate vertices are clamped this far inside (0, 180).
const ANGLE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexDescriptor {
    pub position: Point2,
    pub convex: bool,
    /// Interior angle in degrees.
    pub theta: f64,
    pub polygon_id: usize,
    pub vertex_index: usize,
}

fn distinct(a: Point2, b: Point2) -> bool {
    a != b
}

/// z component of `(p2 - p1) x (p3 - p2)`.
pub fn convexity_z(p1: Point2, p2: Point2, p3: Point2) -> Result<f64> {
    if !(distinct(p1, p2) && distinct(p2, p3) && distinct(p1, p3)) {
        return Err(Error::InvalidInput(format!(
            "convexity needs three distinct points, got {p1:?}, {p2:?}, {p3:?}"
        )));
    }
    Ok(z_unchecked(p1, p2, p3))
}

fn z_unchecked(p1: Point2, p2: Point2, p3: Point2) -> f64 {
    (p2.x - p1.x) * (p3.y - p2.y) - (p2.y - p1.y) * (p3.x - p2.x)
}

pub fn is_convex(p1: Point2, p2: Point2, p3: Point2) -> Result<bool> {
    Ok(convexity_z(p1, p2, p3)? > 0.0)
}

/// Angle at `p2` between the arms to `p1` and `p3`, in degrees, by the law of
/// cosines.
///
/// `acos` of the ratio `n / (2ab)` with `n = a² + b² - c²` is evaluated as
/// `atan2(sqrt(4a²b² - n²), n)`. The two agree exactly (a ratio outside
/// [-1, 1] clamps to 0 or 180 degrees in both), but this form keeps full
/// precision near 0 and 180 degrees, where `acos` loses about half the digits.
pub fn interior_angle(p1: Point2, p2: Point2, p3: Point2) -> Result<f64> {
    let a2 = square_len(p1 - p2);
    let b2 = square_len(p3 - p2);
    if a2 == 0.0 || b2 == 0.0 {
        return Err(Error::InvalidInput(format!(
            "interior angle needs non-zero arms at {p2:?}"
        )));
    }
    let c2 = square_len(p3 - p1);
    let n = a2 + b2 - c2;
    let sin_scaled = (4.0 * a2 * b2 - n * n).max(0.0).sqrt();
    Ok(sin_scaled.atan2(n).to_degrees())
}

fn square_len(p: Point2) -> f64 {
    p.x * p.x + p.y * p.y
}

/// One descriptor per vertex, using cyclic neighbours.
pub fn describe_polygon(poly: &PolygonShape) -> Vec<VertexDescriptor> {
    let v = poly.vertices();
    let n = v.len();
    (0..n)
        .map(|i| {
            let prev = v[(i + n - 1) % n];
            let cur = v[i];
            let next = v[(i + 1) % n];
            let convex = is_convex(prev, cur, next).unwrap_or(false);
            let theta = interior_angle(prev, cur, next)
                .unwrap_or(180.0)
                .clamp(ANGLE_EPS, 180.0 - ANGLE_EPS);
            VertexDescriptor {
                position: cur,
                convex,
                theta,
                polygon_id: poly.source_blob_id(),
                vertex_index: i,
            }
        })
        .collect()
}
