//! Image and geometry primitives shared by every pipeline stage.
//!
//! Coordinates follow raster order: x grows rightward, y grows downward and
//! the origin sits on the center of the top-left pixel. Orientation words
//! ("clockwise", "convex") elsewhere in the crate are relative to this
//! convention, i.e. they describe what is seen on screen.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Single-channel 8-bit frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
    frame_index: usize,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>, frame_index: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "frame must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "frame buffer holds {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            frame_index,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8, frame_index: usize) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], frame_index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }
}

/// Foreground map, one flag per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask holds {} flags, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Builds a mask from a per-pixel predicate.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but treats everything outside the mask as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the cross product of `(self, 0)` and `(other, 0)`.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// 2x3 affine map from infrared to visible coordinates, stored as
/// `[[a, b, tx], [c, d, ty]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    m: [[f64; 3]; 2],
}

impl AffineTransform {
    pub fn new(m: [[f64; 3]; 2]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "affine entries must be finite: {m:?}"
            )));
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidInput(format!(
                "affine linear part is singular: {m:?}"
            )));
        }
        Ok(Self { m })
    }

    /// Builds from the flat row order `a, b, tx, c, d, ty`.
    pub fn from_row_major(v: [f64; 6]) -> Result<Self> {
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]]])
    }

    pub const fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty]],
        }
    }

    /// Rotation by `angle_deg` and uniform `scale` about `center`, followed by
    /// a translation.
    pub fn similarity_about(
        center: Point2,
        angle_deg: f64,
        scale: f64,
        translation: Point2,
    ) -> Result<Self> {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let a = scale * c;
        let b = -scale * s;
        let cc = scale * s;
        let d = scale * c;
        let tx = center.x - (a * center.x + b * center.y) + translation.x;
        let ty = center.y - (cc * center.x + d * center.y) + translation.y;
        Self::new([[a, b, tx], [cc, d, ty]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 2] {
        self.m
    }

    pub fn to_row_major(&self) -> [f64; 6] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]]
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.m;
        Point2::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2],
        )
    }

    pub fn inverse(&self) -> AffineTransform {
        let [[a, b, tx], [c, d, ty]] = self.m;
        let det = a * d - b * c;
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        AffineTransform {
            m: [
                [ia, ib, -(ia * tx + ib * ty)],
                [ic, id, -(ic * tx + id * ty)],
            ],
        }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &AffineTransform) -> AffineTransform {
        let l = &self.m;
        let r = &first.m;
        let mut m = [[0.0; 3]; 2];
        for i in 0..2 {
            for j in 0..3 {
                m[i][j] = l[i][0] * r[0][j] + l[i][1] * r[1][j];
            }
            m[i][2] += l[i][2];
        }
        AffineTransform { m }
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        self.to_row_major()
            .iter()
            .zip(other.to_row_major())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn apply_transform(p: Point2, t: &AffineTransform) -> Point2 {
    t.apply(p)
}

/// Nearest pixel index for a coordinate; halves round up.
#[inline]
pub(crate) fn nearest(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Warps `src` by `t` into an `out_w` x `out_h` mask using inverse mapping and
/// nearest-neighbour sampling.
pub fn warp_mask(
    src: &BinaryMask,
    t: &AffineTransform,
    out_w: usize,
    out_h: usize,
) -> Result<BinaryMask> {
    let det = t.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::InvalidInput("cannot warp by a singular transform".into()));
    }
    let inv = t.inverse();
    let [[a, b, tx], [c, d, ty]] = inv.matrix();
    let mut out = BinaryMask::new(out_w, out_h);
    if src.is_empty() {
        return Ok(out);
    }
    for y in 0..out_h {
        let yf = y as f64;
        // Row start and per-column increments of the source location.
        let sx0 = b * yf + tx;
        let sy0 = d * yf + ty;
        let row = &mut out.bits[y * out_w..(y + 1) * out_w];
        for (x, bit) in row.iter_mut().enumerate() {
            let xf = x as f64;
            let sx = nearest(a * xf + sx0);
            let sy = nearest(c * xf + sy0);
            *bit = src.get_signed(sx, sy);
        }
    }
    Ok(out)
}

pub fn mask_intersection_count(a: &BinaryMask, b: &BinaryMask) -> Result<usize> {
    a.check_same_dims(b)?;
    Ok(a.bits.iter().zip(&b.bits).filter(|(&p, &q)| p && q).count())
}

pub fn mask_union_count(a: &BinaryMask, b: &BinaryMask) -> Result<usize> {
    a.check_same_dims(b)?;
    Ok(a.bits.iter().zip(&b.bits).filter(|(&p, &q)| p || q).count())
}
