//! Connected components and outer-border tracing on binary masks.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, Point2};

/// 8-neighbour offsets in screen-clockwise order, starting west.
const RING: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// 8-connected component labelling.
#[derive(Debug, Clone)]
pub struct Components {
    /// Per-pixel label, 0 for background, `k + 1` for component `k`.
    pub labels: Vec<u32>,
    pub areas: Vec<usize>,
    /// First pixel of each component in raster order.
    pub seeds: Vec<(usize, usize)>,
}

pub fn connected_components(mask: &BinaryMask) -> Components {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut seeds = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels[y * w + x] != 0 {
                continue;
            }
            let label = areas.len() as u32 + 1;
            labels[y * w + x] = label;
            queue.push_back((x, y));
            let mut area = 0;
            while let Some((cx, cy)) = queue.pop_front() {
                area += 1;
                for &(dx, dy) in &RING {
                    let nx = cx as i64 + dx;
                    let ny = cy as i64 + dy;
                    if mask.get_signed(nx, ny) {
                        let i = ny as usize * w + nx as usize;
                        if labels[i] == 0 {
                            labels[i] = label;
                            queue.push_back((nx as usize, ny as usize));
                        }
                    }
                }
            }
            areas.push(area);
            seeds.push((x, y));
        }
    }
    Components {
        labels,
        areas,
        seeds,
    }
}

/// Closed outer boundary of a blob, traversed clockwise on screen.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Point2>,
    blob_id: usize,
}

impl Contour {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        Self::with_blob_id(points, 0)
    }

    pub fn with_blob_id(points: Vec<Point2>, blob_id: usize) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "a contour needs at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("contour points must be finite".into()));
        }
        Ok(Self { points, blob_id })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn blob_id(&self) -> usize {
        self.blob_id
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }
}

/// Shoelace area measured with y pointing up, so loops that run clockwise on
/// screen come out negative.
pub fn signed_area(points: &[Point2]) -> f64 {
    let n = points.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        acc += q.x * p.y - p.x * q.y;
    }
    acc / 2.0
}

/// Traces the outer border of every 8-connected blob with at least `min_area`
/// pixels. Hole borders are never produced. Blobs whose border has fewer than
/// three points are skipped.
pub fn extract_outer_contours(mask: &BinaryMask, min_area: usize) -> Vec<Contour> {
    let cc = connected_components(mask);
    let w = mask.width();
    let mut out = Vec::new();
    for (k, (&area, &seed)) in cc.areas.iter().zip(&cc.seeds).enumerate() {
        if area < min_area.max(1) {
            continue;
        }
        let label = k as u32 + 1;
        let inside = |x: i64, y: i64| {
            x >= 0
                && y >= 0
                && (x as usize) < w
                && (y as usize) < mask.height()
                && cc.labels[y as usize * w + x as usize] == label
        };
        let pts = trace_border(seed, inside);
        if pts.len() >= 3 {
            let points = pts
                .into_iter()
                .map(|(x, y)| Point2::new(x as f64, y as f64))
                .collect();
            out.push(Contour::with_blob_id(points, k).expect("length checked"));
        }
    }
    out
}

/// Moore-neighbour tracing from the first raster pixel of a blob, stopping
/// when the first move is about to repeat.
fn trace_border(start: (usize, usize), inside: impl Fn(i64, i64) -> bool) -> Vec<(i64, i64)> {
    let start = (start.0 as i64, start.1 as i64);
    // The raster-first pixel always has background to its west.
    let first = match next_step(start, 0, &inside) {
        Some(step) => step,
        None => return vec![start],
    };
    let mut pts = vec![start];
    let (mut cur, mut back) = first;
    // Every boundary pixel is entered at most 4 times; bound the walk anyway.
    let limit = 8 * 1024 * 1024;
    while pts.len() < limit {
        let step = next_step(cur, back, &inside).expect("blob pixel has a neighbour");
        if cur == start && step.0 == first.0 {
            break;
        }
        pts.push(cur);
        (cur, back) = step;
    }
    pts
}

/// From `cur`, whose background neighbour lies in ring direction `back`,
/// sweeps clockwise for the next blob pixel. Returns that pixel and the ring
/// direction, seen from it, of the last background cell examined.
fn next_step(
    cur: (i64, i64),
    back: usize,
    inside: &impl Fn(i64, i64) -> bool,
) -> Option<((i64, i64), usize)> {
    for k in 1..=8 {
        let d = (back + k) % 8;
        let (dx, dy) = RING[d];
        let cand = (cur.0 + dx, cur.1 + dy);
        if inside(cand.0, cand.1) {
            let (px, py) = RING[(d + 7) % 8];
            let rel = (cur.0 + px - cand.0, cur.1 + py - cand.1);
            let nb = RING
                .iter()
                .position(|&r| r == rel)
                .expect("consecutive ring cells are 4-adjacent");
            return Some((cand, nb));
        }
    }
    None
}
