//! Discrete curve evolution: reduce a blob contour to a small polygon of its
//! most salient vertices, then prune short concave spurs.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::contour::Contour;
use crate::descriptor::is_convex;
use crate::error::{Error, Result};
use crate::imaging::Point2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DceParams {
    /// Vertex budget of the simplified polygon.
    pub target_vertices: usize,
    /// Concave vertices whose two edges are both shorter than this are pruned.
    pub branch_len_max: f64,
    /// Blobs smaller than this many pixels are not traced.
    pub min_area: usize,
}

impl Default for DceParams {
    fn default() -> Self {
        Self {
            target_vertices: 16,
            branch_len_max: 10.0,
            min_area: 50,
        }
    }
}

impl DceParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_vertices < 3 {
            return Err(Error::Config(format!(
                "dce.target_vertices must be at least 3, got {}",
                self.target_vertices
            )));
        }
        if !(self.branch_len_max >= 0.0) {
            return Err(Error::Config(format!(
                "dce.branch_len_max must be non-negative, got {}",
                self.branch_len_max
            )));
        }
        Ok(())
    }
}

/// Simplified blob outline, vertices in screen-clockwise order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonShape {
    vertices: Vec<Point2>,
    source_blob_id: usize,
    frame_index: usize,
}

impl PolygonShape {
    pub fn new(vertices: Vec<Point2>, source_blob_id: usize, frame_index: usize) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Degenerate(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let n = vertices.len();
        if (0..n).any(|i| vertices[i] == vertices[(i + 1) % n]) {
            return Err(Error::Degenerate("polygon has repeated consecutive vertices".into()));
        }
        Ok(Self {
            vertices,
            source_blob_id,
            frame_index,
        })
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn source_blob_id(&self) -> usize {
        self.source_blob_id
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }
}

/// DCE relevance of `v` between its current neighbours: turn angle (radians)
/// times `l1 * l2 / (l1 + l2)`. Zero when either arm has zero length.
pub fn relevance(prev: Point2, v: Point2, next: Point2) -> f64 {
    let a = v - prev;
    let b = next - v;
    let l1 = a.norm();
    let l2 = b.norm();
    if l1 == 0.0 || l2 == 0.0 {
        return 0.0;
    }
    let turn = a.cross(b).abs().atan2(a.dot(b));
    turn * l1 * l2 / (l1 + l2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Indices into `points` that survive evolution down to `target` vertices.
///
/// Each step removes the vertex of least relevance, lowest index first on
/// ties; only the two neighbours of a removed vertex are re-scored.
pub fn dce_indices(points: &[Point2], target: usize) -> Vec<usize> {
    let n = points.len();
    if n <= target || n < 3 {
        return (0..n).collect();
    }
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut score: Vec<f64> = (0..n)
        .map(|i| relevance(points[prev[i]], points[i], points[next[i]]))
        .collect();
    let mut queue: BTreeSet<Key> = score.iter().enumerate().map(|(i, &k)| Key(k, i)).collect();
    let mut alive = vec![true; n];
    let mut remaining = n;

    while remaining > target {
        let Key(_, i) = queue.pop_first().expect("queue tracks live vertices");
        alive[i] = false;
        remaining -= 1;
        let (p, q) = (prev[i], next[i]);
        next[p] = q;
        prev[q] = p;
        for j in [p, q] {
            queue.remove(&Key(score[j], j));
            score[j] = relevance(points[prev[j]], points[j], points[next[j]]);
            queue.insert(Key(score[j], j));
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// Simplifies `contour` to at most `target_vertices` vertices. Consecutive
/// repeats, which thin blob parts can leave behind, are dropped afterwards.
pub fn dce_simplify(contour: &Contour, target_vertices: usize) -> Result<PolygonShape> {
    if target_vertices < 3 {
        return Err(Error::InvalidInput(format!(
            "vertex budget must be at least 3, got {target_vertices}"
        )));
    }
    let pts = contour.points();
    if pts.len() < 3 {
        return Err(Error::InvalidInput("contour shorter than 3 points".into()));
    }
    let mut verts: Vec<Point2> = dce_indices(pts, target_vertices)
        .into_iter()
        .map(|i| pts[i])
        .collect();
    let mut i = 0;
    while i < verts.len() && verts.len() > 1 {
        let j = (i + 1) % verts.len();
        if verts[i] == verts[j] {
            verts.remove(j);
        } else {
            i += 1;
        }
    }
    PolygonShape::new(verts, contour.blob_id(), 0)
}

/// Repeatedly drops the first concave vertex (collinear counts as concave)
/// whose two edges are both shorter than `branch_len_max`, never going below
/// three vertices.
pub fn prune_concave_branches(poly: &PolygonShape, branch_len_max: f64) -> PolygonShape {
    let mut v = poly.vertices.clone();
    while v.len() > 3 {
        let n = v.len();
        let hit = (0..n).find(|&i| {
            let a = v[(i + n - 1) % n];
            let b = v[i];
            let c = v[(i + 1) % n];
            let concave = !is_convex(a, b, c).unwrap_or(false);
            concave && a.distance(b) < branch_len_max && b.distance(c) < branch_len_max
        });
        match hit {
            Some(i) => {
                v.remove(i);
                // Cutting a spike a-b-a leaves the two copies of a adjacent.
                let m = v.len();
                let before = (i + m - 1) % m;
                if m > 3 && v[before] == v[i % m] {
                    v.remove(i % m);
                }
            }
            None => break,
        }
    }
    PolygonShape {
        vertices: v,
        source_blob_id: poly.source_blob_id,
        frame_index: poly.frame_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::describe_polygon;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    /// Reference evolution: rescan every live vertex at each step.
    fn reference_dce(points: &[Point2], target: usize) -> Vec<usize> {
        let mut live: Vec<usize> = (0..points.len()).collect();
        while live.len() > target {
            let m = live.len();
            let mut best = 0;
            let mut best_k = f64::INFINITY;
            for j in 0..m {
                let k = relevance(
                    points[live[(j + m - 1) % m]],
                    points[live[j]],
                    points[live[(j + 1) % m]],
                );
                if k < best_k {
                    best_k = k;
                    best = j;
                }
            }
            live.remove(best);
        }
        live
    }

    fn star(n: usize, seed_radii: &[f64]) -> Vec<Point2> {
        (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                let r = seed_radii[i % seed_radii.len()];
                p((100.0 + r * t.cos()).round(), (100.0 + r * t.sin()).round())
            })
            .collect()
    }

    #[test]
    fn relevance_of_right_angle() {
        let k = relevance(p(0.0, 0.0), p(4.0, 0.0), p(4.0, 4.0));
        assert!((k - std::f64::consts::FRAC_PI_2 * 2.0).abs() < 1e-12);
        assert_eq!(relevance(p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)), 0.0);
        assert_eq!(relevance(p(0.0, 0.0), p(0.0, 0.0), p(2.0, 0.0)), 0.0);
    }

    #[test]
    fn triangle_is_kept() {
        let c = Contour::new(vec![p(0.0, 0.0), p(5.0, 0.0), p(0.0, 5.0)]).unwrap();
        let poly = dce_simplify(&c, 16).unwrap();
        assert_eq!(poly.vertices(), c.points());
    }

    #[test]
    fn square_midpoints_go_first() {
        let c = Contour::new(vec![
            p(0.0, 0.0),
            p(5.0, 0.0),
            p(10.0, 0.0),
            p(10.0, 5.0),
            p(10.0, 10.0),
            p(5.0, 10.0),
            p(0.0, 10.0),
            p(0.0, 5.0),
        ])
        .unwrap();
        let poly = dce_simplify(&c, 4).unwrap();
        assert_eq!(
            poly.vertices(),
            &[p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)]
        );
    }

    #[test]
    fn star_matches_reference() {
        let radii = [40.0, 18.0, 33.0, 25.0, 12.0, 37.0, 29.0];
        let pts = star(64, &radii);
        assert_eq!(dce_indices(&pts, 16), reference_dce(&pts, 16));
    }

    #[test]
    fn tiny_budget_is_rejected() {
        let c = Contour::new(vec![p(0.0, 0.0), p(5.0, 0.0), p(0.0, 5.0)]).unwrap();
        assert!(dce_simplify(&c, 2).is_err());
    }

    #[test]
    fn repeated_pixels_are_collapsed() {
        // A spur traced out and back repeats its base pixel.
        let c = Contour::new(vec![
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(2.0, 0.0),
            p(3.0, 0.0),
            p(2.0, 0.0),
            p(2.0, 1.0),
            p(1.0, 1.0),
            p(0.0, 1.0),
        ])
        .unwrap();
        for budget in 3..8 {
            let poly = dce_simplify(&c, budget).unwrap();
            let v = poly.vertices();
            for i in 0..v.len() {
                assert_ne!(v[i], v[(i + 1) % v.len()]);
            }
        }
    }

    #[test]
    fn convex_polygon_is_not_pruned() {
        let poly = PolygonShape::new(
            vec![p(0.0, 0.0), p(4.0, 0.0), p(6.0, 3.0), p(4.0, 6.0), p(0.0, 6.0)],
            0,
            0,
        )
        .unwrap();
        assert_eq!(prune_concave_branches(&poly, 10.0), poly);
    }

    #[test]
    fn notch_is_pruned() {
        let poly = PolygonShape::new(
            vec![
                p(0.0, 0.0),
                p(18.0, 0.0),
                p(20.0, 2.0),
                p(22.0, 0.0),
                p(40.0, 0.0),
                p(40.0, 40.0),
                p(0.0, 40.0),
            ],
            0,
            0,
        )
        .unwrap();
        let notch = p(20.0, 2.0);
        // Oracle: the notch is the only reflex vertex with both edges short.
        let d = describe_polygon(&poly);
        let v = poly.vertices();
        let n = v.len();
        let candidates: Vec<usize> = (0..n)
            .filter(|&i| {
                !d[i].convex && v[i].distance(v[(i + n - 1) % n]) < 10.0 && v[i].distance(v[(i + 1) % n]) < 10.0
            })
            .collect();
        assert_eq!(candidates, vec![2]);
        let out = prune_concave_branches(&poly, 10.0);
        assert_eq!(out.len(), 6);
        assert!(!out.vertices().contains(&notch));
    }

    #[test]
    fn long_bay_survives() {
        let poly = PolygonShape::new(
            vec![
                p(0.0, 0.0),
                p(15.0, 0.0),
                p(30.0, 20.0),
                p(45.0, 0.0),
                p(60.0, 0.0),
                p(60.0, 60.0),
                p(0.0, 60.0),
            ],
            0,
            0,
        )
        .unwrap();
        let d = describe_polygon(&poly);
        assert!(!d[2].convex);
        assert!(poly.vertices()[2].distance(poly.vertices()[1]) > 10.0);
        assert_eq!(prune_concave_branches(&poly, 10.0), poly);
    }

    fn random_contour() -> impl Strategy<Value = Vec<Point2>> {
        (8usize..120, proptest::collection::vec(5.0f64..60.0, 1..12))
            .prop_map(|(n, radii)| star(n, &radii))
            .prop_filter("distinct consecutive points", |pts| {
                (0..pts.len()).all(|i| pts[i] != pts[(i + 1) % pts.len()])
            })
    }

    proptest! {
        #[test]
        fn budget_is_respected_and_nested(pts in random_contour(), k in 3usize..24) {
            let small = dce_indices(&pts, k);
            let big = dce_indices(&pts, k + 1);
            prop_assert!(small.len() <= k);
            prop_assert!(small.iter().all(|i| big.contains(i)));
            prop_assert_eq!(&small, &reference_dce(&pts, k));
        }

        #[test]
        fn convex_contours_stay_convex(n in 6usize..60, k in 3usize..12) {
            let pts: Vec<Point2> = (0..n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    p(50.0 + 30.0 * t.cos(), 50.0 + 20.0 * t.sin())
                })
                .collect();
            let c = Contour::new(pts).unwrap();
            let poly = dce_simplify(&c, k).unwrap();
            prop_assert!(describe_polygon(&poly).iter().all(|d| d.convex));
        }

        #[test]
        fn pruning_is_idempotent(pts in random_contour(), lim in 1.0f64..40.0) {
            let c = Contour::new(pts).unwrap();
            let poly = dce_simplify(&c, 16).unwrap();
            let once = prune_concave_branches(&poly, lim);
            let twice = prune_concave_branches(&once, lim);
            prop_assert!(once.len() >= 3);
            prop_assert_eq!(once, twice);
        }
    }
}
