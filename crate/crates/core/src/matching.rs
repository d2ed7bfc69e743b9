//! Keypoint correspondence between infrared and visible polygons, and the
//! FIFO buffer that pools matches over recent frames.

use std::collections::VecDeque;

use crate::dce::PolygonShape;
use crate::descriptor::VertexDescriptor;
use crate::error::{Error, Result};
use crate::imaging::Point2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Largest accepted keypoint distance, pixels.
    pub ed_max: f64,
    /// Largest accepted interior-angle difference, degrees.
    pub etheta_max: f64,
    /// Weight of the distance term in the match score.
    pub alpha: f64,
    /// Polygon pairings with fewer matches are discarded.
    pub min_matches_per_polygon: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            ed_max: 65.0,
            etheta_max: 40.0,
            alpha: 1.0,
            min_matches_per_polygon: 3,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ed_max > 0.0) || !(self.etheta_max > 0.0) || !(self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "match parameters out of range: ed_max={}, etheta_max={}, alpha={}",
                self.ed_max, self.etheta_max, self.alpha
            )));
        }
        Ok(())
    }

    /// `alpha * ed / ed_max + etheta / etheta_max`; lower is better.
    pub fn score(&self, ed: f64, etheta: f64) -> f64 {
        self.alpha * ed / self.ed_max + etheta / self.etheta_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub p_ir: Point2,
    pub p_vis: Point2,
    pub score: f64,
    pub frame_index: usize,
}

/// Descriptor-level candidate, kept internal so ties can be broken by ids.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    ir: usize,
    vis: usize,
}

fn id_key(d: &VertexDescriptor) -> (usize, usize) {
    (d.polygon_id, d.vertex_index)
}

/// Matches convex keypoints of one infrared polygon against one visible
/// polygon.
///
/// Pairs must pass both the distance and the angle gate. Survivors are taken
/// greedily by ascending score so each keypoint on either side is used at
/// most once; ties go to the lower (polygon id, vertex index).
pub fn match_keypoints(
    ir: &[VertexDescriptor],
    vis: &[VertexDescriptor],
    params: &MatchParams,
) -> Vec<MatchPair> {
    let mut cands = Vec::new();
    for (i, a) in ir.iter().enumerate() {
        if !a.convex {
            continue;
        }
        for (j, b) in vis.iter().enumerate() {
            if !b.convex {
                continue;
            }
            let ed = a.position.distance(b.position);
            let eth = (a.theta - b.theta).abs();
            if ed <= params.ed_max && eth <= params.etheta_max {
                cands.push(Candidate {
                    score: params.score(ed, eth),
                    ir: i,
                    vis: j,
                });
            }
        }
    }
    cands.sort_by(|x, y| {
        x.score
            .total_cmp(&y.score)
            .then_with(|| id_key(&ir[x.ir]).cmp(&id_key(&ir[y.ir])))
            .then_with(|| id_key(&vis[x.vis]).cmp(&id_key(&vis[y.vis])))
    });

    let mut ir_used = vec![false; ir.len()];
    let mut vis_used = vec![false; vis.len()];
    let mut out = Vec::new();
    for c in cands {
        if ir_used[c.ir] || vis_used[c.vis] {
            continue;
        }
        ir_used[c.ir] = true;
        vis_used[c.vis] = true;
        out.push(MatchPair {
            p_ir: ir[c.ir].position,
            p_vis: vis[c.vis].position,
            score: c.score,
            frame_index: 0,
        });
    }
    out
}

/// A polygon together with its vertex descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonFeatures {
    pub polygon: PolygonShape,
    pub descriptors: Vec<VertexDescriptor>,
}

impl PolygonFeatures {
    pub fn new(polygon: PolygonShape) -> Self {
        let descriptors = crate::descriptor::describe_polygon(&polygon);
        Self {
            polygon,
            descriptors,
        }
    }

    pub fn id(&self) -> usize {
        self.polygon.source_blob_id()
    }
}

/// Surviving pairing of one infrared with one visible polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonMatch {
    /// Index into the infrared polygon list.
    pub ir_index: usize,
    /// Index into the visible polygon list.
    pub vis_index: usize,
    pub matches: Vec<MatchPair>,
}

impl PolygonMatch {
    pub fn mean_score(&self) -> f64 {
        if self.matches.is_empty() {
            return f64::INFINITY;
        }
        self.matches.iter().map(|m| m.score).sum::<f64>() / self.matches.len() as f64
    }
}

/// Runs [`match_keypoints`] on every infrared/visible polygon pair and keeps a
/// one-to-one set of pairings, best first: more matches wins, then lower mean
/// score, then lower polygon ids. Pairings with fewer than
/// `min_matches_per_polygon` matches are dropped.
pub fn best_polygon_pairing(
    ir: &[PolygonFeatures],
    vis: &[PolygonFeatures],
    params: &MatchParams,
) -> Vec<PolygonMatch> {
    let mut all = Vec::new();
    for (i, a) in ir.iter().enumerate() {
        for (j, b) in vis.iter().enumerate() {
            let matches = match_keypoints(&a.descriptors, &b.descriptors, params);
            if matches.len() >= params.min_matches_per_polygon.max(1) {
                all.push(PolygonMatch {
                    ir_index: i,
                    vis_index: j,
                    matches,
                });
            }
        }
    }
    all.sort_by(|x, y| {
        y.matches
            .len()
            .cmp(&x.matches.len())
            .then_with(|| x.mean_score().total_cmp(&y.mean_score()))
            .then_with(|| ir[x.ir_index].id().cmp(&ir[y.ir_index].id()))
            .then_with(|| vis[x.vis_index].id().cmp(&vis[y.vis_index].id()))
            .then_with(|| (x.ir_index, x.vis_index).cmp(&(y.ir_index, y.vis_index)))
    });

    let mut ir_used = vec![false; ir.len()];
    let mut vis_used = vec![false; vis.len()];
    let mut out = Vec::new();
    for pm in all {
        if ir_used[pm.ir_index] || vis_used[pm.vis_index] {
            continue;
        }
        ir_used[pm.ir_index] = true;
        vis_used[pm.vis_index] = true;
        out.push(pm);
    }
    out
}

/// FIFO of per-frame match buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBuffer {
    id: usize,
    capacity_frames: usize,
    buckets: VecDeque<Vec<MatchPair>>,
}

impl TemporalBuffer {
    pub fn new(capacity_frames: usize) -> Result<Self> {
        Self::with_id(0, capacity_frames)
    }

    /// Buffers carry an id so several of them (one per tracked object, say)
    /// can coexist.
    pub fn with_id(id: usize, capacity_frames: usize) -> Result<Self> {
        if capacity_frames == 0 {
            return Err(Error::Config("buffer.capacity_frames must be at least 1".into()));
        }
        Ok(Self {
            id,
            capacity_frames,
            buckets: VecDeque::with_capacity(capacity_frames + 1),
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn capacity_frames(&self) -> usize {
        self.capacity_frames
    }

    /// Number of stored frame buckets.
    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn buckets(&self) -> impl Iterator<Item = &[MatchPair]> {
        self.buckets.iter().map(Vec::as_slice)
    }

    pub fn match_count(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    /// Appends one frame's matches, evicting the oldest bucket when full.
    pub fn push(&mut self, frame_matches: Vec<MatchPair>) {
        self.buckets.push_back(frame_matches);
        while self.buckets.len() > self.capacity_frames {
            self.buckets.pop_front();
        }
    }

    /// All stored matches, oldest frame first.
    pub fn all_matches(&self) -> Vec<MatchPair> {
        self.buckets.iter().flatten().copied().collect()
    }
}
