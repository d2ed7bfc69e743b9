//! Frame-by-frame registration: segmentation, polygon features, matching,
//! temporal buffering, robust fitting and overlap-gated selection.

use std::fmt::Write as _;
use std::path::Path;

use crate::bgsub::{clean_mask, BackgroundModel};
use crate::config::{InputSource, PipelineConfig, RegistrationConfig};
use crate::contour::extract_outer_contours;
use crate::dce::{dce_simplify, prune_concave_branches, DceParams};
use crate::error::{Error, Result};
use crate::eval::{alignment_error, fmt_g, report, GroundTruthSet, ReportRow};
use crate::imaging::{warp_mask, AffineTransform, BinaryMask, GrayFrame};
use crate::matching::{best_polygon_pairing, match_keypoints, MatchParams, MatchPair, PolygonFeatures, TemporalBuffer};
use crate::synth::{collect_truth, generate_frame, SceneSpec};
use crate::transform::{ransac_affine, update_registration, RansacParams, RegistrationState};
use crate::{io, SceneParams};

/// Produces one frame's keypoint matches from the polygons of both streams.
pub trait PolygonMatcher: Send + Sync {
    fn match_frame(&self, ir: &[PolygonFeatures], vis: &[PolygonFeatures], params: &MatchParams) -> Vec<MatchPair>;
}

/// Matches vertices one polygon pair at a time and keeps the matches of the
/// selected one-to-one polygon pairings.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerPolygonMatcher;

impl PolygonMatcher for PerPolygonMatcher {
    fn match_frame(&self, ir: &[PolygonFeatures], vis: &[PolygonFeatures], params: &MatchParams) -> Vec<MatchPair> {
        best_polygon_pairing(ir, vis, params)
            .into_iter()
            .flat_map(|pm| pm.matches)
            .collect()
    }
}

/// Baseline that pools every vertex of every polygon and matches them in one
/// go, ignoring which blob a vertex belongs to.
#[derive(Debug, Clone, Copy, Default)]
pub struct GlobalMatcher;

impl PolygonMatcher for GlobalMatcher {
    fn match_frame(&self, ir: &[PolygonFeatures], vis: &[PolygonFeatures], params: &MatchParams) -> Vec<MatchPair> {
        let pool = |fs: &[PolygonFeatures]| fs.iter().flat_map(|f| f.descriptors.iter().copied()).collect::<Vec<_>>();
        let m = match_keypoints(&pool(ir), &pool(vis), params);
        if m.len() >= params.min_matches_per_polygon.max(1) {
            m
        } else {
            Vec::new()
        }
    }
}

/// Traces, simplifies and describes every sufficiently large blob of `mask`.
pub fn extract_polygons(mask: &BinaryMask, dce: &DceParams, frame_index: usize) -> Vec<PolygonFeatures> {
    extract_outer_contours(mask, dce.min_area)
        .iter()
        .filter_map(|c| dce_simplify(c, dce.target_vertices).ok())
        .map(|p| PolygonFeatures::new(prune_concave_branches(&p.with_frame_index(frame_index), dce.branch_len_max)))
        .collect()
}

/// What happened on one frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame_index: usize,
    pub ir_mask: BinaryMask,
    pub vis_mask: BinaryMask,
    pub ir_polygons: Vec<PolygonFeatures>,
    pub vis_polygons: Vec<PolygonFeatures>,
    /// Matches found on this frame alone.
    pub matches: Vec<MatchPair>,
    /// RANSAC output on the buffered matches, if any.
    pub candidate: Option<AffineTransform>,
    pub candidate_br: Option<f64>,
    pub updated: bool,
    /// Registration state after this frame.
    pub state: RegistrationState,
}

/// Stateful per-sequence registration loop.
pub struct Registrar {
    cfg: RegistrationConfig,
    bg_ir: BackgroundModel,
    bg_vis: BackgroundModel,
    buffer: TemporalBuffer,
    state: RegistrationState,
    matcher: Box<dyn PolygonMatcher>,
    dims: (usize, usize),
}

impl Registrar {
    pub fn new(width: usize, height: usize, cfg: RegistrationConfig) -> Result<Self> {
        Self::with_matcher(width, height, cfg, Box::new(PerPolygonMatcher))
    }

    pub fn with_matcher(
        width: usize,
        height: usize,
        cfg: RegistrationConfig,
        matcher: Box<dyn PolygonMatcher>,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            bg_ir: BackgroundModel::new(width, height, cfg.bg)?,
            bg_vis: BackgroundModel::new(width, height, cfg.bg)?,
            buffer: TemporalBuffer::new(cfg.buffer_capacity_frames)?,
            state: RegistrationState::default(),
            matcher,
            dims: (width, height),
            cfg,
        })
    }

    pub fn state(&self) -> &RegistrationState {
        &self.state
    }

    pub fn buffer(&self) -> &TemporalBuffer {
        &self.buffer
    }

    pub fn process(&mut self, ir: &GrayFrame, vis: &GrayFrame) -> Result<FrameOutput> {
        for f in [ir, vis] {
            if f.dims() != self.dims {
                return Err(Error::DimensionMismatch {
                    expected: self.dims,
                    found: f.dims(),
                });
            }
        }
        let frame_index = vis.frame_index();
        let cfg = &self.cfg;
        let (bg_ir, bg_vis) = (&mut self.bg_ir, &mut self.bg_vis);
        let stream = |bg: &mut BackgroundModel, frame: &GrayFrame| -> Result<(BinaryMask, Vec<PolygonFeatures>)> {
            let mask = clean_mask(&bg.update_and_segment(frame)?, cfg.bg.min_blob_area);
            let polys = extract_polygons(&mask, &cfg.dce, frame_index);
            Ok((mask, polys))
        };
        let (ir_res, vis_res) = rayon::join(|| stream(bg_ir, ir), || stream(bg_vis, vis));
        let (ir_mask, ir_polygons) = ir_res?;
        let (vis_mask, vis_polygons) = vis_res?;

        let mut matches = self.matcher.match_frame(&ir_polygons, &vis_polygons, &cfg.matching);
        for m in &mut matches {
            m.frame_index = frame_index;
        }
        self.buffer.push(matches.clone());

        let mut out = FrameOutput {
            frame_index,
            ir_mask,
            vis_mask,
            ir_polygons,
            vis_polygons,
            matches,
            candidate: None,
            candidate_br: None,
            updated: false,
            state: self.state,
        };
        if self.buffer.match_count() < 3 {
            return Ok(out);
        }
        let params = RansacParams {
            rng_seed: frame_seed(cfg.ransac.rng_seed, frame_index),
            ..cfg.ransac
        };
        let fit = match ransac_affine(&self.buffer.all_matches(), &params) {
            Ok(fit) => fit,
            Err(Error::InsufficientData { .. } | Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        if let Some(fit) = fit {
            let upd = update_registration(&self.state, &fit.transform, &out.ir_mask, &out.vis_mask, frame_index)?;
            self.state = upd.state;
            out.candidate = Some(fit.transform);
            out.candidate_br = Some(upd.candidate_br);
            out.updated = upd.updated;
            out.state = upd.state;
        }
        Ok(out)
    }
}

/// Mixes the configured seed with the frame index (splitmix64 finaliser).
pub fn frame_seed(seed: u64, frame_index: usize) -> u64 {
    let mut z = seed ^ (frame_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One row of the transform CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformRow {
    pub frame_index: usize,
    pub transform: Option<AffineTransform>,
    pub br: f64,
    pub updated: bool,
}

impl From<&FrameOutput> for TransformRow {
    fn from(o: &FrameOutput) -> Self {
        TransformRow {
            frame_index: o.frame_index,
            transform: o.state.best_transform,
            br: o.state.best_br,
            updated: o.updated,
        }
    }
}

pub const TRANSFORM_HEADER: &str = "frame,a,b,tx,c,d,ty,BR,updated";

/// CSV with the best transform after each frame; frames before the first
/// accepted transform carry `none` in every matrix column.
pub fn transforms_csv(rows: &[TransformRow]) -> String {
    let mut out = format!("{TRANSFORM_HEADER}\n");
    for r in rows {
        let m = match r.transform {
            Some(t) => t.to_row_major().map(fmt_g).join(","),
            None => ["none"; 6].join(","),
        };
        let _ = writeln!(out, "{},{m},{},{}", r.frame_index, fmt_g(r.br), u8::from(r.updated));
    }
    out
}

/// Parses [`transforms_csv`] output.
pub fn parse_transforms_csv(text: &str, path: &Path) -> Result<Vec<TransformRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == TRANSFORM_HEADER {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(err(format!("expected 9 fields, found {}", f.len())));
        }
        let frame_index = f[0].parse().map_err(|_| err(format!("bad frame {:?}", f[0])))?;
        let transform = if f[1..7].iter().all(|s| *s == "none") {
            None
        } else {
            let mut m = [0.0; 6];
            for (slot, s) in m.iter_mut().zip(&f[1..7]) {
                *slot = s.parse().map_err(|_| err(format!("bad number {s:?}")))?;
            }
            Some(AffineTransform::from_row_major(m).map_err(|e| err(e.to_string()))?)
        };
        let br = f[7].parse().map_err(|_| err(format!("bad BR {:?}", f[7])))?;
        let updated = match f[8] {
            "0" => false,
            "1" => true,
            s => return Err(err(format!("bad updated flag {s:?}"))),
        };
        rows.push(TransformRow {
            frame_index,
            transform,
            br,
            updated,
        });
    }
    Ok(rows)
}

/// Per-frame evaluation rows for every frame that has both a transform and
/// ground truth.
pub fn evaluate_rows(rows: &[TransformRow], gt: &GroundTruthSet, label: &str) -> Result<Vec<ReportRow>> {
    let mut out = Vec::new();
    for r in rows {
        let (Some(t), Some(pairs)) = (r.transform, gt.frame(r.frame_index)) else {
            continue;
        };
        let mut one = GroundTruthSet::default();
        one.push_frame(r.frame_index, pairs.to_vec());
        out.push(ReportRow {
            label: label.to_string(),
            frame: r.frame_index,
            br: r.br,
            error: alignment_error(&one, &t)?,
        });
    }
    Ok(out)
}

/// Result of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub rows: Vec<TransformRow>,
    pub final_state: RegistrationState,
}

/// Runs registration over the configured input and writes `transforms.csv`,
/// optional overlays under `overlays/`, and `report.csv` when ground truth is
/// available. A synthetic scene supplies its own ground truth unless a file is
/// given.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    cfg.validate()?;
    let (vis, ir, synth_gt) = match &cfg.input {
        InputSource::Dirs { vis, ir } => (
            io::load_frames(vis, cfg.frames)?,
            io::load_frames(ir, cfg.frames)?,
            None,
        ),
        InputSource::Synth(path) => {
            let spec = SceneSpec::layout(&SceneParams::load(path)?).map_err(|e| Error::Config(e.to_string()))?;
            let last = cfg.frames.map_or(spec.frames, |r| (r.last + 1).min(spec.frames));
            let first = cfg.frames.map_or(0, |r| r.first);
            let frames = (first..last).map(|f| generate_frame(&spec, f)).collect::<Result<Vec<_>>>()?;
            let gt = collect_truth(frames.iter().map(|f| (f.vis.frame_index(), f.truth.as_slice())), |_| true);
            let vis = frames.iter().map(|f| f.vis.clone()).collect();
            let ir = frames.into_iter().map(|f| f.ir).collect();
            (vis, ir, Some(gt))
        }
    };
    if vis.len() != ir.len() {
        return Err(Error::StreamMismatch {
            vis: vis.len(),
            ir: ir.len(),
        });
    }
    if vis.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let gt = match &cfg.ground_truth {
        Some(p) => Some(GroundTruthSet::load(p)?),
        None => synth_gt,
    };

    let (w, h) = vis[0].dims();
    let mut reg = Registrar::new(w, h, cfg.registration.clone())?;
    let mut rows = Vec::with_capacity(vis.len());
    let overlay_dir = cfg.out_dir.join("overlays");
    for (v, i) in vis.iter().zip(&ir) {
        let out = reg.process(i, v)?;
        if cfg.overlays {
            let t = out.state.best_transform.unwrap_or_default();
            let warped = warp_mask(&out.ir_mask, &t, w, h)?;
            io::save_overlay(
                &overlay_dir.join(io::frame_file_name(out.frame_index, "png")),
                &warped,
                &out.vis_mask,
            )?;
        }
        rows.push(TransformRow::from(&out));
    }

    io::write_text(&cfg.out_dir.join("transforms.csv"), &transforms_csv(&rows))?;
    if let Some(gt) = gt {
        let report_rows = evaluate_rows(&rows, &gt, &cfg.label)?;
        io::write_text(&cfg.out_dir.join("report.csv"), &report(&report_rows))?;
    }
    Ok(PipelineSummary {
        final_state: *reg.state(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let t = AffineTransform::from_row_major([1.0, 0.1, 3.25, -0.2, 0.9, 1e-7]).unwrap();
        let rows = vec![
            TransformRow {
                frame_index: 0,
                transform: None,
                br: 0.0,
                updated: false,
            },
            TransformRow {
                frame_index: 1,
                transform: Some(t),
                br: 0.8125,
                updated: true,
            },
        ];
        let text = transforms_csv(&rows);
        assert_eq!(
            text,
            "frame,a,b,tx,c,d,ty,BR,updated\n0,none,none,none,none,none,none,0,0\n1,1,0.1,3.25,-0.2,0.9,1e-7,0.8125,1\n"
        );
        assert_eq!(parse_transforms_csv(&text, Path::new("t")).unwrap(), rows);
        assert!(parse_transforms_csv("0,1,2\n", Path::new("t")).is_err());
    }

    #[test]
    fn frame_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|f| frame_seed(0, f)).collect();
        assert_eq!(s.len(), 1000);
        assert_eq!(frame_seed(5, 3), frame_seed(5, 3));
    }
}
