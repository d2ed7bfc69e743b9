//! Synthetic paired infrared/visible sequences with planted ground truth.
//!
//! Targets are person-like silhouettes (elliptic head and torso, rectangular
//! limbs) defined in visible coordinates. The infrared stream renders the set
//! of pixels whose image under the target's plane transform falls inside the
//! visible silhouette, so warping infrared by that transform reproduces the
//! visible footprint up to rasterisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::GroundTruthSet;
use crate::imaging::{AffineTransform, BinaryMask, GrayFrame, Point2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartShape {
    Ellipse {
        center: Point2,
        rx: f64,
        ry: f64,
        angle: f64,
    },
    Rect {
        center: Point2,
        half_w: f64,
        half_h: f64,
        angle: f64,
    },
}

impl PartShape {
    fn center(&self) -> Point2 {
        match *self {
            PartShape::Ellipse { center, .. } | PartShape::Rect { center, .. } => center,
        }
    }

    fn local(&self, p: Point2) -> Point2 {
        let (center, angle) = match *self {
            PartShape::Ellipse { center, angle, .. } | PartShape::Rect { center, angle, .. } => {
                (center, angle)
            }
        };
        let d = p - center;
        let (s, c) = angle.sin_cos();
        Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let q = self.local(p);
        match *self {
            PartShape::Ellipse { rx, ry, .. } => (q.x / rx).powi(2) + (q.y / ry).powi(2) <= 1.0,
            PartShape::Rect { half_w, half_h, .. } => q.x.abs() <= half_w && q.y.abs() <= half_h,
        }
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Point2, Point2) {
        let (center, ex, ey, angle) = match *self {
            PartShape::Ellipse {
                center,
                rx,
                ry,
                angle,
            } => (center, rx, ry, angle),
            PartShape::Rect {
                center,
                half_w,
                half_h,
                angle,
            } => (center, half_w, half_h, angle),
        };
        let (s, c) = angle.sin_cos();
        let (hx, hy) = match self {
            PartShape::Ellipse { .. } => (
                ((ex * c).powi(2) + (ey * s).powi(2)).sqrt(),
                ((ex * s).powi(2) + (ey * c).powi(2)).sqrt(),
            ),
            PartShape::Rect { .. } => (ex * c.abs() + ey * s.abs(), ex * s.abs() + ey * c.abs()),
        };
        (
            Point2::new(center.x - hx, center.y - hy),
            Point2::new(center.x + hx, center.y + hy),
        )
    }
}

/// Person-like template; `height` is in pixels, limb angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Silhouette {
    pub height: f64,
    pub arm_angle: f64,
    pub arm_swing: f64,
    pub leg_angle: f64,
    pub leg_swing: f64,
    /// Radians per frame of the limb swing.
    pub swing_rate: f64,
    pub phase: f64,
}

/// Index of each part in [`Silhouette::parts`].
pub const PART_HEAD: usize = 0;
pub const PART_TORSO: usize = 1;
pub const LIMB_PARTS: [usize; 4] = [2, 3, 4, 5];

impl Silhouette {
    pub const PART_COUNT: usize = 6;

    pub fn new(height: f64) -> Self {
        Self {
            height,
            arm_angle: 22.0,
            arm_swing: 10.0,
            leg_angle: 9.0,
            leg_swing: 7.0,
            swing_rate: std::f64::consts::TAU / 40.0,
            phase: 0.0,
        }
    }

    /// Parts at `frame`, placed with the torso centre at `anchor`: head,
    /// torso, left arm, right arm, left leg, right leg.
    pub fn parts(&self, anchor: Point2, frame: usize) -> [PartShape; 6] {
        let h = self.height;
        let wave = (self.swing_rate * frame as f64 + self.phase).sin();
        let arm = (self.arm_angle + self.arm_swing * wave).to_radians();
        let leg = (self.leg_angle - self.leg_swing * wave).to_radians();
        let at = |dx: f64, dy: f64| Point2::new(anchor.x + dx * h, anchor.y + dy * h);
        let limb = |pivot: Point2, len: f64, half_w: f64, angle: f64| {
            // Hangs downward from the pivot, rotated by `angle` (positive
            // swings the far end toward +x).
            let dir = Point2::new(angle.sin(), angle.cos());
            PartShape::Rect {
                center: pivot + dir * (len / 2.0),
                half_w,
                half_h: len / 2.0,
                angle: -angle,
            }
        };
        [
            PartShape::Ellipse {
                center: at(0.0, -0.38),
                rx: 0.09 * h,
                ry: 0.11 * h,
                angle: 0.0,
            },
            PartShape::Ellipse {
                center: at(0.0, -0.08),
                rx: 0.15 * h,
                ry: 0.22 * h,
                angle: 0.0,
            },
            limb(at(-0.13, -0.24), 0.34 * h, 0.04 * h, -arm),
            limb(at(0.13, -0.24), 0.34 * h, 0.04 * h, arm),
            limb(at(-0.07, 0.08), 0.42 * h, 0.05 * h, -leg),
            limb(at(0.07, 0.08), 0.42 * h, 0.05 * h, leg),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub silhouette: Silhouette,
    /// Torso centre in visible coordinates, one entry per frame.
    pub trajectory: Vec<Point2>,
    /// Parts missing from the infrared rendering.
    pub dropped_parts: Vec<usize>,
    /// Infrared-to-visible map for this target's depth plane. `None` means
    /// the scene-wide truth transform.
    pub plane_transform: Option<AffineTransform>,
    pub vis_intensity: u8,
    pub ir_intensity: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Frames at the start with an empty scene.
    pub lead_in_frames: usize,
    /// Visible = truth(infrared).
    pub truth_transform: AffineTransform,
    pub targets: Vec<TargetSpec>,
    pub modality_dropout: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

/// Compact description from which [`SceneSpec::layout`] derives targets,
/// trajectories and appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub n_targets: usize,
    pub frames: usize,
    pub lead_in_frames: usize,
    pub truth_transform: AffineTransform,
    pub modality_dropout: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
    /// Extra visible-space shift of each target's depth plane; missing
    /// entries mean no shift.
    pub plane_shifts: Vec<Point2>,
    /// Horizontal gap between neighbouring targets in units of body height.
    pub spacing: f64,
    /// Peak horizontal excursion of the group, pixels.
    pub sway: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            n_targets: 1,
            frames: 200,
            lead_in_frames: 10,
            truth_transform: AffineTransform::identity(),
            modality_dropout: 0.0,
            noise_sigma: 0.0,
            rng_seed: 0,
            plane_shifts: Vec::new(),
            spacing: 0.62,
            sway: 14.0,
        }
    }
}

impl SceneSpec {
    /// Lays out `n_targets` walkers side by side around the frame centre. The
    /// group sways horizontally while limbs swing; sizes, gait phase,
    /// intensities and dropped limbs are drawn from the seed.
    pub fn layout(p: &SceneParams) -> Result<SceneSpec> {
        if !(1..=5).contains(&p.n_targets) {
            return Err(Error::InvalidInput(format!(
                "n_targets must be in 1..=5, got {}",
                p.n_targets
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
        let body = match p.n_targets {
            1 | 2 => 62.0,
            3 => 58.0,
            _ => 54.0,
        };
        let center = Point2::new(p.width as f64 / 2.0, p.height as f64 / 2.0);
        let step = body * p.spacing;
        let period = 120.0;
        let n_drop = (p.modality_dropout * Silhouette::PART_COUNT as f64).round() as usize;
        let mut targets = Vec::with_capacity(p.n_targets);
        for k in 0..p.n_targets {
            let mut sil = Silhouette::new(body * rng.random_range(0.92..1.08));
            sil.phase = rng.random_range(0.0..std::f64::consts::TAU);
            sil.arm_angle = rng.random_range(16.0..30.0);
            sil.leg_angle = rng.random_range(6.0..12.0);
            let offset = (k as f64 - (p.n_targets - 1) as f64 / 2.0) * step;
            let bob_phase = rng.random_range(0.0..std::f64::consts::TAU);
            let trajectory = (0..p.frames)
                .map(|f| {
                    let t = std::f64::consts::TAU * f as f64 / period;
                    Point2::new(
                        center.x + offset + p.sway * t.sin(),
                        center.y + 6.0 + 3.0 * (0.5 * t + bob_phase).sin(),
                    )
                })
                .collect();
            let mut limbs = LIMB_PARTS.to_vec();
            let mut dropped = Vec::new();
            for _ in 0..n_drop.min(limbs.len()) {
                let i = rng.random_range(0..limbs.len());
                dropped.push(limbs.remove(i));
            }
            dropped.sort_unstable();
            let plane_transform = p
                .plane_shifts
                .get(k)
                .filter(|s| s.x != 0.0 || s.y != 0.0)
                .map(|s| AffineTransform::translation(s.x, s.y).compose(&p.truth_transform));
            targets.push(TargetSpec {
                silhouette: sil,
                trajectory,
                dropped_parts: dropped,
                plane_transform,
                vis_intensity: rng.random_range(15..=35),
                ir_intensity: rng.random_range(185..=215),
            });
        }
        let spec = SceneSpec {
            width: p.width,
            height: p.height,
            frames: p.frames,
            lead_in_frames: p.lead_in_frames,
            truth_transform: p.truth_transform,
            targets,
            modality_dropout: p.modality_dropout,
            noise_sigma: p.noise_sigma,
            rng_seed: p.rng_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn target_transform(&self, k: usize) -> AffineTransform {
        self.targets[k].plane_transform.unwrap_or(self.truth_transform)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return bad("scene needs non-zero size and frame count".into());
        }
        if !(1..=5).contains(&self.targets.len()) {
            return bad(format!("scene needs 1..=5 targets, got {}", self.targets.len()));
        }
        if !(0.0..1.0).contains(&self.modality_dropout) {
            return bad(format!("modality_dropout must be in [0, 1), got {}", self.modality_dropout));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        let (w, h) = (self.width as f64 - 1.0, self.height as f64 - 1.0);
        let inside = |a: Point2, b: Point2| a.x >= 0.0 && a.y >= 0.0 && b.x <= w && b.y <= h;
        for (k, t) in self.targets.iter().enumerate() {
            if t.trajectory.len() != self.frames {
                return bad(format!(
                    "target {k} trajectory has {} points for {} frames",
                    t.trajectory.len(),
                    self.frames
                ));
            }
            if t.dropped_parts.iter().any(|&p| p >= Silhouette::PART_COUNT) {
                return bad(format!("target {k} drops an unknown part"));
            }
            let inv = self.target_transform(k).inverse();
            for f in self.lead_in_frames..self.frames {
                let (lo, hi) = target_bounds(&t.silhouette.parts(t.trajectory[f], f));
                if !inside(lo, hi) {
                    return bad(format!("target {k} leaves the visible frame at frame {f}"));
                }
                let corners = [lo, Point2::new(hi.x, lo.y), hi, Point2::new(lo.x, hi.y)].map(|c| inv.apply(c));
                let (ilo, ihi) = bounds_of(&corners);
                if !inside(ilo, ihi) {
                    return bad(format!("target {k} leaves the infrared frame at frame {f}"));
                }
            }
        }
        Ok(())
    }
}

fn bounds_of(pts: &[Point2]) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

fn target_bounds(parts: &[PartShape]) -> (Point2, Point2) {
    let corners: Vec<Point2> = parts
        .iter()
        .flat_map(|s| {
            let (a, b) = s.bounds();
            [a, b]
        })
        .collect();
    bounds_of(&corners)
}

/// Per-pixel target index plus one; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelMap {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    /// Target index at the pixel nearest to `p`, if any.
    pub fn target_at(&self, p: Point2) -> Option<usize> {
        let x = crate::imaging::nearest(p.x);
        let y = crate::imaging::nearest(p.y);
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return None;
        }
        match self.labels[y as usize * self.width + x as usize] {
            0 => None,
            l => Some(l as usize - 1),
        }
    }

    pub fn mask(&self) -> BinaryMask {
        BinaryMask::from_bits(self.width, self.height, self.labels.iter().map(|&l| l != 0).collect())
            .expect("label map size")
    }

    pub fn target_mask(&self, k: usize) -> BinaryMask {
        let want = k as u8 + 1;
        BinaryMask::from_bits(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == want).collect(),
        )
        .expect("label map size")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthPair {
    pub target: usize,
    pub ir: Point2,
    pub vis: Point2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub vis: GrayFrame,
    pub ir: GrayFrame,
    pub vis_labels: LabelMap,
    pub ir_labels: LabelMap,
    /// Landmarks visible in both streams; empty during the lead-in.
    pub truth: Vec<TruthPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub frames: Vec<SyntheticFrame>,
}

impl SyntheticSequence {
    pub fn vis_frames(&self) -> Vec<GrayFrame> {
        self.frames.iter().map(|f| f.vis.clone()).collect()
    }

    pub fn ir_frames(&self) -> Vec<GrayFrame> {
        self.frames.iter().map(|f| f.ir.clone()).collect()
    }

    /// Ground truth of every frame, restricted to targets accepted by `keep`.
    pub fn ground_truth(&self, keep: impl Fn(usize) -> bool) -> GroundTruthSet {
        collect_truth(self.frames.iter().map(|f| (f.vis.frame_index(), f.truth.as_slice())), keep)
    }
}

pub(crate) fn collect_truth<'a>(
    frames: impl Iterator<Item = (usize, &'a [TruthPair])>,
    keep: impl Fn(usize) -> bool,
) -> GroundTruthSet {
    let mut gt = GroundTruthSet::default();
    for (f, truth) in frames {
        let pairs: Vec<(Point2, Point2)> = truth
            .iter()
            .filter(|t| keep(t.target))
            .map(|t| (t.ir, t.vis))
            .collect();
        if !pairs.is_empty() {
            gt.push_frame(f, pairs);
        }
    }
    gt
}

/// Smooth separable backdrop `base + ax sin(x / px) + ay cos(y / py)`.
fn backdrop(w: usize, h: usize, base: f64, ax: f64, px: f64, ay: f64, py: f64) -> Vec<f64> {
    let col: Vec<f64> = (0..w).map(|x| ax * (x as f64 / px).sin()).collect();
    let row: Vec<f64> = (0..h).map(|y| base + ay * (y as f64 / py).cos()).collect();
    row.iter().flat_map(|r| col.iter().map(move |c| r + c)).collect()
}

/// Renders one frame. Each frame draws its noise from its own stream of the
/// scene seed, so frames can be produced in any order.
pub fn generate_frame(spec: &SceneSpec, f: usize) -> Result<SyntheticFrame> {
    if f >= spec.frames {
        return Err(Error::InvalidInput(format!(
            "frame {f} outside a {}-frame scene",
            spec.frames
        )));
    }
    let (w, h) = (spec.width, spec.height);
    let mut vis_val = backdrop(w, h, 150.0, 25.0, 37.0, 15.0, 29.0);
    let mut ir_val = backdrop(w, h, 60.0, 7.0, 41.0, 7.0, 53.0);
    let mut vis_labels = LabelMap::new(w, h);
    let mut ir_labels = LabelMap::new(w, h);
    let mut truth = Vec::new();

    if f >= spec.lead_in_frames {
        for (k, t) in spec.targets.iter().enumerate() {
            let anchor = t.trajectory[f];
            let parts = t.silhouette.parts(anchor, f);
            let label = k as u8 + 1;
            let stripe = (t.silhouette.height / 14.0).max(2.0);

            let (lo, hi) = target_bounds(&parts);
            for y in pixel_range(lo.y, hi.y, h) {
                for x in pixel_range(lo.x, hi.x, w) {
                    let p = Point2::new(x as f64, y as f64);
                    if let Some(i) = parts.iter().position(|s| s.contains(p)) {
                        let mut v = f64::from(t.vis_intensity);
                        if i == PART_TORSO && (((y as f64 - anchor.y) / stripe).floor() as i64).rem_euclid(2) == 0 {
                            v += 12.0;
                        }
                        vis_val[y * w + x] = v;
                        vis_labels.labels[y * w + x] = label;
                    }
                }
            }

            let fwd = spec.target_transform(k);
            let inv = fwd.inverse();
            let kept: Vec<(usize, PartShape)> = parts
                .iter()
                .copied()
                .enumerate()
                .filter(|(i, _)| !t.dropped_parts.contains(i))
                .collect();
            let corners = [lo, Point2::new(hi.x, lo.y), hi, Point2::new(lo.x, hi.y)].map(|c| inv.apply(c));
            let (ilo, ihi) = bounds_of(&corners);
            for y in pixel_range(ilo.y, ihi.y, h) {
                for x in pixel_range(ilo.x, ihi.x, w) {
                    let q = fwd.apply(Point2::new(x as f64, y as f64));
                    if let Some(&(i, _)) = kept.iter().find(|(_, s)| s.contains(q)) {
                        let mut v = f64::from(t.ir_intensity);
                        if i == PART_HEAD {
                            v += 15.0;
                        }
                        ir_val[y * w + x] = v;
                        ir_labels.labels[y * w + x] = label;
                    }
                }
            }

            for (_, s) in &kept {
                let vis = s.center();
                truth.push(TruthPair {
                    target: k,
                    ir: inv.apply(vis),
                    vis,
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(f as u64);
    let quantize = |vals: Vec<f64>, rng: &mut ChaCha8Rng| -> Vec<u8> {
        let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma checked"));
        vals.into_iter()
            .map(|v| {
                let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
                (v + n).round().clamp(0.0, 255.0) as u8
            })
            .collect()
    };
    let vis_px = quantize(vis_val, &mut rng);
    let ir_px = quantize(ir_val, &mut rng);
    Ok(SyntheticFrame {
        vis: GrayFrame::new(w, h, vis_px, f)?,
        ir: GrayFrame::new(w, h, ir_px, f)?,
        vis_labels,
        ir_labels,
        truth,
    })
}

fn pixel_range(lo: f64, hi: f64, n: usize) -> std::ops::Range<usize> {
    let a = lo.floor().max(0.0) as usize;
    let b = (hi.ceil() + 1.0).max(0.0).min(n as f64) as usize;
    a.min(b)..b
}

/// Renders every frame of `spec`.
pub fn generate_sequence(spec: &SceneSpec) -> Result<SyntheticSequence> {
    spec.validate()?;
    let frames = (0..spec.frames)
        .into_par_iter()
        .map(|f| generate_frame(spec, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticSequence { frames })
}
