//! Affine estimation from buffered matches and overlap-driven model selection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{mask_intersection_count, mask_union_count, warp_mask, AffineTransform, BinaryMask};
use crate::matching::MatchPair;

/// Least-squares affine fit of `p_vis ≈ t(p_ir)`.
///
/// Coordinates are centred first, which turns the 6x6 normal system into one
/// shared 2x2 solve per output row.
pub fn fit_affine_lsq(pairs: &[MatchPair]) -> Result<AffineTransform> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pairs.len(),
        });
    }
    let n = pairs.len() as f64;
    let (mut cx, mut cy, mut ux, mut uy) = (0.0, 0.0, 0.0, 0.0);
    for p in pairs {
        cx += p.p_ir.x;
        cy += p.p_ir.y;
        ux += p.p_vis.x;
        uy += p.p_vis.y;
    }
    cx /= n;
    cy /= n;
    ux /= n;
    uy /= n;

    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    let (mut sux, mut svx, mut suy, mut svy) = (0.0, 0.0, 0.0, 0.0);
    for p in pairs {
        let u = p.p_ir.x - cx;
        let v = p.p_ir.y - cy;
        let x = p.p_vis.x - ux;
        let y = p.p_vis.y - uy;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        sux += u * x;
        svx += v * x;
        suy += u * y;
        svy += v * y;
    }
    let det = suu * svv - suv * suv;
    let trace = suu + svv;
    if !(trace > 0.0) || det <= 1e-12 * trace * trace {
        return Err(Error::Degenerate(
            "infrared points are collinear or coincident".into(),
        ));
    }
    let a = (svv * sux - suv * svx) / det;
    let b = (suu * svx - suv * sux) / det;
    let c = (svv * suy - suv * svy) / det;
    let d = (suu * svy - suv * suy) / det;
    let tx = ux - a * cx - b * cy;
    let ty = uy - c * cx - d * cy;
    AffineTransform::new([[a, b, tx], [c, d, ty]])
        .map_err(|_| Error::Degenerate("fitted affine is singular".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Residual distance, pixels, within which a pair counts as an inlier.
    pub inlier_threshold: f64,
    /// Consensus below this size yields no model.
    pub min_inliers: usize,
    pub rng_seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 500,
            inlier_threshold: 3.0,
            min_inliers: 6,
            rng_seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || !(self.inlier_threshold > 0.0) || self.min_inliers < 3 {
            return Err(Error::Config(format!(
                "ransac parameters out of range: iterations={}, inlier_threshold={}, min_inliers={}",
                self.iterations, self.inlier_threshold, self.min_inliers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub transform: AffineTransform,
    /// Indices into the input pairs.
    pub inliers: Vec<usize>,
}

/// Samples with a triangle smaller than this (px²) are skipped.
const MIN_SAMPLE_AREA: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    inliers: usize,
    mean_residual: f64,
    iteration: usize,
    transform: AffineTransform,
}

impl Hypothesis {
    fn better_than(&self, other: &Hypothesis) -> bool {
        self.inliers
            .cmp(&other.inliers)
            .then_with(|| other.mean_residual.total_cmp(&self.mean_residual))
            .then_with(|| other.iteration.cmp(&self.iteration))
            .is_gt()
    }
}

fn residual(t: &AffineTransform, p: &MatchPair) -> f64 {
    t.apply(p.p_ir).distance(p.p_vis)
}

fn hypothesis(pairs: &[MatchPair], params: &RansacParams, iteration: usize) -> Option<Hypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    rng.set_stream(iteration as u64);
    let idx = rand::seq::index::sample(&mut rng, pairs.len(), 3);
    let sample = [pairs[idx.index(0)], pairs[idx.index(1)], pairs[idx.index(2)]];
    let area = 0.5 * (sample[1].p_ir - sample[0].p_ir).cross(sample[2].p_ir - sample[0].p_ir);
    if area.abs() < MIN_SAMPLE_AREA {
        return None;
    }
    let t = fit_affine_lsq(&sample).ok()?;
    let mut inliers = 0;
    let mut sum = 0.0;
    for p in pairs {
        let r = residual(&t, p);
        if r <= params.inlier_threshold {
            inliers += 1;
            sum += r;
        }
    }
    Some(Hypothesis {
        inliers,
        mean_residual: if inliers > 0 { sum / inliers as f64 } else { f64::INFINITY },
        iteration,
        transform: t,
    })
}

/// Robust affine estimate: exact fits to random triples, largest consensus
/// wins (then lower mean inlier residual, then earlier iteration), followed by
/// a least-squares refit on that consensus.
///
/// Iteration `i` draws from the ChaCha stream `i` of `rng_seed`, so the result
/// does not depend on how iterations are scheduled across threads.
pub fn ransac_affine(pairs: &[MatchPair], params: &RansacParams) -> Result<Option<RansacFit>> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pairs.len(),
        });
    }
    let best = (0..params.iterations)
        .into_par_iter()
        .filter_map(|i| hypothesis(pairs, params, i))
        .reduce_with(|a, b| if b.better_than(&a) { b } else { a });
    let Some(best) = best else {
        return Ok(None);
    };
    if best.inliers < params.min_inliers {
        return Ok(None);
    }
    let inliers: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| residual(&best.transform, p) <= params.inlier_threshold)
        .map(|(i, _)| i)
        .collect();
    let support: Vec<MatchPair> = inliers.iter().map(|&i| pairs[i]).collect();
    let transform = fit_affine_lsq(&support).unwrap_or(best.transform);
    Ok(Some(RansacFit { transform, inliers }))
}

/// Intersection over union of the warped infrared foreground and the visible
/// foreground; 0 when both are empty.
pub fn overlap_ratio(ir_fg: &BinaryMask, vis_fg: &BinaryMask, t: &AffineTransform) -> Result<f64> {
    if ir_fg.dims() != vis_fg.dims() {
        return Err(Error::DimensionMismatch {
            expected: vis_fg.dims(),
            found: ir_fg.dims(),
        });
    }
    let warped = warp_mask(ir_fg, t, vis_fg.width(), vis_fg.height())?;
    let union = mask_union_count(&warped, vis_fg)?;
    if union == 0 {
        return Ok(0.0);
    }
    let inter = mask_intersection_count(&warped, vis_fg)?;
    Ok(inter as f64 / union as f64)
}

/// Best transform seen so far and the overlap ratio it scored.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegistrationState {
    pub best_transform: Option<AffineTransform>,
    pub best_br: f64,
    pub frame_of_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationUpdate {
    pub state: RegistrationState,
    /// Overlap ratio the candidate scored on this frame.
    pub candidate_br: f64,
    pub updated: bool,
}

/// Adopts `candidate` only if it beats the stored overlap ratio. The stored
/// ratio is not re-evaluated on later frames.
pub fn update_registration(
    state: &RegistrationState,
    candidate: &AffineTransform,
    ir_fg: &BinaryMask,
    vis_fg: &BinaryMask,
    frame_index: usize,
) -> Result<RegistrationUpdate> {
    let br = overlap_ratio(ir_fg, vis_fg, candidate)?;
    if br > state.best_br {
        Ok(RegistrationUpdate {
            state: RegistrationState {
                best_transform: Some(*candidate),
                best_br: br,
                frame_of_best: frame_index,
            },
            candidate_br: br,
            updated: true,
        })
    } else {
        Ok(RegistrationUpdate {
            state: *state,
            candidate_br: br,
            updated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Point2;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn mp(ir: Point2, vis: Point2) -> MatchPair {
        MatchPair {
            p_ir: ir,
            p_vis: vis,
            score: 0.0,
            frame_index: 0,
        }
    }

    fn truth() -> AffineTransform {
        AffineTransform::new([[1.04, -0.12, 14.5], [0.09, 0.97, -7.25]]).unwrap()
    }

    /// Assembles the full 6x6 normal system in parameter order
    /// (a, b, tx, c, d, ty) and solves it by Gaussian elimination.
    fn normal_equation_oracle(pairs: &[MatchPair]) -> [f64; 6] {
        let mut ata = [[0.0f64; 6]; 6];
        let mut atb = [0.0f64; 6];
        for p in pairs {
            let rows = [
                ([p.p_ir.x, p.p_ir.y, 1.0, 0.0, 0.0, 0.0], p.p_vis.x),
                ([0.0, 0.0, 0.0, p.p_ir.x, p.p_ir.y, 1.0], p.p_vis.y),
            ];
            for (r, b) in rows {
                for i in 0..6 {
                    atb[i] += r[i] * b;
                    for j in 0..6 {
                        ata[i][j] += r[i] * r[j];
                    }
                }
            }
        }
        for col in 0..6 {
            let piv = (col..6).max_by(|&i, &j| ata[i][col].abs().total_cmp(&ata[j][col].abs())).unwrap();
            ata.swap(col, piv);
            atb.swap(col, piv);
            for row in col + 1..6 {
                let f = ata[row][col] / ata[col][col];
                let pivot = ata[col];
                for (a, p) in ata[row][col..].iter_mut().zip(&pivot[col..]) {
                    *a -= f * p;
                }
                atb[row] -= f * atb[col];
            }
        }
        let mut x = [0.0; 6];
        for row in (0..6).rev() {
            let mut s = atb[row];
            for k in row + 1..6 {
                s -= ata[row][k] * x[k];
            }
            x[row] = s / ata[row][row];
        }
        x
    }

    fn noisy_pairs(n: usize, sigma: f64, seed: u64) -> Vec<MatchPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let t = truth();
        (0..n)
            .map(|_| {
                let p = Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
                let q = t.apply(p);
                mp(p, Point2::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng)))
            })
            .collect()
    }

    fn sse(t: &[f64; 6], pairs: &[MatchPair]) -> f64 {
        pairs
            .iter()
            .map(|p| {
                let x = t[0] * p.p_ir.x + t[1] * p.p_ir.y + t[2] - p.p_vis.x;
                let y = t[3] * p.p_ir.x + t[4] * p.p_ir.y + t[5] - p.p_vis.y;
                x * x + y * y
            })
            .sum()
    }

    #[test]
    fn three_exact_pairs_recover_affine() {
        let t = truth();
        let ir = [Point2::new(10.0, 20.0), Point2::new(200.0, 35.0), Point2::new(80.0, 190.0)];
        let pairs: Vec<_> = ir.iter().map(|&p| mp(p, t.apply(p))).collect();
        let fit = fit_affine_lsq(&pairs).unwrap();
        assert!(fit.max_abs_diff(&t) < 1e-9);
    }

    #[test]
    fn identical_sides_give_identity() {
        let pts = [Point2::new(1.0, 1.0), Point2::new(9.0, 2.0), Point2::new(4.0, 7.0), Point2::new(6.0, 6.0)];
        let pairs: Vec<_> = pts.iter().map(|&p| mp(p, p)).collect();
        let fit = fit_affine_lsq(&pairs).unwrap();
        assert!(fit.max_abs_diff(&AffineTransform::identity()) < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let collinear: Vec<_> = (0..5)
            .map(|i| mp(Point2::new(i as f64, 2.0 * i as f64), Point2::new(0.0, 0.0)))
            .collect();
        assert!(matches!(fit_affine_lsq(&collinear), Err(Error::Degenerate(_))));
        let two = &collinear[..2];
        assert!(matches!(fit_affine_lsq(two), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn noisy_fit_matches_oracle_and_improves_with_data() {
        let mut errs = Vec::new();
        for &n in &[10usize, 50, 400] {
            let pairs = noisy_pairs(n, 0.5, 11);
            let fit = fit_affine_lsq(&pairs).unwrap().to_row_major();
            let oracle = normal_equation_oracle(&pairs);
            for k in 0..6 {
                assert!((fit[k] - oracle[k]).abs() < 1e-9, "{k}: {} vs {}", fit[k], oracle[k]);
            }
            errs.push(AffineTransform::from_row_major(fit).unwrap().max_abs_diff(&truth()));
        }
        assert!(errs[2] < errs[0], "{errs:?}");
    }

    #[test]
    fn lsq_is_a_local_minimum() {
        let pairs = noisy_pairs(50, 0.5, 5);
        let fit = fit_affine_lsq(&pairs).unwrap().to_row_major();
        let base = sse(&fit, &pairs);
        for k in 0..6 {
            for h in [1e-4, -1e-4] {
                let mut q = fit;
                q[k] += h;
                assert!(sse(&q, &pairs) >= base, "param {k} step {h}");
            }
        }
    }

    fn planted(n_in: usize, n_out: usize, seed: u64) -> Vec<MatchPair> {
        let t = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<MatchPair> = (0..n_in)
            .map(|_| {
                let p = Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
                mp(p, t.apply(p))
            })
            .collect();
        while pairs.len() < n_in + n_out {
            let p = Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
            let q = Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
            if t.apply(p).distance(q) > 10.0 {
                pairs.push(mp(p, q));
            }
        }
        pairs
    }

    #[test]
    fn ransac_exact_pairs() {
        let pairs = planted(20, 0, 1);
        let fit = ransac_affine(&pairs, &RansacParams::default()).unwrap().unwrap();
        assert_eq!(fit.inliers.len(), 20);
        assert!(fit.transform.max_abs_diff(&truth()) < 1e-6);
    }

    #[test]
    fn ransac_rejects_planted_outliers() {
        let pairs = planted(20, 10, 2);
        let fit = ransac_affine(&pairs, &RansacParams::default()).unwrap().unwrap();
        assert_eq!(fit.inliers, (0..20).collect::<Vec<_>>());
        assert!(fit.transform.max_abs_diff(&truth()) < 1e-6);
    }

    #[test]
    fn ransac_needs_enough_support() {
        let pairs = planted(5, 0, 3);
        assert!(ransac_affine(&pairs, &RansacParams::default()).unwrap().is_none());
        assert!(matches!(
            ransac_affine(&pairs[..2], &RansacParams::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn ransac_is_deterministic() {
        let pairs = planted(30, 25, 4);
        let p = RansacParams {
            rng_seed: 99,
            ..Default::default()
        };
        assert_eq!(ransac_affine(&pairs, &p).unwrap(), ransac_affine(&pairs, &p).unwrap());
    }

    fn square(x0: usize, y0: usize) -> BinaryMask {
        BinaryMask::from_fn(40, 40, |x, y| (x0..x0 + 10).contains(&x) && (y0..y0 + 10).contains(&y))
    }

    #[test]
    fn overlap_examples() {
        let a = square(5, 5);
        assert_eq!(overlap_ratio(&a, &a, &AffineTransform::identity()).unwrap(), 1.0);
        assert_eq!(overlap_ratio(&a, &square(25, 25), &AffineTransform::identity()).unwrap(), 0.0);
        // Offset by 5 columns: 50 shared pixels out of 150.
        let r = overlap_ratio(&a, &square(10, 5), &AffineTransform::identity()).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        // The transform can undo the offset.
        let r = overlap_ratio(&a, &square(10, 5), &AffineTransform::translation(5.0, 0.0)).unwrap();
        assert_eq!(r, 1.0);
        let empty = BinaryMask::new(40, 40);
        assert_eq!(overlap_ratio(&empty, &empty, &AffineTransform::identity()).unwrap(), 0.0);
    }

    #[test]
    fn registration_keeps_the_best() {
        let vis = square(10, 5);
        let ir = square(5, 5);
        let s0 = RegistrationState::default();
        let good = AffineTransform::translation(5.0, 0.0);
        let poor = AffineTransform::translation(2.0, 0.0);
        let u = update_registration(&s0, &poor, &ir, &vis, 3).unwrap();
        assert!(u.updated);
        assert_eq!(u.state.frame_of_best, 3);
        let u2 = update_registration(&u.state, &good, &ir, &vis, 4).unwrap();
        assert!(u2.updated);
        assert_eq!(u2.state.best_br, 1.0);
        let u3 = update_registration(&u2.state, &poor, &ir, &vis, 5).unwrap();
        assert!(!u3.updated);
        assert_eq!(u3.state, u2.state);
    }

    #[test]
    fn lower_candidate_leaves_state() {
        let state = RegistrationState {
            best_transform: Some(AffineTransform::identity()),
            best_br: 0.8,
            frame_of_best: 1,
        };
        let vis = square(10, 5);
        let ir = square(5, 5);
        // Residual offset of 3 columns: 70 / 130.
        let u = update_registration(&state, &AffineTransform::translation(2.0, 0.0), &ir, &vis, 2).unwrap();
        assert!(u.candidate_br < 0.8);
        assert!(!u.updated);
        assert_eq!(u.state, state);
    }

    proptest! {
        #[test]
        fn overlap_is_bounded(
            bits_a in proptest::collection::vec(any::<bool>(), 32 * 32),
            bits_b in proptest::collection::vec(any::<bool>(), 32 * 32),
            dx in -3.0f64..3.0, dy in -3.0f64..3.0,
        ) {
            let a = BinaryMask::from_bits(32, 32, bits_a).unwrap();
            let b = BinaryMask::from_bits(32, 32, bits_b).unwrap();
            let t = AffineTransform::translation(dx, dy);
            let r = overlap_ratio(&a, &b, &t).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            let warped = warp_mask(&a, &t, 32, 32).unwrap();
            prop_assert_eq!(r == 1.0, warped == b && !b.is_empty());
            // Brute-force IoU.
            let (mut i, mut u) = (0usize, 0usize);
            for k in 0..32 * 32 {
                let (p, q) = (warped.bits()[k], b.bits()[k]);
                i += (p && q) as usize;
                u += (p || q) as usize;
            }
            let oracle = if u == 0 { 0.0 } else { i as f64 / u as f64 };
            prop_assert_eq!(r, oracle);
            if !a.is_empty() {
                prop_assert_eq!(overlap_ratio(&a, &a, &AffineTransform::identity()).unwrap(), 1.0);
            }
        }
    }
}
