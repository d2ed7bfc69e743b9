use polyreg::synth::{generate_frame, generate_sequence, SceneParams, SceneSpec, Silhouette};
use polyreg::{AffineTransform, Point2};
use proptest::prelude::*;

#[test]
fn dropout_removes_whole_parts_in_infrared_only() {
    let p = SceneParams {
        n_targets: 3,
        frames: 30,
        modality_dropout: 0.35,
        rng_seed: 4,
        ..Default::default()
    };
    let spec = SceneSpec::layout(&p).unwrap();
    for t in &spec.targets {
        // round(0.35 * 6) = 2 limbs.
        assert_eq!(t.dropped_parts.len(), 2);
    }
    let f = generate_frame(&spec, 20).unwrap();
    // Identity truth: infrared footprint is the visible one minus dropped limbs.
    let ir = f.ir_labels.mask();
    let vis = f.vis_labels.mask();
    assert!(ir.count() < vis.count());
    for (a, b) in ir.bits().iter().zip(vis.bits()) {
        assert!(!a || *b);
    }
    // Landmarks: torso, head and two kept limbs per target.
    assert_eq!(f.truth.len(), 3 * (Silhouette::PART_COUNT - 2));
}

#[test]
fn plane_shift_moves_only_its_target() {
    let shift = Point2::new(7.0, -2.0);
    let p = SceneParams {
        n_targets: 2,
        frames: 30,
        plane_shifts: vec![Point2::new(0.0, 0.0), shift],
        spacing: 1.3,
        ..Default::default()
    };
    let seq = generate_sequence(&SceneSpec::layout(&p).unwrap()).unwrap();
    for f in &seq.frames {
        for t in &f.truth {
            let d = t.vis - t.ir;
            let want = if t.target == 1 { shift } else { Point2::new(0.0, 0.0) };
            assert!((d - want).norm() < 1e-9);
        }
    }
}

#[test]
fn lead_in_frames_are_empty() {
    let spec = SceneSpec::layout(&SceneParams {
        frames: 20,
        lead_in_frames: 5,
        ..Default::default()
    })
    .unwrap();
    let seq = generate_sequence(&spec).unwrap();
    for (i, f) in seq.frames.iter().enumerate() {
        assert_eq!(f.truth.is_empty(), i < 5);
        assert_eq!(f.vis.frame_index(), i);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn landmarks_and_masks_are_consistent(
        n in 1usize..=5,
        seed in 0u64..1000,
        ang in -10.0f64..10.0,
        scale in 0.9f64..1.1,
        tx in -25.0f64..25.0,
        ty in -15.0f64..15.0,
        dropout in 0.0f64..0.5,
    ) {
        let truth = AffineTransform::similarity_about(Point2::new(160.0, 120.0), ang, scale, Point2::new(tx, ty)).unwrap();
        let p = SceneParams {
            n_targets: n,
            frames: 24,
            truth_transform: truth,
            modality_dropout: dropout,
            noise_sigma: 3.0,
            rng_seed: seed,
            ..Default::default()
        };
        let Ok(spec) = SceneSpec::layout(&p) else { return Ok(()); };
        for f in [10, 17, 23] {
            let fr = generate_frame(&spec, f).unwrap();
            prop_assert!(!fr.truth.is_empty());
            for t in &fr.truth {
                prop_assert_eq!(fr.vis_labels.target_at(t.vis), Some(t.target));
                prop_assert_eq!(fr.ir_labels.target_at(t.ir), Some(t.target));
                prop_assert!((truth.apply(t.ir) - t.vis).norm() < 1e-9);
            }
            // Every rendered infrared pixel maps into the visible silhouette
            // of the same target.
            let w = spec.width;
            for (i, &l) in fr.ir_labels.labels.iter().enumerate() {
                if l == 0 { continue; }
                let q = truth.apply(Point2::new((i % w) as f64, (i / w) as f64));
                let k = spec.targets[l as usize - 1].silhouette.parts(spec.targets[l as usize - 1].trajectory[f], f);
                prop_assert!(k.iter().any(|s| s.contains(q)));
            }
        }
    }
}
