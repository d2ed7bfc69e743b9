use polyreg::io::{frame_file_name, load_frame, load_frames, luma, save_frame, save_frames};
use polyreg::{FrameRange, GrayFrame};
use rand::{Rng, SeedableRng};

fn random_frame(seed: u64, w: usize, h: usize, index: usize) -> GrayFrame {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    GrayFrame::new(w, h, (0..w * h).map(|_| rng.random()).collect(), index).unwrap()
}

#[test]
fn png_and_pgm_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (i, ext) in ["png", "pgm"].iter().enumerate() {
        let f = random_frame(i as u64, 37, 23, 0);
        let path = dir.path().join(format!("x.{ext}"));
        save_frame(&path, &f).unwrap();
        let back = load_frame(&path, 0).unwrap();
        assert_eq!(back.data(), f.data(), "{ext}");
        assert_eq!(back.dims(), (37, 23));
    }
    let head = std::fs::read(dir.path().join("x.pgm")).unwrap();
    assert_eq!(&head[..2], b"P5");
}

#[test]
fn directory_loads_sorted_and_ranged() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<GrayFrame> = (0..5).map(|i| random_frame(10 + i as u64, 8, 6, i)).collect();
    // Written out of order; listing must sort by name.
    for i in [3, 0, 4, 1, 2] {
        save_frame(&dir.path().join(frame_file_name(i, "png")), &frames[i]).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let all = load_frames(dir.path(), None).unwrap();
    assert_eq!(all.len(), 5);
    for (i, f) in all.iter().enumerate() {
        assert_eq!(f.data(), frames[i].data());
        assert_eq!(f.frame_index(), i);
    }
    let some = load_frames(dir.path(), Some(FrameRange { first: 1, last: 2 })).unwrap();
    assert_eq!(some.iter().map(|f| f.frame_index()).collect::<Vec<_>>(), vec![1, 2]);
    assert_eq!(some[0].data(), frames[1].data());
}

#[test]
fn empty_directory_gives_no_frames() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_frames(dir.path(), None).unwrap().is_empty());
}

#[test]
fn colour_images_use_integer_luma() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.png");
    let img = image::RgbImage::from_fn(16, 16, |x, y| image::Rgb([(x * 16) as u8, (y * 16) as u8, (x * y) as u8]));
    img.save(&path).unwrap();
    let f = load_frame(&path, 0).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            let p = img.get_pixel(x, y).0;
            assert_eq!(f.get(x as usize, y as usize), luma(p[0], p[1], p[2]));
        }
    }
}

#[test]
fn unreadable_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frame_00000.png");
    std::fs::write(&path, b"not an image").unwrap();
    let err = load_frames(dir.path(), None).unwrap_err();
    assert!(err.to_string().contains("frame_00000.png"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn save_frames_uses_frame_indices() {
    let dir = tempfile::tempdir().unwrap();
    let frames = vec![random_frame(1, 4, 4, 7), random_frame(2, 4, 4, 8)];
    save_frames(dir.path(), &frames).unwrap();
    assert!(dir.path().join("frame_00007.png").is_file());
    assert!(dir.path().join("frame_00008.png").is_file());
}
