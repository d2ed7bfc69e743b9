//! Image sequence input and output.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, GrayImage, ImageEncoder, ImageFormat, RgbImage};

use crate::config::FrameRange;
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, GrayFrame};

const EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ppm"];

/// Image files in `dir` in lexicographic order of file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let known = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if known && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Integer luma, `round((299 R + 587 G + 114 B) / 1000)`.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let s = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((s + 500) / 1000) as u8
}

fn to_gray(img: DynamicImage) -> GrayImage {
    match img {
        DynamicImage::ImageLuma8(g) => g,
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => img.to_luma8(),
        other => {
            let rgb = other.to_rgb8();
            GrayImage::from_fn(rgb.width(), rgb.height(), |x, y| {
                let p = rgb.get_pixel(x, y).0;
                image::Luma([luma(p[0], p[1], p[2])])
            })
        }
    }
}

pub fn load_frame(path: &Path, frame_index: usize) -> Result<GrayFrame> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    let g = to_gray(img);
    let (w, h) = (g.width() as usize, g.height() as usize);
    GrayFrame::new(w, h, g.into_raw(), frame_index)
}

/// Loads the sorted images of `dir`; frame indices are positions in the
/// sorted listing, and `range` selects an inclusive span of them.
pub fn load_frames(dir: &Path, range: Option<FrameRange>) -> Result<Vec<GrayFrame>> {
    list_frames(dir)?
        .iter()
        .enumerate()
        .filter(|(i, _)| range.is_none_or(|r| r.contains(*i)))
        .map(|(i, p)| load_frame(p, i))
        .collect()
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Writes a frame as 8-bit grayscale; the format follows the extension
/// (`.png` or `.pgm`).
pub fn save_frame(path: &Path, frame: &GrayFrame) -> Result<()> {
    create_parent(path)?;
    let img = GrayImage::from_raw(frame.width() as u32, frame.height() as u32, frame.data().to_vec())
        .expect("frame buffer matches its size");
    let format = ImageFormat::from_path(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    if format == ImageFormat::Pnm {
        // The generic PNM path writes PAM (P7); ask for a binary graymap.
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?;
        out.flush().map_err(|e| Error::io(path, e))
    } else {
        img.save_with_format(path, ImageFormat::Png).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// File name used for frame `i` of a written sequence.
pub fn frame_file_name(i: usize, ext: &str) -> String {
    format!("frame_{i:05}.{ext}")
}

pub fn save_frames(dir: &Path, frames: &[GrayFrame]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .try_for_each(|f| save_frame(&dir.join(frame_file_name(f.frame_index(), "png")), f))
}

/// Warped infrared foreground in red, visible foreground in green; their
/// overlap shows as yellow.
pub fn overlay_image(warped_ir: &BinaryMask, vis: &BinaryMask) -> Result<RgbImage> {
    if warped_ir.dims() != vis.dims() {
        return Err(Error::DimensionMismatch {
            expected: vis.dims(),
            found: warped_ir.dims(),
        });
    }
    let (w, h) = vis.dims();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([
            if warped_ir.get(x, y) { 255 } else { 0 },
            if vis.get(x, y) { 255 } else { 0 },
            0,
        ])
    }))
}

pub fn save_overlay(path: &Path, warped_ir: &BinaryMask, vis: &BinaryMask) -> Result<()> {
    create_parent(path)?;
    overlay_image(warped_ir, vis)?
        .save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_examples() {
        assert_eq!(luma(0, 0, 0), 0);
        assert_eq!(luma(255, 255, 255), 255);
        // 299 * 10 = 2990 -> 2.99 -> 3
        assert_eq!(luma(10, 0, 0), 3);
        // 114 * 4 = 456 -> 0.456 -> 0
        assert_eq!(luma(0, 0, 4), 0);
        // 114 * 5 = 570 -> 0.57 -> 1
        assert_eq!(luma(0, 0, 5), 1);
    }

    #[test]
    fn luma_matches_float_rounding() {
        for r in (0..=255u32).step_by(17) {
            for g in (0..=255u32).step_by(15) {
                for b in 0..=255u32 {
                    let exact = (299 * r + 587 * g + 114 * b) as f64 / 1000.0;
                    // Ties sit on .5 exactly and round up in both forms.
                    assert_eq!(luma(r as u8, g as u8, b as u8), (exact + 0.5).floor() as u8);
                }
            }
        }
    }

    #[test]
    fn overlay_colours() {
        let a = BinaryMask::from_fn(2, 1, |x, _| x == 0);
        let b = BinaryMask::from_fn(2, 1, |_, _| true);
        let img = overlay_image(&a, &b).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, [255, 255, 0]);
        assert_eq!(img.get_pixel(1, 0).0, [0, 255, 0]);
        assert!(overlay_image(&a, &BinaryMask::new(3, 1)).is_err());
    }
}
