//! Foreground segmentation by selective running-average background modelling.

use crate::contour::connected_components;
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, GrayFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundParams {
    /// Weight of the new frame in the running average, in (0, 1].
    pub learning_rate: f64,
    /// Absolute luminance difference above which a pixel is foreground.
    pub threshold: f64,
    /// Frames during which the model only learns and reports no foreground.
    pub warmup_frames: usize,
    /// Connected components smaller than this are dropped by [`clean_mask`].
    pub min_blob_area: usize,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            threshold: 30.0,
            warmup_frames: 10,
            min_blob_area: 50,
        }
    }
}

impl BackgroundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "bg.learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(self.threshold >= 0.0 && self.threshold <= 255.0) {
            return Err(Error::Config(format!(
                "bg.threshold must be in [0, 255], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Per-stream background estimate.
///
/// The first frame seeds the mean. Foreground pixels are never blended into
/// the mean, so an object that stops moving stays foreground.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    width: usize,
    height: usize,
    params: BackgroundParams,
    mean: Vec<f64>,
    frames_seen: usize,
}

impl BackgroundModel {
    pub fn new(width: usize, height: usize, params: BackgroundParams) -> Result<Self> {
        params.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("background model needs a non-empty frame".into()));
        }
        Ok(Self {
            width,
            height,
            params,
            mean: Vec::new(),
            frames_seen: 0,
        })
    }

    pub fn params(&self) -> &BackgroundParams {
        &self.params
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn in_warmup(&self) -> bool {
        self.frames_seen < self.params.warmup_frames
    }

    /// Classifies `frame` against the current background, then blends the
    /// background pixels of `frame` into the model.
    pub fn update_and_segment(&mut self, frame: &GrayFrame) -> Result<BinaryMask> {
        if frame.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                found: frame.dims(),
            });
        }
        let data = frame.data();
        if self.mean.is_empty() {
            self.mean = data.iter().map(|&v| f64::from(v)).collect();
        }
        let warmup = self.in_warmup();
        self.frames_seen += 1;

        let lr = self.params.learning_rate;
        let mut mask = BinaryMask::new(self.width, self.height);
        if warmup {
            for (m, &v) in self.mean.iter_mut().zip(data) {
                *m += lr * (f64::from(v) - *m);
            }
            return Ok(mask);
        }
        for (i, (m, &v)) in self.mean.iter_mut().zip(data).enumerate() {
            let v = f64::from(v);
            if (v - *m).abs() > self.params.threshold {
                mask.set(i % self.width, i / self.width, true);
            } else {
                *m += lr * (v - *m);
            }
        }
        Ok(mask)
    }
}

/// 3x3 majority vote (at least 5 of 9 set, outside counts as background)
/// followed by removal of 8-connected components below `min_blob_area`.
pub fn clean_mask(mask: &BinaryMask, min_blob_area: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let voted = BinaryMask::from_fn(w, h, |x, y| {
        let mut n = 0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if mask.get_signed(x as i64 + dx, y as i64 + dy) {
                    n += 1;
                }
            }
        }
        n >= 5
    });
    if min_blob_area <= 1 {
        return voted;
    }
    let cc = connected_components(&voted);
    let keep: Vec<bool> = cc.areas.iter().map(|&a| a >= min_blob_area).collect();
    let bits = cc
        .labels
        .iter()
        .map(|&l| l != 0 && keep[l as usize - 1])
        .collect();
    BinaryMask::from_bits(w, h, bits).expect("label map matches mask size")
}
