//! Flat `key = value` configuration for the registration pipeline and for
//! synthetic scene specs.
//!
//! Lines are `key = value`; blank lines and `#` comments are ignored. Unknown
//! keys are rejected so that typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bgsub::BackgroundParams;
use crate::dce::DceParams;
use crate::error::{Error, Result};
use crate::imaging::{AffineTransform, Point2};
use crate::matching::MatchParams;
use crate::synth::SceneParams;
use crate::transform::RansacParams;

/// Environment variable that overrides `ransac.seed`.
pub const SEED_ENV: &str = "POLYREG_SEED";

/// A `key=value` entry with the 1-based line it came from (0 for command-line
/// overrides).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_entries(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: format!("expected key=value, found {line:?}"),
            });
        };
        out.push(Entry {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            line: n + 1,
        });
    }
    Ok(out)
}

/// Parses a command-line `key=value` override.
pub fn parse_override(s: &str) -> Result<Entry> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    Ok(Entry {
        key: k.trim().to_string(),
        value: v.trim().to_string(),
        line: 0,
    })
}

fn read_entries(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_entries(&text, path)
}

fn value<T: FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| Error::Config(format!("{}: cannot parse {:?}", e.key, e.value)))
}

fn finite(e: &Entry) -> Result<f64> {
    let v: f64 = value(e)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{}: value must be finite", e.key)))
    }
}

fn floats(e: &Entry) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("{}: bad number {s:?}", e.key)))
        })
        .collect()
}

/// Every tunable of the per-frame registration loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    pub bg: BackgroundParams,
    pub dce: DceParams,
    pub matching: MatchParams,
    pub buffer_capacity_frames: usize,
    pub ransac: RansacParams,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            bg: BackgroundParams::default(),
            dce: DceParams::default(),
            matching: MatchParams::default(),
            buffer_capacity_frames: 30,
            ransac: RansacParams::default(),
        }
    }
}

impl RegistrationConfig {
    pub const KEYS: [&'static str; 16] = [
        "bg.learning_rate",
        "bg.threshold",
        "bg.warmup_frames",
        "bg.min_blob_area",
        "dce.target_vertices",
        "dce.branch_len_max",
        "dce.min_area",
        "match.ed_max",
        "match.etheta_max",
        "match.alpha",
        "match.min_matches",
        "buffer.capacity_frames",
        "ransac.iterations",
        "ransac.inlier_threshold",
        "ransac.min_inliers",
        "ransac.seed",
    ];

    pub fn set(&mut self, e: &Entry) -> Result<()> {
        match e.key.as_str() {
            "bg.learning_rate" => self.bg.learning_rate = finite(e)?,
            "bg.threshold" => self.bg.threshold = finite(e)?,
            "bg.warmup_frames" => self.bg.warmup_frames = value(e)?,
            "bg.min_blob_area" => self.bg.min_blob_area = value(e)?,
            "dce.target_vertices" => self.dce.target_vertices = value(e)?,
            "dce.branch_len_max" => self.dce.branch_len_max = finite(e)?,
            "dce.min_area" => self.dce.min_area = value(e)?,
            "match.ed_max" => self.matching.ed_max = finite(e)?,
            "match.etheta_max" => self.matching.etheta_max = finite(e)?,
            "match.alpha" => self.matching.alpha = finite(e)?,
            "match.min_matches" => self.matching.min_matches_per_polygon = value(e)?,
            "buffer.capacity_frames" => self.buffer_capacity_frames = value(e)?,
            "ransac.iterations" => self.ransac.iterations = value(e)?,
            "ransac.inlier_threshold" => self.ransac.inlier_threshold = finite(e)?,
            "ransac.min_inliers" => self.ransac.min_inliers = value(e)?,
            "ransac.seed" => self.ransac.rng_seed = value(e)?,
            other => {
                let at = if e.line > 0 { format!(" (line {})", e.line) } else { String::new() };
                return Err(Error::Config(format!("unknown key {other:?}{at}")));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, entries: &[Entry]) -> Result<()> {
        entries.iter().try_for_each(|e| self.set(e))
    }

    /// Defaults, then `file`, then `overrides`, then the seed environment
    /// variable when `env_seed` is given.
    pub fn load(file: Option<&Path>, overrides: &[Entry], env_seed: Option<&str>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply(&read_entries(path)?)?;
        }
        cfg.apply(overrides)?;
        if let Some(s) = env_seed {
            cfg.ransac.rng_seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}: cannot parse {s:?}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.bg.validate()?;
        self.dce.validate()?;
        self.matching.validate()?;
        self.ransac.validate()?;
        if self.buffer_capacity_frames == 0 {
            return Err(Error::Config("buffer.capacity_frames must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let r = |k: &str| -> String {
            match k {
                "bg.learning_rate" => self.bg.learning_rate.to_string(),
                "bg.threshold" => self.bg.threshold.to_string(),
                "bg.warmup_frames" => self.bg.warmup_frames.to_string(),
                "bg.min_blob_area" => self.bg.min_blob_area.to_string(),
                "dce.target_vertices" => self.dce.target_vertices.to_string(),
                "dce.branch_len_max" => self.dce.branch_len_max.to_string(),
                "dce.min_area" => self.dce.min_area.to_string(),
                "match.ed_max" => self.matching.ed_max.to_string(),
                "match.etheta_max" => self.matching.etheta_max.to_string(),
                "match.alpha" => self.matching.alpha.to_string(),
                "match.min_matches" => self.matching.min_matches_per_polygon.to_string(),
                "buffer.capacity_frames" => self.buffer_capacity_frames.to_string(),
                "ransac.iterations" => self.ransac.iterations.to_string(),
                "ransac.inlier_threshold" => self.ransac.inlier_threshold.to_string(),
                "ransac.min_inliers" => self.ransac.min_inliers.to_string(),
                _ => self.ransac.rng_seed.to_string(),
            }
        };
        Self::KEYS.iter().map(|k| format!("{k} = {}\n", r(k))).collect()
    }
}

/// Inclusive frame index range `a:b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRange {
    pub first: usize,
    pub last: usize,
}

impl FrameRange {
    pub fn contains(&self, f: usize) -> bool {
        (self.first..=self.last).contains(&f)
    }
}

impl FromStr for FrameRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("frame range {s:?} is not a:b with a <= b"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let first: usize = a.trim().parse().map_err(|_| bad())?;
        let last: usize = b.trim().parse().map_err(|_| bad())?;
        if first > last {
            return Err(bad());
        }
        Ok(FrameRange { first, last })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Dirs { vis: PathBuf, ir: PathBuf },
    Synth(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub out_dir: PathBuf,
    pub frames: Option<FrameRange>,
    pub overlays: bool,
    pub ground_truth: Option<PathBuf>,
    /// Group label used in the evaluation report.
    pub label: String,
    pub registration: RegistrationConfig,
}

impl PipelineConfig {
    /// Builds the input source from optional CLI paths, requiring either both
    /// stream directories or a scene spec, never both.
    pub fn input_from(vis: Option<PathBuf>, ir: Option<PathBuf>, synth: Option<PathBuf>) -> Result<InputSource> {
        match (vis, ir, synth) {
            (Some(vis), Some(ir), None) => Ok(InputSource::Dirs { vis, ir }),
            (None, None, Some(spec)) => Ok(InputSource::Synth(spec)),
            (None, None, None) => Err(Error::Config("no input: give --vis and --ir, or --synth".into())),
            (Some(_), None, None) => Err(Error::Config("--vis given without --ir".into())),
            (None, Some(_), None) => Err(Error::Config("--ir given without --vis".into())),
            _ => Err(Error::Config("give either --vis/--ir or --synth, not both".into())),
        }
    }

    /// Checks everything that can be checked before any output is written.
    pub fn validate(&self) -> Result<()> {
        self.registration.validate()?;
        let must_be_dir = |p: &Path, what: &str| {
            if p.is_dir() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} directory {} does not exist", p.display())))
            }
        };
        let must_be_file = |p: &Path, what: &str| {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} file {} does not exist", p.display())))
            }
        };
        match &self.input {
            InputSource::Dirs { vis, ir } => {
                must_be_dir(vis, "visible")?;
                must_be_dir(ir, "infrared")?;
            }
            InputSource::Synth(spec) => must_be_file(spec, "scene spec")?,
        }
        if let Some(gt) = &self.ground_truth {
            must_be_file(gt, "ground truth")?;
        }
        if self.out_dir.exists() && !self.out_dir.is_dir() {
            return Err(Error::Config(format!(
                "output path {} exists and is not a directory",
                self.out_dir.display()
            )));
        }
        Ok(())
    }
}

impl SceneParams {
    pub const KEYS: [&'static str; 17] = [
        "scene.width",
        "scene.height",
        "scene.n_targets",
        "scene.frames",
        "scene.lead_in_frames",
        "scene.rotation_deg",
        "scene.scale",
        "scene.tx",
        "scene.ty",
        "scene.truth",
        "scene.dropout",
        "scene.noise_sigma",
        "scene.seed",
        "scene.plane_shifts",
        "scene.spacing",
        "scene.sway",
        "scene.center",
    ];

    /// Reads a scene description. The truth transform is either a similarity
    /// (`scene.rotation_deg`, `scene.scale`, `scene.tx`, `scene.ty`, about
    /// `scene.center`, default the frame centre) or an explicit row-major
    /// `scene.truth = a,b,tx,c,d,ty`. `scene.plane_shifts` lists per-target
    /// `dx dy` pairs separated by `;`.
    pub fn from_entries(entries: &[Entry]) -> Result<SceneParams> {
        let mut p = SceneParams::default();
        let (mut rot, mut scale, mut tx, mut ty) = (0.0, 1.0, 0.0, 0.0);
        let mut center: Option<Point2> = None;
        let mut explicit: Option<AffineTransform> = None;
        for e in entries {
            match e.key.as_str() {
                "scene.width" => p.width = value(e)?,
                "scene.height" => p.height = value(e)?,
                "scene.n_targets" => p.n_targets = value(e)?,
                "scene.frames" => p.frames = value(e)?,
                "scene.lead_in_frames" => p.lead_in_frames = value(e)?,
                "scene.rotation_deg" => rot = finite(e)?,
                "scene.scale" => scale = finite(e)?,
                "scene.tx" => tx = finite(e)?,
                "scene.ty" => ty = finite(e)?,
                "scene.truth" => {
                    let v = floats(e)?;
                    let m: [f64; 6] = v
                        .try_into()
                        .map_err(|_| Error::Config("scene.truth needs six numbers".into()))?;
                    explicit = Some(
                        AffineTransform::from_row_major(m)
                            .map_err(|err| Error::Config(format!("scene.truth: {err}")))?,
                    );
                }
                "scene.dropout" => p.modality_dropout = finite(e)?,
                "scene.noise_sigma" => p.noise_sigma = finite(e)?,
                "scene.seed" => p.rng_seed = value(e)?,
                "scene.plane_shifts" => {
                    p.plane_shifts = e
                        .value
                        .split(';')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| {
                            let v: Vec<f64> = s
                                .split_whitespace()
                                .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))
                                .collect::<Option<_>>()
                                .ok_or_else(|| Error::Config(format!("scene.plane_shifts: bad entry {s:?}")))?;
                            match v[..] {
                                [dx, dy] => Ok(Point2::new(dx, dy)),
                                _ => Err(Error::Config(format!("scene.plane_shifts: {s:?} is not `dx dy`"))),
                            }
                        })
                        .collect::<Result<_>>()?;
                }
                "scene.spacing" => p.spacing = finite(e)?,
                "scene.sway" => p.sway = finite(e)?,
                "scene.center" => match floats(e)?[..] {
                    [x, y] => center = Some(Point2::new(x, y)),
                    _ => return Err(Error::Config("scene.center needs two numbers".into())),
                },
                other => return Err(Error::Config(format!("unknown scene key {other:?}"))),
            }
        }
        p.truth_transform = match explicit {
            Some(t) => t,
            None => {
                let c = center.unwrap_or(Point2::new(p.width as f64 / 2.0, p.height as f64 / 2.0));
                AffineTransform::similarity_about(c, rot, scale, Point2::new(tx, ty))
                    .map_err(|err| Error::Config(format!("scene transform: {err}")))?
            }
        };
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<SceneParams> {
        Self::from_entries(&read_entries(path)?)
    }

    pub fn to_text(&self) -> String {
        let m = self.truth_transform.to_row_major();
        let shifts: Vec<String> = self.plane_shifts.iter().map(|s| format!("{} {}", s.x, s.y)).collect();
        let mut out = format!(
            "scene.width = {}\nscene.height = {}\nscene.n_targets = {}\nscene.frames = {}\n\
             scene.lead_in_frames = {}\nscene.truth = {},{},{},{},{},{}\nscene.dropout = {}\n\
             scene.noise_sigma = {}\nscene.seed = {}\nscene.spacing = {}\nscene.sway = {}\n",
            self.width,
            self.height,
            self.n_targets,
            self.frames,
            self.lead_in_frames,
            m[0],
            m[1],
            m[2],
            m[3],
            m[4],
            m[5],
            self.modality_dropout,
            self.noise_sigma,
            self.rng_seed,
            self.spacing,
            self.sway,
        );
        if !shifts.is_empty() {
            out.push_str(&format!("scene.plane_shifts = {}\n", shifts.join("; ")));
        }
        out
    }
}
