//! Alignment error against ground-truth point pairs, and CSV reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{AffineTransform, Point2};

/// Ground-truth correspondences grouped by frame. Every stored frame holds at
/// least one `(ir, vis)` pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthSet {
    frames: Vec<(usize, Vec<(Point2, Point2)>)>,
}

impl GroundTruthSet {
    /// Appends pairs for `frame`, merging with an existing entry. Empty pair
    /// lists are ignored.
    pub fn push_frame(&mut self, frame: usize, pairs: Vec<(Point2, Point2)>) {
        if pairs.is_empty() {
            return;
        }
        match self.frames.iter_mut().find(|(f, _)| *f == frame) {
            Some((_, v)) => v.extend(pairs),
            None => self.frames.push((frame, pairs)),
        }
    }

    pub fn frames(&self) -> &[(usize, Vec<(Point2, Point2)>)] {
        &self.frames
    }

    pub fn frame(&self, frame: usize) -> Option<&[(Point2, Point2)]> {
        self.frames.iter().find(|(f, _)| *f == frame).map(|(_, v)| v.as_slice())
    }

    pub fn pair_count(&self) -> usize {
        self.frames.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(Point2, Point2)> {
        self.frames.iter().flat_map(|(_, v)| v.iter())
    }

    /// Keeps only frames accepted by `keep`.
    pub fn filter_frames(&self, keep: impl Fn(usize) -> bool) -> GroundTruthSet {
        GroundTruthSet {
            frames: self.frames.iter().filter(|(f, _)| keep(*f)).cloned().collect(),
        }
    }

    /// Parses `frame ir_x ir_y vis_x vis_y` lines. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<GroundTruthSet> {
        let mut gt = GroundTruthSet::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            }
            let frame: usize = fields[0]
                .parse()
                .map_err(|_| err(format!("bad frame index {:?}", fields[0])))?;
            let mut v = [0.0; 4];
            for (slot, s) in v.iter_mut().zip(&fields[1..]) {
                *slot = s
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(format!("bad coordinate {s:?}")))?;
            }
            gt.push_frame(frame, vec![(Point2::new(v[0], v[1]), Point2::new(v[2], v[3]))]);
        }
        Ok(gt)
    }

    pub fn load(path: &Path) -> Result<GroundTruthSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (f, pairs) in &self.frames {
            for (ir, vis) in pairs {
                let _ = writeln!(out, "{f} {} {} {} {}", ir.x, ir.y, vis.x, vis.y);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentError {
    pub e_x: f64,
    pub e_y: f64,
    pub e: f64,
    pub n_pairs: usize,
}

/// Per-axis RMS of `t(ir) - vis` over every pair of every frame.
pub fn alignment_error(gt: &GroundTruthSet, t: &AffineTransform) -> Result<AlignmentError> {
    let n = gt.pair_count();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for (ir, vis) in gt.pairs() {
        let r = t.apply(*ir) - *vis;
        sx += r.x * r.x;
        sy += r.y * r.y;
    }
    let e_x = (sx / n as f64).sqrt();
    let e_y = (sy / n as f64).sqrt();
    Ok(AlignmentError {
        e_x,
        e_y,
        e: e_x.hypot(e_y),
        n_pairs: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub frame: usize,
    pub br: f64,
    pub error: AlignmentError,
}

/// Per-frame rows grouped by label, then one aggregate row per label. The
/// aggregate carries both the mean of per-frame E and the pooled RMS over all
/// residuals of the group.
pub fn report(rows: &[ReportRow]) -> String {
    let mut out = String::from("frame,BR,Ex,Ey,E\n");
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    for label in &labels {
        let _ = writeln!(out, "# label={label}");
        for r in rows.iter().filter(|r| r.label == *label) {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.frame,
                fmt_g(r.br),
                fmt_g(r.error.e_x),
                fmt_g(r.error.e_y),
                fmt_g(r.error.e)
            );
        }
    }
    out.push_str("\nlabel,frames,mean_BR,mean_E,pooled_Ex,pooled_Ey,pooled_E\n");
    for label in &labels {
        let group: Vec<&ReportRow> = rows.iter().filter(|r| r.label == *label).collect();
        let k = group.len() as f64;
        let mean_br = group.iter().map(|r| r.br).sum::<f64>() / k;
        let mean_e = group.iter().map(|r| r.error.e).sum::<f64>() / k;
        let n: usize = group.iter().map(|r| r.error.n_pairs).sum();
        let (mut sx, mut sy) = (0.0, 0.0);
        for r in &group {
            let w = r.error.n_pairs as f64;
            sx += r.error.e_x * r.error.e_x * w;
            sy += r.error.e_y * r.error.e_y * w;
        }
        let (px, py) = if n > 0 {
            ((sx / n as f64).sqrt(), (sy / n as f64).sqrt())
        } else {
            (0.0, 0.0)
        };
        let _ = writeln!(
            out,
            "{label},{},{},{},{},{},{}",
            group.len(),
            fmt_g(mean_br),
            fmt_g(mean_e),
            fmt_g(px),
            fmt_g(py),
            fmt_g(px.hypot(py))
        );
    }
    out
}

/// Shortest decimal with at most 9 significant digits.
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.8e}");
    let parsed: f64 = s.parse().expect("formatted float");
    if parsed.abs() < 1e-5 || parsed.abs() >= 1e16 {
        format!("{parsed:e}")
    } else {
        format!("{parsed}")
    }
}
