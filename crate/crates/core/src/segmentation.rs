//! Kernel-Gram phone boundary detection.
//!
//! Frames inside one phone-like segment are more similar to each other than
//! to frames of neighbouring segments. Every frame scans forward for the
//! first run of `tau` frames whose similarity to it falls below the frame's
//! adaptive threshold (its row mean in the cosine Gram matrix) and predicts
//! that run's first frame as the start of the next segment. Predicted frames
//! collect votes; local vote peaks become boundaries, subject to minimum and
//! maximum segment durations.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{cosine_gram, Matrix, EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct SegConfig {
    /// Consecutive dissimilar frames required to predict an endpoint.
    pub tau: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Leave the diagonal out of the row-mean threshold.
    pub exclude_diagonal: bool,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            tau: 2,
            min_frames: 2,
            max_frames: 50,
            exclude_diagonal: false,
        }
    }
}

impl SegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::Config("tau must be >= 1".into()));
        }
        if self.min_frames == 0 || self.min_frames >= self.max_frames {
            return Err(Error::Config(
                "need 1 <= min_frames < max_frames".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Segment {
    pub utt_id: String,
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub cluster_id: Option<u32>,
}

impl Segment {
    pub fn new(utt_id: impl Into<String>, start_frame: usize, end_frame: usize) -> Self {
        Self {
            utt_id: utt_id.into(),
            start_frame,
            end_frame,
            cluster_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame == self.start_frame
    }
}

/// Cosine self-similarity with the diagonal kept.
pub fn similarity_matrix(z: &Matrix<f32>) -> Matrix<f32> {
    cosine_gram(z, EPS)
}

/// Per-row mean of the Gram matrix.
pub fn adaptive_thresholds(g: &Matrix<f32>, exclude_diagonal: bool) -> Vec<f64> {
    let n = g.rows();
    (0..n)
        .map(|i| {
            let row = g.row(i);
            let sum: f64 = row.iter().map(|&v| v as f64).sum();
            if exclude_diagonal {
                if n > 1 {
                    (sum - row[i] as f64) / (n - 1) as f64
                } else {
                    0.0
                }
            } else {
                sum / n as f64
            }
        })
        .collect()
}

/// For each frame, the first frame of the segment that follows it.
pub fn predict_endpoints(g: &Matrix<f32>, eps: &[f64], cfg: &SegConfig) -> Vec<usize> {
    let n = g.rows();
    assert_eq!(eps.len(), n);
    (0..n)
        .map(|i| {
            let row = g.row(i);
            let cap = (i + cfg.max_frames).min(n - 1);
            let below = |j: usize| (row[j] as f64) < eps[i];
            let mut run = 0;
            // `run` counts consecutive dissimilar frames ending at `j`
            let mut j = i + cfg.min_frames;
            while j < n {
                if below(j) {
                    run += 1;
                    if run == cfg.tau {
                        let start = j + 1 - cfg.tau;
                        if start <= cap {
                            return start;
                        }
                        break;
                    }
                } else {
                    run = 0;
                    if j >= cap {
                        break;
                    }
                }
                j += 1;
            }
            cap
        })
        .collect()
}

/// Vote peaks, min-duration conflict resolution and max-duration splitting.
/// Returns sorted interior boundaries; `0` and `n` are implicit.
pub fn vote_boundaries(predictions: &[usize], n: usize, cfg: &SegConfig) -> Vec<usize> {
    let mut counts = vec![0usize; n];
    for &p in predictions {
        if p < n {
            counts[p] += 1;
        }
    }
    let at = |j: isize| {
        if j < 0 || j as usize >= n {
            0
        } else {
            counts[j as usize]
        }
    };
    let mut peaks: Vec<usize> = (1..n)
        .filter(|&j| {
            let c = counts[j];
            c >= 1 && c > at(j as isize - 1) && c >= at(j as isize + 1)
        })
        .collect();
    peaks.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));

    let mut accepted: BTreeSet<usize> = [0, n].into_iter().collect();
    for j in peaks {
        let below = *accepted.range(..j).next_back().unwrap();
        let above = *accepted.range(j..).next().unwrap();
        if j - below >= cfg.min_frames && above - j >= cfg.min_frames {
            accepted.insert(j);
        }
    }

    let fixed: Vec<usize> = accepted.into_iter().collect();
    let mut out = Vec::new();
    for w in fixed.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a > 0 {
            out.push(a);
        }
        out.extend(split_long(a, b, cfg));
    }
    out
}

/// Cut points inside `[a, b)` so that no piece exceeds `max_frames`. Cuts
/// fall every `max_frames` frames; a trailing piece shorter than
/// `min_frames` is lengthened by pulling the last cut back when possible.
fn split_long(a: usize, b: usize, cfg: &SegConfig) -> Vec<usize> {
    let mut cuts = Vec::new();
    let mut pos = a;
    while b - pos > cfg.max_frames {
        pos += cfg.max_frames;
        cuts.push(pos);
    }
    if let Some(&last) = cuts.last() {
        let prev = if cuts.len() > 1 { cuts[cuts.len() - 2] } else { a };
        if b - last < cfg.min_frames && b - cfg.min_frames - prev >= cfg.min_frames {
            *cuts.last_mut().unwrap() = b - cfg.min_frames;
        }
    }
    cuts
}

pub fn boundaries_to_segments(utt_id: &str, boundaries: &[usize], n: usize) -> Vec<Segment> {
    let mut edges = Vec::with_capacity(boundaries.len() + 2);
    edges.push(0);
    edges.extend_from_slice(boundaries);
    edges.push(n);
    edges
        .windows(2)
        .map(|w| Segment::new(utt_id, w[0], w[1]))
        .collect()
}

/// Segments tiling `[0, N)` for one utterance's embeddings.
pub fn segment_utterance(z: &Matrix<f32>, utt_id: &str, cfg: &SegConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let n = z.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let g = similarity_matrix(z);
    let eps = adaptive_thresholds(&g, cfg.exclude_diagonal);
    let predictions = predict_endpoints(&g, &eps, cfg);
    let boundaries = vote_boundaries(&predictions, n, cfg);
    Ok(boundaries_to_segments(utt_id, &boundaries, n))
}

/// Interior boundary frames of a tiling (segment starts after the first).
pub fn segment_boundaries(segments: &[Segment]) -> Vec<usize> {
    segments.iter().skip(1).map(|s| s.start_frame).collect()
}

/// `utt_id<TAB>start<TAB>end[<TAB>cluster_id]` lines.
pub fn format_segments(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(&format!("{}\t{}\t{}", s.utt_id, s.start_frame, s.end_frame));
        if let Some(c) = s.cluster_id {
            out.push_str(&format!("\t{c}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_segments(text: &str, path: &Path) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 && f.len() != 4 {
            return Err(err("expected utt_id start end [cluster_id]"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad frame index"));
        let mut seg = Segment::new(f[0], num(f[1])?, num(f[2])?);
        if seg.end_frame <= seg.start_frame {
            return Err(err("empty segment"));
        }
        if let Some(c) = f.get(3) {
            seg.cluster_id = Some(c.parse().map_err(|_| err("bad cluster id"))?);
        }
        out.push(seg);
    }
    Ok(out)
}
