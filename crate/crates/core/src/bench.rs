//! Seeded desk-scale experiments described by small spec files.
//!
//! A spec names a synthetic corpus, pipeline overrides, metric bounds and a
//! wall-clock budget:
//!
//! ```text
//! name = two_phone_smoke
//! seed = 0
//! budget_s = 300
//! synth.num_phones = 2
//! synth.num_utts = 50
//! min.cosine_gap = 0.2
//! min.phone_boundary_f = 0.8
//! hidden_dim = 256
//! ```
//!
//! Keys under `synth.` configure the generator, `min.`/`max.` set bounds,
//! and everything else is passed to the pipeline configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::alignment::{load_gold, read_manifest};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{boundary_prf, phone_boundaries};
use crate::features::read_features;
use crate::pipeline::{parse_metrics, Pipeline, RunOptions, Stage};
use crate::segmentation::parse_segments;
use crate::synth::{gen_synthetic_corpus, within_cross_cosine, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub metric: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Bound {
    fn holds(&self, v: f64) -> bool {
        self.min.map_or(true, |m| v >= m) && self.max.map_or(true, |m| v <= m)
    }

    fn describe(&self) -> String {
        match (self.min, self.max) {
            (Some(lo), Some(hi)) => format!("[{lo}, {hi}]"),
            (Some(lo), None) => format!(">= {lo}"),
            (None, Some(hi)) => format!("<= {hi}"),
            (None, None) => "any".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub synth: SynthConfig,
    pub overrides: Vec<(String, String)>,
    pub bounds: Vec<Bound>,
    pub budget_s: f64,
    /// Tolerance for `phone_boundary_*` in frames.
    pub phone_tolerance_frames: usize,
}

impl ExperimentSpec {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut name = None;
        let mut seed = 0u64;
        let mut budget = None;
        let mut tol = 2usize;
        let mut synth_keys = Vec::new();
        let mut overrides = Vec::new();
        let mut bounds: BTreeMap<String, Bound> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("bad number {v:?}")));
            if let Some(metric) = k.strip_prefix("min.") {
                let b = bounds.entry(metric.into()).or_insert_with(|| Bound {
                    metric: metric.into(),
                    min: None,
                    max: None,
                });
                b.min = Some(num(v)?);
            } else if let Some(metric) = k.strip_prefix("max.") {
                let b = bounds.entry(metric.into()).or_insert_with(|| Bound {
                    metric: metric.into(),
                    min: None,
                    max: None,
                });
                b.max = Some(num(v)?);
            } else if let Some(sk) = k.strip_prefix("synth.") {
                synth_keys.push((idx + 1, sk.to_string(), v.to_string()));
            } else {
                match k {
                    "name" => name = Some(v.to_string()),
                    "seed" => seed = v.parse().map_err(|_| err(format!("bad seed {v:?}")))?,
                    "budget_s" => budget = Some(num(v)?),
                    "phone_tolerance_frames" => {
                        tol = v.parse().map_err(|_| err(format!("bad tolerance {v:?}")))?
                    }
                    _ => overrides.push((k.to_string(), v.to_string())),
                }
            }
        }
        let missing = |what: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("missing {what}"),
        };
        let name = name.ok_or_else(|| missing("name"))?;
        let budget_s = budget.ok_or_else(|| missing("budget_s"))?;
        if bounds.is_empty() {
            return Err(missing("metric bounds"));
        }
        let mut synth = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        for (line, k, v) in synth_keys {
            set_synth(&mut synth, &k, &v).map_err(|msg| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            })?;
        }
        synth.validate()?;
        // catch unknown pipeline keys before anything runs
        let mut probe = PipelineConfig::default();
        for (k, v) in &overrides {
            probe.set(k, v)?;
        }
        Ok(Self {
            name,
            seed,
            synth,
            overrides,
            bounds: bounds.into_values().collect(),
            budget_s,
            phone_tolerance_frames: tol,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse(&text, path)
    }
}

fn set_synth(s: &mut SynthConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    fn p<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
        v.parse().map_err(|_| format!("bad value {v:?}"))
    }
    match key {
        "num_phones" => s.num_phones = p(v)?,
        "num_utts" => s.num_utts = p(v)?,
        "dim" => s.dim = p(v)?,
        "noise_var" => s.noise_var = p(v)?,
        "min_dur" => s.min_dur = p(v)?,
        "max_dur" => s.max_dur = p(v)?,
        "lexicon_size" => s.lexicon_size = p(v)?,
        "min_words" => s.min_words = p(v)?,
        "max_words" => s.max_words = p(v)?,
        "frame_period_s" => s.frame_period_s = p(v)?,
        _ => return Err(format!("unknown synth key {key:?}")),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
    pub violations: Vec<(Bound, Option<f64>)>,
    pub elapsed_s: f64,
    pub budget_s: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.elapsed_s <= self.budget_s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name: {}", self.name);
        for (k, v) in &self.metrics {
            let _ = writeln!(out, "{k}: {v:.6}");
        }
        let _ = writeln!(out, "elapsed_s: {:.1}", self.elapsed_s);
        let _ = writeln!(out, "budget_s: {}", self.budget_s);
        for (b, v) in &self.violations {
            let shown = v.map_or("missing".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "violated: {} = {} (want {})", b.metric, shown, b.describe());
        }
        let _ = writeln!(out, "pass: {}", self.passed());
        out
    }
}

/// Frame embeddings grouped by the gold phone under each frame's centre.
fn cosine_gap(pipe: &Pipeline, gold: &[crate::alignment::GoldAlignment]) -> Result<(f64, f64)> {
    let gold: BTreeMap<&str, _> = gold.iter().map(|g| (g.utt_id.as_str(), g)).collect();
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut frames: Vec<Vec<f32>> = Vec::new();
    let mut labels = Vec::new();
    for e in read_manifest(pipe.path(Stage::Embed.output()))? {
        let z = read_features(&e.path)?;
        let Some(g) = gold.get(e.utt_id.as_str()) else {
            continue;
        };
        for (t, row) in z.values.row_iter().enumerate() {
            let centre = (t as f64 + 0.5) * z.frame_period_s;
            if let Some(p) = g.phones.iter().find(|p| p.start_s <= centre && centre < p.end_s) {
                let next = ids.len();
                labels.push(*ids.entry(p.label.clone()).or_insert(next));
                frames.push(row.to_vec());
            }
        }
    }
    let refs: Vec<&[f32]> = frames.iter().map(Vec::as_slice).collect();
    Ok(within_cross_cosine(&refs, &labels))
}

/// Generates the corpus, runs the full pipeline and collects metrics,
/// without checking bounds or budget.
pub fn measure_experiment(spec: &ExperimentSpec, workdir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let start = Instant::now();
    let workdir = workdir.as_ref();
    let (_, files) = gen_synthetic_corpus(&spec.synth, workdir.join("corpus"))?;
    let mut cfg = PipelineConfig {
        manifest: Some(files.manifest),
        phones: Some(files.phones.clone()),
        words: Some(files.words.clone()),
        workdir: workdir.join("run"),
        ..PipelineConfig::default()
    };
    cfg.sea.rng_seed = spec.seed as u32;
    for (k, v) in &spec.overrides {
        cfg.set(k, v)?;
    }
    let pipe = Pipeline::new(
        cfg,
        RunOptions {
            jobs: 0,
            force: true,
        },
    )?;
    pipe.run_all()?;

    let mut metrics = parse_metrics(&fs::read_to_string(pipe.path(Stage::Evaluate.output()))?);
    let gold = load_gold(&files.phones, Some(&files.words))?;
    let (within, cross) = cosine_gap(&pipe, &gold)?;
    metrics.insert("within_cosine".into(), within);
    metrics.insert("cross_cosine".into(), cross);
    metrics.insert("cosine_gap".into(), within - cross);

    let seg_path = pipe.path(Stage::Segment.output());
    let segments = parse_segments(&fs::read_to_string(&seg_path)?, &seg_path)?;
    let period = spec.synth.frame_period_s;
    let mut hyp: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in segments.iter().filter(|s| s.start_frame > 0) {
        hyp.entry(s.utt_id.clone()).or_default().push(s.start_frame as f64 * period);
    }
    let prf = boundary_prf(
        &hyp,
        &phone_boundaries(&gold),
        spec.phone_tolerance_frames as f64 * period,
    );
    metrics.insert("phone_boundary_p".into(), prf.precision);
    metrics.insert("phone_boundary_r".into(), prf.recall);
    metrics.insert("phone_boundary_f".into(), prf.fscore);

    let violations = spec
        .bounds
        .iter()
        .filter_map(|b| match metrics.get(&b.metric) {
            Some(&v) if b.holds(v) => None,
            v => Some((b.clone(), v.copied())),
        })
        .collect();
    Ok(ExperimentReport {
        name: spec.name.clone(),
        metrics,
        violations,
        elapsed_s: start.elapsed().as_secs_f64(),
        budget_s: spec.budget_s,
    })
}

/// Runs an experiment, writes `report.txt` under `workdir`, and fails when
/// a bound is violated or the budget is exceeded.
pub fn run_experiment(spec: &ExperimentSpec, workdir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let workdir = workdir.as_ref();
    let report = measure_experiment(spec, workdir)?;
    fs::write(report_path(workdir), report.to_text())?;
    if let Some((b, v)) = report.violations.first() {
        return Err(Error::BoundViolated {
            metric: b.metric.clone(),
            value: v.unwrap_or(f64::NAN),
            bound: b.describe(),
        });
    }
    if report.elapsed_s > report.budget_s {
        return Err(Error::BudgetExceeded {
            budget_s: report.budget_s,
            elapsed_s: report.elapsed_s,
        });
    }
    Ok(report)
}

pub fn report_path(workdir: &Path) -> PathBuf {
    workdir.join("report.txt")
}

/// Directory holding the bundled experiment specs.
pub fn experiments_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("experiments")
}
