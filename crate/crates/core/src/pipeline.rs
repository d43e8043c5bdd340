//! Stage orchestration over a work directory.
//!
//! Each stage reads the files written by earlier stages and writes its own;
//! nothing is kept in memory between stages. A stage whose main output file
//! already exists is skipped unless `force` is set. Main outputs are written
//! through a temporary file and renamed, so an interrupted stage never looks
//! finished.
//!
//! ```text
//! features.tsv, features/<utt>.seaf      normalized input features
//! pretrain.seam, pretrain_loss.tsv       stage-one autoencoder
//! model.seam, train_loss.tsv             self-expressing model
//! embeddings.tsv, embeddings/<utt>.seaf  frame embeddings
//! segments.txt                           utt start end
//! clusters.txt                           utt start end cluster
//! words.txt                              Class blocks, seconds
//! metrics.txt, metrics.tsv               scores
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::alignment::{load_gold, read_manifest, write_manifest, ManifestEntry};
use crate::audio::read_wav;
use crate::clustering::{grow_clusters, label_segments, segment_embedding};
use crate::config::{EmbedSource, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::features::{normalize_features, read_features, write_features, FrameMatrix};
use crate::mfcc::compute_mfcc;
use crate::model::{
    embed_utterance, load_checkpoint, pretrain_autoencoder, save_checkpoint, train_sea, EpochLoss,
};
use crate::plot::emit_similarity_plot;
use crate::segmentation::{format_segments, parse_segments, segment_boundaries, segment_utterance, similarity_matrix, Segment};
use crate::words::{
    discover_words, format_word_classes, parse_word_classes, sequences_from_segments, to_class_entries,
    tokens_to_intervals,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Features,
    Pretrain,
    Train,
    Embed,
    Segment,
    Cluster,
    Discover,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Features,
        Stage::Pretrain,
        Stage::Train,
        Stage::Embed,
        Stage::Segment,
        Stage::Cluster,
        Stage::Discover,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Features => "features",
            Stage::Pretrain => "pretrain",
            Stage::Train => "train",
            Stage::Embed => "embed",
            Stage::Segment => "segment",
            Stage::Cluster => "cluster",
            Stage::Discover => "discover",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }

    /// The file whose presence marks the stage as done.
    pub fn output(self) -> &'static str {
        match self {
            Stage::Features => "features.tsv",
            Stage::Pretrain => "pretrain.seam",
            Stage::Train => "model.seam",
            Stage::Embed => "embeddings.tsv",
            Stage::Segment => "segments.txt",
            Stage::Cluster => "clusters.txt",
            Stage::Discover => "words.txt",
            Stage::Evaluate => "metrics.txt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads for per-utterance stages; 0 picks the core count.
    pub jobs: usize,
    pub force: bool,
}

/// Writes through `<path>.partial` and renames.
pub fn write_atomic(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn format_losses(epochs: &[EpochLoss]) -> String {
    let mut out = String::from("epoch\tdirect\texpressed\ttotal\n");
    for (i, e) in epochs.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", i + 1, e.direct, e.expressed, e.total);
    }
    out
}

/// Parses `key: value` metric lines, skipping comments and non-numeric values.
pub fn parse_metrics(text: &str) -> BTreeMap<String, f64> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once(':'))
        .filter_map(|(k, v)| Some((k.trim().to_string(), v.trim().parse().ok()?)))
        .collect()
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub opts: RunOptions,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, opts: RunOptions) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self { cfg, opts, pool })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.workdir.join(name)
    }

    /// Stages that apply to this configuration, in order.
    pub fn stages(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| {
                self.cfg.embed_source == EmbedSource::Sea || !matches!(s, Stage::Pretrain | Stage::Train)
            })
            .filter(|s| *s != Stage::Evaluate || self.cfg.phones.is_some())
            .collect()
    }

    pub fn run(&self, stages: &[Stage]) -> Result<Vec<(Stage, StageStatus)>> {
        stages
            .iter()
            .map(|&s| Ok((s, self.run_stage(s)?)))
            .collect()
    }

    pub fn run_all(&self) -> Result<Vec<(Stage, StageStatus)>> {
        self.run(&self.stages())
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageStatus> {
        if !self.opts.force && self.path(stage.output()).exists() {
            return Ok(StageStatus::Skipped);
        }
        let result = fs::create_dir_all(&self.cfg.workdir)
            .map_err(Error::from)
            .and_then(|_| match stage {
                Stage::Features => self.features(),
                Stage::Pretrain => self.pretrain(),
                Stage::Train => self.train(),
                Stage::Embed => self.embed(),
                Stage::Segment => self.segment(),
                Stage::Cluster => self.cluster(),
                Stage::Discover => self.discover(),
                Stage::Evaluate => self.evaluate(),
            });
        result.map(|_| StageStatus::Ran).map_err(|e| Error::Stage {
            stage: stage.name(),
            source: Box::new(e),
        })
    }

    /// Reads every file of a stage manifest in parallel, in manifest order.
    fn load_all(&self, manifest: &str) -> Result<Vec<FrameMatrix>> {
        let entries = read_manifest(self.path(manifest))?;
        self.pool.install(|| {
            entries
                .par_iter()
                .map(|e| {
                    let mut f = read_features(&e.path)?;
                    f.utt_id = e.utt_id.clone();
                    Ok(f)
                })
                .collect()
        })
    }

    /// Writes one matrix per utterance under `dir`, then the listing file.
    fn write_all(&self, feats: &[FrameMatrix], dir: &str, manifest: &str) -> Result<()> {
        fs::create_dir_all(self.path(dir))?;
        self.pool.install(|| {
            feats
                .par_iter()
                .try_for_each(|f| write_features(f, self.path(dir).join(format!("{}.seaf", f.utt_id))))
        })?;
        let entries: Vec<ManifestEntry> = feats
            .iter()
            .map(|f| ManifestEntry {
                utt_id: f.utt_id.clone(),
                path: PathBuf::from(dir).join(format!("{}.seaf", f.utt_id)),
            })
            .collect();
        let tmp = self.path(&format!("{manifest}.partial"));
        write_manifest(&entries, &tmp)?;
        fs::rename(tmp, self.path(manifest))?;
        Ok(())
    }

    fn features(&self) -> Result<()> {
        let manifest = self
            .cfg
            .manifest
            .as_ref()
            .ok_or_else(|| Error::Config("no manifest configured".into()))?;
        let entries = read_manifest(manifest)?;
        if entries.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let feats: Vec<FrameMatrix> = self.pool.install(|| {
            entries
                .par_iter()
                .map(|e| {
                    let is_wav = e
                        .path
                        .extension()
                        .is_some_and(|x| x.eq_ignore_ascii_case("wav"));
                    let mut raw = if is_wav {
                        compute_mfcc(&read_wav(&e.path)?, &self.cfg.mfcc, &e.utt_id)?
                    } else {
                        read_features(&e.path)?
                    };
                    raw.utt_id = e.utt_id.clone();
                    Ok(normalize_features(&raw))
                })
                .collect::<Result<_>>()
        })?;
        if let Some(f) = feats.iter().find(|f| f.dim() != feats[0].dim()) {
            return Err(Error::ShapeMismatch(format!(
                "utterance {} has dimension {}, expected {}",
                f.utt_id,
                f.dim(),
                feats[0].dim()
            )));
        }
        self.write_all(&feats, "features", Stage::Features.output())
    }

    fn pretrain(&self) -> Result<()> {
        let feats = self.load_all(Stage::Features.output())?;
        let mut sea = self.cfg.sea.clone();
        sea.input_dim = feats.first().map_or(sea.input_dim, FrameMatrix::dim);
        let report = pretrain_autoencoder(&feats, &sea)?;
        fs::write(self.path("pretrain_loss.tsv"), format_losses(&report.epochs))?;
        let tmp = self.path("pretrain.seam.partial");
        save_checkpoint(&report.params, &sea, &tmp)?;
        fs::rename(tmp, self.path(Stage::Pretrain.output()))?;
        Ok(())
    }

    fn train(&self) -> Result<()> {
        let feats = self.load_all(Stage::Features.output())?;
        let (params, _) = load_checkpoint(self.path(Stage::Pretrain.output()))?;
        let mut sea = self.cfg.sea.clone();
        sea.input_dim = params.input_dim();
        let report = train_sea(params, &feats, &sea)?;
        fs::write(self.path("train_loss.tsv"), format_losses(&report.epochs))?;
        let tmp = self.path("model.seam.partial");
        save_checkpoint(&report.params, &sea, &tmp)?;
        fs::rename(tmp, self.path(Stage::Train.output()))?;
        Ok(())
    }

    fn embed(&self) -> Result<()> {
        let feats = self.load_all(Stage::Features.output())?;
        let embeddings = match self.cfg.embed_source {
            EmbedSource::Features => feats,
            EmbedSource::Sea => {
                let (params, _) = load_checkpoint(self.path(Stage::Train.output()))?;
                self.pool.install(|| {
                    feats
                        .par_iter()
                        .map(|f| {
                            let z = embed_utterance(&params, &f.values)?;
                            FrameMatrix::new(z, f.frame_period_s, f.utt_id.clone())
                        })
                        .collect::<Result<Vec<_>>>()
                })?
            }
        };
        self.write_all(&embeddings, "embeddings", Stage::Embed.output())
    }

    fn segment(&self) -> Result<()> {
        let embeddings = self.load_all(Stage::Embed.output())?;
        let per_utt: Vec<Vec<Segment>> = self.pool.install(|| {
            embeddings
                .par_iter()
                .map(|e| segment_utterance(&e.values, &e.utt_id, &self.cfg.seg))
                .collect::<Result<_>>()
        })?;
        let all: Vec<Segment> = per_utt.into_iter().flatten().collect();
        write_atomic(&self.path(Stage::Segment.output()), format_segments(&all))
    }

    fn read_segments(&self, stage: Stage) -> Result<Vec<Segment>> {
        let path = self.path(stage.output());
        parse_segments(&read_text(&path)?, &path)
    }

    fn cluster(&self) -> Result<()> {
        let embeddings: BTreeMap<String, FrameMatrix> = self
            .load_all(Stage::Embed.output())?
            .into_iter()
            .map(|f| (f.utt_id.clone(), f))
            .collect();
        let mut segments = self.read_segments(Stage::Segment)?;
        segments.sort_by(|a, b| a.utt_id.cmp(&b.utt_id).then(a.start_frame.cmp(&b.start_frame)));
        let pooled: Vec<Vec<f64>> = segments
            .iter()
            .map(|s| {
                let z = embeddings.get(&s.utt_id).ok_or_else(|| {
                    Error::Config(format!("segment for unknown utterance {}", s.utt_id))
                })?;
                segment_embedding(&z.values, s)
            })
            .collect::<Result<_>>()?;
        let (ids, _) = grow_clusters(&pooled, self.cfg.cluster_threshold);
        let labelled = label_segments(&segments, &ids)?;
        write_atomic(&self.path(Stage::Cluster.output()), format_segments(&labelled))
    }

    fn discover(&self) -> Result<()> {
        let periods: BTreeMap<String, f64> = read_manifest(self.path(Stage::Embed.output()))?
            .iter()
            .map(|e| Ok((e.utt_id.clone(), read_features(&e.path)?.frame_period_s)))
            .collect::<Result<_>>()?;
        let mut clustered = self.read_segments(Stage::Cluster)?;
        clustered.sort_by(|a, b| a.utt_id.cmp(&b.utt_id).then(a.start_frame.cmp(&b.start_frame)));
        let sequences = sequences_from_segments(&clustered);
        let mut by_utt: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
        for s in clustered {
            by_utt.entry(s.utt_id.clone()).or_default().push(s);
        }
        let tokens = discover_words(&sequences, self.cfg.max_n);
        let words = tokens_to_intervals(&tokens, &sequences, &by_utt)?;
        let entries = to_class_entries(&words, |u| periods.get(u).copied().unwrap_or(0.01));
        write_atomic(&self.path(Stage::Discover.output()), format_word_classes(&entries))
    }

    fn evaluate(&self) -> Result<()> {
        let phones = self
            .cfg
            .phones
            .as_ref()
            .ok_or_else(|| Error::Config("evaluation needs a phone alignment (phones)".into()))?;
        let gold = load_gold(phones, self.cfg.words.as_deref())?;
        let path = self.path(Stage::Discover.output());
        let tokens = parse_word_classes(&read_text(&path)?, &path)?;
        let metrics = evaluate(&tokens, &gold, &self.cfg.eval);
        fs::write(self.path("metrics.tsv"), metrics.to_tsv())?;
        write_atomic(&self.path(Stage::Evaluate.output()), metrics.to_text())
    }

    /// Similarity image of one utterance's embeddings with segment
    /// boundaries and, when configured, gold phone boundaries.
    pub fn plot_utterance(&self, utt_id: &str, out: &Path) -> Result<()> {
        let path = self.path("embeddings").join(format!("{utt_id}.seaf"));
        let z = read_features(&path)?;
        let g = similarity_matrix(&z.values);
        let seg_path = self.path(Stage::Segment.output());
        let hyp = if seg_path.exists() {
            let segs: Vec<Segment> = self
                .read_segments(Stage::Segment)?
                .into_iter()
                .filter(|s| s.utt_id == utt_id)
                .collect();
            segment_boundaries(&segs)
        } else {
            Vec::new()
        };
        let gold = match &self.cfg.phones {
            Some(p) => load_gold(p, None)?
                .into_iter()
                .find(|g| g.utt_id == utt_id)
                .map(|g| {
                    g.phones
                        .iter()
                        .skip(1)
                        .map(|p| (p.start_s / z.frame_period_s).round() as usize)
                        .collect()
                })
                .unwrap_or_default(),
            None => Vec::new(),
        };
        emit_similarity_plot(&g, &hyp, &gold, out)
    }
}

pub fn run_pipeline(cfg: PipelineConfig, opts: RunOptions) -> Result<Vec<(Stage, StageStatus)>> {
    Pipeline::new(cfg, opts)?.run_all()
}
