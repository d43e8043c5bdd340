//! Pipeline configuration: one flat key space shared by config files
//! (`key = value` lines) and command-line overrides.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::mfcc::MfccConfig;
use crate::model::SeaConfig;
use crate::segmentation::SegConfig;

/// What the segmenter runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedSource {
    /// Label-branch embeddings of the trained model.
    Sea,
    /// The normalized input features themselves.
    Features,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub phones: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub workdir: PathBuf,
    pub mfcc: MfccConfig,
    pub sea: SeaConfig,
    pub seg: SegConfig,
    pub cluster_threshold: f64,
    pub max_n: usize,
    pub eval: EvalConfig,
    pub embed_source: EmbedSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            phones: None,
            words: None,
            workdir: PathBuf::from("work"),
            mfcc: MfccConfig::default(),
            sea: SeaConfig::default(),
            seg: SegConfig::default(),
            cluster_threshold: 0.6,
            max_n: crate::words::MAX_NGRAM,
            eval: EvalConfig::default(),
            embed_source: EmbedSource::Sea,
        }
    }
}

/// Every settable key with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("manifest", "utterance manifest (utt_id<TAB>path, .wav or .seaf)"),
    ("phones", "gold phone alignment"),
    ("words", "gold word alignment"),
    ("workdir", "directory for stage outputs"),
    ("seed", "random seed for initialization and shuffling"),
    ("window_length_s", "MFCC analysis window in seconds"),
    ("hop_length_s", "MFCC hop in seconds"),
    ("num_mel_filters", "mel filterbank size"),
    ("num_cepstra", "cepstral coefficients kept"),
    ("hidden_dim", "autoencoder hidden width"),
    ("embed_dim", "label embedding width"),
    ("chunk_frames", "training chunk length in frames"),
    ("learning_rate", "SGD learning rate"),
    ("momentum", "SGD momentum"),
    ("pretrain_epochs", "plain autoencoder epochs"),
    ("sea_epochs", "self-expressing epochs"),
    ("stop_gradient", "treat self-expression weights as constants (true/false)"),
    ("tau", "consecutive dissimilar frames for an endpoint"),
    ("min_frames", "minimum segment length"),
    ("max_frames", "maximum segment length"),
    ("exclude_diagonal", "leave the diagonal out of the segmentation threshold"),
    ("cluster_threshold", "cosine threshold for joining a cluster"),
    ("max_n", "longest word n-gram"),
    ("boundary_tolerance_s", "boundary matching tolerance in seconds"),
    ("overlap_min_fraction", "phone overlap fraction for transcription"),
    ("overlap_min_s", "phone overlap seconds for transcription"),
    ("embed_source", "segment on `sea` embeddings or raw `features`"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}"))),
    }
}

impl PipelineConfig {
    /// Sets one key. Relative paths are resolved against `base`.
    pub fn set_with_base(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let value = value.trim();
        let path = || {
            let p = PathBuf::from(value);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "manifest" => self.manifest = Some(path()),
            "phones" => self.phones = Some(path()),
            "words" => self.words = Some(path()),
            "workdir" => self.workdir = path(),
            "seed" => self.sea.rng_seed = parse(key, value)?,
            "window_length_s" => self.mfcc.window_length_s = parse(key, value)?,
            "hop_length_s" => self.mfcc.hop_length_s = parse(key, value)?,
            "num_mel_filters" => self.mfcc.num_mel_filters = parse(key, value)?,
            "num_cepstra" => self.mfcc.num_cepstra = parse(key, value)?,
            "hidden_dim" => self.sea.hidden_dim = parse(key, value)?,
            "embed_dim" => self.sea.embed_dim = parse(key, value)?,
            "chunk_frames" => self.sea.chunk_frames = parse(key, value)?,
            "learning_rate" => self.sea.learning_rate = parse(key, value)?,
            "momentum" => self.sea.momentum = parse(key, value)?,
            "pretrain_epochs" => self.sea.pretrain_epochs = parse(key, value)?,
            "sea_epochs" => self.sea.sea_epochs = parse(key, value)?,
            "stop_gradient" => self.sea.stop_gradient = parse_bool(key, value)?,
            "tau" => self.seg.tau = parse(key, value)?,
            "min_frames" => self.seg.min_frames = parse(key, value)?,
            "max_frames" => self.seg.max_frames = parse(key, value)?,
            "exclude_diagonal" => self.seg.exclude_diagonal = parse_bool(key, value)?,
            "cluster_threshold" => self.cluster_threshold = parse(key, value)?,
            "max_n" => self.max_n = parse(key, value)?,
            "boundary_tolerance_s" => self.eval.boundary_tolerance_s = parse(key, value)?,
            "overlap_min_fraction" => self.eval.overlap_min_fraction = parse(key, value)?,
            "overlap_min_s" => self.eval.overlap_min_s = parse(key, value)?,
            "embed_source" => {
                self.embed_source = match value {
                    "sea" => EmbedSource::Sea,
                    "features" | "mfcc" => EmbedSource::Features,
                    _ => return Err(Error::Config(format!("invalid value {value:?} for {key}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Sets one key; relative paths stay relative to the working directory.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_with_base(key, value, Path::new(""))
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "expected key = value".into(),
            })?;
            self.set_with_base(k.trim(), v, base).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mfcc.validate()?;
        self.seg.validate()?;
        if !(0.0..=1.0 + 1e-6).contains(&self.cluster_threshold) {
            return Err(Error::Config("cluster_threshold must lie in [0, 1]".into()));
        }
        if self.max_n < 1 {
            return Err(Error::Config("max_n must be >= 1".into()));
        }
        let e = &self.eval;
        if !(e.boundary_tolerance_s > 0.0 && e.overlap_min_fraction > 0.0 && e.overlap_min_s > 0.0) {
            return Err(Error::Config("evaluation tolerances must be positive".into()));
        }
        Ok(())
    }

    /// All keys as `key = value` lines; loading the text gives this config back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let p = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string());
        if let Some(v) = p(&self.manifest) {
            line("manifest", v);
        }
        if let Some(v) = p(&self.phones) {
            line("phones", v);
        }
        if let Some(v) = p(&self.words) {
            line("words", v);
        }
        line("workdir", self.workdir.display().to_string());
        line("seed", self.sea.rng_seed.to_string());
        line("window_length_s", self.mfcc.window_length_s.to_string());
        line("hop_length_s", self.mfcc.hop_length_s.to_string());
        line("num_mel_filters", self.mfcc.num_mel_filters.to_string());
        line("num_cepstra", self.mfcc.num_cepstra.to_string());
        line("hidden_dim", self.sea.hidden_dim.to_string());
        line("embed_dim", self.sea.embed_dim.to_string());
        line("chunk_frames", self.sea.chunk_frames.to_string());
        line("learning_rate", self.sea.learning_rate.to_string());
        line("momentum", self.sea.momentum.to_string());
        line("pretrain_epochs", self.sea.pretrain_epochs.to_string());
        line("sea_epochs", self.sea.sea_epochs.to_string());
        line("stop_gradient", self.sea.stop_gradient.to_string());
        line("tau", self.seg.tau.to_string());
        line("min_frames", self.seg.min_frames.to_string());
        line("max_frames", self.seg.max_frames.to_string());
        line("exclude_diagonal", self.seg.exclude_diagonal.to_string());
        line("cluster_threshold", self.cluster_threshold.to_string());
        line("max_n", self.max_n.to_string());
        line("boundary_tolerance_s", self.eval.boundary_tolerance_s.to_string());
        line("overlap_min_fraction", self.eval.overlap_min_fraction.to_string());
        line("overlap_min_s", self.eval.overlap_min_s.to_string());
        let src = match self.embed_source {
            EmbedSource::Sea => "sea",
            EmbedSource::Features => "features",
        };
        line("embed_source", src.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_settable() {
        let defaults = PipelineConfig::default().to_text();
        for (key, _) in CONFIG_KEYS {
            let mut cfg = PipelineConfig::default();
            let value = defaults
                .lines()
                .find_map(|l| l.strip_prefix(&format!("{key} = ")))
                .unwrap_or("x");
            cfg.set(key, value).unwrap();
        }
        assert!(PipelineConfig::default().set("nope", "1").is_err());
        assert!(PipelineConfig::default().set("tau", "two").is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("manifest", "/data/m.tsv").unwrap();
        cfg.set("workdir", "/data/work").unwrap();
        cfg.set("hidden_dim", "32").unwrap();
        cfg.set("learning_rate", "0.005").unwrap();
        cfg.set("stop_gradient", "true").unwrap();
        cfg.set("embed_source", "features").unwrap();
        let text = cfg.to_text();
        let mut back = PipelineConfig::default();
        back.apply_text(&text, Path::new("/conf/x.conf")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn file_paths_resolve_against_config_dir() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("# corpus\nmanifest = corpus/m.tsv\nseed=7 # trailing\n", Path::new("/exp/run.conf"))
            .unwrap();
        assert_eq!(cfg.manifest, Some(PathBuf::from("/exp/corpus/m.tsv")));
        assert_eq!(cfg.sea.rng_seed, 7);
        let err = cfg.apply_text("seed\n", Path::new("c")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let mut cfg = PipelineConfig::default();
        cfg.cluster_threshold = 1.5;
        assert!(cfg.validate().is_err());
    }
}
