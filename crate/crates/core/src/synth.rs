//! Synthetic corpora with known phone and word structure.
//!
//! Each phone is a Gaussian cloud around a fixed mean; utterances are
//! strings of words from a small lexicon of phone bigrams and trigrams.
//! The generator keeps its own frame-level labels so tests can score
//! against exact boundaries.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::alignment::{format_tier, write_manifest, GoldAlignment, Interval, ManifestEntry, Tier};
use crate::error::{Error, Result};
use crate::features::{write_features, FrameMatrix};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_phones: usize,
    pub num_utts: usize,
    pub seed: u64,
    pub dim: usize,
    pub noise_var: f64,
    pub min_dur: usize,
    pub max_dur: usize,
    pub lexicon_size: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub frame_period_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_phones: 2,
            num_utts: 50,
            seed: 0,
            dim: 13,
            noise_var: 0.1,
            min_dur: 5,
            max_dur: 20,
            lexicon_size: 4,
            min_words: 2,
            max_words: 4,
            frame_period_s: 0.01,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_phones < 2 {
            return bad("num_phones must be >= 2");
        }
        if self.dim == 0 || self.lexicon_size == 0 || self.num_utts == 0 {
            return bad("dim, lexicon_size and num_utts must be positive");
        }
        if self.min_dur == 0 || self.min_dur > self.max_dur {
            return bad("need 1 <= min_dur <= max_dur");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad("need 1 <= min_words <= max_words");
        }
        if !(self.noise_var >= 0.0) || !(self.frame_period_s > 0.0) {
            return bad("noise_var must be >= 0 and frame_period_s > 0");
        }
        Ok(())
    }
}

/// One phone occurrence in frame coordinates, end exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhoneSpan {
    pub phone: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub features: FrameMatrix,
    pub gold: GoldAlignment,
    pub spans: Vec<PhoneSpan>,
}

impl SynthUtterance {
    /// Interior phone boundaries in frames.
    pub fn boundaries(&self) -> Vec<usize> {
        self.spans.iter().skip(1).map(|s| s.start).collect()
    }

    /// Phone index of every frame.
    pub fn frame_labels(&self) -> Vec<usize> {
        self.spans
            .iter()
            .flat_map(|s| std::iter::repeat(s.phone).take(s.end - s.start))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub phone_means: Vec<Vec<f64>>,
    pub lexicon: Vec<Vec<usize>>,
    pub utterances: Vec<SynthUtterance>,
}

pub fn phone_label(p: usize) -> String {
    format!("p{p}")
}

fn word_label(word: &[usize]) -> String {
    word.iter().map(|&p| phone_label(p)).collect::<Vec<_>>().join("_")
}

/// Frames for a fixed phone/duration sequence. Words are optional spans of
/// phone indices `[first, last]` used only for the gold word tier.
pub fn synthesize_utterance<R: Rng>(
    utt_id: &str,
    means: &[Vec<f64>],
    phones: &[(usize, usize)],
    words: &[(String, usize, usize)],
    noise_sd: f64,
    frame_period_s: f64,
    rng: &mut R,
) -> Result<SynthUtterance> {
    let dim = means.first().map_or(0, Vec::len);
    let total: usize = phones.iter().map(|p| p.1).sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut spans = Vec::with_capacity(phones.len());
    let mut t = 0;
    for &(phone, dur) in phones {
        for _ in 0..dur {
            for &m in &means[phone] {
                let z: f64 = StandardNormal.sample(rng);
                data.push((m + noise_sd * z) as f32);
            }
        }
        spans.push(PhoneSpan {
            phone,
            start: t,
            end: t + dur,
        });
        t += dur;
    }
    let secs = |f: usize| f as f64 * frame_period_s;
    let gold = GoldAlignment {
        utt_id: utt_id.to_string(),
        phones: spans
            .iter()
            .map(|s| Interval::new(phone_label(s.phone), secs(s.start), secs(s.end)))
            .collect(),
        words: words
            .iter()
            .map(|(label, first, last)| {
                Interval::new(label.clone(), secs(spans[*first].start), secs(spans[*last].end))
            })
            .collect(),
    };
    let features = FrameMatrix::new(Matrix::new(total, dim, data)?, frame_period_s, utt_id)?;
    Ok(SynthUtterance {
        features,
        gold,
        spans,
    })
}

fn random_word<R: Rng>(num_phones: usize, rng: &mut R) -> Vec<usize> {
    let len = rng.gen_range(2..=3);
    let mut w = vec![rng.gen_range(0..num_phones)];
    while w.len() < len {
        let p = rng.gen_range(0..num_phones);
        if p != *w.last().unwrap() {
            w.push(p);
        }
    }
    w
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phone_means: Vec<Vec<f64>> = (0..cfg.num_phones)
        .map(|_| (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut lexicon: Vec<Vec<usize>> = Vec::new();
    let mut attempts = 0;
    while lexicon.len() < cfg.lexicon_size {
        let w = random_word(cfg.num_phones, &mut rng);
        attempts += 1;
        // small phone sets run out of distinct words; allow repeats then
        if !lexicon.contains(&w) || attempts > 1000 {
            lexicon.push(w);
        }
    }
    let noise = Normal::new(0.0, cfg.noise_var.sqrt()).expect("validated noise variance");
    let noise_sd = noise.std_dev();

    let width = cfg.num_utts.to_string().len().max(4);
    let mut utterances = Vec::with_capacity(cfg.num_utts);
    for u in 0..cfg.num_utts {
        let utt_id = format!("utt{u:0width$}");
        let n_words = rng.gen_range(cfg.min_words..=cfg.max_words);
        let mut phones: Vec<(usize, usize)> = Vec::new();
        let mut words = Vec::new();
        for _ in 0..n_words {
            // consecutive identical phones would merge into one
            let prev = phones.last().map(|p| p.0);
            let choices: Vec<&Vec<usize>> =
                lexicon.iter().filter(|w| Some(w[0]) != prev).collect();
            let word = if choices.is_empty() {
                lexicon.choose(&mut rng).unwrap()
            } else {
                *choices.choose(&mut rng).unwrap()
            };
            let first = phones.len();
            for &p in word {
                phones.push((p, rng.gen_range(cfg.min_dur..=cfg.max_dur)));
            }
            words.push((word_label(word), first, phones.len() - 1));
        }
        utterances.push(synthesize_utterance(
            &utt_id,
            &phone_means,
            &phones,
            &words,
            noise_sd,
            cfg.frame_period_s,
            &mut rng,
        )?);
    }
    Ok(SynthCorpus {
        phone_means,
        lexicon,
        utterances,
    })
}

/// Paths written by [`write_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFiles {
    pub manifest: PathBuf,
    pub phones: PathBuf,
    pub words: PathBuf,
}

/// Writes `features/<utt>.seaf`, `manifest.tsv`, `gold.phn` and `gold.wrd`.
pub fn write_corpus(corpus: &SynthCorpus, out_dir: impl AsRef<Path>) -> Result<CorpusFiles> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out.join("features"))?;
    let mut entries = Vec::with_capacity(corpus.utterances.len());
    for u in &corpus.utterances {
        let rel = PathBuf::from("features").join(format!("{}.seaf", u.gold.utt_id));
        write_features(&u.features, out.join(&rel))?;
        entries.push(ManifestEntry {
            utt_id: u.gold.utt_id.clone(),
            path: rel,
        });
    }
    let files = CorpusFiles {
        manifest: out.join("manifest.tsv"),
        phones: out.join("gold.phn"),
        words: out.join("gold.wrd"),
    };
    write_manifest(&entries, &files.manifest)?;
    let gold: Vec<GoldAlignment> = corpus.utterances.iter().map(|u| u.gold.clone()).collect();
    fs::write(&files.phones, format_tier(&gold, Tier::Phones))?;
    fs::write(&files.words, format_tier(&gold, Tier::Words))?;
    Ok(files)
}

pub fn gen_synthetic_corpus(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<(SynthCorpus, CorpusFiles)> {
    let corpus = generate(cfg)?;
    let files = write_corpus(&corpus, out_dir)?;
    Ok((corpus, files))
}

/// Utterances whose frames are a fixed linear map of a few latent factors
/// plus small noise; a reconstruction model should fit them easily.
pub fn linear_factor_corpus(
    num_utts: usize,
    frames: usize,
    dim: usize,
    rank: usize,
    seed: u64,
) -> Vec<Matrix<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixing: Vec<f64> = (0..rank * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    (0..num_utts)
        .map(|_| {
            let mut data = Vec::with_capacity(frames * dim);
            for _ in 0..frames {
                let s: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect();
                for j in 0..dim {
                    let clean: f64 = (0..rank).map(|r| s[r] * mixing[r * dim + j]).sum();
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push((clean / (rank as f64).sqrt() + 0.01 * z) as f32);
                }
            }
            Matrix::new(frames, dim, data).expect("data length matches shape")
        })
        .collect()
}

/// Mean pairwise cosine of frames with equal versus different labels.
pub fn within_cross_cosine(frames: &[&[f32]], labels: &[usize]) -> (f64, f64) {
    assert_eq!(frames.len(), labels.len());
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let dim = frames.first().map_or(0, |f| f.len());
    // sum of unit vectors per class gives all pair sums in O(n)
    let mut sums = vec![vec![0.0f64; dim]; classes];
    let mut counts = vec![0usize; classes];
    let mut self_terms = vec![0.0f64; classes];
    for (f, &l) in frames.iter().zip(labels) {
        let n = f.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        counts[l] += 1;
        if n > 0.0 {
            for (s, &v) in sums[l].iter_mut().zip(*f) {
                *s += v as f64 / n;
            }
            self_terms[l] += 1.0;
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (mut within, mut within_pairs) = (0.0, 0.0);
    let (mut cross, mut cross_pairs) = (0.0, 0.0);
    for a in 0..classes {
        let na = counts[a] as f64;
        within += (dot(&sums[a], &sums[a]) - self_terms[a]) / 2.0;
        within_pairs += na * (na - 1.0) / 2.0;
        for b in a + 1..classes {
            cross += dot(&sums[a], &sums[b]);
            cross_pairs += na * counts[b] as f64;
        }
    }
    let mean = |s: f64, n: f64| if n > 0.0 { s / n } else { 0.0 };
    (mean(within, within_pairs), mean(cross, cross_pairs))
}
