//! Scoring discovered words against gold phone and word alignments.
//!
//! NED, coverage and the boundary/token/type scores follow the usual
//! term-discovery conventions but are not a byte-compatible clone of any
//! official scorer; treat cross-system comparisons as indicative.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::alignment::{GoldAlignment, Interval};
use crate::words::ClassEntry;

/// Slack added to time comparisons so that values printed with limited
/// precision still match.
const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let fscore = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            fscore,
        }
    }

    /// Ratios with an empty denominator are 0.
    pub fn from_counts(matched: usize, hyp: usize, gold: usize) -> Self {
        let ratio = |d: usize| if d == 0 { 0.0 } else { matched as f64 / d as f64 };
        Self::new(ratio(hyp), ratio(gold))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub boundary_tolerance_s: f64,
    pub overlap_min_fraction: f64,
    pub overlap_min_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            boundary_tolerance_s: 0.03,
            overlap_min_fraction: 0.5,
            overlap_min_s: 0.03,
        }
    }
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn overlaps(phone: &Interval, start_s: f64, end_s: f64, cfg: &EvalConfig) -> bool {
    let ov = phone.end_s.min(end_s) - phone.start_s.max(start_s);
    if ov <= 0.0 {
        return false;
    }
    ov + TIME_SLACK >= cfg.overlap_min_fraction * phone.duration()
        || ov + TIME_SLACK >= cfg.overlap_min_s
}

/// Gold phones that an interval covers, in temporal order.
pub fn transcribe_interval(
    gold: &GoldAlignment,
    start_s: f64,
    end_s: f64,
    cfg: &EvalConfig,
) -> Vec<String> {
    gold.phones
        .iter()
        .filter(|p| overlaps(p, start_s, end_s, cfg))
        .map(|p| p.label.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NedScore {
    pub value: f64,
    pub pairs: usize,
}

impl NedScore {
    /// No class had two tokens, so the value 0 carries no information.
    pub fn no_pairs(&self) -> bool {
        self.pairs == 0
    }
}

/// Mean normalized edit distance over all within-class token pairs.
pub fn ned<S: AsRef<[String]>>(classes: &[Vec<S>]) -> NedScore {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for class in classes {
        for i in 0..class.len() {
            for j in i + 1..class.len() {
                let (a, b) = (class[i].as_ref(), class[j].as_ref());
                let longest = a.len().max(b.len()).max(1);
                total += edit_distance(a, b) as f64 / longest as f64;
                pairs += 1;
            }
        }
    }
    NedScore {
        value: if pairs == 0 { 0.0 } else { total / pairs as f64 },
        pairs,
    }
}

fn gold_index(gold: &[GoldAlignment]) -> HashMap<&str, &GoldAlignment> {
    gold.iter().map(|g| (g.utt_id.as_str(), g)).collect()
}

/// Fraction of gold phones included in at least one token interval.
pub fn coverage(tokens: &[ClassEntry], gold: &[GoldAlignment], cfg: &EvalConfig) -> f64 {
    let total: usize = gold.iter().map(|g| g.phones.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let mut by_utt: HashMap<&str, Vec<&ClassEntry>> = HashMap::new();
    for t in tokens {
        by_utt.entry(t.utt_id.as_str()).or_default().push(t);
    }
    let covered: usize = gold
        .iter()
        .map(|g| {
            let toks = by_utt.get(g.utt_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            g.phones
                .iter()
                .filter(|p| toks.iter().any(|t| overlaps(p, t.start_s, t.end_s, cfg)))
                .count()
        })
        .sum();
    covered as f64 / total as f64
}

/// Greedy matching: each hypothesis, in temporal order, takes the nearest
/// still-unmatched gold time within `tol`.
fn greedy_match(hyp: &[f64], gold: &[f64], tol: f64) -> usize {
    let mut used = vec![false; gold.len()];
    let mut matched = 0;
    for &h in hyp {
        let best = gold
            .iter()
            .enumerate()
            .filter(|&(k, &g)| !used[k] && (g - h).abs() <= tol + TIME_SLACK)
            .min_by(|a, b| (a.1 - h).abs().total_cmp(&(b.1 - h).abs()));
        if let Some((k, _)) = best {
            used[k] = true;
            matched += 1;
        }
    }
    matched
}

/// Boundary precision/recall over per-utterance sorted time lists.
pub fn boundary_prf(
    hyp: &BTreeMap<String, Vec<f64>>,
    gold: &BTreeMap<String, Vec<f64>>,
    tol: f64,
) -> Prf {
    let n_hyp: usize = hyp.values().map(Vec::len).sum();
    let n_gold: usize = gold.values().map(Vec::len).sum();
    let matched: usize = hyp
        .iter()
        .map(|(utt, h)| gold.get(utt).map_or(0, |g| greedy_match(h, g, tol)))
        .sum();
    Prf::from_counts(matched, n_hyp, n_gold)
}

fn sorted_dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= TIME_SLACK);
    v
}

/// All token edges per utterance.
pub fn token_boundaries(tokens: &[ClassEntry]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in tokens {
        out.entry(t.utt_id.clone()).or_default().extend([t.start_s, t.end_s]);
    }
    out.into_iter().map(|(k, v)| (k, sorted_dedup(v))).collect()
}

/// All gold word edges per utterance.
pub fn word_boundaries(gold: &[GoldAlignment]) -> BTreeMap<String, Vec<f64>> {
    gold.iter()
        .map(|g| {
            let edges = g.words.iter().flat_map(|w| [w.start_s, w.end_s]).collect();
            (g.utt_id.clone(), sorted_dedup(edges))
        })
        .collect()
}

/// Interior gold phone boundaries per utterance (utterance edges left out).
pub fn phone_boundaries(gold: &[GoldAlignment]) -> BTreeMap<String, Vec<f64>> {
    gold.iter()
        .map(|g| {
            let edges = g.phones.iter().skip(1).map(|p| p.start_s).collect();
            (g.utt_id.clone(), sorted_dedup(edges))
        })
        .collect()
}

fn majority(transcriptions: &[Vec<String>]) -> Option<Vec<String>> {
    let mut counts: BTreeMap<&Vec<String>, usize> = BTreeMap::new();
    for t in transcriptions.iter().filter(|t| !t.is_empty()) {
        *counts.entry(t).or_default() += 1;
    }
    // BTreeMap iterates lexicographically and the fold keeps the first of
    // equal counts, so ties go to the smallest sequence
    counts
        .into_iter()
        .fold(None, |best: Option<(&Vec<String>, usize)>, (t, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((t, c)),
        })
        .map(|(t, _)| t.clone())
}

/// Token and type precision/recall/F.
pub fn token_type_prf(tokens: &[ClassEntry], gold: &[GoldAlignment], cfg: &EvalConfig) -> (Prf, Prf) {
    let index = gold_index(gold);
    let tol = cfg.boundary_tolerance_s + TIME_SLACK;
    let n_gold_words: usize = gold.iter().map(|g| g.words.len()).sum();

    let mut order: Vec<&ClassEntry> = tokens.iter().collect();
    order.sort_by(|a, b| {
        a.utt_id
            .cmp(&b.utt_id)
            .then(a.start_s.total_cmp(&b.start_s))
            .then(a.end_s.total_cmp(&b.end_s))
    });
    let mut used: HashMap<&str, Vec<bool>> = HashMap::new();
    let mut matched = 0;
    for t in order {
        let Some(g) = index.get(t.utt_id.as_str()) else {
            continue;
        };
        let used = used
            .entry(g.utt_id.as_str())
            .or_insert_with(|| vec![false; g.words.len()]);
        let best = g
            .words
            .iter()
            .enumerate()
            .filter(|&(k, w)| {
                !used[k] && (w.start_s - t.start_s).abs() <= tol && (w.end_s - t.end_s).abs() <= tol
            })
            .min_by(|a, b| {
                let da = (a.1.start_s - t.start_s).abs() + (a.1.end_s - t.end_s).abs();
                let db = (b.1.start_s - t.start_s).abs() + (b.1.end_s - t.end_s).abs();
                da.total_cmp(&db)
            });
        if let Some((k, _)) = best {
            used[k] = true;
            matched += 1;
        }
    }
    let token = Prf::from_counts(matched, tokens.len(), n_gold_words);

    let mut by_class: BTreeMap<u32, Vec<Vec<String>>> = BTreeMap::new();
    for t in tokens {
        let tr = index
            .get(t.utt_id.as_str())
            .map(|g| transcribe_interval(g, t.start_s, t.end_s, cfg))
            .unwrap_or_default();
        by_class.entry(t.class_id).or_default().push(tr);
    }
    let hyp_types: BTreeSet<Vec<String>> = by_class.values().filter_map(|c| majority(c)).collect();
    let gold_types: BTreeSet<Vec<String>> = gold
        .iter()
        .flat_map(|g| {
            g.words
                .iter()
                .map(|w| transcribe_interval(g, w.start_s, w.end_s, cfg))
        })
        .filter(|t| !t.is_empty())
        .collect();
    let shared = hyp_types.intersection(&gold_types).count();
    let ty = Prf::from_counts(shared, hyp_types.len(), gold_types.len());
    (token, ty)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ned: f64,
    pub ned_pairs: usize,
    pub coverage: f64,
    pub boundary: Prf,
    pub token: Prf,
    pub ty: Prf,
}

impl Metrics {
    /// Flat `(key, value)` list shared by both report formats.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("ned", self.ned),
            ("coverage", self.coverage),
            ("boundary_p", self.boundary.precision),
            ("boundary_r", self.boundary.recall),
            ("boundary_f", self.boundary.fscore),
            ("token_p", self.token.precision),
            ("token_r", self.token.recall),
            ("token_f", self.token.fscore),
            ("type_p", self.ty.precision),
            ("type_r", self.ty.recall),
            ("type_f", self.ty.fscore),
        ]
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}: {v:.6}");
        }
        if self.ned_pairs == 0 {
            out.push_str("# warning: no class has two tokens, ned is undefined\n");
        }
        out
    }

    /// Header row of keys and one row of values, tab separated.
    pub fn to_tsv(&self) -> String {
        let e = self.entries();
        let keys: Vec<&str> = e.iter().map(|(k, _)| *k).collect();
        let vals: Vec<String> = e.iter().map(|(_, v)| format!("{v:.6}")).collect();
        format!("{}\n{}\n", keys.join("\t"), vals.join("\t"))
    }
}

/// Every metric for one set of discovered tokens.
pub fn evaluate(tokens: &[ClassEntry], gold: &[GoldAlignment], cfg: &EvalConfig) -> Metrics {
    let index = gold_index(gold);
    let mut classes: BTreeMap<u32, Vec<Vec<String>>> = BTreeMap::new();
    for t in tokens {
        if let Some(g) = index.get(t.utt_id.as_str()) {
            classes
                .entry(t.class_id)
                .or_default()
                .push(transcribe_interval(g, t.start_s, t.end_s, cfg));
        }
    }
    let classes: Vec<Vec<Vec<String>>> = classes.into_values().collect();
    let n = ned(&classes);
    let boundary = boundary_prf(
        &token_boundaries(tokens),
        &word_boundaries(gold),
        cfg.boundary_tolerance_s,
    );
    let (token, ty) = token_type_prf(tokens, gold, cfg);
    Metrics {
        ned: n.value,
        ned_pairs: n.pairs,
        coverage: coverage(tokens, gold, cfg),
        boundary,
        token,
        ty,
    }
}
