//! Word-like units as recurring virtual-phone n-grams.
//!
//! Discovery is greedy and bottom-up: starting from the longest allowed
//! n-gram length, every n-gram with at least two non-overlapping uncovered
//! occurrences is committed and its positions marked covered; shorter
//! lengths follow, and whatever is left becomes unigram tokens. Every
//! position therefore ends up in exactly one token.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::segmentation::Segment;

/// Longest n-gram considered a word.
pub const MAX_NGRAM: usize = 3;

/// Virtual-phone id sequence of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UttSequence {
    pub utt_id: String,
    pub ids: Vec<u32>,
}

/// A position in the corpus: utterance index and offset in its sequence.
pub type Occurrence = (usize, usize);

/// A discovered token in sequence coordinates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PhoneToken {
    pub utt: usize,
    pub position: usize,
    pub phone_ids: Vec<u32>,
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordToken {
    pub utt_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub phone_ids: Vec<u32>,
    pub class_id: u32,
}

/// Length of the uncovered run starting at each position.
fn free_runs(covered: &[bool]) -> Vec<usize> {
    let mut runs = vec![0; covered.len()];
    let mut run = 0;
    for p in (0..covered.len()).rev() {
        run = if covered[p] { 0 } else { run + 1 };
        runs[p] = run;
    }
    runs
}

/// Greedy left-to-right non-overlapping occurrences of every n-gram over
/// uncovered positions; only n-grams occurring at least twice are kept.
pub fn count_recurring(
    sequences: &[UttSequence],
    covered: &[Vec<bool>],
    n: usize,
) -> BTreeMap<Vec<u32>, Vec<Occurrence>> {
    assert!(n >= 1);
    let mut found: HashMap<&[u32], (Vec<Occurrence>, Occurrence)> = HashMap::new();
    for (u, (seq, cov)) in sequences.iter().zip(covered).enumerate() {
        let runs = free_runs(cov);
        for p in 0..seq.ids.len() {
            if runs[p] < n {
                continue;
            }
            let gram = &seq.ids[p..p + n];
            let (occ, last_end) = found.entry(gram).or_insert((Vec::new(), (usize::MAX, 0)));
            if last_end.0 != u || p >= last_end.1 {
                occ.push((u, p));
                *last_end = (u, p + n);
            }
        }
    }
    found
        .into_iter()
        .filter(|(_, (occ, _))| occ.len() >= 2)
        .map(|(g, (occ, _))| (g.to_vec(), occ))
        .collect()
}

/// Occurrences of one n-gram under the current coverage, same selection rule.
fn select_occurrences(
    sequences: &[UttSequence],
    covered: &[Vec<bool>],
    gram: &[u32],
) -> Vec<Occurrence> {
    let n = gram.len();
    let mut out = Vec::new();
    for (u, (seq, cov)) in sequences.iter().zip(covered).enumerate() {
        let mut p = 0;
        while p + n <= seq.ids.len() {
            if &seq.ids[p..p + n] == gram && cov[p..p + n].iter().all(|c| !c) {
                out.push((u, p));
                p += n;
            } else {
                p += 1;
            }
        }
    }
    out
}

pub fn discover_words(sequences: &[UttSequence], max_n: usize) -> Vec<PhoneToken> {
    let mut covered: Vec<Vec<bool>> = sequences.iter().map(|s| vec![false; s.ids.len()]).collect();
    let mut tokens = Vec::new();
    let mut next_class = 1u32;
    for n in (2..=max_n).rev() {
        let mut ranked: Vec<(Vec<u32>, usize)> = count_recurring(sequences, &covered, n)
            .into_iter()
            .map(|(g, occ)| (g, occ.len()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (gram, _) in ranked {
            let occ = select_occurrences(sequences, &covered, &gram);
            if occ.len() < 2 {
                continue;
            }
            for &(u, p) in &occ {
                covered[u][p..p + n].iter_mut().for_each(|c| *c = true);
                tokens.push(PhoneToken {
                    utt: u,
                    position: p,
                    phone_ids: gram.clone(),
                    class_id: next_class,
                });
            }
            next_class += 1;
        }
    }
    let mut unigram_class: HashMap<u32, u32> = HashMap::new();
    for (u, (seq, cov)) in sequences.iter().zip(&covered).enumerate() {
        for (p, (&id, &c)) in seq.ids.iter().zip(cov).enumerate() {
            if c {
                continue;
            }
            let class_id = *unigram_class.entry(id).or_insert_with(|| {
                next_class += 1;
                next_class - 1
            });
            tokens.push(PhoneToken {
                utt: u,
                position: p,
                phone_ids: vec![id],
                class_id,
            });
        }
    }
    tokens.sort();
    tokens
}

/// Per-utterance virtual-phone sequences from clustered segments, in
/// corpus order. Segments must be sorted by utterance then start frame.
pub fn sequences_from_segments(segments: &[Segment]) -> Vec<UttSequence> {
    let mut out: Vec<UttSequence> = Vec::new();
    for s in segments {
        let id = s.cluster_id.unwrap_or(0);
        match out.last_mut() {
            Some(last) if last.utt_id == s.utt_id => last.ids.push(id),
            _ => out.push(UttSequence {
                utt_id: s.utt_id.clone(),
                ids: vec![id],
            }),
        }
    }
    out
}

/// Maps sequence positions back to frame intervals.
pub fn tokens_to_intervals(
    tokens: &[PhoneToken],
    sequences: &[UttSequence],
    segments: &BTreeMap<String, Vec<Segment>>,
) -> Result<Vec<WordToken>> {
    tokens
        .iter()
        .map(|t| {
            let utt_id = &sequences[t.utt].utt_id;
            let segs = segments.get(utt_id).map(Vec::as_slice).unwrap_or(&[]);
            let last = t.position + t.phone_ids.len() - 1;
            if last >= segs.len() {
                return Err(Error::Index {
                    utt_id: utt_id.clone(),
                    position: last,
                    len: segs.len(),
                });
            }
            Ok(WordToken {
                utt_id: utt_id.clone(),
                start_frame: segs[t.position].start_frame,
                end_frame: segs[last].end_frame,
                phone_ids: t.phone_ids.clone(),
                class_id: t.class_id,
            })
        })
        .collect()
}

/// A discovered token in seconds, as stored in the class file.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub class_id: u32,
    pub utt_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Token intervals in seconds, using each utterance's frame period.
pub fn to_class_entries(tokens: &[WordToken], frame_period_s: impl Fn(&str) -> f64) -> Vec<ClassEntry> {
    tokens
        .iter()
        .map(|t| {
            let period = frame_period_s(&t.utt_id);
            ClassEntry {
                class_id: t.class_id,
                utt_id: t.utt_id.clone(),
                start_s: t.start_frame as f64 * period,
                end_s: t.end_frame as f64 * period,
            }
        })
        .collect()
}

/// `Class <id>` blocks of `utt_id<TAB>start_s<TAB>end_s` lines, classes in
/// id order and members in input order.
pub fn format_word_classes(entries: &[ClassEntry]) -> String {
    let mut by_class: BTreeMap<u32, Vec<&ClassEntry>> = BTreeMap::new();
    for e in entries {
        by_class.entry(e.class_id).or_default().push(e);
    }
    let mut out = String::new();
    for (id, members) in by_class {
        let _ = writeln!(out, "Class {id}");
        for e in members {
            let _ = writeln!(out, "{}\t{:.4}\t{:.4}", e.utt_id, e.start_s, e.end_s);
        }
        out.push('\n');
    }
    out
}

pub fn parse_word_classes(text: &str, path: &Path) -> Result<Vec<ClassEntry>> {
    let mut out = Vec::new();
    let mut class: Option<u32> = None;
    for (idx, line) in text.lines().enumerate() {
        let err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: msg.to_string(),
        };
        let line = line.trim();
        if line.is_empty() {
            class = None;
            continue;
        }
        if let Some(rest) = line.strip_prefix("Class ") {
            class = Some(rest.trim().parse().map_err(|_| err("bad class id"))?);
            continue;
        }
        let class_id = class.ok_or_else(|| err("interval outside a class block"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err("expected utt_id start end"));
        }
        let t = |s: &str| s.parse::<f64>().map_err(|_| err("bad time"));
        out.push(ClassEntry {
            class_id,
            utt_id: f[0].to_string(),
            start_s: t(f[1])?,
            end_s: t(f[2])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(ids: &[u32]) -> Vec<UttSequence> {
        vec![UttSequence {
            utt_id: "u".into(),
            ids: ids.to_vec(),
        }]
    }

    fn uncovered(s: &[UttSequence]) -> Vec<Vec<bool>> {
        s.iter().map(|u| vec![false; u.ids.len()]).collect()
    }

    fn summary(tokens: &[PhoneToken]) -> Vec<(Vec<u32>, usize)> {
        tokens.iter().map(|t| (t.phone_ids.clone(), t.position)).collect()
    }

    #[test]
    fn count_examples() {
        let s = seq(&[1, 2, 3, 4, 1, 2, 3, 5]);
        let m = count_recurring(&s, &uncovered(&s), 3);
        assert_eq!(m.len(), 1);
        assert_eq!(m[&vec![1, 2, 3]], vec![(0, 0), (0, 4)]);

        let s = seq(&[1, 1, 1, 1]);
        assert!(count_recurring(&s, &uncovered(&s), 3).is_empty());

        let s = seq(&[1, 2, 1, 2]);
        let mut cov = uncovered(&s);
        cov[0][1] = true;
        assert!(count_recurring(&s, &cov, 2).is_empty());
        assert!(count_recurring(&s, &uncovered(&s), 5).is_empty());
    }

    #[test]
    fn discover_examples() {
        let t = discover_words(&seq(&[1, 2, 3, 4, 1, 2, 3, 5]), MAX_NGRAM);
        assert_eq!(
            summary(&t),
            vec![
                (vec![1, 2, 3], 0),
                (vec![4], 3),
                (vec![1, 2, 3], 4),
                (vec![5], 7)
            ]
        );
        assert_eq!(t[0].class_id, t[2].class_id);
        assert_ne!(t[1].class_id, t[3].class_id);

        let t = discover_words(&seq(&[1, 2, 3]), MAX_NGRAM);
        assert_eq!(summary(&t), vec![(vec![1], 0), (vec![2], 1), (vec![3], 2)]);

        let t = discover_words(&seq(&[1, 1, 1, 1]), MAX_NGRAM);
        assert_eq!(summary(&t), vec![(vec![1, 1], 0), (vec![1, 1], 2)]);
    }

    #[test]
    fn ngrams_never_cross_utterances() {
        let s = vec![
            UttSequence { utt_id: "a".into(), ids: vec![1, 2] },
            UttSequence { utt_id: "b".into(), ids: vec![3, 1, 2, 3] },
        ];
        let t = discover_words(&s, MAX_NGRAM);
        for tok in &t {
            assert!(tok.position + tok.phone_ids.len() <= s[tok.utt].ids.len());
        }
        assert_eq!(t[0].phone_ids, vec![1, 2]);
        assert_eq!(t[0].class_id, t[2].class_id);
    }

    #[test]
    fn intervals_from_segments() {
        let mut segs = BTreeMap::new();
        segs.insert(
            "u".to_string(),
            vec![Segment::new("u", 0, 5), Segment::new("u", 5, 9), Segment::new("u", 9, 12)],
        );
        let s = seq(&[1, 2, 3]);
        let toks = vec![
            PhoneToken { utt: 0, position: 0, phone_ids: vec![1, 2], class_id: 1 },
            PhoneToken { utt: 0, position: 2, phone_ids: vec![3], class_id: 2 },
        ];
        let w = tokens_to_intervals(&toks, &s, &segs).unwrap();
        assert_eq!((w[0].start_frame, w[0].end_frame), (0, 9));
        assert_eq!((w[1].start_frame, w[1].end_frame), (9, 12));

        let bad = vec![PhoneToken { utt: 0, position: 2, phone_ids: vec![3, 4], class_id: 3 }];
        assert!(matches!(
            tokens_to_intervals(&bad, &s, &segs),
            Err(Error::Index { position: 3, .. })
        ));
    }

    #[test]
    fn class_file_roundtrip() {
        let toks = vec![
            WordToken { utt_id: "a".into(), start_frame: 0, end_frame: 12, phone_ids: vec![1], class_id: 2 },
            WordToken { utt_id: "b".into(), start_frame: 3, end_frame: 9, phone_ids: vec![1, 2], class_id: 1 },
            WordToken { utt_id: "c".into(), start_frame: 5, end_frame: 11, phone_ids: vec![1, 2], class_id: 1 },
        ];
        let text = format_word_classes(&to_class_entries(&toks, |_| 0.01));
        assert!(text.starts_with("Class 1\nb\t0.0300\t0.0900\nc\t0.0500\t0.1100\n\nClass 2\n"));
        let back = parse_word_classes(&text, Path::new("w")).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[2], ClassEntry { class_id: 2, utt_id: "a".into(), start_s: 0.0, end_s: 0.12 });
    }
}
