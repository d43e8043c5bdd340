//! Gold time alignments and corpus manifests.
//!
//! Alignment tiers are flat text files with one `utt_id start_s end_s label`
//! record per line, tab separated (any whitespace is accepted). Phones and
//! words live in separate files (`.phn`, `.wrd`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn new(label: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self {
            label: label.into(),
            start_s,
            end_s,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoldAlignment {
    pub utt_id: String,
    pub phones: Vec<Interval>,
    pub words: Vec<Interval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Phones,
    Words,
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

/// Parses one tier into sorted, validated intervals grouped by utterance.
pub fn parse_tier(text: &str, path: &Path) -> Result<BTreeMap<String, Vec<Interval>>> {
    let mut by_utt: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let time = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad time {s:?}")))
        };
        let (start_s, end_s) = (time(fields[1])?, time(fields[2])?);
        if end_s <= start_s {
            return Err(err(format!("end {end_s} not after start {start_s}")));
        }
        by_utt
            .entry(fields[0].to_string())
            .or_default()
            .push(Interval::new(fields[3], start_s, end_s));
    }
    for (utt, entries) in by_utt.iter_mut() {
        entries.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for pair in entries.windows(2) {
            if pair[1].start_s < pair[0].end_s - 1e-9 {
                return Err(Error::Overlap {
                    utt_id: utt.clone(),
                    first: format!("{} [{}, {})", pair[0].label, pair[0].start_s, pair[0].end_s),
                    second: format!("{} [{}, {})", pair[1].label, pair[1].start_s, pair[1].end_s),
                });
            }
        }
    }
    Ok(by_utt)
}

/// Reads one alignment tier file, filling `tier` of each utterance.
pub fn parse_alignment(path: impl AsRef<Path>, tier: Tier) -> Result<Vec<GoldAlignment>> {
    let path = path.as_ref();
    let by_utt = parse_tier(&read_text(path)?, path)?;
    Ok(by_utt
        .into_iter()
        .map(|(utt_id, entries)| {
            let mut g = GoldAlignment {
                utt_id,
                ..Default::default()
            };
            match tier {
                Tier::Phones => g.phones = entries,
                Tier::Words => g.words = entries,
            }
            g
        })
        .collect())
}

/// Loads the phone tier and, optionally, the word tier, merged per utterance.
pub fn load_gold(phn: impl AsRef<Path>, wrd: Option<&Path>) -> Result<Vec<GoldAlignment>> {
    let mut merged: BTreeMap<String, GoldAlignment> = parse_alignment(phn, Tier::Phones)?
        .into_iter()
        .map(|g| (g.utt_id.clone(), g))
        .collect();
    if let Some(wrd) = wrd {
        for g in parse_alignment(wrd, Tier::Words)? {
            merged
                .entry(g.utt_id.clone())
                .or_insert_with(|| GoldAlignment {
                    utt_id: g.utt_id.clone(),
                    ..Default::default()
                })
                .words = g.words;
        }
    }
    Ok(merged.into_values().collect())
}

pub fn format_tier(gold: &[GoldAlignment], tier: Tier) -> String {
    let mut out = String::new();
    for g in gold {
        let entries = match tier {
            Tier::Phones => &g.phones,
            Tier::Words => &g.words,
        };
        for e in entries {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{}\n",
                g.utt_id, e.start_s, e.end_s, e.label
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub path: PathBuf,
}

/// Reads `utt_id<TAB>path` lines. Relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (utt, p) = line
            .split_once('\t')
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "expected utt_id<TAB>path".into(),
            })?;
        let p = PathBuf::from(p.trim());
        entries.push(ManifestEntry {
            utt_id: utt.trim().to_string(),
            path: if p.is_absolute() { p } else { base.join(p) },
        });
    }
    entries.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    if let Some(w) = entries.windows(2).find(|w| w[0].utt_id == w[1].utt_id) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("duplicate utterance {}", w[0].utt_id),
        });
    }
    Ok(entries)
}

pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let text: String = entries
        .iter()
        .map(|e| format!("{}\t{}\n", e.utt_id, e.path.display()))
        .collect();
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<BTreeMap<String, Vec<Interval>>> {
        parse_tier(text, Path::new("test.phn"))
    }

    #[test]
    fn groups_two_phones() {
        let m = parse("u1\t0.0\t0.1\ta\nu1\t0.1\t0.25\tb\n").unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(
            m["u1"],
            vec![Interval::new("a", 0.0, 0.1), Interval::new("b", 0.1, 0.25)]
        );
    }

    #[test]
    fn out_of_order_lines_are_sorted() {
        let sorted = parse("u1 0.0 0.1 a\nu1 0.1 0.25 b\n").unwrap();
        let shuffled = parse("u1 0.1 0.25 b\nu1 0.0 0.1 a\n").unwrap();
        assert_eq!(sorted, shuffled);
    }

    #[test]
    fn overlap_is_rejected() {
        assert!(matches!(
            parse("u1 0.0 0.2 a\nu1 0.1 0.3 b\n"),
            Err(Error::Overlap { .. })
        ));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        match parse("u1 0.0 0.1 a\nu1 0.1 b\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("u1 0.2 0.1 a\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse("u1 zero 0.1 a\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn tiers_roundtrip_through_text() {
        let dir = tempfile::tempdir().unwrap();
        let phn = dir.path().join("c.phn");
        let wrd = dir.path().join("c.wrd");
        fs::write(&phn, "u2\t0\t0.1\tx\nu1\t0\t0.05\ta\nu1\t0.05\t0.1\tb\n").unwrap();
        fs::write(&wrd, "u1\t0\t0.1\tab\n").unwrap();
        let gold = load_gold(&phn, Some(&wrd)).unwrap();
        assert_eq!(gold.len(), 2);
        assert_eq!(gold[0].utt_id, "u1");
        assert_eq!(gold[0].words, vec![Interval::new("ab", 0.0, 0.1)]);
        assert!(gold[1].words.is_empty());
        let text = format_tier(&gold, Tier::Phones);
        let again = parse_tier(&text, &phn).unwrap();
        assert_eq!(again["u1"], gold[0].phones);
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.tsv");
        fs::write(&m, "b\tb.wav\na\t/abs/a.wav\n").unwrap();
        let entries = read_manifest(&m).unwrap();
        assert_eq!(entries[0].utt_id, "a");
        assert_eq!(entries[0].path, PathBuf::from("/abs/a.wav"));
        assert_eq!(entries[1].path, dir.path().join("b.wav"));
        assert!(matches!(
            read_manifest(dir.path().join("nope.tsv")),
            Err(Error::MissingFile(_))
        ));
    }
}
