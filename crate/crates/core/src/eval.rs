//! Levenshtein scoring with private/public split aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{AblationVariant, PredictionRecord, StageCounters};
use crate::tsv::{self, TsvError, TsvSpec};

pub const SPLIT_HEADER: [&str; 2] = ["id", "split"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold for prediction {0:?}")]
    MissingGold(String),
    #[error("prediction {0:?} is not assigned to a split")]
    UnassignedId(String),
    #[error("the {0:?} split has no records")]
    EmptySplit(Split),
    #[error("no predictions to score")]
    Empty,
    #[error(transparent)]
    Tsv(#[from] TsvError),
}

/// Edit distance over Unicode scalar values with unit costs.
///
/// Uses Hyyrö's bit-parallel formulation of Myers' algorithm, processing the
/// shorter string in 64-bit blocks, after trimming the common prefix and
/// suffix.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);
    let (pattern, text) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if pattern.is_empty() {
        return text.len();
    }
    bit_parallel(pattern, text)
}

fn bit_parallel(pattern: &[char], text: &[char]) -> usize {
    let m = pattern.len();
    let words = m.div_ceil(64);
    let mut peq: HashMap<char, Vec<u64>> = HashMap::new();
    for (i, &c) in pattern.iter().enumerate() {
        peq.entry(c).or_insert_with(|| vec![0; words])[i / 64] |= 1 << (i % 64);
    }
    let last = 1u64 << ((m - 1) % 64);
    let mut vp = vec![!0u64; words];
    let mut vn = vec![0u64; words];
    let mut score = m;
    for c in text {
        let eq_row = peq.get(c);
        // Horizontal deltas entering the top row are always +1.
        let mut hp_carry = 1u64;
        let mut hn_carry = 0u64;
        for w in 0..words {
            let eq = eq_row.map_or(0, |row| row[w]);
            let x = eq | hn_carry;
            let d0 = ((x & vp[w]).wrapping_add(vp[w]) ^ vp[w]) | x | vn[w];
            let mut hp = vn[w] | !(d0 | vp[w]);
            let mut hn = d0 & vp[w];
            let (hp_in, hn_in) = (hp_carry, hn_carry);
            if w + 1 < words {
                hp_carry = hp >> 63;
                hn_carry = hn >> 63;
            } else {
                hp_carry = u64::from(hp & last != 0);
                hn_carry = u64::from(hn & last != 0);
            }
            hp = (hp << 1) | hp_in;
            hn = (hn << 1) | hn_in;
            vp[w] = hn | !(d0 | hp);
            vn[w] = hp & d0;
        }
        score = score + hp_carry as usize - hn_carry as usize;
    }
    score
}

/// Anything with an id and a predicted marked sentence.
pub trait Prediction {
    fn id(&self) -> &str;
    fn predicted(&self) -> &str;
}

impl Prediction for PredictionRecord {
    fn id(&self) -> &str {
        &self.id
    }

    fn predicted(&self) -> &str {
        &self.predicted
    }
}

impl Prediction for (String, String) {
    fn id(&self) -> &str {
        &self.0
    }

    fn predicted(&self) -> &str {
        &self.1
    }
}

fn distance_to_gold<P: Prediction>(
    pred: &P,
    golds: &BTreeMap<String, String>,
) -> Result<usize, EvalError> {
    golds
        .get(pred.id())
        .map(|gold| levenshtein(pred.predicted(), gold))
        .ok_or_else(|| EvalError::MissingGold(pred.id().to_owned()))
}

/// Mean Levenshtein distance between predictions and their golds.
pub fn average_distance<P: Prediction>(
    preds: &[P],
    golds: &BTreeMap<String, String>,
) -> Result<f64, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let total = preds
        .iter()
        .map(|p| distance_to_gold(p, golds))
        .sum::<Result<usize, _>>()?;
    Ok(total as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Private,
    Public,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Private" => Ok(Split::Private),
            "Public" => Ok(Split::Public),
            other => Err(format!(
                "unknown split {other:?}, expected Private or Public"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn new(assignment: BTreeMap<String, Split>) -> Self {
        SplitAssignment { assignment }
    }

    /// Deterministic 50-50 split: ids in sorted order alternate Private, Public.
    pub fn halves<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut ids: Vec<&str> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let assignment = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| {
                let split = if i % 2 == 0 {
                    Split::Private
                } else {
                    Split::Public
                };
                (id.to_owned(), split)
            })
            .collect();
        SplitAssignment { assignment }
    }

    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignment.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, TsvError> {
        let rows = tsv::read_rows(
            path,
            TsvSpec {
                header: Some(&SPLIT_HEADER),
                columns: 2,
                comments: false,
            },
        )?;
        let mut assignment = BTreeMap::new();
        for row in rows {
            let split = row.cells[1]
                .parse()
                .map_err(|e: String| TsvError::format(path, row.line, e))?;
            if assignment.insert(row.cells[0].clone(), split).is_some() {
                return Err(TsvError::format(path, row.line, "duplicate id"));
            }
        }
        Ok(SplitAssignment { assignment })
    }

    pub fn save(&self, path: &Path) -> Result<(), TsvError> {
        let rows: Vec<[String; 2]> = self
            .assignment
            .iter()
            .map(|(id, split)| [id.clone(), format!("{split:?}")])
            .collect();
        tsv::write_rows(path, Some(&SPLIT_HEADER), &rows)
    }
}

/// One row of the ablation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Option<AblationVariant>,
    pub private_avg: f64,
    pub public_avg: f64,
    /// Mean of the two split means (not the global mean).
    pub aggregated: f64,
    /// Stage attribution, when the predictions came from a pipeline run.
    pub counters: Option<StageCounters>,
    pub n: usize,
}

impl EvalReport {
    /// Builds a report from already computed split means.
    pub fn from_split_means(private_avg: f64, public_avg: f64) -> Self {
        EvalReport {
            variant: None,
            private_avg,
            public_avg,
            aggregated: (private_avg + public_avg) / 2.0,
            counters: None,
            n: 0,
        }
    }
}

/// Per-split average distances and their mean.
pub fn split_report<P: Prediction>(
    preds: &[P],
    golds: &BTreeMap<String, String>,
    split: &SplitAssignment,
    variant: Option<AblationVariant>,
    counters: Option<StageCounters>,
) -> Result<EvalReport, EvalError> {
    let mut sums = [0usize; 2];
    let mut counts = [0usize; 2];
    for pred in preds {
        let side = split
            .get(pred.id())
            .ok_or_else(|| EvalError::UnassignedId(pred.id().to_owned()))?;
        let d = distance_to_gold(pred, golds)?;
        let k = side as usize;
        sums[k] += d;
        counts[k] += 1;
    }
    for (k, side) in [Split::Private, Split::Public].into_iter().enumerate() {
        if counts[k] == 0 {
            return Err(EvalError::EmptySplit(side));
        }
    }
    let mean = |k: usize| sums[k] as f64 / counts[k] as f64;
    Ok(EvalReport {
        variant,
        counters,
        n: preds.len(),
        ..EvalReport::from_split_means(mean(0), mean(1))
    })
}

/// Aligned plain-text grid with the columns
/// Model, Regex, Match, Private, Public, Aggregated.
pub fn render_table(reports: &[EvalReport]) -> String {
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            let count =
                |enabled: bool, get: fn(&StageCounters) -> usize| match (enabled, &r.counters) {
                    (true, Some(c)) => get(c).to_string(),
                    _ => "-".to_string(),
                };
            let variant = r.variant;
            [
                variant.map_or_else(|| "-".to_string(), |v| v.label().to_string()),
                count(variant.is_some_and(|v| v.uses_regex()), |c| {
                    c.regex_fallback
                }),
                count(variant.is_some_and(|v| v.uses_lookup()), |c| c.lookup_hits),
                format!("{:.4}", r.private_avg),
                format!("{:.4}", r.public_avg),
                format!("{:.4}", r.aggregated),
            ]
        })
        .collect();
    let header = ["Model", "Regex", "Match", "Private", "Public", "Aggregated"].map(String::from);
    let mut widths = header.clone().map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let mut line = String::new();
        for (i, (cell, w)) in row.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(line, "{cell:<w$}");
            } else {
                let _ = write!(line, "  {cell:>w$}");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Full-matrix Wagner-Fischer, kept independent of the bit-parallel path.
    fn reference(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        d[0] = (0..=b.len()).collect();
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn known_distances() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(reference("kitten", "sitting"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(reference("$a$ b", "a b"), 2);
        assert_eq!(levenshtein("$a$ b", "a b"), 2);
        assert_eq!(levenshtein("", "আমি"), 3);
        assert_eq!(levenshtein("আমি $ভাত$ খাই", "আমি ভাত খাই"), 2);
    }

    #[test]
    fn multi_block_patterns() {
        let a: String = (0..150)
            .map(|i| char::from(b'a' + (i * 7 % 26) as u8))
            .collect();
        let mut b: String = a.chars().rev().collect();
        b.insert(70, 'z');
        assert_eq!(levenshtein(&a, &b), reference(&a, &b));
        let c: String = a.chars().filter(|&ch| ch != 'e').collect();
        assert_eq!(levenshtein(&a, &c), reference(&a, &c));
    }

    fn preds(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn golds(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn averages() {
        let g = golds(&[("1", "abc"), ("2", "xyz")]);
        assert_eq!(
            average_distance(&preds(&[("1", "abc"), ("2", "xyz")]), &g).unwrap(),
            0.0
        );
        assert_eq!(
            average_distance(&preds(&[("1", "abd"), ("2", "")]), &g).unwrap(),
            2.0
        );
        assert!(matches!(
            average_distance(&preds(&[("3", "")]), &g),
            Err(EvalError::MissingGold(_))
        ));
    }

    #[test]
    fn split_report_means() {
        let g = golds(&[("1", "abc"), ("2", "xyz"), ("3", "q")]);
        let p = preds(&[("1", "abd"), ("2", "xyz"), ("3", "")]);
        let split = SplitAssignment::new(
            [
                ("1", Split::Private),
                ("2", Split::Public),
                ("3", Split::Public),
            ]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b))
            .collect(),
        );
        let r = split_report(&p, &g, &split, None, None).unwrap();
        assert_eq!(r.private_avg, 1.0);
        assert_eq!(r.public_avg, 0.5);
        assert_eq!(r.aggregated, 0.75);
        // global mean differs when splits are unequal
        assert!((average_distance(&p, &g).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn split_errors() {
        let g = golds(&[("1", "a"), ("2", "b")]);
        let p = preds(&[("1", "a"), ("2", "b")]);
        let all_private = SplitAssignment::new(
            [("1", Split::Private), ("2", Split::Private)]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b))
                .collect(),
        );
        assert!(matches!(
            split_report(&p, &g, &all_private, None, None),
            Err(EvalError::EmptySplit(Split::Public))
        ));
        let partial = SplitAssignment::halves(["1"]);
        assert!(matches!(
            split_report(&p, &g, &partial, None, None),
            Err(EvalError::UnassignedId(_))
        ));
    }

    #[test]
    fn halves_alternate() {
        let s = SplitAssignment::halves(["b", "a", "d", "c"]);
        assert_eq!(s.get("a"), Some(Split::Private));
        assert_eq!(s.get("b"), Some(Split::Public));
        assert_eq!(s.get("c"), Some(Split::Private));
        assert_eq!(s.get("d"), Some(Split::Public));
    }

    #[test]
    fn split_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tsv");
        let s = SplitAssignment::halves(["x", "y", "z"]);
        s.save(&path).unwrap();
        assert_eq!(SplitAssignment::load(&path).unwrap(), s);
        std::fs::write(&path, "id\tsplit\nx\tHidden\n").unwrap();
        assert_eq!(SplitAssignment::load(&path).unwrap_err().line(), Some(2));
    }

    #[test]
    fn table_layout() {
        let mut r = EvalReport::from_split_means(1.0224, 1.0564);
        r.variant = Some(AblationVariant::CcWcRLP2);
        r.counters = Some(StageCounters {
            lookup_hits: 253,
            regex_fallback: 40,
            ..StageCounters::default()
        });
        let mut raw = EvalReport::from_split_means(3.216, 3.208);
        raw.variant = Some(AblationVariant::Raw);
        let text = render_table(&[raw, r]);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Model"));
        assert!(lines[1].starts_with("Raw"));
        assert!(lines[1].contains("3.2120"));
        assert!(lines[2].starts_with("CC+WC+R+L+P2"));
        assert!(
            lines[2].contains("40") && lines[2].contains("253") && lines[2].ends_with("1.0394")
        );
    }

    proptest! {
        #[test]
        fn agrees_with_reference(a in "[ab\u{9BE}\u{995}x]{0,80}", b in "[ab\u{9BE}\u{995}y]{0,80}") {
            prop_assert_eq!(levenshtein(&a, &b), reference(&a, &b));
        }

        #[test]
        fn average_is_permutation_invariant(dists in proptest::collection::vec(0usize..5, 1..10)) {
            let p: Vec<(String, String)> = dists.iter().enumerate().map(|(i, &d)| (i.to_string(), "x".repeat(d))).collect();
            let g: BTreeMap<String, String> = (0..dists.len()).map(|i| (i.to_string(), String::new())).collect();
            let mut rev = p.clone();
            rev.reverse();
            prop_assert_eq!(average_distance(&p, &g).unwrap(), average_distance(&rev, &g).unwrap());
        }
    }
}
