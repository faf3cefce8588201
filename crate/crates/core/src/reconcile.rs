//! Reconciliation of model output against its input.
//!
//! The model is asked to copy its input and bracket errors with `$`, but it
//! respells characters, swaps words for synonyms and truncates long inputs.
//! [`char_correct`] walks both strings in lockstep, keeping the model's
//! markers and repairing known character confusions through a
//! [`CharLookupTable`]. When that fails, [`word_correct`] replaces whole
//! output words with their aligned input words and the character pass is
//! retried once. If that fails too the rule-based detector runs on the input.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{count_markers, MARKER};
use crate::rules::{regex_correction, RuleSet, RulesError};
use crate::tokens::{whitespace_tokens, MarkedToken};
use crate::tsv::{self, TsvError, TsvSpec};

const BUILTIN_TABLE: &str = include_str!("../data/char_table.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("character {0:?} maps to itself")]
    SelfMapping(char),
    #[error("`$` cannot appear in the character table")]
    Marker,
    #[error("character {key:?} mapped to both {first:?} and {second:?}")]
    Conflict {
        key: char,
        first: char,
        second: char,
    },
}

/// Maps characters the model emits to the input characters they stand for.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<char, char>", into = "BTreeMap<char, char>")]
pub struct CharLookupTable {
    entries: BTreeMap<char, char>,
}

impl TryFrom<BTreeMap<char, char>> for CharLookupTable {
    type Error = TableError;

    fn try_from(entries: BTreeMap<char, char>) -> Result<Self, TableError> {
        CharLookupTable::from_pairs(entries)
    }
}

impl From<CharLookupTable> for BTreeMap<char, char> {
    fn from(table: CharLookupTable) -> Self {
        table.entries
    }
}

impl CharLookupTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (char, char)>) -> Result<Self, TableError> {
        let mut entries = BTreeMap::new();
        for (wrong, right) in pairs {
            if wrong == MARKER || right == MARKER {
                return Err(TableError::Marker);
            }
            if wrong == right {
                return Err(TableError::SelfMapping(wrong));
            }
            if let Some(&first) = entries.get(&wrong) {
                if first != right {
                    return Err(TableError::Conflict {
                        key: wrong,
                        first,
                        second: right,
                    });
                }
            }
            entries.insert(wrong, right);
        }
        Ok(CharLookupTable { entries })
    }

    /// The table shipped with the crate: script-mixing confusions for Bangla
    /// punctuation, digits, quotes and spaces.
    pub fn builtin() -> Self {
        Self::parse(Path::new("<builtin char table>"), BUILTIN_TABLE.as_bytes())
            .expect("builtin character table is valid")
    }

    /// Loads a `wrong<TAB>right` file; `#` lines are comments.
    pub fn load(path: &Path) -> Result<Self, TsvError> {
        let bytes = tsv::read_file(path)?;
        Self::parse(path, &bytes)
    }

    fn parse(path: &Path, bytes: &[u8]) -> Result<Self, TsvError> {
        let rows = tsv::parse_rows(
            path,
            bytes,
            TsvSpec {
                header: None,
                columns: 2,
                comments: true,
            },
        )?;
        let mut table = CharLookupTable::default();
        for row in rows {
            let single = |cell: &str| {
                let mut chars = cell.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(TsvError::format(
                        path,
                        row.line,
                        format!("{cell:?} is not a single character"),
                    )),
                }
            };
            let wrong = single(&row.cells[0])?;
            let right = single(&row.cells[1])?;
            table = CharLookupTable::from_pairs(table.iter().chain([(wrong, right)]))
                .map_err(|e| TsvError::format(path, row.line, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn get(&self, emitted: char) -> Option<char> {
        self.entries.get(&emitted).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (char, char)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// For each canonical character, the emitted characters that map to it.
    pub fn inverse(&self) -> BTreeMap<char, Vec<char>> {
        let mut inv: BTreeMap<char, Vec<char>> = BTreeMap::new();
        for (wrong, right) in self.iter() {
            inv.entry(right).or_default().push(wrong);
        }
        inv
    }
}

/// Result of the lockstep character scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CharCorrection {
    /// The output reproduces the input; `replacements` counts table repairs.
    Corrected { text: String, replacements: usize },
    /// First position pair (input, output) that could not be reconciled.
    Mismatch { input_pos: usize, output_pos: usize },
}

/// Scans output and input together. Equal characters are copied, output
/// markers are kept, and an output character whose table entry equals the
/// current input character is replaced by the input character. Anything
/// else is a mismatch. Trailing output markers after the input ends are kept.
pub fn char_correct(output: &str, input: &str, table: &CharLookupTable) -> CharCorrection {
    let inp: Vec<char> = input.chars().collect();
    let out: Vec<char> = output.chars().collect();
    let mut text = String::with_capacity(output.len());
    let mut replacements = 0;
    let (mut i, mut o) = (0, 0);
    loop {
        match (inp.get(i), out.get(o)) {
            (None, None) => return CharCorrection::Corrected { text, replacements },
            (Some(&a), Some(&b)) if a == b => {
                text.push(a);
                i += 1;
                o += 1;
            }
            (_, Some(&MARKER)) => {
                text.push(MARKER);
                o += 1;
            }
            (Some(&a), Some(&b)) if table.get(b) == Some(a) => {
                text.push(a);
                replacements += 1;
                i += 1;
                o += 1;
            }
            _ => {
                return CharCorrection::Mismatch {
                    input_pos: i,
                    output_pos: o,
                }
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ReconcileError {
    #[error("cannot align {output_tokens} output tokens with {input_tokens} input tokens")]
    AlignmentFailed {
        output_tokens: usize,
        input_tokens: usize,
    },
    #[error(transparent)]
    Rules(#[from] RulesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Diagonal,
    Delete,
    Insert,
}

/// Minimal-cost token alignment; returns `(output_idx, input_idx)` pairs of
/// substituted-or-equal positions. Backtracking prefers the diagonal.
fn align_tokens(out: &[String], inp: &[&str]) -> Vec<(usize, usize)> {
    let (n, m) = (out.len(), inp.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    dp[0] = (0..=m).collect();
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[i - 1][j - 1] + usize::from(out[i - 1] != inp[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let step = if i > 0
            && j > 0
            && dp[i][j] == dp[i - 1][j - 1] + usize::from(out[i - 1] != inp[j - 1])
        {
            Step::Diagonal
        } else if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            Step::Delete
        } else {
            Step::Insert
        };
        match step {
            Step::Diagonal => {
                pairs.push((i - 1, j - 1));
                i -= 1;
                j -= 1;
            }
            Step::Delete => i -= 1,
            Step::Insert => j -= 1,
        }
    }
    pairs.reverse();
    pairs
}

/// Replaces whole output words with the input words they align to, keeping
/// the output's whitespace and any leading/trailing markers of each word.
/// Marker-only tokens are left alone and excluded from alignment. Words with
/// a marker inside them are never replaced.
pub fn word_correct(output: &str, input: &str) -> Result<String, ReconcileError> {
    let out_chars: Vec<char> = output.chars().collect();
    let ranges: Vec<(usize, usize)> = whitespace_tokens(&out_chars)
        .into_iter()
        .filter(|&(s, e)| {
            let tok: String = out_chars[s..e].iter().collect();
            !MarkedToken::split(&tok).is_marker_only()
        })
        .collect();
    let out_tokens: Vec<String> = ranges
        .iter()
        .map(|&(s, e)| out_chars[s..e].iter().collect())
        .collect();
    let in_tokens: Vec<&str> = input.split_whitespace().collect();
    if out_tokens.len() != in_tokens.len() {
        return Err(ReconcileError::AlignmentFailed {
            output_tokens: out_tokens.len(),
            input_tokens: in_tokens.len(),
        });
    }
    let keys: Vec<String> = out_tokens
        .iter()
        .map(|t| t.chars().filter(|&c| c != MARKER).collect())
        .collect();

    let mut replacements: BTreeMap<usize, String> = BTreeMap::new();
    for (oi, ii) in align_tokens(&keys, &in_tokens) {
        if keys[oi] == in_tokens[ii] {
            continue;
        }
        let tok = MarkedToken::split(&out_tokens[oi]);
        if tok.has_inner_marker() {
            continue;
        }
        replacements.insert(
            ranges[oi].0,
            format!("{}{}{}", tok.leading, in_tokens[ii], tok.trailing),
        );
    }

    let mut result = String::with_capacity(output.len());
    let mut pos = 0;
    for (idx, &(s, e)) in ranges.iter().enumerate() {
        result.extend(&out_chars[pos..s]);
        match replacements.get(&s) {
            Some(rep) => result.push_str(rep),
            None => result.push_str(&out_tokens[idx]),
        }
        pos = e;
    }
    result.extend(&out_chars[pos..]);
    Ok(result)
}

/// Which stage produced a reconciled sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReconcileStage {
    CharLevel,
    WordLevel,
    RegexFallback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconcileOutcome {
    pub result: String,
    pub stage: ReconcileStage,
    /// Character-table repairs applied by the successful pass.
    pub replacements: usize,
}

/// Accepts a character pass only if its markers are balanced.
fn accepted(c: CharCorrection) -> Option<(String, usize)> {
    match c {
        CharCorrection::Corrected { text, replacements }
            if count_markers(&text).is_multiple_of(2) =>
        {
            Some((text, replacements))
        }
        _ => None,
    }
}

/// Full fallback chain: character pass, one word-repair retry, then rule
/// detection on the input. Output with an odd marker count is never
/// accepted from the character passes.
///
/// Fails only if `input` itself contains a `$`.
pub fn reconcile(
    output: &str,
    input: &str,
    table: &CharLookupTable,
    rules: &RuleSet,
) -> Result<ReconcileOutcome, ReconcileError> {
    if let Some((result, replacements)) = accepted(char_correct(output, input, table)) {
        return Ok(ReconcileOutcome {
            result,
            stage: ReconcileStage::CharLevel,
            replacements,
        });
    }
    if let Ok(repaired) = word_correct(output, input) {
        if let Some((result, replacements)) = accepted(char_correct(&repaired, input, table)) {
            return Ok(ReconcileOutcome {
                result,
                stage: ReconcileStage::WordLevel,
                replacements,
            });
        }
    }
    Ok(ReconcileOutcome {
        result: regex_correction(input, rules)?,
        stage: ReconcileStage::RegexFallback,
        replacements: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::strip_markers;
    use proptest::prelude::*;

    fn table(pairs: &[(char, char)]) -> CharLookupTable {
        CharLookupTable::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn table_invariants() {
        assert_eq!(
            CharLookupTable::from_pairs([('a', 'a')]),
            Err(TableError::SelfMapping('a'))
        );
        assert_eq!(
            CharLookupTable::from_pairs([('$', 'a')]),
            Err(TableError::Marker)
        );
        assert!(CharLookupTable::from_pairs([('a', 'b'), ('a', 'c')]).is_err());
        let builtin = CharLookupTable::builtin();
        assert!(builtin.len() > 20);
        assert_eq!(builtin.get('|'), Some('।'));
        assert_eq!(builtin.get('\u{a0}'), Some(' '));
    }

    #[test]
    fn table_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        std::fs::write(&path, "# comment\nx\tb\n\ny\tz\n").unwrap();
        let t = CharLookupTable::load(&path).unwrap();
        assert_eq!(t.len(), 2);
        std::fs::write(&path, "xy\tb\n").unwrap();
        assert_eq!(CharLookupTable::load(&path).unwrap_err().line(), Some(1));
        std::fs::write(&path, "a\tb\na\tc\n").unwrap();
        assert_eq!(CharLookupTable::load(&path).unwrap_err().line(), Some(2));
    }

    #[test]
    fn char_correct_copies_markers() {
        assert_eq!(
            char_correct("the $cat$ sat", "the cat sat", &CharLookupTable::default()),
            CharCorrection::Corrected {
                text: "the $cat$ sat".into(),
                replacements: 0
            }
        );
    }

    #[test]
    fn char_correct_uses_table() {
        assert_eq!(
            char_correct("a$x$c", "abc", &table(&[('x', 'b')])),
            CharCorrection::Corrected {
                text: "a$b$c".into(),
                replacements: 1
            }
        );
    }

    #[test]
    fn char_correct_reports_first_mismatch() {
        assert_eq!(
            char_correct("a$q$c", "abc", &CharLookupTable::default()),
            CharCorrection::Mismatch {
                input_pos: 1,
                output_pos: 2
            }
        );
    }

    #[test]
    fn char_correct_table_only_fires_on_matching_input() {
        // x -> b is known, but the input has 'c' here.
        assert!(matches!(
            char_correct("axc", "acc", &table(&[('x', 'b')])),
            CharCorrection::Mismatch { .. }
        ));
    }

    #[test]
    fn char_correct_boundaries() {
        let empty = CharLookupTable::default();
        assert_eq!(
            char_correct("ab$$", "ab", &empty),
            CharCorrection::Corrected {
                text: "ab$$".into(),
                replacements: 0
            }
        );
        assert_eq!(
            char_correct("abx", "ab", &empty),
            CharCorrection::Mismatch {
                input_pos: 2,
                output_pos: 2
            }
        );
        assert_eq!(
            char_correct("a", "abc", &empty),
            CharCorrection::Mismatch {
                input_pos: 1,
                output_pos: 1
            }
        );
        assert!(matches!(
            char_correct("", "", &empty),
            CharCorrection::Corrected { .. }
        ));
    }

    #[test]
    fn word_correct_respelling() {
        assert_eq!(
            word_correct("colour is $red$", "color is red").unwrap(),
            "color is $red$"
        );
        assert_eq!(
            word_correct("$colour$ is red", "color is red").unwrap(),
            "$color$ is red"
        );
        assert_eq!(
            word_correct("the $cat$ sat", "the cat sat").unwrap(),
            "the $cat$ sat"
        );
    }

    #[test]
    fn word_correct_truncation_fails() {
        assert!(matches!(
            word_correct("a b", "a b c"),
            Err(ReconcileError::AlignmentFailed {
                output_tokens: 2,
                input_tokens: 3
            })
        ));
    }

    #[test]
    fn word_correct_skips_marker_only_and_inner_markers() {
        assert_eq!(word_correct("a $$ bb", "a bx").unwrap(), "a $$ bx");
        assert_eq!(word_correct("ca$t$ x", "dog x").unwrap(), "ca$t$ x");
    }

    #[test]
    fn reconcile_stages() {
        let empty = CharLookupTable::default();
        let rules = RuleSet::new(["সে"], Vec::<String>::new()).unwrap();
        let out = reconcile("the $cat$ sat", "the cat sat", &empty, &rules).unwrap();
        assert_eq!(out.stage, ReconcileStage::CharLevel);

        let out = reconcile("colour is $red$", "color is red", &empty, &rules).unwrap();
        assert_eq!(out.stage, ReconcileStage::WordLevel);
        assert_eq!(out.result, "color is $red$");

        let out = reconcile("আমি সে", "আমি সে ভাত খেল", &empty, &rules).unwrap();
        assert_eq!(out.stage, ReconcileStage::RegexFallback);
        assert_eq!(out.result, "আমি $সে$ ভাত খেল");

        // unbalanced markers fall through
        let out = reconcile("the $cat sat", "the cat sat", &empty, &rules).unwrap();
        assert_eq!(out.stage, ReconcileStage::RegexFallback);
        assert!(reconcile("x", "a$b", &empty, &rules).is_err());
    }

    #[test]
    fn long_input_truncated_output_falls_back() {
        let input: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
        let output = input[..256].join(" ");
        let out = reconcile(
            &output,
            &input.join(" "),
            &CharLookupTable::default(),
            &RuleSet::default(),
        )
        .unwrap();
        assert_eq!(out.stage, ReconcileStage::RegexFallback);
    }

    proptest! {
        #[test]
        fn sound_and_deterministic(
            input in "[abc ]{0,12}",
            output in "[abcx$ ]{0,14}",
        ) {
            let t = table(&[('x', 'b')]);
            let rules = RuleSet::new(["ab"], ["c"]).unwrap();
            let first = reconcile(&output, &input, &t, &rules).unwrap();
            prop_assert_eq!(&first, &reconcile(&output, &input, &t, &rules).unwrap());
            prop_assert_eq!(count_markers(&first.result) % 2, 0);
            if first.stage != ReconcileStage::RegexFallback {
                prop_assert_eq!(strip_markers(&first.result), input.clone());
                prop_assert_eq!(count_markers(&first.result), count_markers(&output));
            }
        }
    }
}
