//! Rule-based error detection.
//!
//! A [`RuleSet`] holds words that are always marked when they occur as whole
//! tokens (mined from annotated data or read from a word list) and literal
//! substring patterns. [`regex_correction`] wraps every match in `$…$`
//! without ever nesting or overlapping spans.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusRecord, MarkedSentence, Span, MARKER};
use crate::tokens::{find_occurrences, whitespace_tokens};
use crate::tsv::{self, TsvError};

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("empty rule")]
    EmptyRule,
    #[error("rule {0:?} contains `$`")]
    MarkerInRule(String),
    #[error("sentence is already marked")]
    MarkedInput,
    #[error("invalid mining config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct RuleSetFile {
    #[serde(default)]
    common_error_words: Vec<String>,
    #[serde(default)]
    literal_rules: Vec<String>,
}

/// Words marked as whole tokens plus literal substring patterns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RuleSetFile", into = "RuleSetFile")]
pub struct RuleSet {
    common_error_words: BTreeSet<String>,
    /// Longest first, ties in lexicographic order, no duplicates.
    literal_rules: Vec<String>,
}

impl TryFrom<RuleSetFile> for RuleSet {
    type Error = RulesError;

    fn try_from(file: RuleSetFile) -> Result<Self, RulesError> {
        RuleSet::new(file.common_error_words, file.literal_rules)
    }
}

impl From<RuleSet> for RuleSetFile {
    fn from(rules: RuleSet) -> Self {
        RuleSetFile {
            common_error_words: rules.common_error_words.into_iter().collect(),
            literal_rules: rules.literal_rules,
        }
    }
}

fn check_rule(rule: &str) -> Result<(), RulesError> {
    if rule.is_empty() {
        Err(RulesError::EmptyRule)
    } else if rule.contains(MARKER) {
        Err(RulesError::MarkerInRule(rule.to_owned()))
    } else {
        Ok(())
    }
}

impl RuleSet {
    pub fn new<W, L>(
        common_error_words: impl IntoIterator<Item = W>,
        literal_rules: impl IntoIterator<Item = L>,
    ) -> Result<Self, RulesError>
    where
        W: Into<String>,
        L: Into<String>,
    {
        let mut rules = RuleSet::default();
        rules.add_words(common_error_words)?;
        let literal: BTreeSet<String> = literal_rules.into_iter().map(Into::into).collect();
        for rule in &literal {
            check_rule(rule)?;
        }
        rules.literal_rules = literal.into_iter().collect();
        rules.literal_rules.sort_by(|a, b| {
            b.chars()
                .count()
                .cmp(&a.chars().count())
                .then_with(|| a.cmp(b))
        });
        Ok(rules)
    }

    /// Merges more always-marked words, e.g. from a word list.
    pub fn add_words<W: Into<String>>(
        &mut self,
        words: impl IntoIterator<Item = W>,
    ) -> Result<(), RulesError> {
        for word in words {
            let word = word.into();
            check_rule(&word)?;
            self.common_error_words.insert(word);
        }
        Ok(())
    }

    pub fn common_error_words(&self) -> &BTreeSet<String> {
        &self.common_error_words
    }

    pub fn literal_rules(&self) -> &[String] {
        &self.literal_rules
    }

    pub fn is_empty(&self) -> bool {
        self.common_error_words.is_empty() && self.literal_rules.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, RulesError> {
        let bytes = tsv::read_file(path)?;
        serde_json::from_slice(&bytes).map_err(|source| RulesError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RulesError> {
        let mut json = serde_json::to_string_pretty(self).map_err(|source| RulesError::Json {
            path: path.display().to_string(),
            source,
        })?;
        json.push('\n');
        fs::write(path, json).map_err(|source| {
            RulesError::Tsv(TsvError::Io {
                path: path.to_path_buf(),
                source,
            })
        })
    }
}

/// Adds spans for rule matches that don't touch any existing span, returning
/// the new sentence and the number of spans added. Whole-token words go first
/// (longest first), then literal patterns (longest first); within one rule
/// matches are taken left to right.
pub(crate) fn mark_matches<'a>(
    marked: &MarkedSentence,
    words: impl IntoIterator<Item = &'a String>,
    literals: &[String],
) -> (MarkedSentence, usize) {
    let chars: Vec<char> = marked.plain().chars().collect();
    let mut covered = vec![false; chars.len()];
    let mut empty_at = vec![false; chars.len() + 1];
    for span in marked.spans() {
        if span.is_empty() {
            empty_at[span.start] = true;
        }
        covered[span.start..span.end]
            .iter_mut()
            .for_each(|c| *c = true);
    }

    let mut words: Vec<&String> = words.into_iter().collect();
    words.sort_by(|a, b| {
        b.chars()
            .count()
            .cmp(&a.chars().count())
            .then_with(|| a.cmp(b))
    });
    let passes = words
        .into_iter()
        .map(|w| (w, true))
        .chain(literals.iter().map(|l| (l, false)));

    let mut added = Vec::new();
    for (rule, whole_token) in passes {
        let needle: Vec<char> = rule.chars().collect();
        for start in find_occurrences(&chars, &needle, whole_token) {
            let end = start + needle.len();
            let free = !covered[start..end].iter().any(|&c| c)
                && !empty_at[start + 1..end].iter().any(|&e| e);
            if free {
                covered[start..end].iter_mut().for_each(|c| *c = true);
                added.push(Span::new(start, end));
            }
        }
    }

    let count = added.len();
    if count == 0 {
        return (marked.clone(), 0);
    }
    let mut spans: Vec<Span> = marked.spans().iter().copied().chain(added).collect();
    spans.sort();
    let out = MarkedSentence::from_spans(marked.plain(), spans)
        .expect("new spans only cover free characters");
    (out, count)
}

/// Marks every whole-token occurrence of a common error word and every
/// occurrence of a literal rule in an unmarked sentence.
pub fn regex_correction(sentence: &str, rules: &RuleSet) -> Result<String, RulesError> {
    if sentence.contains(MARKER) {
        return Err(RulesError::MarkedInput);
    }
    let unmarked =
        MarkedSentence::from_spans(sentence, Vec::new()).map_err(|_| RulesError::MarkedInput)?;
    let (marked, _) = mark_matches(&unmarked, &rules.common_error_words, &rules.literal_rules);
    Ok(marked.raw().to_owned())
}

/// Thresholds for mining always-marked words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Minimum number of in-span occurrences.
    pub min_support: usize,
    /// Minimum share of occurrences that fall inside a gold span (inclusive).
    pub min_precision: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: 3,
            min_precision: 0.95,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), RulesError> {
        if self.min_support < 1 {
            return Err(RulesError::InvalidConfig("min_support must be at least 1"));
        }
        if !(self.min_precision > 0.0 && self.min_precision <= 1.0) {
            return Err(RulesError::InvalidConfig("min_precision must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Occurrence counts of one whitespace token across a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenCounts {
    pub total: usize,
    pub in_span: usize,
}

/// Counts every whitespace token of the gold sentences and how often it lies
/// entirely inside a non-empty gold span.
pub fn token_counts(train: &[CorpusRecord]) -> Result<BTreeMap<String, TokenCounts>, RulesError> {
    let mut counts: BTreeMap<String, TokenCounts> = BTreeMap::new();
    for rec in train {
        let gold = rec.gold()?;
        let chars: Vec<char> = gold.plain().chars().collect();
        for (s, e) in whitespace_tokens(&chars) {
            let inside = gold
                .spans()
                .iter()
                .any(|span| !span.is_empty() && span.start <= s && e <= span.end);
            let entry = counts.entry(chars[s..e].iter().collect()).or_default();
            entry.total += 1;
            entry.in_span += usize::from(inside);
        }
    }
    Ok(counts)
}

/// Words whose in-span count reaches `min_support` and whose in-span share
/// reaches `min_precision`.
pub fn mine_common_errors(
    train: &[CorpusRecord],
    cfg: &MiningConfig,
) -> Result<RuleSet, RulesError> {
    cfg.validate()?;
    let words = token_counts(train)?
        .into_iter()
        .filter(|(_, c)| {
            c.in_span >= cfg.min_support && c.in_span as f64 / c.total as f64 >= cfg.min_precision
        })
        .map(|(w, _)| w);
    RuleSet::new(words, Vec::<String>::new())
}

/// A word list: one token per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordList {
    pub words: BTreeSet<String>,
    /// Line numbers of blank lines that were skipped.
    pub skipped_lines: Vec<usize>,
}

pub fn load_wordlist(path: &Path) -> Result<WordList, RulesError> {
    let bytes = tsv::read_file(path)?;
    let mut list = WordList::default();
    for item in tsv::utf8_lines(path, &bytes) {
        let (line, text) = item?;
        let word = text.trim();
        if word.is_empty() {
            log::warn!("{}:{line}: empty line skipped", path.display());
            list.skipped_lines.push(line);
            continue;
        }
        check_rule(word).map_err(|e| TsvError::format(path, line, e.to_string()))?;
        list.words.insert(word.to_owned());
    }
    Ok(list)
}
