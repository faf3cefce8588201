//! `$`-marked sentences and the TSV corpora that carry them.
//!
//! A marked sentence brackets every erroneous segment with a pair of `$`
//! characters: `আমি $ভাত$ খাই`. Spans are half-open intervals of Unicode
//! scalar values into the unmarked text. Empty spans (`$$`) mark omissions.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textnorm::{normalize, NormConfig};
use crate::tsv::{self, TsvError, TsvSpec};

/// The reserved error marker.
pub const MARKER: char = '$';

pub const TRAIN_HEADER: [&str; 3] = ["id", "input", "gold"];
pub const TEST_HEADER: [&str; 2] = ["id", "input"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkError {
    #[error("odd number of `$` markers ({count})")]
    OddMarkerCount { count: usize },
    #[error("unmarked text contains a `$` character")]
    MarkerInText,
    #[error("invalid span {start}..{end}: {reason}")]
    InvalidSpan {
        start: usize,
        end: usize,
        reason: &'static str,
    },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error("record {id:?} has no gold annotation")]
    MissingGold { id: String },
}

/// Half-open interval of character (scalar value) indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A sentence together with its `$`-bracketed error spans.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MarkedSentence {
    plain: String,
    spans: Vec<Span>,
    raw: String,
}

impl MarkedSentence {
    /// Parses a marked line. The original text is kept byte-exact in `raw`.
    pub fn parse(line: &str) -> Result<Self, MarkError> {
        let count = count_markers(line);
        if !count.is_multiple_of(2) {
            return Err(MarkError::OddMarkerCount { count });
        }
        let mut plain = String::with_capacity(line.len());
        let mut spans = Vec::with_capacity(count / 2);
        let mut open: Option<usize> = None;
        let mut pos = 0;
        for c in line.chars() {
            if c == MARKER {
                match open.take() {
                    Some(start) => spans.push(Span::new(start, pos)),
                    None => open = Some(pos),
                }
            } else {
                plain.push(c);
                pos += 1;
            }
        }
        Ok(MarkedSentence {
            plain,
            spans,
            raw: line.to_owned(),
        })
    }

    /// Builds a marked sentence from unmarked text and spans, rendering the
    /// marked form. Spans must be sorted, in bounds and must not overlap; an
    /// empty span may sit on the boundary of another span but not inside it.
    pub fn from_spans(plain: &str, spans: Vec<Span>) -> Result<Self, MarkError> {
        if plain.contains(MARKER) {
            return Err(MarkError::MarkerInText);
        }
        let len = plain.chars().count();
        let mut prev_end = 0;
        for span in &spans {
            let bad = |reason| MarkError::InvalidSpan {
                start: span.start,
                end: span.end,
                reason,
            };
            if span.start > span.end {
                return Err(bad("start after end"));
            }
            if span.end > len {
                return Err(bad("out of bounds"));
            }
            if span.start < prev_end {
                return Err(bad("overlaps or precedes the previous span"));
            }
            prev_end = span.end;
        }
        let mut raw = String::with_capacity(plain.len() + 2 * spans.len());
        let mut chars = plain.chars();
        let mut pos = 0;
        for span in &spans {
            raw.extend(chars.by_ref().take(span.start - pos));
            raw.push(MARKER);
            raw.extend(chars.by_ref().take(span.len()));
            raw.push(MARKER);
            pos = span.end;
        }
        raw.extend(chars);
        Ok(MarkedSentence {
            plain: plain.to_owned(),
            spans,
            raw,
        })
    }

    pub fn plain(&self) -> &str {
        &self.plain
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn has_errors(&self) -> bool {
        !self.spans.is_empty()
    }

    /// Text covered by `span`.
    pub fn span_text(&self, span: Span) -> String {
        self.plain
            .chars()
            .skip(span.start)
            .take(span.len())
            .collect()
    }
}

impl fmt::Display for MarkedSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

pub fn parse_marked(line: &str) -> Result<MarkedSentence, MarkError> {
    MarkedSentence::parse(line)
}

/// Removes every `$`; nothing else changes.
pub fn strip_markers(marked: &str) -> String {
    marked.chars().filter(|&c| c != MARKER).collect()
}

pub fn count_markers(text: &str) -> usize {
    text.chars().filter(|&c| c == MARKER).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub input: String,
    pub gold: Option<MarkedSentence>,
}

impl CorpusRecord {
    pub fn gold(&self) -> Result<&MarkedSentence, CorpusError> {
        self.gold.as_ref().ok_or_else(|| CorpusError::MissingGold {
            id: self.id.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub with_error: usize,
    pub num_errors: usize,
}

pub fn corpus_stats(records: &[CorpusRecord]) -> Result<CorpusStats, CorpusError> {
    records
        .iter()
        .try_fold(CorpusStats::default(), |mut stats, rec| {
            let gold = rec.gold()?;
            stats.total += 1;
            stats.with_error += usize::from(gold.has_errors());
            stats.num_errors += gold.spans().len();
            Ok(stats)
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Train,
    Test,
}

impl Schema {
    fn header(self) -> &'static [&'static str] {
        match self {
            Schema::Train => &TRAIN_HEADER,
            Schema::Test => &TEST_HEADER,
        }
    }

    /// Infers the schema from a corpus file's header line.
    pub fn detect(path: &Path) -> Result<Schema, TsvError> {
        let bytes = tsv::read_file(path)?;
        let first = tsv::utf8_lines(path, &bytes).next();
        match first {
            Some(Ok((_, line))) if line == TRAIN_HEADER.join("\t") => Ok(Schema::Train),
            Some(Ok((_, line))) if line == TEST_HEADER.join("\t") => Ok(Schema::Test),
            Some(Ok((line_no, line))) => Err(TsvError::format(
                path,
                line_no,
                format!("unrecognised corpus header {line:?}"),
            )),
            Some(Err(e)) => Err(e),
            None => Err(TsvError::format(path, 1, "missing header line")),
        }
    }
}

/// Loads a corpus, checking gold consistency under the default normalization.
pub fn load_corpus(path: &Path, schema: Schema) -> Result<Vec<CorpusRecord>, TsvError> {
    load_corpus_with(path, schema, &NormConfig::default())
}

/// Loads a corpus. Every line is validated: the input column may not contain
/// `$`, gold cells must have an even marker count, and a gold sentence with
/// its markers removed must equal the input once both are normalized.
pub fn load_corpus_with(
    path: &Path,
    schema: Schema,
    cfg: &NormConfig,
) -> Result<Vec<CorpusRecord>, TsvError> {
    let header = schema.header();
    let rows = tsv::read_rows(
        path,
        TsvSpec {
            header: Some(header),
            columns: header.len(),
            comments: false,
        },
    )?;
    rows.into_iter()
        .map(|row| {
            let mut cells = row.cells.into_iter();
            let id = cells.next().unwrap_or_default();
            let input = cells.next().unwrap_or_default();
            let fail = |reason: String| TsvError::format(path, row.line, reason);
            if id.is_empty() {
                return Err(fail("empty record id".into()));
            }
            if input.contains(MARKER) {
                return Err(fail(format!("record {id:?}: input contains reserved `$`")));
            }
            let gold = match cells.next() {
                Some(cell) => {
                    let gold = MarkedSentence::parse(&cell)
                        .map_err(|e| fail(format!("record {id:?}: gold column: {e}")))?;
                    if normalize(gold.plain(), cfg) != normalize(&input, cfg) {
                        return Err(fail(format!(
                            "record {id:?}: gold without markers differs from input"
                        )));
                    }
                    Some(gold)
                }
                None => None,
            };
            Ok(CorpusRecord { id, input, gold })
        })
        .collect()
}

/// Writes records in the given schema. Train schema requires gold on every record.
pub fn write_corpus(
    path: &Path,
    records: &[CorpusRecord],
    schema: Schema,
) -> Result<(), CorpusError> {
    let rows = records
        .iter()
        .map(|rec| {
            let mut row = vec![rec.id.clone(), rec.input.clone()];
            if schema == Schema::Train {
                row.push(rec.gold()?.raw().to_owned());
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;
    tsv::write_rows(path, Some(schema.header()), &rows)?;
    Ok(())
}
