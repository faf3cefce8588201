//! The per-sentence fallback chain and its ablation variants.
//!
//! The full chain is: sentence lookup, character reconciliation, one word
//! repair plus character retry, rule-based detection on the input, and
//! finally the P2 sweep that marks known error words the earlier stages
//! missed. Each [`AblationVariant`] enables a prefix-like subset of it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    count_markers, strip_markers, CorpusRecord, MarkError, MarkedSentence, MARKER,
};
use crate::lookup::{find, SentenceLookup};
use crate::reconcile::{
    char_correct, reconcile, CharCorrection, CharLookupTable, ReconcileError, ReconcileStage,
};
use crate::rules::{mark_matches, regex_correction, RuleSet, RulesError};
use crate::textnorm::{normalize, NormConfig};
use crate::tsv::{self, TsvError, TsvSpec};

pub const RAW_OUTPUT_HEADER: [&str; 2] = ["id", "raw_output"];
pub const PREDICTION_HEADER: [&str; 2] = ["id", "predicted"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no raw model output for record {0:?}")]
    MissingRawOutput(String),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("record {id:?}: {source}")]
    Record {
        id: String,
        #[source]
        source: ReconcileError,
    },
    #[error("malformed prediction: {0}")]
    Mark(#[from] MarkError),
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error("{path}: {source}")]
    Config {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Rules(#[from] RulesError),
}

/// The eight rows of the ablation table, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// Model output exactly as produced.
    #[serde(alias = "Raw")]
    Raw,
    /// Model output with marker parity repaired, kept only if it reproduces the input.
    #[serde(alias = "No Corr.")]
    NoCorrection,
    /// Rule-based detection on the input, no model output.
    #[serde(alias = "R")]
    RegexOnly,
    /// Character reconciliation.
    #[serde(rename = "cc", alias = "CC")]
    CC,
    #[serde(rename = "cc_r", alias = "CC+R")]
    CcR,
    #[serde(rename = "cc_wc_r", alias = "CC+WC+R")]
    CcWcR,
    #[serde(rename = "cc_wc_r_l", alias = "CC+WC+R+L")]
    CcWcRL,
    #[serde(rename = "cc_wc_r_l_p2", alias = "CC+WC+R+L+P2")]
    CcWcRLP2,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 8] = [
        AblationVariant::Raw,
        AblationVariant::NoCorrection,
        AblationVariant::RegexOnly,
        AblationVariant::CC,
        AblationVariant::CcR,
        AblationVariant::CcWcR,
        AblationVariant::CcWcRL,
        AblationVariant::CcWcRLP2,
    ];

    /// Row label as printed in reports.
    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Raw => "Raw",
            AblationVariant::NoCorrection => "No Corr.",
            AblationVariant::RegexOnly => "R",
            AblationVariant::CC => "CC",
            AblationVariant::CcR => "CC+R",
            AblationVariant::CcWcR => "CC+WC+R",
            AblationVariant::CcWcRL => "CC+WC+R+L",
            AblationVariant::CcWcRLP2 => "CC+WC+R+L+P2",
        }
    }

    fn key(self) -> &'static str {
        match self {
            AblationVariant::Raw => "raw",
            AblationVariant::NoCorrection => "no_correction",
            AblationVariant::RegexOnly => "regex_only",
            AblationVariant::CC => "cc",
            AblationVariant::CcR => "cc_r",
            AblationVariant::CcWcR => "cc_wc_r",
            AblationVariant::CcWcRL => "cc_wc_r_l",
            AblationVariant::CcWcRLP2 => "cc_wc_r_l_p2",
        }
    }

    pub fn uses_char(self) -> bool {
        self >= AblationVariant::CC
    }

    pub fn uses_word(self) -> bool {
        self >= AblationVariant::CcWcR
    }

    pub fn uses_regex(self) -> bool {
        self == AblationVariant::RegexOnly || self >= AblationVariant::CcR
    }

    pub fn uses_lookup(self) -> bool {
        self >= AblationVariant::CcWcRL
    }

    pub fn uses_p2(self) -> bool {
        self == AblationVariant::CcWcRLP2
    }

    pub fn needs_raw_output(self) -> bool {
        self != AblationVariant::RegexOnly
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for AblationVariant {
    type Err = String;

    /// Accepts either the snake-case key (`cc_wc_r`) or the row label (`CC+WC+R`).
    fn from_str(s: &str) -> Result<Self, String> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.key() == s || v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let keys: Vec<&str> = AblationVariant::ALL.iter().map(|v| v.key()).collect();
                format!("unknown variant {s:?}; expected one of {}", keys.join(", "))
            })
    }
}

/// Which stage produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Lookup,
    CharLevel,
    WordLevel,
    RegexFallback,
    RawPassthrough,
    /// The unmarked input, used when a variant has no stage left to try.
    InputPassthrough,
}

impl From<ReconcileStage> for Stage {
    fn from(s: ReconcileStage) -> Self {
        match s {
            ReconcileStage::CharLevel => Stage::CharLevel,
            ReconcileStage::WordLevel => Stage::WordLevel,
            ReconcileStage::RegexFallback => Stage::RegexFallback,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounters {
    pub lookup_hits: usize,
    pub char_level: usize,
    pub word_level: usize,
    pub regex_fallback: usize,
    pub raw_passthrough: usize,
    pub input_passthrough: usize,
}

impl StageCounters {
    pub fn record(&mut self, stage: Stage) {
        let slot = match stage {
            Stage::Lookup => &mut self.lookup_hits,
            Stage::CharLevel => &mut self.char_level,
            Stage::WordLevel => &mut self.word_level,
            Stage::RegexFallback => &mut self.regex_fallback,
            Stage::RawPassthrough => &mut self.raw_passthrough,
            Stage::InputPassthrough => &mut self.input_passthrough,
        };
        *slot += 1;
    }

    pub fn merge(&mut self, other: &StageCounters) {
        self.lookup_hits += other.lookup_hits;
        self.char_level += other.char_level;
        self.word_level += other.word_level;
        self.regex_fallback += other.regex_fallback;
        self.raw_passthrough += other.raw_passthrough;
        self.input_passthrough += other.input_passthrough;
    }

    pub fn total(&self) -> usize {
        self.lookup_hits
            + self.char_level
            + self.word_level
            + self.regex_fallback
            + self.raw_passthrough
            + self.input_passthrough
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub id: String,
    /// Normalized input.
    pub input: String,
    pub raw_output: Option<String>,
    pub predicted: String,
    pub stage: Stage,
    /// Spans added by the P2 sweep.
    pub p2_added: usize,
}

/// The lookup tables a run needs. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub char_table: CharLookupTable,
    pub rules: RuleSet,
    pub lookup: SentenceLookup,
}

/// Drops the last `$` when the marker count is odd.
pub fn repair_marker_parity(text: &str) -> String {
    if count_markers(text).is_multiple_of(2) {
        return text.to_owned();
    }
    let idx = text.rfind(MARKER).expect("odd count implies a marker");
    let mut out = text.to_owned();
    out.remove(idx);
    out
}

/// Wraps whole-token common error words that lie outside existing spans.
/// Returns the new sentence and the number of spans added.
pub fn apply_p2(predicted: &str, rules: &RuleSet) -> Result<(String, usize), MarkError> {
    let marked = MarkedSentence::parse(predicted)?;
    let (out, added) = mark_matches(&marked, rules.common_error_words(), &[]);
    Ok((out.raw().to_owned(), added))
}

/// Runs one record through `variant`. Lookup hits are final: they bypass the
/// model output entirely and are not swept by P2.
pub fn process_sentence(
    rec: &CorpusRecord,
    raw_output: Option<&str>,
    res: &Resources,
    variant: AblationVariant,
    cfg: &NormConfig,
) -> Result<PredictionRecord, PipelineError> {
    let input = normalize(&rec.input, cfg);
    let record_err = |source: ReconcileError| PipelineError::Record {
        id: rec.id.clone(),
        source,
    };
    let regex = |text: &str| regex_correction(text, &res.rules).map_err(|e| record_err(e.into()));
    let need_raw = || raw_output.ok_or_else(|| PipelineError::MissingRawOutput(rec.id.clone()));

    let (predicted, stage) = match variant {
        AblationVariant::Raw => (need_raw()?.to_owned(), Stage::RawPassthrough),
        AblationVariant::NoCorrection => {
            let repaired = repair_marker_parity(&normalize(need_raw()?, cfg));
            if strip_markers(&repaired) == input {
                (repaired, Stage::RawPassthrough)
            } else {
                (input.clone(), Stage::InputPassthrough)
            }
        }
        AblationVariant::RegexOnly => (regex(&input)?, Stage::RegexFallback),
        _ => match find(&input, &res.lookup, cfg).filter(|_| variant.uses_lookup()) {
            Some(hit) => (hit.to_owned(), Stage::Lookup),
            None => {
                let output = normalize(need_raw()?, cfg);
                if variant.uses_word() {
                    let outcome = reconcile(&output, &input, &res.char_table, &res.rules)
                        .map_err(record_err)?;
                    (outcome.result, outcome.stage.into())
                } else {
                    match char_correct(&output, &input, &res.char_table) {
                        CharCorrection::Corrected { text, .. }
                            if count_markers(&text).is_multiple_of(2) =>
                        {
                            (text, Stage::CharLevel)
                        }
                        _ if variant.uses_regex() => (regex(&input)?, Stage::RegexFallback),
                        _ => (input.clone(), Stage::InputPassthrough),
                    }
                }
            }
        },
    };

    let (predicted, p2_added) = if variant.uses_p2() && stage != Stage::Lookup {
        apply_p2(&predicted, &res.rules)?
    } else {
        (predicted, 0)
    };

    Ok(PredictionRecord {
        id: rec.id.clone(),
        input,
        raw_output: raw_output.map(str::to_owned),
        predicted,
        stage,
        p2_added,
    })
}

/// Processes every record independently, in input order.
pub fn run_pipeline(
    records: &[CorpusRecord],
    raw_outputs: &BTreeMap<String, String>,
    res: &Resources,
    variant: AblationVariant,
    cfg: &NormConfig,
) -> Result<(Vec<PredictionRecord>, StageCounters), PipelineError> {
    let mut seen = BTreeSet::new();
    for rec in records {
        if !seen.insert(rec.id.as_str()) {
            return Err(PipelineError::DuplicateId(rec.id.clone()));
        }
    }
    let mut counters = StageCounters::default();
    let mut preds = Vec::with_capacity(records.len());
    for rec in records {
        let raw = raw_outputs.get(&rec.id).map(String::as_str);
        let pred = process_sentence(rec, raw, res, variant, cfg)?;
        counters.record(pred.stage);
        preds.push(pred);
    }
    Ok((preds, counters))
}

/// Reads an `id<TAB>raw_output` file.
pub fn read_raw_outputs(path: &Path) -> Result<BTreeMap<String, String>, TsvError> {
    read_id_map(path, &RAW_OUTPUT_HEADER)
}

pub fn write_raw_outputs(path: &Path, outputs: &BTreeMap<String, String>) -> Result<(), TsvError> {
    let rows: Vec<[String; 2]> = outputs
        .iter()
        .map(|(k, v)| [k.clone(), v.clone()])
        .collect();
    tsv::write_rows(path, Some(&RAW_OUTPUT_HEADER), &rows)
}

/// Writes `id<TAB>predicted`, sorted by id.
pub fn write_predictions(path: &Path, preds: &[PredictionRecord]) -> Result<(), TsvError> {
    let mut rows: Vec<[String; 2]> = preds
        .iter()
        .map(|p| [p.id.clone(), p.predicted.clone()])
        .collect();
    rows.sort();
    tsv::write_rows(path, Some(&PREDICTION_HEADER), &rows)
}

/// Reads a predictions file into `(id, predicted)` pairs in file order.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, String)>, TsvError> {
    Ok(read_id_map(path, &PREDICTION_HEADER)?.into_iter().collect())
}

fn read_id_map(path: &Path, header: &[&str]) -> Result<BTreeMap<String, String>, TsvError> {
    let rows = tsv::read_rows(
        path,
        TsvSpec {
            header: Some(header),
            columns: 2,
            comments: false,
        },
    )?;
    let mut map = BTreeMap::new();
    for row in rows {
        let [id, value]: [String; 2] = row.cells.try_into().expect("two columns");
        if map.insert(id.clone(), value).is_some() {
            return Err(TsvError::format(
                path,
                row.line,
                format!("duplicate id {id:?}"),
            ));
        }
    }
    Ok(map)
}

/// JSON run configuration. Paths are optional; missing tables are empty,
/// except the character table which defaults to the built-in one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variant: AblationVariant,
    #[serde(default)]
    pub norm: NormConfig,
    #[serde(default)]
    pub char_table_path: Option<PathBuf>,
    #[serde(default)]
    pub ruleset_path: Option<PathBuf>,
    #[serde(default)]
    pub lookup_path: Option<PathBuf>,
    #[serde(default)]
    pub raw_outputs_path: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let bytes = tsv::read_file(path)?;
        serde_json::from_slice(&bytes).map_err(|source| PipelineError::Config {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn resources(&self) -> Result<Resources, PipelineError> {
        Ok(Resources {
            char_table: match &self.char_table_path {
                Some(p) => CharLookupTable::load(p)?,
                None => CharLookupTable::builtin(),
            },
            rules: match &self.ruleset_path {
                Some(p) => RuleSet::load(p)?,
                None => RuleSet::default(),
            },
            lookup: match &self.lookup_path {
                Some(p) => SentenceLookup::load(p)?,
                None => SentenceLookup::default(),
            },
        })
    }
}
