//! Deterministic stand-in for the seq2seq model.
//!
//! [`degrade`] turns a gold marked sentence into plausible raw model output:
//! confusable characters, respelled words, dropped marker pairs and
//! truncation after a token budget. Randomness comes from ChaCha8
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`), so a seed reproduces the same
//! output everywhere.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusRecord, MarkedSentence, Span, MARKER};
use crate::reconcile::CharLookupTable;
use crate::textnorm::{normalize, NormConfig};
use crate::tokens::{whitespace_tokens, MarkedToken};

/// Token budget of the simulated model.
pub const DEFAULT_TOKEN_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DegradeError {
    #[error("{name} must be in [0, 1], got {value}")]
    RateOutOfRange { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradeConfig {
    /// Probability that an eligible character is replaced by a confusable.
    pub char_swap_rate: f64,
    /// Whole-word respellings, applied to every occurrence.
    pub word_swap_pairs: BTreeMap<String, String>,
    /// Keep only this many whitespace tokens.
    pub truncate_at_tokens: Option<usize>,
    /// Probability that a gold marker pair is omitted.
    pub marker_drop_rate: f64,
    pub seed: u64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            char_swap_rate: 0.0,
            word_swap_pairs: BTreeMap::new(),
            truncate_at_tokens: Some(DEFAULT_TOKEN_LIMIT),
            marker_drop_rate: 0.0,
            seed: 0,
        }
    }
}

impl DegradeConfig {
    pub fn validate(&self) -> Result<(), DegradeError> {
        for (name, value) in [
            ("char_swap_rate", self.char_swap_rate),
            ("marker_drop_rate", self.marker_drop_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DegradeError::RateOutOfRange { name, value });
            }
        }
        Ok(())
    }

    /// Same configuration with the seed mixed with a record id, so every
    /// record gets its own stream independent of corpus order.
    pub fn for_record(&self, id: &str) -> DegradeConfig {
        DegradeConfig {
            seed: self.seed ^ fnv1a(id.as_bytes()),
            ..self.clone()
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Applies, in order: marker-pair drops, word swaps, character swaps through
/// the inverse of `confusables`, truncation.
pub fn degrade(
    gold: &MarkedSentence,
    cfg: &DegradeConfig,
    confusables: &CharLookupTable,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let kept: Vec<Span> = gold
        .spans()
        .iter()
        .copied()
        .filter(|_| !(cfg.marker_drop_rate > 0.0 && rng.gen::<f64>() < cfg.marker_drop_rate))
        .collect();
    let mut text = if kept.len() == gold.spans().len() {
        gold.raw().to_owned()
    } else {
        MarkedSentence::from_spans(gold.plain(), kept)
            .expect("subset of valid spans")
            .raw()
            .to_owned()
    };

    if !cfg.word_swap_pairs.is_empty() {
        text = swap_words(&text, &cfg.word_swap_pairs);
    }

    if cfg.char_swap_rate > 0.0 {
        let inverse = confusables.inverse();
        text = text
            .chars()
            .map(|c| match inverse.get(&c) {
                Some(alts) if c != MARKER && rng.gen::<f64>() < cfg.char_swap_rate => {
                    *alts.choose(&mut rng).expect("non-empty inverse entry")
                }
                _ => c,
            })
            .collect();
    }

    if let Some(limit) = cfg.truncate_at_tokens {
        let chars: Vec<char> = text.chars().collect();
        let tokens = whitespace_tokens(&chars);
        if tokens.len() > limit {
            let end = if limit == 0 { 0 } else { tokens[limit - 1].1 };
            text = chars[..end].iter().collect();
        }
    }
    text
}

fn swap_words(text: &str, pairs: &BTreeMap<String, String>) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for (s, e) in whitespace_tokens(&chars) {
        out.extend(&chars[pos..s]);
        let token: String = chars[s..e].iter().collect();
        let parts = MarkedToken::split(&token);
        match pairs.get(parts.body) {
            Some(alt) if !parts.has_inner_marker() => {
                out.push_str(parts.leading);
                out.push_str(alt);
                out.push_str(parts.trailing);
            }
            _ => out.push_str(&token),
        }
        pos = e;
    }
    out.extend(&chars[pos..]);
    out
}

/// Degrades every annotated record with a per-record seed.
pub fn degrade_corpus(
    records: &[CorpusRecord],
    cfg: &DegradeConfig,
    confusables: &CharLookupTable,
) -> BTreeMap<String, String> {
    records
        .iter()
        .filter_map(|rec| {
            let gold = rec.gold.as_ref()?;
            Some((
                rec.id.clone(),
                degrade(gold, &cfg.for_record(&rec.id), confusables),
            ))
        })
        .collect()
}

/// Vocabulary for synthetic marked sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVocab {
    /// Words that are never marked on their own.
    pub clean: Vec<String>,
    /// Words that are always marked when they occur.
    pub errors: Vec<String>,
    /// Probability that a token slot holds an error word.
    pub error_rate: f64,
    /// Probability of a zero-width omission span before the final danda.
    pub omission_rate: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for SyntheticVocab {
    fn default() -> Self {
        let words = |ws: &[&str]| {
            ws.iter()
                .map(|w| normalize(w, &NormConfig::default()))
                .collect::<Vec<_>>()
        };
        SyntheticVocab {
            clean: words(&[
                "আমি",
                "তুমি",
                "সে",
                "আমরা",
                "ভাত",
                "খাই",
                "বাড়ি",
                "যাব",
                "আজ",
                "কাল",
                "বই",
                "পড়ি",
                "স্কুলে",
                "নদী",
                "পানি",
                "গান",
                "শুনি",
                "বন্ধু",
                "দেশ",
                "মানুষ",
                "সময়",
                "দুঃখ",
                "অতঃপর",
                "১২",
                "৩০",
                "২০২৩",
                "৫টি",
                "বছর",
                "সকাল",
                "রাতে",
                "শহর",
                "গ্রাম",
            ]),
            errors: words(&["করিল", "হইল", "গিয়াছে", "খাইয়া", "দেখিয়া", "বলিল"]),
            error_rate: 0.12,
            omission_rate: 0.05,
            min_tokens: 3,
            max_tokens: 12,
        }
    }
}

/// Generates `n` annotated records (`syn-00000`, …) from `vocab`.
pub fn synthetic_corpus(n: usize, vocab: &SyntheticVocab, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(vocab.min_tokens..=vocab.max_tokens);
            let mut raw = String::new();
            for t in 0..len {
                if t > 0 {
                    raw.push(' ');
                }
                if !vocab.errors.is_empty() && rng.gen::<f64>() < vocab.error_rate {
                    let w = vocab.errors.choose(&mut rng).expect("non-empty");
                    raw.push(MARKER);
                    raw.push_str(w);
                    raw.push(MARKER);
                } else {
                    raw.push_str(vocab.clean.choose(&mut rng).expect("clean vocabulary"));
                }
            }
            if rng.gen::<f64>() < vocab.omission_rate {
                raw.push_str("$$");
            }
            raw.push('।');
            let gold = MarkedSentence::parse(&raw).expect("generated markers are paired");
            CorpusRecord {
                id: format!("syn-{i:05}"),
                input: gold.plain().to_owned(),
                gold: Some(gold),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{count_markers, parse_marked, strip_markers};
    use crate::reconcile::{reconcile, ReconcileStage};
    use crate::rules::RuleSet;
    use proptest::prelude::*;

    fn no_truncation() -> DegradeConfig {
        DegradeConfig {
            truncate_at_tokens: None,
            ..DegradeConfig::default()
        }
    }

    #[test]
    fn zero_rates_are_identity() {
        let gold = parse_marked("আমি $ভাত$ খাই।").unwrap();
        let table = CharLookupTable::builtin();
        assert_eq!(
            degrade(&gold, &DegradeConfig::default(), &table),
            gold.raw()
        );
    }

    #[test]
    fn full_swap_single_entry_table_is_recovered() {
        let table = CharLookupTable::from_pairs([('|', '।')]).unwrap();
        let gold = parse_marked("সে $করিল$। আমি খাই।").unwrap();
        let cfg = DegradeConfig {
            char_swap_rate: 1.0,
            ..no_truncation()
        };
        let out = degrade(&gold, &cfg, &table);
        assert_eq!(out, "সে $করিল$| আমি খাই|");
        let rec = reconcile(&out, gold.plain(), &table, &RuleSet::default()).unwrap();
        assert_eq!(rec.stage, ReconcileStage::CharLevel);
        assert_eq!(rec.result, gold.raw());
        assert_eq!(rec.replacements, 2);
    }

    #[test]
    fn truncation_reaches_regex_fallback() {
        let gold = parse_marked("এক $দুই$ তিন চার পাঁচ").unwrap();
        let cfg = DegradeConfig {
            truncate_at_tokens: Some(2),
            ..DegradeConfig::default()
        };
        let out = degrade(&gold, &cfg, &CharLookupTable::default());
        assert_eq!(out, "এক $দুই$");
        let rec = reconcile(
            &out,
            gold.plain(),
            &CharLookupTable::default(),
            &RuleSet::default(),
        )
        .unwrap();
        assert_eq!(rec.stage, ReconcileStage::RegexFallback);
    }

    #[test]
    fn word_swaps_and_marker_drops() {
        let gold = parse_marked("$বাড়ি$ যাব বাড়ি").unwrap();
        let cfg = DegradeConfig {
            word_swap_pairs: [("বাড়ি".to_string(), "বাড়ী".to_string())].into(),
            ..no_truncation()
        };
        assert_eq!(
            degrade(&gold, &cfg, &CharLookupTable::default()),
            "$বাড়ী$ যাব বাড়ী"
        );
        let cfg = DegradeConfig {
            marker_drop_rate: 1.0,
            ..no_truncation()
        };
        assert_eq!(
            degrade(&gold, &cfg, &CharLookupTable::default()),
            "বাড়ি যাব বাড়ি"
        );
    }

    #[test]
    fn rates_are_validated() {
        let cfg = DegradeConfig {
            char_swap_rate: 1.5,
            ..DegradeConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(DegradeConfig::default().validate().is_ok());
    }

    #[test]
    fn synthetic_records_are_consistent() {
        let records = synthetic_corpus(200, &SyntheticVocab::default(), 7);
        assert_eq!(records.len(), 200);
        let cfg = NormConfig::default();
        for r in &records {
            let gold = r.gold.as_ref().unwrap();
            assert_eq!(normalize(gold.raw(), &cfg), gold.raw());
            assert_eq!(strip_markers(gold.raw()), r.input);
        }
        assert!(records
            .iter()
            .any(|r| r.gold.as_ref().unwrap().has_errors()));
        assert_eq!(
            records,
            synthetic_corpus(200, &SyntheticVocab::default(), 7)
        );
    }

    #[test]
    fn per_record_seeds_differ() {
        let cfg = DegradeConfig::default();
        assert_ne!(cfg.for_record("a").seed, cfg.for_record("b").seed);
        assert_eq!(cfg.for_record("a"), cfg.for_record("a"));
    }

    proptest! {
        #[test]
        fn char_swaps_are_recoverable(seed: u64, rate in 0.0f64..=1.0, idx in 0usize..50) {
            let table = CharLookupTable::builtin();
            let records = synthetic_corpus(50, &SyntheticVocab::default(), seed);
            let gold = records[idx].gold.as_ref().unwrap();
            let cfg = DegradeConfig { char_swap_rate: rate, seed, ..no_truncation() };
            let out = degrade(gold, &cfg, &table);
            prop_assert_eq!(&out, &degrade(gold, &cfg, &table));
            prop_assert_eq!(count_markers(&out), count_markers(gold.raw()));
            let rec = reconcile(&out, gold.plain(), &table, &RuleSet::default()).unwrap();
            prop_assert_eq!(rec.stage, ReconcileStage::CharLevel);
            prop_assert_eq!(rec.result, gold.raw());
        }
    }
}
