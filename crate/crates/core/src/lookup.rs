//! Exact-match table from known sentences to their gold markings.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{count_markers, strip_markers, CorpusError, CorpusRecord};
use crate::textnorm::{normalize, NormConfig};
use crate::tsv::{self, TsvError, TsvSpec};

pub const LOOKUP_HEADER: [&str; 2] = ["plain", "marked"];

#[derive(Debug, Error)]
pub enum LookupError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error("record {id:?}: gold without markers differs from the normalized input")]
    GoldMismatch { id: String },
}

/// A duplicate input whose gold disagreed with the first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupConflict {
    pub kept_id: String,
    pub dropped_id: String,
    pub plain: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceLookup {
    entries: BTreeMap<String, String>,
    conflicts: Vec<LookupConflict>,
}

impl SentenceLookup {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn conflicts(&self) -> &[LookupConflict] {
        &self.conflicts
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TsvError> {
        let rows: Vec<[String; 2]> = self
            .entries
            .iter()
            .map(|(k, v)| [k.clone(), v.clone()])
            .collect();
        tsv::write_rows(path, Some(&LOOKUP_HEADER), &rows)
    }

    /// Reloads a saved table. Keys are taken as already normalized.
    pub fn load(path: &Path) -> Result<Self, TsvError> {
        let rows = tsv::read_rows(
            path,
            TsvSpec {
                header: Some(&LOOKUP_HEADER),
                columns: 2,
                comments: false,
            },
        )?;
        let mut entries = BTreeMap::new();
        for row in rows {
            let [plain, marked]: [String; 2] = row.cells.try_into().expect("two columns");
            if !count_markers(&marked).is_multiple_of(2) || strip_markers(&marked) != plain {
                return Err(TsvError::format(
                    path,
                    row.line,
                    "marked sentence does not match its key",
                ));
            }
            if entries.insert(plain, marked).is_some() {
                return Err(TsvError::format(path, row.line, "duplicate key"));
            }
        }
        Ok(SentenceLookup {
            entries,
            conflicts: Vec::new(),
        })
    }
}

/// Builds the table from annotated records. The first record wins on
/// duplicate inputs; disagreeing later golds are recorded as conflicts.
pub fn build_lookup(
    train: &[CorpusRecord],
    cfg: &NormConfig,
) -> Result<SentenceLookup, LookupError> {
    let mut table = SentenceLookup::default();
    let mut first_id: BTreeMap<String, String> = BTreeMap::new();
    for rec in train {
        let gold = rec.gold()?;
        let key = normalize(&rec.input, cfg);
        let value = normalize(gold.raw(), cfg);
        if strip_markers(&value) != key {
            return Err(LookupError::GoldMismatch { id: rec.id.clone() });
        }
        match table.entries.get(&key) {
            None => {
                first_id.insert(key.clone(), rec.id.clone());
                table.entries.insert(key, value);
            }
            Some(existing) if *existing == value => {}
            Some(_) => {
                log::warn!(
                    "conflicting gold for duplicate input in record {:?}",
                    rec.id
                );
                table.conflicts.push(LookupConflict {
                    kept_id: first_id[&key].clone(),
                    dropped_id: rec.id.clone(),
                    plain: key,
                });
            }
        }
    }
    Ok(table)
}

/// The stored marking for `sentence`, if its normalized form is a key.
pub fn find<'a>(sentence: &str, table: &'a SentenceLookup, cfg: &NormConfig) -> Option<&'a str> {
    table
        .entries
        .get(&normalize(sentence, cfg))
        .map(String::as_str)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_marked;
    use crate::eval::levenshtein;

    fn rec(id: &str, input: &str, gold: &str) -> CorpusRecord {
        CorpusRecord {
            id: id.into(),
            input: input.into(),
            gold: Some(parse_marked(gold).unwrap()),
        }
    }

    #[test]
    fn builds_one_entry_per_input() {
        let cfg = NormConfig::default();
        let t = build_lookup(&[rec("1", "a b", "$a$ b"), rec("2", "c", "c")], &cfg).unwrap();
        assert_eq!(t.len(), 2);
        let t = build_lookup(&[rec("1", "a b", "$a$ b"), rec("2", "a b", "$a$ b")], &cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.conflicts().is_empty());
    }

    #[test]
    fn conflicting_duplicate_keeps_first() {
        let cfg = NormConfig::default();
        let t = build_lookup(&[rec("1", "a b", "$a$ b"), rec("2", "a b", "a $b$")], &cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(
            t.conflicts(),
            &[LookupConflict {
                kept_id: "1".into(),
                dropped_id: "2".into(),
                plain: "a b".into()
            }]
        );
        assert_eq!(find("a b", &t, &cfg), Some("$a$ b"));
    }

    #[test]
    fn find_is_exact_after_normalization() {
        let cfg = NormConfig::default();
        let t = build_lookup(&[rec("1", "আমি ভাত খাই", "আমি $ভাত$ খাই")], &cfg).unwrap();
        assert_eq!(find("আমি ভাত\nখাই", &t, &cfg), Some("আমি $ভাত$ খাই"));
        assert_eq!(find("আমি ভাত খাই ", &t, &cfg), None);
        let hit = find("আমি ভাত খাই", &t, &cfg).unwrap();
        assert_eq!(levenshtein(hit, "আমি $ভাত$ খাই"), 0);
        assert_eq!(find("unseen", &t, &cfg), None);

        let t = build_lookup(&[rec("1", "a\nb", "$a$ b")], &cfg).unwrap();
        assert_eq!(find("a\nb", &t, &cfg), Some("$a$ b"));
    }

    #[test]
    fn missing_gold_and_mismatch() {
        let cfg = NormConfig::default();
        let no_gold = CorpusRecord {
            id: "x".into(),
            input: "a".into(),
            gold: None,
        };
        assert!(matches!(
            build_lookup(&[no_gold], &cfg),
            Err(LookupError::Corpus(_))
        ));
        assert!(matches!(
            build_lookup(&[rec("1", "a", "$b$")], &cfg),
            Err(LookupError::GoldMismatch { .. })
        ));
    }

    #[test]
    fn save_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.tsv");
        let cfg = NormConfig::default();
        let t = build_lookup(&[rec("1", "a b", "$a$ b"), rec("2", "c", "c$$")], &cfg).unwrap();
        t.save(&path).unwrap();
        assert_eq!(SentenceLookup::load(&path).unwrap(), t);
        std::fs::write(&path, "plain\tmarked\nab\t$a$c\n").unwrap();
        assert_eq!(SentenceLookup::load(&path).unwrap_err().line(), Some(2));
    }
}
