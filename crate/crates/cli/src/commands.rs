use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gedpost::corpus::{self, corpus_stats, CorpusRecord, Schema};
use gedpost::eval::{self, SplitAssignment};
use gedpost::lookup::build_lookup;
use gedpost::pipeline::{self, PipelineConfig, Resources};
use gedpost::reconcile::CharLookupTable;
use gedpost::rules::{self, mine_common_errors, MiningConfig, RuleSet};
use gedpost::simgen::{degrade_corpus, DegradeConfig};
use gedpost::{normalize, AblationVariant, NormConfig};

use crate::{Command, NormArgs, TableArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate { input, norm } => validate(&input, &norm_config(&norm)?),
        Command::Stats { inputs, norm } => stats(&inputs, &norm_config(&norm)?),
        Command::MineRules {
            inputs,
            wordlist,
            literal_rules,
            min_support,
            min_precision,
            out,
            norm,
        } => {
            let records = load_annotated(&inputs, &norm_config(&norm)?)?;
            let cfg = MiningConfig {
                min_support,
                min_precision,
            };
            let mined = mine_common_errors(&records, &cfg)?;
            let literals = match literal_rules {
                Some(path) => rules::load_wordlist(&path)?.words.into_iter().collect(),
                None => Vec::new(),
            };
            let mut rules = RuleSet::new(mined.common_error_words().iter().cloned(), literals)?;
            if let Some(path) = wordlist {
                let list = rules::load_wordlist(&path)?;
                for line in &list.skipped_lines {
                    eprintln!("warning: {}:{line}: empty line skipped", path.display());
                }
                rules.add_words(list.words)?;
            }
            rules.save(&out)?;
            eprintln!(
                "{} words ({} mined), {} literal rules -> {}",
                rules.common_error_words().len(),
                mined.common_error_words().len(),
                rules.literal_rules().len(),
                out.display()
            );
            Ok(())
        }
        Command::BuildLookup { inputs, out, norm } => {
            let cfg = norm_config(&norm)?;
            let records = load_annotated(&inputs, &cfg)?;
            let table = build_lookup(&records, &cfg)?;
            for c in table.conflicts() {
                eprintln!(
                    "warning: record {:?} disagrees with {:?} on the same input; keeping the first",
                    c.dropped_id, c.kept_id
                );
            }
            table.save(&out)?;
            eprintln!("{} entries -> {}", table.len(), out.display());
            Ok(())
        }
        Command::Reconcile {
            input,
            tables,
            variant,
            out,
        } => {
            let setup = Setup::resolve(&tables, Some(variant))?;
            let schema = Schema::detect(&input)?;
            let records = corpus::load_corpus_with(&input, schema, &setup.config.norm)?;
            let raw = setup.raw_outputs()?;
            let (preds, counters) = pipeline::run_pipeline(
                &records,
                &raw,
                &setup.resources,
                setup.config.variant,
                &setup.config.norm,
            )?;
            pipeline::write_predictions(&out, &preds)?;
            eprintln!(
                "{} predictions ({}) -> {}\n{}",
                preds.len(),
                setup.config.variant.label(),
                out.display(),
                serde_json::to_string(&counters)?
            );
            Ok(())
        }
        Command::Evaluate {
            input,
            gold,
            split,
            variant,
            out,
            norm,
        } => {
            let cfg = norm_config(&norm)?;
            let preds = pipeline::read_predictions(&input)?;
            let golds = gold_map(&load_annotated(&[gold], &cfg)?, &cfg)?;
            let split = load_split(split.as_deref(), golds.keys())?;
            let report = eval::split_report(&preds, &golds, &split, variant, None)?;
            print!("{}", eval::render_table(std::slice::from_ref(&report)));
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            Ok(())
        }
        Command::Ablate {
            input,
            tables,
            split,
            out,
        } => {
            let setup = Setup::resolve(&tables, None)?;
            let cfg = setup.config.norm;
            let records = load_annotated(&[input], &cfg)?;
            let golds = gold_map(&records, &cfg)?;
            let split = load_split(split.as_deref(), golds.keys())?;
            let raw = setup.raw_outputs()?;
            let mut reports = Vec::with_capacity(AblationVariant::ALL.len());
            for variant in AblationVariant::ALL {
                let (preds, counters) =
                    pipeline::run_pipeline(&records, &raw, &setup.resources, variant, &cfg)
                        .with_context(|| format!("variant {}", variant.label()))?;
                reports.push(eval::split_report(
                    &preds,
                    &golds,
                    &split,
                    Some(variant),
                    Some(counters),
                )?);
            }
            print!("{}", eval::render_table(&reports));
            if let Some(out) = out {
                write_json(&out, &reports)?;
            }
            Ok(())
        }
        Command::Simulate {
            input,
            out,
            seed,
            char_table,
            char_swap_rate,
            marker_drop_rate,
            truncate,
            word_swaps,
            config,
        } => {
            let records = load_annotated(&[input], &NormConfig::default())?;
            let cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<DegradeConfig>(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => DegradeConfig {
                    char_swap_rate,
                    word_swap_pairs: match word_swaps {
                        Some(path) => read_pairs(&path)?,
                        None => BTreeMap::new(),
                    },
                    truncate_at_tokens: (truncate > 0).then_some(truncate),
                    marker_drop_rate,
                    seed,
                },
            };
            cfg.validate()?;
            let table = match char_table {
                Some(path) => CharLookupTable::load(&path)?,
                None => CharLookupTable::builtin(),
            };
            let outputs = degrade_corpus(&records, &cfg, &table);
            pipeline::write_raw_outputs(&out, &outputs)?;
            eprintln!("{} raw outputs -> {}", outputs.len(), out.display());
            Ok(())
        }
    }
}

struct Setup {
    config: PipelineConfig,
    resources: Resources,
}

impl Setup {
    /// Flags first, then any `--config` values on top.
    fn resolve(tables: &TableArgs, variant: Option<AblationVariant>) -> Result<Setup> {
        let mut config = PipelineConfig {
            variant: variant.unwrap_or(AblationVariant::CcWcRLP2),
            norm: NormConfig::default(),
            char_table_path: tables.char_table.clone(),
            ruleset_path: tables.rules.clone(),
            lookup_path: tables.lookup.clone(),
            raw_outputs_path: tables.raw.clone(),
        };
        if let Some(path) = &tables.config {
            let file = load_config(path, config.variant)?;
            config = PipelineConfig {
                variant: file.variant,
                norm: file.norm,
                char_table_path: file.char_table_path.or(config.char_table_path),
                ruleset_path: file.ruleset_path.or(config.ruleset_path),
                lookup_path: file.lookup_path.or(config.lookup_path),
                raw_outputs_path: file.raw_outputs_path.or(config.raw_outputs_path),
            };
        }
        let resources = config.resources()?;
        Ok(Setup { config, resources })
    }

    fn raw_outputs(&self) -> Result<BTreeMap<String, String>> {
        match &self.config.raw_outputs_path {
            Some(path) => Ok(pipeline::read_raw_outputs(path)?),
            None if self.config.variant == AblationVariant::RegexOnly => Ok(BTreeMap::new()),
            None => bail!("--raw is required"),
        }
    }
}

fn norm_config(args: &NormArgs) -> Result<NormConfig> {
    match &args.config {
        Some(path) => Ok(load_config(path, AblationVariant::CcWcRLP2)?.norm),
        None => Ok(NormConfig::default()),
    }
}

/// Reads a pipeline config; a file without `variant` keeps `variant`.
fn load_config(path: &Path, variant: AblationVariant) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("variant")
            .or_insert_with(|| serde_json::Value::String(variant.to_string()));
    }
    serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))
}

fn validate(path: &Path, cfg: &NormConfig) -> Result<()> {
    let schema = Schema::detect(path)?;
    let records = corpus::load_corpus_with(path, schema, cfg)?;
    let mut seen = std::collections::BTreeSet::new();
    for rec in &records {
        if !seen.insert(rec.id.as_str()) {
            bail!("{}: duplicate record id {:?}", path.display(), rec.id);
        }
    }
    println!(
        "{}: ok, {} records ({:?} schema)",
        path.display(),
        records.len(),
        schema
    );
    Ok(())
}

fn stats(paths: &[PathBuf], cfg: &NormConfig) -> Result<()> {
    let mut rows = Vec::new();
    for path in paths {
        let records = corpus::load_corpus_with(path, Schema::Train, cfg)?;
        let stats = corpus_stats(&records)?;
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        rows.push([
            name,
            stats.total.to_string(),
            stats.with_error.to_string(),
            stats.num_errors.to_string(),
        ]);
    }
    let header = ["Split", "Total", "With Error", "Num. Errors"].map(String::from);
    let mut widths = header.clone().map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    for row in std::iter::once(&header).chain(&rows) {
        let mut line = format!("{:<w$}", row[0], w = widths[0]);
        for (cell, w) in row.iter().zip(widths).skip(1) {
            line.push_str(&format!("  {cell:>w$}"));
        }
        println!("{line}");
    }
    Ok(())
}

fn load_annotated(paths: &[PathBuf], cfg: &NormConfig) -> Result<Vec<CorpusRecord>> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(corpus::load_corpus_with(path, Schema::Train, cfg)?);
    }
    Ok(records)
}

fn gold_map(records: &[CorpusRecord], cfg: &NormConfig) -> Result<BTreeMap<String, String>> {
    let mut golds = BTreeMap::new();
    for rec in records {
        let gold = normalize(rec.gold()?.raw(), cfg);
        if golds.insert(rec.id.clone(), gold).is_some() {
            bail!("duplicate record id {:?}", rec.id);
        }
    }
    Ok(golds)
}

fn load_split<'a>(
    path: Option<&Path>,
    ids: impl Iterator<Item = &'a String>,
) -> Result<SplitAssignment> {
    Ok(match path {
        Some(path) => SplitAssignment::load(path)?,
        None => SplitAssignment::halves(ids.map(String::as_str)),
    })
}

fn read_pairs(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((from, to)) = line.split_once('\t') else {
            bail!(
                "{}:{}: expected `word<TAB>respelling`",
                path.display(),
                i + 1
            );
        };
        pairs.insert(from.to_owned(), to.to_owned());
    }
    Ok(pairs)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}
