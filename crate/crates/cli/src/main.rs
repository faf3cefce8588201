//! `gedpost`: batch front end for marked-sentence post-processing.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gedpost::AblationVariant;

#[derive(Debug, Parser)]
#[command(
    name = "gedpost",
    version,
    about = "Reconcile, score and ablate $-marked error detection output"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a corpus file for well-formedness.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Print total / with-error / error-count statistics of annotated corpora.
    Stats {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Mine always-marked words from annotated corpora and write a rule set.
    MineRules {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Extra always-marked words, one per line.
        #[arg(long)]
        wordlist: Option<PathBuf>,
        /// Literal substring rules, one per line.
        #[arg(long)]
        literal_rules: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        min_support: usize,
        #[arg(long, default_value_t = 0.95)]
        min_precision: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Build the exact-match sentence table from annotated corpora.
    BuildLookup {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Run one pipeline variant and write predictions.
    Reconcile {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        tables: TableArgs,
        #[arg(long, default_value = "cc_wc_r_l_p2")]
        variant: AblationVariant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictions file against gold.
    Evaluate {
        /// Predictions file (`id<TAB>predicted`).
        #[arg(long = "in")]
        input: PathBuf,
        /// Annotated corpus with the gold markings.
        #[arg(long)]
        gold: PathBuf,
        /// Split assignment; defaults to an alternating 50-50 split.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Variant label for the report.
        #[arg(long)]
        variant: Option<AblationVariant>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Run all eight variants on an annotated corpus and print the grid.
    Ablate {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        tables: TableArgs,
        #[arg(long)]
        split: Option<PathBuf>,
        /// JSON report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce synthetic raw model output from an annotated corpus.
    Simulate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        char_table: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        char_swap_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        marker_drop_rate: f64,
        /// Token budget; 0 disables truncation.
        #[arg(long, default_value_t = gedpost::simgen::DEFAULT_TOKEN_LIMIT)]
        truncate: usize,
        /// `word<TAB>respelling` pairs.
        #[arg(long)]
        word_swaps: Option<PathBuf>,
        /// Degrader settings as JSON; overrides the flags above.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct NormArgs {
    /// Pipeline JSON config; only its `norm` section is used here.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TableArgs {
    /// Raw model outputs (`id<TAB>raw_output`).
    #[arg(long)]
    raw: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    char_table: Option<PathBuf>,
    #[arg(long)]
    lookup: Option<PathBuf>,
    /// Pipeline JSON config; its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
