//! Command-line front end. Every subcommand reads files, writes files and a
//! manifest, and nothing else; stages talk to each other only through the output
//! directory.
//!
//! Exit codes: 0 success, 1 I/O, 2 usage or configuration, 3 schema, 4 numerical.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::model::{AblationMode, TextInput};
use crate::scoring::GoldMatch;
use commands::FileKind;
use config::*;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "FACTCHECK_OUT";

#[derive(Debug, Parser)]
#[command(name = "factcheck", version, about = "Phrase-grounded fact-checking of toy radiology reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config, or a manifest from an earlier run of the same command.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $FACTCHECK_OUT, else ./runs].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

impl DataArgs {
    fn apply(&self, d: &mut DataConfig) {
        if let Some(c) = &self.corpus {
            d.corpus = c.clone();
        }
        if let Some(i) = &self.images {
            d.images = Some(i.clone());
        }
        if let Some(l) = &self.lexicon {
            d.lexicon = Some(l.clone());
        }
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

impl SplitArgs {
    fn apply(&self, s: &mut SplitConfig) {
        set(&mut s.fold, self.fold);
        set(&mut s.folds, self.folds);
        set(&mut s.seed, self.split_seed);
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render toy images with their gold findings.
    GenGold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Add reversal, relocation and substitution fakes to a gold corpus.
    GenSynth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// One reversal, two relocations and one substitution per finding.
        #[arg(long)]
        table2: bool,
        #[arg(long)]
        reverse_negatives: bool,
    },
    /// Train a fact-checking model on the train part of a split.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<AblationMode>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        text_input: Option<TextInput>,
        #[arg(long)]
        incl_positive_denominator: bool,
        #[arg(long)]
        cross_sample_negatives: bool,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Predict box and veracity for every finding of a corpus.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score automated reports against model predictions.
    Assess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        paper_literal_rq: bool,
        /// How indicated claims are matched against gold findings.
        #[arg(long)]
        matching: Option<GoldMatch>,
        #[arg(long)]
        no_overlays: bool,
    },
    /// Held-out accuracy and mean IoU.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// split.json written by `train`.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Compare model-based and gold-based report errors over simulated generators.
    Concordance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paper_literal_rq: bool,
        #[arg(long)]
        matching: Option<GoldMatch>,
    },
    /// Train and evaluate each model variant on one split.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<AblationMode>>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Check a data file; exits 3 when it is invalid.
    ValidateSchema {
        #[arg(long, value_enum)]
        kind: FileKind,
        path: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, value: &Option<T>)
where
    T: Clone,
{
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn base<T: DeserializeOwned + Default>(common: &Common, command: &str) -> Result<T> {
    match &common.config {
        Some(p) => read_config(p, command),
        None => Ok(T::default()),
    }
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| Path::new("runs").to_path_buf())
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Png(_) => 1,
        Error::Config(_) => 2,
        Error::Parse { .. }
        | Error::UnknownTerm(_)
        | Error::Lexicon(_)
        | Error::InvalidBox { .. }
        | Error::Schema { .. }
        | Error::ShapeMismatch { .. }
        | Error::LengthMismatch { .. }
        | Error::Json(_) => 3,
        Error::Divergence { .. } | Error::Undefined(_) => 4,
    }
}

/// Execute a parsed command; returns the summary line.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::GenGold { common, n, seed, lexicon } => {
            let mut c: GenGoldConfig = base(&common, "gen-gold")?;
            set(&mut c.n, n);
            set(&mut c.seed, seed);
            set_some(&mut c.lexicon, &lexicon);
            commands::gen_gold(&c, &out_dir(&common))
        }
        Command::GenSynth { common, gold, seed, lexicon, table2, reverse_negatives } => {
            let mut c: GenSynthConfig = base(&common, "gen-synth")?;
            set(&mut c.gold, gold);
            set(&mut c.seed, seed);
            set_some(&mut c.lexicon, &lexicon);
            if table2 {
                c.perturb.relocate = 2;
            }
            c.perturb.reverse_negatives |= reverse_negatives;
            commands::gen_synth(&c, &out_dir(&common))
        }
        Command::Train {
            common,
            data,
            split,
            seed,
            mode,
            epochs,
            lr,
            batch_size,
            temperature,
            text_input,
            incl_positive_denominator,
            cross_sample_negatives,
            quiet,
        } => {
            let mut c: TrainConfig = base(&common, "train")?;
            data.apply(&mut c.data);
            split.apply(&mut c.split);
            set(&mut c.seed, seed);
            let m = &mut c.model;
            set(&mut m.mode, mode);
            set(&mut m.epochs, epochs);
            set(&mut m.lr_max, lr);
            set(&mut m.batch_size, batch_size);
            set(&mut m.temperature, temperature);
            set(&mut m.text_input, text_input);
            m.incl_positive_denominator |= incl_positive_denominator;
            m.cross_sample_negatives |= cross_sample_negatives;
            commands::train_cmd(&c, &out_dir(&common), !quiet)
        }
        Command::Predict { common, checkpoint, data } => {
            let mut c: PredictConfig = base(&common, "predict")?;
            set(&mut c.checkpoint, checkpoint);
            data.apply(&mut c.data);
            commands::predict_cmd(&c, &out_dir(&common))
        }
        Command::Assess { common, checkpoint, reports, images, lexicon, gold, paper_literal_rq, matching, no_overlays } => {
            let mut c: AssessConfig = base(&common, "assess")?;
            set(&mut c.checkpoint, checkpoint);
            set(&mut c.reports, reports);
            set_some(&mut c.images, &images);
            set_some(&mut c.lexicon, &lexicon);
            set_some(&mut c.gold, &gold);
            c.convention = commands::convention(paper_literal_rq, c.convention);
            set(&mut c.matching, matching);
            c.overlays &= !no_overlays;
            commands::assess_cmd(&c, &out_dir(&common))
        }
        Command::Evaluate { common, checkpoint, data, split } => {
            let mut c: EvaluateConfig = base(&common, "evaluate")?;
            set(&mut c.checkpoint, checkpoint);
            data.apply(&mut c.data);
            set_some(&mut c.split, &split);
            commands::evaluate_cmd(&c, &out_dir(&common))
        }
        Command::Concordance { common, checkpoint, data, split, seed, paper_literal_rq, matching } => {
            let mut c: ConcordanceConfig = base(&common, "concordance")?;
            set(&mut c.checkpoint, checkpoint);
            data.apply(&mut c.data);
            set_some(&mut c.split, &split);
            set(&mut c.seed, seed);
            set(&mut c.matching, matching);
            c.convention = commands::convention(paper_literal_rq, c.convention);
            commands::concordance_cmd(&c, &out_dir(&common))
        }
        Command::Ablate { common, data, split, seed, epochs, lr, modes, quiet } => {
            let mut c: AblateConfig = base(&common, "ablate")?;
            data.apply(&mut c.data);
            split.apply(&mut c.split);
            set(&mut c.seed, seed);
            set(&mut c.model.epochs, epochs);
            set(&mut c.model.lr_max, lr);
            set(&mut c.modes, modes);
            commands::ablate_cmd(&c, &out_dir(&common), !quiet)
        }
        Command::ValidateSchema { kind, path, lexicon } => {
            let problems = commands::validate_file(kind, &path, lexicon.as_deref())?;
            if problems.is_empty() {
                Ok(format!("{}: ok", path.display()))
            } else {
                Err(Error::schema(path.display().to_string(), problems.join("; ")))
            }
        }
    }
}

/// Parse `args` (program name first), run, report on stderr and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            eprintln!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
