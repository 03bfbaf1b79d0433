//! `seqdec` command-line front end.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use seqdec_core::fixtures::{overconfident_config, truncation_trap_config};
use seqdec_core::{LmSmoothing, SyntheticConfig, Vocabulary};

use commands::GenRequest;
use config::{ExperimentConfig, Strategy, SyntheticBlock};

#[derive(Debug, Parser)]
#[command(name = "seqdec", version, about = "Decoding experiments on replayed seq2seq models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic replay models and a manifest.
    Gen(GenArgs),
    /// Train or evaluate a character n-gram LM.
    #[command(subcommand)]
    Lm(LmCommand),
    /// Beam-decode every model and report per-utterance metrics.
    Decode(DecodeArgs),
    /// Decode over a grid of temperatures or strategies and beam widths.
    Sweep(SweepArgs),
    /// WER/CER of a hypothesis file against a reference file.
    Score(ScoreArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Generator defaults.
    Plain,
    /// Sharp models with one planted confident substitution.
    Overconfident,
    /// Softer models with early-EOS and repeated-word runner-ups.
    TruncationTrap,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Experiment config; its `synthetic` block and `seed` seed the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub frame_count: Option<usize>,
    #[arg(long)]
    pub transcript_length: Option<usize>,
    #[arg(long)]
    pub sharpness: Option<f64>,
    #[arg(long)]
    pub distractors: Option<usize>,
    #[arg(long)]
    pub truncation_trap: bool,
    #[arg(long)]
    pub loop_trap: bool,
    #[arg(long)]
    pub confusions: Option<usize>,
    /// Also write this many lexicon sentences to `corpus.txt`.
    #[arg(long, default_value_t = 0)]
    pub corpus_lines: usize,
    #[arg(long, default_value_t = 99)]
    pub corpus_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SmoothingKind {
    AddK,
    StupidBackoff,
}

#[derive(Debug, Subcommand)]
pub enum LmCommand {
    /// Train on a text file with one sentence per line.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, value_enum, default_value_t = SmoothingKind::StupidBackoff)]
        smoothing: SmoothingKind,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 0.4)]
        alpha: f64,
        /// Size of the character vocabulary; must match the models'.
        #[arg(long, default_value_t = 28)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perplexity of a trained LM on a text file.
    Ppl {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
}

/// Flags shared by `decode` and `sweep`. Flags override the config file.
#[derive(Debug, Default, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub lm_weight: Option<f64>,
    #[arg(long)]
    pub coverage_weight: Option<f64>,
    #[arg(long)]
    pub coverage_threshold: Option<f64>,
    #[arg(long)]
    pub length_bonus: Option<f64>,
    /// EOS gate width in nats; `inf` admits EOS everywhere.
    #[arg(long)]
    pub eos_margin: Option<f64>,
    #[arg(long)]
    pub eos_gate: Option<bool>,
    #[arg(long)]
    pub max_length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Answer unlisted prefixes with a uniform step instead of failing.
    #[arg(long)]
    pub fallback: Option<bool>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub beam_widths: Option<Vec<usize>>,
    /// eos-gate, length-bonus, coverage; replaces the temperature axis.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<Strategy>>,
    /// Bonus used by the length-bonus strategy.
    #[arg(long)]
    pub strategy_length_bonus: Option<f64>,
    /// Weight used by the coverage strategy.
    #[arg(long)]
    pub strategy_coverage_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long = "hyp")]
    pub hypothesis: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl DecodeArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.manifest.is_some() {
            cfg.manifest = self.manifest.clone();
            cfg.synthetic = None;
        }
        if self.lm.is_some() {
            cfg.lm = self.lm.clone();
        }
        if self.fallback.is_some() {
            cfg.fallback = self.fallback;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        set(&mut cfg.beam_width, self.beam_width);
        set(&mut cfg.max_length, self.max_length);
        set(&mut cfg.seed, self.seed);
        let s = &mut cfg.score;
        set(&mut s.temperature, self.temperature);
        set(&mut s.lm_weight, self.lm_weight);
        set(&mut s.coverage_weight, self.coverage_weight);
        set(&mut s.coverage_threshold, self.coverage_threshold);
        set(&mut s.length_bonus, self.length_bonus);
        set(&mut s.eos_margin, self.eos_margin);
        set(&mut s.eos_gate, self.eos_gate);
        Ok(cfg)
    }
}

impl SweepArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = self.decode.resolve()?;
        let axes = &mut cfg.sweep;
        set(&mut axes.temperatures, self.temperatures.clone());
        set(&mut axes.beam_widths, self.beam_widths.clone());
        set(&mut axes.strategies, self.strategies.clone());
        set(&mut axes.length_bonus, self.strategy_length_bonus);
        set(&mut axes.coverage_weight, self.strategy_coverage_weight);
        Ok(cfg)
    }
}

impl GenArgs {
    pub fn request(&self) -> Result<GenRequest> {
        let file = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let block = file.synthetic.clone().unwrap_or(SyntheticBlock {
            count: 20,
            model: SyntheticConfig::default(),
        });
        let mut base = match self.preset {
            Some(Preset::Plain) => SyntheticConfig::default(),
            Some(Preset::Overconfident) => overconfident_config(0),
            Some(Preset::TruncationTrap) => truncation_trap_config(0),
            None => block.model,
        };
        set(&mut base.vocab_size, self.vocab_size);
        set(&mut base.frame_count, self.frame_count);
        set(&mut base.transcript_length, self.transcript_length);
        set(&mut base.sharpness, self.sharpness);
        set(&mut base.distractor_count, self.distractors);
        set(&mut base.confusions, self.confusions);
        base.truncation_trap |= self.truncation_trap;
        base.loop_trap |= self.loop_trap;
        Ok(GenRequest {
            base,
            count: self.count.unwrap_or(block.count),
            seed: self.seed.unwrap_or(file.seed),
            out: self.out.clone(),
            corpus_lines: self.corpus_lines,
            corpus_seed: self.corpus_seed,
        })
    }
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().lock().write_all(bytes)?),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => {
            let req = args.request()?;
            let manifest = commands::gen(&req)?;
            let trapped = manifest.models.iter().filter(|m| m.trapped).count();
            eprintln!(
                "wrote {} models ({trapped} trapped) to {}",
                manifest.models.len(),
                req.out.display()
            );
        }
        Command::Lm(LmCommand::Train { corpus, order, smoothing, k, alpha, vocab_size, out }) => {
            let smoothing = match smoothing {
                SmoothingKind::AddK => LmSmoothing::AddK { k },
                SmoothingKind::StupidBackoff => LmSmoothing::StupidBackoff { alpha },
            };
            let vocab = Vocabulary::wsj_prefix(vocab_size)?;
            commands::lm_train(&corpus, &vocab, order, smoothing, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Lm(LmCommand::Ppl { lm, corpus }) => {
            println!("{}", commands::lm_ppl(&lm, &corpus)?);
        }
        Command::Decode(args) => {
            let cfg = args.resolve()?;
            emit(&commands::decode(&cfg)?, cfg.out.as_deref())?;
        }
        Command::Sweep(args) => {
            let cfg = args.resolve()?;
            emit(&commands::sweep(&cfg)?, cfg.out.as_deref())?;
        }
        Command::Score(args) => {
            emit(&commands::score(&args.reference, &args.hypothesis)?, args.out.as_deref())?;
        }
    }
    Ok(())
}
