//! The `umm` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use umm_core::covariance::{CovarianceConfig, CovarianceScope, EstimatorKind};
use umm_core::decoder::{extract_lda_weights, DecoderConfig, LdaModel, MeanStrategy};
use umm_core::synth::{generate_session, generate_toy_2d_with, SynthConfig, ToyConfig, TOY_LETTERS};
use umm_core::trial::{count_unconstrained_assignments, CodeBalance, SymbolSet};

use crate::error::{Error, Result};
use crate::log::{write_log_file, DecisionLog};
use crate::metrics::compute_metrics;
use crate::replay::replay_session;
use crate::session_io::{
    atomic_write, read_session, session_from_records, session_id, session_trials, write_session,
};

/// Magic bytes opening an exported LDA file.
pub const LDA_MAGIC: &[u8; 8] = b"UMMLDA01";

#[derive(Debug, Parser)]
#[command(name = "umm", version, about = "Unsupervised mean-difference maximization decoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode stored sessions trial by trial and write the decision log.
    Replay(ReplayArgs),
    /// Generate a synthetic session directory.
    Synth(SynthArgs),
    /// Write the four-letter two-dimensional toy example as CSV.
    Toy(ToyArgs),
    /// Replay a session and export the resulting LDA weights.
    LdaExport(LdaArgs),
    /// Print session statistics.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Shrinkage,
    Toeplitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Trial,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeanArg {
    Instant,
    Optimistic,
    Confidence,
}

#[derive(Debug, Clone, Args)]
pub struct DecoderArgs {
    #[arg(long, value_enum, default_value = "toeplitz")]
    pub cov: CovArg,
    #[arg(long = "cov-scope", value_enum, default_value = "all")]
    pub cov_scope: ScopeArg,
    #[arg(long, value_enum, default_value = "confidence")]
    pub mean: MeanArg,
    /// Linear taper bandwidth (in samples) for the block-Toeplitz estimator.
    #[arg(long = "taper-band", value_name = "N")]
    pub taper_band: Option<usize>,
    #[arg(long = "degeneracy-warmup", value_name = "N", default_value_t = 10)]
    pub degeneracy_warmup: usize,
    #[arg(long = "degeneracy-ratio", value_name = "X", default_value_t = 1.1, allow_negative_numbers = true)]
    pub degeneracy_ratio: f64,
    #[arg(long = "reset-on-degenerate")]
    pub reset_on_degenerate: bool,
}

impl DecoderArgs {
    pub fn config(&self) -> Result<DecoderConfig> {
        let config = DecoderConfig {
            mean_strategy: match self.mean {
                MeanArg::Instant => MeanStrategy::Instant,
                MeanArg::Optimistic => MeanStrategy::Optimistic,
                MeanArg::Confidence => MeanStrategy::ConfidenceWeighted,
            },
            covariance: CovarianceConfig {
                kind: match self.cov {
                    CovArg::Shrinkage => EstimatorKind::Shrinkage,
                    CovArg::Toeplitz => EstimatorKind::BlockToeplitz,
                },
                scope: match self.cov_scope {
                    ScopeArg::Trial => CovarianceScope::CurrentTrial,
                    ScopeArg::All => CovarianceScope::PooledAll,
                },
                taper_bandwidth: self.taper_band,
                ..CovarianceConfig::default()
            },
            degeneracy_warmup: self.degeneracy_warmup,
            degeneracy_ratio: self.degeneracy_ratio,
            reset_on_degenerate: self.reset_on_degenerate,
            ..DecoderConfig::default()
        };
        if self.taper_band.is_some() && self.cov != CovArg::Toeplitz {
            return Err(Error::Usage("--taper-band requires --cov toeplitz".into()));
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Session directory; repeat for several sessions.
    #[arg(long, required = true, value_name = "DIR")]
    pub data: Vec<PathBuf>,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    /// Decision log CSV; metrics go to `<PATH>.metrics.json`.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    VisualRandom,
    RowColumn,
    Sequential,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "visual-random")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// AR(1) coefficient of the temporal noise.
    #[arg(long)]
    pub ar: Option<f64>,
    /// Latency jitter standard deviation in samples.
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long = "noise-amplitude")]
    pub noise_amplitude: Option<f64>,
    /// Output session directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub draws: usize,
    /// Scale of the shared Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LdaArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InfoArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
}

/// Parses `args` (including the program name) and runs the command, writing
/// human-readable output to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            return write!(stdout, "{}", e.render()).map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            });
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.trim_end();
            return Err(Error::Usage(text.strip_prefix("error: ").unwrap_or(text).to_string()));
        }
    };
    execute(&cli.command, stdout)
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Replay(a) => cmd_replay(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Toy(a) => cmd_toy(a, out),
        Command::LdaExport(a) => cmd_lda_export(a, out),
        Command::Info(a) => cmd_info(a, out),
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{line}").map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn ensure_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        return Err(Error::Usage(format!(
            "session directory {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn cmd_replay(args: &ReplayArgs, out: &mut dyn Write) -> Result<()> {
    let config = args.decoder.config()?;
    for dir in &args.data {
        ensure_dir(dir)?;
    }
    let mut logs: Vec<DecisionLog> = Vec::new();
    for dir in &args.data {
        let (manifest, data) = read_session(dir)?;
        let records = session_trials(&manifest, &data)?;
        let symbols = SymbolSet::new(manifest.symbols.clone())?;
        let id = session_id(dir);
        match replay_session(&id, &records, &symbols, &config) {
            Ok(outcome) => logs.push(outcome.log),
            Err(failure) => {
                logs.push(failure.log);
                let partial = sibling(&args.out, ".partial");
                write_log_file(&partial, &logs)?;
                return Err(Error::Usage(format!(
                    "session {} failed at trial {}: {}; decisions so far written to {}",
                    dir.display(),
                    failure.trial_index,
                    failure.error,
                    partial.display()
                )));
            }
        }
    }
    write_log_file(&args.out, &logs)?;
    let total: usize = logs.iter().map(|l| l.rows.len()).sum();
    say(out, format_args!("decoded {total} trials from {} session(s)", logs.len()))?;
    match compute_metrics(&logs) {
        Ok(report) => {
            for s in &report.sessions {
                say(
                    out,
                    format_args!("{}: accuracy {:.4} ({}/{})", s.session_id, s.accuracy, s.correct, s.trials),
                )?;
            }
            say(out, format_args!("pooled accuracy {:.4}", report.pooled_accuracy))?;
            let path = sibling(&args.out, ".metrics.json");
            let mut json = serde_json::to_vec_pretty(&report).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })?;
            json.push(b'\n');
            atomic_write(&path, &json)?;
        }
        Err(Error::MissingLabels { .. }) => {
            say(out, format_args!("no true symbols in the data; metrics skipped"))?;
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

pub fn synth_config(args: &SynthArgs) -> SynthConfig {
    let mut cfg = match args.preset {
        Preset::VisualRandom => SynthConfig::visual_random(args.seed),
        Preset::RowColumn => SynthConfig::row_column(args.seed),
        Preset::Sequential => SynthConfig::sequential(args.seed),
    };
    if let Some(v) = args.snr {
        cfg.snr = v;
    }
    if let Some(v) = args.trials {
        cfg.n_trials = v;
    }
    if let Some(v) = args.channels {
        cfg.channels = v;
    }
    if let Some(v) = args.samples {
        cfg.samples = v;
    }
    if let Some(v) = args.ar {
        cfg.ar_coefficient = v;
    }
    if let Some(v) = args.jitter {
        cfg.latency_jitter_std = v;
    }
    if let Some(v) = args.noise_amplitude {
        cfg.noise_amplitude = v;
    }
    cfg
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = synth_config(args);
    cfg.validate()?;
    let records = generate_session(&cfg)?;
    let symbols = SymbolSet::alphabetic(cfg.n_symbols)?;
    let provenance = format!(
        "synthetic {:?} seed={} snr={} ar={} jitter={} noise_amplitude={}",
        args.preset, cfg.seed, cfg.snr, cfg.ar_coefficient, cfg.latency_jitter_std, cfg.noise_amplitude
    );
    let (manifest, data) = session_from_records(&records, &symbols, None, 100.0, &provenance)?;
    write_session(&args.out, &manifest, &data)?;
    say(
        out,
        format_args!(
            "wrote {} trials ({} epochs of {}x{}) to {}",
            manifest.trials.len(),
            manifest.epoch_count,
            manifest.channels(),
            manifest.samples_per_epoch,
            args.out.display()
        ),
    )
}

pub fn cmd_toy(args: &ToyArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = ToyConfig {
        draws_per_letter: args.draws,
        noise_scale: args.noise,
        ..ToyConfig::new(args.seed)
    };
    let toy = generate_toy_2d_with(&cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["panel", "letter", "x", "y", "kind"])?;
    let mut panels = vec!["input".to_string()];
    panels.extend(TOY_LETTERS.iter().map(|l| format!("hypothesis_{l}")));
    for panel in &panels {
        for p in &toy.points {
            w.write_record([
                panel.as_str(),
                TOY_LETTERS[p.letter],
                &p.x.to_string(),
                &p.y.to_string(),
                "point",
            ])?;
        }
    }
    for (h, panel) in toy.hypotheses.iter().zip(&panels[1..]) {
        let letter = TOY_LETTERS[h.letter];
        for (mean, kind) in [(h.target_mean, "hyp_target_mean"), (h.non_target_mean, "hyp_nontarget_mean")] {
            w.write_record([panel.as_str(), letter, &mean[0].to_string(), &mean[1].to_string(), kind])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    atomic_write(&args.out, &bytes)?;
    for h in &toy.hypotheses {
        say(
            out,
            format_args!(
                "hypothesis {}: |delta mu| = {:.4}",
                TOY_LETTERS[h.letter],
                h.delta[0].hypot(h.delta[1])
            ),
        )?;
    }
    Ok(())
}

/// Binary LDA file: magic, `u32` channels, `u32` samples, `f64` bias, then
/// `C*T` `f64` weights in time-major order; all little-endian.
pub fn encode_lda(model: &LdaModel, channels: usize, samples: usize) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(24 + 8 * model.weights.len());
    bytes.extend_from_slice(LDA_MAGIC);
    bytes.extend_from_slice(&(channels as u32).to_le_bytes());
    bytes.extend_from_slice(&(samples as u32).to_le_bytes());
    bytes.extend_from_slice(&model.bias.to_le_bytes());
    for w in &model.weights {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    bytes
}

pub fn decode_lda(bytes: &[u8]) -> Result<(LdaModel, usize, usize)> {
    let corrupt = |expected: u64| Error::CorruptPayload {
        expected,
        found: bytes.len() as u64,
    };
    if bytes.len() < 24 || &bytes[..8] != LDA_MAGIC {
        return Err(corrupt(24));
    }
    let channels = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let samples = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let bias = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = 24 + 8 * (channels * samples) as u64;
    if bytes.len() as u64 != expected {
        return Err(corrupt(expected));
    }
    let weights = bytes[24..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((LdaModel { weights, bias }, channels, samples))
}

pub fn cmd_lda_export(args: &LdaArgs, out: &mut dyn Write) -> Result<()> {
    let config = args.decoder.config()?;
    ensure_dir(&args.data)?;
    let (manifest, data) = read_session(&args.data)?;
    let records = session_trials(&manifest, &data)?;
    let symbols = SymbolSet::new(manifest.symbols.clone())?;
    let outcome = replay_session(&session_id(&args.data), &records, &symbols, &config)
        .map_err(|f| f.error)?;
    let cov = outcome
        .covariance
        .ok_or_else(|| Error::Usage("session has no trials".into()))?;
    let lda = extract_lda_weights(&outcome.state, &cov)?;
    atomic_write(&args.out, &encode_lda(&lda, manifest.channels(), manifest.samples_per_epoch))?;
    say(
        out,
        format_args!(
            "wrote {} weights (C={}, T={}) after {} trials to {}",
            lda.weights.len(),
            manifest.channels(),
            manifest.samples_per_epoch,
            outcome.log.rows.len(),
            args.out.display()
        ),
    )
}

pub fn cmd_info(args: &InfoArgs, out: &mut dyn Write) -> Result<()> {
    ensure_dir(&args.data)?;
    let (manifest, data) = read_session(&args.data)?;
    let records = session_trials(&manifest, &data)?;
    let n_symbols = manifest.symbols.len();
    say(out, format_args!("session      {}", session_id(&args.data)))?;
    say(out, format_args!("provenance   {}", manifest.provenance))?;
    say(
        out,
        format_args!(
            "epochs       {} ({} channels x {} samples, D = {})",
            manifest.epoch_count,
            manifest.channels(),
            manifest.samples_per_epoch,
            manifest.epoch_len()
        ),
    )?;
    say(out, format_args!("symbols      {n_symbols}"))?;
    say(out, format_args!("trials       {}", records.len()))?;
    let labeled = records.iter().filter(|r| r.true_symbol.is_some()).count();
    say(out, format_args!("labeled      {labeled}"))?;
    say(out, format_args!("trial  epochs  targets  assignments  hypotheses"))?;
    for (i, r) in records.iter().enumerate() {
        let n_e = r.trial.n_epochs() as u64;
        let (targets, assignments) = match r.trial.balance() {
            CodeBalance::Balanced { targets_per_symbol } => {
                let count = count_unconstrained_assignments(n_e, targets_per_symbol as u64)
                    .map(|c| c.to_string())
                    .unwrap_or_else(|e| format!("({e})"));
                (targets_per_symbol.to_string(), count)
            }
            CodeBalance::Unbalanced => ("unbalanced".to_string(), "-".to_string()),
        };
        say(out, format_args!("{i:>5}  {n_e:>6}  {targets:>7}  {assignments:>11}  {n_symbols:>10}"))?;
    }
    Ok(())
}
