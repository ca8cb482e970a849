//! Command-line front end: `theory`, `profile`, `simulate` and `ingest`.
//!
//! Every subcommand starts from a [`RunConfig`] (the built-in reference setup,
//! or a TOML file given with `--config`) and applies flag overrides on top.
//! Output goes to `--out` or stdout and is assembled in memory first, so a
//! failing run never leaves a partial file behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use isac_core::config::{RunConfig, ScattererConfig, DEFAULT_SEED};
use isac_core::constellation::{make_constellation, ConstellationKind};
use isac_core::filterbank::{FilterDesign, ShiftSet};
use isac_core::framefile::FrameFile;
use isac_core::harness::{emit_results, run_sweep, ResultFormat};
use isac_core::pipeline::{coherent_profiles, noncoherent_profiles, ProfileSet};
use isac_core::signal::{make_frame_sequence, OfdmNumerology, SymbolFrame};
use isac_core::theory::{theory_table, TheoryRow};
use isac_core::{Error, ErrorClass, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Parser)]
#[command(name = "isac", version, about = "OFDM sensing range estimation with MF, RF and ROI-MMF receive filters")]
pub struct Cli {
    /// RNG seed for stochastic subcommands [default: 5548, or the config file's seed]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path; stdout when omitted
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form efficiency table
    Theory(TheoryArgs),
    /// Range profiles of one simulated scene
    Profile(ProfileArgs),
    /// Monte Carlo RMSE sweep
    Simulate(SimulateArgs),
    /// Range profiles from a recorded frame file
    Ingest(IngestArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct DesignArgs {
    /// Half-width M of the shift set S = {-M..-1, 1..M}
    #[arg(long)]
    pub roi_bins: Option<usize>,
    /// Region of interest as `min,max` in metres
    #[arg(long, value_parser = parse_pair)]
    pub roi_meters: Option<(f64, f64)>,
    /// ROI-MMF regularisation
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Profile zero-padding factor
    #[arg(long)]
    pub zero_pad: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Comma-separated constellations [default: all built-ins]
    #[arg(long, value_delimiter = ',')]
    pub constellation: Vec<String>,
    /// Total interference-to-noise ratio, linear
    #[arg(long, default_value_t = 10.0)]
    pub rho_tot: f64,
    /// Subcarriers
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub design: DesignArgs,
    /// table | csv | json
    #[arg(long, default_value = "table")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long, default_value = "16qam")]
    pub constellation: String,
    /// Reference target SNR in dB
    #[arg(long, default_value_t = 10.0)]
    pub snr_db: f64,
    /// Comma-separated target ranges in metres [default: from config]
    #[arg(long, value_delimiter = ',')]
    pub target_m: Vec<f64>,
    /// Independent frames of L symbols each
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    /// `coherent` averages complex outputs within one frame; `magnitude`
    /// averages linear magnitudes over every symbol of every frame
    #[arg(long, default_value = "coherent")]
    pub average: String,
    /// Also write the simulated symbol pairs as a frame file
    #[arg(long)]
    pub frames_out: Option<PathBuf>,
    #[command(flatten)]
    pub design: DesignArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_delimiter = ',')]
    pub constellation: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub filter: Vec<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Vec<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// `known` or `threshold:<db>`
    #[arg(long)]
    pub order: Option<String>,
    #[arg(long)]
    pub pencil_l: Option<usize>,
    #[command(flatten)]
    pub design: DesignArgs,
    /// csv | json | table
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub path: PathBuf,
    /// Expected subcarrier count; checked against the file header
    #[arg(long)]
    pub n: Option<usize>,
    /// Expected bandwidth in Hz; checked against the file header
    #[arg(long)]
    pub bandwidth_hz: Option<f64>,
    #[command(flatten)]
    pub design: DesignArgs,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `min,max`")?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Config => 2,
        ErrorClass::DataFormat => 3,
        ErrorClass::Numerical => 4,
    }
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?;
            RunConfig::from_toml(&text)
        }
        None => Ok(RunConfig::default()),
    }
}

impl DesignArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some((lo, hi)) = self.roi_meters {
            cfg.roi.min_m = lo;
            cfg.roi.max_m = hi;
            cfg.filter.roi_bins = None;
        }
        if let Some(m) = self.roi_bins {
            cfg.filter.roi_bins = Some(m);
        }
        if let Some(l) = self.lambda {
            cfg.filter.lambda = l;
        }
        if let Some(z) = self.zero_pad {
            cfg.estimator.zero_pad = z;
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let bytes = match &cli.command {
        Command::Theory(a) => cmd_theory(&mut cfg, a)?,
        Command::Profile(a) => cmd_profile(&mut cfg, a)?,
        Command::Simulate(a) => cmd_simulate(&mut cfg, a)?,
        Command::Ingest(a) => cmd_ingest(&mut cfg, a)?,
    };
    match &cli.out {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn parse_kinds(list: &[String]) -> Result<Vec<ConstellationKind>> {
    list.iter().map(|s| s.parse()).collect()
}

/// Rows of the efficiency table for the given flags.
pub fn theory_rows(cfg: &mut RunConfig, args: &TheoryArgs) -> Result<Vec<TheoryRow>> {
    args.design.apply(cfg);
    if let Some(n) = args.n {
        cfg.numerology.n_subcarriers = n;
    }
    let numerology = cfg.numerology.build()?;
    let shift_count = cfg.filter_design(&numerology)?.shift_set.len();
    let kinds =
        if args.constellation.is_empty() { ConstellationKind::builtin() } else { parse_kinds(&args.constellation)? };
    theory_table(&kinds, args.rho_tot, numerology.n_subcarriers, shift_count, cfg.filter.lambda)
}

pub fn cmd_theory(cfg: &mut RunConfig, args: &TheoryArgs) -> Result<Vec<u8>> {
    let rows = theory_rows(cfg, args)?;
    let mut out = Vec::new();
    match args.format.as_str() {
        "table" => {
            writeln!(out, "{:<16} {:>7} {:>7} {:>7}", "constellation", "mf", "rf", "roi")?;
            for r in &rows {
                writeln!(out, "{:<16} {:>7.3} {:>7.3} {:>7.3}", r.constellation, r.mf, r.rf, r.roi)?;
            }
        }
        "csv" => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in &rows {
                w.serialize(r).map_err(|e| Error::Serialization(e.to_string()))?;
            }
            w.flush()?;
        }
        "json" => {
            serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| Error::Serialization(e.to_string()))?;
            out.push(b'\n');
        }
        other => return Err(Error::InvalidConfig(format!("unknown format `{other}` (table | csv | json)"))),
    }
    Ok(out)
}

/// Simulated frames for `profile`; `frames` independent CPIs of L symbols.
pub fn profile_frames(
    cfg: &mut RunConfig,
    args: &ProfileArgs,
) -> Result<(OfdmNumerology, FilterDesign, Vec<Vec<SymbolFrame>>)> {
    args.design.apply(cfg);
    if !args.target_m.is_empty() {
        cfg.scatterers = args
            .target_m
            .iter()
            .map(|&range_m| ScattererConfig { range_m, amplitude_db: 0.0, phase_deg: None })
            .collect();
    }
    cfg.snr_db = vec![args.snr_db];
    let kind: ConstellationKind = args.constellation.parse()?;
    cfg.simulation.constellations = vec![kind.to_string()];
    if args.frames == 0 {
        return Err(Error::InvalidConfig("--frames must be >= 1".into()));
    }
    let mc = cfg.mc_config()?;
    let constellation = make_constellation(&kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let frames = (0..args.frames)
        .map(|_| {
            let scene = mc.scene(args.snr_db, &mut rng);
            make_frame_sequence(&scene, &constellation, mc.numerology.n_symbols, mc.block_normalize, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((mc.numerology, mc.design, frames))
}

pub fn profile_set(cfg: &mut RunConfig, args: &ProfileArgs) -> Result<(ProfileSet, Option<FrameFile>)> {
    let (numerology, design, frames) = profile_frames(cfg, args)?;
    let pad = cfg.estimator.zero_pad;
    let set = match args.average.as_str() {
        "coherent" if frames.len() == 1 => coherent_profiles(&frames[0], &design, &numerology, pad)?,
        "coherent" => return Err(Error::InvalidConfig("coherent averaging needs --frames 1".into())),
        "magnitude" => noncoherent_profiles(&frames, &design, &numerology, pad)?,
        other => return Err(Error::InvalidConfig(format!("unknown averaging `{other}` (coherent | magnitude)"))),
    };
    let file = match args.frames_out {
        Some(_) => Some(FrameFile::new(
            numerology.subcarrier_spacing,
            numerology.carrier_freq,
            frames.into_iter().flatten().collect(),
        )?),
        None => None,
    };
    Ok((set, file))
}

pub fn cmd_profile(cfg: &mut RunConfig, args: &ProfileArgs) -> Result<Vec<u8>> {
    let (set, file) = profile_set(cfg, args)?;
    let mut out = Vec::new();
    set.write_csv(&mut out)?;
    if let (Some(path), Some(file)) = (&args.frames_out, file) {
        file.write_to(path)?;
    }
    Ok(out)
}

pub fn cmd_simulate(cfg: &mut RunConfig, args: &SimulateArgs) -> Result<Vec<u8>> {
    args.design.apply(cfg);
    if !args.constellation.is_empty() {
        cfg.simulation.constellations = args.constellation.clone();
    }
    if !args.filter.is_empty() {
        cfg.simulation.filters = args.filter.clone();
    }
    if !args.snr_db.is_empty() {
        cfg.snr_db = args.snr_db.clone();
    }
    if let Some(t) = args.trials {
        cfg.simulation.n_trials = t;
    }
    if let Some(o) = &args.order {
        cfg.estimator.order = o.clone();
    }
    if args.pencil_l.is_some() {
        cfg.estimator.pencil_l = args.pencil_l;
    }
    let format: ResultFormat = args.format.parse()?;
    let summary = run_sweep(&cfg.mc_config()?)?;
    let mut out = Vec::new();
    emit_results(&summary, format, &mut out)?;
    Ok(out)
}

/// Numerology and filter design for a recorded file, checked against flags.
pub fn ingest_design(
    cfg: &mut RunConfig,
    args: &IngestArgs,
    file: &FrameFile,
) -> Result<(OfdmNumerology, FilterDesign)> {
    let h = &file.header;
    if let Some(n) = args.n {
        if n != h.n_subcarriers {
            return Err(Error::NumerologyMismatch(format!("--n {n} but the file holds N = {}", h.n_subcarriers)));
        }
    }
    if let Some(b) = args.bandwidth_hz {
        if ((b - file.bandwidth()) / b).abs() > 1e-9 {
            return Err(Error::NumerologyMismatch(format!(
                "--bandwidth-hz {b} but the file holds {}",
                file.bandwidth()
            )));
        }
    }
    if let Some(m) = args.design.roi_bins {
        if m >= h.n_subcarriers / 2 {
            return Err(Error::NumerologyMismatch(format!(
                "--roi-bins {m} needs N > {}, file holds N = {}",
                2 * m,
                h.n_subcarriers
            )));
        }
    }
    args.design.apply(cfg);
    let numerology = OfdmNumerology {
        n_subcarriers: h.n_subcarriers,
        subcarrier_spacing: h.subcarrier_spacing,
        cp_duration: h.subcarrier_spacing.recip(),
        n_symbols: h.n_symbols,
        carrier_freq: h.center_freq,
    };
    let shift_set = match cfg.filter.roi_bins {
        Some(m) => ShiftSet::new(m, h.n_subcarriers),
        None => ShiftSet::covering(&cfg.roi_window()?, &numerology),
    }
    .map_err(|e| Error::NumerologyMismatch(format!("ROI does not fit the recorded numerology: {e}")))?;
    Ok((numerology, FilterDesign { shift_set, lambda: cfg.filter.lambda }))
}

pub fn ingest_profiles(cfg: &mut RunConfig, args: &IngestArgs) -> Result<ProfileSet> {
    let file = FrameFile::read_from(&args.path)?;
    let (numerology, design) = ingest_design(cfg, args, &file)?;
    noncoherent_profiles(&[file.records], &design, &numerology, cfg.estimator.zero_pad)
}

pub fn cmd_ingest(cfg: &mut RunConfig, args: &IngestArgs) -> Result<Vec<u8>> {
    let set = ingest_profiles(cfg, args)?;
    let mut out = Vec::new();
    set.write_csv(&mut out)?;
    Ok(out)
}

/// Seed used when neither `--seed` nor a config file supplies one.
pub const fn default_seed() -> u64 {
    DEFAULT_SEED
}
