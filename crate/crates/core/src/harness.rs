//! Seeded Monte Carlo engine: trials over constellations, filters, and SNRs,
//! aggregated into RMSE / efficiency / miss-rate summaries.
//!
//! Every trial draws from its own ChaCha stream whose seed is a hash of the
//! base seed, constellation label, SNR and trial index. The filter is not
//! part of the seed, so all filters of a cell see identical payload, phase
//! and noise draws, and results are independent of scheduling.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{make_constellation, Constellation, ConstellationKind};
use crate::error::{Error, Result};
use crate::estimator::{associate_and_score, MatrixPencil, OrderRule};
use crate::filterbank::{FilterDesign, FilterKind, ShiftSet};
use crate::pipeline::coherent_output;
use crate::signal::{make_frame_sequence, range_to_delay, DelayWindow, OfdmNumerology, Scatterer, SceneConfig};
use crate::theory::{crb, eta, ApertureSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub range_m: f64,
    /// Power relative to the SNR reference, dB.
    pub amplitude_db: f64,
    /// Fixed phase; `None` draws a uniform phase per trial.
    pub phase_deg: Option<f64>,
}

impl TargetSpec {
    pub fn power(&self) -> f64 {
        10f64.powf(self.amplitude_db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub numerology: OfdmNumerology,
    pub targets: Vec<TargetSpec>,
    pub roi: DelayWindow,
    pub constellations: Vec<ConstellationKind>,
    pub filters: Vec<FilterKind>,
    pub snr_db_grid: Vec<f64>,
    pub n_trials: usize,
    pub base_seed: u64,
    pub order: OrderRule,
    pub design: FilterDesign,
    pub pencil_l: Option<usize>,
    pub block_normalize: bool,
}

impl McConfig {
    /// Two equal-power targets at 60.9 m and 90.9 m, N = 256, B = 50 MHz,
    /// 0.64 us CP, L = 8, λ = 0.1, S = ±50 bins, known model order.
    pub fn two_target_default(constellations: Vec<ConstellationKind>, snr_db_grid: Vec<f64>, n_trials: usize) -> Self {
        let numerology = OfdmNumerology::from_bandwidth(256, 50e6, 0.64e-6, 8);
        let target = |range_m| TargetSpec { range_m, amplitude_db: 0.0, phase_deg: None };
        McConfig {
            numerology,
            targets: vec![target(60.9), target(90.9)],
            roi: DelayWindow::from_ranges(0.0, 150.0).expect("static ROI"),
            constellations,
            filters: FilterKind::ALL.to_vec(),
            snr_db_grid,
            n_trials,
            base_seed: 1,
            order: OrderRule::Known,
            design: FilterDesign { shift_set: ShiftSet::new(50, 256).expect("static shift set"), lambda: 0.1 },
            pencil_l: None,
            block_normalize: true,
        }
    }

    pub fn known_k(&self) -> bool {
        self.order == OrderRule::Known
    }

    pub fn validate(&self) -> Result<()> {
        self.numerology.validate()?;
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be >= 1".into()));
        }
        if self.constellations.is_empty() || self.filters.is_empty() || self.snr_db_grid.is_empty() {
            return Err(Error::InvalidConfig("constellation, filter and SNR grids must be non-empty".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidConfig("at least one target required".into()));
        }
        if 2 * self.design.shift_set.m_max() >= self.numerology.n_subcarriers {
            return Err(Error::InvalidConfig("shift set too large for N".into()));
        }
        for kind in &self.constellations {
            make_constellation(kind)?;
        }
        self.scene(0.0, &mut ChaCha8Rng::seed_from_u64(0)).validate()
    }

    /// Scene at `snr_db` (reference target power over noise), drawing random
    /// phases from `rng` where none is fixed.
    pub fn scene<R: Rng + ?Sized>(&self, snr_db: f64, rng: &mut R) -> SceneConfig {
        let scatterers = self
            .targets
            .iter()
            .map(|t| {
                let phase = match t.phase_deg {
                    Some(p) => p.to_radians(),
                    None => rng.gen_range(0.0..2.0 * PI),
                };
                Scatterer {
                    amplitude: Complex64::from_polar(t.power().sqrt(), phase),
                    delay: range_to_delay(t.range_m),
                }
            })
            .collect();
        SceneConfig { numerology: self.numerology, scatterers, noise_var: 10f64.powf(-snr_db / 10.0), roi: self.roi }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for constellation in 0..self.constellations.len() {
            for &snr_db in &self.snr_db_grid {
                for &filter in &self.filters {
                    cells.push(Cell { constellation, filter, snr_db });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// index into `McConfig::constellations`
    pub constellation: usize,
    pub filter: FilterKind,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// One entry per target; `None` is a miss.
    pub squared_errors_m2: Vec<Option<f64>>,
    pub estimates_m: Vec<f64>,
    pub k_hat: Option<usize>,
    pub mean_rho_s: Option<f64>,
    /// Numerical failure that turned the whole trial into misses.
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn misses(&self) -> usize {
        self.squared_errors_m2.iter().filter(|e| e.is_none()).count()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based trial seed.
pub fn trial_seed(base_seed: u64, constellation: &str, snr_db: f64, trial_index: u64) -> u64 {
    let mut h = splitmix(base_seed);
    for b in constellation.bytes() {
        h = splitmix(h ^ b as u64);
    }
    h = splitmix(h ^ snr_db.to_bits());
    splitmix(h ^ trial_index)
}

fn run_trial_with(config: &McConfig, constellation: &Constellation, cell: &Cell, trial_index: u64) -> TrialResult {
    let seed = trial_seed(config.base_seed, &constellation.kind.to_string(), cell.snr_db, trial_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = config.scene(cell.snr_db, &mut rng);
    let truth: Vec<f64> = scene.scatterers.iter().map(|s| s.delay).collect();
    let fail = |e: Error| TrialResult {
        squared_errors_m2: vec![None; truth.len()],
        estimates_m: vec![],
        k_hat: None,
        mean_rho_s: None,
        failure: Some(e.to_string()),
    };

    let frames =
        match make_frame_sequence(&scene, constellation, config.numerology.n_symbols, config.block_normalize, &mut rng)
        {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
    let out = match coherent_output(&frames, cell.filter, &config.design) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let mut mp = MatrixPencil::new(config.numerology.subcarrier_spacing).with_roi(config.roi);
    if let Some(l) = config.pencil_l {
        mp = mp.with_pencil(l);
    }
    match mp.estimate_with(&out.averaged, config.order, truth.len()) {
        Ok(est) => {
            let assoc = associate_and_score(&est, &truth);
            TrialResult {
                squared_errors_m2: assoc.squared_errors_m2,
                estimates_m: est.ranges(),
                k_hat: Some(est.k_hat),
                mean_rho_s: out.mean_rho_s,
                failure: None,
            }
        }
        Err(e) => TrialResult { mean_rho_s: out.mean_rho_s, ..fail(e) },
    }
}

/// One trial; deterministic in `(base_seed, cell, trial_index)`.
pub fn run_trial(config: &McConfig, cell: &Cell, trial_index: u64) -> Result<TrialResult> {
    let kind = config
        .constellations
        .get(cell.constellation)
        .ok_or_else(|| Error::InvalidConfig(format!("no constellation #{}", cell.constellation)))?;
    let constellation = make_constellation(kind)?;
    Ok(run_trial_with(config, &constellation, cell, trial_index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub constellation: String,
    pub filter: FilterKind,
    pub snr_db: f64,
    /// RMSE over all scored (truth, estimate) pairs, m
    pub rmse_m: f64,
    /// `rmse_m / crb_sqrt_m`
    pub eta_numerical: f64,
    /// Closed-form efficiency, averaged over targets
    pub eta_theory: f64,
    /// Root of the target-averaged range CRB, m
    pub crb_sqrt_m: f64,
    pub miss_rate: f64,
    pub mean_rho_s: Option<f64>,
    /// Scored pairs
    pub n_effective: usize,
    pub misses: usize,
    pub trials: usize,
    pub per_target_rmse_m: Vec<f64>,
    pub per_target_eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub cells: Vec<CellSummary>,
}

impl McSummary {
    pub fn find(&self, constellation: &str, filter: FilterKind, snr_db: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.constellation == constellation && c.filter == filter && (c.snr_db - snr_db).abs() < 1e-9)
    }
}

fn summarise(config: &McConfig, constellation: &Constellation, cell: &Cell, trials: &[TrialResult]) -> CellSummary {
    let k = config.targets.len();
    let noise_var = 10f64.powf(-cell.snr_db / 10.0);
    let n = config.numerology.n_subcarriers;
    let df = config.numerology.subcarrier_spacing;
    let l = config.numerology.n_symbols;
    let moments = constellation.moments();
    let powers: Vec<f64> = config.targets.iter().map(TargetSpec::power).collect();
    let total_power: f64 = powers.iter().sum();

    let crbs: Vec<f64> = powers.iter().map(|p| crb(p / noise_var, n, df, l, ApertureSum::Centered)).collect();
    let crb_mean = crbs.iter().sum::<f64>() / k as f64;

    let mut per_target_sum = vec![0.0; k];
    let mut per_target_count = vec![0usize; k];
    let mut misses = 0;
    for t in trials {
        for (i, e) in t.squared_errors_m2.iter().enumerate() {
            match e {
                Some(e) => {
                    per_target_sum[i] += e;
                    per_target_count[i] += 1;
                }
                None => misses += 1,
            }
        }
    }
    let n_effective: usize = per_target_count.iter().sum();
    let rmse_m =
        if n_effective > 0 { (per_target_sum.iter().sum::<f64>() / n_effective as f64).sqrt() } else { f64::NAN };
    let per_target_rmse_m: Vec<f64> = per_target_sum
        .iter()
        .zip(&per_target_count)
        .map(|(s, &c)| if c > 0 { (s / c as f64).sqrt() } else { f64::NAN })
        .collect();
    let per_target_eta = per_target_rmse_m.iter().zip(&crbs).map(|(r, c)| r / c.sqrt()).collect();

    let eta_theory = powers
        .iter()
        .map(|p| {
            let rho_tot = (total_power - p) / noise_var;
            eta(cell.filter, &moments, rho_tot, n, config.design.shift_set.len()).unwrap_or(f64::NAN)
        })
        .sum::<f64>()
        / k as f64;

    let rhos: Vec<f64> = trials.iter().filter_map(|t| t.mean_rho_s).collect();
    CellSummary {
        constellation: constellation.kind.to_string(),
        filter: cell.filter,
        snr_db: cell.snr_db,
        rmse_m,
        eta_numerical: rmse_m / crb_mean.sqrt(),
        eta_theory,
        crb_sqrt_m: crb_mean.sqrt(),
        miss_rate: misses as f64 / (trials.len() * k) as f64,
        mean_rho_s: (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64),
        n_effective,
        misses,
        trials: trials.len(),
        per_target_rmse_m,
        per_target_eta,
    }
}

/// Runs every cell; trials run in parallel and are folded in index order.
pub fn run_sweep(config: &McConfig) -> Result<McSummary> {
    config.validate()?;
    let constellations: Vec<Constellation> =
        config.constellations.iter().map(make_constellation).collect::<Result<_>>()?;
    let cells = config
        .cells()
        .iter()
        .map(|cell| {
            let c = &constellations[cell.constellation];
            let trials: Vec<TrialResult> =
                (0..config.n_trials as u64).into_par_iter().map(|i| run_trial_with(config, c, cell, i)).collect();
            summarise(config, c, cell, &trials)
        })
        .collect();
    Ok(McSummary { cells })
}

/// Output formats for [`emit_results`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    /// One row per cell, fixed column set.
    Csv,
    /// Full summary as JSON.
    Json,
    /// Aligned text table for terminals.
    Table,
}

impl std::str::FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ResultFormat::Csv),
            "json" => Ok(ResultFormat::Json),
            "table" | "text" => Ok(ResultFormat::Table),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

/// `constellation,filter,snr_db,rmse_m,eta_num,eta_theory,crb_sqrt_m,miss_rate,trials`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub constellation: String,
    pub filter: FilterKind,
    pub snr_db: f64,
    pub rmse_m: f64,
    pub eta_num: f64,
    pub eta_theory: f64,
    pub crb_sqrt_m: f64,
    pub miss_rate: f64,
    pub trials: usize,
}

impl From<&CellSummary> for CsvRow {
    fn from(c: &CellSummary) -> Self {
        CsvRow {
            constellation: c.constellation.clone(),
            filter: c.filter,
            snr_db: c.snr_db,
            rmse_m: c.rmse_m,
            eta_num: c.eta_numerical,
            eta_theory: c.eta_theory,
            crb_sqrt_m: c.crb_sqrt_m,
            miss_rate: c.miss_rate,
            trials: c.trials,
        }
    }
}

fn ser_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Serialization(e.to_string())
}

pub fn emit_results<W: Write>(summary: &McSummary, format: ResultFormat, mut writer: W) -> Result<()> {
    match format {
        ResultFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            for cell in &summary.cells {
                w.serialize(CsvRow::from(cell)).map_err(ser_err)?;
            }
            w.flush()?;
        }
        ResultFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, summary).map_err(ser_err)?;
            writeln!(writer)?;
        }
        ResultFormat::Table => {
            writeln!(
                writer,
                "{:<24} {:>6} {:>7} {:>11} {:>8} {:>8} {:>11} {:>6} {:>7}",
                "constellation", "filter", "snr_db", "rmse_m", "eta_num", "eta_th", "crb_sqrt_m", "miss", "trials"
            )?;
            for c in &summary.cells {
                writeln!(
                    writer,
                    "{:<24} {:>6} {:>7.2} {:>11.4e} {:>8.3} {:>8.3} {:>11.4e} {:>6.3} {:>7}",
                    c.constellation,
                    c.filter.to_string(),
                    c.snr_db,
                    c.rmse_m,
                    c.eta_numerical,
                    c.eta_theory,
                    c.crb_sqrt_m,
                    c.miss_rate,
                    c.trials
                )?;
            }
        }
    }
    Ok(())
}

pub fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(reader).deserialize().map(|r| r.map_err(ser_err)).collect()
}

pub fn read_json_summary<R: Read>(reader: R) -> Result<McSummary> {
    serde_json::from_reader(reader).map_err(ser_err)
}
