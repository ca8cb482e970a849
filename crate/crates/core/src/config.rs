//! TOML run configuration shared by the CLI subcommands.
//!
//! Every section is optional; omitted fields take the two-target reference
//! setup (N = 256, B = 50 MHz, L = 8, λ = 0.1, S = ±50 bins).

use serde::{Deserialize, Serialize};

use crate::constellation::ConstellationKind;
use crate::error::{Error, Result};
use crate::estimator::{OrderRule, DEFAULT_ZERO_PAD};
use crate::filterbank::{FilterDesign, FilterKind, ShiftSet, DEFAULT_LAMBDA};
use crate::harness::{McConfig, TargetSpec};
use crate::signal::{DelayWindow, OfdmNumerology};

pub const DEFAULT_SEED: u64 = 0x15AC;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumerologyConfig {
    pub n_subcarriers: usize,
    pub bandwidth_hz: f64,
    pub cp_duration_s: f64,
    pub n_symbols: usize,
    pub carrier_freq_hz: f64,
}

impl Default for NumerologyConfig {
    fn default() -> Self {
        Self { n_subcarriers: 256, bandwidth_hz: 50e6, cp_duration_s: 0.64e-6, n_symbols: 8, carrier_freq_hz: 0.0 }
    }
}

impl NumerologyConfig {
    pub fn build(&self) -> Result<OfdmNumerology> {
        let mut n =
            OfdmNumerology::from_bandwidth(self.n_subcarriers, self.bandwidth_hz, self.cp_duration_s, self.n_symbols);
        n.carrier_freq = self.carrier_freq_hz;
        n.validate()?;
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererConfig {
    pub range_m: f64,
    #[serde(default)]
    pub amplitude_db: f64,
    /// Omit for a uniformly random phase per trial.
    #[serde(default)]
    pub phase_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub min_m: f64,
    pub max_m: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self { min_m: 0.0, max_m: 150.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub lambda: f64,
    /// `M_max`; derived from the ROI when omitted.
    pub roi_bins: Option<usize>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, roi_bins: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub pencil_l: Option<usize>,
    pub zero_pad: usize,
    /// `known` or `threshold:<db>`
    pub order: String,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { pencil_l: None, zero_pad: DEFAULT_ZERO_PAD, order: "known".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub constellations: Vec<String>,
    pub filters: Vec<String>,
    pub n_trials: usize,
    pub block_normalize: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            constellations: ConstellationKind::builtin().iter().map(ToString::to_string).collect(),
            filters: FilterKind::ALL.iter().map(ToString::to_string).collect(),
            n_trials: 500,
            block_normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub numerology: NumerologyConfig,
    pub scatterers: Vec<ScattererConfig>,
    pub snr_db: Vec<f64>,
    pub roi: RoiConfig,
    pub filter: FilterConfig,
    pub estimator: EstimatorConfig,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let target = |range_m| ScattererConfig { range_m, amplitude_db: 0.0, phase_deg: None };
        Self {
            seed: DEFAULT_SEED,
            numerology: NumerologyConfig::default(),
            scatterers: vec![target(60.9), target(90.9)],
            snr_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            roi: RoiConfig::default(),
            filter: FilterConfig::default(),
            estimator: EstimatorConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn roi_window(&self) -> Result<DelayWindow> {
        DelayWindow::from_ranges(self.roi.min_m, self.roi.max_m)
    }

    pub fn filter_design(&self, numerology: &OfdmNumerology) -> Result<FilterDesign> {
        let shift_set = match self.filter.roi_bins {
            Some(m) => ShiftSet::new(m, numerology.n_subcarriers)?,
            None => ShiftSet::covering(&self.roi_window()?, numerology)?,
        };
        Ok(FilterDesign { shift_set, lambda: self.filter.lambda })
    }

    pub fn order_rule(&self) -> Result<OrderRule> {
        self.estimator.order.parse()
    }

    pub fn targets(&self) -> Vec<TargetSpec> {
        self.scatterers
            .iter()
            .map(|s| TargetSpec { range_m: s.range_m, amplitude_db: s.amplitude_db, phase_deg: s.phase_deg })
            .collect()
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        let numerology = self.numerology.build()?;
        let constellations =
            self.simulation.constellations.iter().map(|s| s.parse()).collect::<Result<Vec<ConstellationKind>>>()?;
        let filters = self.simulation.filters.iter().map(|s| s.parse()).collect::<Result<Vec<FilterKind>>>()?;
        let cfg = McConfig {
            numerology,
            targets: self.targets(),
            roi: self.roi_window()?,
            constellations,
            filters,
            snr_db_grid: self.snr_db.clone(),
            n_trials: self.simulation.n_trials,
            base_seed: self.seed,
            order: self.order_rule()?,
            design: self.filter_design(&numerology)?,
            pencil_l: self.estimator.pencil_l,
            block_normalize: self.simulation.block_normalize,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_reference_setup() {
        let cfg = RunConfig::default().mc_config().unwrap();
        assert_eq!(cfg.numerology.n_subcarriers, 256);
        assert_eq!(cfg.design.shift_set.len(), 100);
        assert_eq!(cfg.constellations.len(), 6);
        assert!(cfg.known_k());
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);

        let partial = RunConfig::from_toml(
            "seed = 9\nsnr_db = [10.0]\n[filter]\nlambda = 0.5\n[[scatterers]]\nrange_m = 42.0\nphase_deg = 30.0\n",
        )
        .unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.filter.lambda, 0.5);
        assert_eq!(partial.filter.roi_bins, None);
        assert_eq!(partial.numerology, NumerologyConfig::default());
        let mc = partial.mc_config().unwrap();
        assert_eq!(mc.design.shift_set.m_max(), 50);
        assert_eq!(mc.targets[0].phase_deg, Some(30.0));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        let mut cfg = RunConfig::default();
        cfg.estimator.order = "maybe".into();
        assert!(cfg.mc_config().is_err());
        let mut cfg = RunConfig::default();
        cfg.simulation.constellations = vec!["8psk".into()];
        assert!(cfg.mc_config().is_err());
    }
}
