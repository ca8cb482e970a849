//! Frequency-domain OFDM sensing channel: steering vectors, multi-scatterer
//! superposition, and circular complex Gaussian noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::{draw_block, Constellation, SymbolBlock};
use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmNumerology {
    pub n_subcarriers: usize,
    /// Hz
    pub subcarrier_spacing: f64,
    /// seconds
    pub cp_duration: f64,
    /// OFDM symbols per CPI
    pub n_symbols: usize,
    /// Hz, metadata only
    pub carrier_freq: f64,
}

impl OfdmNumerology {
    pub fn from_bandwidth(n_subcarriers: usize, bandwidth: f64, cp_duration: f64, n_symbols: usize) -> Self {
        Self {
            n_subcarriers,
            subcarrier_spacing: bandwidth / n_subcarriers as f64,
            cp_duration,
            n_symbols,
            carrier_freq: 0.0,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing
    }

    /// Nominal range resolution `c / (2B)` in metres.
    pub fn range_bin(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth())
    }

    /// Unambiguous delay span `1/Δf`.
    pub fn delay_period(&self) -> f64 {
        self.subcarrier_spacing.recip()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers < 2 {
            return Err(Error::InvalidConfig(format!("need N >= 2, got {}", self.n_subcarriers)));
        }
        if self.n_symbols < 1 {
            return Err(Error::InvalidConfig("need at least one OFDM symbol".into()));
        }
        if !(self.subcarrier_spacing > 0.0 && self.subcarrier_spacing.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad subcarrier spacing {}", self.subcarrier_spacing)));
        }
        if self.cp_duration.is_nan() || self.cp_duration <= 0.0 {
            return Err(Error::InvalidConfig(format!("bad CP duration {}", self.cp_duration)));
        }
        Ok(())
    }
}

/// Monostatic round trip: `r = c * tau / 2`.
pub fn delay_to_range(tau: f64) -> f64 {
    SPEED_OF_LIGHT * tau / 2.0
}

pub fn range_to_delay(range: f64) -> f64 {
    2.0 * range / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub amplitude: Complex64,
    /// Round-trip delay in seconds.
    pub delay: f64,
}

impl Scatterer {
    pub fn at_range(range: f64, amplitude: Complex64) -> Self {
        Self { amplitude, delay: range_to_delay(range) }
    }

    pub fn range(&self) -> f64 {
        delay_to_range(self.delay)
    }
}

/// Closed delay interval `[tau_min, tau_max]` where targets are known to lie.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayWindow {
    pub tau_min: f64,
    pub tau_max: f64,
}

impl DelayWindow {
    pub fn new(tau_min: f64, tau_max: f64) -> Result<Self> {
        if tau_min.is_nan() || tau_max.is_nan() || tau_min > tau_max {
            return Err(Error::InvalidConfig(format!("empty ROI [{tau_min}, {tau_max}]")));
        }
        Ok(Self { tau_min, tau_max })
    }

    pub fn from_ranges(r_min: f64, r_max: f64) -> Result<Self> {
        Self::new(range_to_delay(r_min), range_to_delay(r_max))
    }

    pub fn contains(&self, tau: f64) -> bool {
        tau >= self.tau_min && tau <= self.tau_max
    }

    pub fn range_bounds(&self) -> (f64, f64) {
        (delay_to_range(self.tau_min), delay_to_range(self.tau_max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub numerology: OfdmNumerology,
    pub scatterers: Vec<Scatterer>,
    /// Per-subcarrier complex noise variance (real + imaginary).
    pub noise_var: f64,
    pub roi: DelayWindow,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.numerology.validate()?;
        if !self.noise_var.is_finite() || self.noise_var < 0.0 {
            return Err(Error::InvalidConfig(format!("noise variance {} must be finite and >= 0", self.noise_var)));
        }
        for s in &self.scatterers {
            if !(s.delay >= 0.0 && s.delay < self.numerology.cp_duration) {
                return Err(Error::InvalidConfig(format!(
                    "scatterer at {:.3} m lies outside the CP window",
                    s.range()
                )));
            }
            if !self.roi.contains(s.delay) {
                return Err(Error::InvalidConfig(format!("scatterer at {:.3} m lies outside the ROI", s.range())));
            }
        }
        Ok(())
    }

    /// `|alpha_k|^2 / sigma^2`, infinite when noiseless.
    pub fn snr(&self, k: usize) -> f64 {
        self.scatterers[k].amplitude.norm_sqr() / self.noise_var
    }

    /// Aggregate interference SNR `sum_{j != k} |alpha_j|^2 / sigma^2`.
    pub fn rho_tot(&self, k: usize) -> f64 {
        self.scatterers.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, s)| s.amplitude.norm_sqr()).sum::<f64>()
            / self.noise_var
    }
}

/// Transmit block and the matching frequency-domain receive vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub tx: SymbolBlock,
    pub rx: Vec<Complex64>,
}

impl SymbolFrame {
    pub fn new(tx: SymbolBlock, rx: Vec<Complex64>) -> Result<Self> {
        if tx.len() != rx.len() {
            return Err(Error::LengthMismatch { expected: tx.len(), got: rx.len() });
        }
        Ok(Self { tx, rx })
    }
}

/// `exp(-j 2 pi n Δf tau)` for `n = 0..N`.
///
/// The cycle count is reduced modulo one before scaling by `2π` so that
/// large `n Δf tau` products keep full phase precision.
pub fn steering(tau: f64, n: usize, subcarrier_spacing: f64) -> Vec<Complex64> {
    let step = subcarrier_spacing * tau;
    (0..n)
        .map(|i| {
            let cycles = i as f64 * step;
            let frac = cycles - cycles.round();
            Complex64::from_polar(1.0, -2.0 * PI * frac)
        })
        .collect()
}

/// Noise-free channel response `sum_k alpha_k h(tau_k)`.
pub fn channel_response(scatterers: &[Scatterer], n: usize, subcarrier_spacing: f64) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for s in scatterers {
        for (acc, e) in h.iter_mut().zip(steering(s.delay, n, subcarrier_spacing)) {
            *acc += s.amplitude * e;
        }
    }
    h
}

/// One `CN(0, var)` draw.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let sd = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

pub fn simulate_rx<R: Rng + ?Sized>(scene: &SceneConfig, tx: &SymbolBlock, rng: &mut R) -> Result<SymbolFrame> {
    let n = scene.numerology.n_subcarriers;
    if tx.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: tx.len() });
    }
    let h = channel_response(&scene.scatterers, n, scene.numerology.subcarrier_spacing);
    let rx = h
        .iter()
        .zip(&tx.symbols)
        .map(|(h, x)| {
            let noise =
                if scene.noise_var > 0.0 { complex_gaussian(rng, scene.noise_var) } else { Complex64::new(0.0, 0.0) };
            h * x + noise
        })
        .collect();
    Ok(SymbolFrame { tx: tx.clone(), rx })
}

/// `l` consecutive symbols of one CPI: fresh payload and noise per symbol,
/// identical channel.
pub fn make_frame_sequence<R: Rng + ?Sized>(
    scene: &SceneConfig,
    constellation: &Constellation,
    l: usize,
    block_normalize: bool,
    rng: &mut R,
) -> Result<Vec<SymbolFrame>> {
    if l == 0 {
        return Err(Error::InvalidConfig("CPI needs at least one symbol".into()));
    }
    let n = scene.numerology.n_subcarriers;
    (0..l)
        .map(|_| {
            let tx = draw_block(constellation, n, rng, block_normalize);
            simulate_rx(scene, &tx, rng)
        })
        .collect()
}
