//! Closed-form delay-estimation MSEs, the Cramér–Rao bound, and estimation
//! efficiency for the three receive filters.
//!
//! All MSE functions return range-squared values (m²) for `l` coherently
//! processed symbols; SNRs are linear `|alpha_k|^2 / sigma^2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constellation::{make_constellation, ConstellationKind, ConstellationMoments};
use crate::error::{Error, Result};
use crate::filterbank::FilterKind;
use crate::SPEED_OF_LIGHT;

/// Which aperture sum stands in for `sum_n n^2` in the Fisher information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApertureSum {
    /// `sum_{n=0}^{N-1} n^2`
    Exact,
    /// `N^3 / 3`, as in the closed-form MSEs.
    Cubic,
    /// `sum_n (n - (N-1)/2)^2 = N (N^2 - 1) / 12`: the bound when the target
    /// phase is unknown (or the subcarrier index is referenced to band centre).
    Centered,
}

impl ApertureSum {
    pub fn value(self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            ApertureSum::Exact => (nf - 1.0) * nf * (2.0 * nf - 1.0) / 6.0,
            ApertureSum::Cubic => nf * nf * nf / 3.0,
            ApertureSum::Centered => nf * (nf * nf - 1.0) / 12.0,
        }
    }
}

fn range_scale() -> f64 {
    (SPEED_OF_LIGHT / 2.0).powi(2)
}

/// Delay CRB in s²: `sigma^2 / (8 pi^2 Δf^2 |alpha|^2 S L)`.
pub fn crb_delay(snr_k: f64, n: usize, subcarrier_spacing: f64, l: usize, sum: ApertureSum) -> f64 {
    1.0 / (8.0 * PI * PI * subcarrier_spacing.powi(2) * snr_k * sum.value(n) * l as f64)
}

/// Range CRB in m².
pub fn crb(snr_k: f64, n: usize, subcarrier_spacing: f64, l: usize, sum: ApertureSum) -> f64 {
    crb_delay(snr_k, n, subcarrier_spacing, l, sum) * range_scale()
}

/// `3 / (8 pi^2 Δf^2 N^3 L)` scaled to m², per unit of `sigma^2/|alpha_k|^2`.
fn cubic_form(n: usize, subcarrier_spacing: f64, l: usize) -> f64 {
    let nf = n as f64;
    3.0 / (8.0 * PI * PI * subcarrier_spacing.powi(2) * nf * nf * nf * l as f64) * range_scale()
}

/// MF MSE: sidelobe interference scales with `mu4 - 1`.
pub fn mse_mf(m: &ConstellationMoments, snr_k: f64, rho_tot: f64, n: usize, subcarrier_spacing: f64, l: usize) -> f64 {
    cubic_form(n, subcarrier_spacing, l) * ((m.mu4 - 1.0) * rho_tot + 1.0) / snr_k
}

/// RF MSE: noise enhancement by `nu_minus2`.
pub fn mse_rf(m: &ConstellationMoments, snr_k: f64, n: usize, subcarrier_spacing: f64, l: usize) -> f64 {
    cubic_form(n, subcarrier_spacing, l) * m.nu_minus2 / snr_k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiMse {
    /// m², using the noise-enhancement factor only
    pub mse: f64,
    /// `N / (N - kappa2 |S|)`
    pub delta_n: f64,
    /// Upper bound on the interference residual, `rho_tot λ / (N (1 - kappa2 |S| / N))`.
    pub delta_i_bound: f64,
    /// `sqrt(delta_n)`
    pub eta: f64,
}

/// ROI-MMF noise-enhancement factor `N / (N - kappa2 |S|)`.
pub fn roi_noise_factor(m: &ConstellationMoments, n: usize, shift_count: usize) -> Result<f64> {
    let load = m.kappa2 * shift_count as f64;
    let nf = n as f64;
    if load >= nf {
        return Err(Error::ParameterOutOfRegime { load, n });
    }
    Ok(nf / (nf - load))
}

#[allow(clippy::too_many_arguments)]
pub fn mse_roi(
    m: &ConstellationMoments,
    snr_k: f64,
    rho_tot: f64,
    n: usize,
    subcarrier_spacing: f64,
    l: usize,
    shift_count: usize,
    lambda: f64,
) -> Result<RoiMse> {
    let delta_n = roi_noise_factor(m, n, shift_count)?;
    let nf = n as f64;
    let delta_i_bound = rho_tot * lambda / (nf * (1.0 - m.kappa2 * shift_count as f64 / nf));
    Ok(RoiMse {
        mse: cubic_form(n, subcarrier_spacing, l) * delta_n / snr_k,
        delta_n,
        delta_i_bound,
        eta: delta_n.sqrt(),
    })
}

/// `sqrt(mse / crb)`.
pub fn efficiency(mse: f64, crb: f64) -> Result<f64> {
    if crb.is_nan() || crb <= 0.0 {
        return Err(Error::InvalidConfig(format!("CRB must be positive, got {crb}")));
    }
    Ok((mse / crb).sqrt())
}

pub fn eta_mf(m: &ConstellationMoments, rho_tot: f64) -> f64 {
    (1.0 + (m.mu4 - 1.0) * rho_tot).sqrt()
}

pub fn eta_rf(m: &ConstellationMoments) -> f64 {
    m.nu_minus2.sqrt()
}

pub fn eta_roi(m: &ConstellationMoments, n: usize, shift_count: usize) -> Result<f64> {
    roi_noise_factor(m, n, shift_count).map(f64::sqrt)
}

/// Closed-form efficiency of one filter.
pub fn eta(kind: FilterKind, m: &ConstellationMoments, rho_tot: f64, n: usize, shift_count: usize) -> Result<f64> {
    match kind {
        FilterKind::Mf => Ok(eta_mf(m, rho_tot)),
        FilterKind::Rf => Ok(eta_rf(m)),
        FilterKind::RoiMmf => eta_roi(m, n, shift_count),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub crb_range_m2: f64,
    pub mse_mf: f64,
    pub mse_rf: f64,
    pub mse_roi: f64,
    pub eta_mf: f64,
    pub eta_rf: f64,
    pub eta_roi: f64,
    pub delta_n_roi: f64,
    pub delta_i_roi_bound: f64,
    pub rho_tot: f64,
}

/// All closed-form quantities for one target. Efficiencies are taken against
/// the `N^3/3` CRB so they match the MSE expressions term for term.
#[allow(clippy::too_many_arguments)]
pub fn theory_report(
    m: &ConstellationMoments,
    snr_k: f64,
    rho_tot: f64,
    n: usize,
    subcarrier_spacing: f64,
    l: usize,
    shift_count: usize,
    lambda: f64,
) -> Result<TheoryReport> {
    let crb_range_m2 = crb(snr_k, n, subcarrier_spacing, l, ApertureSum::Cubic);
    let mf = mse_mf(m, snr_k, rho_tot, n, subcarrier_spacing, l);
    let rf = mse_rf(m, snr_k, n, subcarrier_spacing, l);
    let roi = mse_roi(m, snr_k, rho_tot, n, subcarrier_spacing, l, shift_count, lambda)?;
    Ok(TheoryReport {
        crb_range_m2,
        mse_mf: mf,
        mse_rf: rf,
        mse_roi: roi.mse,
        eta_mf: efficiency(mf, crb_range_m2)?,
        eta_rf: efficiency(rf, crb_range_m2)?,
        eta_roi: efficiency(roi.mse, crb_range_m2)?,
        delta_n_roi: roi.delta_n,
        delta_i_roi_bound: roi.delta_i_bound,
        rho_tot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub constellation: String,
    pub mf: f64,
    pub rf: f64,
    pub roi: f64,
    pub delta_i_bound: f64,
}

/// Efficiency table: one row per constellation, one column per filter.
pub fn theory_table(
    kinds: &[ConstellationKind],
    rho_tot: f64,
    n: usize,
    shift_count: usize,
    lambda: f64,
) -> Result<Vec<TheoryRow>> {
    kinds
        .iter()
        .map(|kind| {
            let m = make_constellation(kind)?.moments();
            let delta_n = roi_noise_factor(&m, n, shift_count)?;
            let nf = n as f64;
            Ok(TheoryRow {
                constellation: kind.to_string(),
                mf: eta_mf(&m, rho_tot),
                rf: eta_rf(&m),
                roi: delta_n.sqrt(),
                delta_i_bound: rho_tot * lambda / (nf * (1.0 - m.kappa2 * shift_count as f64 / nf)),
            })
        })
        .collect()
}
