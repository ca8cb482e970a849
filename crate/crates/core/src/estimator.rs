//! Range profiles and off-grid delay estimation with the matrix pencil.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{Error, Result};
use crate::signal::{delay_to_range, DelayWindow, OfdmNumerology};
use crate::SPEED_OF_LIGHT;

pub const DEFAULT_ZERO_PAD: usize = 8;
pub const DEFAULT_THRESHOLD_DB: f64 = 20.0;

/// Relative singular-value floor below which a direction counts as empty.
const RANK_TOL: f64 = 1e-10;

/// Entry-wise mean of the filtered outputs of one CPI.
pub fn average_cpi(filtered: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    let first = filtered.first().ok_or(Error::EmptyInput("CPI"))?;
    let n = first.len();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for v in filtered {
        if v.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: v.len() });
        }
        acc.iter_mut().zip(v).for_each(|(a, v)| *a += v);
    }
    let scale = (filtered.len() as f64).recip();
    acc.iter_mut().for_each(|a| *a *= scale);
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile {
    /// metres
    pub ranges: Vec<f64>,
    /// dB, peak at 0
    pub magnitude_db: Vec<f64>,
    pub zero_pad_factor: usize,
}

/// Linear magnitude of the zero-padded inverse DFT of `v`.
///
/// A tone `exp(-j 2 pi n Δf tau)` peaks at padded index `tau * B * pad`.
pub fn profile_magnitudes(v: &[Complex64], zero_pad_factor: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); v.len() * zero_pad_factor.max(1)];
    buf[..v.len()].copy_from_slice(v);
    dft::inverse(&mut buf);
    buf.iter().map(|c| c.norm()).collect()
}

impl RangeProfile {
    /// Normalises linear magnitudes to a 0 dB peak. An all-zero input gives a
    /// flat 0 dB profile.
    pub fn from_magnitudes(magnitudes: &[f64], numerology: &OfdmNumerology, zero_pad_factor: usize) -> Self {
        let pad = zero_pad_factor.max(1);
        let step = SPEED_OF_LIGHT / (2.0 * numerology.bandwidth() * pad as f64);
        let peak = magnitudes.iter().copied().fold(0.0, f64::max);
        let magnitude_db = if peak > 0.0 {
            magnitudes.iter().map(|m| 20.0 * (m / peak).log10()).collect()
        } else {
            vec![0.0; magnitudes.len()]
        };
        Self { ranges: (0..magnitudes.len()).map(|i| i as f64 * step).collect(), magnitude_db, zero_pad_factor: pad }
    }

    /// Padded-grid spacing in metres.
    pub fn range_step(&self) -> f64 {
        self.ranges.get(1).copied().unwrap_or(0.0)
    }

    pub fn peak_range(&self) -> f64 {
        let (i, _) = self.magnitude_db.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap_or((0, &0.0));
        self.ranges[i]
    }

    /// Ranges of strict local maxima above `floor_db`, strongest first.
    pub fn local_peaks(&self, floor_db: f64) -> Vec<f64> {
        let m = &self.magnitude_db;
        let len = m.len();
        let mut peaks: Vec<(f64, f64)> = (0..len)
            .filter(|&i| {
                let prev = m[(i + len - 1) % len];
                let next = m[(i + 1) % len];
                m[i] >= floor_db && m[i] > prev && m[i] >= next
            })
            .map(|i| (m[i], self.ranges[i]))
            .collect();
        peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
        peaks.into_iter().map(|(_, r)| r).collect()
    }
}

pub fn range_profile(v: &[Complex64], numerology: &OfdmNumerology, zero_pad_factor: usize) -> Result<RangeProfile> {
    if zero_pad_factor == 0 {
        return Err(Error::InvalidConfig("zero-pad factor must be >= 1".into()));
    }
    if v.is_empty() {
        return Err(Error::EmptyInput("profile input"));
    }
    Ok(RangeProfile::from_magnitudes(&profile_magnitudes(v, zero_pad_factor), numerology, zero_pad_factor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimates {
    pub k_hat: usize,
    /// seconds, ascending
    pub delays: Vec<f64>,
    pub pencil_param: usize,
}

impl DelayEstimates {
    pub fn ranges(&self) -> Vec<f64> {
        self.delays.iter().map(|&t| delay_to_range(t)).collect()
    }
}

/// How the pencil's model order is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OrderRule {
    /// Use the true target count.
    Known,
    /// Count singular values within this many dB of the largest.
    Threshold(f64),
}

impl Default for OrderRule {
    fn default() -> Self {
        OrderRule::Threshold(DEFAULT_THRESHOLD_DB)
    }
}

impl fmt::Display for OrderRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderRule::Known => f.write_str("known"),
            OrderRule::Threshold(db) => write!(f, "threshold:{db}"),
        }
    }
}

impl FromStr for OrderRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("known") {
            return Ok(OrderRule::Known);
        }
        if s.eq_ignore_ascii_case("threshold") {
            return Ok(OrderRule::default());
        }
        s.strip_prefix("threshold:")
            .and_then(|db| db.parse::<f64>().ok())
            .filter(|db| *db > 0.0)
            .map(OrderRule::Threshold)
            .ok_or_else(|| Error::InvalidConfig(format!("bad order rule `{s}` (known | threshold:<db>)")))
    }
}

/// `round(N/3)`.
pub fn default_pencil_param(n: usize) -> usize {
    ((n as f64) / 3.0).round() as usize
}

/// `(N - L) x (L + 1)` Hankel matrix `H[i, j] = v[i + j]`.
pub fn hankel(v: &[Complex64], pencil_l: usize) -> DMatrix<Complex64> {
    let rows = v.len() - pencil_l;
    DMatrix::from_fn(rows, pencil_l + 1, |i, j| v[i + j])
}

/// Number of singular values within `threshold_db` (amplitude dB) of the largest.
pub fn select_order(singular_values: &[f64], threshold_db: f64) -> usize {
    let top = singular_values.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    let floor = top * 10f64.powf(-threshold_db / 20.0);
    singular_values.iter().filter(|&&s| s >= floor).count()
}

fn check_pencil(n: usize, pencil_l: usize, order: usize) -> Result<()> {
    let ok = order >= 1 && pencil_l >= n / 3 && pencil_l <= n / 2 && order <= pencil_l && pencil_l >= 1;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidPencilParam { pencil: pencil_l, n, order })
    }
}

/// Matrix pencil delay estimator for a frequency-domain multitone.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPencil {
    pub subcarrier_spacing: f64,
    pub roi: Option<DelayWindow>,
    pub pencil_l: Option<usize>,
}

struct HankelSvd {
    /// descending
    singular_values: Vec<f64>,
    /// rows of V^H in the same order
    right: DMatrix<Complex64>,
}

fn hankel_svd(v: &[Complex64], pencil_l: usize) -> HankelSvd {
    let svd = hankel(v, pencil_l).svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let right = DMatrix::from_fn(order.len(), vt.ncols(), |r, c| vt[(order[r], c)]);
    HankelSvd { singular_values, right }
}

impl MatrixPencil {
    pub fn new(subcarrier_spacing: f64) -> Self {
        Self { subcarrier_spacing, roi: None, pencil_l: None }
    }

    pub fn with_roi(mut self, roi: DelayWindow) -> Self {
        self.roi = Some(roi);
        self
    }

    pub fn with_pencil(mut self, pencil_l: usize) -> Self {
        self.pencil_l = Some(pencil_l);
        self
    }

    fn pencil_for(&self, n: usize) -> usize {
        self.pencil_l.unwrap_or_else(|| default_pencil_param(n))
    }

    /// Descending singular values of the Hankel matrix of `v`.
    pub fn singular_values(&self, v: &[Complex64]) -> Result<Vec<f64>> {
        let pencil = self.pencil_for(v.len());
        check_pencil(v.len(), pencil, 1)?;
        Ok(hankel_svd(v, pencil).singular_values)
    }

    /// Estimates with a fixed model order `k`.
    pub fn estimate(&self, v: &[Complex64], k: usize) -> Result<DelayEstimates> {
        let pencil = self.pencil_for(v.len());
        check_pencil(v.len(), pencil, k)?;
        let svd = hankel_svd(v, pencil);
        self.solve(v.len(), &svd, k, pencil)
    }

    /// Estimates with the order picked by `rule`; `known_k` is used for
    /// [`OrderRule::Known`]. The order is clamped to the pencil parameter.
    pub fn estimate_with(&self, v: &[Complex64], rule: OrderRule, known_k: usize) -> Result<DelayEstimates> {
        let pencil = self.pencil_for(v.len());
        check_pencil(v.len(), pencil, 1)?;
        let svd = hankel_svd(v, pencil);
        let k = match rule {
            OrderRule::Known => known_k,
            OrderRule::Threshold(db) => select_order(&svd.singular_values, db),
        }
        .clamp(1, pencil);
        check_pencil(v.len(), pencil, k)?;
        self.solve(v.len(), &svd, k, pencil)
    }

    fn solve(&self, n: usize, svd: &HankelSvd, k: usize, pencil: usize) -> Result<DelayEstimates> {
        let top = svd.singular_values.first().copied().unwrap_or(0.0);
        let significant = svd.singular_values.iter().filter(|&&s| s > top * RANK_TOL && s > 0.0).count();
        if significant < k {
            return Err(Error::RankDeficient { significant, requested: k });
        }
        // Signal row space of V^H: A1 drops the last column, A2 the first.
        // A2 = T D T^-1 A1, so the pencil poles are eig(A2 A1^H (A1 A1^H)^-1).
        let a = svd.right.rows(0, k);
        let a1 = a.columns(0, pencil).into_owned();
        let a2 = a.columns(1, pencil).into_owned();
        let gram = &a1 * a1.adjoint();
        let cross = &a2 * a1.adjoint();
        let reduced = gram.lu().solve(&cross).ok_or(Error::RankDeficient { significant, requested: k })?;
        let poles = reduced.schur().eigenvalues().ok_or(Error::RankDeficient { significant, requested: k })?;

        let period = self.subcarrier_spacing.recip();
        let half_bin = 0.5 / (n as f64 * self.subcarrier_spacing);
        let mut delays: Vec<f64> = poles
            .iter()
            .filter_map(|z| {
                let mut tau = -z.arg() / (2.0 * PI * self.subcarrier_spacing);
                if tau < 0.0 {
                    tau += period;
                }
                match &self.roi {
                    None => Some(tau),
                    Some(roi) => [tau, tau - period]
                        .into_iter()
                        .find(|&t| t >= roi.tau_min - half_bin && t <= roi.tau_max + half_bin),
                }
            })
            .collect();
        delays.sort_by(f64::total_cmp);
        let delays = merge_close(delays, half_bin);
        Ok(DelayEstimates { k_hat: k, delays, pencil_param: pencil })
    }
}

/// Merges ascending delays closer than `gap` into their mean.
fn merge_close(sorted: Vec<f64>, gap: f64) -> Vec<f64> {
    let mut out: Vec<(f64, usize)> = Vec::with_capacity(sorted.len());
    for t in sorted {
        match out.last_mut() {
            Some((sum, count)) if t - *sum / *count as f64 <= gap => {
                *sum += t;
                *count += 1;
            }
            _ => out.push((t, 1)),
        }
    }
    out.into_iter().map(|(s, c)| s / c as f64).collect()
}

/// Free-function form of [`MatrixPencil::estimate`].
pub fn matrix_pencil(
    v: &[Complex64],
    k: usize,
    pencil_l: usize,
    subcarrier_spacing: f64,
    roi: Option<DelayWindow>,
) -> Result<DelayEstimates> {
    let mp = MatrixPencil { subcarrier_spacing, roi, pencil_l: Some(pencil_l) };
    mp.estimate(v, k)
}

/// Per-truth squared range errors; `None` marks a miss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub squared_errors_m2: Vec<Option<f64>>,
}

impl Association {
    pub fn misses(&self) -> usize {
        self.squared_errors_m2.iter().filter(|e| e.is_none()).count()
    }

    pub fn scored(&self) -> impl Iterator<Item = f64> + '_ {
        self.squared_errors_m2.iter().flatten().copied()
    }
}

/// Greedy nearest-neighbour truth/estimate pairing without reuse: the
/// globally closest pair is taken first. Unpaired truths are misses.
pub fn associate_and_score(estimates: &DelayEstimates, truth: &[f64]) -> Association {
    let est = estimates.ranges();
    let truth_m: Vec<f64> = truth.iter().map(|&t| delay_to_range(t)).collect();
    let mut pairs: Vec<(f64, usize, usize)> = truth_m
        .iter()
        .enumerate()
        .flat_map(|(i, t)| est.iter().enumerate().map(move |(j, e)| ((t - e).abs(), i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut errors = vec![None; truth.len()];
    let mut used = vec![false; est.len()];
    for (d, i, j) in pairs {
        if errors[i].is_none() && !used[j] {
            errors[i] = Some(d * d);
            used[j] = true;
        }
    }
    Association { squared_errors_m2: errors }
}
