//! Receive filters: matched (MF), reciprocal (RF), and the region-of-interest
//! mismatched filter (ROI-MMF) with its Woodbury-reduced closed form.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::SymbolBlock;
use crate::dft;
use crate::error::{Error, Result};
use crate::signal::{delay_to_range, DelayWindow, OfdmNumerology, SymbolFrame};

/// Default ridge weight.
pub const DEFAULT_LAMBDA: f64 = 0.1;

const RF_MIN_MAGNITUDE: f64 = 1e-6;
const DEGENERATE_GAIN: f64 = 1e-9;

/// Bilateral shift set `{-M..-1} ∪ {1..M}` in delay-bin units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftSet {
    m_max: usize,
    shifts: Vec<i64>,
}

impl ShiftSet {
    /// Requires `1 <= m_max < n/2` so every shift is distinct modulo `n`.
    pub fn new(m_max: usize, n: usize) -> Result<Self> {
        if m_max == 0 || 2 * m_max >= n {
            return Err(Error::InvalidConfig(format!(
                "shift set M_max = {m_max} must satisfy 1 <= M_max < N/2 = {}",
                n as f64 / 2.0
            )));
        }
        let m = m_max as i64;
        let shifts = (-m..=-1).chain(1..=m).collect();
        Ok(Self { m_max, shifts })
    }

    /// Shift set covering a range window: `M_max = round(max(|r_min|, |r_max|) / (c/2B))`.
    pub fn covering(roi: &DelayWindow, numerology: &OfdmNumerology) -> Result<Self> {
        let (r_min, r_max) = roi.range_bounds();
        let reach = r_min.abs().max(r_max.abs());
        let bins = (reach / numerology.range_bin()).round().max(1.0) as usize;
        Self::new(bins, numerology.n_subcarriers)
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn shifts(&self) -> &[i64] {
        &self.shifts
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    /// Range in metres spanned by the largest shift.
    pub fn reach_m(&self, numerology: &OfdmNumerology) -> f64 {
        delay_to_range(self.m_max as f64 / numerology.bandwidth())
    }

    fn check_fits(&self, n: usize) -> Result<()> {
        if 2 * self.m_max >= n {
            return Err(Error::InvalidConfig(format!("shift set M_max = {} too large for N = {n}", self.m_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterKind {
    #[serde(rename = "mf")]
    Mf,
    #[serde(rename = "rf")]
    Rf,
    #[serde(rename = "roi")]
    RoiMmf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Mf, FilterKind::Rf, FilterKind::RoiMmf];
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Mf => "mf",
            FilterKind::Rf => "rf",
            FilterKind::RoiMmf => "roi",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mf" => Ok(FilterKind::Mf),
            "rf" => Ok(FilterKind::Rf),
            "roi" | "roi-mmf" | "roimmf" => Ok(FilterKind::RoiMmf),
            other => Err(Error::InvalidConfig(format!("unknown filter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDiagnostics {
    pub rho_s: f64,
    /// `||Z^H w||^2`
    pub sidelobe_energy: f64,
    /// `||w||^2`
    pub filter_norm_sq: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveFilter {
    pub taps: Vec<Complex64>,
    pub kind: FilterKind,
    pub diagnostics: Option<FilterDiagnostics>,
}

impl ReceiveFilter {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `w^H x`
    pub fn gain(&self, x: &SymbolBlock) -> Complex64 {
        self.taps.iter().zip(&x.symbols).map(|(w, x)| w.conj() * x).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.taps.iter().map(|w| w.norm_sqr()).sum()
    }
}

/// ROI-MMF design parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDesign {
    pub shift_set: ShiftSet,
    pub lambda: f64,
}

pub fn mf_filter(x: &SymbolBlock) -> ReceiveFilter {
    ReceiveFilter { taps: x.symbols.clone(), kind: FilterKind::Mf, diagnostics: None }
}

pub fn rf_filter(x: &SymbolBlock) -> Result<ReceiveFilter> {
    let taps = x
        .symbols
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let magnitude = s.norm();
            if magnitude <= RF_MIN_MAGNITUDE {
                Err(Error::NearZeroSymbol { index, magnitude })
            } else {
                Ok(s.conj().inv())
            }
        })
        .collect::<Result<_>>()?;
    Ok(ReceiveFilter { taps, kind: FilterKind::Rf, diagnostics: None })
}

/// `P[m] = sum_n |x_n|^2 exp(-j 2 pi m n / N)`; every entry of `Z^H Z` and
/// `Z^H x` is a sample of this sequence.
fn power_spectrum(x: &[Complex64]) -> Vec<Complex64> {
    let mut p: Vec<Complex64> = x.iter().map(|s| Complex64::new(s.norm_sqr(), 0.0)).collect();
    dft::forward(&mut p);
    p
}

/// `Z^H Z` and `Z^H x` from one length-N FFT.
pub fn gram_fft(x: &SymbolBlock, s: &ShiftSet) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let n = x.len();
    let p = power_spectrum(&x.symbols);
    let shifts = s.shifts();
    let gram = DMatrix::from_fn(shifts.len(), shifts.len(), |i, j| p[dft::wrap_bin(shifts[i] - shifts[j], n)]);
    let q = DVector::from_iterator(shifts.len(), shifts.iter().map(|&m| p[dft::wrap_bin(m, n)]));
    (gram, q)
}

/// Explicit off-target steering matrix `Z = [x ⊙ e_m]`, `[e_m]_n = exp(j 2 pi m n / N)`.
pub fn off_target_matrix(x: &SymbolBlock, s: &ShiftSet) -> DMatrix<Complex64> {
    let n = x.len();
    let shifts = s.shifts();
    DMatrix::from_fn(n, shifts.len(), |row, col| {
        let phase = 2.0 * std::f64::consts::PI * ((shifts[col] * row as i64).rem_euclid(n as i64)) as f64 / n as f64;
        x.symbols[row] * Complex64::from_polar(1.0, phase)
    })
}

/// `Z^H Z` and `Z^H x` by explicit products.
pub fn gram_explicit(x: &SymbolBlock, s: &ShiftSet) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let z = off_target_matrix(x, s);
    let xv = DVector::from_column_slice(&x.symbols);
    (z.adjoint() * &z, z.adjoint() * xv)
}

/// Sidelobe energy `||Z^H w||^2 = sum_{m in S} |z_m^H w|^2`.
pub fn sidelobe_energy(taps: &[Complex64], x: &SymbolBlock, s: &ShiftSet) -> f64 {
    let n = x.len();
    let mut v: Vec<Complex64> = x.symbols.iter().zip(taps).map(|(x, w)| x.conj() * w).collect();
    dft::forward(&mut v);
    s.shifts().iter().map(|&m| v[dft::wrap_bin(m, n)].norm_sqr()).sum()
}

fn check_design(x: &SymbolBlock, s: &ShiftSet, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda = {lambda} must be positive")));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("symbol block"));
    }
    s.check_fits(x.len())
}

fn normalise(x: &SymbolBlock, mut taps: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let n = x.len() as f64;
    let gain: Complex64 = taps.iter().zip(&x.symbols).map(|(w, x)| w.conj() * x).sum();
    if gain.norm() < DEGENERATE_GAIN * n {
        return Err(Error::DegenerateGain { gain: gain.norm() });
    }
    // w = N w~ / conj(w~^H x) gives w^H x = N exactly even when rounding
    // leaves a tiny imaginary part in w~^H x.
    let scale = n / gain.conj();
    taps.iter_mut().for_each(|w| *w *= scale);
    Ok(taps)
}

/// ROI mismatched filter via the `|S| x |S|` Woodbury system.
///
/// Solves `(λI + Z^H Z) u = Z^H x`, forms `w~ = (x - Z u)/λ` and rescales to
/// `w^H x = N`. `Z^H Z` and `Z^H x` come from the DFT of `|x_n|^2`, and `Z u`
/// is a single inverse FFT, so the cost is `O(N log N + |S|^3)`.
pub fn roi_mmf(x: &SymbolBlock, s: &ShiftSet, lambda: f64) -> Result<ReceiveFilter> {
    check_design(x, s, lambda)?;
    let n = x.len();
    let (mut system, q) = gram_fft(x, s);
    for i in 0..s.len() {
        system[(i, i)] += lambda;
    }
    let chol = Cholesky::new(system).ok_or(Error::SingularSystem(s.len()))?;
    let u = chol.solve(&q);

    let mut spread = vec![Complex64::new(0.0, 0.0); n];
    for (&m, ui) in s.shifts().iter().zip(u.iter()) {
        spread[dft::wrap_bin(m, n)] += ui;
    }
    dft::inverse(&mut spread);
    let inv_lambda = lambda.recip();
    let raw: Vec<Complex64> = x.symbols.iter().zip(&spread).map(|(x, zu)| (x - x * zu) * inv_lambda).collect();

    let rho_s = q.dotc(&u).re / n as f64;
    let taps = normalise(x, raw)?;
    let diagnostics = FilterDiagnostics {
        rho_s,
        sidelobe_energy: sidelobe_energy(&taps, x, s),
        filter_norm_sq: taps.iter().map(|w| w.norm_sqr()).sum(),
        lambda,
    };
    Ok(ReceiveFilter { taps, kind: FilterKind::RoiMmf, diagnostics: Some(diagnostics) })
}

/// Reference solver: `(Z Z^H + λ I_N) w~ = x` at full size `N`.
///
/// `O(N^2 |S| + N^3)`; kept as an independent check on [`roi_mmf`].
pub fn roi_mmf_direct(x: &SymbolBlock, s: &ShiftSet, lambda: f64) -> Result<ReceiveFilter> {
    check_design(x, s, lambda)?;
    let n = x.len();
    let z = off_target_matrix(x, s);
    let mut system = &z * z.adjoint();
    for i in 0..n {
        system[(i, i)] += lambda;
    }
    let chol = Cholesky::new(system).ok_or(Error::SingularSystem(n))?;
    let raw = chol.solve(&DVector::from_column_slice(&x.symbols));
    let raw: Vec<Complex64> = raw.iter().copied().collect();

    // w~^H x = (||x||^2 - N rho_S) / λ
    let gain: Complex64 = raw.iter().zip(&x.symbols).map(|(w, x)| w.conj() * x).sum();
    let rho_s = (x.energy() - lambda * gain.re) / n as f64;
    let taps = normalise(x, raw)?;
    let diagnostics = FilterDiagnostics {
        rho_s,
        sidelobe_energy: sidelobe_energy(&taps, x, s),
        filter_norm_sq: taps.iter().map(|w| w.norm_sqr()).sum(),
        lambda,
    };
    Ok(ReceiveFilter { taps, kind: FilterKind::RoiMmf, diagnostics: Some(diagnostics) })
}

/// Designs a filter of the requested kind for one transmit block.
pub fn design_filter(kind: FilterKind, x: &SymbolBlock, design: &FilterDesign) -> Result<ReceiveFilter> {
    match kind {
        FilterKind::Mf => Ok(mf_filter(x)),
        FilterKind::Rf => rf_filter(x),
        FilterKind::RoiMmf => roi_mmf(x, &design.shift_set, design.lambda),
    }
}

/// `y_out[n] = conj(w[n]) * y[n]`.
pub fn apply_filter(w: &ReceiveFilter, frame: &SymbolFrame) -> Result<Vec<Complex64>> {
    if w.len() != frame.rx.len() {
        return Err(Error::LengthMismatch { expected: w.len(), got: frame.rx.len() });
    }
    Ok(w.taps.iter().zip(&frame.rx).map(|(w, y)| w.conj() * y).collect())
}

/// `c_m = (1/N) sum_n conj(w_n) x_n exp(j 2 pi m n / N)` for each `m` in `m_range`.
pub fn sidelobe_coeffs(w: &ReceiveFilter, x: &SymbolBlock, m_range: RangeInclusive<i64>) -> Result<Vec<Complex64>> {
    let n = x.len();
    if w.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: w.len() });
    }
    let half = n as i64;
    if 2 * m_range.start().abs() >= half || 2 * m_range.end().abs() >= half {
        return Err(Error::InvalidConfig(format!("shift range {m_range:?} outside (-N/2, N/2)")));
    }
    let mut g: Vec<Complex64> = w.taps.iter().zip(&x.symbols).map(|(w, x)| w.conj() * x).collect();
    dft::inverse(&mut g);
    let scale = (n as f64).recip();
    Ok(m_range.map(|m| g[dft::wrap_bin(m, n)] * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{draw_block, make_constellation, ConstellationKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block(kind: ConstellationKind, n: usize, seed: u64) -> SymbolBlock {
        let c = make_constellation(&kind).unwrap();
        draw_block(&c, n, &mut ChaCha8Rng::seed_from_u64(seed), true)
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = b.iter().map(|b| b.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn shift_set_shape() {
        let s = ShiftSet::new(3, 16).unwrap();
        assert_eq!(s.shifts(), &[-3, -2, -1, 1, 2, 3]);
        assert_eq!(s.len(), 6);
        assert!(ShiftSet::new(8, 16).is_err());
        assert!(ShiftSet::new(0, 16).is_err());
    }

    #[test]
    fn shift_set_covering_roi() {
        let num = OfdmNumerology::from_bandwidth(256, 50e6, 0.64e-6, 8);
        let roi = DelayWindow::from_ranges(0.0, 150.0).unwrap();
        assert_eq!(ShiftSet::covering(&roi, &num).unwrap().m_max(), 50);
        let wide = OfdmNumerology::from_bandwidth(512, 20e6, 6.4e-6, 1);
        let roi = DelayWindow::from_ranges(50.0, 250.0).unwrap();
        assert_eq!(ShiftSet::covering(&roi, &wide).unwrap().m_max(), 33);
    }

    #[test]
    fn filter_kind_parse() {
        for k in FilterKind::ALL {
            assert_eq!(k.to_string().parse::<FilterKind>().unwrap(), k);
        }
        assert!("xx".parse::<FilterKind>().is_err());
    }

    #[test]
    fn mf_examples() {
        let ones = SymbolBlock::new(vec![Complex64::new(1.0, 0.0); 8]);
        assert_eq!(mf_filter(&ones).taps, ones.symbols);
        let x = block(ConstellationKind::Qam16, 64, 1);
        let g = mf_filter(&x).gain(&x);
        assert!((g - Complex64::new(64.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn rf_examples() {
        let x = SymbolBlock::new(vec![Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.0)]);
        let w = rf_filter(&x).unwrap();
        assert_eq!(w.taps, vec![Complex64::new(0.5, 0.0), Complex64::new(2.0, 0.0)]);

        let q = block(ConstellationKind::Qpsk, 32, 2);
        assert!(rel_err(&rf_filter(&q).unwrap().taps, &q.symbols) < 1e-15);

        let x = block(ConstellationKind::Qam256, 128, 3);
        let g = rf_filter(&x).unwrap().gain(&x);
        assert!((g - Complex64::new(128.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rf_rejects_near_zero_symbol() {
        let x = SymbolBlock::new(vec![Complex64::new(1.0, 0.0), Complex64::new(1e-7, 0.0)]);
        assert!(matches!(rf_filter(&x), Err(Error::NearZeroSymbol { index: 1, .. })));
    }

    #[test]
    fn roi_mmf_collapses_for_psk() {
        let x = block(ConstellationKind::Qpsk, 128, 4);
        for (m, lambda) in [(5, 0.1), (30, 3.0)] {
            let w = roi_mmf(&x, &ShiftSet::new(m, 128).unwrap(), lambda).unwrap();
            assert!(rel_err(&w.taps, &x.symbols) < 1e-12);
            let d = w.diagnostics.unwrap();
            assert!(d.rho_s.abs() < 1e-12);
            assert!(d.sidelobe_energy < 1e-18 * 128.0 * 128.0);
        }
    }

    #[test]
    fn gain_constraint_holds() {
        for kind in ConstellationKind::builtin() {
            let x = block(kind, 256, 5);
            let w = roi_mmf(&x, &ShiftSet::new(50, 256).unwrap(), 0.1).unwrap();
            let g = w.gain(&x);
            assert!((g - Complex64::new(256.0, 0.0)).norm() < 1e-8 * 256.0);
        }
    }

    #[test]
    fn gram_paths_agree() {
        for kind in [ConstellationKind::Qam16, ConstellationKind::Qam128] {
            let x = block(kind, 64, 6);
            let s = ShiftSet::new(12, 64).unwrap();
            let (g1, q1) = gram_fft(&x, &s);
            let (g2, q2) = gram_explicit(&x, &s);
            assert!((&g1 - &g2).norm() < 1e-10 * g2.norm());
            assert!((&q1 - &q2).norm() < 1e-10 * q2.norm().max(1.0));
        }
    }

    #[test]
    fn woodbury_matches_direct_small() {
        let x = block(ConstellationKind::Qam16, 16, 7);
        let s = ShiftSet::new(2, 16).unwrap();
        let a = roi_mmf(&x, &s, 0.1).unwrap();
        let b = roi_mmf_direct(&x, &s, 0.1).unwrap();
        assert!(rel_err(&a.taps, &b.taps) < 1e-8);
        let (da, db) = (a.diagnostics.unwrap(), b.diagnostics.unwrap());
        assert!((da.rho_s - db.rho_s).abs() < 1e-10);

        let q = block(ConstellationKind::Qpsk, 32, 8);
        let d = roi_mmf_direct(&q, &ShiftSet::new(6, 32).unwrap(), 0.1).unwrap();
        assert!(rel_err(&d.taps, &q.symbols) < 1e-10);
    }

    #[test]
    fn energy_identity_and_bounds() {
        for kind in ConstellationKind::builtin() {
            for (n, m) in [(64, 10), (256, 50)] {
                let x = block(kind.clone(), n, 9);
                let w = roi_mmf(&x, &ShiftSet::new(m, n).unwrap(), 0.1).unwrap();
                let d = w.diagnostics.unwrap();
                let nf = n as f64;
                let beta_n = nf * d.lambda / (1.0 - d.rho_s);
                let lhs = d.sidelobe_energy + d.lambda * d.filter_norm_sq;
                assert!((lhs - beta_n).abs() <= 1e-6 * beta_n, "{kind}: {lhs} vs {beta_n}");
                assert!(d.sidelobe_energy <= beta_n + 1e-6);
                assert!(d.filter_norm_sq <= nf / (1.0 - d.rho_s) + 1e-6);
                assert!((0.0..1.0).contains(&d.rho_s));
            }
        }
    }

    #[test]
    fn sidelobe_coefficients() {
        let x = block(ConstellationKind::Qam16, 256, 10);
        let s = ShiftSet::new(50, 256).unwrap();
        let w = roi_mmf(&x, &s, 0.1).unwrap();
        let c = sidelobe_coeffs(&w, &x, -50..=50).unwrap();
        assert!((c[50] - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        let in_set: f64 = c.iter().enumerate().filter(|&(i, _)| i != 50).map(|(_, c)| c.norm_sqr()).sum();
        let d = w.diagnostics.unwrap();
        assert!((256.0 * 256.0 * in_set - d.sidelobe_energy).abs() <= 1e-8 * d.sidelobe_energy);
        assert!(in_set <= d.lambda / (256.0 * (1.0 - d.rho_s)));

        let q = block(ConstellationKind::Qpsk, 64, 11);
        let c = sidelobe_coeffs(&mf_filter(&q), &q, -31..=31).unwrap();
        for (i, c) in c.iter().enumerate() {
            let want = if i == 31 { 1.0 } else { 0.0 };
            assert!((c - Complex64::new(want, 0.0)).norm() < 1e-12);
        }
        assert!(sidelobe_coeffs(&mf_filter(&q), &q, -32..=0).is_err());
    }

    #[test]
    fn lambda_trades_sidelobes_for_norm() {
        let x = block(ConstellationKind::Qam64, 256, 12);
        let s = ShiftSet::new(50, 256).unwrap();
        let d: Vec<FilterDiagnostics> =
            [0.01, 1.0, 100.0].iter().map(|&l| roi_mmf(&x, &s, l).unwrap().diagnostics.unwrap()).collect();
        for pair in d.windows(2) {
            assert!(pair[1].sidelobe_energy >= pair[0].sidelobe_energy);
            assert!(pair[1].filter_norm_sq <= pair[0].filter_norm_sq);
        }
    }

    #[test]
    fn roi_mmf_rejects_bad_inputs() {
        let x = block(ConstellationKind::Qam16, 16, 13);
        assert!(roi_mmf(&x, &ShiftSet::new(2, 16).unwrap(), 0.0).is_err());
        assert!(roi_mmf(&x, &ShiftSet::new(10, 64).unwrap(), 0.1).is_err());
    }

    #[test]
    fn apply_filter_examples() {
        let x = block(ConstellationKind::Qam16, 32, 14);
        let frame = SymbolFrame::new(x.clone(), vec![Complex64::new(0.0, 0.0); 32]).unwrap();
        assert!(apply_filter(&mf_filter(&x), &frame).unwrap().iter().all(|v| v.norm() == 0.0));
        let short = SymbolFrame { tx: x.clone(), rx: vec![Complex64::new(0.0, 0.0); 31] };
        assert!(matches!(apply_filter(&mf_filter(&x), &short), Err(Error::LengthMismatch { .. })));
    }
}
