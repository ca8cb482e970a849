//! Modulation constellations, payload symbol blocks, and the constellation
//! moments that drive the closed-form MSE expressions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One APSK ring: `count` points at `radius`, rotated by `phase_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApskRing {
    pub radius: f64,
    pub count: usize,
    pub phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstellationKind {
    Qpsk,
    Qam16,
    Qam32,
    Qam64,
    Qam128,
    Qam256,
    Apsk(Vec<ApskRing>),
}

impl ConstellationKind {
    /// The six built-in formats, in modulation-order order.
    pub fn builtin() -> Vec<ConstellationKind> {
        use ConstellationKind::*;
        vec![Qpsk, Qam16, Qam32, Qam64, Qam128, Qam256]
    }
}

impl fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstellationKind::Qpsk => f.write_str("qpsk"),
            ConstellationKind::Qam16 => f.write_str("16qam"),
            ConstellationKind::Qam32 => f.write_str("32qam"),
            ConstellationKind::Qam64 => f.write_str("64qam"),
            ConstellationKind::Qam128 => f.write_str("128qam"),
            ConstellationKind::Qam256 => f.write_str("256qam"),
            ConstellationKind::Apsk(rings) => {
                f.write_str("apsk:")?;
                for (i, r) in rings.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{}x{}@{}", r.radius, r.count, r.phase_deg)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for ConstellationKind {
    type Err = Error;

    /// Accepts `qpsk`, `16qam` .. `256qam`, or `apsk:r1xn1@p1+r2xn2@p2+...`
    /// (phase in degrees, `@p` optional).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "qpsk" | "4qam" => ConstellationKind::Qpsk,
            "16qam" => ConstellationKind::Qam16,
            "32qam" => ConstellationKind::Qam32,
            "64qam" => ConstellationKind::Qam64,
            "128qam" => ConstellationKind::Qam128,
            "256qam" => ConstellationKind::Qam256,
            other => {
                let Some(spec) = other.strip_prefix("apsk:") else {
                    return Err(Error::UnknownKind(s.to_string()));
                };
                ConstellationKind::Apsk(parse_apsk(spec)?)
            }
        };
        Ok(kind)
    }
}

fn parse_apsk(spec: &str) -> Result<Vec<ApskRing>> {
    let bad = |what: &str| Error::InvalidConstellation(format!("APSK spec `{spec}`: {what}"));
    let mut rings = Vec::new();
    for ring in spec.split('+').map(str::trim).filter(|r| !r.is_empty()) {
        let (body, phase) = match ring.split_once('@') {
            Some((b, p)) => (b, p.parse::<f64>().map_err(|_| bad("bad phase"))?),
            None => (ring, 0.0),
        };
        let (r, n) = body.split_once('x').ok_or_else(|| bad("expected RxN"))?;
        rings.push(ApskRing {
            radius: r.parse().map_err(|_| bad("bad radius"))?,
            count: n.parse().map_err(|_| bad("bad point count"))?,
            phase_deg: phase,
        });
    }
    if rings.is_empty() {
        return Err(bad("no rings"));
    }
    Ok(rings)
}

/// A zero-mean, unit-average-power constellation with uniform symbol
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub kind: ConstellationKind,
    pub points: Vec<Complex64>,
    pub is_constant_modulus: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationMoments {
    /// `E[|x|^4]`
    pub mu4: f64,
    /// `E[|x|^-2]`
    pub nu_minus2: f64,
    /// `E[(|x|^2 - 1)^2]`
    pub kappa2: f64,
}

/// Payload symbols for one OFDM block.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub symbols: Vec<Complex64>,
    pub block_normalized: bool,
}

impl SymbolBlock {
    /// Wraps raw symbols (e.g. recorded ones) without rescaling.
    pub fn new(symbols: Vec<Complex64>) -> Self {
        Self { symbols, block_normalized: false }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Rescales so that `sum |x_n|^2 = N`.
    pub fn normalized(mut self) -> Self {
        let energy = self.energy();
        if energy > 0.0 {
            let scale = (self.symbols.len() as f64 / energy).sqrt();
            self.symbols.iter_mut().for_each(|x| *x *= scale);
        }
        self.block_normalized = true;
        self
    }
}

const MIN_POINT_POWER: f64 = 1e-9;

fn square_grid(side: i32) -> Vec<Complex64> {
    let coords: Vec<f64> = (0..side).map(|i| (2 * i - side + 1) as f64).collect();
    coords.iter().flat_map(|&re| coords.iter().map(move |&im| Complex64::new(re, im))).collect()
}

/// Square grid with `corner x corner` blocks removed from each corner.
fn cross_grid(side: i32, corner: i32) -> Vec<Complex64> {
    let edge = (side - 1 - 2 * corner) as f64;
    square_grid(side).into_iter().filter(|p| !(p.re.abs() > edge && p.im.abs() > edge)).collect()
}

fn apsk_points(rings: &[ApskRing]) -> Result<Vec<Complex64>> {
    let mut points = Vec::new();
    for ring in rings {
        if !ring.radius.is_finite() || ring.radius <= 0.0 {
            return Err(Error::InvalidConstellation(format!("APSK ring radius {} must be positive", ring.radius)));
        }
        if ring.count < 2 {
            return Err(Error::InvalidConstellation(format!(
                "APSK ring with {} point(s) cannot be zero-mean",
                ring.count
            )));
        }
        let offset = ring.phase_deg.to_radians();
        points.extend(
            (0..ring.count)
                .map(|i| Complex64::from_polar(ring.radius, offset + 2.0 * PI * i as f64 / ring.count as f64)),
        );
    }
    Ok(points)
}

/// Builds and power-normalises a constellation.
///
/// Square QAM uses the regular odd-integer grid; 32- and 128-QAM use the
/// standard cross layouts (6x6 minus 1x1 corners, 12x12 minus 2x2 corners).
pub fn make_constellation(kind: &ConstellationKind) -> Result<Constellation> {
    let raw = match kind {
        ConstellationKind::Qpsk => square_grid(2),
        ConstellationKind::Qam16 => square_grid(4),
        ConstellationKind::Qam32 => cross_grid(6, 1),
        ConstellationKind::Qam64 => square_grid(8),
        ConstellationKind::Qam128 => cross_grid(12, 2),
        ConstellationKind::Qam256 => square_grid(16),
        ConstellationKind::Apsk(rings) => apsk_points(rings)?,
    };
    let q = raw.len() as f64;
    let mean: Complex64 = raw.iter().sum::<Complex64>() / q;
    let power = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / q;
    if mean.norm() > 1e-12 * power.sqrt() {
        return Err(Error::InvalidConstellation(format!("non-zero mean {mean}")));
    }
    let scale = power.sqrt().recip();
    let points: Vec<Complex64> = raw.iter().map(|p| p * scale).collect();
    if let Some(p) = points.iter().find(|p| p.norm_sqr() < MIN_POINT_POWER) {
        return Err(Error::InvalidConstellation(format!("near-zero point {p}")));
    }
    let first = points[0].norm_sqr();
    let is_constant_modulus = points.iter().all(|p| (p.norm_sqr() - first).abs() <= 1e-12);
    Ok(Constellation { kind: kind.clone(), points, is_constant_modulus })
}

impl Constellation {
    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn moments(&self) -> ConstellationMoments {
        moments(self)
    }
}

/// Exact moments over the (uniformly weighted) point list.
pub fn moments(c: &Constellation) -> ConstellationMoments {
    let q = c.points.len() as f64;
    let (mut mu4, mut nu, mut kappa) = (0.0, 0.0, 0.0);
    for p in &c.points {
        let a = p.norm_sqr();
        mu4 += a * a;
        nu += a.recip();
        kappa += (a - 1.0) * (a - 1.0);
    }
    ConstellationMoments { mu4: mu4 / q, nu_minus2: nu / q, kappa2: kappa / q }
}

/// Draws `n` i.i.d. uniform symbols, optionally rescaled to `||x||^2 = n`.
pub fn draw_block<R: Rng + ?Sized>(c: &Constellation, n: usize, rng: &mut R, block_normalize: bool) -> SymbolBlock {
    let symbols = (0..n).map(|_| c.points[rng.gen_range(0..c.points.len())]).collect();
    let block = SymbolBlock::new(symbols);
    if block_normalize {
        block.normalized()
    } else {
        block
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(kind: ConstellationKind) -> Constellation {
        make_constellation(&kind).unwrap()
    }

    #[test]
    fn qpsk_points_on_diagonals() {
        let c = build(ConstellationKind::Qpsk);
        assert_eq!(c.order(), 4);
        assert!(c.is_constant_modulus);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for p in &c.points {
            assert!((p.re.abs() - h).abs() < 1e-15 && (p.im.abs() - h).abs() < 1e-15);
        }
    }

    #[test]
    fn qam16_power_levels() {
        // Grid {±1,±3}^2 has mean power 10, so levels are 2/10, 10/10, 18/10.
        let c = build(ConstellationKind::Qam16);
        let mut levels: Vec<f64> = c.points.iter().map(|p| p.norm_sqr()).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(levels.len(), 3);
        for (got, want) in levels.iter().zip([0.2, 1.0, 1.8]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn builtin_orders_and_normalisation() {
        for (kind, q) in ConstellationKind::builtin().into_iter().zip([4, 16, 32, 64, 128, 256]) {
            let c = build(kind.clone());
            assert_eq!(c.order(), q, "{kind}");
            let mean: Complex64 = c.points.iter().sum::<Complex64>() / q as f64;
            let power: f64 = c.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / q as f64;
            assert!(mean.norm() < 1e-12);
            assert!((power - 1.0).abs() < 1e-12);
            assert_eq!(c.is_constant_modulus, q == 4);
        }
    }

    #[test]
    fn single_ring_apsk_is_psk() {
        let kind: ConstellationKind = "apsk:2x8@0".parse().unwrap();
        let c = build(kind);
        assert_eq!(c.order(), 8);
        assert!(c.is_constant_modulus);
        assert!(c.points.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn apsk_rejects_bad_rings() {
        assert!(matches!(
            "apsk:0x8".parse::<ConstellationKind>().map(|k| make_constellation(&k)),
            Ok(Err(Error::InvalidConstellation(_)))
        ));
        assert!(make_constellation(&"apsk:1x1".parse().unwrap()).is_err());
        assert!("apsk:".parse::<ConstellationKind>().is_err());
        assert!("apsk:1y4".parse::<ConstellationKind>().is_err());
        assert!(matches!("8psk".parse::<ConstellationKind>(), Err(Error::UnknownKind(_))));
    }

    #[test]
    fn kind_labels_round_trip() {
        let mut kinds = ConstellationKind::builtin();
        kinds.push("apsk:1x4@45+2.5x12@15+4.3x16".parse().unwrap());
        for k in kinds {
            assert_eq!(k.to_string().parse::<ConstellationKind>().unwrap(), k);
        }
    }

    #[test]
    fn moments_reference_values() {
        // Frozen from an independent enumeration of the normalised grids.
        let table = [
            (ConstellationKind::Qpsk, 1.0, 1.0),
            (ConstellationKind::Qam16, 1.32, 17.0 / 9.0),
            (ConstellationKind::Qam32, 1.31, 2.228255404725993),
            (ConstellationKind::Qam64, 29.0 / 21.0, 2.685417076573263),
            (ConstellationKind::Qam128, 1.3426531826293866, 2.9753762249153306),
            (ConstellationKind::Qam256, 1.3952941176470586, 3.43713004025605),
        ];
        for (kind, mu4, nu) in table {
            let m = build(kind.clone()).moments();
            assert!((m.mu4 - mu4).abs() < 1e-12, "{kind}: mu4 {}", m.mu4);
            assert!((m.nu_minus2 - nu).abs() < 1e-12, "{kind}: nu {}", m.nu_minus2);
            assert!((m.kappa2 - (m.mu4 - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn qam64_matches_printed_mf_efficiency() {
        let m = build(ConstellationKind::Qam64).moments();
        assert!(((1.0 + (m.mu4 - 1.0) * 10.0).sqrt() - 2.193).abs() < 5e-4);
    }

    #[test]
    fn kappa2_grows_with_order_but_stays_bounded() {
        let k: Vec<f64> = [ConstellationKind::Qam16, ConstellationKind::Qam64, ConstellationKind::Qam256]
            .into_iter()
            .map(|c| build(c).moments().kappa2)
            .collect();
        assert!(k[0] < k[1] && k[1] < k[2] && k[2] < 0.40);
    }

    #[test]
    fn draw_block_is_deterministic_and_normalised() {
        let c = build(ConstellationKind::Qam16);
        let a = draw_block(&c, 256, &mut ChaCha8Rng::seed_from_u64(9), true);
        let b = draw_block(&c, 256, &mut ChaCha8Rng::seed_from_u64(9), true);
        assert_eq!(a, b);
        assert!((a.energy() - 256.0).abs() < 1e-9);

        let q = draw_block(&build(ConstellationKind::Qpsk), 4, &mut ChaCha8Rng::seed_from_u64(1), true);
        assert!(q.symbols.iter().all(|x| (x.norm_sqr() - 1.0).abs() < 1e-12));
        assert!((q.energy() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unnormalised_blocks_are_raw_points() {
        let c = build(ConstellationKind::Qam64);
        let x = draw_block(&c, 64, &mut ChaCha8Rng::seed_from_u64(3), false);
        assert!(!x.block_normalized);
        assert!(x.symbols.iter().all(|s| c.points.contains(s)));
    }
}
