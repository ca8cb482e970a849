//! Per-symbol filtering of a CPI and the range-profile views built on it.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{average_cpi, profile_magnitudes, RangeProfile};
use crate::filterbank::{apply_filter, design_filter, FilterDesign, FilterKind};
use crate::signal::{OfdmNumerology, SymbolFrame};

/// Coherently averaged filter output of one CPI.
#[derive(Debug, Clone, PartialEq)]
pub struct CpiOutput {
    pub averaged: Vec<Complex64>,
    /// Mean `rho_S` over the per-symbol ROI-MMF designs.
    pub mean_rho_s: Option<f64>,
}

/// Designs one filter per symbol (each symbol carries its own payload) and
/// returns the filtered outputs.
pub fn filter_symbols(
    frames: &[SymbolFrame],
    kind: FilterKind,
    design: &FilterDesign,
) -> Result<(Vec<Vec<Complex64>>, Option<f64>)> {
    let mut outputs = Vec::with_capacity(frames.len());
    let mut rho = Vec::new();
    for frame in frames {
        let w = design_filter(kind, &frame.tx, design)?;
        if let Some(d) = w.diagnostics {
            rho.push(d.rho_s);
        }
        outputs.push(apply_filter(&w, frame)?);
    }
    let mean_rho_s = (!rho.is_empty()).then(|| rho.iter().sum::<f64>() / rho.len() as f64);
    Ok((outputs, mean_rho_s))
}

pub fn coherent_output(frames: &[SymbolFrame], kind: FilterKind, design: &FilterDesign) -> Result<CpiOutput> {
    let (outputs, mean_rho_s) = filter_symbols(frames, kind, design)?;
    Ok(CpiOutput { averaged: average_cpi(&outputs)?, mean_rho_s })
}

/// Normalised MF / RF / ROI-MMF profiles on a shared range axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub range_m: Vec<f64>,
    pub mag_db_mf: Vec<f64>,
    pub mag_db_rf: Vec<f64>,
    pub mag_db_roi: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    range_m: f64,
    mag_db_mf: f64,
    mag_db_rf: f64,
    mag_db_roi: f64,
}

impl ProfileSet {
    fn from_profiles(mf: RangeProfile, rf: RangeProfile, roi: RangeProfile) -> Self {
        Self {
            range_m: mf.ranges,
            mag_db_mf: mf.magnitude_db,
            mag_db_rf: rf.magnitude_db,
            mag_db_roi: roi.magnitude_db,
        }
    }

    pub fn get(&self, kind: FilterKind) -> &[f64] {
        match kind {
            FilterKind::Mf => &self.mag_db_mf,
            FilterKind::Rf => &self.mag_db_rf,
            FilterKind::RoiMmf => &self.mag_db_roi,
        }
    }

    pub fn len(&self) -> usize {
        self.range_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range_m.is_empty()
    }

    /// CSV with columns `range_m,mag_db_mf,mag_db_rf,mag_db_roi`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.len() {
            w.serialize(ProfileRow {
                range_m: self.range_m[i],
                mag_db_mf: self.mag_db_mf[i],
                mag_db_rf: self.mag_db_rf[i],
                mag_db_roi: self.mag_db_roi[i],
            })
            .map_err(|e| Error::Serialization(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut set = ProfileSet { range_m: vec![], mag_db_mf: vec![], mag_db_rf: vec![], mag_db_roi: vec![] };
        for row in csv::Reader::from_reader(reader).deserialize::<ProfileRow>() {
            let row = row.map_err(|e| Error::Serialization(e.to_string()))?;
            set.range_m.push(row.range_m);
            set.mag_db_mf.push(row.mag_db_mf);
            set.mag_db_rf.push(row.mag_db_rf);
            set.mag_db_roi.push(row.mag_db_roi);
        }
        Ok(set)
    }

    /// Largest absolute dB difference to `other` (infinite if shapes differ).
    pub fn max_abs_diff(&self, other: &ProfileSet) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        let cols = [
            (&self.range_m, &other.range_m),
            (&self.mag_db_mf, &other.mag_db_mf),
            (&self.mag_db_rf, &other.mag_db_rf),
            (&self.mag_db_roi, &other.mag_db_roi),
        ];
        cols.iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() }))
            .fold(0.0, f64::max)
    }
}

/// Profiles of the coherently averaged CPI, one per filter.
pub fn coherent_profiles(
    frames: &[SymbolFrame],
    design: &FilterDesign,
    numerology: &OfdmNumerology,
    zero_pad_factor: usize,
) -> Result<ProfileSet> {
    let mut profiles = Vec::with_capacity(3);
    for kind in FilterKind::ALL {
        let out = coherent_output(frames, kind, design)?;
        profiles.push(crate::estimator::range_profile(&out.averaged, numerology, zero_pad_factor)?);
    }
    let roi = profiles.pop().unwrap();
    let rf = profiles.pop().unwrap();
    let mf = profiles.pop().unwrap();
    Ok(ProfileSet::from_profiles(mf, rf, roi))
}

/// Profiles whose linear magnitudes are averaged over every symbol of every
/// frame; no phase coherence is assumed between symbols or frames.
pub fn noncoherent_profiles(
    frames: &[Vec<SymbolFrame>],
    design: &FilterDesign,
    numerology: &OfdmNumerology,
    zero_pad_factor: usize,
) -> Result<ProfileSet> {
    if zero_pad_factor == 0 {
        return Err(Error::InvalidConfig("zero-pad factor must be >= 1".into()));
    }
    let n = numerology.n_subcarriers;
    let mut count = 0usize;
    let mut acc = [vec![0.0; n * zero_pad_factor], vec![0.0; n * zero_pad_factor], vec![0.0; n * zero_pad_factor]];
    for frame in frames {
        for kind in FilterKind::ALL {
            let (outputs, _) = filter_symbols(frame, kind, design)?;
            let slot = &mut acc[kind as usize];
            for out in outputs {
                if out.len() != n {
                    return Err(Error::LengthMismatch { expected: n, got: out.len() });
                }
                slot.iter_mut().zip(profile_magnitudes(&out, zero_pad_factor)).for_each(|(a, m)| *a += m);
            }
        }
        count += frame.len();
    }
    if count == 0 {
        return Err(Error::EmptyInput("frames"));
    }
    let [mf, rf, roi] = acc.map(|mut a| {
        a.iter_mut().for_each(|m| *m /= count as f64);
        RangeProfile::from_magnitudes(&a, numerology, zero_pad_factor)
    });
    Ok(ProfileSet::from_profiles(mf, rf, roi))
}

/// Median dB level over profile cells inside `[r_min, r_max]` that are more
/// than `guard_m` from every target.
pub fn in_roi_sidelobe_median(
    range_m: &[f64],
    magnitude_db: &[f64],
    roi_m: (f64, f64),
    targets_m: &[f64],
    guard_m: f64,
) -> Option<f64> {
    let mut cells: Vec<f64> = range_m
        .iter()
        .zip(magnitude_db)
        .filter(|(r, _)| **r >= roi_m.0 && **r <= roi_m.1 && targets_m.iter().all(|t| (*r - t).abs() > guard_m))
        .map(|(_, m)| *m)
        .collect();
    if cells.is_empty() {
        return None;
    }
    cells.sort_by(f64::total_cmp);
    let mid = cells.len() / 2;
    Some(if cells.len().is_multiple_of(2) { 0.5 * (cells[mid - 1] + cells[mid]) } else { cells[mid] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{make_constellation, ConstellationKind};
    use crate::filterbank::ShiftSet;
    use crate::signal::{channel_response, make_frame_sequence, DelayWindow, Scatterer, SceneConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(noise_var: f64) -> SceneConfig {
        SceneConfig {
            numerology: OfdmNumerology::from_bandwidth(256, 50e6, 0.64e-6, 8),
            scatterers: vec![
                Scatterer::at_range(60.9, Complex64::from_polar(1.0, 0.2)),
                Scatterer::at_range(90.9, Complex64::from_polar(1.0, 2.1)),
            ],
            noise_var,
            roi: DelayWindow::from_ranges(0.0, 150.0).unwrap(),
        }
    }

    fn design() -> FilterDesign {
        FilterDesign { shift_set: ShiftSet::new(50, 256).unwrap(), lambda: 0.1 }
    }

    #[test]
    fn rf_average_is_pure_multitone() {
        let sc = scene(0.0);
        let c = make_constellation(&ConstellationKind::Qam64).unwrap();
        let frames = make_frame_sequence(&sc, &c, 8, true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let out = coherent_output(&frames, FilterKind::Rf, &design()).unwrap();
        let h = channel_response(&sc.scatterers, 256, sc.numerology.subcarrier_spacing);
        for (a, b) in out.averaged.iter().zip(&h) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(out.mean_rho_s.is_none());
        let roi = coherent_output(&frames, FilterKind::RoiMmf, &design()).unwrap();
        assert!(roi.mean_rho_s.unwrap() > 0.0);
    }

    #[test]
    fn psk_profiles_identical() {
        let sc = scene(0.0);
        let c = make_constellation(&ConstellationKind::Qpsk).unwrap();
        let frames = make_frame_sequence(&sc, &c, 4, true, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let p = coherent_profiles(&frames, &design(), &sc.numerology, 8).unwrap();
        for i in 0..p.len() {
            assert!((p.mag_db_mf[i] - p.mag_db_rf[i]).abs() < 1e-6);
            assert!((p.mag_db_mf[i] - p.mag_db_roi[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn profile_csv_round_trip() {
        let sc = scene(0.1);
        let c = make_constellation(&ConstellationKind::Qam16).unwrap();
        let frames = make_frame_sequence(&sc, &c, 2, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let p = noncoherent_profiles(&[frames], &design(), &sc.numerology, 2).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("range_m,mag_db_mf,mag_db_rf,mag_db_roi\n"));
        let back = ProfileSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.max_abs_diff(&p), 0.0);
    }

    #[test]
    fn median_helper() {
        let r = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let m = [-1.0, -2.0, 0.0, -3.0, -4.0, -9.0];
        assert_eq!(in_roi_sidelobe_median(&r, &m, (0.0, 4.0), &[2.0], 0.5), Some(-2.5));
        assert_eq!(in_roi_sidelobe_median(&r, &m, (10.0, 20.0), &[], 0.5), None);
    }
}
