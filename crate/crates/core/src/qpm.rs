//! Quasi-phase-matching response, poling defects, temporal walk-off and the
//! transform-limited duration of spectrally filtered pulses.
//!
//! Spectra are functions of the detuning `Δk` (rad/m) from the nominal
//! grating vector `K = 2π/Λ`. A poling map is a list of domains; in the
//! frame co-rotating with the nominal grating each domain `j` on `[a, b)`
//! acts as a constant complex coupling
//!
//! ```text
//! w_j = s_j · exp(iK(a+b)/2) · sinc(Kℓ_j/2),       ℓ_j = b − a
//! ```
//!
//! (its first-harmonic weight), and the SHG amplitude is the coherent sum
//!
//! ```text
//! A(Δk) = Σ_j w_j · (exp(iΔk·b) − exp(iΔk·a)) / (iΔk)
//! ```
//!
//! normalized by the perfectly poled peak `(2L/π)²`. A perfectly periodic
//! map has `w_j = 2i/π` for every domain and reproduces `sinc²(ΔkL/2)`.

use crate::rng::NormalStream;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Read;
use std::str::FromStr;
use thiserror::Error;

/// Speed of light in mm/ps.
pub const C_MM_PER_PS: f64 = 0.299_792_458;

#[derive(Debug, Error)]
pub enum QpmError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("poling map has no domains")]
    EmptyMap,
    #[error("domain {index} has non-positive length {length_um} um")]
    BadDomain { index: usize, length_um: f64 },
    #[error("detuning grid is not symmetric about zero")]
    AsymmetricGrid,
    #[error("dispersion table: {0}")]
    Dispersion(String),
    #[error("wavelength {wavelength_nm} nm outside the {band} band ({min_nm}..{max_nm} nm)")]
    OutOfRange {
        band: &'static str,
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },
    #[error("unknown filter shape {0:?} (expected gaussian or rectangular)")]
    UnknownShape(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

pub fn ideal_qpm_spectrum(delta_k: &[f64], length_m: f64) -> Result<Vec<f64>, QpmError> {
    if !(length_m > 0.0) {
        return Err(QpmError::InvalidParameter {
            name: "length_m",
            value: length_m,
            reason: "must be positive",
        });
    }
    Ok(delta_k
        .iter()
        .map(|dk| sinc(dk * length_m / 2.0).powi(2))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub length_um: f64,
    /// Sign of the nonlinearity, `+1` or `-1`.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolingMap {
    /// Nominal poling period; sets the grating vector the map is read against.
    pub period_um: f64,
    pub domains: Vec<Domain>,
}

/// Illustrative fabrication defects for [`PolingMap::with_defects`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolingDefects {
    /// Standard deviation of each domain wall's displacement, as a fraction
    /// of the period. Walls do not accumulate error.
    pub boundary_jitter: f64,
    /// Probability that a domain meant to be inverted stays unpoled.
    pub missing_flip_prob: f64,
}

impl PolingMap {
    /// Alternating domains of half a period, `+` first, filling `length_m`
    /// to the nearest whole domain.
    pub fn periodic(period_um: f64, length_m: f64) -> Self {
        let half = period_um / 2.0;
        let n = ((length_m * 1e6) / half).round().max(1.0) as usize;
        let domains = (0..n)
            .map(|j| Domain {
                length_um: half,
                sign: if j % 2 == 0 { 1 } else { -1 },
            })
            .collect();
        Self { period_um, domains }
    }

    /// A periodic map with seeded wall jitter and missing inversions. The
    /// outer walls stay fixed so the device length is unchanged.
    pub fn with_defects(
        period_um: f64,
        length_m: f64,
        defects: &PolingDefects,
        seed: u64,
    ) -> Result<Self, QpmError> {
        if !(defects.boundary_jitter >= 0.0) {
            return Err(QpmError::InvalidParameter {
                name: "boundary_jitter",
                value: defects.boundary_jitter,
                reason: "must be nonnegative",
            });
        }
        if !(0.0..=1.0).contains(&defects.missing_flip_prob) {
            return Err(QpmError::InvalidParameter {
                name: "missing_flip_prob",
                value: defects.missing_flip_prob,
                reason: "must lie in [0, 1]",
            });
        }
        let ideal = Self::periodic(period_um, length_m);
        let n = ideal.domains.len();
        let half = period_um / 2.0;
        // Walls may move at most 0.45 of a domain so every domain stays positive.
        let limit = 0.45 * half;
        let sigma = defects.boundary_jitter * period_um;
        let mut g = NormalStream::new(seed);
        let mut walls = Vec::with_capacity(n + 1);
        walls.push(0.0);
        for j in 1..n {
            let shift = (sigma * g.next_normal()).clamp(-limit, limit);
            walls.push(j as f64 * half + shift);
        }
        walls.push(n as f64 * half);
        let domains = (0..n)
            .map(|j| {
                let mut sign = ideal.domains[j].sign;
                if sign < 0 && g.next_uniform() < defects.missing_flip_prob {
                    sign = 1;
                }
                Domain {
                    length_um: walls[j + 1] - walls[j],
                    sign,
                }
            })
            .collect();
        Ok(Self { period_um, domains })
    }

    pub fn validate(&self) -> Result<(), QpmError> {
        if self.domains.is_empty() {
            return Err(QpmError::EmptyMap);
        }
        if !(self.period_um > 0.0) {
            return Err(QpmError::InvalidParameter {
                name: "period_um",
                value: self.period_um,
                reason: "must be positive",
            });
        }
        for (index, d) in self.domains.iter().enumerate() {
            if !(d.length_um > 0.0) {
                return Err(QpmError::BadDomain {
                    index,
                    length_um: d.length_um,
                });
            }
        }
        Ok(())
    }

    pub fn total_length_m(&self) -> f64 {
        self.domains.iter().map(|d| d.length_um).sum::<f64>() * 1e-6
    }

    /// Checks the map covers `length_m` to within one domain.
    pub fn matches_length(&self, length_m: f64) -> bool {
        let longest = self.domains.iter().map(|d| d.length_um).fold(0.0, f64::max);
        (self.total_length_m() - length_m).abs() * 1e6 <= longest
    }

    /// `(midpoint, length, weight)` per domain, positions in meters.
    fn couplings(&self) -> Vec<(f64, f64, Complex64)> {
        let k = 2.0 * PI / (self.period_um * 1e-6);
        let mut z = 0.0;
        self.domains
            .iter()
            .map(|d| {
                let len = d.length_um * 1e-6;
                let mid = z + len / 2.0;
                z += len;
                let w = Complex64::from_polar(f64::from(d.sign) * sinc(k * len / 2.0), k * mid);
                (mid, len, w)
            })
            .collect()
    }
}

pub fn defective_qpm_spectrum(map: &PolingMap, delta_k: &[f64]) -> Result<Vec<f64>, QpmError> {
    map.validate()?;
    let couplings = map.couplings();
    let norm = (2.0 * map.total_length_m() / PI).powi(2);
    Ok(delta_k
        .par_iter()
        .map(|&dk| {
            let amp: Complex64 = couplings
                .iter()
                .map(|&(mid, len, w)| {
                    w * Complex64::from_polar(len * sinc(dk * len / 2.0), dk * mid)
                })
                .sum();
            amp.norm_sqr() / norm
        })
        .collect())
}

/// Odd-part fraction of a spectrum sampled on a grid symmetric about zero:
/// `Σ|η(Δk) − η(−Δk)| / Σ(η(Δk) + η(−Δk))`. Zero for an even spectrum.
pub fn spectrum_asymmetry(delta_k: &[f64], efficiency: &[f64]) -> Result<f64, QpmError> {
    let n = delta_k.len();
    if n != efficiency.len() || n == 0 {
        return Err(QpmError::AsymmetricGrid);
    }
    let scale = delta_k.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for i in 0..n {
        if (delta_k[i] + delta_k[n - 1 - i]).abs() > 1e-9 * scale {
            return Err(QpmError::AsymmetricGrid);
        }
    }
    let (mut odd, mut total) = (0.0, 0.0);
    for i in 0..n / 2 {
        let (l, r) = (efficiency[i], efficiency[n - 1 - i]);
        odd += (l - r).abs();
        total += l + r;
    }
    Ok(if total > 0.0 { odd / total } else { 0.0 })
}

/// Evenly spaced grid from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..n)
            .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn temporal_walkoff(gvm_ps_per_mm: f64, length_m: f64) -> Result<f64, QpmError> {
    if !(length_m >= 0.0) {
        return Err(QpmError::InvalidParameter {
            name: "length_m",
            value: length_m,
            reason: "must be nonnegative",
        });
    }
    Ok(gvm_ps_per_mm * length_m * 1e3)
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct DispersionRow {
    pub wavelength_nm: f64,
    pub n_eff: f64,
    pub n_g: f64,
}

/// Mode-solver output for the fundamental and second-harmonic bands.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispersionInput {
    pub fund: Vec<DispersionRow>,
    pub sh: Vec<DispersionRow>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    band: String,
    wavelength_nm: f64,
    n_eff: f64,
    n_g: f64,
}

impl DispersionInput {
    /// Parses `band,wavelength_nm,n_eff,n_g` with bands `fund` and `sh`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, QpmError> {
        let mut table = Self::default();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: CsvRow = row?;
            let entry = DispersionRow {
                wavelength_nm: row.wavelength_nm,
                n_eff: row.n_eff,
                n_g: row.n_g,
            };
            match row.band.trim() {
                "fund" => table.fund.push(entry),
                "sh" => table.sh.push(entry),
                other => {
                    return Err(QpmError::Dispersion(format!("unknown band {other:?}")));
                }
            }
        }
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), QpmError> {
        for (name, rows) in [("fund", &self.fund), ("sh", &self.sh)] {
            for pair in rows.windows(2) {
                if !(pair[1].wavelength_nm > pair[0].wavelength_nm) {
                    return Err(QpmError::Dispersion(format!(
                        "{name} wavelengths not strictly increasing at {} nm",
                        pair[1].wavelength_nm
                    )));
                }
            }
            if let Some(r) = rows.iter().find(|r| !(r.n_eff > 1.0 && r.n_g > 1.0)) {
                return Err(QpmError::Dispersion(format!(
                    "{name} indices must exceed 1 (row at {} nm)",
                    r.wavelength_nm
                )));
            }
        }
        Ok(())
    }
}

fn interpolate_group_index(
    band: &'static str,
    rows: &[DispersionRow],
    wavelength_nm: f64,
) -> Result<f64, QpmError> {
    let out_of_range = || QpmError::OutOfRange {
        band,
        wavelength_nm,
        min_nm: rows.first().map_or(f64::NAN, |r| r.wavelength_nm),
        max_nm: rows.last().map_or(f64::NAN, |r| r.wavelength_nm),
    };
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(out_of_range()),
    };
    if !(wavelength_nm >= first.wavelength_nm && wavelength_nm <= last.wavelength_nm) {
        return Err(out_of_range());
    }
    if rows.len() == 1 {
        return Ok(first.n_g);
    }
    let i = rows
        .windows(2)
        .position(|w| wavelength_nm <= w[1].wavelength_nm)
        .unwrap_or(rows.len() - 2);
    let (a, b) = (rows[i], rows[i + 1]);
    let t = (wavelength_nm - a.wavelength_nm) / (b.wavelength_nm - a.wavelength_nm);
    Ok(a.n_g + t * (b.n_g - a.n_g))
}

/// Group-velocity mismatch `1/v_g(2ω) − 1/v_g(ω)` in ps/mm.
pub fn gvm_from_dispersion(d: &DispersionInput, lambda_fund_nm: f64) -> Result<f64, QpmError> {
    let ng_fund = interpolate_group_index("fund", &d.fund, lambda_fund_nm)?;
    let ng_sh = interpolate_group_index("sh", &d.sh, lambda_fund_nm / 2.0)?;
    Ok((ng_sh - ng_fund) / C_MM_PER_PS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterShape {
    Gaussian,
    Rectangular,
}

impl FilterShape {
    /// Time-bandwidth product of the transform-limited pulse.
    pub fn time_bandwidth_product(self) -> f64 {
        match self {
            FilterShape::Gaussian => 0.441,
            // sinc pulse, main-lobe FWHM convention
            FilterShape::Rectangular => 0.886,
        }
    }
}

impl FromStr for FilterShape {
    type Err = QpmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(FilterShape::Gaussian),
            "rectangular" | "rect" => Ok(FilterShape::Rectangular),
            _ => Err(QpmError::UnknownShape(s.to_string())),
        }
    }
}

pub fn filtered_pulse_duration(filter_fwhm_hz: f64, shape: FilterShape) -> Result<f64, QpmError> {
    if !(filter_fwhm_hz > 0.0) {
        return Err(QpmError::InvalidParameter {
            name: "filter_fwhm_hz",
            value: filter_fwhm_hz,
            reason: "must be positive",
        });
    }
    Ok(shape.time_bandwidth_product() / filter_fwhm_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PERIOD_UM: f64 = 4.93;
    const LENGTH_M: f64 = 4.7e-3;

    fn grid(length_m: f64, nulls: f64, n: usize) -> Vec<f64> {
        let edge = nulls * 2.0 * PI / length_m;
        linspace(-edge, edge, n)
    }

    #[test]
    fn ideal_spectrum_landmarks() {
        let l = LENGTH_M;
        let dk = [0.0, 2.0 * PI / l, 2.0 * 1.391_557_378 / l];
        let eta = ideal_qpm_spectrum(&dk, l).unwrap();
        assert_eq!(eta[0], 1.0);
        assert!(eta[1] < 1e-25);
        assert!((eta[2] - 0.5).abs() < 1e-9);
        assert!(ideal_qpm_spectrum(&dk, 0.0).is_err());
    }

    #[test]
    fn half_power_point_by_bisection() {
        // Independent root of sinc²(x) = 1/2 on (1, 2).
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (mid.sin() / mid).powi(2) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.3916).abs() < 1e-4);
        let eta = ideal_qpm_spectrum(&[2.0 * 1.3916], 1.0).unwrap()[0];
        assert!((eta - 0.5).abs() < 1e-4);
    }

    #[test]
    fn periodic_map_matches_ideal() {
        let map = PolingMap::periodic(PERIOD_UM, LENGTH_M);
        assert!(map.matches_length(LENGTH_M));
        let l = map.total_length_m();
        let dk = grid(l, 4.0, 401);
        let ideal = ideal_qpm_spectrum(&dk, l).unwrap();
        let real = defective_qpm_spectrum(&map, &dk).unwrap();
        for (a, b) in ideal.iter().zip(&real) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_domain_is_short_device() {
        let map = PolingMap {
            period_um: PERIOD_UM,
            domains: vec![Domain {
                length_um: PERIOD_UM / 2.0,
                sign: 1,
            }],
        };
        let lc = PERIOD_UM / 2.0 * 1e-6;
        let dk = grid(lc, 3.0, 61);
        let real = defective_qpm_spectrum(&map, &dk).unwrap();
        for (k, r) in dk.iter().zip(&real) {
            let expect = ((k * lc / 2.0).sin() / (k * lc / 2.0)).powi(2);
            let expect = if k.abs() < 1e-12 { 1.0 } else { expect };
            assert!((r - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_map_rejected() {
        let map = PolingMap {
            period_um: PERIOD_UM,
            domains: vec![],
        };
        assert!(matches!(
            defective_qpm_spectrum(&map, &[0.0]),
            Err(QpmError::EmptyMap)
        ));
    }

    #[test]
    fn jittered_map_is_degraded_and_skewed() {
        let defects = PolingDefects {
            boundary_jitter: 0.05,
            missing_flip_prob: 0.0,
        };
        let map = PolingMap::with_defects(PERIOD_UM, LENGTH_M, &defects, 11).unwrap();
        assert!(map.matches_length(LENGTH_M));
        let dk = grid(LENGTH_M, 4.0, 801);
        let eta = defective_qpm_spectrum(&map, &dk).unwrap();
        let peak = eta.iter().cloned().fold(0.0, f64::max);
        assert!(peak < 1.0);
        assert!(spectrum_asymmetry(&dk, &eta).unwrap() > 1e-4);
    }

    #[test]
    fn missing_flips_keep_spectrum_even() {
        let defects = PolingDefects {
            boundary_jitter: 0.0,
            missing_flip_prob: 0.1,
        };
        let map = PolingMap::with_defects(PERIOD_UM, LENGTH_M, &defects, 3).unwrap();
        assert!(map.domains.iter().filter(|d| d.sign > 0).count() > map.domains.len() / 2);
        let dk = grid(LENGTH_M, 4.0, 401);
        let eta = defective_qpm_spectrum(&map, &dk).unwrap();
        assert!(eta.iter().cloned().fold(0.0, f64::max) < 1.0);
        assert!(spectrum_asymmetry(&dk, &eta).unwrap() < 1e-9);
    }

    #[test]
    fn asymmetry_needs_symmetric_grid() {
        assert!(spectrum_asymmetry(&[0.0, 1.0, 3.0], &[1.0, 1.0, 1.0]).is_err());
        let dk = linspace(-1.0, 1.0, 5);
        let eta = ideal_qpm_spectrum(&dk, 1.0).unwrap();
        assert!(spectrum_asymmetry(&dk, &eta).unwrap() < 1e-15);
    }

    #[test]
    fn walkoff_examples() {
        assert!((temporal_walkoff(0.3128, 4.7e-3).unwrap() - 1.47).abs() < 0.005);
        assert_eq!(temporal_walkoff(0.5, 0.0).unwrap(), 0.0);
        assert!((temporal_walkoff(0.3128, 9.4e-3).unwrap() - 2.94).abs() < 0.005);
        assert!(temporal_walkoff(0.3, -1.0).is_err());
    }

    const TABLE: &str = "band,wavelength_nm,n_eff,n_g\n\
        fund,1550,1.90,2.30\n\
        fund,1560,1.89,2.30\n\
        sh,775,2.05,2.3938\n\
        sh,780,2.04,2.3938\n";

    #[test]
    fn gvm_from_table() {
        let d = DispersionInput::from_csv(TABLE.as_bytes()).unwrap();
        let gvm = gvm_from_dispersion(&d, 1556.6).unwrap();
        assert!((gvm - 0.3128).abs() < 1e-4);
        assert!((gvm - 0.0938 / C_MM_PER_PS).abs() < 1e-12);
    }

    #[test]
    fn gvm_interpolates_linearly() {
        let table = "band,wavelength_nm,n_eff,n_g\n\
            fund,1550,1.9,2.2\nfund,1560,1.9,2.4\nsh,770,2.0,2.5\nsh,790,2.0,2.5\n";
        let d = DispersionInput::from_csv(table.as_bytes()).unwrap();
        let gvm = gvm_from_dispersion(&d, 1555.0).unwrap();
        assert!((gvm - 0.2 / C_MM_PER_PS).abs() < 1e-12);
    }

    #[test]
    fn flat_indices_give_zero_gvm() {
        let table = "band,wavelength_nm,n_eff,n_g\n\
            fund,1500,2,2.3\nfund,1600,2,2.3\nsh,750,2,2.3\nsh,800,2,2.3\n";
        let d = DispersionInput::from_csv(table.as_bytes()).unwrap();
        assert_eq!(gvm_from_dispersion(&d, 1556.0).unwrap(), 0.0);
    }

    #[test]
    fn gvm_errors() {
        let only_fund = "band,wavelength_nm,n_eff,n_g\nfund,1550,1.9,2.3\nfund,1560,1.9,2.3\n";
        let d = DispersionInput::from_csv(only_fund.as_bytes()).unwrap();
        assert!(matches!(
            gvm_from_dispersion(&d, 1556.0),
            Err(QpmError::OutOfRange { band: "sh", .. })
        ));
        let d = DispersionInput::from_csv(TABLE.as_bytes()).unwrap();
        assert!(gvm_from_dispersion(&d, 1600.0).is_err());
        let unsorted = "band,wavelength_nm,n_eff,n_g\nfund,1560,1.9,2.3\nfund,1550,1.9,2.3\n";
        assert!(DispersionInput::from_csv(unsorted.as_bytes()).is_err());
        let bad_band = "band,wavelength_nm,n_eff,n_g\nthg,520,1.9,2.3\n";
        assert!(DispersionInput::from_csv(bad_band.as_bytes()).is_err());
        let low_index = "band,wavelength_nm,n_eff,n_g\nfund,1550,0.9,2.3\n";
        assert!(DispersionInput::from_csv(low_index.as_bytes()).is_err());
    }

    #[test]
    fn filtered_duration_examples() {
        let g = filtered_pulse_duration(100e9, FilterShape::Gaussian).unwrap();
        let r = filtered_pulse_duration(100e9, "rectangular".parse().unwrap()).unwrap();
        assert!((g - 4.41e-12).abs() < 1e-18);
        assert!((r - 8.86e-12).abs() < 1e-18);
        // The measured 12 ps is longer than either transform limit.
        assert!(12e-12 > g.max(r));
        assert!("lorentzian".parse::<FilterShape>().is_err());
        assert!(filtered_pulse_duration(0.0, FilterShape::Gaussian).is_err());
    }

    proptest! {
        #[test]
        fn ideal_spectrum_is_even(dk in -1e5f64..1e5, l in 1e-4f64..1e-1) {
            let a = ideal_qpm_spectrum(&[dk, -dk], l).unwrap();
            prop_assert_eq!(a[0], a[1]);
        }

        #[test]
        fn defective_peak_never_exceeds_one(seed in any::<u64>(), jitter in 0.0f64..0.15, flip in 0.0f64..0.3) {
            let defects = PolingDefects { boundary_jitter: jitter, missing_flip_prob: flip };
            let map = PolingMap::with_defects(PERIOD_UM, 0.5e-3, &defects, seed).unwrap();
            let dk = grid(0.5e-3, 3.0, 121);
            let eta = defective_qpm_spectrum(&map, &dk).unwrap();
            prop_assert!(eta.iter().all(|&e| e <= 1.0 + 1e-12));
        }

        #[test]
        fn walkoff_is_bilinear(g in -2.0f64..2.0, l in 0.0f64..0.05, c in 0.0f64..10.0) {
            let base = temporal_walkoff(g, l).unwrap();
            prop_assert!((temporal_walkoff(c * g, l).unwrap() - c * base).abs() < 1e-12 * (1.0 + base.abs() * c));
            prop_assert!((temporal_walkoff(g, c * l).unwrap() - c * base).abs() < 1e-12 * (1.0 + base.abs() * c));
        }
    }
}
