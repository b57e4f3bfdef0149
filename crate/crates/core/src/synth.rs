//! Synthetic time-domain homodyne traces.
//!
//! Each laser pulse occupies a window of `sample_rate / rep_rate` samples.
//! Pulse `k` carries one quadrature draw `x_k ~ N(0, V(θ_k) − e)` spread over
//! its window by a unit-norm kernel, and every sample gets independent
//! electronic noise of variance `e = 10^(−clearance/10)`. After integrating
//! with the same kernel the per-pulse variance is `V(θ_k)` in units of the
//! measured shot noise, where
//!
//! ```text
//! V(θ) = S+·sin²θ + S−·cos²θ
//! ```
//!
//! and `θ_k` ramps linearly over the trace. Shot traces use `S± = 1` and
//! electronic traces carry the electronic noise alone, so squeezing levels
//! are the as-measured values, electronic noise included.

use crate::physics::{self, PhysicsError, PulseTrain};
use crate::rng::{derive_seed, NormalStream};
use crate::trace_file::{save_trace, TraceFileError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid acquisition config: {0}")]
    InvalidConfig(String),
    #[error("squeezed variance {s_minus} lies below the electronic noise floor {floor}")]
    BelowElectronicFloor { s_minus: f64, floor: f64 },
    #[error("invalid squeezing levels S- = {s_minus}, S+ = {s_plus}")]
    InvalidLevels { s_minus: f64, s_plus: f64 },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    TraceFile(#[from] TraceFileError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum TraceKind {
    Squeezed = 0,
    Shot = 1,
    Electronic = 2,
}

impl TraceKind {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(TraceKind::Squeezed),
            1 => Some(TraceKind::Shot),
            2 => Some(TraceKind::Electronic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseRamp {
    pub start_rad: f64,
    pub end_rad: f64,
}

impl Default for PhaseRamp {
    fn default() -> Self {
        Self {
            start_rad: 0.0,
            end_rad: TAU,
        }
    }
}

/// Unit-L2-norm raised-cosine window of `len` taps.
pub fn raised_cosine_kernel(len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len)
        .map(|i| (PI * (i as f64 + 0.5) / len as f64).sin().powi(2))
        .collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| x / norm).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub sample_rate_hz: u64,
    pub rep_rate_hz: u64,
    pub n_samples: u64,
    pub n_traces: usize,
    pub lo_clearance_db: f64,
    pub phase_ramp: PhaseRamp,
    /// Per-window weights; `None` selects [`raised_cosine_kernel`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_kernel: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 1_000_000_000,
            rep_rate_hz: 100_000_000,
            n_samples: 5_000_000,
            n_traces: 18,
            lo_clearance_db: 8.0,
            phase_ramp: PhaseRamp::default(),
            pulse_kernel: None,
            seed: 1,
        }
    }
}

impl AcquisitionConfig {
    pub fn samples_per_pulse(&self) -> usize {
        self.sample_rate_hz
            .checked_div(self.rep_rate_hz)
            .unwrap_or(0) as usize
    }

    pub fn n_pulses(&self) -> usize {
        match self.samples_per_pulse() {
            0 => 0,
            w => self.n_samples as usize / w,
        }
    }

    pub fn kernel(&self) -> Vec<f64> {
        self.pulse_kernel
            .clone()
            .unwrap_or_else(|| raised_cosine_kernel(self.samples_per_pulse()))
    }

    /// Integrated electronic variance relative to shot noise.
    pub fn electronic_variance(&self) -> f64 {
        physics::db_to_linear(-self.lo_clearance_db)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.sample_rate_hz == 0 || self.rep_rate_hz == 0 {
            return bad("sample and repetition rates must be positive".into());
        }
        if !self.sample_rate_hz.is_multiple_of(self.rep_rate_hz) {
            return bad(format!(
                "sample rate {} is not a multiple of the repetition rate {}",
                self.sample_rate_hz, self.rep_rate_hz
            ));
        }
        let w = self.samples_per_pulse() as u64;
        if self.n_samples == 0 || !self.n_samples.is_multiple_of(w) {
            return bad(format!(
                "n_samples {} is not a positive multiple of {w} samples per pulse",
                self.n_samples
            ));
        }
        if self.n_traces == 0 {
            return bad("n_traces must be at least 1".into());
        }
        if !(self.lo_clearance_db >= 0.0) {
            return bad(format!(
                "clearance {} dB must be nonnegative",
                self.lo_clearance_db
            ));
        }
        if !(self.phase_ramp.start_rad.is_finite() && self.phase_ramp.end_rad.is_finite()) {
            return bad("phase ramp must be finite".into());
        }
        let kernel = self.kernel();
        if kernel.len() as u64 != w {
            return bad(format!(
                "kernel has {} taps, window has {w} samples",
                kernel.len()
            ));
        }
        let norm = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return bad(format!("kernel L2 norm is {norm}, expected 1"));
        }
        Ok(())
    }
}

/// Acquisition metadata stored alongside the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub kind: TraceKind,
    pub sample_rate_hz: u64,
    pub rep_rate_hz: u64,
    pub ramp_start_rad: f64,
    pub ramp_end_rad: f64,
    pub clearance_db: f64,
    pub seed: u64,
    pub kernel: Vec<f64>,
}

impl TraceHeader {
    pub fn samples_per_pulse(&self) -> usize {
        self.sample_rate_hz
            .checked_div(self.rep_rate_hz)
            .unwrap_or(0) as usize
    }

    pub fn ramp(&self) -> PhaseRamp {
        PhaseRamp {
            start_rad: self.ramp_start_rad,
            end_rad: self.ramp_end_rad,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneTrace {
    pub header: TraceHeader,
    pub samples: Vec<f32>,
}

/// Quadrature variance at LO phase `theta`.
pub fn quadrature_variance(theta: f64, s_minus: f64, s_plus: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    s_plus * s * s + s_minus * c * c
}

/// Generates one trace from `cfg.seed`.
pub fn synthesize_trace(
    cfg: &AcquisitionConfig,
    s_minus_lin: f64,
    s_plus_lin: f64,
    kind: TraceKind,
) -> Result<HomodyneTrace, SynthError> {
    cfg.validate()?;
    let electronic = cfg.electronic_variance();
    let (s_minus, s_plus) = match kind {
        TraceKind::Squeezed => (s_minus_lin, s_plus_lin),
        TraceKind::Shot => (1.0, 1.0),
        TraceKind::Electronic => (electronic, electronic),
    };
    if !(s_minus > 0.0 && s_plus > 0.0 && s_minus.is_finite() && s_plus.is_finite()) {
        return Err(SynthError::InvalidLevels { s_minus, s_plus });
    }
    if s_minus.min(s_plus) < electronic {
        return Err(SynthError::BelowElectronicFloor {
            s_minus: s_minus.min(s_plus),
            floor: electronic,
        });
    }

    let kernel = cfg.kernel();
    let w = kernel.len();
    let n_pulses = cfg.n_pulses();
    let ramp = cfg.phase_ramp;
    let slope = (ramp.end_rad - ramp.start_rad) / n_pulses as f64;
    let e_sd = electronic.sqrt();
    let mut g = NormalStream::new(cfg.seed);
    let mut samples = Vec::with_capacity(n_pulses * w);

    for k in 0..n_pulses {
        let x = match kind {
            TraceKind::Electronic => 0.0,
            _ => {
                let theta = ramp.start_rad + slope * k as f64;
                let optical = quadrature_variance(theta, s_minus, s_plus) - electronic;
                optical.max(0.0).sqrt() * g.next_normal()
            }
        };
        for &tap in &kernel {
            let noise = if e_sd > 0.0 {
                e_sd * g.next_normal()
            } else {
                0.0
            };
            samples.push((x * tap + noise) as f32);
        }
    }

    Ok(HomodyneTrace {
        header: TraceHeader {
            kind,
            sample_rate_hz: cfg.sample_rate_hz,
            rep_rate_hz: cfg.rep_rate_hz,
            ramp_start_rad: ramp.start_rad,
            ramp_end_rad: ramp.end_rad,
            clearance_db: cfg.lo_clearance_db,
            seed: cfg.seed,
            kernel,
        },
        samples,
    })
}

/// Stream tags separating the noise of shot and electronic sets from the
/// squeezed sets, which use their power index.
pub const SHOT_STREAM: u64 = 0xFFFF_FFFF_0000_0001;
pub const ELECTRONIC_STREAM: u64 = 0xFFFF_FFFF_0000_0002;

/// Config for trace `index` of a set: identical but for the derived seed.
pub fn trace_config(cfg: &AcquisitionConfig, stream: u64, index: usize) -> AcquisitionConfig {
    AcquisitionConfig {
        seed: derive_seed(cfg.seed, stream, index as u64),
        ..cfg.clone()
    }
}

/// `cfg.n_traces` traces, seeded per index so any thread count agrees.
pub fn synthesize_trace_set(
    cfg: &AcquisitionConfig,
    s_minus_lin: f64,
    s_plus_lin: f64,
    kind: TraceKind,
    stream: u64,
) -> Result<Vec<HomodyneTrace>, SynthError> {
    (0..cfg.n_traces)
        .into_par_iter()
        .map(|i| synthesize_trace(&trace_config(cfg, stream, i), s_minus_lin, s_plus_lin, kind))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub kind: TraceKind,
    pub avg_power_w: f64,
}

pub type Manifest = Vec<ManifestEntry>;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Power sweep specification: pump powers are average powers, turned into
/// peak powers with the pulse template.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub pulses: PulseTrain,
    pub alpha_per_w: f64,
    pub eta_total: f64,
    pub avg_powers_w: Vec<f64>,
}

impl SweepPlan {
    pub fn levels(&self) -> Result<Vec<physics::SqueezingLevels>, SynthError> {
        if self.avg_powers_w.is_empty() {
            return Err(SynthError::InvalidConfig("power sweep is empty".into()));
        }
        self.avg_powers_w
            .iter()
            .map(|&p| {
                let peak = physics::peak_power(&self.pulses.with_avg_power(p))?;
                Ok(physics::squeezing_levels(
                    peak,
                    self.alpha_per_w,
                    self.eta_total,
                )?)
            })
            .collect()
    }
}

/// Writes one squeezed trace set per power plus a shot and an electronic
/// set, then `manifest.json` listing every file.
pub fn synthesize_power_sweep(
    cfg: &AcquisitionConfig,
    plan: &SweepPlan,
    out_dir: &Path,
) -> Result<Manifest, SynthError> {
    cfg.validate()?;
    let levels = plan.levels()?;
    fs::create_dir_all(out_dir).map_err(|source| SynthError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    struct Job {
        name: String,
        kind: TraceKind,
        avg_power_w: f64,
        s_minus: f64,
        s_plus: f64,
        cfg: AcquisitionConfig,
    }
    let mut jobs = Vec::new();
    for (i, (&p, l)) in plan.avg_powers_w.iter().zip(&levels).enumerate() {
        for t in 0..cfg.n_traces {
            jobs.push(Job {
                name: format!("squeezed_p{i:02}_t{t:02}.sqzt"),
                kind: TraceKind::Squeezed,
                avg_power_w: p,
                s_minus: l.s_minus_lin,
                s_plus: l.s_plus_lin,
                cfg: trace_config(cfg, i as u64, t),
            });
        }
    }
    for (kind, stream, stem) in [
        (TraceKind::Shot, SHOT_STREAM, "shot"),
        (TraceKind::Electronic, ELECTRONIC_STREAM, "electronic"),
    ] {
        for t in 0..cfg.n_traces {
            jobs.push(Job {
                name: format!("{stem}_t{t:02}.sqzt"),
                kind,
                avg_power_w: 0.0,
                s_minus: 1.0,
                s_plus: 1.0,
                cfg: trace_config(cfg, stream, t),
            });
        }
    }

    jobs.par_iter().try_for_each(|job| {
        let trace = synthesize_trace(&job.cfg, job.s_minus, job.s_plus, job.kind)?;
        save_trace(&trace, &out_dir.join(&job.name))?;
        Ok::<_, SynthError>(())
    })?;

    let manifest: Manifest = jobs
        .iter()
        .map(|j| ManifestEntry {
            path: j.name.clone(),
            kind: j.kind,
            avg_power_w: j.avg_power_w,
        })
        .collect();
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|source| SynthError::Io { path, source })?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, SynthError> {
    let text = fs::read_to_string(path).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_samples: u64) -> AcquisitionConfig {
        AcquisitionConfig {
            n_samples,
            n_traces: 2,
            seed: 77,
            ..AcquisitionConfig::default()
        }
    }

    fn integrate(trace: &HomodyneTrace) -> Vec<f64> {
        let k = &trace.header.kernel;
        trace
            .samples
            .chunks_exact(k.len())
            .map(|w| w.iter().zip(k).map(|(s, k)| *s as f64 * k).sum())
            .collect()
    }

    fn variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn kernel_has_unit_norm() {
        for len in [1, 4, 10, 33] {
            let k = raised_cosine_kernel(len);
            assert_eq!(k.len(), len);
            assert!((k.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        assert!(AcquisitionConfig::default().validate().is_ok());
        let mut c = small(1000);
        c.rep_rate_hz = 300_000_000;
        assert!(c.validate().is_err());
        let mut c = small(1005);
        assert!(c.validate().is_err());
        c.n_samples = 1000;
        c.pulse_kernel = Some(vec![1.0; 10]);
        assert!(c.validate().is_err());
        c.pulse_kernel = Some(vec![0.5; 4]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn shot_trace_is_calibrated() {
        let t = synthesize_trace(&small(5_000_000), 1.0, 1.0, TraceKind::Shot).unwrap();
        assert_eq!(t.samples.len(), 5_000_000);
        let v = variance(&integrate(&t));
        // 3σ of a variance estimate from 500k draws.
        assert!((v - 1.0).abs() < 0.006, "shot variance {v}");
    }

    #[test]
    fn electronic_trace_sits_below_shot() {
        let t = synthesize_trace(&small(5_000_000), 1.0, 1.0, TraceKind::Electronic).unwrap();
        let v = variance(&integrate(&t));
        assert!((v - 0.1585).abs() < 0.002, "electronic variance {v}");
        // Relative spread is √(2/n) as for shot noise, so 0.002 here is ~6σ.
    }

    #[test]
    fn kernel_integration_recovers_pulse_amplitude() {
        let mut cfg = small(10_000);
        cfg.lo_clearance_db = f64::INFINITY;
        let t = synthesize_trace(&cfg, 0.5, 2.0, TraceKind::Squeezed).unwrap();
        // Replay the draws: with no electronic noise each pulse uses one normal.
        let mut g = NormalStream::new(cfg.seed);
        let slope = TAU / cfg.n_pulses() as f64;
        for (k, q) in integrate(&t).iter().enumerate() {
            let v = quadrature_variance(slope * k as f64, 0.5, 2.0);
            let x = v.sqrt() * g.next_normal();
            assert!((q - x).abs() <= 1e-6 * x.abs().max(1e-3));
        }
    }

    #[test]
    fn phase_average_of_squeezed_trace() {
        let (s_minus, s_plus) = (0.902, 1.176);
        let t = synthesize_trace(&small(5_000_000), s_minus, s_plus, TraceKind::Squeezed).unwrap();
        let q = integrate(&t);
        let n = q.len() as f64;
        let mean_sq = q.iter().map(|x| x * x).sum::<f64>() / n;
        let per_pulse: Vec<f64> = q.iter().map(|x| x * x).collect();
        let se = variance(&per_pulse).sqrt() / n.sqrt();
        assert!((mean_sq - 0.5 * (s_minus + s_plus)).abs() < 3.0 * se);
    }

    #[test]
    fn below_floor_rejected() {
        let r = synthesize_trace(&small(1000), 0.1, 1.5, TraceKind::Squeezed);
        assert!(matches!(r, Err(SynthError::BelowElectronicFloor { .. })));
        let r = synthesize_trace(&small(1000), -1.0, 1.5, TraceKind::Squeezed);
        assert!(matches!(r, Err(SynthError::InvalidLevels { .. })));
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let cfg = small(20_000);
        let a = synthesize_trace_set(&cfg, 0.9, 1.2, TraceKind::Squeezed, 0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool
            .install(|| synthesize_trace_set(&cfg, 0.9, 1.2, TraceKind::Squeezed, 0))
            .unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].samples, a[1].samples);
    }

    #[test]
    fn sweep_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(2_000);
        let plan = SweepPlan {
            pulses: PulseTrain {
                avg_power_w: 0.0,
                rep_rate_hz: 1e8,
                fwhm_s: 10e-12,
                shape_factor: 1.0,
            },
            alpha_per_w: 0.28,
            eta_total: 0.22,
            avg_powers_w: vec![100e-6, 310e-6],
        };
        let manifest = synthesize_power_sweep(&cfg, &plan, dir.path()).unwrap();
        assert_eq!(manifest.len(), 2 * 2 + 2 + 2);
        assert_eq!(
            read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(),
            manifest
        );
        for e in &manifest {
            let t = crate::trace_file::load_trace(&dir.path().join(&e.path)).unwrap();
            assert_eq!(t.header.kind, e.kind);
        }
        let empty = SweepPlan {
            avg_powers_w: vec![],
            ..plan
        };
        assert!(synthesize_power_sweep(&cfg, &empty, dir.path()).is_err());
    }
}
