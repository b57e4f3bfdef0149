//! Trace-to-variance pipeline: pulse integration, phase binning,
//! normalization to shot noise, trace aggregation and the phase-curve fit.

use crate::fit::models::{phase_curve, phase_curve_gradient};
use crate::fit::{levenberg_marquardt, FitError, FitProblem, FitResult, LmOptions};
use crate::physics::linear_to_db;
use crate::qpm::sinc;
use crate::synth::{
    synthesize_trace, trace_config, AcquisitionConfig, HomodyneTrace, PhaseRamp, SynthError,
    TraceKind,
};
use crate::trace_file::TraceFileError;
use log::warn;
use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, LN_10, PI};
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_PULSES_PER_BIN: usize = 5000;
pub const MIN_PHASE_BINS: usize = 8;
/// Shot-to-electronic variance ratio below which the corrected
/// normalization is refused.
pub const MIN_SHOT_CLEARANCE_RATIO: f64 = 1.5;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("{available} samples after offset do not fill whole {window}-sample windows")]
    TraceLength { available: usize, window: usize },
    #[error("kernel has {kernel} taps but the pulse window has {window} samples")]
    KernelMismatch { kernel: usize, window: usize },
    #[error("kernel has zero norm")]
    ZeroKernel,
    #[error("trigger offset {offset} exceeds the trace length {n_samples}")]
    OffsetTooLarge { offset: usize, n_samples: usize },
    #[error("bins need at least 2 pulses, got {0}")]
    TooFewPulsesPerBin(usize),
    #[error("{pulses} pulses do not fill a single bin of {pulses_per_bin}")]
    NoCompleteBin {
        pulses: usize,
        pulses_per_bin: usize,
    },
    #[error("bin structures differ: {0}")]
    BinMismatch(String),
    #[error("shot variance is only {ratio:.3} times the electronic variance")]
    ShotNotClear { ratio: f64 },
    #[error("non-positive reference variance {0}")]
    BadReference(f64),
    #[error("phase fit needs at least {MIN_PHASE_BINS} bins, got {0}")]
    TooFewBins(usize),
    #[error("no traces to aggregate")]
    NoTraces,
    #[error("phase-curve fit failed: {0}")]
    Fit(#[from] FitError),
    #[error(transparent)]
    TraceFile(#[from] TraceFileError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One integrated quadrature value per pulse window.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSeries {
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

impl QuadratureSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn note(warnings: &mut Vec<String>, msg: String) {
    warn!("{msg}");
    warnings.push(msg);
}

/// Dot product of each window with `kernel`. Window `k` starts at sample
/// `trigger_offset + k·w`.
pub fn integrate_pulses(
    trace: &HomodyneTrace,
    kernel: &[f64],
    trigger_offset: usize,
) -> Result<QuadratureSeries, DspError> {
    let w = trace.header.samples_per_pulse();
    if kernel.len() != w || w == 0 {
        return Err(DspError::KernelMismatch {
            kernel: kernel.len(),
            window: w,
        });
    }
    let n = trace.samples.len();
    if trigger_offset > n {
        return Err(DspError::OffsetTooLarge {
            offset: trigger_offset,
            n_samples: n,
        });
    }
    let mut warnings = Vec::new();
    let available = n - trigger_offset;
    if !available.is_multiple_of(w) {
        if trigger_offset == 0 {
            return Err(DspError::TraceLength {
                available,
                window: w,
            });
        }
        note(
            &mut warnings,
            format!(
                "trigger offset {trigger_offset} leaves a partial final window of {} samples; dropped",
                available % w
            ),
        );
    }

    let norm = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(DspError::ZeroKernel);
    }
    let kernel: Vec<f64> = if (norm - 1.0).abs() > 1e-6 {
        note(
            &mut warnings,
            format!("kernel L2 norm {norm} renormalized to 1"),
        );
        kernel.iter().map(|k| k / norm).collect()
    } else {
        kernel.to_vec()
    };

    let values = trace.samples[trigger_offset..]
        .chunks_exact(w)
        .map(|win| {
            win.iter()
                .zip(&kernel)
                .map(|(s, k)| f64::from(*s) * k)
                .sum()
        })
        .collect();
    Ok(QuadratureSeries { values, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBin {
    pub bin: usize,
    /// Half-open pulse index range `[pulse_start, pulse_end)`.
    pub pulse_start: usize,
    pub pulse_end: usize,
    pub variance: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePhaseSeries {
    pub bins: Vec<VarianceBin>,
    pub pulses_per_bin: usize,
    pub n_traces: usize,
    /// Shot variance the values were divided by, once normalized.
    pub shot_variance: Option<f64>,
    /// Electronic variance on the same scale as `shot_variance`.
    pub electronic_variance: Option<f64>,
    /// Uncertainty shared by every bin through the shot and electronic
    /// reference means, once normalized.
    pub reference_error: Option<ReferenceError>,
    /// Nominal phase ramp of the source traces, if known.
    pub ramp: Option<PhaseRamp>,
    pub warnings: Vec<String>,
}

/// Common-mode normalization error: a normalized level `S` carries an
/// extra variance `(S·scale)² + ((S − 1)·offset)²` that is fully
/// correlated across bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceError {
    pub scale: f64,
    pub offset: f64,
}

impl ReferenceError {
    pub fn variance_at(&self, level: f64) -> f64 {
        (level * self.scale).powi(2) + ((level - 1.0) * self.offset).powi(2)
    }
}

impl VariancePhaseSeries {
    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn total_pulses(&self) -> usize {
        self.bins.len() * self.pulses_per_bin
    }

    pub fn variances(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.variance).collect()
    }

    pub fn mean_variance(&self) -> f64 {
        self.bins.iter().map(|b| b.variance).sum::<f64>() / self.bins.len() as f64
    }

    /// Standard error of [`Self::mean_variance`].
    pub fn mean_stderr(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| b.stderr * b.stderr)
            .sum::<f64>()
            .sqrt()
            / self.bins.len() as f64
    }

    /// Nominal phase at each bin centre, from the ramp metadata.
    pub fn nominal_phases(&self) -> Option<Vec<f64>> {
        let ramp = self.ramp?;
        let total = self.total_pulses() as f64;
        let slope = (ramp.end_rad - ramp.start_rad) / total;
        Some(
            self.bins
                .iter()
                .map(|b| ramp.start_rad + slope * 0.5 * (b.pulse_start + b.pulse_end) as f64)
                .collect(),
        )
    }

    fn check_matches(&self, other: &Self) -> Result<(), DspError> {
        if self.pulses_per_bin != other.pulses_per_bin || self.bins.len() != other.bins.len() {
            return Err(DspError::BinMismatch(format!(
                "{} bins of {} pulses vs {} bins of {} pulses",
                self.bins.len(),
                self.pulses_per_bin,
                other.bins.len(),
                other.pulses_per_bin
            )));
        }
        Ok(())
    }
}

/// Unbiased two-pass sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Splits the series into consecutive bins and estimates each bin's
/// variance with its Gaussian standard error `v·√(2/(n−1))`. Trailing
/// pulses that do not fill a bin are dropped.
pub fn bin_variances(
    q: &QuadratureSeries,
    pulses_per_bin: usize,
) -> Result<VariancePhaseSeries, DspError> {
    if pulses_per_bin < 2 {
        return Err(DspError::TooFewPulsesPerBin(pulses_per_bin));
    }
    let n_bins = q.len() / pulses_per_bin;
    if n_bins == 0 {
        return Err(DspError::NoCompleteBin {
            pulses: q.len(),
            pulses_per_bin,
        });
    }
    let mut warnings = q.warnings.clone();
    let remainder = q.len() % pulses_per_bin;
    if remainder != 0 {
        note(
            &mut warnings,
            format!("{remainder} trailing pulses do not fill a bin of {pulses_per_bin}; dropped"),
        );
    }
    let rel_err = (2.0 / (pulses_per_bin as f64 - 1.0)).sqrt();
    let bins = q
        .values
        .chunks_exact(pulses_per_bin)
        .enumerate()
        .map(|(bin, xs)| {
            let variance = sample_variance(xs);
            VarianceBin {
                bin,
                pulse_start: bin * pulses_per_bin,
                pulse_end: (bin + 1) * pulses_per_bin,
                variance,
                stderr: variance * rel_err,
            }
        })
        .collect();
    Ok(VariancePhaseSeries {
        bins,
        pulses_per_bin,
        n_traces: 1,
        shot_variance: None,
        electronic_variance: None,
        reference_error: None,
        ramp: None,
        warnings,
    })
}

/// Integrates and bins one trace with its own header kernel unless
/// `kernel` overrides it.
pub fn process_trace(
    trace: &HomodyneTrace,
    options: &DspOptions,
) -> Result<VariancePhaseSeries, DspError> {
    let kernel = options.kernel.as_deref().unwrap_or(&trace.header.kernel);
    let q = integrate_pulses(trace, kernel, options.trigger_offset)?;
    let mut series = bin_variances(&q, options.pulses_per_bin)?;
    series.ramp = Some(trace.header.ramp());
    Ok(series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspOptions {
    pub pulses_per_bin: usize,
    pub trigger_offset: usize,
    pub subtract_electronic: bool,
    /// Integration kernel; `None` uses the kernel stored in each trace.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<f64>>,
}

impl Default for DspOptions {
    fn default() -> Self {
        Self {
            pulses_per_bin: DEFAULT_PULSES_PER_BIN,
            trigger_offset: 0,
            subtract_electronic: false,
            kernel: None,
        }
    }
}

/// Per-bin mean across traces with standard error `std/√n`. A single
/// trace keeps its own per-bin errors.
pub fn aggregate_traces(series: &[VariancePhaseSeries]) -> Result<VariancePhaseSeries, DspError> {
    let first = series.first().ok_or(DspError::NoTraces)?;
    for s in &series[1..] {
        first.check_matches(s)?;
    }
    if series.len() == 1 {
        return Ok(first.clone());
    }
    let n = series.len() as f64;
    let bins = (0..first.bins.len())
        .map(|j| {
            let vs: Vec<f64> = series.iter().map(|s| s.bins[j].variance).collect();
            let mean = vs.iter().sum::<f64>() / n;
            VarianceBin {
                variance: mean,
                stderr: (sample_variance(&vs) / n).sqrt(),
                ..first.bins[j]
            }
        })
        .collect();
    let mut warnings: Vec<String> = series.iter().flat_map(|s| s.warnings.clone()).collect();
    warnings.dedup();
    Ok(VariancePhaseSeries {
        bins,
        pulses_per_bin: first.pulses_per_bin,
        n_traces: series.iter().map(|s| s.n_traces).sum(),
        shot_variance: first.shot_variance,
        electronic_variance: first.electronic_variance,
        reference_error: first.reference_error,
        ramp: first.ramp,
        warnings,
    })
}

/// Divides by the mean shot variance (`subtract_electronic = false`) or
/// forms `(v − v_e)/(v_shot − v_e)`. Errors add in quadrature, including
/// the uncertainty of the reference means.
pub fn normalize_to_shot(
    sq: &VariancePhaseSeries,
    shot: &VariancePhaseSeries,
    electronic: &VariancePhaseSeries,
    subtract_electronic: bool,
) -> Result<VariancePhaseSeries, DspError> {
    sq.check_matches(shot)?;
    sq.check_matches(electronic)?;
    let m = shot.mean_variance();
    let sm = shot.mean_stderr();
    let e = electronic.mean_variance();
    let se = electronic.mean_stderr();
    if !(m > 0.0) {
        return Err(DspError::BadReference(m));
    }

    let reference_error;
    let bins = if subtract_electronic {
        let ratio = m / e;
        if !(ratio >= MIN_SHOT_CLEARANCE_RATIO) {
            return Err(DspError::ShotNotClear { ratio });
        }
        let d = m - e;
        reference_error = ReferenceError {
            scale: sm / d,
            offset: se / d,
        };
        sq.bins
            .iter()
            .map(|b| {
                let v = (b.variance - e) / d;
                // ∂v/∂v_sq = 1/d, ∂v/∂m = −v/d, ∂v/∂e = (v − 1)/d
                let err =
                    ((b.stderr / d).powi(2) + (v * sm / d).powi(2) + ((v - 1.0) * se / d).powi(2))
                        .sqrt();
                VarianceBin {
                    variance: v,
                    stderr: err,
                    ..*b
                }
            })
            .collect()
    } else {
        reference_error = ReferenceError {
            scale: sm / m,
            offset: 0.0,
        };
        sq.bins
            .iter()
            .map(|b| {
                let v = b.variance / m;
                let err = ((b.stderr / m).powi(2) + (v * sm / m).powi(2)).sqrt();
                VarianceBin {
                    variance: v,
                    stderr: err,
                    ..*b
                }
            })
            .collect()
    };
    let mut warnings = sq.warnings.clone();
    warnings.extend(shot.warnings.iter().cloned());
    warnings.extend(electronic.warnings.iter().cloned());
    warnings.dedup();
    Ok(VariancePhaseSeries {
        bins,
        pulses_per_bin: sq.pulses_per_bin,
        n_traces: sq.n_traces,
        shot_variance: Some(m),
        electronic_variance: Some(e),
        reference_error: Some(reference_error),
        ramp: sq.ramp,
        warnings,
    })
}

/// Processes each trace independently and aggregates in input order, so
/// the result does not depend on the thread count.
pub fn process_trace_set<T, F>(
    items: &[T],
    load: F,
    options: &DspOptions,
) -> Result<VariancePhaseSeries, DspError>
where
    T: Sync,
    F: Fn(&T) -> Result<HomodyneTrace, DspError> + Sync,
{
    let series = items
        .par_iter()
        .map(|item| process_trace(&load(item)?, options))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_traces(&series)
}

/// Synthesizes and processes a trace set without touching disk. Traces
/// are generated inside the worker that bins them, so memory stays at a
/// few traces whatever `cfg.n_traces` is.
pub fn synthesize_and_process(
    cfg: &AcquisitionConfig,
    s_minus_lin: f64,
    s_plus_lin: f64,
    kind: TraceKind,
    stream: u64,
    options: &DspOptions,
) -> Result<VariancePhaseSeries, DspError> {
    let indices: Vec<usize> = (0..cfg.n_traces).collect();
    process_trace_set(
        &indices,
        |&i| {
            Ok(synthesize_trace(
                &trace_config(cfg, stream, i),
                s_minus_lin,
                s_plus_lin,
                kind,
            )?)
        },
        options,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub s_minus_lin: f64,
    pub s_minus_lin_err: f64,
    pub s_plus_lin: f64,
    pub s_plus_lin_err: f64,
    pub s_minus_db: f64,
    pub s_minus_db_err: f64,
    pub s_plus_db: f64,
    pub s_plus_db_err: f64,
    /// Quadrature phase advance per bin.
    pub ramp_slope_rad: f64,
    pub ramp_slope_err: f64,
    /// Phase at the centre of bin 0, in `[0, π)`.
    pub ramp_offset_rad: f64,
    pub ramp_offset_err: f64,
    /// True when the curve was too flat to locate the ramp and only the
    /// levels were fitted.
    pub ramp_fixed: bool,
    pub n_traces: usize,
    pub n_bins: usize,
    pub reduced_chi2: f64,
    #[serde(skip)]
    pub result: Option<FitResult>,
}

impl PhaseFit {
    /// Fitted phase of every bin centre.
    pub fn bin_phases(&self) -> Vec<f64> {
        (0..self.n_bins)
            .map(|j| self.ramp_offset_rad + self.ramp_slope_rad * j as f64)
            .collect()
    }
}

/// Linear least squares of `c0 + c1·cos(2aj) + c2·sin(2aj)` for a fixed
/// slope. Returns `(M, D, b, weighted SSE)`.
fn harmonic_solve(j: &[f64], v: &[f64], w: &[f64], a: f64) -> Option<(f64, f64, f64, f64)> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for ((&j, &v), &w) in j.iter().zip(v).zip(w) {
        let row = Vector3::new(1.0, (2.0 * a * j).cos(), (2.0 * a * j).sin());
        ata += w * row * row.transpose();
        atb += w * v * row;
    }
    let c = ata.cholesky()?.solve(&atb);
    let sse = j
        .iter()
        .zip(v)
        .zip(w)
        .map(|((&j, &v), &w)| {
            let m = c[0] + c[1] * (2.0 * a * j).cos() + c[2] * (2.0 * a * j).sin();
            w * (v - m).powi(2)
        })
        .sum();
    // −D·s·cos(2aj + 2b) = c1·cos(2aj) + c2·sin(2aj)
    let amp = c[1].hypot(c[2]);
    let s = sinc(a);
    let d = if s.abs() > 1e-3 { amp / s } else { amp };
    let b = 0.5 * c[2].atan2(-c[1]);
    Some((c[0], d, b, sse))
}

fn initial_slope(v: &VariancePhaseSeries, j: &[f64], vals: &[f64], w: &[f64]) -> f64 {
    if let Some(ramp) = v.ramp {
        let slope = (ramp.end_rad - ramp.start_rad) / v.n_bins() as f64;
        if slope != 0.0 && slope.is_finite() {
            return slope;
        }
    }
    // No usable metadata: scan 1/8 to 8 variance periods across the series.
    let n = v.n_bins() as f64;
    (1..=512)
        .map(|i| i as f64 / 64.0 * PI / n)
        .filter_map(|a| harmonic_solve(j, vals, w, a).map(|r| (a, r.3)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map_or(2.0 * PI / n, |r| r.0)
}

/// Pooled relative bin error. Bin errors are close to proportional to the
/// variance, but a per-bin spread over a handful of traces is itself noisy,
/// so weights use this pooled value scaled by a reference curve.
fn pooled_relative_error(v: &VariancePhaseSeries) -> Option<f64> {
    let usable = v
        .bins
        .iter()
        .all(|b| b.stderr > 0.0 && b.stderr.is_finite() && b.variance > 0.0);
    usable.then(|| {
        (v.bins
            .iter()
            .map(|b| (b.stderr / b.variance).powi(2))
            .sum::<f64>()
            / v.n_bins() as f64)
            .sqrt()
    })
}

fn proportional_weights(pooled: Option<f64>, reference: &[f64]) -> Vec<f64> {
    match pooled {
        Some(r) if reference.iter().all(|x| *x > 0.0) => {
            reference.iter().map(|x| 1.0 / (r * x).powi(2)).collect()
        }
        _ => vec![1.0; reference.len()],
    }
}

fn db_err(lin: f64, err: f64) -> f64 {
    10.0 / LN_10 * err / lin
}

/// Weighted fit of the bin-averaged quadrature law to a normalized series.
pub fn fit_phase_curve(v: &VariancePhaseSeries, lm: &LmOptions) -> Result<PhaseFit, DspError> {
    let n = v.n_bins();
    if n < MIN_PHASE_BINS {
        return Err(DspError::TooFewBins(n));
    }
    let j: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let vals = v.variances();
    let pooled = pooled_relative_error(v);
    let weights = proportional_weights(pooled, &vals);

    let a0 = initial_slope(v, &j, &vals, &weights);
    let (m0, d0, b0, _) =
        harmonic_solve(&j, &vals, &weights, a0).ok_or(DspError::Fit(FitError::Singular {
            condition: f64::INFINITY,
        }))?;
    let floor = 1e-12;
    let s_minus0 = (m0 - d0).max(floor);
    let s_plus0 = (m0 + d0).max(s_minus0);

    let residual = |p: &[f64]| -> Vec<f64> {
        j.iter()
            .zip(&vals)
            .map(|(&j, &y)| phase_curve(j, p) - y)
            .collect()
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, 4);
        for (i, &ji) in j.iter().enumerate() {
            let g = phase_curve_gradient(ji, p);
            for (k, gk) in g.iter().enumerate() {
                m[(i, k)] = *gk;
            }
        }
        m
    };
    let bounds = vec![
        (floor, f64::INFINITY),
        (floor, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
    ];

    let solve = |initial: Vec<f64>, weights: Vec<f64>| {
        let problem = FitProblem::new(initial.clone(), residual)
            .with_jacobian(jacobian)
            .with_weights(weights.clone())
            .with_bounds(bounds.clone());
        match levenberg_marquardt(&problem, lm) {
            Ok(r) => Ok((r.params.clone(), r.covariance.clone(), r, false)),
            Err(FitError::Singular { .. }) => {
                // Flat curve: slope and offset are unidentifiable, fit levels only.
                let (a, b) = (initial[2], initial[3]);
                let problem = FitProblem::new(initial[..2].to_vec(), move |p: &[f64]| {
                    residual(&[p[0], p[1], a, b])
                })
                .with_jacobian(move |p: &[f64]| {
                    jacobian(&[p[0], p[1], a, b]).columns(0, 2).into_owned()
                })
                .with_weights(weights)
                .with_bounds(bounds[..2].to_vec());
                let r = levenberg_marquardt(&problem, lm)?;
                let mut cov = vec![vec![0.0; 4]; 4];
                for (r_i, row) in r.covariance.iter().enumerate() {
                    cov[r_i][..2].copy_from_slice(row);
                }
                Ok((vec![r.params[0], r.params[1], a, b], cov, r, true))
            }
            Err(e) => Err(DspError::from(e)),
        }
    };

    let (p, cov, result, ramp_fixed) = solve(vec![s_minus0, s_plus0, a0, b0], weights)?;
    // Weights built from the data favour low-lying bins and bias the levels
    // down; a second pass weights by the fitted curve instead.
    let (mut p, cov, result, ramp_fixed) = if pooled.is_some() {
        let model: Vec<f64> = j.iter().map(|&j| phase_curve(j, &p)).collect();
        solve(p, proportional_weights(pooled, &model))?
    } else {
        (p, cov, result, ramp_fixed)
    };

    let mut cov = cov;
    if p[1] < p[0] {
        // Swapping the levels is the same curve shifted by a quarter turn.
        p.swap(0, 1);
        p[3] += FRAC_PI_2;
        cov.swap(0, 1);
        for row in &mut cov {
            row.swap(0, 1);
        }
    }
    if p[2] < 0.0 {
        // cos is even: (a, b) and (−a, −b) describe the same curve.
        p[2] = -p[2];
        p[3] = -p[3];
    }
    p[3] = p[3].rem_euclid(PI);
    let err = |i: usize| cov[i][i].max(0.0).sqrt();
    // The fit sees only bin-to-bin scatter; the shared reference error is
    // added to the levels afterwards.
    let level_err = |i: usize| {
        let common = v.reference_error.map_or(0.0, |r| r.variance_at(p[i]));
        (cov[i][i].max(0.0) + common).sqrt()
    };

    Ok(PhaseFit {
        s_minus_lin: p[0],
        s_minus_lin_err: level_err(0),
        s_plus_lin: p[1],
        s_plus_lin_err: level_err(1),
        s_minus_db: linear_to_db(p[0]),
        s_minus_db_err: db_err(p[0], level_err(0)),
        s_plus_db: linear_to_db(p[1]),
        s_plus_db_err: db_err(p[1], level_err(1)),
        ramp_slope_rad: p[2],
        ramp_slope_err: err(2),
        ramp_offset_rad: p[3],
        ramp_offset_err: err(3),
        ramp_fixed,
        n_traces: v.n_traces,
        n_bins: n,
        reduced_chi2: result.reduced_chi2(),
        result: Some(result),
    })
}

/// Rounds a dB value for serialization.
pub fn round_db(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// JSON summary of a processed trace set; dB values carry four decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSummary {
    pub s_minus_db: f64,
    pub s_plus_db: f64,
    pub s_minus_db_err: f64,
    pub s_plus_db_err: f64,
    pub s_minus_lin: f64,
    pub s_plus_lin: f64,
    pub s_minus_lin_err: f64,
    pub s_plus_lin_err: f64,
    pub ramp_slope_rad: f64,
    pub ramp_offset_rad: f64,
    pub ramp_fixed: bool,
    pub n_traces: usize,
    pub n_bins: usize,
    pub reduced_chi2: f64,
}

impl From<&PhaseFit> for PhaseSummary {
    fn from(f: &PhaseFit) -> Self {
        Self {
            s_minus_db: round_db(f.s_minus_db),
            s_plus_db: round_db(f.s_plus_db),
            s_minus_db_err: round_db(f.s_minus_db_err),
            s_plus_db_err: round_db(f.s_plus_db_err),
            s_minus_lin: f.s_minus_lin,
            s_plus_lin: f.s_plus_lin,
            s_minus_lin_err: f.s_minus_lin_err,
            s_plus_lin_err: f.s_plus_lin_err,
            ramp_slope_rad: f.ramp_slope_rad,
            ramp_offset_rad: f.ramp_offset_rad,
            ramp_fixed: f.ramp_fixed,
            n_traces: f.n_traces,
            n_bins: f.n_bins,
            reduced_chi2: f.reduced_chi2,
        }
    }
}

/// Writes `bin,phase_rad,variance,stderr`.
pub fn write_variance_csv<W: Write>(
    v: &VariancePhaseSeries,
    phases: &[f64],
    w: W,
) -> Result<(), DspError> {
    if phases.len() != v.n_bins() {
        return Err(DspError::BinMismatch(format!(
            "{} phases for {} bins",
            phases.len(),
            v.n_bins()
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin", "phase_rad", "variance", "stderr"])?;
    for (b, phase) in v.bins.iter().zip(phases) {
        out.write_record([
            b.bin.to_string(),
            phase.to_string(),
            b.variance.to_string(),
            b.stderr.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
