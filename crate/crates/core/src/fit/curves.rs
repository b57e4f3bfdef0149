//! Gain-versus-power and squeezing-versus-power fits.
//!
//! Both curves follow `η·exp(±2√(αP)) + 1 − η`. The plus and minus branches
//! are fitted jointly with shared parameters.

use super::lm::{levenberg_marquardt, FitError, FitProblem, FitResult, LmOptions};
use super::models::{amplifier, amplifier_gradient};
use crate::physics::{db_to_linear, linear_to_db};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_10;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

impl FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "+" | "+1" | "1" | "plus" => Ok(Branch::Plus),
            "-" | "-1" | "minus" => Ok(Branch::Minus),
            other => Err(format!("unknown branch {other:?}")),
        }
    }
}

/// One measured point of a gain or squeezing curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub peak_power_w: f64,
    pub value_db: f64,
    pub branch: Branch,
    /// One-sigma uncertainty of `value_db`.
    pub sigma_db: Option<f64>,
}

/// Space in which residuals are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSpace {
    #[default]
    Linear,
    Decibel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaMode {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurveFitOptions {
    pub space: DataSpace,
    pub lm: LmOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub eta: f64,
    pub eta_err: f64,
    pub alpha_per_w: f64,
    pub alpha_err: f64,
    pub alpha_fixed: bool,
    pub result: FitResult,
}

fn validate_points(points: &[CurvePoint], n_params: usize) -> Result<(), FitError> {
    if points.len() < n_params {
        return Err(FitError::Underdetermined {
            residuals: points.len(),
            params: n_params,
        });
    }
    for p in points {
        if !(p.peak_power_w >= 0.0 && p.peak_power_w.is_finite() && p.value_db.is_finite()) {
            return Err(FitError::InvalidProblem(format!("bad data point {p:?}")));
        }
    }
    Ok(())
}

/// Per-point weights in the chosen space, or `None` when any point lacks
/// an uncertainty.
fn weights(points: &[CurvePoint], space: DataSpace) -> Option<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let s = p.sigma_db.filter(|s| *s > 0.0 && s.is_finite())?;
            let sigma = match space {
                DataSpace::Decibel => s,
                DataSpace::Linear => db_to_linear(p.value_db) * LN_10 / 10.0 * s,
            };
            Some(1.0 / (sigma * sigma))
        })
        .collect()
}

/// Heuristic starting point. The highest power measured on both branches
/// gives `η` and `α` in closed form, since `(G+ + G− − 2)/(G+ − G−)`
/// equals `tanh(x/2)`. With `α` known, `η` comes from the strongest
/// anti-squeezing (or squeezing) point; otherwise `α` follows from the
/// small-signal slope `|G − 1| ≈ 2η√(αP)`.
fn initial_guess(points: &[CurvePoint], alpha: Option<f64>, default_eta: f64) -> (f64, f64) {
    let clamp_eta = |e: f64| {
        if e.is_finite() {
            e.clamp(0.01, 1.0)
        } else {
            default_eta
        }
    };
    let clamp_alpha = |a: f64| {
        if a.is_finite() {
            a.clamp(1e-6, 100.0)
        } else {
            0.1
        }
    };

    if let Some(alpha) = alpha {
        let best = points
            .iter()
            .filter(|p| p.peak_power_w > 0.0)
            .max_by(|a, b| {
                (a.branch == Branch::Plus, a.peak_power_w)
                    .partial_cmp(&(b.branch == Branch::Plus, b.peak_power_w))
                    .unwrap()
            });
        let eta = best.map_or(default_eta, |p| {
            let x = 2.0 * (alpha * p.peak_power_w).sqrt();
            let v = db_to_linear(p.value_db);
            match p.branch {
                Branch::Plus => (v - 1.0) / (x.exp() - 1.0),
                Branch::Minus => (1.0 - v) / (1.0 - (-x).exp()),
            }
        });
        return (clamp_eta(eta), alpha);
    }

    let mut pair: Option<(f64, f64, f64)> = None;
    for p in points
        .iter()
        .filter(|p| p.branch == Branch::Plus && p.peak_power_w > 0.0)
    {
        if let Some(m) = points
            .iter()
            .find(|m| m.branch == Branch::Minus && m.peak_power_w == p.peak_power_w)
        {
            if pair.is_none_or(|(power, _, _)| p.peak_power_w > power) {
                pair = Some((
                    p.peak_power_w,
                    db_to_linear(p.value_db),
                    db_to_linear(m.value_db),
                ));
            }
        }
    }
    if let Some((power, plus, minus)) = pair {
        let s = 0.5 * (plus - minus);
        let c = 0.5 * (plus + minus - 2.0);
        if s > 0.0 && c > 0.0 && c < s {
            let x = 2.0 * (c / s).atanh();
            return (clamp_eta(s / x.sinh()), clamp_alpha(x * x / (4.0 * power)));
        }
    }

    let eta = default_eta;
    let alpha = points
        .iter()
        .filter(|p| p.peak_power_w > 0.0)
        .min_by(|a, b| a.peak_power_w.partial_cmp(&b.peak_power_w).unwrap())
        .map_or(0.1, |p| {
            let dev = (db_to_linear(p.value_db) - 1.0).abs();
            (dev / (2.0 * eta)).powi(2) / p.peak_power_w
        });
    (eta, clamp_alpha(alpha))
}

fn model_residuals(points: &[CurvePoint], space: DataSpace, eta: f64, alpha: f64) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let m = amplifier(p.peak_power_w, p.branch.sign(), eta, alpha);
            match space {
                DataSpace::Linear => m - db_to_linear(p.value_db),
                DataSpace::Decibel => linear_to_db(m) - p.value_db,
            }
        })
        .collect()
}

fn model_gradient(p: &CurvePoint, space: DataSpace, eta: f64, alpha: f64) -> [f64; 2] {
    let g = amplifier_gradient(p.peak_power_w, p.branch.sign(), eta, alpha);
    match space {
        DataSpace::Linear => g,
        DataSpace::Decibel => {
            let m = amplifier(p.peak_power_w, p.branch.sign(), eta, alpha);
            let k = 10.0 / (LN_10 * m);
            [g[0] * k, g[1] * k]
        }
    }
}

/// Analytic Jacobian of the two-parameter residuals, exposed for checks.
pub fn curve_jacobian(points: &[CurvePoint], space: DataSpace, params: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(points.len(), 2);
    for (i, p) in points.iter().enumerate() {
        let g = model_gradient(p, space, params[0], params[1]);
        j[(i, 0)] = g[0];
        j[(i, 1)] = g[1];
    }
    j
}

/// Residuals of the two-parameter model, exposed for checks.
pub fn curve_residuals(points: &[CurvePoint], space: DataSpace, params: &[f64]) -> Vec<f64> {
    model_residuals(points, space, params[0], params[1])
}

fn fit_two_parameter(
    points: &[CurvePoint],
    options: &CurveFitOptions,
    default_eta: f64,
) -> Result<CurveFit, FitError> {
    validate_points(points, 2)?;
    let space = options.space;
    let (eta0, alpha0) = initial_guess(points, None, default_eta);
    let mut problem = FitProblem::new(vec![eta0, alpha0], move |p| {
        model_residuals(points, space, p[0], p[1])
    })
    .with_jacobian(move |p| curve_jacobian(points, space, p))
    .with_bounds(vec![(0.0, 1.0), (0.0, f64::INFINITY)]);
    if let Some(w) = weights(points, space) {
        problem = problem.with_weights(w);
    }
    let result = levenberg_marquardt(&problem, &options.lm)?;
    Ok(CurveFit {
        eta: result.params[0],
        eta_err: result.std_errors[0],
        alpha_per_w: result.params[1],
        alpha_err: result.std_errors[1],
        alpha_fixed: false,
        result,
    })
}

/// Joint fit of amplification and deamplification data for the
/// mode-matching `η_mm` and conversion efficiency `α`.
pub fn fit_gain_curve(
    points: &[CurvePoint],
    options: &CurveFitOptions,
) -> Result<CurveFit, FitError> {
    fit_two_parameter(points, options, 0.9)
}

/// Fit of squeezing and anti-squeezing levels for the total detection
/// efficiency `η`, with `α` either pinned to an independent measurement or
/// floated.
pub fn fit_squeezing_curve(
    points: &[CurvePoint],
    alpha: AlphaMode,
    options: &CurveFitOptions,
) -> Result<CurveFit, FitError> {
    let alpha = match alpha {
        AlphaMode::Free => return fit_two_parameter(points, options, 0.5),
        AlphaMode::Fixed(a) if a >= 0.0 && a.is_finite() => a,
        AlphaMode::Fixed(a) => {
            return Err(FitError::InvalidProblem(format!(
                "fixed alpha {a} must be nonnegative"
            )))
        }
    };
    validate_points(points, 1)?;
    let space = options.space;
    let (eta0, _) = initial_guess(points, Some(alpha), 0.5);
    let mut problem = FitProblem::new(vec![eta0], move |p| {
        model_residuals(points, space, p[0], alpha)
    })
    .with_jacobian(move |p| {
        let mut j = DMatrix::zeros(points.len(), 1);
        for (i, pt) in points.iter().enumerate() {
            j[(i, 0)] = model_gradient(pt, space, p[0], alpha)[0];
        }
        j
    })
    .with_bounds(vec![(0.0, 1.0)]);
    if let Some(w) = weights(points, space) {
        problem = problem.with_weights(w);
    }
    let result = levenberg_marquardt(&problem, &options.lm)?;
    Ok(CurveFit {
        eta: result.params[0],
        eta_err: result.std_errors[0],
        alpha_per_w: alpha,
        alpha_err: 0.0,
        alpha_fixed: true,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;

    fn synthetic(
        eta: f64,
        alpha: f64,
        powers: &[f64],
        noise_db: f64,
        seed: u64,
    ) -> Vec<CurvePoint> {
        let mut g = NormalStream::new(seed);
        let mut out = Vec::new();
        for &p in powers {
            for branch in [Branch::Plus, Branch::Minus] {
                let v = linear_to_db(amplifier(p, branch.sign(), eta, alpha));
                out.push(CurvePoint {
                    peak_power_w: p,
                    value_db: v + noise_db * g.next_normal(),
                    branch,
                    sigma_db: (noise_db > 0.0).then_some(noise_db),
                });
            }
        }
        out
    }

    fn powers() -> Vec<f64> {
        (1..=8).map(|i| 0.29 * i as f64 / 8.0).collect()
    }

    #[test]
    fn noiseless_gain_recovery() {
        let pts = synthetic(0.95, 0.28, &powers(), 0.0, 0);
        let fit = fit_gain_curve(&pts, &CurveFitOptions::default()).unwrap();
        assert!((fit.eta - 0.95).abs() < 1e-6);
        assert!((fit.alpha_per_w - 0.28).abs() < 1e-6);
    }

    #[test]
    fn noiseless_recovery_from_poor_start_and_single_branch() {
        let pts: Vec<_> = synthetic(0.6, 0.5, &powers(), 0.0, 0)
            .into_iter()
            .filter(|p| p.branch == Branch::Plus)
            .collect();
        let fit = fit_gain_curve(&pts, &CurveFitOptions::default()).unwrap();
        assert!((fit.eta - 0.6).abs() < 1e-5);
        assert!((fit.alpha_per_w - 0.5).abs() < 1e-5);
    }

    #[test]
    fn squeezing_fit_fixed_and_free_alpha() {
        let pts = synthetic(0.22, 0.28, &powers(), 0.0, 0);
        let fixed =
            fit_squeezing_curve(&pts, AlphaMode::Fixed(0.28), &CurveFitOptions::default()).unwrap();
        assert!((fixed.eta - 0.22).abs() < 1e-9);
        assert!(fixed.alpha_fixed);
        let free = fit_squeezing_curve(&pts, AlphaMode::Free, &CurveFitOptions::default()).unwrap();
        assert!((free.eta - 0.22).abs() < 1e-6);
        assert!((free.alpha_per_w - 0.28).abs() < 1e-6);
    }

    #[test]
    fn linear_and_db_spaces_agree() {
        let pts = synthetic(0.95, 0.28, &powers(), 0.02, 17);
        let lin = fit_gain_curve(&pts, &CurveFitOptions::default()).unwrap();
        let db = fit_gain_curve(
            &pts,
            &CurveFitOptions {
                space: DataSpace::Decibel,
                ..Default::default()
            },
        )
        .unwrap();
        let combined = (lin.eta_err.powi(2) + db.eta_err.powi(2)).sqrt();
        assert!((lin.eta - db.eta).abs() < combined);
        let combined = (lin.alpha_err.powi(2) + db.alpha_err.powi(2)).sqrt();
        assert!((lin.alpha_per_w - db.alpha_per_w).abs() < combined);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let pts = synthetic(0.8, 0.3, &powers(), 0.0, 0);
        for space in [DataSpace::Linear, DataSpace::Decibel] {
            let p = [0.7, 0.4];
            let a = curve_jacobian(&pts, space, &p);
            let f = super::super::lm::finite_difference_jacobian(
                |q| curve_residuals(&pts, space, q),
                &p,
                None,
            );
            for i in 0..pts.len() {
                for k in 0..2 {
                    assert!((a[(i, k)] - f[(i, k)]).abs() <= 1e-6 * a[(i, k)].abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn too_few_points() {
        let pts = synthetic(0.9, 0.3, &[0.1], 0.0, 0);
        assert!(fit_gain_curve(&pts[..1], &CurveFitOptions::default()).is_err());
        assert!(fit_squeezing_curve(
            &pts[..0],
            AlphaMode::Fixed(0.3),
            &CurveFitOptions::default()
        )
        .is_err());
    }

    #[test]
    fn branch_parsing() {
        assert_eq!("+".parse::<Branch>().unwrap(), Branch::Plus);
        assert_eq!("minus".parse::<Branch>().unwrap(), Branch::Minus);
        assert!("x".parse::<Branch>().is_err());
    }
}
