//! Nonlinear least squares and the gain, squeezing and phase-curve fits.

mod curves;
mod lm;
pub mod models;

pub use curves::{
    curve_jacobian, curve_residuals, fit_gain_curve, fit_squeezing_curve, AlphaMode, Branch,
    CurveFit, CurveFitOptions, CurvePoint, DataSpace,
};
pub use lm::{
    finite_difference_jacobian, levenberg_marquardt, FitError, FitProblem, FitResult, Jacobian,
    LmOptions, Termination,
};
