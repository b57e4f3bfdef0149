//! Model functions and their analytic derivatives.

use crate::qpm::sinc;

/// `η·exp(s·2√(αP)) + 1 − η` with params `[η, α]`.
pub fn amplifier(power_w: f64, sign: f64, eta: f64, alpha: f64) -> f64 {
    let x = 2.0 * (alpha.max(0.0) * power_w).sqrt();
    eta * (sign * x).exp() + 1.0 - eta
}

/// `[∂/∂η, ∂/∂α]` of [`amplifier`].
pub fn amplifier_gradient(power_w: f64, sign: f64, eta: f64, alpha: f64) -> [f64; 2] {
    if power_w == 0.0 {
        return [0.0, 0.0];
    }
    // dx/dα = √(P/α); floored so the α = 0 bound stays finite.
    let alpha = alpha.max(1e-12);
    let x = 2.0 * (alpha * power_w).sqrt();
    let e = (sign * x).exp();
    [e - 1.0, eta * e * sign * (power_w / alpha).sqrt()]
}

/// Bin-averaged quadrature variance along a linear phase ramp.
///
/// Params `[S−, S+, a, b]`; bin `j` spans phases `a·j + b ± a/2`, so the
/// pointwise law `S+·sin²φ + S−·cos²φ` averages to
/// `M − D·sinc(a)·cos(2(a·j + b))` with `M = (S+ + S−)/2`, `D = (S+ − S−)/2`.
pub fn phase_curve(bin: f64, p: &[f64]) -> f64 {
    let (s_minus, s_plus, a, b) = (p[0], p[1], p[2], p[3]);
    let mean = 0.5 * (s_plus + s_minus);
    let half_span = 0.5 * (s_plus - s_minus);
    mean - half_span * sinc(a) * (2.0 * (a * bin + b)).cos()
}

fn sinc_derivative(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        -x / 3.0 + x.powi(3) / 30.0
    } else {
        (x * x.cos() - x.sin()) / (x * x)
    }
}

pub fn phase_curve_gradient(bin: f64, p: &[f64]) -> [f64; 4] {
    let (s_minus, s_plus, a, b) = (p[0], p[1], p[2], p[3]);
    let half_span = 0.5 * (s_plus - s_minus);
    let phi2 = 2.0 * (a * bin + b);
    let (sin2, cos2) = phi2.sin_cos();
    let sa = sinc(a);
    [
        0.5 + 0.5 * sa * cos2,
        0.5 - 0.5 * sa * cos2,
        -half_span * (sinc_derivative(a) * cos2 - sa * sin2 * 2.0 * bin),
        2.0 * half_span * sa * sin2,
    ]
}
