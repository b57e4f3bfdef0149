//! Closed-form models tying pump power to parametric gain, measured
//! squeezing and detection efficiency, plus the loss-budget algebra.
//!
//! Every decibel value here is a power ratio (`10·log10`). Gains and
//! squeezing levels share one functional form,
//!
//! ```text
//! X± = η · exp(±2·sqrt(α·P)) + 1 − η
//! ```
//!
//! where `α` is the single-pass conversion efficiency in 1/W, `P` the peak
//! pump power and `η` either the seed/pump mode-matching (gain) or the total
//! detection efficiency (squeezing).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Peak-power factor for a flat-top pulse, `peak = energy / fwhm`.
pub const SHAPE_FLAT: f64 = 1.0;
/// Peak-power factor for a sech² pulse.
pub const SHAPE_SECH2: f64 = 0.8814;
/// Peak-power factor for a Gaussian pulse.
pub const SHAPE_GAUSSIAN: f64 = 0.9394;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error(
        "measured variance {measured_lin} lies below the loss floor {floor} for eta_ext = {eta_ext}"
    )]
    BelowLossFloor {
        measured_lin: f64,
        floor: f64,
        eta_ext: f64,
    },
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> PhysicsError {
    PhysicsError::InvalidParameter {
        name,
        value,
        reason,
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<f64, PhysicsError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(invalid(name, value, "must lie in [0, 1]"))
    }
}

fn check_nonnegative(name: &'static str, value: f64) -> Result<f64, PhysicsError> {
    if value >= 0.0 && !value.is_nan() {
        Ok(value)
    } else {
        Err(invalid(name, value, "must be nonnegative"))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Passes a quadrature variance through a channel of efficiency `eta`.
pub fn apply_loss(variance_lin: f64, eta: f64) -> f64 {
    eta * variance_lin + 1.0 - eta
}

/// Chip parameters entering the model. Poling period and temperature are
/// carried as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideParams {
    pub length_m: f64,
    /// Normalized SHG efficiency as a fraction per watt per cm² (127 %/Wcm² is 1.27).
    pub norm_efficiency: f64,
    pub prop_loss_db_per_cm: f64,
    /// Group-velocity mismatch between harmonic and fundamental.
    pub gvm_ps_per_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
}

impl WaveguideParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.length_m > 0.0) {
            return Err(invalid("length_m", self.length_m, "must be positive"));
        }
        check_nonnegative("norm_efficiency", self.norm_efficiency)?;
        check_nonnegative("prop_loss_db_per_cm", self.prop_loss_db_per_cm)?;
        Ok(())
    }

    pub fn length_cm(&self) -> f64 {
        self.length_m * 100.0
    }

    /// Single-pass conversion efficiency `α` in 1/W.
    pub fn alpha_per_w(&self) -> f64 {
        self.norm_efficiency * self.length_cm().powi(2)
    }

    /// Transmission of the full waveguide length.
    pub fn transmission(&self) -> f64 {
        db_to_linear(-self.prop_loss_db_per_cm * self.length_cm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pub avg_power_w: f64,
    pub rep_rate_hz: f64,
    pub fwhm_s: f64,
    /// `peak = shape_factor × energy / fwhm`.
    pub shape_factor: f64,
}

impl PulseTrain {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.rep_rate_hz > 0.0) {
            return Err(invalid("rep_rate_hz", self.rep_rate_hz, "must be positive"));
        }
        if !(self.fwhm_s > 0.0) {
            return Err(invalid("fwhm_s", self.fwhm_s, "must be positive"));
        }
        if !(self.shape_factor > 0.0 && self.shape_factor <= 1.2) {
            return Err(invalid(
                "shape_factor",
                self.shape_factor,
                "must lie in (0, 1.2]",
            ));
        }
        check_nonnegative("avg_power_w", self.avg_power_w)?;
        Ok(())
    }

    pub fn pulse_energy_j(&self) -> f64 {
        self.avg_power_w / self.rep_rate_hz
    }

    pub fn with_avg_power(self, avg_power_w: f64) -> Self {
        Self {
            avg_power_w,
            ..self
        }
    }
}

pub fn peak_power(p: &PulseTrain) -> Result<f64, PhysicsError> {
    p.validate()?;
    Ok(p.shape_factor * p.pulse_energy_j() / p.fwhm_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainResult {
    pub g_plus_db: f64,
    pub g_minus_db: f64,
    pub g_plus_lin: f64,
    pub g_minus_lin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingLevels {
    pub s_minus_lin: f64,
    pub s_plus_lin: f64,
    pub s_minus_db: f64,
    pub s_plus_db: f64,
}

impl SqueezingLevels {
    pub fn from_linear(s_minus_lin: f64, s_plus_lin: f64) -> Self {
        Self {
            s_minus_lin,
            s_plus_lin,
            s_minus_db: linear_to_db(s_minus_lin),
            s_plus_db: linear_to_db(s_plus_lin),
        }
    }
}

/// Evaluates `η·exp(sign·2·sqrt(αP)) + 1 − η` for `sign = ±1`.
pub fn amplifier_response(peak_power_w: f64, alpha_per_w: f64, eta: f64, sign: f64) -> f64 {
    let x = 2.0 * (alpha_per_w * peak_power_w).sqrt();
    eta * (sign * x).exp() + 1.0 - eta
}

fn check_model_inputs(
    peak_power_w: f64,
    alpha_per_w: f64,
    eta_name: &'static str,
    eta: f64,
) -> Result<(), PhysicsError> {
    check_nonnegative("peak_power_w", peak_power_w)?;
    check_nonnegative("alpha_per_w", alpha_per_w)?;
    check_fraction(eta_name, eta)?;
    Ok(())
}

pub fn parametric_gain(
    peak_power_w: f64,
    alpha_per_w: f64,
    eta_mm: f64,
) -> Result<GainResult, PhysicsError> {
    check_model_inputs(peak_power_w, alpha_per_w, "eta_mm", eta_mm)?;
    let g_plus_lin = amplifier_response(peak_power_w, alpha_per_w, eta_mm, 1.0);
    let g_minus_lin = amplifier_response(peak_power_w, alpha_per_w, eta_mm, -1.0);
    Ok(GainResult {
        g_plus_db: linear_to_db(g_plus_lin),
        g_minus_db: linear_to_db(g_minus_lin),
        g_plus_lin,
        g_minus_lin,
    })
}

pub fn squeezing_levels(
    peak_power_w: f64,
    alpha_per_w: f64,
    eta_total: f64,
) -> Result<SqueezingLevels, PhysicsError> {
    check_model_inputs(peak_power_w, alpha_per_w, "eta_total", eta_total)?;
    Ok(SqueezingLevels::from_linear(
        amplifier_response(peak_power_w, alpha_per_w, eta_total, -1.0),
        amplifier_response(peak_power_w, alpha_per_w, eta_total, 1.0),
    ))
}

/// Effective efficiency of a detector whose shot noise sits `clearance_db`
/// above its electronic noise floor.
pub fn electronic_efficiency(clearance_db: f64) -> Result<f64, PhysicsError> {
    check_nonnegative("clearance_db", clearance_db)?;
    Ok(1.0 - db_to_linear(-clearance_db))
}

/// Mode-overlap efficiency from interference visibility (`V²`).
pub fn visibility_to_efficiency(v: f64) -> Result<f64, PhysicsError> {
    check_fraction("visibility", v)?;
    Ok(v * v)
}

/// Multiplicative efficiency chain from the waveguide to the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBudget {
    pub eta_waveguide: f64,
    pub eta_optics: f64,
    /// Signal/LO mode overlap, the square of the visibility.
    pub eta_visibility: f64,
    pub eta_quantum: f64,
    pub eta_electronic: f64,
}

impl DetectionBudget {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        check_fraction("eta_waveguide", self.eta_waveguide)?;
        check_fraction("eta_optics", self.eta_optics)?;
        check_fraction("eta_visibility", self.eta_visibility)?;
        check_fraction("eta_quantum", self.eta_quantum)?;
        check_fraction("eta_electronic", self.eta_electronic)?;
        Ok(())
    }

    /// Homodyne detector efficiency: overlap × quantum efficiency × electronic.
    pub fn homodyne(&self) -> f64 {
        self.eta_visibility * self.eta_quantum * self.eta_electronic
    }

    /// Everything after the waveguide output facet.
    pub fn external(&self) -> f64 {
        self.eta_optics * self.homodyne()
    }

    pub fn total(&self) -> f64 {
        self.eta_waveguide * self.external()
    }
}

/// Product of the chain as `(fraction, dB)`.
pub fn budget_total(b: &DetectionBudget) -> Result<(f64, f64), PhysicsError> {
    b.validate()?;
    let total = b.total();
    Ok((total, linear_to_db(total)))
}

/// Undoes an external loss `eta_ext` on a measured squeezing level.
pub fn infer_onchip_squeezing(measured_db: f64, eta_ext: f64) -> Result<f64, PhysicsError> {
    if !(eta_ext > 0.0 && eta_ext <= 1.0) {
        return Err(invalid("eta_ext", eta_ext, "must lie in (0, 1]"));
    }
    let measured_lin = db_to_linear(measured_db);
    let floor = 1.0 - eta_ext;
    if !(measured_lin > floor) {
        return Err(PhysicsError::BelowLossFloor {
            measured_lin,
            floor,
            eta_ext,
        });
    }
    Ok(linear_to_db((measured_lin - floor) / eta_ext))
}

/// Scales a normalized efficiency (%/Wcm²) to a device of `length_cm` (%/W).
pub fn normalized_to_total_efficiency(norm_pct_per_w_cm2: f64, length_cm: f64) -> f64 {
    norm_pct_per_w_cm2 * length_cm * length_cm
}
