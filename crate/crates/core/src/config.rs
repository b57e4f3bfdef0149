//! Run configuration: one strict JSON document shared by all subcommands.

use crate::dsp::DspOptions;
use crate::fit::{AlphaMode, CurveFitOptions, DataSpace, LmOptions};
use crate::physics::{
    self, db_to_linear, DetectionBudget, PhysicsError, PulseTrain, WaveguideParams, SHAPE_FLAT,
};
use crate::qpm::FilterShape;
use crate::synth::{AcquisitionConfig, SweepPlan};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("referenced file {0} does not exist")]
    MissingFile(PathBuf),
}

impl From<PhysicsError> for ConfigError {
    fn from(e: PhysicsError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideConfig {
    pub length_m: f64,
    /// Normalized SHG efficiency in %/(W·cm²).
    pub norm_eff: f64,
    pub loss_db_per_cm: f64,
    pub gvm_ps_per_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
}

impl Default for WaveguideConfig {
    fn default() -> Self {
        Self {
            length_m: 4.7e-3,
            norm_eff: 127.0,
            loss_db_per_cm: 0.6,
            gvm_ps_per_mm: 0.3128,
            poling_period_um: 4.93,
            temperature_c: 25.0,
        }
    }
}

impl WaveguideConfig {
    pub fn params(&self) -> WaveguideParams {
        WaveguideParams {
            length_m: self.length_m,
            norm_efficiency: self.norm_eff / 100.0,
            prop_loss_db_per_cm: self.loss_db_per_cm,
            gvm_ps_per_mm: self.gvm_ps_per_mm,
            poling_period_um: self.poling_period_um,
            temperature_c: self.temperature_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsesConfig {
    pub avg_power_w: f64,
    pub rep_rate_hz: f64,
    pub fwhm_s: f64,
    pub shape_factor: f64,
}

impl Default for PulsesConfig {
    fn default() -> Self {
        Self {
            avg_power_w: 310e-6,
            rep_rate_hz: 1e8,
            fwhm_s: 12e-12,
            shape_factor: SHAPE_FLAT,
        }
    }
}

impl PulsesConfig {
    pub fn train(&self) -> PulseTrain {
        PulseTrain {
            avg_power_w: self.avg_power_w,
            rep_rate_hz: self.rep_rate_hz,
            fwhm_s: self.fwhm_s,
            shape_factor: self.shape_factor,
        }
    }
}

/// Detection chain. Each efficiency may be given directly or through the
/// raw quantity it derives from, but not both. Unset entries fall back to
/// built-in values; the waveguide term then follows from the propagation
/// loss and length, the electronic term from the acquisition clearance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_waveguide: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveguide_loss_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_optics: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optics_loss_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_visibility: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_quantum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_electronic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clearance_db: Option<f64>,
    /// Measured squeezing to refer back to the chip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_squeezing_db: Option<f64>,
}

pub const DEFAULT_OPTICS_LOSS_DB: f64 = 4.57;
pub const DEFAULT_ETA_VISIBILITY: f64 = 0.85;
pub const DEFAULT_ETA_QUANTUM: f64 = 0.98;
pub const DEFAULT_MEASURED_SQUEEZING_DB: f64 = -0.33;

fn one_of(
    direct: Option<f64>,
    raw: Option<f64>,
    names: (&str, &str),
    convert: impl Fn(f64) -> Result<f64, PhysicsError>,
) -> Result<Option<f64>, ConfigError> {
    match (direct, raw) {
        (Some(_), Some(_)) => Err(ConfigError::Invalid(format!(
            "budget sets both {} and {}",
            names.0, names.1
        ))),
        (Some(d), None) => Ok(Some(d)),
        (None, Some(r)) => Ok(Some(convert(r)?)),
        (None, None) => Ok(None),
    }
}

fn loss_to_eta(db: f64) -> Result<f64, PhysicsError> {
    if db >= 0.0 && db.is_finite() {
        Ok(db_to_linear(-db))
    } else {
        Err(PhysicsError::InvalidParameter {
            name: "loss_db",
            value: db,
            reason: "must be a nonnegative loss in dB",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedBudget {
    pub budget: DetectionBudget,
    pub measured_squeezing_db: f64,
}

impl BudgetConfig {
    pub fn resolve(
        &self,
        waveguide: &WaveguideParams,
        acquisition_clearance_db: f64,
    ) -> Result<ResolvedBudget, ConfigError> {
        let eta_waveguide = one_of(
            self.eta_waveguide,
            self.waveguide_loss_db,
            ("eta_waveguide", "waveguide_loss_db"),
            loss_to_eta,
        )?
        .unwrap_or_else(|| waveguide.transmission());
        let eta_optics = one_of(
            self.eta_optics,
            self.optics_loss_db,
            ("eta_optics", "optics_loss_db"),
            loss_to_eta,
        )?
        .unwrap_or_else(|| db_to_linear(-DEFAULT_OPTICS_LOSS_DB));
        let eta_visibility = one_of(
            self.eta_visibility,
            self.visibility,
            ("eta_visibility", "visibility"),
            physics::visibility_to_efficiency,
        )?
        .unwrap_or(DEFAULT_ETA_VISIBILITY);
        let eta_electronic = match one_of(
            self.eta_electronic,
            self.clearance_db,
            ("eta_electronic", "clearance_db"),
            physics::electronic_efficiency,
        )? {
            Some(e) => e,
            None => physics::electronic_efficiency(acquisition_clearance_db)?,
        };
        let budget = DetectionBudget {
            eta_waveguide,
            eta_optics,
            eta_visibility,
            eta_quantum: self.eta_quantum.unwrap_or(DEFAULT_ETA_QUANTUM),
            eta_electronic,
        };
        budget.validate()?;
        Ok(ResolvedBudget {
            budget,
            measured_squeezing_db: self
                .measured_squeezing_db
                .unwrap_or(DEFAULT_MEASURED_SQUEEZING_DB),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Fix `α` in the squeezing fit to the sweep's conversion efficiency.
    pub fix_alpha: bool,
    #[serde(default)]
    pub space: DataSpace,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            fix_alpha: true,
            space: DataSpace::Linear,
        }
    }
}

impl FitConfig {
    pub fn lm(&self) -> LmOptions {
        LmOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..LmOptions::default()
        }
    }

    pub fn curve_options(&self) -> CurveFitOptions {
        CurveFitOptions {
            space: self.space,
            lm: self.lm(),
        }
    }
}

/// Pump powers for `simulate`, with the model parameters used to turn them
/// into squeezing levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub avg_powers_w: Vec<f64>,
    /// Defaults to the waveguide's `norm_eff × L²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_per_w: Option<f64>,
    /// Defaults to the detection budget total.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_total: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            avg_powers_w: vec![50e-6, 100e-6, 150e-6, 200e-6, 250e-6, 310e-6],
            alpha_per_w: None,
            eta_total: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasematchConfig {
    /// CSV with `band,wavelength_nm,n_eff,n_g`; relative paths resolve
    /// against the config file. Without it the waveguide GVM is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion_csv: Option<PathBuf>,
    pub fundamental_nm: f64,
    pub grid_points: usize,
    /// Grid half-width in units of `ΔkL/2`.
    pub max_half_phase_rad: f64,
    pub boundary_jitter: f64,
    pub missing_flip_prob: f64,
    pub defect_seed: u64,
    pub filter_fwhm_hz: f64,
    pub filter_shape: FilterShape,
}

impl Default for PhasematchConfig {
    fn default() -> Self {
        Self {
            dispersion_csv: None,
            fundamental_nm: 1556.6,
            grid_points: 401,
            max_half_phase_rad: 4.0 * std::f64::consts::PI,
            boundary_jitter: 0.05,
            missing_flip_prob: 0.0,
            defect_seed: 7,
            filter_fwhm_hz: 1e11,
            filter_shape: FilterShape::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub waveguide: WaveguideConfig,
    pub pulses: PulsesConfig,
    pub acquisition: AcquisitionConfig,
    pub budget: BudgetConfig,
    pub fit: FitConfig,
    pub sweep: SweepConfig,
    pub processing: DspOptions,
    pub phasematch: PhasematchConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dispersion_path(&self) -> Option<PathBuf> {
        self.phasematch
            .dispersion_csv
            .as_deref()
            .map(|p| self.resolve_path(p))
    }

    pub fn waveguide_params(&self) -> WaveguideParams {
        self.waveguide.params()
    }

    pub fn resolved_budget(&self) -> Result<ResolvedBudget, ConfigError> {
        self.budget
            .resolve(&self.waveguide_params(), self.acquisition.lo_clearance_db)
    }

    pub fn sweep_alpha(&self) -> f64 {
        self.sweep
            .alpha_per_w
            .unwrap_or_else(|| self.waveguide_params().alpha_per_w())
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan, ConfigError> {
        let eta_total = match self.sweep.eta_total {
            Some(e) => e,
            None => self.resolved_budget()?.budget.total(),
        };
        Ok(SweepPlan {
            pulses: self.pulses.train(),
            alpha_per_w: self.sweep_alpha(),
            eta_total,
            avg_powers_w: self.sweep.avg_powers_w.clone(),
        })
    }

    pub fn alpha_mode(&self) -> AlphaMode {
        if self.fit.fix_alpha {
            AlphaMode::Fixed(self.sweep_alpha())
        } else {
            AlphaMode::Free
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.waveguide_params().validate()?;
        self.pulses.train().validate()?;
        self.acquisition
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let budget = self.resolved_budget()?;
        if !budget.measured_squeezing_db.is_finite() {
            return invalid("measured_squeezing_db must be finite".into());
        }
        if !(self.fit.tol > 0.0) || self.fit.max_iter == 0 {
            return invalid("fit needs tol > 0 and max_iter > 0".into());
        }
        let s = &self.sweep;
        if s.avg_powers_w.is_empty() {
            return invalid("sweep.avg_powers_w is empty".into());
        }
        if let Some(p) = s
            .avg_powers_w
            .iter()
            .find(|p| !(**p >= 0.0 && p.is_finite()))
        {
            return invalid(format!("sweep power {p} must be nonnegative"));
        }
        if s.alpha_per_w.is_some_and(|a| !(a >= 0.0 && a.is_finite())) {
            return invalid("sweep.alpha_per_w must be nonnegative".into());
        }
        if s.eta_total.is_some_and(|e| !(e > 0.0 && e <= 1.0)) {
            return invalid("sweep.eta_total must lie in (0, 1]".into());
        }
        if self.processing.pulses_per_bin < 2 {
            return invalid("processing.pulses_per_bin must be at least 2".into());
        }
        let pm = &self.phasematch;
        if pm.grid_points < 2 || !(pm.max_half_phase_rad > 0.0) {
            return invalid("phasematch grid needs at least 2 points and a positive span".into());
        }
        if !(0.0..0.5).contains(&pm.boundary_jitter) || !(0.0..=1.0).contains(&pm.missing_flip_prob)
        {
            return invalid("phasematch defect parameters out of range".into());
        }
        if !(pm.filter_fwhm_hz > 0.0 && pm.fundamental_nm > 0.0) {
            return invalid("phasematch filter width and wavelength must be positive".into());
        }
        if let Some(p) = self.dispersion_path() {
            if !p.is_file() {
                return Err(ConfigError::MissingFile(p));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_json(text, Path::new("."))
    }

    #[test]
    fn empty_document_takes_defaults() {
        let cfg = parse("{}").unwrap();
        assert_eq!(
            cfg,
            RunConfig {
                base_dir: ".".into(),
                ..RunConfig::default()
            }
        );
        assert!((cfg.sweep_alpha() - 0.280543).abs() < 1e-6);
    }

    #[test]
    fn shipped_default_matches_builtin_budget() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
        let cfg = RunConfig::load(&path).unwrap();
        let b = cfg.resolved_budget().unwrap();
        assert!((b.budget.total() - 0.2289).abs() < 5e-4, "{b:?}");
        let eta_e = physics::electronic_efficiency(8.0).unwrap();
        assert!((b.budget.homodyne() - 0.85 * 0.98 * eta_e).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            parse(r#"{"bogus": 1}"#),
            Err(ConfigError::Json(_))
        ));
        assert!(matches!(
            parse(r#"{"fit": {"tol": 1e-9, "max_iter": 5, "fix_alpha": true, "extra": 0}}"#),
            Err(ConfigError::Json(_))
        ));
    }

    #[test]
    fn budget_alternatives() {
        let cfg = parse(r#"{"budget": {"visibility": 0.9, "clearance_db": 10}}"#).unwrap();
        let b = cfg.resolved_budget().unwrap().budget;
        assert!((b.eta_visibility - 0.81).abs() < 1e-12);
        assert!((b.eta_electronic - 0.9).abs() < 1e-12);
        // Waveguide term derived from 0.6 dB/cm over 0.47 cm.
        assert!((b.eta_waveguide - db_to_linear(-0.282)).abs() < 1e-12);
        assert!(matches!(
            parse(r#"{"budget": {"eta_optics": 0.3, "optics_loss_db": 4.57}}"#),
            Err(ConfigError::Invalid(_))
        ));
        assert!(parse(r#"{"budget": {"eta_quantum": 1.5}}"#).is_err());
    }

    #[test]
    fn parse_echo_is_idempotent() {
        let cfg = parse(r#"{"budget": {"waveguide_loss_db": 0.29}, "sweep": {"avg_powers_w": [1e-4], "eta_total": 0.2}}"#)
            .unwrap();
        let echoed = cfg.to_json();
        let again = parse(&echoed).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_json(), echoed);
    }

    #[test]
    fn referenced_files_must_exist() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{"phasematch": {"dispersion_csv": "disp.csv", "fundamental_nm": 1556.6,
            "grid_points": 11, "max_half_phase_rad": 6.0, "boundary_jitter": 0.05,
            "missing_flip_prob": 0.0, "defect_seed": 1, "filter_fwhm_hz": 1e11, "filter_shape": "gaussian"}}"#;
        assert!(matches!(
            RunConfig::from_json(text, dir.path()),
            Err(ConfigError::MissingFile(_))
        ));
        fs::write(
            dir.path().join("disp.csv"),
            "band,wavelength_nm,n_eff,n_g\n",
        )
        .unwrap();
        let cfg = RunConfig::from_json(text, dir.path()).unwrap();
        assert_eq!(cfg.dispersion_path().unwrap(), dir.path().join("disp.csv"));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(parse(r#"{"sweep": {"avg_powers_w": []}}"#).is_err());
        assert!(parse(r#"{"sweep": {"avg_powers_w": [-1.0]}}"#).is_err());
        assert!(parse(r#"{"pulses": {"avg_power_w": 1e-4, "rep_rate_hz": 0, "fwhm_s": 1e-11, "shape_factor": 1}}"#).is_err());
    }
}
