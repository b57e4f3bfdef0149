//! Synthesize squeezed, shot and electronic traces, extract the variance
//! versus phase and fit it back to the injected levels.
//!
//! cargo run --release --example homodyne_roundtrip

use sqz::dsp::{fit_phase_curve, normalize_to_shot, synthesize_and_process, DspOptions};
use sqz::fit::LmOptions;
use sqz::physics::squeezing_levels;
use sqz::synth::{AcquisitionConfig, TraceKind, ELECTRONIC_STREAM, SHOT_STREAM};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = AcquisitionConfig {
        n_samples: 500_000,
        n_traces: 18,
        seed: 42,
        ..AcquisitionConfig::default()
    };
    let options = DspOptions {
        pulses_per_bin: 500,
        ..DspOptions::default()
    };
    let truth = squeezing_levels(0.31, 0.28, 0.22)?;
    println!(
        "injected S- = {:+.4} dB, S+ = {:+.4} dB",
        truth.s_minus_db, truth.s_plus_db
    );

    let sq = synthesize_and_process(
        &cfg,
        truth.s_minus_lin,
        truth.s_plus_lin,
        TraceKind::Squeezed,
        0,
        &options,
    )?;
    let shot = synthesize_and_process(&cfg, 1.0, 1.0, TraceKind::Shot, SHOT_STREAM, &options)?;
    let el = synthesize_and_process(
        &cfg,
        1.0,
        1.0,
        TraceKind::Electronic,
        ELECTRONIC_STREAM,
        &options,
    )?;
    println!(
        "shot {:.4}, electronic {:.4} (expected {:.4})",
        shot.mean_variance(),
        el.mean_variance(),
        cfg.electronic_variance()
    );

    let normalized = normalize_to_shot(&sq, &shot, &el, false)?;
    let fit = fit_phase_curve(&normalized, &LmOptions::default())?;
    println!(
        "fitted   S- = {:+.4} ± {:.4} dB, S+ = {:+.4} ± {:.4} dB",
        fit.s_minus_db, fit.s_minus_db_err, fit.s_plus_db, fit.s_plus_db_err
    );
    println!(
        "ramp {:.5} rad/bin (nominal {:.5}), reduced chi2 {:.3}",
        fit.ramp_slope_rad,
        2.0 * std::f64::consts::PI / normalized.n_bins() as f64,
        fit.reduced_chi2
    );
    Ok(())
}
