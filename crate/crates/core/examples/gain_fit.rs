//! Fit of parametric gain data for mode matching and conversion efficiency.
//! Synthetic points with 0.02 dB noise stand in for a power sweep.
//!
//! cargo run --example gain_fit

use sqz::fit::{fit_gain_curve, Branch, CurveFitOptions, CurvePoint};
use sqz::physics::parametric_gain;
use sqz::rng::NormalStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (eta_mm, alpha) = (0.95, 0.28);
    let sigma_db = 0.02;
    let mut noise = NormalStream::new(11);
    let mut points = Vec::new();
    for i in 1..=10 {
        let p = 0.029 * i as f64;
        let g = parametric_gain(p, alpha, eta_mm)?;
        for (branch, db) in [(Branch::Plus, g.g_plus_db), (Branch::Minus, g.g_minus_db)] {
            points.push(CurvePoint {
                peak_power_w: p,
                value_db: db + sigma_db * noise.next_normal(),
                branch,
                sigma_db: Some(sigma_db),
            });
        }
    }

    let fit = fit_gain_curve(&points, &CurveFitOptions::default())?;
    println!(
        "eta_mm = {:.4} ± {:.4}  (truth {eta_mm})",
        fit.eta, fit.eta_err
    );
    println!(
        "alpha  = {:.4} ± {:.4} /W  (truth {alpha})",
        fit.alpha_per_w, fit.alpha_err
    );
    println!(
        "reduced chi2 {:.3} after {} steps ({:?})",
        fit.result.reduced_chi2(),
        fit.result.iterations,
        fit.result.termination
    );
    Ok(())
}
