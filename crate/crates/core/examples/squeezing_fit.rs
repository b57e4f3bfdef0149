//! Squeezing and anti-squeezing versus peak power, fitted for the total
//! detection efficiency with alpha pinned and then floated.
//!
//! cargo run --example squeezing_fit

use sqz::fit::{fit_squeezing_curve, AlphaMode, Branch, CurveFitOptions, CurvePoint};
use sqz::physics::squeezing_levels;
use sqz::rng::NormalStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (eta, alpha) = (0.22, 0.28);
    let sigma_db = 0.02;
    let mut noise = NormalStream::new(5);
    let mut points = Vec::new();
    for i in 1..=8 {
        let p = 0.31 * i as f64 / 8.0;
        let s = squeezing_levels(p, alpha, eta)?;
        println!(
            "P = {p:.3} W  S- = {:+.3} dB  S+ = {:+.3} dB",
            s.s_minus_db, s.s_plus_db
        );
        for (branch, db) in [(Branch::Minus, s.s_minus_db), (Branch::Plus, s.s_plus_db)] {
            points.push(CurvePoint {
                peak_power_w: p,
                value_db: db + sigma_db * noise.next_normal(),
                branch,
                sigma_db: Some(sigma_db),
            });
        }
    }

    let options = CurveFitOptions::default();
    let pinned = fit_squeezing_curve(&points, AlphaMode::Fixed(alpha), &options)?;
    println!(
        "\nalpha pinned: eta = {:.4} ± {:.4}",
        pinned.eta, pinned.eta_err
    );
    let free = fit_squeezing_curve(&points, AlphaMode::Free, &options)?;
    println!(
        "alpha free:   eta = {:.4} ± {:.4}, alpha = {:.3} ± {:.3} /W",
        free.eta, free.eta_err, free.alpha_per_w, free.alpha_err
    );
    Ok(())
}
