//! Ideal and defective QPM spectra, walk-off and the transform limit of the
//! detection filter.
//!
//! cargo run --example phase_matching

use sqz::qpm::{
    defective_qpm_spectrum, filtered_pulse_duration, ideal_qpm_spectrum, linspace,
    spectrum_asymmetry, temporal_walkoff, FilterShape, PolingDefects, PolingMap,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let length_m = 4.7e-3;
    let period_um = 4.93;
    let half_phase = linspace(-4.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI, 201);
    let dk: Vec<f64> = half_phase.iter().map(|x| 2.0 * x / length_m).collect();

    let ideal = ideal_qpm_spectrum(&dk, length_m)?;
    let defects = PolingDefects {
        boundary_jitter: 0.1,
        missing_flip_prob: 0.02,
    };
    let map = PolingMap::with_defects(period_um, length_m, &defects, 7)?;
    let defective = defective_qpm_spectrum(&map, &dk)?;

    println!("dkL/2     ideal  defective");
    for i in (0..dk.len()).step_by(10) {
        let bar = "#".repeat((defective[i] * 40.0).round() as usize);
        println!(
            "{:>6.2}  {:>6.4}  {:>6.4}  {bar}",
            half_phase[i], ideal[i], defective[i]
        );
    }
    let peak = defective.iter().cloned().fold(0.0, f64::max);
    println!("\ndomains {}, defective peak {peak:.4}", map.domains.len());
    println!("asymmetry {:.4}", spectrum_asymmetry(&dk, &defective)?);

    println!(
        "walk-off over the chip {:.3} ps",
        temporal_walkoff(0.3128, length_m)?
    );
    for shape in [FilterShape::Gaussian, FilterShape::Rectangular] {
        let t = filtered_pulse_duration(100e9, shape)?;
        println!(
            "{shape:?} transform limit behind a 100 GHz filter: {:.2} ps",
            t * 1e12
        );
    }
    Ok(())
}
