//! Detection efficiency budget and on-chip squeezing inferred from a
//! measured level.
//!
//! cargo run --example budget -- [measured_db]

use sqz::config::RunConfig;
use sqz::physics::{infer_onchip_squeezing, linear_to_db};
use sqz::report::budget_table;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    if let Some(arg) = std::env::args().nth(1) {
        cfg.budget.measured_squeezing_db = Some(arg.parse()?);
    }
    let table = budget_table(&cfg)?;
    println!("{:<14} {:>8} {:>9}", "term", "eta", "dB");
    for row in &table.rows {
        println!("{:<14} {:>8.4} {:>9.3}", row.name, row.eta, row.db);
    }
    println!(
        "{:<14} {:>8.4} {:>9.3}",
        "total", table.total, table.total_db
    );

    let resolved = cfg.resolved_budget()?;
    let external = resolved.budget.external();
    println!(
        "\nexternal (off-chip) efficiency {external:.4} ({:.2} dB)",
        linear_to_db(external)
    );
    for measured in [-0.2, -0.33, -0.5] {
        println!(
            "measured {measured:>5.2} dB -> on-chip {:>6.3} dB",
            infer_onchip_squeezing(measured, external)?
        );
    }
    Ok(())
}
