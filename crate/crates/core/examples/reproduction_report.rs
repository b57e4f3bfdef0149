//! Full pipeline through the library: simulate a small power sweep to
//! disk, process it, fit the squeezing curve and print the report table.
//!
//! cargo run --release --example reproduction_report

use sqz::cli::{cmd_fit, cmd_process, cmd_simulate, Format, Model};
use sqz::config::RunConfig;
use sqz::report::build_report;
use sqz::synth::MANIFEST_FILE;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("sqz-reproduction");
    let (traces, processed) = (dir.join("traces"), dir.join("processed"));
    let mut cfg = RunConfig::default();
    cfg.acquisition.n_samples = 500_000;
    cfg.acquisition.n_traces = 6;
    cfg.processing.pulses_per_bin = 500;
    cfg.sweep.avg_powers_w = vec![1e-4, 2e-4, 3.1e-4];

    let run = |r: Result<(), sqz::cli::CliError>| r.map_err(|e| e.to_json());
    let mut sink = Vec::new();
    run(cmd_simulate(&cfg, &traces, Format::Json, &mut sink))?;
    sink.clear();
    run(cmd_process(
        &cfg,
        Some(&traces.join(MANIFEST_FILE)),
        &[],
        &processed,
        Format::Csv,
        &mut sink,
    ))?;
    println!("{}", String::from_utf8(std::mem::take(&mut sink))?);
    let summary = processed.join(sqz::report::PROCESS_SUMMARY_FILE);
    run(cmd_fit(
        &cfg,
        Model::Squeezing,
        &[summary],
        Some(&processed),
        Format::Json,
        &mut sink,
    ))?;

    let report = build_report(&cfg, Some(&processed))?;
    println!("{}", report.to_text());
    println!("artifacts in {}", dir.display());
    Ok(())
}
