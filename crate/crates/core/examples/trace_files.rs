//! Write a trace to the SQZT binary format, read it back and check the
//! samples survive bit for bit.
//!
//! cargo run --example trace_files

use sqz::synth::{synthesize_trace, AcquisitionConfig, TraceKind};
use sqz::trace_file::{read_trace, write_trace, FIXED_HEADER_LEN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = AcquisitionConfig {
        n_samples: 10_000,
        ..AcquisitionConfig::default()
    };
    let trace = synthesize_trace(&cfg, 0.9, 1.2, TraceKind::Squeezed)?;

    let mut bytes = Vec::new();
    write_trace(&trace, &mut bytes)?;
    println!(
        "{} samples, kernel of {} taps, {} bytes ({} header + kernel)",
        trace.samples.len(),
        trace.header.kernel.len(),
        bytes.len(),
        FIXED_HEADER_LEN
    );
    println!("magic {:?}", std::str::from_utf8(&bytes[..4])?);

    let back = read_trace(&bytes[..])?;
    assert_eq!(back, trace);
    println!(
        "read back: kind {:?}, seed {}, identical",
        back.header.kind, back.header.seed
    );

    bytes.truncate(bytes.len() - 2);
    match read_trace(&bytes[..]) {
        Ok(_) => println!("truncated file unexpectedly parsed"),
        Err(e) => println!("truncated file rejected: {e}"),
    }
    Ok(())
}
