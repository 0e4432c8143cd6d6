//! Runs the verification suites and prints one line per check.
//!
//! `cargo run --release --example duality_check -- [suite...]`

use drtopo::oracle::suites::{run_suite, SUITES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let names: Vec<&str> = if args.is_empty() { SUITES.to_vec() } else { args.iter().map(String::as_str).collect() };
    let mut failed = 0;
    for name in names {
        let report = run_suite(name)?;
        for c in &report.checks {
            println!("[{}] {} {}: {}", report.suite, if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            failed += usize::from(!c.passed);
        }
        println!("[{}] finished in {:.2?}", report.suite, report.elapsed);
    }
    if failed > 0 {
        return Err(format!("{failed} checks failed").into());
    }
    Ok(())
}
