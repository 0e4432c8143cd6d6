//! T-shaped mast loaded by cable weights on both arms and wind on the column.
//! Optimizes the expected compliance over three nominal scenarios, then a
//! Wasserstein-robust design, and tabulates both under scenarios the nominal
//! law never sees.
//!
//! `cargo run --release --example mast_out_of_sample`

use std::path::Path;

use drtopo::cli_io::{density_ascii, evaluate, optimize, RunConfig};

const GRID: &str = "nx = 20\nny = 30\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mean = RunConfig::parse(&format!("[problem]\npreset = mast-T\nformulation = mean\n{GRID}[optimizer]\niterations = 100\n"))?;
    let robust = RunConfig::parse(&format!(
        "[problem]\npreset = mast-T\nformulation = wasserstein\n{GRID}[ambiguity]\nm = 1\nsigma2 = 0.1\ninner_samples = 6\n[optimizer]\niterations = 100\n"
    ))?;
    let root = Path::new("target/examples/mast_out_of_sample");
    let h_mean = optimize(&mean, &root.join("mean"))?.state.design;
    let h_robust = optimize(&robust, &root.join("wasserstein"))?.state.design;

    // Arm tips, then column flanks.
    let scenarios: Vec<(&str, Vec<f64>)> = vec![
        ("cables only", vec![0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]),
        ("wind right", vec![0.0, -1.0, 0.0, -1.0, 1.0, 0.0, 1.0, 0.0]),
        ("opposing wind", vec![0.0, -1.0, 0.0, -1.0, -1.0, 0.0, 1.0, 0.0]),
        ("cables swing left", vec![-1.0, -1.0, -1.0, -1.0, -1.0, 0.0, -1.0, 0.0]),
        ("one cable lifted", vec![0.0, 0.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0]),
    ];
    let points: Vec<Vec<f64>> = scenarios.iter().map(|(_, x)| x.clone()).collect();
    let c_mean = evaluate(&mean, &h_mean, &points)?;
    let c_robust = evaluate(&robust, &h_robust, &points)?;
    println!("{:<20} {:>12} {:>12}", "scenario", "mean", "wasserstein");
    for (i, (name, _)) in scenarios.iter().enumerate() {
        println!("{name:<20} {:>12.4} {:>12.4}", c_mean[i], c_robust[i]);
    }
    let grid = drtopo::cli_io::build_preset("mast-T", 20, 30)?.grid;
    println!("mean design:\n{}", density_ascii(&grid, &h_mean, 1)?);
    println!("robust design:\n{}", density_ascii(&grid, &h_robust, 1)?);
    Ok(())
}
