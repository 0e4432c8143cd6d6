//! L-shaped beam with a moment ambiguity set on the tip load. Compares a tight
//! set with a loose one through the compliance under the nominal load and two
//! perturbed loads.
//!
//! `cargo run --release --example lbeam_moment`

use std::path::PathBuf;

use drtopo::cli_io::{density_ascii, evaluate, optimize, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let loads = [vec![-1.0, 0.0], vec![-1.0, -0.5], vec![-0.5, 0.5]];
    println!("{:>4} {:>4} {:>12} {:>12} {:>12}", "m1", "m2", "C(-1,0)", "C(-1,-.5)", "C(-.5,.5)");
    for (m1, m2) in [(0.0, 1.0), (1.0, 1.0), (5.0, 5.0)] {
        let text = format!("[problem]\npreset = lbeam-1x1\nformulation = moment\n[ambiguity]\nm1 = {m1}\nm2 = {m2}\n");
        let cfg = RunConfig::parse(&text)?;
        let report = optimize(&cfg, &PathBuf::from(format!("target/examples/lbeam_moment/m{m1}_{m2}")))?;
        let c = evaluate(&cfg, &report.state.design, &loads)?;
        println!("{m1:>4} {m2:>4} {:>12.5} {:>12.5} {:>12.5}", c[0], c[1], c[2]);
        let grid = drtopo::cli_io::build_preset("lbeam-1x1", 40, 40)?.grid;
        print!("{}", density_ascii(&grid, &report.state.design, 2)?);
    }
    Ok(())
}
