//! Compliance minimization of a 2x1 cantilever under a single known tip load,
//! with the material volume held at 0.6.
//!
//! `cargo run --release --example cantilever_deterministic`

use std::path::Path;

use drtopo::cli_io::{density_ascii, optimize, RunConfig};

const CONFIG: &str = "\
[problem]
preset = cantilever-2x1
formulation = deterministic
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::parse(CONFIG)?;
    let report = optimize(&cfg, Path::new("target/examples/cantilever_deterministic"))?;
    for row in report.log.rows.iter().step_by(15) {
        println!("iter {:3}  compliance {:.5}  volume {:.4}", row.iter, row.objective, row.volume);
    }
    let last = report.log.rows.last().ok_or("empty log")?;
    println!("final compliance {:.5}  volume {:.4}", last.objective, last.volume);
    let grid = drtopo::cli_io::build_preset(&cfg.problem.preset, cfg.problem.nx, cfg.problem.ny)?.grid;
    print!("{}", density_ascii(&grid, &report.state.design, 2)?);
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
