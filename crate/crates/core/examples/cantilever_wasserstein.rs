//! Cantilever under an uncertain tip load with a Wasserstein ambiguity set
//! around the nominal horizontal load. Sweeps the ball radius and reports the
//! final multiplier and the compliance of each design under the nominal and a
//! vertical load.
//!
//! `cargo run --release --example cantilever_wasserstein -- [radius...]`

use std::path::PathBuf;

use drtopo::cli_io::{density_ascii, evaluate, optimize, RunConfig};

fn config(m: f64) -> String {
    format!(
        "[problem]\npreset = cantilever-2x1\nformulation = wasserstein\nnx = 40\nny = 20\n\
         [ambiguity]\nm = {m}\nsigma2 = 0.1\neps = 0.01\n[optimizer]\niterations = 120\n"
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    let radii = if args.is_empty() { vec![0.25, 1.0, 5.0] } else { args };
    println!("{:>6} {:>12} {:>12} {:>12}", "m", "lambda", "C(-1,0)", "C(0,-1)");
    for m in radii {
        let cfg = RunConfig::parse(&config(m))?;
        let dir = PathBuf::from(format!("target/examples/cantilever_wasserstein/m{m}"));
        let report = optimize(&cfg, &dir)?;
        let c = evaluate(&cfg, &report.state.design, &[vec![-1.0, 0.0], vec![0.0, -1.0]])?;
        println!("{m:>6} {:>12.4e} {:>12.5} {:>12.5}", report.state.aux.lambda, c[0], c[1]);
        let grid = drtopo::cli_io::build_preset("cantilever-2x1", 40, 20)?.grid;
        print!("{}", density_ascii(&grid, &report.state.design, 1)?);
    }
    Ok(())
}
