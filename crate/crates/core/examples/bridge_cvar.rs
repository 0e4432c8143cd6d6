//! Bridge with a reliability constraint: minimize the volume while the
//! conditional value at risk of the compliance under a Gaussian deck load
//! stays below a threshold. The threshold is set just above the compliance of
//! the deterministic design at the reference volume.
//!
//! `cargo run --release --example bridge_cvar -- [beta]`

use std::path::Path;

use drtopo::cli_io::{density_ascii, evaluate, optimize, RunConfig};
use drtopo::oracle::cvar_tail_average;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

const GRID: &str = "nx = 20\nny = 40\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let beta: f64 = std::env::args().nth(1).map_or(Ok(0.5), |s| s.parse())?;
    let root = Path::new("target/examples/bridge_cvar");
    let det = RunConfig::parse(&format!("[problem]\npreset = bridge-1x2\nformulation = deterministic\n{GRID}"))?;
    let h_det = optimize(&det, &root.join("deterministic"))?.state.design;
    let c_det = evaluate(&det, &h_det, &[vec![0.0, -1.0]])?[0];
    let threshold = 1.1 * c_det;
    println!("deterministic compliance {c_det:.4}, threshold {threshold:.4}");

    let text = format!(
        "[problem]\npreset = bridge-1x2\nformulation = cvar\n{GRID}[ambiguity]\nbeta = {beta}\nthreshold = {threshold}\nsigma2 = 0.01\n[optimizer]\niterations = 200\n"
    );
    let cfg = RunConfig::parse(&text)?;
    let report = optimize(&cfg, &root.join(format!("beta{beta}")))?;
    let last = report.log.rows.last().ok_or("empty log")?;
    println!("beta {beta}: volume {:.4}, alpha {:.4}", last.volume, last.alpha);

    // Fresh samples, not the ones seen during optimization.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let noise = Normal::new(0.0, 0.1)?;
    let points: Vec<Vec<f64>> = (0..200).map(|_| vec![noise.sample(&mut rng), -1.0 + noise.sample(&mut rng)]).collect();
    let costs = evaluate(&cfg, &report.state.design, &points)?;
    let weights = vec![1.0 / costs.len() as f64; costs.len()];
    println!("out-of-sample CVaR {:.4} against threshold {threshold:.4}", cvar_tail_average(&costs, &weights, beta)?);
    let grid = drtopo::cli_io::build_preset("bridge-1x2", 20, 40)?.grid;
    print!("{}", density_ascii(&grid, &report.state.design, 1)?);
    Ok(())
}
