use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drtopo::cli_io::{self, RunConfig};
use drtopo::oracle::suites::SUITES;

#[derive(Parser)]
#[command(name = "drtopo", version, about = "Distributionally robust topology optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a design and write log.csv, design.pgm, fields.vtk and config.txt.
    Optimize {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the cost of a design at each parameter point as CSV.
    Evaluate {
        config: PathBuf,
        /// fields.vtk from `optimize`, or whitespace-separated densities.
        #[arg(long)]
        design: PathBuf,
        /// Points separated by `;`, components by `,`.
        #[arg(long, allow_hyphen_values = true)]
        xi: String,
    },
    /// Run verification suites against independent reference computations.
    Oracle {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn load(path: &PathBuf) -> drtopo::Result<RunConfig> {
    RunConfig::parse(&std::fs::read_to_string(path)?)
}

fn execute(cli: Cli) -> drtopo::Result<bool> {
    let threads = cli_io::threads_from_env()?;
    match cli.command {
        Command::Optimize { config, out } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let report = cli_io::with_threads(threads, || cli_io::optimize(&cfg, &dir))??;
            if let Some(last) = report.log.rows.last() {
                println!("iterations {}  objective {:.6e}  volume {:.6}", last.iter + 1, last.objective, last.volume);
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Evaluate { config, design, xi } => {
            let cfg = load(&config)?;
            let design = cli_io::read_design(&std::fs::read_to_string(design)?)?;
            let points = cli_io::parse_points(&xi)?;
            let costs = cli_io::with_threads(threads, || cli_io::evaluate(&cfg, &design, &points))??;
            print!("{}", cli_io::evaluation_csv(&costs));
            Ok(true)
        }
        Command::Oracle { suite } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut ok = true;
            for name in names {
                let report = cli_io::with_threads(threads, || cli_io::oracle(name))??;
                for c in &report.checks {
                    println!("[{name}] {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                ok &= report.passed();
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
