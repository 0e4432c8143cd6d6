//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::time::{Duration, Instant};

use drtopo::cli_io::{build_problem, evaluate, optimize, with_threads, RunConfig};
use drtopo::cost::AnalyticCost;
use drtopo::dro::{wasserstein_dual_value, LambdaSearch, WassersteinConfig, LAMBDA_MIN};
use drtopo::grid_fem::StructuredGrid;
use drtopo::optimizer::{run, DescentConfig, Formulation, RobustProblem};
use drtopo::oracle::suites::run_suite;
use drtopo::uncertainty::{draw_coupling_samples, NominalLaw, ParameterSpace, ReferenceKernel};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn suite(name: &str, limit: Option<Duration>) -> Outcome {
    let report = run_suite(name).map_err(|e| e.to_string())?;
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if !failed.is_empty() {
        return Err(failed.join("; "));
    }
    if let Some(limit) = limit {
        if report.elapsed > limit {
            return Err(format!("took {:.1?}, limit {limit:?}", report.elapsed));
        }
    }
    Ok(format!("{} checks in {:.2?}", report.checks.len(), report.elapsed))
}

fn cantilever() -> Outcome {
    let cfg = RunConfig::parse("[problem]\npreset = cantilever-2x1\nformulation = deterministic\n").map_err(|e| e.to_string())?;
    let built = build_problem(&cfg).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = with_threads(Some(1), || run(&built.problem, &cfg.optimizer))
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let rows = &out.log.rows;
    let last = rows.last().ok_or("empty log")?;
    let initial = rows[0].objective;
    let best = out.log.trailing_min(10).ok_or("empty log")?;
    let vol_err = (last.volume - 0.6).abs() / 0.6;
    let msg = format!(
        "{} iterations, volume error {vol_err:.2e}, compliance {initial:.4} -> trailing min {best:.4}, {elapsed:.1?} on one thread",
        rows.len()
    );
    if rows.len() == 150 && vol_err <= 0.01 && best < initial && elapsed <= Duration::from_secs(300) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Small analytic problem: the cost saturates away from the nominal point and
/// is cheaper where the design is denser.
fn trend_problem(radius: f64) -> drtopo::Result<RobustProblem> {
    let grid = StructuredGrid::new(2, 2, 1.0, 1.0)?;
    let scale = [1.0, 2.0, 3.0, 4.0];
    let cost = AnalyticCost::new(
        2,
        4,
        move |h, x| {
            let s: f64 = h.iter().zip(scale).map(|(h, c)| c / (0.1 + h)).sum();
            s * (1.0 + 4.0 * (1.0 - (-(x[0] - 1.0).powi(2) - x[1] * x[1]).exp()))
        },
        move |h, x| {
            let f = 1.0 + 4.0 * (1.0 - (-(x[0] - 1.0).powi(2) - x[1] * x[1]).exp());
            h.iter().zip(scale).map(|(h, c)| -f * c / (0.1 + h).powi(2)).collect()
        },
    );
    let space = ParameterSpace::ball(vec![0.0, 0.0], 10.0)?;
    Ok(RobustProblem {
        oracle: Box::new(cost),
        grid,
        formulation: Formulation::Wasserstein {
            law: NominalLaw::empirical(vec![vec![1.0, 0.0]])?,
            kernel: ReferenceKernel::new(0.1, space)?,
            config: WassersteinConfig::new(radius, 0.01)?,
            inner_samples: 20,
        },
        target_volume: Some(0.5),
        initial_volume: 0.5,
        volume_penalty: 0.0,
        master_seed: 3,
        frozen_samples: true,
    })
}

fn multiplier_trend() -> Outcome {
    let e = |e: drtopo::Error| e.to_string();
    let cfg = DescentConfig {
        iterations: 100,
        ..DescentConfig::default()
    };
    let mut finals = Vec::new();
    for m in [0.0, 100.0] {
        let out = run(&trend_problem(m).map_err(e)?, &cfg).map_err(|a| a.to_string())?;
        finals.push(out.state.aux.lambda);
    }
    let problem = trend_problem(0.0).map_err(e)?;
    let Formulation::Wasserstein { law, kernel, inner_samples, .. } = &problem.formulation else {
        unreachable!()
    };
    let batch = draw_coupling_samples(law, kernel, *inner_samples, problem.master_seed, 0).map_err(e)?;
    let design = vec![0.5; 4];
    let search = LambdaSearch {
        lower: LAMBDA_MIN,
        upper: 1e4,
        points: 64,
        refine: true,
    };
    let mut optima = Vec::new();
    for m in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let wc = WassersteinConfig::new(m, 0.01).map_err(e)?;
        let (_, v) = search
            .minimize(|l| wasserstein_dual_value(problem.oracle.as_ref(), &design, l, &wc, &batch))
            .map_err(e)?;
        optima.push(v);
    }
    let monotone = optima.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs());
    let msg = format!(
        "final lambda m=0 {:.4e}, m=100 {:.4e}; dual optima {:?}",
        finals[0],
        finals[1],
        optima.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>()
    );
    if finals[1] <= finals[0] && monotone {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn lbeam_config(m1: f64, m2: f64, seed: u64) -> String {
    format!("[problem]\npreset = lbeam-1x1\nformulation = moment\nseed = {seed}\n[ambiguity]\nm1 = {m1}\nm2 = {m2}\n")
}

/// Nominal-load compliance of the best of three seeds.
fn best_nominal(m1: f64, m2: f64) -> drtopo::Result<f64> {
    let mut best = f64::INFINITY;
    for seed in 0..3 {
        let cfg = RunConfig::parse(&lbeam_config(m1, m2, seed))?;
        let built = build_problem(&cfg)?;
        let out = run(&built.problem, &cfg.optimizer)?;
        best = best.min(evaluate(&cfg, &out.state.design, &[vec![-1.0, 0.0]])?[0]);
    }
    Ok(best)
}

fn robustness_trend() -> Outcome {
    let tight = best_nominal(0.0, 1.0).map_err(|e| e.to_string())?;
    let loose = best_nominal(5.0, 5.0).map_err(|e| e.to_string())?;
    let msg = format!("nominal compliance (0,1) {tight:.5}, (5,5) {loose:.5}, 2% slack band");
    if loose >= tight * 0.98 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn reproducibility() -> Outcome {
    let text = "[problem]\npreset = cantilever-2x1\nformulation = wasserstein\nnx = 30\nny = 15\nseed = 11\n\
                [ambiguity]\nm = 0.5\nsigma2 = 0.1\n[optimizer]\niterations = 20\n";
    let cfg = RunConfig::parse(text).map_err(|e| e.to_string())?;
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in [1, 2, 8] {
        let dir = root.path().join(format!("t{threads}"));
        with_threads(Some(threads), || optimize(&cfg, &dir))
            .map_err(|e| e.to_string())?
            .map_err(|e| e.to_string())?;
        let read = |f: &str| std::fs::read(dir.join(f)).map_err(|e| e.to_string());
        outputs.push((read("log.csv")?, read("design.pgm")?));
    }
    if outputs.iter().all(|o| *o == outputs[0]) {
        Ok(format!("log.csv ({} bytes) and design.pgm identical on 1, 2, 8 threads", outputs[0].0.len()))
    } else {
        Err("outputs differ across thread counts".into())
    }
}

fn main() {
    let secs = Duration::from_secs;
    let criteria: Vec<Criterion> = vec![
        ("1 Wasserstein duality", Box::new(move || suite("wasserstein", Some(secs(10))))),
        ("2 moment duality", Box::new(move || suite("moment", Some(secs(30))))),
        ("3 CVaR equivalence", Box::new(|| suite("cvar", None))),
        ("4 gradient suite", Box::new(move || suite("gradients", Some(secs(60))))),
        ("5 FEM correctness", Box::new(|| suite("fem", None))),
        ("6 desk-scale cantilever", Box::new(cantilever)),
        ("7 multiplier trend", Box::new(multiplier_trend)),
        ("8 robustness trend", Box::new(robustness_trend)),
        ("9 reproducibility", Box::new(reproducibility)),
        ("10 KL basis", Box::new(|| suite("kl", None))),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let t = start.elapsed();
        match result {
            Ok(msg) => println!("criterion {name}: PASS ({t:.1?}) {msg}"),
            Err(msg) => {
                failures += 1;
                println!("criterion {name}: FAIL ({t:.1?}) {msg}");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
