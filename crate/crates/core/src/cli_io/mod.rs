//! Configuration, presets, file output and the command entry points.

pub mod config;
pub mod output;
pub mod presets;

use std::path::{Path, PathBuf};

pub use config::{AmbiguitySection, FormulationKind, OutputSection, ProblemSection, RunConfig};
pub use output::{
    density_ascii, density_pgm, field_vtk, log_csv, read_field_vtk, read_log_csv, read_pgm, write_atomic, write_density_pgm,
    write_field_vtk, write_log_csv, CellField, VtkData,
};
pub use presets::{build_preset, CostKind, Preset, PRESETS};

use crate::cost::{physical_densities, CostOracle, LoadCompliance, MaterialTarget};
use crate::dro::{CvarConfig, MomentConfig, WassersteinConfig};
use crate::error::{Error, Result};
use crate::grid_fem::{DensityFilter, FemModel, MaterialModel};
use crate::kl_field::{build_kl_basis, realize_modulus, CovarianceSpec, KLBasis, ModulusTransform};
use crate::optimizer::{run, ConvergenceLog, DescentState, Formulation, RobustProblem};
use crate::oracle::suites::{run_suite, SuiteReport};
use crate::uncertainty::{NominalLaw, ParameterSpace, ReferenceKernel};

/// Environment variable holding the worker thread count.
pub const THREADS_VAR: &str = "DRTO_THREADS";

/// A problem built from a config, with what the writers need.
pub struct BuiltProblem {
    pub problem: RobustProblem,
    pub preset: Preset,
    pub basis: Option<KLBasis>,
}

fn isotropic(k: usize, sigma2: f64) -> Vec<Vec<f64>> {
    (0..k).map(|a| (0..k).map(|b| if a == b { sigma2 } else { 0.0 }).collect()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn build_problem(cfg: &RunConfig) -> Result<BuiltProblem> {
    let p = &cfg.problem;
    let a = &cfg.ambiguity;
    let mut preset = build_preset(&p.preset, p.nx, p.ny)?;
    let grid = preset.grid.clone();
    let model = FemModel::new(grid.clone(), MaterialModel::default(), preset.bc.clone())?;
    let filter = DensityFilter::new(&grid, p.filter_radius);
    let mut basis = None;
    let oracle: Box<dyn CostOracle> = match &preset.cost {
        CostKind::Compliance => Box::new(LoadCompliance::new(model, filter)),
        CostKind::Gripper { input, target, chi } => {
            let kl = build_kl_basis(&grid, &CovarianceSpec::new(a.amplitude, a.correlation_length)?, a.modes)?;
            let k = kl.len();
            preset.nominal = vec![0.0; k];
            preset.law = NominalLaw::empirical(vec![vec![0.0; k]])?;
            basis = Some(kl.clone());
            Box::new(MaterialTarget {
                model,
                filter,
                basis: kl,
                transform: ModulusTransform::default(),
                load: input.clone(),
                target: target.clone(),
                chi: chi.clone(),
                compliance_weight: p.compliance_weight,
            })
        }
    };
    let k = oracle.param_dim();
    let nominal = preset.nominal.clone();
    let reach = match &preset.law {
        NominalLaw::Empirical { atoms, .. } => atoms.iter().map(|x| norm(x)).fold(0.0, f64::max),
        NominalLaw::TruncatedGaussian { mean, .. } => norm(mean),
    };
    let radius = 10.0 * (a.sigma2.sqrt() + reach);
    let space = ParameterSpace::ball(vec![0.0; k], radius)?;
    let kernel = || ReferenceKernel::new(a.sigma2, space.clone());
    let gaussian = || NominalLaw::gaussian(nominal.clone(), isotropic(k, a.sigma2));
    let need = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| Error::InvalidInput(format!("formulation `{}` requires `{key}`", p.formulation.as_str())))
    };
    let formulation = match p.formulation {
        FormulationKind::Deterministic => Formulation::Deterministic { load: nominal.clone() },
        FormulationKind::Mean => {
            let law = match &preset.law {
                NominalLaw::Empirical { atoms, .. } if atoms.len() > 1 => preset.law.clone(),
                _ => gaussian()?,
            };
            Formulation::Mean {
                law,
                space: space.clone(),
                samples: a.samples,
            }
        }
        FormulationKind::Wasserstein => Formulation::Wasserstein {
            law: preset.law.clone(),
            kernel: kernel()?,
            config: WassersteinConfig::new(need(a.m, "m")?, a.eps)?,
            inner_samples: a.inner_samples,
        },
        FormulationKind::Moment => Formulation::Moment {
            config: MomentConfig::new(nominal.clone(), isotropic(k, a.sigma2), need(a.m1, "m1")?, need(a.m2, "m2")?, a.eps)?,
            space: space.clone(),
            samples: a.samples,
        },
        FormulationKind::Cvar => Formulation::Cvar {
            law: gaussian()?,
            space: space.clone(),
            config: CvarConfig::new(
                need(a.beta, "beta")?,
                need(a.threshold, "threshold")?,
                a.gamma,
                WassersteinConfig::new(a.m.unwrap_or(0.0), a.eps)?,
            )?,
            samples: a.samples,
        },
        FormulationKind::CvarDro => Formulation::CvarDro {
            law: preset.law.clone(),
            kernel: kernel()?,
            config: CvarConfig::new(
                need(a.beta, "beta")?,
                need(a.threshold, "threshold")?,
                a.gamma,
                WassersteinConfig::new(need(a.m, "m")?, a.eps)?,
            )?,
            inner_samples: a.inner_samples,
        },
    };
    let risk = matches!(p.formulation, FormulationKind::Cvar | FormulationKind::CvarDro);
    let gripper = matches!(preset.cost, CostKind::Gripper { .. });
    let problem = RobustProblem {
        oracle,
        grid,
        formulation,
        target_volume: (!risk && !gripper).then_some(p.target_volume),
        initial_volume: p.target_volume,
        volume_penalty: p.volume_penalty,
        master_seed: p.seed,
        frozen_samples: a.frozen,
    };
    Ok(BuiltProblem { problem, preset, basis })
}

/// Thread count requested through [`THREADS_VAR`], if any.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidInput(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug)]
pub struct OptimizeReport {
    pub state: DescentState,
    pub log: ConvergenceLog,
    pub files: Vec<PathBuf>,
}

/// Cell fields written next to a design.
pub fn design_fields(built: &BuiltProblem, design: &[f64], filter_radius: f64) -> Result<(Vec<CellField>, Vec<CellField>)> {
    let grid = &built.problem.grid;
    let phys = physical_densities(&DensityFilter::new(grid, filter_radius), design)?;
    let mut cells = vec![
        CellField::new("design", design.to_vec()),
        CellField::new("density", phys.into_inner()),
    ];
    let mut meta = Vec::new();
    if let Some(kl) = &built.basis {
        cells.push(CellField::new(
            "modulus_nominal",
            realize_modulus(kl, &ModulusTransform::default(), &vec![0.0; kl.len()])?,
        ));
        for (i, m) in kl.modes.iter().enumerate() {
            cells.push(CellField::new(format!("mode_{}", i + 1), m.clone()));
        }
        meta.push(CellField::new("eigenvalues", kl.eigenvalues.clone()));
    }
    Ok((cells, meta))
}

/// Optimizes and writes the log, image, fields and canonical config into `out_dir`.
/// The log is written even when the run aborts.
pub fn optimize(cfg: &RunConfig, out_dir: &Path) -> Result<OptimizeReport> {
    std::fs::create_dir_all(out_dir)?;
    let built = build_problem(cfg)?;
    let log_path = out_dir.join("log.csv");
    let outcome = match run(&built.problem, &cfg.optimizer) {
        Ok(o) => o,
        Err(aborted) => {
            write_log_csv(&log_path, &aborted.log)?;
            return Err(aborted.into());
        }
    };
    let mut files = vec![log_path.clone()];
    write_log_csv(&log_path, &outcome.log)?;
    let grid = &built.problem.grid;
    let design = &outcome.state.design;
    if cfg.output.pgm {
        let path = out_dir.join("design.pgm");
        write_density_pgm(&path, grid, design)?;
        files.push(path);
    }
    if cfg.output.vtk {
        let path = out_dir.join("fields.vtk");
        let (cells, meta) = design_fields(&built, design, cfg.problem.filter_radius)?;
        write_field_vtk(&path, grid, &cells, &meta)?;
        files.push(path);
    }
    let path = out_dir.join("config.txt");
    write_atomic(&path, cfg.to_text().as_bytes())?;
    files.push(path);
    Ok(OptimizeReport {
        state: outcome.state,
        log: outcome.log,
        files,
    })
}

/// Parses `"a,b;c,d"` into parameter points.
pub fn parse_points(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            p.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad parameter value `{v}`")))
                })
                .collect()
        })
        .collect()
}

/// Reads a design from a VTK file written by [`optimize`], or from plain
/// whitespace-separated numbers.
pub fn read_design(text: &str) -> Result<Vec<f64>> {
    if text.starts_with("# vtk") {
        let data = read_field_vtk(text)?;
        return data
            .cells
            .into_iter()
            .find(|c| c.name == "design")
            .map(|c| c.values)
            .ok_or_else(|| Error::InvalidInput("VTK file has no `design` array".into()));
    }
    text.split_whitespace()
        .map(|v| v.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad design value `{v}`"))))
        .collect()
}

/// Cost of `design` at each point: compliance, or the target misfit on the gripper.
pub fn evaluate(cfg: &RunConfig, design: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let built = build_problem(cfg)?;
    let oracle = &built.problem.oracle;
    if design.len() != oracle.design_len() {
        return Err(Error::DimensionMismatch {
            what: "design",
            expected: oracle.design_len(),
            found: design.len(),
        });
    }
    for p in points {
        if p.len() != oracle.param_dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter point",
                expected: oracle.param_dim(),
                found: p.len(),
            });
        }
    }
    let costs = oracle.prepare(design)?.costs(points)?;
    Ok(costs)
}

/// CSV table `index,compliance` of [`evaluate`].
pub fn evaluation_csv(costs: &[f64]) -> String {
    let mut s = String::from("index,compliance\n");
    for (i, c) in costs.iter().enumerate() {
        s.push_str(&format!("{i},{c}\n"));
    }
    s
}

/// Runs a verification suite; the report lists one line per check.
pub fn oracle(suite: &str) -> Result<SuiteReport> {
    run_suite(suite)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_parse() {
        assert_eq!(parse_points("1,2; -0.5,3e-1").unwrap(), vec![vec![1.0, 2.0], vec![-0.5, 0.3]]);
        assert!(parse_points("1,x").is_err());
    }

    #[test]
    fn every_formulation_builds_on_a_small_grid() {
        for preset in PRESETS {
            for form in ["deterministic", "mean", "wasserstein", "moment", "cvar", "cvar_dro"] {
                let text = format!(
                    "[problem]\npreset = {preset}\nformulation = {form}\nnx = 10\nny = 10\n[ambiguity]\nm = 0.5\nm1 = 1\nm2 = 2\nbeta = 0.5\nthreshold = 40\nsamples = 2\ninner_samples = 2\nmodes = 3\n"
                );
                let cfg = RunConfig::parse(&text).unwrap();
                let built = build_problem(&cfg).unwrap();
                let design = crate::optimizer::OptimizationProblem::initial_design(&built.problem);
                let aux = crate::optimizer::OptimizationProblem::initial_aux(&built.problem, &design).unwrap();
                let eval = crate::optimizer::OptimizationProblem::evaluate(&built.problem, &design, &aux, 0).unwrap();
                assert!(eval.objective.is_finite(), "{preset} {form}");
            }
        }
    }
}
