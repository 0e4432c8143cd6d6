//! Pinned verification suites, runnable from the command line.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    cvar_tail_average, dense_solve, density_weights, finite_difference_gradient, jacobi_eigen, primal_sup_moment_1d,
    primal_sup_wasserstein_1d, MomentInstance1d, WassersteinInstance1d,
};
use crate::cost::{AnalyticCost, CostOracle, LoadCompliance, MaterialTarget};
use crate::dro::{
    cvar_dro_constraint_grad, cvar_dro_constraint_value, cvar_minimize, cvar_minimize_weighted, moment_dual_grad,
    moment_dual_value, wasserstein_dual_grad, wasserstein_dual_value, AugmentedPoint, CvarConfig, LambdaSearch,
    MomentConfig, MomentTerms, WassersteinConfig, WassersteinTerms, LAMBDA_MIN,
};
use crate::error::{Error, Result};
use crate::grid_fem::{
    BoundaryConditions, DensityField, DensityFilter, FemModel, LoadPatch, MaterialModel, SolverOptions, StructuredGrid,
};
use crate::kl_field::{build_kl_basis, nystrom_matrix, realize_modulus, CovarianceSpec, ModulusTransform};
use crate::uncertainty::{
    draw_coupling_samples, nu_quadrature, q0_quadrature, AtomSamples, NominalLaw, ParameterSpace, ReferenceKernel,
    SeedRecord, TensorGrid, WeightedPoints,
};

/// Names accepted by [`run_suite`].
pub const SUITES: &[&str] = &["wasserstein", "moment", "cvar", "fem", "gradients", "kl"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn run_suite(name: &str) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match name {
        "wasserstein" => wasserstein_duality()?,
        "moment" => moment_duality()?,
        "cvar" => cvar_equivalence()?,
        "fem" => fem_correctness()?,
        "gradients" => gradient_checks()?,
        "kl" => kl_eigen()?,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown suite `{other}`, expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        checks,
        elapsed: start.elapsed(),
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

struct PinnedW {
    label: &'static str,
    f: fn(f64) -> f64,
    inst: WassersteinInstance1d,
}

fn w_instance(atoms: Vec<f64>, weights: Vec<f64>, sigma2: f64, eps: f64, radius: f64) -> WassersteinInstance1d {
    let far = atoms.iter().map(|a| a.abs()).fold(0.0, f64::max);
    let r = (10.0 * (sigma2.sqrt() + far)).max(3.0);
    WassersteinInstance1d {
        atoms,
        atom_weights: weights,
        sigma2,
        eps,
        radius,
        lo: -r,
        hi: r,
        nodes: 4001,
    }
}

fn pinned_wasserstein() -> Vec<PinnedW> {
    vec![
        PinnedW {
            label: "square, s2=0.1, eps=0.01, m=0.5",
            f: |z| z * z,
            inst: w_instance(vec![0.0], vec![1.0], 0.1, 0.01, 0.5),
        },
        PinnedW {
            label: "identity, s2=1, eps=0.1, m=0.5",
            f: |z| z,
            inst: w_instance(vec![0.5], vec![1.0], 1.0, 0.1, 0.5),
        },
        PinnedW {
            label: "shifted square, two atoms, s2=0.1, eps=0.1, m=2",
            f: |z| 0.5 * z * z - z,
            inst: w_instance(vec![-0.5, 1.0], vec![0.25, 0.75], 0.1, 0.1, 2.0),
        },
        PinnedW {
            label: "affine, s2=1, eps=0.01, m=2",
            f: |z| 2.0 * z + 1.0,
            inst: w_instance(vec![0.0], vec![1.0], 1.0, 0.01, 2.0),
        },
        PinnedW {
            label: "square, two atoms, s2=1, eps=0.1, m=0.5",
            f: |z| z * z,
            inst: w_instance(vec![-1.0, 1.0], vec![0.5, 0.5], 1.0, 0.1, 0.5),
        },
    ]
}

/// Quadrature batch of the kernels on the oracle's grid.
fn quadrature_batch(inst: &WassersteinInstance1d) -> Result<Vec<AtomSamples>> {
    let half = 0.5 * (inst.hi - inst.lo);
    let space = ParameterSpace::ball(vec![0.5 * (inst.hi + inst.lo)], half * (1.0 + 1e-12))?;
    let kernel = ReferenceKernel::new(inst.sigma2, space)?;
    let grid = TensorGrid::uniform_1d(inst.lo, inst.hi, inst.nodes)?;
    inst.atoms
        .iter()
        .zip(&inst.atom_weights)
        .map(|(a, w)| {
            Ok(AtomSamples {
                atom: vec![*a],
                atom_weight: *w,
                inner: nu_quadrature(&kernel, &[*a], &grid)?,
            })
        })
        .collect()
}

/// Grid over the multiplier used when minimizing the dual.
pub const DUAL_LAMBDA_SEARCH: LambdaSearch = LambdaSearch {
    lower: LAMBDA_MIN,
    upper: 1e4,
    points: 64,
    refine: true,
};

fn wasserstein_duality() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for p in pinned_wasserstein() {
        let primal = primal_sup_wasserstein_1d(&p.f, &p.inst)?;
        let batch = quadrature_batch(&p.inst)?;
        let f = p.f;
        let cost = AnalyticCost::fixed(1, move |x| f(x[0]));
        let terms = WassersteinTerms::from_oracle(&cost, &[], &batch)?;
        let cfg = WassersteinConfig::new(p.inst.radius, p.inst.eps)?;
        let (lam, dual) = DUAL_LAMBDA_SEARCH.minimize(|l| terms.value(l, &cfg))?;
        let gap = rel(primal.value, dual);
        checks.push(Check::new(
            format!("duality gap [{}]", p.label),
            gap <= 5e-3 && dual >= primal.value - 1e-6 * dual.abs().max(1.0),
            format!("primal {:.10} dual {:.10} rel {:.2e} (lambda* primal {:.4e}, dual {:.4e})", primal.value, dual, gap, primal.lambda, lam),
        ));
        let slack = (primal.distance - p.inst.radius).abs();
        checks.push(Check::new(
            format!("complementary slackness [{}]", p.label),
            primal.lambda <= 1e-5 || slack <= 1e-3,
            format!("lambda* {:.4e} |W - m| {:.2e}", primal.lambda, slack),
        ));
    }
    Ok(checks)
}

struct PinnedM {
    label: &'static str,
    f: fn(f64) -> f64,
    inst: MomentInstance1d,
}

fn m_instance(mean: f64, var: f64, m1: f64, m2: f64, eps: f64) -> MomentInstance1d {
    let r = 10.0 * (var.sqrt() + mean.abs());
    MomentInstance1d {
        mean,
        var,
        m1,
        m2,
        eps,
        lo: mean - r,
        hi: mean + r,
        nodes: 4001,
    }
}

fn pinned_moment() -> Vec<PinnedM> {
    vec![
        PinnedM {
            label: "identity, N(0,1), m1=0.5, m2=1.5, eps=0.1",
            f: |x| x,
            inst: m_instance(0.0, 1.0, 0.5, 1.5, 0.1),
        },
        PinnedM {
            label: "square, N(0,0.5), m1=0.2, m2=2, eps=0.1",
            f: |x| x * x,
            inst: m_instance(0.0, 0.5, 0.2, 2.0, 0.1),
        },
        PinnedM {
            label: "affine, N(1,0.2), m1=0.1, m2=1.2, eps=0.05",
            f: |x| 1.0 - 2.0 * x,
            inst: m_instance(1.0, 0.2, 0.1, 1.2, 0.05),
        },
        PinnedM {
            label: "shifted square, N(-0.5,1), m1=1, m2=3, eps=0.2",
            f: |x| 0.5 * x * x + x,
            inst: m_instance(-0.5, 1.0, 1.0, 3.0, 0.2),
        },
        PinnedM {
            label: "identity, slack mean, N(0,1), m1=2, m2=1.1, eps=1",
            f: |x| x,
            inst: m_instance(0.0, 1.0, 2.0, 1.1, 1.0),
        },
    ]
}

/// Minimizes a function of `(theta, s)` with `s >= 0` by repeated grid zooming.
pub fn zoom_minimize_2d(
    mut f: impl FnMut(f64, f64) -> Result<f64>,
    mut t_range: (f64, f64),
    mut s_range: (f64, f64),
) -> Result<(f64, f64, f64)> {
    let n = 41;
    let mut best = (0.0, 0.0, f64::INFINITY);
    for _ in 0..60 {
        for i in 0..n {
            let t = t_range.0 + (t_range.1 - t_range.0) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let s = s_range.0 + (s_range.1 - s_range.0) * j as f64 / (n - 1) as f64;
                let v = f(t, s)?;
                if v < best.2 {
                    best = (t, s, v);
                }
            }
        }
        let dt = 3.0 * (t_range.1 - t_range.0) / (n - 1) as f64;
        let ds = 3.0 * (s_range.1 - s_range.0) / (n - 1) as f64;
        t_range = (best.0 - dt, best.0 + dt);
        s_range = ((best.1 - ds).max(0.0), best.1 + ds);
        if dt < 1e-13 && ds < 1e-13 {
            break;
        }
    }
    Ok(best)
}

fn moment_point(theta: f64, s: f64) -> AugmentedPoint {
    AugmentedPoint {
        lambda: theta.abs(),
        tau: vec![if theta < 0.0 { -1.0 } else { 1.0 }],
        s: vec![vec![s]],
        alpha: 0.0,
    }
}

fn moment_duality() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for p in pinned_moment() {
        let inst = &p.inst;
        let primal = primal_sup_moment_1d(&p.f, inst)?;
        let law = NominalLaw::gaussian(vec![inst.mean], vec![vec![inst.var]])?;
        let half = 0.5 * (inst.hi - inst.lo);
        let space = ParameterSpace::ball(vec![inst.mean], half * (1.0 + 1e-12))?;
        let grid = TensorGrid::uniform_1d(inst.lo, inst.hi, inst.nodes)?;
        let samples = q0_quadrature(&law, &space, &grid)?;
        let f = p.f;
        let cost = AnalyticCost::fixed(1, move |x| f(x[0]));
        let terms = MomentTerms::from_oracle(&cost, &[], &samples)?;
        let cfg = MomentConfig::new(vec![inst.mean], vec![vec![inst.var]], inst.m1, inst.m2, inst.eps)?;
        let (_, _, dual) = zoom_minimize_2d(|t, s| terms.value(&moment_point(t, s), &cfg), (-40.0, 40.0), (0.0, 40.0))?;
        let gap = rel(primal.value, dual);
        checks.push(Check::new(
            format!("duality gap [{}]", p.label),
            gap <= 1e-2 && dual >= primal.value - 1e-6 * dual.abs().max(1.0),
            format!("primal {:.10} dual {:.10} rel {:.2e}", primal.value, dual, gap),
        ));
        let mean_ok = primal.mean_shift.abs() <= inst.m1 + 1e-3;
        let second_ok = primal.second_moment <= inst.m2 * inst.var + 1e-3;
        checks.push(Check::new(
            format!("moment constraints [{}]", p.label),
            mean_ok && second_ok,
            format!(
                "|shift| {:.6} <= {} and second moment {:.6} <= {}",
                primal.mean_shift.abs(),
                inst.m1,
                primal.second_moment,
                inst.m2 * inst.var
            ),
        ));
    }
    Ok(checks)
}

fn cvar_equivalence() -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let n = 100_001;
    let nodes: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let w = density_weights(&nodes, &|_| 1.0);
    let min = cvar_minimize_weighted(&nodes, &w, 0.9)?.cvar;
    let tail = cvar_tail_average(&nodes, &w, 0.9)?;
    checks.push(Check::new(
        "uniform density, beta=0.9",
        (min - tail).abs() <= 1e-9 && (min - 0.95).abs() <= 1e-9,
        format!("minimized {min:.12} tail {tail:.12}"),
    ));

    let n = 240_001;
    let nodes: Vec<f64> = (0..n).map(|i| -12.0 + 24.0 * i as f64 / (n - 1) as f64).collect();
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let w = density_weights(&nodes, &phi);
    let min = cvar_minimize_weighted(&nodes, &w, 0.5)?.cvar;
    let tail = cvar_tail_average(&nodes, &w, 0.5)?;
    checks.push(Check::new(
        "standard normal density, beta=0.5",
        (min - tail).abs() <= 1e-9 && (min - 0.797_884_560_8).abs() <= 1e-6,
        format!("minimized {min:.12} tail {tail:.12}"),
    ));

    let samples = [1.0, 2.0, 3.0, 4.0];
    let min = cvar_minimize(&samples, 0.5)?.cvar;
    let tail = cvar_tail_average(&samples, &[1.0; 4], 0.5)?;
    checks.push(Check::new(
        "samples {1,2,3,4}, beta=0.5",
        min == 3.5 && tail == 3.5,
        format!("minimized {min} tail {tail}"),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut ordered = true;
    for _ in 0..200 {
        let len = rng.random_range(1..40);
        let c: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let wts: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..1.0)).collect();
        let beta = rng.random_range(0.01..0.99);
        let r = cvar_minimize_weighted(&c, &wts, beta)?;
        worst = worst.max((r.cvar - cvar_tail_average(&c, &wts, beta)?).abs());
        ordered &= r.var <= r.cvar + 1e-12;
    }
    checks.push(Check::new(
        "random weighted samples",
        worst <= 1e-9 && ordered,
        format!("max |minimized - tail| {worst:.2e}, VaR <= CVaR: {ordered}"),
    ));
    Ok(checks)
}

fn tight() -> SolverOptions {
    SolverOptions {
        rel_tol: 1e-14,
        max_iter_factor: 100,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bar under uniform tension: `u_x = 0` on the left edge, `u_y = 0` at the origin.
pub fn patch_test_error(nx: usize, ny: usize, lx: f64, ly: f64, traction: f64) -> Result<f64> {
    let grid = StructuredGrid::new(nx, ny, lx, ly)?;
    let left = grid.nodes_on_vertical(0.0, 0.0, ly);
    let bc = BoundaryConditions::new()
        .fix_component(&left, 0)
        .fix_component(&[grid.node_index(0, 0)], 1)
        .with_patch(LoadPatch::new("right", grid.vertical_boundary_edges(lx, 0.0, ly)));
    let mat = MaterialModel::default();
    let model = FemModel::new(grid.clone(), mat, bc)?.with_solver(tight());
    let h = DensityField::uniform(grid.element_count(), 1.0)?;
    let state = model.solve_displacement(&h, None, &[traction, 0.0])?;
    let mut worst: f64 = 0.0;
    for n in 0..grid.node_count() {
        let (x, y) = grid.node_coords(n);
        let ux = traction * x / mat.youngs;
        let uy = -mat.poisson * traction * y / mat.youngs;
        worst = worst.max((state.u[2 * n] - ux).abs()).max((state.u[2 * n + 1] - uy).abs());
    }
    Ok(worst)
}

fn cantilever_model(nx: usize, ny: usize, solver: SolverOptions) -> Result<FemModel> {
    let (lx, ly) = (2.0, 1.0);
    let grid = StructuredGrid::new(nx, ny, lx, ly)?;
    let left = grid.nodes_on_vertical(0.0, 0.0, ly);
    let bc = BoundaryConditions::new()
        .clamp_nodes(&left)
        .with_patch(LoadPatch::new("tip", grid.vertical_boundary_edges(lx, 0.4 * ly, 0.6 * ly)));
    Ok(FemModel::new(grid, MaterialModel::default(), bc)?.with_solver(solver))
}

fn random_density(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn fem_correctness() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut worst: f64 = 0.0;
    for (nx, ny, lx, ly) in [(1, 1, 1.0, 1.0), (7, 4, 3.5, 2.0), (16, 9, 2.0, 1.0)] {
        worst = worst.max(patch_test_error(nx, ny, lx, ly, 0.7)?);
    }
    checks.push(Check::new(
        "patch test",
        worst <= 1e-10,
        format!("max nodal error {worst:.2e}"),
    ));

    let model = cantilever_model(12, 8, SolverOptions::default())?;
    let h = DensityField::new(random_density(96, 5, 0.05, 1.0))?;
    let k = model.reduced_stiffness(&h, None)?;
    let f: Vec<f64> = model
        .load_vector(&[0.3, -1.0])?
        .iter()
        .zip(model.fixed_mask())
        .map(|(v, fx)| if *fx { 0.0 } else { *v })
        .collect();
    let dense = k.to_dense();
    let exact = dense_solve(&dense, &f)?;
    let residual: f64 = dense
        .iter()
        .zip(&f)
        .map(|(row, b)| (dot(row, &exact) - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / dot(&f, &f).sqrt();
    let (u, _) = model.solve_system(&k, &f)?;
    let err = rel_vec(&u, &exact);
    checks.push(Check::new(
        format!("CG against dense solve ({} dofs)", f.len()),
        err <= 1e-8 && residual <= 1e-12,
        format!("relative error {err:.2e}, dense residual {residual:.2e}"),
    ));

    let state = model.solve_displacement(&h, None, &[0.3, -1.0])?;
    let full = model.assemble_stiffness(&h, None)?;
    let mut ku = vec![0.0; full.n];
    full.mul_vec(&state.u, &mut ku);
    let energy = dot(&state.u, &ku);
    let work = model.compliance(&state, &[0.3, -1.0])?;
    let gap = rel(energy, work);
    checks.push(Check::new(
        "compliance identity",
        gap <= 1e-8,
        format!("u^T K u {energy:.12} boundary work {work:.12} rel {gap:.2e}"),
    ));
    Ok(checks)
}

fn two_patch_model(nx: usize, ny: usize) -> Result<FemModel> {
    let (lx, ly) = (1.0, 1.0);
    let grid = StructuredGrid::new(nx, ny, lx, ly)?;
    let bottom = grid.nodes_on_horizontal(0.0, 0.0, lx);
    let bc = BoundaryConditions::new()
        .clamp_nodes(&bottom)
        .with_patch(LoadPatch::new("top-left", grid.horizontal_boundary_edges(ly, 0.0, 0.4)))
        .with_patch(LoadPatch::new("right", grid.vertical_boundary_edges(lx, 0.5, 1.0)));
    Ok(FemModel::new(grid, MaterialModel::default(), bc)?.with_solver(SolverOptions {
        rel_tol: 1e-13,
        max_iter_factor: 100,
    }))
}

fn fd_check(name: &str, analytic: &[f64], fd: &[f64]) -> Check {
    let err = rel_vec(analytic, fd);
    Check::new(name, err <= 1e-4, format!("relative error {err:.2e} over {} entries", fd.len()))
}

fn gradient_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let step_h = 1e-6;
    let step_aux = 1e-5;

    // compliance through the filter
    let model = cantilever_model(5, 5, tight())?;
    let grid = model.grid.clone();
    let lc = LoadCompliance::new(model, DensityFilter::new(&grid, 1.5));
    let design = random_density(25, 11, 0.2, 0.9);
    let xi = [0.4, -1.0];
    let g = lc.sensitivity(&design, &xi)?;
    let fd = finite_difference_gradient(|h| lc.evaluate(h, &xi), &design, step_h)?;
    checks.push(fd_check("compliance, 5x5", &g, &fd));

    // target misfit under a random modulus
    let grid = StructuredGrid::new(4, 4, 1.0, 1.0)?;
    let left = grid.nodes_on_vertical(0.0, 0.0, 1.0);
    let bc = BoundaryConditions::new()
        .clamp_nodes(&left)
        .with_patch(LoadPatch::new("in", grid.vertical_boundary_edges(1.0, 0.25, 0.75)));
    let model = FemModel::new(grid.clone(), MaterialModel::default(), bc)?.with_solver(tight());
    let basis = build_kl_basis(&grid, &CovarianceSpec::new(100.0, 0.3)?, 3)?;
    let mut target = vec![0.0; grid.dof_count()];
    for n in 0..grid.node_count() {
        target[2 * n] = -0.5 * grid.node_coords(n).0;
    }
    let chi: Vec<f64> = (0..16).map(|e| if grid.centroid(e).0 > 0.5 { 1.0 } else { 0.0 }).collect();
    let mt = MaterialTarget {
        model,
        filter: DensityFilter::new(&grid, 1.5),
        basis,
        transform: ModulusTransform::default(),
        load: vec![1.0, 0.0],
        target,
        chi,
        compliance_weight: 1e-2,
    };
    let design = random_density(16, 12, 0.2, 0.9);
    let xi = [0.8, -0.4, 1.1];
    let g = mt.sensitivity(&design, &xi)?;
    let fd = finite_difference_gradient(|h| mt.evaluate(h, &xi), &design, step_h)?;
    checks.push(fd_check("target misfit with random modulus, 4x4", &g, &fd));

    // robust functionals on a two-patch model, k = 4
    let model = two_patch_model(4, 4)?;
    let grid = model.grid.clone();
    let lc = LoadCompliance::new(model, DensityFilter::new(&grid, 1.5));
    let design = random_density(16, 13, 0.3, 0.9);
    let law = NominalLaw::weighted(
        vec![vec![0.0, -1.0, 0.5, 0.0], vec![0.3, -0.8, 0.0, 0.2]],
        vec![0.6, 0.4],
    )?;
    let kernel = ReferenceKernel::new(0.05, ParameterSpace::ball(vec![0.0; 4], 20.0)?)?;
    let batch = draw_coupling_samples(&law, &kernel, 6, 21, 0)?;
    // scale the dual so the tilt is neither flat nor degenerate
    let base = WassersteinTerms::from_oracle(&lc, &design, &batch)?;
    let spread = base.costs.iter().flatten().fold(0.0f64, |a, c| a.max(*c));
    let cfg = WassersteinConfig::new(0.3, 0.05)?;
    let lambda = spread.max(1.0);
    let gw = wasserstein_dual_grad(&lc, &design, lambda, &cfg, &batch)?;
    let fd = finite_difference_gradient(|h| wasserstein_dual_value(&lc, h, lambda, &cfg, &batch), &design, step_h)?;
    checks.push(fd_check("Wasserstein dual, design block", &gw.design, &fd));
    let fd = finite_difference_gradient(|l| wasserstein_dual_value(&lc, &design, l[0], &cfg, &batch), &[lambda], step_aux * lambda)?;
    checks.push(fd_check("Wasserstein dual, multiplier", &[gw.lambda], &fd));

    let mcfg = MomentConfig::new(
        vec![0.0, -1.0, 0.2, 0.0],
        (0..4).map(|a| (0..4).map(|b| if a == b { 0.02 } else { 0.005 }).collect()).collect(),
        0.5,
        2.0,
        spread.max(1.0) * 0.2,
    )?;
    let q0 = NominalLaw::gaussian(mcfg.mean.clone(), mcfg.cov.clone())?;
    let samples = WeightedPoints::uniform(
        crate::uncertainty::sample_q0(&q0, &ParameterSpace::ball(vec![0.0; 4], 20.0)?, 12, SeedRecord::new(4, 0, 0))?
            .points,
    );
    let pt = AugmentedPoint {
        lambda: 0.7,
        tau: vec![0.3, -0.2, 0.5, 0.1],
        s: vec![
            vec![0.4, 0.1, 0.0, 0.05],
            vec![0.1, 0.3, 0.02, 0.0],
            vec![0.0, 0.02, 0.5, 0.1],
            vec![0.05, 0.0, 0.1, 0.2],
        ],
        alpha: 0.0,
    };
    let gm = moment_dual_grad(&lc, &design, &pt, &mcfg, &samples)?;
    let fd = finite_difference_gradient(|h| moment_dual_value(&lc, h, &pt, &mcfg, &samples), &design, step_h)?;
    checks.push(fd_check("moment dual, design block", &gm.design, &fd));
    let fd = finite_difference_gradient(
        |l| moment_dual_value(&lc, &design, &AugmentedPoint { lambda: l[0], ..pt.clone() }, &mcfg, &samples),
        &[pt.lambda],
        step_aux,
    )?;
    checks.push(fd_check("moment dual, multiplier", &[gm.lambda], &fd));
    let fd = finite_difference_gradient(
        |t| moment_dual_value(&lc, &design, &AugmentedPoint { tau: t.to_vec(), ..pt.clone() }, &mcfg, &samples),
        &pt.tau,
        step_aux,
    )?;
    checks.push(fd_check("moment dual, tau block", &gm.tau, &fd));
    // symmetric perturbation of the upper triangle: off-diagonal derivative is 2 G_ab
    let upper: Vec<(usize, usize)> = (0..4).flat_map(|a| (a..4).map(move |b| (a, b))).collect();
    let flat: Vec<f64> = upper.iter().map(|&(a, b)| pt.s[a][b]).collect();
    let fd = finite_difference_gradient(
        |v| {
            let mut s = pt.s.clone();
            for (&(a, b), x) in upper.iter().zip(v) {
                s[a][b] = *x;
                s[b][a] = *x;
            }
            moment_dual_value(&lc, &design, &AugmentedPoint { s, ..pt.clone() }, &mcfg, &samples)
        },
        &flat,
        step_aux,
    )?;
    let analytic: Vec<f64> = upper
        .iter()
        .map(|&(a, b)| if a == b { gm.s[a][a] } else { gm.s[a][b] + gm.s[b][a] })
        .collect();
    checks.push(fd_check("moment dual, S block", &analytic, &fd));

    let costs = base.costs.iter().flatten().copied().collect::<Vec<_>>();
    let alpha = costs.iter().sum::<f64>() / costs.len() as f64;
    let ccfg = CvarConfig::new(0.7, 40.0, 20.0, cfg)?;
    let gc = cvar_dro_constraint_grad(&lc, &design, lambda, alpha, &ccfg, &batch)?;
    let fd = finite_difference_gradient(|h| cvar_dro_constraint_value(&lc, h, lambda, alpha, &ccfg, &batch), &design, step_h)?;
    checks.push(fd_check("CVaR dual, design block", &gc.design, &fd));
    let fd = finite_difference_gradient(
        |l| cvar_dro_constraint_value(&lc, &design, l[0], alpha, &ccfg, &batch),
        &[lambda],
        step_aux * lambda,
    )?;
    checks.push(fd_check("CVaR dual, multiplier", &[gc.lambda], &fd));
    let fd = finite_difference_gradient(
        |a| cvar_dro_constraint_value(&lc, &design, lambda, a[0], &ccfg, &batch),
        &[alpha],
        step_aux,
    )?;
    checks.push(fd_check("CVaR dual, anchor", &[gc.alpha], &fd));
    Ok(checks)
}

fn kl_eigen() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let grid = StructuredGrid::new(8, 8, 1.0, 1.0)?;
    let cov = CovarianceSpec::new(100.0, 0.02)?;
    let n = grid.element_count();
    let basis = build_kl_basis(&grid, &cov, n)?;
    let (b, weights) = nystrom_matrix(&grid, &cov);
    let (values, vectors) = jacobi_eigen(&b);
    let count = basis.len().min(values.len());
    let value_err = (0..count)
        .map(|i| (basis.eigenvalues[i] - values[i]).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "KL eigenvalues against Jacobi rotations, 8x8",
        count == n && value_err <= 1e-8,
        format!("{count} modes, max eigenvalue difference {value_err:.2e}"),
    ));

    // eigenvectors compared through spectral projectors; pairs closer than the
    // tolerance are merged since their individual vectors are ill-conditioned
    let lib_vectors: Vec<Vec<f64>> = basis
        .modes
        .iter()
        .map(|m| m.iter().zip(&weights).map(|(v, w)| v * w.sqrt()).collect())
        .collect();
    let mut worst: f64 = 0.0;
    let mut start = 0;
    while start < count {
        let mut end = start + 1;
        while end < count && (values[end - 1] - values[end]).abs() <= 1e-6 * values[0] {
            end += 1;
        }
        for r in 0..n {
            for c in 0..n {
                let p_lib: f64 = (start..end).map(|i| lib_vectors[i][r] * lib_vectors[i][c]).sum();
                let p_ref: f64 = (start..end).map(|i| vectors[i][r] * vectors[i][c]).sum();
                worst = worst.max((p_lib - p_ref).abs());
            }
        }
        start = end;
    }
    checks.push(Check::new(
        "KL eigenspaces against Jacobi rotations, 8x8",
        worst <= 1e-8,
        format!("max projector difference {worst:.2e}"),
    ));

    let mut residual: f64 = 0.0;
    for (value, v) in basis.eigenvalues.iter().zip(&lib_vectors) {
        for (row, vr) in b.iter().zip(v) {
            residual = residual.max((dot(row, v) - value * vr).abs());
        }
    }
    checks.push(Check::new(
        "KL eigenpair residuals, 8x8",
        residual <= 1e-8,
        format!("max |B v - lambda v| {residual:.2e}"),
    ));

    let mut orth: f64 = 0.0;
    for i in 0..count {
        for j in 0..count {
            let want = if i == j { 1.0 } else { 0.0 };
            orth = orth.max((basis.inner(&basis.modes[i], &basis.modes[j]) - want).abs());
        }
    }
    checks.push(Check::new(
        "KL modes orthonormal",
        orth <= 1e-8,
        format!("max deviation {orth:.2e}"),
    ));

    let ten = build_kl_basis(&grid, &cov, 10)?;
    let t = ModulusTransform::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut inside = true;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let xi: Vec<f64> = (0..10).map(|_| 3.0 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        for e in realize_modulus(&ten, &t, &xi)? {
            inside &= (0.1..=1.9).contains(&e);
            lo = lo.min(e);
            hi = hi.max(e);
        }
    }
    checks.push(Check::new(
        "realized moduli within [0.1, 1.9]",
        inside,
        format!("observed range [{lo:.6}, {hi:.6}] over 10^4 draws"),
    ));
    Ok(checks)
}
