//! Stochastic projected null-space descent over a design and the auxiliary
//! variables of the robust functionals.
//!
//! The design block follows the objective gradient projected onto the null
//! space of the active constraint gradients, plus a range-space correction that
//! restores the constraints. Auxiliary blocks take projected normalized
//! gradient steps. Every block is projected onto its admissible set after the
//! step.

mod formulation;

pub use formulation::{Formulation, RobustProblem};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dro::{AugmentedPoint, LAMBDA_MIN};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `g(h) = 0`.
    Equality,
    /// `g(h) <= 0`.
    Inequality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub kind: ConstraintKind,
    pub value: f64,
    pub design_grad: Vec<f64>,
}

/// Gradient with respect to the auxiliary blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxGradient {
    pub lambda: f64,
    pub tau: Vec<f64>,
    pub s: Vec<Vec<f64>>,
    pub alpha: f64,
}

impl AuxGradient {
    pub fn zero(k: usize) -> Self {
        Self {
            lambda: 0.0,
            tau: vec![0.0; k],
            s: vec![vec![0.0; k]; k],
            alpha: 0.0,
        }
    }
}

/// Which auxiliary blocks a problem actually uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActiveBlocks {
    pub lambda: bool,
    pub tau: bool,
    pub s: bool,
    pub alpha: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub design_grad: Vec<f64>,
    /// Descent direction source for the auxiliary blocks.
    pub aux_grad: AuxGradient,
    pub constraints: Vec<ConstraintEval>,
    pub volume: f64,
}

/// A problem seen by the descent loop. `evaluate` receives the iteration
/// index so that stochastic problems can draw a fresh batch per step.
pub trait OptimizationProblem: Sync {
    fn design_len(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn active_blocks(&self) -> ActiveBlocks;
    /// Upper bound of each design variable: 1, or 0 for elements pinned to void.
    fn upper_bounds(&self) -> Vec<f64>;
    fn initial_design(&self) -> Vec<f64>;
    fn initial_aux(&self, design: &[f64]) -> Result<AugmentedPoint>;
    fn evaluate(&self, design: &[f64], aux: &AugmentedPoint, iteration: usize) -> Result<Evaluation>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig {
    pub iterations: usize,
    /// Largest entry of the design step at iteration 0.
    pub step_design: f64,
    pub step_lambda: f64,
    pub step_tau: f64,
    pub step_s: f64,
    pub step_alpha: f64,
    /// Steps decay as `1 / sqrt(1 + t / t0)`; `None` keeps them constant.
    pub decay_t0: Option<f64>,
    /// Fraction of the linearized constraint violation removed per step.
    pub restoration: f64,
    /// Largest entry of the restoration step.
    pub restoration_clip: f64,
    /// Scale the null-space direction to `step_design` in the max norm;
    /// otherwise take a plain gradient step of length `step_design`.
    pub normalize_design_step: bool,
    /// Inequalities within this margin of their bound count as active.
    pub active_tol: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            step_design: 0.05,
            step_lambda: 0.1,
            step_tau: 0.1,
            step_s: 0.1,
            step_alpha: 0.1,
            decay_t0: Some(50.0),
            restoration: 1.0,
            restoration_clip: 0.2,
            normalize_design_step: true,
            active_tol: 1e-3,
        }
    }
}

impl DescentConfig {
    pub fn decay(&self, t: usize) -> f64 {
        match self.decay_t0 {
            Some(t0) => 1.0 / (1.0 + t as f64 / t0).sqrt(),
            None => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidInput("at least one iteration is required".into()));
        }
        let steps = [
            self.step_design,
            self.step_lambda,
            self.step_tau,
            self.step_s,
            self.step_alpha,
            self.restoration,
            self.restoration_clip,
        ];
        if steps.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("step sizes must be finite and nonnegative".into()));
        }
        if matches!(self.decay_t0, Some(t0) if !(t0 > 0.0)) {
            return Err(Error::InvalidInput("decay horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentState {
    pub design: Vec<f64>,
    pub aux: AugmentedPoint,
    pub iteration: usize,
}

/// One row per iteration, evaluated before that iteration's step.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub objective: f64,
    pub volume: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// Max-norm of the design change taken at this iteration.
    pub step_norm: f64,
    pub tau_norm: f64,
    pub s_norm: f64,
    pub constraints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceLog {
    pub rows: Vec<LogRow>,
}

impl ConvergenceLog {
    /// Smallest objective over the last `window` rows.
    pub fn trailing_min(&self, window: usize) -> Option<f64> {
        let start = self.rows.len().saturating_sub(window);
        self.rows[start..].iter().map(|r| r.objective).reduce(f64::min)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub state: DescentState,
    pub log: ConvergenceLog,
}

/// A failed run, with every row logged before the failure.
#[derive(Debug, thiserror::Error)]
#[error("optimization aborted at iteration {iteration}: {source}")]
pub struct RunAborted {
    pub iteration: usize,
    pub log: ConvergenceLog,
    #[source]
    pub source: Error,
}

impl From<RunAborted> for Error {
    fn from(e: RunAborted) -> Self {
        Error::Aborted {
            iteration: e.iteration,
            source: Box::new(e.source),
        }
    }
}

/// Clip into `[0, upper_e]`.
pub fn project_design(h: &mut [f64], upper: &[f64]) {
    for (v, u) in h.iter_mut().zip(upper) {
        *v = v.clamp(0.0, *u);
    }
}

pub fn project_lambda(lambda: f64) -> f64 {
    lambda.max(LAMBDA_MIN)
}

/// Radial scaling onto the closed unit ball.
pub fn project_tau(tau: &mut [f64]) {
    let norm = tau.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm > 1.0 {
        for t in tau.iter_mut() {
            *t /= norm;
        }
    }
}

/// Nearest positive semidefinite matrix in the Frobenius norm: symmetrize,
/// then clip negative eigenvalues to zero.
pub fn project_psd(s: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = s.len();
    if k == 0 {
        return Vec::new();
    }
    let m = DMatrix::from_fn(k, k, |a, b| 0.5 * (s[a][b] + s[b][a]));
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().all(|l| *l >= 0.0) {
        return (0..k).map(|a| (0..k).map(|b| 0.5 * (s[a][b] + s[b][a])).collect()).collect();
    }
    let clipped = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0)));
    let out = &eig.eigenvectors * clipped * eig.eigenvectors.transpose();
    (0..k).map(|a| (0..k).map(|b| 0.5 * (out[(a, b)] + out[(b, a)])).collect()).collect()
}

/// Null-space and range-space parts of the design direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDirection {
    /// Objective gradient with the active constraint gradients projected out.
    pub null: Vec<f64>,
    /// Least-norm step removing the linearized violation of the active constraints.
    pub range: Vec<f64>,
}

/// Splits `grad` against the rows `(gradient, value)` over the entries where `free` holds.
/// Rows vanishing on the free set are dropped.
pub fn split_direction(grad: &[f64], rows: &[(&[f64], f64)], free: &[bool]) -> Result<SplitDirection> {
    let n = grad.len();
    check_len("free mask", n, free.len())?;
    let masked: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .map(|(g, v)| {
            check_len("constraint gradient", n, g.len())?;
            Ok((g.iter().zip(free).map(|(x, f)| if *f { *x } else { 0.0 }).collect::<Vec<f64>>(), *v))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(g, _)| g.iter().map(|x| x * x).sum::<f64>() > 0.0)
        .collect();
    let gfree: Vec<f64> = grad.iter().zip(free).map(|(x, f)| if *f { *x } else { 0.0 }).collect();
    let m = masked.len();
    if m == 0 {
        return Ok(SplitDirection {
            null: gfree,
            range: vec![0.0; n],
        });
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = DMatrix::from_fn(m, m, |a, b| dot(&masked[a].0, &masked[b].0));
    let lu = gram.lu();
    let solve = |rhs: DVector<f64>| {
        lu.solve(&rhs)
            .ok_or_else(|| Error::InvalidInput("active constraint gradients are linearly dependent".into()))
    };
    let coef_j = solve(DVector::from_fn(m, |a, _| dot(&masked[a].0, &gfree)))?;
    let coef_c = solve(DVector::from_fn(m, |a, _| masked[a].1))?;
    let mut null = gfree;
    let mut range = vec![0.0; n];
    for (a, (g, _)) in masked.iter().enumerate() {
        for i in 0..n {
            null[i] -= coef_j[a] * g[i];
            range[i] += coef_c[a] * g[i];
        }
    }
    Ok(SplitDirection { null, range })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// New design after one null-space step from `design`. Variables sitting on
/// a bound that the step would push further out are frozen and the split is
/// recomputed without them.
pub fn null_space_step(
    design: &[f64],
    upper: &[f64],
    eval: &Evaluation,
    cfg: &DescentConfig,
    iteration: usize,
) -> Result<Vec<f64>> {
    let n = design.len();
    check_len("design gradient", n, eval.design_grad.len())?;
    check_len("upper bounds", n, upper.len())?;
    let rows: Vec<(&[f64], f64)> = eval
        .constraints
        .iter()
        .filter(|c| match c.kind {
            ConstraintKind::Equality => true,
            ConstraintKind::Inequality => c.value >= -cfg.active_tol,
        })
        .map(|c| (c.design_grad.as_slice(), c.value))
        .collect();
    let decay = cfg.decay(iteration);
    let mut free: Vec<bool> = upper.iter().map(|u| *u > 0.0).collect();
    let mut step = vec![0.0; n];
    for _ in 0..4 {
        let split = split_direction(&eval.design_grad, &rows, &free)?;
        let scale_j = if cfg.normalize_design_step {
            let top = max_abs(&split.null);
            if top > 0.0 {
                cfg.step_design * decay / top
            } else {
                0.0
            }
        } else {
            cfg.step_design * decay
        };
        let mut range: Vec<f64> = split.range.iter().map(|r| cfg.restoration * r).collect();
        let top = max_abs(&range);
        if top > cfg.restoration_clip {
            range.iter_mut().for_each(|r| *r *= cfg.restoration_clip / top);
        }
        for i in 0..n {
            step[i] = -scale_j * split.null[i] - range[i];
        }
        let mut changed = false;
        for i in 0..n {
            if free[i] && ((design[i] <= 0.0 && step[i] < 0.0) || (design[i] >= upper[i] && step[i] > 0.0)) {
                free[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out: Vec<f64> = design.iter().zip(&step).map(|(h, d)| h + d).collect();
    project_design(&mut out, upper);
    Ok(out)
}

fn normalized_step(block: &mut [f64], grad: &[f64], step: f64, scale: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm == 0.0 || step == 0.0 {
        return;
    }
    for (b, g) in block.iter_mut().zip(grad) {
        *b -= step * scale * g / norm;
    }
}

/// Projected normalized-gradient steps on the auxiliary blocks. The
/// multiplier moves multiplicatively so it can approach its floor
/// geometrically.
pub fn aux_step(
    aux: &AugmentedPoint,
    grad: &AuxGradient,
    active: ActiveBlocks,
    cfg: &DescentConfig,
    iteration: usize,
) -> AugmentedPoint {
    let decay = cfg.decay(iteration);
    let mut out = aux.clone();
    if active.lambda && grad.lambda != 0.0 {
        let factor = (-cfg.step_lambda * decay * grad.lambda.signum()).exp();
        out.lambda = project_lambda(aux.lambda * factor);
    }
    if active.tau {
        normalized_step(&mut out.tau, &grad.tau, cfg.step_tau * decay, 1.0);
        project_tau(&mut out.tau);
    }
    if active.s {
        let k = out.s.len();
        let mut flat: Vec<f64> = out.s.iter().flatten().copied().collect();
        let gflat: Vec<f64> = grad.s.iter().flatten().copied().collect();
        let scale = flat.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        normalized_step(&mut flat, &gflat, cfg.step_s * decay, scale);
        let s: Vec<Vec<f64>> = flat.chunks(k.max(1)).map(|c| c.to_vec()).collect();
        out.s = project_psd(&s);
    }
    if active.alpha && grad.alpha != 0.0 {
        let scale = aux.alpha.abs().max(1.0);
        out.alpha -= cfg.step_alpha * decay * scale * grad.alpha.signum();
    }
    out
}

/// Runs `cfg.iterations` steps of sample, evaluate, step, project, log.
pub fn run(problem: &dyn OptimizationProblem, cfg: &DescentConfig) -> std::result::Result<RunOutcome, RunAborted> {
    let mut log = ConvergenceLog::default();
    let abort = |iteration, log: ConvergenceLog, source| RunAborted { iteration, log, source };
    if let Err(e) = cfg.validate() {
        return Err(abort(0, log, e));
    }
    let upper = problem.upper_bounds();
    let mut design = problem.initial_design();
    project_design(&mut design, &upper);
    let mut aux = match problem.initial_aux(&design) {
        Ok(a) => a,
        Err(e) => return Err(abort(0, log, e)),
    };
    let active = problem.active_blocks();
    for t in 0..cfg.iterations {
        let eval = match problem.evaluate(&design, &aux, t) {
            Ok(e) => e,
            Err(e) => return Err(abort(t, log, e)),
        };
        if !eval.objective.is_finite() {
            return Err(abort(t, log, Error::InvalidInput(format!("objective is not finite: {}", eval.objective))));
        }
        let next = match null_space_step(&design, &upper, &eval, cfg, t) {
            Ok(d) => d,
            Err(e) => return Err(abort(t, log, e)),
        };
        let step_norm = design.iter().zip(&next).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        log.rows.push(LogRow {
            iter: t,
            objective: eval.objective,
            volume: eval.volume,
            lambda: aux.lambda,
            alpha: aux.alpha,
            step_norm,
            tau_norm: aux.tau.iter().map(|x| x * x).sum::<f64>().sqrt(),
            s_norm: aux.s.iter().flatten().map(|x| x * x).sum::<f64>().sqrt(),
            constraints: eval.constraints.iter().map(|c| c.value).collect(),
        });
        log::debug!("iter {t}: objective {:.6e} volume {:.4}", eval.objective, eval.volume);
        aux = aux_step(&aux, &eval.aux_grad, active, cfg, t);
        design = next;
    }
    Ok(RunOutcome {
        state: DescentState {
            design,
            aux,
            iteration: cfg.iterations,
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frob(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn psd_projection_clips_negative_eigenvalues() {
        let s = vec![vec![1.0, 0.0], vec![0.0, -2.0]];
        assert_eq!(project_psd(&s), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        let p = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
        assert_eq!(project_psd(&p), p);
    }

    #[test]
    fn psd_projection_is_nearest_among_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let k = 3;
            let mut s = vec![vec![0.0; k]; k];
            for a in 0..k {
                for b in a..k {
                    let v = rng.random_range(-2.0..2.0);
                    s[a][b] = v;
                    s[b][a] = v;
                }
            }
            let proj = project_psd(&s);
            let d = frob(&s, &proj);
            for _ in 0..100 {
                let l: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
                let p: Vec<Vec<f64>> = (0..k)
                    .map(|a| (0..k).map(|b| (0..k).map(|c| l[a][c] * l[b][c]).sum()).collect())
                    .collect();
                assert!(d <= frob(&s, &p) + 1e-12);
            }
        }
    }

    #[test]
    fn parallel_gradient_has_no_null_space_part() {
        let g = vec![1.0; 6];
        let grad: Vec<f64> = g.iter().map(|x| 3.5 * x).collect();
        let split = split_direction(&grad, &[(&g, 0.0)], &[true; 6]).unwrap();
        assert!(max_abs(&split.null) < 1e-14);
        assert!(max_abs(&split.range) == 0.0);
    }

    struct Quadratic {
        target: Vec<f64>,
        weights: Vec<f64>,
        volume: f64,
        start: Vec<f64>,
        constant: bool,
    }

    impl OptimizationProblem for Quadratic {
        fn design_len(&self) -> usize {
            self.target.len()
        }
        fn param_dim(&self) -> usize {
            0
        }
        fn active_blocks(&self) -> ActiveBlocks {
            ActiveBlocks::default()
        }
        fn upper_bounds(&self) -> Vec<f64> {
            vec![1.0; self.target.len()]
        }
        fn initial_design(&self) -> Vec<f64> {
            self.start.clone()
        }
        fn initial_aux(&self, _: &[f64]) -> Result<AugmentedPoint> {
            Ok(AugmentedPoint::initial(0))
        }
        fn evaluate(&self, h: &[f64], _: &AugmentedPoint, _: usize) -> Result<Evaluation> {
            let n = h.len() as f64;
            let (objective, grad) = if self.constant {
                (1.0, vec![0.0; h.len()])
            } else {
                let obj = h
                    .iter()
                    .zip(&self.target)
                    .zip(&self.weights)
                    .map(|((x, t), w)| 0.5 * w * (x - t) * (x - t))
                    .sum();
                (obj, h.iter().zip(&self.target).zip(&self.weights).map(|((x, t), w)| w * (x - t)).collect())
            };
            let vol = h.iter().sum::<f64>() / n;
            Ok(Evaluation {
                objective,
                design_grad: grad,
                aux_grad: AuxGradient::zero(0),
                constraints: vec![ConstraintEval {
                    kind: ConstraintKind::Equality,
                    value: vol - self.volume,
                    design_grad: vec![1.0 / n; h.len()],
                }],
                volume: vol,
            })
        }
    }

    #[test]
    fn volume_residual_halves_with_half_restoration() {
        let p = Quadratic {
            target: vec![0.0; 16],
            weights: vec![1.0; 16],
            volume: 0.4,
            start: (0..16).map(|i| 0.1 + 0.05 * i as f64).collect(),
            constant: true,
        };
        let cfg = DescentConfig {
            iterations: 12,
            restoration: 0.5,
            restoration_clip: 1.0,
            ..DescentConfig::default()
        };
        let out = run(&p, &cfg).unwrap();
        let r: Vec<f64> = out.log.rows.iter().map(|row| row.constraints[0].abs()).collect();
        for w in r.windows(2) {
            assert!((w[1] - 0.5 * w[0]).abs() <= 1e-12 * w[0].max(1e-300), "{w:?}");
        }
    }

    #[test]
    fn quadratic_toy_reaches_projected_optimum() {
        // minimize sum w_i (h_i - t_i)^2 / 2 s.t. mean(h) = v; KKT: h_i = t_i - mu / (n w_i)
        let target = vec![0.2, 0.5, 0.9, 0.4, 0.7, 0.3];
        let weights = vec![1.0, 2.0, 0.5, 1.5, 1.0, 3.0];
        let n = target.len() as f64;
        let v = 0.45;
        let inv: f64 = weights.iter().map(|w| 1.0 / w).sum();
        let mu = (target.iter().sum::<f64>() - n * v) * n / inv;
        let exact: Vec<f64> = target.iter().zip(&weights).map(|(t, w)| t - mu / (n * w)).collect();
        assert!(exact.iter().all(|x| (0.0..=1.0).contains(x)));
        let p = Quadratic {
            target,
            weights,
            volume: v,
            start: vec![0.5; 6],
            constant: false,
        };
        let cfg = DescentConfig {
            iterations: 400,
            step_design: 0.3,
            decay_t0: None,
            normalize_design_step: false,
            ..DescentConfig::default()
        };
        let out = run(&p, &cfg).unwrap();
        for (h, e) in out.state.design.iter().zip(&exact) {
            assert!((h - e).abs() <= 1e-6, "{h} vs {e}");
        }
    }

    #[test]
    fn zero_steps_leave_iterates_unchanged() {
        let p = Quadratic {
            target: vec![0.2, 0.8, 0.4],
            weights: vec![1.0; 3],
            volume: 0.5,
            start: vec![0.3, 0.6, 0.5],
            constant: false,
        };
        let cfg = DescentConfig {
            iterations: 5,
            step_design: 0.0,
            restoration: 0.0,
            ..DescentConfig::default()
        };
        let out = run(&p, &cfg).unwrap();
        assert_eq!(out.state.design, vec![0.3, 0.6, 0.5]);
    }

    #[test]
    fn zero_aux_steps_leave_aux_unchanged() {
        let aux = AugmentedPoint {
            lambda: 0.7,
            tau: vec![0.2, -0.1],
            s: vec![vec![0.5, 0.1], vec![0.1, 0.4]],
            alpha: 3.0,
        };
        let grad = AuxGradient {
            lambda: 1.0,
            tau: vec![1.0, 1.0],
            s: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            alpha: -2.0,
        };
        let cfg = DescentConfig {
            step_lambda: 0.0,
            step_tau: 0.0,
            step_s: 0.0,
            step_alpha: 0.0,
            ..DescentConfig::default()
        };
        let all = ActiveBlocks {
            lambda: true,
            tau: true,
            s: true,
            alpha: true,
        };
        assert_eq!(aux_step(&aux, &grad, all, &cfg, 3), aux);
    }

    #[test]
    fn bound_variables_are_frozen_so_volume_is_still_restored() {
        let design = vec![0.0, 0.0, 0.5, 1.0];
        let eval = Evaluation {
            objective: 0.0,
            design_grad: vec![1.0, 1.0, 0.0, -1.0],
            aux_grad: AuxGradient::zero(0),
            constraints: vec![ConstraintEval {
                kind: ConstraintKind::Equality,
                value: 0.0,
                design_grad: vec![0.25; 4],
            }],
            volume: 0.375,
        };
        let cfg = DescentConfig {
            decay_t0: None,
            ..DescentConfig::default()
        };
        let next = null_space_step(&design, &[1.0; 4], &eval, &cfg, 0).unwrap();
        let vol: f64 = next.iter().sum::<f64>() / 4.0;
        assert!((vol - 0.375).abs() < 1e-12, "{next:?}");
    }

    proptest! {
        #[test]
        fn projections_are_idempotent_and_nonexpansive(
            a in proptest::collection::vec(-3.0f64..3.0, 9),
            b in proptest::collection::vec(-3.0f64..3.0, 9),
            lam in -1.0f64..5.0,
        ) {
            let upper = [1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0];
            let mut pa = a.clone();
            project_design(&mut pa, &upper);
            let mut twice = pa.clone();
            project_design(&mut twice, &upper);
            prop_assert_eq!(&pa, &twice);
            let mut pb = b.clone();
            project_design(&mut pb, &upper);
            let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            prop_assert!(d(&pa, &pb) <= d(&a, &b) + 1e-12);

            let mut ta = a[..3].to_vec();
            let mut tb = b[..3].to_vec();
            project_tau(&mut ta);
            project_tau(&mut tb);
            let mut ta2 = ta.clone();
            project_tau(&mut ta2);
            for (x, y) in ta.iter().zip(&ta2) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
            prop_assert!(d(&ta, &tb) <= d(&a[..3], &b[..3]) + 1e-12);

            let sym = |v: &[f64]| -> Vec<Vec<f64>> {
                (0..3).map(|r| (0..3).map(|c| 0.5 * (v[3 * r + c] + v[3 * c + r])).collect()).collect()
            };
            let (sa, sb) = (sym(&a), sym(&b));
            let (qa, qb) = (project_psd(&sa), project_psd(&sb));
            prop_assert!(frob(&project_psd(&qa), &qa) <= 1e-12);
            prop_assert!(frob(&qa, &qb) <= frob(&sa, &sb) + 1e-12);

            let l = project_lambda(lam);
            prop_assert!(l >= LAMBDA_MIN && project_lambda(l) == l);
        }
    }
}
