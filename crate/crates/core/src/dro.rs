//! Tractable dual forms of the robust functionals and their gradients.
//!
//! Every functional takes a frozen batch of parameter points, so the value and
//! the gradient of one iteration share the same random numbers. Quadrature
//! batches (non-uniform weights) go through the same code.

use crate::cost::{CostOracle, PreparedCost};
use crate::error::{check_len, Error, Result};
use crate::uncertainty::{
    cholesky, log_sum_exp_weighted, softmax_weighted, AtomSamples, ReferenceKernel, TensorGrid, WeightedPoints,
};

/// Positive floor for the Wasserstein multiplier.
pub const LAMBDA_MIN: f64 = 1e-6;

/// Default sharpness of the smoothed hinge.
pub const SOFTPLUS_SHARPNESS: f64 = 20.0;

/// Quadratic ground cost `|xi - zeta|^2`.
pub fn ground_cost(xi: &[f64], zeta: &[f64]) -> f64 {
    xi.iter().zip(zeta).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Entropic Wasserstein ball around the nominal law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WassersteinConfig {
    /// Ball radius `m`.
    pub radius: f64,
    /// Entropy weight `epsilon`.
    pub eps: f64,
    pub lambda_min: f64,
}

impl WassersteinConfig {
    pub fn new(radius: f64, eps: f64) -> Result<Self> {
        if !(radius >= 0.0) || !(eps > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Wasserstein ball needs m >= 0 and eps > 0, got {radius} and {eps}"
            )));
        }
        Ok(Self {
            radius,
            eps,
            lambda_min: LAMBDA_MIN,
        })
    }

    /// Smallest radius for which the ball is nonempty, for a one-atom law and an
    /// untruncated Gaussian kernel in dimension `k`.
    pub fn minimal_radius(eps: f64, sigma2: f64, k: usize) -> f64 {
        0.5 * eps * k as f64 * (1.0 + 2.0 * sigma2 / eps).ln()
    }
}

/// Moment ambiguity set around a Gaussian reference law.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConfig {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// Bound on the mean shift.
    pub m1: f64,
    /// Bound on the centred second moment, as a multiple of `cov`.
    pub m2: f64,
    pub eps: f64,
}

impl MomentConfig {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>, m1: f64, m2: f64, eps: f64) -> Result<Self> {
        check_len("covariance", mean.len(), cov.len())?;
        cholesky(&cov)?;
        if !(m1 >= 0.0) || !(m2 > 0.0) || !(eps > 0.0) {
            return Err(Error::InvalidInput(format!(
                "moment set needs m1 >= 0, m2 > 0, eps > 0, got {m1}, {m2}, {eps}"
            )));
        }
        Ok(Self {
            mean,
            cov,
            m1,
            m2,
            eps,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Reliability constraint through the conditional value at risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarConfig {
    pub beta: f64,
    pub threshold: f64,
    pub gamma: f64,
    pub wasserstein: WassersteinConfig,
}

impl CvarConfig {
    pub fn new(beta: f64, threshold: f64, gamma: f64, wasserstein: WassersteinConfig) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) || !(gamma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "CVaR needs 0 < beta < 1 and gamma > 0, got {beta} and {gamma}"
            )));
        }
        Ok(Self {
            beta,
            threshold,
            gamma,
            wasserstein,
        })
    }
}

/// Auxiliary variables co-optimized with the design.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPoint {
    pub lambda: f64,
    pub tau: Vec<f64>,
    pub s: Vec<Vec<f64>>,
    pub alpha: f64,
}

impl AugmentedPoint {
    /// `lambda = 1`, `tau = 0`, `S = 0`, `alpha = 0` in dimension `k`.
    pub fn initial(k: usize) -> Self {
        Self {
            lambda: 1.0,
            tau: vec![0.0; k],
            s: vec![vec![0.0; k]; k],
            alpha: 0.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smoothed hinge `t / (1 + exp(-gamma t))`.
pub fn softplus(t: f64, gamma: f64) -> f64 {
    t * sigmoid(gamma * t)
}

pub fn softplus_derivative(t: f64, gamma: f64) -> f64 {
    let s = sigmoid(gamma * t);
    s + gamma * t * s * (1.0 - s)
}

/// Costs of every point of every atom, evaluated in one batch.
fn atom_costs(prepared: &dyn PreparedCost, batch: &[AtomSamples]) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(Error::Empty("sample batch has no atoms"));
    }
    let all: Vec<Vec<f64>> = batch.iter().flat_map(|a| a.inner.points.iter().cloned()).collect();
    let flat = prepared.costs(&all)?;
    let mut out = Vec::with_capacity(batch.len());
    let mut offset = 0;
    for a in batch {
        if a.inner.is_empty() {
            return Err(Error::Empty("atom with no inner samples"));
        }
        out.push(flat[offset..offset + a.inner.len()].to_vec());
        offset += a.inner.len();
    }
    Ok(out)
}

fn weighted_design_gradient(
    prepared: &dyn PreparedCost,
    batch: &[AtomSamples],
    weights: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let points: Vec<Vec<f64>> = batch.iter().flat_map(|a| a.inner.points.iter().cloned()).collect();
    let w: Vec<f64> = weights.iter().flatten().copied().collect();
    prepared.weighted_sensitivity(&points, &w)
}

/// Costs and ground costs of a frozen Wasserstein batch, reusable across multipliers.
#[derive(Debug, Clone)]
pub struct WassersteinTerms {
    pub costs: Vec<Vec<f64>>,
    pub ground: Vec<Vec<f64>>,
    pub inner_weights: Vec<Vec<f64>>,
    pub atom_weights: Vec<f64>,
}

impl WassersteinTerms {
    pub fn new(costs: Vec<Vec<f64>>, batch: &[AtomSamples]) -> Result<Self> {
        check_len("atom costs", batch.len(), costs.len())?;
        let ground = batch
            .iter()
            .map(|a| a.inner.points.iter().map(|z| ground_cost(&a.atom, z)).collect())
            .collect();
        Ok(Self {
            costs,
            ground,
            inner_weights: batch.iter().map(|a| a.inner.weights.clone()).collect(),
            atom_weights: batch.iter().map(|a| a.atom_weight).collect(),
        })
    }

    /// Evaluates `oracle` on the batch.
    pub fn from_oracle(oracle: &dyn CostOracle, design: &[f64], batch: &[AtomSamples]) -> Result<Self> {
        let prepared = oracle.prepare(design)?;
        Self::new(atom_costs(prepared.as_ref(), batch)?, batch)
    }

    fn exponents(&self, i: usize, lambda: f64, eps: f64) -> Vec<f64> {
        self.costs[i]
            .iter()
            .zip(&self.ground[i])
            .map(|(c, g)| (c - lambda * g) / (lambda * eps))
            .collect()
    }

    /// Per-atom `log int exp((C - lambda c) / (lambda eps)) d nu`.
    pub fn log_partition(&self, lambda: f64, eps: f64) -> Result<Vec<f64>> {
        (0..self.costs.len())
            .map(|i| log_sum_exp_weighted(&self.exponents(i, lambda, eps), &self.inner_weights[i]))
            .collect()
    }

    /// Tilted weights per atom, each summing to one.
    pub fn softmax(&self, lambda: f64, eps: f64) -> Vec<Vec<f64>> {
        (0..self.costs.len())
            .map(|i| softmax_weighted(&self.exponents(i, lambda, eps), &self.inner_weights[i]))
            .collect()
    }

    pub fn value(&self, lambda: f64, cfg: &WassersteinConfig) -> Result<f64> {
        check_lambda(lambda, cfg)?;
        let logz = self.log_partition(lambda, cfg.eps)?;
        let avg: f64 = logz.iter().zip(&self.atom_weights).map(|(l, p)| p * l).sum();
        Ok(lambda * cfg.radius + lambda * cfg.eps * avg)
    }

    /// Derivative of the dual value in the multiplier.
    pub fn d_lambda(&self, lambda: f64, cfg: &WassersteinConfig) -> Result<f64> {
        check_lambda(lambda, cfg)?;
        let logz = self.log_partition(lambda, cfg.eps)?;
        let s = self.softmax(lambda, cfg.eps);
        let mut d = cfg.radius;
        for i in 0..self.costs.len() {
            let tilt_mean: f64 = s[i].iter().zip(&self.costs[i]).map(|(w, c)| w * c).sum();
            d += self.atom_weights[i] * (cfg.eps * logz[i] - tilt_mean / lambda);
        }
        Ok(d)
    }
}

fn check_lambda(lambda: f64, cfg: &WassersteinConfig) -> Result<()> {
    if !(lambda >= cfg.lambda_min) {
        return Err(Error::InvalidInput(format!(
            "multiplier {lambda} below its floor {}",
            cfg.lambda_min
        )));
    }
    Ok(())
}

/// Value and gradient blocks of the Wasserstein dual.
#[derive(Debug, Clone, PartialEq)]
pub struct WassersteinGrad {
    pub value: f64,
    pub design: Vec<f64>,
    pub lambda: f64,
    /// Tilted weights per atom.
    pub weights: Vec<Vec<f64>>,
}

/// `lambda m + lambda eps sum_i p_i log int exp((C(h, zeta) - lambda |xi_i - zeta|^2) / (lambda eps)) d nu_i`.
pub fn wasserstein_dual_value(
    oracle: &dyn CostOracle,
    design: &[f64],
    lambda: f64,
    cfg: &WassersteinConfig,
    batch: &[AtomSamples],
) -> Result<f64> {
    WassersteinTerms::from_oracle(oracle, design, batch)?.value(lambda, cfg)
}

pub fn wasserstein_dual_grad(
    oracle: &dyn CostOracle,
    design: &[f64],
    lambda: f64,
    cfg: &WassersteinConfig,
    batch: &[AtomSamples],
) -> Result<WassersteinGrad> {
    let prepared = oracle.prepare(design)?;
    let terms = WassersteinTerms::new(atom_costs(prepared.as_ref(), batch)?, batch)?;
    let value = terms.value(lambda, cfg)?;
    let d_lambda = terms.d_lambda(lambda, cfg)?;
    let s = terms.softmax(lambda, cfg.eps);
    let scaled: Vec<Vec<f64>> = s
        .iter()
        .zip(&terms.atom_weights)
        .map(|(row, p)| row.iter().map(|w| p * w).collect())
        .collect();
    let design_grad = weighted_design_gradient(prepared.as_ref(), batch, &scaled)?;
    Ok(WassersteinGrad {
        value,
        design: design_grad,
        lambda: d_lambda,
        weights: s,
    })
}

/// Log-spaced grid search for a scalar function of the multiplier, optionally
/// refined by golden-section search around the best grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSearch {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub refine: bool,
}

impl LambdaSearch {
    pub fn grid(&self) -> Vec<f64> {
        let (a, b) = (self.lower.ln(), self.upper.ln());
        let n = self.points.max(2);
        let mut g: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
        // pin the ends so the floor is hit exactly
        g[0] = self.lower;
        g[n - 1] = self.upper;
        g
    }

    /// Returns the minimizing multiplier and the minimum.
    pub fn minimize(&self, mut f: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
        let grid = self.grid();
        let values: Vec<f64> = grid.iter().map(|l| f(*l)).collect::<Result<_>>()?;
        let best = (0..grid.len())
            .min_by(|&i, &j| values[i].total_cmp(&values[j]))
            .expect("grid is nonempty");
        if !self.refine {
            return Ok((grid[best], values[best]));
        }
        let lo = grid[best.saturating_sub(1)].ln();
        let hi = grid[(best + 1).min(grid.len() - 1)].ln();
        let (mut a, mut b) = (lo, hi);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - r * (b - a);
        let mut x2 = a + r * (b - a);
        let at = |x: f64| x.exp().clamp(self.lower, self.upper);
        let mut f1 = f(at(x1))?;
        let mut f2 = f(at(x2))?;
        for _ in 0..80 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - r * (b - a);
                f1 = f(at(x1))?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + r * (b - a);
                f2 = f(at(x2))?;
            }
            if b - a < 1e-12 {
                break;
            }
        }
        let (x, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if v < values[best] {
            Ok((at(x), v))
        } else {
            Ok((grid[best], values[best]))
        }
    }
}

/// Tilted density of the worst-case coupling on a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedDensity {
    pub points: Vec<Vec<f64>>,
    /// Normalized weights of the reference kernel on the grid.
    pub reference: Vec<f64>,
    /// Normalized weights of the tilted law on the grid.
    pub tilted: Vec<f64>,
    /// Density ratio `tilted / reference` (zero where the reference vanishes).
    pub ratio: Vec<f64>,
}

/// Tilts the kernel around `atom` by `exp((f - lambda c) / (lambda eps))`.
///
/// `f_values` are given at the nodes of `grid` in its natural order. Fails
/// when the grid has fewer than 64 nodes per axis or when halving the
/// resolution moves the normalization by more than `1e-6`.
pub fn wasserstein_primal_reconstruct(
    f_values: &[f64],
    grid: &TensorGrid,
    kernel: &ReferenceKernel,
    atom: &[f64],
    lambda: f64,
    eps: f64,
) -> Result<TiltedDensity> {
    if grid.min_nodes_per_axis() < 64 {
        return Err(Error::GridTooCoarse(format!(
            "need at least 64 nodes per axis, got {}",
            grid.min_nodes_per_axis()
        )));
    }
    check_len("grid dimension", atom.len(), grid.dim())?;
    let (points, quad) = grid.nodes(false);
    check_len("function values", points.len(), f_values.len())?;
    let nu: Vec<f64> = points
        .iter()
        .zip(&quad)
        .map(|(p, w)| w * kernel.unnormalized_density(atom, p))
        .collect();
    let expo: Vec<f64> = points
        .iter()
        .zip(f_values)
        .map(|(p, f)| (f - lambda * ground_cost(atom, p)) / (lambda * eps))
        .collect();
    let shift = expo
        .iter()
        .zip(&nu)
        .filter(|(_, w)| **w > 0.0)
        .map(|(e, _)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = expo
        .iter()
        .zip(&nu)
        .map(|(e, w)| if *w > 0.0 { w * (e - shift).exp() } else { 0.0 })
        .collect();
    let full: f64 = raw.iter().sum();
    let nu_total: f64 = nu.iter().sum();
    let change = coarse_tilt_mean(grid, &points, &expo, atom, kernel, shift) / (full / nu_total) - 1.0;
    if !(full > 0.0) || !(change.abs() <= 1e-6) {
        return Err(Error::GridTooCoarse(format!(
            "normalization changes by {:e} at half resolution",
            change.abs()
        )));
    }
    let reference: Vec<f64> = nu.iter().map(|w| w / nu_total).collect();
    let tilted: Vec<f64> = raw.iter().map(|w| w / full).collect();
    let ratio = tilted
        .iter()
        .zip(&reference)
        .map(|(t, r)| if *r > 0.0 { t / r } else { 0.0 })
        .collect();
    Ok(TiltedDensity {
        points,
        reference,
        tilted,
        ratio,
    })
}

/// Mean of the tilt factor under the kernel, recomputed on every other node.
fn coarse_tilt_mean(
    grid: &TensorGrid,
    points: &[Vec<f64>],
    expo: &[f64],
    atom: &[f64],
    kernel: &ReferenceKernel,
    shift: f64,
) -> f64 {
    let coarse = TensorGrid {
        axes: grid
            .axes
            .iter()
            .map(|&(lo, hi, n)| {
                let m = (n - 1) / 2;
                let h = (hi - lo) / (n - 1) as f64;
                (lo, lo + 2.0 * h * m as f64, m + 1)
            })
            .collect(),
    };
    let (_, cw) = coarse.nodes(false);
    let nx = grid.axes[0].2;
    let cnx = coarse.axes[0].2;
    let mut tilt = 0.0;
    let mut norm = 0.0;
    for (c, w) in cw.iter().enumerate() {
        let fine = 2 * (c / cnx) * nx + 2 * (c % cnx);
        let d = w * kernel.unnormalized_density(atom, &points[fine]);
        if d > 0.0 {
            tilt += d * (expo[fine] - shift).exp();
            norm += d;
        }
    }
    tilt / norm
}

/// Value and gradient blocks of the moment dual.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGrad {
    pub value: f64,
    pub design: Vec<f64>,
    pub lambda: f64,
    pub tau: Vec<f64>,
    pub s: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Costs of a frozen reference-law batch, reusable across auxiliary points.
#[derive(Debug, Clone)]
pub struct MomentTerms {
    pub costs: Vec<f64>,
    pub samples: WeightedPoints,
}

impl MomentTerms {
    pub fn from_oracle(oracle: &dyn CostOracle, design: &[f64], samples: &WeightedPoints) -> Result<Self> {
        let prepared = oracle.prepare(design)?;
        Ok(Self {
            costs: prepared.costs(&samples.points)?,
            samples: samples.clone(),
        })
    }

    fn exponents(&self, pt: &AugmentedPoint, cfg: &MomentConfig) -> Vec<f64> {
        self.samples
            .points
            .iter()
            .zip(&self.costs)
            .map(|(x, c)| {
                let lin: f64 = pt.tau.iter().zip(x).map(|(t, v)| pt.lambda * t * v).sum();
                (c + lin - quad_form(&pt.s, x, &cfg.mean)) / cfg.eps
            })
            .collect()
    }

    pub fn value(&self, pt: &AugmentedPoint, cfg: &MomentConfig) -> Result<f64> {
        check_moment_point(pt, cfg)?;
        if self.samples.is_empty() {
            return Err(Error::Empty("moment batch has no samples"));
        }
        let l = log_sum_exp_weighted(&self.exponents(pt, cfg), &self.samples.weights)?;
        let shift: f64 = pt.tau.iter().zip(&cfg.mean).map(|(t, m)| t * m).sum();
        Ok(pt.lambda * cfg.m1 - pt.lambda * shift + cfg.m2 * frobenius(&pt.s, &cfg.cov) + cfg.eps * l)
    }

    /// Gradient in `(lambda, tau, S)` and the tilted weights.
    pub fn aux_gradient(&self, pt: &AugmentedPoint, cfg: &MomentConfig) -> Result<MomentAuxGradient> {
        check_moment_point(pt, cfg)?;
        let k = cfg.dim();
        let s = softmax_weighted(&self.exponents(pt, cfg), &self.samples.weights);
        let mut tilt_mean = vec![0.0; k];
        let mut tilt_second = vec![vec![0.0; k]; k];
        for (x, w) in self.samples.points.iter().zip(&s) {
            for a in 0..k {
                tilt_mean[a] += w * x[a];
                for b in 0..k {
                    tilt_second[a][b] += w * (x[a] - cfg.mean[a]) * (x[b] - cfg.mean[b]);
                }
            }
        }
        let d_lambda = cfg.m1
            + pt.tau
                .iter()
                .zip(&tilt_mean)
                .zip(&cfg.mean)
                .map(|((t, xm), m)| t * (xm - m))
                .sum::<f64>();
        let d_tau = (0..k).map(|a| pt.lambda * (tilt_mean[a] - cfg.mean[a])).collect();
        let d_s = (0..k)
            .map(|a| (0..k).map(|b| cfg.m2 * cfg.cov[a][b] - tilt_second[a][b]).collect())
            .collect();
        Ok((d_lambda, d_tau, d_s, s))
    }
}

fn quad_form(s: &[Vec<f64>], x: &[f64], mean: &[f64]) -> f64 {
    let k = mean.len();
    let mut acc = 0.0;
    for a in 0..k {
        for b in 0..k {
            acc += s[a][b] * (x[a] - mean[a]) * (x[b] - mean[b]);
        }
    }
    acc
}

fn frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

fn check_moment_point(pt: &AugmentedPoint, cfg: &MomentConfig) -> Result<()> {
    let k = cfg.dim();
    check_len("tau", k, pt.tau.len())?;
    check_len("S", k, pt.s.len())?;
    for row in &pt.s {
        check_len("S row", k, row.len())?;
    }
    if !(pt.lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("multiplier must be nonnegative, got {}", pt.lambda)));
    }
    Ok(())
}

/// `lambda m1 - lambda tau.mu0 + m2 S:Sigma0 + eps log int exp((C + lambda tau.xi - S:(xi - mu0)^2) / eps) dQ0`.
pub fn moment_dual_value(
    oracle: &dyn CostOracle,
    design: &[f64],
    pt: &AugmentedPoint,
    cfg: &MomentConfig,
    samples: &WeightedPoints,
) -> Result<f64> {
    MomentTerms::from_oracle(oracle, design, samples)?.value(pt, cfg)
}

/// `(d/dlambda, d/dtau, d/dS, tilted weights)` of the moment dual.
pub type MomentAuxGradient = (f64, Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

pub fn moment_dual_grad(
    oracle: &dyn CostOracle,
    design: &[f64],
    pt: &AugmentedPoint,
    cfg: &MomentConfig,
    samples: &WeightedPoints,
) -> Result<MomentGrad> {
    let prepared = oracle.prepare(design)?;
    let terms = MomentTerms {
        costs: prepared.costs(&samples.points)?,
        samples: samples.clone(),
    };
    let value = terms.value(pt, cfg)?;
    let (lambda, tau, s, weights) = terms.aux_gradient(pt, cfg)?;
    let design_grad = prepared.weighted_sensitivity(&samples.points, &weights)?;
    Ok(MomentGrad {
        value,
        design: design_grad,
        lambda,
        tau,
        s,
        weights,
    })
}

/// CVaR and VaR of a weighted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarResult {
    pub cvar: f64,
    /// Minimizing anchor, the beta-quantile.
    pub var: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

/// `alpha + (1 / (1 - beta)) sum_j w_j [c_j - alpha]_+`.
pub fn cvar_value_weighted(costs: &[f64], weights: &[f64], beta: f64, alpha: f64) -> Result<f64> {
    check_beta(beta)?;
    check_len("weights", costs.len(), weights.len())?;
    if costs.is_empty() {
        return Err(Error::Empty("CVaR of an empty sample"));
    }
    let excess: f64 = costs.iter().zip(weights).map(|(c, w)| w * (c - alpha).max(0.0)).sum();
    Ok(alpha + excess / (1.0 - beta))
}

/// Equal-weight version of [`cvar_value_weighted`].
pub fn cvar_value(costs: &[f64], beta: f64, alpha: f64) -> Result<f64> {
    let w = vec![1.0 / costs.len().max(1) as f64; costs.len()];
    cvar_value_weighted(costs, &w, beta, alpha)
}

/// Minimizes the representation formula over the anchor. The objective is
/// convex and piecewise linear with its minimum at the beta-quantile.
pub fn cvar_minimize_weighted(costs: &[f64], weights: &[f64], beta: f64) -> Result<CvarResult> {
    check_beta(beta)?;
    check_len("weights", costs.len(), weights.len())?;
    if costs.is_empty() {
        return Err(Error::Empty("CVaR of an empty sample"));
    }
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&i, &j| costs[i].total_cmp(&costs[j]));
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    let mut var = costs[order[order.len() - 1]];
    for &i in &order {
        cum += weights[i] / total;
        if cum >= beta - 1e-12 {
            var = costs[i];
            break;
        }
    }
    let normalized: Vec<f64> = weights.iter().map(|w| w / total).collect();
    Ok(CvarResult {
        cvar: cvar_value_weighted(costs, &normalized, beta, var)?,
        var,
    })
}

pub fn cvar_minimize(costs: &[f64], beta: f64) -> Result<CvarResult> {
    let w = vec![1.0 / costs.len().max(1) as f64; costs.len()];
    cvar_minimize_weighted(costs, &w, beta)
}

/// Value and gradient blocks of a smoothed CVaR.
#[derive(Debug, Clone, PartialEq)]
pub struct CvarGrad {
    pub value: f64,
    pub design: Vec<f64>,
    pub lambda: f64,
    pub alpha: f64,
}

/// `alpha + (1 / (1 - beta)) sum_j w_j softplus(C(h, xi_j) - alpha)` under a known law.
pub fn smoothed_cvar_grad(
    oracle: &dyn CostOracle,
    design: &[f64],
    alpha: f64,
    cfg: &CvarConfig,
    samples: &WeightedPoints,
) -> Result<CvarGrad> {
    if samples.is_empty() {
        return Err(Error::Empty("CVaR of an empty sample"));
    }
    let prepared = oracle.prepare(design)?;
    let costs = prepared.costs(&samples.points)?;
    let scale = 1.0 / (1.0 - cfg.beta);
    let mut value = alpha;
    let mut d_alpha = 1.0;
    let mut sens_w = Vec::with_capacity(costs.len());
    for (c, w) in costs.iter().zip(&samples.weights) {
        value += scale * w * softplus(c - alpha, cfg.gamma);
        let d = scale * w * softplus_derivative(c - alpha, cfg.gamma);
        d_alpha -= d;
        sens_w.push(d);
    }
    Ok(CvarGrad {
        value,
        design: prepared.weighted_sensitivity(&samples.points, &sens_w)?,
        lambda: 0.0,
        alpha: d_alpha,
    })
}

/// Smoothed-hinge terms of the CVaR dual over a frozen batch.
#[derive(Debug, Clone)]
pub struct CvarDroTerms {
    pub base: WassersteinTerms,
}

impl CvarDroTerms {
    fn hinge(&self, alpha: f64, gamma: f64) -> Vec<Vec<f64>> {
        self.base
            .costs
            .iter()
            .map(|row| row.iter().map(|c| softplus(c - alpha, gamma)).collect())
            .collect()
    }

    fn shifted(&self, alpha: f64, gamma: f64) -> WassersteinTerms {
        WassersteinTerms {
            costs: self.hinge(alpha, gamma),
            ..self.base.clone()
        }
    }

    /// `alpha + lambda m / (1 - beta) + (lambda eps / (1 - beta)) sum_i p_i log int exp((sp(C - alpha) - lambda c) / (lambda eps)) d nu_i`.
    pub fn value(&self, lambda: f64, alpha: f64, cfg: &CvarConfig) -> Result<f64> {
        let w = self.shifted(alpha, cfg.gamma).value(lambda, &cfg.wasserstein)?;
        Ok(alpha + w / (1.0 - cfg.beta))
    }
}

pub fn cvar_dro_constraint_value(
    oracle: &dyn CostOracle,
    design: &[f64],
    lambda: f64,
    alpha: f64,
    cfg: &CvarConfig,
    batch: &[AtomSamples],
) -> Result<f64> {
    let base = WassersteinTerms::from_oracle(oracle, design, batch)?;
    CvarDroTerms { base }.value(lambda, alpha, cfg)
}

pub fn cvar_dro_constraint_grad(
    oracle: &dyn CostOracle,
    design: &[f64],
    lambda: f64,
    alpha: f64,
    cfg: &CvarConfig,
    batch: &[AtomSamples],
) -> Result<CvarGrad> {
    let prepared = oracle.prepare(design)?;
    let base = WassersteinTerms::new(atom_costs(prepared.as_ref(), batch)?, batch)?;
    let terms = CvarDroTerms { base };
    let shifted = terms.shifted(alpha, cfg.gamma);
    let w = &cfg.wasserstein;
    let scale = 1.0 / (1.0 - cfg.beta);
    let value = alpha + scale * shifted.value(lambda, w)?;
    let d_lambda = scale * shifted.d_lambda(lambda, w)?;
    let s = shifted.softmax(lambda, w.eps);
    let mut d_alpha = 1.0;
    let mut sens_w = Vec::with_capacity(s.len());
    for (i, row) in s.iter().enumerate() {
        let p = terms.base.atom_weights[i];
        let r: Vec<f64> = row
            .iter()
            .zip(&terms.base.costs[i])
            .map(|(sij, c)| scale * p * sij * softplus_derivative(c - alpha, cfg.gamma))
            .collect();
        d_alpha -= r.iter().sum::<f64>();
        sens_w.push(r);
    }
    Ok(CvarGrad {
        value,
        design: weighted_design_gradient(prepared.as_ref(), batch, &sens_w)?,
        lambda: d_lambda,
        alpha: d_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::AnalyticCost;
    use crate::uncertainty::{draw_coupling_samples, NominalLaw, ParameterSpace};

    fn one_atom_batch(points: Vec<Vec<f64>>) -> Vec<AtomSamples> {
        vec![AtomSamples {
            atom: vec![0.0],
            atom_weight: 1.0,
            inner: WeightedPoints::uniform(points),
        }]
    }

    #[test]
    fn softplus_values() {
        assert_eq!(softplus(0.0, 20.0), 0.0);
        assert!((softplus(100.0, 20.0) - 100.0).abs() < 1e-12);
        assert!(softplus(-1e6, 20.0).abs() < 1e-300);
        assert!(softplus(1e6, 20.0).is_finite());
        let worst = (0..200_001)
            .map(|i| -5.0 + 1e-4 * i as f64)
            .map(|t| (softplus(t, 20.0) - t.max(0.0)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.02, "max deviation {worst}");
    }

    #[test]
    fn softplus_derivative_matches_difference() {
        for t in [-0.7, -0.05, 0.0, 0.03, 0.4, 2.0] {
            let fd = (softplus(t + 1e-6, 20.0) - softplus(t - 1e-6, 20.0)) / 2e-6;
            assert!((fd - softplus_derivative(t, 20.0)).abs() < 1e-7);
        }
    }

    #[test]
    fn cvar_small_examples() {
        let c = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(cvar_value(&c, 0.5, 2.0).unwrap(), 3.5);
        let r = cvar_minimize(&c, 0.5).unwrap();
        assert_eq!(r.cvar, 3.5);
        assert!(r.var <= r.cvar);
        let r = cvar_minimize(&[7.0; 5], 0.9).unwrap();
        assert_eq!(r.cvar, 7.0);
        let mean = 2.5;
        assert!((cvar_minimize(&c, 1e-9).unwrap().cvar - mean).abs() < 1e-8);
        assert!(cvar_minimize(&[], 0.5).is_err());
        assert!(cvar_value(&c, 1.0, 0.0).is_err());
    }

    #[test]
    fn cvar_minimum_beats_grid() {
        let c: Vec<f64> = (0..37).map(|i| ((i * 17) % 11) as f64 * 0.3 - 1.0).collect();
        for beta in [0.1, 0.35, 0.5, 0.77, 0.95] {
            let r = cvar_minimize(&c, beta).unwrap();
            let grid_min = (0..4001)
                .map(|i| -2.0 + 0.001 * i as f64)
                .map(|a| cvar_value(&c, beta, a).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(r.cvar <= grid_min + 1e-12);
            assert!(r.cvar >= grid_min - 1e-3);
        }
    }

    #[test]
    fn wasserstein_value_is_affine_in_radius() {
        let f = AnalyticCost::fixed(1, |x| x[0] * x[0]);
        let batch = one_atom_batch(vec![vec![0.1], vec![-0.3], vec![0.7]]);
        let a = WassersteinConfig::new(0.5, 0.1).unwrap();
        let b = WassersteinConfig::new(0.75, 0.1).unwrap();
        let va = wasserstein_dual_value(&f, &[], 2.0, &a, &batch).unwrap();
        let vb = wasserstein_dual_value(&f, &[], 2.0, &b, &batch).unwrap();
        assert!((vb - va - 2.0 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_cost_infimum_is_the_constant() {
        let f = AnalyticCost::fixed(1, |_| 3.0);
        let batch = one_atom_batch(vec![vec![0.1], vec![-0.3], vec![0.7]]);
        let mean_ground = (0.01 + 0.09 + 0.49) / 3.0;
        let cfg = WassersteinConfig::new(mean_ground + 0.1, 0.1).unwrap();
        let (lam, v) = LambdaSearch {
            lower: LAMBDA_MIN,
            upper: 1e3,
            points: 64,
            refine: false,
        }
        .minimize(|l| wasserstein_dual_value(&f, &[], l, &cfg, &batch))
        .unwrap();
        assert!((v - 3.0).abs() < 1e-5);
        assert_eq!(lam, LAMBDA_MIN);
    }

    #[test]
    fn singleton_weights_and_flat_limit() {
        let f = AnalyticCost::new(1, 1, |h, x| h[0] * x[0] * x[0], |_, x| vec![x[0] * x[0]]);
        let single = one_atom_batch(vec![vec![0.5]]);
        let cfg = WassersteinConfig::new(0.2, 0.1).unwrap();
        let g = wasserstein_dual_grad(&f, &[2.0], 1.0, &cfg, &single).unwrap();
        assert_eq!(g.weights, vec![vec![1.0]]);
        assert!((g.design[0] - 0.25).abs() < 1e-15);

        let batch = one_atom_batch(vec![vec![0.1], vec![0.5], vec![-0.9]]);
        let flat = WassersteinConfig::new(0.2, 1e6).unwrap();
        let g = wasserstein_dual_grad(&f, &[2.0], 1.0, &flat, &batch).unwrap();
        let mean = (0.01 + 0.25 + 0.81) / 3.0;
        assert!((g.design[0] - mean).abs() < 1e-5);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let law = NominalLaw::empirical(vec![vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let k = ReferenceKernel::new(0.2, ParameterSpace::ball(vec![0.0, 0.0], 20.0).unwrap()).unwrap();
        let batch = draw_coupling_samples(&law, &k, 12, 5, 0).unwrap();
        let f = AnalyticCost::fixed(2, |x| x[0].sin() + x[1] * x[1]);
        let cfg = WassersteinConfig::new(0.3, 0.05).unwrap();
        let g = wasserstein_dual_grad(&f, &[], 0.7, &cfg, &batch).unwrap();
        for row in g.weights {
            assert!(row.iter().all(|w| *w >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_constant_cost_at_origin() {
        let f = AnalyticCost::fixed(1, |_| 4.0);
        let cfg = MomentConfig::new(vec![0.0], vec![vec![1.0]], 0.5, 2.0, 0.1).unwrap();
        let samples = WeightedPoints::uniform(vec![vec![0.3], vec![-1.2]]);
        let v = moment_dual_value(&f, &[], &AugmentedPoint::initial(1).with_lambda(0.0), &cfg, &samples).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
        let g = moment_dual_grad(&f, &[], &AugmentedPoint::initial(1).with_lambda(0.0), &cfg, &samples).unwrap();
        assert_eq!(g.tau, vec![0.0]);
    }

    #[test]
    fn moment_value_affine_in_m2() {
        let f = AnalyticCost::fixed(1, |x| x[0]);
        let mut pt = AugmentedPoint::initial(1);
        pt.s = vec![vec![0.4]];
        let samples = WeightedPoints::uniform(vec![vec![0.3], vec![-1.2], vec![0.8]]);
        let a = MomentConfig::new(vec![0.0], vec![vec![2.0]], 0.5, 1.0, 0.1).unwrap();
        let b = MomentConfig { m2: 2.0, ..a.clone() };
        let va = moment_dual_value(&f, &[], &pt, &a, &samples).unwrap();
        let vb = moment_dual_value(&f, &[], &pt, &b, &samples).unwrap();
        assert!((vb - va - 0.8).abs() < 1e-12);
    }

    #[test]
    fn cvar_dro_constant_cost() {
        let f = AnalyticCost::fixed(1, |_| 2.0);
        let batch = one_atom_batch(vec![vec![0.1], vec![-0.2]]);
        let cfg = CvarConfig::new(0.6, 40.0, 20.0, WassersteinConfig::new(10.0, 0.1).unwrap()).unwrap();
        let v = cvar_dro_constraint_value(&f, &[], LAMBDA_MIN, 2.0, &cfg, &batch).unwrap();
        // hinge of zero plus lambda terms that vanish with the floor
        assert!((v - 2.0).abs() < 1e-3);
    }
}
