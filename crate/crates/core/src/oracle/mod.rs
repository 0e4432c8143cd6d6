//! Brute-force reference computations.
//!
//! Everything here is deliberately independent of the production paths it
//! checks: primal reconstructions by quadrature instead of dual formulas,
//! tail averages instead of the CVaR minimization, Gaussian elimination
//! instead of conjugate gradients, Jacobi rotations instead of the library
//! eigensolver.

use crate::error::{check_len, Error, Result};

/// Result of the Wasserstein primal reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct WassersteinPrimal {
    /// `int f dQ*`.
    pub value: f64,
    /// Multiplier whose tilted coupling attains the value.
    pub lambda: f64,
    /// `W_eps(P, Q*)` by quadrature.
    pub distance: f64,
    pub nodes: Vec<f64>,
    /// Probability weights of `Q*` on the nodes.
    pub law: Vec<f64>,
}

/// One-dimensional Wasserstein instance on a trapezoid grid over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WassersteinInstance1d {
    pub atoms: Vec<f64>,
    pub atom_weights: Vec<f64>,
    pub sigma2: f64,
    pub eps: f64,
    pub radius: f64,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

struct Tilt {
    value: f64,
    distance: f64,
    law: Vec<f64>,
}

impl WassersteinInstance1d {
    pub fn grid(&self) -> (Vec<f64>, Vec<f64>) {
        trapezoid(self.lo, self.hi, self.nodes)
    }

    fn tilt(&self, f: &[f64], nodes: &[f64], quad: &[f64], lambda: f64) -> Tilt {
        let mut value = 0.0;
        let mut distance = 0.0;
        let mut law = vec![0.0; nodes.len()];
        for (xi, p) in self.atoms.iter().zip(&self.atom_weights) {
            let nu: Vec<f64> = nodes
                .iter()
                .zip(quad)
                .map(|(z, w)| w * (-(xi - z) * (xi - z) / (2.0 * self.sigma2)).exp())
                .collect();
            let nu_total: f64 = nu.iter().sum();
            let expo: Vec<f64> = nodes
                .iter()
                .zip(f)
                .map(|(z, fz)| (fz - lambda * (xi - z) * (xi - z)) / (lambda * self.eps))
                .collect();
            let top = expo
                .iter()
                .zip(&nu)
                .filter(|(_, w)| **w > 0.0)
                .map(|(e, _)| *e)
                .fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = expo
                .iter()
                .zip(&nu)
                .map(|(e, w)| if *w > 0.0 { w * (e - top).exp() } else { 0.0 })
                .collect();
            let total: f64 = raw.iter().sum();
            for j in 0..nodes.len() {
                let a = raw[j] / total;
                if a <= 0.0 {
                    continue;
                }
                let c = (xi - nodes[j]) * (xi - nodes[j]);
                // coupling entropy relative to P (x) nu: a * log(a / nu_normalized)
                let log_ratio = (a / (nu[j] / nu_total)).ln();
                distance += p * a * (c + self.eps * log_ratio);
                value += p * a * f[j];
                law[j] += p * a;
            }
        }
        Tilt { value, distance, law }
    }
}

fn trapezoid(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / (n - 1) as f64;
    let nodes = (0..n).map(|i| lo + h * i as f64).collect();
    let w = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
    (nodes, w)
}

/// Worst-case expectation of `f` over the entropic Wasserstein ball, computed on the primal side.
///
/// Sweeps the multiplier over a log grid, reconstructs the tilted coupling for
/// each value and measures its transport cost plus entropy by quadrature. The
/// best constraint-feasible expectation is refined by bisection on the
/// constraint boundary.
pub fn primal_sup_wasserstein_1d(f: &dyn Fn(f64) -> f64, inst: &WassersteinInstance1d) -> Result<WassersteinPrimal> {
    check_len("atom weights", inst.atoms.len(), inst.atom_weights.len())?;
    if inst.nodes < 1000 {
        return Err(Error::GridTooCoarse(format!("need at least 1000 nodes, got {}", inst.nodes)));
    }
    let (nodes, quad) = inst.grid();
    let fv: Vec<f64> = nodes.iter().map(|z| f(*z)).collect();
    let lambda_min = 1e-6;
    let done = |lambda: f64, t: Tilt| WassersteinPrimal {
        value: t.value,
        lambda,
        distance: t.distance,
        nodes: nodes.clone(),
        law: t.law,
    };
    let first = inst.tilt(&fv, &nodes, &quad, lambda_min);
    if first.distance <= inst.radius {
        return Ok(done(lambda_min, first));
    }
    // the distance decreases as the multiplier grows
    let (a, b) = (lambda_min.ln(), 1e8f64.ln());
    let mut lo = a;
    let mut hi = None;
    for i in 1..=400 {
        let x = a + (b - a) * i as f64 / 400.0;
        if inst.tilt(&fv, &nodes, &quad, x.exp()).distance <= inst.radius {
            hi = Some(x);
            break;
        }
        lo = x;
    }
    let Some(mut hi) = hi else {
        return Err(Error::Infeasible(format!(
            "no multiplier up to 1e8 meets the radius {}",
            inst.radius
        )));
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if inst.tilt(&fv, &nodes, &quad, mid.exp()).distance <= inst.radius {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let t = inst.tilt(&fv, &nodes, &quad, hi.exp());
    Ok(done(hi.exp(), t))
}

/// One-dimensional moment instance with a truncated Gaussian reference law.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentInstance1d {
    pub mean: f64,
    pub var: f64,
    pub m1: f64,
    pub m2: f64,
    pub eps: f64,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

/// Result of the moment primal search.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPrimal {
    /// `int f dQ* - eps H(Q*)`.
    pub value: f64,
    /// Linear tilt `lambda tau`.
    pub theta: f64,
    pub s: f64,
    /// `E_Q*[xi] - mu0`.
    pub mean_shift: f64,
    /// `E_Q*[(xi - mu0)^2]`.
    pub second_moment: f64,
    pub nodes: Vec<f64>,
    pub law: Vec<f64>,
}

impl MomentInstance1d {
    pub fn grid(&self) -> (Vec<f64>, Vec<f64>) {
        trapezoid(self.lo, self.hi, self.nodes)
    }

    /// Candidate `Q ~ Q0 exp((f + theta xi - s (xi - mu0)^2) / eps)` and its primal data.
    fn candidate(&self, fv: &[f64], nodes: &[f64], q0: &[f64], theta: f64, s: f64) -> MomentPrimal {
        let expo: Vec<f64> = nodes
            .iter()
            .zip(fv)
            .map(|(x, f)| (f + theta * x - s * (x - self.mean) * (x - self.mean)) / self.eps)
            .collect();
        let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = expo.iter().zip(q0).map(|(e, w)| w * (e - top).exp()).collect();
        let total: f64 = raw.iter().sum();
        let law: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let mut ef = 0.0;
        let mut kl = 0.0;
        let mut m = 0.0;
        let mut v = 0.0;
        for j in 0..nodes.len() {
            if law[j] <= 0.0 {
                continue;
            }
            ef += law[j] * fv[j];
            kl += law[j] * (law[j] / q0[j]).ln();
            let d = nodes[j] - self.mean;
            m += law[j] * d;
            v += law[j] * d * d;
        }
        MomentPrimal {
            value: ef - self.eps * kl,
            theta,
            s,
            mean_shift: m,
            second_moment: v,
            nodes: Vec::new(),
            law,
        }
    }

    fn feasible_within(&self, c: &MomentPrimal, tol: f64) -> bool {
        c.mean_shift.abs() <= self.m1 + tol && c.second_moment <= self.m2 * self.var + tol
    }
}

/// Worst-case entropic expectation over the moment ambiguity set, on the primal side.
///
/// Candidates are exponential tilts of the reference law indexed by a linear
/// coefficient `theta` and a quadratic coefficient `s >= 0`. The optimum is
/// located by solving the optimality conditions directly: for each `s` the
/// mean shift is monotone in `theta`, so `theta` is either zero or bisected to
/// put the shift on the boundary; then `s` is either zero or bisected to put
/// the second moment on its bound. Since the problem is concave these
/// conditions are sufficient, and both inequalities are re-checked on the
/// returned law.
pub fn primal_sup_moment_1d(f: &dyn Fn(f64) -> f64, inst: &MomentInstance1d) -> Result<MomentPrimal> {
    if inst.nodes < 1000 {
        return Err(Error::GridTooCoarse(format!("need at least 1000 nodes, got {}", inst.nodes)));
    }
    let (nodes, quad) = inst.grid();
    let fv: Vec<f64> = nodes.iter().map(|x| f(*x)).collect();
    let q0raw: Vec<f64> = nodes
        .iter()
        .zip(&quad)
        .map(|(x, w)| w * (-(x - inst.mean) * (x - inst.mean) / (2.0 * inst.var)).exp())
        .collect();
    let q0_total: f64 = q0raw.iter().sum();
    let q0: Vec<f64> = q0raw.iter().map(|w| w / q0_total).collect();
    let cand = |theta: f64, s: f64| inst.candidate(&fv, &nodes, &q0, theta, s);

    let with_mean = |s: f64| -> Result<MomentPrimal> {
        let free = cand(0.0, s);
        if free.mean_shift.abs() <= inst.m1 {
            return Ok(free);
        }
        let sign = free.mean_shift.signum();
        let target = sign * inst.m1;
        // shift is increasing in theta; theta points against the excess
        let (mut near, mut far) = (0.0, -sign);
        while (cand(far, s).mean_shift - target) * sign > 0.0 {
            near = far;
            far *= 2.0;
            if far.abs() > 1e12 {
                return Err(Error::Infeasible("mean constraint cannot be met by any tilt".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (near + far);
            if (cand(mid, s).mean_shift - target) * sign > 0.0 {
                near = mid;
            } else {
                far = mid;
            }
        }
        Ok(cand(far, s))
    };

    let bound = inst.m2 * inst.var;
    let mut best = with_mean(0.0)?;
    if best.second_moment > bound {
        let (mut lo, mut hi) = (0.0, 1.0);
        while with_mean(hi)?.second_moment > bound {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Infeasible("second-moment constraint cannot be met by any tilt".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if with_mean(mid)?.second_moment > bound {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = with_mean(hi)?;
    }
    if !inst.feasible_within(&best, 1e-9) {
        return Err(Error::Infeasible(format!(
            "tilt violates the moment bounds: shift {}, second moment {}",
            best.mean_shift, best.second_moment
        )));
    }
    best.nodes = nodes;
    Ok(best)
}

/// Tail average of a weighted sample: the beta-quantile and the mean of the
/// cost beyond it, with the atom at the quantile split as needed.
pub fn cvar_tail_average(costs: &[f64], weights: &[f64], beta: f64) -> Result<f64> {
    check_len("weights", costs.len(), weights.len())?;
    if costs.is_empty() {
        return Err(Error::Empty("tail average of an empty sample"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    let total: f64 = weights.iter().sum();
    let mut pairs: Vec<(f64, f64)> = costs.iter().zip(weights).map(|(c, w)| (*c, w / total)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf = 0.0;
    let mut var = pairs[pairs.len() - 1].0;
    for (c, w) in &pairs {
        cdf += w;
        if cdf >= beta - 1e-12 {
            var = *c;
            break;
        }
    }
    let above: f64 = pairs.iter().filter(|(c, _)| *c > var).map(|(_, w)| w).sum();
    let tail: f64 = pairs.iter().filter(|(c, _)| *c > var).map(|(c, w)| c * w).sum();
    Ok((tail + (1.0 - beta - above) * var) / (1.0 - beta))
}

/// Quadrature weights of a density given at equispaced nodes.
pub fn density_weights(nodes: &[f64], density: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let n = nodes.len();
    let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    nodes
        .iter()
        .enumerate()
        .map(|(i, x)| density(*x) * if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect()
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        g.push((up - down) / (2.0 * step));
    }
    Ok(g)
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    check_len("right-hand side", n, b.len())?;
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(*bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("nonempty range");
        if m[piv][col] == 0.0 {
            return Err(Error::InvalidInput("singular matrix".into()));
        }
        m.swap(col, piv);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            if factor != 0.0 {
                for c in col..=n {
                    m[r][c] -= factor * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    Ok(x)
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Eigenvalues descending,
/// eigenvectors as columns of the returned rows-major matrix's transpose
/// (`vectors[i]` is the eigenvector of `values[i]`).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|r| v[r][i]).collect()).collect();
    (values, vectors)
}

pub mod suites;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_small_system() {
        let a = vec![vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]];
        let x = dense_solve(&a, &[5.0, 3.0, 6.0]).unwrap();
        for (r, b) in a.iter().zip([5.0, 3.0, 6.0]) {
            let v: f64 = r.iter().zip(&x).map(|(p, q)| p * q).sum();
            assert!((v - b).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]];
        let (vals, vecs) = jacobi_eigen(&a);
        for (l, v) in vals.iter().zip(&vecs) {
            for r in 0..3 {
                let av: f64 = (0..3).map(|c| a[r][c] * v[c]).sum();
                assert!((av - l * v[r]).abs() < 1e-13);
            }
        }
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        assert!((vals.iter().sum::<f64>() - 8.0).abs() < 1e-13);
    }

    #[test]
    fn tail_average_closed_forms() {
        assert_eq!(cvar_tail_average(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 0.5).unwrap(), 3.5);
        let (nodes, _) = trapezoid(0.0, 1.0, 10_001);
        let w = density_weights(&nodes, &|_| 1.0);
        assert!((cvar_tail_average(&nodes, &w, 0.9).unwrap() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_of_a_quadratic() {
        let g = finite_difference_gradient(|x| Ok(x[0] * x[0] + 3.0 * x[1]), &[2.0, -1.0], 1e-4).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-9 && (g[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn constant_cost_primal_is_the_constant() {
        let inst = WassersteinInstance1d {
            atoms: vec![0.0],
            atom_weights: vec![1.0],
            sigma2: 0.1,
            eps: 0.1,
            radius: 5.0,
            lo: -4.0,
            hi: 4.0,
            nodes: 2001,
        };
        let p = primal_sup_wasserstein_1d(&|_| 2.5, &inst).unwrap();
        assert!((p.value - 2.5).abs() < 1e-12);
        let mp = primal_sup_moment_1d(
            &|_| 2.5,
            &MomentInstance1d {
                mean: 0.0,
                var: 1.0,
                m1: 0.5,
                m2: 2.0,
                eps: 0.1,
                lo: -10.0,
                hi: 10.0,
                nodes: 2001,
            },
        )
        .unwrap();
        assert!((mp.value - 2.5).abs() < 1e-9);
    }

    #[test]
    fn zero_radius_is_infeasible() {
        let inst = WassersteinInstance1d {
            atoms: vec![0.0],
            atom_weights: vec![1.0],
            sigma2: 0.1,
            eps: 0.01,
            radius: 0.0,
            lo: -4.0,
            hi: 4.0,
            nodes: 4001,
        };
        assert!(matches!(
            primal_sup_wasserstein_1d(&|z| z * z, &inst),
            Err(Error::Infeasible(_))
        ));
    }
}
