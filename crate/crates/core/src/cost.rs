//! Cost functions `C(h, xi)` seen by the robust functionals.
//!
//! A [`CostOracle`] is prepared once per design, which lets expensive
//! design-dependent work (assembly, basis solves) be shared by every
//! parameter point of a batch.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::error::{check_len, Result};
use crate::grid_fem::{DensityField, DensityFilter, ElasticState, FemModel};
use crate::kl_field::{realize_modulus, KLBasis, ModulusTransform};

/// Black-box cost with design sensitivities.
pub trait CostOracle: Sync {
    /// Dimension `k` of the uncertain parameter.
    fn param_dim(&self) -> usize;
    /// Number of design variables.
    fn design_len(&self) -> usize;
    fn prepare<'a>(&'a self, design: &[f64]) -> Result<Box<dyn PreparedCost + 'a>>;

    fn evaluate(&self, design: &[f64], xi: &[f64]) -> Result<f64> {
        Ok(self.prepare(design)?.costs(&[xi.to_vec()])?[0])
    }

    fn sensitivity(&self, design: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.prepare(design)?.weighted_sensitivity(&[xi.to_vec()], &[1.0])
    }
}

/// Cost bound to one design.
pub trait PreparedCost: Sync {
    fn costs(&self, points: &[Vec<f64>]) -> Result<Vec<f64>>;
    /// `sum_j w_j dC(h, xi_j)/dh`.
    fn weighted_sensitivity(&self, points: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>>;
}

type CostFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// Cost given by closures, for analytic test problems.
pub struct AnalyticCost {
    param_dim: usize,
    design_len: usize,
    cost: Box<CostFn>,
    grad: Box<GradFn>,
}

impl AnalyticCost {
    pub fn new(
        param_dim: usize,
        design_len: usize,
        cost: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            param_dim,
            design_len,
            cost: Box::new(cost),
            grad: Box::new(grad),
        }
    }

    /// Design-independent cost `f(xi)`.
    pub fn fixed(param_dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(param_dim, 0, move |_, xi| f(xi), |_, _| Vec::new())
    }
}

struct PreparedAnalytic<'a> {
    oracle: &'a AnalyticCost,
    design: Vec<f64>,
}

impl CostOracle for AnalyticCost {
    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn design_len(&self) -> usize {
        self.design_len
    }

    fn prepare<'a>(&'a self, design: &[f64]) -> Result<Box<dyn PreparedCost + 'a>> {
        check_len("design", self.design_len, design.len())?;
        Ok(Box::new(PreparedAnalytic {
            oracle: self,
            design: design.to_vec(),
        }))
    }
}

impl PreparedCost for PreparedAnalytic<'_> {
    fn costs(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|p| {
                check_len("parameter", self.oracle.param_dim, p.len())?;
                Ok((self.oracle.cost)(&self.design, p))
            })
            .collect()
    }

    fn weighted_sensitivity(&self, points: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
        check_len("weights", points.len(), weights.len())?;
        let mut g = vec![0.0; self.oracle.design_len];
        for (p, w) in points.iter().zip(weights) {
            if *w == 0.0 {
                continue;
            }
            for (gi, d) in g.iter_mut().zip((self.oracle.grad)(&self.design, p)) {
                *gi += w * d;
            }
        }
        Ok(g)
    }
}

/// Filtered densities clipped to `[0, 1]` against rounding.
pub fn physical_densities(filter: &DensityFilter, design: &[f64]) -> Result<DensityField> {
    DensityField::new(filter.apply(design).into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Compliance under uncertain surface loads.
///
/// The displacement is linear in the load parameter, so one solve per load
/// component gives `C(h, xi) = xi^T Q xi` for every `xi`.
#[derive(Debug, Clone)]
pub struct LoadCompliance {
    pub model: FemModel,
    pub filter: DensityFilter,
}

impl LoadCompliance {
    pub fn new(model: FemModel, filter: DensityFilter) -> Self {
        Self { model, filter }
    }

    /// Basis states and the quadratic form `Q` for one design.
    pub fn basis(&self, design: &[f64]) -> Result<ComplianceBasis> {
        check_len("design", self.model.grid.element_count(), design.len())?;
        let phys = physical_densities(&self.filter, design)?;
        let k = self.model.parameter_dim();
        let rhs: Vec<&[f64]> = (0..k).map(|i| self.model.unit_load(i)).collect();
        let states = self.model.solve_many(&phys, None, &rhs)?;
        let mut q = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                q[a * k + b] = dot(self.model.unit_load(a), &states[b].u);
            }
        }
        // symmetric up to solver tolerance; average the two halves
        for a in 0..k {
            for b in 0..a {
                let m = 0.5 * (q[a * k + b] + q[b * k + a]);
                q[a * k + b] = m;
                q[b * k + a] = m;
            }
        }
        Ok(ComplianceBasis {
            k,
            q,
            phys,
            states,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-load responses for one design.
#[derive(Debug, Clone)]
pub struct ComplianceBasis {
    k: usize,
    q: Vec<f64>,
    pub phys: DensityField,
    pub states: Vec<ElasticState>,
}

impl ComplianceBasis {
    pub fn compliance(&self, xi: &[f64]) -> f64 {
        let k = self.k;
        (0..k)
            .map(|a| (0..k).map(|b| xi[a] * self.q[a * k + b] * xi[b]).sum::<f64>())
            .sum()
    }

    /// Displacement for the load `xi`, by superposition.
    pub fn displacement(&self, xi: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.states[0].u.len()];
        for (x, s) in xi.iter().zip(&self.states) {
            for (ui, si) in u.iter_mut().zip(&s.u) {
                *ui += x * si;
            }
        }
        u
    }
}

struct PreparedCompliance<'a> {
    oracle: &'a LoadCompliance,
    basis: ComplianceBasis,
}

impl CostOracle for LoadCompliance {
    fn param_dim(&self) -> usize {
        self.model.parameter_dim()
    }

    fn design_len(&self) -> usize {
        self.model.grid.element_count()
    }

    fn prepare<'a>(&'a self, design: &[f64]) -> Result<Box<dyn PreparedCost + 'a>> {
        Ok(Box::new(PreparedCompliance {
            oracle: self,
            basis: self.basis(design)?,
        }))
    }
}

impl PreparedCost for PreparedCompliance<'_> {
    fn costs(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let k = self.basis.k;
        points
            .iter()
            .map(|p| {
                check_len("load parameter", k, p.len())?;
                Ok(self.basis.compliance(p))
            })
            .collect()
    }

    fn weighted_sensitivity(&self, points: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
        check_len("weights", points.len(), weights.len())?;
        let k = self.basis.k;
        // dC/dh_e = -A'(h_e) xi^T P_e xi, so only sum_j w_j xi_j xi_j^T is needed
        let mut moment = vec![0.0; k * k];
        for (p, w) in points.iter().zip(weights) {
            check_len("load parameter", k, p.len())?;
            for a in 0..k {
                for b in 0..k {
                    moment[a * k + b] += w * p[a] * p[b];
                }
            }
        }
        let model = &self.oracle.model;
        let mat = &model.material;
        let phys = self.basis.phys.as_slice();
        let states = &self.basis.states;
        let grad_phys: Vec<f64> = (0..phys.len())
            .into_par_iter()
            .map(|e| {
                let d = mat.interpolation_derivative(phys[e]);
                if d == 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for a in 0..k {
                    for b in a..k {
                        let m = if a == b {
                            moment[a * k + a]
                        } else {
                            moment[a * k + b] + moment[b * k + a]
                        };
                        if m != 0.0 {
                            acc += m * model.pair_energy(e, &states[a].u, &states[b].u);
                        }
                    }
                }
                -d * mat.youngs * acc
            })
            .collect();
        Ok(self.oracle.filter.backpropagate(&grad_phys))
    }
}

/// Target-displacement misfit under a random Young's modulus field, plus an
/// optional compliance penalty.
#[derive(Debug, Clone)]
pub struct MaterialTarget {
    pub model: FemModel,
    pub filter: DensityFilter,
    pub basis: KLBasis,
    pub transform: ModulusTransform,
    /// Deterministic load parameter.
    pub load: Vec<f64>,
    /// Nodal target displacement.
    pub target: Vec<f64>,
    /// Per-element misfit weight.
    pub chi: Vec<f64>,
    pub compliance_weight: f64,
}

impl MaterialTarget {
    fn solve(&self, phys: &DensityField, xi: &[f64]) -> Result<ElasticState> {
        let moduli = realize_modulus(&self.basis, &self.transform, xi)?;
        self.model.solve_displacement(phys, Some(&moduli), &self.load)
    }

    fn cost_of(&self, state: &ElasticState) -> Result<f64> {
        let misfit = self.model.target_displacement_objective(state, &self.target, &self.chi)?;
        let compliance = if self.compliance_weight != 0.0 {
            self.model.compliance(state, &self.load)?
        } else {
            0.0
        };
        Ok(misfit + self.compliance_weight * compliance)
    }
}

struct PreparedMaterial<'a> {
    oracle: &'a MaterialTarget,
    phys: DensityField,
    cache: Mutex<HashMap<Vec<u64>, Arc<ElasticState>>>,
}

impl PreparedMaterial<'_> {
    fn state(&self, xi: &[f64]) -> Result<Arc<ElasticState>> {
        let key: Vec<u64> = xi.iter().map(|v| v.to_bits()).collect();
        if let Some(s) = self.cache.lock().expect("state cache poisoned").get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(self.oracle.solve(&self.phys, xi)?);
        self.cache
            .lock()
            .expect("state cache poisoned")
            .insert(key, Arc::clone(&s));
        Ok(s)
    }
}

impl CostOracle for MaterialTarget {
    fn param_dim(&self) -> usize {
        self.basis.len()
    }

    fn design_len(&self) -> usize {
        self.model.grid.element_count()
    }

    fn prepare<'a>(&'a self, design: &[f64]) -> Result<Box<dyn PreparedCost + 'a>> {
        check_len("design", self.design_len(), design.len())?;
        Ok(Box::new(PreparedMaterial {
            oracle: self,
            phys: physical_densities(&self.filter, design)?,
            cache: Mutex::new(HashMap::new()),
        }))
    }
}

impl PreparedCost for PreparedMaterial<'_> {
    fn costs(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points
            .par_iter()
            .map(|p| {
                check_len("KL coefficients", self.oracle.param_dim(), p.len())?;
                let state = self.state(p)?;
                self.oracle.cost_of(&state)
            })
            .collect()
    }

    fn weighted_sensitivity(&self, points: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
        check_len("weights", points.len(), weights.len())?;
        let o = self.oracle;
        let parts: Vec<Vec<f64>> = points
            .par_iter()
            .zip(weights.par_iter())
            .filter(|(_, w)| **w != 0.0)
            .map(|(p, w)| {
                let state = self.state(p)?;
                // adjoint of misfit + weight * compliance: K p = -2 M (u - u_T) - weight * f
                let mut rhs = o.model.target_adjoint_rhs(&state, &o.target, &o.chi)?;
                if o.compliance_weight != 0.0 {
                    let f = o.model.load_vector(&o.load)?;
                    for (r, fi) in rhs.iter_mut().zip(f) {
                        *r -= o.compliance_weight * fi;
                    }
                }
                let adj = o.model.solve_rhs(&self.phys, Some(&state.moduli), &rhs)?;
                Ok(o.model.adjoint_sensitivity(&state, &adj.u).into_iter().map(|g| w * g).collect())
            })
            .collect::<Result<_>>()?;
        let mut grad_phys = vec![0.0; self.phys.len()];
        for part in parts {
            for (g, v) in grad_phys.iter_mut().zip(part) {
                *g += v;
            }
        }
        Ok(o.filter.backpropagate(&grad_phys))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_fem::{BoundaryConditions, LoadPatch, MaterialModel, SolverOptions, StructuredGrid};

    fn cantilever(nx: usize, ny: usize) -> LoadCompliance {
        let grid = StructuredGrid::new(nx, ny, 2.0, 1.0).unwrap();
        let left = grid.nodes_on_vertical(0.0, 0.0, 1.0);
        let patch = LoadPatch::new("tip", grid.vertical_boundary_edges(2.0, 0.4, 0.6));
        let bc = BoundaryConditions::new().clamp_nodes(&left).with_patch(patch);
        let model = FemModel::new(grid.clone(), MaterialModel::default(), bc)
            .unwrap()
            .with_solver(SolverOptions {
                rel_tol: 1e-13,
                max_iter_factor: 50,
            });
        LoadCompliance::new(model, DensityFilter::new(&grid, 1.5))
    }

    #[test]
    fn basis_compliance_matches_direct_solve() {
        let lc = cantilever(6, 3);
        let design: Vec<f64> = (0..18).map(|i| 0.3 + 0.04 * i as f64).collect();
        let xi = [0.7, -1.3];
        let via_basis = lc.evaluate(&design, &xi).unwrap();
        let phys = physical_densities(&lc.filter, &design).unwrap();
        let state = lc.model.solve_displacement(&phys, None, &xi).unwrap();
        let direct = lc.model.compliance(&state, &xi).unwrap();
        assert!((via_basis - direct).abs() <= 1e-10 * direct);
    }

    #[test]
    fn basis_sensitivity_matches_direct_state() {
        let lc = cantilever(5, 3);
        let design: Vec<f64> = (0..15).map(|i| 0.9 - 0.03 * i as f64).collect();
        let xi = [0.2, -1.0];
        let g = lc.sensitivity(&design, &xi).unwrap();
        let phys = physical_densities(&lc.filter, &design).unwrap();
        let state = lc.model.solve_displacement(&phys, None, &xi).unwrap();
        let want = lc.filter.backpropagate(&lc.model.compliance_sensitivity(&state));
        for (a, b) in g.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn analytic_weighted_sensitivity_sums() {
        let c = AnalyticCost::new(1, 2, |h, x| h[0] * x[0] + h[1], |_, x| vec![x[0], 1.0]);
        let p = c.prepare(&[1.0, 2.0]).unwrap();
        let g = p.weighted_sensitivity(&[vec![1.0], vec![3.0]], &[0.25, 0.75]).unwrap();
        assert_eq!(g, vec![2.5, 1.0]);
        assert_eq!(p.costs(&[vec![2.0]]).unwrap(), vec![4.0]);
    }
}
