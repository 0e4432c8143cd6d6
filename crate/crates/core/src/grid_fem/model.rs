use super::element::{element_energy, element_mass, element_stiffness, MaterialModel};
use super::grid::{Edge, StructuredGrid};
use super::sparse::{pcg, CsrMatrix, SolverOptions};
use crate::error::{check_len, Error, Result};

/// Per-element design density, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((e, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && **v <= 1.0))
        {
            return Err(Error::InvalidInput(format!("density {v} of element {e} outside [0, 1]")));
        }
        Ok(Self { values })
    }

    pub fn uniform(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

/// A named group of boundary edges sharing one constant traction vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPatch {
    pub name: String,
    pub edges: Vec<Edge>,
}

impl LoadPatch {
    pub fn new(name: impl Into<String>, edges: Vec<Edge>) -> Self {
        Self {
            name: name.into(),
            edges,
        }
    }

    pub fn length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().flat_map(|e| [e.a, e.b])
    }
}

/// Dirichlet dofs and Neumann load patches.
///
/// Patch `i` receives the traction `(xi[2 i], xi[2 i + 1])`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryConditions {
    fixed_dofs: Vec<usize>,
    pub patches: Vec<LoadPatch>,
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fixes both displacement components of every node in `nodes`.
    pub fn clamp_nodes(mut self, nodes: &[usize]) -> Self {
        for &n in nodes {
            self.fixed_dofs.push(2 * n);
            self.fixed_dofs.push(2 * n + 1);
        }
        self.fixed_dofs.sort_unstable();
        self.fixed_dofs.dedup();
        self
    }

    /// Fixes one displacement component (`0` = x, `1` = y) of every node in `nodes`.
    pub fn fix_component(mut self, nodes: &[usize], component: usize) -> Self {
        assert!(component < 2);
        for &n in nodes {
            self.fixed_dofs.push(2 * n + component);
        }
        self.fixed_dofs.sort_unstable();
        self.fixed_dofs.dedup();
        self
    }

    pub fn with_patch(mut self, patch: LoadPatch) -> Self {
        self.patches.push(patch);
        self
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed_dofs
    }

    /// Length of the load-parameter vector.
    pub fn parameter_dim(&self) -> usize {
        2 * self.patches.len()
    }

    pub fn validate(&self, grid: &StructuredGrid) -> Result<()> {
        if self.fixed_dofs.len() < 3 {
            return Err(Error::MissingDirichlet {
                constrained: self.fixed_dofs.len(),
            });
        }
        if let Some(d) = self.fixed_dofs.iter().find(|d| **d >= grid.dof_count()) {
            return Err(Error::InvalidInput(format!("fixed dof {d} outside the grid")));
        }
        for p in &self.patches {
            if p.edges.is_empty() {
                return Err(Error::InvalidInput(format!("load patch '{}' has no edges", p.name)));
            }
            for n in p.nodes() {
                if self.fixed_dofs.binary_search(&(2 * n)).is_ok()
                    || self.fixed_dofs.binary_search(&(2 * n + 1)).is_ok()
                {
                    return Err(Error::InvalidInput(format!(
                        "node {n} of load patch '{}' is also a Dirichlet node",
                        p.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Displacement field and per-element energies for one design and one load.
#[derive(Debug, Clone)]
pub struct ElasticState {
    /// Nodal displacements, two dofs per node.
    pub u: Vec<f64>,
    /// `E_e u_e^T K0 u_e` per element, without the SIMP factor.
    pub energy: Vec<f64>,
    /// Physical densities the state was solved for.
    pub densities: Vec<f64>,
    /// Per-element Young's moduli used in the solve.
    pub moduli: Vec<f64>,
    pub iterations: usize,
}

/// Assembled elasticity problem on a structured grid.
///
/// Holds the sparsity pattern and the unit-modulus element matrix so repeated
/// solves only refill values.
#[derive(Debug, Clone)]
pub struct FemModel {
    pub grid: StructuredGrid,
    pub material: MaterialModel,
    pub bc: BoundaryConditions,
    pub solver: SolverOptions,
    unit_stiffness: [[f64; 8]; 8],
    mass: [[f64; 4]; 4],
    pattern: CsrMatrix,
    scatter: Vec<[usize; 64]>,
    fixed: Vec<bool>,
    unit_loads: Vec<Vec<f64>>,
}

impl FemModel {
    pub fn new(grid: StructuredGrid, material: MaterialModel, bc: BoundaryConditions) -> Result<Self> {
        material.validate()?;
        bc.validate(&grid)?;
        let unit = MaterialModel {
            youngs: 1.0,
            ..material
        };
        let unit_stiffness = element_stiffness(&unit, grid.hx(), grid.hy());
        let mass = element_mass(grid.hx(), grid.hy());

        let ndof = grid.dof_count();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); ndof];
        for e in 0..grid.element_count() {
            let dofs = grid.element_dofs(e);
            for &r in &dofs {
                rows[r].extend_from_slice(&dofs);
            }
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
        }
        let pattern = CsrMatrix::from_pattern(&rows);
        let scatter = (0..grid.element_count())
            .map(|e| {
                let dofs = grid.element_dofs(e);
                let mut pos = [0usize; 64];
                for a in 0..8 {
                    for b in 0..8 {
                        pos[8 * a + b] = pattern.position(dofs[a], dofs[b]).expect("pattern covers element");
                    }
                }
                pos
            })
            .collect();

        let mut fixed = vec![false; ndof];
        for &d in bc.fixed_dofs() {
            fixed[d] = true;
        }

        let unit_loads = (0..bc.parameter_dim())
            .map(|k| {
                let mut f = vec![0.0; ndof];
                let patch = &bc.patches[k / 2];
                let comp = k % 2;
                for edge in &patch.edges {
                    // constant traction on a linear edge: half the resultant per end node
                    f[2 * edge.a + comp] += 0.5 * edge.length;
                    f[2 * edge.b + comp] += 0.5 * edge.length;
                }
                f
            })
            .collect();

        Ok(Self {
            grid,
            material,
            bc,
            solver: SolverOptions::default(),
            unit_stiffness,
            mass,
            pattern,
            scatter,
            fixed,
            unit_loads,
        })
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn parameter_dim(&self) -> usize {
        self.bc.parameter_dim()
    }

    pub fn unit_stiffness(&self) -> &[[f64; 8]; 8] {
        &self.unit_stiffness
    }

    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed
    }

    fn moduli(&self, moduli: Option<&[f64]>) -> Result<Vec<f64>> {
        match moduli {
            Some(m) => {
                check_len("element moduli", self.grid.element_count(), m.len())?;
                Ok(m.to_vec())
            }
            None => Ok(vec![self.material.youngs; self.grid.element_count()]),
        }
    }

    /// Global stiffness with element matrices scaled by `E_e (eta + (1 - eta) h_e^p)`,
    /// before Dirichlet elimination.
    pub fn assemble_stiffness(&self, h: &DensityField, moduli: Option<&[f64]>) -> Result<CsrMatrix> {
        check_len("density field", self.grid.element_count(), h.len())?;
        let moduli = self.moduli(moduli)?;
        let mut k = self.pattern.clone();
        for (e, pos) in self.scatter.iter().enumerate() {
            let scale = moduli[e] * self.material.interpolation(h.as_slice()[e]);
            for a in 0..8 {
                for b in 0..8 {
                    k.values[pos[8 * a + b]] += scale * self.unit_stiffness[a][b];
                }
            }
        }
        Ok(k)
    }

    /// Stiffness with Dirichlet rows and columns replaced by identity.
    pub fn reduced_stiffness(&self, h: &DensityField, moduli: Option<&[f64]>) -> Result<CsrMatrix> {
        let mut k = self.assemble_stiffness(h, moduli)?;
        k.eliminate(&self.fixed);
        Ok(k)
    }

    /// Nodal load vector for the load parameters `xi`.
    pub fn load_vector(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len("load parameter", self.parameter_dim(), xi.len())?;
        let mut f = vec![0.0; self.grid.dof_count()];
        for (k, load) in self.unit_loads.iter().enumerate() {
            if xi[k] != 0.0 {
                for (fi, li) in f.iter_mut().zip(load) {
                    *fi += xi[k] * li;
                }
            }
        }
        Ok(f)
    }

    /// Load vector of a unit traction on one component of one patch.
    pub fn unit_load(&self, k: usize) -> &[f64] {
        &self.unit_loads[k]
    }

    /// Solves `K u = rhs` with the reduced matrix; Dirichlet entries of the
    /// result are exactly zero.
    pub fn solve_system(&self, k_reduced: &CsrMatrix, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        let mut b = rhs.to_vec();
        for (bi, fixed) in b.iter_mut().zip(&self.fixed) {
            if *fixed {
                *bi = 0.0;
            }
        }
        let (mut u, report) = pcg(k_reduced, &b, &self.solver)?;
        for (ui, fixed) in u.iter_mut().zip(&self.fixed) {
            if *fixed {
                *ui = 0.0;
            }
        }
        Ok((u, report.iterations))
    }

    fn state_from(&self, h: &DensityField, moduli: Vec<f64>, u: Vec<f64>, iterations: usize) -> ElasticState {
        let energy = (0..self.grid.element_count())
            .map(|e| moduli[e] * self.pair_energy(e, &u, &u))
            .collect();
        ElasticState {
            u,
            energy,
            densities: h.as_slice().to_vec(),
            moduli,
            iterations,
        }
    }

    /// `u_e^T K0 v_e` with the unit-modulus element matrix.
    pub fn pair_energy(&self, e: usize, u: &[f64], v: &[f64]) -> f64 {
        let dofs = self.grid.element_dofs(e);
        let ue: [f64; 8] = std::array::from_fn(|a| u[dofs[a]]);
        let ve: [f64; 8] = std::array::from_fn(|a| v[dofs[a]]);
        element_energy(&self.unit_stiffness, &ue, &ve)
    }

    pub fn solve_displacement(&self, h: &DensityField, moduli: Option<&[f64]>, xi: &[f64]) -> Result<ElasticState> {
        let f = self.load_vector(xi)?;
        self.solve_rhs(h, moduli, &f)
    }

    /// Solves for an arbitrary right-hand side.
    pub fn solve_rhs(&self, h: &DensityField, moduli: Option<&[f64]>, rhs: &[f64]) -> Result<ElasticState> {
        check_len("right-hand side", self.grid.dof_count(), rhs.len())?;
        let k = self.reduced_stiffness(h, moduli)?;
        let (u, it) = self.solve_system(&k, rhs)?;
        Ok(self.state_from(h, self.moduli(moduli)?, u, it))
    }

    /// Solves one system per right-hand side, reusing the assembled matrix.
    pub fn solve_many(&self, h: &DensityField, moduli: Option<&[f64]>, rhs: &[&[f64]]) -> Result<Vec<ElasticState>> {
        use rayon::prelude::*;
        let k = self.reduced_stiffness(h, moduli)?;
        let mods = self.moduli(moduli)?;
        rhs.par_iter()
            .map(|b| {
                let (u, it) = self.solve_system(&k, b)?;
                Ok(self.state_from(h, mods.clone(), u, it))
            })
            .collect()
    }

    /// Work of the surface loads, integrated edge by edge.
    pub fn compliance(&self, state: &ElasticState, xi: &[f64]) -> Result<f64> {
        check_len("load parameter", self.parameter_dim(), xi.len())?;
        let u = &state.u;
        let mut work = 0.0;
        for (p, patch) in self.bc.patches.iter().enumerate() {
            let g = [xi[2 * p], xi[2 * p + 1]];
            for edge in &patch.edges {
                for c in 0..2 {
                    // trapezoid rule is exact for a linear trace times a constant traction
                    work += g[c] * 0.5 * (u[2 * edge.a + c] + u[2 * edge.b + c]) * edge.length;
                }
            }
        }
        Ok(work)
    }

    /// Derivative of the compliance with respect to each physical density.
    pub fn compliance_sensitivity(&self, state: &ElasticState) -> Vec<f64> {
        state
            .densities
            .iter()
            .zip(&state.energy)
            .map(|(h, w)| -self.material.interpolation_derivative(*h) * w)
            .collect()
    }

    /// `dJ/dh_e = A'(h_e) E_e u_e^T K0 p_e` for an adjoint field `p`.
    pub fn adjoint_sensitivity(&self, state: &ElasticState, adjoint: &[f64]) -> Vec<f64> {
        (0..self.grid.element_count())
            .map(|e| {
                self.material.interpolation_derivative(state.densities[e])
                    * state.moduli[e]
                    * self.pair_energy(e, &state.u, adjoint)
            })
            .collect()
    }

    /// `int chi |u - u_T|^2`, integrated exactly on bilinear elements.
    pub fn target_displacement_objective(&self, state: &ElasticState, target: &[f64], chi: &[f64]) -> Result<f64> {
        check_len("target displacement", self.grid.dof_count(), target.len())?;
        check_len("target weight", self.grid.element_count(), chi.len())?;
        let mut total = 0.0;
        for e in 0..self.grid.element_count() {
            if chi[e] == 0.0 {
                continue;
            }
            let nodes = self.grid.element_nodes(e);
            for c in 0..2 {
                let w: [f64; 4] = std::array::from_fn(|a| state.u[2 * nodes[a] + c] - target[2 * nodes[a] + c]);
                for a in 0..4 {
                    for b in 0..4 {
                        total += chi[e] * w[a] * self.mass[a][b] * w[b];
                    }
                }
            }
        }
        Ok(total)
    }

    /// Right-hand side `-2 M_chi (u - u_T)` of the adjoint problem.
    pub fn target_adjoint_rhs(&self, state: &ElasticState, target: &[f64], chi: &[f64]) -> Result<Vec<f64>> {
        check_len("target displacement", self.grid.dof_count(), target.len())?;
        check_len("target weight", self.grid.element_count(), chi.len())?;
        let mut rhs = vec![0.0; self.grid.dof_count()];
        for e in 0..self.grid.element_count() {
            if chi[e] == 0.0 {
                continue;
            }
            let nodes = self.grid.element_nodes(e);
            for c in 0..2 {
                let w: [f64; 4] = std::array::from_fn(|a| state.u[2 * nodes[a] + c] - target[2 * nodes[a] + c]);
                for a in 0..4 {
                    let mw: f64 = (0..4).map(|b| self.mass[a][b] * w[b]).sum();
                    rhs[2 * nodes[a] + c] -= 2.0 * chi[e] * mw;
                }
            }
        }
        Ok(rhs)
    }

    /// Design derivative of the target-displacement misfit through the adjoint state.
    pub fn target_displacement_sensitivity(
        &self,
        h: &DensityField,
        state: &ElasticState,
        target: &[f64],
        chi: &[f64],
    ) -> Result<Vec<f64>> {
        let rhs = self.target_adjoint_rhs(state, target, chi)?;
        let adjoint = self.solve_rhs(h, Some(&state.moduli), &rhs)?;
        Ok(self.adjoint_sensitivity(state, &adjoint.u))
    }
}

/// `sum_e h_e |e|` over active elements.
pub fn volume(grid: &StructuredGrid, h: &[f64]) -> f64 {
    let area = grid.element_area();
    h.iter()
        .zip(grid.active_mask())
        .filter(|(_, a)| **a)
        .map(|(v, _)| v * area)
        .sum()
}

/// Constant element area on active elements, zero on passive ones.
pub fn volume_sensitivity(grid: &StructuredGrid) -> Vec<f64> {
    let area = grid.element_area();
    grid.active_mask().iter().map(|a| if *a { area } else { 0.0 }).collect()
}
