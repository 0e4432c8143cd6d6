use crate::error::{Error, Result};

/// Isotropic linear-elastic material with SIMP interpolation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialModel {
    /// Young's modulus of the solid phase.
    pub youngs: f64,
    /// Poisson ratio.
    pub poisson: f64,
    /// Stiffness fraction of the void phase.
    pub eta: f64,
    /// SIMP penalization exponent.
    pub penalty: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self {
            youngs: 1.0,
            poisson: 0.3,
            eta: 1e-3,
            penalty: 3.0,
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.youngs > 0.0) {
            return Err(Error::InvalidInput(format!("Young's modulus must be positive, got {}", self.youngs)));
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return Err(Error::InvalidInput(format!("Poisson ratio must lie in (-1, 0.5), got {}", self.poisson)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidInput(format!("void stiffness fraction must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.penalty >= 1.0) {
            return Err(Error::InvalidInput(format!("SIMP exponent must be >= 1, got {}", self.penalty)));
        }
        Ok(())
    }

    /// Shear modulus `mu` and plane-stress first Lamé coefficient.
    pub fn lame_plane_stress(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs, self.poisson);
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / (1.0 - nu * nu);
        (mu, lambda)
    }

    /// `eta + (1 - eta) h^p`
    pub fn interpolation(&self, h: f64) -> f64 {
        self.eta + (1.0 - self.eta) * h.powf(self.penalty)
    }

    /// Derivative of [`Self::interpolation`] with respect to `h`.
    pub fn interpolation_derivative(&self, h: f64) -> f64 {
        if h <= 0.0 && self.penalty > 1.0 {
            return 0.0;
        }
        self.penalty * (1.0 - self.eta) * h.powf(self.penalty - 1.0)
    }
}

const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Local coordinates of the four element nodes, counter-clockwise from lower-left.
const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

fn shape_gradients(s: f64, t: f64, hx: f64, hy: f64) -> [(f64, f64); 4] {
    let mut g = [(0.0, 0.0); 4];
    for (a, (sa, ta)) in CORNERS.iter().enumerate() {
        let dn_ds = 0.25 * sa * (1.0 + ta * t);
        let dn_dt = 0.25 * ta * (1.0 + sa * s);
        g[a] = (dn_ds * 2.0 / hx, dn_dt * 2.0 / hy);
    }
    g
}

pub(crate) fn shape_values(s: f64, t: f64) -> [f64; 4] {
    let mut n = [0.0; 4];
    for (a, (sa, ta)) in CORNERS.iter().enumerate() {
        n[a] = 0.25 * (1.0 + sa * s) * (1.0 + ta * t);
    }
    n
}

/// 8x8 plane-stress stiffness of one `hx` by `hy` element for unit thickness.
///
/// DOF order is `(u_x, u_y)` per node, nodes counter-clockwise from lower-left.
pub fn element_stiffness(mat: &MaterialModel, hx: f64, hy: f64) -> [[f64; 8]; 8] {
    let c = mat.youngs / (1.0 - mat.poisson * mat.poisson);
    let d = [
        [c, c * mat.poisson, 0.0],
        [c * mat.poisson, c, 0.0],
        [0.0, 0.0, c * (1.0 - mat.poisson) / 2.0],
    ];
    let det_j = hx * hy / 4.0;
    let mut k = [[0.0; 8]; 8];
    for &s in &GAUSS_2 {
        for &t in &GAUSS_2 {
            let g = shape_gradients(s, t, hx, hy);
            // strain-displacement rows: exx, eyy, 2exy
            let mut b = [[0.0; 8]; 3];
            for a in 0..4 {
                b[0][2 * a] = g[a].0;
                b[1][2 * a + 1] = g[a].1;
                b[2][2 * a] = g[a].1;
                b[2][2 * a + 1] = g[a].0;
            }
            let mut db = [[0.0; 8]; 3];
            for r in 0..3 {
                for col in 0..8 {
                    db[r][col] = (0..3).map(|q| d[r][q] * b[q][col]).sum();
                }
            }
            for r in 0..8 {
                for col in 0..8 {
                    k[r][col] += det_j * (0..3).map(|q| b[q][r] * db[q][col]).sum::<f64>();
                }
            }
        }
    }
    k
}

/// 4x4 scalar consistent mass matrix `int N_a N_b` of one element.
pub fn element_mass(hx: f64, hy: f64) -> [[f64; 4]; 4] {
    let det_j = hx * hy / 4.0;
    let mut m = [[0.0; 4]; 4];
    for &s in &GAUSS_2 {
        for &t in &GAUSS_2 {
            let n = shape_values(s, t);
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += det_j * n[a] * n[b];
                }
            }
        }
    }
    m
}

/// `u_e^T K u_e` for an 8x8 element matrix.
pub(crate) fn element_energy(k: &[[f64; 8]; 8], u: &[f64; 8], v: &[f64; 8]) -> f64 {
    let mut acc = 0.0;
    for r in 0..8 {
        let mut row = 0.0;
        for c in 0..8 {
            row += k[r][c] * v[c];
        }
        acc += u[r] * row;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_diagonal_matches_closed_form() {
        let mat = MaterialModel::default();
        let k = element_stiffness(&mat, 1.0, 1.0);
        let nu = mat.poisson;
        let k1 = (0.5 - nu / 6.0) / (1.0 - nu * nu);
        for i in 0..8 {
            assert!((k[i][i] - k1).abs() < 1e-14, "{} vs {}", k[i][i], k1);
        }
        // lower-left x / lower-right x coupling
        let k3 = (-0.25 - nu / 12.0) / (1.0 - nu * nu);
        assert!((k[0][2] - k3).abs() < 1e-14);
    }

    #[test]
    fn rows_sum_to_zero_and_symmetric() {
        let k = element_stiffness(&MaterialModel::default(), 0.7, 0.3);
        for r in 0..8 {
            // rigid translations in x and y
            let sx: f64 = (0..4).map(|a| k[r][2 * a]).sum();
            let sy: f64 = (0..4).map(|a| k[r][2 * a + 1]).sum();
            assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
            for c in 0..8 {
                assert!((k[r][c] - k[c][r]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mass_integrates_to_area() {
        let m = element_mass(0.5, 0.2);
        let total: f64 = m.iter().flatten().sum();
        assert!((total - 0.1).abs() < 1e-15);
    }

    #[test]
    fn interpolation_endpoints() {
        let mat = MaterialModel::default();
        assert_eq!(mat.interpolation(1.0), 1.0);
        assert_eq!(mat.interpolation(0.0), mat.eta);
        assert_eq!(mat.interpolation_derivative(0.0), 0.0);
        assert!(MaterialModel { poisson: 0.5, ..mat }.validate().is_err());
    }
}
