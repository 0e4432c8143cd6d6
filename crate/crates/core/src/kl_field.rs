//! Karhunen-Loeve expansion of a random Young's modulus field.
//!
//! The covariance operator is discretized at element centroids with area
//! weights. Its leading eigenpairs parametrize the field by a standard normal
//! vector, which is then pushed pointwise onto a bounded uniform range.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::grid_fem::StructuredGrid;

/// Exponential covariance `amplitude * exp(-|x - y| / correlation_length)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub amplitude: f64,
    pub correlation_length: f64,
}

impl CovarianceSpec {
    pub fn new(amplitude: f64, correlation_length: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !(correlation_length > 0.0) {
            return Err(Error::InvalidInput(format!(
                "covariance needs positive amplitude and length, got {amplitude} and {correlation_length}"
            )));
        }
        Ok(Self {
            amplitude,
            correlation_length,
        })
    }

    pub fn kernel(&self, distance: f64) -> f64 {
        self.amplitude * (-distance / self.correlation_length).exp()
    }
}

/// Symmetrized Nystrom matrix `W^{1/2} C W^{1/2}` and the quadrature weights `W`.
pub fn nystrom_matrix(grid: &StructuredGrid, cov: &CovarianceSpec) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = grid.element_count();
    let weights = vec![grid.element_area(); n];
    let centroids: Vec<(f64, f64)> = (0..n).map(|e| grid.centroid(e)).collect();
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let d = ((centroids[i].0 - centroids[j].0).powi(2) + (centroids[i].1 - centroids[j].1).powi(2)).sqrt();
            let v = (weights[i] * weights[j]).sqrt() * cov.kernel(d);
            b[i][j] = v;
            b[j][i] = v;
        }
    }
    (b, weights)
}

/// Leading eigenpairs of the discretized covariance operator.
#[derive(Debug, Clone, PartialEq)]
pub struct KLBasis {
    /// Descending, positive.
    pub eigenvalues: Vec<f64>,
    /// Element values of each eigenfunction, orthonormal for the area-weighted inner product.
    pub modes: Vec<Vec<f64>>,
    /// Quadrature weight (area) of each element.
    pub weights: Vec<f64>,
    /// Mean field value.
    pub mean: f64,
}

impl KLBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.weights.len()
    }

    /// Area-weighted inner product of two element fields.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| w * x * y).sum()
    }

    /// Gaussian field `mean + sum_i sqrt(lambda_i) phi_i xi_i` per element.
    pub fn gaussian_field(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_len("KL coefficients", self.len(), xi.len())?;
        let mut field = vec![self.mean; self.element_count()];
        for ((lam, mode), x) in self.eigenvalues.iter().zip(&self.modes).zip(xi) {
            let s = lam.sqrt() * x;
            for (f, m) in field.iter_mut().zip(mode) {
                *f += s * m;
            }
        }
        Ok(field)
    }

    /// Pointwise standard deviation of the Gaussian field, `sqrt(sum_i lambda_i phi_i^2)`.
    pub fn pointwise_std(&self) -> Vec<f64> {
        (0..self.element_count())
            .map(|e| {
                self.eigenvalues
                    .iter()
                    .zip(&self.modes)
                    .map(|(l, m)| l * m[e] * m[e])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Leading `k` eigenpairs of the covariance operator on `grid`.
///
/// Modes whose eigenvalue is not numerically positive are dropped with a warning.
pub fn build_kl_basis(grid: &StructuredGrid, cov: &CovarianceSpec, k: usize) -> Result<KLBasis> {
    let n = grid.element_count();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("mode count must lie in 1..={n}, got {k}")));
    }
    let (b, weights) = nystrom_matrix(grid, cov);
    let mat = DMatrix::from_fn(n, n, |i, j| b[i][j]);
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    let mut eigenvalues = Vec::with_capacity(k);
    let mut modes = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lam = eig.eigenvalues[idx];
        if !(lam > 1e-12 * top) {
            log::warn!("truncating KL expansion at {} modes: eigenvalue {lam:e} is not positive", modes.len());
            break;
        }
        let v = eig.eigenvectors.column(idx);
        // phi = W^{-1/2} v, then fix the sign so the largest entry is positive
        let mut phi: Vec<f64> = (0..n).map(|e| v[e] / weights[e].sqrt()).collect();
        let pivot = phi.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if pivot < 0.0 {
            phi.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvalues.push(lam);
        modes.push(phi);
    }
    Ok(KLBasis {
        eigenvalues,
        modes,
        weights,
        mean: 1.0,
    })
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Pushes a Gaussian value onto the uniform law on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusTransform {
    pub lower: f64,
    pub upper: f64,
}

impl Default for ModulusTransform {
    fn default() -> Self {
        Self {
            lower: 0.1,
            upper: 1.9,
        }
    }
}

impl ModulusTransform {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 < lower && lower < upper) {
            return Err(Error::InvalidInput(format!("modulus range needs 0 < a < b, got [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    /// `a + (b - a) Phi((value - mean) / std)`.
    pub fn apply(&self, value: f64, mean: f64, std: f64) -> f64 {
        let z = if std > 0.0 { (value - mean) / std } else { 0.0 };
        (self.lower + (self.upper - self.lower) * normal_cdf(z)).clamp(self.lower, self.upper)
    }
}

/// Per-element Young's modulus for the coefficient vector `xi`.
pub fn realize_modulus(basis: &KLBasis, transform: &ModulusTransform, xi: &[f64]) -> Result<Vec<f64>> {
    let field = basis.gaussian_field(xi)?;
    let std = basis.pointwise_std();
    Ok(field
        .iter()
        .zip(&std)
        .map(|(v, s)| transform.apply(*v, basis.mean, *s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn unit_grid(n: usize) -> StructuredGrid {
        StructuredGrid::new(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn modes_are_orthonormal_and_sorted() {
        let g = unit_grid(6);
        let basis = build_kl_basis(&g, &CovarianceSpec::new(100.0, 0.2).unwrap(), 8).unwrap();
        for w in basis.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((basis.inner(&basis.modes[i], &basis.modes[j]) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn long_correlation_is_rank_one() {
        let g = unit_grid(5);
        let amp = 3.0;
        let basis = build_kl_basis(&g, &CovarianceSpec::new(amp, 1e6).unwrap(), 3).unwrap();
        assert!((basis.eigenvalues[0] - amp * 1.0).abs() < 1e-4);
        // remaining modes are numerically zero and get truncated, or are tiny
        for l in &basis.eigenvalues[1..] {
            assert!(*l < 1e-4);
        }
    }

    #[test]
    fn eigenvalue_sum_bounded_by_trace() {
        let g = unit_grid(4);
        let cov = CovarianceSpec::new(100.0, 0.02).unwrap();
        let basis = build_kl_basis(&g, &cov, 16).unwrap();
        let sum: f64 = basis.eigenvalues.iter().sum();
        assert!(sum <= cov.amplitude * 1.0 * (1.0 + 1e-12));
    }

    #[test]
    fn zero_coefficients_give_centre_of_range() {
        let g = unit_grid(4);
        let basis = build_kl_basis(&g, &CovarianceSpec::new(100.0, 0.3).unwrap(), 4).unwrap();
        let e = realize_modulus(&basis, &ModulusTransform::default(), &[0.0; 4]).unwrap();
        assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn single_mode_field_matches_direct_arithmetic() {
        let g = unit_grid(3);
        let basis = build_kl_basis(&g, &CovarianceSpec::new(2.0, 0.5).unwrap(), 1).unwrap();
        let field = basis.gaussian_field(&[1.0]).unwrap();
        let s = basis.eigenvalues[0].sqrt();
        for (f, m) in field.iter().zip(&basis.modes[0]) {
            assert_eq!(*f, 1.0 + s * m);
        }
    }

    #[test]
    fn realized_moduli_stay_in_range() {
        let g = unit_grid(5);
        let basis = build_kl_basis(&g, &CovarianceSpec::new(100.0, 0.02).unwrap(), 10).unwrap();
        let t = ModulusTransform::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let xi: Vec<f64> = (0..10).map(|_| rng.random_range(-40.0..40.0)).collect();
            for v in realize_modulus(&basis, &t, &xi).unwrap() {
                assert!((0.1..=1.9).contains(&v));
            }
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-16);
    }

    #[test]
    fn rejects_bad_mode_count() {
        let g = unit_grid(2);
        let cov = CovarianceSpec::new(1.0, 1.0).unwrap();
        assert!(build_kl_basis(&g, &cov, 0).is_err());
        assert!(build_kl_basis(&g, &cov, 5).is_err());
    }
}
