use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an empty matrix with the given sorted column lists per row.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows {
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n: rows.len(),
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Position of entry `(r, c)` in `values`.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        cols.binary_search(&c).ok().map(|p| self.row_ptr[r] + p)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |p| self.values[p])
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// Dense copy, for small systems only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for r in 0..self.n {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[r][self.col_idx[p]] = self.values[p];
            }
        }
        d
    }

    /// Replaces rows and columns of `fixed` dofs by identity rows.
    pub fn eliminate(&mut self, fixed: &[bool]) {
        for r in 0..self.n {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[p];
                if fixed[r] || fixed[c] {
                    self.values[p] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

/// Settings of the preconditioned conjugate-gradient solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `|r| <= rel_tol * |b|`.
    pub rel_tol: f64,
    /// Iteration cap as a multiple of the system size.
    pub max_iter_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter_factor: 10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for an SPD system, starting from zero.
pub fn pcg(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.n;
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let max_iter = opts.max_iter_factor * n.max(1);
    let tol = opts.rel_tol * b_norm;
    let mut res = b_norm;
    for it in 0..max_iter {
        a.mul_vec(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::NotPositiveDefinite {
                iteration: it,
                curvature,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt();
        if res <= tol {
            return Ok((
                x,
                SolveReport {
                    iterations: it + 1,
                    relative_residual: res / b_norm,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: res / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.insert(0, i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let mut m = CsrMatrix::from_pattern(&rows);
        for i in 0..n {
            let p = m.position(i, i).unwrap();
            m.values[p] = 2.0;
            if i > 0 {
                let p = m.position(i, i - 1).unwrap();
                m.values[p] = -1.0;
            }
            if i + 1 < n {
                let p = m.position(i, i + 1).unwrap();
                m.values[p] = -1.0;
            }
        }
        m
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = laplacian_1d(50);
        let b = vec![1.0; 50];
        let (x, rep) = pcg(&a, &b, &SolverOptions::default()).unwrap();
        let mut ax = vec![0.0; 50];
        a.mul_vec(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * (50f64).sqrt());
        assert!(rep.iterations <= 50);
    }

    #[test]
    fn detects_indefinite_matrix() {
        let mut a = laplacian_1d(4);
        for v in a.values.iter_mut() {
            *v = -*v;
        }
        let err = pcg(&a, &[1.0, 0.0, 0.0, 1.0], &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplacian_1d(5);
        let (x, rep) = pcg(&a, &[0.0; 5], &SolverOptions::default()).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        assert_eq!(rep.iterations, 0);
    }
}
