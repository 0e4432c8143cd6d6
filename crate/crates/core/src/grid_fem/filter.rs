use super::grid::StructuredGrid;

/// Linear cone (hat) density filter.
///
/// `h_phys[e] = sum_f w_ef h[f] / sum_f w_ef` with `w_ef = max(0, r - |x_e - x_f|)`,
/// restricted to active elements. Passive elements map to zero. A radius below
/// one element width degenerates to the identity.
#[derive(Debug, Clone)]
pub struct DensityFilter {
    /// Radius in element widths.
    pub radius: f64,
    neighbours: Vec<Vec<(usize, f64)>>,
    active: Vec<bool>,
}

impl DensityFilter {
    pub fn new(grid: &StructuredGrid, radius: f64) -> Self {
        let h = grid.hx().min(grid.hy());
        let r_phys = radius * h;
        let reach_i = (r_phys / grid.hx()).ceil() as isize;
        let reach_j = (r_phys / grid.hy()).ceil() as isize;
        let active = grid.active_mask().to_vec();
        let mut neighbours = Vec::with_capacity(grid.element_count());
        for e in 0..grid.element_count() {
            let mut row = Vec::new();
            if active[e] {
                let (ie, je) = ((e % grid.nx) as isize, (e / grid.nx) as isize);
                let (xe, ye) = grid.centroid(e);
                for dj in -reach_j..=reach_j {
                    for di in -reach_i..=reach_i {
                        let (i, j) = (ie + di, je + dj);
                        if i < 0 || j < 0 || i >= grid.nx as isize || j >= grid.ny as isize {
                            continue;
                        }
                        let f = grid.element_index(i as usize, j as usize);
                        if !active[f] {
                            continue;
                        }
                        let (xf, yf) = grid.centroid(f);
                        let d = ((xe - xf).powi(2) + (ye - yf).powi(2)).sqrt();
                        let w = r_phys - d;
                        if w > 0.0 {
                            row.push((f, w));
                        }
                    }
                }
                if row.is_empty() {
                    row.push((e, 1.0));
                }
                let total: f64 = row.iter().map(|(_, w)| w).sum();
                for (_, w) in row.iter_mut() {
                    *w /= total;
                }
            }
            neighbours.push(row);
        }
        Self {
            radius,
            neighbours,
            active,
        }
    }

    /// Filter that returns its input (with passive elements zeroed).
    pub fn identity(grid: &StructuredGrid) -> Self {
        Self::new(grid, 0.0)
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.neighbours
            .iter()
            .map(|row| row.iter().map(|(f, w)| w * h[*f]).sum())
            .collect()
    }

    /// Chain rule: maps a gradient with respect to filtered densities back to design variables.
    pub fn backpropagate(&self, grad_phys: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; grad_phys.len()];
        for (e, row) in self.neighbours.iter().enumerate() {
            for (f, w) in row {
                out[*f] += w * grad_phys[e];
            }
        }
        out
    }

    pub fn is_active(&self, e: usize) -> bool {
        self.active[e]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_constants_on_active_elements() {
        let g = StructuredGrid::new(6, 4, 3.0, 2.0)
            .unwrap()
            .with_passive_region(|x, y| x > 2.0 && y > 1.0);
        let f = DensityFilter::new(&g, 1.5);
        let out = f.apply(&[0.4; 24]);
        for e in 0..24 {
            let want = if g.is_active(e) { 0.4 } else { 0.0 };
            assert!((out[e] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn small_radius_is_identity() {
        let g = StructuredGrid::new(3, 3, 1.0, 1.0).unwrap();
        let f = DensityFilter::identity(&g);
        let h: Vec<f64> = (0..9).map(|i| i as f64 / 9.0).collect();
        assert_eq!(f.apply(&h), h);
    }

    #[test]
    fn backpropagation_is_the_transpose() {
        let g = StructuredGrid::new(5, 3, 5.0, 3.0).unwrap();
        let f = DensityFilter::new(&g, 1.5);
        let x: Vec<f64> = (0..15).map(|i| ((i * 7) % 5) as f64).collect();
        let y: Vec<f64> = (0..15).map(|i| ((i * 3) % 4) as f64 - 1.5).collect();
        let lhs: f64 = f.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(f.backpropagate(&y)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
