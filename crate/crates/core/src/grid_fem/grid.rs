use crate::error::{Error, Result};

/// Rectangular grid of bilinear quadrilateral elements covering `[0, lx] x [0, ly]`.
///
/// Nodes are numbered row by row from the bottom-left corner:
/// node `(i, j)` has index `j * (nx + 1) + i`, with `i` along x and `j` along y.
/// Element `(i, j)` has index `j * nx + i` and its four nodes are listed
/// counter-clockwise starting at the lower-left one:
/// `(i, j)`, `(i + 1, j)`, `(i + 1, j + 1)`, `(i, j + 1)`.
///
/// Elements can be marked passive to carve non-rectangular domains out of the
/// box. Passive elements stay in the mesh with void stiffness and a density
/// pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    active: Vec<bool>,
}

/// A boundary segment between two neighbouring nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least one element per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid dimensions must be positive, got {lx}x{ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            active: vec![true; nx * ny],
        })
    }

    /// Marks every element whose centroid satisfies `passive(x, y)` as void.
    pub fn with_passive_region(mut self, passive: impl Fn(f64, f64) -> bool) -> Self {
        for e in 0..self.element_count() {
            let (x, y) = self.centroid(e);
            if passive(x, y) {
                self.active[e] = false;
            }
        }
        self
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn element_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node_coords(&self, n: usize) -> (f64, f64) {
        let i = n % (self.nx + 1);
        let j = n / (self.nx + 1);
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    pub fn element_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let i = e % self.nx;
        let j = e / self.nx;
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    pub fn centroid(&self, e: usize) -> (f64, f64) {
        let i = e % self.nx;
        let j = e / self.nx;
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    pub fn is_active(&self, e: usize) -> bool {
        self.active[e]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Area of the active part of the domain.
    pub fn domain_volume(&self) -> f64 {
        self.active_count() as f64 * self.element_area()
    }

    fn active_at(&self, i: isize, j: isize) -> bool {
        if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
            return false;
        }
        self.active[self.element_index(i as usize, j as usize)]
    }

    /// Nodes touched by at least one active element.
    pub fn active_nodes(&self) -> Vec<bool> {
        let mut used = vec![false; self.node_count()];
        for e in 0..self.element_count() {
            if self.active[e] {
                for n in self.element_nodes(e) {
                    used[n] = true;
                }
            }
        }
        used
    }

    /// Boundary edges of the active region lying on the vertical line `x = x0`
    /// whose midpoint falls in `[y_lo, y_hi]`.
    pub fn vertical_boundary_edges(&self, x0: f64, y_lo: f64, y_hi: f64) -> Vec<Edge> {
        let i = (x0 / self.hx()).round() as isize;
        if i < 0 || i > self.nx as isize {
            return Vec::new();
        }
        let mut edges = Vec::new();
        for j in 0..self.ny as isize {
            let left = self.active_at(i - 1, j);
            let right = self.active_at(i, j);
            if left == right {
                continue;
            }
            let mid = (j as f64 + 0.5) * self.hy();
            if mid >= y_lo - 1e-12 && mid <= y_hi + 1e-12 {
                edges.push(Edge {
                    a: self.node_index(i as usize, j as usize),
                    b: self.node_index(i as usize, j as usize + 1),
                    length: self.hy(),
                });
            }
        }
        edges
    }

    /// Boundary edges of the active region lying on the horizontal line `y = y0`
    /// whose midpoint falls in `[x_lo, x_hi]`.
    pub fn horizontal_boundary_edges(&self, y0: f64, x_lo: f64, x_hi: f64) -> Vec<Edge> {
        let j = (y0 / self.hy()).round() as isize;
        if j < 0 || j > self.ny as isize {
            return Vec::new();
        }
        let mut edges = Vec::new();
        for i in 0..self.nx as isize {
            let below = self.active_at(i, j - 1);
            let above = self.active_at(i, j);
            if below == above {
                continue;
            }
            let mid = (i as f64 + 0.5) * self.hx();
            if mid >= x_lo - 1e-12 && mid <= x_hi + 1e-12 {
                edges.push(Edge {
                    a: self.node_index(i as usize, j as usize),
                    b: self.node_index(i as usize + 1, j as usize),
                    length: self.hx(),
                });
            }
        }
        edges
    }

    /// Nodes on the line `x = x0` with `y` in `[y_lo, y_hi]`.
    pub fn nodes_on_vertical(&self, x0: f64, y_lo: f64, y_hi: f64) -> Vec<usize> {
        let i = (x0 / self.hx()).round() as usize;
        (0..=self.ny)
            .filter(|&j| {
                let y = j as f64 * self.hy();
                y >= y_lo - 1e-12 && y <= y_hi + 1e-12
            })
            .map(|j| self.node_index(i.min(self.nx), j))
            .collect()
    }

    /// Nodes on the line `y = y0` with `x` in `[x_lo, x_hi]`.
    pub fn nodes_on_horizontal(&self, y0: f64, x_lo: f64, x_hi: f64) -> Vec<usize> {
        let j = (y0 / self.hy()).round() as usize;
        (0..=self.nx)
            .filter(|&i| {
                let x = i as f64 * self.hx();
                x >= x_lo - 1e-12 && x <= x_hi + 1e-12
            })
            .map(|i| self.node_index(i, j.min(self.ny)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_connectivity() {
        let g = StructuredGrid::new(3, 2, 3.0, 2.0).unwrap();
        assert_eq!(g.node_count(), 12);
        assert_eq!(g.element_count(), 6);
        assert_eq!(g.element_nodes(0), [0, 1, 5, 4]);
        assert_eq!(g.element_nodes(5), [6, 7, 11, 10]);
        assert_eq!(g.centroid(4), (1.5, 1.5));
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(StructuredGrid::new(0, 2, 1.0, 1.0).is_err());
        assert!(StructuredGrid::new(2, 2, -1.0, 1.0).is_err());
    }

    #[test]
    fn boundary_edges_follow_the_mask() {
        // L-shape: upper-right quarter removed
        let g = StructuredGrid::new(4, 4, 1.0, 1.0)
            .unwrap()
            .with_passive_region(|x, y| x > 0.5 && y > 0.5);
        assert_eq!(g.active_count(), 12);
        // re-entrant vertical face at x = 0.5, upper half
        let e = g.vertical_boundary_edges(0.5, 0.5, 1.0);
        assert_eq!(e.len(), 2);
        // outer right face only exists on the lower half
        assert_eq!(g.vertical_boundary_edges(1.0, 0.0, 1.0).len(), 2);
        assert_eq!(g.horizontal_boundary_edges(0.5, 0.5, 1.0).len(), 2);
        assert!(g.vertical_boundary_edges(0.25, 0.0, 1.0).is_empty());
    }
}
