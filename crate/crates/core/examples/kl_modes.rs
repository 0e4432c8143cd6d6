//! Builds a truncated Karhunen-Loeve basis for the Young's modulus on the unit
//! square, prints the leading eigenvalues and writes the modes plus a few
//! modulus realizations to a VTK file.
//!
//! `cargo run --release --example kl_modes -- [n] [modes]`

use drtopo::cli_io::{write_field_vtk, CellField};
use drtopo::grid_fem::StructuredGrid;
use drtopo::kl_field::{build_kl_basis, realize_modulus, CovarianceSpec, ModulusTransform};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(24), |s| s.parse())?;
    let k: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let grid = StructuredGrid::new(n, n, 1.0, 1.0)?;
    let basis = build_kl_basis(&grid, &CovarianceSpec::new(100.0, 0.02)?, k)?;
    let total: f64 = basis.eigenvalues.iter().sum();
    for (i, l) in basis.eigenvalues.iter().enumerate() {
        println!("mode {:2}  eigenvalue {:.6e}  share {:5.1}%", i + 1, l, 100.0 * l / total);
    }

    let transform = ModulusTransform::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut cells: Vec<CellField> = basis
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| CellField::new(format!("mode_{}", i + 1), m.clone()))
        .collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in 0..4 {
        let xi: Vec<f64> = (0..basis.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = realize_modulus(&basis, &transform, &xi)?;
        lo = e.iter().copied().fold(lo, f64::min);
        hi = e.iter().copied().fold(hi, f64::max);
        cells.push(CellField::new(format!("modulus_{r}"), e));
    }
    println!("realized moduli in [{lo:.4}, {hi:.4}]");

    let dir = std::path::Path::new("target/examples/kl_modes");
    std::fs::create_dir_all(dir)?;
    let meta = [CellField::new("eigenvalues", basis.eigenvalues.clone())];
    write_field_vtk(&dir.join("modes.vtk"), &grid, &cells, &meta)?;
    println!("wrote {}", dir.join("modes.vtk").display());
    Ok(())
}
