//! Named test geometries with their supports, loads and nominal laws.

use crate::error::{Error, Result};
use crate::grid_fem::{BoundaryConditions, Edge, LoadPatch, StructuredGrid};
use crate::uncertainty::NominalLaw;

pub const PRESETS: &[&str] = &["cantilever-2x1", "mast-T", "lbeam-1x1", "bridge-1x2", "gripper-1x1"];

/// What the cost measures on a preset.
#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// Work of the uncertain surface loads.
    Compliance,
    /// Weighted misfit to a target displacement under a random modulus field.
    Gripper {
        /// Fixed input load on the single patch.
        input: Vec<f64>,
        /// Target displacement per dof.
        target: Vec<f64>,
        /// Misfit weight per element.
        chi: Vec<f64>,
    },
}

/// A fully specified geometry. Uncertain parameters of compliance presets
/// stack one 2D traction per load patch, in patch order.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub grid: StructuredGrid,
    pub bc: BoundaryConditions,
    pub nominal: Vec<f64>,
    pub law: NominalLaw,
    /// Absolute target volume.
    pub volume: f64,
    pub default_sigma2: f64,
    pub default_eps: f64,
    pub cost: CostKind,
}

/// Default element counts `(nx, ny)` of a preset.
pub fn default_resolution(name: &str) -> Result<(usize, usize)> {
    Ok(match name {
        "cantilever-2x1" => (60, 30),
        "mast-T" => (40, 60),
        "lbeam-1x1" => (40, 40),
        "bridge-1x2" => (30, 60),
        "gripper-1x1" => (40, 40),
        other => return Err(unknown(other)),
    })
}

fn unknown(name: &str) -> Error {
    Error::InvalidInput(format!("unknown preset `{name}`, expected one of {}", PRESETS.join(", ")))
}

/// Absolute target volume of a preset at its nominal geometry.
pub fn default_volume(name: &str) -> Result<f64> {
    let (nx, ny) = default_resolution(name)?;
    Ok(build_preset(name, nx, ny)?.volume)
}

pub fn build_preset(name: &str, nx: usize, ny: usize) -> Result<Preset> {
    match name {
        "cantilever-2x1" => cantilever(nx, ny),
        "mast-T" => mast(nx, ny),
        "lbeam-1x1" => lbeam(nx, ny),
        "bridge-1x2" => bridge(nx, ny),
        "gripper-1x1" => gripper(nx, ny),
        other => Err(unknown(other)),
    }
}

/// Boundary edges on `x = x0` within `[lo, hi]`, widened symmetrically by one
/// element at a time on grids too coarse to hold a full edge there.
fn vertical_patch(grid: &StructuredGrid, x0: f64, lo: f64, hi: f64) -> Vec<Edge> {
    widen(grid.hy(), lo, hi, |a, b| grid.vertical_boundary_edges(x0, a, b))
}

fn horizontal_patch(grid: &StructuredGrid, y0: f64, lo: f64, hi: f64) -> Vec<Edge> {
    widen(grid.hx(), lo, hi, |a, b| grid.horizontal_boundary_edges(y0, a, b))
}

fn widen(step: f64, lo: f64, hi: f64, edges: impl Fn(f64, f64) -> Vec<Edge>) -> Vec<Edge> {
    let mut pad = 0.0;
    loop {
        let found = edges(lo - pad, hi + pad);
        if !found.is_empty() || pad > 4.0 * (hi - lo + step) {
            return found;
        }
        pad += 0.5 * step;
    }
}

fn cantilever(nx: usize, ny: usize) -> Result<Preset> {
    let grid = StructuredGrid::new(nx, ny, 2.0, 1.0)?;
    let bc = BoundaryConditions::new()
        .clamp_nodes(&grid.nodes_on_vertical(0.0, 0.0, 1.0))
        .with_patch(LoadPatch::new("tip", vertical_patch(&grid, 2.0, 0.45, 0.55)));
    let nominal = vec![-1.0, 0.0];
    Ok(Preset {
        name: "cantilever-2x1",
        grid,
        bc,
        law: NominalLaw::empirical(vec![nominal.clone()])?,
        nominal,
        volume: 0.6,
        default_sigma2: 0.01,
        default_eps: 0.01,
        cost: CostKind::Compliance,
    })
}

/// T-shaped mast: a crossbar on top of a central column, clamped at the
/// column foot. Patches: the undersides of both arm tips (cable weights),
/// then both column flanks (wind).
fn mast(nx: usize, ny: usize) -> Result<Preset> {
    let (bar, lo, hi) = (2.4, 0.6, 1.4);
    let grid = StructuredGrid::new(nx, ny, 2.0, 3.0)?.with_passive_region(|x, y| y < bar && (x < lo || x > hi));
    let bc = BoundaryConditions::new()
        .clamp_nodes(&grid.nodes_on_horizontal(0.0, lo, hi))
        .with_patch(LoadPatch::new("left arm", horizontal_patch(&grid, bar, 0.0, 0.2)))
        .with_patch(LoadPatch::new("right arm", horizontal_patch(&grid, bar, 1.8, 2.0)))
        .with_patch(LoadPatch::new("left flank", vertical_patch(&grid, lo, 0.8, 1.2)))
        .with_patch(LoadPatch::new("right flank", vertical_patch(&grid, hi, 0.8, 1.2)));
    let scenario = |wind: f64| vec![0.0, -1.0, 0.0, -1.0, wind, 0.0, wind, 0.0];
    let volume = 0.3 * grid.domain_volume();
    Ok(Preset {
        name: "mast-T",
        law: NominalLaw::weighted(vec![scenario(0.0), scenario(-1.0), scenario(1.0)], vec![0.5, 0.25, 0.25])?,
        nominal: scenario(0.0),
        grid,
        bc,
        volume,
        default_sigma2: 0.01,
        default_eps: 0.01,
        cost: CostKind::Compliance,
    })
}

/// L-shaped beam: the upper-right block is void, the top of the column is
/// clamped, and the load acts near the tip of the lower arm.
fn lbeam(nx: usize, ny: usize) -> Result<Preset> {
    let grid = StructuredGrid::new(nx, ny, 1.0, 1.0)?.with_passive_region(|x, y| x > 0.4 && y > 0.4);
    let bc = BoundaryConditions::new()
        .clamp_nodes(&grid.nodes_on_horizontal(1.0, 0.0, 0.4))
        .with_patch(LoadPatch::new("tip", vertical_patch(&grid, 1.0, 0.15, 0.25)));
    let nominal = vec![-1.0, 0.0];
    Ok(Preset {
        name: "lbeam-1x1",
        grid,
        bc,
        law: NominalLaw::empirical(vec![nominal.clone()])?,
        nominal,
        volume: 0.2,
        default_sigma2: 0.01,
        default_eps: 0.01,
        cost: CostKind::Compliance,
    })
}

fn bridge(nx: usize, ny: usize) -> Result<Preset> {
    let grid = StructuredGrid::new(nx, ny, 1.0, 2.0)?;
    let bc = BoundaryConditions::new()
        .clamp_nodes(&grid.nodes_on_horizontal(0.0, 0.0, 1.0))
        .with_patch(LoadPatch::new("deck", horizontal_patch(&grid, 2.0, 0.0, 1.0)));
    let nominal = vec![0.0, -1.0];
    Ok(Preset {
        name: "bridge-1x2",
        grid,
        bc,
        law: NominalLaw::empirical(vec![nominal.clone()])?,
        nominal,
        volume: 0.245,
        default_sigma2: 0.01,
        default_eps: 0.01,
        cost: CostKind::Compliance,
    })
}

/// Gripper: input load on the middle of the left side, supports at the left
/// corners, jaws at the middle of the right side.
fn gripper(nx: usize, ny: usize) -> Result<Preset> {
    let grid = StructuredGrid::new(nx, ny, 1.0, 1.0)?;
    let mut supports = grid.nodes_on_vertical(0.0, 0.0, 0.1);
    supports.extend(grid.nodes_on_vertical(0.0, 0.9, 1.0));
    let bc = BoundaryConditions::new()
        .clamp_nodes(&supports)
        .with_patch(LoadPatch::new("input", vertical_patch(&grid, 0.0, 0.45, 0.55)));
    let jaw = |x: f64, y: f64| x > 0.9 && (0.4..=0.6).contains(&y);
    let chi: Vec<f64> = (0..grid.element_count())
        .map(|e| {
            let (x, y) = grid.centroid(e);
            if jaw(x, y) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut target = vec![0.0; grid.dof_count()];
    for e in (0..grid.element_count()).filter(|e| chi[*e] > 0.0) {
        for n in grid.element_nodes(e) {
            target[2 * n] = -1.0;
        }
    }
    Ok(Preset {
        name: "gripper-1x1",
        grid,
        bc,
        nominal: Vec::new(),
        law: NominalLaw::empirical(vec![vec![0.0]])?,
        volume: 0.3,
        default_sigma2: 0.1,
        default_eps: 0.01,
        cost: CostKind::Gripper {
            input: vec![0.1, 0.0],
            target,
            chi,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds_with_loaded_patches() {
        for name in PRESETS {
            let (nx, ny) = default_resolution(name).unwrap();
            let p = build_preset(name, nx, ny).unwrap();
            p.bc.validate(&p.grid).unwrap();
            assert!(p.volume > 0.0 && p.volume < p.grid.domain_volume(), "{name}");
        }
    }

    #[test]
    fn masked_presets_exclude_void_from_volume() {
        let l = build_preset("lbeam-1x1", 40, 40).unwrap();
        assert!((l.grid.domain_volume() - 0.64).abs() < 1e-12);
        let m = build_preset("mast-T", 40, 60).unwrap();
        let expected = 2.0 * 3.0 - 2.0 * 0.6 * 2.4;
        assert!((m.grid.domain_volume() - expected).abs() < 1e-9);
        assert!((m.volume - 0.3 * expected).abs() < 1e-9);
        assert_eq!(m.bc.parameter_dim(), 8);
    }

    #[test]
    fn bridge_volume_default() {
        assert_eq!(default_volume("bridge-1x2").unwrap(), 0.245);
    }

    #[test]
    fn coarse_grids_still_carry_their_loads() {
        for name in PRESETS {
            let p = build_preset(name, 8, 6).unwrap();
            p.bc.validate(&p.grid).unwrap();
        }
    }
}
