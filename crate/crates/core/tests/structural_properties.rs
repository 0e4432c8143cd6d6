use drtopo::grid_fem::{BoundaryConditions, DensityField, FemModel, LoadPatch, MaterialModel, StructuredGrid};
use proptest::prelude::*;

fn cantilever(nx: usize, ny: usize) -> FemModel {
    let grid = StructuredGrid::new(nx, ny, 2.0, 1.0).unwrap();
    let bc = BoundaryConditions::new()
        .clamp_nodes(&grid.nodes_on_vertical(0.0, 0.0, 1.0))
        .with_patch(LoadPatch::new("tip", grid.vertical_boundary_edges(2.0, 0.3, 0.7)));
    FemModel::new(grid, MaterialModel::default(), bc).unwrap()
}

fn densities(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.05f64..1.0, n)
}

fn compliance(model: &FemModel, h: &[f64], xi: &[f64]) -> f64 {
    let state = model.solve_displacement(&DensityField::new(h.to_vec()).unwrap(), None, xi).unwrap();
    model.compliance(&state, xi).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assembled_stiffness_is_symmetric(h in densities(24)) {
        let model = cantilever(6, 4);
        let k = model.assemble_stiffness(&DensityField::new(h).unwrap(), None).unwrap().to_dense();
        for (i, row) in k.iter().enumerate() {
            for (j, v) in row.iter().enumerate().take(i) {
                prop_assert!((v - k[j][i]).abs() <= 1e-12 * (1.0 + row[i].abs()));
            }
        }
    }

    #[test]
    fn compliance_is_positive_and_quadratic_in_the_load(
        h in densities(24), gx in -1.0f64..1.0, gy in -1.0f64..1.0, t in 0.1f64..3.0
    ) {
        prop_assume!(gx.abs() + gy.abs() > 1e-2);
        let model = cantilever(6, 4);
        let c = compliance(&model, &h, &[gx, gy]);
        prop_assert!(c > 0.0);
        let scaled = compliance(&model, &h, &[t * gx, t * gy]);
        prop_assert!((scaled - t * t * c).abs() <= 1e-7 * scaled);
    }

    #[test]
    fn adding_material_never_softens(h in densities(24), e in 0usize..24, bump in 0.0f64..0.5) {
        let model = cantilever(6, 4);
        let mut stiffer = h.clone();
        stiffer[e] = (stiffer[e] + bump).min(1.0);
        let xi = [0.0, -1.0];
        prop_assert!(compliance(&model, &stiffer, &xi) <= compliance(&model, &h, &xi) * (1.0 + 1e-9));
    }

    #[test]
    fn compliance_sensitivity_is_nonpositive(h in densities(24)) {
        let model = cantilever(6, 4);
        let state = model.solve_displacement(&DensityField::new(h).unwrap(), None, &[0.3, -1.0]).unwrap();
        prop_assert!(model.compliance_sensitivity(&state).iter().all(|g| *g <= 1e-14));
    }
}
