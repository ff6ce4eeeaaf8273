use std::sync::Arc;

use proptest::prelude::*;
use resonat_core::expansion::{alpha_expansion, beta_expansion, l2_dd_norm, psf_profile, reconstruct_green};
use resonat_core::grid::{build_disk_grid, build_measurement_surface, sample_profile, ProfileKind};
use resonat_core::imaging::{
    adjoint_apply, build_forward_map, time_reversal, ForwardMap, Medium, MediumTag,
};
use resonat_core::kernels::g0_radial;
use resonat_core::spectral::{default_cluster_tol, eigendecompose};
use resonat_core::volume::{assemble_kd, DiscreteOperator};
use resonat_core::{c64, linalg, WaveContext};

fn ctx() -> WaveContext {
    WaveContext::new(1.0, 2).unwrap()
}

fn operator(radius: f64, cells: usize, kind: ProfileKind) -> DiscreteOperator {
    let g = build_disk_grid(radius, cells, &ctx()).unwrap();
    let p = sample_profile(&g, kind).unwrap();
    assemble_kd(&g, &p, &ctx()).unwrap()
}

#[test]
fn expansion_matches_direct_solve_for_variable_index() {
    let kind = ProfileKind::RadialBump { center: [0.2, -0.1, 0.0], width: 0.8, peak: 2.5 };
    let op = operator(1.5, 12, kind);
    let n = op.len();
    let sys = eigendecompose(&op, default_cluster_tol(&op)).unwrap();
    let lmax = op.spectrum().unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let w = op.weights().to_vec();
    for s in [0.3, 0.7] {
        let tau = s / lmax;
        // G = (I − τM)⁻¹ G0
        let lhs = linalg::identity(n) - linalg::scaled(op.matrix(), c64::new(tau, 0.0));
        let free = op.free_gram();
        let direct = linalg::solve(lhs.as_ref(), free.as_ref());
        let scale = l2_dd_norm((&direct - &free).as_ref(), &w);
        for coeffs in [alpha_expansion(&sys, &op, tau).unwrap(), beta_expansion(&sys, &op, tau).unwrap()] {
            let g = reconstruct_green(&coeffs, &sys, &op, n).unwrap().values;
            let err = l2_dd_norm((&g - &direct).as_ref(), &w) / scale;
            assert!(err <= 1e-7, "{:?} at τ = {tau}: {err}", coeffs.kind);
        }
    }
}

#[test]
fn resonant_contrast_narrows_the_psf() {
    let op = operator(2.5, 21, ProfileKind::Constant(1.0));
    let sys = eigendecompose(&op, default_cluster_tol(&op)).unwrap();
    let lambda = sys.eigenvalue_at(9);
    assert!(lambda.norm() < 1.0 && lambda.re > 0.0);
    let x0 = op.grid().center_index();
    let dir = [1.0, 0.0, 0.0];
    let free = op.green_matrix(0.0).unwrap();
    let hom = psf_profile(&free, x0, op.grid(), x0, &dir).unwrap();
    let high = op.solve_green_direct(1.0 / lambda.re, x0).unwrap();
    let hc = psf_profile(&high, 0, op.grid(), x0, &dir).unwrap();
    let ratio = hc.fwhm.unwrap() / hom.fwhm.unwrap();
    assert!(ratio < 1.0, "{ratio}");
}

fn high_contrast_map() -> ForwardMap {
    let op = operator(1.0, 8, ProfileKind::Constant(1.5));
    let grid = op.grid().clone();
    let s = build_measurement_surface(20.0, 24, &ctx()).unwrap();
    build_forward_map(&grid, &s, Medium::HighContrast { tau: 0.7, op: Arc::new(op) }, &ctx()).unwrap()
}

#[test]
fn forward_map_columns_match_point_kernels() {
    let map = high_contrast_map();
    assert_eq!(map.tag(), MediumTag::HighContrast(0.7));
    for j in [0, map.grid.len() / 2, map.grid.len() - 1] {
        let col = map.kernel_column(&map.grid.points[j]).unwrap();
        for (m, g) in col.iter().enumerate() {
            assert!((map.kernel_at_grid(m, j) - g).norm() <= 1e-12 * g.norm().max(1e-12));
        }
    }
    // far from the scatterer the homogeneous columns are the free kernel
    let hom = build_forward_map(&map.grid, &map.surface, Medium::Homogeneous, &ctx()).unwrap();
    let z = map.surface.points[3];
    let y = map.grid.points[5];
    let r = ((z[0] - y[0]).powi(2) + (z[1] - y[1]).powi(2)).sqrt();
    assert!((hom.kernel_at_grid(3, 5) - g0_radial(r, &ctx())).norm() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn time_reversal_is_the_weighted_adjoint(re in prop::collection::vec(-1.0f64..1.0, 24), im in prop::collection::vec(-1.0f64..1.0, 24)) {
        let map = high_contrast_map();
        let u: Vec<c64> = re.iter().zip(&im).map(|(a, b)| c64::new(*a, *b)).collect();
        let img = time_reversal(&u, &map).unwrap().values;
        let adj = adjoint_apply(map.matrix.as_ref(), &map.surface.weights, &u);
        for i in 0..img.len() {
            let lhs = img[i] * map.grid.weights[i];
            prop_assert!((lhs - adj[i]).norm() <= 1e-12 * (1.0 + adj[i].norm()));
        }
    }
}
