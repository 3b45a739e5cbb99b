use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use cct_core::energy::HamiltonianModel;
use cct_core::equilibria::{closest_uep, continue_branch, enumerate_equilibria, ContinuationOptions, EnumerateOptions, EquilibriumPoint};
use cct_core::faultstudy::{PreparedStudy, StudyOptions};
use cct_core::netmodel::ReducedNetwork;
use cct_core::scenario::wscc9_tmib;
use cct_core::swing::GeneratorParams;

fn wscc_post() -> &'static (HamiltonianModel, Vec<EquilibriumPoint>) {
    static CELL: OnceLock<(HamiltonianModel, Vec<EquilibriumPoint>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let prepared = PreparedStudy::new(wscc9_tmib().regimes().unwrap(), StudyOptions::default()).unwrap();
        let eq = enumerate_equilibria(&prepared.post_model, &EnumerateOptions::default());
        (prepared.post_model, eq)
    })
}

/// Central-difference Hessian of the potential alone.
fn fd_hessian(hm: &HamiltonianModel, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let h = 1e-4;
    let at = |di: usize, si: f64, dk: usize, sk: f64| {
        let mut y = x.to_vec();
        y[di] += si * h;
        y[dk] += sk * h;
        hm.potential(&y)
    };
    DMatrix::from_fn(n, n, |i, k| (at(i, 1.0, k, 1.0) - at(i, 1.0, k, -1.0) - at(i, -1.0, k, 1.0) + at(i, -1.0, k, -1.0)) / (4.0 * h * h))
}

#[test]
fn type_index_is_the_hessian_inertia() {
    let (hm, eq) = wscc_post();
    assert!(eq.len() >= 2);
    for p in eq {
        let hess = fd_hessian(hm, &p.delta);
        let eig = hess.symmetric_eigenvalues();
        assert!(eig.iter().all(|v| v.abs() > 1e-4), "near-degenerate {eig}");
        let negatives = eig.iter().filter(|&&v| v < 0.0).count();
        assert_eq!(negatives, p.type_index, "at {:?}", p.delta);
    }
}

#[test]
fn enumerated_points_are_stationary() {
    let (hm, eq) = wscc_post();
    let h = 1e-6;
    for p in eq {
        for i in 0..p.delta.len() {
            let mut up = p.delta.clone();
            let mut dn = p.delta.clone();
            up[i] += h;
            dn[i] -= h;
            let g = (hm.potential(&up) - hm.potential(&dn)) / (2.0 * h);
            assert!(g.abs() < 1e-6, "gradient {g} at {:?}", p.delta);
        }
        assert!((hm.potential(&p.delta) - p.energy).abs() < 1e-12);
    }
}

#[test]
fn exactly_one_stable_point_and_it_is_the_anchor() {
    let (hm, eq) = wscc_post();
    let stable: Vec<_> = eq.iter().filter(|p| p.is_stable()).collect();
    assert_eq!(stable.len(), 1);
    let gap = stable[0].delta.iter().zip(&hm.anchor).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn closest_uep_ignores_input_order(order in Just((0..wscc_post().1.len()).collect::<Vec<_>>()).prop_shuffle()) {
        let eq = &wscc_post().1;
        let shuffled: Vec<EquilibriumPoint> = order.iter().map(|&i| eq[i].clone()).collect();
        let a = closest_uep(eq).unwrap();
        let b = closest_uep(&shuffled).unwrap();
        prop_assert_eq!(a.closest_uep.delta, b.closest_uep.delta);
        prop_assert_eq!(a.e_c, b.e_c);
    }
}

/// Lossless machine against an infinite bus through unit reactance, so that
/// P_e = sin δ and P_m = p.
fn smib(p: f64) -> HamiltonianModel {
    let j = Complex64::new(0.0, 1.0);
    let y = DMatrix::from_row_slice(2, 2, &[-j, j, j, -j]);
    let red = ReducedNetwork::from_admittance(&y, vec![1.0, 1.0], vec![1, 2]);
    let gp = GeneratorParams { m: vec![1.0, 0.05], pm: vec![0.0, p], e: vec![1.0, 1.0], infinite_index: Some(0) };
    HamiltonianModel::new(red, gp, vec![0.0])
}

#[test]
fn smib_equilibria_are_arcsine_pair() {
    let hm = smib(0.6);
    let eq = enumerate_equilibria(&hm, &EnumerateOptions::default());
    let mut canon: Vec<(f64, usize)> = eq.iter().map(|p| (p.delta[0].rem_euclid(std::f64::consts::TAU), p.type_index)).collect();
    canon.sort_by(|a, b| a.0.total_cmp(&b.0));
    canon.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-8);
    let s = 0.6f64.asin();
    assert_eq!(canon.len(), 2, "{canon:?}");
    assert!((canon[0].0 - s).abs() < 1e-10 && canon[0].1 == 0);
    assert!((canon[1].0 - (std::f64::consts::PI - s)).abs() < 1e-10 && canon[1].1 == 1);
}

#[test]
fn smib_branches_fold_at_unit_power() {
    let branches = continue_branch(|p| Some(smib(p)), 0.5, 1.2, &ContinuationOptions::default());
    assert!(!branches.is_empty());
    let mut types = Vec::new();
    for b in &branches {
        let (lo, hi) = b.param_range().unwrap();
        assert!((lo - 0.5).abs() < 1e-9, "branch starts at {lo}");
        assert!((hi - 1.0).abs() < 5e-3, "branch ends at {hi}");
        assert_eq!(b.folds.len(), 1);
        assert!((b.folds[0] - 1.0).abs() < 5e-3, "fold at {}", b.folds[0]);
        for bp in &b.points {
            let d = bp.point.delta[0];
            assert!((d.sin() - bp.param).abs() < 1e-8);
        }
        types.extend(b.segments().iter().map(|s| s.type_index));
    }
    types.sort();
    types.dedup();
    assert_eq!(types, vec![0, 1]);
}
