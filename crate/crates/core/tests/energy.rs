use nalgebra::DMatrix;
use proptest::prelude::*;

use cct_core::energy::{quartic_coefficients, tau_a, tau_h, FaultOnHamiltonianModel, QuarticCoefficients, TauA, TauH, TauHOptions};
use cct_core::equilibria::{closest_uep, enumerate_equilibria, EnumerateOptions};
use cct_core::faultstudy::{PreparedStudy, StudyOptions};
use cct_core::netmodel::ReducedNetwork;
use cct_core::ode::{integrate, OdeOptions};
use cct_core::scenario::wscc9_tmib;
use cct_core::swing::{GeneratorParams, SwingField};

struct Case {
    prepared: PreparedStudy,
    fom: FaultOnHamiltonianModel,
    e_c: f64,
}

fn wscc() -> Case {
    let regimes = wscc9_tmib().regimes().unwrap();
    let prepared = PreparedStudy::new(regimes, StudyOptions::default()).unwrap();
    let eq = enumerate_equilibria(&prepared.post_model, &EnumerateOptions::default());
    let e_c = closest_uep(&eq).unwrap().e_c;
    let r = &prepared.regimes;
    let fom = FaultOnHamiltonianModel::new(r.on.clone(), &prepared.gp, r.delta_pre.clone());
    Case { prepared, fom, e_c }
}

/// Swing accelerations written out directly from the reduced admittances.
fn accel(red: &ReducedNetwork, gp: &GeneratorParams, full: &[f64]) -> Vec<f64> {
    let n = full.len();
    (0..n)
        .map(|i| {
            if Some(i) == gp.infinite_index {
                return 0.0;
            }
            let pe: f64 = (0..n)
                .map(|k| {
                    let d = full[i] - full[k];
                    red.e[i] * red.e[k] * (red.g[(i, k)] * d.cos() + red.b[(i, k)] * d.sin())
                })
                .sum();
            (gp.pm[i] - pe) / gp.m[i]
        })
        .collect()
}

/// Fixed-step RK4 on the fault-on swing equations, returning the first
/// grid time at which the post-fault energy reaches `e_c`.
fn rk4_crossing(case: &Case, dt: f64) -> f64 {
    let gp = &case.prepared.gp;
    let red = &case.prepared.regimes.on;
    let hm = &case.prepared.post_model;
    let m = gp.state_dim();
    let f = |x: &[f64]| -> Vec<f64> {
        let full = gp.full_angles(&x[..m]);
        let a = gp.modeled_part(&accel(red, gp, &full));
        x[m..].iter().copied().chain(a).collect()
    };
    let mut x: Vec<f64> = case.prepared.regimes.delta_pre.iter().copied().chain(std::iter::repeat_n(0.0, m)).collect();
    let mut t = 0.0;
    while hm.hamiltonian_flat(&x) < case.e_c {
        let k1 = f(&x);
        let k2 = f(&x.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect::<Vec<_>>());
        let k3 = f(&x.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect::<Vec<_>>());
        let k4 = f(&x.iter().zip(&k3).map(|(a, b)| a + dt * b).collect::<Vec<_>>());
        for j in 0..x.len() {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        t += dt;
        assert!(t < 2.0, "no crossing");
    }
    t
}

#[test]
fn tau_h_matches_fixed_step_scan() {
    let case = wscc();
    let th = tau_h(&case.fom, &case.prepared.gp, &case.prepared.post_model, case.e_c, &TauHOptions::default()).unwrap();
    let TauH::Crossing(t) = th else { panic!("{th:?}") };
    let dt = 1e-5;
    let oracle = rk4_crossing(&case, dt);
    assert!(t <= oracle && oracle - t <= dt + 1e-6, "tau_H {t} vs scan {oracle}");
}

#[test]
fn tau_h_without_crossing() {
    let case = wscc();
    let th = tau_h(&case.fom, &case.prepared.gp, &case.prepared.post_model, case.e_c + 1e6, &TauHOptions::default()).unwrap();
    assert_eq!(th, TauH::NoCrossing);
}

#[test]
fn quartic_t2_term_against_trajectory_fit() {
    // H along the exact fault-on trajectory is even in t near zero; fit its
    // t² coefficient by Richardson extrapolation of (H(t) − H(0)) / t².
    let case = wscc();
    let gp = &case.prepared.gp;
    let hm = &case.prepared.post_model;
    let r = &case.prepared.regimes;
    let m = gp.state_dim();
    let x0: Vec<f64> = r.delta_pre.iter().copied().chain(std::iter::repeat_n(0.0, m)).collect();
    let opts = OdeOptions { rtol: 1e-13, atol: 1e-15, ..OdeOptions::default() };
    let field = SwingField::new(&r.on, gp);
    let h0 = hm.hamiltonian_flat(&x0);
    let ratio = |t: f64| (hm.hamiltonian_flat(integrate(&field, &x0, t, &opts).unwrap().last()) - h0) / (t * t);
    let fitted = (4.0 * ratio(0.005) - ratio(0.01)) / 3.0;

    // Closed form: the energy gain from the frozen dissipation mismatch plus
    // the transfer-conductance term evaluated with sin of the angle spread.
    let qc = quartic_coefficients(hm, &case.fom, gp, case.e_c);
    let full = gp.full_angles(&r.delta_pre);
    let n = full.len();
    let mut exact = 0.0;
    let mut angle_form = 0.0;
    for i in gp.modeled() {
        exact += 0.5 * (hm.pa[i] - case.fom.pa_on[i]) * qc.u[i];
    }
    angle_form += exact;
    for i in 0..n {
        for k in (i + 1)..n {
            let dp = r.post.pbar[(i, k)] - r.on.pbar[(i, k)];
            let uik = qc.u[i] - qc.u[k];
            exact += 0.5 * dp * uik * (full[i] - full[k]).sin();
            angle_form += 0.5 * dp * uik * (full[i] - full[k]);
        }
    }
    assert!((fitted - exact).abs() <= 1e-6 * exact.abs().max(1.0), "fit {fitted} vs {exact}");
    // The implemented β keeps the raw angle spread in place of its sine.
    assert!((qc.beta - angle_form).abs() <= 1e-12 * angle_form.abs().max(1.0));
}

#[test]
fn h_alt_starts_at_pre_fault_energy() {
    let case = wscc();
    let qc = quartic_coefficients(&case.prepared.post_model, &case.fom, &case.prepared.gp, case.e_c);
    assert_eq!(qc.h_alt(0.0), qc.h_pre);
    assert!((qc.h_pre + qc.gamma - case.e_c).abs() < 1e-12);
    let TauA::Time(t) = tau_a(&qc).unwrap() else { panic!("no root") };
    assert!((qc.h_alt(t) - case.e_c).abs() < 1e-9);
}

fn coefficients(alpha: f64, beta: f64, gamma: f64) -> QuarticCoefficients {
    QuarticCoefficients { alpha, beta, gamma, u: vec![], u_diff: DMatrix::zeros(0, 0), h_pre: 0.0 }
}

fn signed_log() -> impl Strategy<Value = f64> {
    (-6.0f64..3.0, any::<bool>()).prop_map(|(e, neg)| if neg { -(10f64.powf(e)) } else { 10f64.powf(e) })
}

proptest! {
    #[test]
    fn tau_a_is_the_smallest_positive_root(alpha in signed_log(), beta in signed_log(), gamma in 1e-4f64..10.0) {
        let f = |s: f64| alpha * s * s + beta * s - gamma;
        match tau_a(&coefficients(alpha, beta, gamma)).unwrap() {
            TauA::Time(t) => {
                let s = t * t;
                let scale = (alpha * s * s).abs() + (beta * s).abs() + gamma;
                prop_assert!(f(s).abs() <= 1e-10 * scale, "residual {}", f(s));
                // f(0) = −γ < 0, so no earlier root means f stays negative below s.
                for j in 1..200 {
                    prop_assert!(f(s * j as f64 / 200.0) < 0.0);
                }
            }
            TauA::NoRealRoot => {
                // Only a downward parabola can stay below zero for all s > 0.
                prop_assert!(alpha < 0.0);
                let vertex = -beta / (2.0 * alpha);
                prop_assert!(vertex <= 0.0 || f(vertex) < 0.0);
            }
        }
    }
}

#[test]
fn tau_a_rejects_nonpositive_margin() {
    assert!(tau_a(&coefficients(1.0, 1.0, 0.0)).is_err());
    assert!(tau_a(&coefficients(1.0, 1.0, -1.0)).is_err());
}
