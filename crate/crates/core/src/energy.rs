//! Transient energy functions and the two energy-based clearing-time estimates.
//!
//! The post-fault system is made conservative by freezing the conductive load
//! power at the post-fault stable equilibrium (`P_a = P(δ^s)`). Its Hamiltonian
//! is kinetic plus potential energy:
//!
//! ```text
//! E_pot(δ) = −Σ_i (P_mi − P_ai) δ_i − Σ_{i<k} P̄_ik cos(δ_i − δ_k)
//! ```
//!
//! [`tau_h`] integrates the fault-on trajectory until this energy reaches the
//! critical energy. [`tau_a`] replaces the trajectory by constant initial
//! accelerations and the cosines by their quadratic expansion, which turns the
//! same level-crossing condition into `α t⁴ + β t² − γ = 0`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::netmodel::ReducedNetwork;
use crate::ode::{integrate_observed, Control, OdeError, OdeOptions};
use crate::swing::{conductive_power, electrical_power, GeneratorParams, HamiltonianField, SwingField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("inadmissible scenario: energy margin {0} is not positive")]
    NonPositiveMargin(f64),
    #[error("fault-on integration failed before the critical energy was reached: {0}")]
    Integration(#[from] OdeError),
}

/// Post-fault conservative model anchored at the post-fault SEP.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianModel {
    pub red: ReducedNetwork,
    pub gp: GeneratorParams,
    /// Constant dissipation P_ai = P_i(δ^s), per machine.
    pub pa: Vec<f64>,
    /// Modeled angles δ^s the dissipation is frozen at.
    pub anchor: Vec<f64>,
}

impl HamiltonianModel {
    pub fn new(red: ReducedNetwork, gp: GeneratorParams, anchor: Vec<f64>) -> Self {
        let pa = conductive_power(&red, &gp.full_angles(&anchor));
        Self { red, gp, pa, anchor }
    }

    pub fn field(&self) -> HamiltonianField<'_> {
        HamiltonianField::with_pa(&self.red, &self.gp, self.pa.clone())
    }

    pub fn potential(&self, delta: &[f64]) -> f64 {
        let full = self.gp.full_angles(delta);
        let n = full.len();
        let mut e = 0.0;
        for i in self.gp.modeled() {
            e -= (self.gp.pm[i] - self.pa[i]) * full[i];
        }
        for i in 0..n {
            for k in (i + 1)..n {
                e -= self.red.pbar[(i, k)] * (full[i] - full[k]).cos();
            }
        }
        e
    }

    /// ∂E_pot/∂δ over the modeled machines; equals `−M_i Â_i(δ)`.
    pub fn potential_gradient(&self, delta: &[f64]) -> Vec<f64> {
        let full = self.gp.full_angles(delta);
        let n = full.len();
        self.gp
            .modeled()
            .into_iter()
            .map(|i| {
                let transfer: f64 = (0..n)
                    .filter(|&k| k != i)
                    .map(|k| self.red.pbar[(i, k)] * (full[i] - full[k]).sin())
                    .sum();
                -(self.gp.pm[i] - self.pa[i]) + transfer
            })
            .collect()
    }

    /// Hessian of E_pot over the modeled machines.
    pub fn potential_hessian(&self, delta: &[f64]) -> DMatrix<f64> {
        let full = self.gp.full_angles(delta);
        let n = full.len();
        let modeled = self.gp.modeled();
        let m = modeled.len();
        DMatrix::from_fn(m, m, |a, b| {
            let i = modeled[a];
            if a == b {
                (0..n)
                    .filter(|&k| k != i)
                    .map(|k| self.red.pbar[(i, k)] * (full[i] - full[k]).cos())
                    .sum()
            } else {
                let k = modeled[b];
                -self.red.pbar[(i, k)] * (full[i] - full[k]).cos()
            }
        })
    }

    pub fn hamiltonian(&self, delta: &[f64], omega: &[f64]) -> f64 {
        kinetic(&self.gp, omega) + self.potential(delta)
    }

    /// Hamiltonian of a flat `[δ; ω]` state.
    pub fn hamiltonian_flat(&self, x: &[f64]) -> f64 {
        let n = x.len() / 2;
        self.hamiltonian(&x[..n], &x[n..])
    }
}

/// Fault-on model with the load power frozen at the pre-fault operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultOnHamiltonianModel {
    pub red_on: ReducedNetwork,
    /// P_ai^on = P_i^on(δ_pre), per machine.
    pub pa_on: Vec<f64>,
    /// Pre-fault SEP angles (modeled machines).
    pub anchor: Vec<f64>,
}

impl FaultOnHamiltonianModel {
    pub fn new(red_on: ReducedNetwork, gp: &GeneratorParams, delta_pre: Vec<f64>) -> Self {
        let pa_on = conductive_power(&red_on, &gp.full_angles(&delta_pre));
        Self { red_on, pa_on, anchor: delta_pre }
    }
}

/// `Σ ½ M_i ω_i²` over the modeled machines.
pub fn kinetic(gp: &GeneratorParams, omega: &[f64]) -> f64 {
    gp.modeled().into_iter().zip(omega).map(|(i, w)| 0.5 * gp.m[i] * w * w).sum()
}

/// `E_c − H(x_pre)`.
pub fn energy_margin(e_c: f64, hm: &HamiltonianModel, delta_pre: &[f64]) -> f64 {
    e_c - hm.potential(delta_pre)
}

/// Rotor accelerations at the start of the fault, per machine (zero for the
/// infinite bus).
pub fn initial_accelerations(fom: &FaultOnHamiltonianModel, gp: &GeneratorParams) -> Vec<f64> {
    let pe = electrical_power(&fom.red_on, &gp.full_angles(&fom.anchor));
    (0..gp.n_machines())
        .map(|i| if Some(i) == gp.infinite_index { 0.0 } else { (gp.pm[i] - pe[i]) / gp.m[i] })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuarticCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Initial accelerations u_i per machine (rad/s²).
    pub u: Vec<f64>,
    /// Pairwise differences u_ik = u_i − u_k.
    pub u_diff: DMatrix<f64>,
    /// H(x_pre), the value of h_alt at t = 0.
    pub h_pre: f64,
}

impl QuarticCoefficients {
    /// `h_alt(t) = H(x_pre) + β t² + α t⁴`.
    pub fn h_alt(&self, t: f64) -> f64 {
        let t2 = t * t;
        self.h_pre + self.beta * t2 + self.alpha * t2 * t2
    }
}

pub fn quartic_coefficients(
    hm: &HamiltonianModel,
    fom: &FaultOnHamiltonianModel,
    gp: &GeneratorParams,
    e_c: f64,
) -> QuarticCoefficients {
    let u = initial_accelerations(fom, gp);
    let full_pre = gp.full_angles(&fom.anchor);
    let n = u.len();
    let u_diff = DMatrix::from_fn(n, n, |i, k| u[i] - u[k]);

    let mut alpha = 0.0;
    let mut beta = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            let dp = hm.red.pbar[(i, k)] - fom.red_on.pbar[(i, k)];
            let uik = u_diff[(i, k)];
            alpha += 0.125 * dp * uik * uik;
            beta += 0.5 * dp * uik * (full_pre[i] - full_pre[k]);
        }
    }
    for i in gp.modeled() {
        beta += 0.5 * (hm.pa[i] - fom.pa_on[i]) * u[i];
    }
    let h_pre = hm.potential(&fom.anchor);
    QuarticCoefficients { alpha, beta, gamma: e_c - h_pre, u, u_diff, h_pre }
}

/// Below this |α| the quartic is treated as the quadratic `β t² = γ`.
pub const ALPHA_DEGENERATE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauA {
    Time(f64),
    NoRealRoot,
}

impl TauA {
    pub fn time(self) -> Option<f64> {
        match self {
            TauA::Time(t) => Some(t),
            TauA::NoRealRoot => None,
        }
    }
}

/// Smallest positive real root of `α t⁴ + β t² − γ = 0`.
pub fn tau_a(qc: &QuarticCoefficients) -> Result<TauA, EnergyError> {
    let (a, b, g) = (qc.alpha, qc.beta, qc.gamma);
    if !(g > 0.0) {
        return Err(EnergyError::NonPositiveMargin(g));
    }
    if a.abs() < ALPHA_DEGENERATE {
        return Ok(if b > 0.0 { TauA::Time((g / b).sqrt()) } else { TauA::NoRealRoot });
    }
    let disc = b * b + 4.0 * a * g;
    if disc < 0.0 {
        return Ok(TauA::NoRealRoot);
    }
    // Cancellation-free pair of roots in s = t².
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let q = if q == 0.0 { -0.5 * disc.sqrt() } else { q };
    let roots = [q / a, -g / q];
    let smallest = roots.into_iter().filter(|s| s.is_finite() && *s > 0.0).fold(f64::INFINITY, f64::min);
    Ok(if smallest.is_finite() { TauA::Time(smallest.sqrt()) } else { TauA::NoRealRoot })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauH {
    Crossing(f64),
    NoCrossing,
}

impl TauH {
    pub fn time(self) -> Option<f64> {
        match self {
            TauH::Crossing(t) => Some(t),
            TauH::NoCrossing => None,
        }
    }
}

/// Which field drives the fault-on trajectory in [`tau_h`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultOnDynamics {
    /// Full swing equations of the faulted network.
    #[default]
    Exact,
    /// Conservative fault-on field with P_a^on frozen at the pre-fault point.
    Hamiltonian,
}

#[derive(Debug, Clone, Copy)]
pub struct TauHOptions {
    pub horizon: f64,
    pub time_tol: f64,
    pub dynamics: FaultOnDynamics,
    pub ode: OdeOptions,
}

impl Default for TauHOptions {
    fn default() -> Self {
        Self { horizon: 2.0, time_tol: 1e-6, dynamics: FaultOnDynamics::Exact, ode: OdeOptions::default().with_h_max(0.01) }
    }
}

/// First time the post-fault energy of the fault-on trajectory reaches `e_c`.
pub fn tau_h(
    fom: &FaultOnHamiltonianModel,
    gp: &GeneratorParams,
    hm: &HamiltonianModel,
    e_c: f64,
    opts: &TauHOptions,
) -> Result<TauH, EnergyError> {
    let n = fom.anchor.len();
    let mut x0 = fom.anchor.clone();
    x0.extend(std::iter::repeat_n(0.0, n));
    if hm.hamiltonian_flat(&x0) >= e_c {
        return Ok(TauH::Crossing(0.0));
    }

    let mut crossed = false;
    let observer = |_t: f64, x: &[f64]| {
        if hm.hamiltonian_flat(x) >= e_c {
            crossed = true;
            Control::Stop
        } else {
            Control::Continue
        }
    };
    let traj = match opts.dynamics {
        FaultOnDynamics::Exact => integrate_observed(&SwingField::new(&fom.red_on, gp), &x0, opts.horizon, &opts.ode, observer)?,
        FaultOnDynamics::Hamiltonian => {
            let field = HamiltonianField::with_pa(&fom.red_on, gp, fom.pa_on.clone());
            integrate_observed(&field, &x0, opts.horizon, &opts.ode, observer)?
        }
    };
    if !crossed {
        return Ok(TauH::NoCrossing);
    }
    let j = traj.len() - 1;
    let (mut lo, mut hi) = (traj.t[j - 1], traj.t[j]);
    while hi - lo > opts.time_tol {
        let mid = 0.5 * (lo + hi);
        if hm.hamiltonian_flat(&traj.interpolate(mid)) >= e_c {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(TauH::Crossing(0.5 * (lo + hi)))
}
