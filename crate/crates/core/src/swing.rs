//! Classical swing equations over a reduced network.
//!
//! Angles are carried for every machine of the [`ReducedNetwork`]; when an
//! infinite bus is present its angle is pinned at zero and it is left out of
//! the integrated state, so the state vector is `[δ_modeled; ω_modeled]`.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

use crate::netmodel::{BusNetwork, ReducedNetwork};
use crate::ode::VectorField;

/// Per-machine parameters, indexed like the reduced network.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// Lumped inertia M_i = 2 H_i / ω₀.
    pub m: Vec<f64>,
    /// Mechanical input power P_mi (p.u.).
    pub pm: Vec<f64>,
    /// Internal voltage magnitudes |E_i|.
    pub e: Vec<f64>,
    pub infinite_index: Option<usize>,
}

impl GeneratorParams {
    /// Inertias from machine data; `frequency` overrides each machine's own
    /// base frequency when given. `pm` starts at zero (see [`dispatch_from_angles`]).
    pub fn from_network(net: &BusNetwork, frequency: Option<f64>) -> Self {
        let infinite = net.infinite_bus();
        let mut m = Vec::new();
        let mut e = Vec::new();
        let mut infinite_index = None;
        for (idx, (&id, g)) in net.generators.iter().enumerate() {
            let f = frequency.unwrap_or(g.frequency);
            m.push(2.0 * g.inertia / (2.0 * PI * f));
            e.push(g.emf);
            if Some(id) == infinite {
                infinite_index = Some(idx);
            }
        }
        let n = m.len();
        Self { m, pm: vec![0.0; n], e, infinite_index }
    }

    pub fn n_machines(&self) -> usize {
        self.m.len()
    }

    /// Machine indices that are part of the dynamic state.
    pub fn modeled(&self) -> Vec<usize> {
        (0..self.m.len()).filter(|&i| Some(i) != self.infinite_index).collect()
    }

    pub fn state_dim(&self) -> usize {
        self.modeled().len()
    }

    /// Expands modeled angles to all machines, the infinite bus at zero.
    pub fn full_angles(&self, delta: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(self.m.len());
        let mut it = delta.iter();
        for i in 0..self.m.len() {
            if Some(i) == self.infinite_index {
                full.push(0.0);
            } else {
                full.push(*it.next().expect("angle vector matches modeled machines"));
            }
        }
        full
    }

    /// Restricts a per-machine vector to the modeled machines.
    pub fn modeled_part(&self, full: &[f64]) -> Vec<f64> {
        self.modeled().into_iter().map(|i| full[i]).collect()
    }

    pub fn with_pm(mut self, pm: Vec<f64>) -> Self {
        self.pm = pm;
        self
    }
}

/// Rotor angles (rad) and speed deviations (rad/s) of the modeled machines.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SystemState {
    pub fn at_rest(delta: Vec<f64>) -> Self {
        let omega = vec![0.0; delta.len()];
        Self { delta, omega }
    }

    pub fn from_flat(x: &[f64]) -> Self {
        let n = x.len() / 2;
        Self { delta: x[..n].to_vec(), omega: x[n..].to_vec() }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.delta.iter().chain(&self.omega).copied().collect()
    }

    /// Angles wrapped to (−π, π].
    pub fn wrapped_delta(&self) -> Vec<f64> {
        self.delta.iter().map(|&d| wrap_angle(d)).collect()
    }
}

/// Wraps to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Power consumed by the conductive part of the reduced network at each
/// machine: `E_i² G_ii + Σ_k |E_i||E_k| G_ik cos(δ_i − δ_k)`.
pub fn conductive_power(red: &ReducedNetwork, full_delta: &[f64]) -> Vec<f64> {
    let n = red.n();
    (0..n)
        .map(|i| {
            let mut p = red.e[i] * red.e[i] * red.g[(i, i)];
            for k in (0..n).filter(|&k| k != i) {
                p += red.e[i] * red.e[k] * red.g[(i, k)] * (full_delta[i] - full_delta[k]).cos();
            }
            p
        })
        .collect()
}

/// Transfer part `Σ_k P̄_ik sin(δ_i − δ_k)`.
pub fn transfer_power(red: &ReducedNetwork, full_delta: &[f64]) -> Vec<f64> {
    let n = red.n();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&k| k != i)
                .map(|k| red.pbar[(i, k)] * (full_delta[i] - full_delta[k]).sin())
                .sum()
        })
        .collect()
}

/// Total electrical power leaving each machine.
pub fn electrical_power(red: &ReducedNetwork, full_delta: &[f64]) -> Vec<f64> {
    conductive_power(red, full_delta)
        .into_iter()
        .zip(transfer_power(red, full_delta))
        .map(|(a, b)| a + b)
        .collect()
}

/// Exact swing dynamics `(δ̇, ω̇) = (ω, (P_m − P_e(δ)) / M)`.
#[derive(Debug, Clone)]
pub struct SwingField<'a> {
    pub red: &'a ReducedNetwork,
    pub gp: &'a GeneratorParams,
    modeled: Vec<usize>,
}

impl<'a> SwingField<'a> {
    pub fn new(red: &'a ReducedNetwork, gp: &'a GeneratorParams) -> Self {
        Self { red, gp, modeled: gp.modeled() }
    }

    /// Accelerations of the modeled machines at the given modeled angles.
    pub fn accelerations(&self, delta: &[f64]) -> Vec<f64> {
        let full = self.gp.full_angles(delta);
        let pe = electrical_power(self.red, &full);
        self.modeled.iter().map(|&i| (self.gp.pm[i] - pe[i]) / self.gp.m[i]).collect()
    }
}

impl VectorField for SwingField<'_> {
    fn dim(&self) -> usize {
        2 * self.modeled.len()
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let n = self.modeled.len();
        dx[..n].copy_from_slice(&x[n..]);
        dx[n..].copy_from_slice(&self.accelerations(&x[..n]));
    }
}

/// Swing dynamics with the conductive load power frozen at its value at an
/// anchor angle set, which makes the system conservative.
#[derive(Debug, Clone)]
pub struct HamiltonianField<'a> {
    pub red: &'a ReducedNetwork,
    pub gp: &'a GeneratorParams,
    /// Constant dissipation P_ai for every machine.
    pub pa: Vec<f64>,
    modeled: Vec<usize>,
}

impl<'a> HamiltonianField<'a> {
    /// `anchor` holds the modeled angles at which P_a is frozen.
    pub fn new(red: &'a ReducedNetwork, gp: &'a GeneratorParams, anchor: &[f64]) -> Self {
        let pa = conductive_power(red, &gp.full_angles(anchor));
        Self::with_pa(red, gp, pa)
    }

    pub fn with_pa(red: &'a ReducedNetwork, gp: &'a GeneratorParams, pa: Vec<f64>) -> Self {
        Self { red, gp, pa, modeled: gp.modeled() }
    }

    pub fn accelerations(&self, delta: &[f64]) -> Vec<f64> {
        let full = self.gp.full_angles(delta);
        let pt = transfer_power(self.red, &full);
        self.modeled
            .iter()
            .map(|&i| (self.gp.pm[i] - self.pa[i] - pt[i]) / self.gp.m[i])
            .collect()
    }
}

impl VectorField for HamiltonianField<'_> {
    fn dim(&self) -> usize {
        2 * self.modeled.len()
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let n = self.modeled.len();
        dx[..n].copy_from_slice(&x[n..]);
        dx[n..].copy_from_slice(&self.accelerations(&x[..n]));
    }
}

pub fn rhs(red: &ReducedNetwork, gp: &GeneratorParams, x: &SystemState) -> SystemState {
    let f = SwingField::new(red, gp);
    SystemState { delta: x.omega.clone(), omega: f.accelerations(&x.delta) }
}

pub fn rhs_hamiltonian(red: &ReducedNetwork, gp: &GeneratorParams, anchor: &[f64], x: &SystemState) -> SystemState {
    let f = HamiltonianField::new(red, gp, anchor);
    SystemState { delta: x.omega.clone(), omega: f.accelerations(&x.delta) }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("pre-fault angles of machines {0} and {1} differ by at least π/2")]
    AngleSpread(usize, usize),
    #[error("machine {machine} would absorb power (P_m = {pm:.6})")]
    NotGenerating { machine: usize, pm: f64, all: Vec<f64> },
}

/// Mechanical powers that make `(δ_pre, 0)` stationary for the pre-fault network.
pub fn dispatch_from_angles(red_pre: &ReducedNetwork, gp: &GeneratorParams, delta_pre: &[f64]) -> Result<Vec<f64>, DispatchError> {
    let full = gp.full_angles(delta_pre);
    for i in 0..full.len() {
        for k in (i + 1)..full.len() {
            if (full[i] - full[k]).abs() >= FRAC_PI_2 {
                return Err(DispatchError::AngleSpread(i, k));
            }
        }
    }
    let pm = electrical_power(red_pre, &full);
    if let Some(i) = gp.modeled().into_iter().find(|&i| pm[i] <= 0.0) {
        return Err(DispatchError::NotGenerating { machine: i, pm: pm[i], all: pm });
    }
    Ok(pm)
}
