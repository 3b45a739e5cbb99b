//! Three-regime fault study: dispatch, energy boundary and the three CCTs.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::energy::{quartic_coefficients, tau_a, tau_h, FaultOnHamiltonianModel, HamiltonianModel, QuarticCoefficients, TauA, TauH, TauHOptions};
use crate::equilibria::{closest_uep, enumerate_equilibria, find_sep, CriticalEnergy, EnumerateOptions, EquilibriumError};
use crate::netmodel::{apply_clearing, apply_fault, islanded_generators, reduce_network, set_load, BusId, BusNetwork, NetError, ReducedNetwork};
use crate::ode::{integrate, integrate_observed, Control, OdeOptions};
use crate::swing::{dispatch_from_angles, DispatchError, GeneratorParams, SwingField};

#[derive(Debug, Clone, PartialEq)]
pub struct FaultScenario {
    pub network: BusNetwork,
    pub fault_bus: BusId,
    /// Branch switched out to clear the fault.
    pub clear_branch: String,
    /// Internal-voltage angles (rad) of the pre-fault operating point, per generator bus.
    pub prefault_angles: BTreeMap<BusId, f64>,
    /// Overrides the machines' own frequency when set (Hz).
    pub frequency: Option<f64>,
    /// Short names for shunt loads, used by sweep parameter paths.
    pub load_names: BTreeMap<String, BusId>,
}

impl FaultScenario {
    /// Copy of the scenario with the shunt load at `bus` replaced.
    pub fn with_load(&self, bus: BusId, y: Complex64) -> Result<Self, NetError> {
        Ok(Self { network: set_load(&self.network, bus, y)?, ..self.clone() })
    }

    pub fn regimes(&self) -> Result<Regimes, StudyError> {
        let tag = |regime| move |source| StudyError::Network { regime, source };
        self.network.validate().map_err(tag(Regime::PreFault))?;
        let pre = reduce_network(&self.network).map_err(tag(Regime::PreFault))?;
        let faulted = apply_fault(&self.network, self.fault_bus).map_err(tag(Regime::FaultOn))?;
        let on = reduce_network(&faulted).map_err(tag(Regime::FaultOn))?;
        let cleared = apply_clearing(&self.network, &self.clear_branch).map_err(tag(Regime::PostFault))?;
        let post = reduce_network(&cleared.network).map_err(tag(Regime::PostFault))?;
        let islanded = islanded_generators(&cleared.network);

        let gp = GeneratorParams::from_network(&self.network, self.frequency);
        let angle = |id: BusId| self.prefault_angles.get(&id).copied().ok_or(StudyError::MissingAngle(id));
        let reference = match self.network.infinite_bus() {
            Some(id) => angle(id)?,
            None => 0.0,
        };
        let full = pre.machines.iter().map(|&id| angle(id).map(|a| a - reference)).collect::<Result<Vec<_>, _>>()?;
        let delta_pre = gp.modeled_part(&full);
        Ok(Regimes { pre, on, post, gp, delta_pre, islanded })
    }
}

/// The three reduced networks of a scenario and its pre-fault state.
#[derive(Debug, Clone, PartialEq)]
pub struct Regimes {
    pub pre: ReducedNetwork,
    pub on: ReducedNetwork,
    pub post: ReducedNetwork,
    /// Machine parameters; `pm` is zero until dispatched.
    pub gp: GeneratorParams,
    /// Pre-fault angles of the modeled machines, relative to the infinite bus.
    pub delta_pre: Vec<f64>,
    /// Generators left without a path to the rest of the network after clearing.
    pub islanded: Vec<BusId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    PreFault,
    FaultOn,
    PostFault,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::PreFault => "pre-fault",
            Regime::FaultOn => "fault-on",
            Regime::PostFault => "post-fault",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("{regime} network")]
    Network { regime: Regime, source: NetError },
    #[error("no pre-fault angle for generator bus {0}")]
    MissingAngle(BusId),
}

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    pub ode: OdeOptions,
    /// Upper end of the clearing-time bisection (s).
    pub horizon: f64,
    /// Post-fault observation window of the first-swing test (s).
    pub post_window: f64,
    /// Width of the final bisection bracket (s).
    pub resolution: f64,
    /// Largest tolerated pairwise angle excursion from the post-fault SEP (rad).
    pub divergence: f64,
    /// Re-simulate at τ ± 2·resolution to check the bisection's monotonicity assumption.
    pub verify_bracket: bool,
    pub tau_h: TauHOptions,
    pub enumerate: EnumerateOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default().with_h_max(0.01),
            horizon: 1.0,
            post_window: 3.0,
            resolution: 1e-4,
            divergence: PI,
            verify_bracket: true,
            tau_h: TauHOptions::default(),
            enumerate: EnumerateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inadmissible {
    /// Pre-fault dispatch has a machine absorbing power or an angle spread ≥ π/2.
    Dispatch(DispatchError),
    NoPostFaultSep(EquilibriumError),
    NoEnergyBoundary,
    NegativeMargin(f64),
}

impl Inadmissible {
    pub fn code(&self) -> &'static str {
        match self {
            Inadmissible::Dispatch(DispatchError::NotGenerating { .. }) => "pm_nonpositive",
            Inadmissible::Dispatch(DispatchError::AngleSpread(..)) => "angle_spread",
            Inadmissible::NoPostFaultSep(_) => "no_sep",
            Inadmissible::NoEnergyBoundary => "no_uep",
            Inadmissible::NegativeMargin(_) => "dE_negative",
        }
    }
}

/// Outcome of the clearing-time bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrueCct {
    Time {
        value: f64,
        /// Result of the τ ± 2·resolution re-check, when it was run.
        bracket_verified: Option<bool>,
    },
    /// Stable at the bisection horizon.
    Unbounded,
    /// Unstable even for an instantaneous clearing; reported as τ = 0.
    UnstableAtZero,
}

impl TrueCct {
    /// Clearing time in seconds (infinite when unbounded).
    pub fn seconds(self) -> f64 {
        match self {
            TrueCct::Time { value, .. } => value,
            TrueCct::Unbounded => f64::INFINITY,
            TrueCct::UnstableAtZero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultStudyResult {
    pub admissible: bool,
    pub inadmissible: Option<Inadmissible>,
    /// Dispatched mechanical power per machine (empty if dispatch failed).
    pub pm: Vec<f64>,
    pub sep: Option<Vec<f64>>,
    pub critical: Option<CriticalEnergy>,
    pub delta_e: Option<f64>,
    pub quartic: Option<QuarticCoefficients>,
    pub tau: Option<TrueCct>,
    pub tau_h: Option<TauH>,
    pub tau_a: Option<TauA>,
    pub islanded: Vec<BusId>,
}

impl FaultStudyResult {
    fn rejected(reason: Inadmissible, islanded: Vec<BusId>) -> Self {
        Self {
            admissible: false,
            inadmissible: Some(reason),
            pm: Vec::new(),
            sep: None,
            critical: None,
            delta_e: None,
            quartic: None,
            tau: None,
            tau_h: None,
            tau_a: None,
            islanded,
        }
    }

    pub fn e_c(&self) -> Option<f64> {
        self.critical.as_ref().map(|c| c.e_c)
    }
}

/// Dispatched scenario with its post-fault SEP, ready for simulation.
#[derive(Debug, Clone)]
pub struct PreparedStudy {
    pub regimes: Regimes,
    /// Generator parameters with dispatched P_m.
    pub gp: GeneratorParams,
    pub post_model: HamiltonianModel,
    pub options: StudyOptions,
}

impl PreparedStudy {
    /// Dispatches P_m and locates the post-fault SEP.
    pub fn new(regimes: Regimes, options: StudyOptions) -> Result<Self, Inadmissible> {
        let pm = dispatch_from_angles(&regimes.pre, &regimes.gp, &regimes.delta_pre).map_err(Inadmissible::Dispatch)?;
        let gp = regimes.gp.clone().with_pm(pm);
        let (_, post_model) = find_sep(&regimes.post, &gp, &regimes.delta_pre).map_err(Inadmissible::NoPostFaultSep)?;
        Ok(Self { regimes, gp, post_model, options })
    }

    pub fn sep(&self) -> &[f64] {
        &self.post_model.anchor
    }

    fn x_pre(&self) -> Vec<f64> {
        let mut x = self.regimes.delta_pre.clone();
        x.extend(std::iter::repeat_n(0.0, x.len()));
        x
    }

    /// First-swing verdict for a fault cleared after `t_cl` seconds.
    pub fn first_swing_stable(&self, t_cl: f64) -> bool {
        let opts = &self.options;
        let mut x = self.x_pre();
        if t_cl > 0.0 {
            match integrate(&SwingField::new(&self.regimes.on, &self.gp), &x, t_cl, &opts.ode) {
                Ok(traj) => x = traj.last().to_vec(),
                Err(_) => return false,
            }
        }
        let n = self.gp.state_dim();
        let sep_full = self.gp.full_angles(self.sep());
        let n_all = sep_full.len();
        let pairs: Vec<(usize, usize)> = (0..n_all).flat_map(|i| ((i + 1)..n_all).map(move |k| (i, k))).collect();

        // Per pair: previous |deviation|, whether it has been rising, and whether
        // a local maximum followed by a decrease has been seen.
        let mut prev: Vec<Option<f64>> = vec![None; pairs.len()];
        let mut rising = vec![false; pairs.len()];
        let mut returned = vec![false; pairs.len()];
        let mut diverged = false;
        let observer = |_t: f64, state: &[f64]| {
            let full = self.gp.full_angles(&state[..n]);
            for (p, &(i, k)) in pairs.iter().enumerate() {
                let dev = ((full[i] - full[k]) - (sep_full[i] - sep_full[k])).abs();
                if dev > opts.divergence || !dev.is_finite() {
                    diverged = true;
                    return Control::Stop;
                }
                if let Some(last) = prev[p] {
                    if dev > last {
                        rising[p] = true;
                    } else if dev < last && rising[p] {
                        returned[p] = true;
                    }
                }
                prev[p] = Some(dev);
            }
            Control::Continue
        };
        let post = SwingField::new(&self.regimes.post, &self.gp);
        if integrate_observed(&post, &x, opts.post_window, &opts.ode, observer).is_err() {
            return false;
        }
        !diverged && returned.iter().all(|&r| r)
    }

    /// Bisection for the longest first-swing-stable clearing time.
    pub fn true_cct(&self) -> TrueCct {
        let opts = &self.options;
        if !self.first_swing_stable(0.0) {
            return TrueCct::UnstableAtZero;
        }
        if self.first_swing_stable(opts.horizon) {
            return TrueCct::Unbounded;
        }
        let (mut lo, mut hi) = (0.0, opts.horizon);
        while hi - lo > opts.resolution {
            let mid = 0.5 * (lo + hi);
            if self.first_swing_stable(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let bracket_verified = opts.verify_bracket.then(|| {
            let below = lo - 2.0 * opts.resolution;
            (below < 0.0 || self.first_swing_stable(below)) && !self.first_swing_stable(lo + 2.0 * opts.resolution)
        });
        TrueCct::Time { value: lo, bracket_verified }
    }
}

/// First-swing verdict for `sc` cleared after `t_cl`.
pub fn first_swing_stable(sc: &FaultScenario, t_cl: f64, opts: &StudyOptions) -> Result<Option<bool>, StudyError> {
    let regimes = sc.regimes()?;
    Ok(PreparedStudy::new(regimes, *opts).ok().map(|p| p.first_swing_stable(t_cl)))
}

/// True CCT of `sc`, or `None` when the scenario cannot be dispatched or has no SEP.
pub fn true_cct(sc: &FaultScenario, opts: &StudyOptions) -> Result<Option<TrueCct>, StudyError> {
    let regimes = sc.regimes()?;
    Ok(PreparedStudy::new(regimes, *opts).ok().map(|p| p.true_cct()))
}

pub fn run_fault_study(sc: &FaultScenario, opts: &StudyOptions) -> Result<FaultStudyResult, StudyError> {
    let regimes = sc.regimes()?;
    let islanded = regimes.islanded.clone();
    let prepared = match PreparedStudy::new(regimes, *opts) {
        Ok(p) => p,
        Err(reason) => return Ok(FaultStudyResult::rejected(reason, islanded)),
    };
    let pm = prepared.gp.pm.clone();
    let hm = &prepared.post_model;
    let sep = Some(hm.anchor.clone());

    let equilibria = enumerate_equilibria(hm, &opts.enumerate);
    let critical = match closest_uep(&equilibria) {
        Ok(c) => c,
        Err(_) => {
            let mut r = FaultStudyResult::rejected(Inadmissible::NoEnergyBoundary, islanded);
            r.pm = pm;
            r.sep = sep;
            return Ok(r);
        }
    };
    let delta_e = critical.e_c - hm.potential(&prepared.regimes.delta_pre);
    if delta_e < 0.0 {
        let mut r = FaultStudyResult::rejected(Inadmissible::NegativeMargin(delta_e), islanded);
        r.pm = pm;
        r.sep = sep;
        r.delta_e = Some(delta_e);
        r.critical = Some(critical);
        return Ok(r);
    }

    let fom = FaultOnHamiltonianModel::new(prepared.regimes.on.clone(), &prepared.gp, prepared.regimes.delta_pre.clone());
    let qc = quartic_coefficients(hm, &fom, &prepared.gp, critical.e_c);
    let ta = if delta_e == 0.0 { TauA::Time(0.0) } else { tau_a(&qc).expect("margin is positive") };
    // An integration failure means the fault-on trajectory blew up before
    // reaching the boundary, which only happens for degenerate networks.
    let th = tau_h(&fom, &prepared.gp, hm, critical.e_c, &opts.tau_h).unwrap_or(TauH::NoCrossing);
    let tau = prepared.true_cct();

    Ok(FaultStudyResult {
        admissible: true,
        inadmissible: None,
        pm,
        sep,
        critical: Some(critical),
        delta_e: Some(delta_e),
        quartic: Some(qc),
        tau: Some(tau),
        tau_h: Some(th),
        tau_a: Some(ta),
        islanded,
    })
}
