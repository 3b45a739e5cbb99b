//! Parameter sweeps over one part of a shunt load.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::energy::{HamiltonianModel, TauA, TauH};
use crate::equilibria::{continue_branch, wrapped_distance, Branch, ContinuationOptions};
use crate::faultstudy::{run_fault_study, FaultScenario, PreparedStudy, StudyOptions, TrueCct};
use crate::netmodel::BusId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("unrecognised parameter path {0:?} (expected G_<load> or B_<load>)")]
    BadPath(String),
    #[error("no shunt load named or at bus {0:?}")]
    UnknownLoad(String),
    #[error("invalid range: need lo < hi and step > 0 (got {lo}:{hi}:{step})")]
    BadRange { lo: f64, hi: f64, step: f64 },
    #[error("no admissible rows")]
    NoAdmissible,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadPart {
    Conductance,
    Susceptance,
}

/// A real or imaginary part of one shunt load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamPath {
    pub bus: BusId,
    pub part: LoadPart,
    /// Name used in reports, e.g. `G_C`.
    pub label: String,
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl ParamPath {
    /// Parses `G_<load>` or `B_<load>` (also `G:<load>`), where `<load>` is a
    /// load name from the scenario or a bus id.
    pub fn parse(sc: &FaultScenario, s: &str) -> Result<Self, SweepError> {
        let bad = || SweepError::BadPath(s.to_string());
        let mut chars = s.chars();
        let part = match chars.next() {
            Some('G' | 'g') => LoadPart::Conductance,
            Some('B' | 'b') => LoadPart::Susceptance,
            _ => return Err(bad()),
        };
        let rest = chars.as_str();
        let name = rest.strip_prefix('_').or_else(|| rest.strip_prefix(':')).ok_or_else(bad)?;
        let bus = match sc.load_names.get(name) {
            Some(&b) => b,
            None => name.parse::<BusId>().map_err(|_| SweepError::UnknownLoad(name.to_string()))?,
        };
        if !sc.network.shunt_loads.contains_key(&bus) {
            return Err(SweepError::UnknownLoad(name.to_string()));
        }
        let tag = if matches!(part, LoadPart::Conductance) { 'G' } else { 'B' };
        Ok(Self { bus, part, label: format!("{tag}_{name}") })
    }

    /// The scenario with this parameter set to `value`.
    pub fn apply(&self, sc: &FaultScenario, value: f64) -> FaultScenario {
        let mut y = sc.network.shunt_loads[&self.bus];
        match self.part {
            LoadPart::Conductance => y.re = value,
            LoadPart::Susceptance => y.im = value,
        }
        sc.with_load(self.bus, y).expect("path refers to an existing load")
    }

    pub fn current(&self, sc: &FaultScenario) -> f64 {
        let y = sc.network.shunt_loads[&self.bus];
        match self.part {
            LoadPart::Conductance => y.re,
            LoadPart::Susceptance => y.im,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: ParamPath,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl SweepSpec {
    pub fn new(param: ParamPath, lo: f64, hi: f64, step: f64) -> Result<Self, SweepError> {
        if !(lo < hi && step > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(SweepError::BadRange { lo, hi, step });
        }
        Ok(Self { param, lo, hi, step })
    }

    /// Grid values `lo + j·step` up to `hi`, rounded to 10 decimals so that
    /// they print as their decimal literal.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|j| ((self.lo + j as f64 * self.step) * 1e10).round() / 1e10).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    /// True CCT; infinite when unbounded.
    pub tau: Option<f64>,
    pub tau_h: Option<f64>,
    pub tau_a: Option<f64>,
    pub delta_e: Option<f64>,
    pub e_c: Option<f64>,
    pub admissible: bool,
    /// Position of the closest UEP.
    pub closest_uep: Option<Vec<f64>>,
    /// Short codes explaining missing or flagged values.
    pub verdicts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn any_admissible(&self) -> bool {
        self.rows.iter().any(|r| r.admissible)
    }
}

/// One sweep point.
pub fn sweep_point(sc: &FaultScenario, path: &ParamPath, value: f64, opts: &StudyOptions) -> SweepRow {
    let mut row = SweepRow {
        param: value,
        tau: None,
        tau_h: None,
        tau_a: None,
        delta_e: None,
        e_c: None,
        admissible: false,
        closest_uep: None,
        verdicts: Vec::new(),
    };
    let result = match run_fault_study(&path.apply(sc, value), opts) {
        Ok(r) => r,
        Err(_) => {
            row.verdicts.push("network_error".into());
            return row;
        }
    };
    row.admissible = result.admissible;
    row.delta_e = result.delta_e;
    row.e_c = result.e_c();
    row.closest_uep = result.critical.as_ref().map(|c| c.closest_uep.delta.clone());
    if let Some(reason) = &result.inadmissible {
        row.verdicts.push(reason.code().into());
    }
    if !result.islanded.is_empty() {
        row.verdicts.push("islanded".into());
    }
    if let Some(t) = result.tau {
        row.tau = Some(t.seconds());
        match t {
            TrueCct::Unbounded => row.verdicts.push("tau_unbounded".into()),
            TrueCct::UnstableAtZero => row.verdicts.push("tau_unstable_at_zero".into()),
            TrueCct::Time { bracket_verified: Some(false), .. } => row.verdicts.push("tau_nonmonotone".into()),
            TrueCct::Time { .. } => {}
        }
    }
    match result.tau_h {
        Some(TauH::Crossing(t)) => row.tau_h = Some(t),
        Some(TauH::NoCrossing) => row.verdicts.push("tauH_no_crossing".into()),
        None => {}
    }
    match result.tau_a {
        Some(TauA::Time(t)) => row.tau_a = Some(t),
        Some(TauA::NoRealRoot) => row.verdicts.push("tauA_no_root".into()),
        None => {}
    }
    row
}

/// Evaluates every grid point of `spec`. `jobs = 1` runs serially, `0` uses
/// the default worker pool, larger values a dedicated pool of that size. Row
/// order and content do not depend on `jobs`.
pub fn run_sweep(sc: &FaultScenario, spec: &SweepSpec, opts: &StudyOptions, jobs: usize) -> Result<SweepTable, SweepError> {
    let values = spec.values();
    let eval = |&v: &f64| sweep_point(sc, &spec.param, v, opts);
    let rows = match jobs {
        1 => values.iter().map(eval).collect(),
        0 => values.par_iter().map(eval).collect(),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?
            .install(|| values.par_iter().map(eval).collect()),
    };
    Ok(SweepTable { param: spec.param.label.clone(), rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Tau,
    TauH,
    TauA,
    DeltaE,
}

impl Metric {
    pub fn of(self, row: &SweepRow) -> Option<f64> {
        match self {
            Metric::Tau => row.tau,
            Metric::TauH => row.tau_h,
            Metric::TauA => row.tau_a,
            Metric::DeltaE => row.delta_e,
        }
    }
}

/// Argmax of `metric` over admissible rows; ties go to the smaller parameter.
pub fn find_optimum(rows: &[SweepRow], metric: Metric) -> Result<(f64, f64), SweepError> {
    let mut best: Option<(f64, f64)> = None;
    for row in rows.iter().filter(|r| r.admissible) {
        let Some(v) = metric.of(row).filter(|v| !v.is_nan()) else { continue };
        best = match best {
            Some((p, b)) if b > v || (b == v && p <= row.param) => Some((p, b)),
            _ => Some((row.param, v)),
        };
    }
    best.ok_or(SweepError::NoAdmissible)
}

/// Parameter midpoints where the closest UEP jumps between consecutive
/// admissible rows by more than `jump` rad.
pub fn closest_uep_switches(rows: &[SweepRow], jump: f64) -> Vec<f64> {
    let located: Vec<(f64, &Vec<f64>)> = rows
        .iter()
        .filter(|r| r.admissible)
        .filter_map(|r| r.closest_uep.as_ref().map(|u| (r.param, u)))
        .collect();
    located
        .windows(2)
        .filter(|w| wrapped_distance(w[0].1, w[1].1) > jump)
        .map(|w| 0.5 * (w[0].0 + w[1].0))
        .collect()
}

/// Post-fault conservative model of the scenario with the parameter at `value`.
pub fn post_fault_model(sc: &FaultScenario, path: &ParamPath, value: f64, opts: &StudyOptions) -> Option<HamiltonianModel> {
    let regimes = path.apply(sc, value).regimes().ok()?;
    PreparedStudy::new(regimes, *opts).ok().map(|p| p.post_model)
}

/// Equilibrium branches of the post-fault system over `[lo, hi]`.
pub fn run_branches(sc: &FaultScenario, path: &ParamPath, lo: f64, hi: f64, copts: &ContinuationOptions, opts: &StudyOptions) -> Vec<Branch> {
    continue_branch(|p| post_fault_model(sc, path, p, opts), lo, hi, copts)
}

/// Distinct fold locations across `branches`, merged within `tol`.
pub fn fold_locations(branches: &[Branch], tol: f64) -> Vec<f64> {
    let mut all: Vec<f64> = branches.iter().flat_map(|b| b.folds.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for f in all {
        if out.last().is_none_or(|l| f - l > tol) {
            out.push(f);
        }
    }
    out
}
