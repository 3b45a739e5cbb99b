//! TOML scenario files.
//!
//! Complex quantities are written as `[re, im]` pairs. Map keys that are bus
//! ids are strings in TOML (`5 = [1.261, -0.2634]`).

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;
use thiserror::Error;

use crate::faultstudy::FaultScenario;
use crate::netmodel::{Branch, Bus, BusId, BusKind, BusNetwork, GeneratorData, NetError};

pub const SCHEMA_VERSION: u32 = 1;

/// The WSCC 3-machine 9-bus system with generator 1 as infinite bus.
pub const WSCC9_TMIB: &str = include_str!("../data/wscc9_tmib.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("network: {0}")]
    Network(#[from] NetError),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field { field: field.into(), message: message.into() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    schema_version: u32,
    #[serde(default)]
    #[allow(dead_code)]
    name: Option<String>,
    /// Default machine frequency (Hz).
    frequency: f64,
    buses: Vec<BusRec>,
    branches: Vec<BranchRec>,
    #[serde(default)]
    shunt_loads: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    load_names: BTreeMap<String, BusId>,
    generators: BTreeMap<String, GenRec>,
    fault: FaultRec,
    prefault_angles_deg: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRec {
    id: BusId,
    kind: BusKind,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchRec {
    id: String,
    from: BusId,
    to: BusId,
    impedance: Option<[f64; 2]>,
    admittance: Option<[f64; 2]>,
    shunt_half: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenRec {
    emf: f64,
    xd_prime: f64,
    inertia: f64,
    frequency: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultRec {
    bus: BusId,
    clear_branch: String,
}

fn bus_key(field: &str, key: &str) -> Result<BusId, ScenarioError> {
    key.parse().map_err(|_| field_err(format!("{field}.{key}"), "key is not a bus id"))
}

fn cplx([re, im]: [f64; 2]) -> Complex64 {
    Complex64::new(re, im)
}

/// Parses a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<FaultScenario, ScenarioError> {
    let file: File = toml::from_str(text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Version(file.schema_version));
    }
    if !(file.frequency.is_finite() && file.frequency > 0.0) {
        return Err(field_err("frequency", "must be positive"));
    }

    let buses = file.buses.iter().map(|b| Bus { id: b.id, kind: b.kind }).collect();
    let mut branches = Vec::with_capacity(file.branches.len());
    for (idx, b) in file.branches.iter().enumerate() {
        let mut br = match (b.impedance, b.admittance) {
            (Some(z), None) => {
                if z == [0.0, 0.0] {
                    return Err(field_err(format!("branches[{idx}].impedance"), "zero impedance"));
                }
                Branch::from_impedance(b.id.clone(), b.from, b.to, cplx(z))
            }
            (None, Some(y)) => Branch { id: b.id.clone(), from: b.from, to: b.to, admittance: cplx(y), shunt_half: Complex64::new(0.0, 0.0) },
            _ => return Err(field_err(format!("branches[{idx}]"), "exactly one of impedance or admittance is required")),
        };
        if let Some(s) = b.shunt_half {
            br.shunt_half = cplx(s);
        }
        branches.push(br);
    }

    let mut shunt_loads = BTreeMap::new();
    for (k, y) in &file.shunt_loads {
        shunt_loads.insert(bus_key("shunt_loads", k)?, cplx(*y));
    }
    let mut generators = BTreeMap::new();
    for (k, g) in &file.generators {
        let data = GeneratorData { emf: g.emf, xd_prime: g.xd_prime, inertia: g.inertia, frequency: g.frequency.unwrap_or(file.frequency) };
        generators.insert(bus_key("generators", k)?, data);
    }
    let mut prefault_angles = BTreeMap::new();
    for (k, a) in &file.prefault_angles_deg {
        prefault_angles.insert(bus_key("prefault_angles_deg", k)?, a.to_radians());
    }

    let network = BusNetwork { buses, branches, shunt_loads, generators, grounded: Default::default() };
    network.validate()?;
    for (name, bus) in &file.load_names {
        if !network.shunt_loads.contains_key(bus) {
            return Err(field_err(format!("load_names.{name}"), format!("bus {bus} has no shunt load")));
        }
    }
    if network.bus(file.fault.bus).is_none() {
        return Err(field_err("fault.bus", format!("unknown bus {}", file.fault.bus)));
    }
    if network.branch(&file.fault.clear_branch).is_none() {
        return Err(field_err("fault.clear_branch", format!("unknown branch {:?}", file.fault.clear_branch)));
    }
    for id in network.generators.keys() {
        if !prefault_angles.contains_key(id) {
            return Err(field_err("prefault_angles_deg", format!("missing generator bus {id}")));
        }
    }

    Ok(FaultScenario {
        network,
        fault_bus: file.fault.bus,
        clear_branch: file.fault.clear_branch,
        prefault_angles,
        frequency: None,
        load_names: file.load_names,
    })
}

pub fn load_scenario(path: &Path) -> Result<FaultScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

/// The bundled WSCC 9-bus TMIB scenario.
pub fn wscc9_tmib() -> FaultScenario {
    parse_scenario(WSCC9_TMIB).expect("bundled scenario is valid")
}
