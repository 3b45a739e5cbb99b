//! Bus admittance assembly, fault/clearing topology edits and Kron reduction.
//!
//! Generators are modelled as constant EMFs behind their transient reactance.
//! [`build_ybus`] appends one internal node per generator behind `1/(j x'_d)`;
//! [`reduce_network`] then eliminates every terminal and load bus so that only
//! the internal nodes remain. A bolted three-phase fault is an exact zero-voltage
//! node, realised by deleting the faulted bus's row and column.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Generator,
    Infinite,
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
}

/// A series element between two buses with optional line-charging halves.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: BusId,
    pub to: BusId,
    /// Series admittance (p.u.).
    pub admittance: Complex64,
    /// Shunt admittance placed at each end (p.u.), zero when charging is lumped elsewhere.
    pub shunt_half: Complex64,
}

impl Branch {
    /// Branch from a series impedance `r + jx`. A zero impedance yields a
    /// non-finite admittance that [`build_ybus`] rejects.
    pub fn from_impedance(id: impl Into<String>, from: BusId, to: BusId, z: Complex64) -> Self {
        Self {
            id: id.into(),
            from,
            to,
            admittance: Complex64::new(1.0, 0.0) / z,
            shunt_half: Complex64::new(0.0, 0.0),
        }
    }
}

/// Classical machine data attached to a generator bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorData {
    /// Internal EMF magnitude |E| (p.u.).
    pub emf: f64,
    /// Transient reactance x'_d (p.u.).
    pub xd_prime: f64,
    /// Inertia constant H (s).
    pub inertia: f64,
    /// Grid frequency f (Hz).
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BusNetwork {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub shunt_loads: BTreeMap<BusId, Complex64>,
    pub generators: BTreeMap<BusId, GeneratorData>,
    /// Buses held at zero voltage by a bolted fault.
    pub grounded: BTreeSet<BusId>,
}

/// Row/column label of an assembled admittance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Bus(BusId),
    /// Internal EMF node of the generator at the given bus.
    Internal(BusId),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Bus(id) => write!(f, "bus {id}"),
            Node::Internal(id) => write!(f, "internal node of generator {id}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("duplicate bus {0}")]
    DuplicateBus(BusId),
    #[error("unknown branch {0:?}")]
    UnknownBranch(String),
    #[error("branch {0:?} has zero series impedance")]
    ZeroImpedance(String),
    #[error("non-finite admittance at {0}")]
    NonFinite(String),
    #[error("more than one bus is flagged infinite")]
    MultipleInfinite,
    #[error("generator bus {0} has no machine data")]
    MissingGenerator(BusId),
    #[error("machine data attached to non-generator bus {0}")]
    GeneratorOnLoadBus(BusId),
    #[error("invalid machine data at bus {0}: {1}")]
    InvalidGenerator(BusId, &'static str),
    #[error("cannot fault the infinite bus {0}")]
    FaultOnInfiniteBus(BusId),
    #[error("eliminated block is singular; degenerate nodes: {}", fmt_nodes(.0))]
    SingularElimination(Vec<Node>),
    #[error("index {0} out of range for a {1}x{1} matrix")]
    IndexOutOfRange(usize, usize),
}

fn fmt_nodes(nodes: &[Node]) -> String {
    nodes.iter().map(Node::to_string).collect::<Vec<_>>().join(", ")
}

impl BusNetwork {
    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn branch(&self, id: &str) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn infinite_bus(&self) -> Option<BusId> {
        self.buses.iter().find(|b| b.kind == BusKind::Infinite).map(|b| b.id)
    }

    /// Generator buses in machine order (ascending bus id).
    pub fn machines(&self) -> Vec<BusId> {
        self.generators.keys().copied().collect()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let mut seen = BTreeSet::new();
        for bus in &self.buses {
            if !seen.insert(bus.id) {
                return Err(NetError::DuplicateBus(bus.id));
            }
        }
        if self.buses.iter().filter(|b| b.kind == BusKind::Infinite).count() > 1 {
            return Err(NetError::MultipleInfinite);
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !seen.contains(&end) {
                    return Err(NetError::UnknownBus(end));
                }
            }
            if !is_finite(br.admittance) {
                return Err(NetError::ZeroImpedance(br.id.clone()));
            }
            if !is_finite(br.shunt_half) {
                return Err(NetError::NonFinite(format!("branch {} shunt", br.id)));
            }
        }
        for (&id, y) in &self.shunt_loads {
            if !seen.contains(&id) {
                return Err(NetError::UnknownBus(id));
            }
            if !is_finite(*y) {
                return Err(NetError::NonFinite(format!("shunt load at bus {id}")));
            }
        }
        for bus in &self.buses {
            if bus.kind != BusKind::Load && !self.generators.contains_key(&bus.id) {
                return Err(NetError::MissingGenerator(bus.id));
            }
        }
        for (&id, g) in &self.generators {
            match self.bus(id) {
                None => return Err(NetError::UnknownBus(id)),
                Some(b) if b.kind == BusKind::Load => return Err(NetError::GeneratorOnLoadBus(id)),
                _ => {}
            }
            if !(g.xd_prime.is_finite() && g.xd_prime > 0.0) {
                return Err(NetError::InvalidGenerator(id, "x'_d must be positive"));
            }
            if !(g.inertia.is_finite() && g.inertia > 0.0) {
                return Err(NetError::InvalidGenerator(id, "H must be positive"));
            }
            if !(g.emf.is_finite() && g.emf > 0.0) {
                return Err(NetError::InvalidGenerator(id, "|E| must be positive"));
            }
            if !(g.frequency.is_finite() && g.frequency > 0.0) {
                return Err(NetError::InvalidGenerator(id, "frequency must be positive"));
            }
        }
        for &id in &self.grounded {
            if !seen.contains(&id) {
                return Err(NetError::UnknownBus(id));
            }
        }
        Ok(())
    }
}

fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Square complex matrix with a label per row/column.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub data: DMatrix<Complex64>,
    pub nodes: Vec<Node>,
}

impl ComplexMatrix {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, node: Node) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[(i, j)]
    }

    /// Largest entrywise asymmetry `|Y_ij - Y_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)]).norm());
            }
        }
        worst
    }
}

/// Nodal admittance matrix of `net`, with generator internal nodes appended
/// after the (non-grounded) buses in ascending generator bus order.
pub fn build_ybus(net: &BusNetwork) -> Result<ComplexMatrix, NetError> {
    net.validate()?;

    let mut nodes: Vec<Node> = net.buses.iter().map(|b| Node::Bus(b.id)).collect();
    nodes.extend(net.generators.keys().map(|&id| Node::Internal(id)));
    let index: BTreeMap<Node, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let dim = nodes.len();
    let mut y = DMatrix::<Complex64>::zeros(dim, dim);

    let mut stamp = |a: usize, b: usize, adm: Complex64| {
        y[(a, a)] += adm;
        y[(b, b)] += adm;
        y[(a, b)] -= adm;
        y[(b, a)] -= adm;
    };
    for br in &net.branches {
        stamp(index[&Node::Bus(br.from)], index[&Node::Bus(br.to)], br.admittance);
    }
    for (&id, g) in &net.generators {
        let adm = Complex64::new(0.0, -1.0 / g.xd_prime);
        stamp(index[&Node::Internal(id)], index[&Node::Bus(id)], adm);
    }
    for br in &net.branches {
        y[(index[&Node::Bus(br.from)], index[&Node::Bus(br.from)])] += br.shunt_half;
        y[(index[&Node::Bus(br.to)], index[&Node::Bus(br.to)])] += br.shunt_half;
    }
    for (&id, &adm) in &net.shunt_loads {
        let i = index[&Node::Bus(id)];
        y[(i, i)] += adm;
    }

    if net.grounded.is_empty() {
        return Ok(ComplexMatrix { data: y, nodes });
    }
    let keep: Vec<usize> = (0..dim)
        .filter(|&i| !matches!(nodes[i], Node::Bus(id) if net.grounded.contains(&id)))
        .collect();
    Ok(ComplexMatrix {
        data: y.select_rows(&keep).select_columns(&keep),
        nodes: keep.iter().map(|&i| nodes[i]).collect(),
    })
}

/// Schur complement `Y_RR - Y_RL Y_LL^-1 Y_LR` onto the `retained` indices,
/// returned in the order given.
pub fn kron_reduce(y: &ComplexMatrix, retained: &[usize]) -> Result<ComplexMatrix, NetError> {
    let dim = y.dim();
    if let Some(&bad) = retained.iter().find(|&&i| i >= dim) {
        return Err(NetError::IndexOutOfRange(bad, dim));
    }
    let keep: BTreeSet<usize> = retained.iter().copied().collect();
    let elim: Vec<usize> = (0..dim).filter(|i| !keep.contains(i)).collect();

    let yrr = y.data.select_rows(retained).select_columns(retained);
    let nodes: Vec<Node> = retained.iter().map(|&i| y.nodes[i]).collect();
    if elim.is_empty() {
        return Ok(ComplexMatrix { data: yrr, nodes });
    }

    let yll = y.data.select_rows(&elim).select_columns(&elim);
    let ylr = y.data.select_rows(&elim).select_columns(retained);
    let yrl = y.data.select_rows(retained).select_columns(&elim);

    let scale = yll.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let lu = yll.lu();
    let u = lu.u();
    let degenerate: Vec<Node> = (0..elim.len())
        .filter(|&k| u[(k, k)].norm() <= 1e-13 * scale.max(f64::MIN_POSITIVE))
        .map(|k| y.nodes[elim[k]])
        .collect();
    if !degenerate.is_empty() || scale == 0.0 {
        let named = if degenerate.is_empty() { elim.iter().map(|&i| y.nodes[i]).collect() } else { degenerate };
        return Err(NetError::SingularElimination(named));
    }
    let x = lu
        .solve(&ylr)
        .ok_or_else(|| NetError::SingularElimination(elim.iter().map(|&i| y.nodes[i]).collect()))?;
    Ok(ComplexMatrix { data: yrr - yrl * x, nodes })
}

/// Fault-on network: `bus` is held at zero voltage.
pub fn apply_fault(net: &BusNetwork, bus: BusId) -> Result<BusNetwork, NetError> {
    let b = net.bus(bus).ok_or(NetError::UnknownBus(bus))?;
    if b.kind == BusKind::Infinite {
        return Err(NetError::FaultOnInfiniteBus(bus));
    }
    let mut out = net.clone();
    out.grounded.insert(bus);
    Ok(out)
}

/// Result of switching a branch out of service.
#[derive(Debug, Clone, PartialEq)]
pub struct Cleared {
    pub network: BusNetwork,
    pub removed: Branch,
    /// Position the branch held in the branch list.
    pub position: usize,
    /// Generators left without a path to the reference machine.
    pub islanded: Vec<BusId>,
}

pub fn apply_clearing(net: &BusNetwork, switch_out: &str) -> Result<Cleared, NetError> {
    let position = net
        .branches
        .iter()
        .position(|b| b.id == switch_out)
        .ok_or_else(|| NetError::UnknownBranch(switch_out.to_string()))?;
    let mut network = net.clone();
    let removed = network.branches.remove(position);
    let islanded = islanded_generators(&network);
    Ok(Cleared { network, removed, position, islanded })
}

/// Re-inserts a branch at `position` (clamped to the list length).
pub fn add_branch(net: &BusNetwork, branch: Branch, position: usize) -> BusNetwork {
    let mut out = net.clone();
    let at = position.min(out.branches.len());
    out.branches.insert(at, branch);
    out
}

/// Generators with no branch path to the infinite bus (or, without one, to
/// the first generator). Grounded buses block the path.
pub fn islanded_generators(net: &BusNetwork) -> Vec<BusId> {
    let Some(root) = net.infinite_bus().or_else(|| net.generators.keys().next().copied()) else {
        return Vec::new();
    };
    let mut adj: BTreeMap<BusId, Vec<BusId>> = BTreeMap::new();
    for br in &net.branches {
        if br.admittance.norm() == 0.0 {
            continue;
        }
        adj.entry(br.from).or_default().push(br.to);
        adj.entry(br.to).or_default().push(br.from);
    }
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(b) = queue.pop_front() {
        if net.grounded.contains(&b) {
            continue;
        }
        for &nb in adj.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(nb) {
                queue.push_back(nb);
            }
        }
    }
    net.generators.keys().copied().filter(|g| !seen.contains(g)).collect()
}

/// Copy of `net` with the shunt load at `bus` replaced by `y`.
pub fn set_load(net: &BusNetwork, bus: BusId, y: Complex64) -> Result<BusNetwork, NetError> {
    if net.bus(bus).is_none() {
        return Err(NetError::UnknownBus(bus));
    }
    let mut out = net.clone();
    out.shunt_loads.insert(bus, y);
    Ok(out)
}

/// Generator-internal-node network after Kron reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    /// Conductance G_ik; the diagonal holds the shunt conductance G_ii.
    pub g: DMatrix<f64>,
    /// Susceptance B_ik.
    pub b: DMatrix<f64>,
    /// Maximum transfer P̄_ik = |E_i||E_k| B_ik, zero on the diagonal.
    pub pbar: DMatrix<f64>,
    /// Internal voltage magnitudes.
    pub e: Vec<f64>,
    /// Generator bus of each machine, in matrix order.
    pub machines: Vec<BusId>,
}

impl ReducedNetwork {
    pub fn n(&self) -> usize {
        self.e.len()
    }

    /// Builds the per-machine parameters from a reduced admittance matrix,
    /// symmetrising away rounding noise.
    pub fn from_admittance(y: &DMatrix<Complex64>, e: Vec<f64>, machines: Vec<BusId>) -> Self {
        let n = e.len();
        let mut g = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        let mut pbar = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let sym = (y[(i, k)] + y[(k, i)]) * 0.5;
                g[(i, k)] = sym.re;
                b[(i, k)] = sym.im;
                if i != k {
                    pbar[(i, k)] = e[i] * e[k] * sym.im;
                }
            }
        }
        Self { g, b, pbar, e, machines }
    }
}

/// Assembles and reduces `net` onto its generator internal nodes.
pub fn reduce_network(net: &BusNetwork) -> Result<ReducedNetwork, NetError> {
    let y = build_ybus(net)?;
    let machines = net.machines();
    let retained: Vec<usize> = machines
        .iter()
        .map(|&id| y.index_of(Node::Internal(id)).expect("internal node present"))
        .collect();
    let red = kron_reduce(&y, &retained)?;
    let e = machines.iter().map(|id| net.generators[id].emf).collect();
    Ok(ReducedNetwork::from_admittance(&red.data, e, machines))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_bus(y: Complex64) -> BusNetwork {
        BusNetwork {
            buses: vec![Bus { id: 1, kind: BusKind::Load }, Bus { id: 2, kind: BusKind::Load }],
            branches: vec![Branch { id: "1-2".into(), from: 1, to: 2, admittance: y, shunt_half: c(0.0, 0.0) }],
            ..Default::default()
        }
    }

    #[test]
    fn two_bus_stamp() {
        let y = c(1.5, -4.0);
        let m = build_ybus(&two_bus(y)).unwrap();
        assert_eq!(m.data, DMatrix::from_row_slice(2, 2, &[y, -y, -y, y]));
    }

    #[test]
    fn isolated_bus_shunt() {
        let net = BusNetwork {
            buses: vec![Bus { id: 4, kind: BusKind::Load }],
            shunt_loads: BTreeMap::from([(4, c(0.3, 0.0))]),
            ..Default::default()
        };
        let m = build_ybus(&net).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.get(0, 0), c(0.3, 0.0));
    }

    #[test]
    fn zero_impedance_rejected() {
        let mut net = two_bus(c(1.0, 0.0));
        net.branches[0] = Branch::from_impedance("1-2", 1, 2, c(0.0, 0.0));
        assert_eq!(build_ybus(&net), Err(NetError::ZeroImpedance("1-2".into())));
    }

    #[test]
    fn branch_to_unknown_bus_rejected() {
        let mut net = two_bus(c(1.0, -1.0));
        net.branches[0].to = 9;
        assert_eq!(build_ybus(&net), Err(NetError::UnknownBus(9)));
    }

    #[test]
    fn reduce_all_retained_is_identity() {
        let mut net = two_bus(c(1.0, -3.0));
        net.shunt_loads.insert(2, c(0.5, 0.1));
        let m = build_ybus(&net).unwrap();
        assert_eq!(kron_reduce(&m, &[0, 1]).unwrap(), m);
    }

    #[test]
    fn series_combination() {
        let y = c(0.4, -5.0);
        let yl = c(1.2, -0.3);
        let mut net = two_bus(y);
        net.shunt_loads.insert(2, yl);
        let m = build_ybus(&net).unwrap();
        let r = kron_reduce(&m, &[0]).unwrap();
        let expect = y * yl / (y + yl);
        assert!((r.get(0, 0) - expect).norm() < 1e-14);
        assert_eq!(r.nodes, vec![Node::Bus(1)]);
    }

    #[test]
    fn singular_elimination_names_nodes() {
        let net = BusNetwork {
            buses: vec![
                Bus { id: 1, kind: BusKind::Load },
                Bus { id: 2, kind: BusKind::Load },
                Bus { id: 3, kind: BusKind::Load },
            ],
            branches: vec![Branch { id: "1-2".into(), from: 1, to: 2, admittance: c(0.0, -2.0), shunt_half: c(0.0, 0.0) }],
            ..Default::default()
        };
        let m = build_ybus(&net).unwrap();
        match kron_reduce(&m, &[0, 1]) {
            Err(NetError::SingularElimination(nodes)) => assert_eq!(nodes, vec![Node::Bus(3)]),
            other => panic!("expected singular elimination, got {other:?}"),
        }
    }

    #[test]
    fn fault_removes_row_and_column() {
        let mut net = two_bus(c(1.0, -2.0));
        net.buses.push(Bus { id: 3, kind: BusKind::Infinite });
        net.generators.insert(3, GeneratorData { emf: 1.0, xd_prime: 0.1, inertia: 5.0, frequency: 60.0 });
        let faulted = apply_fault(&net, 2).unwrap();
        let full = build_ybus(&net).unwrap();
        let on = build_ybus(&faulted).unwrap();
        assert_eq!(on.dim(), full.dim() - 1);
        assert!(on.index_of(Node::Bus(2)).is_none());
        assert_eq!(apply_fault(&net, 3), Err(NetError::FaultOnInfiniteBus(3)));
        assert_eq!(apply_fault(&net, 7), Err(NetError::UnknownBus(7)));
    }

    #[test]
    fn set_load_leaves_original() {
        let net = two_bus(c(1.0, -2.0));
        let edited = set_load(&net, 2, c(0.969, -0.1601)).unwrap();
        assert!(net.shunt_loads.is_empty());
        assert_eq!(edited.shunt_loads[&2], c(0.969, -0.1601));
        assert_eq!(set_load(&net, 5, c(1.0, 0.0)), Err(NetError::UnknownBus(5)));
    }

    #[test]
    fn clearing_flags_islanded_generator() {
        let net = BusNetwork {
            buses: vec![Bus { id: 1, kind: BusKind::Infinite }, Bus { id: 2, kind: BusKind::Generator }],
            branches: vec![Branch { id: "1-2".into(), from: 1, to: 2, admittance: c(0.0, -5.0), shunt_half: c(0.0, 0.0) }],
            generators: BTreeMap::from([
                (1, GeneratorData { emf: 1.0, xd_prime: 0.1, inertia: 50.0, frequency: 60.0 }),
                (2, GeneratorData { emf: 1.0, xd_prime: 0.2, inertia: 5.0, frequency: 60.0 }),
            ]),
            ..Default::default()
        };
        assert!(apply_clearing(&net, "1-2").unwrap().islanded == vec![2]);
        assert_eq!(apply_clearing(&net, "9-9").unwrap_err(), NetError::UnknownBranch("9-9".into()));
    }
}
