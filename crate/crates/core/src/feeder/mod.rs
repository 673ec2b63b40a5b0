//! Phase-aware feeder graph, per-unit conventions and topology edits.
//!
//! A [`Network`] is immutable once built: every edit goes through
//! [`NetworkParts`] and is re-validated on the way back in.

mod modify;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::phase::{Phase, PhaseSet};

pub use modify::{close_switch, merge_with_switch, split_pair, Modification};

pub type NodeId = String;

/// Id conventionally used for the infinite bus.
pub const SLACK_ID: &str = "inf";
/// Region name used when a node does not declare one.
pub const DEFAULT_REGION: &str = "default";

const FEET_PER_MILE: f64 = 5280.0;

/// Per-unit bases. One power base for the whole network and one voltage
/// base per voltage region.
#[derive(Clone, Debug, PartialEq)]
pub struct Bases {
    pub s_base_va: f64,
    pub v_base_v: BTreeMap<String, f64>,
}

impl Bases {
    pub fn single(s_base_va: f64, v_base_v: f64) -> Self {
        let mut m = BTreeMap::new();
        m.insert(DEFAULT_REGION.to_string(), v_base_v);
        Bases { s_base_va, v_base_v: m }
    }

    pub fn z_base(&self, region: &str) -> Result<f64> {
        let v = self
            .v_base_v
            .get(region)
            .ok_or_else(|| Error::UnknownElement(format!("voltage region '{region}'")))?;
        Ok(v * v / self.s_base_va)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub phases: PhaseSet,
    pub region: String,
}

/// Per-mile series impedance of a line construction, in ohms.
#[derive(Clone, Debug, PartialEq)]
pub struct LineConfig {
    pub phases: PhaseSet,
    pub z_ohm_per_mile: DenseMatrix<Complex64>,
    pub note: Option<String>,
}

/// Equipment sitting on an edge that the solvers do not model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineDevice {
    Line,
    Regulator,
    Transformer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub phases: PhaseSet,
    /// Series impedance in p.u., `|phases| x |phases|`, canonical order.
    pub impedance: DenseMatrix<Complex64>,
    pub config: Option<String>,
    pub length_ft: f64,
    pub is_switch: bool,
    pub closed: bool,
    pub device: LineDevice,
    pub note: Option<String>,
}

impl LineSpec {
    /// A line with an explicit p.u. impedance and no construction reference.
    pub fn with_impedance(from: &str, to: &str, phases: PhaseSet, impedance: DenseMatrix<Complex64>) -> Self {
        LineSpec {
            from: from.to_string(),
            to: to.to_string(),
            phases,
            impedance,
            config: None,
            length_ft: 0.0,
            is_switch: false,
            closed: true,
            device: LineDevice::Line,
            note: None,
        }
    }

    pub fn key(&self) -> String {
        format!("{}:{}", self.from, self.to)
    }

    pub fn is_active(&self) -> bool {
        self.closed
    }

    pub fn is_zero_impedance(&self) -> bool {
        (0..self.impedance.rows()).all(|i| (0..self.impedance.cols()).all(|j| self.impedance[(i, j)].norm() == 0.0))
    }

    pub fn connects(&self, a: &str, b: &str) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }

    /// Self and mutual impedance for global phases `(p, q)`, zero when absent.
    pub fn z(&self, p: Phase, q: Phase) -> Complex64 {
        match (self.phases.position(p), self.phases.position(q)) {
            (Some(i), Some(j)) => self.impedance[(i, j)],
            _ => Complex64::new(0.0, 0.0),
        }
    }
}

/// Voltage-dependent wye load `(beta_s + beta_z |V|^2) d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSpec {
    pub node: NodeId,
    pub phase: Phase,
    pub demand: Complex64,
    pub beta_s: f64,
    pub beta_z: f64,
    pub note: Option<String>,
}

/// Shunt capacitor entering the load as a fixed `-j c` term.
#[derive(Clone, Debug, PartialEq)]
pub struct CapSpec {
    pub node: NodeId,
    pub phase: Phase,
    pub c: f64,
    pub note: Option<String>,
}

/// Four-quadrant controllable injection limited to `|w| <= capacity`.
#[derive(Clone, Debug, PartialEq)]
pub struct DerSpec {
    pub node: NodeId,
    pub phase: Phase,
    pub capacity: f64,
}

/// Piecewise-linear volt-var characteristic. `q` uses the load sign
/// convention, so `q_min < 0` means reactive support at low voltage.
#[derive(Clone, Debug, PartialEq)]
pub struct VvcSpec {
    pub node: NodeId,
    pub phase: Phase,
    pub q_min: f64,
    pub q_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl VvcSpec {
    pub fn slope(&self) -> f64 {
        (self.q_max - self.q_min) / (self.v_max - self.v_min)
    }

    /// Clamped characteristic as a function of `|V|`.
    pub fn q_of_magnitude(&self, v: f64) -> f64 {
        if v <= self.v_min {
            self.q_min
        } else if v >= self.v_max {
            self.q_max
        } else {
            self.slope() * (v - self.v_min) + self.q_min
        }
    }

    /// Middle segment with `|V| ~ (1 + E) / 2`, returned as `(constant, coefficient on E)`.
    pub fn linearized(&self) -> (f64, f64) {
        let k = self.slope();
        (k * (0.5 - self.v_min) + self.q_min, 0.5 * k)
    }
}

/// Everything needed to build a [`Network`]; all fields public for editing.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParts {
    pub name: Option<String>,
    pub bases: Bases,
    pub slack: NodeId,
    pub slack_voltage: [Complex64; 3],
    pub nodes: Vec<NodeSpec>,
    pub line_configs: BTreeMap<String, LineConfig>,
    pub lines: Vec<LineSpec>,
    pub loads: Vec<LoadSpec>,
    pub caps: Vec<CapSpec>,
    pub der: Vec<DerSpec>,
    pub vvc: Vec<VvcSpec>,
}

/// Default slack phasors `[1, 1∠240°, 1∠120°]`.
pub fn nominal_slack_voltage() -> [Complex64; 3] {
    let deg = core::f64::consts::PI / 180.0;
    [
        Complex64::new(1.0, 0.0),
        Complex64::from_polar(1.0, 240.0 * deg),
        Complex64::from_polar(1.0, 120.0 * deg),
    ]
}

/// Slack angles `[0, -2π/3, 2π/3]` used by the linear model.
pub fn nominal_slack_angles() -> [f64; 3] {
    let t = 2.0 * core::f64::consts::PI / 3.0;
    [0.0, -t, t]
}

/// Validated, immutable feeder.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    parts: NetworkParts,
    index: BTreeMap<NodeId, usize>,
    slack_idx: usize,
}

impl Network {
    pub fn from_parts(parts: NetworkParts) -> Result<Network> {
        let index = validate(&parts)?;
        let slack_idx = index[&parts.slack];
        Ok(Network { parts, index, slack_idx })
    }

    pub fn parts(&self) -> &NetworkParts {
        &self.parts
    }

    pub fn into_parts(self) -> NetworkParts {
        self.parts
    }

    pub fn name(&self) -> Option<&str> {
        self.parts.name.as_deref()
    }

    pub fn bases(&self) -> &Bases {
        &self.parts.bases
    }

    pub fn slack_id(&self) -> &str {
        &self.parts.slack
    }

    pub fn slack_index(&self) -> usize {
        self.slack_idx
    }

    pub fn slack_voltage(&self) -> [Complex64; 3] {
        self.parts.slack_voltage
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.parts.nodes
    }

    pub fn lines(&self) -> &[LineSpec] {
        &self.parts.lines
    }

    pub fn line_configs(&self) -> &BTreeMap<String, LineConfig> {
        &self.parts.line_configs
    }

    pub fn loads(&self) -> &[LoadSpec] {
        &self.parts.loads
    }

    pub fn caps(&self) -> &[CapSpec] {
        &self.parts.caps
    }

    pub fn der(&self) -> &[DerSpec] {
        &self.parts.der
    }

    pub fn vvc(&self) -> &[VvcSpec] {
        &self.parts.vvc
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.node_index(id).map(|i| &self.parts.nodes[i])
    }

    pub fn require_node(&self, id: &str) -> Result<usize> {
        self.node_index(id)
            .ok_or_else(|| Error::UnknownElement(format!("node '{id}'")))
    }

    /// Index of the line joining `a` and `b` in either orientation.
    pub fn find_line(&self, a: &str, b: &str) -> Option<usize> {
        self.parts.lines.iter().position(|l| l.connects(a, b))
    }

    pub fn open_switches(&self) -> Vec<&LineSpec> {
        self.parts.lines.iter().filter(|l| l.is_switch && !l.closed).collect()
    }

    /// Lines that carry current (closed).
    pub fn active_lines(&self) -> impl Iterator<Item = (usize, &LineSpec)> {
        self.parts.lines.iter().enumerate().filter(|(_, l)| l.is_active())
    }

    /// Node-phase enumeration in file order, phases canonical.
    pub fn node_phases(&self) -> NodePhaseIndex {
        NodePhaseIndex::new(&self.parts.nodes)
    }

    /// Fails if any closed edge carries equipment the solvers do not model.
    pub fn ensure_solvable(&self) -> Result<()> {
        for l in self.parts.lines.iter().filter(|l| l.closed) {
            match l.device {
                LineDevice::Line => {}
                LineDevice::Regulator => {
                    return Err(Error::Unsupported(format!(
                        "regulator on {} (apply remove_regulator first)",
                        l.key()
                    )))
                }
                LineDevice::Transformer => {
                    return Err(Error::Unsupported(format!(
                        "transformer on {} (apply replace_with_line first)",
                        l.key()
                    )))
                }
            }
        }
        Ok(())
    }

    /// Channels with a controllable DER, in declaration order.
    pub fn der_channels(&self) -> Vec<(usize, Phase, f64)> {
        self.parts
            .der
            .iter()
            .map(|d| (self.index[&d.node], d.phase, d.capacity))
            .collect()
    }
}

/// Dense numbering of every (node, phase) pair present in the network.
#[derive(Clone, Debug, PartialEq)]
pub struct NodePhaseIndex {
    entries: Vec<(usize, Phase)>,
    lookup: Vec<[Option<usize>; 3]>,
}

impl NodePhaseIndex {
    fn new(nodes: &[NodeSpec]) -> Self {
        let mut entries = Vec::new();
        let mut lookup = vec![[None; 3]; nodes.len()];
        for (n, node) in nodes.iter().enumerate() {
            for p in node.phases.iter() {
                lookup[n][p.index()] = Some(entries.len());
                entries.push((n, p));
            }
        }
        NodePhaseIndex { entries, lookup }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: usize, phase: Phase) -> Option<usize> {
        self.lookup.get(node).and_then(|l| l[phase.index()])
    }

    pub fn entry(&self, k: usize) -> (usize, Phase) {
        self.entries[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, (usize, Phase))> + '_ {
        self.entries.iter().copied().enumerate()
    }
}

/// Controllable complex injections `w` keyed by (node id, phase).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Setpoints(BTreeMap<(NodeId, Phase), Complex64>);

impl Setpoints {
    pub fn zero() -> Self {
        Setpoints(BTreeMap::new())
    }

    pub fn insert(&mut self, node: &str, phase: Phase, w: Complex64) {
        self.0.insert((node.to_string(), phase), w);
    }

    pub fn get(&self, node: &str, phase: Phase) -> Complex64 {
        self.0
            .get(&(node.to_string(), phase))
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, Phase), &Complex64)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every key must name an existing node-phase.
    pub fn check_against(&self, net: &Network) -> Result<()> {
        for ((node, phase), _) in self.iter() {
            let n = net.node(node).ok_or_else(|| Error::UnknownElement(format!("setpoint node '{node}'")))?;
            if !n.phases.contains(*phase) {
                return Err(Error::PhaseConsistency(format!(
                    "setpoint on {node}.{phase} but node has phases {}",
                    n.phases
                )));
            }
        }
        Ok(())
    }
}

/// Series impedance in p.u. of `length_ft` of construction `cfg`.
pub fn line_impedance_pu(cfg: &LineConfig, length_ft: f64, z_base: f64) -> DenseMatrix<Complex64> {
    let scale = length_ft / FEET_PER_MILE / z_base;
    let n = cfg.phases.len();
    DenseMatrix::from_fn(n, n, |i, j| cfg.z_ohm_per_mile[(i, j)] * scale)
}

fn finite(v: f64, what: &dyn Fn() -> String) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("non-finite value in {}", what())))
    }
}

fn check_phase_at(parts: &NetworkParts, index: &BTreeMap<NodeId, usize>, node: &str, phase: Phase, what: &str) -> Result<()> {
    let i = index
        .get(node)
        .ok_or_else(|| Error::UnknownElement(format!("{what} at unknown node '{node}'")))?;
    if !parts.nodes[*i].phases.contains(phase) {
        return Err(Error::PhaseConsistency(format!(
            "{what} on {node}.{phase} but node has phases {}",
            parts.nodes[*i].phases
        )));
    }
    Ok(())
}

fn validate(parts: &NetworkParts) -> Result<BTreeMap<NodeId, usize>> {
    if !(parts.bases.s_base_va > 0.0) || parts.bases.v_base_v.values().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidValue("per-unit bases must be positive".into()));
    }
    let mut index = BTreeMap::new();
    for (i, n) in parts.nodes.iter().enumerate() {
        if n.id.is_empty() {
            return Err(Error::schema("empty node id"));
        }
        if index.insert(n.id.clone(), i).is_some() {
            return Err(Error::DuplicateId(format!("node '{}'", n.id)));
        }
        if !parts.bases.v_base_v.contains_key(&n.region) {
            return Err(Error::UnknownElement(format!("voltage region '{}' of node '{}'", n.region, n.id)));
        }
    }
    let slack = index
        .get(&parts.slack)
        .ok_or_else(|| Error::UnknownElement(format!("slack node '{}'", parts.slack)))?;
    if parts.nodes[*slack].phases != PhaseSet::ABC {
        return Err(Error::PhaseConsistency(format!("slack node '{}' must have all three phases", parts.slack)));
    }
    for v in &parts.slack_voltage {
        finite(v.re + v.im, &|| "slack voltage".into())?;
    }

    for (name, cfg) in &parts.line_configs {
        let n = cfg.phases.len();
        if cfg.phases.is_empty() || cfg.z_ohm_per_mile.rows() != n || cfg.z_ohm_per_mile.cols() != n {
            return Err(Error::schema(format!("line config '{name}' impedance must be {n}x{n} for phases {}", cfg.phases)));
        }
    }

    let mut seen_pairs = BTreeSet::new();
    for l in &parts.lines {
        let key = l.key();
        if l.from == l.to {
            return Err(Error::schema(format!("line {key} is a self-loop")));
        }
        let (a, b) = match (index.get(&l.from), index.get(&l.to)) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(Error::UnknownElement(format!("endpoint of line {key}"))),
        };
        let pair = if l.from < l.to {
            (l.from.clone(), l.to.clone())
        } else {
            (l.to.clone(), l.from.clone())
        };
        if !seen_pairs.insert(pair) {
            return Err(Error::DuplicateId(format!("line {key}")));
        }
        if l.phases.is_empty() {
            return Err(Error::PhaseConsistency(format!("line {key} has no phases")));
        }
        let common = parts.nodes[a].phases.intersection(parts.nodes[b].phases);
        if !l.phases.is_subset(common) {
            return Err(Error::PhaseConsistency(format!(
                "line {key} has phases {} but endpoints share only {common}",
                l.phases
            )));
        }
        let n = l.phases.len();
        if l.impedance.rows() != n || l.impedance.cols() != n {
            return Err(Error::schema(format!("line {key} impedance must be {n}x{n}")));
        }
        for i in 0..n {
            for j in 0..n {
                let z = l.impedance[(i, j)];
                finite(z.re + z.im, &|| format!("impedance of {key}"))?;
            }
        }
        if let Some(cfg_name) = &l.config {
            let cfg = parts
                .line_configs
                .get(cfg_name)
                .ok_or_else(|| Error::UnknownElement(format!("line config '{cfg_name}' on {key}")))?;
            if cfg.phases != l.phases {
                return Err(Error::PhaseConsistency(format!(
                    "line {key} phases {} differ from config '{cfg_name}' phases {}",
                    l.phases, cfg.phases
                )));
            }
        }
        if parts.nodes[a].region != parts.nodes[b].region {
            return Err(Error::Unsupported(format!("line {key} crosses voltage regions")));
        }
        if !(l.length_ft >= 0.0) {
            return Err(Error::InvalidValue(format!("line {key} has negative length")));
        }
    }

    for ld in &parts.loads {
        check_phase_at(parts, &index, &ld.node, ld.phase, "load")?;
        finite(ld.demand.re + ld.demand.im + ld.beta_s + ld.beta_z, &|| format!("load at {}", ld.node))?;
        if !(0.0..=1.0).contains(&ld.beta_s) || !(0.0..=1.0).contains(&ld.beta_z) || libm::fabs(ld.beta_s + ld.beta_z - 1.0) > 1e-12 {
            return Err(Error::InvalidValue(format!(
                "load at {}.{}: beta_S + beta_Z must be 1 with both in [0, 1]",
                ld.node, ld.phase
            )));
        }
    }
    for c in &parts.caps {
        check_phase_at(parts, &index, &c.node, c.phase, "capacitor")?;
        finite(c.c, &|| format!("capacitor at {}", c.node))?;
    }
    let mut der_seen = BTreeSet::new();
    for d in &parts.der {
        check_phase_at(parts, &index, &d.node, d.phase, "DER")?;
        if !(d.capacity >= 0.0) || !d.capacity.is_finite() {
            return Err(Error::InvalidValue(format!("DER capacity at {}.{} must be >= 0", d.node, d.phase)));
        }
        if !der_seen.insert((d.node.clone(), d.phase)) {
            return Err(Error::DuplicateId(format!("DER {}.{}", d.node, d.phase)));
        }
    }
    let mut vvc_seen = BTreeSet::new();
    for v in &parts.vvc {
        check_phase_at(parts, &index, &v.node, v.phase, "VVC")?;
        if !(v.q_min < v.q_max) || !(v.v_min < v.v_max) {
            return Err(Error::InvalidValue(format!("VVC at {}.{}: need q_min < q_max and V_min < V_max", v.node, v.phase)));
        }
        if !vvc_seen.insert((v.node.clone(), v.phase)) {
            return Err(Error::DuplicateId(format!("VVC {}.{}", v.node, v.phase)));
        }
    }

    check_connectivity(parts, &index)?;
    Ok(index)
}

/// Every node-phase must reach the slack through closed lines carrying that phase.
fn check_connectivity(parts: &NetworkParts, index: &BTreeMap<NodeId, usize>) -> Result<()> {
    let n = parts.nodes.len();
    let mut adj: Vec<Vec<(usize, PhaseSet)>> = vec![Vec::new(); n];
    for l in parts.lines.iter().filter(|l| l.closed) {
        let (a, b) = (index[&l.from], index[&l.to]);
        adj[a].push((b, l.phases));
        adj[b].push((a, l.phases));
    }
    for p in Phase::ALL {
        let mut seen = vec![false; n];
        let s = index[&parts.slack];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &(v, ph) in &adj[u] {
                if ph.contains(p) && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        for (i, node) in parts.nodes.iter().enumerate() {
            if node.phases.contains(p) && !seen[i] {
                return Err(Error::Disconnected {
                    node: node.id.clone(),
                    phase: p.as_char(),
                });
            }
        }
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn minimal_network_is_valid() {
        let p = parts(
            vec![node(SLACK_ID, "abc"), node("0", "abc")],
            vec![LineSpec::with_impedance(SLACK_ID, "0", PhaseSet::ABC, diag3(0.01, 0.02))],
        );
        let net = Network::from_parts(p).unwrap();
        assert_eq!(net.nodes().len(), 2);
        assert_eq!(net.lines()[0].phases, PhaseSet::ABC);
        assert_eq!(net.slack_id(), SLACK_ID);
        assert_eq!(net.node_phases().len(), 6);
    }

    #[test]
    fn line_phase_absent_at_endpoint_is_rejected() {
        let p = parts(
            vec![node(SLACK_ID, "abc"), node("0", "ac")],
            vec![LineSpec::with_impedance(SLACK_ID, "0", "ab".parse().unwrap(), diag3(0.01, 0.02))],
        );
        assert!(matches!(Network::from_parts(p), Err(Error::PhaseConsistency(_))));
    }

    #[test]
    fn disconnected_phase_is_rejected() {
        let p = parts(
            vec![node(SLACK_ID, "abc"), node("0", "ab")],
            vec![LineSpec::with_impedance(SLACK_ID, "0", "a".parse().unwrap(), z1(0.01, 0.02))],
        );
        assert_eq!(
            Network::from_parts(p),
            Err(Error::Disconnected {
                node: "0".into(),
                phase: 'b'
            })
        );
    }

    #[test]
    fn duplicate_node_ids_are_rejected() {
        let p = parts(vec![node(SLACK_ID, "abc"), node(SLACK_ID, "abc")], vec![]);
        assert!(matches!(Network::from_parts(p), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn open_switch_does_not_connect() {
        let mut sw = LineSpec::with_impedance(SLACK_ID, "0", PhaseSet::ABC, diag3(0.01, 0.02));
        sw.is_switch = true;
        sw.closed = false;
        let p = parts(vec![node(SLACK_ID, "abc"), node("0", "abc")], vec![sw]);
        assert!(matches!(Network::from_parts(p), Err(Error::Disconnected { .. })));
    }

    #[test]
    fn bad_load_model_is_rejected() {
        let mut p = parts(
            vec![node(SLACK_ID, "abc"), node("1", "a")],
            vec![LineSpec::with_impedance(SLACK_ID, "1", "a".parse().unwrap(), z1(0.01, 0.02))],
        );
        let mut ld = load("1", Phase::A, 0.1, 0.0, 0.5);
        ld.beta_z = 0.6;
        p.loads.push(ld);
        assert!(matches!(Network::from_parts(p), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn per_unit_conversion_round_trips_to_ohms() {
        let cfg = LineConfig {
            phases: PhaseSet::ABC,
            z_ohm_per_mile: diag3(0.3465, 1.0179),
            note: None,
        };
        let bases = Bases::single(5e6, 4160.0);
        let zb = bases.z_base(DEFAULT_REGION).unwrap();
        let z = line_impedance_pu(&cfg, 2000.0, zb);
        let ohms = cfg.z_ohm_per_mile[(0, 0)] * (2000.0 / 5280.0);
        assert!(((z[(0, 0)] * zb) - ohms).norm() <= 1e-12 * ohms.norm());
    }

    #[test]
    fn vvc_characteristic() {
        let v = VvcSpec {
            node: "1".into(),
            phase: Phase::A,
            q_min: -0.05,
            q_max: 0.05,
            v_min: 0.95,
            v_max: 1.05,
        };
        assert_eq!(v.q_of_magnitude(0.9), -0.05);
        assert_eq!(v.q_of_magnitude(1.1), 0.05);
        assert!((v.q_of_magnitude(1.0)).abs() < 1e-15);
        let (c0, c1) = v.linearized();
        assert!((c1 - 0.5).abs() < 1e-15);
        // at E = 1 the Taylor form gives |V| = 1
        assert!((c0 + c1).abs() < 1e-15);
    }
}
