//! JSON feeder documents.
//!
//! Complex numbers are `[re, im]` pairs, line constructions are in ohms per
//! mile, lengths in feet and loads in p.u. Lines either name a construction
//! (`config` + `length_ft`) or carry an explicit `impedance_pu` matrix.

use std::collections::BTreeMap;
use std::path::Path;

use phasorflow_core::feeder::{
    line_impedance_pu, nominal_slack_voltage, Bases, CapSpec, DerSpec, LineConfig, LineDevice, LineSpec, LoadSpec,
    NetworkParts, NodeSpec, VvcSpec, DEFAULT_REGION,
};
use phasorflow_core::linalg::DenseMatrix;
use phasorflow_core::{Complex64, Network, Phase, PhaseSet};
use serde::{Deserialize, Serialize};

use crate::error::{Context, Error, Result};
use crate::io::{read_json, write_json};

pub type ComplexPair = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub bases: BasesDoc,
    pub slack: SlackDoc,
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub line_configs: BTreeMap<String, ConfigDoc>,
    pub lines: Vec<LineDoc>,
    #[serde(default)]
    pub loads: Vec<LoadDoc>,
    #[serde(default)]
    pub caps: Vec<CapDoc>,
    #[serde(default)]
    pub der: Vec<DerDoc>,
    #[serde(default)]
    pub vvc: Vec<VvcDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasesDoc {
    pub s_base_va: f64,
    /// Line-to-line voltage base per region, in volts.
    pub v_base_v: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlackDoc {
    pub id: String,
    /// Phasors on phases a, b, c; nominal `[1, 1∠240°, 1∠120°]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<[ComplexPair; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub phases: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub phases: String,
    /// Rows and columns follow the canonical `a, b, c` order of `phases`.
    pub z_ohm_per_mile: Vec<Vec<ComplexPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceDoc {
    #[default]
    Line,
    Regulator,
    Transformer,
}

impl DeviceDoc {
    fn is_line(&self) -> bool {
        *self == DeviceDoc::Line
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default)]
    pub length_ft: f64,
    /// Required with `impedance_pu`; taken from the construction otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impedance_pu: Option<Vec<Vec<ComplexPair>>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_switch: bool,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub closed: bool,
    #[serde(default, skip_serializing_if = "DeviceDoc::is_line")]
    pub device: DeviceDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadDoc {
    pub node: String,
    pub phase: String,
    pub re: f64,
    pub im: f64,
    #[serde(rename = "beta_S")]
    pub beta_s: f64,
    #[serde(rename = "beta_Z")]
    pub beta_z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapDoc {
    pub node: String,
    pub phase: String,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerDoc {
    pub node: String,
    pub phase: String,
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VvcDoc {
    pub node: String,
    pub phase: String,
    pub q_min: f64,
    pub q_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

pub(crate) fn phase(s: &str) -> Result<Phase> {
    s.parse::<Phase>().context(|| format!("phase '{s}'"))
}

pub(crate) fn phase_set(s: &str) -> Result<PhaseSet> {
    s.parse::<PhaseSet>().context(|| format!("phase set '{s}'"))
}

fn c(p: ComplexPair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

fn pair(z: Complex64) -> ComplexPair {
    [z.re, z.im]
}

fn matrix(rows: &[Vec<ComplexPair>], n: usize, what: &str) -> Result<DenseMatrix<Complex64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::model(
            what.to_string(),
            phasorflow_core::Error::Schema(format!("impedance matrix must be {n}x{n}")),
        ));
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| c(rows[i][j])))
}

fn rows_of(m: &DenseMatrix<Complex64>) -> Vec<Vec<ComplexPair>> {
    (0..m.rows()).map(|i| m.row(i).iter().copied().map(pair).collect()).collect()
}

impl FeederDoc {
    /// Validates the document and converts impedances to p.u.
    pub fn to_network(&self) -> Result<Network> {
        let bases = Bases {
            s_base_va: self.bases.s_base_va,
            v_base_v: self.bases.v_base_v.clone(),
        };
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Ok(NodeSpec {
                    id: n.id.clone(),
                    phases: phase_set(&n.phases)?,
                    region: n.region.clone().unwrap_or_else(|| DEFAULT_REGION.to_string()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut line_configs = BTreeMap::new();
        for (name, cfg) in &self.line_configs {
            let phases = phase_set(&cfg.phases)?;
            line_configs.insert(
                name.clone(),
                LineConfig {
                    phases,
                    z_ohm_per_mile: matrix(&cfg.z_ohm_per_mile, phases.len(), &format!("line config '{name}'"))?,
                    note: cfg.note.clone(),
                },
            );
        }
        let mut lines = Vec::with_capacity(self.lines.len());
        for l in &self.lines {
            let what = format!("line {}:{}", l.from, l.to);
            let (phases, impedance) = match (&l.config, &l.impedance_pu) {
                (Some(name), None) => {
                    let cfg = line_configs.get(name).ok_or_else(|| {
                        Error::model(what.clone(), phasorflow_core::Error::UnknownElement(format!("line config '{name}'")))
                    })?;
                    if let Some(p) = &l.phases {
                        if phase_set(p)? != cfg.phases {
                            return Err(Error::model(
                                what,
                                phasorflow_core::Error::PhaseConsistency(format!("phases '{p}' differ from config '{name}'")),
                            ));
                        }
                    }
                    let region = nodes
                        .iter()
                        .find(|n| n.id == l.from)
                        .map(|n| n.region.as_str())
                        .unwrap_or(DEFAULT_REGION);
                    let z_base = bases.z_base(region).context(|| what.clone())?;
                    (cfg.phases, line_impedance_pu(cfg, l.length_ft, z_base))
                }
                (None, Some(z)) => {
                    let p = l.phases.as_deref().ok_or_else(|| {
                        Error::model(what.clone(), phasorflow_core::Error::Schema("impedance_pu requires phases".into()))
                    })?;
                    let phases = phase_set(p)?;
                    (phases, matrix(z, phases.len(), &what)?)
                }
                _ => {
                    return Err(Error::model(
                        what,
                        phasorflow_core::Error::Schema("exactly one of config or impedance_pu is required".into()),
                    ))
                }
            };
            lines.push(LineSpec {
                from: l.from.clone(),
                to: l.to.clone(),
                phases,
                impedance,
                config: l.config.clone(),
                length_ft: l.length_ft,
                is_switch: l.is_switch,
                closed: l.closed,
                device: match l.device {
                    DeviceDoc::Line => LineDevice::Line,
                    DeviceDoc::Regulator => LineDevice::Regulator,
                    DeviceDoc::Transformer => LineDevice::Transformer,
                },
                note: l.note.clone(),
            });
        }
        let loads = self
            .loads
            .iter()
            .map(|x| {
                Ok(LoadSpec {
                    node: x.node.clone(),
                    phase: phase(&x.phase)?,
                    demand: Complex64::new(x.re, x.im),
                    beta_s: x.beta_s,
                    beta_z: x.beta_z,
                    note: x.note.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let caps = self
            .caps
            .iter()
            .map(|x| {
                Ok(CapSpec {
                    node: x.node.clone(),
                    phase: phase(&x.phase)?,
                    c: x.c,
                    note: x.note.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let der = self
            .der
            .iter()
            .map(|x| {
                Ok(DerSpec {
                    node: x.node.clone(),
                    phase: phase(&x.phase)?,
                    capacity: x.capacity,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let vvc = self
            .vvc
            .iter()
            .map(|x| {
                Ok(VvcSpec {
                    node: x.node.clone(),
                    phase: phase(&x.phase)?,
                    q_min: x.q_min,
                    q_max: x.q_max,
                    v_min: x.v_min,
                    v_max: x.v_max,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let parts = NetworkParts {
            name: self.name.clone(),
            bases,
            slack: self.slack.id.clone(),
            slack_voltage: self.slack.voltage.map(|v| v.map(c)).unwrap_or_else(nominal_slack_voltage),
            nodes,
            line_configs,
            lines,
            loads,
            caps,
            der,
            vvc,
        };
        Network::from_parts(parts).context(|| "feeder".to_string())
    }

    /// Inverse of [`FeederDoc::to_network`]: lines that name a construction
    /// are written by reference, all others with their p.u. matrix.
    pub fn from_network(net: &Network) -> FeederDoc {
        let p = net.parts();
        let slack_voltage = if p.slack_voltage == nominal_slack_voltage() {
            None
        } else {
            Some(p.slack_voltage.map(pair))
        };
        FeederDoc {
            provenance: None,
            name: p.name.clone(),
            bases: BasesDoc {
                s_base_va: p.bases.s_base_va,
                v_base_v: p.bases.v_base_v.clone(),
            },
            slack: SlackDoc {
                id: p.slack.clone(),
                voltage: slack_voltage,
            },
            nodes: p
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.clone(),
                    phases: n.phases.to_string(),
                    region: (n.region != DEFAULT_REGION).then(|| n.region.clone()),
                })
                .collect(),
            line_configs: p
                .line_configs
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        ConfigDoc {
                            phases: v.phases.to_string(),
                            z_ohm_per_mile: rows_of(&v.z_ohm_per_mile),
                            note: v.note.clone(),
                        },
                    )
                })
                .collect(),
            lines: p
                .lines
                .iter()
                .map(|l| {
                    let by_ref = l.config.is_some();
                    LineDoc {
                        from: l.from.clone(),
                        to: l.to.clone(),
                        config: l.config.clone(),
                        length_ft: l.length_ft,
                        phases: (!by_ref).then(|| l.phases.to_string()),
                        impedance_pu: (!by_ref).then(|| rows_of(&l.impedance)),
                        is_switch: l.is_switch,
                        closed: l.closed,
                        device: match l.device {
                            LineDevice::Line => DeviceDoc::Line,
                            LineDevice::Regulator => DeviceDoc::Regulator,
                            LineDevice::Transformer => DeviceDoc::Transformer,
                        },
                        note: l.note.clone(),
                    }
                })
                .collect(),
            loads: p
                .loads
                .iter()
                .map(|x| LoadDoc {
                    node: x.node.clone(),
                    phase: x.phase.to_string(),
                    re: x.demand.re,
                    im: x.demand.im,
                    beta_s: x.beta_s,
                    beta_z: x.beta_z,
                    note: x.note.clone(),
                })
                .collect(),
            caps: p
                .caps
                .iter()
                .map(|x| CapDoc {
                    node: x.node.clone(),
                    phase: x.phase.to_string(),
                    c: x.c,
                    note: x.note.clone(),
                })
                .collect(),
            der: p
                .der
                .iter()
                .map(|x| DerDoc {
                    node: x.node.clone(),
                    phase: x.phase.to_string(),
                    capacity: x.capacity,
                })
                .collect(),
            vvc: p
                .vvc
                .iter()
                .map(|x| VvcDoc {
                    node: x.node.clone(),
                    phase: x.phase.to_string(),
                    q_min: x.q_min,
                    q_max: x.q_max,
                    v_min: x.v_min,
                    v_max: x.v_max,
                })
                .collect(),
        }
    }
}

pub fn parse_feeder(text: &str) -> Result<Network> {
    let doc: FeederDoc = serde_json::from_str(text).map_err(|source| Error::Json {
        path: "<input>".into(),
        source,
    })?;
    doc.to_network()
}

pub fn load_feeder(path: &Path) -> Result<Network> {
    let doc: FeederDoc = read_json(path)?;
    doc.to_network().map_err(|e| match e {
        Error::Model { context, source } => Error::Model {
            context: format!("{}: {context}", path.display()),
            source,
        },
        other => other,
    })
}

pub fn save_feeder(net: &Network, path: &Path) -> Result<()> {
    write_json(path, &FeederDoc::from_network(net))
}
