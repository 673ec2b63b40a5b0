//! Switching-scenario specifications and their JSON reports.
//!
//! A spec either points at a complete feeder, or at a base feeder plus a
//! modification script that is copied once per entry of `copies`, renamed
//! with the copy prefix, rescaled, and joined by the listed switches.

use std::path::{Path, PathBuf};

use phasorflow_core::experiments::{run_sequential_switching, CaseReport, ControlCase, ScenarioOptions, ScenarioReport};
use phasorflow_core::feeder::{line_impedance_pu, merge_with_switch, DerSpec, LineSpec, Modification, VvcSpec};
use phasorflow_core::opf::AdmmOptions;
use phasorflow_core::{Network, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::error::{Context, Error, Result};
use crate::io::read_json;
use crate::mods::ModsDoc;
use crate::schema::load_feeder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Feeder file, relative to the spec file.
    pub feeder: PathBuf,
    /// Modification scripts, applied in order before copying.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modifications: Vec<PathBuf>,
    #[serde(default)]
    pub copies: Vec<CopySpec>,
    #[serde(default)]
    pub switches: Vec<SwitchSpec>,
    #[serde(default)]
    pub der: Vec<DerGroup>,
    #[serde(default)]
    pub vvc: Vec<VvcGroup>,
    /// Switches to close, in order, as `[from, to]`.
    pub actions: Vec<[String; 2]>,
    #[serde(default = "all_cases")]
    pub cases: Vec<String>,
}

fn all_cases() -> Vec<String> {
    ControlCase::ALL.iter().map(|c| c.label().to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopySpec {
    pub prefix: String,
    #[serde(default = "one")]
    pub scale_loads: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub from: String,
    pub to: String,
    pub config: String,
    pub length_ft: f64,
}

/// DER on the listed phases of `node` (every phase of the node when absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerGroup {
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<String>,
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VvcGroup {
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<String>,
    pub q_min: f64,
    pub q_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

fn phases_at(net: &Network, node: &str, phases: &Option<String>) -> Result<Vec<phasorflow_core::Phase>> {
    let n = net
        .node(node)
        .ok_or_else(|| Error::model("scenario", phasorflow_core::Error::UnknownElement(format!("node '{node}'"))))?;
    let set = match phases {
        Some(p) => crate::schema::phase_set(p)?,
        None => n.phases,
    };
    Ok(set.iter().collect())
}

/// Open switch built from a construction found in any of `nets`; the
/// impedance uses the voltage region of the `from` node.
fn switch_line(nets: &[&Network], s: &SwitchSpec) -> Result<LineSpec> {
    let what = || format!("switch {}:{}", s.from, s.to);
    let unknown = |x: String| Error::model(what(), phasorflow_core::Error::UnknownElement(x));
    let cfg = nets
        .iter()
        .find_map(|n| n.line_configs().get(&s.config))
        .ok_or_else(|| unknown(format!("line config '{}'", s.config)))?;
    let (net, node) = nets
        .iter()
        .find_map(|n| n.node(&s.from).map(|x| (n, x)))
        .ok_or_else(|| unknown(format!("node '{}'", s.from)))?;
    let z_base = net.bases().z_base(&node.region).context(what)?;
    let mut line = LineSpec::with_impedance(&s.from, &s.to, cfg.phases, line_impedance_pu(cfg, s.length_ft, z_base));
    line.config = Some(s.config.clone());
    line.length_ft = s.length_ft;
    line.is_switch = true;
    line.closed = false;
    Ok(line)
}

impl ScenarioSpec {
    pub fn load(path: &Path) -> Result<ScenarioSpec> {
        read_json(path)
    }

    pub fn case_list(&self) -> Result<Vec<ControlCase>> {
        self.cases
            .iter()
            .map(|c| {
                ControlCase::from_label(c).ok_or_else(|| Error::Config(format!("unknown control case '{c}' (expected NC, MC or PC)")))
            })
            .collect()
    }

    /// Assembles the network described by the spec; relative paths are
    /// resolved against `base_dir`.
    pub fn build_network(&self, base_dir: &Path) -> Result<Network> {
        let mut net = load_feeder(&base_dir.join(&self.feeder))?;
        for m in &self.modifications {
            let mods = ModsDoc::load(&base_dir.join(m))?.to_modifications()?;
            net = net.apply_modifications(&mods).context(|| format!("modifications {}", m.display()))?;
        }
        if !self.copies.is_empty() {
            if self.switches.len() + 1 < self.copies.len() {
                return Err(Error::Config("joining n copies needs at least n - 1 switches".into()));
            }
            let copies = self
                .copies
                .iter()
                .map(|c| {
                    net.with_prefix(&c.prefix)
                        .and_then(|n| n.apply_modifications(&[Modification::ScaleLoads { factor: c.scale_loads }]))
                        .context(|| format!("copy '{}'", c.prefix))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut merged = copies[0].clone();
            for (i, next) in copies.iter().enumerate().skip(1) {
                let sw = switch_line(&[&merged, next], &self.switches[i - 1])?;
                merged = merge_with_switch(&merged, next, sw).context(|| format!("merging copy '{}'", self.copies[i].prefix))?;
            }
            net = merged;
        }
        let joined = self.copies.len().saturating_sub(1);
        for sw in &self.switches[joined..] {
            net = net.with_switch(switch_line(&[&net], sw)?).context(|| format!("switch {}:{}", sw.from, sw.to))?;
        }
        if !self.der.is_empty() || !self.vvc.is_empty() {
            let mut p = net.parts().clone();
            for g in &self.der {
                for ph in phases_at(&net, &g.node, &g.phases)? {
                    p.der.push(DerSpec {
                        node: g.node.clone(),
                        phase: ph,
                        capacity: g.capacity,
                    });
                }
            }
            for g in &self.vvc {
                for ph in phases_at(&net, &g.node, &g.phases)? {
                    p.vvc.push(VvcSpec {
                        node: g.node.clone(),
                        phase: ph,
                        q_min: g.q_min,
                        q_max: g.q_max,
                        v_min: g.v_min,
                        v_max: g.v_max,
                    });
                }
            }
            net = Network::from_parts(p).context(|| "scenario DER/VVC".to_string())?;
        }
        Ok(net)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polar {
    pub mag: f64,
    pub angle_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalRow {
    pub phase: String,
    pub v_k1: Polar,
    pub v_k2: Polar,
    pub mag_diff: f64,
    pub angle_diff_deg: f64,
    /// Power arriving at `k2` after closing, `[P, Q]` in p.u.
    pub closed_flow: [f64; 2],
    /// Power leaving `k1` predicted from the open-switch voltages alone.
    pub open_estimate: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchRow {
    pub node: String,
    pub phase: String,
    pub w: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpfSummary {
    pub objective: f64,
    pub c_e: f64,
    pub c_theta: f64,
    pub c_w: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt_stationarity: f64,
    pub kkt_primal: f64,
    pub kkt_complementarity: f64,
    pub kkt_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseBlock {
    pub case: String,
    pub terminals: Vec<TerminalRow>,
    pub dispatch: Vec<DispatchRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opf: Option<OpfSummary>,
    /// `[node, phase, q]` for each volt-var unit at the open-switch point.
    pub vvc_q: Vec<(String, String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBlock {
    pub k1: String,
    pub k2: String,
    pub cases: Vec<CaseBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub actions: Vec<ActionBlock>,
}

impl Report {
    pub fn action(&self, k1: &str, k2: &str) -> Option<&ActionBlock> {
        self.actions.iter().find(|a| a.k1 == k1 && a.k2 == k2)
    }
}

impl ActionBlock {
    pub fn case(&self, label: &str) -> Option<&CaseBlock> {
        self.cases.iter().find(|c| c.case == label)
    }
}

fn case_block(net: &Network, r: &CaseReport) -> CaseBlock {
    CaseBlock {
        case: r.case.label().to_string(),
        terminals: r
            .terminals
            .iter()
            .map(|t| TerminalRow {
                phase: t.phase.to_string(),
                v_k1: Polar {
                    mag: t.v_k1.norm(),
                    angle_deg: t.v_k1.arg().to_degrees(),
                },
                v_k2: Polar {
                    mag: t.v_k2.norm(),
                    angle_deg: t.v_k2.arg().to_degrees(),
                },
                mag_diff: t.mag_diff,
                angle_diff_deg: t.angle_diff_deg,
                closed_flow: [t.closed_flow.re, t.closed_flow.im],
                open_estimate: [t.open_estimate.re, t.open_estimate.im],
            })
            .collect(),
        dispatch: r
            .dispatch
            .iter()
            .map(|(n, p, w)| DispatchRow {
                node: n.clone(),
                phase: p.to_string(),
                w: [w.re, w.im],
            })
            .collect(),
        opf: r.opf.as_ref().map(|d| {
            let k = r.kkt.as_ref().expect("kkt accompanies every dispatch");
            OpfSummary {
                objective: d.objective_value,
                c_e: d.terms.c_e,
                c_theta: d.terms.c_theta,
                c_w: d.terms.c_w,
                iterations: d.stats.iterations,
                primal_residual: d.stats.primal_residual,
                dual_residual: d.stats.dual_residual,
                kkt_stationarity: k.stationarity,
                kkt_primal: k.primal,
                kkt_complementarity: k.complementarity,
                kkt_passed: k.passed(),
            }
        }),
        vvc_q: net
            .vvc()
            .iter()
            .zip(&r.vvc_q)
            .map(|(u, q)| (u.node.clone(), u.phase.to_string(), *q))
            .collect(),
    }
}

pub fn to_report(name: Option<String>, net: &Network, reports: &[ScenarioReport]) -> Report {
    Report {
        name,
        actions: reports
            .iter()
            .map(|s| ActionBlock {
                k1: s.k1.clone(),
                k2: s.k2.clone(),
                cases: s.cases.iter().map(|c| case_block(net, c)).collect(),
            })
            .collect(),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSettings {
    pub solver: SolverOptions,
    pub admm: AdmmOptions,
}

/// Builds the network of `spec_path`, runs every action, and returns the
/// raw reports together with their serializable form.
pub fn run_scenario_file(spec_path: &Path, settings: &RunSettings) -> Result<(Network, Vec<ScenarioReport>, Report)> {
    let spec = ScenarioSpec::load(spec_path)?;
    let dir = spec_path.parent().unwrap_or(Path::new("."));
    let net = spec.build_network(dir)?;
    let cases = spec.case_list()?;
    let actions: Vec<(String, String)> = spec.actions.iter().map(|[a, b]| (a.clone(), b.clone())).collect();
    let opts = ScenarioOptions {
        solver: settings.solver.clone(),
        admm: settings.admm.clone(),
    };
    let raw = run_sequential_switching(&net, &actions, &cases, &opts).context(|| format!("scenario {}", spec_path.display()))?;
    let report = to_report(spec.name.clone(), &net, &raw);
    Ok((net, raw, report))
}
