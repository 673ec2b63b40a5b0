use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use num_complex::Complex64;

use super::{line_impedance_pu, LineDevice, LineSpec, LoadSpec, Network, NetworkParts};
use crate::error::{Error, Result};
use crate::phase::Phase;

/// Edits applied by [`Network::apply_modifications`], in order.
#[derive(Clone, Debug, PartialEq)]
pub enum Modification {
    /// Drop the regulator on the edge, keeping the underlying line.
    RemoveRegulator { from: String, to: String },
    /// Replace whatever sits on the edge (transformer, switch, line) by a
    /// plain closed line of the given construction and length.
    ReplaceWithLine {
        from: String,
        to: String,
        config: String,
        length_ft: f64,
    },
    AddSpotLoad {
        node: String,
        phase: Phase,
        demand: Complex64,
        beta_s: f64,
        beta_z: f64,
    },
    /// Multiply every load demand (capacitors are left alone).
    ScaleLoads { factor: f64 },
    /// Override the ZIP split of every load.
    SetLoadModel { beta_s: f64, beta_z: f64 },
}

fn find_line_mut<'a>(parts: &'a mut NetworkParts, a: &str, b: &str) -> Result<&'a mut LineSpec> {
    parts
        .lines
        .iter_mut()
        .find(|l| l.connects(a, b))
        .ok_or_else(|| Error::UnknownElement(format!("line {a}:{b}")))
}

fn apply_one(parts: &mut NetworkParts, m: &Modification) -> Result<()> {
    match m {
        Modification::RemoveRegulator { from, to } => {
            let line = find_line_mut(parts, from, to)?;
            if line.device != LineDevice::Regulator {
                return Err(Error::UnknownElement(format!("regulator on {from}:{to}")));
            }
            line.device = LineDevice::Line;
        }
        Modification::ReplaceWithLine {
            from,
            to,
            config,
            length_ft,
        } => {
            let cfg = parts
                .line_configs
                .get(config)
                .ok_or_else(|| Error::UnknownElement(format!("line config '{config}'")))?
                .clone();
            let region = parts
                .nodes
                .iter()
                .find(|n| &n.id == from)
                .map(|n| n.region.clone())
                .ok_or_else(|| Error::UnknownElement(format!("node '{from}'")))?;
            let z_base = parts.bases.z_base(&region)?;
            let line = find_line_mut(parts, from, to)?;
            line.phases = cfg.phases;
            line.impedance = line_impedance_pu(&cfg, *length_ft, z_base);
            line.config = Some(config.clone());
            line.length_ft = *length_ft;
            line.is_switch = false;
            line.closed = true;
            line.device = LineDevice::Line;
        }
        Modification::AddSpotLoad {
            node,
            phase,
            demand,
            beta_s,
            beta_z,
        } => parts.loads.push(LoadSpec {
            node: node.clone(),
            phase: *phase,
            demand: *demand,
            beta_s: *beta_s,
            beta_z: *beta_z,
            note: None,
        }),
        Modification::ScaleLoads { factor } => {
            if !factor.is_finite() {
                return Err(Error::InvalidValue("load scale factor must be finite".into()));
            }
            for ld in &mut parts.loads {
                ld.demand *= *factor;
            }
        }
        Modification::SetLoadModel { beta_s, beta_z } => {
            for ld in &mut parts.loads {
                ld.beta_s = *beta_s;
                ld.beta_z = *beta_z;
            }
        }
    }
    Ok(())
}

impl Network {
    /// Returns a new network with `mods` applied in order; `self` is untouched.
    pub fn apply_modifications(&self, mods: &[Modification]) -> Result<Network> {
        let mut parts = self.parts().clone();
        for m in mods {
            apply_one(&mut parts, m)?;
        }
        Network::from_parts(parts)
    }

    /// Renames every node except the slack to `prefix + id`.
    pub fn with_prefix(&self, prefix: &str) -> Result<Network> {
        let slack = self.slack_id().to_string();
        let rename = |id: &String| -> String {
            if *id == slack {
                id.clone()
            } else {
                format!("{prefix}{id}")
            }
        };
        let mut p = self.parts().clone();
        for n in &mut p.nodes {
            n.id = rename(&n.id);
        }
        for l in &mut p.lines {
            l.from = rename(&l.from);
            l.to = rename(&l.to);
        }
        for x in &mut p.loads {
            x.node = rename(&x.node);
        }
        for x in &mut p.caps {
            x.node = rename(&x.node);
        }
        for x in &mut p.der {
            x.node = rename(&x.node);
        }
        for x in &mut p.vvc {
            x.node = rename(&x.node);
        }
        Network::from_parts(p)
    }

    /// Adds an extra switch edge (stored open unless `closed` is set on it).
    pub fn with_switch(&self, switch: LineSpec) -> Result<Network> {
        let mut p = self.parts().clone();
        if !p.nodes.iter().any(|n| n.id == switch.from) || !p.nodes.iter().any(|n| n.id == switch.to) {
            return Err(Error::UnknownElement(format!("switch endpoint of {}", switch.key())));
        }
        let mut sw = switch;
        sw.is_switch = true;
        p.lines.push(sw);
        Network::from_parts(p)
    }
}

/// Joins two feeders sharing the same slack bus and adds `switch` between them.
pub fn merge_with_switch(net1: &Network, net2: &Network, switch: LineSpec) -> Result<Network> {
    let (a, b) = (net1.parts(), net2.parts());
    if a.slack != b.slack {
        return Err(Error::IdCollision(format!("slack ids differ ('{}' vs '{}')", a.slack, b.slack)));
    }
    if a.slack_voltage != b.slack_voltage {
        return Err(Error::InvalidValue("slack voltages differ".into()));
    }
    if a.bases != b.bases {
        return Err(Error::InvalidValue("per-unit bases differ".into()));
    }
    for n in b.nodes.iter().filter(|n| n.id != b.slack) {
        if a.nodes.iter().any(|m| m.id == n.id) {
            return Err(Error::IdCollision(format!("node '{}'", n.id)));
        }
    }
    let mut configs: BTreeMap<String, _> = a.line_configs.clone();
    for (k, v) in &b.line_configs {
        match configs.get(k) {
            Some(existing) if existing != v => return Err(Error::IdCollision(format!("line config '{k}'"))),
            _ => {
                configs.insert(k.clone(), v.clone());
            }
        }
    }
    let name = match (&a.name, &b.name) {
        (Some(x), Some(y)) => Some(format!("{x}+{y}")),
        _ => None,
    };
    let parts = NetworkParts {
        name,
        bases: a.bases.clone(),
        slack: a.slack.clone(),
        slack_voltage: a.slack_voltage,
        nodes: a.nodes.iter().chain(b.nodes.iter().filter(|n| n.id != b.slack)).cloned().collect(),
        line_configs: configs,
        lines: a.lines.iter().chain(&b.lines).cloned().collect(),
        loads: a.loads.iter().chain(&b.loads).cloned().collect(),
        caps: a.caps.iter().chain(&b.caps).cloned().collect(),
        der: a.der.iter().chain(&b.der).cloned().collect(),
        vvc: a.vvc.iter().chain(&b.vvc).cloned().collect(),
    };
    let merged = Network::from_parts(parts)?;
    merged.with_switch(switch)
}

/// Closes the open switch joining `a` and `b`.
pub fn close_switch(net: &Network, a: &str, b: &str) -> Result<Network> {
    let mut p = net.parts().clone();
    let line = p
        .lines
        .iter_mut()
        .find(|l| l.connects(a, b) && l.is_switch)
        .ok_or_else(|| Error::UnknownElement(format!("switch {a}:{b}")))?;
    if line.closed {
        return Err(Error::SwitchState(format!("switch {a}:{b} is already closed")));
    }
    line.closed = true;
    Network::from_parts(p)
}

/// Parses `"from:to"`.
pub fn split_pair(s: &str) -> Result<(String, String)> {
    let mut it = s.splitn(2, ':');
    match (it.next(), it.next()) {
        (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(Error::schema(format!("expected 'from:to', got '{s}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::*;
    use super::*;

    fn feeder() -> Network {
        let mut p = parts(
            vec![node(SLACK_ID, "abc"), node("650", "abc"), node("680", "abc")],
            vec![
                LineSpec::with_impedance(SLACK_ID, "650", PhaseSet::ABC, diag3(0.001, 0.002)),
                LineSpec::with_impedance("650", "680", PhaseSet::ABC, diag3(0.01, 0.02)),
            ],
        );
        p.loads.push(load("680", Phase::A, 0.1, 0.05, 1.0));
        p.loads.push(load("680", Phase::C, 0.2, 0.05, 1.0));
        Network::from_parts(p).unwrap()
    }

    fn switch(a: &str, b: &str) -> LineSpec {
        let mut s = LineSpec::with_impedance(a, b, PhaseSet::ABC, diag3(0.01, 0.02));
        s.closed = false;
        s
    }

    #[test]
    fn scale_loads_identity_and_purity() {
        let net = feeder();
        let same = net.apply_modifications(&[Modification::ScaleLoads { factor: 1.0 }]).unwrap();
        assert_eq!(same, net);
        let scaled = net.apply_modifications(&[Modification::ScaleLoads { factor: 0.75 }]).unwrap();
        assert!((scaled.loads()[1].demand - Complex64::new(0.15, 0.0375)).norm() < 1e-15);
        assert_eq!(net.loads()[1].demand, Complex64::new(0.2, 0.05));
    }

    #[test]
    fn unknown_element_in_modification() {
        let net = feeder();
        let err = net.apply_modifications(&[Modification::RemoveRegulator {
            from: "650".into(),
            to: "680".into(),
        }]);
        assert!(matches!(err, Err(Error::UnknownElement(_))));
    }

    #[test]
    fn merge_close_cycle() {
        let n1 = feeder().with_prefix("1").unwrap();
        let n2 = feeder().with_prefix("2").unwrap();
        let merged = merge_with_switch(&n1, &n2, switch("1680", "2680")).unwrap();
        assert_eq!(merged.nodes().len(), 5);
        assert_eq!(merged.open_switches().len(), 1);
        let closed = close_switch(&merged, "1680", "2680").unwrap();
        assert_eq!(closed.open_switches().len(), 0);
        assert_eq!(merged.open_switches().len(), 1);
        assert!(matches!(close_switch(&closed, "1680", "2680"), Err(Error::SwitchState(_))));
        assert!(matches!(close_switch(&closed, "1650", "2650"), Err(Error::UnknownElement(_))));
    }

    #[test]
    fn merging_with_itself_collides() {
        let n1 = feeder().with_prefix("1").unwrap();
        assert!(matches!(
            merge_with_switch(&n1, &n1, switch("1680", "1650")),
            Err(Error::IdCollision(_))
        ));
    }

    #[test]
    fn merge_rejects_missing_endpoint() {
        let n1 = feeder().with_prefix("1").unwrap();
        let n2 = feeder().with_prefix("2").unwrap();
        assert!(matches!(
            merge_with_switch(&n1, &n2, switch("1680", "2999")),
            Err(Error::UnknownElement(_))
        ));
    }

    #[test]
    fn network_is_shareable() {
        fn f<T: Send + Sync>() {}
        f::<Network>();
    }

    #[test]
    fn split_pair_parses() {
        assert_eq!(split_pair("1680:2680").unwrap(), ("1680".into(), "2680".into()));
        assert!(split_pair("1680").is_err());
    }
}
