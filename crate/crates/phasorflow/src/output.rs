//! Tabular and JSON artifacts for single solves and dispatches.

use std::path::Path;

use phasorflow_core::opf::{Dispatch, KktReport, OpfProblem};
use phasorflow_core::{Complex64, LinearSolution, Network, PhasorSolution, Setpoints};
use serde::{Deserialize, Serialize};

use crate::error::{Context, Error, Result};
use crate::io::read_json;
use crate::scenario::DispatchRow;
use crate::schema::phase;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AngleUnit {
    #[default]
    Degrees,
    Radians,
}

impl AngleUnit {
    fn column(self) -> &'static str {
        match self {
            AngleUnit::Degrees => "angle_deg",
            AngleUnit::Radians => "angle_rad",
        }
    }

    fn convert(self, rad: f64) -> f64 {
        match self {
            AngleUnit::Degrees => rad.to_degrees(),
            AngleUnit::Radians => rad,
        }
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

/// Node rows (`kind = node`) followed by line rows (`kind = line`, id `from:to`).
pub fn exact_csv(net: &Network, sol: &PhasorSolution, unit: AngleUnit) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "id", "phase", "mag_pu", unit.column(), "p_pu", "q_pu"])?;
    for (k, (node, p)) in sol.index().iter() {
        let v = sol.voltages[k];
        w.write_record([
            "node".to_string(),
            net.nodes()[node].id.clone(),
            p.to_string(),
            v.norm().to_string(),
            unit.convert(v.arg()).to_string(),
            String::new(),
            String::new(),
        ])?;
    }
    for (li, l) in net.active_lines() {
        for p in l.phases.iter() {
            let s = sol.line_power[li][p.index()];
            w.write_record(["line".to_string(), l.key(), p.to_string(), String::new(), String::new(), s.re.to_string(), s.im.to_string()])?;
        }
    }
    finish(w)
}

pub fn linear_csv(net: &Network, sol: &LinearSolution, unit: AngleUnit) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "id", "phase", "e_pu2", "mag_pu", unit.column(), "p_pu", "q_pu"])?;
    for (k, (node, p)) in sol.index().iter() {
        w.write_record([
            "node".to_string(),
            net.nodes()[node].id.clone(),
            p.to_string(),
            sol.e[k].to_string(),
            sol.e[k].max(0.0).sqrt().to_string(),
            unit.convert(sol.theta[k]).to_string(),
            String::new(),
            String::new(),
        ])?;
    }
    for (li, l) in net.active_lines() {
        for p in l.phases.iter() {
            w.write_record([
                "line".to_string(),
                l.key(),
                p.to_string(),
                String::new(),
                String::new(),
                String::new(),
                sol.p[li][p.index()].to_string(),
                sol.q[li][p.index()].to_string(),
            ])?;
        }
    }
    finish(w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchDoc {
    pub targets: Vec<[String; 2]>,
    pub weights: [f64; 3],
    pub dispatch: Vec<DispatchRow>,
    pub objective: ObjectiveDoc,
    pub solver: SolverDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveDoc {
    pub value: f64,
    pub c_e: f64,
    pub c_theta: f64,
    pub c_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDoc {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt_stationarity: f64,
    pub kkt_primal: f64,
    pub kkt_complementarity: f64,
    pub kkt_passed: bool,
}

pub fn dispatch_doc(prob: &OpfProblem, targets: &[(String, String)], d: &Dispatch, kkt: &KktReport) -> DispatchDoc {
    DispatchDoc {
        targets: targets.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
        weights: [prob.weights.rho_e, prob.weights.rho_theta, prob.weights.rho_w],
        dispatch: prob
            .channels
            .iter()
            .zip(&d.channel_values)
            .map(|((n, p, _), w)| DispatchRow {
                node: n.clone(),
                phase: p.to_string(),
                w: [w.re, w.im],
            })
            .collect(),
        objective: ObjectiveDoc {
            value: d.objective_value,
            c_e: d.terms.c_e,
            c_theta: d.terms.c_theta,
            c_w: d.terms.c_w,
        },
        solver: SolverDoc {
            iterations: d.stats.iterations,
            primal_residual: d.stats.primal_residual,
            dual_residual: d.stats.dual_residual,
            kkt_stationarity: kkt.stationarity,
            kkt_primal: kkt.primal,
            kkt_complementarity: kkt.complementarity,
            kkt_passed: kkt.passed(),
        },
    }
}

/// Reads the `dispatch` rows of a dispatch document and checks them
/// against the feeder's DER.
pub fn load_setpoints(path: &Path, net: &Network) -> Result<Setpoints> {
    #[derive(Deserialize)]
    struct Rows {
        dispatch: Vec<DispatchRow>,
    }
    let rows: Rows = read_json(path)?;
    let mut w = Setpoints::zero();
    for r in rows.dispatch {
        w.insert(&r.node, phase(&r.phase)?, Complex64::new(r.w[0], r.w[1]));
    }
    w.check_against(net).context(|| format!("dispatch {}", path.display()))?;
    Ok(w)
}
