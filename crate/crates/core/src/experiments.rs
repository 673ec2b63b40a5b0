//! Monte Carlo accuracy study of the linear model and switching scenarios.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::{open_line_flow, solve_exact, PhasorSolution, SolverOptions};
use crate::feeder::{close_switch, LoadSpec, Network, Setpoints};
use crate::linear::{solve_linear, LinearSolution};
use crate::opf::{build_opf, kkt_check, solve_opf_with, AdmmOptions, Dispatch, KktReport, Weights};
use crate::phase::Phase;

/// Worst-case deviations of the linear model from the exact solution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorMetrics {
    pub eps_mag: f64,
    pub eps_angle_deg: f64,
    pub eps_power: f64,
}

/// Wraps an angle difference to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = libm::fmod(a + PI, 2.0 * PI);
    if x <= 0.0 {
        x += 2.0 * PI;
    }
    x - PI
}

pub fn error_metrics(net: &Network, exact: &PhasorSolution, approx: &LinearSolution) -> Result<ErrorMetrics> {
    let npi = net.node_phases();
    if *exact.index() != npi || *approx.index() != npi || exact.line_power.len() != approx.p.len() {
        return Err(Error::DimensionMismatch("solutions do not share the network topology".into()));
    }
    let mut m = ErrorMetrics::default();
    for k in 0..npi.len() {
        let v = exact.voltages[k];
        m.eps_mag = m.eps_mag.max((v.norm() - libm::sqrt(approx.e[k])).abs());
        m.eps_angle_deg = m.eps_angle_deg.max(wrap_angle(v.arg() - approx.theta[k]).abs().to_degrees());
    }
    for (li, l) in net.active_lines() {
        for p in l.phases.iter() {
            let s = exact.line_power[li][p.index()];
            let lin = Complex64::new(approx.p[li][p.index()], approx.q[li][p.index()]);
            m.eps_power = m.eps_power.max((s - lin).norm());
        }
    }
    Ok(m)
}

/// `Σ_φ |S^φ|` over the closed lines leaving the slack bus.
pub fn substation_power(net: &Network, sol: &PhasorSolution) -> f64 {
    let slack = net.slack_id();
    net.active_lines()
        .filter(|(_, l)| l.from == slack || l.to == slack)
        .map(|(li, l)| l.phases.iter().map(|p| sol.line_power[li][p.index()].norm()).sum::<f64>())
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRecord {
    pub dr_max: f64,
    pub di_max: f64,
    pub cell: usize,
    pub scenario: usize,
    /// False when the exact solver failed; the error fields are then NaN.
    pub converged: bool,
    pub eps_mag: f64,
    pub eps_angle_deg: f64,
    pub eps_power: f64,
    pub substation_power: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloConfig {
    pub dr_values: Vec<f64>,
    pub di_values: Vec<f64>,
    pub per_cell: usize,
    pub seed: u64,
    pub beta_s: f64,
    pub beta_z: f64,
    pub solver: SolverOptions,
}

impl MonteCarloConfig {
    /// `{0, step, 2 step, ..., max}` on both axes.
    pub fn uniform_grid(max: f64, step: f64, per_cell: usize, seed: u64) -> Self {
        let n = libm::round(max / step) as usize;
        let values: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        MonteCarloConfig {
            dr_values: values.clone(),
            di_values: values,
            per_cell,
            seed,
            beta_s: 0.85,
            beta_z: 0.15,
            solver: SolverOptions::default(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.dr_values.len() * self.di_values.len()
    }

    pub fn cell_bounds(&self, cell: usize) -> (f64, f64) {
        let n = self.di_values.len();
        (self.dr_values[cell / n], self.di_values[cell % n])
    }

    /// Generator of one cell: the global seed, on a stream numbered by the cell.
    pub fn cell_rng(&self, cell: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(cell as u64);
        rng
    }
}

/// Distinct `(node, phase)` channels carrying a load, in first-seen order.
pub fn load_channels(net: &Network) -> Vec<(String, Phase)> {
    let mut out: Vec<(String, Phase)> = Vec::new();
    for ld in net.loads() {
        if !out.iter().any(|(n, p)| *n == ld.node && *p == ld.phase) {
            out.push((ld.node.clone(), ld.phase));
        }
    }
    out
}

/// Replaces every load by one sampled demand per channel.
pub fn sample_loads(
    base: &Network,
    channels: &[(String, Phase)],
    dr_max: f64,
    di_max: f64,
    beta: (f64, f64),
    rng: &mut impl Rng,
) -> Result<Network> {
    let mut p = base.parts().clone();
    p.loads = channels
        .iter()
        .map(|(node, phase)| {
            let re = rng.random::<f64>() * dr_max;
            let im = rng.random::<f64>() * di_max;
            LoadSpec {
                node: node.clone(),
                phase: *phase,
                demand: Complex64::new(re, im),
                beta_s: beta.0,
                beta_z: beta.1,
                note: None,
            }
        })
        .collect();
    Network::from_parts(p)
}

/// Runs every scenario of one grid cell.
pub fn monte_carlo_cell(base: &Network, cfg: &MonteCarloConfig, cell: usize) -> Result<Vec<ErrorRecord>> {
    let channels = load_channels(base);
    let (dr, di) = cfg.cell_bounds(cell);
    let mut rng = cfg.cell_rng(cell);
    let mut out = Vec::with_capacity(cfg.per_cell);
    for scenario in 0..cfg.per_cell {
        let net = sample_loads(base, &channels, dr, di, (cfg.beta_s, cfg.beta_z), &mut rng)?;
        let rec = match solve_exact(&net, &Setpoints::zero(), &cfg.solver) {
            Ok(exact) => {
                let lin = solve_linear(&net, &Setpoints::zero())?;
                let m = error_metrics(&net, &exact, &lin)?;
                ErrorRecord {
                    dr_max: dr,
                    di_max: di,
                    cell,
                    scenario,
                    converged: true,
                    eps_mag: m.eps_mag,
                    eps_angle_deg: m.eps_angle_deg,
                    eps_power: m.eps_power,
                    substation_power: substation_power(&net, &exact),
                }
            }
            Err(Error::NonConvergence { .. }) | Err(Error::SingularJacobian { .. }) => ErrorRecord {
                dr_max: dr,
                di_max: di,
                cell,
                scenario,
                converged: false,
                eps_mag: f64::NAN,
                eps_angle_deg: f64::NAN,
                eps_power: f64::NAN,
                substation_power: f64::NAN,
            },
            Err(e) => return Err(e),
        };
        out.push(rec);
    }
    Ok(out)
}

/// All cells in order. Cells are independent; see [`monte_carlo_cell`].
pub fn monte_carlo(base: &Network, cfg: &MonteCarloConfig) -> Result<Vec<ErrorRecord>> {
    let mut out = Vec::with_capacity(cfg.n_cells() * cfg.per_cell);
    for cell in 0..cfg.n_cells() {
        out.extend(monte_carlo_cell(base, cfg, cell)?);
    }
    Ok(out)
}

/// Largest errors among converged records with `S_sub <= limit`.
pub fn envelope(records: &[ErrorRecord], limit: f64) -> ErrorMetrics {
    records
        .iter()
        .filter(|r| r.converged && r.substation_power <= limit)
        .fold(ErrorMetrics::default(), |m, r| ErrorMetrics {
            eps_mag: m.eps_mag.max(r.eps_mag),
            eps_angle_deg: m.eps_angle_deg.max(r.eps_angle_deg),
            eps_power: m.eps_power.max(r.eps_power),
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlCase {
    NoControl,
    MagnitudeControl,
    PhasorControl,
}

impl ControlCase {
    pub const ALL: [ControlCase; 3] = [ControlCase::NoControl, ControlCase::MagnitudeControl, ControlCase::PhasorControl];

    pub fn weights(self) -> Option<Weights> {
        match self {
            ControlCase::NoControl => None,
            ControlCase::MagnitudeControl => Some(Weights::new(1000.0, 0.0, 1.0)),
            ControlCase::PhasorControl => Some(Weights::new(1000.0, 1000.0, 1.0)),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ControlCase::NoControl => "NC",
            ControlCase::MagnitudeControl => "MC",
            ControlCase::PhasorControl => "PC",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        ControlCase::ALL.into_iter().find(|c| c.label().eq_ignore_ascii_case(s))
    }
}

/// Switch-terminal quantities on one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalPhase {
    pub phase: Phase,
    pub v_k1: Complex64,
    pub v_k2: Complex64,
    /// `|V_k1| - |V_k2|`.
    pub mag_diff: f64,
    /// `θ_k1 - θ_k2` in degrees.
    pub angle_diff_deg: f64,
    /// Power arriving at `k2` over the switch, from the meshed solve after closing.
    pub closed_flow: Complex64,
    /// Sending-end power predicted from the open-switch voltages alone,
    /// ignoring the network's response to the closure.
    pub open_estimate: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub case: ControlCase,
    /// `(node, phase, w)` per DER channel; zeros for no control.
    pub dispatch: Vec<(String, Phase, Complex64)>,
    pub opf: Option<Dispatch>,
    pub kkt: Option<KktReport>,
    /// Volt-var outputs at the open-switch operating point.
    pub vvc_q: Vec<f64>,
    pub terminals: Vec<TerminalPhase>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioReport {
    pub k1: String,
    pub k2: String,
    pub cases: Vec<CaseReport>,
}

impl ScenarioReport {
    pub fn case(&self, c: ControlCase) -> Option<&CaseReport> {
        self.cases.iter().find(|r| r.case == c)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioOptions {
    pub solver: SolverOptions,
    pub admm: AdmmOptions,
}

/// Dispatches, evaluates the open switch exactly, then closes it and
/// re-solves, once per case.
pub fn run_switch_scenario(net: &Network, k1: &str, k2: &str, cases: &[ControlCase], opts: &ScenarioOptions) -> Result<ScenarioReport> {
    let li = net
        .find_line(k1, k2)
        .filter(|&i| net.lines()[i].is_switch)
        .ok_or_else(|| Error::UnknownElement(format!("switch {k1}:{k2}")))?;
    let sw = &net.lines()[li];
    if sw.closed {
        return Err(Error::SwitchState(format!("switch {k1}:{k2} is already closed")));
    }
    let closed = close_switch(net, k1, k2)?;
    let (i1, i2) = (net.require_node(k1)?, net.require_node(k2)?);
    let targets = [(k1.to_string(), k2.to_string())];

    let mut reports = Vec::new();
    for &case in cases {
        let tag = |e: Error| e.in_case(format!("{} case, switch {k1}:{k2}", case.label()));
        let (w, opf, kkt) = match case.weights() {
            None => (Setpoints::zero(), None, None),
            Some(weights) => {
                let prob = build_opf(net, &targets, weights).map_err(tag)?;
                let d = solve_opf_with(&prob, &opts.admm).map_err(tag)?;
                let report = kkt_check(&prob, &d).map_err(tag)?;
                (prob.setpoints(&d.channel_values), Some(d), Some(report))
            }
        };
        let dispatch = net
            .der()
            .iter()
            .map(|d| (d.node.clone(), d.phase, w.get(&d.node, d.phase)))
            .collect();
        let open_sol = solve_exact(net, &w, &opts.solver).map_err(tag)?;
        let closed_sol = solve_exact(&closed, &w, &opts.solver).map_err(tag)?;
        let (v1, v2): (Vec<Complex64>, Vec<Complex64>) = sw
            .phases
            .iter()
            .map(|p| (open_sol.voltage(i1, p).unwrap(), open_sol.voltage(i2, p).unwrap()))
            .unzip();
        // Y is symmetric, so the stored line direction does not matter here
        let estimate = open_line_flow(sw, &v1, &v2).map_err(tag)?;
        let sign = if sw.from == k1 { 1.0 } else { -1.0 };
        let terminals = sw
            .phases
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (a, b) = (v1[i], v2[i]);
                TerminalPhase {
                    phase: p,
                    v_k1: a,
                    v_k2: b,
                    mag_diff: a.norm() - b.norm(),
                    angle_diff_deg: wrap_angle(a.arg() - b.arg()).to_degrees(),
                    closed_flow: closed_sol.voltage(i2, p).unwrap() * (closed_sol.currents[li][p.index()] * sign).conj(),
                    open_estimate: estimate[i],
                }
            })
            .collect();
        reports.push(CaseReport {
            case,
            dispatch,
            opf,
            kkt,
            vvc_q: open_sol.vvc_q,
            terminals,
        });
    }
    Ok(ScenarioReport {
        k1: k1.into(),
        k2: k2.into(),
        cases: reports,
    })
}

/// Runs [`run_switch_scenario`] for each switch in order, closing it before
/// moving on, so later actions see the meshed topology.
pub fn run_sequential_switching(
    net: &Network,
    switches: &[(String, String)],
    cases: &[ControlCase],
    opts: &ScenarioOptions,
) -> Result<Vec<ScenarioReport>> {
    let mut current = net.clone();
    let mut out = Vec::with_capacity(switches.len());
    for (a, b) in switches {
        out.push(run_switch_scenario(&current, a, b, cases, opts)?);
        current = close_switch(&current, a, b)?;
    }
    Ok(out)
}
