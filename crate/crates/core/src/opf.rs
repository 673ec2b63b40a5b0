//! Phasor-tracking OPF over the linear model.
//!
//! The linear model is affine in the DER setpoints, so the equality
//! constraints are eliminated once: `x(w) = x0 + G w`. What remains is a
//! small convex QP in `w = (u, v)` per channel with a disk per channel and a
//! box on every non-slack squared magnitude. It is solved by ADMM with the
//! splitting `z = A w`, `A = [I; D]`, where every projection is closed form.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::feeder::{Network, Setpoints};
use crate::linalg::{DenseMatrix, Lu};
use crate::linear::{assemble, LinearSolution, LinearSystem};
use crate::phase::Phase;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights {
    pub rho_e: f64,
    pub rho_theta: f64,
    pub rho_w: f64,
}

impl Weights {
    pub const fn new(rho_e: f64, rho_theta: f64, rho_w: f64) -> Self {
        Weights { rho_e, rho_theta, rho_w }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.rho_e, self.rho_theta, self.rho_w];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidValue("objective weights must be finite and nonnegative".into()));
        }
        if all.iter().all(|r| *r == 0.0) {
            return Err(Error::DegenerateWeights);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmmOptions {
    /// ADMM penalty.
    pub rho: f64,
    pub sigma: f64,
    pub relaxation: f64,
    /// Absolute and relative tolerance on primal and dual residuals.
    pub eps: f64,
    pub max_iterations: usize,
    /// Tolerance for the primal infeasibility certificate.
    pub eps_infeasible: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 1.0,
            sigma: 1e-6,
            relaxation: 1.6,
            eps: 1e-9,
            max_iterations: 200_000,
            eps_infeasible: 1e-7,
        }
    }
}

pub const DEFAULT_E_MIN: f64 = 0.9025;
pub const DEFAULT_E_MAX: f64 = 1.1025;

/// Reduced convex program, ready to solve.
#[derive(Clone, Debug)]
pub struct OpfProblem {
    /// Target pairs by node index.
    pub targets: Vec<(usize, usize)>,
    pub weights: Weights,
    pub e_min: f64,
    pub e_max: f64,
    /// `(node id, phase, capacity)` per channel.
    pub channels: Vec<(String, Phase, f64)>,
    /// Node-phase pairs whose differences enter the objective.
    pairs: Vec<(usize, usize)>,
    system: LinearSystem,
    x0: Vec<f64>,
    /// `∂x/∂w`, one column per real decision variable (u then v per channel).
    g: DenseMatrix<f64>,
    hessian: DenseMatrix<f64>,
    linear: Vec<f64>,
    /// Normalized box rows `lo <= d·w <= hi` over non-slack magnitudes.
    box_rows: Vec<BoxRow>,
}

#[derive(Clone, Debug)]
struct BoxRow {
    label: String,
    coef: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Objective pieces `(C_E, C_θ, C_w)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Terms {
    pub c_e: f64,
    pub c_theta: f64,
    pub c_w: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dispatch {
    /// Complex setpoint per channel, in [`OpfProblem::channels`] order.
    pub channel_values: Vec<Complex64>,
    pub objective_value: f64,
    pub terms: Terms,
    /// Multipliers of `A w`: two per channel (disk), then one per box row.
    pub duals: Vec<f64>,
    pub stats: SolverStats,
}

pub fn build_opf(net: &Network, targets: &[(String, String)], weights: Weights) -> Result<OpfProblem> {
    build_opf_with_bounds(net, targets, weights, DEFAULT_E_MIN, DEFAULT_E_MAX)
}

pub fn build_opf_with_bounds(
    net: &Network,
    targets: &[(String, String)],
    weights: Weights,
    e_min: f64,
    e_max: f64,
) -> Result<OpfProblem> {
    weights.validate()?;
    if !(e_min < e_max) {
        return Err(Error::InvalidValue(format!("voltage bounds [{e_min}, {e_max}] are empty")));
    }
    let npi = net.node_phases();
    let mut target_idx = Vec::new();
    let mut pairs = Vec::new();
    for (a, b) in targets {
        let (ia, ib) = (net.require_node(a)?, net.require_node(b)?);
        let common = net.nodes()[ia].phases.intersection(net.nodes()[ib].phases);
        if common.is_empty() {
            return Err(Error::EmptyTargetPhases(format!("{a}:{b}")));
        }
        for p in common.iter() {
            pairs.push((npi.get(ia, p).unwrap(), npi.get(ib, p).unwrap()));
        }
        target_idx.push((ia, ib));
    }

    let system = assemble(net, &Setpoints::zero())?;
    let lu = system.factor(net)?;
    let x0 = lu.solve(&system.rhs);
    let channels: Vec<(String, Phase, f64)> =
        net.der().iter().map(|d| (d.node.clone(), d.phase, d.capacity)).collect();
    let nv = 2 * channels.len();
    let mut g = DenseMatrix::zeros(system.dim(), nv);
    for (c, (node, ph, _)) in channels.iter().enumerate() {
        let k = npi.get(net.node_index(node).unwrap(), *ph).unwrap();
        let (re_row, im_row) = system.balance_rows(k);
        for (off, row) in [(0, re_row), (1, im_row)] {
            let mut e = vec![0.0; system.dim()];
            e[row] = 1.0;
            let col = lu.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                g[(i, 2 * c + off)] = v;
            }
        }
    }

    let mut hessian = DenseMatrix::zeros(nv, nv);
    let mut linear = vec![0.0; nv];
    for &(k1, k2) in &pairs {
        for (rho, c1, c2) in [
            (weights.rho_e, system.e_col(k1), system.e_col(k2)),
            (weights.rho_theta, system.theta_col(k1), system.theta_col(k2)),
        ] {
            if rho == 0.0 {
                continue;
            }
            let a0 = x0[c1] - x0[c2];
            let a: Vec<f64> = (0..nv).map(|j| g[(c1, j)] - g[(c2, j)]).collect();
            for i in 0..nv {
                linear[i] += 2.0 * rho * a0 * a[i];
                for j in 0..nv {
                    hessian[(i, j)] += 2.0 * rho * a[i] * a[j];
                }
            }
        }
    }
    for i in 0..nv {
        hessian[(i, i)] += 2.0 * weights.rho_w;
    }

    let mut box_rows = Vec::new();
    for (k, _) in npi.iter().filter(|(k, _)| !system.is_slack(*k)) {
        let col = system.e_col(k);
        let coef: Vec<f64> = (0..nv).map(|j| g[(col, j)]).collect();
        let norm = libm::sqrt(coef.iter().map(|c| c * c).sum::<f64>());
        if norm <= 1e-12 {
            // insensitive to every DER; only the uncontrolled value matters
            if x0[col] < e_min - 1e-12 || x0[col] > e_max + 1e-12 {
                let (n, p) = npi.entry(k);
                return Err(Error::Infeasible(format!(
                    "voltage bound at node {} phase {p} cannot be met by any dispatch (E = {})",
                    net.nodes()[n].id,
                    x0[col]
                )));
            }
            continue;
        }
        let (n, p) = npi.entry(k);
        box_rows.push(BoxRow {
            label: format!("{}.{p}", net.nodes()[n].id),
            coef: coef.iter().map(|c| c / norm).collect(),
            lo: (e_min - x0[col]) / norm,
            hi: (e_max - x0[col]) / norm,
        });
    }

    Ok(OpfProblem {
        targets: target_idx,
        weights,
        e_min,
        e_max,
        channels,
        pairs,
        system,
        x0,
        g,
        hessian,
        linear,
        box_rows,
    })
}

fn flatten(values: &[Complex64]) -> Vec<f64> {
    values.iter().flat_map(|c| [c.re, c.im]).collect()
}

impl OpfProblem {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Number of rows of `A w`.
    pub fn n_constraints(&self) -> usize {
        2 * self.channels.len() + self.box_rows.len()
    }

    /// Linear-model state for the given channel values.
    pub fn state(&self, values: &[Complex64]) -> Vec<f64> {
        let w = flatten(values);
        let gw = self.g.mul_vec(&w);
        self.x0.iter().zip(gw).map(|(a, b)| a + b).collect()
    }

    pub fn linear_solution(&self, values: &[Complex64]) -> LinearSolution {
        self.system.solution_from(&self.state(values))
    }

    pub fn terms(&self, values: &[Complex64]) -> Terms {
        let x = self.state(values);
        let mut t = Terms::default();
        for &(k1, k2) in &self.pairs {
            let de = x[self.system.e_col(k1)] - x[self.system.e_col(k2)];
            let dt = x[self.system.theta_col(k1)] - x[self.system.theta_col(k2)];
            t.c_e += de * de;
            t.c_theta += dt * dt;
        }
        t.c_w = values.iter().map(|v| v.norm_sqr()).sum();
        t
    }

    pub fn objective(&self, values: &[Complex64]) -> f64 {
        let t = self.terms(values);
        self.weights.rho_e * t.c_e + self.weights.rho_theta * t.c_theta + self.weights.rho_w * t.c_w
    }

    /// Channel values as setpoints keyed by node and phase.
    pub fn setpoints(&self, values: &[Complex64]) -> Setpoints {
        let mut s = Setpoints::zero();
        for ((node, ph, _), v) in self.channels.iter().zip(values) {
            s.insert(node, *ph, *v);
        }
        s
    }

    /// Gradient `P w + q` of the reduced objective.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.hessian.mul_vec(w).into_iter().zip(&self.linear).map(|(a, b)| a + b).collect()
    }

    fn a_mul(&self, w: &[f64]) -> Vec<f64> {
        let mut out = w.to_vec();
        out.extend(self.box_rows.iter().map(|r| dot(&r.coef, w)));
        out
    }

    fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        let nv = 2 * self.channels.len();
        let mut out = y[..nv].to_vec();
        for (r, yr) in self.box_rows.iter().zip(&y[nv..]) {
            for (o, c) in out.iter_mut().zip(&r.coef) {
                *o += c * yr;
            }
        }
        out
    }

    fn project(&self, z: &mut [f64]) {
        for (c, (_, _, cap)) in self.channels.iter().enumerate() {
            let (u, v) = (z[2 * c], z[2 * c + 1]);
            let r = libm::hypot(u, v);
            if r > *cap {
                let s = if r > 0.0 { cap / r } else { 0.0 };
                z[2 * c] = u * s;
                z[2 * c + 1] = v * s;
            }
        }
        let nv = 2 * self.channels.len();
        for (r, zr) in self.box_rows.iter().zip(&mut z[nv..]) {
            *zr = zr.clamp(r.lo, r.hi);
        }
    }

    /// `sup_{z ∈ C} yᵀ z` for the constraint set.
    fn support(&self, y: &[f64]) -> f64 {
        let nv = 2 * self.channels.len();
        let mut s = 0.0;
        for (c, (_, _, cap)) in self.channels.iter().enumerate() {
            s += cap * libm::hypot(y[2 * c], y[2 * c + 1]);
        }
        for (r, yr) in self.box_rows.iter().zip(&y[nv..]) {
            s += if *yr > 0.0 { r.hi * yr } else { r.lo * yr };
        }
        s
    }

    fn describe_row(&self, row: usize) -> String {
        let nv = 2 * self.channels.len();
        if row < nv {
            let (node, ph, _) = &self.channels[row / 2];
            format!("DER capacity at {node}.{ph}")
        } else {
            format!("voltage bounds at {}", self.box_rows[row - nv].label)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn solve_opf(prob: &OpfProblem) -> Result<Dispatch> {
    solve_opf_with(prob, &AdmmOptions::default())
}

pub fn solve_opf_with(prob: &OpfProblem, opts: &AdmmOptions) -> Result<Dispatch> {
    let nv = 2 * prob.channels.len();
    let nc = prob.n_constraints();
    if nv == 0 {
        let terms = prob.terms(&[]);
        return Ok(Dispatch {
            channel_values: Vec::new(),
            objective_value: prob.objective(&[]),
            terms,
            duals: vec![0.0; nc],
            stats: SolverStats::default(),
        });
    }
    let (rho, sigma, alpha) = (opts.rho, opts.sigma, opts.relaxation);

    // K = P + σI + ρ AᵀA
    let mut k = prob.hessian.clone();
    for i in 0..nv {
        k[(i, i)] += sigma + rho;
    }
    for r in &prob.box_rows {
        for i in 0..nv {
            for j in 0..nv {
                k[(i, j)] += rho * r.coef[i] * r.coef[j];
            }
        }
    }
    let lu = Lu::factor(&k).map_err(|_| Error::Singular("ADMM system matrix".into()))?;

    let mut w = vec![0.0; nv];
    let mut z = prob.a_mul(&w);
    prob.project(&mut z);
    let mut y = vec![0.0; nc];
    let mut residuals = (f64::INFINITY, f64::INFINITY);

    for it in 1..=opts.max_iterations {
        let aty = prob.at_mul(&z.iter().zip(&y).map(|(zi, yi)| rho * zi - yi).collect::<Vec<_>>());
        let rhs: Vec<f64> = (0..nv).map(|i| sigma * w[i] - prob.linear[i] + aty[i]).collect();
        let w_tilde = lu.solve(&rhs);
        let z_tilde = prob.a_mul(&w_tilde);
        for i in 0..nv {
            w[i] = alpha * w_tilde[i] + (1.0 - alpha) * w[i];
        }
        let z_relaxed: Vec<f64> = (0..nc).map(|i| alpha * z_tilde[i] + (1.0 - alpha) * z[i]).collect();
        let mut z_new: Vec<f64> = (0..nc).map(|i| z_relaxed[i] + y[i] / rho).collect();
        prob.project(&mut z_new);
        let y_prev = y.clone();
        for i in 0..nc {
            y[i] += rho * (z_relaxed[i] - z_new[i]);
        }
        z = z_new;

        if it % 10 != 0 && it != opts.max_iterations {
            continue;
        }
        let aw = prob.a_mul(&w);
        let r_prim = inf_norm(&aw.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
        let pw = prob.hessian.mul_vec(&w);
        let aty = prob.at_mul(&y);
        let r_dual = inf_norm(&(0..nv).map(|i| pw[i] + prob.linear[i] + aty[i]).collect::<Vec<_>>());
        residuals = (r_prim, r_dual);
        let eps_p = opts.eps + opts.eps * inf_norm(&aw).max(inf_norm(&z));
        let eps_d = opts.eps + opts.eps * inf_norm(&pw).max(inf_norm(&aty)).max(inf_norm(&prob.linear));
        if r_prim <= eps_p && r_dual <= eps_d {
            let values: Vec<Complex64> = (0..nv / 2).map(|c| Complex64::new(w[2 * c], w[2 * c + 1])).collect();
            let terms = prob.terms(&values);
            return Ok(Dispatch {
                objective_value: prob.objective(&values),
                channel_values: values,
                terms,
                duals: y,
                stats: SolverStats {
                    iterations: it,
                    primal_residual: r_prim,
                    dual_residual: r_dual,
                },
            });
        }

        let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
        let ndy = inf_norm(&dy);
        if ndy > 0.0 {
            let atdy = prob.at_mul(&dy);
            if inf_norm(&atdy) <= opts.eps_infeasible * ndy && prob.support(&dy) < -opts.eps_infeasible * ndy {
                let worst = (0..nc).max_by(|a, b| dy[*a].abs().total_cmp(&dy[*b].abs())).unwrap();
                return Err(Error::Infeasible(format!(
                    "constraints cannot be met simultaneously; certificate is largest on {}",
                    prob.describe_row(worst)
                )));
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: residuals.0.max(residuals.1),
        history: vec![residuals.0, residuals.1],
    })
}

/// First-order optimality report for a dispatch.
#[derive(Clone, Debug, PartialEq)]
pub struct KktReport {
    /// `‖P w + q + Aᵀ y‖∞`.
    pub stationarity: f64,
    /// Largest violation of a disk or box.
    pub primal: f64,
    /// Largest violation of complementary slackness / normal-cone membership.
    pub complementarity: f64,
    pub tolerance: f64,
}

impl KktReport {
    pub fn stationarity_ok(&self) -> bool {
        self.stationarity <= self.tolerance
    }

    pub fn primal_ok(&self) -> bool {
        self.primal <= 1e-8
    }

    pub fn complementarity_ok(&self) -> bool {
        self.complementarity <= self.tolerance
    }

    pub fn passed(&self) -> bool {
        self.stationarity_ok() && self.primal_ok() && self.complementarity_ok()
    }
}

pub fn kkt_check(prob: &OpfProblem, dispatch: &Dispatch) -> Result<KktReport> {
    let nv = 2 * prob.channels.len();
    if dispatch.channel_values.len() != prob.channels.len() || dispatch.duals.len() != prob.n_constraints() {
        return Err(Error::DimensionMismatch("dispatch does not belong to this problem".into()));
    }
    let w = flatten(&dispatch.channel_values);
    let y = &dispatch.duals;
    let grad = prob.gradient(&w);
    let aty = prob.at_mul(y);
    let stationarity = inf_norm(&grad.iter().zip(&aty).map(|(a, b)| a + b).collect::<Vec<_>>());

    let tol = 1e-6;
    let mut primal = 0.0_f64;
    let mut comp = 0.0_f64;
    for (c, (_, _, cap)) in prob.channels.iter().enumerate() {
        let (u, v) = (w[2 * c], w[2 * c + 1]);
        let (yu, yv) = (y[2 * c], y[2 * c + 1]);
        let r = libm::hypot(u, v);
        primal = primal.max(r - cap);
        let ny = libm::hypot(yu, yv);
        if r < cap - tol || r == 0.0 {
            comp = comp.max(ny * (cap - r).max(0.0)).max(if r < cap - tol { ny } else { 0.0 });
        } else {
            // y must be a nonnegative multiple of the outward normal w / |w|
            let along = (yu * u + yv * v) / r;
            let perp = libm::hypot(yu - along * u / r, yv - along * v / r);
            comp = comp.max(perp).max(-along);
        }
    }
    for (row, yr) in prob.box_rows.iter().zip(&y[nv..]) {
        let dw = dot(&row.coef, &w);
        primal = primal.max(row.lo - dw).max(dw - row.hi);
        let slack = if *yr > 0.0 { row.hi - dw } else { dw - row.lo };
        comp = comp.max(yr.abs() * slack.max(0.0));
    }
    Ok(KktReport {
        stationarity,
        primal: primal.max(0.0),
        complementarity: comp,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::testing::*;
    use crate::feeder::{DerSpec, LineSpec, VvcSpec, SLACK_ID};
    use crate::linear::solve_linear;
    use crate::phase::PhaseSet;

    fn branch_z() -> DenseMatrix<Complex64> {
        DenseMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                Complex64::new(0.012, 0.035)
            } else {
                Complex64::new(0.005, 0.015)
            }
        })
    }

    /// Two laterals from a common head, unevenly loaded, with an open tie.
    fn twin(scale_1: f64, scale_2: f64, ders: &[(&str, &str)], cap: f64) -> Network {
        let mut tie = LineSpec::with_impedance("1b", "2b", PhaseSet::ABC, branch_z());
        tie.is_switch = true;
        tie.closed = false;
        let mut p = parts(
            vec![
                node(SLACK_ID, "abc"),
                node("1a", "abc"),
                node("1b", "abc"),
                node("2a", "abc"),
                node("2b", "abc"),
            ],
            vec![
                LineSpec::with_impedance(SLACK_ID, "1a", PhaseSet::ABC, branch_z()),
                LineSpec::with_impedance("1a", "1b", PhaseSet::ABC, branch_z()),
                LineSpec::with_impedance(SLACK_ID, "2a", PhaseSet::ABC, branch_z()),
                LineSpec::with_impedance("2a", "2b", PhaseSet::ABC, branch_z()),
                tie,
            ],
        );
        for (prefix, s) in [("1", scale_1), ("2", scale_2)] {
            p.loads.push(load(&format!("{prefix}b"), Phase::A, 0.3 * s, 0.1 * s, 0.85));
            p.loads.push(load(&format!("{prefix}b"), Phase::B, 0.2 * s, 0.08 * s, 0.85));
            p.loads.push(load(&format!("{prefix}a"), Phase::C, 0.25 * s, 0.12 * s, 0.85));
        }
        for (n, phases) in ders {
            for ph in phases.chars() {
                p.der.push(DerSpec {
                    node: (*n).into(),
                    phase: ph.to_string().parse().unwrap(),
                    capacity: cap,
                });
            }
        }
        Network::from_parts(p).unwrap()
    }

    fn targets() -> Vec<(String, String)> {
        vec![("1b".into(), "2b".into())]
    }

    #[test]
    fn weights_are_validated() {
        let net = twin(1.0, 1.5, &[("1b", "a")], 0.05);
        assert!(matches!(
            build_opf(&net, &targets(), Weights::new(0.0, 0.0, 0.0)),
            Err(Error::DegenerateWeights)
        ));
        assert!(build_opf(&net, &targets(), Weights::new(-1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn empty_target_phases_rejected() {
        let mut p = twin(1.0, 1.0, &[], 0.05).into_parts();
        p.nodes.push(node("x", "a"));
        p.nodes.push(node("y", "b"));
        p.lines.push(LineSpec::with_impedance("1b", "x", "a".parse().unwrap(), z1(0.01, 0.02)));
        p.lines.push(LineSpec::with_impedance("2b", "y", "b".parse().unwrap(), z1(0.01, 0.02)));
        let net = Network::from_parts(p).unwrap();
        assert!(matches!(
            build_opf(&net, &[("x".into(), "y".into())], Weights::new(1.0, 1.0, 1.0)),
            Err(Error::EmptyTargetPhases(_))
        ));
        assert!(matches!(
            build_opf(&net, &[("x".into(), "nope".into())], Weights::new(1.0, 1.0, 1.0)),
            Err(Error::UnknownElement(_))
        ));
    }

    #[test]
    fn no_der_reproduces_uncontrolled_solve() {
        let net = twin(1.0, 1.5, &[], 0.05);
        let prob = build_opf(&net, &targets(), Weights::new(1000.0, 1000.0, 1.0)).unwrap();
        let d = solve_opf(&prob).unwrap();
        assert!(d.channel_values.is_empty());
        let lin = solve_linear(&net, &Setpoints::zero()).unwrap();
        assert_eq!(prob.linear_solution(&[]).e, lin.e);
    }

    #[test]
    fn effort_only_gives_zero_dispatch() {
        let net = twin(1.0, 1.5, &[("1b", "abc"), ("2b", "abc")], 0.05);
        let prob = build_opf(&net, &targets(), Weights::new(0.0, 0.0, 1.0)).unwrap();
        let d = solve_opf(&prob).unwrap();
        assert!(d.channel_values.iter().all(|v| v.norm() == 0.0));
        assert!(kkt_check(&prob, &d).unwrap().passed());
    }

    #[test]
    fn channel_count_follows_node_phases() {
        let mut p = twin(1.0, 1.5, &[("1b", "abc")], 0.05).into_parts();
        p.nodes.push(node("ac", "ac"));
        p.lines.push(LineSpec::with_impedance(
            "2b",
            "ac",
            "ac".parse().unwrap(),
            DenseMatrix::from_fn(2, 2, |i, j| if i == j { Complex64::new(0.01, 0.02) } else { Complex64::new(0.0, 0.0) }),
        ));
        for ph in [Phase::A, Phase::C] {
            p.der.push(DerSpec {
                node: "ac".into(),
                phase: ph,
                capacity: 0.05,
            });
        }
        let net = Network::from_parts(p).unwrap();
        let prob = build_opf(&net, &targets(), Weights::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(prob.n_channels(), 5);
    }

    #[test]
    fn vvc_row_uses_middle_segment() {
        let mut p = twin(1.0, 1.5, &[], 0.05).into_parts();
        let unit = VvcSpec {
            node: "1b".into(),
            phase: Phase::A,
            q_min: -0.05,
            q_max: 0.05,
            v_min: 0.95,
            v_max: 1.05,
        };
        let (q0, q1) = unit.linearized();
        assert!((q0 - (-0.5)).abs() < 1e-15 && (q1 - 0.5).abs() < 1e-15);
        p.vvc.push(unit);
        let net = Network::from_parts(p).unwrap();
        let sol = solve_linear(&net, &Setpoints::zero()).unwrap();
        let k = net.node_phases().get(net.node_index("1b").unwrap(), Phase::A).unwrap();
        let q = 0.5 * (1.0 + sol.e[k]) - 0.95 - 0.05;
        let load_q = 0.1 * (0.85 + 0.15 * sol.e[k]);
        assert!((sol.node_power[k].im - (load_q + q)).abs() < 1e-14);
    }

    /// Independent reference: sensitivities from unit-perturbation linear
    /// solves and projected gradient with step 1/L onto the disks.
    fn projected_gradient(net: &Network, w: Weights) -> (Vec<Complex64>, f64) {
        let npi = net.node_phases();
        let ders: Vec<(String, Phase, f64)> = net.der().iter().map(|d| (d.node.clone(), d.phase, d.capacity)).collect();
        let nv = 2 * ders.len();
        let (ia, ib) = (net.node_index("1b").unwrap(), net.node_index("2b").unwrap());
        let pairs: Vec<(usize, usize)> = Phase::ALL.iter().map(|p| (npi.get(ia, *p).unwrap(), npi.get(ib, *p).unwrap())).collect();
        let diff = |sol: &LinearSolution| -> Vec<f64> {
            let mut out = Vec::new();
            for &(a, b) in &pairs {
                out.push(sol.e[a] - sol.e[b]);
            }
            for &(a, b) in &pairs {
                out.push(sol.theta[a] - sol.theta[b]);
            }
            out
        };
        let base = diff(&solve_linear(net, &Setpoints::zero()).unwrap());
        let mut sens = vec![vec![0.0; nv]; base.len()];
        for j in 0..nv {
            let mut sp = Setpoints::zero();
            let (node, ph, _) = &ders[j / 2];
            let unit = if j % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
            sp.insert(node, *ph, unit);
            let d = diff(&solve_linear(net, &sp).unwrap());
            for i in 0..base.len() {
                sens[i][j] = d[i] - base[i];
            }
        }
        let weight = |i: usize| if i < pairs.len() { w.rho_e } else { w.rho_theta };
        let objective = |x: &[f64]| -> f64 {
            let mut f = w.rho_w * x.iter().map(|v| v * v).sum::<f64>();
            for i in 0..base.len() {
                let r = base[i] + sens[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                f += weight(i) * r * r;
            }
            f
        };
        // Lipschitz constant by power iteration on the Hessian
        let hess = |x: &[f64]| -> Vec<f64> {
            let mut h: Vec<f64> = x.iter().map(|v| 2.0 * w.rho_w * v).collect();
            for i in 0..base.len() {
                let s: f64 = sens[i].iter().zip(x).map(|(a, b)| a * b).sum();
                for j in 0..nv {
                    h[j] += 2.0 * weight(i) * sens[i][j] * s;
                }
            }
            h
        };
        let mut v = vec![1.0; nv];
        let mut lip = 0.0;
        for _ in 0..200 {
            let hv = hess(&v);
            lip = hv.iter().map(|a| a * a).sum::<f64>().sqrt();
            v = hv.iter().map(|a| a / lip).collect();
        }
        let mut x = vec![0.0; nv];
        for _ in 0..1_000_000 {
            let mut g: Vec<f64> = x.iter().map(|v| 2.0 * w.rho_w * v).collect();
            for i in 0..base.len() {
                let r = base[i] + sens[i].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                for j in 0..nv {
                    g[j] += 2.0 * weight(i) * sens[i][j] * r;
                }
            }
            for j in 0..nv {
                x[j] -= g[j] / lip;
            }
            for (c, (_, _, cap)) in ders.iter().enumerate() {
                let r = (x[2 * c] * x[2 * c] + x[2 * c + 1] * x[2 * c + 1]).sqrt();
                if r > *cap {
                    x[2 * c] *= cap / r;
                    x[2 * c + 1] *= cap / r;
                }
            }
        }
        let vals = (0..nv / 2).map(|c| Complex64::new(x[2 * c], x[2 * c + 1])).collect();
        (vals, objective(&x))
    }

    #[test]
    fn matches_projected_gradient_reference() {
        for (ders, cap) in [
            (vec![("1b", "ab"), ("2b", "c")], 0.05),
            (vec![("1b", "abc"), ("2b", "abc")], 0.02),
        ] {
            let net = twin(0.75, 1.5, &ders, cap);
            for weights in [Weights::new(1000.0, 1000.0, 1.0), Weights::new(1000.0, 0.0, 1.0)] {
                let prob = build_opf(&net, &targets(), weights).unwrap();
                let d = solve_opf(&prob).unwrap();
                let (_, reference) = projected_gradient(&net, weights);
                let rel = (d.objective_value - reference).abs() / reference.abs().max(1e-12);
                assert!(rel <= 1e-6, "objective {} vs reference {} (rel {rel:e})", d.objective_value, reference);
                assert!(kkt_check(&prob, &d).unwrap().passed());
            }
        }
    }

    #[test]
    fn weight_scaling_keeps_argmin() {
        let net = twin(0.75, 1.5, &[("1b", "abc"), ("2b", "abc")], 0.05);
        let a = solve_opf(&build_opf(&net, &targets(), Weights::new(1000.0, 1000.0, 1.0)).unwrap()).unwrap();
        let b = solve_opf(&build_opf(&net, &targets(), Weights::new(10.0, 10.0, 0.01)).unwrap()).unwrap();
        for (x, y) in a.channel_values.iter().zip(&b.channel_values) {
            assert!((x - y).norm() <= 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn perturbed_dispatch_fails_stationarity() {
        let net = twin(0.75, 1.5, &[("1b", "abc"), ("2b", "abc")], 0.05);
        let prob = build_opf(&net, &targets(), Weights::new(1000.0, 1000.0, 1.0)).unwrap();
        let mut d = solve_opf(&prob).unwrap();
        let report = kkt_check(&prob, &d).unwrap();
        assert!(report.passed(), "{report:?}");
        d.channel_values[0] += Complex64::new(0.01, 0.0);
        assert!(!kkt_check(&prob, &d).unwrap().stationarity_ok());
    }

    #[test]
    fn symmetric_feeders_need_no_dispatch() {
        let net = twin(1.0, 1.0, &[("1b", "abc"), ("2b", "abc")], 0.05);
        let prob = build_opf(&net, &targets(), Weights::new(1000.0, 1000.0, 1.0)).unwrap();
        let d = solve_opf(&prob).unwrap();
        assert!(d.terms.c_e < 1e-16 && d.terms.c_theta < 1e-16);
        assert!(d.channel_values.iter().all(|v| v.norm() < 1e-8));
    }

    #[test]
    fn dispatch_respects_disks() {
        let net = twin(0.5, 2.0, &[("1b", "abc"), ("2b", "abc")], 0.01);
        let prob = build_opf(&net, &targets(), Weights::new(1000.0, 1000.0, 1.0)).unwrap();
        let d = solve_opf(&prob).unwrap();
        let mut active = 0;
        for v in &d.channel_values {
            assert!(v.norm() <= 0.01 + 1e-8);
            if (v.norm() - 0.01).abs() <= 1e-8 {
                active += 1;
            }
        }
        assert!(active > 0);
    }

    #[test]
    fn unattainable_voltage_bound_is_infeasible() {
        let net = twin(0.75, 1.5, &[("1b", "a")], 0.05);
        let err = build_opf_with_bounds(&net, &targets(), Weights::new(1.0, 1.0, 1.0), 0.9999, 1.0);
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }

    #[test]
    fn infeasible_box_detected_by_admm() {
        let net = twin(0.75, 1.5, &[("1b", "abc"), ("2b", "abc"), ("1a", "abc"), ("2a", "abc")], 0.001);
        let lin = solve_linear(&net, &Setpoints::zero()).unwrap();
        let e_min = lin.e.iter().fold(f64::INFINITY, |m, e| m.min(*e)) + 0.01;
        let prob = build_opf_with_bounds(&net, &targets(), Weights::new(1.0, 1.0, 1.0), e_min, 1.1).unwrap();
        assert!(matches!(solve_opf(&prob), Err(Error::Infeasible(_))));
    }
}
