//! Newton-Raphson solution of the nonlinear unbalanced power flow.
//!
//! Unknowns are polar voltages of every non-slack node-phase. Node-phases
//! tied together by closed zero-impedance lines share one voltage; the
//! currents through those ties are recovered afterwards from KCL.
//! Volt-var units are handled by an outer fixed-point loop on their
//! reactive output using the clamped characteristic.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::feeder::{LineSpec, Network, NodePhaseIndex, Setpoints};
use crate::linalg::{invert_complex, DenseMatrix, Lu};
use crate::phase::Phase;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Infinity-norm bound on the nodal power mismatch (p.u.).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Bound on the change of every volt-var output between outer passes.
    pub vvc_tolerance: f64,
    pub vvc_max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-9,
            max_iterations: 50,
            vvc_tolerance: 1e-9,
            vvc_max_iterations: 100,
        }
    }
}

/// Converged operating point of the exact model.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasorSolution {
    index: NodePhaseIndex,
    /// Voltage per node-phase (see [`Network::node_phases`]).
    pub voltages: Vec<Complex64>,
    /// Current per line and global phase, zero on absent phases and open lines.
    pub currents: Vec<[Complex64; 3]>,
    /// Receiving-end power `V_n conj(I_mn)` per line and phase.
    pub line_power: Vec<[Complex64; 3]>,
    /// Load `s_n(V)` per node-phase, including `w`, capacitors and volt-var output.
    pub node_power: Vec<Complex64>,
    /// Reactive output of each volt-var unit, in declaration order.
    pub vvc_q: Vec<f64>,
    pub setpoints: Setpoints,
    pub iterations: usize,
    pub residual_norm: f64,
    pub residual_history: Vec<f64>,
}

impl PhasorSolution {
    pub fn index(&self) -> &NodePhaseIndex {
        &self.index
    }

    pub fn voltage(&self, node: usize, phase: Phase) -> Option<Complex64> {
        self.index.get(node, phase).map(|k| self.voltages[k])
    }

    pub fn voltage_at(&self, net: &Network, id: &str, phase: Phase) -> Option<Complex64> {
        net.node_index(id).and_then(|n| self.voltage(n, phase))
    }
}

/// Per-node-phase load pieces: `s = constant + z_coef |V|^2 + j q`.
#[derive(Clone, Debug)]
struct LoadModel {
    constant: Vec<Complex64>,
    z_coef: Vec<Complex64>,
}

fn load_model(net: &Network, npi: &NodePhaseIndex, w: &Setpoints) -> Result<LoadModel> {
    w.check_against(net)?;
    let mut constant = vec![ZERO; npi.len()];
    let mut z_coef = vec![ZERO; npi.len()];
    for ld in net.loads() {
        let k = npi.get(net.node_index(&ld.node).unwrap(), ld.phase).unwrap();
        constant[k] += ld.demand * ld.beta_s;
        z_coef[k] += ld.demand * ld.beta_z;
    }
    for c in net.caps() {
        let k = npi.get(net.node_index(&c.node).unwrap(), c.phase).unwrap();
        constant[k] -= Complex64::new(0.0, c.c);
    }
    for ((node, phase), v) in w.iter() {
        let k = npi.get(net.node_index(node).unwrap(), *phase).unwrap();
        constant[k] += *v;
    }
    Ok(LoadModel { constant, z_coef })
}

fn vvc_slots(net: &Network, npi: &NodePhaseIndex) -> Vec<usize> {
    net.vvc()
        .iter()
        .map(|v| npi.get(net.node_index(&v.node).unwrap(), v.phase).unwrap())
        .collect()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
}

/// Electrical structure shared by all Newton iterations.
struct Model {
    npi: NodePhaseIndex,
    /// Class (shared voltage) of each node-phase.
    class_of: Vec<usize>,
    n_classes: usize,
    /// Fixed voltage of slack classes.
    fixed: Vec<Option<Complex64>>,
    /// Column of each class in the unknown vector (non-slack only).
    unknown_of: Vec<Option<usize>>,
    ybus: DenseMatrix<Complex64>,
    ybus_nz: Vec<Vec<usize>>,
    /// Admittance of every closed non-zero-impedance line.
    line_y: Vec<Option<DenseMatrix<Complex64>>>,
    /// Closed zero-impedance lines.
    ties: Vec<usize>,
    representative: Vec<usize>,
}

impl Model {
    fn build(net: &Network) -> Result<Model> {
        net.ensure_solvable()?;
        let npi = net.node_phases();
        let mut uf = UnionFind((0..npi.len()).collect());
        let mut ties = Vec::new();
        let mut line_y = vec![None; net.lines().len()];
        for (li, l) in net.active_lines() {
            let (m, n) = (net.node_index(&l.from).unwrap(), net.node_index(&l.to).unwrap());
            if l.is_zero_impedance() {
                for p in l.phases.iter() {
                    let (a, b) = (npi.get(m, p).unwrap(), npi.get(n, p).unwrap());
                    let (ra, rb) = (uf.find(a), uf.find(b));
                    if ra == rb {
                        return Err(Error::Singular(format!(
                            "loop of zero-impedance lines closed by {} on phase {p}",
                            l.key()
                        )));
                    }
                    uf.0[ra] = rb;
                }
                ties.push(li);
            } else {
                let y = invert_complex(&l.impedance)
                    .map_err(|_| Error::Singular(format!("impedance matrix of line {} is singular", l.key())))?;
                line_y[li] = Some(y);
            }
        }

        let mut class_id = vec![usize::MAX; npi.len()];
        let mut class_of = vec![0; npi.len()];
        let mut representative = Vec::new();
        for k in 0..npi.len() {
            let r = uf.find(k);
            if class_id[r] == usize::MAX {
                class_id[r] = representative.len();
                representative.push(k);
            }
            class_of[k] = class_id[r];
        }
        let n_classes = representative.len();

        let slack = net.slack_index();
        let sv = net.slack_voltage();
        let mut fixed = vec![None; n_classes];
        for p in Phase::ALL {
            let k = npi.get(slack, p).unwrap();
            fixed[class_of[k]] = Some(sv[p.index()]);
            // the slack node-phase is the natural representative for reporting
            representative[class_of[k]] = k;
        }
        let mut unknown_of = vec![None; n_classes];
        let mut next = 0;
        for c in 0..n_classes {
            if fixed[c].is_none() {
                unknown_of[c] = Some(next);
                next += 1;
            }
        }

        let mut ybus: DenseMatrix<Complex64> = DenseMatrix::zeros(n_classes, n_classes);
        for (li, l) in net.active_lines() {
            let Some(y) = &line_y[li] else { continue };
            let (m, n) = (net.node_index(&l.from).unwrap(), net.node_index(&l.to).unwrap());
            let ph: Vec<Phase> = l.phases.iter().collect();
            for (i, pi) in ph.iter().enumerate() {
                for (j, pj) in ph.iter().enumerate() {
                    let (mi, mj) = (class_of[npi.get(m, *pi).unwrap()], class_of[npi.get(m, *pj).unwrap()]);
                    let (ni, nj) = (class_of[npi.get(n, *pi).unwrap()], class_of[npi.get(n, *pj).unwrap()]);
                    let yij = y[(i, j)];
                    ybus[(mi, mj)] += yij;
                    ybus[(ni, nj)] += yij;
                    ybus[(mi, nj)] -= yij;
                    ybus[(ni, mj)] -= yij;
                }
            }
        }
        let ybus_nz = (0..n_classes)
            .map(|i| (0..n_classes).filter(|j| ybus[(i, *j)].norm() != 0.0).collect())
            .collect();

        Ok(Model {
            npi,
            class_of,
            n_classes,
            fixed,
            unknown_of,
            ybus,
            ybus_nz,
            line_y,
            ties,
            representative,
        })
    }

    fn n_unknowns(&self) -> usize {
        self.unknown_of.iter().filter(|u| u.is_some()).count()
    }

    /// Class-level constant and impedance load terms.
    fn class_loads(&self, lm: &LoadModel, vvc: &[(usize, f64)]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut c = vec![ZERO; self.n_classes];
        let mut z = vec![ZERO; self.n_classes];
        for k in 0..self.npi.len() {
            c[self.class_of[k]] += lm.constant[k];
            z[self.class_of[k]] += lm.z_coef[k];
        }
        for &(k, q) in vvc {
            c[self.class_of[k]] += Complex64::new(0.0, q);
        }
        (c, z)
    }

    fn mismatch(&self, v: &[Complex64], s_const: &[Complex64], s_z: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut currents = vec![ZERO; self.n_classes];
        let mut f = vec![ZERO; self.n_classes];
        for i in 0..self.n_classes {
            let mut acc = ZERO;
            for &j in &self.ybus_nz[i] {
                acc += self.ybus[(i, j)] * v[j];
            }
            currents[i] = acc;
            f[i] = v[i] * acc.conj() + s_const[i] + s_z[i] * v[i].norm_sqr();
        }
        (f, currents)
    }

    fn newton(
        &self,
        v: &mut [Complex64],
        s_const: &[Complex64],
        s_z: &[Complex64],
        opts: &SolverOptions,
        net: &Network,
        history: &mut Vec<f64>,
    ) -> Result<usize> {
        let nu = self.n_unknowns();
        let unknown_classes: Vec<usize> = (0..self.n_classes).filter(|c| self.unknown_of[*c].is_some()).collect();
        for it in 0..=opts.max_iterations {
            let (f, cur) = self.mismatch(v, s_const, s_z);
            let norm = unknown_classes
                .iter()
                .fold(0.0_f64, |m, &c| m.max(f[c].re.abs()).max(f[c].im.abs()));
            history.push(norm);
            if !norm.is_finite() {
                break;
            }
            if norm <= opts.tolerance {
                return Ok(it);
            }
            if it == opts.max_iterations {
                break;
            }

            // rows: [Re F; Im F], cols: [theta; |V|]
            let mut jac = DenseMatrix::zeros(2 * nu, 2 * nu);
            for &i in &unknown_classes {
                let r = self.unknown_of[i].unwrap();
                let vi = v[i];
                for &k in &self.ybus_nz[i] {
                    let Some(col) = self.unknown_of[k] else { continue };
                    let yv = self.ybus[(i, k)] * v[k];
                    let d_theta = -Complex64::i() * vi * yv.conj();
                    let vk_unit = v[k] / v[k].norm();
                    let d_mag = vi * (self.ybus[(i, k)] * vk_unit).conj();
                    jac[(r, col)] += d_theta.re;
                    jac[(nu + r, col)] += d_theta.im;
                    jac[(r, nu + col)] += d_mag.re;
                    jac[(nu + r, nu + col)] += d_mag.im;
                }
                let d_theta = Complex64::i() * vi * cur[i].conj();
                let vm = vi.norm();
                let d_mag = cur[i].conj() * (vi / vm) + s_z[i] * (2.0 * vm);
                jac[(r, r)] += d_theta.re;
                jac[(nu + r, r)] += d_theta.im;
                jac[(r, nu + r)] += d_mag.re;
                jac[(nu + r, nu + r)] += d_mag.im;
            }
            let lu = Lu::factor(&jac).map_err(|e| {
                let col = e.0 % nu.max(1);
                let class = unknown_classes[col];
                let (node, phase) = self.npi.entry(self.representative[class]);
                Error::SingularJacobian {
                    node: net.nodes()[node].id.clone(),
                    phase: phase.as_char(),
                }
            })?;
            let mut rhs = vec![0.0; 2 * nu];
            for &i in &unknown_classes {
                let r = self.unknown_of[i].unwrap();
                rhs[r] = -f[i].re;
                rhs[nu + r] = -f[i].im;
            }
            let dx = lu.solve(&rhs);
            for &i in &unknown_classes {
                let r = self.unknown_of[i].unwrap();
                let (mag, ang) = v[i].to_polar();
                v[i] = Complex64::from_polar(mag + dx[nu + r], ang + dx[r]);
            }
        }
        let residual = *history.last().unwrap_or(&f64::INFINITY);
        Err(Error::NonConvergence {
            iterations: opts.max_iterations,
            residual,
            history: history.clone(),
        })
    }
}

/// Solves the exact model for the given DER setpoints.
pub fn solve_exact(net: &Network, w: &Setpoints, opts: &SolverOptions) -> Result<PhasorSolution> {
    let model = Model::build(net)?;
    let npi = &model.npi;
    let lm = load_model(net, npi, w)?;
    let slots = vvc_slots(net, npi);

    // flat start: every class at the slack phasor of its phase
    let sv = net.slack_voltage();
    let mut v: Vec<Complex64> = (0..model.n_classes)
        .map(|c| {
            model.fixed[c].unwrap_or_else(|| {
                let (_, p) = npi.entry(model.representative[c]);
                sv[p.index()]
            })
        })
        .collect();

    let mut q: Vec<f64> = net.vvc().iter().map(|u| u.q_of_magnitude(1.0)).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut passes = 0;
    loop {
        let pairs: Vec<(usize, f64)> = slots.iter().copied().zip(q.iter().copied()).collect();
        let (s_const, s_z) = model.class_loads(&lm, &pairs);
        iterations += model.newton(&mut v, &s_const, &s_z, opts, net, &mut history)?;
        if net.vvc().is_empty() {
            break;
        }
        let new_q: Vec<f64> = net
            .vvc()
            .iter()
            .zip(&slots)
            .map(|(u, &k)| u.q_of_magnitude(v[model.class_of[k]].norm()))
            .collect();
        let delta = new_q.iter().zip(&q).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        q = new_q;
        passes += 1;
        if delta <= opts.vvc_tolerance {
            // final Newton pass so voltages match the reported q
            let pairs: Vec<(usize, f64)> = slots.iter().copied().zip(q.iter().copied()).collect();
            let (s_const, s_z) = model.class_loads(&lm, &pairs);
            iterations += model.newton(&mut v, &s_const, &s_z, opts, net, &mut history)?;
            break;
        }
        if passes >= opts.vvc_max_iterations {
            return Err(Error::NonConvergence {
                iterations: passes,
                residual: delta,
                history,
            });
        }
    }

    let voltages: Vec<Complex64> = (0..npi.len()).map(|k| v[model.class_of[k]]).collect();
    let mut node_power: Vec<Complex64> = (0..npi.len())
        .map(|k| lm.constant[k] + lm.z_coef[k] * voltages[k].norm_sqr())
        .collect();
    for (&k, &qq) in slots.iter().zip(&q) {
        node_power[k] += Complex64::new(0.0, qq);
    }
    let currents = line_currents(net, &model, &voltages, &node_power)?;
    let line_power = line_power_from(net, npi, &voltages, &currents);
    let residual_norm = *history.last().unwrap_or(&0.0);

    Ok(PhasorSolution {
        index: npi.clone(),
        voltages,
        currents,
        line_power,
        node_power,
        vvc_q: q,
        setpoints: w.clone(),
        iterations,
        residual_norm,
        residual_history: history,
    })
}

fn line_power_from(net: &Network, npi: &NodePhaseIndex, v: &[Complex64], currents: &[[Complex64; 3]]) -> Vec<[Complex64; 3]> {
    net.lines()
        .iter()
        .zip(currents)
        .map(|(l, cur)| {
            let n = net.node_index(&l.to).unwrap();
            let mut s = [ZERO; 3];
            for p in l.phases.iter() {
                s[p.index()] = v[npi.get(n, p).unwrap()] * cur[p.index()].conj();
            }
            s
        })
        .collect()
}

/// Impedance-line currents from KVL, tie currents from KCL by leaf peeling.
fn line_currents(net: &Network, model: &Model, v: &[Complex64], s: &[Complex64]) -> Result<Vec<[Complex64; 3]>> {
    let npi = &model.npi;
    let mut currents = vec![[ZERO; 3]; net.lines().len()];
    // net current that must still leave each node-phase through ties
    let mut excess: Vec<Complex64> = (0..npi.len()).map(|k| -(s[k] / v[k]).conj()).collect();
    for (li, l) in net.active_lines() {
        let Some(y) = &model.line_y[li] else { continue };
        let (m, n) = (net.node_index(&l.from).unwrap(), net.node_index(&l.to).unwrap());
        let ph: Vec<Phase> = l.phases.iter().collect();
        let dv: Vec<Complex64> = ph
            .iter()
            .map(|p| v[npi.get(m, *p).unwrap()] - v[npi.get(n, *p).unwrap()])
            .collect();
        let i_line = y.mul_vec(&dv);
        for (p, i) in ph.iter().zip(i_line) {
            currents[li][p.index()] = i;
            excess[npi.get(m, *p).unwrap()] -= i;
            excess[npi.get(n, *p).unwrap()] += i;
        }
    }
    if model.ties.is_empty() {
        return Ok(currents);
    }

    // adjacency of node-phases through ties: (neighbour, line, this end is `from`)
    let mut adj: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); npi.len()];
    for &li in &model.ties {
        let l = &net.lines()[li];
        let (m, n) = (net.node_index(&l.from).unwrap(), net.node_index(&l.to).unwrap());
        for p in l.phases.iter() {
            let (a, b) = (npi.get(m, p).unwrap(), npi.get(n, p).unwrap());
            adj[a].push((b, li, true));
            adj[b].push((a, li, false));
        }
    }
    let slack = net.slack_index();
    let mut visited = vec![false; npi.len()];
    let mut roots: Vec<usize> = Phase::ALL.iter().map(|p| npi.get(slack, *p).unwrap()).collect();
    roots.extend(0..npi.len());
    for root in roots {
        if visited[root] || adj[root].is_empty() {
            continue;
        }
        // BFS order, then peel leaves in reverse
        let mut order = vec![(root, usize::MAX, usize::MAX, false)];
        visited[root] = true;
        let mut head = 0;
        while head < order.len() {
            let (u, _, _, _) = order[head];
            head += 1;
            for &(w, li, u_is_from) in &adj[u] {
                if !visited[w] {
                    visited[w] = true;
                    // record child w, its parent u, and whether the child is the line's `to` end
                    order.push((w, u, li, u_is_from));
                }
            }
        }
        for &(child, parent, li, parent_is_from) in order.iter().skip(1).rev() {
            let (_, phase) = npi.entry(child);
            let i = if parent_is_from {
                // line parent -> child: I + excess(child) = 0
                -excess[child]
            } else {
                excess[child]
            };
            currents[li][phase.index()] = i;
            if parent_is_from {
                excess[parent] -= i;
            } else {
                excess[parent] += i;
            }
            excess[child] = ZERO;
        }
    }
    Ok(currents)
}

/// KCL mismatch `sum_in I - i_n(V) - sum_out I` for every non-slack node-phase.
///
/// Currents of impedance lines are recomputed from the solution voltages, so
/// the residual certifies both KVL and KCL. Tie currents come from `sol`.
pub fn kcl_residual(net: &Network, sol: &PhasorSolution) -> Result<Vec<(usize, Phase, Complex64)>> {
    let npi = net.node_phases();
    if npi != sol.index || sol.currents.len() != net.lines().len() || sol.vvc_q.len() != net.vvc().len() {
        return Err(Error::DimensionMismatch("solution does not belong to this network".to_string()));
    }
    let lm = load_model(net, &npi, &sol.setpoints)?;
    let v = &sol.voltages;
    let mut s: Vec<Complex64> = (0..npi.len()).map(|k| lm.constant[k] + lm.z_coef[k] * v[k].norm_sqr()).collect();
    for (&k, &q) in vvc_slots(net, &npi).iter().zip(&sol.vvc_q) {
        s[k] += Complex64::new(0.0, q);
    }
    let mut r: Vec<Complex64> = (0..npi.len()).map(|k| -(s[k] / v[k]).conj()).collect();
    for (_, l) in net.active_lines() {
        let (m, n) = (net.node_index(&l.from).unwrap(), net.node_index(&l.to).unwrap());
        let currents: Vec<(Phase, Complex64)> = if l.is_zero_impedance() {
            let li = net.find_line(&l.from, &l.to).unwrap();
            l.phases.iter().map(|p| (p, sol.currents[li][p.index()])).collect()
        } else {
            let y = invert_complex(&l.impedance).map_err(|_| Error::Singular(l.key()))?;
            let ph: Vec<Phase> = l.phases.iter().collect();
            let dv: Vec<Complex64> = ph
                .iter()
                .map(|p| v[npi.get(m, *p).unwrap()] - v[npi.get(n, *p).unwrap()])
                .collect();
            ph.into_iter().zip(y.mul_vec(&dv)).collect()
        };
        for (p, i) in currents {
            r[npi.get(m, p).unwrap()] -= i;
            r[npi.get(n, p).unwrap()] += i;
        }
    }
    let slack = net.slack_index();
    Ok(npi
        .iter()
        .filter(|(_, (n, _))| *n != slack)
        .map(|(k, (n, p))| (n, p, r[k]))
        .collect())
}

/// Power leaving `from` on each phase of an open line if it were closed
/// with both terminal voltages held: `V_m ∘ conj(Y (V_m - V_n))`.
pub fn open_line_flow(line: &LineSpec, v_from: &[Complex64], v_to: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = line.phases.len();
    if v_from.len() != n || v_to.len() != n {
        return Err(Error::DimensionMismatch(format!("{} has {n} phases", line.key())));
    }
    let y = invert_complex(&line.impedance).map_err(|_| Error::Singular(line.key()))?;
    let dv: Vec<Complex64> = v_from.iter().zip(v_to).map(|(a, b)| a - b).collect();
    Ok(y.mul_vec(&dv).iter().zip(v_from).map(|(i, v)| v * i.conj()).collect())
}
