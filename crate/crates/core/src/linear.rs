//! Linearized unbalanced power flow in squared magnitudes and angles.
//!
//! Unknowns are `E` and `Θ` for every node-phase and `P`, `Q` for every
//! closed line-phase. Each line contributes
//!
//! ```text
//! E_m = E_n + 2 M P - 2 N Q
//! Θ_m = Θ_n - N P - M Q
//! ```
//!
//! with `M + jN = A ∘ Z*`, and each non-slack node-phase a lossless power
//! balance whose load is affine in `E`. The system is square and is solved
//! directly, so radial and meshed networks are handled alike.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exact::PhasorSolution;
use crate::feeder::{nominal_slack_angles, LineSpec, Network, NodePhaseIndex, Setpoints};
use crate::linalg::{inf_norm, DenseMatrix, Lu, SparseMatrix};
use crate::phase::{Phase, PhaseSet};

/// Entry `(φ, ψ)` of the nominal voltage-ratio matrix `A`.
pub fn alpha_pattern(phi: Phase, psi: Phase) -> Complex64 {
    let alpha = Complex64::new(-0.5, 0.5 * libm::sqrt(3.0));
    match (psi.index() + 3 - phi.index()) % 3 {
        0 => Complex64::new(1.0, 0.0),
        1 => alpha,
        _ => alpha.conj(),
    }
}

/// Modified impedance matrices of one line, indexed by the line's phases.
#[derive(Clone, Debug, PartialEq)]
pub struct MnPair {
    pub phases: PhaseSet,
    pub m: DenseMatrix<f64>,
    pub n: DenseMatrix<f64>,
}

pub fn build_mn(line: &LineSpec) -> Result<MnPair> {
    let k = line.phases.len();
    let z = &line.impedance;
    if !z.is_square() || z.rows() != k {
        return Err(Error::DimensionMismatch(format!(
            "line {} has {} phases but a {}x{} impedance",
            line.key(),
            k,
            z.rows(),
            z.cols()
        )));
    }
    let ph: Vec<Phase> = line.phases.iter().collect();
    let prod = |i: usize, j: usize| alpha_pattern(ph[i], ph[j]) * z[(i, j)].conj();
    Ok(MnPair {
        phases: line.phases,
        m: DenseMatrix::from_fn(k, k, |i, j| prod(i, j).re),
        n: DenseMatrix::from_fn(k, k, |i, j| prod(i, j).im),
    })
}

/// Assembled linear model `A x = b`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    index: NodePhaseIndex,
    /// (line, phase) of every unknown flow.
    line_phases: Vec<(usize, Phase)>,
    n_lines: usize,
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Node-phase load `s0 + s1 E`.
    s0: Vec<Complex64>,
    s1: Vec<Complex64>,
    slack: usize,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn index(&self) -> &NodePhaseIndex {
        &self.index
    }

    pub fn line_phases(&self) -> &[(usize, Phase)] {
        &self.line_phases
    }

    pub fn e_col(&self, k: usize) -> usize {
        k
    }

    pub fn theta_col(&self, k: usize) -> usize {
        self.index.len() + k
    }

    pub fn p_col(&self, j: usize) -> usize {
        2 * self.index.len() + j
    }

    pub fn q_col(&self, j: usize) -> usize {
        2 * self.index.len() + self.line_phases.len() + j
    }

    /// Rows of the real and reactive balance at node-phase `k`; a unit
    /// increase of the right-hand side there is a unit increase of `Re w`
    /// (resp. `Im w`).
    pub fn balance_rows(&self, k: usize) -> (usize, usize) {
        (k, self.index.len() + k)
    }

    pub fn is_slack(&self, k: usize) -> bool {
        self.index.entry(k).0 == self.slack
    }

    fn describe_col(&self, net: &Network, col: usize) -> String {
        let nnp = self.index.len();
        let nlp = self.line_phases.len();
        let (what, k) = match col {
            c if c < nnp => ("E", c),
            c if c < 2 * nnp => ("theta", c - nnp),
            c if c < 2 * nnp + nlp => ("P", c - 2 * nnp),
            c => ("Q", c - 2 * nnp - nlp),
        };
        if col < 2 * nnp {
            let (n, p) = self.index.entry(k);
            format!("{what} at node {} phase {p}", net.nodes()[n].id)
        } else {
            let (l, p) = self.line_phases[k];
            format!("{what} on line {} phase {p}", net.lines()[l].key())
        }
    }

    pub fn factor(&self, net: &Network) -> Result<Lu<f64>> {
        Lu::factor(&self.matrix.to_dense())
            .map_err(|e| Error::Singular(format!("linear model is deficient in {}", self.describe_col(net, e.0))))
    }

    /// `‖A x - b‖∞`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        inf_norm(&ax.iter().zip(&self.rhs).map(|(a, b)| a - b).collect::<Vec<_>>())
    }

    pub fn solution_from(&self, x: &[f64]) -> LinearSolution {
        let nnp = self.index.len();
        let e: Vec<f64> = x[..nnp].to_vec();
        let theta: Vec<f64> = x[nnp..2 * nnp].to_vec();
        let mut p = vec![[0.0; 3]; self.n_lines];
        let mut q = vec![[0.0; 3]; self.n_lines];
        for (j, &(l, ph)) in self.line_phases.iter().enumerate() {
            p[l][ph.index()] = x[self.p_col(j)];
            q[l][ph.index()] = x[self.q_col(j)];
        }
        let node_power = (0..nnp).map(|k| self.s0[k] + self.s1[k] * e[k]).collect();
        LinearSolution {
            index: self.index.clone(),
            e,
            theta,
            p,
            q,
            node_power,
        }
    }
}

/// Solution of the linear model.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolution {
    index: NodePhaseIndex,
    /// Squared magnitude per node-phase.
    pub e: Vec<f64>,
    /// Angle per node-phase, radians.
    pub theta: Vec<f64>,
    /// Active and reactive flow per line and global phase.
    pub p: Vec<[f64; 3]>,
    pub q: Vec<[f64; 3]>,
    pub node_power: Vec<Complex64>,
}

impl LinearSolution {
    pub fn index(&self) -> &NodePhaseIndex {
        &self.index
    }

    pub fn magnitude(&self, node: usize, phase: Phase) -> Option<f64> {
        self.index.get(node, phase).map(|k| libm::sqrt(self.e[k]))
    }

    pub fn angle(&self, node: usize, phase: Phase) -> Option<f64> {
        self.index.get(node, phase).map(|k| self.theta[k])
    }

    /// `√E ∠ Θ` at a node-phase.
    pub fn phasor(&self, node: usize, phase: Phase) -> Option<Complex64> {
        self.index
            .get(node, phase)
            .map(|k| Complex64::from_polar(libm::sqrt(self.e[k]), self.theta[k]))
    }
}

fn reject_zero_impedance_loops(net: &Network, npi: &NodePhaseIndex) -> Result<()> {
    let mut parent: Vec<usize> = (0..npi.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (_, l) in net.active_lines().filter(|(_, l)| l.is_zero_impedance()) {
        let (m, n) = (net.node_index(&l.from).unwrap(), net.node_index(&l.to).unwrap());
        for ph in l.phases.iter() {
            let (a, b) = (find(&mut parent, npi.get(m, ph).unwrap()), find(&mut parent, npi.get(n, ph).unwrap()));
            if a == b {
                return Err(Error::Singular(format!(
                    "loop of zero-impedance lines closed by {} on phase {ph}",
                    l.key()
                )));
            }
            parent[a] = b;
        }
    }
    Ok(())
}

pub fn assemble(net: &Network, w: &Setpoints) -> Result<LinearSystem> {
    net.ensure_solvable()?;
    w.check_against(net)?;
    let npi = net.node_phases();
    reject_zero_impedance_loops(net, &npi)?;
    let nnp = npi.len();
    let slack = net.slack_index();

    let mut s0 = vec![Complex64::new(0.0, 0.0); nnp];
    let mut s1 = vec![Complex64::new(0.0, 0.0); nnp];
    let at = |node: &str, ph: Phase| npi.get(net.node_index(node).unwrap(), ph).unwrap();
    for ld in net.loads() {
        let k = at(&ld.node, ld.phase);
        s0[k] += ld.demand * ld.beta_s;
        s1[k] += ld.demand * ld.beta_z;
    }
    for c in net.caps() {
        s0[at(&c.node, c.phase)] -= Complex64::new(0.0, c.c);
    }
    for ((node, ph), v) in w.iter() {
        s0[at(node, *ph)] += *v;
    }
    for u in net.vvc() {
        let k = at(&u.node, u.phase);
        let (q0, q1) = u.linearized();
        s0[k] += Complex64::new(0.0, q0);
        s1[k] += Complex64::new(0.0, q1);
    }

    let mut line_phases = Vec::new();
    let mut mn = Vec::new();
    for (li, l) in net.active_lines() {
        mn.push((li, build_mn(l)?));
        for ph in l.phases.iter() {
            line_phases.push((li, ph));
        }
    }
    let nlp = line_phases.len();
    let dim = 2 * nnp + 2 * nlp;
    let mut sys = LinearSystem {
        index: npi.clone(),
        line_phases,
        n_lines: net.lines().len(),
        matrix: SparseMatrix::new(dim, dim),
        rhs: vec![0.0; dim],
        s0,
        s1,
        slack,
    };

    let angles = nominal_slack_angles();
    for (k, (n, ph)) in npi.iter() {
        let (re_row, im_row) = sys.balance_rows(k);
        if n == slack {
            sys.matrix.push(re_row, sys.e_col(k), 1.0);
            sys.rhs[re_row] = 1.0;
            sys.matrix.push(im_row, sys.theta_col(k), 1.0);
            sys.rhs[im_row] = angles[ph.index()];
        } else {
            sys.matrix.push(re_row, sys.e_col(k), -sys.s1[k].re);
            sys.matrix.push(im_row, sys.e_col(k), -sys.s1[k].im);
            sys.rhs[re_row] = sys.s0[k].re;
            sys.rhs[im_row] = sys.s0[k].im;
        }
    }

    let mut j0 = 0;
    for (li, pair) in &mn {
        let l = &net.lines()[*li];
        let (m, n) = (net.node_index(&l.from).unwrap(), net.node_index(&l.to).unwrap());
        let ph: Vec<Phase> = l.phases.iter().collect();
        for (a, pa) in ph.iter().enumerate() {
            let j = j0 + a;
            let (km, kn) = (npi.get(m, *pa).unwrap(), npi.get(n, *pa).unwrap());
            // flow leaves m and enters n
            if m != slack {
                sys.matrix.push(km, sys.p_col(j), -1.0);
                sys.matrix.push(nnp + km, sys.q_col(j), -1.0);
            }
            if n != slack {
                sys.matrix.push(kn, sys.p_col(j), 1.0);
                sys.matrix.push(nnp + kn, sys.q_col(j), 1.0);
            }
            let (mag_row, ang_row) = (2 * nnp + j, 2 * nnp + nlp + j);
            sys.matrix.push(mag_row, sys.e_col(km), 1.0);
            sys.matrix.push(mag_row, sys.e_col(kn), -1.0);
            sys.matrix.push(ang_row, sys.theta_col(km), 1.0);
            sys.matrix.push(ang_row, sys.theta_col(kn), -1.0);
            for b in 0..ph.len() {
                let jb = j0 + b;
                let (mv, nv) = (pair.m[(a, b)], pair.n[(a, b)]);
                sys.matrix.push(mag_row, sys.p_col(jb), -2.0 * mv);
                sys.matrix.push(mag_row, sys.q_col(jb), 2.0 * nv);
                sys.matrix.push(ang_row, sys.p_col(jb), nv);
                sys.matrix.push(ang_row, sys.q_col(jb), mv);
            }
        }
        j0 += ph.len();
    }
    Ok(sys)
}

pub fn solve_linear(net: &Network, w: &Setpoints) -> Result<LinearSolution> {
    let sys = assemble(net, w)?;
    let lu = sys.factor(net)?;
    let x = lu.solve(&sys.rhs);
    Ok(sys.solution_from(&x))
}

/// Choice of the voltage-ratio matrix in [`angle_residual`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gamma {
    /// `Γ^{φψ} = V_n^φ / V_n^ψ` from the solution itself.
    Exact,
    /// The nominal matrix `A`.
    Nominal,
}

/// `|V_m||V_n| sin(θ_m - θ_n) + Im{(Γ ∘ Z*) S}` per closed line-phase.
///
/// With [`Gamma::Exact`] this is an identity of the exact model and must
/// vanish up to round-off.
pub fn angle_residual(net: &Network, sol: &PhasorSolution, gamma: Gamma) -> Result<Vec<(usize, Phase, f64)>> {
    if *sol.index() != net.node_phases() || sol.currents.len() != net.lines().len() {
        return Err(Error::DimensionMismatch("solution does not belong to this network".into()));
    }
    let mut out = Vec::new();
    for (li, l) in net.active_lines() {
        let (m, n) = (net.node_index(&l.from).unwrap(), net.node_index(&l.to).unwrap());
        let ph: Vec<Phase> = l.phases.iter().collect();
        let vn: Vec<Complex64> = ph.iter().map(|p| sol.voltage(n, *p).unwrap()).collect();
        for (a, pa) in ph.iter().enumerate() {
            let vm = sol.voltage(m, *pa).unwrap();
            let lhs = vm.norm() * vn[a].norm() * libm::sin(vm.arg() - vn[a].arg());
            let mut acc = Complex64::new(0.0, 0.0);
            for (b, pb) in ph.iter().enumerate() {
                let g = match gamma {
                    Gamma::Exact => vn[a] / vn[b],
                    Gamma::Nominal => alpha_pattern(*pa, *pb),
                };
                acc += g * l.impedance[(a, b)].conj() * sol.line_power[li][pb.index()];
            }
            out.push((li, *pa, lhs + acc.im));
        }
    }
    Ok(out)
}
