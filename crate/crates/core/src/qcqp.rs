//! Vectorized decision `y = [x; γ; t]` and the quadratically constrained
//! quadratic program built from an [`Instance`].
//!
//! The latency constraints use the two γ-endpoints of each CPU's batch
//! latency (T_k is affine in γ), so a feasible `t` is at least
//! `max_k max(T_k(0), T_k(1))`. That is a restriction of the exact
//! min-max latency for interior γ.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{Assignment, Decision, Instance};

/// Index map for `y`. Allocation entries are stacked column by column of
/// the N×(M+1) matrix X, i.e. all tasks for CPU 0 first, then CPU 1, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct YLayout {
    pub n: usize,
    pub m: usize,
}

impl YLayout {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    pub fn for_instance(inst: &Instance) -> Self {
        Self::new(inst.n_tasks(), inst.n_caps())
    }

    /// Number of allocation entries, N·M + N.
    pub fn q(&self) -> usize {
        self.n * (self.m + 1)
    }

    pub fn index(&self, i: usize, k: usize) -> usize {
        debug_assert!(i < self.n && k <= self.m);
        k * self.n + i
    }

    /// Inverse of [`index`](Self::index) for slots below `q`.
    pub fn task_cpu(&self, slot: usize) -> (usize, usize) {
        (slot % self.n, slot / self.n)
    }

    pub fn gamma_index(&self) -> usize {
        self.q()
    }

    pub fn t_index(&self) -> usize {
        self.q() + 1
    }

    /// Length of `y`.
    pub fn len(&self) -> usize {
        self.q() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Slot of the constant 1 in the lifted matrix `[y; 1][y; 1]ᵀ`.
    pub fn homogeneous_index(&self) -> usize {
        self.q() + 2
    }

    pub fn encode(&self, dec: &Decision, t: f64) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        for (i, &k) in dec.assignment.cpu_of.iter().enumerate() {
            y[self.index(i, k)] = 1.0;
        }
        y[self.gamma_index()] = dec.gamma;
        y[self.t_index()] = t;
        y
    }

    /// Per-row argmax over the allocation slots (ties to the lowest CPU) and
    /// γ clamped into [0, 1].
    pub fn decode(&self, y: &[f64]) -> Decision {
        let assignment = self.round_rows(&y[..self.q()]);
        Decision::new(assignment, y[self.gamma_index()].clamp(0.0, 1.0))
    }

    /// Per-task argmax over the `q` allocation slots of `x`.
    pub fn round_rows(&self, x: &[f64]) -> Assignment {
        let cpu_of = (0..self.n)
            .map(|i| {
                let mut best = 0;
                for k in 1..=self.m {
                    if x[self.index(i, k)] > x[self.index(i, best)] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        Assignment::new(cpu_of)
    }
}

#[derive(Debug, Clone)]
pub struct QcqpForm {
    pub layout: YLayout,
    /// α_i/2 couplings between offloaded x-slots and γ.
    pub a1: SymMatrix,
    /// g_ik^UL/2 couplings between offloaded x-slots and γ.
    pub a2: SymMatrix,
    pub b0: Vec<f64>,
    /// (M+1) rows: local latency, then γ=0 endpoint latency per CAP.
    pub a3: Vec<Vec<f64>>,
    /// M rows: γ=1 endpoint latency per CAP.
    pub a4: Vec<Vec<f64>>,
    /// N rows: allocation row sums.
    pub a5: Vec<Vec<f64>>,
    /// N×M, latency of task i on CAP k+1 at γ = 0.
    pub d: Vec<Vec<f64>>,
    /// N×M, latency of task i on CAP k+1 at γ = 1.
    pub e_mat: Vec<Vec<f64>>,
    /// λ_e·P^Compr
    pub compr_weight: f64,
    /// λ_e·P^Tx
    pub tx_weight: f64,
}

pub fn build(inst: &Instance) -> QcqpForm {
    let layout = YLayout::for_instance(inst);
    let (n, m) = (layout.n, layout.m);
    let len = layout.len();
    let (g, t) = (layout.gamma_index(), layout.t_index());
    let dev = &inst.device;

    let mut a1 = SymMatrix::zeros(len);
    let mut a2 = SymMatrix::zeros(len);
    let mut b0 = vec![0.0; len];
    let mut d = vec![vec![0.0; m]; n];
    let mut e_mat = vec![vec![0.0; m]; n];
    for (i, task) in inst.tasks.iter().enumerate() {
        b0[layout.index(i, 0)] = inst.lambda_e * dev.p_comp * task.omega / dev.r0;
        for k in 1..=m {
            let cap = &inst.caps[k - 1];
            let s = layout.index(i, k);
            let (g_ul, g_dl) = (inst.g_ul(i, k), inst.g_dl(i, k));
            a1.set(s, g, task.alpha / 2.0);
            a2.set(s, g, g_ul / 2.0);
            b0[s] = inst.lambda_e * (dev.p_tx * g_ul + dev.p_rx * g_dl);
            let tail = task.omega / cap.r + g_dl;
            d[i][k - 1] = g_ul + tail;
            e_mat[i][k - 1] = task.alpha * dev.jc * (1.0 / dev.r0 + 1.0 / cap.r) + tail;
        }
    }
    b0[g] = 0.0;
    b0[t] = inst.lambda_t;

    let mut a3 = vec![vec![0.0; len]; m + 1];
    let mut a4 = vec![vec![0.0; len]; m];
    for (i, task) in inst.tasks.iter().enumerate() {
        a3[0][layout.index(i, 0)] = task.omega / dev.r0;
        for k in 1..=m {
            a3[k][layout.index(i, k)] = d[i][k - 1];
            a4[k - 1][layout.index(i, k)] = e_mat[i][k - 1];
        }
    }
    for row in a3.iter_mut().chain(a4.iter_mut()) {
        row[t] = -1.0;
    }
    let a5 = (0..n)
        .map(|p| {
            let mut row = vec![0.0; len];
            for k in 0..=m {
                row[layout.index(p, k)] = 1.0;
            }
            row
        })
        .collect();

    QcqpForm {
        layout,
        a1,
        a2,
        b0,
        a3,
        a4,
        a5,
        d,
        e_mat,
        compr_weight: inst.lambda_e * dev.p_compr(),
        tx_weight: inst.lambda_e * dev.p_tx,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl QcqpForm {
    /// Quadratic part of the objective, λ_e·P^Compr·A₁ − λ_e·P^Tx·A₂.
    pub fn a6(&self) -> SymMatrix {
        let a = self.a1.as_dmatrix() * self.compr_weight - self.a2.as_dmatrix() * self.tx_weight;
        SymMatrix::from_dmatrix(a)
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() == self.layout.len() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.layout.len(),
                got: y.len(),
            })
        }
    }

    pub fn eval_objective(&self, y: &[f64]) -> Result<f64> {
        self.check_len(y)?;
        let quad = self.compr_weight * self.a1.quad(y) - self.tx_weight * self.a2.quad(y);
        Ok(quad + dot(&self.b0, y))
    }

    /// Smallest `t` that satisfies the endpoint latency rows for the
    /// allocation part of `y`.
    pub fn endpoint_latency(&self, y: &[f64]) -> f64 {
        let t = self.layout.t_index();
        self.a3
            .iter()
            .chain(&self.a4)
            .map(|row| dot(row, y) - row[t] * y[t])
            .fold(0.0, f64::max)
    }

    pub fn check_feasible(&self, y: &[f64], tol: f64) -> Result<Vec<Violation>> {
        self.check_len(y)?;
        let mut out = Vec::new();
        for (h, row) in self.a3.iter().enumerate() {
            let v = dot(row, y);
            if v > tol {
                out.push(Violation::new(ConstraintKind::LatencyGamma0, h, v));
            }
        }
        for (j, row) in self.a4.iter().enumerate() {
            let v = dot(row, y);
            if v > tol {
                out.push(Violation::new(ConstraintKind::LatencyGamma1, j, v));
            }
        }
        for (p, row) in self.a5.iter().enumerate() {
            let v = dot(row, y) - 1.0;
            if v.abs() > tol {
                out.push(Violation::new(ConstraintKind::RowSum, p, v));
            }
        }
        for (q, &x) in y[..self.layout.q()].iter().enumerate() {
            let v = x * (x - 1.0);
            if v.abs() > tol {
                out.push(Violation::new(ConstraintKind::Binary, q, v));
            }
        }
        let gamma = y[self.layout.gamma_index()];
        let v = gamma * (gamma - 1.0);
        if v > tol {
            out.push(Violation::new(ConstraintKind::GammaRange, 0, v));
        }
        Ok(out)
    }
}

/// Default absolute feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstraintKind {
    /// A₃y ≤ 0
    LatencyGamma0,
    /// A₄y ≤ 0
    LatencyGamma1,
    /// A₅y = 1
    RowSum,
    /// x(x − 1) = 0
    Binary,
    /// γ(γ − 1) ≤ 0
    GammaRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub index: usize,
    /// Constraint function value; positive for a violated `≤`, signed residual for `=`.
    pub value: f64,
}

impl Violation {
    fn new(kind: ConstraintKind, index: usize, value: f64) -> Self {
        Self { kind, index, value }
    }
}
