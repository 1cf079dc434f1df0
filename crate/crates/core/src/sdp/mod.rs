//! Lifting of the QCQP to a semidefinite program over
//! `Z = [y; 1][y; 1]ᵀ`, conversion to solver standard form, and the
//! rank-one test on a solved `Z`.

pub mod solver;

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigh, SymMatrix};
use crate::qcqp::{QcqpForm, YLayout};

pub use solver::{
    solve, LinearConstraint, SdpProblem, SdpSolution, SolveStatus, SolverOptions, SparseSym,
};

/// The lifted problem: every constraint is `Tr(M Z) {≤,=} rhs` on a
/// matrix of order `Q + 3`.
#[derive(Debug, Clone)]
pub struct HomogenizedProblem {
    pub layout: YLayout,
    pub b0_mat: SymMatrix,
    /// Latency rows at γ = 0 (plus the local CPU), `≤ 0`.
    pub h: Vec<SymMatrix>,
    /// Latency rows at γ = 1, `≤ 0`.
    pub j: Vec<SymMatrix>,
    /// Allocation row sums, `= 1`.
    pub g: Vec<SymMatrix>,
    /// Binary identities `z_qq − z_q,last = 0`.
    pub k_eq: Vec<SymMatrix>,
    /// `z_γγ − z_γ,last ≤ 0`.
    pub k_ineq: SymMatrix,
    /// Upper bound on the optimal latency variable: Σ_i max over CPUs of
    /// the largest endpoint latency of task i.
    pub t_bound: f64,
}

impl HomogenizedProblem {
    pub fn order(&self) -> usize {
        self.layout.len() + 1
    }

    /// `[y; 1][y; 1]ᵀ`
    pub fn lift(&self, y: &[f64]) -> SymMatrix {
        let mut v = y.to_vec();
        v.push(1.0);
        SymMatrix::outer(&v)
    }
}

/// Embed a linear row `a·y` as `Tr(M Z)` with `a/2` in the last row and column.
fn embed_row(row: &[f64], order: usize) -> SymMatrix {
    let last = order - 1;
    let mut m = SymMatrix::zeros(order);
    for (i, &v) in row.iter().enumerate() {
        if v != 0.0 {
            m.set(i, last, v / 2.0);
        }
    }
    m
}

fn k_matrix(q: usize, order: usize) -> SymMatrix {
    let mut m = SymMatrix::zeros(order);
    m.set(q, q, 1.0);
    m.set(q, order - 1, -0.5);
    m
}

pub fn homogenize(form: &QcqpForm) -> HomogenizedProblem {
    let layout = form.layout;
    let order = layout.len() + 1;
    let last = order - 1;

    let a6 = form.a6();
    let mut b0_mat = SymMatrix::zeros(order);
    for j in 0..layout.len() {
        for i in 0..=j {
            b0_mat.set(i, j, a6.get(i, j));
        }
        b0_mat.set(j, last, form.b0[j] / 2.0);
    }

    let t_bound = (0..layout.n)
        .map(|i| {
            let local = form.a3[0][layout.index(i, 0)];
            (0..layout.m)
                .map(|k| form.d[i][k].max(form.e_mat[i][k]))
                .fold(local, f64::max)
        })
        .sum();

    HomogenizedProblem {
        layout,
        b0_mat,
        h: form.a3.iter().map(|r| embed_row(r, order)).collect(),
        j: form.a4.iter().map(|r| embed_row(r, order)).collect(),
        g: form.a5.iter().map(|r| embed_row(r, order)).collect(),
        k_eq: (0..layout.q()).map(|q| k_matrix(q, order)).collect(),
        k_ineq: k_matrix(layout.gamma_index(), order),
        t_bound,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FormOptions {
    /// Add `z_tt ≤ (2·t_bound)²`. Without it the `t` row of `Z` is free apart
    /// from the PSD cone and the dual has no interior point.
    pub bound_t: bool,
    /// Remove the γ coordinate, i.e. solve with γ ≡ 0.
    pub pin_gamma_zero: bool,
}

impl Default for FormOptions {
    fn default() -> Self {
        Self {
            bound_t: true,
            pin_gamma_zero: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowKind {
    LatencyGamma0(usize),
    LatencyGamma1(usize),
    RowSum(usize),
    Binary(usize),
    GammaRange,
    Corner,
    TBound,
}

/// A standard-form problem plus the bookkeeping needed to map its solution
/// back to the lifted `Z` of order `Q + 3`.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub problem: SdpProblem,
    pub layout: YLayout,
    pub rows: Vec<RowKind>,
    /// Lifted index of each block index.
    keep: Vec<usize>,
    /// Diagonal congruence: `Z[keep[a], keep[b]] = scale[a]·scale[b]·X[a, b]`.
    scale: Vec<f64>,
    /// Row `r` of the block problem is the lifted row divided by `row_scale[r]`.
    row_scale: Vec<f64>,
    lifted_order: usize,
}

pub fn to_standard_form(hp: &HomogenizedProblem, opts: &FormOptions) -> StandardForm {
    let layout = hp.layout;
    let lifted_order = hp.order();
    let t_slot = layout.t_index();
    let keep: Vec<usize> = (0..lifted_order)
        .filter(|&a| !(opts.pin_gamma_zero && a == layout.gamma_index()))
        .collect();
    let mut pos = vec![usize::MAX; lifted_order];
    for (a, &l) in keep.iter().enumerate() {
        pos[l] = a;
    }
    let t_scale = (2.0 * hp.t_bound).max(1.0);
    let scale: Vec<f64> = keep
        .iter()
        .map(|&l| if l == t_slot { t_scale } else { 1.0 })
        .collect();
    let order = keep.len();

    let reduce = |m: &SymMatrix| -> SparseSym {
        let mut s = SparseSym::new(order);
        for j in 0..lifted_order {
            for i in 0..=j {
                let v = m.get(i, j);
                let (a, b) = (pos[i], pos[j]);
                // entries on a removed coordinate multiply a zero of Z
                if v != 0.0 && a != usize::MAX && b != usize::MAX {
                    s.push(a, b, v * scale[a] * scale[b]);
                }
            }
        }
        s
    };

    let cost = reduce(&hp.b0_mat).to_sym();
    let mut rows = Vec::new();
    let mut pending: Vec<(SparseSym, bool, f64)> = Vec::new();
    for (h, m) in hp.h.iter().enumerate() {
        rows.push(RowKind::LatencyGamma0(h));
        pending.push((reduce(m), true, 0.0));
    }
    for (j, m) in hp.j.iter().enumerate() {
        rows.push(RowKind::LatencyGamma1(j));
        pending.push((reduce(m), true, 0.0));
    }
    for (p, m) in hp.g.iter().enumerate() {
        rows.push(RowKind::RowSum(p));
        pending.push((reduce(m), false, 1.0));
    }
    for (q, m) in hp.k_eq.iter().enumerate() {
        rows.push(RowKind::Binary(q));
        pending.push((reduce(m), false, 0.0));
    }
    if !opts.pin_gamma_zero {
        rows.push(RowKind::GammaRange);
        pending.push((reduce(&hp.k_ineq), true, 0.0));
    }
    let mut corner = SparseSym::new(order);
    corner.push(order - 1, order - 1, 1.0);
    rows.push(RowKind::Corner);
    pending.push((corner, false, 1.0));
    if opts.bound_t {
        let mut tb = SparseSym::new(order);
        let a = pos[t_slot];
        // z_tt ≤ t_scale², i.e. x_tt ≤ 1 after the congruence
        tb.push(a, a, 1.0);
        rows.push(RowKind::TBound);
        pending.push((tb, true, 1.0));
    }

    let n_slack = pending.iter().filter(|p| p.1).count();
    let mut problem = SdpProblem::new(cost, n_slack);
    let mut row_scale = Vec::with_capacity(pending.len());
    let mut next_slack = 0;
    for (mut m, has_slack, rhs) in pending {
        let norm = m
            .entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt();
        let c = if norm > 0.0 { norm } else { 1.0 };
        for e in &mut m.entries {
            e.2 /= c;
        }
        let slack = has_slack.then(|| {
            next_slack += 1;
            next_slack - 1
        });
        problem.push(m, slack, rhs / c);
        row_scale.push(c);
    }
    // the t-bound row is expressed on the scaled variable; report its slack in
    // units of z_tt
    if opts.bound_t {
        let r = row_scale.len() - 1;
        row_scale[r] *= t_scale * t_scale;
    }

    StandardForm {
        problem,
        layout,
        rows,
        keep,
        scale,
        row_scale,
        lifted_order,
    }
}

impl StandardForm {
    pub fn n_constraints(&self) -> usize {
        self.problem.constraints.len()
    }

    pub fn n_slacks(&self) -> usize {
        self.problem.n_slack
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<SdpSolution> {
        let sol = solve(&self.problem, opts)?;
        Ok(self.lift_solution(sol))
    }

    /// Map a block-coordinate solution back to the lifted `Z` and unscaled
    /// slacks / multipliers.
    pub fn lift_solution(&self, mut sol: SdpSolution) -> SdpSolution {
        let mut z = SymMatrix::zeros(self.lifted_order);
        for b in 0..self.keep.len() {
            for a in 0..=b {
                let v = sol.z.get(a, b) * self.scale[a] * self.scale[b];
                z.set(self.keep[a], self.keep[b], v);
            }
        }
        sol.z = z;
        for (r, con) in self.problem.constraints.iter().enumerate() {
            if let Some(l) = con.slack {
                sol.slacks[l] *= self.row_scale[r];
            }
            sol.dual[r] /= self.row_scale[r];
        }
        sol
    }
}

#[derive(Debug, Clone)]
pub struct RankOne {
    pub is_rank_one: bool,
    /// λ₂/λ₁ with λ₁ the largest eigenvalue.
    pub ratio: f64,
    pub value: f64,
    pub vector: Vec<f64>,
}

impl RankOne {
    /// `√λ₁·v`, sign chosen so the last entry is nonnegative.
    pub fn factor(&self) -> Vec<f64> {
        let s = self.value.max(0.0).sqrt();
        let sign = if self.vector.last().copied().unwrap_or(0.0) < 0.0 { -1.0 } else { 1.0 };
        self.vector.iter().map(|v| sign * s * v).collect()
    }
}

pub const RANK_ONE_TOL: f64 = 1e-6;

pub fn rank_one_check(z: &SymMatrix, ratio_tol: f64) -> Result<RankOne> {
    let e = eigh(z)?;
    let n = e.values.len();
    if n == 0 {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    let l1 = e.values[n - 1];
    let l2 = if n > 1 { e.values[n - 2].max(0.0) } else { 0.0 };
    let ratio = if l1 > 0.0 { l2 / l1 } else { f64::INFINITY };
    Ok(RankOne {
        is_rank_one: ratio <= ratio_tol,
        ratio,
        value: l1,
        vector: e.vector(n - 1),
    })
}

/// Plain-text dump of a standard-form problem:
///
/// ```txt
/// order <n>
/// slacks <s>
/// constraints <m>
/// cost <i>:<j>:<v> ...
/// con <rhs> <slack|-> <i>:<j>:<v> ...
/// ```
///
/// Triplets are upper-triangle entries of a symmetric matrix; one line per
/// constraint. Slack costs are zero and are not written.
pub fn write_dump<W: Write>(p: &SdpProblem, mut w: W) -> Result<()> {
    writeln!(w, "order {}", p.order)?;
    writeln!(w, "slacks {}", p.n_slack)?;
    writeln!(w, "constraints {}", p.constraints.len())?;
    let triplets = |m: &SparseSym| {
        m.entries
            .iter()
            .map(|(i, j, v)| format!(" {i}:{j}:{v:e}"))
            .collect::<String>()
    };
    writeln!(w, "cost{}", triplets(&SparseSym::from_sym(&p.cost)))?;
    for c in &p.constraints {
        let slack = c.slack.map_or("-".to_string(), |l| l.to_string());
        writeln!(w, "con {:e} {}{}", c.rhs, slack, triplets(&c.matrix))?;
    }
    Ok(())
}

pub fn read_dump<R: BufRead>(r: R) -> Result<SdpProblem> {
    let bad = |line: usize, what: &str| Error::invalid(format!("dump line {}", line + 1), what);
    let mut lines = r.lines().enumerate();
    let mut header = |key: &str| -> Result<usize> {
        let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated header"))?;
        let line = line?;
        line.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(n, key))
    };
    let order = header("order")?;
    let n_slack = header("slacks")?;
    let m = header("constraints")?;
    let parse_triplets = |n: usize, toks: &[&str]| -> Result<SparseSym> {
        let mut s = SparseSym::new(order);
        for t in toks {
            let parts: Vec<&str> = t.split(':').collect();
            if parts.len() != 3 {
                return Err(bad(n, "bad triplet"));
            }
            let i = parts[0].parse().map_err(|_| bad(n, "bad row"))?;
            let j = parts[1].parse().map_err(|_| bad(n, "bad column"))?;
            let v = parts[2].parse().map_err(|_| bad(n, "bad value"))?;
            s.push(i, j, v);
        }
        Ok(s)
    };
    let (n, cost_line) = lines.next().ok_or_else(|| bad(3, "missing cost"))?;
    let cost_line = cost_line?;
    let toks: Vec<&str> = cost_line.split_whitespace().collect();
    if toks.first() != Some(&"cost") {
        return Err(bad(n, "expected cost"));
    }
    let cost = parse_triplets(n, &toks[1..])?.to_sym();
    let mut p = SdpProblem::new(cost, n_slack);
    for (n, line) in lines.take(m) {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 || toks[0] != "con" {
            return Err(bad(n, "expected constraint"));
        }
        let rhs = toks[1].parse().map_err(|_| bad(n, "bad rhs"))?;
        let slack = match toks[2] {
            "-" => None,
            s => Some(s.parse().map_err(|_| bad(n, "bad slack"))?),
        };
        p.push(parse_triplets(n, &toks[3..])?, slack, rhs);
    }
    if p.constraints.len() != m {
        return Err(bad(3 + m, "fewer constraints than declared"));
    }
    p.validate()?;
    Ok(p)
}
