//! Primal-dual path-following interior-point method for
//!
//! ```txt
//!   min  Tr(C X) + c_sᵀ s
//!   s.t. Tr(A_i X) + s_{l(i)} = b_i      (slack term only on some rows)
//!        X ⪰ 0,  s ≥ 0
//! ```
//!
//! Search direction is HKM (`ΔX = (σμI − XS − XΔS)S⁻¹`, symmetrized) with a
//! Mehrotra predictor-corrector. Problems are tiny (order ≲ 40, a few dozen
//! rows), so everything is dense except the constraint matrices, which are
//! kept as triplet lists because each row touches only a handful of entries.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Symmetric matrix stored as upper-triangle triplets `(i, j, v)`, `i <= j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSym {
    pub order: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            entries: Vec::new(),
        }
    }

    /// Adds `v` at `(i, j)` and its mirror.
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((i.min(j), i.max(j), v));
        }
    }

    pub fn from_sym(a: &SymMatrix) -> Self {
        let mut s = Self::new(a.order());
        for j in 0..a.order() {
            for i in 0..=j {
                s.push(i, j, a.get(i, j));
            }
        }
        s
    }

    pub fn to_sym(&self) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.order);
        for &(i, j, v) in &self.entries {
            m.add_sym(i, j, v);
        }
        m
    }

    /// `Tr(A X)` for symmetric `X`.
    pub fn trace_dot(&self, x: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { 2.0 * v * x[(i, j)] })
            .sum()
    }

    fn add_scaled_to(&self, out: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, v) in &self.entries {
            out[(i, j)] += scale * v;
            if i != j {
                out[(j, i)] += scale * v;
            }
        }
    }

    /// Both triangles, for the Schur-complement double loop.
    fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(i, j, v) in &self.entries {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub matrix: SparseSym,
    /// Slack variable entering this row with coefficient +1.
    pub slack: Option<usize>,
    pub rhs: f64,
}

/// One dense PSD block plus `n_slack` nonnegative scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub order: usize,
    pub n_slack: usize,
    pub cost: SymMatrix,
    pub slack_cost: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
}

impl SdpProblem {
    pub fn new(cost: SymMatrix, n_slack: usize) -> Self {
        Self {
            order: cost.order(),
            n_slack,
            cost,
            slack_cost: vec![0.0; n_slack],
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, matrix: SparseSym, slack: Option<usize>, rhs: f64) {
        self.constraints.push(LinearConstraint { matrix, slack, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost.order() != self.order || self.slack_cost.len() != self.n_slack {
            return Err(Error::Dimension {
                expected: self.order,
                got: self.cost.order(),
            });
        }
        let mut seen = vec![false; self.n_slack];
        for (r, c) in self.constraints.iter().enumerate() {
            if c.matrix.order != self.order {
                return Err(Error::Dimension {
                    expected: self.order,
                    got: c.matrix.order,
                });
            }
            if c.matrix.entries.iter().any(|&(i, j, _)| j >= self.order || i > j) {
                return Err(Error::invalid(format!("constraint[{r}]"), "bad triplet index"));
            }
            if let Some(l) = c.slack {
                if l >= self.n_slack || seen[l] {
                    return Err(Error::invalid(
                        format!("constraint[{r}].slack"),
                        "slack out of range or used twice",
                    ));
                }
                seen[l] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("slacks", "every slack must appear in exactly one row"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction-to-boundary factor.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub z: SymMatrix,
    pub slacks: Vec<f64>,
    /// Dual multipliers, one per constraint row.
    pub dual: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// |primal − dual objective| / (1 + |primal objective|)
    pub gap: f64,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

struct Iterate {
    x: DMatrix<f64>,
    xs: DVector<f64>,
    y: DVector<f64>,
    s: DMatrix<f64>,
    zs: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rd: DMatrix<f64>,
    rd_lp: DVector<f64>,
    pobj: f64,
    dobj: f64,
    pres: f64,
    dres: f64,
    gap: f64,
}

impl Residuals {
    fn merit(&self) -> f64 {
        self.pres.max(self.dres).max(self.gap)
    }
}

struct Workspace<'a> {
    p: &'a SdpProblem,
    full: Vec<Vec<(usize, usize, f64)>>,
    b: DVector<f64>,
    c: DMatrix<f64>,
    c_lp: DVector<f64>,
    /// Row owning each slack.
    slack_row: Vec<usize>,
    b_norm: f64,
    c_norm: f64,
    n_total: f64,
}

impl<'a> Workspace<'a> {
    fn new(p: &'a SdpProblem) -> Self {
        let mut slack_row = vec![0; p.n_slack];
        for (r, con) in p.constraints.iter().enumerate() {
            if let Some(l) = con.slack {
                slack_row[l] = r;
            }
        }
        let b = DVector::from_iterator(p.constraints.len(), p.constraints.iter().map(|c| c.rhs));
        let c = p.cost.as_dmatrix().clone();
        let c_lp = DVector::from_column_slice(&p.slack_cost);
        Self {
            full: p.constraints.iter().map(|c| c.matrix.full_entries()).collect(),
            b_norm: b.norm(),
            c_norm: (c.norm_squared() + c_lp.norm_squared()).sqrt(),
            n_total: (p.order + p.n_slack) as f64,
            b,
            c,
            c_lp,
            slack_row,
            p,
        }
    }

    fn m(&self) -> usize {
        self.p.constraints.len()
    }

    /// `A(X) + slack part`.
    fn apply(&self, x: &DMatrix<f64>, xs: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::from_iterator(
            self.m(),
            self.p.constraints.iter().map(|c| c.matrix.trace_dot(x)),
        );
        for (l, &r) in self.slack_row.iter().enumerate() {
            out[r] += xs[l];
        }
        out
    }

    /// `(Σ y_i A_i, slack part)`.
    fn adjoint(&self, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut out = DMatrix::zeros(self.p.order, self.p.order);
        for (con, &yi) in self.p.constraints.iter().zip(y.iter()) {
            con.matrix.add_scaled_to(&mut out, yi);
        }
        let lp = DVector::from_iterator(self.p.n_slack, self.slack_row.iter().map(|&r| y[r]));
        (out, lp)
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let rp = &self.b - self.apply(&it.x, &it.xs);
        let (aty, aty_lp) = self.adjoint(&it.y);
        let rd = &self.c - &it.s - aty;
        let rd_lp = &self.c_lp - &it.zs - aty_lp;
        let pobj = self.c.dot(&it.x) + self.c_lp.dot(&it.xs);
        let dobj = self.b.dot(&it.y);
        Residuals {
            pres: rp.norm() / (1.0 + self.b_norm),
            dres: (rd.norm_squared() + rd_lp.norm_squared()).sqrt() / (1.0 + self.c_norm),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
            rp,
            rd,
            rd_lp,
            pobj,
            dobj,
        }
    }

    /// Schur complement `M_ij = Tr(A_i X A_j S⁻¹) + slack terms`.
    fn schur(&self, x: &DMatrix<f64>, s_inv: &DMatrix<f64>, xs: &DVector<f64>, zs: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        let mut mat = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut acc = 0.0;
                for &(c, d, vi) in &self.full[i] {
                    for &(a, b, vj) in &self.full[j] {
                        acc += vi * vj * x[(d, a)] * s_inv[(b, c)];
                    }
                }
                mat[(i, j)] = acc;
                mat[(j, i)] = acc;
            }
        }
        for (l, &r) in self.slack_row.iter().enumerate() {
            mat[(r, r)] += xs[l] / zs[l];
        }
        mat
    }
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    let at = a.transpose();
    (a + at) * 0.5
}

/// Largest `α` with `X + αΔX ⪰ 0` (∞ if unbounded); `None` if `X` is not PD.
fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let linv_dx = l.solve_lower_triangular(dx)?;
    let m = l.solve_lower_triangular(&linv_dx.transpose())?;
    let m = symmetrize(m);
    let eig = SymmetricEigen::new(m);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Some(if min < 0.0 { -1.0 / min } else { f64::INFINITY })
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: DMatrix<f64>,
    dxs: DVector<f64>,
    dy: DVector<f64>,
    ds: DMatrix<f64>,
    dzs: DVector<f64>,
}

/// Solve a standard-form SDP. Never panics on numerical trouble: the best
/// iterate seen is returned with a non-optimal status instead.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let ws = Workspace::new(problem);
    let n = problem.order;
    let m = ws.m();

    let tau = 1.0 + ws.b.amax();
    let sigma0 = 1.0 + ws.c_norm;
    let mut it = Iterate {
        x: DMatrix::identity(n, n) * tau,
        xs: DVector::from_element(problem.n_slack, tau),
        y: DVector::zeros(m),
        s: DMatrix::identity(n, n) * sigma0,
        zs: DVector::from_element(problem.n_slack, sigma0),
    };

    let mut best: Option<(f64, SdpSolution)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut stall = 0usize;
    let mut iterations = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let res = ws.residuals(&it);
        let merit = res.merit();
        if best.as_ref().is_none_or(|(b, _)| merit < *b) {
            if best.as_ref().is_some_and(|(b, _)| merit > 0.9 * b) {
                stall += 1;
            } else {
                stall = 0;
            }
            best = Some((merit, snapshot(&it, &res, iter, SolveStatus::MaxIter)));
        } else {
            stall += 1;
        }
        if res.pres <= opts.tol && res.dres <= opts.tol && res.gap <= opts.tol {
            status = SolveStatus::Optimal;
            best = Some((merit, snapshot(&it, &res, iter, status)));
            break;
        }
        if stall >= 20 && it.y.amax() > 1e10 {
            status = SolveStatus::Infeasible;
            break;
        }
        if iter == opts.max_iter {
            break;
        }

        let mu = (it.x.dot(&it.s) + it.xs.dot(&it.zs)) / ws.n_total;
        let Some(s_chol) = Cholesky::new(it.s.clone()) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let s_inv = symmetrize(s_chol.inverse());
        let schur = ws.schur(&it.x, &s_inv, &it.xs, &it.zs);
        let Some(schur_chol) = factor_schur(schur) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        let newton = |target: f64, corr: Option<&Direction>| -> Direction {
            // R = target·S⁻¹ − X − X·Rd·S⁻¹ − ΔXa·ΔSa·S⁻¹
            let mut comp = DMatrix::identity(n, n) * target - &it.x * &it.s - &it.x * &res.rd;
            let mut comp_lp = DVector::from_iterator(
                problem.n_slack,
                (0..problem.n_slack).map(|l| target - it.xs[l] * it.zs[l] - it.xs[l] * res.rd_lp[l]),
            );
            if let Some(c) = corr {
                comp -= &c.dx * &c.ds;
                comp_lp -= c.dxs.component_mul(&c.dzs);
            }
            let r = symmetrize(&comp * &s_inv);
            let r_lp = comp_lp.component_div(&it.zs);
            let rhs = &res.rp - ws.apply(&r, &r_lp);
            let dy = schur_chol.solve(&rhs);
            let (aty, aty_lp) = ws.adjoint(&dy);
            let ds = &res.rd - aty;
            let dzs = &res.rd_lp - aty_lp;
            let dx = symmetrize(&r - &it.x * &(&ds - &res.rd) * &s_inv);
            let dxs = &r_lp - it.xs.component_mul(&(&dzs - &res.rd_lp)).component_div(&it.zs);
            Direction { dx, dxs, dy, ds, dzs }
        };

        let steps = |d: &Direction, frac: f64| -> Option<(f64, f64)> {
            let ap = max_step_psd(&it.x, &d.dx)?.min(max_step_lp(&it.xs, &d.dxs));
            let ad = max_step_psd(&it.s, &d.ds)?.min(max_step_lp(&it.zs, &d.dzs));
            Some(((frac * ap).min(1.0), (frac * ad).min(1.0)))
        };

        let pred = newton(0.0, None);
        let Some((ap, ad)) = steps(&pred, 1.0) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let mu_aff = ((&it.x + &pred.dx * ap).dot(&(&it.s + &pred.ds * ad))
            + (&it.xs + &pred.dxs * ap).dot(&(&it.zs + &pred.dzs * ad)))
            / ws.n_total;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let dir = newton(sigma * mu, Some(&pred));
        let Some((ap, ad)) = steps(&dir, opts.step_fraction) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        it.x += &dir.dx * ap;
        it.xs += &dir.dxs * ap;
        it.y += &dir.dy * ad;
        it.s += &dir.ds * ad;
        it.zs += &dir.dzs * ad;
        it.x = symmetrize(std::mem::replace(&mut it.x, DMatrix::zeros(0, 0)));
        it.s = symmetrize(std::mem::replace(&mut it.s, DMatrix::zeros(0, 0)));
    }

    let (_, mut sol) = best.expect("at least one iterate is recorded");
    if sol.status != SolveStatus::Optimal {
        sol.status = status;
    }
    if status != SolveStatus::Optimal {
        sol.iterations = iterations;
    }
    Ok(sol)
}

fn factor_schur(mut a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = a.diagonal().amax().max(1e-300);
    for ridge in [0.0, 1e-14, 1e-12, 1e-10] {
        if ridge > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += ridge * scale;
            }
        }
        if let Some(c) = Cholesky::new(a.clone()) {
            return Some(c);
        }
    }
    None
}

fn snapshot(it: &Iterate, res: &Residuals, iter: usize, status: SolveStatus) -> SdpSolution {
    SdpSolution {
        z: SymMatrix::from_dmatrix(it.x.clone()),
        slacks: it.xs.iter().copied().collect(),
        dual: it.y.iter().copied().collect(),
        objective: res.pobj,
        dual_objective: res.dobj,
        status,
        iterations: iter,
        primal_residual: res.pres,
        dual_residual: res.dres,
        gap: res.gap,
    }
}
