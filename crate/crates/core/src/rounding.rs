//! Recover a feasible decision from the relaxed matrix Z*.
//!
//! If Z* is rank one the decision is read off its leading eigenvector.
//! Otherwise `L` allocation vectors are drawn from N(0, Z′), Z′ being the
//! allocation block of Z*, each is rounded row-wise to a one-hot
//! allocation, and the candidate with the smallest true weighted cost
//! wins. The compression fraction is read from Z* and shared by all
//! candidates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{factor_sqrt, psd_project, SymMatrix};
use crate::model::{objective, Assignment, CostBreakdown, Decision, Instance};
use crate::oracle::optimal_gamma_for;
use crate::par::{map_indexed, Execution};
use crate::qcqp::{build, QcqpForm, YLayout};
use crate::sdp::{
    homogenize, rank_one_check, to_standard_form, FormOptions, HomogenizedProblem, SdpSolution,
    SolveStatus, SolverOptions, StandardForm, RANK_ONE_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundingOptions {
    /// Number of Gaussian samples.
    pub l: usize,
    pub seed: u64,
    /// Per-candidate exact γ search in addition to the shared γ.
    pub refine_gamma: bool,
    /// Also round the allocation part of Z*'s last column.
    pub include_column_candidate: bool,
    /// Solve with γ ≡ 0 (no-compression scheme).
    pub pin_gamma_zero: bool,
    pub rank_tol: f64,
    pub solver: SolverOptions,
    pub execution: Execution,
}

impl Default for RoundingOptions {
    fn default() -> Self {
        Self {
            l: 100,
            seed: 0,
            refine_gamma: false,
            include_column_candidate: true,
            pin_gamma_zero: false,
            rank_tol: RANK_ONE_TOL,
            solver: SolverOptions::default(),
            execution: Execution::default(),
        }
    }
}

/// γ read from the (γ, homogeneous) entry of Z*, clamped into [0, 1].
pub fn extract_gamma(z: &SymMatrix, layout: &YLayout) -> f64 {
    z.get(layout.gamma_index(), layout.homogeneous_index())
        .clamp(0.0, 1.0)
}

/// Draw `l` vectors from N(0, Z′). Sample `j` uses its own ChaCha stream
/// derived from `(seed, j)`, so the result is independent of execution
/// order and a larger `l` extends a smaller one.
pub fn sample_candidates(
    z: &SymMatrix,
    layout: &YLayout,
    l: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = (0..layout.q()).collect();
    let cov = psd_project(&z.principal(&idx))?;
    let f = factor_sqrt(&cov)?;
    let q = layout.q();
    Ok(map_indexed(exec, l, |j| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let w: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
        let w = nalgebra::DVector::from_vec(w);
        (&f * w).iter().copied().collect()
    }))
}

/// One-hot per task row; ties go to the lowest CPU index.
pub fn round_candidate(x: &[f64], layout: &YLayout) -> Assignment {
    layout.round_rows(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum CandidateSource {
    RankOne,
    Gaussian(usize),
    /// Rounded last column of Z*; not part of plain Gaussian randomization.
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub decision: Decision,
    pub breakdown: CostBreakdown,
    pub index: usize,
    pub candidates: usize,
    pub summary: PsiSummary,
}

/// Evaluate every candidate with the true cost at the shared `gamma`
/// (and at its own optimal γ when `refine_gamma`) and keep the cheapest,
/// first index on ties.
pub fn select_best(
    inst: &Instance,
    candidates: &[Assignment],
    gamma: f64,
    opts: &RoundingOptions,
) -> Selection {
    assert!(!candidates.is_empty(), "select_best needs at least one candidate");
    let refine = opts.refine_gamma && !opts.pin_gamma_zero;
    let evaluated = map_indexed(opts.execution, candidates.len(), |c| {
        let a = &candidates[c];
        let mut dec = Decision::new(a.clone(), gamma);
        let mut psi = objective(inst, &dec).psi;
        if refine {
            let (g, p) = optimal_gamma_for(inst, a);
            if p < psi {
                dec.gamma = g;
                psi = p;
            }
        }
        (dec, psi)
    });
    let mut best = 0;
    for (c, (_, psi)) in evaluated.iter().enumerate() {
        if *psi < evaluated[best].1 {
            best = c;
        }
    }
    let n = evaluated.len() as f64;
    let summary = PsiSummary {
        min: evaluated[best].1,
        mean: evaluated.iter().map(|e| e.1).sum::<f64>() / n,
        max: evaluated.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max),
    };
    let decision = evaluated[best].0.clone();
    Selection {
        breakdown: objective(inst, &decision),
        decision,
        index: best,
        candidates: candidates.len(),
        summary,
    }
}

/// The solved relaxation together with the intermediate forms.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub form: QcqpForm,
    pub homogenized: HomogenizedProblem,
    pub standard: StandardForm,
    pub solution: SdpSolution,
}

pub fn relax(inst: &Instance, form_opts: &FormOptions, solver: &SolverOptions) -> Result<Relaxation> {
    inst.validate()?;
    let form = build(inst);
    let homogenized = homogenize(&form);
    let standard = to_standard_form(&homogenized, form_opts);
    let solution = standard.solve(solver)?;
    Ok(Relaxation {
        form,
        homogenized,
        standard,
        solution,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundingReport {
    pub decision: Decision,
    pub breakdown: CostBreakdown,
    /// True weighted cost of `decision`.
    pub psi: f64,
    pub gamma: f64,
    /// Tr(B₀ Z*).
    pub sdr_lower_bound: f64,
    pub rank_one: bool,
    pub rank_ratio: f64,
    pub candidates_evaluated: usize,
    pub best_source: CandidateSource,
    pub psi_summary: PsiSummary,
    pub solver_status: SolveStatus,
    pub solver_iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

/// Indices of Z* that determine the decision: allocation slots, γ (when
/// present) and the homogeneous slot. The latency row is left out because
/// the relaxation leaves it free beyond its last-column entry.
fn decision_slots(layout: &YLayout, pinned: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..layout.q()).collect();
    if !pinned {
        idx.push(layout.gamma_index());
    }
    idx.push(layout.homogeneous_index());
    idx
}

/// Outcome of rounding one relaxed matrix.
#[derive(Debug, Clone, Serialize)]
pub struct Rounded {
    pub selection: Selection,
    pub rank_one: bool,
    pub rank_ratio: f64,
    pub best_source: CandidateSource,
}

/// Round a lifted matrix `z` of order `layout.len() + 1`. With
/// `pin_gamma_zero` the γ row of `z` is ignored.
pub fn round_matrix(inst: &Instance, layout: &YLayout, z: &SymMatrix, opts: &RoundingOptions) -> Result<Rounded> {
    if z.order() != layout.len() + 1 {
        return Err(crate::error::Error::Dimension {
            expected: layout.len() + 1,
            got: z.order(),
        });
    }
    let slots = decision_slots(layout, opts.pin_gamma_zero);
    let rank = rank_one_check(&z.principal(&slots), opts.rank_tol)?;

    let (candidates, sources, gamma) = if rank.is_rank_one {
        let v = rank.factor();
        let hom = *v.last().expect("non-empty");
        let mut y = vec![0.0; layout.len()];
        for (pos, &slot) in slots.iter().enumerate().take(slots.len() - 1) {
            y[slot] = v[pos] / hom;
        }
        let dec = layout.decode(&y);
        (vec![dec.assignment], vec![CandidateSource::RankOne], dec.gamma)
    } else {
        let gamma = extract_gamma(z, layout);
        let samples = sample_candidates(z, layout, opts.l, opts.seed, opts.execution)?;
        let mut cands: Vec<Assignment> = samples.iter().map(|x| round_candidate(x, layout)).collect();
        let mut sources: Vec<CandidateSource> = (0..cands.len()).map(CandidateSource::Gaussian).collect();
        if opts.include_column_candidate {
            let col: Vec<f64> = (0..layout.q())
                .map(|s| z.get(s, layout.homogeneous_index()))
                .collect();
            cands.push(round_candidate(&col, layout));
            sources.push(CandidateSource::Column);
        }
        (cands, sources, gamma)
    };
    let gamma = if opts.pin_gamma_zero { 0.0 } else { gamma };

    let selection = select_best(inst, &candidates, gamma, opts);
    Ok(Rounded {
        best_source: sources[selection.index],
        selection,
        rank_one: rank.is_rank_one,
        rank_ratio: rank.ratio,
    })
}

/// Round an already solved relaxation.
pub fn round_relaxation(inst: &Instance, relaxation: &Relaxation, opts: &RoundingOptions) -> Result<RoundingReport> {
    let sol = &relaxation.solution;
    let r = round_matrix(inst, &relaxation.form.layout, &sol.z, opts)?;
    let sel = r.selection;
    Ok(RoundingReport {
        psi: sel.breakdown.psi,
        gamma: sel.decision.gamma,
        decision: sel.decision,
        breakdown: sel.breakdown,
        sdr_lower_bound: sol.objective,
        rank_one: r.rank_one,
        rank_ratio: r.rank_ratio,
        candidates_evaluated: sel.candidates,
        best_source: r.best_source,
        psi_summary: sel.summary,
        solver_status: sol.status,
        solver_iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
    })
}

/// Full pipeline: build, lift, solve, and round.
pub fn run_algorithm1(inst: &Instance, opts: &RoundingOptions) -> Result<RoundingReport> {
    let form_opts = FormOptions {
        pin_gamma_zero: opts.pin_gamma_zero,
        ..FormOptions::default()
    };
    let relaxation = relax(inst, &form_opts, &opts.solver)?;
    round_relaxation(inst, &relaxation, opts)
}
