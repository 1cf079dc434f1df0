//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if a hard criterion fails.

use std::time::{Duration, Instant};

use mec_sdr::harness::{
    default_instance_template, run_benchmark, sample_realization, to_csv, ExperimentConfig,
    InstanceTemplate, RateRange, ResultRow, Scheme,
};
use mec_sdr::model::{objective, Assignment, Decision, Instance};
use mec_sdr::oracle::{optimal_gamma_for, solve_exact, OracleLimits};
use mec_sdr::par::Execution;
use mec_sdr::qcqp::{build, YLayout};
use mec_sdr::rounding::{relax, round_matrix, round_relaxation, RoundingOptions};
use mec_sdr::sdp::solver::{solve, SdpProblem, SolverOptions, SparseSym};
use mec_sdr::sdp::{homogenize, FormOptions};
use mec_sdr::linalg::SymMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass,
    Fail,
    /// Criterion is an empirical target; a miss is reported but not fatal.
    SoftFail,
}

struct Outcome {
    verdict: Verdict,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn hard(ok: bool, summary: String, details: Vec<String>) -> Self {
        Self {
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            summary,
            details,
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Random instance with N tasks and M CAPs, every parameter drawn from the
/// template ranges (CAP CPU rates between the two template rates).
fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, range: RateRange) -> Instance {
    let base = default_instance_template();
    let (lo, hi) = (base.cap_rates[0], base.cap_rates[1]);
    let template = InstanceTemplate {
        cap_rates: (0..m).map(|_| rng.random_range(lo..=hi)).collect(),
        ..base
    };
    sample_realization(&template, range, n, rng)
}

fn random_assignment(rng: &mut ChaCha8Rng, inst: &Instance) -> Assignment {
    Assignment::new((0..inst.n_tasks()).map(|_| rng.random_range(0..inst.n_cpus())).collect())
}

fn random_range(rng: &mut ChaCha8Rng) -> RateRange {
    RateRange::ALL[rng.random_range(0..3)]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_q, mut worst_tr) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=3));
        let range = random_range(&mut rng);
        let inst = random_instance(&mut rng, n, m, range);
        let form = build(&inst);
        let hp = homogenize(&form);
        for _ in 0..20 {
            let gamma = match rng.random_range(0..4) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..=1.0),
            };
            let dec = Decision::new(random_assignment(&mut rng, &inst), gamma);
            let b = objective(&inst, &dec);
            let y = form.layout.encode(&dec, b.latency);
            let q = form.eval_objective(&y).expect("layout length");
            let tr = hp.b0_mat.trace_dot(&hp.lift(&y));
            worst_q = worst_q.max(rel_err(q, b.psi));
            worst_tr = worst_tr.max(rel_err(tr, b.psi));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst_q <= 1e-9 && worst_tr <= 1e-9 && elapsed < Duration::from_secs(10);
    Outcome::hard(
        ok,
        format!(
            "algebraic equivalence on 4000 decisions: max rel err qcqp {worst_q:.1e}, trace {worst_tr:.1e} (tol 1e-9), {elapsed:.2?} (< 10 s)"
        ),
        vec![],
    )
}

fn smallest_eigenvalue_problem() -> SdpProblem {
    let mut p = SdpProblem::new(SymMatrix::from_diagonal(&[1.0, 2.0]), 0);
    let mut tr = SparseSym::new(2);
    tr.push(0, 0, 1.0);
    tr.push(1, 1, 1.0);
    p.push(tr, None, 1.0);
    p
}

fn scalar_problem() -> SdpProblem {
    let mut p = SdpProblem::new(SymMatrix::from_diagonal(&[3.0]), 0);
    let mut a = SparseSym::new(1);
    a.push(0, 0, 2.0);
    p.push(a, None, 4.0);
    p
}

/// max Σ_{i<j} (1 − Z_ij)/2 with unit diagonal, solved as
/// 3/2 − min Σ_{i<j} Z_ij / 2.
fn triangle_maxcut_problem() -> SdpProblem {
    let cost = SymMatrix::from_upper_fn(3, |i, j| if i == j { 0.0 } else { 0.25 });
    let mut p = SdpProblem::new(cost, 0);
    for i in 0..3 {
        let mut e = SparseSym::new(3);
        e.push(i, i, 1.0);
        p.push(e, None, 1.0);
    }
    p
}

fn criterion_2() -> Outcome {
    type Case = (&'static str, SdpProblem, f64, fn(f64) -> f64);
    let cases: [Case; 3] = [
        ("smallest eigenvalue", smallest_eigenvalue_problem(), 1.0, |o| o),
        ("scalar", scalar_problem(), 6.0, |o| o),
        ("triangle max-cut", triangle_maxcut_problem(), 2.25, |o| 1.5 - o),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, p, analytic, value) in cases {
        let start = Instant::now();
        let s = solve(&p, &SolverOptions::default()).expect("valid problem");
        let elapsed = start.elapsed();
        let err = (value(s.objective) - analytic).abs();
        let good = s.is_optimal()
            && err <= 1e-6
            && s.primal_residual <= 1e-7
            && s.dual_residual <= 1e-7
            && s.iterations < 50
            && elapsed < Duration::from_secs(1);
        ok &= good;
        details.push(format!(
            "{name}: |obj - {analytic}| = {err:.1e}, residuals ({:.1e}, {:.1e}), {} iterations, {elapsed:.2?}, {}",
            s.primal_residual,
            s.dual_residual,
            s.iterations,
            if good { "ok" } else { "FAIL" }
        ));
    }
    // the triangle optimum is the equicorrelation matrix
    let s = solve(&triangle_maxcut_problem(), &SolverOptions::default()).expect("valid problem");
    let off = (s.z.get(0, 1) + 0.5).abs().max((s.z.get(0, 2) + 0.5).abs()).max((s.z.get(1, 2) + 0.5).abs());
    ok &= off <= 1e-5;
    details.push(format!("triangle off-diagonal deviation from -1/2: {off:.1e}"));
    Outcome::hard(ok, "three analytic SDPs (tol 1e-6, residuals 1e-7, < 50 iterations, < 1 s)".into(), details)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let opts = RoundingOptions {
        l: 100,
        seed: 3,
        include_column_candidate: true,
        ..RoundingOptions::default()
    };
    let (mut bound_ok, mut rounding_ok) = (true, true);
    let mut ratios = Vec::new();
    let mut refined = Vec::new();
    let mut details = Vec::new();
    for case in 0..20 {
        let n = rng.random_range(1..=6);
        let inst = random_instance(&mut rng, n, 2, RateRange::Low);
        let oracle = solve_exact(&inst, &OracleLimits::default()).expect("small instance");
        let relaxation = relax(&inst, &FormOptions::default(), &opts.solver).expect("solver runs");
        let rep = round_relaxation(&inst, &relaxation, &opts).expect("rounding");
        let lb = relaxation.solution.objective;
        let a = lb <= oracle.psi_p3 + 1e-5 * (1.0 + oracle.psi_p3.abs());
        let b = rep.psi >= oracle.psi_p1 - 1e-9;
        bound_ok &= a && relaxation.solution.is_optimal();
        rounding_ok &= b;
        ratios.push(rep.psi / oracle.psi_p1);
        let with_refine = RoundingOptions { refine_gamma: true, ..opts };
        refined.push(round_relaxation(&inst, &relaxation, &with_refine).expect("rounding").psi / oracle.psi_p1);
        if !(a && b) {
            details.push(format!(
                "case {case} (N={n}): sdp {lb} vs psi_p3 {}, rounding {} vs psi_p1 {}, status {}",
                oracle.psi_p3, rep.psi, oracle.psi_p1, relaxation.solution.status
            ));
        }
    }
    let elapsed = start.elapsed();
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) }
    };
    let med = median(&mut ratios);
    let med_refined = median(&mut refined);
    let hard_ok = bound_ok && rounding_ok && elapsed < Duration::from_secs(120);
    details.push(format!(
        "(a) sdp bound <= psi_p3: {}; (b) rounding >= psi_p1: {}; (c) median ratio {med:.4} (target <= 1.10; with exact per-candidate gamma {med_refined:.4})",
        if bound_ok { "ok" } else { "FAIL" },
        if rounding_ok { "ok" } else { "FAIL" },
    ));
    let verdict = match (hard_ok, med <= 1.10) {
        (false, _) => Verdict::Fail,
        (true, true) => Verdict::Pass,
        (true, false) => Verdict::SoftFail,
    };
    Outcome {
        verdict,
        summary: format!("oracle sandwich on 20 low-rate instances, median ratio {med:.4}, {elapsed:.2?} (< 2 min)"),
        details,
    }
}

struct RangeStats {
    compress: f64,
    nocompress: f64,
    /// Mean over realizations of (nocompress − compress) / nocompress.
    rel_gap: f64,
    gamma: f64,
}

fn range_stats(rows: &[ResultRow], range: RateRange, n: usize) -> RangeStats {
    let pick = |s: Scheme| -> Vec<&ResultRow> {
        rows.iter().filter(|r| r.rate_range == range && r.n_tasks == n && r.scheme == s).collect()
    };
    let (c, b) = (pick(Scheme::SdrCompress), pick(Scheme::SdrNocompress));
    let mean = |v: &[&ResultRow], f: fn(&ResultRow) -> f64| v.iter().map(|r| f(r)).sum::<f64>() / v.len() as f64;
    let gaps: Vec<f64> = c
        .iter()
        .zip(&b)
        .map(|(c, b)| {
            assert_eq!(c.realization, b.realization);
            (b.psi - c.psi) / b.psi
        })
        .collect();
    RangeStats {
        compress: mean(&c, |r| r.psi),
        nocompress: mean(&b, |r| r.psi),
        rel_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
        gamma: mean(&c, |r| r.gamma),
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        seed: 2024,
        ..ExperimentConfig::default()
    };
    let rows = run_benchmark(&cfg).expect("valid config");
    let elapsed = start.elapsed();
    let failed = rows.iter().filter(|r| !r.psi.is_finite()).count();
    let mut details = Vec::new();
    let (mut a, mut b, mut c) = (failed == 0, failed == 0, failed == 0);
    for n in cfg.n_min..=cfg.n_max {
        let low = range_stats(&rows, RateRange::Low, n);
        let mid = range_stats(&rows, RateRange::Mid, n);
        let high = range_stats(&rows, RateRange::High, n);
        let a_n = low.compress <= low.nocompress && (n < 3 || low.compress < low.nocompress);
        let b_n = mid.compress <= mid.nocompress && mid.rel_gap < low.rel_gap;
        let c_n = high.rel_gap.abs() <= 0.01 && high.gamma <= 0.05;
        a &= a_n;
        b &= b_n;
        c &= c_n;
        details.push(format!(
            "N={n:2}: low {:.4}/{:.4} gap {:+.4} {} | mid {:.4}/{:.4} gap {:+.4} {} | high gap {:+.4} gamma {:.3} {}",
            low.compress,
            low.nocompress,
            low.rel_gap,
            if a_n { "ok" } else { "FAIL" },
            mid.compress,
            mid.nocompress,
            mid.rel_gap,
            if b_n { "ok" } else { "FAIL" },
            high.rel_gap,
            high.gamma,
            if c_n { "ok" } else { "FAIL" },
        ));
    }
    let flag = |x: bool| if x { "ok" } else { "FAIL" };
    Outcome::hard(
        a && b && c,
        format!(
            "cost-vs-rate ordering over N=1..10, 50 realizations: (a) low {} (b) mid {} (c) high {}; {} solver errors; {elapsed:.2?} (target < 30 min)",
            flag(a),
            flag(b),
            flag(c),
            failed
        ),
        details,
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut recovered = 0;
    let mut details = Vec::new();
    for case in 0..50 {
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=3));
        let range = random_range(&mut rng);
        let inst = random_instance(&mut rng, n, m, range);
        let planted = Decision::new(random_assignment(&mut rng, &inst), rng.random_range(0.0..=1.0));
        let layout = YLayout::for_instance(&inst);
        let y = layout.encode(&planted, objective(&inst, &planted).latency);
        let mut v = y;
        v.push(1.0);
        let z = SymMatrix::outer(&v);
        let got = round_matrix(&inst, &layout, &z, &RoundingOptions::default()).expect("rounding");
        let dec = &got.selection.decision;
        if got.rank_one && dec.assignment == planted.assignment && (dec.gamma - planted.gamma).abs() <= 1e-12 {
            recovered += 1;
        } else {
            details.push(format!("case {case}: planted {:?} got {:?}", planted, dec));
        }
    }
    let cfg = ExperimentConfig {
        n_max: 4,
        realizations: 3,
        seed: 77,
        ..ExperimentConfig::default()
    };
    let first = to_csv(&run_benchmark(&cfg).expect("valid config"));
    let second = to_csv(
        &run_benchmark(&ExperimentConfig {
            execution: Execution::Sequential,
            ..cfg.clone()
        })
        .expect("valid config"),
    );
    let identical = first == second;
    let elapsed = start.elapsed();
    Outcome::hard(
        recovered == 50 && identical && elapsed < Duration::from_secs(30),
        format!(
            "rank-one round-trip {recovered}/50 exact, bench CSV reproduced bit-identically: {identical}, {elapsed:.2?} (< 30 s)"
        ),
        details,
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut worst, mut worst_over_bound, mut never_worse) = (0.0f64, 0.0f64, true);
    let mut off_grid = 0;
    for _ in 0..100 {
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=3));
        let range = random_range(&mut rng);
        let inst = random_instance(&mut rng, n, m, range);
        let a = random_assignment(&mut rng, &inst);
        let (_, psi_bp) = optimal_gamma_for(&inst, &a);
        let psi_at = |g: f64| objective(&inst, &Decision::new(a.clone(), g)).psi;
        let grid: Vec<f64> = (0..=10_000).map(|s| psi_at(s as f64 * 1e-4)).collect();
        let psi_grid = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let diff = (psi_bp - psi_grid).abs();
        never_worse &= psi_bp <= psi_grid + 1e-12 * (1.0 + psi_grid);
        if diff > 1e-6 {
            off_grid += 1;
            // a convex piecewise-linear function sampled at step h can miss
            // its minimum by at most max|slope|·h/2
            let slope = grid.windows(2).map(|w| ((w[1] - w[0]) / 1e-4).abs()).fold(0.0, f64::max);
            worst_over_bound = worst_over_bound.max(diff / (slope * 0.5e-4));
        }
        worst = worst.max(diff);
    }
    let elapsed = start.elapsed();
    Outcome::hard(
        worst <= 1e-6 && never_worse && elapsed < Duration::from_secs(10),
        format!(
            "breakpoint search vs 1e-4 grid on 100 pairs: max |diff| {worst:.2e} (tol 1e-6), {elapsed:.2?} (< 10 s)"
        ),
        vec![format!(
            "breakpoint never above grid: {never_worse}; {off_grid} pairs differ by > 1e-6, all within {:.2}x the grid resolution bound max|slope|*h/2",
            worst_over_bound
        )],
    )
}

fn main() {
    // `cargo test -- --list` and similar probes run the binary with flags
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 6] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("5", criterion_5),
        ("6", criterion_6),
        ("4", criterion_4),
    ];
    let mut results = Vec::new();
    for (id, run) in criteria {
        let o = run();
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::SoftFail => "SOFT-FAIL",
        };
        println!("criterion {id}: {tag} - {}", o.summary);
        if !matches!(o.verdict, Verdict::Pass) {
            for d in &o.details {
                println!("    {d}");
            }
        }
        results.push((id, o.verdict));
    }
    let hard: Vec<&str> = results
        .iter()
        .filter(|(_, v)| matches!(v, Verdict::Fail))
        .map(|(id, _)| *id)
        .collect();
    if !hard.is_empty() {
        println!("acceptance: hard failures in criteria {}", hard.join(", "));
        std::process::exit(1);
    }
    println!("acceptance: all hard criteria passed");
}
