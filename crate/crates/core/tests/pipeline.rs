use mec_sdr::harness::{
    aggregate, baseline_dominance, parse_csv, run_benchmark, to_csv, ExperimentConfig, RateRange, Scheme,
};
use mec_sdr::model::{objective, Assignment, Cap, Decision, Device, Instance, Task};
use mec_sdr::oracle::{solve_exact, OracleLimits};
use mec_sdr::par::Execution;
use mec_sdr::qcqp::YLayout;
use mec_sdr::rounding::{relax, round_matrix, round_relaxation, run_algorithm1, select_best, RoundingOptions};
use mec_sdr::sdp::{FormOptions, SolveStatus};

fn device() -> Device {
    Device {
        r0: 4e8,
        p_comp: 0.8,
        p_tx: 1.258,
        p_rx: 1.181,
        jc: 350.0,
        ec: 1.5e-10,
    }
}

fn task() -> Task {
    Task {
        alpha: 4e6,
        beta: 0.8e6,
        omega: 1.32e9,
    }
}

fn low_rate_instance(n: usize) -> Instance {
    Instance {
        device: device(),
        caps: vec![
            Cap { r: 2e9, c_ul: 7.5e5, c_dl: 9e5 },
            Cap { r: 2.2e9, c_ul: 6e5, c_dl: 8e5 },
        ],
        tasks: vec![task(); n],
        lambda_t: 0.5,
        lambda_e: 0.5,
    }
}

#[test]
fn dominated_cap_gives_local_decision() {
    let inst = Instance {
        device: device(),
        caps: vec![Cap { r: 1e8, c_ul: 1e3, c_dl: 1e3 }],
        tasks: vec![task()],
        lambda_t: 0.5,
        lambda_e: 0.5,
    };
    let rep = run_algorithm1(&inst, &RoundingOptions::default()).unwrap();
    assert_eq!(rep.decision.assignment.cpu_of, vec![0]);
    let local = 1.32e9 / 4e8;
    assert!((rep.psi - (0.5 * local + 0.5 * 0.8 * local)).abs() < 1e-12);
    assert_eq!(rep.solver_status, SolveStatus::Optimal);
}

#[test]
fn latency_only_with_fast_cap_matches_oracle() {
    let inst = Instance {
        device: device(),
        caps: vec![Cap { r: 2e10, c_ul: 1e9, c_dl: 1e9 }],
        tasks: vec![task(); 2],
        lambda_t: 1.0,
        lambda_e: 0.0,
    };
    // with λ_e = 0 the relaxed cost does not involve γ, so Z* leaves it
    // undetermined; the exact per-candidate γ is needed
    let opts = RoundingOptions { refine_gamma: true, ..Default::default() };
    let rep = run_algorithm1(&inst, &opts).unwrap();
    let oracle = solve_exact(&inst, &OracleLimits::default()).unwrap();
    assert!(rep.decision.assignment.cpu_of.contains(&1));
    assert!((rep.psi - oracle.psi_p1).abs() <= 1e-9 * (1.0 + oracle.psi_p1));
    let latency = objective(&inst, &oracle.best).latency;
    assert!((rep.psi - latency).abs() <= 1e-9 * latency);
}

fn objective_psi(inst: &Instance, dec: &Decision) -> f64 {
    objective(inst, dec).psi
}

#[test]
fn low_rate_instance_sits_in_oracle_sandwich() {
    let inst = low_rate_instance(5);
    let oracle = solve_exact(&inst, &OracleLimits::default()).unwrap();
    let opts = RoundingOptions::default();
    let relaxation = relax(&inst, &FormOptions::default(), &opts.solver).unwrap();
    let rep = round_relaxation(&inst, &relaxation, &opts).unwrap();
    assert!(relaxation.solution.objective <= oracle.psi_p3 + 1e-5 * (1.0 + oracle.psi_p3));
    assert!(rep.psi >= oracle.psi_p1 - 1e-9);
    assert!((rep.psi - objective_psi(&inst, &rep.decision)).abs() <= 1e-12 * rep.psi);
    rep.decision.validate_for(&inst).unwrap();
}

#[test]
fn more_samples_never_hurt_and_refinement_never_hurts() {
    let inst = low_rate_instance(4);
    let relaxation = relax(&inst, &FormOptions::default(), &Default::default()).unwrap();
    let layout = YLayout::for_instance(&inst);
    let z = &relaxation.solution.z;
    let mut last = f64::INFINITY;
    for l in [1, 5, 20, 100] {
        let opts = RoundingOptions { l, seed: 42, ..Default::default() };
        let r = round_matrix(&inst, &layout, z, &opts).unwrap();
        assert!(r.selection.breakdown.psi <= last);
        last = r.selection.breakdown.psi;
        let refined = round_matrix(&inst, &layout, z, &RoundingOptions { refine_gamma: true, ..opts }).unwrap();
        assert!(refined.selection.breakdown.psi <= r.selection.breakdown.psi);
    }
}

#[test]
fn rounding_is_deterministic_across_execution_strategies() {
    let inst = low_rate_instance(4);
    let seq = RoundingOptions { seed: 9, execution: Execution::Sequential, ..Default::default() };
    let par = RoundingOptions { execution: Execution::Parallel, ..seq };
    let a = run_algorithm1(&inst, &seq).unwrap();
    let b = run_algorithm1(&inst, &par).unwrap();
    assert_eq!(a.decision, b.decision);
    assert_eq!(a.psi.to_bits(), b.psi.to_bits());
}

#[test]
fn select_best_finds_planted_optimum() {
    let inst = low_rate_instance(3);
    let oracle = solve_exact(&inst, &OracleLimits::default()).unwrap();
    let others = [Assignment::all_local(3), Assignment::new(vec![1, 1, 1]), Assignment::new(vec![2, 0, 1])];
    let mut cands = others.to_vec();
    cands.push(oracle.best.assignment.clone());
    let sel = select_best(&inst, &cands, oracle.best.gamma, &RoundingOptions::default());
    assert!((sel.breakdown.psi - oracle.psi_p1).abs() <= 1e-12 * oracle.psi_p1);
    for a in &others {
        assert!(sel.breakdown.psi <= objective_psi(&inst, &Decision::new(a.clone(), oracle.best.gamma)));
    }
    let single = select_best(&inst, &others[..1], 0.3, &RoundingOptions::default());
    assert_eq!(single.decision, Decision::new(others[0].clone(), 0.3));
}

#[test]
fn baseline_keeps_gamma_zero() {
    let inst = low_rate_instance(3);
    let rep = run_algorithm1(&inst, &RoundingOptions { pin_gamma_zero: true, refine_gamma: true, ..Default::default() }).unwrap();
    assert_eq!(rep.gamma, 0.0);
    assert_eq!(rep.solver_status, SolveStatus::Optimal);
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        n_max: 3,
        realizations: 4,
        seed: 5,
        ..ExperimentConfig::default()
    }
}

#[test]
fn bench_rows_are_consistent() {
    let cfg = small_config();
    let rows = run_benchmark(&cfg).unwrap();
    assert_eq!(rows.len(), 3 * 3 * 4 * 3);
    for r in &rows {
        assert!(r.psi.is_finite(), "{r:?}");
        let recomputed = 0.5 * r.latency_s + 0.5 * r.energy_j;
        assert!((r.psi - recomputed).abs() <= 1e-9 * r.psi);
        if r.scheme == Scheme::SdrNocompress {
            assert_eq!(r.gamma, 0.0);
        }
        assert!(r.wall_ms.is_none());
    }
    for w in rows.windows(2) {
        assert!(
            (w[0].rate_range, w[0].n_tasks, w[0].realization, w[0].scheme)
                < (w[1].rate_range, w[1].n_tasks, w[1].realization, w[1].scheme)
        );
    }
    // the oracle is a lower bound for both schemes
    for chunk in rows.chunks(3) {
        let oracle = chunk.iter().find(|r| r.scheme == Scheme::Oracle).unwrap();
        assert!(chunk.iter().all(|r| r.psi >= oracle.psi - 1e-9));
    }
    let text = to_csv(&rows);
    assert_eq!(parse_csv(&text).unwrap(), rows);
    let agg = aggregate(&rows);
    assert_eq!(agg.len(), 3 * 3 * 3);
    assert!(agg
        .iter()
        .filter(|a| a.scheme != Scheme::Oracle)
        .all(|a| a.oracle_ratio_mean.unwrap() >= 1.0 - 1e-12));
    let dom = baseline_dominance(&rows);
    assert_eq!(dom.len(), 9);
    assert!(dom.iter().all(|d| d.realizations == 4));
}

#[test]
fn bench_csv_is_reproducible() {
    let cfg = ExperimentConfig {
        rate_ranges: vec![RateRange::Mid],
        ..small_config()
    };
    let a = to_csv(&run_benchmark(&cfg).unwrap());
    let b = to_csv(&run_benchmark(&ExperimentConfig { execution: Execution::Sequential, ..cfg }).unwrap());
    assert_eq!(a, b);
}
