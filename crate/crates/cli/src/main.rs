use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mec_sdr::harness::{
    aggregate, baseline_dominance, plot_script, run_benchmark, to_csv, ExperimentConfig, RateRange, Scheme,
};
use mec_sdr::oracle::{solve_exact, OracleLimits};
use mec_sdr::par::Execution;
use mec_sdr::rounding::{run_algorithm1, RoundingOptions, RoundingReport};
use mec_sdr::sdp::SolveStatus;
use mec_sdr::{Error, Instance};
use serde::Serialize;

/// Joint task allocation and compression for mobile edge offloading.
#[derive(Parser)]
#[command(name = "mec-sdr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance with the SDR pipeline and print the decision.
    Solve(SolveArgs),
    /// Exhaustively solve a small instance.
    Oracle(OracleArgs),
    /// Run the randomized benchmark and write CSV.
    Bench(BenchArgs),
    /// Compare the SDR decision with the exact optimum.
    Compare(SolveArgs),
}

#[derive(Args)]
struct RoundingArgs {
    /// Gaussian samples.
    #[arg(long, default_value_t = 100)]
    l: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also search the exact γ per candidate.
    #[arg(long)]
    refine_gamma: bool,
    /// Skip the rounded last column of Z* as a candidate.
    #[arg(long)]
    no_column_candidate: bool,
}

impl RoundingArgs {
    fn options(&self) -> RoundingOptions {
        RoundingOptions {
            l: self.l,
            seed: self.seed,
            refine_gamma: self.refine_gamma,
            include_column_candidate: !self.no_column_candidate,
            ..RoundingOptions::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    rounding: RoundingArgs,
    #[arg(long, default_value_t = OracleLimits::default().max_assignments)]
    max_assignments: u64,
    /// Write the machine-readable result here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = OracleLimits::default().max_assignments)]
    max_assignments: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Comma-separated subset of low, mid, high.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<String>>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Fill the wall_ms column (makes the CSV run-dependent).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    sequential: bool,
    /// Also write a matplotlib script next to the CSV.
    #[arg(long)]
    plot_script: bool,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Solver(String),
    Oracle(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Oracle(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Solver(m) | Failure::Oracle(m) => m,
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    Instance::from_json(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_json(path: &Option<PathBuf>, value: &impl Serialize) -> Result<(), Failure> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value).expect("plain data serializes");
        write(path, &(text + "\n"))?;
    }
    Ok(())
}

fn run_sdr(inst: &Instance, args: &RoundingArgs) -> Result<RoundingReport, Failure> {
    run_algorithm1(inst, &args.options()).map_err(|e| Failure::Solver(e.to_string()))
}

fn solver_ok(rep: &RoundingReport) -> Result<(), Failure> {
    if rep.solver_status == SolveStatus::Optimal {
        Ok(())
    } else {
        Err(Failure::Solver(format!(
            "SDP solver stopped with status {} after {} iterations",
            rep.solver_status, rep.solver_iterations
        )))
    }
}

fn solve(args: &SolveArgs) -> Result<(), Failure> {
    let inst = load_instance(&args.config)?;
    let rep = run_sdr(&inst, &args.rounding)?;
    println!("assignment: {:?}", rep.decision.assignment.cpu_of);
    println!("gamma:      {}", rep.gamma);
    println!("psi:        {}", rep.psi);
    println!("latency:    {} s", rep.breakdown.latency);
    println!("energy:     {} J", rep.breakdown.energy);
    println!("sdr bound:  {}", rep.sdr_lower_bound);
    println!("solver:     {} ({} iterations)", rep.solver_status, rep.solver_iterations);
    write_json(&args.out, &rep)?;
    solver_ok(&rep)
}

fn exact(inst: &Instance, max_assignments: u64) -> Result<mec_sdr::oracle::OracleResult, Failure> {
    let limits = OracleLimits {
        max_assignments,
        ..OracleLimits::default()
    };
    solve_exact(inst, &limits).map_err(|e| match e {
        Error::TooLarge { .. } => Failure::Oracle(e.to_string()),
        other => Failure::Usage(other.to_string()),
    })
}

fn oracle(args: &OracleArgs) -> Result<(), Failure> {
    let inst = load_instance(&args.config)?;
    let r = exact(&inst, args.max_assignments)?;
    println!("assignment: {:?}", r.best.assignment.cpu_of);
    println!("gamma:      {}", r.best.gamma);
    println!("psi:        {}", r.psi_p1);
    println!("psi (endpoint latency): {}", r.psi_p3);
    println!("enumerated: {}", r.enumerated);
    write_json(&args.out, &r)
}

#[derive(Serialize)]
struct Comparison {
    psi_sdr: f64,
    psi_oracle: f64,
    ratio: f64,
    sdr_lower_bound: f64,
    psi_endpoint_oracle: f64,
    sdr: RoundingReport,
    oracle: mec_sdr::oracle::OracleResult,
}

fn compare(args: &SolveArgs) -> Result<(), Failure> {
    let inst = load_instance(&args.config)?;
    let r = exact(&inst, args.max_assignments)?;
    let rep = run_sdr(&inst, &args.rounding)?;
    let ratio = rep.psi / r.psi_p1;
    println!("psi_sdr:    {}", rep.psi);
    println!("psi_oracle: {}", r.psi_p1);
    println!("ratio:      {ratio}");
    println!("sdr bound:  {} (endpoint-latency optimum {})", rep.sdr_lower_bound, r.psi_p3);
    let out = Comparison {
        psi_sdr: rep.psi,
        psi_oracle: r.psi_p1,
        ratio,
        sdr_lower_bound: rep.sdr_lower_bound,
        psi_endpoint_oracle: r.psi_p3,
        sdr: rep,
        oracle: r,
    };
    write_json(&args.out, &out)?;
    solver_ok(&out.sdr)
}

fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json(&read(path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => ExperimentConfig::default(),
    };
    cfg.seed = args.seed;
    if let Some(rates) = &args.rates {
        cfg.rate_ranges = if rates.iter().any(|r| r == "all") {
            RateRange::ALL.to_vec()
        } else {
            rates
                .iter()
                .map(|r| r.parse::<RateRange>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::Usage(format!("--rates: {e}")))?
        };
    }
    if let Some(n) = args.n_min {
        cfg.n_min = n;
    }
    if let Some(n) = args.n_max {
        cfg.n_max = n;
    }
    if let Some(r) = args.realizations {
        cfg.realizations = r;
    }
    cfg.record_timing |= args.timing;
    if args.sequential {
        cfg.execution = Execution::Sequential;
    }
    let rows = run_benchmark(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let csv = to_csv(&rows);
    match &args.out {
        Some(path) => {
            write(path, &csv)?;
            if args.plot_script {
                let script = path.with_extension("py");
                write(&script, &plot_script(&path.to_string_lossy()))?;
            }
            println!("{:<5} {:>3} {:<15} {:>12} {:>10} {:>8}", "range", "n", "scheme", "mean psi", "std", "gamma");
            for a in aggregate(&rows).iter().filter(|a| a.scheme != Scheme::Oracle) {
                println!(
                    "{:<5} {:>3} {:<15} {:>12.6} {:>10.6} {:>8.4}",
                    a.rate_range.as_str(),
                    a.n_tasks,
                    a.scheme.as_str(),
                    a.psi_mean,
                    a.psi_std,
                    a.gamma_mean
                );
            }
            for d in baseline_dominance(&rows).iter().filter(|d| d.compress_worse > 0) {
                println!(
                    "note: {} n={}: compression scheme worse than baseline in {}/{} realizations",
                    d.rate_range.as_str(),
                    d.n_tasks,
                    d.compress_worse,
                    d.realizations
                );
            }
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    let failed = rows.iter().filter(|r| r.status.starts_with("error")).count();
    if failed > 0 {
        eprintln!("warning: {failed} runs failed; see the status column");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
