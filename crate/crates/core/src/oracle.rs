//! Exhaustive solver for small instances.
//!
//! For a fixed allocation every T_k(γ) and the energy are affine in γ, so
//! ψ(γ) = max_k (λ_t T_k(γ) + λ_e e(γ)) is convex piecewise linear and its
//! minimum sits at γ ∈ {0, 1} or where two of the T_k lines cross.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{batch_latency, energy, objective, Assignment, Decision, Instance};
use crate::par::{fold_chunks, map_indexed, Execution};

/// Minimizing γ and the resulting ψ for a fixed allocation. Ties go to the
/// smallest γ, so a γ-independent cost returns γ = 0.
pub fn optimal_gamma_for(inst: &Instance, assignment: &Assignment) -> (f64, f64) {
    let at = |gamma| Decision::new(assignment.clone(), gamma);
    if assignment.is_all_local() {
        return (0.0, objective(inst, &at(0.0)).psi);
    }
    let t0 = batch_latency(inst, &at(0.0));
    let t1 = batch_latency(inst, &at(1.0));
    let mut candidates = vec![0.0, 1.0];
    for a in 0..t0.len() {
        for b in a + 1..t0.len() {
            let (sa, sb) = (t1[a] - t0[a], t1[b] - t0[b]);
            let ds = sa - sb;
            if ds != 0.0 {
                let g = (t0[b] - t0[a]) / ds;
                if g > 0.0 && g < 1.0 {
                    candidates.push(g);
                }
            }
        }
    }
    candidates.sort_by(f64::total_cmp);
    let mut best = (f64::NAN, f64::INFINITY);
    for g in candidates {
        let psi = objective(inst, &at(g)).psi;
        if psi < best.1 {
            best = (g, psi);
        }
    }
    best
}

/// Binary optimum of the endpoint-latency program for a fixed allocation:
/// `t` is the larger of the γ = 0 and γ = 1 latencies, and the energy is
/// minimized over the two γ endpoints.
pub fn endpoint_cost_for(inst: &Instance, assignment: &Assignment) -> (f64, f64) {
    let at = |gamma| Decision::new(assignment.clone(), gamma);
    let t0 = batch_latency(inst, &at(0.0));
    let t1 = batch_latency(inst, &at(1.0));
    let t = t0.iter().chain(&t1).copied().fold(0.0, f64::max);
    let e = |g| {
        let (a, b, c) = energy(inst, &at(g));
        a + b + c
    };
    let (e0, e1) = (e(0.0), e(1.0));
    let (gamma, e) = if e1 < e0 { (1.0, e1) } else { (0.0, e0) };
    (gamma, inst.lambda_t * t + inst.lambda_e * e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleLimits {
    pub max_assignments: u64,
    pub execution: Execution,
    pub keep_trace: bool,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_assignments: 2_000_000,
            execution: Execution::default(),
            keep_trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub assignment: Assignment,
    pub gamma: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    /// Exact minimizer of the true weighted cost.
    pub best: Decision,
    pub psi_p1: f64,
    /// Minimizer of the endpoint-latency program over binary allocations.
    pub p3_decision: Decision,
    pub psi_p3: f64,
    pub enumerated: u64,
    pub trace: Option<Vec<TraceEntry>>,
}

/// Number of allocations, `(M+1)^N`, or `None` on overflow.
pub fn assignment_count(inst: &Instance) -> Option<u64> {
    (inst.n_cpus() as u64).checked_pow(inst.n_tasks() as u32)
}

/// Allocation with lexicographic rank `idx` (task 0 is the most significant digit).
pub fn assignment_at(idx: u64, n_tasks: usize, n_cpus: usize) -> Assignment {
    let base = n_cpus as u64;
    let mut cpu_of = vec![0; n_tasks];
    let mut rest = idx;
    for slot in cpu_of.iter_mut().rev() {
        *slot = (rest % base) as usize;
        rest /= base;
    }
    Assignment::new(cpu_of)
}

#[derive(Clone, Copy)]
struct Best {
    psi: f64,
    idx: u64,
    gamma: f64,
}

impl Best {
    const NONE: Best = Best {
        psi: f64::INFINITY,
        idx: u64::MAX,
        gamma: 0.0,
    };

    fn better(self, other: Best) -> Best {
        if other.psi < self.psi || (other.psi == self.psi && other.idx < self.idx) {
            other
        } else {
            self
        }
    }
}

pub fn solve_exact(inst: &Instance, limits: &OracleLimits) -> Result<OracleResult> {
    inst.validate()?;
    let total = match assignment_count(inst) {
        Some(c) if c <= limits.max_assignments => c,
        c => {
            return Err(Error::TooLarge {
                assignments: c.map_or_else(
                    || (inst.n_cpus() as f64).powi(inst.n_tasks() as i32),
                    |c| c as f64,
                ),
                limit: limits.max_assignments,
            })
        }
    };
    let (n, cpus) = (inst.n_tasks(), inst.n_cpus());

    let (p1, p3) = fold_chunks(
        limits.execution,
        total,
        4096,
        |range| {
            let mut acc = (Best::NONE, Best::NONE);
            for idx in range {
                let a = assignment_at(idx, n, cpus);
                let (g1, psi1) = optimal_gamma_for(inst, &a);
                let (g3, psi3) = endpoint_cost_for(inst, &a);
                acc.0 = acc.0.better(Best { psi: psi1, idx, gamma: g1 });
                acc.1 = acc.1.better(Best { psi: psi3, idx, gamma: g3 });
            }
            acc
        },
        |a, b| (a.0.better(b.0), a.1.better(b.1)),
    )
    .expect("at least one assignment");

    let trace = limits.keep_trace.then(|| {
        map_indexed(limits.execution, total as usize, |idx| {
            let assignment = assignment_at(idx as u64, n, cpus);
            let (gamma, psi) = optimal_gamma_for(inst, &assignment);
            TraceEntry { assignment, gamma, psi }
        })
    });

    Ok(OracleResult {
        best: Decision::new(assignment_at(p1.idx, n, cpus), p1.gamma),
        psi_p1: p1.psi,
        p3_decision: Decision::new(assignment_at(p3.idx, n, cpus), p3.gamma),
        psi_p3: p3.psi,
        enumerated: total,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cap, Device, Task};

    fn inst(caps: Vec<Cap>, tasks: usize) -> Instance {
        Instance {
            device: Device {
                r0: 4e8,
                p_comp: 0.8,
                p_tx: 1.258,
                p_rx: 1.181,
                jc: 350.0,
                ec: 1.5e-10,
            },
            caps,
            tasks: vec![
                Task {
                    alpha: 4e6,
                    beta: 0.8e6,
                    omega: 1.32e9,
                };
                tasks
            ],
            lambda_t: 0.5,
            lambda_e: 0.5,
        }
    }

    const SLOW: Cap = Cap {
        r: 1e8,
        c_ul: 1e3,
        c_dl: 1e3,
    };
    const FAST: Cap = Cap {
        r: 2e9,
        c_ul: 5e6,
        c_dl: 5e6,
    };

    #[test]
    fn all_local_gamma_is_zero() {
        let i = inst(vec![FAST], 2);
        let (g, psi) = optimal_gamma_for(&i, &Assignment::all_local(2));
        assert_eq!(g, 0.0);
        assert!((psi - (0.5 * 6.6 + 0.5 * 0.8 * 6.6)).abs() < 1e-12);
    }

    #[test]
    fn expensive_compression_picks_zero() {
        let mut i = inst(vec![FAST], 1);
        i.lambda_e = 0.0;
        i.device.jc = 1e6;
        let (g, _) = optimal_gamma_for(&i, &Assignment::new(vec![1]));
        assert_eq!(g, 0.0);
    }

    #[test]
    fn dominated_cap_keeps_task_local() {
        let i = inst(vec![SLOW], 1);
        let r = solve_exact(&i, &OracleLimits::default()).unwrap();
        assert_eq!(r.best.assignment.cpu_of, vec![0]);
        assert!((r.psi_p1 - (0.5 * 3.3 + 0.5 * 0.8 * 3.3)).abs() < 1e-12);
        assert_eq!(r.enumerated, 2);
        assert!(r.psi_p1 <= r.psi_p3 + 1e-12 * (1.0 + r.psi_p3));
    }

    #[test]
    fn identical_caps_are_symmetric() {
        let i = inst(vec![FAST, FAST], 2);
        let r = solve_exact(&i, &OracleLimits::default()).unwrap();
        let mut swapped = i.clone();
        swapped.caps.reverse();
        let s = solve_exact(&swapped, &OracleLimits::default()).unwrap();
        assert_eq!(r.psi_p1, s.psi_p1);
        // first minimizer in lexicographic order
        let lex_first = r
            .best
            .assignment
            .cpu_of
            .iter()
            .zip(&s.best.assignment.cpu_of)
            .all(|(a, b)| a == b);
        assert!(lex_first);
    }

    #[test]
    fn too_large_is_rejected() {
        let i = inst(vec![FAST, FAST], 12);
        let limits = OracleLimits {
            max_assignments: 1000,
            ..Default::default()
        };
        let err = solve_exact(&i, &limits).unwrap_err();
        assert!(matches!(err, Error::TooLarge { limit: 1000, .. }), "{err}");
    }

    #[test]
    fn lexicographic_ranks() {
        assert_eq!(assignment_at(0, 3, 3).cpu_of, vec![0, 0, 0]);
        assert_eq!(assignment_at(1, 3, 3).cpu_of, vec![0, 0, 1]);
        assert_eq!(assignment_at(26, 3, 3).cpu_of, vec![2, 2, 2]);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let i = inst(vec![FAST, Cap { r: 2.2e9, c_ul: 8e5, c_dl: 6e5 }], 5);
        let seq = solve_exact(
            &i,
            &OracleLimits {
                execution: Execution::Sequential,
                keep_trace: true,
                ..Default::default()
            },
        )
        .unwrap();
        let par = solve_exact(&i, &OracleLimits::default()).unwrap();
        assert_eq!(seq.psi_p1, par.psi_p1);
        assert_eq!(seq.best, par.best);
        assert_eq!(seq.trace.unwrap().len(), 243);
    }
}
