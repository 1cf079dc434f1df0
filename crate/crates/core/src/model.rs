//! System model: tasks, the mobile device, computing access points (CAPs),
//! and the closed-form latency / energy / weighted-cost evaluation.
//!
//! CPU index 0 is always the device itself; CPUs `1..=M` are the CAPs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One computation job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    /// Input size, bits.
    pub alpha: f64,
    /// Output size, bits.
    pub beta: f64,
    /// Required CPU cycles.
    pub omega: f64,
}

/// The mobile device that owns the tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    /// Local CPU rate, cycles/s.
    pub r0: f64,
    /// Computation power, W.
    pub p_comp: f64,
    /// Transmit power, W.
    pub p_tx: f64,
    /// Receive power, W.
    pub p_rx: f64,
    /// Compression cost, cycles/bit.
    pub jc: f64,
    /// Energy per compression cycle, J/cycle.
    pub ec: f64,
}

impl Device {
    /// Energy to compress one bit, J/bit.
    pub fn p_compr(&self) -> f64 {
        self.jc * self.ec
    }
}

/// A computing access point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cap {
    /// Service rate, cycles/s.
    pub r: f64,
    /// Uplink rate, bits/s.
    pub c_ul: f64,
    /// Downlink rate, bits/s.
    pub c_dl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub device: Device,
    pub caps: Vec<Cap>,
    pub tasks: Vec<Task>,
    pub lambda_t: f64,
    pub lambda_e: f64,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

impl Instance {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_caps(&self) -> usize {
        self.caps.len()
    }

    /// Number of CPUs including the device.
    pub fn n_cpus(&self) -> usize {
        self.caps.len() + 1
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.device;
        positive("device.r0", d.r0)?;
        positive("device.p_comp", d.p_comp)?;
        positive("device.p_tx", d.p_tx)?;
        positive("device.p_rx", d.p_rx)?;
        positive("device.jc", d.jc)?;
        positive("device.ec", d.ec)?;
        if self.caps.is_empty() {
            return Err(Error::invalid("caps", "at least one CAP is required"));
        }
        if self.tasks.is_empty() {
            return Err(Error::invalid("tasks", "at least one task is required"));
        }
        for (k, c) in self.caps.iter().enumerate() {
            positive(&format!("caps[{k}].r"), c.r)?;
            positive(&format!("caps[{k}].c_ul"), c.c_ul)?;
            positive(&format!("caps[{k}].c_dl"), c.c_dl)?;
        }
        for (i, t) in self.tasks.iter().enumerate() {
            positive(&format!("tasks[{i}].alpha"), t.alpha)?;
            positive(&format!("tasks[{i}].omega"), t.omega)?;
            if !(t.beta.is_finite() && t.beta >= 0.0) {
                return Err(Error::invalid(
                    format!("tasks[{i}].beta"),
                    format!("must be finite and >= 0, got {}", t.beta),
                ));
            }
        }
        for (name, w) in [("lambda_t", self.lambda_t), ("lambda_e", self.lambda_e)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {w}")));
            }
        }
        Ok(())
    }

    fn check_task(&self, i: usize) -> Result<()> {
        if i < self.tasks.len() {
            Ok(())
        } else {
            Err(Error::Index {
                what: "task",
                index: i,
                len: self.tasks.len(),
            })
        }
    }

    fn check_cpu(&self, k: usize) -> Result<()> {
        if k <= self.caps.len() {
            Ok(())
        } else {
            Err(Error::Index {
                what: "cpu",
                index: k,
                len: self.n_cpus(),
            })
        }
    }

    /// Upload latency of task `i` to CAP `k` (k ≥ 1) without compression.
    pub fn g_ul(&self, i: usize, k: usize) -> f64 {
        self.tasks[i].alpha / self.caps[k - 1].c_ul
    }

    /// Download latency of task `i` from CAP `k` (k ≥ 1).
    pub fn g_dl(&self, i: usize, k: usize) -> f64 {
        self.tasks[i].beta / self.caps[k - 1].c_dl
    }

    /// Latency contribution of task `i` on CPU `k` at compression fraction `gamma`.
    pub fn g_coeff(&self, i: usize, k: usize, gamma: f64) -> Result<f64> {
        self.check_task(i)?;
        self.check_cpu(k)?;
        Ok(self.g_unchecked(i, k, gamma))
    }

    pub(crate) fn g_unchecked(&self, i: usize, k: usize, gamma: f64) -> f64 {
        let t = &self.tasks[i];
        let r0 = self.device.r0;
        if k == 0 {
            return t.omega / r0;
        }
        let cap = &self.caps[k - 1];
        let jc = self.device.jc;
        t.alpha * jc * gamma / r0
            + t.alpha * (1.0 - gamma) / cap.c_ul
            + t.alpha * jc * gamma / cap.r
            + t.omega / cap.r
            + t.beta / cap.c_dl
    }
}

/// Which CPU each task runs on; `cpu_of[i] == 0` means local execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    pub cpu_of: Vec<usize>,
}

impl Assignment {
    pub fn new(cpu_of: Vec<usize>) -> Self {
        Self { cpu_of }
    }

    pub fn all_local(n: usize) -> Self {
        Self { cpu_of: vec![0; n] }
    }

    /// Binary allocation matrix entry x_ik.
    pub fn x(&self, i: usize, k: usize) -> bool {
        self.cpu_of[i] == k
    }

    /// Dense N×(M+1) 0/1 matrix, row per task.
    pub fn to_matrix(&self, n_cpus: usize) -> Vec<Vec<u8>> {
        self.cpu_of
            .iter()
            .map(|&k| (0..n_cpus).map(|c| u8::from(c == k)).collect())
            .collect()
    }

    /// Inverse of [`to_matrix`](Self::to_matrix); every row must be one-hot.
    pub fn from_matrix(rows: &[Vec<u8>]) -> Result<Self> {
        let mut cpu_of = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(|(k, _)| k)
                .collect();
            if ones.len() != 1 || row.iter().any(|&v| v > 1) {
                return Err(Error::invalid(format!("x[{i}]"), "row must be one-hot"));
            }
            cpu_of.push(ones[0]);
        }
        Ok(Self { cpu_of })
    }

    pub fn validate_for(&self, inst: &Instance) -> Result<()> {
        if self.cpu_of.len() != inst.n_tasks() {
            return Err(Error::Dimension {
                expected: inst.n_tasks(),
                got: self.cpu_of.len(),
            });
        }
        for (i, &k) in self.cpu_of.iter().enumerate() {
            if k > inst.n_caps() {
                return Err(Error::invalid(
                    format!("cpu_of[{i}]"),
                    format!("cpu {k} does not exist (M = {})", inst.n_caps()),
                ));
            }
        }
        Ok(())
    }

    pub fn is_all_local(&self) -> bool {
        self.cpu_of.iter().all(|&k| k == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub assignment: Assignment,
    pub gamma: f64,
}

impl Decision {
    pub fn new(assignment: Assignment, gamma: f64) -> Self {
        Self { assignment, gamma }
    }

    pub fn validate_for(&self, inst: &Instance) -> Result<()> {
        self.assignment.validate_for(inst)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(
                "gamma",
                format!("must lie in [0, 1], got {}", self.gamma),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// T_k for k = 0..=M, seconds.
    pub per_cpu_latency: Vec<f64>,
    /// max_k T_k, seconds.
    pub latency: f64,
    pub e_comp: f64,
    pub e_compr: f64,
    pub e_tr: f64,
    /// e_comp + e_compr + e_tr, Joules.
    pub energy: f64,
    pub psi: f64,
}

/// Per-CPU batch latency T_k(γ).
pub fn batch_latency(inst: &Instance, dec: &Decision) -> Vec<f64> {
    let mut t = vec![0.0; inst.n_cpus()];
    for (i, &k) in dec.assignment.cpu_of.iter().enumerate() {
        t[k] += inst.g_unchecked(i, k, dec.gamma);
    }
    t
}

/// `(e_comp, e_compr, e_tr)` in Joules.
pub fn energy(inst: &Instance, dec: &Decision) -> (f64, f64, f64) {
    let d = &inst.device;
    let gamma = dec.gamma;
    let (mut local_time, mut compressed_bits, mut tx_time, mut rx_time) = (0.0, 0.0, 0.0, 0.0);
    for (i, &k) in dec.assignment.cpu_of.iter().enumerate() {
        if k == 0 {
            local_time += inst.g_unchecked(i, 0, gamma);
        } else {
            compressed_bits += inst.tasks[i].alpha * gamma;
            tx_time += inst.g_ul(i, k) * (1.0 - gamma);
            rx_time += inst.g_dl(i, k);
        }
    }
    (
        d.p_comp * local_time,
        d.p_compr() * compressed_bits,
        d.p_tx * tx_time + d.p_rx * rx_time,
    )
}

/// Full cost breakdown and weighted objective ψ = λ_t·max_k T_k + λ_e·energy.
pub fn objective(inst: &Instance, dec: &Decision) -> CostBreakdown {
    let per_cpu_latency = batch_latency(inst, dec);
    let latency = per_cpu_latency.iter().copied().fold(0.0, f64::max);
    let (e_comp, e_compr, e_tr) = energy(inst, dec);
    let energy = e_comp + e_compr + e_tr;
    CostBreakdown {
        psi: inst.lambda_t * latency + inst.lambda_e * energy,
        per_cpu_latency,
        latency,
        e_comp,
        e_compr,
        e_tr,
        energy,
    }
}

/// Checked variant of [`objective`].
pub fn evaluate(inst: &Instance, dec: &Decision) -> Result<CostBreakdown> {
    dec.validate_for(inst)?;
    Ok(objective(inst, dec))
}
