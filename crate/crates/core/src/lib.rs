//! Joint task allocation and compression-ratio optimization for a mobile
//! device offloading to several computing access points.
//!
//! The pipeline: [`qcqp::build`] vectorizes the problem, [`sdp::homogenize`]
//! lifts it to a semidefinite relaxation, [`sdp::solver`] solves that, and
//! [`rounding`] turns the relaxed matrix back into a feasible decision by
//! Gaussian randomization. [`oracle`] solves small instances exactly for
//! verification, and [`harness`] runs the randomized benchmark sweeps.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod par;
pub mod qcqp;
pub mod rounding;
pub mod sdp;

pub use error::{Error, Result};
pub use model::{Assignment, Cap, CostBreakdown, Decision, Device, Instance, Task};
pub use par::Execution;
