//! Secrecy capacity and capacity-energy trade-off solvers for Gaussian MIMO
//! wiretap and broadcast channels with transmitter- and receiver-side power
//! constraints.
//!
//! All rates are in nats.

pub mod channel;
pub mod enhancement;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod par;
pub mod regions;
pub mod solver;

pub use channel::{align, feasible, AlignedChannel, EnergyMode, PowerSpec, Receiver, WiretapChannel};
pub use enhancement::EnhancementReport;
pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use objectives::{CovariancePair, RatePoint};
pub use solver::{solve, Scheme, SecrecySolution, SolverConfig, Status};
