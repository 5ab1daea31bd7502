//! Optimization engines: the barrier core, the Charnes-Cooper MISO programs,
//! sequential convex programming for MIMO, and a brute-force grid oracle.

pub mod barrier;
pub mod mimo;
pub mod miso;
pub mod oracle;
pub mod scp;

use std::fmt;

use nalgebra::DVector;

use crate::channel::{feasible, PowerSpec, Receiver, WiretapChannel};
use crate::error::Result;
use crate::linalg::SymMatrix;
use crate::objectives::{rate_an, rate_mean, received_power, CovariancePair};

pub use barrier::{solve_convex, ConvexProgram, KktResiduals, LinearForm, Point, Sense, SolverReport};
pub use mimo::{solve_max_constraints, solve_mimo_an_scp, solve_mimo_mean_scp, solve_plain_gaussian};
pub use miso::{solve_miso_an, solve_miso_mean, solve_miso_plain};
pub use oracle::oracle_grid;

/// Every tolerance and iteration knob in one record.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Bound on each KKT residual for an optimal status.
    pub kkt_tol: f64,
    /// SCP stops when the rate changes by less than this.
    pub scp_tol: f64,
    /// Phase-1 feasibility tolerance, relative to `1 + P`.
    pub feas_tol: f64,
    pub psd_tol: f64,
    /// `t ≥ t_min_rel·(1 + P)` in the Charnes-Cooper programs.
    pub t_min_rel: f64,
    /// Barrier duality-gap target.
    pub gap_tol: f64,
    /// Newton decrement threshold `λ²/2` for centering.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// SCP iteration cap.
    pub max_iters: usize,
    /// Random restarts on top of the deterministic start.
    pub restarts: usize,
    pub seed: u64,
    pub beta_grid: usize,
    /// Final golden-section bracket width of the β search, in `ln(β − 1)`.
    pub beta_width: f64,
    /// Fan restarts and β grids out over the rayon pool when the `parallel`
    /// feature is on.
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            scp_tol: 1e-7,
            feas_tol: 1e-8,
            psd_tol: 1e-9,
            t_min_rel: 1e-9,
            gap_tol: 1e-9,
            newton_tol: 1e-12,
            max_newton: 600,
            max_iters: 500,
            restarts: 3,
            seed: 0,
            beta_grid: 64,
            beta_width: 1e-7,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIters,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::MaxIters => "max-iters",
        })
    }
}

/// Signalling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Gaussian message with a deterministic mean.
    Mean,
    /// Gaussian message with Gaussian artificial noise.
    An,
    /// Zero-mean Gaussian message only.
    Plain,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Mean, Scheme::An, Scheme::Plain];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Mean => "mean",
            Scheme::An => "an",
            Scheme::Plain => "plain",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Scheme::Mean),
            "an" => Ok(Scheme::An),
            "plain" => Ok(Scheme::Plain),
            other => Err(crate::error::Error::InvalidInput(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Lagrange multipliers at the optimum of a (non-transformed) program.
///
/// `m1`, `m2` are the cone multipliers of `Q₁ ⪰ 0` and `Q₂ ⪰ 0` scaled to a
/// Lagrangian written with `log` instead of `½log`; the scalar multipliers
/// belong to the `½log` objective as solved.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub m1: SymMatrix,
    pub m2: SymMatrix,
    pub trace: f64,
    pub eve: Option<f64>,
    pub bob: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SecrecySolution {
    pub status: Status,
    pub scheme: Scheme,
    /// Achieved rate in nats, clamped at 0 and re-evaluated from `pair`.
    pub rate: f64,
    /// Unclamped objective at `pair`.
    pub raw_rate: f64,
    /// `q2` holds `μμᵀ` for the mean scheme and the noise covariance for AN.
    pub pair: CovariancePair,
    pub mean: Option<DVector<f64>>,
    /// Whether `q2` is exactly rank one, so it is realized by a mean vector.
    pub mean_exact: bool,
    pub multipliers: Option<Multipliers>,
    pub kkt: KktResiduals,
    pub iterations: usize,
    /// Received power at each receiver, noise included.
    pub power_eve: f64,
    pub power_bob: f64,
    /// Slack added to the constraint bounds to obtain an interior point.
    pub relaxation: f64,
    /// True objective after each accepted SCP iterate.
    pub history: Vec<f64>,
}

impl SecrecySolution {
    pub fn infeasible(ch: &WiretapChannel, scheme: Scheme, iterations: usize) -> Self {
        let n = ch.n_t();
        Self {
            status: Status::Infeasible,
            scheme,
            rate: f64::NAN,
            raw_rate: f64::NAN,
            pair: CovariancePair::zeros(n),
            mean: None,
            mean_exact: false,
            multipliers: None,
            kkt: KktResiduals::default(),
            iterations,
            power_eve: f64::NAN,
            power_bob: f64::NAN,
            relaxation: 0.0,
            history: vec![],
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != Status::Infeasible
    }

    /// Assembles a solution, evaluating rate and powers from the covariances.
    pub fn assemble(ch: &WiretapChannel, scheme: Scheme, status: Status, pair: CovariancePair) -> Self {
        let raw = scheme_rate(ch, scheme, &pair);
        Self {
            status,
            scheme,
            rate: raw.max(0.0),
            raw_rate: raw,
            power_eve: received_power(ch, &pair, Receiver::Eve),
            power_bob: received_power(ch, &pair, Receiver::Bob),
            pair,
            mean: None,
            mean_exact: false,
            multipliers: None,
            kkt: KktResiduals::default(),
            iterations: 0,
            relaxation: 0.0,
            history: vec![],
        }
    }

    /// Largest violation of the transmit budget and receiver constraints.
    pub fn constraint_violation(&self, spec: &PowerSpec, ch: &WiretapChannel) -> f64 {
        constraint_violation(ch, spec, &self.pair)
    }
}

pub fn scheme_rate(ch: &WiretapChannel, scheme: Scheme, pair: &CovariancePair) -> f64 {
    match scheme {
        Scheme::An => rate_an(ch, pair),
        Scheme::Mean | Scheme::Plain => rate_mean(ch, &pair.q1),
    }
}

pub fn constraint_violation(ch: &WiretapChannel, spec: &PowerSpec, pair: &CovariancePair) -> f64 {
    let s = pair.total();
    let mut v = (s.trace() - spec.p).max(0.0);
    for (rx, c) in spec.active_constraints() {
        let e = ch.gram(rx).inner(&s);
        v = v.max(match c.mode {
            crate::channel::EnergyMode::Min => c.adjusted - e,
            crate::channel::EnergyMode::Max => e - c.adjusted,
        });
    }
    v.max(0.0)
}

/// Solves the secrecy program for `scheme`: Charnes-Cooper programs for
/// single-antenna receivers, sequential convex programming otherwise.
pub fn solve(ch: &WiretapChannel, spec: &PowerSpec, scheme: Scheme, cfg: &SolverConfig) -> Result<SecrecySolution> {
    if !feasible(ch, spec) {
        return Ok(SecrecySolution::infeasible(ch, scheme, 0));
    }
    match (ch.is_miso(), scheme) {
        (true, Scheme::Mean) => solve_miso_mean(ch, spec, cfg),
        (true, Scheme::An) => solve_miso_an(ch, spec, cfg),
        (true, Scheme::Plain) => solve_miso_plain(ch, spec, cfg),
        (false, Scheme::Mean) => solve_mimo_mean_scp(ch, spec, cfg),
        (false, Scheme::An) => solve_mimo_an_scp(ch, spec, cfg),
        (false, Scheme::Plain) => solve_plain_gaussian(ch, spec, cfg),
    }
}
