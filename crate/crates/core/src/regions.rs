//! Capacity-energy trade-off curves and the broadcast-channel regions:
//! energy sweeps of the wiretap programs, dual minimum constraints, maximum
//! constraints, the dirty-paper coding region, and the corner point of the
//! broadcast channel with confidential messages.

use std::fmt;

use nalgebra::DMatrix;

use crate::channel::{max_deliverable_energy, EnergyMode, PowerSpec, Receiver, WiretapChannel};
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, SymMatrix};
use crate::objectives::{bccm_decomposition_residual, bccm_rates, dpc_rates, CovariancePair, DpcOrder, RatePoint};
use crate::solver::barrier::{ConvexProgram, LinearForm, Point, Sense};
use crate::solver::mimo::{solve_scp, solve_scp_covariances, wiretap_skeleton};
use crate::solver::scp::{best_of_starts, random_psd, restart_rng, DcProgram, DcTerm};
use crate::solver::{self, Scheme, SecrecySolution, SolverConfig, Status};

/// Tolerance of the monotonicity flag on sweeps.
pub const MONOTONE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    /// Constraint level `E`, receiver noise included.
    pub level: f64,
    /// Rate in nats; NaN when infeasible.
    pub rate: f64,
    pub power_eve: f64,
    pub power_bob: f64,
    pub status: Status,
    pub iterations: usize,
    /// Largest KKT residual of the solve.
    pub kkt_residual: f64,
    /// Covariances behind `rate`; zero when infeasible.
    pub pair: CovariancePair,
}

#[derive(Debug, Clone)]
pub struct RegionCurve {
    pub scheme: Scheme,
    pub target: Receiver,
    pub mode: EnergyMode,
    /// Sorted by level, ascending.
    pub samples: Vec<RegionSample>,
    /// Whether the feasible rates move monotonically in the level (down for
    /// minimum constraints, up for maximum constraints) within
    /// [`MONOTONE_TOL`].
    pub monotone: bool,
}

impl RegionCurve {
    fn is_monotone(mode: EnergyMode, samples: &[RegionSample]) -> bool {
        let rates: Vec<f64> = samples.iter().filter(|s| s.status != Status::Infeasible).map(|s| s.rate).collect();
        rates.windows(2).all(|w| match mode {
            EnergyMode::Min => w[1] <= w[0] + MONOTONE_TOL,
            EnergyMode::Max => w[1] >= w[0] - MONOTONE_TOL,
        })
    }
}

/// `points` levels `N + (k/points)·P·λmax` for `k = 0..points`: from the
/// noise floor up to, but excluding, the largest deliverable power.
pub fn energy_grid(ch: &WiretapChannel, p: f64, target: Receiver, points: usize) -> Vec<f64> {
    let top = max_deliverable_energy(ch, p, target);
    let noise = ch.noise_power(target);
    (0..points).map(|k| noise + top * k as f64 / points as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|e| !e.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("energy grid must be finite and ascending".into()));
    }
    Ok(())
}

/// Solves `scheme` at each level of the `target` constraint on top of the
/// other constraints in `base`, warm-starting multi-antenna receivers from
/// the previous feasible point.
pub fn sweep_energy(
    ch: &WiretapChannel,
    base: &PowerSpec,
    target: Receiver,
    mode: EnergyMode,
    grid: &[f64],
    scheme: Scheme,
    cfg: &SolverConfig,
) -> Result<RegionCurve> {
    check_grid(grid)?;
    let mut samples = Vec::with_capacity(grid.len());
    let mut prev: Option<CovariancePair> = None;
    for &level in grid {
        let spec = base.clone().with(target, mode, level.max(0.0))?;
        let sol = if ch.is_miso() {
            solver::solve(ch, &spec, scheme, cfg)?
        } else {
            let extra: Vec<CovariancePair> = prev.iter().cloned().collect();
            solve_scp(ch, &spec, scheme, &extra, cfg)?
        };
        prev = sol.is_feasible().then(|| sol.pair.clone());
        samples.push(RegionSample {
            level,
            rate: sol.rate,
            power_eve: sol.power_eve,
            power_bob: sol.power_bob,
            status: sol.status,
            iterations: sol.iterations,
            kkt_residual: sol.kkt.max(),
            pair: sol.pair,
        });
    }
    let monotone = RegionCurve::is_monotone(mode, &samples);
    Ok(RegionCurve { scheme, target, mode, samples, monotone })
}

/// Capacity-energy curve for a minimum received-power constraint at `target`.
pub fn sweep_min_energy(
    ch: &WiretapChannel,
    p: f64,
    target: Receiver,
    grid: &[f64],
    scheme: Scheme,
    cfg: &SolverConfig,
) -> Result<RegionCurve> {
    sweep_energy(ch, &PowerSpec::new(ch, p)?, target, EnergyMode::Min, grid, scheme, cfg)
}

/// Wiretap program with minimum received powers `e_eve` at the eavesdropper
/// and `e_bob` at the legitimate receiver (noise included).
pub fn solve_dual_min(
    ch: &WiretapChannel,
    p: f64,
    e_eve: f64,
    e_bob: f64,
    scheme: Scheme,
    cfg: &SolverConfig,
) -> Result<SecrecySolution> {
    let spec = PowerSpec::new(ch, p)?.with(Receiver::Eve, EnergyMode::Min, e_eve)?.with(
        Receiver::Bob,
        EnergyMode::Min,
        e_bob,
    )?;
    solver::solve(ch, &spec, scheme, cfg)
}

/// Zero-mean program under maximum received powers. `None` leaves a
/// receiver unconstrained. Caps below the receiver noise are rejected.
pub fn solve_max_constraints(
    ch: &WiretapChannel,
    p: f64,
    e_eve: Option<f64>,
    e_bob: Option<f64>,
    cfg: &SolverConfig,
) -> Result<SecrecySolution> {
    let mut spec = PowerSpec::new(ch, p)?;
    for (rx, cap) in [(Receiver::Eve, e_eve), (Receiver::Bob, e_bob)] {
        if let Some(cap) = cap {
            if cap < ch.noise_power(rx) {
                return Err(Error::InvalidInput(format!("cap {cap} at {rx} is below the receiver noise")));
            }
            spec = spec.with(rx, EnergyMode::Max, cap)?;
        }
    }
    solver::solve_max_constraints(ch, &spec, cfg)
}

/// Weighted dirty-paper coding point: `(Q₁, Q₂)` maximizing `α₁R₁ + α₂R₂`
/// for one encoding order. Receiver 1 observes `H`, receiver 2 observes `G`.
#[derive(Debug, Clone)]
pub struct DpcSolution {
    pub alpha1: f64,
    pub alpha2: f64,
    pub order: DpcOrder,
    pub status: Status,
    pub pair: CovariancePair,
    pub rates: RatePoint,
    /// Cone multipliers `(Z₁, Z₂)` of `Q₁ ⪰ 0`, `Q₂ ⪰ 0` for the weighted
    /// objective with `½log` rates.
    pub multipliers: Option<(SymMatrix, SymMatrix)>,
}

impl DpcSolution {
    pub fn weighted(&self) -> f64 {
        self.alpha1 * self.rates.r1 + self.alpha2 * self.rates.r2
    }
}

fn dpc_terms(ch: &WiretapChannel, a1: f64, a2: f64, order: DpcOrder) -> Vec<DcTerm> {
    let t = |w: f64, a: &DMatrix<f64>, c: &[(usize, f64)]| DcTerm { weight: w, a: a.clone(), coeffs: c.to_vec() };
    let (h, g) = (ch.h(), ch.g());
    let both = [(0, 1.0), (1, 1.0)];
    let terms = match order {
        DpcOrder::First => {
            vec![t(0.5 * a1, h, &[(0, 1.0)]), t(0.5 * a2, g, &both), t(-0.5 * a2, g, &[(0, 1.0)])]
        }
        DpcOrder::Second => {
            vec![t(0.5 * a1, h, &both), t(-0.5 * a1, h, &[(1, 1.0)]), t(0.5 * a2, g, &[(1, 1.0)])]
        }
    };
    terms.into_iter().filter(|t| t.weight != 0.0).collect()
}

fn dc_starts(n: usize, n_vars: usize, trace: f64, cfg: &SolverConfig) -> Vec<Point> {
    let mut out =
        vec![Point { mats: vec![SymMatrix::identity(n).scale(trace / (n_vars * n) as f64); n_vars], scalars: vec![] }];
    // Single-user corners: the weighted objective is not concave, and its
    // maximum often gives one user all the power.
    for v in 0..n_vars {
        let mats = (0..n_vars)
            .map(|u| if u == v { SymMatrix::identity(n).scale(trace / n as f64) } else { SymMatrix::zeros(n) })
            .collect();
        out.push(Point { mats, scalars: vec![] });
    }
    for r in 0..cfg.restarts {
        let mut rng = restart_rng(cfg.seed, r);
        out.push(Point {
            mats: (0..n_vars).map(|_| random_psd(&mut rng, n, trace / n_vars as f64)).collect(),
            scalars: vec![],
        });
    }
    out
}

/// Maximizes `α₁R₁ + α₂R₂` of one encoding order under the transmit budget
/// and receiver constraints of `spec`.
pub fn solve_dpc_weighted(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    alpha1: f64,
    alpha2: f64,
    order: DpcOrder,
    cfg: &SolverConfig,
) -> Result<DpcSolution> {
    if !(alpha1 >= 0.0 && alpha2 >= 0.0) {
        return Err(Error::InvalidInput(format!("weights must be non-negative, got ({alpha1}, {alpha2})")));
    }
    let n = ch.n_t();
    let infeasible = |status| DpcSolution {
        alpha1,
        alpha2,
        order,
        status,
        pair: CovariancePair::zeros(n),
        rates: RatePoint { r1: f64::NAN, r2: f64::NAN },
        multipliers: None,
    };
    if !crate::channel::feasible(ch, spec) {
        return Ok(infeasible(Status::Infeasible));
    }
    let sk = wiretap_skeleton(ch, spec, 2);
    let prog = DcProgram { skeleton: sk.prog, terms: dpc_terms(ch, alpha1, alpha2, order) };
    let run = best_of_starts(&prog, &dc_starts(n, 2, spec.p, cfg), |_| 0.0, cfg)?;
    if run.status == Status::Infeasible {
        return Ok(infeasible(Status::Infeasible));
    }
    let pair = CovariancePair::new(run.point.mats[0].clone(), run.point.mats[1].clone())?;
    let duals = &run.report.duals;
    Ok(DpcSolution {
        alpha1,
        alpha2,
        order,
        status: run.status,
        rates: dpc_rates(ch, &pair, order),
        pair,
        multipliers: Some((duals.psd[0].clone(), duals.psd[1].clone())),
    })
}

/// Boundary samples of the dirty-paper coding region: `weights` points
/// `α₁ = k/(weights−1)`, `α₂ = 1 − α₁`, each solved for both encoding orders.
pub fn bc_dpc_region(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    weights: usize,
    cfg: &SolverConfig,
) -> Result<Vec<DpcSolution>> {
    if weights < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 weights, got {weights}")));
    }
    let mut out = Vec::with_capacity(2 * weights);
    for k in 0..weights {
        let a1 = k as f64 / (weights - 1) as f64;
        for order in [DpcOrder::First, DpcOrder::Second] {
            out.push(solve_dpc_weighted(ch, spec, a1, 1.0 - a1, order, cfg)?);
        }
    }
    Ok(out)
}

/// Samples not weakly dominated by another sample, sorted by `R₁`.
pub fn pareto(samples: &[DpcSolution]) -> Vec<RatePoint> {
    let pts: Vec<RatePoint> = samples.iter().filter(|s| s.status != Status::Infeasible).map(|s| s.rates).collect();
    let mut front: Vec<RatePoint> = pts
        .iter()
        .filter(|p| !pts.iter().any(|q| q.r1 >= p.r1 && q.r2 >= p.r2 && (q.r1 > p.r1 || q.r2 > p.r2)))
        .copied()
        .collect();
    front.sort_by(|a, b| a.r1.total_cmp(&b.r1));
    front.dedup_by(|a, b| (a.r1 - b.r1).abs() < 1e-12 && (a.r2 - b.r2).abs() < 1e-12);
    front
}

/// Corner point of the confidential-message broadcast region.
#[derive(Debug, Clone)]
pub struct BccmCorner {
    pub status: Status,
    pub pair: CovariancePair,
    /// Unclamped confidential rates at `pair`.
    pub rates: RatePoint,
    /// Deviation of `R₂` from `R₁ + ½ln(|I+GSGᵀ|/|I+HSHᵀ|)` at `S = Q₁+Q₂`.
    pub decomposition_residual: f64,
    /// Largest `R₂` over splits `Q₁ + Q₂ = S` of the same total covariance.
    pub r2_max: f64,
    /// `|r2_max − rates.r2|`: zero when the region is rectangular.
    pub rectangularity: f64,
}

impl fmt::Display for BccmCorner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "status={} r1={:.9} r2={:.9} r2_max={:.9} decomposition={:.3e} rectangularity={:.3e}",
            self.status, self.rates.r1, self.rates.r2, self.r2_max, self.decomposition_residual, self.rectangularity
        )
    }
}

/// Largest second-user confidential rate over `Q₁ = S½XS½`, `Q₂ = S½YS½`
/// with `X + Y = I`.
fn r2_max_at(ch: &WiretapChannel, s: &SymMatrix, cfg: &SolverConfig) -> Result<f64> {
    let n = s.dim();
    let root = psd_sqrt(s)?;
    let ag = ch.g() * root.as_matrix();
    let ah = ch.h() * root.as_matrix();
    let mut prog = ConvexProgram::new(vec![n, n], 0).with_scale(1.0 + n as f64);
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            let v = if i == j { 1.0 } else { 0.5 };
            e[(i, j)] = v;
            e[(j, i)] = v;
            let e = SymMatrix::new(e)?;
            prog.constrain(LinearForm::new().mat(0, e.clone()).mat(1, e), Sense::Eq, if i == j { 1.0 } else { 0.0 });
        }
    }
    let t = |w: f64, a: &DMatrix<f64>, c: &[(usize, f64)]| DcTerm { weight: w, a: a.clone(), coeffs: c.to_vec() };
    let both = [(0, 1.0), (1, 1.0)];
    let terms = vec![t(0.5, &ag, &both), t(-0.5, &ag, &[(0, 1.0)]), t(-0.5, &ah, &both), t(0.5, &ah, &[(0, 1.0)])];
    let prog = DcProgram { skeleton: prog, terms };
    let run = best_of_starts(&prog, &dc_starts(n, 2, n as f64, cfg), |_| 0.0, cfg)?;
    if run.status == Status::Infeasible {
        return Err(Error::InvalidInput("split program infeasible".into()));
    }
    let x = run.point.mats[0].congruence(root.as_matrix());
    let y = run.point.mats[1].congruence(root.as_matrix());
    Ok(bccm_rates(ch, &CovariancePair { q1: x, q2: y }).r2)
}

/// `(Q₁, Q₂)` maximizing the first user's confidential rate under `spec`,
/// both confidential rates there, and the rectangularity and decomposition
/// residuals.
pub fn bccm_corner(ch: &WiretapChannel, spec: &PowerSpec, cfg: &SolverConfig) -> Result<BccmCorner> {
    let sol = solve_scp_covariances(ch, spec, Scheme::Mean, &[], cfg)?;
    if !sol.is_feasible() {
        return Ok(BccmCorner {
            status: Status::Infeasible,
            pair: sol.pair,
            rates: RatePoint { r1: f64::NAN, r2: f64::NAN },
            decomposition_residual: f64::NAN,
            r2_max: f64::NAN,
            rectangularity: f64::NAN,
        });
    }
    let s = sol.pair.total();
    let rates = bccm_rates(ch, &sol.pair);
    let r2_max = r2_max_at(ch, &s, cfg)?.max(rates.r2);
    Ok(BccmCorner {
        status: sol.status,
        decomposition_residual: bccm_decomposition_residual(ch, &sol.pair.q1, &s),
        rectangularity: r2_max - rates.r2,
        r2_max,
        rates,
        pair: sol.pair,
    })
}
