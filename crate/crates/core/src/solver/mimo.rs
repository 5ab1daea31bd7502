//! MIMO secrecy programs solved by sequential convex programming.
//!
//! Variables are `Q₁` and, for the mean and AN schemes, `Q₂`; the transmit
//! budget and receiver constraints apply to `Q₁ + Q₂`.

use nalgebra::DVector;

use super::barrier::{ConvexProgram, Point, Sense};
use super::scp::{best_of_starts, random_psd, restart_rng, sum_form, DcProgram, DcTerm};
use super::{constraint_violation, Multipliers, Scheme, SecrecySolution, SolverConfig, Status};
use crate::channel::{feasible, weighted_mean, EnergyMode, PowerSpec, Receiver, WiretapChannel};
use crate::error::{Error, Result};
use crate::linalg::{eig_sym, SymMatrix};
use crate::objectives::CovariancePair;

/// Constraint skeleton over `n_vars` matrix variables whose sum is the
/// transmit covariance. Constraint 0 is the budget; receiver constraints
/// follow in eve, bob order.
pub(crate) struct Skeleton {
    pub prog: ConvexProgram,
    pub eve: Option<usize>,
    pub bob: Option<usize>,
}

pub(crate) fn wiretap_skeleton(ch: &WiretapChannel, spec: &PowerSpec, n_vars: usize) -> Skeleton {
    let n = ch.n_t();
    let vars: Vec<usize> = (0..n_vars).collect();
    let mut prog = ConvexProgram::new(vec![n; n_vars], 0).with_scale(spec.scale());
    prog.constrain(sum_form(&vars, &SymMatrix::identity(n)), Sense::Le, spec.p);
    let (mut eve, mut bob) = (None, None);
    for (rx, c) in spec.active_constraints() {
        let sense = match c.mode {
            EnergyMode::Min => Sense::Ge,
            EnergyMode::Max => Sense::Le,
        };
        let idx = prog.constraints.len();
        prog.constrain(sum_form(&vars, &ch.gram(rx)), sense, c.adjusted);
        match rx {
            Receiver::Eve => eve = Some(idx),
            Receiver::Bob => bob = Some(idx),
        }
    }
    Skeleton { prog, eve, bob }
}

fn term(weight: f64, a: &nalgebra::DMatrix<f64>, coeffs: &[(usize, f64)]) -> DcTerm {
    DcTerm { weight, a: a.clone(), coeffs: coeffs.to_vec() }
}

fn dc_program(ch: &WiretapChannel, spec: &PowerSpec, scheme: Scheme) -> (DcProgram, Skeleton) {
    let n_vars = if scheme == Scheme::Plain { 1 } else { 2 };
    let sk = wiretap_skeleton(ch, spec, n_vars);
    let (h, g) = (ch.h(), ch.g());
    let terms = match scheme {
        Scheme::Mean | Scheme::Plain => vec![term(0.5, h, &[(0, 1.0)]), term(-0.5, g, &[(0, 1.0)])],
        Scheme::An => vec![
            term(0.5, h, &[(0, 1.0), (1, 1.0)]),
            term(-0.5, h, &[(1, 1.0)]),
            term(-0.5, g, &[(0, 1.0), (1, 1.0)]),
            term(0.5, g, &[(1, 1.0)]),
        ],
    };
    (DcProgram { skeleton: sk.prog.clone(), terms }, sk)
}

/// Energy beam sized so that, on top of `base`, every min constraint is met.
fn floor_beam(ch: &WiretapChannel, spec: &PowerSpec, base: &SymMatrix, budget: f64) -> Result<SymMatrix> {
    let n = ch.n_t();
    let mins: Vec<(Receiver, f64)> =
        spec.active_constraints().filter(|(_, c)| c.mode == EnergyMode::Min).map(|(rx, c)| (rx, c.adjusted)).collect();
    if mins.is_empty() {
        return Ok(SymMatrix::zeros(n));
    }
    let w = |rx| if mins.iter().any(|(r, _)| *r == rx) { 1.0 } else { 0.0 };
    let beam = weighted_mean(ch, 1.0, w(Receiver::Eve), w(Receiver::Bob))?;
    let mut p = 0.0f64;
    for (rx, lvl) in &mins {
        let gain = ch.gram(*rx).quad_form(&beam.mu);
        let deficit = lvl - ch.gram(*rx).inner(base);
        if deficit > 0.0 && gain > 0.0 {
            p = p.max(deficit / gain);
        }
    }
    Ok(SymMatrix::outer(&beam.mu, p.min(budget)))
}

fn starts(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    n_vars: usize,
    extra: &[CovariancePair],
    cfg: &SolverConfig,
) -> Result<Vec<Point>> {
    let n = ch.n_t();
    let q1 = SymMatrix::identity(n).scale(spec.p / (2.0 * n as f64));
    let mut out = Vec::new();
    let first = if n_vars == 2 { vec![q1.clone(), floor_beam(ch, spec, &q1, spec.p / 2.0)?] } else { vec![q1] };
    out.push(Point { mats: first, scalars: vec![] });
    for pair in extra {
        let mats = if n_vars == 2 { vec![pair.q1.clone(), pair.q2.clone()] } else { vec![pair.total()] };
        out.push(Point { mats, scalars: vec![] });
    }
    for r in 0..cfg.restarts {
        let mut rng = restart_rng(cfg.seed, r);
        let mats = (0..n_vars).map(|_| random_psd(&mut rng, n, spec.p / n_vars as f64)).collect();
        out.push(Point { mats, scalars: vec![] });
    }
    Ok(out)
}

/// SCP solve of `scheme` with extra warm starts.
pub(crate) fn solve_scp(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    scheme: Scheme,
    extra: &[CovariancePair],
    cfg: &SolverConfig,
) -> Result<SecrecySolution> {
    // Both schemes share an optimum, and SCP on the AN objective stalls more
    // often, so AN also starts from the mean-scheme covariances.
    let mut seeded = extra.to_vec();
    if scheme == Scheme::An {
        let mean = solve_scp_covariances(ch, spec, Scheme::Mean, extra, cfg)?;
        if mean.is_feasible() {
            seeded.push(mean.pair);
        }
    }
    let mut sol = solve_scp_covariances(ch, spec, scheme, &seeded, cfg)?;
    if scheme == Scheme::Mean && sol.is_feasible() {
        let (eve, bob) = sol.multipliers.as_ref().map_or((None, None), |m| (m.eve, m.bob));
        apply_mean_extraction(ch, spec, &mut sol, eve, bob, cfg);
    }
    Ok(sol)
}

/// SCP solve that keeps `Q₂` as solved, without rank-one mean extraction.
pub(crate) fn solve_scp_covariances(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    scheme: Scheme,
    extra: &[CovariancePair],
    cfg: &SolverConfig,
) -> Result<SecrecySolution> {
    if !feasible(ch, spec) {
        return Ok(SecrecySolution::infeasible(ch, scheme, 0));
    }
    let (prog, sk) = dc_program(ch, spec, scheme);
    let n_vars = sk.prog.dims.len();
    let starts = starts(ch, spec, n_vars, extra, cfg)?;
    let tie = |p: &Point| if p.mats.len() > 1 { p.mats[1].trace() } else { 0.0 };
    let run = best_of_starts(&prog, &starts, tie, cfg)?;
    if run.status == Status::Infeasible {
        return Ok(SecrecySolution::infeasible(ch, scheme, run.iterations));
    }
    let n = ch.n_t();
    let q1 = run.point.mats[0].clone();
    let q2 = if n_vars == 2 { run.point.mats[1].clone() } else { SymMatrix::zeros(n) };
    let duals = &run.report.duals;
    let mult = Multipliers {
        m1: duals.psd[0].scale(2.0),
        m2: if n_vars == 2 { duals.psd[1].scale(2.0) } else { SymMatrix::zeros(n) },
        trace: duals.constraints[0],
        eve: sk.eve.map(|i| duals.constraints[i]),
        bob: sk.bob.map(|i| duals.constraints[i]),
    };
    let relaxation = run.report.relaxation;
    let mut sol = SecrecySolution::assemble(ch, scheme, run.status, CovariancePair::new(q1, q2)?);
    sol.kkt = run.report.residuals;
    sol.iterations = run.iterations;
    sol.relaxation = relaxation;
    sol.history = run.history;
    sol.multipliers = Some(mult);
    Ok(sol)
}

/// Replaces `Q₂` by a rank-one `μμᵀ` with the same power when that keeps
/// every constraint satisfied. Candidates, in order: the beam weighted by the
/// receiver-constraint multipliers, then the principal eigenvector of `Q₂`.
pub(crate) fn apply_mean_extraction(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    sol: &mut SecrecySolution,
    dual_eve: Option<f64>,
    dual_bob: Option<f64>,
    cfg: &SolverConfig,
) {
    let q2 = sol.pair.q2.clone();
    let p_mean = q2.trace().max(0.0);
    let tol = sol.relaxation + cfg.feas_tol * spec.scale();
    let n = ch.n_t();
    if p_mean <= cfg.psd_tol * spec.scale() {
        sol.pair.q2 = SymMatrix::zeros(n);
        sol.mean = Some(DVector::zeros(n));
        sol.mean_exact = true;
        return;
    }
    let signed = |rx: Receiver, d: Option<f64>| -> f64 {
        match (spec.constraint(rx), d) {
            (Some(c), Some(d)) if c.mode == EnergyMode::Min => d,
            (Some(_), Some(d)) => -d,
            _ => 0.0,
        }
    };
    let (we, wb) = (signed(Receiver::Eve, dual_eve), signed(Receiver::Bob, dual_bob));
    let mut candidates = Vec::new();
    let weights = if we == 0.0 && wb == 0.0 { (1.0, 0.0) } else { (we, wb) };
    if let Ok(b) = weighted_mean(ch, p_mean, weights.0, weights.1) {
        candidates.push(b.mu);
    }
    if let Ok(e) = eig_sym(&q2) {
        candidates.push(e.top_vector() * p_mean.sqrt());
    }
    for mu in &candidates {
        let pair = CovariancePair { q1: sol.pair.q1.clone(), q2: SymMatrix::outer(mu, 1.0) };
        if constraint_violation(ch, spec, &pair) <= tol {
            *sol = SecrecySolution { pair, mean: Some(mu.clone()), mean_exact: true, ..sol.clone() };
            refresh(ch, sol);
            return;
        }
    }
    sol.mean = candidates.last().cloned();
    sol.mean_exact = false;
}

fn refresh(ch: &WiretapChannel, sol: &mut SecrecySolution) {
    let fresh = SecrecySolution::assemble(ch, sol.scheme, sol.status, sol.pair.clone());
    sol.rate = fresh.rate;
    sol.raw_rate = fresh.raw_rate;
    sol.power_eve = fresh.power_eve;
    sol.power_bob = fresh.power_bob;
}

/// Mean scheme by SCP on `(Q₁, Q₂)`, followed by rank-one mean extraction.
pub fn solve_mimo_mean_scp(ch: &WiretapChannel, spec: &PowerSpec, cfg: &SolverConfig) -> Result<SecrecySolution> {
    solve_scp(ch, spec, Scheme::Mean, &[], cfg)
}

/// Artificial-noise scheme by SCP on `(Q₁, Q₂)`.
pub fn solve_mimo_an_scp(ch: &WiretapChannel, spec: &PowerSpec, cfg: &SolverConfig) -> Result<SecrecySolution> {
    solve_scp(ch, spec, Scheme::An, &[], cfg)
}

/// Zero-mean Gaussian signalling without artificial noise, by SCP.
pub fn solve_plain_gaussian(ch: &WiretapChannel, spec: &PowerSpec, cfg: &SolverConfig) -> Result<SecrecySolution> {
    solve_scp(ch, spec, Scheme::Plain, &[], cfg)
}

/// Zero-mean program over `Q` alone under maximum receiver constraints.
pub fn solve_max_constraints(ch: &WiretapChannel, spec: &PowerSpec, cfg: &SolverConfig) -> Result<SecrecySolution> {
    if spec.has_min_constraint() {
        return Err(Error::InvalidInput("maximum-constraint program given a minimum constraint".into()));
    }
    if ch.is_miso() {
        super::miso::solve_miso_plain(ch, spec, cfg)
    } else {
        solve_plain_gaussian(ch, spec, cfg)
    }
}
