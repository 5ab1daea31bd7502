//! Single-antenna-receiver programs made convex by the Charnes-Cooper
//! change of variables `Q̃ = tQ`, plus a line search over the eavesdropper
//! SNR bound `β` for artificial noise.

use nalgebra::DVector;

use super::barrier::{solve_convex, ConvexProgram, LinearForm, Sense, SolverReport};
use super::mimo::apply_mean_extraction;
use super::scp::sum_form;
use super::{Scheme, SecrecySolution, SolverConfig, Status};
use crate::channel::{feasible, golden_section_min, EnergyMode, PowerSpec, WiretapChannel};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::objectives::{rate_an, CovariancePair};
use crate::par::map_indexed;

/// Decades of `β − 1` below the linear grid searched for the optimal `β`.
const BETA_DECADES: usize = 12;

fn require_miso(ch: &WiretapChannel) -> Result<(DVector<f64>, DVector<f64>)> {
    if !ch.is_miso() {
        return Err(Error::InvalidInput(format!(
            "single-antenna receivers required, got {} and {}",
            ch.n_r(),
            ch.n_e()
        )));
    }
    Ok((ch.h().row(0).transpose(), ch.g().row(0).transpose()))
}

/// Budget, receiver constraints (scaled by `t`) and `t ≥ t_min` over the
/// matrix variables `vars` and the scalar `t` (index 0). Returns the
/// constraint indices of the eve and bob energy rows.
fn scaled_constraints(
    prog: &mut ConvexProgram,
    ch: &WiretapChannel,
    spec: &PowerSpec,
    vars: &[usize],
    cfg: &SolverConfig,
) -> (Option<usize>, Option<usize>) {
    let n = ch.n_t();
    prog.constrain(sum_form(vars, &SymMatrix::identity(n)).scalar(0, -spec.p), Sense::Le, 0.0);
    let (mut eve, mut bob) = (None, None);
    for (rx, c) in spec.active_constraints() {
        let sense = match c.mode {
            EnergyMode::Min => Sense::Ge,
            EnergyMode::Max => Sense::Le,
        };
        let idx = prog.constraints.len();
        prog.constrain(sum_form(vars, &ch.gram(rx)).scalar(0, -c.adjusted), sense, 0.0);
        match rx {
            crate::channel::Receiver::Eve => eve = Some(idx),
            crate::channel::Receiver::Bob => bob = Some(idx),
        }
    }
    prog.constrain(LinearForm::new().scalar(0, 1.0), Sense::Ge, cfg.t_min_rel * spec.scale());
    (eve, bob)
}

fn unscale(rep: &SolverReport, var: usize, t: f64) -> SymMatrix {
    rep.point.mats[var].scale(1.0 / t)
}

fn charnes_cooper(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    scheme: Scheme,
    cfg: &SolverConfig,
) -> Result<SecrecySolution> {
    let (h, g) = require_miso(ch)?;
    if !feasible(ch, spec) {
        return Ok(SecrecySolution::infeasible(ch, scheme, 0));
    }
    let n = ch.n_t();
    let with_q2 = scheme == Scheme::Mean;
    let vars: Vec<usize> = if with_q2 { vec![0, 1] } else { vec![0] };
    let mut prog = ConvexProgram::new(vec![n; vars.len()], 1).with_scale(spec.scale());
    prog.linear = LinearForm::new().scalar(0, 1.0).mat(0, SymMatrix::outer(&h, 1.0));
    prog.constrain(LinearForm::new().scalar(0, 1.0).mat(0, SymMatrix::outer(&g, 1.0)), Sense::Eq, 1.0);
    let (eve, bob) = scaled_constraints(&mut prog, ch, spec, &vars, cfg);
    let rep = solve_convex(&prog, cfg)?;
    if rep.status == Status::Infeasible {
        return Ok(SecrecySolution::infeasible(ch, scheme, rep.iterations));
    }
    let t = rep.point.scalars[0];
    if t <= 2.0 * cfg.t_min_rel * spec.scale() {
        return Err(Error::DegenerateTransform(t));
    }
    let q1 = unscale(&rep, 0, t);
    let q2 = if with_q2 { unscale(&rep, 1, t) } else { SymMatrix::zeros(n) };
    let mut sol = SecrecySolution::assemble(ch, scheme, rep.status, CovariancePair::new(q1, q2)?);
    sol.kkt = rep.residuals;
    sol.iterations = rep.iterations;
    sol.relaxation = rep.relaxation / t;
    if with_q2 {
        let d = |i: Option<usize>| i.map(|i| rep.duals.constraints[i]);
        apply_mean_extraction(ch, spec, &mut sol, d(eve), d(bob), cfg);
    }
    Ok(sol)
}

/// Mean scheme for single-antenna receivers as one convex program: maximize
/// `t + hᵀQ̃₁h` subject to `t + gᵀQ̃₁g = 1`, the budget and receiver
/// constraints scaled by `t`; the rate is `½ln` of the optimum.
pub fn solve_miso_mean(ch: &WiretapChannel, spec: &PowerSpec, cfg: &SolverConfig) -> Result<SecrecySolution> {
    charnes_cooper(ch, spec, Scheme::Mean, cfg)
}

/// Zero-mean Gaussian signalling (no `Q₂`) through the same transform.
pub fn solve_miso_plain(ch: &WiretapChannel, spec: &PowerSpec, cfg: &SolverConfig) -> Result<SecrecySolution> {
    charnes_cooper(ch, spec, Scheme::Plain, cfg)
}

struct BetaEval {
    rate: f64,
    pair: CovariancePair,
    report: SolverReport,
}

/// `φ(β)`: the transformed program for a fixed eavesdropper SNR bound `β`.
fn phi(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    h: &DVector<f64>,
    g: &DVector<f64>,
    beta: f64,
    cfg: &SolverConfig,
) -> Option<BetaEval> {
    let n = ch.n_t();
    let (hh, gg) = (SymMatrix::outer(h, 1.0), SymMatrix::outer(g, 1.0));
    let mut prog = ConvexProgram::new(vec![n, n], 1).with_scale(spec.scale());
    prog.linear = sum_form(&[0, 1], &hh).scalar(0, 1.0);
    prog.constrain(
        LinearForm::new().mat(0, gg.clone()).mat(1, gg.scale(-(beta - 1.0))).scalar(0, -(beta - 1.0)),
        Sense::Le,
        0.0,
    );
    prog.constrain(LinearForm::new().scalar(0, beta).mat(1, hh.scale(beta)), Sense::Eq, 1.0);
    scaled_constraints(&mut prog, ch, spec, &[0, 1], cfg);
    let rep = solve_convex(&prog, cfg).ok()?;
    if rep.status == Status::Infeasible {
        return None;
    }
    let t = rep.point.scalars[0];
    if t.is_nan() || t <= 0.0 {
        return None;
    }
    let pair = CovariancePair { q1: unscale(&rep, 0, t), q2: unscale(&rep, 1, t) };
    Some(BetaEval { rate: rate_an(ch, &pair), pair, report: rep })
}

/// Artificial-noise scheme for single-antenna receivers: maximizes
/// `½ln φ(β)` over `β ∈ (1, 1 + P‖h‖²]` by a grid in `β − 1` (geometric
/// toward 0, then linear) and golden-section refinement in `ln(β − 1)`. The
/// reported covariances are those with the best true rate seen at any `β`.
pub fn solve_miso_an(ch: &WiretapChannel, spec: &PowerSpec, cfg: &SolverConfig) -> Result<SecrecySolution> {
    let (h, g) = require_miso(ch)?;
    if !feasible(ch, spec) {
        return Ok(SecrecySolution::infeasible(ch, Scheme::An, 0));
    }
    let range = spec.p * h.norm_squared();
    if range <= 0.0 {
        return an_fallback(ch, spec, cfg, 0);
    }
    // β − 1 = range·x on a geometric grid toward 0 merged with a linear grid;
    // the optimum sits near β = 1 when the eavesdropper can be nulled.
    let grid = cfg.beta_grid.max(2);
    let mut xs: Vec<f64> = (1..=BETA_DECADES).rev().map(|k| 10f64.powi(-(k as i32))).collect();
    xs.extend((1..=grid).map(|i| i as f64 / grid as f64));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let evals = map_indexed(xs.len(), cfg.parallel, |i| phi(ch, spec, &h, &g, 1.0 + range * xs[i], cfg));
    let score = |e: &Option<BetaEval>| e.as_ref().map_or(f64::NEG_INFINITY, |e| 0.5 * e.report.objective.ln());
    let mut iterations: usize = evals.iter().flatten().map(|e| e.report.iterations).sum();
    let top = (0..xs.len()).max_by(|&a, &b| score(&evals[a]).total_cmp(&score(&evals[b])));
    let mut best: Option<BetaEval> = None;
    let keep = |best: &mut Option<BetaEval>, e: BetaEval| {
        if best.as_ref().is_none_or(|b| e.rate > b.rate) {
            *best = Some(e);
        }
    };
    let top = top.filter(|&i| evals[i].is_some());
    for e in evals.into_iter().flatten() {
        keep(&mut best, e);
    }
    if let Some(i) = top {
        // Golden section on u = ln x between the neighbours of the best point.
        let lo = if i == 0 { xs[0] * 1e-3 } else { xs[i - 1] };
        let up = xs.get(i + 1).copied().unwrap_or(xs[i]);
        let cell = std::sync::Mutex::new((best.take(), 0usize));
        golden_section_min(
            |u| {
                let e = phi(ch, spec, &h, &g, 1.0 + range * u.exp(), cfg);
                let mut guard = cell.lock().expect("beta search state");
                let Some(e) = e else { return f64::INFINITY };
                guard.1 += e.report.iterations;
                let val = -0.5 * e.report.objective.ln();
                keep(&mut guard.0, e);
                val
            },
            lo.ln(),
            up.ln(),
            cfg.beta_width,
        );
        let (b, extra) = cell.into_inner().expect("beta search state");
        best = b;
        iterations += extra;
    }
    match best {
        Some(e) if e.rate >= 0.0 => {
            let mut sol = SecrecySolution::assemble(ch, Scheme::An, e.report.status, e.pair);
            sol.kkt = e.report.residuals;
            sol.iterations = iterations;
            sol.relaxation = e.report.relaxation / e.report.point.scalars[0];
            Ok(sol)
        }
        _ => an_fallback(ch, spec, cfg, iterations),
    }
}

/// Zero rate: all power goes to noise that meets the receiver constraints.
fn an_fallback(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    cfg: &SolverConfig,
    iterations: usize,
) -> Result<SecrecySolution> {
    let plain = solve_miso_plain(ch, spec, cfg)?;
    if !plain.is_feasible() {
        return Ok(SecrecySolution::infeasible(ch, Scheme::An, iterations));
    }
    let n = ch.n_t();
    let pair = CovariancePair { q1: SymMatrix::zeros(n), q2: plain.pair.q1 };
    let mut sol = SecrecySolution::assemble(ch, Scheme::An, plain.status, pair);
    sol.kkt = plain.kkt;
    sol.iterations = iterations + plain.iterations;
    Ok(sol)
}
