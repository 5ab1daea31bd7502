//! Sequential convex programming for differences of log-det functions.
//!
//! Negative-weight terms are replaced by their tangent plane at the current
//! iterate, which under-estimates the objective, so each surrogate solve
//! cannot decrease the true value (up to the inner solver's tolerance).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::barrier::{solve_convex, ConvexProgram, LinearForm, Point, SolverReport};
use super::{SolverConfig, Status};
use crate::error::Result;
use crate::linalg::SymMatrix;
use crate::objectives::{log_det_gradient, log_det_i_plus};

/// `weight · ln det(I + A (Σ cᵥ Xᵥ) Aᵀ)` with a weight of either sign.
#[derive(Debug, Clone, PartialEq)]
pub struct DcTerm {
    pub weight: f64,
    pub a: DMatrix<f64>,
    pub coeffs: Vec<(usize, f64)>,
}

/// Constraints, variables and linear objective part in `skeleton`, plus
/// signed log-det terms.
#[derive(Debug, Clone)]
pub struct DcProgram {
    pub skeleton: ConvexProgram,
    pub terms: Vec<DcTerm>,
}

#[derive(Debug, Clone)]
pub struct ScpRun {
    pub status: Status,
    pub point: Point,
    pub value: f64,
    /// Report of the surrogate solve that produced `point`.
    pub report: SolverReport,
    pub iterations: usize,
    pub newton_steps: usize,
    pub history: Vec<f64>,
}

fn combine(term: &DcTerm, mats: &[SymMatrix]) -> SymMatrix {
    let mut x = SymMatrix::zeros(term.a.ncols());
    for (v, c) in &term.coeffs {
        x = &x + &mats[*v].scale(*c);
    }
    x
}

impl DcProgram {
    pub fn value(&self, p: &Point) -> f64 {
        let mut f = self.skeleton.constant + self.skeleton.linear.eval(p);
        for t in &self.terms {
            f += t.weight * log_det_i_plus(&t.a, &combine(t, &p.mats));
        }
        f
    }

    /// Concave minorant that touches the objective at `at`.
    pub fn surrogate(&self, at: &Point) -> ConvexProgram {
        let mut prog = self.skeleton.clone();
        for t in &self.terms {
            if t.weight >= 0.0 {
                prog.add_logdet(t.weight, t.a.clone(), t.coeffs.clone());
                continue;
            }
            let x0 = combine(t, &at.mats);
            let m = log_det_gradient(&t.a, &x0);
            prog.constant += t.weight * (log_det_i_plus(&t.a, &x0) - m.inner(&x0));
            let mut lin = std::mem::take(&mut prog.linear);
            for (v, c) in &t.coeffs {
                lin = lin.mat(*v, m.scale(t.weight * c));
            }
            prog.linear = lin;
        }
        prog
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    let m = a.mats.iter().zip(&b.mats).map(|(x, y)| (x - y).frobenius_norm()).fold(0.0, f64::max);
    a.scalars.iter().zip(&b.scalars).map(|(x, y)| (x - y).abs()).fold(m, f64::max)
}

fn blend(a: &Point, b: &Point, gamma: f64) -> Point {
    Point {
        mats: a.mats.iter().zip(&b.mats).map(|(x, y)| x + &(y - x).scale(gamma)).collect(),
        scalars: a.scalars.iter().zip(&b.scalars).map(|(x, y)| x + gamma * (y - x)).collect(),
    }
}

/// Runs SCP from `start`, which only serves as the first linearization point.
pub fn run_scp(prog: &DcProgram, start: &Point, cfg: &SolverConfig) -> Result<ScpRun> {
    let scale = prog.skeleton.scale.max(1.0);
    let mono_tol = 1e-8 * scale;
    let step_tol = 1e-6 * scale;
    let mut lin_at = start.clone();
    let mut history = Vec::new();
    let mut newton_steps = 0;
    let mut current: Option<(Point, f64, SolverReport)> = None;
    let mut status = Status::MaxIters;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let rep = solve_convex(&prog.surrogate(&lin_at), cfg)?;
        newton_steps += rep.iterations;
        if rep.status == Status::Infeasible {
            return Ok(ScpRun {
                status: Status::Infeasible,
                point: rep.point.clone(),
                value: f64::NAN,
                report: rep,
                iterations,
                newton_steps,
                history,
            });
        }
        let cand = rep.point.clone();
        let f_cand = prog.value(&cand);
        let Some((prev, f_prev, _)) = current.take() else {
            history.push(f_cand);
            lin_at = cand.clone();
            current = Some((cand, f_cand, rep));
            continue;
        };
        let (next, f_next, rep) = if f_cand >= f_prev - mono_tol {
            (cand, f_cand, rep)
        } else {
            // Inexact surrogate solve: shrink toward the accepted iterate.
            let mut gamma = 0.5;
            let mut found = None;
            while gamma > 1e-6 {
                let p = blend(&prev, &cand, gamma);
                let f = prog.value(&p);
                if f >= f_prev - mono_tol {
                    found = Some((p, f));
                    break;
                }
                gamma *= 0.5;
            }
            match found {
                Some((p, f)) => (p, f, rep),
                None => {
                    current = Some((prev.clone(), f_prev, rep));
                    status = Status::Optimal;
                    break;
                }
            }
        };
        debug_assert!(f_next >= f_prev - mono_tol, "SCP step decreased the objective");
        let step = distance(&prev, &next);
        history.push(f_next);
        lin_at = next.clone();
        current = Some((next, f_next, rep));
        if (f_next - f_prev).abs() <= cfg.scp_tol && step <= step_tol {
            status = Status::Optimal;
            break;
        }
    }
    let (point, value, mut report) = current.expect("at least one SCP iterate");
    if report.status != Status::Optimal && status == Status::Optimal {
        status = report.status;
    }
    // Duals of the surrogate taken at the returned point.
    if distance(&report.point, &point) > 0.0 {
        let polish = solve_convex(&prog.surrogate(&point), cfg)?;
        newton_steps += polish.iterations;
        if polish.status == Status::Optimal && prog.value(&polish.point) >= value - mono_tol {
            let v = prog.value(&polish.point);
            history.push(v);
            return Ok(ScpRun {
                status,
                point: polish.point.clone(),
                value: v,
                report: polish,
                iterations,
                newton_steps,
                history,
            });
        }
        report.point = point.clone();
    }
    Ok(ScpRun { status, point, value, report, iterations, newton_steps, history })
}

/// Random PSD matrix with trace `trace`, from a seeded stream.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, trace: f64) -> SymMatrix {
    let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let m = SymMatrix::gram(&a);
    let tr = m.trace();
    if tr > 0.0 {
        m.scale(trace / tr)
    } else {
        SymMatrix::identity(n).scale(trace / n as f64)
    }
}

pub fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Runs SCP from every start and keeps the best value; near-ties (within
/// 1e-10) go to the smaller `tie_key`, then to the earlier start.
pub fn best_of_starts(
    prog: &DcProgram,
    starts: &[Point],
    tie_key: impl Fn(&Point) -> f64 + Sync,
    cfg: &SolverConfig,
) -> Result<ScpRun> {
    let runs = crate::par::map_slice(starts, cfg.parallel, |s| run_scp(prog, s, cfg));
    let mut best: Option<(ScpRun, f64)> = None;
    let mut total_steps = 0;
    let mut total_iters = 0;
    let mut first_err = None;
    for run in runs {
        let run = match run {
            Ok(r) => r,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        total_steps += run.newton_steps;
        total_iters += run.iterations;
        if run.status == Status::Infeasible {
            if best.is_none() {
                best = Some((run, f64::INFINITY));
            }
            continue;
        }
        let key = tie_key(&run.point);
        let better = match &best {
            None => true,
            Some((b, _)) if b.status == Status::Infeasible => true,
            Some((b, bk)) => run.value > b.value + 1e-10 || ((run.value - b.value).abs() <= 1e-10 && key < *bk),
        };
        if better {
            best = Some((run, key));
        }
    }
    match best {
        Some((mut run, _)) => {
            run.newton_steps = total_steps;
            run.iterations = total_iters;
            Ok(run)
        }
        None => Err(first_err.expect("no starts")),
    }
}

/// Trace form summing the given matrix variables.
pub(crate) fn sum_form(vars: &[usize], c: &SymMatrix) -> LinearForm {
    vars.iter().fold(LinearForm::new(), |f, &v| f.mat(v, c.clone()))
}
