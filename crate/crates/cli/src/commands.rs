//! The four subcommands. Each writes its report to `out` and returns the
//! process exit code.

use std::fmt::Write as _;
use std::io::Write;

use anyhow::{bail, Result};
use wiretap_core::enhancement::{kkt_residuals, verify_an_scheme, verify_mean_scheme, Check};
use wiretap_core::par::map_slice;
use wiretap_core::regions::{energy_grid, sweep_energy, RegionSample};
use wiretap_core::solver::{oracle_grid, scheme_rate, solve_mimo_an_scp, solve_mimo_mean_scp, solve_plain_gaussian};
use wiretap_core::{align, solve, Scheme, SecrecySolution, SolverConfig, Status, SymMatrix};

use crate::problem::Problem;

pub const CSV_HEADER: &str = "E,scheme,rate_nats,power_eve,power_bob,status,iters,kkt_residual";

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Fail = 1,
    Infeasible = 2,
    Unsupported = 3,
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub bits: bool,
    pub seed: Option<u64>,
    pub tol_kkt: Option<f64>,
    pub max_iters: Option<usize>,
}

impl Flags {
    pub fn config(&self, problem: &Problem) -> SolverConfig {
        let mut cfg = problem.config.clone();
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(tol) = self.tol_kkt {
            cfg.kkt_tol = tol;
        }
        if let Some(iters) = self.max_iters {
            cfg.max_iters = iters;
        }
        cfg
    }
}

/// Schemes selected by `--scheme`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    All,
    One(Scheme),
}

impl SchemeChoice {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => SchemeChoice::All,
            other => SchemeChoice::One(other.parse()?),
        })
    }

    fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::All => Scheme::ALL.to_vec(),
            SchemeChoice::One(s) => vec![s],
        }
    }
}

/// Inclusive grid `start:stop:count`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, count] = parts.as_slice() else {
        bail!("grid `{spec}` must be start:stop:count");
    };
    let (start, stop): (f64, f64) = (start.trim().parse()?, stop.trim().parse()?);
    let count: usize = count.trim().parse()?;
    if count < 2 {
        bail!("grid `{spec}` needs a count of at least 2");
    }
    if !(start.is_finite() && stop.is_finite() && start <= stop) {
        bail!("grid `{spec}` must be finite and ascending");
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|k| if k + 1 == count { stop } else { start + step * k as f64 }).collect())
}

fn fmt_matrix(m: &SymMatrix) -> String {
    let rows: Vec<String> = (0..m.dim())
        .map(|i| format!("[{}]", (0..m.dim()).map(|j| format!("{:.9}", m.get(i, j))).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

fn solve_problem(problem: &Problem, cfg: &SolverConfig) -> Result<SecrecySolution> {
    Ok(solve(&problem.channel, &problem.spec()?, problem.scheme, cfg)?)
}

pub fn cmd_solve(problem: &Problem, flags: &Flags, out: &mut dyn Write) -> Result<Exit> {
    let sol = solve_problem(problem, &flags.config(problem))?;
    writeln!(out, "status={}", sol.status)?;
    writeln!(out, "scheme={}", sol.scheme)?;
    if sol.status == Status::Infeasible {
        return Ok(Exit::Infeasible);
    }
    if flags.bits {
        writeln!(out, "rate_bits={:.9}", sol.rate / std::f64::consts::LN_2)?;
    } else {
        writeln!(out, "rate_nats={:.9}", sol.rate)?;
    }
    writeln!(out, "q1={}", fmt_matrix(&sol.pair.q1))?;
    match (sol.scheme, &sol.mean) {
        (Scheme::Mean, Some(mu)) if sol.mean_exact => {
            let entries: Vec<String> = mu.iter().map(|v| format!("{v:.9}")).collect();
            writeln!(out, "mean=[{}]", entries.join(", "))?;
        }
        (Scheme::Plain, _) => {}
        _ => writeln!(out, "q2={}", fmt_matrix(&sol.pair.q2))?,
    }
    writeln!(out, "power_eve={:.9}", sol.power_eve)?;
    writeln!(out, "power_bob={:.9}", sol.power_bob)?;
    let k = &sol.kkt;
    writeln!(
        out,
        "kkt_residual={:.3e} stationarity={:.3e} primal={:.3e} dual={:.3e} complementarity={:.3e}",
        k.max(),
        k.stationarity,
        k.primal,
        k.dual,
        k.complementarity
    )?;
    writeln!(out, "iterations={}", sol.iterations)?;
    Ok(if sol.status == Status::Optimal { Exit::Ok } else { Exit::Fail })
}

fn csv_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9}")
    } else {
        String::new()
    }
}

fn csv_row(level: f64, scheme: Scheme, rate: f64, s: &RegionSample) -> String {
    let feasible = s.status != Status::Infeasible;
    let num = |v: f64| if feasible { csv_number(v) } else { String::new() };
    format!(
        "{level},{scheme},{},{},{},{},{},{:.3e}\n",
        num(rate),
        num(s.power_eve),
        num(s.power_bob),
        s.status,
        s.iterations,
        s.kkt_residual
    )
}

/// Sweep rows in grid order, schemes in `mean, an, plain` order. Rates are
/// re-evaluated from the returned covariances.
pub fn sweep_table(problem: &Problem, grid: &[f64], choice: SchemeChoice, cfg: &SolverConfig) -> Result<String> {
    let (target, mode) = problem.sweep_target();
    let base = problem.spec_without(Some(target))?;
    let schemes = choice.schemes();
    let curves =
        map_slice(&schemes, cfg.parallel, |&s| sweep_energy(&problem.channel, &base, target, mode, grid, s, cfg));
    let curves = curves.into_iter().collect::<wiretap_core::Result<Vec<_>>>()?;
    let mut csv = format!("{CSV_HEADER}\n");
    for (k, &level) in grid.iter().enumerate() {
        for curve in &curves {
            let s = &curve.samples[k];
            let rate = scheme_rate(&problem.channel, curve.scheme, &s.pair).max(0.0);
            csv.push_str(&csv_row(level, curve.scheme, rate, s));
        }
    }
    Ok(csv)
}

pub fn cmd_sweep(
    problem: &Problem,
    flags: &Flags,
    grid: Option<&str>,
    choice: Option<SchemeChoice>,
    out: &mut dyn Write,
) -> Result<Exit> {
    let (target, _) = problem.sweep_target();
    let grid = match grid {
        Some(g) => parse_grid(g)?,
        None => energy_grid(&problem.channel, problem.p, target, 20),
    };
    let choice = choice.unwrap_or(SchemeChoice::One(problem.scheme));
    out.write_all(sweep_table(problem, &grid, choice, &flags.config(problem))?.as_bytes())?;
    Ok(Exit::Ok)
}

fn check_line(c: &Check) -> String {
    format!(
        "CHECK {} residual={:.3e} tol={:.3e} {}",
        c.name,
        c.residual,
        c.tolerance,
        if c.pass { "PASS" } else { "FAIL" }
    )
}

pub fn cmd_verify(problem: &Problem, flags: &Flags, out: &mut dyn Write) -> Result<Exit> {
    let ch = &problem.channel;
    let aligned = match align(ch) {
        Ok(a) => a,
        Err(e) => {
            writeln!(out, "{e}")?;
            return Ok(Exit::Unsupported);
        }
    };
    let spec = problem.spec()?;
    let sol = match problem.replayed() {
        Some(sol) => sol,
        None => {
            let cfg = flags.config(problem);
            match problem.scheme {
                Scheme::Mean => solve_mimo_mean_scp(ch, &spec, &cfg)?,
                Scheme::An => solve_mimo_an_scp(ch, &spec, &cfg)?,
                Scheme::Plain => solve_plain_gaussian(ch, &spec, &cfg)?,
            }
        }
    };
    writeln!(out, "status={}", sol.status)?;
    writeln!(out, "scheme={}", sol.scheme)?;
    if sol.status == Status::Infeasible {
        return Ok(Exit::Infeasible);
    }
    writeln!(out, "rate_nats={:.9}", sol.rate)?;
    if sol.multipliers.is_none() {
        writeln!(out, "unverifiable: no multipliers")?;
        return Ok(Exit::Fail);
    }
    let mut checks = match sol.scheme {
        Scheme::Mean => verify_mean_scheme(&sol, &aligned, None)?.checks,
        Scheme::An => verify_an_scheme(&sol, &aligned, None)?.checks,
        Scheme::Plain => vec![],
    };
    for c in kkt_residuals(&sol, &aligned, &spec)? {
        if !checks.iter().any(|k| k.name == c.name) {
            checks.push(c);
        }
    }
    let mut report = String::new();
    for c in &checks {
        writeln!(report, "{}", check_line(c))?;
    }
    out.write_all(report.as_bytes())?;
    Ok(if checks.iter().all(|c| c.pass) { Exit::Ok } else { Exit::Fail })
}

pub fn cmd_oracle(problem: &Problem, flags: &Flags, resolution: usize, out: &mut dyn Write) -> Result<Exit> {
    let spec = problem.spec()?;
    let oracle = oracle_grid(&problem.channel, &spec, problem.scheme, resolution)?;
    let sol = solve_problem(problem, &flags.config(problem))?;
    writeln!(out, "scheme={}", problem.scheme)?;
    writeln!(out, "resolution={resolution}")?;
    writeln!(out, "oracle_status={}", oracle.status)?;
    writeln!(out, "solver_status={}", sol.status)?;
    if oracle.status == Status::Infeasible || sol.status == Status::Infeasible {
        return Ok(if oracle.status == sol.status { Exit::Infeasible } else { Exit::Fail });
    }
    writeln!(out, "oracle_rate={:.9}", oracle.rate)?;
    writeln!(out, "solver_rate={:.9}", sol.rate)?;
    writeln!(out, "gap={:.3e}", (sol.rate - oracle.rate).abs())?;
    Ok(Exit::Ok)
}
