//! Problem files: one TOML document with the channel, the budget, receiver
//! constraint blocks, the scheme, solver overrides and an optional replayed
//! solution.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::Deserialize;
use toml::Spanned;
use wiretap_core::solver::Multipliers;
use wiretap_core::{
    CovariancePair, EnergyMode, PowerSpec, Receiver, Scheme, SecrecySolution, SolverConfig, Status, SymMatrix,
    WiretapChannel,
};

type Rows = Spanned<Vec<Vec<f64>>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    #[serde(rename = "H")]
    h: Rows,
    #[serde(rename = "G")]
    g: Rows,
    #[serde(rename = "P")]
    p: f64,
    #[serde(default)]
    scheme: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    constraint: Vec<RawConstraint>,
    #[serde(default)]
    solver: SolverOverrides,
    #[serde(default)]
    replay: Option<RawReplay>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    receiver: Spanned<String>,
    mode: Spanned<String>,
    level: Spanned<f64>,
}

/// Optional overrides of [`SolverConfig`] fields.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    kkt_tol: Option<f64>,
    scp_tol: Option<f64>,
    feas_tol: Option<f64>,
    gap_tol: Option<f64>,
    max_newton: Option<usize>,
    max_iters: Option<usize>,
    restarts: Option<usize>,
    beta_grid: Option<usize>,
    beta_width: Option<f64>,
    parallel: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReplay {
    q1: Rows,
    q2: Rows,
    m1: Rows,
    m2: Rows,
    #[serde(default)]
    trace: f64,
    #[serde(default)]
    eve: Option<f64>,
    #[serde(default)]
    bob: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub receiver: Receiver,
    pub mode: EnergyMode,
    pub level: f64,
}

/// A stored solution with its multipliers, verified instead of solving.
#[derive(Debug, Clone)]
pub struct Replay {
    pub pair: CovariancePair,
    pub multipliers: Multipliers,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub channel: WiretapChannel,
    pub p: f64,
    pub scheme: Scheme,
    pub constraints: Vec<Constraint>,
    pub config: SolverConfig,
    pub replay: Option<Replay>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn matrix(src: &str, key: &str, rows: &Rows) -> Result<DMatrix<f64>> {
    let line = line_of(src, rows.span().start);
    let data = rows.get_ref();
    let cols = data.first().map_or(0, Vec::len);
    if data.is_empty() || cols == 0 {
        bail!("`{key}` (line {line}) must be a non-empty matrix");
    }
    if let Some(bad) = data.iter().position(|r| r.len() != cols) {
        bail!("`{key}` (line {line}) is not rectangular: row {bad} has {} entries, row 0 has {cols}", data[bad].len());
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        bail!("`{key}` (line {line}) has a non-finite entry");
    }
    Ok(DMatrix::from_fn(data.len(), cols, |i, j| data[i][j]))
}

fn symmetric(src: &str, key: &str, rows: &Rows) -> Result<SymMatrix> {
    let line = line_of(src, rows.span().start);
    SymMatrix::new(matrix(src, key, rows)?).with_context(|| format!("`{key}` (line {line})"))
}

fn keyword<T>(src: &str, key: &str, value: &Spanned<String>, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
    parse(value.get_ref().as_str()).with_context(|| {
        format!("`{key}` (line {}) has unknown value `{}`", line_of(src, value.span().start), value.get_ref())
    })
}

impl SolverOverrides {
    fn apply(&self, cfg: &mut SolverConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(kkt_tol, scp_tol, feas_tol, gap_tol, max_newton, max_iters, restarts, beta_grid, beta_width, parallel);
    }
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&src).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(src: &str) -> Result<Self> {
        let raw: RawProblem = toml::from_str(src)?;
        let channel = WiretapChannel::new(matrix(src, "H", &raw.h)?, matrix(src, "G", &raw.g)?)?;
        let scheme = match raw.scheme.as_deref() {
            None => Scheme::Mean,
            Some(s) => s.parse().with_context(|| "`scheme` must be one of mean, an, plain")?,
        };
        let mut constraints = Vec::with_capacity(raw.constraint.len());
        for c in &raw.constraint {
            let receiver = keyword(src, "receiver", &c.receiver, |s| match s {
                "eve" => Some(Receiver::Eve),
                "bob" => Some(Receiver::Bob),
                _ => None,
            })?;
            let mode = keyword(src, "mode", &c.mode, |s| match s {
                "min" => Some(EnergyMode::Min),
                "max" => Some(EnergyMode::Max),
                _ => None,
            })?;
            if constraints.iter().any(|k: &Constraint| k.receiver == receiver) {
                bail!("`receiver` (line {}) is constrained twice", line_of(src, c.receiver.span().start));
            }
            constraints.push(Constraint { receiver, mode, level: *c.level.get_ref() });
        }
        let mut config = SolverConfig::default();
        raw.solver.apply(&mut config);
        if let Some(seed) = raw.seed {
            config.seed = seed;
        }
        let replay = match &raw.replay {
            None => None,
            Some(r) => Some(Replay {
                pair: CovariancePair::new(symmetric(src, "q1", &r.q1)?, symmetric(src, "q2", &r.q2)?)?,
                multipliers: Multipliers {
                    m1: symmetric(src, "m1", &r.m1)?,
                    m2: symmetric(src, "m2", &r.m2)?,
                    trace: r.trace,
                    eve: r.eve,
                    bob: r.bob,
                },
            }),
        };
        let problem = Self { channel, p: raw.p, scheme, constraints, config, replay };
        problem.spec()?;
        Ok(problem)
    }

    /// Budget plus every constraint block.
    pub fn spec(&self) -> Result<PowerSpec> {
        self.spec_without(None)
    }

    /// Budget plus every constraint block except the one at `skip`.
    pub fn spec_without(&self, skip: Option<Receiver>) -> Result<PowerSpec> {
        let mut spec = PowerSpec::new(&self.channel, self.p)?;
        for c in self.constraints.iter().filter(|c| Some(c.receiver) != skip) {
            spec = spec.with(c.receiver, c.mode, c.level)?;
        }
        Ok(spec)
    }

    /// Receiver and mode swept by `sweep`: the first constraint block, or a
    /// minimum at the eavesdropper.
    pub fn sweep_target(&self) -> (Receiver, EnergyMode) {
        self.constraints.first().map_or((Receiver::Eve, EnergyMode::Min), |c| (c.receiver, c.mode))
    }

    /// The replayed solution, rates and powers re-evaluated from its
    /// covariances.
    pub fn replayed(&self) -> Option<SecrecySolution> {
        self.replay.as_ref().map(|r| {
            let mut sol = SecrecySolution::assemble(&self.channel, self.scheme, Status::Optimal, r.pair.clone());
            sol.multipliers = Some(r.multipliers.clone());
            sol
        })
    }
}
