//! Exhaustive grid search over low-dimensional covariance parameterizations.
//!
//! With single-antenna receivers the rate and both received powers depend on
//! `Q₁` only through `hᵀQ₁h` and `gᵀQ₁g`, so the least-trace `Q₁` realizing
//! them is rank one. The mean `μμᵀ` is rank one by construction. For two
//! transmit antennas the search runs over the beam angle and power of `Q₁`
//! and the beam angle of `μ`; the power of `μ` is an interval found in closed
//! form.

use nalgebra::DVector;

use super::{scheme_rate, Scheme, SecrecySolution, Status};
use crate::channel::{EnergyMode, PowerSpec, WiretapChannel};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::objectives::CovariancePair;
use crate::par::map_indexed;

const FEAS_SLACK: f64 = 1e-12;

/// Interval of powers `p ∈ [0, budget]` along a unit direction that keep
/// every receiver constraint, given the powers `base` already received from
/// `Q₁` and per-unit gains `gain`.
fn power_interval(spec: &PowerSpec, base: [f64; 2], gain: [f64; 2], budget: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0, budget);
    let slack = FEAS_SLACK * spec.scale();
    for (rx, c) in spec.active_constraints() {
        let i = rx as usize;
        let (b, k) = (base[i], gain[i]);
        match c.mode {
            EnergyMode::Min if b < c.adjusted - slack => {
                if k <= 0.0 {
                    return None;
                }
                lo = f64::max(lo, (c.adjusted - b) / k);
            }
            EnergyMode::Max if b > c.adjusted + slack => return None,
            EnergyMode::Max if k > 0.0 => hi = f64::min(hi, (c.adjusted - b).max(0.0) / k),
            _ => {}
        }
    }
    (lo <= hi + slack).then_some((lo, hi.max(lo)))
}

fn direction(theta: f64) -> DVector<f64> {
    DVector::from_vec(vec![theta.cos(), theta.sin()])
}

#[derive(Clone)]
struct Candidate {
    rate: f64,
    pair: CovariancePair,
    mean: Option<DVector<f64>>,
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.rate > a.rate { b } else { a }),
        (a, b) => a.or(b),
    }
}

fn gains(ch: &WiretapChannel, x: &SymMatrix) -> [f64; 2] {
    let mut out = [0.0; 2];
    for rx in [crate::channel::Receiver::Eve, crate::channel::Receiver::Bob] {
        out[rx as usize] = ch.gram(rx).inner(x);
    }
    out
}

fn siso(ch: &WiretapChannel, spec: &PowerSpec, scheme: Scheme, res: usize) -> Option<Candidate> {
    let p = spec.p;
    let unit = gains(ch, &SymMatrix::identity(1));
    let rows = map_indexed(res + 1, true, |i| {
        let q1 = p * i as f64 / res as f64;
        let base = [unit[0] * q1, unit[1] * q1];
        let mut best = None;
        match scheme {
            Scheme::Plain => {
                if power_interval(spec, base, unit, 0.0).is_some() {
                    best = Some(CovariancePair::message_only(SymMatrix::from_diagonal(&[q1])));
                }
            }
            Scheme::Mean => {
                if let Some((lo, _)) = power_interval(spec, base, unit, p - q1) {
                    best = Some(CovariancePair {
                        q1: SymMatrix::from_diagonal(&[q1]),
                        q2: SymMatrix::from_diagonal(&[lo]),
                    });
                }
            }
            Scheme::An => {
                let mut top: Option<Candidate> = None;
                for j in 0..=(res - i) {
                    let q2 = p * j as f64 / res as f64;
                    let pair =
                        CovariancePair { q1: SymMatrix::from_diagonal(&[q1]), q2: SymMatrix::from_diagonal(&[q2]) };
                    let e = gains(ch, &pair.total());
                    if power_interval(spec, e, unit, 0.0).is_some() {
                        let rate = scheme_rate(ch, scheme, &pair);
                        top = better(top, Some(Candidate { rate, pair, mean: None }));
                    }
                }
                return top;
            }
        }
        best.map(|pair| {
            let mean = (scheme == Scheme::Mean).then(|| DVector::from_element(1, pair.q2.get(0, 0).sqrt()));
            Candidate { rate: scheme_rate(ch, scheme, &pair), pair, mean }
        })
    });
    rows.into_iter().fold(None, better)
}

fn miso2(ch: &WiretapChannel, spec: &PowerSpec, scheme: Scheme, res: usize) -> Option<Candidate> {
    let p = spec.p;
    let angles: Vec<f64> = (0..res).map(|k| std::f64::consts::PI * k as f64 / res as f64).collect();
    let beam_gain: Vec<[f64; 2]> = angles.iter().map(|&t| gains(ch, &SymMatrix::outer(&direction(t), 1.0))).collect();
    let rows = map_indexed(res, true, |a| {
        let u = direction(angles[a]);
        let mut top: Option<Candidate> = None;
        for i in 0..=res {
            let p1 = p * i as f64 / res as f64;
            let base = [beam_gain[a][0] * p1, beam_gain[a][1] * p1];
            let q1 = SymMatrix::outer(&u, p1);
            let rate = scheme_rate(ch, scheme, &CovariancePair::message_only(q1.clone()));
            if top.as_ref().is_some_and(|t| t.rate >= rate) {
                continue;
            }
            let found = match scheme {
                Scheme::Plain => {
                    power_interval(spec, base, [0.0; 2], 0.0).map(|_| (CovariancePair::message_only(q1.clone()), None))
                }
                _ => beam_gain.iter().zip(&angles).find_map(|(k, &t)| {
                    power_interval(spec, base, *k, p - p1).map(|(lo, _)| {
                        let mu = direction(t) * lo.sqrt();
                        (CovariancePair { q1: q1.clone(), q2: SymMatrix::outer(&mu, 1.0) }, Some(mu))
                    })
                }),
            };
            if let Some((pair, mean)) = found {
                top = Some(Candidate { rate, pair, mean });
            }
        }
        top
    });
    rows.into_iter().fold(None, better)
}

/// Best feasible point on a grid with `resolution` steps per axis.
///
/// Supports one transmit antenna (all schemes) and two transmit antennas
/// with single-antenna receivers (mean and plain schemes).
pub fn oracle_grid(
    ch: &WiretapChannel,
    spec: &PowerSpec,
    scheme: Scheme,
    resolution: usize,
) -> Result<SecrecySolution> {
    if resolution < 2 {
        return Err(Error::InvalidInput(format!("oracle resolution must be at least 2, got {resolution}")));
    }
    let best = match (ch.n_t(), ch.is_miso(), scheme) {
        (1, true, _) => siso(ch, spec, scheme, resolution),
        (2, true, Scheme::Mean | Scheme::Plain) => miso2(ch, spec, scheme, resolution),
        _ => {
            let per = ch.n_t() * (ch.n_t() + 1) / 2;
            let dof = if scheme == Scheme::Plain { per } else { 2 * per };
            return Err(Error::OracleTooLarge { dof });
        }
    };
    Ok(match best {
        None => SecrecySolution::infeasible(ch, scheme, 0),
        Some(c) => {
            let mut sol = SecrecySolution::assemble(ch, scheme, Status::Optimal, c.pair);
            sol.mean_exact = c.mean.is_some();
            sol.mean = c.mean;
            sol
        }
    })
}
