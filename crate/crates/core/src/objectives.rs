//! Rate and received-power functionals, in nats, with their matrix gradients.
//!
//! Functionals return raw values, which may be negative; clamping to zero
//! happens only when a solution is reported.

use nalgebra::DMatrix;

use crate::channel::{Receiver, WiretapChannel};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, eig_sym, inverse_pd, SymMatrix};

/// Message covariance `q1` plus the non-message component `q2` (mean outer
/// product, artificial noise, or the second user's covariance).
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub q1: SymMatrix,
    pub q2: SymMatrix,
}

impl CovariancePair {
    pub fn new(q1: SymMatrix, q2: SymMatrix) -> Result<Self> {
        if q1.dim() != q2.dim() {
            return Err(Error::DimensionMismatch(format!("Q1 is {0}x{0}, Q2 is {1}x{1}", q1.dim(), q2.dim())));
        }
        Ok(Self { q1, q2 })
    }

    pub fn zeros(n: usize) -> Self {
        Self { q1: SymMatrix::zeros(n), q2: SymMatrix::zeros(n) }
    }

    pub fn message_only(q1: SymMatrix) -> Self {
        let n = q1.dim();
        Self { q1, q2: SymMatrix::zeros(n) }
    }

    /// Total input covariance `Q₁ + Q₂`.
    pub fn total(&self) -> SymMatrix {
        &self.q1 + &self.q2
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { q1: self.q1.scale(s), q2: self.q2.scale(s) }
    }
}

/// Rate pair for two-user results; single-user results use `r1` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub r1: f64,
    pub r2: f64,
}

impl RatePoint {
    pub fn clamped(self) -> Self {
        Self { r1: self.r1.max(0.0), r2: self.r2.max(0.0) }
    }
}

/// Encoding order of dirty-paper coding: which user is encoded first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DpcOrder {
    First,
    Second,
}

/// `ln|I + A X Aᵀ|`. Falls back to clipped eigenvalues if rounding made
/// `X` marginally indefinite.
pub fn log_det_i_plus(a: &DMatrix<f64>, x: &SymMatrix) -> f64 {
    let k = x.congruence(a).shift(1.0);
    if let Some(l) = cholesky(&k) {
        return 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    match eig_sym(&k) {
        Ok(e) => e.values.iter().map(|l| l.max(f64::MIN_POSITIVE).ln()).sum(),
        Err(_) => f64::NAN,
    }
}

/// `Aᵀ (I + A X Aᵀ)⁻¹ A`, the gradient of `ln|I + A X Aᵀ|` with respect to `X`.
pub fn log_det_gradient(a: &DMatrix<f64>, x: &SymMatrix) -> SymMatrix {
    let k = x.congruence(a).shift(1.0);
    let kinv = inverse_pd(&k).unwrap_or_else(|_| {
        eig_sym(&k)
            .map(|e| e.reconstruct_with(|l| 1.0 / l.max(f64::MIN_POSITIVE)))
            .unwrap_or_else(|_| SymMatrix::zeros(k.dim()))
    });
    kinv.congruence(&a.transpose())
}

/// `½ln|I+HQ₁Hᵀ| − ½ln|I+GQ₁Gᵀ|`: secrecy rate of Gaussian signalling with a
/// deterministic mean (the mean does not enter the rate).
pub fn rate_mean(ch: &WiretapChannel, q1: &SymMatrix) -> f64 {
    0.5 * (log_det_i_plus(ch.h(), q1) - log_det_i_plus(ch.g(), q1))
}

/// Secrecy rate of Gaussian signalling with Gaussian artificial noise `Q₂`.
pub fn rate_an(ch: &WiretapChannel, pair: &CovariancePair) -> f64 {
    let s = pair.total();
    0.5 * (log_det_i_plus(ch.h(), &s) - log_det_i_plus(ch.h(), &pair.q2))
        - 0.5 * (log_det_i_plus(ch.g(), &s) - log_det_i_plus(ch.g(), &pair.q2))
}

/// Total received power `tr(G(Q₁+Q₂)Gᵀ) + N`, noise included.
pub fn received_power(ch: &WiretapChannel, pair: &CovariancePair, rx: Receiver) -> f64 {
    ch.gram(rx).inner(&pair.total()) + ch.noise_power(rx)
}

pub fn grad_rate_mean(ch: &WiretapChannel, q1: &SymMatrix) -> SymMatrix {
    (&log_det_gradient(ch.h(), q1) - &log_det_gradient(ch.g(), q1)).scale(0.5)
}

/// Gradients of [`rate_an`] with respect to `(Q₁, Q₂)`.
pub fn grad_rate_an(ch: &WiretapChannel, pair: &CovariancePair) -> (SymMatrix, SymMatrix) {
    let s = pair.total();
    let hs = log_det_gradient(ch.h(), &s);
    let gs = log_det_gradient(ch.g(), &s);
    let hq = log_det_gradient(ch.h(), &pair.q2);
    let gq = log_det_gradient(ch.g(), &pair.q2);
    let d1 = (&hs - &gs).scale(0.5);
    let d2 = (&(&hs - &hq) - &(&gs - &gq)).scale(0.5);
    (d1, d2)
}

/// Dirty-paper coding rates of the broadcast channel (no secrecy). Receiver 1
/// observes `H`, receiver 2 observes `G`.
pub fn dpc_rates(ch: &WiretapChannel, pair: &CovariancePair, order: DpcOrder) -> RatePoint {
    let s = pair.total();
    match order {
        DpcOrder::First => RatePoint {
            r1: 0.5 * log_det_i_plus(ch.h(), &pair.q1),
            r2: 0.5 * (log_det_i_plus(ch.g(), &s) - log_det_i_plus(ch.g(), &pair.q1)),
        },
        DpcOrder::Second => RatePoint {
            r1: 0.5 * (log_det_i_plus(ch.h(), &s) - log_det_i_plus(ch.h(), &pair.q2)),
            r2: 0.5 * log_det_i_plus(ch.g(), &pair.q2),
        },
    }
}

/// Gradients of `α₁R₁ + α₂R₂` for [`dpc_rates`].
pub fn grad_dpc_weighted(
    ch: &WiretapChannel,
    pair: &CovariancePair,
    order: DpcOrder,
    alpha1: f64,
    alpha2: f64,
) -> (SymMatrix, SymMatrix) {
    let s = pair.total();
    match order {
        DpcOrder::First => {
            let h1 = log_det_gradient(ch.h(), &pair.q1);
            let gs = log_det_gradient(ch.g(), &s);
            let g1 = log_det_gradient(ch.g(), &pair.q1);
            let d1 = &h1.scale(0.5 * alpha1) + &(&gs - &g1).scale(0.5 * alpha2);
            (d1, gs.scale(0.5 * alpha2))
        }
        DpcOrder::Second => {
            let hs = log_det_gradient(ch.h(), &s);
            let h2 = log_det_gradient(ch.h(), &pair.q2);
            let g2 = log_det_gradient(ch.g(), &pair.q2);
            let d2 = &(&hs - &h2).scale(0.5 * alpha1) + &g2.scale(0.5 * alpha2);
            (hs.scale(0.5 * alpha1), d2)
        }
    }
}

/// Secure dirty-paper coding rates of the broadcast channel with
/// confidential messages: each message is secret from the other receiver.
pub fn bccm_rates(ch: &WiretapChannel, pair: &CovariancePair) -> RatePoint {
    let s = pair.total();
    let r1 = rate_mean(ch, &pair.q1);
    let r2 = 0.5 * (log_det_i_plus(ch.g(), &s) - log_det_i_plus(ch.g(), &pair.q1))
        - 0.5 * (log_det_i_plus(ch.h(), &s) - log_det_i_plus(ch.h(), &pair.q1));
    RatePoint { r1, r2 }
}

/// Gradients of the second user's confidential rate of [`bccm_rates`].
pub fn grad_bccm_r2(ch: &WiretapChannel, pair: &CovariancePair) -> (SymMatrix, SymMatrix) {
    let s = pair.total();
    let gs = log_det_gradient(ch.g(), &s);
    let g1 = log_det_gradient(ch.g(), &pair.q1);
    let hs = log_det_gradient(ch.h(), &s);
    let h1 = log_det_gradient(ch.h(), &pair.q1);
    let common = (&gs - &hs).scale(0.5);
    let d1 = &common + &(&h1 - &g1).scale(0.5);
    (d1, common)
}

/// Residual of the decomposition of the second user's confidential rate at
/// `(Q₁, S₂ − Q₁)` into the first user's secrecy rate plus
/// `½ln(|I+GS₂Gᵀ|/|I+HS₂Hᵀ|)`.
pub fn bccm_decomposition_residual(ch: &WiretapChannel, q1: &SymMatrix, s2: &SymMatrix) -> f64 {
    let pair = CovariancePair { q1: q1.clone(), q2: s2 - q1 };
    let r2 = bccm_rates(ch, &pair).r2;
    let rhs = rate_mean(ch, q1) + 0.5 * (log_det_i_plus(ch.g(), s2) - log_det_i_plus(ch.h(), s2));
    (r2 - rhs).abs()
}
