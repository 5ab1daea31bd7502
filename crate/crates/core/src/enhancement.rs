//! Numerical certificates for the converse: enhanced noise covariances built
//! from the solver's dual multipliers, and residuals of every enhancement
//! and rate-preservation identity at a solved optimum.
//!
//! Only aligned channels (square, invertible `H` and `G`) are supported; the
//! aligned model has identity channels and noise `N₁ = (HᵀH)⁻¹`,
//! `N₂ = (GᵀG)⁻¹`. Ratio identities are compared as differences of log-dets.

use std::fmt;

use crate::channel::{AlignedChannel, EnergyMode, PowerSpec, Receiver};
use crate::error::{Error, Result};
use crate::linalg::{eig_sym, inverse_pd, SymMatrix};
use crate::objectives::DpcOrder;
use crate::regions::DpcSolution;
use crate::solver::{Multipliers, Scheme, SecrecySolution};

/// Base tolerance of every check; each check scales it by the magnitude of
/// the quantities it compares.
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &'static str, residual: f64, scale: f64) -> Self {
        let tolerance = TOLERANCE * (1.0 + scale.abs());
        Self { name, residual, tolerance, pass: residual <= tolerance }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{:<24} residual={:.3e} tol={:.3e} {verdict}", self.name, self.residual, self.tolerance)
    }
}

#[derive(Debug, Clone)]
pub struct EnhancementReport {
    /// Enhanced noise covariance; for the broadcast channel, receiver 1's.
    pub n_tilde: Option<SymMatrix>,
    /// Receiver 2's enhanced noise covariance (broadcast channel only).
    pub n_tilde_2: Option<SymMatrix>,
    pub checks: Vec<Check>,
    /// False when the solution carries no multipliers; `checks` is then empty.
    pub verifiable: bool,
}

impl EnhancementReport {
    fn unverifiable() -> Self {
        Self { n_tilde: None, n_tilde_2: None, checks: vec![], verifiable: false }
    }

    pub fn all_pass(&self) -> bool {
        self.verifiable && self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

impl fmt::Display for EnhancementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.verifiable {
            return writeln!(f, "unverifiable: no dual multipliers");
        }
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

fn inv(a: &SymMatrix) -> Result<SymMatrix> {
    inverse_pd(a)
}

/// `ln|A|` from eigenvalues clipped at the smallest positive double, so a
/// slightly indefinite argument yields a large but finite residual.
fn logdet(a: &SymMatrix) -> Result<f64> {
    Ok(eig_sym(a)?.values.iter().map(|l| l.max(f64::MIN_POSITIVE).ln()).sum())
}

fn product_norm(a: &SymMatrix, b: &SymMatrix) -> f64 {
    (a.as_matrix() * b.as_matrix()).norm()
}

/// How far `a ⪯ b` is violated: `max(0, −λmin(b − a))`.
fn order_gap(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    Ok((-eig_sym(&(b - a))?.min()).max(0.0))
}

/// `ln|X + N| − ln|N|`.
fn log_ratio(x: &SymMatrix, n: &SymMatrix) -> Result<f64> {
    Ok(logdet(&(x + n))? - logdet(n)?)
}

fn dims_match(aligned: &AlignedChannel, mats: &[&SymMatrix]) -> Result<()> {
    let n = aligned.n1.dim();
    if mats.iter().any(|m| m.dim() != n) {
        return Err(Error::DimensionMismatch(format!("aligned channel has dimension {n}")));
    }
    Ok(())
}

/// Enhanced noise `Ñ = (N₁⁻¹ + M₁)⁻¹`. It equals `[(Q₁+N₁)⁻¹ + M₁]⁻¹ − Q₁`
/// whenever `Q₁M₁ = 0`.
pub fn build_enhanced_mean(q1_star: &SymMatrix, m1: &SymMatrix, aligned: &AlignedChannel) -> Result<SymMatrix> {
    dims_match(aligned, &[q1_star, m1])?;
    let n1_inv = inv(&aligned.n1)?;
    inv(&(&n1_inv + m1))
}

/// `[(Q + N)⁻¹ + M]⁻¹ − Q`.
fn enhance_at(q: &SymMatrix, n: &SymMatrix, m: &SymMatrix) -> Result<SymMatrix> {
    Ok(&inv(&(&inv(&(q + n))? + m))? - q)
}

fn enhancement_order_checks(n_tilde: &SymMatrix, aligned: &AlignedChannel) -> Result<Vec<Check>> {
    let zero = SymMatrix::zeros(n_tilde.dim());
    Ok(vec![
        Check::new("ntilde_psd", order_gap(&zero, n_tilde)?, n_tilde.frobenius_norm()),
        Check::new("ntilde_le_n1", order_gap(n_tilde, &aligned.n1)?, aligned.n1.frobenius_norm()),
        Check::new("ntilde_le_n2", order_gap(n_tilde, &aligned.n2)?, aligned.n2.frobenius_norm()),
    ])
}

fn multipliers(sol: &SecrecySolution) -> Option<&Multipliers> {
    sol.multipliers.as_ref()
}

/// Certificates for the Gaussian-with-mean scheme. `s2` defaults to
/// `Q₁* + Q₂*`.
pub fn verify_mean_scheme(
    sol: &SecrecySolution,
    aligned: &AlignedChannel,
    s2: Option<&SymMatrix>,
) -> Result<EnhancementReport> {
    if sol.scheme != Scheme::Mean {
        return Err(Error::InvalidInput(format!("mean-scheme verification given a {} solution", sol.scheme)));
    }
    let Some(mult) = multipliers(sol) else {
        return Ok(EnhancementReport::unverifiable());
    };
    verify_mean_parts(&sol.pair.q1, &mult.m1, &mult.m2, sol.raw_rate, aligned, s2.cloned().unwrap_or(sol.pair.total()))
}

fn verify_mean_parts(
    q1: &SymMatrix,
    m1: &SymMatrix,
    m2: &SymMatrix,
    rate: f64,
    aligned: &AlignedChannel,
    s2: SymMatrix,
) -> Result<EnhancementReport> {
    dims_match(aligned, &[q1, m1, m2, &s2])?;
    let (n1, n2) = (&aligned.n1, &aligned.n2);
    let n_tilde = enhance_at(q1, n1, m1)?;
    let mut checks = enhancement_order_checks(&n_tilde, aligned)?;

    let lhs = &inv(&(q1 + n2))? + m2;
    let rhs = &inv(&(q1 + n1))? + m1;
    checks.push(Check::new("enhanced_equality", (&lhs - &rhs).frobenius_norm(), rhs.frobenius_norm()));
    checks.push(Check::new("complementarity_q1", product_norm(q1, m1), q1.frobenius_norm() * m1.frobenius_norm()));

    let enhanced = log_ratio(q1, &n_tilde)?;
    let original = log_ratio(q1, n1)?;
    checks.push(Check::new("rate_preservation", (enhanced - original).abs(), original));

    let gap = &s2 - q1;
    checks.push(Check::new("full_use_product", product_norm(&gap, m2), gap.frobenius_norm() * m2.frobenius_norm()));

    let left = logdet(&(&s2 + &n_tilde))? - logdet(&(&s2 + n2))?;
    let right = logdet(&(q1 + &n_tilde))? - logdet(&(q1 + n2))?;
    checks.push(Check::new("legitimate_preservation", (left - right).abs(), right));

    let capacity = 0.5 * (log_ratio(&s2, &n_tilde)? - log_ratio(&s2, n2)?);
    checks.push(Check::new("enhanced_capacity", (capacity - rate).abs(), rate));

    Ok(EnhancementReport { n_tilde: Some(n_tilde), n_tilde_2: None, checks, verifiable: true })
}

/// Certificates for the artificial-noise scheme, with `Q₂*` in the role of
/// `Q₁*`. `s2` defaults to `Q₁* + Q₂*`.
pub fn verify_an_scheme(
    sol: &SecrecySolution,
    aligned: &AlignedChannel,
    s2: Option<&SymMatrix>,
) -> Result<EnhancementReport> {
    if sol.scheme != Scheme::An {
        return Err(Error::InvalidInput(format!("artificial-noise verification given a {} solution", sol.scheme)));
    }
    let Some(mult) = multipliers(sol) else {
        return Ok(EnhancementReport::unverifiable());
    };
    let (q1, q2) = (&sol.pair.q1, &sol.pair.q2);
    let (m1, m2) = (&mult.m1, &mult.m2);
    let s2 = s2.cloned().unwrap_or(sol.pair.total());
    dims_match(aligned, &[q1, q2, m1, m2, &s2])?;
    let (n1, n2) = (&aligned.n1, &aligned.n2);
    let n_tilde = enhance_at(q2, n1, m1)?;
    let mut checks = enhancement_order_checks(&n_tilde, aligned)?;

    let lhs = &inv(&(q2 + n1))? + m1;
    let rhs = &inv(&(q2 + n2))? + m2;
    checks.push(Check::new("enhanced_equality", (&lhs - &rhs).frobenius_norm(), rhs.frobenius_norm()));
    checks.push(Check::new("complementarity_q2", product_norm(q2, m2), q2.frobenius_norm() * m2.frobenius_norm()));

    let total = sol.pair.total();
    checks.push(Check::new("full_use", (&s2 - &total).frobenius_norm(), total.frobenius_norm()));
    let gap = &s2 - q2;
    checks.push(Check::new("full_use_product", product_norm(&gap, m1), gap.frobenius_norm() * m1.frobenius_norm()));

    let enhanced = log_ratio(q2, &n_tilde)?;
    let original = log_ratio(q2, n2)?;
    checks.push(Check::new("eavesdropper_preservation", (enhanced - original).abs(), original));

    let left = logdet(&(&s2 + &n_tilde))? - logdet(&(q2 + &n_tilde))?;
    let right = logdet(&(&s2 + n1))? - logdet(&(q2 + n1))?;
    checks.push(Check::new("legitimate_preservation", (left - right).abs(), right));

    let capacity = 0.5 * (log_ratio(&s2, &n_tilde)? - log_ratio(&s2, n2)?);
    checks.push(Check::new("enhanced_capacity", (capacity - sol.raw_rate).abs(), sol.raw_rate));

    Ok(EnhancementReport { n_tilde: Some(n_tilde), n_tilde_2: None, checks, verifiable: true })
}

/// Certificates for a dirty-paper coding point of the broadcast channel:
/// enhanced noises for both receivers, degradedness `Ñ₁ ⪯ Ñ₂`, and
/// preservation of both rates. The user encoded without interference must
/// carry the smaller weight. `s2` defaults to `Q₁* + Q₂*`.
pub fn verify_bc_dpc(sol: &DpcSolution, aligned: &AlignedChannel, s2: Option<&SymMatrix>) -> Result<EnhancementReport> {
    let Some((z1, z2)) = sol.multipliers.as_ref() else {
        return Ok(EnhancementReport::unverifiable());
    };
    // Normalize to the first encoding order by relabelling the receivers.
    let (aligned, a1, a2, q1, q2, m1, m2) = match sol.order {
        DpcOrder::First => (aligned.clone(), sol.alpha1, sol.alpha2, &sol.pair.q1, &sol.pair.q2, z1, z2),
        DpcOrder::Second => (
            AlignedChannel { n1: aligned.n2.clone(), n2: aligned.n1.clone() },
            sol.alpha2,
            sol.alpha1,
            &sol.pair.q2,
            &sol.pair.q1,
            z2,
            z1,
        ),
    };
    if a1.is_nan() || a1 <= 0.0 || a1 > a2 {
        return Err(Error::InvalidInput(format!(
            "broadcast verification needs 0 < weight of the interference-free user ({a1}) <= other weight ({a2})"
        )));
    }
    let s2 = s2.cloned().unwrap_or(sol.pair.total());
    dims_match(&aligned, &[q1, q2, m1, m2, &s2])?;
    let (n1, n2) = (&aligned.n1, &aligned.n2);

    let k1 = &inv(&(q1 + n1))? + &m1.scale(2.0 / a1);
    let k2 = &inv(&(q1 + n2))? + &m2.scale(2.0 / a2);
    let nt1 = &inv(&k1)? - q1;
    let nt2 = &inv(&k2)? - q1;

    let mut checks = Vec::new();
    let kkt = &(&inv(&(q1 + n1))?.scale(0.5 * a1) + m1) - &(&inv(&(q1 + n2))?.scale(0.5 * a2) + m2);
    checks.push(Check::new("weighted_equality", kkt.frobenius_norm(), k1.frobenius_norm()));
    checks.push(Check::new("complementarity_q1", product_norm(q1, m1), q1.frobenius_norm() * m1.frobenius_norm()));
    checks.push(Check::new("complementarity_q2", product_norm(q2, m2), q2.frobenius_norm() * m2.frobenius_norm()));
    let zero = SymMatrix::zeros(nt1.dim());
    checks.push(Check::new("ntilde1_psd", order_gap(&zero, &nt1)?, nt1.frobenius_norm()));
    checks.push(Check::new("ntilde1_le_n1", order_gap(&nt1, n1)?, n1.frobenius_norm()));
    checks.push(Check::new("ntilde2_le_n2", order_gap(&nt2, n2)?, n2.frobenius_norm()));
    let scaled = &inv(&(q1 + &nt2))?.scale(a2 / a1) - &inv(&(q1 + &nt1))?;
    checks.push(Check::new("degradedness_scaling", scaled.frobenius_norm(), k1.frobenius_norm()));
    checks.push(Check::new("degraded_order", order_gap(&nt1, &nt2)?, nt2.frobenius_norm()));

    let r1_enh = log_ratio(q1, &nt1)?;
    let r1 = log_ratio(q1, n1)?;
    checks.push(Check::new("rate1_preservation", (r1_enh - r1).abs(), r1));
    let r2_enh = logdet(&(&s2 + &nt2))? - logdet(&(q1 + &nt2))?;
    let r2 = logdet(&(&s2 + n2))? - logdet(&(q1 + n2))?;
    checks.push(Check::new("rate2_preservation", (r2_enh - r2).abs(), r2));

    let (n_tilde, n_tilde_2) = match sol.order {
        DpcOrder::First => (nt1, nt2),
        DpcOrder::Second => (nt2, nt1),
    };
    Ok(EnhancementReport { n_tilde: Some(n_tilde), n_tilde_2: Some(n_tilde_2), checks, verifiable: true })
}

/// Residuals of the KKT system of the power-constrained wiretap program,
/// written in aligned coordinates with the `log` (not `½log`) Lagrangian:
/// the budget and receiver multipliers enter as
/// `2C = 2(λ_P I − Σ ±λ_rx·N_rx⁻¹)`, the role the correlation multiplier
/// plays when `S₂ = Q₁* + Q₂*`. Stationarity, cone complementarity and
/// scalar complementarity, each as a Frobenius norm.
pub fn kkt_residuals(sol: &SecrecySolution, aligned: &AlignedChannel, spec: &PowerSpec) -> Result<Vec<Check>> {
    let Some(mult) = multipliers(sol) else {
        return Err(Error::MissingDuals);
    };
    let (q1, q2) = (&sol.pair.q1, &sol.pair.q2);
    let (m1, m2) = (&mult.m1, &mult.m2);
    dims_match(aligned, &[q1, q2, m1, m2])?;
    let (n1, n2) = (&aligned.n1, &aligned.n2);
    let n = q1.dim();
    let s = sol.pair.total();
    let gram = |rx: Receiver| inv(if rx == Receiver::Bob { n1 } else { n2 });

    let mut c = SymMatrix::identity(n).scale(mult.trace);
    let mut scalar_slack = vec![("complementarity_budget", mult.trace * (spec.p - s.trace()), spec.p)];
    for (rx, cons) in spec.active_constraints() {
        let lambda = match rx {
            Receiver::Eve => mult.eve,
            Receiver::Bob => mult.bob,
        }
        .unwrap_or(0.0);
        let g = gram(rx)?;
        let sign = match cons.mode {
            EnergyMode::Min => -1.0,
            EnergyMode::Max => 1.0,
        };
        c = &c + &g.scale(sign * lambda);
        let name = match rx {
            Receiver::Eve => "complementarity_eve",
            Receiver::Bob => "complementarity_bob",
        };
        scalar_slack.push((name, lambda * (g.inner(&s) - cons.adjusted), cons.adjusted));
    }
    let c2 = c.scale(2.0);

    let inv_s1 = inv(&(&s + n1))?;
    let inv_s2 = inv(&(&s + n2))?;
    // 2∇f in aligned coordinates.
    let (grad1, grad2) = match sol.scheme {
        Scheme::Mean | Scheme::Plain => (&inv(&(q1 + n1))? - &inv(&(q1 + n2))?, SymMatrix::zeros(n)),
        Scheme::An => {
            let g1 = &inv_s1 - &inv_s2;
            let g2 = &g1 - &(&inv(&(q2 + n1))? - &inv(&(q2 + n2))?);
            (g1, g2)
        }
    };
    let mut out = Vec::new();
    let r1 = &(&grad1 + m1) - &c2;
    out.push(Check::new("stationarity_q1", r1.frobenius_norm(), grad1.frobenius_norm() + c2.frobenius_norm()));
    out.push(Check::new("complementarity_q1", product_norm(q1, m1), q1.frobenius_norm() * m1.frobenius_norm()));
    if sol.scheme != Scheme::Plain {
        let r2 = &(&grad2 + m2) - &c2;
        out.push(Check::new("stationarity_q2", r2.frobenius_norm(), grad2.frobenius_norm() + c2.frobenius_norm()));
        out.push(Check::new("complementarity_q2", product_norm(q2, m2), q2.frobenius_norm() * m2.frobenius_norm()));
    }
    for (name, v, scale) in scalar_slack {
        out.push(Check::new(name, v.abs(), scale));
    }
    Ok(out)
}
