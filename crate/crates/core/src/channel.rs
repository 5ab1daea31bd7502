//! Channel instances, receiver-side power constraints, the aligned model and
//! rank-one mean extraction.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, inverse_pd, SymMatrix};

/// Largest channel condition number for which the aligned model is built.
pub const ALIGN_CONDITION_CAP: f64 = 1e8;

/// Relative eigenvalue gap below which the top eigenvector of `GᵀG` is
/// considered non-unique.
pub const UNIQUENESS_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Receiver {
    /// Eavesdropper, channel `G`.
    Eve,
    /// Legitimate receiver, channel `H`.
    Bob,
}

impl fmt::Display for Receiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Receiver::Eve => "eve",
            Receiver::Bob => "bob",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnergyMode {
    /// Received power must be at least the level (energy delivery).
    Min,
    /// Received power must not exceed the level (interference cap).
    Max,
}

impl fmt::Display for EnergyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnergyMode::Min => "min",
            EnergyMode::Max => "max",
        })
    }
}

/// Gaussian MIMO wiretap channel `y = Hx + w₁`, `z = Gx + w₂` with unit noise.
#[derive(Debug, Clone, PartialEq)]
pub struct WiretapChannel {
    h: DMatrix<f64>,
    g: DMatrix<f64>,
}

impl WiretapChannel {
    pub fn new(h: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        if h.ncols() != g.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "H has {} transmit antennas but G has {}",
                h.ncols(),
                g.ncols()
            )));
        }
        if h.nrows() == 0 || g.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::InvalidInput("antenna counts must be positive".into()));
        }
        if !h.iter().chain(g.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("channel entries must be finite".into()));
        }
        Ok(Self { h, g })
    }

    /// Single-antenna-receiver channel from row vectors `h` and `g`.
    pub fn miso(h: &[f64], g: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, h.len(), h), DMatrix::from_row_slice(1, g.len(), g))
    }

    pub fn siso(h: f64, g: f64) -> Self {
        Self::miso(&[h], &[g]).expect("scalar channel is always valid")
    }

    /// Channel with i.i.d. standard normal entries, reproducible from `seed`.
    pub fn random(n_t: usize, n_r: usize, n_e: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize| DMatrix::from_fn(rows, n_t, |_, _| StandardNormal.sample(&mut rng));
        let h = draw(n_r);
        let g = draw(n_e);
        Self::new(h, g)
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn n_t(&self) -> usize {
        self.h.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_e(&self) -> usize {
        self.g.nrows()
    }

    pub fn is_miso(&self) -> bool {
        self.n_r() == 1 && self.n_e() == 1
    }

    pub fn matrix(&self, rx: Receiver) -> &DMatrix<f64> {
        match rx {
            Receiver::Eve => &self.g,
            Receiver::Bob => &self.h,
        }
    }

    /// Receiver noise power `tr(I)`, i.e. its antenna count.
    pub fn noise_power(&self, rx: Receiver) -> f64 {
        self.matrix(rx).nrows() as f64
    }

    /// `GᵀG` or `HᵀH`: the energy functional `tr(G S Gᵀ) = tr(GᵀG S)`.
    pub fn gram(&self, rx: Receiver) -> SymMatrix {
        SymMatrix::gram(self.matrix(rx))
    }

    /// Same channel with the roles of the two receivers exchanged.
    pub fn swapped(&self) -> Self {
        Self { h: self.g.clone(), g: self.h.clone() }
    }
}

/// One receiver-side power constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstraint {
    pub mode: EnergyMode,
    /// Level `E` on total received power, noise included.
    pub level: f64,
    /// Noise-adjusted level `Ẽ = E − N` that applies to `tr(G S Gᵀ)`.
    pub adjusted: f64,
}

impl EnergyConstraint {
    /// A min-mode constraint with `Ẽ ≤ 0` is met by receiver noise alone.
    pub fn is_vacuous(&self) -> bool {
        self.mode == EnergyMode::Min && self.adjusted <= 0.0
    }
}

/// Transmit budget plus optional receiver-side constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpec {
    pub p: f64,
    pub eve: Option<EnergyConstraint>,
    pub bob: Option<EnergyConstraint>,
    noise_eve: f64,
    noise_bob: f64,
}

impl PowerSpec {
    pub fn new(ch: &WiretapChannel, p: f64) -> Result<Self> {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidInput(format!("transmit power must be finite and >= 0, got {p}")));
        }
        Ok(Self {
            p,
            eve: None,
            bob: None,
            noise_eve: ch.noise_power(Receiver::Eve),
            noise_bob: ch.noise_power(Receiver::Bob),
        })
    }

    pub fn with(mut self, rx: Receiver, mode: EnergyMode, level: f64) -> Result<Self> {
        if !level.is_finite() || level < 0.0 {
            return Err(Error::InvalidInput(format!("energy level must be finite and >= 0, got {level}")));
        }
        let noise = match rx {
            Receiver::Eve => self.noise_eve,
            Receiver::Bob => self.noise_bob,
        };
        let c = Some(EnergyConstraint { mode, level, adjusted: level - noise });
        match rx {
            Receiver::Eve => self.eve = c,
            Receiver::Bob => self.bob = c,
        }
        Ok(self)
    }

    pub fn without(mut self, rx: Receiver) -> Self {
        match rx {
            Receiver::Eve => self.eve = None,
            Receiver::Bob => self.bob = None,
        }
        self
    }

    pub fn constraint(&self, rx: Receiver) -> Option<&EnergyConstraint> {
        match rx {
            Receiver::Eve => self.eve.as_ref(),
            Receiver::Bob => self.bob.as_ref(),
        }
    }

    /// Constraints that actually restrict the feasible set, as `(receiver, constraint)`.
    pub fn active_constraints(&self) -> impl Iterator<Item = (Receiver, &EnergyConstraint)> {
        [(Receiver::Eve, self.eve.as_ref()), (Receiver::Bob, self.bob.as_ref())]
            .into_iter()
            .filter_map(|(rx, c)| c.filter(|c| !c.is_vacuous()).map(|c| (rx, c)))
    }

    pub fn has_min_constraint(&self) -> bool {
        self.active_constraints().any(|(_, c)| c.mode == EnergyMode::Min)
    }

    pub fn has_max_constraint(&self) -> bool {
        self.active_constraints().any(|(_, c)| c.mode == EnergyMode::Max)
    }

    /// Problem scale `1 + P` used for relative tolerances.
    pub fn scale(&self) -> f64 {
        1.0 + self.p
    }
}

/// Aligned model: identity channels with colored noise `N = H⁻¹H⁻ᵀ`.
#[derive(Debug, Clone)]
pub struct AlignedChannel {
    pub n1: SymMatrix,
    pub n2: SymMatrix,
}

fn align_one(m: &DMatrix<f64>, name: &str) -> Result<SymMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::AlignmentUnavailable(format!("{name} is {}x{}, not square", m.nrows(), m.ncols())));
    }
    let gram = SymMatrix::gram(m);
    let eig = eig_sym(&gram)?;
    let (hi, lo) = (eig.max(), eig.min());
    let cond = if lo > 0.0 { (hi / lo).sqrt() } else { f64::INFINITY };
    if cond.is_nan() || cond > ALIGN_CONDITION_CAP {
        return Err(Error::AlignmentUnavailable(format!(
            "{name} condition number {cond:.3e} exceeds {ALIGN_CONDITION_CAP:.0e}"
        )));
    }
    // H⁻¹H⁻ᵀ = (HᵀH)⁻¹
    inverse_pd(&gram).map_err(|_| Error::AlignmentUnavailable(format!("{name} is singular")))
}

pub fn align(ch: &WiretapChannel) -> Result<AlignedChannel> {
    if ch.n_r() != ch.n_t() || ch.n_e() != ch.n_t() {
        return Err(Error::AlignmentUnavailable(format!(
            "antenna counts {}-{}-{} are not all equal",
            ch.n_t(),
            ch.n_r(),
            ch.n_e()
        )));
    }
    Ok(AlignedChannel { n1: align_one(ch.h(), "H")?, n2: align_one(ch.g(), "G")? })
}

/// Largest `tr(G S Gᵀ)` over `S ⪰ 0`, `tr(S) ≤ p`: beamforming along the top
/// eigenvector of `GᵀG`.
pub fn max_deliverable_energy(ch: &WiretapChannel, p: f64, target: Receiver) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let lam = eig_sym(&ch.gram(target)).map(|e| e.max()).unwrap_or(f64::NAN);
    p * lam.max(0.0)
}

/// Support function of the achievable received-energy set in direction
/// `(w_eve, w_bob)`: `max tr((w_e GᵀG + w_b HᵀH) S)` over the transmit budget.
fn weighted_energy_support(ch: &WiretapChannel, p: f64, w_eve: f64, w_bob: f64) -> f64 {
    let m = &ch.gram(Receiver::Eve).scale(w_eve) + &ch.gram(Receiver::Bob).scale(w_bob);
    let lam = eig_sym(&m).map(|e| e.max()).unwrap_or(f64::NAN);
    p * lam.max(0.0)
}

/// Whether the receiver-side constraints can be met within the transmit budget.
///
/// The set of achievable `(tr GSGᵀ, tr HSHᵀ)` pairs is convex, so the
/// constraint box is reachable iff every separating direction with the
/// matching sign pattern fails. That margin is convex in the direction
/// parameter; it is scanned on a coarse grid and refined by golden section.
pub fn feasible(ch: &WiretapChannel, spec: &PowerSpec) -> bool {
    feasibility_margin(ch, spec) >= -1e-9 * (1.0 + spec.p * max_gram_eig(ch))
}

fn max_gram_eig(ch: &WiretapChannel) -> f64 {
    [Receiver::Eve, Receiver::Bob]
        .iter()
        .map(|&rx| eig_sym(&ch.gram(rx)).map(|e| e.max()).unwrap_or(0.0))
        .fold(0.0, f64::max)
}

/// Minimum over separating directions of (support − constraint level); a
/// negative value certifies infeasibility.
pub fn feasibility_margin(ch: &WiretapChannel, spec: &PowerSpec) -> f64 {
    let sign = |c: Option<&EnergyConstraint>| match c {
        Some(c) if !c.is_vacuous() => match c.mode {
            EnergyMode::Min => Some((1.0, c.adjusted)),
            EnergyMode::Max => Some((-1.0, c.adjusted)),
        },
        _ => None,
    };
    let eve = sign(spec.eve.as_ref());
    let bob = sign(spec.bob.as_ref());
    let margin_at = |alpha: f64| -> f64 {
        let (mut we, mut wb, mut rhs) = (0.0, 0.0, 0.0);
        if let Some((s, lvl)) = eve {
            we = s * alpha;
            rhs += we * lvl;
        }
        if let Some((s, lvl)) = bob {
            wb = s * (1.0 - alpha);
            rhs += wb * lvl;
        }
        weighted_energy_support(ch, spec.p, we, wb) - rhs
    };
    match (eve, bob) {
        (None, None) => 0.0,
        (Some(_), None) => margin_at(1.0),
        (None, Some(_)) => margin_at(0.0),
        (Some(_), Some(_)) => {
            const GRID: usize = 33;
            let (mut best_i, mut best) = (0, f64::INFINITY);
            for i in 0..GRID {
                let v = margin_at(i as f64 / (GRID - 1) as f64);
                if v < best {
                    best = v;
                    best_i = i;
                }
            }
            let step = 1.0 / (GRID - 1) as f64;
            let lo = (best_i as f64 * step - step).max(0.0);
            let hi = (best_i as f64 * step + step).min(1.0);
            let (_, refined) = golden_section_min(margin_at, lo, hi, 1e-12);
            best.min(refined)
        }
    }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, width: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > width {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Rank-one mean beam `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanBeam {
    pub mu: DVector<f64>,
    /// False when the steering eigenvalue is tied, so the beam direction is
    /// one of several maximizers.
    pub unique: bool,
}

fn beam_along(m: &SymMatrix, p_mean: f64) -> Result<MeanBeam> {
    let eig = eig_sym(m)?;
    let mut dir = eig.top_vector();
    let pivot = dir.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if pivot < 0.0 {
        dir.neg_mut();
    }
    let unique = if eig.values.len() < 2 {
        true
    } else {
        let gap = eig.values[0] - eig.values[1];
        gap > UNIQUENESS_GAP * eig.values[0].abs().max(f64::MIN_POSITIVE)
    };
    Ok(MeanBeam { mu: dir * p_mean.max(0.0).sqrt(), unique })
}

/// Beamform `p_mean` along the top eigenvector of `GᵀG`, which maximizes the
/// energy delivered to the eavesdropper for the given mean power.
pub fn eve_steering_mean(ch: &WiretapChannel, p_mean: f64) -> Result<MeanBeam> {
    beam_along(&ch.gram(Receiver::Eve), p_mean)
}

/// Beam maximizing `w_eve·tr(GμμᵀGᵀ) + w_bob·tr(HμμᵀHᵀ)` for `‖μ‖² = p_mean`.
pub fn weighted_mean(ch: &WiretapChannel, p_mean: f64, w_eve: f64, w_bob: f64) -> Result<MeanBeam> {
    let m = &ch.gram(Receiver::Eve).scale(w_eve) + &ch.gram(Receiver::Bob).scale(w_bob);
    beam_along(&m, p_mean)
}
