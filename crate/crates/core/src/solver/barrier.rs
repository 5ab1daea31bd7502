//! Primal log-barrier method for concave log-det maximization over symmetric
//! PSD matrix variables and free scalars, with linear trace constraints.
//!
//! Matrix variables are vectorized on the basis `Bᵢᵢ = eᵢeᵢᵀ`,
//! `Bᵢⱼ = eᵢeⱼᵀ + eⱼeᵢᵀ (i < j)`, so the coordinate of `Bᵢⱼ` is `Xᵢⱼ`.

use nalgebra::{DMatrix, DVector};

use super::{SolverConfig, Status};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, eig_sym, inverse_pd, SymMatrix};

/// `Σ tr(Cᵥ Xᵥ) + Σ cⱼ yⱼ`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearForm {
    pub mats: Vec<(usize, SymMatrix)>,
    pub scalars: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mat(mut self, var: usize, c: SymMatrix) -> Self {
        self.mats.push((var, c));
        self
    }

    pub fn scalar(mut self, var: usize, c: f64) -> Self {
        self.scalars.push((var, c));
        self
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.mats.iter().map(|(v, c)| c.inner(&p.mats[*v])).sum::<f64>()
            + self.scalars.iter().map(|(j, c)| c * p.scalars[*j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub form: LinearForm,
    pub sense: Sense,
    pub rhs: f64,
}

/// `weight · ln det(base + A (Σ cᵥ Xᵥ) Aᵀ)` with `weight ≥ 0`; `base`
/// defaults to the identity. All referenced variables share one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDetTerm {
    pub weight: f64,
    pub a: DMatrix<f64>,
    pub coeffs: Vec<(usize, f64)>,
    pub base: Option<SymMatrix>,
}

/// Concave program: maximize `Σ log-det terms + linear + constant`.
#[derive(Debug, Clone, Default)]
pub struct ConvexProgram {
    pub dims: Vec<usize>,
    pub n_scalars: usize,
    pub terms: Vec<LogDetTerm>,
    pub linear: LinearForm,
    pub constant: f64,
    pub constraints: Vec<LinearConstraint>,
    /// Problem scale used by the feasibility tolerance.
    pub scale: f64,
}

/// Values of all variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub mats: Vec<SymMatrix>,
    pub scalars: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    /// One multiplier per constraint, in declaration order. Inequality
    /// multipliers are non-negative; the Lagrangian is
    /// `f + Σ λ·(slack in the feasible direction) + Σ tr(Zᵥ Xᵥ) − Σ ν·(residual)`.
    pub constraints: Vec<f64>,
    /// Multipliers `Zᵥ ⪰ 0` of the cone constraints `Xᵥ ⪰ 0`.
    pub psd: Vec<SymMatrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// Frobenius norm of the Lagrangian gradient, relative to `1 + ‖∇f‖`.
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub status: Status,
    pub objective: f64,
    pub point: Point,
    pub duals: Duals,
    pub residuals: KktResiduals,
    /// Newton steps across phase 1 and the main solve.
    pub iterations: usize,
    /// Amount by which inequality bounds were loosened to obtain an interior
    /// point when the feasible set has no interior (0 if untouched).
    pub relaxation: f64,
}

impl ConvexProgram {
    pub fn new(dims: Vec<usize>, n_scalars: usize) -> Self {
        Self { dims, n_scalars, scale: 1.0, ..Default::default() }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn add_logdet(&mut self, weight: f64, a: DMatrix<f64>, coeffs: Vec<(usize, f64)>) {
        self.terms.push(LogDetTerm { weight, a, coeffs, base: None });
    }

    pub fn add_logdet_with_base(&mut self, weight: f64, a: DMatrix<f64>, coeffs: Vec<(usize, f64)>, base: SymMatrix) {
        self.terms.push(LogDetTerm { weight, a, coeffs, base: Some(base) });
    }

    pub fn constrain(&mut self, form: LinearForm, sense: Sense, rhs: f64) {
        self.constraints.push(LinearConstraint { form, sense, rhs });
    }

    /// Objective value at `p`, or `None` where a log-det argument is not PD.
    pub fn objective(&self, p: &Point) -> Option<f64> {
        let mut f = self.constant + self.linear.eval(p);
        for t in &self.terms {
            let k = term_matrix(t, &p.mats);
            f += t.weight * 2.0 * cholesky(&k)?.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        Some(f)
    }

    /// Objective gradient with respect to each matrix variable and scalar.
    pub fn gradient(&self, p: &Point) -> (Vec<SymMatrix>, Vec<f64>) {
        let mut gm: Vec<SymMatrix> = self.dims.iter().map(|&n| SymMatrix::zeros(n)).collect();
        let mut gs = vec![0.0; self.n_scalars];
        for (v, c) in &self.linear.mats {
            gm[*v] = &gm[*v] + c;
        }
        for (j, c) in &self.linear.scalars {
            gs[*j] += c;
        }
        for t in &self.terms {
            let m = term_m(t, &p.mats);
            for (v, c) in &t.coeffs {
                gm[*v] = &gm[*v] + &m.scale(t.weight * c);
            }
        }
        (gm, gs)
    }

    fn validate(&self) -> Result<()> {
        let nv = self.dims.len();
        if self.dims.contains(&0) {
            return Err(Error::InvalidInput("matrix variable of dimension 0".into()));
        }
        let check_form = |f: &LinearForm| -> Result<()> {
            for (v, c) in &f.mats {
                if *v >= nv || c.dim() != self.dims[*v] {
                    return Err(Error::DimensionMismatch(format!("coefficient for variable {v}")));
                }
            }
            if f.scalars.iter().any(|(j, _)| *j >= self.n_scalars) {
                return Err(Error::InvalidInput("scalar index out of range".into()));
            }
            Ok(())
        };
        check_form(&self.linear)?;
        for c in &self.constraints {
            check_form(&c.form)?;
        }
        for t in &self.terms {
            if t.weight.is_nan() || t.weight < 0.0 {
                return Err(Error::InvalidInput("log-det weight must be >= 0 for concavity".into()));
            }
            let mut dim = None;
            for (v, _) in &t.coeffs {
                if *v >= nv {
                    return Err(Error::InvalidInput(format!("log-det term references variable {v}")));
                }
                if dim.is_some_and(|d| d != self.dims[*v]) || t.a.ncols() != self.dims[*v] {
                    return Err(Error::DimensionMismatch("log-det term variables".into()));
                }
                dim = Some(self.dims[*v]);
            }
            if t.base.as_ref().is_some_and(|b| b.dim() != t.a.nrows()) {
                return Err(Error::DimensionMismatch("log-det base".into()));
            }
        }
        Ok(())
    }
}

fn term_matrix(t: &LogDetTerm, mats: &[SymMatrix]) -> SymMatrix {
    let n = t.a.ncols();
    let mut x = SymMatrix::zeros(n);
    for (v, c) in &t.coeffs {
        x = &x + &mats[*v].scale(*c);
    }
    let k = x.congruence(&t.a);
    match &t.base {
        Some(b) => &k + b,
        None => k.shift(1.0),
    }
}

/// `Aᵀ K⁻¹ A`; callers only reach this at points where `K` is PD.
fn term_m(t: &LogDetTerm, mats: &[SymMatrix]) -> SymMatrix {
    let k = term_matrix(t, mats);
    let kinv = inverse_pd(&k).unwrap_or_else(|_| SymMatrix::zeros(k.dim()));
    kinv.congruence(&t.a.transpose())
}

#[derive(Debug, Clone)]
struct Layout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    n_scalars: usize,
    len: usize,
}

fn basis_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push((i, j));
        }
    }
    out
}

impl Layout {
    fn new(dims: &[usize], n_scalars: usize) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut len = 0;
        for &n in dims {
            offsets.push(len);
            len += n * (n + 1) / 2;
        }
        Self { dims: dims.to_vec(), offsets, n_scalars, len: len + n_scalars }
    }

    fn scalar_index(&self, j: usize) -> usize {
        self.len - self.n_scalars + j
    }

    fn block(&self, v: usize) -> std::ops::Range<usize> {
        let n = self.dims[v];
        self.offsets[v]..self.offsets[v] + n * (n + 1) / 2
    }

    fn to_vec(&self, p: &Point) -> DVector<f64> {
        let mut x = DVector::zeros(self.len);
        for (v, m) in p.mats.iter().enumerate() {
            for (k, (i, j)) in basis_pairs(self.dims[v]).into_iter().enumerate() {
                x[self.offsets[v] + k] = m.get(i, j);
            }
        }
        for (j, s) in p.scalars.iter().enumerate() {
            x[self.scalar_index(j)] = *s;
        }
        x
    }

    fn mat(&self, x: &DVector<f64>, v: usize) -> SymMatrix {
        let n = self.dims[v];
        let mut m = DMatrix::zeros(n, n);
        for (k, (i, j)) in basis_pairs(n).into_iter().enumerate() {
            m[(i, j)] = x[self.offsets[v] + k];
            m[(j, i)] = x[self.offsets[v] + k];
        }
        SymMatrix::symmetrize(m)
    }

    fn to_point(&self, x: &DVector<f64>) -> Point {
        Point {
            mats: (0..self.dims.len()).map(|v| self.mat(x, v)).collect(),
            scalars: (0..self.n_scalars).map(|j| x[self.scalar_index(j)]).collect(),
        }
    }

    /// Adds `s · tr(G Bₐ)` to the block of variable `v`.
    fn add_grad(&self, out: &mut DVector<f64>, v: usize, g: &SymMatrix, s: f64) {
        for (k, (i, j)) in basis_pairs(self.dims[v]).into_iter().enumerate() {
            let f = if i == j { 1.0 } else { 2.0 };
            out[self.offsets[v] + k] += s * f * g.get(i, j);
        }
    }

    fn form_vec(&self, f: &LinearForm) -> DVector<f64> {
        let mut a = DVector::zeros(self.len);
        for (v, c) in &f.mats {
            self.add_grad(&mut a, *v, c, 1.0);
        }
        for (j, c) in &f.scalars {
            a[self.scalar_index(*j)] += c;
        }
        a
    }

    /// Inverse of [`Layout::add_grad`]: the symmetric matrix whose basis
    /// pairings give the block of `r`.
    fn grad_to_mat(&self, r: &DVector<f64>, v: usize) -> SymMatrix {
        let n = self.dims[v];
        let mut m = DMatrix::zeros(n, n);
        for (k, (i, j)) in basis_pairs(n).into_iter().enumerate() {
            let val = r[self.offsets[v] + k];
            if i == j {
                m[(i, i)] = val;
            } else {
                m[(i, j)] = val / 2.0;
                m[(j, i)] = val / 2.0;
            }
        }
        SymMatrix::symmetrize(m)
    }

    fn identity_vec(&self, v: usize) -> DVector<f64> {
        let mut e = DVector::zeros(self.len);
        for (k, (i, j)) in basis_pairs(self.dims[v]).into_iter().enumerate() {
            if i == j {
                e[self.offsets[v] + k] = 1.0;
            }
        }
        e
    }
}

/// `T[a][b] = tr(M Bₐ M B_b)` over the basis of one block.
fn quad_hess(m: &SymMatrix) -> DMatrix<f64> {
    let n = m.dim();
    let pairs = basis_pairs(n);
    let mm = m.as_matrix();
    let expand = |(i, j): (usize, usize)| -> Vec<(usize, usize)> {
        if i == j {
            vec![(i, i)]
        } else {
            vec![(i, j), (j, i)]
        }
    };
    let nb = pairs.len();
    let mut t = DMatrix::zeros(nb, nb);
    for a in 0..nb {
        let pa = expand(pairs[a]);
        for b in a..nb {
            let pb = expand(pairs[b]);
            let mut s = 0.0;
            for &(p, q) in &pa {
                for &(r, u) in &pb {
                    s += mm[(u, p)] * mm[(q, r)];
                }
            }
            t[(a, b)] = s;
            t[(b, a)] = s;
        }
    }
    t
}

struct Term {
    weight: f64,
    a: DMatrix<f64>,
    coeffs: Vec<(usize, f64)>,
    base: SymMatrix,
}

/// Program in vector form: maximize `Σ terms + linᵀx` subject to
/// `aᵢᵀx ≤ bᵢ`, `Ex = b`, every matrix block PD.
struct Internal {
    layout: Layout,
    terms: Vec<Term>,
    lin: DVector<f64>,
    ineq_a: Vec<DVector<f64>>,
    ineq_b: Vec<f64>,
    eq_a: DMatrix<f64>,
    eq_b: DVector<f64>,
    /// Orthonormal basis of the null space of `eq_a`.
    null: DMatrix<f64>,
    eq_pinv: DMatrix<f64>,
}

struct Eval {
    phi: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

struct Run {
    x: DVector<f64>,
    tau: f64,
    eq_w: DVector<f64>,
    steps: usize,
    status: Status,
}

impl Internal {
    #[allow(clippy::too_many_arguments)]
    fn build(
        layout: Layout,
        terms: Vec<Term>,
        lin: DVector<f64>,
        ineq_a: Vec<DVector<f64>>,
        ineq_b: Vec<f64>,
        eq_a: DMatrix<f64>,
        eq_b: DVector<f64>,
    ) -> Result<Self> {
        let n = layout.len;
        let (null, eq_pinv) = if eq_a.nrows() == 0 {
            (DMatrix::identity(n, n), DMatrix::zeros(n, 0))
        } else {
            let e = eig_sym(&SymMatrix::gram(&eq_a))?;
            let cut = 1e-12 * e.max().max(1.0);
            let cols: Vec<_> =
                (0..n).filter(|&i| e.values[i] <= cut).map(|i| e.vectors.column(i).into_owned()).collect();
            let null = if cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols) };
            let pinv = eq_a.clone().pseudo_inverse(1e-12).map_err(|e| Error::InvalidInput(e.to_string()))?;
            (null, pinv)
        };
        Ok(Self { layout, terms, lin, ineq_a, ineq_b, eq_a, eq_b, null, eq_pinv })
    }

    fn term_k(&self, t: &Term, x: &DVector<f64>) -> SymMatrix {
        let n = t.a.ncols();
        let mut s = SymMatrix::zeros(n);
        for (v, c) in &t.coeffs {
            s = &s + &self.layout.mat(x, *v).scale(*c);
        }
        &s.congruence(&t.a) + &t.base
    }

    fn feasible(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| v.is_finite())
            && self.ineq_a.iter().zip(&self.ineq_b).all(|(a, b)| b - a.dot(x) > 0.0)
            && (0..self.layout.dims.len()).all(|v| cholesky(&self.layout.mat(x, v)).is_some())
            && self.terms.iter().all(|t| cholesky(&self.term_k(t, x)).is_some())
    }

    fn barrier_value(&self, x: &DVector<f64>, tau: f64) -> Option<f64> {
        let mut phi = -tau * self.lin.dot(x);
        for t in &self.terms {
            let l = cholesky(&self.term_k(t, x))?;
            phi -= tau * t.weight * 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        for (a, b) in self.ineq_a.iter().zip(&self.ineq_b) {
            let s = b - a.dot(x);
            if s.is_nan() || s <= 0.0 {
                return None;
            }
            phi -= s.ln();
        }
        for v in 0..self.layout.dims.len() {
            let l = cholesky(&self.layout.mat(x, v))?;
            phi -= 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        Some(phi)
    }

    fn eval(&self, x: &DVector<f64>, tau: f64) -> Option<Eval> {
        let lay = &self.layout;
        let phi = self.barrier_value(x, tau)?;
        let mut grad = -&self.lin * tau;
        let mut hess = DMatrix::zeros(lay.len, lay.len);
        for t in &self.terms {
            let kinv = inverse_pd(&self.term_k(t, x)).ok()?;
            let m = kinv.congruence(&t.a.transpose());
            let q = quad_hess(&m);
            for (v, cv) in &t.coeffs {
                lay.add_grad(&mut grad, *v, &m, -tau * t.weight * cv);
                for (u, cu) in &t.coeffs {
                    let (bv, bu) = (lay.block(*v), lay.block(*u));
                    let mut blk = hess.view_mut((bv.start, bu.start), (bv.len(), bu.len()));
                    blk += &q * (tau * t.weight * cv * cu);
                }
            }
        }
        for (a, b) in self.ineq_a.iter().zip(&self.ineq_b) {
            let s = b - a.dot(x);
            grad += a / s;
            hess += a * a.transpose() / (s * s);
        }
        for v in 0..lay.dims.len() {
            let xinv = inverse_pd(&lay.mat(x, v)).ok()?;
            lay.add_grad(&mut grad, v, &xinv, -1.0);
            let b = lay.block(v);
            let mut blk = hess.view_mut((b.start, b.start), (b.len(), b.len()));
            blk += quad_hess(&xinv);
        }
        Some(Eval { phi, grad, hess })
    }

    /// Newton direction restricted to the null space of the equalities,
    /// solved after symmetric diagonal equilibration.
    fn newton(&self, ev: &Eval) -> Option<DVector<f64>> {
        let k = self.null.ncols();
        if k == 0 {
            return Some(DVector::zeros(self.layout.len));
        }
        let hr = self.null.transpose() * &ev.hess * &self.null;
        let gr = self.null.transpose() * &ev.grad;
        let d = DVector::from_fn(k, |i, _| {
            let v = hr[(i, i)];
            if v > 0.0 && v.is_finite() {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        });
        let hs = DMatrix::from_fn(k, k, |i, j| hr[(i, j)] * d[i] * d[j]);
        let rs = -gr.component_mul(&d);
        // The scaled Hessian has a unit diagonal; a small ridge rescues it
        // when the barrier makes it numerically singular late in the run.
        let dz = [0.0, 1e-12, 1e-10, 1e-8]
            .iter()
            .find_map(|&ridge| {
                let mut m = hs.clone();
                for i in 0..k {
                    m[(i, i)] += ridge;
                }
                m.cholesky().map(|c| c.solve(&rs))
            })
            .or_else(|| hs.lu().solve(&rs))?
            .component_mul(&d);
        let dx = &self.null * dz;
        dx.iter().all(|v| v.is_finite()).then_some(dx)
    }

    /// Least-squares equality multipliers for `∇φ + Aᵀw = 0`.
    fn eq_multipliers(&self, grad: &DVector<f64>) -> DVector<f64> {
        -(self.eq_pinv.transpose() * grad)
    }

    /// Removes rounding drift off the equality manifold.
    fn reproject(&self, x: &mut DVector<f64>) {
        if self.eq_a.nrows() > 0 {
            let r = &self.eq_a * &*x - &self.eq_b;
            *x -= &self.eq_pinv * r;
        }
    }

    /// Undamped Newton steps on the final centering problem; they tighten
    /// the dual estimates along nearly singular directions.
    fn polish(&self, x: &mut DVector<f64>, eq_w: &mut DVector<f64>, tau: f64, steps: &mut usize) {
        for _ in 0..8 {
            let Some(ev) = self.eval(x, tau) else { return };
            *eq_w = self.eq_multipliers(&ev.grad);
            let Some(dx) = self.newton(&ev) else { return };
            if dx.dot(&(&ev.hess * &dx)) < 1e-26 {
                return;
            }
            let mut cand = &*x + dx;
            self.reproject(&mut cand);
            match self.barrier_value(&cand, tau) {
                Some(phi) if phi <= ev.phi + 1e-12 * ev.phi.abs().max(1.0) => *x = cand,
                _ => return,
            }
            *steps += 1;
        }
    }

    fn run(&self, mut x: DVector<f64>, cfg: &SolverConfig, stop: &dyn Fn(&DVector<f64>) -> bool) -> Run {
        let m = (self.ineq_a.len() + self.layout.dims.iter().sum::<usize>()).max(1) as f64;
        let mut tau = 1.0;
        let mut steps = 0;
        let mut eq_w = DVector::zeros(self.eq_a.nrows());
        loop {
            let (mut best_lam2, mut stale) = (f64::INFINITY, 0);
            loop {
                let Some(ev) = self.eval(&x, tau) else {
                    return Run { x, tau, eq_w, steps, status: Status::MaxIters };
                };
                let Some(dx) = self.newton(&ev) else {
                    return Run { x, tau, eq_w, steps, status: Status::MaxIters };
                };
                eq_w = self.eq_multipliers(&ev.grad);
                let lam2 = dx.dot(&(&ev.hess * &dx)).max(0.0);
                if lam2 / 2.0 <= cfg.newton_tol {
                    break;
                }
                // Decrement stuck at the rounding floor of this stage.
                if lam2 < best_lam2 * 0.5 {
                    best_lam2 = lam2;
                    stale = 0;
                } else {
                    stale += 1;
                    if lam2 < 1e-6 && stale >= 3 {
                        break;
                    }
                }
                if steps >= cfg.max_newton {
                    return Run { x, tau, eq_w, steps, status: Status::MaxIters };
                }
                let lam = lam2.sqrt();
                let mut alpha = if lam <= 0.25 { 1.0 } else { 1.0 / (1.0 + lam) };
                let slope = ev.grad.dot(&dx);
                let mut moved = false;
                for _ in 0..60 {
                    let mut cand = &x + &dx * alpha;
                    self.reproject(&mut cand);
                    if let Some(phi) = self.barrier_value(&cand, tau) {
                        let tol = 1e-12 * ev.phi.abs().max(1.0);
                        if lam <= 1e-3 || phi <= ev.phi + 0.25 * alpha * slope + tol {
                            x = cand;
                            moved = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                steps += 1;
                if !moved {
                    // Rounding floor: the decrement can no longer be reduced.
                    if lam2 < 1e-6 {
                        break;
                    }
                    return Run { x, tau, eq_w, steps, status: Status::MaxIters };
                }
                if stop(&x) {
                    return Run { x, tau, eq_w, steps, status: Status::Optimal };
                }
            }
            if m / tau <= cfg.gap_tol {
                self.polish(&mut x, &mut eq_w, tau, &mut steps);
                return Run { x, tau, eq_w, steps, status: Status::Optimal };
            }
            tau *= 10.0;
        }
    }
}

fn internal(prog: &ConvexProgram, relax: f64) -> Result<Internal> {
    let layout = Layout::new(&prog.dims, prog.n_scalars);
    let terms = prog
        .terms
        .iter()
        .map(|t| Term {
            weight: t.weight,
            a: t.a.clone(),
            coeffs: t.coeffs.clone(),
            base: t.base.clone().unwrap_or_else(|| SymMatrix::identity(t.a.nrows())),
        })
        .collect();
    let lin = layout.form_vec(&prog.linear);
    let (mut ineq_a, mut ineq_b, mut eq_rows, mut eq_b) = (vec![], vec![], vec![], vec![]);
    for c in &prog.constraints {
        let a = layout.form_vec(&c.form);
        match c.sense {
            Sense::Le => {
                ineq_a.push(a);
                ineq_b.push(c.rhs + relax);
            }
            Sense::Ge => {
                ineq_a.push(-a);
                ineq_b.push(-c.rhs + relax);
            }
            Sense::Eq => {
                eq_rows.push(a.transpose());
                eq_b.push(c.rhs);
            }
        }
    }
    let eq_a = if eq_rows.is_empty() { DMatrix::zeros(0, layout.len) } else { DMatrix::from_rows(&eq_rows) };
    Internal::build(layout, terms, lin, ineq_a, ineq_b, eq_a, DVector::from_vec(eq_b))
}

/// Outcome of the phase-1 search for an interior point.
enum Phase1 {
    Interior(DVector<f64>, usize),
    Marginal(usize),
    Infeasible(usize),
}

/// Minimizes `s` such that every inequality and cone constraint holds when
/// relaxed by `s`, through the substitution `Wᵥ = Xᵥ + sI`.
fn phase1(p: &Internal, cfg: &SolverConfig, scale: f64, strict: bool) -> Result<Phase1> {
    let lay = &p.layout;
    let n = lay.len;
    let x0 = if p.eq_a.nrows() == 0 {
        DVector::zeros(n)
    } else {
        let svd = p.eq_a.clone().svd(true, true);
        let x0 = svd.solve(&p.eq_b, 1e-12).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let res = (&p.eq_a * &x0 - &p.eq_b).amax();
        if res > 1e-8 * (1.0 + p.eq_b.amax()) {
            return Ok(Phase1::Infeasible(0));
        }
        x0
    };
    if p.feasible(&x0) {
        return Ok(Phase1::Interior(x0, 0));
    }
    let mut need = f64::NEG_INFINITY;
    for (a, b) in p.ineq_a.iter().zip(&p.ineq_b) {
        need = need.max(a.dot(&x0) - b);
    }
    for v in 0..lay.dims.len() {
        need = need.max(-eig_sym(&lay.mat(&x0, v))?.min());
    }
    let s0 = need.max(0.0) + 1.0;

    // Variables (w, s): x = w − s·e, e the stacked identities.
    let mut e = DVector::zeros(n);
    for v in 0..lay.dims.len() {
        e += lay.identity_vec(v);
    }
    let ext = Layout::new(&lay.dims, lay.n_scalars + 1);
    let si = ext.len - 1;
    let widen = |a: &DVector<f64>, extra: f64| -> DVector<f64> {
        let mut out = DVector::zeros(ext.len);
        out.rows_mut(0, n).copy_from(a);
        out[si] = extra - a.dot(&e);
        out
    };
    let mut ineq_a: Vec<DVector<f64>> = p.ineq_a.iter().map(|a| widen(a, -1.0)).collect();
    let mut ineq_b = p.ineq_b.clone();
    let mut floor = DVector::zeros(ext.len);
    floor[si] = -1.0;
    ineq_a.push(floor);
    ineq_b.push(1.0);
    let mut eq_a = DMatrix::zeros(p.eq_a.nrows(), ext.len);
    for r in 0..p.eq_a.nrows() {
        let row = widen(&p.eq_a.row(r).transpose(), 0.0);
        eq_a.set_row(r, &row.transpose());
    }
    let mut lin = DVector::zeros(ext.len);
    lin[si] = -1.0;
    let ph = Internal::build(ext, vec![], lin, ineq_a, ineq_b, eq_a, p.eq_b.clone())?;
    let mut z0 = DVector::zeros(ph.layout.len);
    z0.rows_mut(0, n).copy_from(&(&x0 + &e * s0));
    z0[si] = s0;
    let target = -1e-2;
    let run = ph.run(z0, cfg, &|z| z[si] <= target);
    let s = run.x[si];
    let x = run.x.rows(0, n) - &e * s;
    let tol = cfg.feas_tol * scale;
    if s > tol {
        Ok(Phase1::Infeasible(run.steps))
    } else if (strict && s > -tol) || !p.feasible(&x) {
        Ok(Phase1::Marginal(run.steps))
    } else {
        Ok(Phase1::Interior(x, run.steps))
    }
}

/// Solves the program from a phase-1 interior point.
pub fn solve_convex(prog: &ConvexProgram, cfg: &SolverConfig) -> Result<SolverReport> {
    solve_convex_from(prog, None, cfg)
}

/// Solves the program, starting from `start` when it is strictly feasible.
pub fn solve_convex_from(prog: &ConvexProgram, start: Option<&Point>, cfg: &SolverConfig) -> Result<SolverReport> {
    prog.validate()?;
    let scale = prog.scale.max(1.0);
    let mut relax = 0.0;
    let mut p = internal(prog, relax)?;
    let mut x0 = start
        .map(|s| p.layout.to_vec(s))
        .filter(|x| p.feasible(x) && (&p.eq_a * x - &p.eq_b).amax() <= 1e-10 * (1.0 + p.eq_b.amax()));
    let mut steps = 0;
    if x0.is_none() {
        match phase1(&p, cfg, scale, true)? {
            Phase1::Interior(x, k) => {
                steps += k;
                x0 = Some(x);
            }
            Phase1::Infeasible(k) => return Ok(infeasible_report(prog, steps + k)),
            Phase1::Marginal(k) => {
                steps += k;
                relax = 2.0 * cfg.feas_tol * scale;
                p = internal(prog, relax)?;
                match phase1(&p, cfg, scale, false)? {
                    Phase1::Interior(x, k) => {
                        steps += k;
                        x0 = Some(x);
                    }
                    Phase1::Infeasible(k) | Phase1::Marginal(k) => return Ok(infeasible_report(prog, steps + k)),
                }
            }
        }
    }
    let run = p.run(x0.expect("interior point"), cfg, &|_| false);
    steps += run.steps;
    Ok(finish(prog, &p, run, steps, relax, cfg))
}

fn infeasible_report(prog: &ConvexProgram, steps: usize) -> SolverReport {
    SolverReport {
        status: Status::Infeasible,
        objective: f64::NAN,
        point: Point {
            mats: prog.dims.iter().map(|&n| SymMatrix::zeros(n)).collect(),
            scalars: vec![0.0; prog.n_scalars],
        },
        duals: Duals { constraints: vec![0.0; prog.constraints.len()], psd: vec![] },
        residuals: KktResiduals::default(),
        iterations: steps,
        relaxation: 0.0,
    }
}

/// Multipliers recovered by least squares on the stationarity equation
/// `∇f = Σλᵢaᵢ + Aᵀν − Σ Zᵥ`, with `λ` restricted to near-active
/// inequalities and each `Zᵥ` to the near-null eigenspace of `Xᵥ`. This
/// avoids the cancellation in `1/(τ·slack)` and `X⁻¹/τ` once the iterate is
/// close to the boundary.
fn recover_duals(p: &Internal, run: &Run, gf: &DVector<f64>, act: f64) -> (Vec<f64>, DVector<f64>, Vec<SymMatrix>) {
    let lay = &p.layout;
    let x = &run.x;
    let tau = run.tau;
    let active: Vec<usize> = (0..p.ineq_a.len()).filter(|&i| p.ineq_b[i] - p.ineq_a[i].dot(x) <= act).collect();
    let mut cols: Vec<DVector<f64>> = active.iter().map(|&i| p.ineq_a[i].clone()).collect();
    // Central-path estimates; the least-squares step corrects them.
    let mut prior: Vec<f64> = active.iter().map(|&i| 1.0 / (tau * (p.ineq_b[i] - p.ineq_a[i].dot(x)))).collect();
    for r in 0..p.eq_a.nrows() {
        cols.push(p.eq_a.row(r).transpose());
        prior.push(run.eq_w[r] / tau);
    }
    let mut faces = Vec::new();
    for v in 0..lay.dims.len() {
        let e = eig_sym(&lay.mat(x, v)).ok();
        let (basis, vals) = e
            .map(|e| {
                let idx: Vec<usize> = (0..lay.dims[v]).filter(|&i| e.values[i] <= act).collect();
                let vals: Vec<f64> = idx.iter().map(|&i| e.values[i]).collect();
                (DMatrix::from_fn(lay.dims[v], idx.len(), |r, c| e.vectors[(r, idx[c])]), vals)
            })
            .unwrap_or_else(|| (DMatrix::zeros(lay.dims[v], 0), vec![]));
        for (a, b) in basis_pairs(basis.ncols()) {
            prior.push(if a == b && vals[a] > 0.0 { 1.0 / (tau * vals[a]) } else { 0.0 });
            let (ua, ub) = (basis.column(a), basis.column(b));
            let m = if a == b { ua * ua.transpose() } else { ua * ub.transpose() + ub * ua.transpose() };
            let mut col = DVector::zeros(lay.len);
            lay.add_grad(&mut col, v, &SymMatrix::symmetrize(m), -1.0);
            cols.push(col);
        }
        faces.push(basis);
    }
    let theta = if cols.is_empty() {
        DVector::zeros(0)
    } else {
        let c = DMatrix::from_columns(&cols);
        let prior = DVector::from_vec(prior);
        let resid = gf - &c * &prior;
        let svd = c.svd(true, true);
        let cut = 1e-12 * svd.singular_values.max().max(1.0);
        svd.solve(&resid, cut).map(|d| &prior + d).unwrap_or(prior)
    };
    let mut lambdas = vec![0.0; p.ineq_a.len()];
    for (k, &i) in active.iter().enumerate() {
        lambdas[i] = theta[k];
    }
    let nu = theta.rows(active.len(), p.eq_a.nrows()).into_owned();
    let mut off = active.len() + p.eq_a.nrows();
    let psd = faces
        .iter()
        .map(|basis| {
            let k = basis.ncols();
            let mut w = DMatrix::zeros(k, k);
            for (a, b) in basis_pairs(k) {
                w[(a, b)] = theta[off];
                w[(b, a)] = theta[off];
                off += 1;
            }
            SymMatrix::symmetrize(basis * w * basis.transpose())
        })
        .collect();
    (lambdas, nu, psd)
}

fn finish(prog: &ConvexProgram, p: &Internal, run: Run, steps: usize, relax: f64, cfg: &SolverConfig) -> SolverReport {
    let lay = &p.layout;
    let x = &run.x;
    let point = lay.to_point(x);
    let scale = prog.scale.max(1.0);
    let m = (p.ineq_a.len() + lay.dims.iter().sum::<usize>()).max(1) as f64;

    let mut gf = p.lin.clone();
    for t in &p.terms {
        let mk = inverse_pd(&p.term_k(t, x))
            .map(|k| k.congruence(&t.a.transpose()))
            .unwrap_or_else(|_| SymMatrix::zeros(t.a.ncols()));
        for (v, c) in &t.coeffs {
            lay.add_grad(&mut gf, *v, &mk, t.weight * c);
        }
    }
    let act = (m / run.tau).sqrt() * scale;
    let (lambdas, nu, psd) = recover_duals(p, &run, &gf, act);

    let mut r = gf.clone();
    for (a, l) in p.ineq_a.iter().zip(&lambdas) {
        r -= a * *l;
    }
    if p.eq_a.nrows() > 0 {
        r -= p.eq_a.transpose() * &nu;
    }
    for (v, z) in psd.iter().enumerate() {
        lay.add_grad(&mut r, v, z, 1.0);
    }
    let norm = |g: &DVector<f64>| -> f64 {
        let mut s: f64 = (0..lay.dims.len()).map(|v| lay.grad_to_mat(g, v).frobenius_norm().powi(2)).sum();
        for j in 0..lay.n_scalars {
            s += g[lay.scalar_index(j)].powi(2);
        }
        s.sqrt()
    };
    let gscale = 1.0 + norm(&gf);
    let stationarity = norm(&r) / gscale;

    let mut duals = Vec::with_capacity(prog.constraints.len());
    let (mut ineq_i, mut eq_i) = (0, 0);
    for c in &prog.constraints {
        if c.sense == Sense::Eq {
            duals.push(nu[eq_i]);
            eq_i += 1;
        } else {
            duals.push(lambdas[ineq_i]);
            ineq_i += 1;
        }
    }

    // Feasibility against the original, unrelaxed bounds.
    let mut primal: f64 = 0.0;
    for c in &prog.constraints {
        let v = c.form.eval(&point) - c.rhs;
        primal = primal.max(match c.sense {
            Sense::Le => v.max(0.0),
            Sense::Ge => (-v).max(0.0),
            Sense::Eq => v.abs(),
        });
    }
    for mat in &point.mats {
        primal = primal.max(-eig_sym(mat).map(|e| e.min()).unwrap_or(f64::NAN)).max(0.0);
    }
    let mut dual: f64 = lambdas.iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max) / gscale;
    for z in &psd {
        dual = dual.max(-eig_sym(z).map(|e| e.min()).unwrap_or(f64::NAN) / gscale);
    }
    let mut comp: f64 = 0.0;
    for (i, l) in lambdas.iter().enumerate() {
        let slack = p.ineq_b[i] - relax - p.ineq_a[i].dot(x);
        comp = comp.max((l * slack).abs());
    }
    for (z, mat) in psd.iter().zip(&point.mats) {
        comp = comp.max(z.inner(mat).abs());
    }
    let residuals = KktResiduals { stationarity, primal, dual: dual.max(0.0), complementarity: comp };
    let mut status = run.status;
    if status == Status::Optimal && residuals.max() > cfg.kkt_tol {
        status = Status::MaxIters;
    }
    SolverReport {
        status,
        objective: prog.objective(&point).unwrap_or(f64::NAN),
        point,
        duals: Duals { constraints: duals, psd },
        residuals,
        iterations: steps,
        relaxation: relax,
    }
}
