//! Transport of states and of the Hilbert-space metric along `q`, eigenstate
//! fidelity, and fidelity susceptibility.
//!
//! States obey `∂_qψ = −iKψ` and the metric `∂_qG = iGK − iK†G`, so the
//! metric inner product `⟪ψ|φ⟫ = ψ†Gφ` is constant under joint transport.

use log::debug;
use thiserror::Error;

use crate::kgen::{
    eigenbasis_m, solve_adiabatic_with, Generator, HamiltonianFamily, KgenError, LinearK,
};
use crate::linalg::{
    eigendecompose_with, CMatrix, CVector, LinalgError, PointClass, Spectrum, Thresholds, C64, I,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("integration produced a non-finite value at q = {q}")]
    StepFailure { q: f64 },
    #[error("metric lost positivity at q = {q} (smallest eigenvalue {min_eig:e})")]
    PositivityLost { q: f64, min_eig: f64 },
    #[error("metric is not Hermitian positive definite")]
    InvalidMetric,
    #[error("level {n} could not be continued from q = {from} to q = {to}")]
    BranchMismatch { n: usize, from: f64, to: f64 },
    #[error("level {n} out of range for dimension {dim}")]
    LevelOutOfRange { n: usize, dim: usize },
    #[error("point q = {q} is {class}; susceptibility denominators vanish")]
    DegenerateDenominator { q: f64, class: PointClass },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kgen(#[from] KgenError),
}

/// Right and left eigenvectors with `left·right = 1` (no conjugation) and
/// the largest right-vector entry real positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub index: usize,
    pub eigenvalue: C64,
    pub right: CVector,
    pub left: CVector,
}

/// Biorthogonal eigenpairs from the columns of `P` and rows of `P⁻¹`.
pub fn eigenpairs(spec: &Spectrum) -> Vec<EigenPair> {
    (0..spec.dim())
        .map(|n| EigenPair {
            index: n,
            eigenvalue: spec.eigenvalues[n],
            right: spec.p.column(n).into_owned(),
            left: spec.p_inv.row(n).transpose(),
        })
        .collect()
}

/// `Σᵢ aᵢ bᵢ`.
pub fn bilinear(a: &CVector, b: &CVector) -> C64 {
    a.dot(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportOptions {
    /// Largest RK4 step in `q`; grid intervals are subdivided to respect it.
    pub max_step: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions { max_step: 1e-2 }
    }
}

fn substeps(a: f64, b: f64, max_step: f64) -> (usize, f64) {
    let n = ((b - a).abs() / max_step).ceil().max(1.0) as usize;
    (n, (b - a) / n as f64)
}

fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Generic RK4 along `q_grid` for `∂_q y = f(q, y)`; returns `y` at every
/// grid point.
fn rk4_along<F>(mut f: F, y0: CMatrix, q_grid: &[f64], max_step: f64) -> Result<Vec<CMatrix>, TransportError>
where
    F: FnMut(f64, &CMatrix) -> Result<CMatrix, TransportError>,
{
    let mut out = Vec::with_capacity(q_grid.len());
    let mut y = y0;
    out.push(y.clone());
    let half = C64::new(0.5, 0.0);
    let two = C64::new(2.0, 0.0);
    for w in q_grid.windows(2) {
        let (n, h) = substeps(w[0], w[1], max_step);
        let hc = C64::new(h, 0.0);
        for s in 0..n {
            let q = w[0] + s as f64 * h;
            let k1 = f(q, &y)?;
            let k2 = f(q + 0.5 * h, &(&y + &k1 * (hc * half)))?;
            let k3 = f(q + 0.5 * h, &(&y + &k2 * (hc * half)))?;
            let k4 = f(q + h, &(&y + &k3 * hc))?;
            y += (k1 + k2 * two + k3 * two + k4) * (hc / 6.0);
            if !all_finite(&y) {
                return Err(TransportError::StepFailure { q: q + h });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// `K(t, ·)` at fixed `t` as a function of `q`.
pub trait KOfQ {
    fn k_at(&self, q: f64) -> Result<CMatrix, TransportError>;
}

impl<F> KOfQ for F
where
    F: Fn(f64) -> Result<CMatrix, TransportError>,
{
    fn k_at(&self, q: f64) -> Result<CMatrix, TransportError> {
        self(q)
    }
}

/// The adiabatic generator of `fam` at fixed `t`, zero residual gauge.
pub struct AdiabaticAlongQ<'a> {
    pub fam: &'a HamiltonianFamily,
    pub t: f64,
    pub thresholds: Thresholds,
}

impl<'a> AdiabaticAlongQ<'a> {
    pub fn new(fam: &'a HamiltonianFamily, t: f64) -> Self {
        AdiabaticAlongQ { fam, t, thresholds: Thresholds::default() }
    }
}

impl KOfQ for AdiabaticAlongQ<'_> {
    fn k_at(&self, q: f64) -> Result<CMatrix, TransportError> {
        let k = solve_adiabatic_with(self.fam, q, &[], &self.thresholds)?;
        Ok(k.at(self.t))
    }
}

/// Integrate `∂_qψ = −iK(t, q)ψ` along `q_grid`.
pub fn transport_state_q<K: KOfQ + ?Sized>(
    k: &K,
    psi0: &CVector,
    q_grid: &[f64],
    opts: &TransportOptions,
) -> Result<Vec<CVector>, TransportError> {
    let y0 = CMatrix::from_column_slice(psi0.len(), 1, psi0.as_slice());
    let ys = rk4_along(|q, y| Ok(k.k_at(q)? * y * (-I)), y0, q_grid, opts.max_step)?;
    Ok(ys.into_iter().map(|y| y.column(0).into_owned()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    pub g: CMatrix,
    pub q: f64,
    pub t: f64,
}

/// Smallest eigenvalue of the Hermitian part of `g`.
pub fn min_hermitian_eigenvalue(g: &CMatrix) -> f64 {
    let herm = (g + g.adjoint()) * C64::new(0.5, 0.0);
    herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

impl MetricState {
    pub fn new(g: CMatrix, q: f64, t: f64) -> Result<Self, TransportError> {
        if !g.is_square() || (&g - g.adjoint()).norm() > 1e-10 * g.norm().max(1.0) {
            return Err(TransportError::InvalidMetric);
        }
        if !(min_hermitian_eigenvalue(&g) > 0.0) {
            return Err(TransportError::InvalidMetric);
        }
        Ok(MetricState { g, q, t })
    }

    /// `⟪a|b⟫ = a†Gb`.
    pub fn inner(&self, a: &CVector, b: &CVector) -> C64 {
        a.dotc(&(&self.g * b))
    }
}

/// Integrate `∂_qG = iGK − iK†G` along `q_grid`, symmetrizing after every
/// grid interval.
pub fn evolve_metric_q<K: KOfQ + ?Sized>(
    k: &K,
    g0: &MetricState,
    q_grid: &[f64],
    opts: &TransportOptions,
) -> Result<Vec<MetricState>, TransportError> {
    let t = g0.t;
    let mut out = vec![MetricState { g: g0.g.clone(), q: q_grid.first().copied().unwrap_or(g0.q), t }];
    let mut g = g0.g.clone();
    for w in q_grid.windows(2) {
        let ys = rk4_along(
            |q, y| {
                let kq = k.k_at(q)?;
                Ok((y * &kq - kq.adjoint() * y) * I)
            },
            g,
            w,
            opts.max_step,
        )?;
        let raw = ys.into_iter().last().expect("two grid points");
        let sym = (&raw + raw.adjoint()) * C64::new(0.5, 0.0);
        let dev = (&raw - &sym).norm();
        if dev > 0.0 {
            debug!("metric symmetrization at q = {}: removed {dev:e}", w[1]);
        }
        let min_eig = min_hermitian_eigenvalue(&sym);
        if !(min_eig > 0.0) {
            return Err(TransportError::PositivityLost { q: w[1], min_eig });
        }
        out.push(MetricState { g: sym.clone(), q: w[1], t });
        g = sym;
    }
    Ok(out)
}

/// Real and imaginary parts of a quantity that is real for the models in
/// view; the imaginary part is kept so callers can check it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    pub re: f64,
    pub im: f64,
}

fn regular_spectrum(fam: &HamiltonianFamily, q: f64, th: &Thresholds) -> Result<Spectrum, TransportError> {
    let spec = eigendecompose_with(&fam.h(q), th)?;
    if spec.classification != PointClass::Regular {
        return Err(TransportError::DegenerateDenominator { q, class: spec.classification });
    }
    Ok(spec)
}

/// Index at `b` of level `n` at `a`, by largest biorthogonal overlap.
fn continue_level(a: &Spectrum, b: &Spectrum, n: usize, qa: f64, qb: f64) -> Result<usize, TransportError> {
    let left = a.p_inv.row(n);
    let mut scores: Vec<(usize, f64)> = (0..b.dim())
        .map(|m| {
            let r = b.p.column(m);
            let l = b.p_inv.row(m);
            let ra = a.p.column(n);
            (m, ((left * r)[(0, 0)] * (l * ra)[(0, 0)]).norm())
        })
        .collect();
    scores.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));
    let best = scores[0];
    let second = scores.get(1).map(|s| s.1).unwrap_or(0.0);
    if !(best.1 > 0.5) || best.1 <= second {
        return Err(TransportError::BranchMismatch { n, from: qa, to: qb });
    }
    Ok(best.0)
}

/// `𝓕 = ⟪ψₙ(q)|ψₙ(q+ε)⟫⟪ψₙ(q+ε)|ψₙ(q)⟫` with biorthogonal brackets; the
/// level at `q + ε` is matched by maximal overlap.
pub fn eigenstate_fidelity(fam: &HamiltonianFamily, n: usize, q: f64, eps: f64) -> Result<Fidelity, TransportError> {
    let th = Thresholds::default();
    let a = regular_spectrum(fam, q, &th)?;
    if n >= a.dim() {
        return Err(TransportError::LevelOutOfRange { n, dim: a.dim() });
    }
    if eps == 0.0 {
        return Ok(Fidelity { re: 1.0, im: 0.0 });
    }
    let b = regular_spectrum(fam, q + eps, &th)?;
    let m = continue_level(&a, &b, n, q, q + eps)?;
    let f = (a.p_inv.row(n) * b.p.column(m))[(0, 0)] * (b.p_inv.row(m) * a.p.column(n))[(0, 0)];
    Ok(Fidelity { re: f.re, im: f.im })
}

/// `⟨K²⟩ₙ − ⟨K⟩ₙ²` with biorthogonal expectation values.
pub fn susceptibility_from_k<G: Generator + ?Sized>(k: &G, pair: &EigenPair, t: f64) -> C64 {
    let kt = k.at(t);
    let kr = &kt * &pair.right;
    let mean = bilinear(&pair.left, &kr);
    let sq = bilinear(&pair.left, &(&kt * kr));
    sq - mean * mean
}

/// `Σ_{m≠n} Mₙₘ Mₘₙ / (λₙ − λₘ)²` from first-order perturbation theory.
pub fn susceptibility_oracle(fam: &HamiltonianFamily, n: usize, q: f64) -> Result<C64, TransportError> {
    let spec = regular_spectrum(fam, q, &Thresholds::default())?;
    if n >= spec.dim() {
        return Err(TransportError::LevelOutOfRange { n, dim: spec.dim() });
    }
    let m = eigenbasis_m(&spec, &fam.dh(q))?;
    let ln = spec.eigenvalues[n];
    Ok((0..spec.dim())
        .filter(|&k| k != n)
        .map(|k| {
            let d = ln - spec.eigenvalues[k];
            m[(n, k)] * m[(k, n)] / (d * d)
        })
        .sum())
}

/// `χₙ(q)` from the adiabatic generator at time `t`.
pub fn susceptibility_at(fam: &HamiltonianFamily, n: usize, q: f64, t: f64) -> Result<C64, TransportError> {
    let th = Thresholds::default();
    let spec = regular_spectrum(fam, q, &th)?;
    if n >= spec.dim() {
        return Err(TransportError::LevelOutOfRange { n, dim: spec.dim() });
    }
    let k: LinearK = solve_adiabatic_with(fam, q, &[], &th)?;
    Ok(susceptibility_from_k(&k, &eigenpairs(&spec)[n], t))
}
