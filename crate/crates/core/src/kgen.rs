//! Evolution generators `K(t, q)` solving `∂ₜK − i[K, H] − ∂_qH = 0` for a
//! time-independent family `H(q)`.
//!
//! All eigenbasis quantities use `Λ = P⁻¹HP`, `M = P⁻¹(∂_qH)P` and
//! `K̃ = P⁻¹KP`, so that entry-wise `∂ₜK̃ᵢⱼ = i(λⱼ − λᵢ)K̃ᵢⱼ + mᵢⱼ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    eigendecompose_with, identity, CMatrix, LinalgError, PointClass, Spectrum, Thresholds, C64, I,
};

pub type MatrixFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KgenError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("eigenvector matrix is singular (classification {0})")]
    SingularP(PointClass),
    #[error(
        "adiabatic gauge is singular: eigenvalues {i} and {j} are {gap:e} apart with coupling {coupling:e}"
    )]
    AdiabaticSingular { i: usize, j: usize, gap: f64, coupling: f64 },
    #[error("input is an exceptional point")]
    EpInput,
    #[error("spectrum is degenerate; the commutant is larger than the projector span")]
    DegenerateSpectrum,
    #[error("expected {expected} residual gauge coefficients, got {got}")]
    AlphaLength { expected: usize, got: usize },
    #[error("local error estimate {estimate:e} exceeds tolerance {tol:e}")]
    StepSizeTooLarge { estimate: f64, tol: f64 },
}

/// A family `q ↦ H(q)` with its analytic derivative.
#[derive(Clone)]
pub struct HamiltonianFamily {
    pub dim: usize,
    h: MatrixFn,
    dh: MatrixFn,
    pub q_domain: (f64, f64),
    pub critical_points: Vec<f64>,
}

impl fmt::Debug for HamiltonianFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianFamily")
            .field("dim", &self.dim)
            .field("q_domain", &self.q_domain)
            .field("critical_points", &self.critical_points)
            .finish_non_exhaustive()
    }
}

impl HamiltonianFamily {
    pub fn new<H, D>(dim: usize, h: H, dh: D) -> Self
    where
        H: Fn(f64) -> CMatrix + Send + Sync + 'static,
        D: Fn(f64) -> CMatrix + Send + Sync + 'static,
    {
        HamiltonianFamily {
            dim,
            h: Arc::new(h),
            dh: Arc::new(dh),
            q_domain: (f64::NEG_INFINITY, f64::INFINITY),
            critical_points: Vec::new(),
        }
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.q_domain = (lo, hi);
        self
    }

    pub fn with_critical_points(mut self, points: Vec<f64>) -> Self {
        self.critical_points = points;
        self
    }

    pub fn h(&self, q: f64) -> CMatrix {
        (self.h)(q)
    }

    pub fn dh(&self, q: f64) -> CMatrix {
        (self.dh)(q)
    }

    /// `‖∂_qH − (H(q+s) − H(q−s))/2s‖`.
    pub fn derivative_mismatch(&self, q: f64, step: f64) -> f64 {
        let fd = (self.h(q + step) - self.h(q - step)) / C64::new(2.0 * step, 0.0);
        (self.dh(q) - fd).norm()
    }
}

/// Something that yields `K(t)` and its time derivative.
pub trait Generator {
    fn at(&self, t: f64) -> CMatrix;

    /// `∂ₜK`, by central difference unless the generator knows better.
    fn time_derivative(&self, t: f64, h: f64) -> CMatrix {
        (self.at(t + h) - self.at(t - h)) / C64::new(2.0 * h, 0.0)
    }
}

/// Adiabatic-gauge generator `K(t) = K1·t + K0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearK {
    pub k1: CMatrix,
    pub k0: CMatrix,
}

impl LinearK {
    pub fn zeros(n: usize) -> Self {
        LinearK { k1: CMatrix::zeros(n, n), k0: CMatrix::zeros(n, n) }
    }
}

impl Generator for LinearK {
    fn at(&self, t: f64) -> CMatrix {
        &self.k1 * C64::new(t, 0.0) + &self.k0
    }

    fn time_derivative(&self, _t: f64, _h: f64) -> CMatrix {
        self.k1.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gauge {
    Adiabatic,
    RegularDp,
    RegularEp,
    ClosedForm,
    Oracle,
}

/// A generator in a gauge that is not polynomial in `t`.
#[derive(Clone)]
pub struct TimeK {
    pub gauge: Gauge,
    pub t_domain: (f64, f64),
    eval: MatrixFn,
}

impl fmt::Debug for TimeK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeK")
            .field("gauge", &self.gauge)
            .field("t_domain", &self.t_domain)
            .finish_non_exhaustive()
    }
}

impl TimeK {
    pub fn new<F>(gauge: Gauge, t_domain: (f64, f64), eval: F) -> Self
    where
        F: Fn(f64) -> CMatrix + Send + Sync + 'static,
    {
        TimeK { gauge, t_domain, eval: Arc::new(eval) }
    }

    pub fn from_linear(k: LinearK) -> Self {
        TimeK::new(Gauge::Adiabatic, (f64::NEG_INFINITY, f64::INFINITY), move |t| k.at(t))
    }

    pub fn sample(&self, t_grid: &[f64]) -> Vec<CMatrix> {
        t_grid.iter().map(|&t| self.at(t)).collect()
    }

    /// Pointwise difference `self − other`, tagged with `self`'s gauge.
    pub fn minus<G: Generator + Clone + Send + Sync + 'static>(&self, other: &G) -> TimeK {
        let a = self.clone();
        let b = other.clone();
        TimeK::new(self.gauge, self.t_domain, move |t| a.at(t) - b.at(t))
    }
}

impl Generator for TimeK {
    fn at(&self, t: f64) -> CMatrix {
        (self.eval)(t)
    }
}

/// `(e^z − 1)/z`, accurate near zero.
pub fn phi1(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        C64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        (z.exp() - 1.0) / z
    }
}

fn ensure_invertible(spec: &Spectrum) -> Result<(), KgenError> {
    if spec.classification == PointClass::Ep {
        return Err(KgenError::SingularP(spec.classification));
    }
    let n = spec.dim();
    if (&spec.p * &spec.p_inv - identity(n)).norm() > 1e-8 * (n as f64).sqrt() {
        return Err(KgenError::SingularP(spec.classification));
    }
    Ok(())
}

/// `M = P⁻¹ (∂_qH) P`.
pub fn eigenbasis_m(spec: &Spectrum, dh: &CMatrix) -> Result<CMatrix, KgenError> {
    ensure_invertible(spec)?;
    Ok(&spec.p_inv * dh * &spec.p)
}

/// Projectors `P Eₖₖ P⁻¹` onto each eigenvector. They span the commutant
/// of `H` when the spectrum is nondegenerate.
pub fn residual_gauge_basis(spec: &Spectrum) -> Result<Vec<CMatrix>, KgenError> {
    if spec.classification != PointClass::Regular {
        return Err(KgenError::DegenerateSpectrum);
    }
    Ok((0..spec.dim())
        .map(|k| spec.p.column(k) * spec.p_inv.row(k))
        .collect())
}

/// Coupling magnitude below which a 0/0 adiabatic entry is set to zero.
pub const ADIABATIC_COUPLING_TOL: f64 = 1e-10;

pub fn solve_adiabatic(
    fam: &HamiltonianFamily,
    q: f64,
    alpha: &[C64],
) -> Result<LinearK, KgenError> {
    solve_adiabatic_with(fam, q, alpha, &Thresholds::default())
}

pub fn solve_adiabatic_with(
    fam: &HamiltonianFamily,
    q: f64,
    alpha: &[C64],
    th: &Thresholds,
) -> Result<LinearK, KgenError> {
    let h = fam.h(q);
    let spec = eigendecompose_with(&h, th)?;
    adiabatic_from_spectrum(&spec, &fam.dh(q), alpha, th.gap_tol(spec.h_norm))
}

/// Adiabatic solution given a precomputed spectrum.
pub fn adiabatic_from_spectrum(
    spec: &Spectrum,
    dh: &CMatrix,
    alpha: &[C64],
    gap_tol: f64,
) -> Result<LinearK, KgenError> {
    if spec.classification == PointClass::Ep {
        return Err(KgenError::EpInput);
    }
    let n = spec.dim();
    let m = eigenbasis_m(spec, dh)?;
    let lam = &spec.eigenvalues;
    let mut k1t = CMatrix::zeros(n, n);
    let mut k0t = CMatrix::zeros(n, n);
    for i in 0..n {
        k1t[(i, i)] = m[(i, i)];
        for j in 0..n {
            if i == j {
                continue;
            }
            let gap = lam[i] - lam[j];
            if gap.norm() < gap_tol {
                let coupling = m[(i, j)].norm();
                if coupling > ADIABATIC_COUPLING_TOL {
                    return Err(KgenError::AdiabaticSingular { i, j, gap: gap.norm(), coupling });
                }
                // 0/0 with vanishing coupling
                continue;
            }
            k0t[(i, j)] = -I * m[(i, j)] / gap;
        }
    }
    let k1 = &spec.p * k1t * &spec.p_inv;
    let mut k0 = &spec.p * k0t * &spec.p_inv;
    if !alpha.is_empty() {
        if alpha.len() != n {
            return Err(KgenError::AlphaLength { expected: n, got: alpha.len() });
        }
        if alpha.iter().any(|a| a.norm() != 0.0) {
            for (a, c) in alpha.iter().zip(residual_gauge_basis(spec)?) {
                k0 += c * *a;
            }
        }
    }
    Ok(LinearK { k1, k0 })
}

/// Generator that vanishes at `t = 0` and stays finite through diabolic
/// points: `K̃ᵢⱼ(t) = mᵢⱼ t φ₁(i(λⱼ − λᵢ)t)`, which reduces to `mᵢⱼ t` for
/// degenerate pairs.
pub fn regular_dp_k(fam: &HamiltonianFamily, q: f64) -> Result<TimeK, KgenError> {
    regular_dp_k_with(fam, q, &Thresholds::default())
}

pub fn regular_dp_k_with(
    fam: &HamiltonianFamily,
    q: f64,
    th: &Thresholds,
) -> Result<TimeK, KgenError> {
    let spec = eigendecompose_with(&fam.h(q), th)?;
    if spec.classification == PointClass::Ep {
        return Err(KgenError::EpInput);
    }
    let gap_tol = th.gap_tol(spec.h_norm);
    let n = spec.dim();
    let lam = spec.eigenvalues.clone();
    let dh = fam.dh(q);
    if lam.iter().all(|l| (l - lam[0]).norm() < gap_tol) {
        // H is scalar: K = ∂_qH t without a change of basis
        return Ok(TimeK::new(Gauge::RegularDp, (f64::NEG_INFINITY, f64::INFINITY), move |t| {
            &dh * C64::new(t, 0.0)
        }));
    }
    let m = eigenbasis_m(&spec, &dh)?;
    let (p, p_inv) = (spec.p, spec.p_inv);
    Ok(TimeK::new(Gauge::RegularDp, (f64::NEG_INFINITY, f64::INFINITY), move |t| {
        let kt = CMatrix::from_fn(n, n, |i, j| {
            let d = lam[j] - lam[i];
            if d.norm() < gap_tol {
                m[(i, j)] * t
            } else {
                m[(i, j)] * t * phi1(I * d * t)
            }
        });
        &p * kt * &p_inv
    }))
}

/// `max_t ‖∂ₜK − i[K, H] − ∂_qH‖` over `t_grid`.
pub fn pde_residual<G: Generator + ?Sized>(
    k: &G,
    h: &CMatrix,
    dh: &CMatrix,
    t_grid: &[f64],
    step: f64,
) -> f64 {
    t_grid
        .iter()
        .map(|&t| {
            let kt = k.at(t);
            let r = k.time_derivative(t, step) - (&kt * h - h * &kt) * I - dh;
            r.norm()
        })
        .fold(0.0, f64::max)
}

/// Residual of the homogeneous equation `∂ₜΔK − i[ΔK, H] = 0`.
pub fn gauge_residual<G: Generator + ?Sized>(
    dk: &G,
    h: &CMatrix,
    t_grid: &[f64],
    step: f64,
) -> f64 {
    let zero = CMatrix::zeros(h.nrows(), h.ncols());
    pde_residual(dk, h, &zero, t_grid, step)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Step is at most `step_scale / max(max|λ|, 1)`.
    pub step_scale: f64,
    /// Relative local error bound from step doubling.
    pub local_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { step_scale: 1e-3, local_tol: 1e-10 }
    }
}

#[derive(Clone)]
struct OracleState {
    r: CMatrix,
    r_inv: CMatrix,
    f: CMatrix,
}

impl OracleState {
    fn axpy(&self, d: &OracleState, a: f64) -> OracleState {
        let a = C64::new(a, 0.0);
        OracleState { r: &self.r + &d.r * a, r_inv: &self.r_inv + &d.r_inv * a, f: &self.f + &d.f * a }
    }

    fn norm(&self) -> f64 {
        self.r.norm() + self.r_inv.norm() + self.f.norm()
    }
}

struct OracleSystem {
    h: CMatrix,
    dh: CMatrix,
}

impl OracleSystem {
    // Ṙ = iRH, (R⁻¹)˙ = −iHR⁻¹, Ḟ = R(∂_qH)R⁻¹
    fn rhs(&self, s: &OracleState) -> OracleState {
        OracleState {
            r: &s.r * &self.h * I,
            r_inv: &self.h * &s.r_inv * (-I),
            f: &s.r * &self.dh * &s.r_inv,
        }
    }

    fn rk4(&self, s: &OracleState, dt: f64) -> OracleState {
        let k1 = self.rhs(s);
        let k2 = self.rhs(&s.axpy(&k1, dt / 2.0));
        let k3 = self.rhs(&s.axpy(&k2, dt / 2.0));
        let k4 = self.rhs(&s.axpy(&k3, dt));
        let c = C64::new(dt / 6.0, 0.0);
        let two = C64::new(2.0, 0.0);
        OracleState {
            r: &s.r + (&k1.r + &k2.r * two + &k3.r * two + &k4.r) * c,
            r_inv: &s.r_inv + (&k1.r_inv + &k2.r_inv * two + &k3.r_inv * two + &k4.r_inv) * c,
            f: &s.f + (&k1.f + &k2.f * two + &k3.f * two + &k4.f) * c,
        }
    }

    fn integrate(&self, k_at_0: &CMatrix, t: f64, max_step: f64) -> OracleState {
        let n = self.h.nrows();
        let mut s = OracleState { r: identity(n), r_inv: identity(n), f: k_at_0.clone() };
        let steps = (t.abs() / max_step).ceil().max(1.0) as usize;
        let dt = t / steps as f64;
        for _ in 0..steps {
            s = self.rk4(&s, dt);
        }
        s
    }
}

/// Brute-force generator: integrate `∂ₜR = iRH` from `R(0) = 1` together
/// with `∂ₜF = R(∂_qH)R⁻¹`, `F(0) = K(0)`, and return `K = R⁻¹FR`.
pub fn brute_force_k(
    fam: &HamiltonianFamily,
    q: f64,
    t_grid: &[f64],
    k_at_0: &CMatrix,
) -> Result<TimeK, KgenError> {
    brute_force_k_with(fam, q, t_grid, k_at_0, &OracleOptions::default())
}

pub fn brute_force_k_with(
    fam: &HamiltonianFamily,
    q: f64,
    t_grid: &[f64],
    k_at_0: &CMatrix,
    opts: &OracleOptions,
) -> Result<TimeK, KgenError> {
    let h = fam.h(q);
    let spec = eigendecompose_with(&h, &Thresholds::default())?;
    if spec.classification == PointClass::Ep {
        return Err(KgenError::EpInput);
    }
    let lam_max = spec.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let max_step = opts.step_scale / lam_max.max(1.0);
    let sys = OracleSystem { h, dh: fam.dh(q) };

    // step-doubling check along the longest requested span
    let t_lo = t_grid.iter().copied().fold(0.0, f64::min);
    let t_hi = t_grid.iter().copied().fold(0.0, f64::max);
    for &end in &[t_lo, t_hi] {
        if end == 0.0 {
            continue;
        }
        let steps = (end.abs() / max_step).ceil() as usize;
        let dt = end / steps as f64;
        let n = sys.h.nrows();
        let mut s = OracleState { r: identity(n), r_inv: identity(n), f: k_at_0.clone() };
        for _ in 0..steps {
            let full = sys.rk4(&s, dt);
            let half = sys.rk4(&sys.rk4(&s, dt / 2.0), dt / 2.0);
            let diff = OracleState {
                r: &full.r - &half.r,
                r_inv: &full.r_inv - &half.r_inv,
                f: &full.f - &half.f,
            };
            let estimate = diff.norm() / 15.0 / half.norm().max(1.0);
            if estimate > opts.local_tol {
                return Err(KgenError::StepSizeTooLarge { estimate, tol: opts.local_tol });
            }
            s = half;
        }
    }

    let k0 = k_at_0.clone();
    Ok(TimeK::new(Gauge::Oracle, (t_lo, t_hi), move |t| {
        let s = sys.integrate(&k0, t, max_step);
        &s.r_inv * &s.f * &s.r
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, cmat, eigendecompose, expm, rmat};
    use approx::assert_abs_diff_eq;

    fn ep_family() -> HamiltonianFamily {
        HamiltonianFamily::new(
            2,
            |g| cmat(&[&[c64(0.0, g), c64(1.0, 0.0)], &[c64(1.0, 0.0), c64(0.0, -g)]]),
            |_| cmat(&[&[c64(0.0, 1.0), c64(0.0, 0.0)], &[c64(0.0, 0.0), c64(0.0, -1.0)]]),
        )
    }

    fn assert_close(a: &CMatrix, b: &CMatrix, tol: f64) {
        assert!((a - b).norm() < tol, "\n{a}\nvs\n{b}");
    }

    #[test]
    fn m_matrix_at_symmetric_point() {
        let fam = ep_family();
        let spec = eigendecompose(&fam.h(0.0), 1e-8).unwrap();
        let m = eigenbasis_m(&spec, &fam.dh(0.0)).unwrap();
        // columns (1,-1)/√2 and (1,1)/√2 for λ = -1, 1
        assert_close(&m, &cmat(&[&[c64(0.0, 0.0), I], &[I, c64(0.0, 0.0)]]), 1e-14);
        let zero = eigenbasis_m(&spec, &CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let diag = eigenbasis_m(&spec, &fam.h(0.0)).unwrap();
        assert_close(&diag, &rmat(&[&[-1.0, 0.0], &[0.0, 1.0]]), 1e-14);
    }

    #[test]
    fn adiabatic_at_symmetric_point() {
        let k = solve_adiabatic(&ep_family(), 0.0, &[]).unwrap();
        assert!(k.k1.norm() < 1e-15);
        assert_close(&k.k0, &rmat(&[&[0.0, -0.5], &[0.5, 0.0]]), 1e-15);
    }

    #[test]
    fn adiabatic_at_half() {
        let k = solve_adiabatic(&ep_family(), 0.5, &[]).unwrap();
        assert_abs_diff_eq!(k.k0[(0, 1)].re, -2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.k0[(0, 1)].im, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.k1[(0, 0)].im, -1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.k1[(0, 0)].re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn adiabatic_with_constant_family_is_zero() {
        let h = rmat(&[&[1.0, 0.3], &[0.3, -0.5]]);
        let fam = HamiltonianFamily::new(2, move |_| h.clone(), |_| CMatrix::zeros(2, 2));
        let k = solve_adiabatic(&fam, 0.0, &[]).unwrap();
        assert_eq!(k.k1.norm(), 0.0);
        assert_eq!(k.k0.norm(), 0.0);
    }

    #[test]
    fn adiabatic_rejects_dp_with_coupling_and_ep() {
        // H(q) = q X at q = 0 is the zero matrix, ∂H = X couples the pair
        let fam = HamiltonianFamily::new(
            2,
            |q| rmat(&[&[0.0, q], &[q, 0.0]]),
            |_| rmat(&[&[0.0, 1.0], &[1.0, 0.0]]),
        );
        assert!(matches!(
            solve_adiabatic(&fam, 0.0, &[]),
            Err(KgenError::AdiabaticSingular { .. })
        ));
        assert_eq!(solve_adiabatic(&ep_family(), 1.0, &[]).unwrap_err(), KgenError::EpInput);
    }

    #[test]
    fn adiabatic_zero_coupling_at_dp_is_fine() {
        let fam = HamiltonianFamily::new(
            2,
            |q| rmat(&[&[q, 0.0], &[0.0, -q]]),
            |_| rmat(&[&[1.0, 0.0], &[0.0, -1.0]]),
        );
        let k = solve_adiabatic(&fam, 0.0, &[]).unwrap();
        assert_close(&k.k1, &rmat(&[&[1.0, 0.0], &[0.0, -1.0]]), 1e-14);
        assert!(k.k0.norm() < 1e-14);
    }

    #[test]
    fn residual_gauge_basis_spans_identity_and_h() {
        let fam = ep_family();
        for &g in &[0.0, 0.4, -0.8] {
            let h = fam.h(g);
            let spec = eigendecompose(&h, 1e-8).unwrap();
            let basis = residual_gauge_basis(&spec).unwrap();
            assert_eq!(basis.len(), 2);
            for c in &basis {
                assert!((c * &h - &h * c).norm() < 1e-10);
            }
            // I = C0 + C1, H = λ0 C0 + λ1 C1
            assert_close(&(&basis[0] + &basis[1]), &identity(2), 1e-12);
            let lam = &spec.eigenvalues;
            assert_close(&(&basis[0] * lam[0] + &basis[1] * lam[1]), &h, 1e-12);
        }
        let spec = eigendecompose(&rmat(&[&[1.0, 0.0], &[0.0, 2.0]]), 1e-8).unwrap();
        let basis = residual_gauge_basis(&spec).unwrap();
        assert_close(&basis[0], &rmat(&[&[1.0, 0.0], &[0.0, 0.0]]), 1e-15);
        assert_close(&basis[1], &rmat(&[&[0.0, 0.0], &[0.0, 1.0]]), 1e-15);
        let spec = eigendecompose(&CMatrix::zeros(2, 2), 1e-8).unwrap();
        assert_eq!(residual_gauge_basis(&spec).unwrap_err(), KgenError::DegenerateSpectrum);
    }

    #[test]
    fn alpha_shifts_stay_solutions() {
        let fam = ep_family();
        let g = 0.3;
        let alpha = [c64(0.2, -1.0), c64(-0.7, 0.4)];
        let k = solve_adiabatic(&fam, g, &alpha).unwrap();
        let r = pde_residual(&k, &fam.h(g), &fam.dh(g), &[0.0, 1.0, 5.0], 1e-4);
        assert!(r < 1e-12, "{r}");
        assert_eq!(
            solve_adiabatic(&fam, g, &alpha[..1]).unwrap_err(),
            KgenError::AlphaLength { expected: 2, got: 1 }
        );
    }

    #[test]
    fn regular_dp_entry_at_symmetric_point() {
        let fam = ep_family();
        let k = regular_dp_k(&fam, 0.0).unwrap();
        let spec = eigendecompose(&fam.h(0.0), 1e-8).unwrap();
        for &t in &[0.3, 1.0, 2.5] {
            let kt = &spec.p_inv * k.at(t) * &spec.p;
            // λ = (-1, 1), m₀₁ = i: i·i/2·[1 − e^{2it}]
            let expect = -0.5 * (C64::new(1.0, 0.0) - (I * 2.0 * t).exp());
            assert!((kt[(0, 1)] - expect).norm() < 1e-14);
        }
        assert_eq!(k.at(0.0).norm(), 0.0);
    }

    #[test]
    fn regular_dp_at_full_degeneracy_is_dh_t() {
        let fam = HamiltonianFamily::new(
            2,
            |q| rmat(&[&[0.0, q], &[q, 0.0]]),
            |_| rmat(&[&[0.0, -1.0], &[-1.0, 0.0]]),
        );
        let k = regular_dp_k(&fam, 0.0).unwrap();
        for &t in &[0.0, 1.0, 3.0] {
            assert_close(&k.at(t), &(fam.dh(0.0) * C64::new(t, 0.0)), 1e-15);
        }
        assert_eq!(regular_dp_k(&ep_family(), 1.0).unwrap_err(), KgenError::EpInput);
    }

    #[test]
    fn residual_of_zero_generator_is_dh_norm() {
        let fam = ep_family();
        let z = LinearK::zeros(2);
        let r = pde_residual(&z, &fam.h(0.3), &fam.dh(0.3), &[0.0, 1.0], 1e-4);
        assert_abs_diff_eq!(r, fam.dh(0.3).norm(), epsilon = 1e-15);
    }

    #[test]
    fn gauge_residual_examples() {
        let fam = ep_family();
        let h = fam.h(0.4);
        let spec = eigendecompose(&h, 1e-8).unwrap();
        let grid = [0.0, 0.5, 1.0, 2.0];
        for c in residual_gauge_basis(&spec).unwrap() {
            let dk = TimeK::new(Gauge::Adiabatic, (-10.0, 10.0), move |_| c.clone());
            assert!(gauge_residual(&dk, &h, &grid, 1e-4) < 1e-10);
        }
        // conjugation by the propagator solves the homogeneous equation
        let c = cmat(&[&[c64(0.3, 1.0), c64(-2.0, 0.0)], &[c64(0.0, 0.5), c64(1.0, 1.0)]]);
        let hh = h.clone();
        let dk = TimeK::new(Gauge::Oracle, (-10.0, 10.0), move |t| {
            expm(&(&hh * (-I * t))) * &c * expm(&(&hh * (I * t)))
        });
        let r = gauge_residual(&dk, &h, &grid, 1e-4);
        assert!(r < 1e-6, "{r}");
        let tid = TimeK::new(Gauge::Oracle, (-10.0, 10.0), |t| identity(2) * C64::new(t, 0.0));
        assert_abs_diff_eq!(gauge_residual(&tid, &h, &grid, 1e-4), 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn oracle_reproduces_adiabatic_solution() {
        let fam = ep_family();
        let g = 0.5;
        let k = solve_adiabatic(&fam, g, &[]).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| 0.5 * i as f64).collect();
        let oracle = brute_force_k(&fam, g, &grid, &k.k0).unwrap();
        for &t in &grid {
            assert!((oracle.at(t) - k.at(t)).norm() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn oracle_with_constant_family() {
        let h = rmat(&[&[0.5, 0.2], &[0.2, -1.0]]);
        let hh = h.clone();
        let fam = HamiltonianFamily::new(2, move |_| hh.clone(), |_| CMatrix::zeros(2, 2));
        let grid = [0.0, 1.0, 2.0];
        let zero = brute_force_k(&fam, 0.0, &grid, &CMatrix::zeros(2, 2)).unwrap();
        for &t in &grid {
            assert!(zero.at(t).norm() < 1e-14);
        }
        let spec = eigendecompose(&h, 1e-8).unwrap();
        let c = &residual_gauge_basis(&spec).unwrap()[0];
        let k = brute_force_k(&fam, 0.0, &grid, c).unwrap();
        for &t in &grid {
            assert!((k.at(t) - c).norm() < 1e-9);
        }
    }

    #[test]
    fn oracle_rejects_coarse_steps() {
        let fam = ep_family();
        let opts = OracleOptions { step_scale: 0.5, local_tol: 1e-12 };
        let err = brute_force_k_with(&fam, 0.0, &[0.0, 2.0], &CMatrix::zeros(2, 2), &opts);
        assert!(matches!(err, Err(KgenError::StepSizeTooLarge { .. })));
    }

    #[test]
    fn phi1_is_smooth_through_zero() {
        for &x in &[1e-3, 1.1e-4, 0.9e-4, 1e-8] {
            let z = C64::new(0.0, x);
            let exact = C64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
            assert!((phi1(z) - exact).norm() < 1e-12);
        }
    }
}
