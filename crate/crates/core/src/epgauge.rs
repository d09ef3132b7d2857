//! A generator that stays continuous through an exceptional point where a
//! single Jordan block forms.
//!
//! Near the EP, `H = Q J̃ Q⁻¹` with `J̃` upper bidiagonal (eigenvalues on
//! the diagonal, a fixed constant `c` above it) and `Q = P̃ S̃`. Both `Q` and
//! `W̃ = exp(i J̃ t)` have finite limits at the EP, and
//!
//! `K(t) = Q W̃⁻¹ [𝓘(t) − 𝓘(t₀) + C] W̃ Q⁻¹`,  `∂ₜ𝓘 = W̃ Q⁻¹ (∂_qH) Q W̃⁻¹`,
//!
//! with `C` fixed by the prescribed `K(t₀)`.

use std::sync::OnceLock;

use thiserror::Error;

use crate::kgen::{Gauge, HamiltonianFamily, KgenError, TimeK};
use crate::linalg::{
    eigendecompose_with, expm, jordan_block, jordanize_single_block, CMatrix, LinalgError,
    PointClass, Thresholds, C64, I,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpGaugeError {
    #[error("eigenvalues {i} and {j} coincide (|λᵢ − λⱼ| = {gap:e})")]
    DegenerateLambdas { i: usize, j: usize, gap: f64 },
    #[error("Jordan blocks of size {0} are not supported (sizes 1 to 3 are)")]
    UnsupportedSize(usize),
    #[error("the coalescence at q = {q_ep} is not a single Jordan block: {source}")]
    NotSingleBlock { q_ep: f64, source: LinalgError },
    #[error("|q − q_ep| = {distance:e} is outside the neighborhood radius {radius:e}")]
    NeighborhoodTooWide { distance: f64, radius: f64 },
    #[error("anchor row {row} has a vanishing entry in column {col}")]
    ZeroAnchor { row: usize, col: usize },
    #[error("superdiagonal constant must be nonzero")]
    ZeroConstant,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kgen(#[from] KgenError),
}

pub const MAX_BLOCK: usize = 3;

fn lambda_tol(lambdas: &[C64]) -> f64 {
    1e-13 * lambdas.iter().map(|l| l.norm()).fold(1.0, f64::max)
}

fn check_distinct(lambdas: &[C64]) -> Result<(), EpGaugeError> {
    let tol = lambda_tol(lambdas);
    for i in 0..lambdas.len() {
        for j in i + 1..lambdas.len() {
            let gap = (lambdas[i] - lambdas[j]).norm();
            if gap < tol {
                return Err(EpGaugeError::DegenerateLambdas { i, j, gap });
            }
        }
    }
    Ok(())
}

/// `S̃ᵢₖ = cᵏ / ∏_{j ≤ k, j ≠ i} (λᵢ − λⱼ)` for `i ≤ k` (zero-based), so that
/// `S̃⁻¹ diag(λ) S̃ = J̃`.
pub fn build_stilde(lambdas: &[C64], c: C64) -> Result<CMatrix, EpGaugeError> {
    if c.norm() == 0.0 {
        return Err(EpGaugeError::ZeroConstant);
    }
    check_distinct(lambdas)?;
    let n = lambdas.len();
    let mut s = CMatrix::zeros(n, n);
    for k in 0..n {
        let ck = c.powu(k as u32);
        for i in 0..=k {
            let den: C64 = (0..=k).filter(|&j| j != i).map(|j| lambdas[i] - lambdas[j]).product();
            s[(i, k)] = ck / den;
        }
    }
    Ok(s)
}

/// Upper bidiagonal `J̃` with `lambdas` on the diagonal and `c` above it.
pub fn build_jtilde(lambdas: &[C64], c: C64) -> CMatrix {
    let n = lambdas.len();
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            lambdas[i]
        } else if j == i + 1 {
            c
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `W̃(t) = exp(i J̃ t)`. Entry `(i, j)` is `c^{j−i}` times the divided
/// difference of `x ↦ e^{ixt}` over `λᵢ..λⱼ`; on the first superdiagonal
/// that is `c(e^{iλᵢt} − e^{iλⱼt})/(λᵢ − λⱼ)`.
pub fn build_wtilde(lambdas: &[C64], c: C64, t: f64) -> Result<CMatrix, EpGaugeError> {
    let n = lambdas.len();
    if n == 0 || n > MAX_BLOCK {
        return Err(EpGaugeError::UnsupportedSize(n));
    }
    check_distinct(lambdas)?;
    Ok(expm(&(build_jtilde(lambdas, c) * (I * t))))
}

/// The coalesced limit `exp(i J_EP t)`: `e^{iλt}` times `(ict)ᵏ/k!` on the
/// `k`-th superdiagonal.
pub fn w_ep(size: usize, lambda: C64, c: C64, t: f64) -> CMatrix {
    let phase = (I * lambda * t).exp();
    let ict = I * c * t;
    let mut coeff = vec![C64::new(1.0, 0.0); size];
    for k in 1..size {
        coeff[k] = coeff[k - 1] * ict / k as f64;
    }
    CMatrix::from_fn(size, size, |i, j| if j >= i { phase * coeff[j - i] } else { C64::new(0.0, 0.0) })
}

/// `max_t ‖W_EP⁻¹ ∂ₜW_EP − i J_EP‖` with a central difference of step `h`.
pub fn wep_check(j_ep: &CMatrix, lambda: C64, c: C64, t_grid: &[f64], h: f64) -> f64 {
    let n = j_ep.nrows();
    t_grid
        .iter()
        .map(|&t| {
            let dw = (w_ep(n, lambda, c, t + h) - w_ep(n, lambda, c, t - h)) / C64::new(2.0 * h, 0.0);
            let winv = w_ep(n, lambda, c, t).try_inverse().expect("W_EP is unit upper triangular times a phase");
            (winv * dw - j_ep * I).norm()
        })
        .fold(0.0, f64::max)
}

/// Divide each column by its entry in `anchor_row` (zero-based).
pub fn rescale_columns(p: &CMatrix, anchor_row: usize) -> Result<CMatrix, EpGaugeError> {
    let mut out = p.clone();
    for k in 0..p.ncols() {
        let a = p[(anchor_row, k)];
        let scale = p.column(k).norm().max(f64::MIN_POSITIVE);
        if a.norm() < 1e-12 * scale {
            return Err(EpGaugeError::ZeroAnchor { row: anchor_row, col: k });
        }
        out.column_mut(k).iter_mut().for_each(|z| *z /= a);
    }
    Ok(out)
}

fn gauss_legendre_8() -> &'static ([f64; 8], [f64; 8]) {
    static NODES: OnceLock<([f64; 8], [f64; 8])> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = 8;
        let mut x = [0.0; 8];
        let mut w = [0.0; 8];
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    let dp = {
                        let (mut p0, mut p1) = (1.0, z);
                        for k in 2..=n {
                            let kf = k as f64;
                            let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                            p0 = p1;
                            p1 = p2;
                        }
                        n as f64 * (z * p1 - p0) / (z * z - 1.0)
                    };
                    x[i] = z;
                    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                    break;
                }
            }
        }
        (x, w)
    })
}

/// Composite 8-point Gauss–Legendre quadrature of a matrix integrand.
fn integrate<F: Fn(f64) -> CMatrix>(f: F, a: f64, b: f64, max_panel: f64, n: usize) -> CMatrix {
    let mut acc = CMatrix::zeros(n, n);
    if a == b {
        return acc;
    }
    let panels = ((b - a).abs() / max_panel).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let (x, w) = gauss_legendre_8();
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for (xi, wi) in x.iter().zip(w) {
            acc += f(mid + 0.5 * width * xi) * C64::new(0.5 * width * wi, 0.0);
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpGaugeOptions {
    /// Superdiagonal constant of `J̃`.
    pub c: C64,
    /// Time at which `K` takes the prescribed value.
    pub t0: f64,
    /// Largest `|q − q_ep|` accepted.
    pub radius: f64,
    /// Points with `|q − q_ep|` below this use the coalesced limit forms.
    pub snap: f64,
    /// Relative tolerance for the Jordan chain at `q_ep`.
    pub jordan_tol: f64,
    /// Quadrature panel width in `t`.
    pub max_panel: f64,
}

impl Default for EpGaugeOptions {
    fn default() -> Self {
        EpGaugeOptions { c: C64::new(1.0, 0.0), t0: 0.0, radius: 0.25, snap: 1e-10, jordan_tol: 1e-6, max_panel: 0.25 }
    }
}

/// Basis data at one `q`: `H = Q J̃ Q⁻¹`.
#[derive(Debug, Clone)]
pub struct EpBasis {
    pub q: f64,
    pub lambdas: Vec<C64>,
    pub qmat: CMatrix,
    pub qinv: CMatrix,
    pub at_ep: bool,
}

/// The gauge construction around one exceptional point of a family.
#[derive(Debug, Clone)]
pub struct EpVicinityGauge {
    pub fam: HamiltonianFamily,
    pub q_ep: f64,
    pub lambda_ep: C64,
    pub size: usize,
    pub anchor: usize,
    pub q_ep_matrix: CMatrix,
    pub j_ep: CMatrix,
    pub options: EpGaugeOptions,
}

impl EpVicinityGauge {
    pub fn new(fam: HamiltonianFamily, q_ep: f64, options: EpGaugeOptions) -> Result<Self, EpGaugeError> {
        if options.c.norm() == 0.0 {
            return Err(EpGaugeError::ZeroConstant);
        }
        let n = fam.dim;
        if n == 0 || n > MAX_BLOCK {
            return Err(EpGaugeError::UnsupportedSize(n));
        }
        let h = fam.h(q_ep);
        let chain = jordanize_single_block(&h, options.c, options.jordan_tol)
            .map_err(|source| EpGaugeError::NotSingleBlock { q_ep, source })?;
        // anchor: the largest entry of the eigenvector, lowest index on ties
        let v = chain.q.column(0);
        let vmax = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let anchor = v.iter().position(|z| z.norm() >= vmax * (1.0 - 1e-9)).unwrap_or(0);
        // right-multiply by the upper triangular Toeplitz matrix commuting
        // with J that turns the anchor row into (1, 0, ..., 0)
        let a: Vec<C64> = (0..n).map(|k| chain.q[(anchor, k)]).collect();
        let mut tcoef = vec![C64::new(0.0, 0.0); n];
        tcoef[0] = C64::new(1.0, 0.0) / a[0];
        for k in 1..n {
            let s: C64 = (1..=k).map(|i| a[i] * tcoef[k - i]).sum();
            tcoef[k] = -s / a[0];
        }
        let toeplitz = CMatrix::from_fn(n, n, |i, j| if j >= i { tcoef[j - i] } else { C64::new(0.0, 0.0) });
        let q_ep_matrix = &chain.q * toeplitz;
        Ok(EpVicinityGauge {
            fam,
            q_ep,
            lambda_ep: chain.lambda,
            size: n,
            anchor,
            q_ep_matrix,
            j_ep: jordan_block(n, chain.lambda, options.c),
            options,
        })
    }

    /// `Q(q)` and the eigenvalue ordering it goes with.
    pub fn basis(&self, q: f64) -> Result<EpBasis, EpGaugeError> {
        let distance = (q - self.q_ep).abs();
        if distance > self.options.radius {
            return Err(EpGaugeError::NeighborhoodTooWide { distance, radius: self.options.radius });
        }
        let (lambdas, qmat, at_ep) = if distance < self.options.snap {
            (vec![self.lambda_ep; self.size], self.q_ep_matrix.clone(), true)
        } else {
            let th = Thresholds { gap_rel: 1e-12, ep_tol: 1e-13 };
            let spec = eigendecompose_with(&self.fam.h(q), &th)?;
            if spec.classification != PointClass::Regular {
                let (i, j, gap) = closest_pair(&spec.eigenvalues);
                return Err(EpGaugeError::DegenerateLambdas { i, j, gap });
            }
            let lambdas = match_to_ep(&spec.eigenvalues, self.lambda_ep);
            let order: Vec<usize> = lambdas.iter().map(|&(k, _)| k).collect();
            let lambdas: Vec<C64> = lambdas.into_iter().map(|(_, l)| l).collect();
            let p = CMatrix::from_fn(self.size, self.size, |i, j| spec.p[(i, order[j])]);
            let p = rescale_columns(&p, self.anchor)?;
            let s = build_stilde(&lambdas, self.options.c)?;
            (lambdas, p * s, false)
        };
        let qinv = qmat.clone().try_inverse().ok_or(LinalgError::NonFinite)?;
        Ok(EpBasis { q, lambdas, qmat, qinv, at_ep })
    }

    /// `W̃(q, t)`, the limit form exactly at the EP.
    pub fn wtilde(&self, basis: &EpBasis, t: f64) -> CMatrix {
        if basis.at_ep {
            w_ep(self.size, self.lambda_ep, self.options.c, t)
        } else {
            expm(&(build_jtilde(&basis.lambdas, self.options.c) * (I * t)))
        }
    }

    /// The generator at `q` with `K(t₀) = k_at_t0`.
    pub fn generator(&self, q: f64, k_at_t0: &CMatrix, t_domain: (f64, f64)) -> Result<TimeK, EpGaugeError> {
        let n = self.size;
        if k_at_t0.shape() != (n, n) {
            return Err(LinalgError::DimensionMismatch(k_at_t0.nrows(), n).into());
        }
        let basis = self.basis(q)?;
        let m = &basis.qinv * self.fam.dh(q) * &basis.qmat;
        let t0 = self.options.t0;
        let w0 = self.wtilde(&basis, t0);
        let w0inv = self.wtilde(&basis, -t0);
        let c0 = &w0 * &basis.qinv * k_at_t0 * &basis.qmat * &w0inv;
        let this = self.clone();
        let panel = self.options.max_panel;
        Ok(TimeK::new(Gauge::RegularEp, t_domain, move |t| {
            let integrand = |s: f64| this.wtilde(&basis, s) * &m * this.wtilde(&basis, -s);
            let inner = integrate(integrand, t0, t, panel, n) + &c0;
            &basis.qmat * this.wtilde(&basis, -t) * inner * this.wtilde(&basis, t) * &basis.qinv
        }))
    }
}

fn closest_pair(lambdas: &[C64]) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..lambdas.len() {
        for j in i + 1..lambdas.len() {
            let g = (lambdas[i] - lambdas[j]).norm();
            if g < best.2 {
                best = (i, j, g);
            }
        }
    }
    best
}

/// Order eigenvalues by continuation from the coalesced value: sorted by
/// argument of `λ − λ_ep`, which is stable along a path that approaches
/// the EP from one side.
fn match_to_ep(lambdas: &[C64], lambda_ep: C64) -> Vec<(usize, C64)> {
    let mut out: Vec<(usize, C64)> = lambdas.iter().copied().enumerate().collect();
    out.sort_by(|a, b| {
        let aa = (a.1 - lambda_ep).arg();
        let bb = (b.1 - lambda_ep).arg();
        aa.partial_cmp(&bb).unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

/// Convenience wrapper with default options: the generator at `q` near the
/// exceptional point `q_ep`, defined on the span of `t_grid` and equal to
/// `k_at_t0` at `t = 0`.
pub fn continuous_k_near_ep(
    fam: &HamiltonianFamily,
    q_ep: f64,
    q: f64,
    t_grid: &[f64],
    k_at_t0: &CMatrix,
) -> Result<TimeK, EpGaugeError> {
    let gauge = EpVicinityGauge::new(fam.clone(), q_ep, EpGaugeOptions::default())?;
    let lo = t_grid.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    gauge.generator(q, k_at_t0, (lo, hi))
}
