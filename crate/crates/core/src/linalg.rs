//! Dense complex linear algebra: spectra of possibly defective matrices,
//! point classification and single-block Jordan chains.
//!
//! Eigenvalues come from a complex Hessenberg QR iteration. Eigenvectors are
//! taken from the null space of `H - λI` per eigenvalue cluster, which keeps
//! the eigenvector matrix honest at degeneracies: a diagonalizable cluster
//! gets a full basis, a defective one gets coalesced columns.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// The imaginary unit.
pub const I: C64 = C64::new(0.0, 1.0);

const MAX_QR_SWEEPS_PER_EIGENVALUE: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("eigen-solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("matrix is diagonalizable, there is no Jordan chain to build")]
    NotDefective,
    #[error("more than one Jordan block (geometric multiplicity {0})")]
    MultiBlock(usize),
    #[error("Jordan constant must be nonzero")]
    ZeroJordanConstant,
}

/// Regular point, diabolic point (degenerate but diagonalizable) or
/// exceptional point (eigenvectors coalesce).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointClass {
    Regular,
    #[serde(rename = "DP")]
    Dp,
    #[serde(rename = "EP")]
    Ep,
}

impl PointClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointClass::Regular => "Regular",
            PointClass::Dp => "DP",
            PointClass::Ep => "EP",
        }
    }
}

impl std::fmt::Display for PointClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PointClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Regular" => Ok(PointClass::Regular),
            "DP" => Ok(PointClass::Dp),
            "EP" => Ok(PointClass::Ep),
            other => Err(format!("unknown point class `{other}`")),
        }
    }
}

/// Classification thresholds.
///
/// `gap_rel` is relative to the Frobenius norm of the matrix; `ep_tol` is an
/// absolute bound on the smallest singular value of the unit-column
/// eigenvector matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub gap_rel: f64,
    pub ep_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { gap_rel: 1e-8, ep_tol: 1e-6 }
    }
}

impl Thresholds {
    /// Absolute eigenvalue-gap tolerance for a matrix of the given norm.
    pub fn gap_tol(&self, h_norm: f64) -> f64 {
        (self.gap_rel * h_norm).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Sorted by (real, imaginary) with a tolerance on ties.
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors as unit-norm columns.
    pub p: CMatrix,
    pub p_inv: CMatrix,
    /// Smallest singular value of `p`.
    pub min_sv: f64,
    /// Smallest pairwise eigenvalue distance (infinite for 1x1).
    pub min_gap: f64,
    pub h_norm: f64,
    pub classification: PointClass,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `P diag(λ) P⁻¹`.
    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&CVector::from_column_slice(&self.eigenvalues));
        &self.p * d * &self.p_inv
    }

    /// Rescale the eigenvector columns by nonzero factors, keeping `p_inv`
    /// consistent. Eigenvalues and classification are untouched.
    pub fn rescale_columns(&self, factors: &[C64]) -> Spectrum {
        let mut out = self.clone();
        for (k, &f) in factors.iter().enumerate() {
            out.p.column_mut(k).iter_mut().for_each(|z| *z *= f);
            out.p_inv.row_mut(k).iter_mut().for_each(|z| *z /= f);
        }
        out
    }
}

/// Single Jordan block `Q⁻¹ H Q = λ I + c N`.
#[derive(Debug, Clone)]
pub struct JordanBlockData {
    pub size: usize,
    pub lambda: C64,
    pub c: C64,
    /// Columns form the chain: `q[0]` is the eigenvector and
    /// `(H - λ) q[k+1] = c q[k]`.
    pub q: CMatrix,
}

impl JordanBlockData {
    pub fn jordan_matrix(&self) -> CMatrix {
        jordan_block(self.size, self.lambda, self.c)
    }
}

/// `λ` on the diagonal, `c` on the first superdiagonal.
pub fn jordan_block(size: usize, lambda: C64, c: C64) -> CMatrix {
    CMatrix::from_fn(size, size, |i, j| {
        if i == j {
            lambda
        } else if j == i + 1 {
            c
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Build a square matrix from row-major rows.
pub fn cmat(rows: &[&[C64]]) -> CMatrix {
    let n = rows.len();
    CMatrix::from_fn(n, rows.first().map_or(0, |r| r.len()), |i, j| rows[i][j])
}

/// Build a matrix from real row-major rows.
pub fn rmat(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    CMatrix::from_fn(n, rows.first().map_or(0, |r| r.len()), |i, j| {
        C64::new(rows[i][j], 0.0)
    })
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn check_square(h: &CMatrix) -> Result<usize, LinalgError> {
    if h.nrows() != h.ncols() {
        return Err(LinalgError::NotSquare { rows: h.nrows(), cols: h.ncols() });
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(h.nrows())
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if a.shape() != b.shape() {
        return Err(LinalgError::DimensionMismatch(a.nrows(), b.nrows()));
    }
    check_square(a)?;
    Ok(a * b - b * a)
}

/// Largest entry-wise modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = a.norm();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a / C64::new(2f64.powi(squarings as i32), 0.0);
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..=24 {
        term = &term * &scaled / C64::new(k as f64, 0.0);
        sum += &term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Eigenvalues of a square complex matrix via Hessenberg reduction and
/// Wilkinson-shifted QR sweeps. Output is unsorted.
pub fn eigenvalues(h: &CMatrix) -> Result<Vec<C64>, LinalgError> {
    let n = check_square(h)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = hessenberg(h);
    let norm = h.norm();
    let mut eig = vec![C64::new(0.0, 0.0); n];
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let budget = MAX_QR_SWEEPS_PER_EIGENVALUE * n;

    loop {
        if hi == 0 {
            eig[0] = a[(0, 0)];
            break;
        }
        // find the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 {
            let sub = a[(lo, lo - 1)].norm();
            let diag = a[(lo, lo)].norm() + a[(lo - 1, lo - 1)].norm();
            let scale = if diag > 0.0 { diag } else { norm };
            if sub <= f64::EPSILON * scale || sub <= f64::MIN_POSITIVE {
                a[(lo, lo - 1)] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = a[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        if lo + 1 == hi {
            let (l1, l2) = eig2x2(a[(lo, lo)], a[(lo, hi)], a[(hi, lo)], a[(hi, hi)]);
            eig[lo] = l1;
            eig[hi] = l2;
            if lo == 0 {
                break;
            }
            hi = lo - 1;
            iter = 0;
            continue;
        }

        iter += 1;
        total += 1;
        if total > budget {
            return Err(LinalgError::NonConvergence { iterations: total });
        }
        let shift = if iter % 11 == 10 {
            // exceptional shift to break cycles
            a[(hi, hi)] + C64::new(0.75 * a[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(
                a[(hi - 1, hi - 1)],
                a[(hi - 1, hi)],
                a[(hi, hi - 1)],
                a[(hi, hi)],
            )
        };
        qr_sweep(&mut a, lo, hi, shift);
    }
    Ok(eig)
}

fn hessenberg(h: &CMatrix) -> CMatrix {
    let n = h.nrows();
    let mut a = h.clone();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { C64::new(1.0, 0.0) };
        let alpha = -phase * xnorm;
        let mut v = x.clone();
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // A <- (I - 2 v v^H) A
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for (idx, i) in (k + 1..n).enumerate() {
                s += v[idx].conj() * a[(i, j)];
            }
            for (idx, i) in (k + 1..n).enumerate() {
                a[(i, j)] -= 2.0 * v[idx] * s;
            }
        }
        // A <- A (I - 2 v v^H)
        for i in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for (idx, j) in (k + 1..n).enumerate() {
                s += a[(i, j)] * v[idx];
            }
            for (idx, j) in (k + 1..n).enumerate() {
                a[(i, j)] -= 2.0 * s * v[idx].conj();
            }
        }
        for i in k + 2..n {
            a[(i, k)] = C64::new(0.0, 0.0);
        }
    }
    a
}

/// Givens pair `(c, s)` with `[[c, s], [-s̄, c]] [a; b] = [r; 0]`.
fn givens(a: C64, b: C64) -> (f64, C64) {
    let r = a.norm().hypot(b.norm());
    if r == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if a.norm() == 0.0 {
        return (0.0, b.conj() / b.norm());
    }
    let c = a.norm() / r;
    let s = (a / a.norm()) * b.conj() / r;
    (c, s)
}

fn qr_sweep(a: &mut CMatrix, lo: usize, hi: usize, shift: C64) {
    for k in lo..=hi {
        a[(k, k)] -= shift;
    }
    let mut rots = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let (c, s) = givens(a[(k, k)], a[(k + 1, k)]);
        for j in k..=hi {
            let x = a[(k, j)];
            let y = a[(k + 1, j)];
            a[(k, j)] = c * x + s * y;
            a[(k + 1, j)] = -s.conj() * x + c * y;
        }
        rots.push((c, s));
    }
    for (idx, k) in (lo..hi).enumerate() {
        let (c, s) = rots[idx];
        for i in lo..=(k + 2).min(hi) {
            let x = a[(i, k)];
            let y = a[(i, k + 1)];
            a[(i, k)] = x * c + y * s.conj();
            a[(i, k + 1)] = -x * s + y * c;
        }
    }
    for k in lo..=hi {
        a[(k, k)] += shift;
    }
}

fn eig2x2(a: C64, b: C64, c: C64, d: C64) -> (C64, C64) {
    let mean = (a + d) * 0.5;
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let l1 = if (mean + disc).norm() >= (mean - disc).norm() { mean + disc } else { mean - disc };
    let det = a * d - b * c;
    let l2 = if l1.norm() > 0.0 { det / l1 } else { mean - (l1 - mean) };
    (l1, l2)
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let (l1, l2) = eig2x2(a, b, c, d);
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Compare two complex numbers lexicographically by (re, im), treating
/// differences below `tol` as equal.
pub fn cmp_complex(a: C64, b: C64, tol: f64) -> Ordering {
    if (a.re - b.re).abs() > tol {
        return a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal);
    }
    if (a.im - b.im).abs() > tol {
        return a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal);
    }
    Ordering::Equal
}

fn cmp_vectors(a: &CVector, b: &CVector) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.re.partial_cmp(&y.re).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            o => return o,
        }
        match x.im.partial_cmp(&y.im).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Unit norm, with the largest-modulus entry made real and positive.
/// Near-ties in modulus resolve to the lowest index.
pub fn normalize_phase(v: &mut CVector) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let k = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    let phase = v[k] / v[k].norm();
    let f = phase.conj() / norm;
    for z in v.iter_mut() {
        *z *= f;
    }
}

/// Singular values ascending, with the matching right singular vectors as
/// columns.
pub(crate) fn svd_ascending(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| {
        svd.singular_values[i]
            .partial_cmp(&svd.singular_values[j])
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    let vals = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let vecs = CMatrix::from_fn(n, idx.len(), |r, c| v_t[(idx[c], r)].conj());
    (vals, vecs)
}

pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    s
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pseudo_inverse(a: &CMatrix, rel_cutoff: f64) -> CMatrix {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_cutoff * smax;
    let u = svd.u.expect("u");
    let v_t = svd.v_t.expect("v_t");
    let mut out = CMatrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let vk = v_t.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += vk * uk / C64::new(s, 0.0);
        }
    }
    out
}

fn min_pairwise_gap(eigs: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..eigs.len() {
        for j in i + 1..eigs.len() {
            gap = gap.min((eigs[i] - eigs[j]).norm());
        }
    }
    gap
}

/// Group eigenvalue indices whose pairwise distances chain below `tol`.
fn clusters(eigs: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = eigs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut k = i;
        while p[k] != r {
            let next = p[k];
            p[k] = r;
            k = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (eigs[i] - eigs[j]).norm() < tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_of[r] == usize::MAX {
            root_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_of[r]].push(i);
    }
    groups
}

/// Eigen-decomposition with relative gap tolerance `tol` and the default EP
/// threshold.
pub fn eigendecompose(h: &CMatrix, tol: f64) -> Result<Spectrum, LinalgError> {
    eigendecompose_with(h, &Thresholds { gap_rel: tol, ..Thresholds::default() })
}

pub fn eigendecompose_with(h: &CMatrix, th: &Thresholds) -> Result<Spectrum, LinalgError> {
    let n = check_square(h)?;
    let h_norm = h.norm();
    let gap_tol = th.gap_tol(h_norm);
    let rank_tol = (th.gap_rel.sqrt() * h_norm).max(f64::MIN_POSITIVE);
    let eigs = eigenvalues(h)?;

    let mut pairs: Vec<(C64, CVector)> = Vec::with_capacity(n);
    for group in clusters(&eigs, gap_tol) {
        let m = group.len();
        let mean = group.iter().map(|&i| eigs[i]).sum::<C64>() / m as f64;
        let shifted = h - identity(n) * mean;
        let (svals, vecs) = svd_ascending(&shifted);
        let nullity = if m == 1 {
            1
        } else {
            svals.iter().take(m).filter(|&&s| s <= rank_tol).count().max(1)
        };
        for (slot, &i) in group.iter().enumerate() {
            // a defective cluster repeats its last genuine eigenvector
            let col = slot.min(nullity - 1);
            let mut v = vecs.column(col).into_owned();
            normalize_phase(&mut v);
            pairs.push((eigs[i], v));
        }
    }

    let order_tol = gap_tol;
    pairs.sort_by(|a, b| cmp_complex(a.0, b.0, order_tol).then_with(|| cmp_vectors(&a.1, &b.1)));

    let eigenvalues: Vec<C64> = pairs.iter().map(|p| p.0).collect();
    let mut p = CMatrix::zeros(n, n);
    for (k, (_, v)) in pairs.iter().enumerate() {
        p.set_column(k, v);
    }
    let min_sv = singular_values(&p).first().copied().unwrap_or(0.0);
    let p_inv = p
        .clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .unwrap_or_else(|| pseudo_inverse(&p, 1e-14));
    let min_gap = min_pairwise_gap(&eigenvalues);

    let mut spec = Spectrum {
        eigenvalues,
        p,
        p_inv,
        min_sv,
        min_gap,
        h_norm,
        classification: PointClass::Regular,
    };
    spec.classification = classify_point(&spec, gap_tol, th.ep_tol);
    Ok(spec)
}

/// EP iff `min_sv < ep_tol`; DP iff the smallest gap is below `gap_tol`
/// while the eigenvectors stay independent.
pub fn classify_point(spec: &Spectrum, gap_tol: f64, ep_tol: f64) -> PointClass {
    if spec.min_sv < ep_tol {
        PointClass::Ep
    } else if spec.min_gap < gap_tol {
        PointClass::Dp
    } else {
        PointClass::Regular
    }
}

/// Jordan chain for a matrix with a single defective eigenvalue and
/// geometric multiplicity one. `tol` is the relative rank tolerance used
/// squared-root-scaled for the null-space decision.
pub fn jordanize_single_block(h: &CMatrix, c: C64, tol: f64) -> Result<JordanBlockData, LinalgError> {
    let n = check_square(h)?;
    if c.norm() == 0.0 {
        return Err(LinalgError::ZeroJordanConstant);
    }
    let spec = eigendecompose(h, tol)?;
    if spec.classification != PointClass::Ep {
        return Err(LinalgError::NotDefective);
    }
    let h_norm = h.norm();
    let lambda = h.trace() / n as f64;
    let shifted = h - identity(n) * lambda;
    // a single eigenvalue means the shifted matrix is nilpotent
    let mut power = shifted.clone();
    for _ in 1..n {
        power = &power * &shifted;
    }
    let scale = h_norm.max(f64::MIN_POSITIVE).powi(n as i32);
    if power.norm() > tol.sqrt() * scale {
        return Err(LinalgError::MultiBlock(n));
    }
    let rank_tol = (tol.sqrt() * h_norm).max(f64::MIN_POSITIVE);
    let (svals, vecs) = svd_ascending(&shifted);
    let nullity = svals.iter().filter(|&&s| s <= rank_tol).count();
    if nullity >= n {
        return Err(LinalgError::NotDefective);
    }
    if nullity > 1 {
        return Err(LinalgError::MultiBlock(nullity));
    }

    // minimum-norm chain through the rank-(n-1) pseudo-inverse
    let pinv = {
        let svd = shifted.clone().svd(true, true);
        let u = svd.u.expect("u");
        let v_t = svd.v_t.expect("v_t");
        let mut out = CMatrix::zeros(n, n);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > rank_tol {
                out += v_t.row(k).adjoint() * u.column(k).adjoint() / C64::new(s, 0.0);
            }
        }
        out
    };
    let mut q = CMatrix::zeros(n, n);
    let mut v = vecs.column(0).into_owned();
    normalize_phase(&mut v);
    q.set_column(0, &v);
    for k in 1..n {
        let rhs = q.column(k - 1) * c;
        let w = &pinv * rhs;
        q.set_column(k, &w);
    }
    Ok(JordanBlockData { size: n, lambda, c, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn h_ep(gamma: f64) -> CMatrix {
        cmat(&[&[c64(0.0, gamma), c64(1.0, 0.0)], &[c64(1.0, 0.0), c64(0.0, -gamma)]])
    }

    #[test]
    fn symmetric_two_by_two_is_regular() {
        let s = eigendecompose(&h_ep(0.0), 1e-8).unwrap();
        assert_eq!(s.classification, PointClass::Regular);
        assert_abs_diff_eq!(s.eigenvalues[0].re, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues[1].re, 1.0, epsilon = 1e-14);
        assert!((s.reconstruct() - h_ep(0.0)).norm() < 1e-13);
    }

    #[test]
    fn exceptional_point_is_ep() {
        let s = eigendecompose(&h_ep(1.0), 1e-8).unwrap();
        assert_eq!(s.classification, PointClass::Ep);
        for l in &s.eigenvalues {
            assert!(l.norm() < 1e-7, "{l}");
        }
    }

    #[test]
    fn zero_matrix_is_dp() {
        let s = eigendecompose(&CMatrix::zeros(2, 2), 1e-8).unwrap();
        assert_eq!(s.classification, PointClass::Dp);
        assert_eq!(s.eigenvalues, vec![c64(0.0, 0.0); 2]);
        let s = eigendecompose(&(identity(3) * c64(2.0, 0.0)), 1e-8).unwrap();
        assert_eq!(s.classification, PointClass::Dp);
        assert!((&s.p * &s.p_inv - identity(3)).norm() < 1e-13);
    }

    #[test]
    fn near_ep_is_regular() {
        let s = eigendecompose(&h_ep(0.999), 1e-8).unwrap();
        assert_eq!(s.classification, PointClass::Regular);
        assert_abs_diff_eq!(s.min_gap, 2.0 * (1.0f64 - 0.999 * 0.999).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn min_sv_shrinks_towards_ep() {
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let g = 0.9 + 0.01 * k as f64;
            let s = eigendecompose(&h_ep(g), 1e-8).unwrap();
            assert!(s.min_sv < prev, "γ={g}: {} !< {prev}", s.min_sv);
            prev = s.min_sv;
        }
    }

    #[test]
    fn complex_spectrum_of_random_matrix() {
        let h = cmat(&[
            &[c64(0.3, 0.1), c64(-1.2, 0.5), c64(0.7, 0.0), c64(0.0, 2.0)],
            &[c64(1.1, 0.0), c64(0.2, -0.4), c64(0.0, 0.3), c64(0.5, 0.5)],
            &[c64(-0.6, 0.2), c64(0.9, 0.0), c64(-0.8, 0.1), c64(1.0, 0.0)],
            &[c64(0.0, 0.0), c64(0.4, 0.4), c64(0.2, 0.0), c64(0.6, -1.0)],
        ]);
        let s = eigendecompose(&h, 1e-8).unwrap();
        assert_eq!(s.classification, PointClass::Regular);
        let d = CMatrix::from_diagonal(&CVector::from_column_slice(&s.eigenvalues));
        assert!((&h * &s.p - &s.p * d).norm() < 1e-12 * h.norm());
        assert!((&s.p * &s.p_inv - identity(4)).norm() < 1e-12);
        let tr: C64 = s.eigenvalues.iter().sum();
        assert!((tr - h.trace()).norm() < 1e-12);
    }

    #[test]
    fn ordering_is_lexicographic() {
        let h = CMatrix::from_diagonal(&CVector::from_vec(vec![
            c64(1.0, 2.0),
            c64(-1.0, 0.0),
            c64(1.0, -2.0),
        ]));
        let s = eigendecompose(&h, 1e-8).unwrap();
        assert_eq!(s.eigenvalues, vec![c64(-1.0, 0.0), c64(1.0, -2.0), c64(1.0, 2.0)]);
    }

    #[test]
    fn commutator_examples() {
        let x = rmat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let z = rmat(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert_eq!(commutator(&identity(2), &x).unwrap(), CMatrix::zeros(2, 2));
        assert_eq!(commutator(&x, &z).unwrap(), rmat(&[&[0.0, -2.0], &[2.0, 0.0]]));
        let h = h_ep(0.5);
        assert_eq!(commutator(&h, &h).unwrap(), CMatrix::zeros(2, 2));
        assert!(matches!(
            commutator(&identity(2), &identity(3)),
            Err(LinalgError::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            eigendecompose(&CMatrix::zeros(2, 3), 1e-8),
            Err(LinalgError::NotSquare { .. })
        ));
        let mut h = identity(2);
        h[(0, 1)] = c64(f64::NAN, 0.0);
        assert_eq!(eigendecompose(&h, 1e-8).unwrap_err(), LinalgError::NonFinite);
    }

    #[test]
    fn jordan_chain_of_ep_matrix() {
        let h = h_ep(1.0);
        let j = jordanize_single_block(&h, c64(1.0, 0.0), 1e-8).unwrap();
        assert_eq!(j.size, 2);
        assert!(j.lambda.norm() < 1e-14);
        let qinv = j.q.clone().try_inverse().unwrap();
        let jm = &qinv * &h * &j.q;
        assert!((jm - rmat(&[&[0.0, 1.0], &[0.0, 0.0]])).norm() < 1e-12);
    }

    #[test]
    fn jordan_chain_already_jordan() {
        let h = rmat(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let j = jordanize_single_block(&h, c64(1.0, 0.0), 1e-8).unwrap();
        assert!((j.q - identity(2)).norm() < 1e-14);
    }

    #[test]
    fn jordan_chain_three_by_three() {
        // similarity transform of a 3-block with λ = 0.5 - 0.2i
        let lam = c64(0.5, -0.2);
        let t = cmat(&[
            &[c64(1.0, 0.0), c64(0.2, 0.1), c64(0.0, 0.3)],
            &[c64(0.0, -0.4), c64(1.0, 0.0), c64(0.5, 0.0)],
            &[c64(0.3, 0.0), c64(0.0, 0.0), c64(1.0, 0.2)],
        ]);
        let h = &t * jordan_block(3, lam, c64(1.0, 0.0)) * t.clone().try_inverse().unwrap();
        let c = c64(0.7, 0.1);
        let j = jordanize_single_block(&h, c, 1e-8).unwrap();
        assert!((j.lambda - lam).norm() < 1e-10);
        let a = &h - identity(3) * j.lambda;
        for k in 0..2 {
            let lhs = &a * j.q.column(k + 1);
            let rhs = j.q.column(k) * c;
            assert!((lhs - rhs).norm() < 1e-9);
        }
        let qinv = j.q.clone().try_inverse().unwrap();
        assert!((&qinv * &h * &j.q - j.jordan_matrix()).norm() < 1e-8);
    }

    #[test]
    fn jordan_rejects_diagonalizable_and_multiblock() {
        let h = rmat(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(
            jordanize_single_block(&h, c64(1.0, 0.0), 1e-8).unwrap_err(),
            LinalgError::NotDefective
        );
        assert_eq!(
            jordanize_single_block(&h_ep(0.3), c64(1.0, 0.0), 1e-8).unwrap_err(),
            LinalgError::NotDefective
        );
        // two 2x2 blocks with the same eigenvalue
        let mut h = CMatrix::zeros(4, 4);
        h[(0, 1)] = c64(1.0, 0.0);
        h[(2, 3)] = c64(1.0, 0.0);
        assert_eq!(
            jordanize_single_block(&h, c64(1.0, 0.0), 1e-8).unwrap_err(),
            LinalgError::MultiBlock(2)
        );
    }

    #[test]
    fn expm_of_pauli_rotation() {
        let x = rmat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let t = 0.7f64;
        let u = expm(&(&x * (I * t)));
        let expect = identity(2) * c64(t.cos(), 0.0) + &x * (I * t.sin());
        assert!((u - expect).norm() < 1e-14);
    }
}
