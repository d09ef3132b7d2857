//! Hamiltonian families with known generators: the 2x2 non-Hermitian model
//! with exceptional points at `γ = ±1`, the SSH momentum block and chain,
//! and user-supplied tabulated families.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgen::{Gauge, Generator, HamiltonianFamily, LinearK, TimeK};
use crate::linalg::{c64, cmat, CMatrix, C64, I};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("γ = {0} is an exceptional point; the adiabatic generator does not exist there")]
    EpParam(f64),
    #[error("ξ vanishes at g = {g}, θ = {theta}; the adiabatic generator does not exist there")]
    DpParam { g: f64, theta: f64 },
    #[error("SSH chain needs at least 2 sites, got {0}")]
    ChainTooShort(usize),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` has no parameter `{param}`")]
    UnknownParam { model: String, param: String },
    #[error("invalid custom model: {0}")]
    Custom(String),
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

// ---------------------------------------------------------------- EP model

pub fn h_ep(gamma: f64) -> CMatrix {
    cmat(&[&[c64(0.0, gamma), c64(1.0, 0.0)], &[c64(1.0, 0.0), c64(0.0, -gamma)]])
}

pub fn dh_ep() -> CMatrix {
    cmat(&[&[I, zero()], &[zero(), -I]])
}

pub fn ep_family() -> HamiltonianFamily {
    HamiltonianFamily::new(2, h_ep, |_| dh_ep()).with_critical_points(vec![-1.0, 1.0])
}

/// Adiabatic-gauge generator of the EP model with residual gauge
/// coefficients `a1` (identity) and `a2` (the Hamiltonian).
pub fn k_ep_adiabatic(gamma: f64, t: f64, a1: C64, a2: C64) -> Result<CMatrix, ModelError> {
    let den = gamma * gamma - 1.0;
    if den == 0.0 {
        return Err(ModelError::EpParam(gamma));
    }
    let d = I * (gamma * gamma * t / den);
    let up = C64::new((2.0 * gamma * t + 1.0) / (2.0 * den), 0.0);
    let lo = C64::new((2.0 * gamma * t - 1.0) / (2.0 * den), 0.0);
    Ok(cmat(&[
        &[d + a1 + I * gamma * a2, up + a2],
        &[lo + a2, -d + a1 - I * gamma * a2],
    ]))
}

/// `τ = (sin 2ζt − 2ζt)/ζ³` and `κ = (cos 2ζt − 1)/ζ²` as real functions of
/// `s = ζ²`; both are even in `ζ`, so any branch of the square root gives
/// the same value.
fn tau_kappa(s: f64, t: f64) -> (f64, f64) {
    let u = 4.0 * s * t * t;
    if u.abs() < 1.0 {
        let (mut tau, mut kappa) = (0.0f64, 0.0f64);
        // term_k = (-1)^k u^(k-1) / (2k)!  and  / (2k+1)!
        let mut pk: f64 = -0.5; // k = 1: -1/2!
        let mut qk: f64 = -1.0 / 6.0; // k = 1: -1/3!
        for k in 1..40 {
            kappa += pk;
            tau += qk;
            if pk.abs() < 1e-18 * kappa.abs() && qk.abs() < 1e-18 * tau.abs() {
                break;
            }
            let kf = k as f64;
            pk *= -u / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
            qk *= -u / ((2.0 * kf + 2.0) * (2.0 * kf + 3.0));
        }
        (8.0 * t.powi(3) * tau, 4.0 * t * t * kappa)
    } else if s > 0.0 {
        let z = s.sqrt();
        let x = 2.0 * z * t;
        ((x.sin() - x) / (z * s), (x.cos() - 1.0) / s)
    } else {
        let a = (-s).sqrt();
        let x = 2.0 * a * t;
        (-(x.sinh() - x) / (a * a * a), -(x.cosh() - 1.0) / (a * a))
    }
}

/// Generator of the EP model that is continuous through `γ = ±1` and
/// vanishes at `t = 0`.
pub fn k_ep_regular(gamma: f64, t: f64) -> CMatrix {
    if gamma == 1.0 || gamma == -1.0 {
        let (t2, t3) = (t * t, t * t * t);
        let d = I * (-2.0 * t3 + 3.0 * t) / 3.0;
        let (up, lo) = if gamma == 1.0 {
            ((-2.0 * t3 - 3.0 * t2) / 3.0, (-2.0 * t3 + 3.0 * t2) / 3.0)
        } else {
            ((2.0 * t3 - 3.0 * t2) / 3.0, (2.0 * t3 + 3.0 * t2) / 3.0)
        };
        return cmat(&[&[d, c64(up, 0.0)], &[c64(lo, 0.0), -d]]);
    }
    let (tau, kappa) = tau_kappa(1.0 - gamma * gamma, t);
    let d = I * (tau + 2.0 * t) / 2.0;
    cmat(&[
        &[d, c64((gamma * tau + kappa) / 2.0, 0.0)],
        &[c64((gamma * tau - kappa) / 2.0, 0.0), -d],
    ])
}

// ---------------------------------------------------------------- SSH

/// `ξ = g e^{−iθ} + 1`.
pub fn ssh_xi(g: f64, theta: f64) -> C64 {
    C64::from_polar(g, -theta) + 1.0
}

pub fn h_ssh_block(g: f64, theta: f64) -> CMatrix {
    let xi = ssh_xi(g, theta);
    cmat(&[&[zero(), xi.conj()], &[xi, zero()]])
}

/// `∂_g` of the SSH block.
pub fn dh_ssh_block(theta: f64) -> CMatrix {
    cmat(&[&[zero(), C64::from_polar(1.0, theta)], &[C64::from_polar(1.0, -theta), zero()]])
}

/// The SSH block at fixed momentum `θ` as a family in `g`.
pub fn ssh_block_family(theta: f64) -> HamiltonianFamily {
    HamiltonianFamily::new(2, move |g| h_ssh_block(g, theta), move |_| dh_ssh_block(theta))
        .with_critical_points(vec![1.0])
}

fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), b.shape()).copy_from(b);
        off += b.nrows();
    }
    out
}

fn chain_momenta(n: usize) -> Vec<f64> {
    let theta0 = 2.0 * PI / n as f64;
    (0..n).map(|k| k as f64 * theta0).collect()
}

/// Periodic SSH chain of `n` unit cells in the momentum basis: blocks
/// `H_B(kθ₀)` with `θ₀ = 2π/n`.
pub fn assemble_ssh_chain(n: usize, g: f64) -> Result<CMatrix, ModelError> {
    if n < 2 {
        return Err(ModelError::ChainTooShort(n));
    }
    let blocks: Vec<CMatrix> = chain_momenta(n).into_iter().map(|th| h_ssh_block(g, th)).collect();
    Ok(block_diag(&blocks))
}

pub fn ssh_chain_family(n: usize) -> Result<HamiltonianFamily, ModelError> {
    if n < 2 {
        return Err(ModelError::ChainTooShort(n));
    }
    let thetas = chain_momenta(n);
    let th2 = thetas.clone();
    let dh = block_diag(&thetas.iter().map(|&th| dh_ssh_block(th)).collect::<Vec<_>>());
    Ok(HamiltonianFamily::new(
        2 * n,
        move |g| block_diag(&th2.iter().map(|&th| h_ssh_block(g, th)).collect::<Vec<_>>()),
        move |_| dh.clone(),
    )
    .with_critical_points(vec![1.0]))
}

/// Adiabatic generator of one SSH block, differentiating in `g`.
pub fn k_ssh_adiabatic(g: f64, theta: f64, t: f64, a1: C64, a2: C64) -> Result<CMatrix, ModelError> {
    let xi = ssh_xi(g, theta);
    let n2 = xi.norm_sqr();
    if n2.sqrt() < 1e-12 {
        return Err(ModelError::DpParam { g, theta });
    }
    let dxi = C64::from_polar(1.0, -theta);
    let dn2 = 2.0 * (g + theta.cos());
    let k11 = (I * xi * dxi.conj() - I * xi.conj() * dxi) / (2.0 * n2);
    let k12 = xi.conj() * (t * dn2 / (2.0 * n2));
    let k21 = xi * (t * dn2 / (2.0 * n2));
    Ok(cmat(&[&[k11 + a1, k12 + a2 * xi.conj()], &[k21 + a2 * xi, a1]]))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Generator of one SSH block that stays finite where the gap closes and
/// vanishes at `t = 0`.
pub fn k_ssh_regular(g: f64, theta: f64, t: f64) -> CMatrix {
    let xi = ssh_xi(g, theta);
    let r = xi.norm();
    if theta == PI || r == 0.0 {
        return dh_ssh_block(theta) * C64::new(t, 0.0);
    }
    let (s, c) = theta.sin_cos();
    // sinθ[cos(2|ξ|t) − 1]/(2|ξ|²) = −sinθ t² sinc²(|ξ|t)
    let k11 = -s * t * t * sinc(r * t).powi(2);
    let sc = sinc(2.0 * r * t);
    let k12 = (I * s * sc + c + g) * t / xi;
    let k21 = (-I * s * sc + c + g) * t / xi.conj();
    cmat(&[&[c64(k11, 0.0), k12], &[k21, c64(-k11, 0.0)]])
}

// ---------------------------------------------------------------- custom

/// Tabulated family: `h[k]` (and optionally `dh[k]`) is the matrix at
/// `q[k]`, row-major as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomTable {
    pub dim: usize,
    pub q: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "dH", default, skip_serializing_if = "Option::is_none")]
    pub dh: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub critical_points: Vec<f64>,
    /// Step for the central difference when `dH` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
}

impl CustomTable {
    fn matrices(&self, raw: &[Vec<[f64; 2]>], what: &str) -> Result<Vec<CMatrix>, ModelError> {
        if raw.len() != self.q.len() {
            return Err(ModelError::Custom(format!(
                "{what} has {} samples for {} grid points",
                raw.len(),
                self.q.len()
            )));
        }
        raw.iter()
            .enumerate()
            .map(|(k, m)| {
                if m.len() != self.dim * self.dim {
                    return Err(ModelError::Custom(format!(
                        "{what}[{k}] has {} entries, expected {}",
                        m.len(),
                        self.dim * self.dim
                    )));
                }
                Ok(CMatrix::from_fn(self.dim, self.dim, |i, j| {
                    let [re, im] = m[i * self.dim + j];
                    C64::new(re, im)
                }))
            })
            .collect()
    }

    pub fn from_family(fam: &HamiltonianFamily, q: &[f64], with_dh: bool) -> Self {
        let flat = |m: CMatrix| -> Vec<[f64; 2]> {
            let n = m.nrows();
            (0..n * n).map(|k| [m[(k / n, k % n)].re, m[(k / n, k % n)].im]).collect()
        };
        CustomTable {
            dim: fam.dim,
            q: q.to_vec(),
            h: q.iter().map(|&x| flat(fam.h(x))).collect(),
            dh: with_dh.then(|| q.iter().map(|&x| flat(fam.dh(x))).collect()),
            critical_points: fam.critical_points.clone(),
            fd_step: None,
        }
    }
}

fn lerp_table(qs: &[f64], ms: &[CMatrix], q: f64) -> CMatrix {
    let n = qs.len();
    if n == 1 {
        return ms[0].clone();
    }
    let k = match qs.iter().position(|&x| x > q) {
        Some(0) => 0,
        Some(k) => k - 1,
        None => n - 2,
    }
    .min(n - 2);
    let w = (q - qs[k]) / (qs[k + 1] - qs[k]);
    &ms[k] * C64::new(1.0 - w, 0.0) + &ms[k + 1] * C64::new(w, 0.0)
}

/// Piecewise-linear interpolation of the table. Without `dH` the derivative
/// is a central difference of the interpolant with step `fd_step`
/// (default: the smallest grid spacing).
pub fn custom_family(table: &CustomTable) -> Result<HamiltonianFamily, ModelError> {
    if table.dim == 0 || table.q.is_empty() {
        return Err(ModelError::Custom("empty table".into()));
    }
    if table.q.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ModelError::Custom("q grid must be strictly increasing".into()));
    }
    let hs = table.matrices(&table.h, "H")?;
    let qs = Arc::new(table.q.clone());
    let hs = Arc::new(hs);
    let lo = qs[0];
    let hi = qs[qs.len() - 1];
    let (q1, h1) = (qs.clone(), hs.clone());
    let h_fn = move |q: f64| lerp_table(&q1, &h1, q);
    let fam = match &table.dh {
        Some(raw) => {
            let ds = Arc::new(table.matrices(raw, "dH")?);
            let q2 = qs.clone();
            HamiltonianFamily::new(table.dim, h_fn, move |q| lerp_table(&q2, &ds, q))
        }
        None => {
            if qs.len() < 2 {
                return Err(ModelError::Custom("need at least two samples to differentiate".into()));
            }
            let step = table.fd_step.unwrap_or_else(|| {
                qs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
            });
            if !(step > 0.0) {
                return Err(ModelError::Custom("fd_step must be positive".into()));
            }
            let (q2, h2) = (qs.clone(), hs.clone());
            HamiltonianFamily::new(table.dim, h_fn, move |q| {
                (lerp_table(&q2, &h2, q + step) - lerp_table(&q2, &h2, q - step))
                    / C64::new(2.0 * step, 0.0)
            })
        }
    };
    Ok(fam.with_domain(lo, hi).with_critical_points(table.critical_points.clone()))
}

// ---------------------------------------------------------------- catalog

pub type ClosedForm = Arc<dyn Fn(f64) -> Result<TimeK, ModelError> + Send + Sync>;

/// A named model at a concrete parameter point.
#[derive(Clone)]
pub struct ModelDescriptor {
    pub name: String,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
    /// The parameter the generator differentiates along.
    pub evolution_param: String,
    pub family: HamiltonianFamily,
    pub critical_points: Vec<f64>,
    closed_forms: BTreeMap<&'static str, ClosedForm>,
}

impl std::fmt::Debug for ModelDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelDescriptor")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .field("evolution_param", &self.evolution_param)
            .field("closed_forms", &self.closed_forms.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ModelDescriptor {
    /// Current value of the evolution parameter.
    pub fn q(&self) -> f64 {
        self.params.get(&self.evolution_param).copied().unwrap_or(0.0)
    }

    pub fn closed_form_names(&self) -> Vec<&'static str> {
        self.closed_forms.keys().copied().collect()
    }

    /// Evaluate the named closed form at evolution parameter `q`.
    pub fn closed_form(&self, name: &str, q: f64) -> Option<Result<TimeK, ModelError>> {
        self.closed_forms.get(name).map(|f| f(q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamInfo {
    pub name: &'static str,
    pub default: f64,
    pub about: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInfo {
    pub name: &'static str,
    pub about: &'static str,
    pub evolution_param: &'static str,
    pub params: &'static [ParamInfo],
}

pub const MODELS: &[ModelInfo] = &[
    ModelInfo {
        name: "ep2x2",
        about: "[[iγ, 1], [1, −iγ]], exceptional points at γ = ±1",
        evolution_param: "gamma",
        params: &[ParamInfo { name: "gamma", default: 0.0, about: "gain/loss parameter" }],
    },
    ModelInfo {
        name: "ssh-block",
        about: "SSH momentum block [[0, ξ*], [ξ, 0]], ξ = g e^{−iθ} + 1",
        evolution_param: "g",
        params: &[
            ParamInfo { name: "g", default: 0.5, about: "intercell/intracell hopping ratio" },
            ParamInfo { name: "theta", default: PI, about: "momentum" },
        ],
    },
    ModelInfo {
        name: "ssh-chain",
        about: "periodic SSH chain, block diagonal in momentum",
        evolution_param: "g",
        params: &[
            ParamInfo { name: "N", default: 4.0, about: "number of unit cells" },
            ParamInfo { name: "g", default: 0.5, about: "hopping ratio" },
        ],
    },
    ModelInfo {
        name: "custom",
        about: "tabulated H (and optionally dH) on a q grid, from a JSON file",
        evolution_param: "q",
        params: &[ParamInfo { name: "q", default: 0.0, about: "evolution parameter" }],
    },
];

pub fn model_info(name: &str) -> Result<&'static ModelInfo, ModelError> {
    MODELS.iter().find(|m| m.name == name).ok_or_else(|| ModelError::UnknownModel(name.into()))
}

fn resolve_params(
    info: &ModelInfo,
    given: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, ModelError> {
    let mut out: BTreeMap<String, f64> =
        info.params.iter().map(|p| (p.name.to_string(), p.default)).collect();
    for (k, &v) in given {
        if !out.contains_key(k) {
            return Err(ModelError::UnknownParam { model: info.name.into(), param: k.clone() });
        }
        out.insert(k.clone(), v);
    }
    Ok(out)
}

fn linear_timek(k: LinearK) -> TimeK {
    TimeK::new(Gauge::Adiabatic, (f64::NEG_INFINITY, f64::INFINITY), move |t| k.at(t))
}

/// Build one of the built-in models. `custom` goes through
/// [`build_custom_model`].
pub fn build_model(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelDescriptor, ModelError> {
    let info = model_info(name)?;
    let params = resolve_params(info, params)?;
    let mut closed_forms: BTreeMap<&'static str, ClosedForm> = BTreeMap::new();
    let (family, dim) = match name {
        "ep2x2" => {
            closed_forms.insert(
                "regular",
                Arc::new(|g| Ok(TimeK::new(Gauge::ClosedForm, (f64::NEG_INFINITY, f64::INFINITY), move |t| k_ep_regular(g, t)))),
            );
            closed_forms.insert(
                "adiabatic",
                Arc::new(|g| {
                    let k0 = k_ep_adiabatic(g, 0.0, zero(), zero())?;
                    let k1 = k_ep_adiabatic(g, 1.0, zero(), zero())? - &k0;
                    Ok(linear_timek(LinearK { k1, k0 }))
                }),
            );
            (ep_family(), 2)
        }
        "ssh-block" => {
            let theta = params["theta"];
            closed_forms.insert(
                "regular",
                Arc::new(move |g| Ok(TimeK::new(Gauge::ClosedForm, (f64::NEG_INFINITY, f64::INFINITY), move |t| k_ssh_regular(g, theta, t)))),
            );
            closed_forms.insert(
                "adiabatic",
                Arc::new(move |g| {
                    let k0 = k_ssh_adiabatic(g, theta, 0.0, zero(), zero())?;
                    let k1 = k_ssh_adiabatic(g, theta, 1.0, zero(), zero())? - &k0;
                    Ok(linear_timek(LinearK { k1, k0 }))
                }),
            );
            (ssh_block_family(theta), 2)
        }
        "ssh-chain" => {
            let n = params["N"];
            if n.fract() != 0.0 || n < 0.0 {
                return Err(ModelError::Custom(format!("N must be a nonnegative integer, got {n}")));
            }
            let n = n as usize;
            let fam = ssh_chain_family(n)?;
            let thetas = chain_momenta(n);
            let th = thetas.clone();
            closed_forms.insert(
                "regular",
                Arc::new(move |g| {
                    let th = th.clone();
                    Ok(TimeK::new(Gauge::ClosedForm, (f64::NEG_INFINITY, f64::INFINITY), move |t| {
                        block_diag(&th.iter().map(|&x| k_ssh_regular(g, x, t)).collect::<Vec<_>>())
                    }))
                }),
            );
            let th = thetas;
            closed_forms.insert(
                "adiabatic",
                Arc::new(move |g| {
                    let k0: Vec<CMatrix> = th
                        .iter()
                        .map(|&x| k_ssh_adiabatic(g, x, 0.0, zero(), zero()))
                        .collect::<Result<_, _>>()?;
                    let k1: Vec<CMatrix> = th
                        .iter()
                        .zip(&k0)
                        .map(|(&x, k0)| Ok(k_ssh_adiabatic(g, x, 1.0, zero(), zero())? - k0))
                        .collect::<Result<_, ModelError>>()?;
                    Ok(linear_timek(LinearK { k1: block_diag(&k1), k0: block_diag(&k0) }))
                }),
            );
            (fam, 2 * n)
        }
        "custom" => {
            return Err(ModelError::Custom("custom models are built from a table".into()));
        }
        other => return Err(ModelError::UnknownModel(other.into())),
    };
    Ok(ModelDescriptor {
        name: name.into(),
        dim,
        critical_points: family.critical_points.clone(),
        family,
        params,
        evolution_param: info.evolution_param.into(),
        closed_forms,
    })
}

pub fn build_custom_model(
    table: &CustomTable,
    params: &BTreeMap<String, f64>,
) -> Result<ModelDescriptor, ModelError> {
    let info = model_info("custom")?;
    let params = resolve_params(info, params)?;
    let family = custom_family(table)?;
    Ok(ModelDescriptor {
        name: "custom".into(),
        dim: table.dim,
        critical_points: family.critical_points.clone(),
        family,
        params,
        evolution_param: "q".into(),
        closed_forms: BTreeMap::new(),
    })
}
