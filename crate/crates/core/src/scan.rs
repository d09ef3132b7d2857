//! Parameter sweeps, power-law fits of divergences, verification reports,
//! and the CSV/JSON record formats used by the command-line tool.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::epgauge::{EpGaugeError, EpGaugeOptions, EpVicinityGauge};
use crate::kgen::{
    brute_force_k, pde_residual, regular_dp_k_with, solve_adiabatic_with, Gauge, Generator, KgenError,
    TimeK,
};
use crate::linalg::{eigendecompose_with, CMatrix, PointClass, Thresholds, C64};
use crate::models::{build_custom_model, build_model, CustomTable, ModelDescriptor, ModelError};
use crate::transport::{eigenstate_fidelity, susceptibility_at, susceptibility_oracle, TransportError};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown gauge `{0}` (expected adiabatic, regular-dp, regular-ep, closed-form or zero)")]
    UnknownGauge(String),
    #[error("{needed} usable records needed in the fit window, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("model `{0}` has no closed-form generator")]
    NoClosedForm(String),
    #[error("the `custom` model needs a table")]
    MissingTable,
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("malformed record input: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ScanError {
    /// Errors caused by the request itself rather than by a computation.
    pub fn is_usage(&self) -> bool {
        !matches!(self, ScanError::Io(_) | ScanError::Pool(_))
    }
}

/// `name:start:stop:step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn new(name: &str, start: f64, stop: f64, step: f64) -> Result<Self, ScanError> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(ScanError::InvalidSweep(format!("step must be positive, got {step}")));
        }
        if !(start < stop) || !start.is_finite() || !stop.is_finite() {
            return Err(ScanError::InvalidSweep(format!("need start < stop, got {start} and {stop}")));
        }
        Ok(Sweep { name: name.to_string(), start, stop, step })
    }

    /// `start + (stop − start)·k/n`, `n = round((stop − start)/step)`, so both
    /// endpoints are hit exactly.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step).round().max(1.0) as usize;
        (0..=n)
            .map(|k| if k == n { self.stop } else { self.start + (self.stop - self.start) * k as f64 / n as f64 })
            .collect()
    }
}

impl FromStr for Sweep {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 || parts[0].is_empty() {
            return Err(ScanError::InvalidSweep(format!("`{s}` is not name:start:stop:step")));
        }
        let num = |x: &str| {
            x.trim().parse::<f64>().map_err(|_| ScanError::InvalidSweep(format!("`{x}` is not a number")))
        };
        Sweep::new(parts[0], num(parts[1])?, num(parts[2])?, num(parts[3])?)
    }
}

/// `name=value`.
pub fn parse_param(s: &str) -> Result<(String, f64), ScanError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ScanError::InvalidParam(format!("`{s}` is not name=value")))?;
    let v: f64 = v.trim().parse().map_err(|_| ScanError::InvalidParam(format!("`{v}` is not a number")))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanGauge {
    Adiabatic,
    RegularDp,
    RegularEp,
    ClosedForm,
    /// `K ≡ 0`; fails verification whenever `∂_qH ≠ 0`.
    Zero,
}

impl ScanGauge {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanGauge::Adiabatic => "adiabatic",
            ScanGauge::RegularDp => "regular-dp",
            ScanGauge::RegularEp => "regular-ep",
            ScanGauge::ClosedForm => "closed-form",
            ScanGauge::Zero => "zero",
        }
    }
}

impl fmt::Display for ScanGauge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScanGauge {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "adiabatic" => ScanGauge::Adiabatic,
            "regular-dp" => ScanGauge::RegularDp,
            "regular-ep" => ScanGauge::RegularEp,
            "closed-form" | "regular" => ScanGauge::ClosedForm,
            "zero" => ScanGauge::Zero,
            other => return Err(ScanError::UnknownGauge(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(ScanError::Format(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub gauge: ScanGauge,
    pub t_ref: f64,
    /// Records at Regular points with a larger residual are flagged.
    pub residual_tol: f64,
    /// Finite-difference step for residuals.
    pub h: f64,
    /// Level whose susceptibility is reported.
    pub level: usize,
    /// Worker threads; `None` uses the rayon default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub custom: Option<CustomTable>,
}

impl ScanConfig {
    pub fn new(model: &str, gauge: ScanGauge) -> Self {
        ScanConfig {
            model: model.to_string(),
            params: BTreeMap::new(),
            sweep: None,
            gauge,
            t_ref: 1.0,
            residual_tol: 1e-6,
            h: 1e-4,
            level: 0,
            workers: None,
            custom: None,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_sweep(mut self, sweep: Sweep) -> Self {
        self.sweep = Some(sweep);
        self
    }

    fn descriptor(&self, overrides: Option<(&str, f64)>) -> Result<ModelDescriptor, ScanError> {
        let mut params = self.params.clone();
        if let Some((k, v)) = overrides {
            params.insert(k.to_string(), v);
        }
        if self.model == "custom" {
            let table = self.custom.as_ref().ok_or(ScanError::MissingTable)?;
            Ok(build_custom_model(table, &params)?)
        } else {
            Ok(build_model(&self.model, &params)?)
        }
    }

    /// Sweep points, or the single configured point.
    pub fn points(&self) -> Vec<f64> {
        match &self.sweep {
            Some(s) => s.points(),
            None => vec![f64::NAN],
        }
    }

    fn descriptor_at(&self, x: f64) -> Result<ModelDescriptor, ScanError> {
        match &self.sweep {
            Some(s) => self.descriptor(Some((&s.name, x))),
            None => self.descriptor(None),
        }
    }

    /// Fail early on unknown models, parameters and gauges.
    pub fn validate(&self) -> Result<(), ScanError> {
        let d = self.descriptor(None)?;
        if let Some(s) = &self.sweep {
            self.descriptor(Some((&s.name, s.start)))?;
        }
        if self.gauge == ScanGauge::ClosedForm && d.closed_form_names().is_empty() {
            return Err(ScanError::NoClosedForm(self.model.clone()));
        }
        if !(self.h > 0.0) || !(self.residual_tol >= 0.0) || !self.t_ref.is_finite() {
            return Err(ScanError::InvalidParam("h > 0, residual_tol ≥ 0 and finite t_ref required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    /// Value of the swept parameter (or of the evolution parameter when no
    /// sweep is configured).
    pub q: f64,
    pub class: PointClass,
    pub gap: f64,
    pub knorm: f64,
    pub chi_re: f64,
    pub chi_im: f64,
    pub residual: f64,
    pub flags: Vec<String>,
}

pub const CSV_HEADER: [&str; 8] = ["q", "class", "gap", "knorm", "chi_re", "chi_im", "residual", "flags"];

/// The generator the configured gauge assigns to a model point.
pub fn generator_for(
    model: &ModelDescriptor,
    gauge: ScanGauge,
    th: &Thresholds,
) -> Result<TimeK, GeneratorError> {
    let fam = &model.family;
    let q = model.q();
    match gauge {
        ScanGauge::Adiabatic => Ok(TimeK::from_linear(solve_adiabatic_with(fam, q, &[], th)?)),
        ScanGauge::RegularDp => Ok(regular_dp_k_with(fam, q, th)?),
        ScanGauge::RegularEp => {
            let opts = EpGaugeOptions::default();
            let near = model
                .critical_points
                .iter()
                .copied()
                .filter(|c| (c - q).abs() <= opts.radius)
                .min_by(|a, b| (a - q).abs().total_cmp(&(b - q).abs()));
            if let Some(q_ep) = near {
                if fam.dim <= crate::epgauge::MAX_BLOCK {
                    if let Ok(g) = EpVicinityGauge::new(fam.clone(), q_ep, opts) {
                        let z = CMatrix::zeros(fam.dim, fam.dim);
                        return Ok(g.generator(q, &z, (f64::NEG_INFINITY, f64::INFINITY))?);
                    }
                }
            }
            Ok(regular_dp_k_with(fam, q, th)?)
        }
        ScanGauge::ClosedForm => {
            let f = model
                .closed_form("regular", q)
                .ok_or_else(|| GeneratorError::NoClosedForm(model.name.clone()))?;
            Ok(f?)
        }
        ScanGauge::Zero => {
            let n = fam.dim;
            Ok(TimeK::new(Gauge::ClosedForm, (f64::NEG_INFINITY, f64::INFINITY), move |_| CMatrix::zeros(n, n)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Kgen(#[from] KgenError),
    #[error(transparent)]
    EpGauge(#[from] EpGaugeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model `{0}` has no closed-form generator")]
    NoClosedForm(String),
}

fn residual_grid(t_ref: f64) -> Vec<f64> {
    if t_ref == 0.0 {
        vec![0.0]
    } else {
        vec![0.0, 0.5 * t_ref, t_ref]
    }
}

fn scan_point(cfg: &ScanConfig, x: f64) -> Result<ScanRecord, ScanError> {
    let model = cfg.descriptor_at(x)?;
    let q = if x.is_nan() { model.q() } else { x };
    let th = Thresholds::default();
    let fam = &model.family;
    let (h, dh) = (fam.h(model.q()), fam.dh(model.q()));
    let mut flags = Vec::new();
    let (class, gap) = match eigendecompose_with(&h, &th) {
        Ok(s) => (s.classification, s.min_gap),
        Err(_) => {
            flags.push("eig-failed".to_string());
            (PointClass::Ep, f64::NAN)
        }
    };
    if class != PointClass::Regular {
        flags.push(class.as_str().to_string());
    }
    let (knorm, residual) = match generator_for(&model, cfg.gauge, &th) {
        Ok(k) => {
            let kt = k.at(cfg.t_ref);
            let r = pde_residual(&k, &h, &dh, &residual_grid(cfg.t_ref), cfg.h);
            (kt.norm(), r)
        }
        Err(_) => {
            flags.push("k-unavailable".to_string());
            (f64::NAN, f64::NAN)
        }
    };
    let (chi_re, chi_im) = match susceptibility_at(fam, cfg.level, model.q(), cfg.t_ref) {
        Ok(c) => (c.re, c.im),
        Err(_) => {
            flags.push("chi-unavailable".to_string());
            (f64::NAN, f64::NAN)
        }
    };
    if class == PointClass::Regular && !(residual <= cfg.residual_tol) {
        flags.push("residual-high".to_string());
    }
    Ok(ScanRecord { q, class, gap, knorm, chi_re, chi_im, residual, flags })
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, ScanError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    let pool = b.build().map_err(|e| ScanError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// One record per grid point, in grid order, independent of the number of
/// workers.
pub fn scan(cfg: &ScanConfig) -> Result<Vec<ScanRecord>, ScanError> {
    cfg.validate()?;
    let points = cfg.points();
    with_pool(cfg.workers, || points.par_iter().map(|&x| scan_point(cfg, x)).collect::<Result<Vec<_>, _>>())?
}

// ---------------------------------------------------------------- formats

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:?}")
    }
}

fn parse_float(s: &str) -> Result<f64, ScanError> {
    match s {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| ScanError::Format(format!("`{s}` is not a number"))),
    }
}

fn float_json(x: f64) -> Value {
    if x.is_nan() {
        Value::Null
    } else if x.is_infinite() {
        Value::String(fmt_float(x))
    } else {
        json!(x)
    }
}

fn json_float(v: &Value) -> Result<f64, ScanError> {
    match v {
        Value::Null => Ok(f64::NAN),
        Value::String(s) => parse_float(s),
        Value::Number(n) => n.as_f64().ok_or_else(|| ScanError::Format(format!("bad number {n}"))),
        other => Err(ScanError::Format(format!("expected a number, got {other}"))),
    }
}

impl ScanRecord {
    pub fn csv_fields(&self) -> [String; 8] {
        [
            fmt_float(self.q),
            self.class.as_str().to_string(),
            fmt_float(self.gap),
            fmt_float(self.knorm),
            fmt_float(self.chi_re),
            fmt_float(self.chi_im),
            fmt_float(self.residual),
            self.flags.join("|"),
        ]
    }

    pub fn to_json(&self) -> Value {
        json!({
            "q": float_json(self.q),
            "class": self.class.as_str(),
            "gap": float_json(self.gap),
            "knorm": float_json(self.knorm),
            "chi_re": float_json(self.chi_re),
            "chi_im": float_json(self.chi_im),
            "residual": float_json(self.residual),
            "flags": self.flags,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, ScanError> {
        let f = |k: &str| json_float(v.get(k).unwrap_or(&Value::Null));
        let class = v
            .get("class")
            .and_then(Value::as_str)
            .ok_or_else(|| ScanError::Format("record without class".into()))?
            .parse::<PointClass>()
            .map_err(ScanError::Format)?;
        let flags = match v.get("flags") {
            Some(Value::Array(a)) => a.iter().filter_map(|x| x.as_str().map(String::from)).collect(),
            _ => Vec::new(),
        };
        Ok(ScanRecord {
            q: f("q")?,
            class,
            gap: f("gap")?,
            knorm: f("knorm")?,
            chi_re: f("chi_re")?,
            chi_im: f("chi_im")?,
            residual: f("residual")?,
            flags,
        })
    }

    fn from_csv_row(row: &csv::StringRecord) -> Result<Self, ScanError> {
        if row.len() != CSV_HEADER.len() {
            return Err(ScanError::Format(format!("expected {} columns, got {}", CSV_HEADER.len(), row.len())));
        }
        let flags = if row[7].is_empty() { Vec::new() } else { row[7].split('|').map(String::from).collect() };
        Ok(ScanRecord {
            q: parse_float(&row[0])?,
            class: row[1].parse().map_err(ScanError::Format)?,
            gap: parse_float(&row[2])?,
            knorm: parse_float(&row[3])?,
            chi_re: parse_float(&row[4])?,
            chi_im: parse_float(&row[5])?,
            residual: parse_float(&row[6])?,
            flags,
        })
    }

    /// Field-wise equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &ScanRecord) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        eq(self.q, other.q)
            && self.class == other.class
            && eq(self.gap, other.gap)
            && eq(self.knorm, other.knorm)
            && eq(self.chi_re, other.chi_re)
            && eq(self.chi_im, other.chi_im)
            && eq(self.residual, other.residual)
            && self.flags == other.flags
    }
}

pub fn write_csv<W: Write>(records: &[ScanRecord], out: W) -> Result<(), ScanError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ScanRecord>, ScanError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(ScanError::Format(format!("unexpected header {:?}", header)));
    }
    rd.records().map(|r| ScanRecord::from_csv_row(&r?)).collect()
}

/// `{"config": …, "records": […]}`, pretty-printed.
pub fn write_json<W: Write>(cfg: &ScanConfig, records: &[ScanRecord], mut out: W) -> Result<(), ScanError> {
    let mut config = serde_json::to_value(cfg)?;
    if let Value::Object(m) = &mut config {
        // the worker count does not affect results
        m.remove("workers");
    }
    let doc = json!({
        "config": config,
        "records": records.iter().map(ScanRecord::to_json).collect::<Vec<_>>(),
    });
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<ScanRecord>, ScanError> {
    let doc: Value = serde_json::from_reader(input)?;
    let arr = match &doc {
        Value::Array(a) => a,
        Value::Object(m) => m
            .get("records")
            .and_then(Value::as_array)
            .ok_or_else(|| ScanError::Format("no `records` array".into()))?,
        _ => return Err(ScanError::Format("expected an object or array".into())),
    };
    arr.iter().map(ScanRecord::from_json).collect()
}

pub fn write_records<W: Write>(
    cfg: &ScanConfig,
    records: &[ScanRecord],
    format: OutputFormat,
    out: W,
) -> Result<(), ScanError> {
    match format {
        OutputFormat::Csv => write_csv(records, out),
        OutputFormat::Json => write_json(cfg, records, out),
    }
}

// ---------------------------------------------------------------- fits

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    /// `A` in `y ≈ A·|x|^p`.
    pub prefactor: f64,
    pub r2: f64,
    pub n: usize,
}

pub const MIN_FIT_POINTS: usize = 5;

/// Least squares of `ln|y|` against `ln|x|`. Points with zero or non-finite
/// values are skipped.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit, ScanError> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && **x != 0.0 && **y != 0.0)
        .map(|(x, y)| (x.abs().ln(), y.abs().ln()))
        .collect();
    let n = pts.len();
    if n < MIN_FIT_POINTS {
        return Err(ScanError::InsufficientData { needed: MIN_FIT_POINTS, found: n });
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ScanError::InsufficientData { needed: MIN_FIT_POINTS, found: 1 });
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(PowerLawFit { exponent: slope, prefactor: icpt.exp(), r2, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitQuantity {
    Knorm,
    Chi,
}

impl FromStr for FitQuantity {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knorm" => Ok(FitQuantity::Knorm),
            "chi" => Ok(FitQuantity::Chi),
            other => Err(ScanError::InvalidParam(format!("unknown fit quantity `{other}`"))),
        }
    }
}

/// Power-law fit of `knorm` or `|χ|` against `|q − q_star|` over
/// unflagged records with `q` in `window` (inclusive).
pub fn fit_divergence(
    records: &[ScanRecord],
    q_star: f64,
    window: (f64, f64),
    quantity: FitQuantity,
) -> Result<PowerLawFit, ScanError> {
    let (lo, hi) = (window.0.min(window.1), window.0.max(window.1));
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.q >= lo && r.q <= hi && r.flags.is_empty())
        .map(|r| {
            let y = match quantity {
                FitQuantity::Knorm => r.knorm,
                FitQuantity::Chi => r.chi_re.hypot(r.chi_im),
            };
            (r.q - q_star, y)
        })
        .unzip();
    fit_power_law(&xs, &ys)
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyPoint {
    pub q: f64,
    pub class: PointClass,
    pub residual: Option<f64>,
    /// Largest difference from the brute-force integration, when run.
    pub oracle_diff: Option<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub model: String,
    pub gauge: ScanGauge,
    pub t_grid: Vec<f64>,
    pub h: f64,
    pub tolerance: f64,
    pub points: Vec<VerifyPoint>,
    pub pass: bool,
}

/// Oracle comparison is skipped above this dimension.
pub const VERIFY_ORACLE_MAX_DIM: usize = 4;
const ORACLE_TOL: f64 = 1e-6;

fn verify_point(cfg: &ScanConfig, x: f64, t_grid: &[f64]) -> VerifyPoint {
    let th = Thresholds::default();
    let model = match cfg.descriptor_at(x) {
        Ok(m) => m,
        Err(e) => {
            return VerifyPoint { q: x, class: PointClass::Regular, residual: None, oracle_diff: None, pass: false, error: Some(e.to_string()) }
        }
    };
    let q = model.q();
    let qx = if x.is_nan() { q } else { x };
    let fam = &model.family;
    let (h, dh) = (fam.h(q), fam.dh(q));
    let class = eigendecompose_with(&h, &th).map(|s| s.classification).unwrap_or(PointClass::Ep);
    let k = match generator_for(&model, cfg.gauge, &th) {
        Ok(k) => k,
        Err(e) => {
            return VerifyPoint { q: qx, class, residual: None, oracle_diff: None, pass: false, error: Some(e.to_string()) }
        }
    };
    let residual = pde_residual(&k, &h, &dh, t_grid, cfg.h);
    let mut pass = residual <= cfg.residual_tol;
    let mut oracle_diff = None;
    if class != PointClass::Ep && fam.dim <= VERIFY_ORACLE_MAX_DIM {
        let k0 = k.at(0.0);
        if let Ok(oracle) = brute_force_k(fam, q, t_grid, &k0) {
            let d = t_grid
                .iter()
                .map(|&t| {
                    let kt = k.at(t);
                    (oracle.at(t) - &kt).norm() / kt.norm().max(1.0)
                })
                .fold(0.0, f64::max);
            pass &= d <= ORACLE_TOL;
            oracle_diff = Some(d);
        }
    }
    VerifyPoint { q: qx, class, residual: Some(residual), oracle_diff, pass, error: None }
}

/// Defining-equation residual on `t ∈ {0, t_ref/2, t_ref}` and, for
/// diagonalizable points of small models, agreement with the brute-force
/// oracle started from the same `K(0)`.
pub fn verify(cfg: &ScanConfig) -> Result<VerifyReport, ScanError> {
    cfg.validate()?;
    let t_grid = residual_grid(cfg.t_ref);
    let points = cfg.points();
    let pts = with_pool(cfg.workers, || points.par_iter().map(|&x| verify_point(cfg, x, &t_grid)).collect::<Vec<_>>())?;
    let pass = pts.iter().all(|p| p.pass);
    Ok(VerifyReport {
        model: cfg.model.clone(),
        gauge: cfg.gauge,
        t_grid,
        h: cfg.h,
        tolerance: cfg.residual_tol,
        points: pts,
        pass,
    })
}

// ---------------------------------------------------------------- fidelity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRecord {
    pub q: f64,
    pub eps: f64,
    pub fidelity_re: f64,
    pub fidelity_im: f64,
    /// `(1 − Re 𝓕)/ε²`.
    pub quotient: f64,
    pub chi_re: f64,
    pub chi_im: f64,
}

/// Eigenstate fidelity of level `cfg.level` at every configured point and
/// every `ε`, next to the perturbative susceptibility.
pub fn fidelity_scan(cfg: &ScanConfig, eps: &[f64]) -> Result<Vec<FidelityRecord>, ScanError> {
    cfg.validate()?;
    let points = cfg.points();
    let rows = with_pool(cfg.workers, || {
        points
            .par_iter()
            .map(|&x| -> Result<Vec<FidelityRecord>, ScanError> {
                let model = cfg.descriptor_at(x)?;
                let q = model.q();
                let chi = susceptibility_oracle(&model.family, cfg.level, q)
                    .unwrap_or(C64::new(f64::NAN, f64::NAN));
                Ok(eps
                    .iter()
                    .map(|&e| {
                        let f: Result<_, TransportError> = eigenstate_fidelity(&model.family, cfg.level, q, e);
                        let (re, im) = f.map(|f| (f.re, f.im)).unwrap_or((f64::NAN, f64::NAN));
                        FidelityRecord {
                            q: if x.is_nan() { q } else { x },
                            eps: e,
                            fidelity_re: re,
                            fidelity_im: im,
                            quotient: (1.0 - re) / (e * e),
                            chi_re: chi.re,
                            chi_im: chi.im,
                        }
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_fidelity_csv<W: Write>(rows: &[FidelityRecord], out: W) -> Result<(), ScanError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["q", "eps", "fidelity_re", "fidelity_im", "quotient", "chi_re", "chi_im"])?;
    for r in rows {
        w.write_record(
            [r.q, r.eps, r.fidelity_re, r.fidelity_im, r.quotient, r.chi_re, r.chi_im].map(fmt_float),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fidelity_json<W: Write>(rows: &[FidelityRecord], mut out: W) -> Result<(), ScanError> {
    let v: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "q": float_json(r.q), "eps": float_json(r.eps),
                "fidelity_re": float_json(r.fidelity_re), "fidelity_im": float_json(r.fidelity_im),
                "quotient": float_json(r.quotient),
                "chi_re": float_json(r.chi_re), "chi_im": float_json(r.chi_im),
            })
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &v)?;
    out.write_all(b"\n")?;
    Ok(())
}
