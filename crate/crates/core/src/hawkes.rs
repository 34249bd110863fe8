//! Multivariate Hawkes process with exponential kernels and an optional
//! softplus transfer.

use crate::rng::seeded;
use crate::thinning::{thin, BoundRule, Horizon, IntensityProcess, ThinningConfig, ThinningError, ThinningOutput};
use log::warn;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("evaluation time {t} precedes last history event at {last}")]
    TimeBeforeHistory { t: f64, last: f64 },
    #[error("events not sorted within [0, {horizon}] at index {index}")]
    BadEvents { index: usize, horizon: f64 },
    #[error("non-finite value at event index {0}")]
    NonFinite(usize),
    #[error("event type {0} out of range")]
    BadType(usize),
    #[error(transparent)]
    Thinning(#[from] ThinningError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HawkesError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    Identity,
    Softplus,
}

impl Transfer {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transfer::Identity => x,
            Transfer::Softplus => crate::nn::softplus(x),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    m: usize,
    base: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    transfer: Transfer,
}

/// `lambda_i(t) = phi(base_i + sum_j sum_{t_k < t, type j} alpha_ij exp(-beta_ij (t - t_k)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct HawkesModel {
    base: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    transfer: Transfer,
}

impl TryFrom<ModelFile> for HawkesModel {
    type Error = HawkesError;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.version != MODEL_VERSION {
            return Err(HawkesError::InvalidModel(format!("unsupported version {}", f.version)));
        }
        if f.base.len() != f.m {
            return Err(HawkesError::InvalidModel(format!("m = {} but base has {} entries", f.m, f.base.len())));
        }
        HawkesModel::new(f.base, f.alpha, f.beta, f.transfer)
    }
}

impl From<HawkesModel> for ModelFile {
    fn from(h: HawkesModel) -> Self {
        ModelFile { version: MODEL_VERSION, m: h.dim(), base: h.base, alpha: h.alpha, beta: h.beta, transfer: h.transfer }
    }
}

impl HawkesModel {
    pub fn new(base: Vec<f64>, alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>, transfer: Transfer) -> Result<Self> {
        let m = base.len();
        if m == 0 {
            return Err(HawkesError::InvalidModel("no event types".into()));
        }
        let square = |a: &Vec<Vec<f64>>| a.len() == m && a.iter().all(|r| r.len() == m);
        if !square(&alpha) || !square(&beta) {
            return Err(HawkesError::InvalidModel(format!("alpha and beta must be {m}x{m}")));
        }
        let all = base.iter().chain(alpha.iter().flatten()).chain(beta.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(HawkesError::InvalidModel("non-finite parameter".into()));
        }
        if beta.iter().flatten().any(|&b| b <= 0.0) {
            return Err(HawkesError::InvalidModel("beta must be strictly positive".into()));
        }
        if transfer == Transfer::Identity
            && (base.iter().any(|&b| b < 0.0) || alpha.iter().flatten().any(|&a| a < 0.0))
        {
            return Err(HawkesError::InvalidModel("linear model needs non-negative base and alpha".into()));
        }
        let model = Self { base, alpha, beta, transfer };
        if transfer == Transfer::Identity {
            let rho = model.branching_ratio();
            if rho >= 1.0 {
                warn!("Hawkes model is not stationary: spectral radius {rho:.4} >= 1");
            }
        }
        Ok(model)
    }

    /// Homogeneous Poisson process with the given rates.
    pub fn poisson(rates: Vec<f64>) -> Result<Self> {
        let m = rates.len();
        Self::new(rates, vec![vec![0.0; m]; m], vec![vec![1.0; m]; m], Transfer::Identity)
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn alpha(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }

    pub fn transfer(&self) -> Transfer {
        self.transfer
    }

    /// Branching matrix `A_ij = alpha_ij / beta_ij`.
    pub fn branching_matrix(&self) -> Vec<Vec<f64>> {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a.iter().zip(b).map(|(a, b)| a / b).collect()).collect()
    }

    /// Spectral radius of the branching matrix (power iteration on `|A|`).
    pub fn branching_ratio(&self) -> f64 {
        let a = self.branching_matrix();
        let m = self.dim();
        let mut v = vec![1.0 / m as f64; m];
        let mut rho = 0.0;
        for _ in 0..500 {
            let w: Vec<f64> = (0..m).map(|i| (0..m).map(|j| a[i][j].abs() * v[j]).sum()).collect();
            let norm: f64 = w.iter().sum();
            if norm == 0.0 {
                return 0.0;
            }
            rho = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        rho
    }

    /// Stationary mean rates `(I - A)^{-1} base` of a stable linear model.
    pub fn stationary_rates(&self) -> Option<Vec<f64>> {
        if self.transfer != Transfer::Identity || self.branching_ratio() >= 1.0 {
            return None;
        }
        let m = self.dim();
        let a = self.branching_matrix();
        let mut mat: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut row: Vec<f64> = (0..m).map(|j| f64::from(u8::from(i == j)) - a[i][j]).collect();
                row.push(self.base[i]);
                row
            })
            .collect();
        // Gauss-Jordan with partial pivoting.
        for c in 0..m {
            let p = (c..m).max_by(|&x, &y| mat[x][c].abs().total_cmp(&mat[y][c].abs()))?;
            mat.swap(c, p);
            let d = mat[c][c];
            if d.abs() < 1e-300 {
                return None;
            }
            for k in c..=m {
                mat[c][k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = mat[r][c];
                    for k in c..=m {
                        mat[r][k] -= f * mat[c][k];
                    }
                }
            }
        }
        Some(mat.into_iter().map(|r| r[m]).collect())
    }

    /// True if the pre-transfer sum only decays between events.
    pub fn is_excitatory(&self) -> bool {
        self.alpha.iter().flatten().all(|&a| a >= 0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Exponential-kernel accumulators `R_ij = sum_{k: type j} alpha_ij exp(-beta_ij (t_last - t_k))`
/// over every event up to and including the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveState<'a> {
    model: &'a HawkesModel,
    r: Vec<Vec<f64>>,
    last: f64,
}

impl<'a> RecursiveState<'a> {
    pub fn new(model: &'a HawkesModel) -> Self {
        let m = model.dim();
        Self { model, r: vec![vec![0.0; m]; m], last: 0.0 }
    }

    pub fn last_time(&self) -> f64 {
        self.last
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.r
    }

    /// Pre-transfer excitation at `t >= last_time`.
    pub fn excitation(&self, t: f64, out: &mut [f64]) {
        let dt = t - self.last;
        let m = self.model;
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = m.base[i];
            for j in 0..m.dim() {
                let r = self.r[i][j];
                if r != 0.0 {
                    s += r * (-m.beta[i][j] * dt).exp();
                }
            }
            *o = s;
        }
    }

    pub fn intensities_at(&self, t: f64, out: &mut [f64]) {
        self.excitation(t, out);
        let phi = self.model.transfer;
        for v in out.iter_mut() {
            *v = phi.apply(*v);
        }
    }

    pub fn push(&mut self, t: f64, k: usize) {
        let dt = t - self.last;
        let m = self.model;
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                self.r[i][j] *= (-m.beta[i][j] * dt).exp();
            }
            self.r[i][k] += m.alpha[i][k];
        }
        self.last = t;
    }

    /// `int_a^b lambda_i(s) ds` for `last_time <= a <= b` with no event in between.
    pub fn integrate(&self, a: f64, b: f64, out: &mut [f64]) {
        let m = self.model;
        match m.transfer {
            Transfer::Identity => {
                let (da, db) = (a - self.last, b - self.last);
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = m.base[i] * (b - a);
                    for j in 0..m.dim() {
                        let beta = m.beta[i][j];
                        s += self.r[i][j] * ((-beta * da).exp() - (-beta * db).exp()) / beta;
                    }
                    *o = s;
                }
            }
            Transfer::Softplus => {
                let mut buf = vec![0.0; m.dim()];
                for (i, o) in out.iter_mut().enumerate() {
                    let f = |s: f64| {
                        self.excitation(s, &mut buf);
                        crate::nn::softplus(buf[i])
                    };
                    *o = adaptive_simpson(f, a, b, 1e-8);
                }
            }
        }
    }
}

impl IntensityProcess for RecursiveState<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn intensities(&self, t: f64, out: &mut [f64]) {
        self.intensities_at(t, out);
    }

    fn record(&mut self, t: f64, mark: usize) {
        self.push(t, mark);
    }

    fn decays_between_events(&self) -> bool {
        self.model.is_excitatory()
    }
}

/// Adaptive Simpson quadrature with relative tolerance `rel_tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    simpson_rec(&mut f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn check_types(model: &HawkesModel, events: &[(f64, usize)]) -> Result<()> {
    match events.iter().find(|e| e.1 >= model.dim()) {
        Some(e) => Err(HawkesError::BadType(e.1)),
        None => Ok(()),
    }
}

/// Intensity vector at `t` given every history event strictly before `t`.
pub fn intensity(model: &HawkesModel, history: &[(f64, usize)], t: f64) -> Result<Vec<f64>> {
    check_types(model, history)?;
    if let Some(&(last, _)) = history.last() {
        if t < last {
            return Err(HawkesError::TimeBeforeHistory { t, last });
        }
    }
    let mut st = RecursiveState::new(model);
    for &(tk, k) in history.iter().take_while(|e| e.0 < t) {
        st.push(tk, k);
    }
    let mut out = vec![0.0; model.dim()];
    st.intensities_at(t, &mut out);
    Ok(out)
}

fn validate_events(events: &[(f64, usize)], horizon: f64) -> Result<()> {
    let mut prev = 0.0;
    for (index, &(t, _)) in events.iter().enumerate() {
        if !(t >= prev && t <= horizon) {
            return Err(HawkesError::BadEvents { index, horizon });
        }
        prev = t;
    }
    Ok(())
}

/// Per-event log intensities and per-interval compensator increments.
///
/// Returns `(log_lambda, compensator)` where `compensator[k][i]` integrates
/// `lambda_i` over `(t_{k-1}, t_k]` and the final entry covers `(t_n, horizon]`.
fn decompose(model: &HawkesModel, events: &[(f64, usize)], horizon: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_types(model, events)?;
    validate_events(events, horizon)?;
    let m = model.dim();
    let mut st = RecursiveState::new(model);
    let mut lam = vec![0.0; m];
    let mut logs = Vec::with_capacity(events.len());
    let mut comp = Vec::with_capacity(events.len() + 1);
    let mut prev = 0.0;
    for (index, &(t, k)) in events.iter().enumerate() {
        let mut inc = vec![0.0; m];
        st.integrate(prev, t, &mut inc);
        st.intensities_at(t, &mut lam);
        let l = lam[k].ln();
        if !l.is_finite() || inc.iter().any(|v| !v.is_finite()) {
            return Err(HawkesError::NonFinite(index));
        }
        logs.push(l);
        comp.push(inc);
        st.push(t, k);
        prev = t;
    }
    let mut inc = vec![0.0; m];
    st.integrate(prev, horizon, &mut inc);
    if inc.iter().any(|v| !v.is_finite()) {
        return Err(HawkesError::NonFinite(events.len()));
    }
    comp.push(inc);
    Ok((logs, comp))
}

/// `sum_k log lambda_{type_k}(t_k) - sum_i int_0^T lambda_i(s) ds`.
pub fn log_likelihood(model: &HawkesModel, events: &[(f64, usize)], horizon: f64) -> Result<f64> {
    let (logs, comp) = decompose(model, events, horizon)?;
    let ll = logs.iter().sum::<f64>() - comp.iter().flatten().sum::<f64>();
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(HawkesError::NonFinite(events.len()))
    }
}

/// Log-likelihood of events `from..` conditioned on the full preceding
/// history, integrating the compensator from `t_{from-1}` to the last event.
pub fn conditional_log_likelihood(model: &HawkesModel, events: &[(f64, usize)], from: usize) -> Result<f64> {
    let Some(&(horizon, _)) = events.last() else { return Ok(0.0) };
    let (logs, comp) = decompose(model, events, horizon)?;
    let from = from.max(1).min(events.len());
    let ll: f64 = logs[from..].iter().sum::<f64>() - comp[from..events.len()].iter().flatten().sum::<f64>();
    Ok(ll)
}

/// Per-type time-rescaled inter-event residuals; unit exponential when the
/// model generated the data.
pub fn rescaled_residuals(model: &HawkesModel, events: &[(f64, usize)]) -> Result<Vec<Vec<f64>>> {
    let Some(&(horizon, _)) = events.last() else { return Ok(vec![Vec::new(); model.dim()]) };
    let (_, comp) = decompose(model, events, horizon)?;
    let m = model.dim();
    let mut acc = vec![0.0; m];
    let mut out = vec![Vec::new(); m];
    for (&(_, k), inc) in events.iter().zip(&comp) {
        for i in 0..m {
            acc[i] += inc[i];
        }
        out[k].push(acc[k]);
        acc[k] = 0.0;
    }
    Ok(out)
}

fn bound_rule(model: &HawkesModel) -> BoundRule {
    if model.is_excitatory() {
        BoundRule::Current
    } else {
        BoundRule::grid(16, 1.5)
    }
}

/// Simulate until `horizon` with the given seed.
pub fn simulate(model: &HawkesModel, horizon: Horizon, seed: u64) -> Result<ThinningOutput> {
    let mut st = RecursiveState::new(model);
    let cfg = ThinningConfig::new(bound_rule(model), horizon);
    Ok(thin(&mut st, &cfg, &mut seeded(seed))?)
}

/// Events on `[0, horizon]` by Ogata thinning.
pub fn simulate_thinning(model: &HawkesModel, horizon: f64, seed: u64) -> Result<Vec<(f64, usize)>> {
    if !(horizon > 0.0) {
        return Err(HawkesError::InvalidModel(format!("horizon must be positive, got {horizon}")));
    }
    Ok(simulate(model, Horizon::time(horizon), seed)?.events)
}
