//! Linear discriminant rules and the rotate-and-solve wrapper.
//!
//! A rule `(ω, ν)` assigns class 1 to `x` when `(x − ν)ᵀω ≥ 0` and class 2
//! otherwise, so points exactly on the boundary go to class 1.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    estimate_moments, rotate_dataset, rotation_economy, rotation_full, BasisKind, Class, EstimatedMoments,
    LabeledDataset, RotationBasis,
};
use crate::linalg::{cholesky_solve, pseudo_inverse, sym_eig_desc, SymMatrix, PINV_REL_TOL};
use crate::population::{oracle_quantities, PopulationModel};
use crate::selection::{effective_folds, linspace, logspace, make_folds, DEFAULT_FOLDS};

/// Floor applied to variances before dividing by them.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Multiplier in the default ROAD penalty weight `κ = 1e4·(λ_max(Σ̂) + 1)`.
pub const KAPPA_SCALE: f64 = 1e4;

/// Ridge added to ROAD active-set systems, relative to `λ_max(Σ̂) + 1`.
pub const ROAD_RIDGE_REL: f64 = 1e-10;

/// Default cap on ROAD active-set iterations per λ.
pub const ROAD_MAX_ITER: usize = 10_000;

/// Points in the default ROAD λ grid.
pub const DEFAULT_LAMBDA_POINTS: usize = 20;

/// Points in the default NSC Δ grid.
pub const DEFAULT_DELTA_POINTS: usize = 30;

/// Anything that maps a feature vector to a class.
pub trait Classifier {
    /// Expected feature count.
    fn dim(&self) -> usize;

    /// Classifies `x`, assuming `x.len() == self.dim()`.
    fn classify_unchecked(&self, x: ArrayView1<f64>) -> Class;

    fn classify(&self, x: ArrayView1<f64>) -> Result<Class> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.classify_unchecked(x))
    }

    /// Classifies every row of `x`.
    fn classify_rows(&self, x: ArrayView2<f64>) -> Result<Vec<Class>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.classify_unchecked(r)).collect())
    }

    /// Fraction of rows whose predicted class differs from the label.
    fn error_rate(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::invalid("cannot compute an error rate on an empty dataset"));
        }
        let pred = self.classify_rows(data.x())?;
        let wrong = pred.iter().zip(data.labels()).filter(|(a, b)| a != b).count();
        Ok(wrong as f64 / data.len() as f64)
    }
}

/// `ψ(x) = 1{(x − ν)ᵀω ≥ 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRule {
    omega: Array1<f64>,
    nu: Array1<f64>,
}

impl LinearRule {
    pub fn new(omega: Array1<f64>, nu: Array1<f64>) -> Result<Self> {
        if omega.len() != nu.len() {
            return Err(Error::DimensionMismatch {
                expected: omega.len(),
                actual: nu.len(),
            });
        }
        if omega.iter().chain(nu.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if omega.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateRule("normal vector is identically zero".into()));
        }
        Ok(LinearRule { omega, nu })
    }

    pub fn omega(&self) -> &Array1<f64> {
        &self.omega
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }

    /// `(x − ν)ᵀω`.
    pub fn score(&self, x: ArrayView1<f64>) -> f64 {
        x.iter().zip(&self.nu).zip(&self.omega).map(|((a, b), w)| (a - b) * w).sum()
    }
}

impl Classifier for LinearRule {
    fn dim(&self) -> usize {
        self.omega.len()
    }

    fn classify_unchecked(&self, x: ArrayView1<f64>) -> Class {
        if self.score(x) >= 0.0 {
            Class::One
        } else {
            Class::Two
        }
    }
}

pub fn predict(rule: &LinearRule, x: ArrayView1<f64>) -> Result<Class> {
    rule.classify(x)
}

/// A rule trained on rotated coordinates `Uᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct RSRule {
    basis: RotationBasis,
    inner: LinearRule,
}

impl RSRule {
    pub fn new(basis: RotationBasis, inner: LinearRule) -> Result<Self> {
        if inner.dim() != basis.rank() {
            return Err(Error::DimensionMismatch {
                expected: basis.rank(),
                actual: inner.dim(),
            });
        }
        Ok(RSRule { basis, inner })
    }

    pub fn basis(&self) -> &RotationBasis {
        &self.basis
    }

    pub fn inner(&self) -> &LinearRule {
        &self.inner
    }

    /// The same rule written in original coordinates: `ω = Uω_in`, `ν = Uν_in`.
    pub fn equivalent_linear(&self) -> LinearRule {
        let omega = self.basis.columns.dot(&self.inner.omega);
        let nu = self.basis.columns.dot(&self.inner.nu);
        LinearRule { omega, nu }
    }
}

impl Classifier for RSRule {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn classify_unchecked(&self, x: ArrayView1<f64>) -> Class {
        let z = self.basis.columns.t().dot(&x);
        self.inner.classify_unchecked(z.view())
    }
}

pub fn rs_predict(rule: &RSRule, x: ArrayView1<f64>) -> Result<Class> {
    rule.classify(x)
}

/// A trained rule of either shape, with a stable JSON encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RuleRepr", try_from = "RuleRepr")]
pub enum TrainedRule {
    Linear(LinearRule),
    Rs(RSRule),
}

impl TrainedRule {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Rule in original coordinates.
    pub fn as_linear(&self) -> LinearRule {
        match self {
            TrainedRule::Linear(r) => r.clone(),
            TrainedRule::Rs(r) => r.equivalent_linear(),
        }
    }
}

impl Classifier for TrainedRule {
    fn dim(&self) -> usize {
        match self {
            TrainedRule::Linear(r) => r.dim(),
            TrainedRule::Rs(r) => r.dim(),
        }
    }

    fn classify_unchecked(&self, x: ArrayView1<f64>) -> Class {
        match self {
            TrainedRule::Linear(r) => r.classify_unchecked(x),
            TrainedRule::Rs(r) => r.classify_unchecked(x),
        }
    }
}

impl From<LinearRule> for TrainedRule {
    fn from(r: LinearRule) -> Self {
        TrainedRule::Linear(r)
    }
}

impl From<RSRule> for TrainedRule {
    fn from(r: RSRule) -> Self {
        TrainedRule::Rs(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RuleKind {
    Linear,
    Rs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BasisRepr {
    columns: Vec<Vec<f64>>,
    rho: f64,
    kind: BasisKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleRepr {
    kind: RuleKind,
    omega: Vec<f64>,
    nu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<BasisRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inner: Option<Box<RuleRepr>>,
}

impl From<TrainedRule> for RuleRepr {
    fn from(rule: TrainedRule) -> Self {
        match rule {
            TrainedRule::Linear(r) => RuleRepr {
                kind: RuleKind::Linear,
                omega: r.omega.to_vec(),
                nu: r.nu.to_vec(),
                basis: None,
                inner: None,
            },
            TrainedRule::Rs(r) => {
                let eq = r.equivalent_linear();
                let columns = r.basis.columns.columns().into_iter().map(|c| c.to_vec()).collect();
                RuleRepr {
                    kind: RuleKind::Rs,
                    omega: eq.omega.to_vec(),
                    nu: eq.nu.to_vec(),
                    basis: Some(BasisRepr {
                        columns,
                        rho: r.basis.rho,
                        kind: r.basis.kind,
                    }),
                    inner: Some(Box::new(RuleRepr::from(TrainedRule::Linear(r.inner)))),
                }
            }
        }
    }
}

impl TryFrom<RuleRepr> for TrainedRule {
    type Error = Error;

    fn try_from(repr: RuleRepr) -> Result<Self> {
        match repr.kind {
            RuleKind::Linear => Ok(TrainedRule::Linear(LinearRule::new(
                Array1::from(repr.omega),
                Array1::from(repr.nu),
            )?)),
            RuleKind::Rs => {
                let basis = repr.basis.ok_or_else(|| Error::invalid("rs rule is missing its basis"))?;
                let inner = repr.inner.ok_or_else(|| Error::invalid("rs rule is missing its inner rule"))?;
                let inner = match TrainedRule::try_from(*inner)? {
                    TrainedRule::Linear(l) => l,
                    TrainedRule::Rs(_) => return Err(Error::invalid("nested rs rules are not supported")),
                };
                let r = basis.columns.len();
                let p = basis.columns.first().map_or(0, Vec::len);
                let mut cols = Array2::<f64>::zeros((p, r));
                for (j, col) in basis.columns.iter().enumerate() {
                    if col.len() != p {
                        return Err(Error::DimensionMismatch {
                            expected: p,
                            actual: col.len(),
                        });
                    }
                    for (i, v) in col.iter().enumerate() {
                        cols[[i, j]] = *v;
                    }
                }
                let rotation = RotationBasis {
                    columns: cols,
                    eigenvalues: Array1::from_elem(r, f64::NAN),
                    rho: basis.rho,
                    kind: basis.kind,
                };
                Ok(TrainedRule::Rs(RSRule::new(rotation, inner)?))
            }
        }
    }
}

/// Base solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fisher rule with the true parameters; needs a population model.
    Oracle,
    /// `Σ̂⁺δ̂` (Moore–Penrose pseudo-inverse LDA).
    #[serde(rename = "lda_pseudo")]
    Lda,
    /// Diagonal LDA.
    Ir,
    /// Nearest shrunken centroids.
    Nsc,
    /// ℓ1-penalized direction with a penalty on `wᵀδ̂ − 1`.
    Road,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Lda => "lda",
            Method::Ir => "ir",
            Method::Nsc => "nsc",
            Method::Road => "road",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Method::Oracle),
            "lda" | "lda_pseudo" => Ok(Method::Lda),
            "ir" => Ok(Method::Ir),
            "nsc" => Ok(Method::Nsc),
            "road" => Ok(Method::Road),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NscConfig {
    /// Shrinkage values; defaults to 30 points on `[0, max_j |d_j|]`.
    pub delta_grid: Option<Vec<f64>>,
    /// Offset added to every per-feature scale; defaults to their median.
    pub s0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    /// Penalty levels; defaults to 20 log-spaced points on `[1e-4·λ̄, λ̄]`, `λ̄ = ‖δ̂‖∞`.
    pub lambda_grid: Option<Vec<f64>>,
    /// Weight on `(wᵀδ̂ − 1)²`; defaults to `1e4·(λ_max(Σ̂) + 1)`.
    pub kappa: Option<f64>,
    pub max_iter: usize,
}

impl Default for RoadConfig {
    fn default() -> Self {
        RoadConfig {
            lambda_grid: None,
            kappa: None,
            max_iter: ROAD_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Folds for tuning-parameter CV.
    pub folds: usize,
    pub seed: u64,
    pub pinv_rel_tol: f64,
    pub nsc: NscConfig,
    pub road: RoadConfig,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        SolverConfig {
            method,
            folds: DEFAULT_FOLDS,
            seed: 0,
            pinv_rel_tol: PINV_REL_TOL,
            nsc: NscConfig::default(),
            road: RoadConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid(format!("cross-validation needs at least 2 folds, got {}", self.folds)));
        }
        if let Some(g) = &self.nsc.delta_grid {
            if g.is_empty() {
                return Err(Error::invalid("NSC shrinkage grid is empty"));
            }
            if let Some(&bad) = g.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::Domain {
                    what: "NSC shrinkage (must be >= 0)",
                    value: bad,
                });
            }
        }
        if let Some(g) = &self.road.lambda_grid {
            if g.is_empty() {
                return Err(Error::invalid("ROAD penalty grid is empty"));
            }
            if let Some(&bad) = g.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::Domain {
                    what: "ROAD penalty (must be > 0)",
                    value: bad,
                });
            }
        }
        if let Some(k) = self.road.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Domain {
                    what: "ROAD kappa (must be > 0)",
                    value: k,
                });
            }
        }
        if !(self.pinv_rel_tol > 0.0 && self.pinv_rel_tol < 1.0) {
            return Err(Error::Domain {
                what: "pseudo-inverse tolerance",
                value: self.pinv_rel_tol,
            });
        }
        Ok(())
    }
}

/// Outcome of a tuning-parameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    /// `"lambda"` or `"delta"`.
    pub parameter: String,
    pub selected: f64,
    /// `(value, CV error)`; `None` marks a value that gave a zero rule in some fold.
    pub curve: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub rule: LinearRule,
    pub tuning: Option<Tuning>,
}

/// Fisher rule `ω = Σ⁻¹δ`, `ν = (μ₁ + μ₂)/2`.
pub fn fisher_oracle(model: &PopulationModel) -> Result<LinearRule> {
    let q = oracle_quantities(model)?;
    if q.used_pseudo_inverse {
        let eig = sym_eig_desc(&model.sigma)?;
        return Err(Error::Singular {
            min_eigenvalue: eig.values[eig.dim() - 1],
        });
    }
    LinearRule::new(q.beta, model.midpoint())
}

/// `ω = Σ̂⁺δ̂`, `ν = μ̂`.
pub fn lda_pseudo(m: &EstimatedMoments, rel_tol: f64) -> Result<LinearRule> {
    let pinv = pseudo_inverse(&m.sigma_hat, rel_tol)?;
    let omega = pinv.view().dot(&m.delta_hat);
    LinearRule::new(omega, m.mu_hat.clone())
}

/// `ω_j = δ̂_j / Σ̂_jj` (variances floored at `VARIANCE_FLOOR`), `ν = μ̂`.
pub fn independence_rule(m: &EstimatedMoments) -> Result<LinearRule> {
    let s = m.sigma_hat.view();
    let omega = Array1::from_shape_fn(m.delta_hat.len(), |j| m.delta_hat[j] / s[[j, j]].max(VARIANCE_FLOOR));
    LinearRule::new(omega, m.mu_hat.clone())
}

/// Per-feature pieces of the shrunken-centroid rule.
#[derive(Debug, Clone)]
pub struct NscStatistics {
    /// `s_j + s₀`.
    pub scale: Array1<f64>,
    /// Standardized centroid differences `d_j`.
    pub d: Array1<f64>,
    /// `√(1/n₁ + 1/n₂)`.
    pub m: f64,
    pub s0: f64,
    pub mu_hat: Array1<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn nsc_statistics(m: &EstimatedMoments, s0: Option<f64>) -> Result<NscStatistics> {
    let sig = m.sigma_hat.view();
    let sd: Vec<f64> = (0..m.delta_hat.len()).map(|j| sig[[j, j]].max(0.0).sqrt()).collect();
    let s0 = match s0 {
        Some(v) if v >= 0.0 && v.is_finite() => v,
        Some(v) => return Err(Error::Domain { what: "NSC s0", value: v }),
        None => median(&sd),
    };
    let mm = (1.0 / m.n1 as f64 + 1.0 / m.n2 as f64).sqrt();
    let scale = Array1::from_shape_fn(sd.len(), |j| (sd[j] + s0).max(VARIANCE_FLOOR.sqrt()));
    let d = Array1::from_shape_fn(sd.len(), |j| m.delta_hat[j] / (mm * scale[j]));
    Ok(NscStatistics {
        scale,
        d,
        m: mm,
        s0,
        mu_hat: m.mu_hat.clone(),
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Diagonal rule from soft-thresholded differences:
/// `ω_j = m(s_j + s₀)·d'_j / (s_j + s₀)²`.
pub fn nsc_rule(stats: &NscStatistics, shrinkage: f64) -> Result<LinearRule> {
    let omega = Array1::from_shape_fn(stats.d.len(), |j| {
        let dj = soft_threshold(stats.d[j], shrinkage);
        stats.m * stats.scale[j] * dj / (stats.scale[j] * stats.scale[j])
    });
    LinearRule::new(omega, stats.mu_hat.clone())
}

fn pick_by_cv(
    parameter: &str,
    grid: &[f64],
    errors: &[Option<f64>],
) -> Option<Tuning> {
    let mut best: Option<usize> = None;
    for (i, e) in errors.iter().enumerate() {
        let Some(e) = *e else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let eb = errors[b].expect("chosen entries are valid");
                if e < eb || (e == eb && grid[i] > grid[b]) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.map(|b| Tuning {
        parameter: parameter.to_string(),
        selected: grid[b],
        curve: grid.iter().copied().zip(errors.iter().copied()).collect(),
    })
}

/// Runs stratified CV over a grid. `fit_path` returns, for a training set,
/// one optional rule per grid value (`None` = degenerate at that value).
fn cv_over_grid<F>(
    data: &LabeledDataset,
    grid: &[f64],
    folds: usize,
    seed: u64,
    fit_path: F,
) -> Result<Option<Vec<Option<f64>>>>
where
    F: Fn(&LabeledDataset) -> Result<Vec<Option<LinearRule>>>,
{
    let k = effective_folds(data, folds);
    if k < 2 {
        return Ok(None);
    }
    let plan = make_folds(data, k, seed, true)?;
    let mut wrong = vec![0usize; grid.len()];
    let mut valid = vec![true; grid.len()];
    let mut total = 0usize;
    for (fold, (train, val)) in plan.folds.iter().enumerate() {
        let rules = fit_path(&data.subset(train)).map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })?;
        for (g, rule) in rules.iter().enumerate() {
            match rule {
                None => valid[g] = false,
                Some(r) => {
                    for &i in val {
                        if r.classify_unchecked(data.row(i)) != data.labels()[i] {
                            wrong[g] += 1;
                        }
                    }
                }
            }
        }
        total += val.len();
    }
    Ok(Some(
        (0..grid.len())
            .map(|g| valid[g].then(|| wrong[g] as f64 / total as f64))
            .collect(),
    ))
}

fn degenerate_to_none(r: Result<LinearRule>) -> Result<Option<LinearRule>> {
    match r {
        Ok(rule) => Ok(Some(rule)),
        Err(Error::DegenerateRule(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Falls back to the least regularized non-degenerate value when CV is
/// not possible (a class has fewer than two rows).
fn least_regularized<F>(grid: &[f64], mut fit: F) -> Result<(f64, LinearRule)>
where
    F: FnMut(f64) -> Result<Option<LinearRule>>,
{
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(f64::total_cmp);
    for v in order {
        if let Some(rule) = fit(v)? {
            return Ok((v, rule));
        }
    }
    Err(Error::DegenerateRule("every grid value produced a zero rule".into()))
}

/// Nearest shrunken centroids with Δ chosen by stratified CV (ties go to
/// the larger Δ).
pub fn nsc_train(data: &LabeledDataset, cfg: &SolverConfig) -> Result<LinearFit> {
    cfg.validate()?;
    let m = estimate_moments(data)?;
    let stats = nsc_statistics(&m, cfg.nsc.s0)?;
    let grid = match &cfg.nsc.delta_grid {
        Some(g) => g.clone(),
        None => {
            let dmax = stats.d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            linspace(0.0, dmax, DEFAULT_DELTA_POINTS)
        }
    };
    let errors = cv_over_grid(data, &grid, cfg.folds, cfg.seed, |train| {
        let st = nsc_statistics(&estimate_moments(train)?, cfg.nsc.s0)?;
        grid.iter().map(|&d| degenerate_to_none(nsc_rule(&st, d))).collect()
    })?;
    match errors {
        None => {
            let (v, rule) = least_regularized(&grid, |d| degenerate_to_none(nsc_rule(&stats, d)))?;
            Ok(LinearFit {
                rule,
                tuning: Some(Tuning {
                    parameter: "delta".into(),
                    selected: v,
                    curve: grid.iter().map(|&g| (g, None)).collect(),
                }),
            })
        }
        Some(errors) => {
            let tuning = pick_by_cv("delta", &grid, &errors)
                .ok_or_else(|| Error::DegenerateRule("every shrinkage value produced a zero rule".into()))?;
            let rule = nsc_rule(&stats, tuning.selected)?;
            Ok(LinearFit {
                rule,
                tuning: Some(tuning),
            })
        }
    }
}

/// The penalized ROAD objective
/// `F(w) = ½wᵀΣ̂w + λ‖w‖₁ + (κ/2)(wᵀδ̂ − 1)²`,
/// written as `½wᵀQw − bᵀw + λ‖w‖₁ + κ/2` with `Q = Σ̂ + κδ̂δ̂ᵀ`, `b = κδ̂`.
#[derive(Debug, Clone)]
pub struct RoadProblem {
    sigma: Array2<f64>,
    delta: Array1<f64>,
    kappa: f64,
    q: Array2<f64>,
    b: Array1<f64>,
    ridge: f64,
}

/// Minimizer of a [`RoadProblem`] at one λ.
#[derive(Debug, Clone)]
pub struct RoadSolution {
    pub w: Array1<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl RoadProblem {
    pub fn new(m: &EstimatedMoments, kappa: Option<f64>) -> Result<Self> {
        RoadProblem::from_parts(&m.sigma_hat, m.delta_hat.clone(), kappa)
    }

    pub fn from_parts(sigma: &SymMatrix, delta: Array1<f64>, kappa: Option<f64>) -> Result<Self> {
        let p = sigma.dim();
        if delta.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: delta.len(),
            });
        }
        if delta.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateRule("mean difference is zero".into()));
        }
        let top = if p == 0 { 0.0 } else { sym_eig_desc(sigma)?.values[0].max(0.0) };
        let kappa = kappa.unwrap_or(KAPPA_SCALE * (top + 1.0));
        let mut q = sigma.as_array().clone();
        crate::linalg::add_outer(&mut q, kappa, delta.view());
        let b = &delta * kappa;
        Ok(RoadProblem {
            sigma: sigma.as_array().clone(),
            delta,
            kappa,
            q,
            b,
            ridge: ROAD_RIDGE_REL * (top + 1.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn objective(&self, w: ArrayView1<f64>, lambda: f64) -> f64 {
        let quad = 0.5 * w.dot(&self.sigma.dot(&w));
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        let c = w.dot(&self.delta) - 1.0;
        quad + lambda * l1 + 0.5 * self.kappa * c * c
    }

    /// Gradient of the smooth part, `Qw − b`.
    pub fn gradient(&self, w: ArrayView1<f64>) -> Array1<f64> {
        self.q.dot(&w) - &self.b
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt_residual(&self, w: ArrayView1<f64>, lambda: f64) -> f64 {
        let g = self.gradient(w);
        g.iter()
            .zip(w.iter())
            .map(|(&gi, &wi)| {
                if wi != 0.0 {
                    (gi + lambda * wi.signum()).abs()
                } else {
                    (gi.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    fn sub_objective(qa: &Array2<f64>, ba: &Array1<f64>, lambda: f64, x: &Array1<f64>) -> f64 {
        0.5 * x.dot(&qa.dot(x)) - ba.dot(x) + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Exact minimizer by active-set (feature-sign) search, warm-started
    /// from `warm` when given.
    pub fn solve(&self, lambda: f64, warm: Option<ArrayView1<f64>>, max_iter: usize) -> Result<RoadSolution> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain {
                what: "ROAD penalty",
                value: lambda,
            });
        }
        let p = self.dim();
        let mut x = match warm {
            Some(w) if w.len() == p => w.to_owned(),
            Some(w) => {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: w.len(),
                })
            }
            None => Array1::zeros(p),
        };
        let bmax = self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tol = 1e-12 * bmax.max(lambda).max(1.0);
        let mut settled = false;
        let mut last_violation = f64::INFINITY;
        for iter in 0..max_iter {
            let g = self.q.dot(&x) - &self.b + &x * self.ridge;
            let mut active: Vec<usize> = (0..p).filter(|&i| x[i] != 0.0).collect();
            let nz_violation = active
                .iter()
                .map(|&i| (g[i] + lambda * x[i].signum()).abs())
                .fold(0.0, f64::max);
            let mut theta: Vec<f64> = active.iter().map(|&i| x[i].signum()).collect();
            if settled || nz_violation <= tol {
                let mut pick: Option<(usize, f64)> = None;
                for i in 0..p {
                    if x[i] == 0.0 && pick.is_none_or(|(_, best)| g[i].abs() > best) {
                        pick = Some((i, g[i].abs()));
                    }
                }
                match pick {
                    Some((j, gj)) if gj > lambda + tol => {
                        last_violation = gj - lambda;
                        active.push(j);
                        theta.push(-g[j].signum());
                    }
                    _ => {
                        let kkt = self.kkt_residual(x.view(), lambda);
                        return Ok(RoadSolution {
                            w: x,
                            iterations: iter,
                            kkt_residual: kkt,
                        });
                    }
                }
            } else {
                last_violation = nz_violation;
            }

            let na = active.len();
            let mut qa = Array2::<f64>::zeros((na, na));
            for (a, &i) in active.iter().enumerate() {
                for (c, &j) in active.iter().enumerate() {
                    qa[[a, c]] = self.q[[i, j]];
                }
                qa[[a, a]] += self.ridge;
            }
            let ba = Array1::from_shape_fn(na, |a| self.b[active[a]]);
            let rhs = Array1::from_shape_fn(na, |a| ba[a] - lambda * theta[a]);
            let x_new = cholesky_solve(qa.view(), rhs.view()).ok_or(Error::RoadNonConvergence {
                lambda,
                iterations: iter,
                last_violation,
            })?;
            let x_old = Array1::from_shape_fn(na, |a| x[active[a]]);

            let mut candidates: Vec<f64> = vec![1.0];
            for a in 0..na {
                let (xo, xn) = (x_old[a], x_new[a]);
                if xo != 0.0 && xo.signum() != xn.signum() {
                    let t = xo / (xo - xn);
                    if t > 0.0 && t < 1.0 {
                        candidates.push(t);
                    }
                }
            }
            let mut best_t = 1.0;
            let mut best_f = f64::INFINITY;
            for &t in &candidates {
                let pt = &x_old + &((&x_new - &x_old) * t);
                let f = Self::sub_objective(&qa, &ba, lambda, &pt);
                if f < best_f {
                    best_f = f;
                    best_t = t;
                }
            }
            for a in 0..na {
                let (xo, xn) = (x_old[a], x_new[a]);
                let crosses = xo != 0.0 && xo.signum() != xn.signum() && (xo / (xo - xn) - best_t).abs() <= 1e-15;
                x[active[a]] = if crosses { 0.0 } else { xo + (xn - xo) * best_t };
            }
            settled = best_t == 1.0
                && (0..na).all(|a| x_new[a] == 0.0 || x_new[a].signum() == theta[a]);
        }
        Err(Error::RoadNonConvergence {
            lambda,
            iterations: max_iter,
            last_violation,
        })
    }

    /// Solutions along `lambdas`, computed from the largest value down with
    /// warm starts and returned in the input order.
    pub fn solve_path(&self, lambdas: &[f64], max_iter: usize) -> Result<Vec<RoadSolution>> {
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
        let mut out: Vec<Option<RoadSolution>> = vec![None; lambdas.len()];
        let mut warm: Option<Array1<f64>> = None;
        for i in order {
            let sol = self.solve(lambdas[i], warm.as_ref().map(|w| w.view()), max_iter)?;
            warm = Some(sol.w.clone());
            out[i] = Some(sol);
        }
        Ok(out.into_iter().map(|s| s.expect("every index visited")).collect())
    }
}

/// Default ROAD grid: 20 log-spaced values on `[1e-4·λ̄, λ̄]`, `λ̄ = ‖δ̂‖∞`.
pub fn default_lambda_grid(delta_hat: ArrayView1<f64>) -> Vec<f64> {
    let top = delta_hat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return Vec::new();
    }
    logspace(1e-4 * top, top, DEFAULT_LAMBDA_POINTS)
}

/// ROAD at a single λ.
pub fn road_fit(data: &LabeledDataset, lambda: f64, cfg: &RoadConfig) -> Result<LinearRule> {
    let m = estimate_moments(data)?;
    let prob = RoadProblem::new(&m, cfg.kappa)?;
    let sol = prob.solve(lambda, None, cfg.max_iter)?;
    LinearRule::new(sol.w, m.mu_hat)
}

/// ROAD with λ chosen by stratified CV (ties go to the larger λ).
pub fn road_train(data: &LabeledDataset, cfg: &SolverConfig) -> Result<LinearFit> {
    cfg.validate()?;
    let m = estimate_moments(data)?;
    let prob = RoadProblem::new(&m, cfg.road.kappa)?;
    let grid = match &cfg.road.lambda_grid {
        Some(g) => g.clone(),
        None => default_lambda_grid(m.delta_hat.view()),
    };
    let errors = cv_over_grid(data, &grid, cfg.folds, cfg.seed, |train| {
        let mt = estimate_moments(train)?;
        let pt = match RoadProblem::new(&mt, cfg.road.kappa) {
            Ok(pt) => pt,
            Err(Error::DegenerateRule(_)) => return Ok(vec![None; grid.len()]),
            Err(e) => return Err(e),
        };
        pt.solve_path(&grid, cfg.road.max_iter)?
            .into_iter()
            .map(|s| degenerate_to_none(LinearRule::new(s.w, mt.mu_hat.clone())))
            .collect()
    })?;
    let fit_at = |lambda: f64| -> Result<Option<LinearRule>> {
        let sol = prob.solve(lambda, None, cfg.road.max_iter)?;
        degenerate_to_none(LinearRule::new(sol.w, m.mu_hat.clone()))
    };
    match errors {
        None => {
            let (v, rule) = least_regularized(&grid, fit_at)?;
            Ok(LinearFit {
                rule,
                tuning: Some(Tuning {
                    parameter: "lambda".into(),
                    selected: v,
                    curve: grid.iter().map(|&g| (g, None)).collect(),
                }),
            })
        }
        Some(errors) => {
            let tuning = pick_by_cv("lambda", &grid, &errors)
                .ok_or_else(|| Error::DegenerateRule("every penalty value produced a zero rule".into()))?;
            let rule = fit_at(tuning.selected)?
                .ok_or_else(|| Error::DegenerateRule("selected penalty produced a zero rule".into()))?;
            Ok(LinearFit {
                rule,
                tuning: Some(tuning),
            })
        }
    }
}

/// Trains any data-driven base method.
pub fn train_linear(data: &LabeledDataset, cfg: &SolverConfig) -> Result<LinearFit> {
    cfg.validate()?;
    match cfg.method {
        Method::Oracle => Err(Error::invalid("the oracle rule needs a population model, not data")),
        Method::Lda => Ok(LinearFit {
            rule: lda_pseudo(&estimate_moments(data)?, cfg.pinv_rel_tol)?,
            tuning: None,
        }),
        Method::Ir => Ok(LinearFit {
            rule: independence_rule(&estimate_moments(data)?)?,
            tuning: None,
        }),
        Method::Nsc => nsc_train(data, cfg),
        Method::Road => road_train(data, cfg),
    }
}

#[derive(Debug, Clone)]
pub struct RsFit {
    pub rule: RSRule,
    pub tuning: Option<Tuning>,
}

/// Trains `base` on `Uᵀx` for a caller-supplied basis.
pub fn rotate_and_solve_with_basis(data: &LabeledDataset, basis: RotationBasis, base: &SolverConfig) -> Result<RsFit> {
    if base.method == Method::Oracle {
        return Err(Error::invalid("rotate-and-solve needs a data-driven base method"));
    }
    let rotated = rotate_dataset(data, &basis)?;
    let fit = train_linear(&rotated, base)?;
    Ok(RsFit {
        rule: RSRule::new(basis, fit.rule)?,
        tuning: fit.tuning,
    })
}

/// Rotates by the eigenvectors of `Σ̂ + ρδ̂δ̂ᵀ` (all p, or only the
/// non-vanishing ones when `economy`), then trains `base`.
pub fn rotate_and_solve(data: &LabeledDataset, rho: f64, base: &SolverConfig, economy: bool) -> Result<RsFit> {
    if base.method == Method::Oracle {
        return Err(Error::invalid("rotate-and-solve needs a data-driven base method"));
    }
    let basis = if economy {
        rotation_economy(data, rho, None)?.basis
    } else {
        rotation_full(&estimate_moments(data)?, rho)?
    };
    rotate_and_solve_with_basis(data, basis, base)
}
