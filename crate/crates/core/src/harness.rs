//! Seeded Gaussian sampling, replicated Monte-Carlo experiments and the
//! diagnostic sweeps built on them.
//!
//! Every random draw is keyed by `mix_seed(master, replicate, tag)` so any
//! replicate can be reproduced on its own, and all methods in a replicate
//! see the same training and test sets.

use std::io::Write;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    fisher_oracle, rotate_and_solve, rotate_and_solve_with_basis, train_linear, Classifier, Method, SolverConfig,
};
use crate::error::{Error, Result};
use crate::estimation::{estimate_moments, rotation_full, Class, LabeledDataset};
use crate::linalg::{sym_eig_desc, SymMatrix};
use crate::population::{
    oracle_quantities, oracle_rotation, profile_vector, ModelRecipe, PopulationModel, DEFAULT_RHO,
};
use crate::selection::{default_rho_grid, select_rho, DEFAULT_FOLDS};

/// Stream tags for [`mix_seed`].
pub const TAG_MODEL: u64 = 0x4d4f_4445_4c00_0001;
pub const TAG_TRAIN: u64 = 0x5452_4149_4e00_0002;
pub const TAG_TEST: u64 = 0x5445_5354_0000_0003;
pub const TAG_METHOD: u64 = 0x4d45_5448_4f44_0004;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 chained over `(master, replicate, tag)`.
pub fn mix_seed(master: u64, replicate: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ replicate) ^ tag)
}

/// Draws `N(μ_c, Σ)` rows via the symmetric square root of Σ (negative
/// eigenvalues clipped), so singular covariances are fine.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mu1: Array1<f64>,
    mu2: Array1<f64>,
    root: Array2<f64>,
}

impl GaussianSampler {
    pub fn new(model: &PopulationModel) -> Result<Self> {
        let eig = sym_eig_desc(&model.sigma)?;
        let root = eig.spectral_map(|l| l.max(0.0).sqrt());
        Ok(GaussianSampler {
            mu1: model.mu1.clone(),
            mu2: model.mu2.clone(),
            root,
        })
    }

    /// `n1` class-1 rows followed by `n2` class-2 rows.
    pub fn sample(&self, n1: usize, n2: usize, seed: u64) -> Result<LabeledDataset> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::invalid("each class needs at least one sample"));
        }
        let p = self.mu1.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Array2::from_shape_fn((n1 + n2, p), |_| StandardNormal.sample(&mut rng));
        let mut x = z.dot(&self.root);
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            row += if i < n1 { &self.mu1 } else { &self.mu2 };
        }
        let y = (0..n1 + n2).map(|i| if i < n1 { Class::One } else { Class::Two }).collect();
        LabeledDataset::new(x, y)
    }
}

pub fn sample(model: &PopulationModel, n1: usize, n2: usize, seed: u64) -> Result<LabeledDataset> {
    GaussianSampler::new(model)?.sample(n1, n2, seed)
}

/// How rotate-and-solve methods pick ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum RhoPolicy {
    Fixed { rho: f64 },
    Cv { grid: Vec<f64>, folds: usize },
}

impl RhoPolicy {
    pub fn cv_default() -> Self {
        RhoPolicy::Cv {
            grid: default_rho_grid(),
            folds: DEFAULT_FOLDS,
        }
    }
}

impl Default for RhoPolicy {
    fn default() -> Self {
        RhoPolicy::Fixed { rho: DEFAULT_RHO }
    }
}

/// A method evaluated in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MethodSpec {
    /// Fisher rule with the true parameters.
    Oracle,
    /// A base solver on the raw features.
    Base { method: Method },
    /// Rotate by the estimated `Σ̂ + ρδ̂δ̂ᵀ` eigenvectors, then the base solver.
    Rs { base: Method, economy: bool, rho: RhoPolicy },
    /// Rotate by the population eigenvectors, then the base solver.
    OracleRs { base: Method, rho: RhoPolicy },
}

impl MethodSpec {
    /// `oracle`, `road`, `rs-road`, `rs-econ-road`, `o-rs-road`, ...
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Oracle => "oracle".into(),
            MethodSpec::Base { method } => method.name().into(),
            MethodSpec::Rs { base, economy: false, .. } => format!("rs-{}", base.name()),
            MethodSpec::Rs { base, economy: true, .. } => format!("rs-econ-{}", base.name()),
            MethodSpec::OracleRs { base, .. } => format!("o-rs-{}", base.name()),
        }
    }

    /// Parses a method name; `rho` applies to the rotate-and-solve variants.
    pub fn parse(name: &str, rho: &RhoPolicy) -> Result<Self> {
        let base = |s: &str| -> Result<Method> {
            match Method::parse(s)? {
                Method::Oracle => Err(Error::invalid("rotate-and-solve needs a data-driven base method")),
                m => Ok(m),
            }
        };
        if name == "oracle" {
            Ok(MethodSpec::Oracle)
        } else if let Some(rest) = name.strip_prefix("rs-econ-") {
            Ok(MethodSpec::Rs {
                base: base(rest)?,
                economy: true,
                rho: rho.clone(),
            })
        } else if let Some(rest) = name.strip_prefix("rs-") {
            Ok(MethodSpec::Rs {
                base: base(rest)?,
                economy: false,
                rho: rho.clone(),
            })
        } else if let Some(rest) = name.strip_prefix("o-rs-") {
            Ok(MethodSpec::OracleRs {
                base: base(rest)?,
                rho: rho.clone(),
            })
        } else {
            Ok(MethodSpec::Base { method: base(name)? })
        }
    }

    fn uses_rho(&self) -> bool {
        matches!(self, MethodSpec::Rs { .. } | MethodSpec::OracleRs { .. })
    }

    fn with_rho(&self, rho: RhoPolicy) -> Self {
        match self {
            MethodSpec::Rs { base, economy, .. } => MethodSpec::Rs {
                base: *base,
                economy: *economy,
                rho,
            },
            MethodSpec::OracleRs { base, .. } => MethodSpec::OracleRs { base: *base, rho },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: ModelRecipe,
    pub n1: usize,
    pub n2: usize,
    /// Test rows per class.
    pub n_test: usize,
    pub methods: Vec<MethodSpec>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Folds for every internal cross-validation.
    pub folds: usize,
    /// Rebuild the model from a per-replicate seed instead of once per run.
    pub redraw_model: bool,
}

impl ExperimentSpec {
    pub fn new(model: ModelRecipe, n1: usize, n2: usize, methods: Vec<MethodSpec>) -> Self {
        ExperimentSpec {
            model,
            n1,
            n2,
            n_test: n1.max(n2),
            methods,
            replicates: 100,
            master_seed: 0,
            folds: DEFAULT_FOLDS,
            redraw_model: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        if self.n1 == 0 || self.n2 == 0 || self.n_test == 0 {
            return Err(Error::invalid("training and test sizes must be at least 1 per class"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods requested"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        let mut names: Vec<String> = self.methods.iter().map(MethodSpec::name).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("method list contains duplicates"));
        }
        Ok(())
    }
}

/// Per-method outcome over all replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    /// Mean test error over successful replicates (`None` if all failed).
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1 denominator; 0 for one replicate).
    pub std: Option<f64>,
    /// Test error per replicate; `None` marks a failure.
    pub errors: Vec<Option<f64>>,
    pub failures: usize,
    /// ρ used per replicate by rotate-and-solve methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    /// Bayes error of the model when it is fixed across replicates.
    pub bayes_error: Option<f64>,
    pub methods: Vec<MethodResult>,
}

impl ExperimentResult {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// `(mean, sample std)` of the present values.
pub fn summarize(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    if ok.is_empty() {
        return (None, None);
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let std = if ok.len() > 1 {
        (ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

/// Trains `method` on `train` and returns the test error and the ρ used.
pub fn evaluate_method(
    method: &MethodSpec,
    model: &PopulationModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
    folds: usize,
    seed: u64,
) -> Result<(f64, Option<f64>)> {
    let cfg = |m: Method| {
        let mut c = SolverConfig::new(m).with_seed(seed);
        c.folds = folds;
        c
    };
    match method {
        MethodSpec::Oracle => Ok((fisher_oracle(model)?.error_rate(test)?, None)),
        MethodSpec::Base { method } => Ok((train_linear(train, &cfg(*method))?.rule.error_rate(test)?, None)),
        MethodSpec::Rs { base, economy, rho } => {
            let base_cfg = cfg(*base);
            let rho = match rho {
                RhoPolicy::Fixed { rho } => *rho,
                RhoPolicy::Cv { grid, folds } => select_rho(train, grid, &base_cfg, *folds, seed)?.rho_star,
            };
            let fit = rotate_and_solve(train, rho, &base_cfg, *economy)?;
            Ok((fit.rule.error_rate(test)?, Some(rho)))
        }
        MethodSpec::OracleRs { base, rho } => {
            let rho = match rho {
                RhoPolicy::Fixed { rho } => *rho,
                RhoPolicy::Cv { .. } => DEFAULT_RHO,
            };
            let basis = oracle_rotation(model, rho)?;
            let fit = rotate_and_solve_with_basis(train, basis, &cfg(*base))?;
            Ok((fit.rule.error_rate(test)?, Some(rho)))
        }
    }
}

type ReplicateOutcome = Vec<(Option<f64>, Option<f64>)>;

fn run_replicate(spec: &ExperimentSpec, fixed: Option<&PopulationModel>, i: usize) -> Result<ReplicateOutcome> {
    let rep = i as u64;
    let built;
    let model = match fixed {
        Some(m) => m,
        None => {
            built = spec.model.build(mix_seed(spec.master_seed, rep, TAG_MODEL))?;
            &built
        }
    };
    let sampler = GaussianSampler::new(model)?;
    let train = sampler.sample(spec.n1, spec.n2, mix_seed(spec.master_seed, rep, TAG_TRAIN))?;
    let test = sampler.sample(spec.n_test, spec.n_test, mix_seed(spec.master_seed, rep, TAG_TEST))?;
    let seed = mix_seed(spec.master_seed, rep, TAG_METHOD);
    Ok(spec
        .methods
        .iter()
        .map(|m| match evaluate_method(m, model, &train, &test, spec.folds, seed) {
            Ok((e, rho)) => (Some(e), rho),
            Err(_) => (None, None),
        })
        .collect())
}

#[cfg(feature = "parallel")]
fn map_replicates<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_replicates<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Runs every method on the same train/test draws for each replicate.
/// Method failures are recorded as missing values, not propagated.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let fixed = if spec.redraw_model {
        None
    } else {
        Some(spec.model.build(mix_seed(spec.master_seed, 0, TAG_MODEL))?)
    };
    let bayes_error = match &fixed {
        Some(m) => Some(oracle_quantities(m)?.bayes_error),
        None => None,
    };
    let outcomes: Vec<Result<ReplicateOutcome>> =
        map_replicates(spec.replicates, |i| run_replicate(spec, fixed.as_ref(), i));
    let outcomes: Vec<ReplicateOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let methods = spec
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let errors: Vec<Option<f64>> = outcomes.iter().map(|o| o[k].0).collect();
            let (mean, std) = summarize(&errors);
            MethodResult {
                method: m.name(),
                mean,
                std,
                failures: errors.iter().filter(|e| e.is_none()).count(),
                rho: m.uses_rho().then(|| outcomes.iter().map(|o| o[k].1).collect()),
                errors,
            }
        })
        .collect();
    Ok(ExperimentResult {
        spec: spec.clone(),
        bayes_error,
        methods,
    })
}

/// Cumulative-energy curves of `β`, `Uᵀβ` (population rotation) and the
/// replicate average of `Û_jᵀβ` (rotation estimated from replicate j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityCurves {
    pub raw: Vec<f64>,
    pub oracle: Vec<f64>,
    pub empirical: Vec<f64>,
}

pub fn sparsity_diagnostic(
    model: &PopulationModel,
    rho: f64,
    n1: usize,
    n2: usize,
    replicates: usize,
    seed: u64,
) -> Result<SparsityCurves> {
    if replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    let q = oracle_quantities(model)?;
    let raw = profile_vector(q.beta.clone()).cumulative_energy;
    let u = oracle_rotation(model, rho)?;
    let oracle = profile_vector(u.rotate_vector(q.beta.view())?).cumulative_energy;
    let sampler = GaussianSampler::new(model)?;
    let per_rep: Vec<Result<Vec<f64>>> = map_replicates(replicates, |i| {
        let train = sampler.sample(n1, n2, mix_seed(seed, i as u64, TAG_TRAIN))?;
        let basis = rotation_full(&estimate_moments(&train)?, rho)?;
        Ok(profile_vector(basis.rotate_vector(q.beta.view())?).cumulative_energy)
    });
    let p = model.dim();
    let mut empirical = vec![0.0; p];
    for curve in per_rep {
        for (acc, v) in empirical.iter_mut().zip(curve?) {
            *acc += v;
        }
    }
    for v in &mut empirical {
        *v = (*v / replicates as f64).min(1.0);
    }
    if let Some(last) = empirical.last_mut() {
        *last = 1.0;
    }
    Ok(SparsityCurves { raw, oracle, empirical })
}

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid: f64,
    pub method: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub failures: usize,
}

fn rows_from(result: &ExperimentResult, grid: f64) -> Vec<SweepRow> {
    result
        .methods
        .iter()
        .map(|m| SweepRow {
            grid,
            method: m.method.clone(),
            mean: m.mean,
            std: m.std,
            failures: m.failures,
        })
        .collect()
}

/// Mean errors per ρ. Rotate-and-solve methods are re-run at each fixed ρ
/// with identical seeds; the others run once and are repeated per row.
pub fn rho_sweep(spec: &ExperimentSpec, rho_grid: &[f64]) -> Result<Vec<SweepRow>> {
    if rho_grid.is_empty() {
        return Err(Error::invalid("rho grid is empty"));
    }
    spec.validate()?;
    let plain: Vec<MethodSpec> = spec.methods.iter().filter(|m| !m.uses_rho()).cloned().collect();
    let rotating: Vec<&MethodSpec> = spec.methods.iter().filter(|m| m.uses_rho()).collect();
    let plain_result = if plain.is_empty() {
        None
    } else {
        Some(run_experiment(&ExperimentSpec {
            methods: plain,
            ..spec.clone()
        })?)
    };
    let mut rows = Vec::new();
    for &rho in rho_grid {
        let mut at_rho = Vec::new();
        if !rotating.is_empty() {
            let sub = ExperimentSpec {
                methods: rotating.iter().map(|m| m.with_rho(RhoPolicy::Fixed { rho })).collect(),
                ..spec.clone()
            };
            at_rho = rows_from(&run_experiment(&sub)?, rho);
        }
        let mut plain_rows = plain_result.as_ref().map(|r| rows_from(r, rho)).unwrap_or_default();
        for m in &spec.methods {
            let name = m.name();
            let pos = |v: &Vec<SweepRow>| v.iter().position(|r| r.method == name);
            if let Some(i) = pos(&at_rho) {
                rows.push(at_rho[i].clone());
            } else if let Some(i) = pos(&plain_rows) {
                rows.push(plain_rows.swap_remove(i));
            }
        }
    }
    Ok(rows)
}

/// Mean errors per sparsity level of a random-covariance model, with Σ and
/// β redrawn for every replicate.
pub fn sparsity_sweep(spec: &ExperimentSpec, levels: &[f64]) -> Result<Vec<SweepRow>> {
    if !matches!(spec.model, ModelRecipe::Random { .. }) {
        return Err(Error::invalid("sparsity sweeps need a random-covariance model"));
    }
    if levels.is_empty() {
        return Err(Error::invalid("sparsity level list is empty"));
    }
    if let Some(&bad) = levels.iter().find(|l| !(**l > 0.0 && **l <= 1.0)) {
        return Err(Error::Domain {
            what: "sparsity level (must lie in (0, 1])",
            value: bad,
        });
    }
    let mut rows = Vec::new();
    for &level in levels {
        let sub = ExperimentSpec {
            model: spec.model.with_level(level),
            redraw_model: true,
            ..spec.clone()
        };
        rows.extend(rows_from(&run_experiment(&sub)?, level));
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("CSV write failed: {e}"))
}

/// Long format: `method,replicate,error` (empty error = failure).
pub fn write_long_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "replicate", "error"]).map_err(csv_err)?;
    for m in &result.methods {
        for (i, e) in m.errors.iter().enumerate() {
            w.write_record([m.method.clone(), i.to_string(), opt(*e)]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::invalid(format!("CSV write failed: {e}")))
}

/// `grid,method,mean,std`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["grid", "method", "mean", "std"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.grid.to_string(), r.method.clone(), opt(r.mean), opt(r.std)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("CSV write failed: {e}")))
}

/// `index,raw,oracle_rotated,empirical_rotated_avg` with 1-based index.
pub fn write_curves_csv<W: Write>(curves: &SparsityCurves, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "raw", "oracle_rotated", "empirical_rotated_avg"])
        .map_err(csv_err)?;
    for i in 0..curves.raw.len() {
        w.write_record([
            (i + 1).to_string(),
            curves.raw[i].to_string(),
            curves.oracle[i].to_string(),
            curves.empirical[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("CSV write failed: {e}")))
}

/// `Σ` reconstructed from the sampler's square root.
pub fn sampler_covariance(sampler: &GaussianSampler) -> Result<SymMatrix> {
    SymMatrix::from_symmetrized(sampler.root.dot(&sampler.root))
}
