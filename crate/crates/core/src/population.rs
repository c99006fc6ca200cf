//! Exact two-class Gaussian models and the population-level quantities
//! attached to them: the Fisher direction, oracle rotations, the quasi-spike
//! bound `C_k`, and the energy bounds for the leading rotated block.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{check_rho, BasisKind, RotationBasis};
use crate::linalg::{
    cholesky_solve, normal_cdf, normal_quantile, operator_norm, pseudo_inverse, sym_eig_desc, EigenSystem, SymMatrix,
    PINV_REL_TOL,
};

/// Default ρ for rotations.
pub const DEFAULT_RHO: f64 = 0.5;

/// `βᵀΣβ` for the random-covariance models.
pub const RANDOM_MODEL_GAMMA: f64 = 12.0;

/// Relative threshold under which a rotated coefficient counts as zero.
pub const L0_REL_TOL: f64 = 1e-8;

/// Relative norm under which a component of δ counts as absent.
pub const SPAN_REL_TOL: f64 = 1e-10;

/// `N(μ₁, Σ)` versus `N(μ₂, Σ)` with equal priors.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    pub mu1: Array1<f64>,
    pub mu2: Array1<f64>,
    pub sigma: SymMatrix,
}

impl PopulationModel {
    pub fn new(mu1: Array1<f64>, mu2: Array1<f64>, sigma: SymMatrix) -> Result<Self> {
        let p = sigma.dim();
        for v in [&mu1, &mu2] {
            if v.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: v.len(),
                });
            }
        }
        let eig = sym_eig_desc(&sigma)?;
        if p > 0 {
            let top = eig.values[0].abs().max(1.0);
            let min = eig.values[p - 1];
            if min < -1e-10 * top {
                return Err(Error::invalid(format!(
                    "covariance is not positive semi-definite (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(PopulationModel { mu1, mu2, sigma })
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// `δ = μ₁ − μ₂`.
    pub fn delta(&self) -> Array1<f64> {
        &self.mu1 - &self.mu2
    }

    /// `μ = (μ₁ + μ₂)/2`.
    pub fn midpoint(&self) -> Array1<f64> {
        (&self.mu1 + &self.mu2) * 0.5
    }

    /// `Σ + ρδδᵀ`.
    pub fn total_covariance(&self, rho: f64) -> Result<SymMatrix> {
        check_rho(rho)?;
        self.sigma.rank_one_update(rho, self.delta().view())
    }
}

#[derive(Debug, Clone)]
pub struct OracleQuantities {
    pub delta: Array1<f64>,
    /// `Σ⁻¹δ`.
    pub beta: Array1<f64>,
    /// `δᵀΣ⁻¹δ`.
    pub gamma: f64,
    /// `Φ(−√γ / 2)`.
    pub bayes_error: f64,
    /// Σ was numerically singular and `Σ⁺` was used.
    pub used_pseudo_inverse: bool,
}

fn is_invertible(eig: &EigenSystem) -> bool {
    let p = eig.dim();
    p == 0 || eig.values[p - 1] > 1e-12 * eig.values[0].abs()
}

/// Fisher direction, separation and Bayes error.
pub fn oracle_quantities(model: &PopulationModel) -> Result<OracleQuantities> {
    let delta = model.delta();
    let eig = sym_eig_desc(&model.sigma)?;
    let invertible = is_invertible(&eig);
    let beta = if invertible {
        cholesky_solve(model.sigma.view(), delta.view())
            .unwrap_or_else(|| eig.spectral_map(|l| 1.0 / l).dot(&delta))
    } else {
        pseudo_inverse(&model.sigma, PINV_REL_TOL)?.view().dot(&delta)
    };
    let gamma = delta.dot(&beta).max(0.0);
    Ok(OracleQuantities {
        delta,
        beta,
        gamma,
        bayes_error: normal_cdf(-gamma.sqrt() / 2.0),
        used_pseudo_inverse: !invertible,
    })
}

/// Eigenvectors of `Σ + ρδδᵀ`.
pub fn oracle_rotation(model: &PopulationModel, rho: f64) -> Result<RotationBasis> {
    let tot = model.total_covariance(rho)?;
    let eig = sym_eig_desc(&tot)?;
    Ok(RotationBasis {
        columns: eig.vectors,
        eigenvalues: eig.values,
        rho,
        kind: BasisKind::Full,
    })
}

/// Quasi-spike diagnostics for a split after the `k`-th eigenvalue of Σ.
#[derive(Debug, Clone)]
pub struct SpikeStructureReport {
    pub k: usize,
    /// `λ_k − λ_{k+1}`.
    pub d: f64,
    /// `λ_{k+1} − λ_p`.
    pub epsilon: f64,
    /// `d ρ‖δ₂‖² / (d + ρ‖δ‖²)`.
    pub d_tilde: f64,
    /// ℓ1/ℓ2 bound; `+∞` when `d̃ − 2ε ≤ 0`.
    pub c_k: f64,
    /// Least K with δ inside the span of the top-K eigenvectors; `None` for δ = 0.
    pub big_k: Option<usize>,
    /// `min_{1≤j<K} C_j`, `+∞` when the range is empty.
    pub c_min: f64,
    /// Component of δ in the top-k eigenspace of Σ.
    pub delta1: Array1<f64>,
    /// Component of δ in the complement.
    pub delta2: Array1<f64>,
    /// Eigenvalues of Σ, descending.
    pub lambdas: Array1<f64>,
}

struct SplitTerms {
    d: f64,
    epsilon: f64,
    d_tilde: f64,
    c_k: f64,
    delta1: Array1<f64>,
    delta2: Array1<f64>,
}

fn split_terms(eig: &EigenSystem, delta: ArrayView1<f64>, rho: f64, k: usize) -> SplitTerms {
    let p = eig.dim();
    let lam = &eig.values;
    let top = eig.vectors.slice(s![.., ..k]);
    let delta1 = top.dot(&top.t().dot(&delta));
    let delta2 = &delta - &delta1;
    let d = (lam[k - 1] - lam[k]).max(0.0);
    let epsilon = (lam[k] - lam[p - 1]).max(0.0);
    let nd = delta.dot(&delta);
    let mut n2 = delta2.dot(&delta2);
    if n2 <= SPAN_REL_TOL * SPAN_REL_TOL * nd {
        n2 = 0.0;
    }
    let d_tilde = if d > 0.0 { d * rho * n2 / (d + rho * nd) } else { 0.0 };
    let lp = lam[p - 1];
    let c_k = if d_tilde - 2.0 * epsilon > 0.0 {
        ((k + 1) as f64).sqrt()
            + ((p - k - 1) as f64).sqrt() * ((lp + epsilon) / lp) * (epsilon / lp + (epsilon / (d_tilde - 2.0 * epsilon)).sqrt())
    } else {
        f64::INFINITY
    };
    SplitTerms {
        d,
        epsilon,
        d_tilde,
        c_k,
        delta1,
        delta2,
    }
}

pub fn spike_report(model: &PopulationModel, rho: f64, k: usize) -> Result<SpikeStructureReport> {
    check_rho(rho)?;
    let p = model.dim();
    if k == 0 || k >= p {
        return Err(Error::invalid(format!("split index k must satisfy 1 <= k < p, got k={k}, p={p}")));
    }
    let eig = sym_eig_desc(&model.sigma)?;
    if !(eig.values[p - 1] > 0.0) {
        return Err(Error::invalid(format!(
            "the C_k bound needs a positive smallest eigenvalue, got {:e}",
            eig.values[p - 1]
        )));
    }
    let delta = model.delta();
    let terms = split_terms(&eig, delta.view(), rho, k);

    let nd = delta.dot(&delta).sqrt();
    let big_k = if nd == 0.0 {
        None
    } else {
        (1..=p).find(|&kk| {
            let top = eig.vectors.slice(s![.., ..kk]);
            let rest = &delta - &top.dot(&top.t().dot(&delta));
            rest.dot(&rest).sqrt() <= SPAN_REL_TOL * nd
        })
    };
    let c_min = match big_k {
        Some(kk) if kk > 1 => (1..kk)
            .filter(|&j| j < p)
            .map(|j| split_terms(&eig, delta.view(), rho, j).c_k)
            .fold(f64::INFINITY, f64::min),
        _ => f64::INFINITY,
    };
    Ok(SpikeStructureReport {
        k,
        d: terms.d,
        epsilon: terms.epsilon,
        d_tilde: terms.d_tilde,
        c_k: terms.c_k,
        big_k,
        c_min,
        delta1: terms.delta1,
        delta2: terms.delta2,
        lambdas: eig.values,
    })
}

/// Sparsity summary of a (rotated) discriminant direction.
#[derive(Debug, Clone)]
pub struct BetaProfile {
    /// The vector that was profiled.
    pub coefficients: Array1<f64>,
    /// Entries above `L0_REL_TOL · ‖v‖₂` in magnitude.
    pub l0: usize,
    /// `‖v‖₁ / ‖v‖₂` (0 for the zero vector).
    pub l1_l2_ratio: f64,
    /// Share of `‖v‖₂²` captured by the j largest entries, j = 1..len.
    pub cumulative_energy: Vec<f64>,
}

/// Profile of an arbitrary vector.
pub fn profile_vector(v: Array1<f64>) -> BetaProfile {
    let norm2 = v.dot(&v);
    let norm = norm2.sqrt();
    let l0 = v.iter().filter(|x| x.abs() > L0_REL_TOL * norm).count();
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    let mut sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    let cumulative_energy = if norm2 > 0.0 {
        let mut acc = 0.0;
        let mut out: Vec<f64> = sq
            .iter()
            .map(|x| {
                acc += x;
                (acc / norm2).min(1.0)
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    } else {
        vec![1.0; sq.len()]
    };
    BetaProfile {
        coefficients: v,
        l0,
        l1_l2_ratio: if norm > 0.0 { l1 / norm } else { 0.0 },
        cumulative_energy,
    }
}

/// Profile of `Uᵀβ` for the model's Fisher direction β.
pub fn rotated_beta_profile(model: &PopulationModel, basis: &RotationBasis) -> Result<BetaProfile> {
    let q = oracle_quantities(model)?;
    let rotated = basis.rotate_vector(q.beta.view())?;
    Ok(profile_vector(rotated))
}

/// Energy retained by the leading `k+1` oracle-rotated coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Theorem3Check {
    Applicable {
        /// `λ_{k+1}(Σ_{i≤k} λᵢξᵢξᵢᵀ + ρδδᵀ) / λ_{k+1}(Σ)`.
        a_value: f64,
        /// `‖U₁ᵀδ‖₂ / ‖δ‖₂`.
        energy_ratio: f64,
        /// `(U₁ᵀδ)ᵀ (U₁ᵀΣU₁)⁻¹ (U₁ᵀδ)`.
        gamma1: f64,
        /// `δᵀΣ⁻¹δ`.
        gamma: f64,
        /// Both lower bounds hold whenever `a_value > 2` (vacuously true otherwise).
        bounds_ok: bool,
        /// `γ₁ ≤ γ` within relative 1e-8.
        gamma1_le_gamma: bool,
    },
    /// `λ_{k+1}(Σ) = 0`.
    NotApplicable,
}

pub fn theorem3_check(model: &PopulationModel, rho: f64, k: usize) -> Result<Theorem3Check> {
    check_rho(rho)?;
    let p = model.dim();
    if k + 1 > p {
        return Err(Error::invalid(format!("k+1 must not exceed p, got k={k}, p={p}")));
    }
    let eig = sym_eig_desc(&model.sigma)?;
    let lam_k1 = eig.values[k];
    if !(lam_k1 > 1e-14 * eig.values[0].abs().max(1e-300)) {
        return Ok(Theorem3Check::NotApplicable);
    }
    let delta = model.delta();
    let mut a_mat = Array2::<f64>::zeros((p, p));
    for i in 0..k {
        crate::linalg::add_outer(&mut a_mat, eig.values[i], eig.vectors.column(i));
    }
    crate::linalg::add_outer(&mut a_mat, rho, delta.view());
    let a_eig = sym_eig_desc(&SymMatrix::from_symmetrized(a_mat)?)?;
    let a_value = a_eig.values[k] / lam_k1;

    let rot = oracle_rotation(model, rho)?;
    let u1 = rot.columns.slice(s![.., ..k + 1]);
    let proj = u1.t().dot(&delta);
    let nd = delta.dot(&delta).sqrt();
    let energy_ratio = if nd > 0.0 { proj.dot(&proj).sqrt() / nd } else { 1.0 };
    let inner = model.sigma.congruence(u1)?;
    let gamma1 = proj.dot(&pseudo_inverse(&inner, PINV_REL_TOL)?.view().dot(&proj)).max(0.0);
    let gamma = oracle_quantities(model)?.gamma;

    let bounds_ok = if a_value > 2.0 {
        let e_bound = (a_value - 2.0) / (a_value - 1.0);
        let g_bound = e_bound * e_bound / eig.values[0] * nd * nd;
        energy_ratio >= e_bound - 1e-8 && gamma1 >= g_bound - 1e-8 * g_bound.max(1.0)
    } else {
        true
    };
    Ok(Theorem3Check::Applicable {
        a_value,
        energy_ratio,
        gamma1,
        gamma,
        bounds_ok,
        gamma1_le_gamma: gamma1 <= gamma + 1e-8 * gamma.max(1.0),
    })
}

fn check_target(target_error: f64) -> Result<()> {
    if target_error > 0.0 && target_error < 0.5 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "target oracle error (must lie in (0, 0.5))",
            value: target_error,
        })
    }
}

fn compound_symmetry(p: usize, c: f64) -> SymMatrix {
    SymMatrix::new(Array2::from_shape_fn((p, p), |(i, j)| if i == j { 1.0 } else { c })).expect("symmetric by construction")
}

fn leading_ones(p: usize, ell: usize) -> Array1<f64> {
    Array1::from_shape_fn(p, |i| if i < ell { 1.0 } else { 0.0 })
}

/// `μ₁ = 0`, `μ₂ = a·u` with `a` chosen so the Bayes error equals `target`.
fn calibrated(sigma: SymMatrix, pattern: Array1<f64>, target: f64) -> Result<PopulationModel> {
    check_target(target)?;
    let solve = cholesky_solve(sigma.view(), pattern.view())
        .ok_or(Error::Singular { min_eigenvalue: 0.0 })?;
    let quad = pattern.dot(&solve);
    let a = 2.0 * normal_quantile(1.0 - target)? / quad.sqrt();
    let p = sigma.dim();
    PopulationModel::new(Array1::zeros(p), pattern * a, sigma)
}

/// Toy models: 1 = identity covariance with a dense mean shift; 2 = compound
/// symmetry 0.5 with a 5-coordinate shift; 3 = compound symmetry with a
/// shift on the first p/2 coordinates.
pub fn build_toy_model(id: u8, p: usize, target_error: f64) -> Result<PopulationModel> {
    match id {
        1 => calibrated(SymMatrix::identity(p), Array1::ones(p), target_error),
        2 => {
            if p < 5 {
                return Err(Error::invalid(format!("toy model 2 needs p >= 5, got {p}")));
            }
            calibrated(compound_symmetry(p, 0.5), leading_ones(p, 5), target_error)
        }
        3 => {
            if !p.is_multiple_of(2) || p == 0 {
                return Err(Error::invalid(format!("toy model 3 needs an even p, got {p}")));
            }
            calibrated(compound_symmetry(p, 0.5), leading_ones(p, p / 2), target_error)
        }
        other => Err(Error::invalid(format!("unknown toy model {other}"))),
    }
}

/// Model 1 = compound symmetry 0.5, Model 2 = AR(1) with 0.7, Model 3 =
/// `I + AAᵀ` with `A` a seeded p×5 Gaussian. Mean shift on the first p/2
/// coordinates in all three.
pub fn build_structured_model(id: u8, p: usize, target_error: f64, seed: u64) -> Result<PopulationModel> {
    if !p.is_multiple_of(2) || p == 0 {
        return Err(Error::invalid(format!("structured models need an even p, got {p}")));
    }
    let sigma = match id {
        1 => compound_symmetry(p, 0.5),
        2 => SymMatrix::new(Array2::from_shape_fn((p, p), |(i, j)| 0.7f64.powi((i as i32 - j as i32).abs())))?,
        3 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Array2<f64> = Array2::from_shape_fn((p, 5), |_| StandardNormal.sample(&mut rng));
            SymMatrix::from_symmetrized(Array2::eye(p) + a.dot(&a.t()))?
        }
        other => return Err(Error::invalid(format!("unknown structured model {other}"))),
    };
    calibrated(sigma, leading_ones(p, p / 2), target_error)
}

/// Number of non-zeros in β for a sparsity level.
pub fn sparsity_count(p: usize, sparsity: f64) -> usize {
    ((sparsity * p as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Random Model 1: `(M/‖M‖)ᵀ(M/‖M‖) + diag(v)`, `v ~ U(0,1)`.
/// Random Model 2: `4 (M/‖M‖)ᵀ(M/‖M‖)`. In both β has `⌈sparsity·p⌉`
/// Gaussian non-zeros, rescaled so `βᵀΣβ = 12`, and `μ₁ = 0`, `μ₂ = −Σβ`.
pub fn build_random_model(id: u8, p: usize, sparsity: f64, seed: u64) -> Result<PopulationModel> {
    if id != 1 && id != 2 {
        return Err(Error::invalid(format!("unknown random model {id}")));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::Domain {
            what: "sparsity level (must lie in (0, 1])",
            value: sparsity,
        });
    }
    let nnz = sparsity_count(p, sparsity);
    if nnz == 0 {
        return Err(Error::invalid("sparsity level yields no non-zero coefficients"));
    }
    for attempt in 0..=10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let m = Array2::from_shape_fn((p, p), |_| StandardNormal.sample(&mut rng));
        let norm = operator_norm(m.view())?;
        let mn = m / norm;
        let mut sigma = mn.t().dot(&mn);
        if id == 1 {
            for i in 0..p {
                sigma[[i, i]] += rng.random::<f64>();
            }
        } else {
            sigma *= 4.0;
        }
        let sigma = SymMatrix::from_symmetrized(sigma)?;
        let mut beta = Array1::<f64>::zeros(p);
        for j in index::sample(&mut rng, p, nnz) {
            beta[j] = StandardNormal.sample(&mut rng);
        }
        let sb = sigma.view().dot(&beta);
        let quad = beta.dot(&sb);
        if !(quad > 1e-300) {
            continue;
        }
        let scale = (RANDOM_MODEL_GAMMA / quad).sqrt();
        let mu2 = sb * (-scale);
        return PopulationModel::new(Array1::zeros(p), mu2, sigma);
    }
    Err(Error::invalid("could not draw a random model with non-zero βᵀΣβ after 10 retries"))
}

/// Serializable description of a simulated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelRecipe {
    Toy { id: u8, p: usize, target_error: f64 },
    Structured { id: u8, p: usize, target_error: f64 },
    Random { id: u8, p: usize, sparsity: f64 },
}

impl ModelRecipe {
    pub fn build(&self, seed: u64) -> Result<PopulationModel> {
        match *self {
            ModelRecipe::Toy { id, p, target_error } => build_toy_model(id, p, target_error),
            ModelRecipe::Structured { id, p, target_error } => build_structured_model(id, p, target_error, seed),
            ModelRecipe::Random { id, p, sparsity } => build_random_model(id, p, sparsity, seed),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ModelRecipe::Toy { p, .. } | ModelRecipe::Structured { p, .. } | ModelRecipe::Random { p, .. } => p,
        }
    }

    /// Whether the built model depends on the seed.
    pub fn is_seeded(&self) -> bool {
        matches!(
            self,
            ModelRecipe::Structured { id: 3, .. } | ModelRecipe::Random { .. }
        )
    }

    /// Short name used on the command line (`toy1`, `m2`, `rand1`, ...).
    pub fn short_name(&self) -> String {
        match self {
            ModelRecipe::Toy { id, .. } => format!("toy{id}"),
            ModelRecipe::Structured { id, .. } => format!("m{id}"),
            ModelRecipe::Random { id, .. } => format!("rand{id}"),
        }
    }

    /// Parses a short name; `level` is the target error for toy and
    /// structured models and the sparsity for random ones.
    pub fn parse(name: &str, p: usize, level: f64) -> Result<Self> {
        let (family, id) = name.split_at(name.find(|c: char| c.is_ascii_digit()).unwrap_or(name.len()));
        let id: u8 = id
            .parse()
            .map_err(|_| Error::invalid(format!("unknown model '{name}'")))?;
        let recipe = match family {
            "toy" if (1..=3).contains(&id) => ModelRecipe::Toy { id, p, target_error: level },
            "m" if (1..=3).contains(&id) => ModelRecipe::Structured { id, p, target_error: level },
            "rand" if (1..=2).contains(&id) => ModelRecipe::Random { id, p, sparsity: level },
            _ => return Err(Error::invalid(format!("unknown model '{name}'"))),
        };
        Ok(recipe)
    }

    /// Same recipe with its level (target error or sparsity) replaced.
    pub fn with_level(&self, level: f64) -> Self {
        match *self {
            ModelRecipe::Toy { id, p, .. } => ModelRecipe::Toy { id, p, target_error: level },
            ModelRecipe::Structured { id, p, .. } => ModelRecipe::Structured { id, p, target_error: level },
            ModelRecipe::Random { id, p, .. } => ModelRecipe::Random { id, p, sparsity: level },
        }
    }
}
