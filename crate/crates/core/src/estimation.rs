//! Sample moments and the empirical rotations.
//!
//! The pooled covariance uses MLE scaling (divisor `n_m` per class), so the
//! sample total covariance obeys
//! `Σ̂_tot,sample = Σ̂ + n₁n₂/(n₁+n₂)² · δ̂δ̂ᵀ` exactly.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fix_signs, orthonormalize_columns, sym_eig_desc, SymMatrix};

/// Relative cutoff for "non-vanishing" eigenvalues of `Σ̂_tot`.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Class label. Class 1 is the positive side of a linear rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub fn as_u8(self) -> u8 {
        match self {
            Class::One => 1,
            Class::Two => 2,
        }
    }
}

impl TryFrom<u8> for Class {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Class::One),
            2 => Ok(Class::Two),
            other => Err(Error::invalid(format!("labels must be 1 or 2, got {other}"))),
        }
    }
}

impl From<Class> for u8 {
    fn from(c: Class) -> u8 {
        c.as_u8()
    }
}

/// Rows of `x` are observations; `y[i]` labels row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Array2<f64>,
    y: Vec<Class>,
}

impl LabeledDataset {
    pub fn new(x: Array2<f64>, y: Vec<Class>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(LabeledDataset { x, y })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn labels(&self) -> &[Class] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn count(&self, class: Class) -> usize {
        self.y.iter().filter(|&&c| c == class).count()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let x = self.x.select(Axis(0), idx);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        LabeledDataset { x, y }
    }

    /// Same labels, features replaced (row count must match).
    pub fn with_features(&self, x: Array2<f64>) -> Result<LabeledDataset> {
        LabeledDataset::new(x, self.y.clone())
    }
}

#[derive(Debug, Clone)]
pub struct EstimatedMoments {
    pub mu1_hat: Array1<f64>,
    pub mu2_hat: Array1<f64>,
    pub mu_hat: Array1<f64>,
    pub delta_hat: Array1<f64>,
    pub sigma_hat: SymMatrix,
    pub n1: usize,
    pub n2: usize,
}

fn class_mean(data: &LabeledDataset, class: Class) -> Array1<f64> {
    let mut sum = Array1::zeros(data.dim());
    let mut n = 0usize;
    for (row, &c) in data.x.rows().into_iter().zip(&data.y) {
        if c == class {
            sum += &row;
            n += 1;
        }
    }
    sum / n as f64
}

// Rows centred at their own class mean.
fn within_class_residuals(data: &LabeledDataset, mu1: &Array1<f64>, mu2: &Array1<f64>) -> Array2<f64> {
    let mut z = data.x.clone();
    for (mut row, &c) in z.rows_mut().into_iter().zip(&data.y) {
        match c {
            Class::One => row -= mu1,
            Class::Two => row -= mu2,
        }
    }
    z
}

/// Class means, their midpoint and difference, and the MLE pooled covariance.
pub fn estimate_moments(data: &LabeledDataset) -> Result<EstimatedMoments> {
    let n1 = data.count(Class::One);
    let n2 = data.count(Class::Two);
    if n1 == 0 {
        return Err(Error::EmptyClass { class: 1 });
    }
    if n2 == 0 {
        return Err(Error::EmptyClass { class: 2 });
    }
    let mu1_hat = class_mean(data, Class::One);
    let mu2_hat = class_mean(data, Class::Two);
    let z = within_class_residuals(data, &mu1_hat, &mu2_hat);
    let sigma = z.t().dot(&z) / (n1 + n2) as f64;
    let sigma_hat = SymMatrix::from_symmetrized(sigma)?;
    let mu_hat = (&mu1_hat + &mu2_hat) * 0.5;
    let delta_hat = &mu1_hat - &mu2_hat;
    Ok(EstimatedMoments {
        mu1_hat,
        mu2_hat,
        mu_hat,
        delta_hat,
        sigma_hat,
        n1,
        n2,
    })
}

/// `Σ̂ + ρ δ̂ δ̂ᵀ`.
pub fn total_covariance(m: &EstimatedMoments, rho: f64) -> Result<SymMatrix> {
    check_rho(rho)?;
    m.sigma_hat.rank_one_update(rho, m.delta_hat.view())
}

/// Covariance of all rows around the grand mean, ignoring labels.
pub fn sample_total_covariance(data: &LabeledDataset) -> Result<SymMatrix> {
    if data.len() < 2 {
        return Err(Error::invalid("sample total covariance needs at least two rows"));
    }
    let n = data.len() as f64;
    let grand = data.x.sum_axis(Axis(0)) / n;
    let centred = &data.x - &grand.view().insert_axis(Axis(0));
    SymMatrix::from_symmetrized(centred.t().dot(&centred) / n)
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what: "rho", value: rho })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// All p eigenvectors of `Σ̂_tot`.
    Full,
    /// Leading eigenvectors with non-vanishing eigenvalues.
    Economy,
    /// Supplied directly (identity, oracle-informed, or loaded from disk).
    Custom,
}

/// Orthonormal columns used to rotate observations: `x ↦ Uᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationBasis {
    pub columns: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub rho: f64,
    pub kind: BasisKind,
}

impl RotationBasis {
    pub fn identity(p: usize) -> Self {
        RotationBasis {
            columns: Array2::eye(p),
            eigenvalues: Array1::ones(p),
            rho: 0.0,
            kind: BasisKind::Custom,
        }
    }

    /// Wraps caller-supplied columns after checking orthonormality.
    pub fn custom(columns: Array2<f64>, rho: f64) -> Result<Self> {
        let r = columns.ncols();
        let gram = columns.t().dot(&columns);
        let dev = crate::linalg::max_abs_diff(gram.view(), Array2::<f64>::eye(r).view());
        if dev > 1e-8 {
            return Err(Error::invalid(format!(
                "basis columns are not orthonormal (deviation {dev:e})"
            )));
        }
        Ok(RotationBasis {
            columns,
            eigenvalues: Array1::from_elem(r, f64::NAN),
            rho,
            kind: BasisKind::Custom,
        })
    }

    /// Ambient dimension p.
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of rotated coordinates r.
    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn rotate_vector(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.columns.t().dot(&x))
    }

    /// First `r` columns.
    pub fn truncated(&self, r: usize) -> RotationBasis {
        let r = r.min(self.rank());
        RotationBasis {
            columns: self.columns.slice(s![.., ..r]).to_owned(),
            eigenvalues: self.eigenvalues.slice(s![..r]).to_owned(),
            rho: self.rho,
            kind: self.kind,
        }
    }
}

/// Eigenvectors of `Σ̂ + ρδ̂δ̂ᵀ`, eigenvalues descending.
pub fn rotation_full(m: &EstimatedMoments, rho: f64) -> Result<RotationBasis> {
    let tot = total_covariance(m, rho)?;
    let eig = sym_eig_desc(&tot)?;
    Ok(RotationBasis {
        columns: eig.vectors,
        eigenvalues: eig.values,
        rho,
        kind: BasisKind::Full,
    })
}

/// Result of [`rotation_economy`].
#[derive(Debug, Clone)]
pub struct EconomyRotation {
    pub basis: RotationBasis,
    /// Count of eigenvalues above `RANK_REL_TOL · max`.
    pub numerical_rank: usize,
    /// Set when a requested `r` exceeded the numerical rank and was clipped.
    pub clipped: bool,
}

/// The (n+1)×p factor `Y` with `YᵀY = Σ̂ + ρδ̂δ̂ᵀ`: the first n rows are
/// class-centred observations over `√n`, the last row is `√ρ δ̂ᵀ`.
pub fn gram_factor(data: &LabeledDataset, m: &EstimatedMoments, rho: f64) -> Result<Array2<f64>> {
    check_rho(rho)?;
    let n = data.len();
    let p = data.dim();
    let z = within_class_residuals(data, &m.mu1_hat, &m.mu2_hat) / (n as f64).sqrt();
    let mut y = Array2::zeros((n + 1, p));
    y.slice_mut(s![..n, ..]).assign(&z);
    y.row_mut(n).assign(&(&m.delta_hat * rho.sqrt()));
    Ok(y)
}

/// Leading eigenvectors of `Σ̂_tot` computed from the small Gram matrix
/// `YYᵀ`: `Ũ = Yᵀ V̂ diag(η̂^{-1/2})`.
///
/// `r = None` keeps `min(n, numerical rank)` columns.
pub fn rotation_economy(data: &LabeledDataset, rho: f64, r: Option<usize>) -> Result<EconomyRotation> {
    let m = estimate_moments(data)?;
    let y = gram_factor(data, &m, rho)?;
    let gram = SymMatrix::from_symmetrized(y.dot(&y.t()))?;
    let eig = sym_eig_desc(&gram)?;
    let top = eig.values[0].max(0.0);
    let numerical_rank = eig.values.iter().filter(|&&v| v > RANK_REL_TOL * top).count();
    let default_r = data.len().min(numerical_rank);
    let (keep, clipped) = match r {
        None => (default_r, false),
        Some(req) if req > numerical_rank => (numerical_rank, true),
        Some(req) => (req, false),
    };
    let p = data.dim();
    let mut cols = Array2::zeros((p, keep));
    for j in 0..keep {
        let v = eig.vectors.column(j);
        let u = y.t().dot(&v) / eig.values[j].sqrt();
        cols.column_mut(j).assign(&u);
    }
    let mut cols = orthonormalize_columns(cols);
    fix_signs(&mut cols);
    Ok(EconomyRotation {
        basis: RotationBasis {
            columns: cols,
            eigenvalues: eig.values.slice(s![..keep]).to_owned(),
            rho,
            kind: BasisKind::Economy,
        },
        numerical_rank,
        clipped,
    })
}

/// Rows mapped to `Uᵀx`; labels unchanged.
pub fn rotate_dataset(data: &LabeledDataset, basis: &RotationBasis) -> Result<LabeledDataset> {
    if data.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            actual: data.dim(),
        });
    }
    data.with_features(data.x.dot(&basis.columns))
}
