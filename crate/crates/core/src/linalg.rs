//! Dense symmetric linear algebra used throughout the crate.
//!
//! Everything here is a pure function of its inputs. The eigensolver is a
//! Householder tridiagonalisation followed by implicit QL iterations, with a
//! fixed sign convention on the eigenvectors so that downstream rotations are
//! reproducible.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute asymmetry tolerated by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default relative cutoff for [`pseudo_inverse`].
pub const PINV_REL_TOL: f64 = 1e-10;

const QL_MAX_ITER: usize = 100;

/// A real symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Array2<f64>", into = "Array2<f64>")]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    /// Validates symmetry (absolute tolerance [`SYMMETRY_TOL`]) and finiteness.
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::DimensionMismatch {
                expected: r,
                actual: c,
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let asym = max_abs_diff(a.view(), a.t());
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        Ok(SymMatrix(a))
    }

    /// Builds from the symmetric part `(A + Aᵀ)/2`. Used after arithmetic
    /// whose rounding may leave a tiny asymmetry.
    pub fn from_symmetrized(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::DimensionMismatch {
                expected: r,
                actual: c,
            });
        }
        let s = (&a + &a.t()) * 0.5;
        SymMatrix::new(s)
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(Array2::eye(p))
    }

    pub fn zeros(p: usize) -> Self {
        SymMatrix(Array2::zeros((p, p)))
    }

    pub fn from_diag(d: &[f64]) -> Result<Self> {
        SymMatrix::new(Array2::from_diag(&Array1::from(d.to_vec())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// `self + rho * v vᵀ`.
    pub fn rank_one_update(&self, rho: f64, v: ArrayView1<f64>) -> Result<Self> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        let mut out = self.0.clone();
        for i in 0..v.len() {
            for j in 0..v.len() {
                out[[i, j]] += rho * v[i] * v[j];
            }
        }
        SymMatrix::new(out)
    }

    /// `Bᵀ S B` for a p×r matrix `B`.
    pub fn congruence(&self, b: ArrayView2<f64>) -> Result<Self> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: b.nrows(),
            });
        }
        SymMatrix::from_symmetrized(b.t().dot(&self.0).dot(&b))
    }

    pub fn trace(&self) -> f64 {
        self.0.diag().sum()
    }
}

impl TryFrom<Array2<f64>> for SymMatrix {
    type Error = Error;
    fn try_from(a: Array2<f64>) -> Result<Self> {
        SymMatrix::new(a)
    }
}

impl From<SymMatrix> for Array2<f64> {
    fn from(s: SymMatrix) -> Self {
        s.0
    }
}

/// Eigenvalues in descending order and matching unit eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let mapped = self.values.mapv(f);
        let scaled = &self.vectors * &mapped.view().insert_axis(Axis(0));
        scaled.dot(&self.vectors.t())
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.spectral_map(|v| v)
    }

    /// Orthogonal projector onto the span of the first `k` eigenvectors.
    pub fn top_projector(&self, k: usize) -> Array2<f64> {
        projector(self.vectors.slice(ndarray::s![.., ..k]))
    }
}

/// Full symmetric eigendecomposition, eigenvalues in descending order.
///
/// Sign convention: the entry of largest magnitude in each eigenvector is
/// non-negative (first such index on exact ties).
pub fn sym_eig_desc(s: &SymMatrix) -> Result<EigenSystem> {
    let n = s.dim();
    if n == 0 {
        return Ok(EigenSystem {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    let mut v: Vec<f64> = s.view().iter().copied().collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = v[row * n + src];
        }
    }
    fix_signs(&mut vectors);
    Ok(EigenSystem { values, vectors })
}

/// Applies the sign convention of [`sym_eig_desc`] to each column in place.
pub fn fix_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.columns_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

// Householder reduction to tridiagonal form. `v` is row-major n×n and holds
// the accumulated orthogonal transform on exit.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e), accumulating rotations into `v`.
fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(Error::EigenNonConvergence { dim: n });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenNonConvergence { dim: n });
    }
    Ok(())
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix. Eigenvalues with
/// magnitude at most `rel_tol · max|λ|` are treated as zero.
pub fn pseudo_inverse(s: &SymMatrix, rel_tol: f64) -> Result<SymMatrix> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Domain {
            what: "pseudo_inverse rel_tol",
            value: rel_tol,
        });
    }
    let eig = sym_eig_desc(s)?;
    let top = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return Ok(SymMatrix::zeros(s.dim()));
    }
    let cut = rel_tol * top;
    let inv = eig.spectral_map(|l| if l.abs() <= cut { 0.0 } else { 1.0 / l });
    SymMatrix::from_symmetrized(inv)
}

/// `Σ = a·I + Σᵢ aᵢ ξᵢ ξᵢᵀ` with orthonormal spike directions.
#[derive(Debug, Clone)]
pub struct SpikeDecomposition {
    pub base: f64,
    pub spikes: Vec<(f64, Array1<f64>)>,
}

impl SpikeDecomposition {
    pub fn new(base: f64, spikes: Vec<(f64, Array1<f64>)>) -> Result<Self> {
        let d = SpikeDecomposition { base, spikes };
        d.validate(None)?;
        Ok(d)
    }

    /// Checks positivity and orthonormality; `dim` pins the ambient dimension
    /// when there are no spikes to infer it from.
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if !(self.base > 0.0) {
            return Err(Error::invalid(format!(
                "spike base must be positive, got {}",
                self.base
            )));
        }
        let p = dim.or_else(|| self.spikes.first().map(|s| s.1.len()));
        for (i, (ai, xi)) in self.spikes.iter().enumerate() {
            if !(*ai > 0.0) {
                return Err(Error::invalid(format!("spike {i} has non-positive weight {ai}")));
            }
            if Some(xi.len()) != p {
                return Err(Error::DimensionMismatch {
                    expected: p.unwrap_or(0),
                    actual: xi.len(),
                });
            }
            for (j, (_, xj)) in self.spikes.iter().enumerate().skip(i) {
                let dot = xi.dot(xj);
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-8 {
                    return Err(Error::invalid(format!(
                        "spike directions {i} and {j} are not orthonormal (inner product {dot})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn reconstruct(&self, p: usize) -> Result<SymMatrix> {
        self.validate(Some(p))?;
        let mut m = Array2::eye(p) * self.base;
        for (ai, xi) in &self.spikes {
            add_outer(&mut m, *ai, xi.view());
        }
        SymMatrix::from_symmetrized(m)
    }
}

/// Closed-form inverse `a⁻¹I − Σᵢ aᵢ/(a(a+aᵢ)) ξᵢξᵢᵀ`.
pub fn spiked_inverse(d: &SpikeDecomposition, p: usize) -> Result<SymMatrix> {
    d.validate(Some(p))?;
    let a = d.base;
    let mut m = Array2::eye(p) / a;
    for (ai, xi) in &d.spikes {
        add_outer(&mut m, -ai / (a * (a + ai)), xi.view());
    }
    SymMatrix::from_symmetrized(m)
}

pub(crate) fn add_outer(m: &mut Array2<f64>, w: f64, v: ArrayView1<f64>) {
    for i in 0..v.len() {
        let wi = w * v[i];
        for j in 0..v.len() {
            m[[i, j]] += wi * v[j];
        }
    }
}

/// Spectral norm (largest singular value) of an arbitrary real matrix.
pub fn operator_norm(m: ArrayView2<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let gram = if m.nrows() <= m.ncols() {
        m.dot(&m.t())
    } else {
        m.t().dot(&m)
    };
    let eig = sym_eig_desc(&SymMatrix::from_symmetrized(gram)?)?;
    Ok(eig.values[0].max(0.0).sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`] by bisection.
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain {
            what: "normal_quantile",
            value: q,
        });
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if normal_cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Haar-distributed orthogonal matrix from a seeded Gaussian QR.
pub fn random_orthogonal(p: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Array2::from_shape_fn((p, p), |_| StandardNormal.sample(&mut rng));
    orthonormalize_columns(g)
}

/// Modified Gram–Schmidt with one re-orthogonalisation pass. Columns keep
/// the orientation of the input (the QR diagonal is made positive).
pub(crate) fn orthonormalize_columns(mut a: Array2<f64>) -> Array2<f64> {
    let r = a.ncols();
    for j in 0..r {
        for _pass in 0..2 {
            for i in 0..j {
                let (qi, mut qj) = a.multi_slice_mut((ndarray::s![.., i], ndarray::s![.., j]));
                let proj = qi.dot(&qj);
                qj.scaled_add(-proj, &qi);
            }
        }
        let mut col = a.column_mut(j);
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    a
}

/// Orthogonal projector `B Bᵀ` onto the span of orthonormal columns.
pub fn projector(b: ArrayView2<f64>) -> Array2<f64> {
    b.dot(&b.t())
}

/// Interlacing check for a rank-one update `A + ρvvᵀ`, ρ > 0.
pub fn check_weyl(a: &SymMatrix, v: ArrayView1<f64>, rho: f64) -> Result<bool> {
    if !(rho > 0.0) {
        return Err(Error::Domain {
            what: "check_weyl rho",
            value: rho,
        });
    }
    let updated = a.rank_one_update(rho, v)?;
    let alpha = sym_eig_desc(a)?.values;
    let alpha_up = sym_eig_desc(&updated)?.values;
    let scale = 1.0_f64
        .max(alpha.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
        .max(alpha_up.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    let tol = 1e-8 * scale;
    let p = alpha.len();
    for j in 0..p {
        if alpha_up[j] < alpha[j] - tol {
            return Ok(false);
        }
        if j + 1 < p && alpha[j] < alpha_up[j + 1] - tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Outcome of a projector-perturbation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DavisKahan {
    Applicable {
        lhs: f64,
        rhs: f64,
        gap: f64,
        ok: bool,
    },
    /// The top-`k` and remaining eigenvalue groups are not separated.
    NotApplicable,
}

/// Compares `‖P − Q‖` (projectors on the top-`k` eigenspaces of `A` and `B`)
/// with `‖A − B‖ / z`, where `z` separates the two eigenvalue groups of both
/// matrices.
pub fn check_davis_kahan(a: &SymMatrix, b: &SymMatrix, k: usize) -> Result<DavisKahan> {
    let p = a.dim();
    if b.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: b.dim(),
        });
    }
    if k == 0 || k >= p {
        return Ok(DavisKahan::NotApplicable);
    }
    let ea = sym_eig_desc(a)?;
    let eb = sym_eig_desc(b)?;
    let s = ea.values[k - 1].min(eb.values[k - 1]);
    let below = ea.values[k].max(eb.values[k]);
    let gap = s - below;
    if !(gap > 0.0) {
        return Ok(DavisKahan::NotApplicable);
    }
    let diff = ea.top_projector(k) - eb.top_projector(k);
    let lhs = operator_norm(diff.view())?;
    let h = a.as_array() - b.as_array();
    let rhs = operator_norm(h.view())? / gap;
    Ok(DavisKahan::Applicable {
        lhs,
        rhs,
        gap,
        ok: lhs <= rhs + 1e-8,
    })
}

/// Solves `S x = b` for symmetric positive definite `S` by Cholesky.
/// Returns `None` when a pivot is not positive.
pub fn cholesky_solve(s: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let n = s.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = s[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut acc = s[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / ljj;
        }
    }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[[i, k]] * y[k];
        }
        y[i] = acc / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut acc = y[i];
        for k in (i + 1)..n {
            acc -= l[[k, i]] * x[k];
        }
        x[i] = acc / l[[i, i]];
    }
    Some(x)
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
