//! k-fold cross-validation and data-adaptive choice of ρ.

use std::cmp::Ordering;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{rotate_and_solve, Classifier, SolverConfig};
use crate::error::{Error, Result};
use crate::estimation::{Class, LabeledDataset};

/// Default number of folds.
pub const DEFAULT_FOLDS: usize = 5;

/// Train/validation index pairs. Validation sets partition `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
    pub seed: u64,
    pub k: usize,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

/// Row indices ordered by a key that ignores input row order and is
/// unchanged by orthogonal transforms of the features: label, squared
/// distance to the grand mean, then the coordinates themselves.
fn canonical_order(data: &LabeledDataset) -> Vec<usize> {
    let x = data.x();
    let n = data.len();
    let centre = if n > 0 { x.mean_axis(Axis(0)).expect("non-empty") } else { ndarray::Array1::zeros(data.dim()) };
    let dist: Vec<f64> = (0..n)
        .map(|i| {
            let d = &x.row(i) - &centre;
            d.dot(&d)
        })
        .collect();
    let labels = data.labels();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        labels[a]
            .cmp(&labels[b])
            .then_with(|| dist[a].total_cmp(&dist[b]))
            .then_with(|| {
                x.row(a)
                    .iter()
                    .zip(x.row(b).iter())
                    .map(|(u, v)| u.total_cmp(v))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
    });
    idx
}

/// Seeded k-fold split. Stratified plans deal each class round-robin over
/// the folds after a seeded shuffle, so every validation set receives
/// `⌊n_c/k⌋` or `⌈n_c/k⌉` rows of class `c`.
pub fn make_folds(data: &LabeledDataset, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    let n = data.len();
    if k < 2 {
        return Err(Error::invalid(format!("cross-validation needs k >= 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} rows into {k} folds")));
    }
    let order = canonical_order(data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dealt: Vec<usize> = Vec::with_capacity(n);
    if stratified {
        for class in [Class::One, Class::Two] {
            let mut members: Vec<usize> = order.iter().copied().filter(|&i| data.labels()[i] == class).collect();
            if members.len() < k {
                return Err(Error::invalid(format!(
                    "class {} has {} rows, fewer than the {k} folds required for stratification",
                    class.as_u8(),
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            dealt.extend(members);
        }
    } else {
        let mut members = order;
        members.shuffle(&mut rng);
        dealt = members;
    }
    let mut validation: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (t, &i) in dealt.iter().enumerate() {
        validation[t % k].push(i);
    }
    let folds = validation
        .into_iter()
        .map(|mut val| {
            val.sort_unstable();
            let mut in_val = vec![false; n];
            for &i in &val {
                in_val[i] = true;
            }
            let train = (0..n).filter(|&i| !in_val[i]).collect();
            (train, val)
        })
        .collect();
    Ok(FoldPlan { folds, seed, k })
}

/// Largest usable stratified fold count not exceeding `k`.
pub fn effective_folds(data: &LabeledDataset, k: usize) -> usize {
    k.min(data.count(Class::One)).min(data.count(Class::Two))
}

/// Validation misclassification rate pooled over folds (each fold weighted
/// by its size).
pub fn cv_error<C, F>(data: &LabeledDataset, plan: &FoldPlan, trainer: F) -> Result<f64>
where
    C: Classifier,
    F: Fn(&LabeledDataset) -> Result<C>,
{
    let mut wrong = 0usize;
    let mut total = 0usize;
    for (fold, (train, val)) in plan.folds.iter().enumerate() {
        let rule = trainer(&data.subset(train)).map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })?;
        for &i in val {
            if rule.classify(data.row(i))? != data.labels()[i] {
                wrong += 1;
            }
        }
        total += val.len();
    }
    if total == 0 {
        return Err(Error::invalid("fold plan has no validation rows"));
    }
    Ok(wrong as f64 / total as f64)
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut out: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
            out[0] = lo;
            out[n - 1] = hi;
            out
        }
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let mut out: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
            out[n - 1] = hi;
            out
        }
    }
}

/// Default ρ grid: 15 log-spaced points on [1e-3, 10].
pub fn default_rho_grid() -> Vec<f64> {
    logspace(1e-3, 10.0, 15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSelection {
    pub rho_star: f64,
    /// `(ρ, CV error)` over the sorted, de-duplicated grid; errors are
    /// `None` when CV was skipped (single-value grid or a class with fewer
    /// than two rows).
    pub cv_curve: Vec<(f64, Option<f64>)>,
}

/// Picks ρ by stratified k-fold CV of the rotate-and-solve rule, with the
/// economy rotation re-estimated inside every training fold. Ties go to
/// the smaller ρ.
pub fn select_rho(
    data: &LabeledDataset,
    rho_grid: &[f64],
    base: &SolverConfig,
    k: usize,
    seed: u64,
) -> Result<RhoSelection> {
    let mut grid: Vec<f64> = rho_grid.to_vec();
    if grid.is_empty() {
        return Err(Error::invalid("rho grid is empty"));
    }
    if let Some(&bad) = grid.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::Domain { what: "rho", value: bad });
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let k_eff = effective_folds(data, k);
    if grid.len() == 1 || k_eff < 2 {
        return Ok(RhoSelection {
            rho_star: grid[0],
            cv_curve: grid.iter().map(|&r| (r, None)).collect(),
        });
    }
    let plan = make_folds(data, k_eff, seed, true)?;
    let mut curve = Vec::with_capacity(grid.len());
    for &rho in &grid {
        let err = cv_error(data, &plan, |train| Ok(rotate_and_solve(train, rho, base, true)?.rule))?;
        curve.push((rho, err));
    }
    let mut best = 0;
    for (i, &(_, e)) in curve.iter().enumerate() {
        if e < curve[best].1 {
            best = i;
        }
    }
    Ok(RhoSelection {
        rho_star: curve[best].0,
        cv_curve: curve.into_iter().map(|(r, e)| (r, Some(e))).collect(),
    })
}
