//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rotsolve::classifiers::{rotate_and_solve, train_linear, Classifier, SolverConfig, TrainedRule};
use rotsolve::estimation::LabeledDataset;
use rotsolve::harness::{
    mix_seed, rho_sweep, run_experiment, sparsity_diagnostic, sparsity_sweep, write_curves_csv, write_long_csv,
    write_sweep_csv, ExperimentResult, ExperimentSpec, MethodSpec, RhoPolicy, SweepRow, TAG_MODEL,
};
use rotsolve::population::ModelRecipe;
use rotsolve::selection::{default_rho_grid, select_rho};
use serde_json::json;

use crate::io::{manifest_path_for, parse_grid, read_dataset, write_file, write_manifest, write_predictions, RunClock};
use crate::{CliError, DiagnoseArgs, ModelArgs, ModelName, PredictArgs, SimulateArgs, SweepArgs, SweepKind, TrainArgs};

const DEFAULT_TARGET_ERROR: f64 = 0.10;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn seeds(master: u64) -> BTreeMap<String, u64> {
    BTreeMap::from([("master".to_string(), master)])
}

/// Model recipe from flags; `level_override` replaces the level flags.
fn recipe(
    model: ModelName,
    p: u64,
    target_error: Option<f64>,
    sparsity: Option<f64>,
    level_override: Option<f64>,
) -> Result<ModelRecipe, CliError> {
    let level = if model.is_random() {
        if target_error.is_some() {
            return Err(usage(format!("--target-error does not apply to {}; use --sparsity", model.as_str())));
        }
        let s = level_override
            .or(sparsity)
            .ok_or_else(|| usage(format!("{} needs --sparsity", model.as_str())))?;
        if !(s > 0.0 && s <= 1.0) {
            return Err(usage(format!("sparsity must lie in (0, 1], got {s}")));
        }
        s
    } else {
        if sparsity.is_some() {
            return Err(usage(format!("--sparsity does not apply to {}; use --target-error", model.as_str())));
        }
        let t = level_override.or(target_error).unwrap_or(DEFAULT_TARGET_ERROR);
        if !(t > 0.0 && t < 0.5) {
            return Err(usage(format!("target error must lie in (0, 0.5), got {t}")));
        }
        t
    };
    ModelRecipe::parse(model.as_str(), p as usize, level).map_err(usage)
}

fn model_recipe(m: &ModelArgs, level_override: Option<f64>) -> Result<ModelRecipe, CliError> {
    recipe(m.model, m.p, m.target_error, m.sparsity, level_override)
}

/// `--rho` as a policy: a positive number, or `cv` over `grid` (default grid if absent).
pub fn rho_policy(rho: &str, grid: Option<&str>, folds: usize) -> Result<RhoPolicy, CliError> {
    if rho.trim().eq_ignore_ascii_case("cv") {
        let grid = match grid {
            Some(g) => parse_grid(g)?,
            None => default_rho_grid(),
        };
        if let Some(bad) = grid.iter().find(|r| !(**r > 0.0)) {
            return Err(usage(format!("ρ grid values must be positive, got {bad}")));
        }
        return Ok(RhoPolicy::Cv { grid, folds });
    }
    if grid.is_some() {
        return Err(usage("--rho-grid only applies with --rho cv"));
    }
    let value: f64 = rho
        .trim()
        .parse()
        .map_err(|_| usage(format!("--rho must be a positive number or 'cv', got '{rho}'")))?;
    if !(value > 0.0 && value.is_finite()) {
        return Err(usage(format!("--rho must be positive, got {value}")));
    }
    Ok(RhoPolicy::Fixed { rho: value })
}

/// Comma-separated method names.
pub fn parse_methods(list: &str, rho: &RhoPolicy) -> Result<Vec<MethodSpec>, CliError> {
    let methods: Vec<MethodSpec> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| MethodSpec::parse(name, rho).map_err(|e| usage(format!("method '{name}': {e}"))))
        .collect::<Result<_, _>>()?;
    if methods.is_empty() {
        return Err(usage("--methods is empty"));
    }
    Ok(methods)
}

fn experiment_spec(
    m: &ModelArgs,
    recipe: ModelRecipe,
    methods: Vec<MethodSpec>,
    reps: u64,
    folds: u64,
) -> Result<ExperimentSpec, CliError> {
    let n1 = m.n1 as usize;
    let n2 = m.n2.unwrap_or(m.n1) as usize;
    let mut spec = ExperimentSpec::new(recipe, n1, n2, methods);
    spec.replicates = reps as usize;
    spec.master_seed = m.seed;
    spec.folds = folds as usize;
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn print_summary(result: &ExperimentResult) {
    if let Some(b) = result.bayes_error {
        println!("bayes error {b:.4}");
    }
    println!("{:<16} {:>8} {:>8} {:>8}", "method", "mean", "std", "failures");
    for m in &result.methods {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!("{:<16} {:>8} {:>8} {:>8}", m.method, f(m.mean), f(m.std), m.failures);
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let clock = RunClock::start();
    let recipe = model_recipe(&a.model, None)?;
    let policy = rho_policy(&a.rho, a.rho_grid.as_deref(), a.cv_folds as usize)?;
    let methods = parse_methods(&a.methods, &policy)?;
    let mut spec = experiment_spec(&a.model, recipe, methods, a.reps, a.cv_folds)?;
    if let Some(t) = a.n_test {
        spec.n_test = t as usize;
    }
    spec.redraw_model = a.redraw_model;
    let result = run_experiment(&spec)?;

    let results_path = a.out.join("results.json");
    let errors_path = a.out.join("errors.csv");
    let manifest_path = a.out.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&result).map_err(|e| CliError::data(&results_path, e.to_string()))?;
    json.push('\n');
    write_file(&results_path, json.as_bytes())?;
    let mut csv_bytes = Vec::new();
    write_long_csv(&result, &mut csv_bytes)?;
    write_file(&errors_path, &csv_bytes)?;
    let manifest = clock.manifest(
        "simulate",
        a,
        seeds(a.model.seed),
        vec![results_path.clone(), errors_path],
        None,
    );
    write_manifest(&manifest_path, &manifest)?;
    print_summary(&result);
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let clock = RunClock::start();
    let data: LabeledDataset = read_dataset(&a.data, true)?.into_labeled(&a.data)?;
    let folds = a.cv_folds as usize;
    let policy = rho_policy(&a.rho, a.rho_grid.as_deref(), folds)?;
    let spec = MethodSpec::parse(&a.method, &policy).map_err(|e| usage(format!("method '{}': {e}", a.method)))?;
    let cfg = |m| {
        let mut c = SolverConfig::new(m).with_seed(a.seed);
        c.folds = folds;
        c
    };
    let (rule, details) = match spec {
        MethodSpec::Oracle | MethodSpec::OracleRs { .. } => {
            return Err(usage(format!(
                "'{}' needs the population parameters and cannot be trained from data",
                a.method
            )))
        }
        MethodSpec::Base { method } => {
            if a.economy {
                return Err(usage("--economy only applies to rotate-and-solve methods"));
            }
            let fit = train_linear(&data, &cfg(method))?;
            let details = json!({ "method": spec.name(), "tuning": fit.tuning });
            (TrainedRule::Linear(fit.rule), details)
        }
        MethodSpec::Rs { base, economy, ref rho } => {
            let economy = economy || a.economy;
            let base_cfg = cfg(base);
            let (rho_star, curve) = match rho {
                RhoPolicy::Fixed { rho } => (*rho, None),
                RhoPolicy::Cv { grid, folds } => {
                    let sel = select_rho(&data, grid, &base_cfg, *folds, a.seed)?;
                    (sel.rho_star, Some(sel.cv_curve))
                }
            };
            let fit = rotate_and_solve(&data, rho_star, &base_cfg, economy)?;
            let details = json!({
                "method": spec.name(),
                "economy": economy,
                "rho": rho_star,
                "rho_cv_curve": curve,
                "basis_rank": fit.rule.basis().rank(),
                "tuning": fit.tuning,
            });
            (TrainedRule::Rs(fit.rule), details)
        }
    };
    let mut text = rule.to_json()?;
    text.push('\n');
    write_file(&a.model_out, text.as_bytes())?;
    let manifest_path = manifest_path_for(&a.model_out);
    let manifest = clock.manifest("train", a, seeds(a.seed), vec![a.model_out.clone()], Some(details.clone()));
    write_manifest(&manifest_path, &manifest)?;
    if let Some(r) = details.get("rho").and_then(|v| v.as_f64()) {
        println!("rho {r}");
    }
    println!(
        "trained {} on {} rows x {} features; wrote {}",
        spec.name(),
        data.len(),
        data.dim(),
        a.model_out.display()
    );
    Ok(())
}

fn load_rule(path: &Path) -> Result<TrainedRule, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    TrainedRule::from_json(&text).map_err(|e| CliError::data(path, format!("not a valid rule file: {e}")))
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let clock = RunClock::start();
    let rule = load_rule(&a.model)?;
    let ds = read_dataset(&a.data, false)?;
    if ds.x.ncols() != rule.dim() {
        return Err(CliError::data(
            &a.data,
            format!("rule expects {} features, file has {}", rule.dim(), ds.x.ncols()),
        ));
    }
    let predictions = rule.classify_rows(ds.x.view())?;
    write_predictions(&a.out, &predictions)?;
    let mut details = None;
    if let Some(labels) = &ds.labels {
        let wrong = predictions.iter().zip(labels).filter(|(p, y)| p != y).count();
        let rate = wrong as f64 / labels.len() as f64;
        println!("error rate {rate} ({wrong} of {} misclassified)", labels.len());
        details = Some(json!({ "error_rate": rate, "misclassified": wrong, "rows": labels.len() }));
    }
    let manifest = clock.manifest("predict", a, BTreeMap::new(), vec![a.out.clone()], details);
    write_manifest(&manifest_path_for(&a.out), &manifest)?;
    println!("wrote {} predictions to {}", predictions.len(), a.out.display());
    Ok(())
}

fn print_rows(rows: &[SweepRow]) {
    for r in rows {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!("{:<10} {:<16} {:>8} {:>8}", r.grid, r.method, f(r.mean), f(r.std));
    }
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let clock = RunClock::start();
    let folds = a.cv_folds as usize;
    let rows = match a.kind {
        SweepKind::Rho => {
            if a.levels.is_some() {
                return Err(usage("--levels applies to --kind sparsity; use --grid for ρ"));
            }
            let grid = parse_grid(a.grid.as_deref().ok_or_else(|| usage("--kind rho needs --grid"))?)?;
            if let Some(bad) = grid.iter().find(|r| !(**r > 0.0)) {
                return Err(usage(format!("ρ values must be positive, got {bad}")));
            }
            let methods = parse_methods(&a.methods, &RhoPolicy::default())?;
            let spec = experiment_spec(&a.model, model_recipe(&a.model, None)?, methods, a.reps, a.cv_folds)?;
            rho_sweep(&spec, &grid)?
        }
        SweepKind::Sparsity => {
            if a.grid.is_some() {
                return Err(usage("--grid applies to --kind rho; use --levels for sparsity"));
            }
            if !a.model.model.is_random() {
                return Err(usage("sparsity sweeps need a random model (rand1 or rand2)"));
            }
            if a.model.sparsity.is_some() {
                return Err(usage("--sparsity is set per level by --levels"));
            }
            let levels = parse_grid(a.levels.as_deref().ok_or_else(|| usage("--kind sparsity needs --levels"))?)?;
            if let Some(bad) = levels.iter().find(|l| !(**l > 0.0 && **l <= 1.0)) {
                return Err(usage(format!("sparsity levels must lie in (0, 1], got {bad}")));
            }
            let policy = rho_policy(&a.rho, None, folds)?;
            let methods = parse_methods(&a.methods, &policy)?;
            let spec = experiment_spec(&a.model, model_recipe(&a.model, Some(levels[0]))?, methods, a.reps, a.cv_folds)?;
            sparsity_sweep(&spec, &levels)?
        }
    };
    let mut bytes = Vec::new();
    write_sweep_csv(&rows, &mut bytes)?;
    write_file(&a.out, &bytes)?;
    let manifest = clock.manifest("sweep", a, seeds(a.model.seed), vec![a.out.clone()], None);
    write_manifest(&manifest_path_for(&a.out), &manifest)?;
    print_rows(&rows);
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<(), CliError> {
    let clock = RunClock::start();
    if let Some(d) = &a.data {
        return Err(usage(format!(
            "diagnose works on simulated models only: the curves compare against the population \
             discriminant direction, which a dataset such as '{}' cannot provide",
            d.display()
        )));
    }
    let model = a.model.ok_or_else(|| usage("diagnose needs --model"))?;
    let p = a.p.ok_or_else(|| usage("diagnose needs --p"))?;
    if !(a.rho > 0.0 && a.rho.is_finite()) {
        return Err(usage(format!("--rho must be positive, got {}", a.rho)));
    }
    let recipe = recipe(model, p, a.target_error, a.sparsity, None)?;
    let population = recipe.build(mix_seed(a.seed, 0, TAG_MODEL))?;
    let n1 = a.n1 as usize;
    let n2 = a.n2.unwrap_or(a.n1) as usize;
    let curves = sparsity_diagnostic(&population, a.rho, n1, n2, a.reps as usize, a.seed)?;
    let mut bytes = Vec::new();
    write_curves_csv(&curves, &mut bytes)?;
    write_file(&a.out, &bytes)?;
    let out: PathBuf = a.out.clone();
    let manifest = clock.manifest("diagnose", a, seeds(a.seed), vec![out], None);
    write_manifest(&manifest_path_for(&a.out), &manifest)?;
    let first = |c: &[f64]| c.first().copied().unwrap_or(f64::NAN);
    println!(
        "energy in the largest coordinate: raw {:.4}, oracle-rotated {:.4}, estimated-rotated {:.4}",
        first(&curves.raw),
        first(&curves.oracle),
        first(&curves.empirical)
    );
    println!("wrote {}", a.out.display());
    Ok(())
}
