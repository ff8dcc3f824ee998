//! The subcommands. Each writes its artifacts plus a `manifest.json` into
//! its own output directory, also when it fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::*;
use crate::analysis::{
    convergence_iteration, expressivity_study, interior_local_maxima, landscape_1d,
    performance_profile, profile_to_csv, MetricKind, MetricTable,
};
use crate::density::{rescale_thresholded_compliance, threshold, DensityField, VolumeBudget};
use crate::error::{Error, Result};
use crate::io;
use crate::optim::{
    run_optimization, run_twobar, DesignMap, DesignProblem, OptimizerConfig, RunSettings,
    Trajectory, TwoBarRun,
};
use crate::reparam::{
    param_count, pretrain_uniform, ArchitectureKind, ArchitectureSpec, CnnConfig, ParamVector,
    PretrainOptions, Reparam,
};

/// Objective-saturation tolerance reported in run manifests.
pub const CONVERGENCE_TOL: f64 = 0.01;
/// Noise floor for counting bumps on a landscape slice.
pub const BUMP_NOISE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Value,
    /// `ok` or `error`.
    pub status: String,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub results: Value,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path)
            .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn record<C: Serialize>(
    out: &Path,
    command: &str,
    seed: u64,
    config: &C,
    result: Result<Value>,
) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let (status, error, results) = match &result {
        Ok(v) => ("ok", None, v.clone()),
        Err(e) => ("error", Some(e.to_string()), Value::Null),
    };
    let manifest = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config: serde_json::to_value(config)?,
        status: status.into(),
        error,
        results,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    result.map(|_| manifest)
}

fn write_field(out: &Path, stem: &str, rho: &DensityField) -> Result<()> {
    io::write_density_csv(&out.join(format!("{stem}.csv")), rho)?;
    io::write_density_pgm(&out.join(format!("{stem}.pgm")), rho)
}

fn field(nx: usize, ny: usize, values: &[f64]) -> Result<DensityField> {
    // physical densities can overshoot [0, 1] by rounding only
    DensityField::new(nx, ny, values.iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Result of snapping a design to black and white.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub design: DensityField,
    pub compliance: f64,
    pub volume: f64,
    pub rescaled_compliance: f64,
}

pub fn threshold_design(problem: &DesignProblem, rho: &DensityField) -> Result<ThresholdReport> {
    let v0 = problem.volume_target();
    let design = threshold(rho, VolumeBudget::new(v0)?);
    let compliance = problem.objective(&design.values)?;
    let volume = design.mean();
    Ok(ThresholdReport {
        rescaled_compliance: rescale_thresholded_compliance(compliance, volume, v0)?,
        design,
        compliance,
        volume,
    })
}

/// Starting weights: a fit to the uniform field when `pretrain` is set.
pub fn initial_params(
    reparam: &Reparam,
    v0: f64,
    seed: u64,
    pretrain: bool,
) -> Result<(Vec<f64>, Value)> {
    let theta0 = reparam.init_params(seed).values;
    if !pretrain {
        return Ok((theta0, Value::Null));
    }
    let fit = pretrain_uniform(reparam, &theta0, v0, &PretrainOptions::default())?;
    let info =
        json!({"mse": fit.mse, "iterations": fit.iterations, "reached_target": fit.reached_target});
    Ok((fit.params, info))
}

fn optimize_grid(cfg: &RunConfig, out: &Path) -> Result<(Value, Trajectory)> {
    let problem = cfg.problem.build()?;
    let v0 = problem.volume_target();
    let [nx, ny] = cfg.problem.resolution;
    let reparam = Reparam::new(&cfg.architecture, nx, ny, v0)?;
    let (theta0, pretrain) = initial_params(&reparam, v0, cfg.seed, cfg.pretrain)?;
    let map = DesignMap::new(&problem, &reparam, cfg.order)?;
    let settings = RunSettings {
        budget: cfg.budget,
        order: cfg.order,
        snapshot_every: cfg.snapshot_every,
        ..Default::default()
    };
    let traj = run_optimization(&map, &theta0, &cfg.optimizer, &settings)?;

    fs::write(out.join("trajectory.csv"), traj.to_csv())?;
    if !traj.snapshots.is_empty() {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir)?;
        for (it, rho) in &traj.snapshots {
            io::write_density_pgm(&dir.join(format!("iter_{it:05}.pgm")), &field(nx, ny, rho)?)?;
        }
    }
    write_field(out, "final_density", &field(nx, ny, &traj.final_density)?)?;
    ParamVector::new(traj.final_params.clone(), reparam.layout().to_vec())
        .write_checkpoint(&out.join("final_params"))?;

    let mut results = json!({
        "solver": cfg.solver_label(),
        "case": cfg.problem.label(),
        "param_count": reparam.param_count(),
        "evaluations": traj.records.len(),
        "pretrain": pretrain,
        "final_objective": traj.records.last().map(|r| r.objective),
        "final_volume": traj.records.last().map(|r| r.volume),
        "convergence_tol": CONVERGENCE_TOL,
        "converged_iteration": convergence_iteration(&traj.objectives(), CONVERGENCE_TOL),
    });
    if let Some(best) = &traj.best_feasible {
        let rho = field(nx, ny, &best.density)?;
        write_field(out, "best_density", &rho)?;
        let th = threshold_design(&problem, &rho)?;
        write_field(out, "thresholded", &th.design)?;
        results["best_objective"] = json!(best.objective);
        results["best_iteration"] = json!(best.iteration);
        results["thresholded_compliance"] = json!(th.compliance);
        results["thresholded_volume"] = json!(th.volume);
        results["rescaled_compliance"] = json!(th.rescaled_compliance);
    } else {
        results["best_objective"] = Value::Null;
    }
    Ok((results, traj))
}

fn optimize_twobar(cfg: &RunConfig, out: &Path) -> Result<(Value, TwoBarRun)> {
    let tb = cfg.twobar.clone().unwrap_or_default();
    let OptimizerConfig::Mma { config, .. } = cfg.optimizer else {
        return Err(Error::param("the two-bar truss is optimized with MMA only"));
    };
    let run = run_twobar(&tb.param, &tb.start, &config, cfg.budget)?;
    fs::write(out.join("twobar.csv"), run.to_csv())?;
    let last = run.last();
    let best = run
        .records
        .iter()
        .filter(|r| r.max_violation <= 1e-3)
        .map(|r| r.mass)
        .fold(f64::INFINITY, f64::min);
    let results = json!({
        "solver": cfg.solver_label(),
        "case": "twobar",
        "final_point": last.areas,
        "final_params": last.params,
        "final_mass": last.mass,
        "final_max_violation": last.max_violation,
        "best_objective": best.is_finite().then_some(best),
        "first_hit_global": run.first_hit([1.0, 0.0], 0.05, 1e-3),
        "first_hit_local": run.first_hit([0.0, 1.0], 0.05, 1e-3),
    });
    Ok((results, run))
}

pub fn cmd_optimize(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let result = (|| {
        cfg.validate()?;
        fs::create_dir_all(out)?;
        if cfg.is_twobar() {
            Ok(optimize_twobar(cfg, out)?.0)
        } else {
            Ok(optimize_grid(cfg, out)?.0)
        }
    })();
    record(out, "optimize", cfg.seed, cfg, result)
}

/// Like [`cmd_optimize`], plus per-iteration gradient diagnostics and the
/// saturation iteration at `tol`.
pub fn cmd_trajectory(cfg: &RunConfig, out: &Path, tol: f64) -> Result<Manifest> {
    let result = (|| {
        cfg.validate()?;
        fs::create_dir_all(out)?;
        if cfg.is_twobar() {
            let (mut results, run) = optimize_twobar(cfg, out)?;
            let mass: Vec<f64> = run.records.iter().map(|r| r.mass).collect();
            results["converged_iteration"] = json!(convergence_iteration(&mass, tol));
            return Ok(results);
        }
        let (mut results, traj) = optimize_grid(cfg, out)?;
        let mut csv = String::from("iteration,objective,grad_norm,grad_angle_rad\n");
        for r in &traj.records {
            let angle = r
                .grad_angle
                .map(|a| format!("{a:.17e}"))
                .unwrap_or_default();
            csv.push_str(&format!(
                "{},{:.17e},{:.17e},{angle}\n",
                r.iteration, r.objective, r.grad_norm
            ));
        }
        fs::write(out.join("metrics.csv"), csv)?;
        let angles: Vec<f64> = traj.records.iter().filter_map(|r| r.grad_angle).collect();
        results["convergence_tol"] = json!(tol);
        results["converged_iteration"] = json!(convergence_iteration(&traj.objectives(), tol));
        results["mean_grad_angle"] =
            json!((!angles.is_empty()).then(|| angles.iter().sum::<f64>() / angles.len() as f64));
        Ok(results)
    })();
    record(out, "trajectory", cfg.seed, cfg, result)
}

fn load_reference(r: &Reference, nx: usize, ny: usize, v0: f64) -> Result<Vec<f64>> {
    match r {
        Reference::Uniform => Ok(vec![v0; nx * ny]),
        Reference::File(path) => {
            let rho = io::read_density(path)?;
            if (rho.nx, rho.ny) != (nx, ny) {
                return Err(Error::param(format!(
                    "{} is {}x{}, the problem is {nx}x{ny}",
                    path.display(),
                    rho.nx,
                    rho.ny
                )));
            }
            Ok(rho.values)
        }
    }
}

pub fn cmd_landscape(cfg: &LandscapeConfig, out: &Path) -> Result<Manifest> {
    let result = (|| {
        let problem = cfg.problem.build()?;
        let v0 = problem.volume_target();
        let [nx, ny] = cfg.problem.resolution;
        let r1 = load_reference(&cfg.reference_1, nx, ny, v0)?;
        let r2 = load_reference(&cfg.reference_2, nx, ny, v0)?;
        let reparam = Reparam::new(&cfg.architecture, nx, ny, v0)?;
        let res = landscape_1d(&problem, &reparam, &r1, &r2, &cfg.options)?;
        fs::create_dir_all(out)?;
        fs::write(out.join("landscape.csv"), res.to_csv())?;
        let maxima = interior_local_maxima(&res.objectives(), BUMP_NOISE);
        Ok(json!({
            "fit_mse": res.fit_mse,
            "violations": res.violations(),
            "interior_maxima": maxima.iter().map(|&k| res.samples[k].alpha).collect::<Vec<_>>(),
            "warning": res.warning,
        }))
    })();
    record(out, "landscape", cfg.options.seed, cfg, result)
}

/// The architecture of `kind` whose parameter count is closest to `target`.
pub fn sized_architecture(
    kind: ArchitectureKind,
    target: usize,
    nx: usize,
    ny: usize,
    omega0: f64,
) -> Result<ArchitectureSpec> {
    let candidates: Vec<ArchitectureSpec> = match kind {
        ArchitectureKind::Direct => vec![ArchitectureSpec::direct()],
        ArchitectureKind::Mlp => (1..=512).map(ArchitectureSpec::mlp).collect(),
        ArchitectureKind::Siren => (1..=512)
            .map(|w| ArchitectureSpec::siren(w, omega0))
            .collect(),
        ArchitectureKind::Cnn => {
            let mut v = Vec::new();
            for n in [1, 2, 4, 8, 16, 32, 64] {
                for c in 1..=32 {
                    for f in 1..=64 {
                        v.push(ArchitectureSpec::cnn(CnnConfig::new(n, c, f)));
                    }
                }
            }
            v
        }
    };
    let mut best: Option<(usize, ArchitectureSpec)> = None;
    for spec in candidates {
        let Ok(count) = param_count(&spec, nx, ny) else {
            continue;
        };
        let gap = count.abs_diff(target);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, spec));
        }
    }
    best.map(|(_, s)| s)
        .ok_or_else(|| Error::param(format!("no {kind:?} architecture fits a {nx}x{ny} mesh")))
}

pub fn cmd_expressivity(cfg: &ExpressivityConfig, out: &Path) -> Result<Manifest> {
    let result = (|| {
        let [nx, ny] = cfg.resolution;
        let targets = cfg
            .targets
            .iter()
            .map(|p| {
                let rho = io::read_density(p)?;
                if (rho.nx, rho.ny) != (nx, ny) {
                    return Err(Error::param(format!("{} is not {nx}x{ny}", p.display())));
                }
                Ok(rho.values)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut specs = cfg.architectures.clone();
        if let Some(sweep) = &cfg.sweep {
            for &kind in &sweep.kinds {
                for &ratio in &sweep.ratios {
                    let target = (ratio * (nx * ny) as f64).round() as usize;
                    specs.push(sized_architecture(kind, target, nx, ny, sweep.omega0)?);
                }
            }
        }
        if specs.is_empty() {
            return Err(Error::param("expressivity needs architectures or a sweep"));
        }
        let rows = expressivity_study(&specs, &targets, (nx, ny), &cfg.options)?;
        let mut csv = String::from("label,params,mean_psnr,std_psnr,worst_psnr\n");
        for r in &rows {
            let worst: Vec<String> = r.worst_psnr.iter().map(|v| v.to_string()).collect();
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.label,
                r.params,
                r.mean,
                r.std,
                worst.join(" ")
            ));
        }
        fs::create_dir_all(out)?;
        fs::write(out.join("expressivity.csv"), csv)?;
        Ok(serde_json::to_value(&rows)?)
    })();
    record(out, "expressivity", cfg.options.seed, cfg, result)
}

fn find_manifests(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_manifests(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "manifest.json") {
            found.push(p);
        }
    }
    Ok(())
}

/// Builds a metric table from the optimize/trajectory manifests under `dir`.
/// Repeated (solver, case) pairs keep their best value; failures are `+∞`.
pub fn collect_metrics(dir: &Path, kind: MetricKind) -> Result<MetricTable> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.display().to_string()));
    }
    let mut paths = Vec::new();
    find_manifests(dir, &mut paths)?;
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for p in paths {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&p)?)?;
        if manifest.command != "optimize" && manifest.command != "trajectory" {
            continue;
        }
        let Ok(cfg) = serde_json::from_value::<RunConfig>(manifest.config.clone()) else {
            continue;
        };
        let key = if cfg.is_twobar() {
            "twobar".to_string()
        } else {
            cfg.problem.label()
        };
        let field = match kind {
            MetricKind::BestObjective => "best_objective",
            MetricKind::ConvergedIteration => "converged_iteration",
            MetricKind::ThresholdedCompliance => "rescaled_compliance",
        };
        let value = if manifest.is_ok() {
            manifest
                .results
                .get(field)
                .and_then(Value::as_f64)
                .unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        let cell = cells
            .entry((cfg.solver_label(), key))
            .or_insert(f64::INFINITY);
        *cell = cell.min(value);
    }
    if cells.is_empty() {
        return Err(Error::MissingArtifact(format!(
            "no run manifests under {}",
            dir.display()
        )));
    }
    let mut solvers: Vec<String> = cells.keys().map(|(s, _)| s.clone()).collect();
    let mut cases: Vec<String> = cells.keys().map(|(_, c)| c.clone()).collect();
    solvers.dedup();
    cases.sort();
    cases.dedup();
    let values = solvers
        .iter()
        .map(|s| {
            cases
                .iter()
                .map(|c| {
                    cells
                        .get(&(s.clone(), c.clone()))
                        .copied()
                        .unwrap_or(f64::INFINITY)
                })
                .collect()
        })
        .collect();
    MetricTable::new(kind, solvers, cases, values)
}

pub fn cmd_profile(cfg: &ProfileConfig, out: &Path) -> Result<Manifest> {
    let result = (|| {
        let table = collect_metrics(&cfg.runs, cfg.metric)?;
        let curves = performance_profile(&table, &cfg.taus)?;
        fs::create_dir_all(out)?;
        let mut csv = format!("solver,{}\n", table.cases.join(","));
        for (s, row) in table.solvers.iter().zip(&table.values) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            csv.push_str(&format!("{s},{}\n", vals.join(",")));
        }
        fs::write(out.join("metrics.csv"), csv)?;
        fs::write(
            out.join("profile.csv"),
            profile_to_csv(&table, &cfg.taus, &curves),
        )?;
        Ok(json!({"table": table, "curves": curves}))
    })();
    record(out, "profile", 0, cfg, result)
}

pub fn cmd_threshold(cfg: &ThresholdConfig, out: &Path) -> Result<Manifest> {
    let result = (|| {
        let problem = cfg.problem.build()?;
        let rho = io::read_density(&cfg.density)?;
        let [nx, ny] = cfg.problem.resolution;
        if (rho.nx, rho.ny) != (nx, ny) {
            return Err(Error::param(format!(
                "{} is not {nx}x{ny}",
                cfg.density.display()
            )));
        }
        let th = threshold_design(&problem, &rho)?;
        fs::create_dir_all(out)?;
        write_field(out, "thresholded", &th.design)?;
        Ok(json!({
            "solid_elements": th.design.values.iter().filter(|&&v| v == 1.0).count(),
            "compliance": th.compliance,
            "volume": th.volume,
            "rescaled_compliance": th.rescaled_compliance,
        }))
    })();
    record(out, "threshold", 0, cfg, result)
}

/// Hyperparameter assignments of a search, in trial order.
pub fn search_trials(spec: &SearchSpec) -> Result<Vec<BTreeMap<String, f64>>> {
    for key in spec.grid.keys().chain(spec.ranges.keys()) {
        if !SEARCH_KEYS.contains(&key.as_str()) {
            return Err(Error::param(format!(
                "unknown search key `{key}` (keys: {})",
                SEARCH_KEYS.join(", ")
            )));
        }
    }
    match spec.mode {
        SearchMode::Grid => {
            let mut trials = vec![BTreeMap::new()];
            for (key, values) in &spec.grid {
                if values.is_empty() {
                    return Err(Error::param(format!("grid for `{key}` is empty")));
                }
                trials = trials
                    .into_iter()
                    .flat_map(|t| {
                        values.iter().map(move |&v| {
                            let mut t = t.clone();
                            t.insert(key.clone(), v);
                            t
                        })
                    })
                    .collect();
            }
            Ok(trials)
        }
        SearchMode::Random => {
            if spec.trials == 0 {
                return Err(Error::param("a random search needs at least one trial"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            Ok((0..spec.trials)
                .map(|_| {
                    spec.ranges
                        .iter()
                        .map(|(k, r)| {
                            let u: f64 = rng.random();
                            let v = if r.log {
                                (r.low.ln() + u * (r.high.ln() - r.low.ln())).exp()
                            } else {
                                r.low + u * (r.high - r.low)
                            };
                            (k.clone(), v)
                        })
                        .collect()
                })
                .collect())
        }
    }
}

/// Best feasible objective of one run, without writing artifacts.
pub fn trial_objective(cfg: &RunConfig) -> Result<Option<f64>> {
    cfg.validate()?;
    if cfg.is_twobar() {
        let tb = cfg.twobar.clone().unwrap_or_default();
        let OptimizerConfig::Mma { config, .. } = cfg.optimizer else {
            unreachable!("validated");
        };
        let run = run_twobar(&tb.param, &tb.start, &config, cfg.budget)?;
        let best = run
            .records
            .iter()
            .filter(|r| r.max_violation <= 1e-3)
            .map(|r| r.mass)
            .fold(f64::INFINITY, f64::min);
        return Ok(best.is_finite().then_some(best));
    }
    let problem = cfg.problem.build()?;
    let v0 = problem.volume_target();
    let [nx, ny] = cfg.problem.resolution;
    let reparam = Reparam::new(&cfg.architecture, nx, ny, v0)?;
    let (theta0, _) = initial_params(&reparam, v0, cfg.seed, cfg.pretrain)?;
    let map = DesignMap::new(&problem, &reparam, cfg.order)?;
    let settings = RunSettings {
        budget: cfg.budget,
        order: cfg.order,
        ..Default::default()
    };
    Ok(run_optimization(&map, &theta0, &cfg.optimizer, &settings)?.best_objective())
}

pub fn cmd_search(spec: &SearchSpec, out: &Path) -> Result<Manifest> {
    let result = (|| {
        let trials = search_trials(spec)?;
        let outcomes: Vec<std::result::Result<Option<f64>, String>> = trials
            .par_iter()
            .map(|t| {
                let mut cfg = spec.base.clone();
                cfg.budget = spec.budget;
                for (k, &v) in t {
                    set_hyperparameter(&mut cfg, k, v).map_err(|e| e.to_string())?;
                }
                trial_objective(&cfg).map_err(|e| e.to_string())
            })
            .collect();
        let keys: Vec<&String> = trials
            .first()
            .map(|t| t.keys().collect())
            .unwrap_or_default();
        let mut csv = String::from("trial");
        for k in &keys {
            csv.push_str(&format!(",{k}"));
        }
        csv.push_str(",objective,status\n");
        let mut best: Option<(usize, f64)> = None;
        for (i, (t, o)) in trials.iter().zip(&outcomes).enumerate() {
            csv.push_str(&i.to_string());
            for k in &keys {
                csv.push_str(&format!(",{}", t[*k]));
            }
            let (obj, status) = match o {
                Ok(Some(v)) => (v.to_string(), "ok".to_string()),
                Ok(None) => (String::new(), "infeasible".to_string()),
                Err(e) => (String::new(), format!("error: {}", e.replace(',', ";"))),
            };
            csv.push_str(&format!(",{obj},{status}\n"));
            if let Ok(Some(v)) = o {
                if best.is_none_or(|(_, b)| *v < b) {
                    best = Some((i, *v));
                }
            }
        }
        fs::create_dir_all(out)?;
        fs::write(out.join("trials.csv"), csv)?;
        let (i, objective) = best.ok_or_else(|| Error::param("every search trial failed"))?;
        let mut best_cfg = spec.base.clone();
        best_cfg.budget = spec.budget;
        for (k, &v) in &trials[i] {
            set_hyperparameter(&mut best_cfg, k, v)?;
        }
        fs::write(
            out.join("best_config.json"),
            serde_json::to_string_pretty(&best_cfg)?,
        )?;
        Ok(json!({
            "trials": trials.len(),
            "best_trial": i,
            "best_objective": objective,
            "best_hyperparameters": trials[i],
        }))
    })();
    record(out, "search", spec.seed, spec, result)
}
