//! The outer loop: compose the reparameterization with the density filter,
//! projection and finite-element objective, then iterate an optimizer.

use serde::{Deserialize, Serialize};

use super::{adam_step, mma_step, AdamConfig, AdamState, MmaConfig, MmaState};
use crate::density::{build_filter, shifted_sigmoid_project, shifted_sigmoid_vjp, FilterOperator};
use crate::error::{Error, Result};
use crate::fem::FeModel;
use crate::problems::ProblemSpec;
use crate::reparam::{Bounding, Reparam};

/// Where the volume-preserving projection sits relative to the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionOrder {
    /// `raw → filter → shifted sigmoid`.
    #[default]
    FilterThenProject,
    /// `raw → shifted sigmoid → filter`.
    ProjectThenFilter,
}

/// A catalog problem with its assembled model and filter.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub spec: ProblemSpec,
    model: FeModel,
    filter: FilterOperator,
}

impl DesignProblem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        let model = FeModel::new(&spec.domain, spec.physics)?;
        let filter = build_filter(spec.nx, spec.ny, spec.filter_radius)?;
        Ok(DesignProblem {
            spec,
            model,
            filter,
        })
    }

    pub fn model(&self) -> &FeModel {
        &self.model
    }

    pub fn filter(&self) -> &FilterOperator {
        &self.filter
    }

    pub fn volume_target(&self) -> f64 {
        self.spec.volume_target
    }

    /// Objective at a physical density field.
    pub fn objective(&self, rho_phys: &[f64]) -> Result<f64> {
        Ok(self.model.evaluate(rho_phys, self.spec.penalty)?.value)
    }
}

/// One evaluation of `F∘h` and `g∘h`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub volume: f64,
    /// Normalized volume constraint `V/V0 − 1`.
    pub constraint: f64,
    pub objective_grad: Vec<f64>,
    /// Present when requested.
    pub constraint_grad: Option<Vec<f64>>,
    pub density: Vec<f64>,
}

/// `θ ↦ ρ_phys` for one problem and reparameterization.
#[derive(Debug, Clone, Copy)]
pub struct DesignMap<'a> {
    pub problem: &'a DesignProblem,
    pub reparam: &'a Reparam,
    pub order: ProjectionOrder,
}

struct MapPass {
    pass: crate::reparam::Pass,
    // bounded reparam output (filter input) for the bound-then-filter path
    bounded: Vec<f64>,
    density: Vec<f64>,
    filter_first: bool,
}

impl<'a> DesignMap<'a> {
    pub fn new(
        problem: &'a DesignProblem,
        reparam: &'a Reparam,
        order: ProjectionOrder,
    ) -> Result<Self> {
        if reparam.shape() != (problem.spec.nx, problem.spec.ny) {
            return Err(Error::param("reparameterization and problem meshes differ"));
        }
        Ok(DesignMap {
            problem,
            reparam,
            order,
        })
    }

    fn filter_first(&self) -> bool {
        matches!(self.reparam.bounding(), Bounding::ShiftedSigmoid { .. })
            && self.order == ProjectionOrder::FilterThenProject
    }

    fn run(&self, theta: &[f64]) -> Result<MapPass> {
        let pass = self.reparam.raw_forward(theta)?;
        let filter = &self.problem.filter;
        if self.filter_first() {
            let Bounding::ShiftedSigmoid { volume } = self.reparam.bounding() else {
                unreachable!()
            };
            let filtered = filter.apply(&pass.raw)?;
            let density = shifted_sigmoid_project(&filtered, volume)?.rho;
            Ok(MapPass {
                pass,
                bounded: Vec::new(),
                density,
                filter_first: true,
            })
        } else {
            let bounded = self.reparam.bounding().apply(&pass.raw)?;
            let density = filter.apply(&bounded)?;
            Ok(MapPass {
                pass,
                bounded,
                density,
                filter_first: false,
            })
        }
    }

    fn pullback(&self, theta: &[f64], mp: &MapPass, w: &[f64]) -> Result<Vec<f64>> {
        let filter = &self.problem.filter;
        let w_raw = if mp.filter_first {
            filter.vjp(&shifted_sigmoid_vjp(&mp.density, w))?
        } else {
            let wb = filter.vjp(w)?;
            self.reparam.bounding().vjp(&mp.pass.raw, &mp.bounded, &wb)
        };
        self.reparam.raw_vjp(theta, &mp.pass, &w_raw)
    }

    /// Physical densities at `theta`.
    pub fn density(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run(theta)?.density)
    }

    /// Objective and constraint values only.
    pub fn values(&self, theta: &[f64]) -> Result<(f64, f64)> {
        let density = self.density(theta)?;
        let objective = self.problem.objective(&density)?;
        let volume = crate::density::mean(&density);
        Ok((objective, volume / self.problem.volume_target() - 1.0))
    }

    pub fn evaluate(&self, theta: &[f64], with_constraint_grad: bool) -> Result<Evaluation> {
        let mp = self.run(theta)?;
        let eval = self
            .problem
            .model
            .evaluate(&mp.density, self.problem.spec.penalty)?;
        let objective_grad = self.pullback(theta, &mp, &eval.grad_wrt_density)?;
        let n = mp.density.len() as f64;
        let v0 = self.problem.volume_target();
        let volume = crate::density::mean(&mp.density);
        let constraint_grad = if with_constraint_grad {
            let w = vec![1.0 / (n * v0); mp.density.len()];
            Some(self.pullback(theta, &mp, &w)?)
        } else {
            None
        };
        Ok(Evaluation {
            objective: eval.value,
            volume,
            constraint: volume / v0 - 1.0,
            objective_grad,
            constraint_grad,
            density: mp.density,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Mma {
        #[serde(flatten)]
        config: MmaConfig,
        /// Box `[−bound, bound]` for network weights; direct densities use
        /// `[0, 1]`.
        #[serde(default = "default_bound")]
        bound: f64,
    },
    Adam {
        #[serde(flatten)]
        config: AdamConfig,
    },
}

fn default_bound() -> f64 {
    1.0
}

impl OptimizerConfig {
    pub fn mma(move_limit: f64, asyinit: f64, bound: f64) -> Self {
        OptimizerConfig::Mma {
            config: MmaConfig::new(move_limit, asyinit),
            bound,
        }
    }

    pub fn adam(learning_rate: f64, grad_clip: Option<f64>) -> Self {
        OptimizerConfig::Adam {
            config: AdamConfig::new(learning_rate, grad_clip),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Mma { .. } => "mma",
            OptimizerConfig::Adam { .. } => "adam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerConfig::Mma { config, bound } => {
                config.validate()?;
                if !(*bound > 0.0) {
                    return Err(Error::param("MMA weight bound must be positive"));
                }
                Ok(())
            }
            OptimizerConfig::Adam { config } => config.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    /// Optimizer steps; the loop evaluates `budget + 1` designs.
    pub budget: usize,
    /// Largest normalized volume violation still counted as feasible.
    pub feasibility_tol: f64,
    pub order: ProjectionOrder,
    /// Keep every k-th density field (0 keeps none).
    pub snapshot_every: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            budget: 200,
            feasibility_tol: 1e-3,
            order: ProjectionOrder::default(),
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub iteration: usize,
    pub objective: f64,
    pub volume: f64,
    pub constraint_violation: f64,
    pub grad_norm: f64,
    /// Angle to the previous gradient; `None` on the first record or when a
    /// gradient vanishes.
    pub grad_angle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestDesign {
    pub iteration: usize,
    pub objective: f64,
    pub density: Vec<f64>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub best_feasible: Option<BestDesign>,
    pub final_params: Vec<f64>,
    pub final_density: Vec<f64>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl Trajectory {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.best_feasible.as_ref().map(|b| b.objective)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,objective,volume,constraint_violation,grad_norm,grad_angle_rad\n",
        );
        for r in &self.records {
            let angle = r
                .grad_angle
                .map(|a| format!("{a:.17e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
                r.iteration, r.objective, r.volume, r.constraint_violation, r.grad_norm, angle
            ));
        }
        out
    }
}

/// Angle between two vectors, `None` when either vanishes.
pub fn gradient_angle(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Some(cos.clamp(-1.0, 1.0).acos())
}

/// Box for MMA: `[0, 1]` for the direct map, `[−b, b]` otherwise.
pub fn mma_bounds(reparam: &Reparam, bound: f64) -> (f64, f64) {
    if reparam.is_direct() && matches!(reparam.bounding(), Bounding::Clamp) {
        (0.0, 1.0)
    } else {
        (-bound, bound)
    }
}

/// Runs `settings.budget` optimizer steps from `theta0`.
pub fn run_optimization(
    map: &DesignMap,
    theta0: &[f64],
    optimizer: &OptimizerConfig,
    settings: &RunSettings,
) -> Result<Trajectory> {
    optimizer.validate()?;
    let n = theta0.len();
    let mut theta = theta0.to_vec();
    enum Opt {
        Mma(MmaState, MmaConfig),
        Adam(AdamState, AdamConfig),
    }
    let mut opt = match *optimizer {
        OptimizerConfig::Mma { config, bound } => {
            let (lo, hi) = mma_bounds(map.reparam, bound);
            theta.iter_mut().for_each(|t| *t = t.clamp(lo, hi));
            Opt::Mma(MmaState::uniform(n, lo, hi)?, config)
        }
        OptimizerConfig::Adam { config } => Opt::Adam(AdamState::new(n), config),
    };
    let need_cgrad = matches!(opt, Opt::Mma(..));

    let mut records = Vec::with_capacity(settings.budget + 1);
    let mut best: Option<BestDesign> = None;
    let mut snapshots = Vec::new();
    let mut prev_grad: Option<Vec<f64>> = None;
    let mut scale = 1.0;
    let mut last_density = Vec::new();
    for it in 0..=settings.budget {
        let ev = map
            .evaluate(&theta, need_cgrad)
            .map_err(|e| e.at_iteration(it))?;
        if !ev.objective.is_finite() {
            return Err(Error::NonFinite {
                layer: "objective".into(),
            }
            .at_iteration(it));
        }
        if it == 0 && ev.objective != 0.0 {
            scale = 1.0 / ev.objective.abs();
        }
        let violation = ev.constraint.max(0.0);
        let grad_norm = ev.objective_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let grad_angle = prev_grad
            .as_ref()
            .and_then(|p| gradient_angle(p, &ev.objective_grad));
        records.push(Record {
            iteration: it,
            objective: ev.objective,
            volume: ev.volume,
            constraint_violation: violation,
            grad_norm,
            grad_angle,
        });
        if violation <= settings.feasibility_tol
            && best.as_ref().is_none_or(|b| ev.objective < b.objective)
        {
            best = Some(BestDesign {
                iteration: it,
                objective: ev.objective,
                density: ev.density.clone(),
                params: theta.clone(),
            });
        }
        if settings.snapshot_every > 0 && it % settings.snapshot_every == 0 {
            snapshots.push((it, ev.density.clone()));
        }
        last_density = ev.density;
        if it == settings.budget {
            break;
        }
        match &mut opt {
            Opt::Mma(state, cfg) => {
                let df: Vec<f64> = ev.objective_grad.iter().map(|g| g * scale).collect();
                let dg = vec![ev.constraint_grad.expect("requested")];
                theta = mma_step(state, &theta, &df, &[ev.constraint], &dg, cfg)
                    .map_err(|e| e.at_iteration(it))?;
            }
            Opt::Adam(state, cfg) => adam_step(state, &mut theta, &ev.objective_grad, cfg),
        }
        prev_grad = Some(ev.objective_grad);
    }
    Ok(Trajectory {
        records,
        best_feasible: best,
        final_params: theta,
        final_density: last_density,
        snapshots,
    })
}
