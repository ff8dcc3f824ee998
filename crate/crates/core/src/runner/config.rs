//! JSON run configurations and the named presets.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{ExpressivityOptions, LandscapeOptions, MetricKind};
use crate::error::{Error, Result};
use crate::optim::{DesignProblem, OptimizerConfig, ProjectionOrder, TwoBarParam};
use crate::problems::{default_volume, make_problem, ProblemSpec, CATALOG, DEFAULT_PENALTY};
use crate::reparam::{ArchitectureKind, ArchitectureSpec, CnnConfig, OutputBounding};

fn default_resolution() -> [usize; 2] {
    [64, 32]
}

fn default_penalty() -> f64 {
    DEFAULT_PENALTY
}

fn default_budget() -> usize {
    200
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 2],
    /// Volume fraction; the catalog default when absent.
    #[serde(default)]
    pub volume: Option<f64>,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    /// Filter radius in element widths; scaled from the 64×32 default when
    /// absent.
    #[serde(default)]
    pub filter_radius: Option<f64>,
}

impl ProblemConfig {
    pub fn new(name: &str) -> Self {
        ProblemConfig {
            name: name.into(),
            resolution: default_resolution(),
            volume: None,
            penalty: DEFAULT_PENALTY,
            filter_radius: None,
        }
    }

    pub fn volume(&self) -> f64 {
        self.volume.unwrap_or_else(|| default_volume(&self.name))
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        let [nx, ny] = self.resolution;
        let mut spec =
            make_problem(&self.name, (nx, ny), self.volume())?.with_penalty(self.penalty);
        if let Some(r) = self.filter_radius {
            spec.filter_radius = r;
        }
        Ok(spec)
    }

    pub fn build(&self) -> Result<DesignProblem> {
        DesignProblem::new(self.spec()?)
    }

    /// Case label used when aggregating runs.
    pub fn label(&self) -> String {
        let [nx, ny] = self.resolution;
        format!(
            "{}-{nx}x{ny}-p{}-v{}",
            self.name,
            self.penalty,
            self.volume()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoBarConfig {
    pub param: TwoBarParam,
    /// Areas for the direct form, network weights otherwise.
    pub start: Vec<f64>,
}

impl Default for TwoBarConfig {
    fn default() -> Self {
        TwoBarConfig {
            param: TwoBarParam::Direct,
            start: vec![1.0, 1.0],
        }
    }
}

/// Everything needed to repeat one optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub architecture: ArchitectureSpec,
    pub optimizer: OptimizerConfig,
    /// Optimizer steps.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    /// Start networks from a fit to the uniform volume fraction.
    #[serde(default = "yes")]
    pub pretrain: bool,
    #[serde(default)]
    pub order: ProjectionOrder,
    #[serde(default)]
    pub snapshot_every: usize,
    /// Only read when the problem is `twobar`.
    #[serde(default)]
    pub twobar: Option<TwoBarConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(
        problem: ProblemConfig,
        architecture: ArchitectureSpec,
        optimizer: OptimizerConfig,
    ) -> Self {
        RunConfig {
            problem,
            architecture,
            optimizer,
            budget: default_budget(),
            seed: 0,
            pretrain: true,
            order: ProjectionOrder::default(),
            snapshot_every: 0,
            twobar: None,
            out: None,
        }
    }

    pub fn is_twobar(&self) -> bool {
        self.problem.name == "twobar"
    }

    pub fn validate(&self) -> Result<()> {
        if !CATALOG.contains(&self.problem.name.as_str()) {
            return Err(Error::param(format!(
                "unknown problem `{}`; available: {}",
                self.problem.name,
                CATALOG.join(", ")
            )));
        }
        self.optimizer.validate()?;
        if self.is_twobar() && !matches!(self.optimizer, OptimizerConfig::Mma { .. }) {
            return Err(Error::param("the two-bar truss is optimized with MMA only"));
        }
        Ok(())
    }

    /// Solver label used when aggregating runs.
    pub fn solver_label(&self) -> String {
        format!("{}+{}", self.architecture.label(), self.optimizer.name())
    }
}

/// A reference density: the uniform field at the volume target, or a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Reference {
    Uniform,
    File(PathBuf),
}

impl From<String> for Reference {
    fn from(s: String) -> Self {
        if s == "uniform" {
            Reference::Uniform
        } else {
            Reference::File(s.into())
        }
    }
}

impl From<Reference> for String {
    fn from(r: Reference) -> Self {
        match r {
            Reference::Uniform => "uniform".into(),
            Reference::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub problem: ProblemConfig,
    pub architecture: ArchitectureSpec,
    pub reference_1: Reference,
    pub reference_2: Reference,
    #[serde(default)]
    pub options: LandscapeOptions,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Architectures sized to multiples of the element count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kinds: Vec<ArchitectureKind>,
    pub ratios: Vec<f64>,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

fn default_omega0() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressivityConfig {
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 2],
    /// Target designs (CSV or PGM).
    pub targets: Vec<PathBuf>,
    #[serde(default)]
    pub architectures: Vec<ArchitectureSpec>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub options: ExpressivityOptions,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_taus() -> Vec<f64> {
    (0..=100).map(|k| 1.0 + k as f64 * 0.02).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    /// Directory searched (recursively) for optimize manifests.
    pub runs: PathBuf,
    pub metric: MetricKind,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub problem: ProblemConfig,
    pub density: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Grid,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRange {
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub log: bool,
}

fn default_search_budget() -> usize {
    60
}

fn one() -> usize {
    1
}

/// Hyperparameter search over `m`, `a`, `b`, `lr`, `clip` and `omega0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub base: RunConfig,
    #[serde(default)]
    pub mode: SearchMode,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub ranges: BTreeMap<String, SearchRange>,
    /// Random draws; ignored by grid mode.
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "default_search_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

pub const SEARCH_KEYS: [&str; 6] = ["m", "a", "b", "lr", "clip", "omega0"];

/// Writes one hyperparameter into a run config.
pub fn set_hyperparameter(cfg: &mut RunConfig, key: &str, value: f64) -> Result<()> {
    match (key, &mut cfg.optimizer) {
        ("m", OptimizerConfig::Mma { config, .. }) => config.move_limit = value,
        ("a", OptimizerConfig::Mma { config, .. }) => config.asyinit = value,
        ("b", OptimizerConfig::Mma { bound, .. }) => *bound = value,
        ("lr", OptimizerConfig::Adam { config }) => config.learning_rate = value,
        ("clip", OptimizerConfig::Adam { config }) => config.grad_clip = Some(value),
        ("omega0", _) => {
            if let Some(TwoBarConfig {
                param: TwoBarParam::Siren { omega0, .. },
                ..
            }) = &mut cfg.twobar
            {
                *omega0 = value;
            } else {
                cfg.architecture.omega0 = value;
            }
        }
        _ => {
            return Err(Error::param(format!(
                "hyperparameter `{key}` does not apply to a {} run (keys: {})",
                cfg.optimizer.name(),
                SEARCH_KEYS.join(", ")
            )))
        }
    }
    Ok(())
}

/// Names accepted by `--preset`.
pub fn preset_names() -> Vec<String> {
    let mut out: Vec<String> = ["twobar-baseline", "twobar-siren", "twobar-fast"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for (problem, p, _) in HYPER_TABLE {
        out.push(format!("{problem}-p{p}-baseline-mma"));
        for arch in ["mlp", "siren", "cnn"] {
            for opt in ["mma", "adam"] {
                out.push(format!("{problem}-p{p}-{arch}-{opt}"));
            }
        }
    }
    out
}

struct Tuned {
    baseline: (f64, f64),
    mlp_mma: (f64, f64, f64),
    siren_mma: (f64, f64, f64, f64),
    cnn_mma: (f64, f64, f64),
    mlp_adam: (f64, f64),
    siren_adam: (f64, f64, f64),
    cnn_adam: (f64, f64),
}

/// Tuned values for the 64×32 landscape cases at 60% material.
const HYPER_TABLE: [(&str, u32, Tuned); 4] = [
    (
        "tensile",
        1,
        Tuned {
            baseline: (0.03, 0.5),
            mlp_mma: (0.03, 0.4, 11.0),
            siren_mma: (2e-4, 0.1, 5.0, 25.0),
            cnn_mma: (0.056, 0.3, 11.0),
            mlp_adam: (0.02, 1e-4),
            siren_adam: (0.01, 0.01, 5.0),
            cnn_adam: (0.03, 0.01),
        },
    ),
    (
        "michell",
        1,
        Tuned {
            baseline: (0.056, 0.3),
            mlp_mma: (0.002, 0.4, 8.0),
            siren_mma: (0.001, 0.1, 2.0, 10.0),
            cnn_mma: (0.0056, 0.2, 5.0),
            mlp_adam: (0.056, 0.1),
            siren_adam: (0.0056, 0.1, 15.0),
            cnn_adam: (0.056, 1e-4),
        },
    ),
    (
        "tensile",
        3,
        Tuned {
            baseline: (0.1, 0.2),
            mlp_mma: (0.003, 0.4, 5.0),
            siren_mma: (0.002, 0.2, 2.0, 5.0),
            cnn_mma: (0.0056, 0.5, 5.0),
            mlp_adam: (0.02, 0.1),
            siren_adam: (0.0056, 0.1, 15.0),
            cnn_adam: (0.03, 0.01),
        },
    ),
    (
        "michell",
        3,
        Tuned {
            baseline: (0.1, 0.2),
            mlp_mma: (0.003, 0.2, 2.0),
            siren_mma: (0.002, 0.2, 2.0, 10.0),
            cnn_mma: (0.003, 0.1, 2.0),
            mlp_adam: (0.03, 1e-4),
            siren_adam: (0.01, 1e-4, 15.0),
            cnn_adam: (0.03, 0.01),
        },
    ),
];

pub const MLP_WIDTH: usize = 20;
pub const SIREN_WIDTH: usize = 22;
/// Start weight for the ω0 = 88 two-bar net; `(θ1, 0, 0)` gives areas (1, 1).
pub const TWOBAR_SIREN_THETA1: f64 = 2.93;
/// Start weight for the ω0 = 40 two-bar net.
pub const TWOBAR_FAST_THETA1: f64 = -10.215;

fn twobar_preset(param: TwoBarParam, start: Vec<f64>, m: f64, a: f64, budget: usize) -> RunConfig {
    let mut cfg = RunConfig::new(
        ProblemConfig::new("twobar"),
        ArchitectureSpec::direct(),
        OptimizerConfig::mma(m, a, 1.0),
    );
    if let TwoBarParam::Siren { omega0, .. } = param {
        cfg.architecture = ArchitectureSpec::siren(1, omega0);
    }
    cfg.budget = budget;
    cfg.twobar = Some(TwoBarConfig { param, start });
    cfg
}

/// A named configuration. Networks use sigmoid bounding under MMA and the
/// shifted sigmoid under Adam.
pub fn preset(name: &str) -> Result<RunConfig> {
    match name {
        "twobar-baseline" => {
            return Ok(twobar_preset(
                TwoBarParam::Direct,
                vec![1.0, 1.0],
                2.0,
                0.1,
                50,
            ))
        }
        "twobar-siren" => {
            let p = TwoBarParam::Siren {
                omega0: 88.0,
                z1: 0.5,
                bound: 3.0,
            };
            return Ok(twobar_preset(
                p,
                vec![TWOBAR_SIREN_THETA1, 0.0, 0.0],
                0.31,
                0.1,
                50,
            ));
        }
        "twobar-fast" => {
            let p = TwoBarParam::Siren {
                omega0: 40.0,
                z1: 0.5,
                bound: 11.0,
            };
            return Ok(twobar_preset(
                p,
                vec![TWOBAR_FAST_THETA1, 0.0, 0.0],
                0.4,
                0.3,
                5,
            ));
        }
        _ => {}
    }
    let unknown = || {
        Error::param(format!(
            "unknown preset `{name}`; available: {}",
            preset_names().join(", ")
        ))
    };
    let parts: Vec<&str> = name.split('-').collect();
    let [problem, p, arch, opt] = parts[..] else {
        return Err(unknown());
    };
    let (_, penalty, t) = HYPER_TABLE
        .iter()
        .find(|(n, q, _)| *n == problem && format!("p{q}") == p)
        .ok_or_else(unknown)?;
    let mut problem_cfg = ProblemConfig::new(problem);
    problem_cfg.volume = Some(0.6);
    problem_cfg.penalty = *penalty as f64;
    let (architecture, optimizer) = match (arch, opt) {
        ("baseline", "mma") => (
            ArchitectureSpec::direct(),
            OptimizerConfig::mma(t.baseline.0, t.baseline.1, 1.0),
        ),
        ("mlp", "mma") => (
            ArchitectureSpec::mlp(MLP_WIDTH),
            OptimizerConfig::mma(t.mlp_mma.0, t.mlp_mma.1, t.mlp_mma.2),
        ),
        ("siren", "mma") => (
            ArchitectureSpec::siren(SIREN_WIDTH, t.siren_mma.3),
            OptimizerConfig::mma(t.siren_mma.0, t.siren_mma.1, t.siren_mma.2),
        ),
        ("cnn", "mma") => (
            ArchitectureSpec::cnn(CnnConfig::default()),
            OptimizerConfig::mma(t.cnn_mma.0, t.cnn_mma.1, t.cnn_mma.2),
        ),
        ("mlp", "adam") => (
            ArchitectureSpec::mlp(MLP_WIDTH).with_bounding(OutputBounding::ShiftedSigmoid),
            OptimizerConfig::adam(t.mlp_adam.0, Some(t.mlp_adam.1)),
        ),
        ("siren", "adam") => (
            ArchitectureSpec::siren(SIREN_WIDTH, t.siren_adam.2)
                .with_bounding(OutputBounding::ShiftedSigmoid),
            OptimizerConfig::adam(t.siren_adam.0, Some(t.siren_adam.1)),
        ),
        ("cnn", "adam") => (
            ArchitectureSpec::cnn(CnnConfig::default())
                .with_bounding(OutputBounding::ShiftedSigmoid),
            OptimizerConfig::adam(t.cnn_adam.0, Some(t.cnn_adam.1)),
        ),
        _ => return Err(unknown()),
    };
    Ok(RunConfig::new(problem_cfg, architecture, optimizer))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_resolves() {
        let names = preset_names();
        assert_eq!(names.len(), 3 + 4 * 7);
        for n in names {
            let cfg = preset(&n).unwrap();
            cfg.validate().unwrap();
        }
        assert!(preset("michell-p2-mlp-adam").is_err());
        assert!(preset("nope").is_err());
    }

    #[test]
    fn preset_values() {
        let cfg = preset("michell-p3-cnn-mma").unwrap();
        assert_eq!(cfg.optimizer, OptimizerConfig::mma(0.003, 0.1, 2.0));
        assert_eq!(cfg.problem.volume(), 0.6);
        assert_eq!(cfg.problem.penalty, 3.0);
        let cfg = preset("tensile-p1-siren-adam").unwrap();
        assert_eq!(cfg.architecture.omega0, 5.0);
        assert_eq!(
            cfg.architecture.output_bounding,
            OutputBounding::ShiftedSigmoid
        );
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = preset("twobar-siren").unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"problem": {"name": "mbb"}, "optimizer": {"kind": "mma", "move_limit": 0.2, "asyinit": 0.5}}"#,
        )
        .unwrap();
        assert_eq!(cfg.problem.resolution, [64, 32]);
        assert_eq!(cfg.budget, 200);
        assert!(cfg.pretrain);
        assert_eq!(cfg.architecture, ArchitectureSpec::direct());
    }

    #[test]
    fn hyperparameters_apply_to_matching_optimizer() {
        let mut cfg = preset("michell-p3-mlp-adam").unwrap();
        set_hyperparameter(&mut cfg, "lr", 0.5).unwrap();
        set_hyperparameter(&mut cfg, "omega0", 7.0).unwrap();
        assert!(set_hyperparameter(&mut cfg, "m", 0.1).is_err());
        assert_eq!(cfg.architecture.omega0, 7.0);
    }

    #[test]
    fn references_parse() {
        let r: Reference = serde_json::from_str("\"uniform\"").unwrap();
        assert_eq!(r, Reference::Uniform);
        let r: Reference = serde_json::from_str("\"a/b.csv\"").unwrap();
        assert_eq!(r, Reference::File("a/b.csv".into()));
    }
}
