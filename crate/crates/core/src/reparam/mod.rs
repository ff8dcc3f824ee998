//! Reparameterizations `ρ̂ = h(θ)`: the identity baseline and three neural
//! mappings (MLP, SIREN, CNN decoder), each with a reverse-mode
//! vector–Jacobian product.

mod cnn;
mod layers;
mod mlp;
mod params;
mod siren;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{shifted_sigmoid_project, shifted_sigmoid_vjp, sigmoid_project, sigmoid_vjp};
use crate::error::{Error, Result};

pub use cnn::CnnConfig;
pub use params::{ParamVector, Segment};
pub use train::{fit_to_density, pretrain_uniform, FitOptions, FitReport, PretrainOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    Direct,
    Mlp,
    Siren,
    Cnn,
}

/// How unbounded network outputs become densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputBounding {
    Sigmoid,
    ShiftedSigmoid,
}

/// Architecture description, serializable in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    pub hidden_layers: usize,
    pub width: usize,
    pub omega0: f64,
    pub batch_norm: bool,
    pub cnn: CnnConfig,
    pub output_bounding: OutputBounding,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec {
            kind: ArchitectureKind::Direct,
            hidden_layers: 5,
            width: 20,
            omega0: 30.0,
            batch_norm: true,
            cnn: CnnConfig::default(),
            output_bounding: OutputBounding::Sigmoid,
        }
    }
}

impl ArchitectureSpec {
    pub fn direct() -> Self {
        ArchitectureSpec::default()
    }

    /// Five hidden layers of `width` neurons with batch norm and Leaky-ReLU.
    pub fn mlp(width: usize) -> Self {
        ArchitectureSpec {
            kind: ArchitectureKind::Mlp,
            width,
            ..Default::default()
        }
    }

    /// Five sine layers of `width` neurons.
    pub fn siren(width: usize, omega0: f64) -> Self {
        ArchitectureSpec {
            kind: ArchitectureKind::Siren,
            width,
            omega0,
            batch_norm: false,
            ..Default::default()
        }
    }

    pub fn cnn(config: CnnConfig) -> Self {
        ArchitectureSpec {
            kind: ArchitectureKind::Cnn,
            hidden_layers: config.filters.len(),
            batch_norm: false,
            cnn: config,
            ..Default::default()
        }
    }

    pub fn with_bounding(mut self, bounding: OutputBounding) -> Self {
        self.output_bounding = bounding;
        self
    }

    pub fn label(&self) -> String {
        match self.kind {
            ArchitectureKind::Direct => "baseline".into(),
            ArchitectureKind::Mlp => format!("mlp-w{}", self.width),
            ArchitectureKind::Siren => format!("siren-w{}-o{}", self.width, self.omega0),
            ArchitectureKind::Cnn => format!(
                "cnn-n{}-c{}-f{}",
                self.cnn.input_size,
                self.cnn.dense_channels,
                self.cnn.filters.first().copied().unwrap_or(0)
            ),
        }
    }
}

/// Element-centre coordinates normalized to `[−1, 1]²`, row-major from the
/// top-left element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateGrid {
    pub nx: usize,
    pub ny: usize,
    pub points: Vec<[f64; 2]>,
}

impl CoordinateGrid {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut points = Vec::with_capacity(nx * ny);
        for ey in 0..ny {
            for ex in 0..nx {
                let x = 2.0 * (ex as f64 + 0.5) / nx as f64 - 1.0;
                let y = 1.0 - 2.0 * (ey as f64 + 0.5) / ny as f64;
                points.push([x, y]);
            }
        }
        CoordinateGrid { nx, ny, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| *p).collect()
    }
}

/// Map from raw outputs to densities, resolved against a volume target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounding {
    /// Identity clamped to `[0, 1]` (the baseline).
    Clamp,
    Sigmoid,
    ShiftedSigmoid {
        volume: f64,
    },
}

impl Bounding {
    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        match *self {
            Bounding::Clamp => Ok(raw.iter().map(|x| x.clamp(0.0, 1.0)).collect()),
            Bounding::Sigmoid => Ok(sigmoid_project(raw)),
            Bounding::ShiftedSigmoid { volume } => Ok(shifted_sigmoid_project(raw, volume)?.rho),
        }
    }

    /// VJP given the raw input, the bounded output and the cotangent `w`.
    pub fn vjp(&self, raw: &[f64], rho: &[f64], w: &[f64]) -> Vec<f64> {
        match self {
            Bounding::Clamp => raw
                .iter()
                .zip(w)
                .map(|(x, w)| if (0.0..=1.0).contains(x) { *w } else { 0.0 })
                .collect(),
            Bounding::Sigmoid => sigmoid_vjp(rho, w),
            Bounding::ShiftedSigmoid { .. } => shifted_sigmoid_vjp(rho, w),
        }
    }
}

#[derive(Debug, Clone)]
enum Network {
    Direct { n: usize },
    Mlp(mlp::Mlp),
    Siren(siren::Siren),
    Cnn(cnn::Cnn),
}

/// Intermediate values of one forward evaluation, consumed by the VJP.
#[derive(Debug, Clone)]
pub struct Pass {
    pub raw: Vec<f64>,
    tape: Tape,
}

#[derive(Debug, Clone)]
enum Tape {
    Direct,
    Mlp(mlp::Tape),
    Siren(siren::Tape),
    Cnn(cnn::Tape),
}

/// Forward output: the unbounded field and its bounded densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub raw: Vec<f64>,
    pub density: Vec<f64>,
}

/// A reparameterization bound to a mesh.
#[derive(Debug, Clone)]
pub struct Reparam {
    spec: ArchitectureSpec,
    nx: usize,
    ny: usize,
    network: Network,
    bounding: Bounding,
    layout: Vec<Segment>,
}

impl Reparam {
    /// `volume` is used only by shifted-sigmoid bounding.
    pub fn new(spec: &ArchitectureSpec, nx: usize, ny: usize, volume: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("mesh must be at least 1x1"));
        }
        let grid = CoordinateGrid::new(nx, ny);
        let network = match spec.kind {
            ArchitectureKind::Direct => Network::Direct { n: nx * ny },
            ArchitectureKind::Mlp => Network::Mlp(mlp::Mlp::new(spec, &grid)?),
            ArchitectureKind::Siren => Network::Siren(siren::Siren::new(spec, &grid)?),
            ArchitectureKind::Cnn => Network::Cnn(cnn::Cnn::new(&spec.cnn, nx, ny)?),
        };
        // the direct map keeps its values as densities unless a volume
        // projection is requested
        let bounding = match (spec.kind, spec.output_bounding) {
            (ArchitectureKind::Direct, OutputBounding::Sigmoid) => Bounding::Clamp,
            (_, OutputBounding::Sigmoid) => Bounding::Sigmoid,
            (_, OutputBounding::ShiftedSigmoid) => {
                if !(volume > 0.0 && volume < 1.0) {
                    return Err(Error::param(format!(
                        "shifted sigmoid needs a volume fraction in (0, 1), got {volume}"
                    )));
                }
                Bounding::ShiftedSigmoid { volume }
            }
        };
        let layout = match &network {
            Network::Direct { .. } => vec![Segment::new("density", vec![ny, nx])],
            Network::Mlp(m) => m.layout(),
            Network::Siren(s) => s.layout(),
            Network::Cnn(c) => c.layout(),
        };
        Ok(Reparam {
            spec: spec.clone(),
            nx,
            ny,
            network,
            bounding,
            layout,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn bounding(&self) -> Bounding {
        self.bounding
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.network, Network::Direct { .. })
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.iter().map(Segment::size).sum()
    }

    /// Index of the bias that shifts every raw output equally, if any.
    pub fn output_bias_index(&self) -> Option<usize> {
        let name = match &self.network {
            Network::Direct { .. } => return None,
            Network::Mlp(_) => "mlp.output.bias".to_string(),
            Network::Siren(_) => "siren.output.bias".to_string(),
            Network::Cnn(_) => format!("cnn.conv{}.bias", self.spec.cnn.filters.len() - 1),
        };
        let mut offset = 0;
        for seg in &self.layout {
            if seg.name == name {
                return Some(offset);
            }
            offset += seg.size();
        }
        None
    }

    /// Seeded initial parameters.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = match &self.network {
            Network::Direct { n } => vec![0.5; *n],
            Network::Mlp(m) => m.init(&mut rng),
            Network::Siren(s) => s.init(&mut rng),
            Network::Cnn(c) => c.init(&mut rng),
        };
        ParamVector::new(values, self.layout.clone())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::param(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                theta.len()
            )));
        }
        Ok(())
    }

    /// Unbounded outputs plus the tape for [`Reparam::raw_vjp`].
    pub fn raw_forward(&self, theta: &[f64]) -> Result<Pass> {
        self.check_theta(theta)?;
        let (raw, tape) = match &self.network {
            Network::Direct { .. } => (theta.to_vec(), Tape::Direct),
            Network::Mlp(m) => {
                let (raw, t) = m.forward(theta)?;
                (raw, Tape::Mlp(t))
            }
            Network::Siren(s) => {
                let (raw, t) = s.forward(theta)?;
                (raw, Tape::Siren(t))
            }
            Network::Cnn(c) => {
                let (raw, t) = c.forward(theta)?;
                (raw, Tape::Cnn(t))
            }
        };
        layers::check_finite(&raw, "output")?;
        Ok(Pass { raw, tape })
    }

    /// `wᵀ ∂raw/∂θ`.
    pub fn raw_vjp(&self, theta: &[f64], pass: &Pass, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != pass.raw.len() {
            return Err(Error::param("cotangent length differs from output length"));
        }
        Ok(match (&self.network, &pass.tape) {
            (Network::Direct { .. }, Tape::Direct) => w.to_vec(),
            (Network::Mlp(m), Tape::Mlp(t)) => m.backward(theta, t, w),
            (Network::Siren(s), Tape::Siren(t)) => s.backward(theta, t, w),
            (Network::Cnn(c), Tape::Cnn(t)) => c.backward(theta, t, w),
            _ => return Err(Error::param("tape does not belong to this network")),
        })
    }

    /// Raw and bounded outputs.
    pub fn forward(&self, theta: &[f64]) -> Result<Forward> {
        let pass = self.raw_forward(theta)?;
        let density = self.bounding.apply(&pass.raw)?;
        Ok(Forward {
            raw: pass.raw,
            density,
        })
    }

    pub fn density(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(theta)?.density)
    }

    /// `wᵀ ∂ρ̂/∂θ` for the bounded output.
    pub fn vjp(&self, theta: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let pass = self.raw_forward(theta)?;
        let rho = self.bounding.apply(&pass.raw)?;
        let w_raw = self.bounding.vjp(&pass.raw, &rho, w);
        self.raw_vjp(theta, &pass, &w_raw)
    }
}

/// Trainable-parameter total of `spec` on an `nx × ny` mesh.
pub fn param_count(spec: &ArchitectureSpec, nx: usize, ny: usize) -> Result<usize> {
    Ok(Reparam::new(spec, nx, ny, 0.5)?.param_count())
}
