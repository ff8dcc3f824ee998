//! Coordinate MLP: `[linear → batch norm → Leaky-ReLU] × L → linear`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    batch_normalize, batch_normalize_backward, check_finite, linear, linear_backward, BatchStats,
};
use super::{ArchitectureSpec, CoordinateGrid, Segment};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct Mlp {
    coords: Vec<f64>,
    width: usize,
    depth: usize,
    batch_norm: bool,
}

#[derive(Debug, Clone)]
struct HiddenTape {
    input: Vec<f64>,
    stats: Option<BatchStatsOwned>,
    pre_activation: Vec<f64>,
}

// BatchStats is not Clone/Debug; keep an owned mirror.
#[derive(Debug, Clone)]
struct BatchStatsOwned {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

impl From<BatchStats> for BatchStatsOwned {
    fn from(s: BatchStats) -> Self {
        BatchStatsOwned {
            normalized: s.normalized,
            inv_std: s.inv_std,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tape {
    hidden: Vec<HiddenTape>,
    last: Vec<f64>,
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

impl Mlp {
    pub fn new(spec: &ArchitectureSpec, grid: &CoordinateGrid) -> Result<Self> {
        if spec.width == 0 || spec.hidden_layers == 0 {
            return Err(Error::param(
                "MLP needs at least one hidden layer of width >= 1",
            ));
        }
        Ok(Mlp {
            coords: grid.flat(),
            width: spec.width,
            depth: spec.hidden_layers,
            batch_norm: spec.batch_norm,
        })
    }

    fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            2
        } else {
            self.width
        }
    }

    pub fn layout(&self) -> Vec<Segment> {
        let w = self.width;
        let mut out = Vec::new();
        for l in 0..self.depth {
            out.push(Segment::new(
                format!("mlp.hidden{l}.weight"),
                vec![w, self.fan_in(l)],
            ));
            out.push(Segment::new(format!("mlp.hidden{l}.bias"), vec![w]));
            if self.batch_norm {
                out.push(Segment::new(format!("mlp.hidden{l}.bn_scale"), vec![w]));
                out.push(Segment::new(format!("mlp.hidden{l}.bn_shift"), vec![w]));
            }
        }
        out.push(Segment::new("mlp.output.weight", vec![1, w]));
        out.push(Segment::new("mlp.output.bias", vec![1]));
        out
    }

    /// Uniform He initialization for the Leaky-ReLU layers, unit batch-norm
    /// scale, zero shifts and biases.
    pub fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let mut theta = Vec::new();
        for l in 0..self.depth {
            let fin = self.fan_in(l);
            let bound = gain * (3.0 / fin as f64).sqrt();
            theta.extend((0..self.width * fin).map(|_| rng.random_range(-bound..bound)));
            theta.extend(std::iter::repeat_n(0.0, self.width));
            if self.batch_norm {
                theta.extend(std::iter::repeat_n(1.0, self.width));
                theta.extend(std::iter::repeat_n(0.0, self.width));
            }
        }
        let bound = (3.0 / self.width as f64).sqrt();
        theta.extend((0..self.width).map(|_| rng.random_range(-bound..bound)));
        theta.push(0.0);
        theta
    }

    pub fn forward(&self, theta: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let w = self.width;
        let mut offset = 0;
        let mut take = |n: usize| {
            let s = &theta[offset..offset + n];
            offset += n;
            s
        };
        let mut z = self.coords.clone();
        let mut hidden = Vec::with_capacity(self.depth);
        for l in 0..self.depth {
            let fin = self.fan_in(l);
            let weight = take(w * fin);
            let bias = take(w);
            let mut pre = linear(&z, fin, weight, bias, w);
            let stats = if self.batch_norm {
                let scale = take(w);
                let shift = take(w);
                let stats = batch_normalize(&pre, w, BATCH_NORM_EPS);
                for (p, n) in pre
                    .chunks_exact_mut(w)
                    .zip(stats.normalized.chunks_exact(w))
                {
                    for j in 0..w {
                        p[j] = scale[j] * n[j] + shift[j];
                    }
                }
                Some(BatchStatsOwned::from(stats))
            } else {
                None
            };
            let act: Vec<f64> = pre.iter().map(|&v| leaky(v)).collect();
            check_finite(&act, &format!("mlp.hidden{l}"))?;
            hidden.push(HiddenTape {
                input: z,
                stats,
                pre_activation: pre,
            });
            z = act;
        }
        let weight = take(w);
        let bias = take(1);
        let out = linear(&z, w, weight, bias, 1);
        Ok((out, Tape { hidden, last: z }))
    }

    pub fn backward(&self, theta: &[f64], tape: &Tape, dout: &[f64]) -> Vec<f64> {
        let w = self.width;
        let mut grad = vec![0.0; theta.len()];
        // segment offsets, recomputed in forward order
        let mut offsets = Vec::with_capacity(self.depth);
        let mut offset = 0;
        for l in 0..self.depth {
            let fin = self.fan_in(l);
            let wo = offset;
            let bo = wo + w * fin;
            let so = bo + w;
            offset = so + if self.batch_norm { 2 * w } else { 0 };
            offsets.push((wo, bo, so, fin));
        }
        let (ow, ob) = (offset, offset + w);
        let (gw, gb) = grad[ow..].split_at_mut(w);
        let mut dz = linear_backward(&tape.last, w, &theta[ow..ob], dout, 1, gw, &mut gb[..1]);

        for l in (0..self.depth).rev() {
            let (wo, bo, so, fin) = offsets[l];
            let h = &tape.hidden[l];
            let mut dpre: Vec<f64> = dz
                .iter()
                .zip(&h.pre_activation)
                .map(|(d, p)| if *p > 0.0 { *d } else { LEAKY_SLOPE * d })
                .collect();
            if let Some(stats) = &h.stats {
                let scale = &theta[so..so + w];
                let mut dnorm = vec![0.0; dpre.len()];
                for ((dp, n), dn) in dpre
                    .chunks_exact(w)
                    .zip(stats.normalized.chunks_exact(w))
                    .zip(dnorm.chunks_exact_mut(w))
                {
                    for j in 0..w {
                        grad[so + j] += dp[j] * n[j];
                        grad[so + w + j] += dp[j];
                        dn[j] = dp[j] * scale[j];
                    }
                }
                let view = BatchStats {
                    normalized: stats.normalized.clone(),
                    inv_std: stats.inv_std.clone(),
                };
                dpre = batch_normalize_backward(&view, &dnorm, w);
            }
            let (gw, rest) = grad[wo..].split_at_mut(w * fin);
            dz = linear_backward(&h.input, fin, &theta[wo..bo], &dpre, w, gw, &mut rest[..w]);
        }
        grad
    }
}
