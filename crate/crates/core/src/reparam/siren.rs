//! Sinusoidal coordinate network. The frequency scale is applied on the
//! first layer only; later layers use unit frequency with weights drawn on
//! the matching scale.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{check_finite, linear, linear_backward};
use super::{ArchitectureSpec, CoordinateGrid, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Siren {
    coords: Vec<f64>,
    width: usize,
    depth: usize,
    omega0: f64,
}

#[derive(Debug, Clone)]
pub struct Tape {
    // input to each sine layer, and its pre-activation (after ω0 scaling)
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    last: Vec<f64>,
}

impl Siren {
    pub fn new(spec: &ArchitectureSpec, grid: &CoordinateGrid) -> Result<Self> {
        if spec.width == 0 || spec.hidden_layers == 0 {
            return Err(Error::param(
                "SIREN needs at least one hidden layer of width >= 1",
            ));
        }
        if !(spec.omega0.is_finite() && spec.omega0 > 0.0) {
            return Err(Error::param(format!(
                "omega0 must be positive, got {}",
                spec.omega0
            )));
        }
        Ok(Siren {
            coords: grid.flat(),
            width: spec.width,
            depth: spec.hidden_layers,
            omega0: spec.omega0,
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
        let mut out = Vec::new();
        for l in 0..self.depth {
            out.push(Segment::new(
                format!("siren.hidden{l}.weight"),
                vec![self.width, self.fan_in(l)],
            ));
            out.push(Segment::new(
                format!("siren.hidden{l}.bias"),
                vec![self.width],
            ));
        }
        out.push(Segment::new("siren.output.weight", vec![1, self.width]));
        out.push(Segment::new("siren.output.bias", vec![1]));
        out
    }

    pub fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut theta = Vec::new();
        for l in 0..self.depth {
            let fin = self.fan_in(l) as f64;
            let bound = if l == 0 {
                1.0 / fin
            } else {
                (6.0 / fin).sqrt()
            };
            let bias_bound = 1.0 / fin.sqrt();
            theta.extend((0..self.width * self.fan_in(l)).map(|_| rng.random_range(-bound..bound)));
            theta.extend((0..self.width).map(|_| rng.random_range(-bias_bound..bias_bound)));
        }
        let fin = self.width as f64;
        let bound = (6.0 / fin).sqrt() / self.omega0;
        let bias_bound = 1.0 / fin.sqrt();
        theta.extend((0..self.width).map(|_| rng.random_range(-bound..bound)));
        theta.push(rng.random_range(-bias_bound..bias_bound));
        theta
    }

    pub fn forward(&self, theta: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let w = self.width;
        let mut offset = 0;
        let mut z = self.coords.clone();
        let mut inputs = Vec::with_capacity(self.depth);
        let mut pres = Vec::with_capacity(self.depth);
        for l in 0..self.depth {
            let fin = self.fan_in(l);
            let weight = &theta[offset..offset + w * fin];
            let bias = &theta[offset + w * fin..offset + w * fin + w];
            offset += w * fin + w;
            let mut pre = linear(&z, fin, weight, bias, w);
            if l == 0 {
                pre.iter_mut().for_each(|v| *v *= self.omega0);
            }
            let act: Vec<f64> = pre.iter().map(|v| v.sin()).collect();
            check_finite(&act, &format!("siren.hidden{l}"))?;
            inputs.push(z);
            pres.push(pre);
            z = act;
        }
        let out = linear(
            &z,
            w,
            &theta[offset..offset + w],
            &theta[offset + w..offset + w + 1],
            1,
        );
        Ok((
            out,
            Tape {
                inputs,
                pre: pres,
                last: z,
            },
        ))
    }

    pub fn backward(&self, theta: &[f64], tape: &Tape, dout: &[f64]) -> Vec<f64> {
        let w = self.width;
        let mut grad = vec![0.0; theta.len()];
        let mut starts = Vec::with_capacity(self.depth);
        let mut offset = 0;
        for l in 0..self.depth {
            starts.push(offset);
            offset += w * self.fan_in(l) + w;
        }
        let (gw, gb) = grad[offset..].split_at_mut(w);
        let mut dz = linear_backward(&tape.last, w, &theta[offset..offset + w], dout, 1, gw, gb);
        for l in (0..self.depth).rev() {
            let fin = self.fan_in(l);
            let scale = if l == 0 { self.omega0 } else { 1.0 };
            let dpre: Vec<f64> = dz
                .iter()
                .zip(&tape.pre[l])
                .map(|(d, p)| d * p.cos() * scale)
                .collect();
            let s = starts[l];
            let (gw, rest) = grad[s..].split_at_mut(w * fin);
            dz = linear_backward(
                &tape.inputs[l],
                fin,
                &theta[s..s + w * fin],
                &dpre,
                w,
                gw,
                &mut rest[..w],
            );
        }
        grad
    }
}
