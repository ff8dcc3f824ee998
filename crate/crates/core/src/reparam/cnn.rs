//! Convolutional decoder: a trainable latent vector passed through a dense
//! layer, reshaped to a coarse image, then refined by blocks of
//! `tanh → bilinear upsample → normalize → 3×3 conv → per-pixel offset`.
//! Images are stored `[channel][row][col]` with row 0 at the top.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::check_finite;
use super::Segment;
use crate::error::{Error, Result};

pub const NORMALIZE_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    /// Length of the trainable latent input.
    pub input_size: usize,
    /// Channels of the coarse image produced by the dense layer.
    pub dense_channels: usize,
    /// Output channels of each convolution; the last must be 1.
    pub filters: Vec<usize>,
    /// Upsampling factor applied in each block.
    pub upsample: Vec<usize>,
    /// Offsets enter the image multiplied by this factor.
    pub offset_scale: f64,
    /// Standard deviation of convolution weights, relative to `1/√fan_in`.
    pub init_scale: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            input_size: 1,
            dense_channels: 1,
            filters: vec![2, 1],
            upsample: vec![4, 8],
            offset_scale: 10.0,
            init_scale: 1.0,
        }
    }
}

impl CnnConfig {
    /// Two-block decoder with `filters` channels in the first block.
    pub fn new(input_size: usize, dense_channels: usize, filters: usize) -> Self {
        CnnConfig {
            input_size,
            dense_channels,
            filters: vec![filters, 1],
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    i0: usize,
    i1: usize,
    t: f64,
}

/// Half-pixel bilinear sample positions with edge clamping.
fn axis_table(input: usize, factor: usize) -> Vec<Axis> {
    (0..input * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            Axis {
                i0,
                i1,
                t: src - i0 as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Block {
    cin: usize,
    cout: usize,
    // resolution after upsampling
    h: usize,
    w: usize,
    in_h: usize,
    in_w: usize,
    rows: Vec<Axis>,
    cols: Vec<Axis>,
}

impl Block {
    fn upsample(&self, x: &[f64]) -> Vec<f64> {
        let (h, w, ih, iw) = (self.h, self.w, self.in_h, self.in_w);
        let mut out = vec![0.0; self.cin * h * w];
        for c in 0..self.cin {
            let src = &x[c * ih * iw..(c + 1) * ih * iw];
            let dst = &mut out[c * h * w..(c + 1) * h * w];
            for (oy, ry) in self.rows.iter().enumerate() {
                for (ox, rx) in self.cols.iter().enumerate() {
                    let a = src[ry.i0 * iw + rx.i0];
                    let b = src[ry.i0 * iw + rx.i1];
                    let c2 = src[ry.i1 * iw + rx.i0];
                    let d = src[ry.i1 * iw + rx.i1];
                    let top = a + rx.t * (b - a);
                    let bottom = c2 + rx.t * (d - c2);
                    dst[oy * w + ox] = top + ry.t * (bottom - top);
                }
            }
        }
        out
    }

    fn upsample_transpose(&self, g: &[f64]) -> Vec<f64> {
        let (h, w, ih, iw) = (self.h, self.w, self.in_h, self.in_w);
        let mut out = vec![0.0; self.cin * ih * iw];
        for c in 0..self.cin {
            let src = &g[c * h * w..(c + 1) * h * w];
            let dst = &mut out[c * ih * iw..(c + 1) * ih * iw];
            for (oy, ry) in self.rows.iter().enumerate() {
                for (ox, rx) in self.cols.iter().enumerate() {
                    let v = src[oy * w + ox];
                    dst[ry.i0 * iw + rx.i0] += v * (1.0 - ry.t) * (1.0 - rx.t);
                    dst[ry.i0 * iw + rx.i1] += v * (1.0 - ry.t) * rx.t;
                    dst[ry.i1 * iw + rx.i0] += v * ry.t * (1.0 - rx.t);
                    dst[ry.i1 * iw + rx.i1] += v * ry.t * rx.t;
                }
            }
        }
        out
    }

    fn conv(&self, x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let mut out = vec![0.0; self.cout * h * w];
        for co in 0..self.cout {
            let dst = &mut out[co * h * w..(co + 1) * h * w];
            dst.iter_mut().for_each(|v| *v = bias[co]);
            for ci in 0..self.cin {
                let src = &x[ci * h * w..(ci + 1) * h * w];
                let k = &weight[(co * self.cin + ci) * 9..(co * self.cin + ci + 1) * 9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let kv = k[ky * 3 + kx];
                        for y in 0..h {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                            let drow = &mut dst[y * w..(y + 1) * w];
                            let (lo, hi) = match kx {
                                0 => (1, w),
                                1 => (0, w),
                                _ => (0, w - 1),
                            };
                            for x in lo..hi {
                                drow[x] += kv * srow[x + kx - 1];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns `dx`, accumulating weight and bias gradients.
    fn conv_backward(
        &self,
        x: &[f64],
        weight: &[f64],
        g: &[f64],
        dweight: &mut [f64],
        dbias: &mut [f64],
    ) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let mut dx = vec![0.0; self.cin * h * w];
        for co in 0..self.cout {
            let gsrc = &g[co * h * w..(co + 1) * h * w];
            dbias[co] += gsrc.iter().sum::<f64>();
            for ci in 0..self.cin {
                let src = &x[ci * h * w..(ci + 1) * h * w];
                let kidx = (co * self.cin + ci) * 9;
                let dxc = &mut dx[ci * h * w..(ci + 1) * h * w];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let kv = weight[kidx + ky * 3 + kx];
                        let mut acc = 0.0;
                        for y in 0..h {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let sy = sy as usize;
                            let (lo, hi) = match kx {
                                0 => (1, w),
                                1 => (0, w),
                                _ => (0, w - 1),
                            };
                            for x in lo..hi {
                                let gv = gsrc[y * w + x];
                                acc += gv * src[sy * w + x + kx - 1];
                                dxc[sy * w + x + kx - 1] += gv * kv;
                            }
                        }
                        dweight[kidx + ky * 3 + kx] += acc;
                    }
                }
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub struct Cnn {
    config: CnnConfig,
    coarse_h: usize,
    coarse_w: usize,
    blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
struct BlockTape {
    tanh: Vec<f64>,
    normalized: Vec<f64>,
    inv_std: f64,
}

#[derive(Debug, Clone)]
pub struct Tape {
    blocks: Vec<BlockTape>,
}

impl Cnn {
    pub fn new(config: &CnnConfig, nx: usize, ny: usize) -> Result<Self> {
        if config.input_size == 0 || config.dense_channels == 0 {
            return Err(Error::param(
                "CNN input size and dense channels must be >= 1",
            ));
        }
        if config.filters.is_empty() || config.filters.len() != config.upsample.len() {
            return Err(Error::param(
                "CNN needs one upsample factor per convolution layer",
            ));
        }
        if config.filters.last() != Some(&1) || config.filters.contains(&0) {
            return Err(Error::param(
                "CNN filters must be >= 1 and end with a single channel",
            ));
        }
        if !(config.offset_scale.is_finite() && config.init_scale >= 0.0) {
            return Err(Error::param("CNN offset and init scales must be finite"));
        }
        if config.upsample.contains(&0) {
            return Err(Error::param("CNN upsample factors must be >= 1"));
        }
        let total: usize = config.upsample.iter().product();
        if !nx.is_multiple_of(total) || !ny.is_multiple_of(total) {
            return Err(Error::param(format!(
                "CNN upsample product {total} does not divide the {nx}x{ny} mesh"
            )));
        }
        let (mut h, mut w) = (ny / total, nx / total);
        let (coarse_h, coarse_w) = (h, w);
        let mut cin = config.dense_channels;
        let mut blocks = Vec::new();
        for (&cout, &f) in config.filters.iter().zip(&config.upsample) {
            blocks.push(Block {
                cin,
                cout,
                h: h * f,
                w: w * f,
                in_h: h,
                in_w: w,
                rows: axis_table(h, f),
                cols: axis_table(w, f),
            });
            h *= f;
            w *= f;
            cin = cout;
        }
        Ok(Cnn {
            config: config.clone(),
            coarse_h,
            coarse_w,
            blocks,
        })
    }

    fn dense_out(&self) -> usize {
        self.config.dense_channels * self.coarse_h * self.coarse_w
    }

    pub fn layout(&self) -> Vec<Segment> {
        let n = self.config.input_size;
        let mut out = vec![
            Segment::new("cnn.input", vec![n]),
            Segment::new("cnn.dense.weight", vec![self.dense_out(), n]),
            Segment::new("cnn.dense.bias", vec![self.dense_out()]),
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            out.push(Segment::new(
                format!("cnn.conv{l}.weight"),
                vec![b.cout, b.cin, 3, 3],
            ));
            out.push(Segment::new(format!("cnn.conv{l}.bias"), vec![b.cout]));
            out.push(Segment::new(
                format!("cnn.offset{l}"),
                vec![b.cout, b.h, b.w],
            ));
        }
        out
    }

    pub fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut normal = |std: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect()
        };
        let n = self.config.input_size;
        let mut theta = normal(1.0, n);
        theta.extend(normal(1.0 / (n as f64).sqrt(), self.dense_out() * n));
        theta.extend(std::iter::repeat_n(0.0, self.dense_out()));
        for b in &self.blocks {
            let fan_in = (b.cin * 9) as f64;
            theta.extend(normal(
                self.config.init_scale / fan_in.sqrt(),
                b.cout * b.cin * 9,
            ));
            theta.extend(std::iter::repeat_n(0.0, b.cout + b.cout * b.h * b.w));
        }
        theta
    }

    fn offsets(&self) -> (usize, usize, Vec<(usize, usize, usize)>) {
        let n = self.config.input_size;
        let dw = n;
        let db = dw + self.dense_out() * n;
        let mut o = db + self.dense_out();
        let mut blocks = Vec::new();
        for b in &self.blocks {
            let wo = o;
            let bo = wo + b.cout * b.cin * 9;
            let oo = bo + b.cout;
            o = oo + b.cout * b.h * b.w;
            blocks.push((wo, bo, oo));
        }
        (dw, db, blocks)
    }

    pub fn forward(&self, theta: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let n = self.config.input_size;
        let (dw, db, offs) = self.offsets();
        let input = &theta[..n];
        let m = self.dense_out();
        let mut x: Vec<f64> = (0..m)
            .map(|o| {
                theta[db + o]
                    + theta[dw + o * n..dw + (o + 1) * n]
                        .iter()
                        .zip(input)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        check_finite(&x, "cnn.dense")?;
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for (l, (b, &(wo, bo, oo))) in self.blocks.iter().zip(&offs).enumerate() {
            let t: Vec<f64> = x.iter().map(|v| v.tanh()).collect();
            let u = b.upsample(&t);
            let len = u.len() as f64;
            let mean = u.iter().sum::<f64>() / len;
            let var = u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
            let inv_std = 1.0 / (var + NORMALIZE_EPS).sqrt();
            let nrm: Vec<f64> = u.iter().map(|v| (v - mean) * inv_std).collect();
            let mut y = b.conv(&nrm, &theta[wo..bo], &theta[bo..bo + b.cout]);
            let k = self.config.offset_scale;
            for (v, o) in y.iter_mut().zip(&theta[oo..oo + b.cout * b.h * b.w]) {
                *v += k * o;
            }
            check_finite(&y, &format!("cnn.conv{l}"))?;
            tapes.push(BlockTape {
                tanh: t,
                normalized: nrm,
                inv_std,
            });
            x = y;
        }
        Ok((x, Tape { blocks: tapes }))
    }

    pub fn backward(&self, theta: &[f64], tape: &Tape, dout: &[f64]) -> Vec<f64> {
        let n = self.config.input_size;
        let (dw, db, offs) = self.offsets();
        let mut grad = vec![0.0; theta.len()];
        let mut g = dout.to_vec();
        for (b, (bt, &(wo, bo, oo))) in self.blocks.iter().zip(tape.blocks.iter().zip(&offs)).rev()
        {
            let k = self.config.offset_scale;
            for (d, v) in grad[oo..oo + g.len()].iter_mut().zip(&g) {
                *d += k * v;
            }
            let (gw, rest) = grad[wo..].split_at_mut(bo - wo);
            let dn = b.conv_backward(&bt.normalized, &theta[wo..bo], &g, gw, &mut rest[..b.cout]);
            let len = dn.len() as f64;
            let mean_d = dn.iter().sum::<f64>() / len;
            let mean_dx = dn
                .iter()
                .zip(&bt.normalized)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / len;
            let du: Vec<f64> = dn
                .iter()
                .zip(&bt.normalized)
                .map(|(d, x)| bt.inv_std * (d - mean_d - x * mean_dx))
                .collect();
            let dt = b.upsample_transpose(&du);
            g = dt
                .iter()
                .zip(&bt.tanh)
                .map(|(d, t)| d * (1.0 - t * t))
                .collect();
        }
        let input = &theta[..n];
        for (o, go) in g.iter().enumerate() {
            grad[db + o] += go;
            for i in 0..n {
                grad[dw + o * n + i] += go * input[i];
                grad[i] += go * theta[dw + o * n + i];
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_count() {
        let c = Cnn::new(&CnnConfig::default(), 64, 32).unwrap();
        let sizes: Vec<usize> = c.layout().iter().map(Segment::size).collect();
        assert_eq!(sizes, vec![1, 2, 2, 18, 2, 64, 18, 1, 2048]);
        assert_eq!(sizes.iter().sum::<usize>(), 2156);
    }

    #[test]
    fn mismatched_upsample_is_rejected() {
        assert!(Cnn::new(&CnnConfig::default(), 48, 32).is_err());
    }

    #[test]
    fn upsample_preserves_constants_and_linear_ramps_inside() {
        let c = Cnn::new(&CnnConfig::default(), 64, 32).unwrap();
        let b = &c.blocks[0];
        let up = b.upsample(&[0.7, 0.7]);
        assert!(up.iter().all(|v| (v - 0.7).abs() < 1e-15));
        let up = b.upsample(&[0.0, 1.0]);
        // columns 0..1 clamp to the left pixel, then a linear ramp of slope 1/4
        assert_eq!(&up[..4], &[0.0, 0.0, 0.125, 0.375]);
        assert_eq!(&up[4..8], &[0.625, 0.875, 1.0, 1.0]);
    }

    #[test]
    fn upsample_transpose_is_adjoint() {
        let c = Cnn::new(&CnnConfig::new(2, 3, 4), 64, 32).unwrap();
        let b = &c.blocks[1];
        let x: Vec<f64> = (0..b.cin * b.in_h * b.in_w)
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let g: Vec<f64> = (0..b.cin * b.h * b.w)
            .map(|i| (i as f64 * 0.11).cos())
            .collect();
        let lhs: f64 = b.upsample(&x).iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x
            .iter()
            .zip(b.upsample_transpose(&g))
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn conv_identity_kernel() {
        let c = Cnn::new(&CnnConfig::default(), 64, 32).unwrap();
        let b = &c.blocks[1];
        let x: Vec<f64> = (0..2 * b.h * b.w).map(|i| i as f64).collect();
        let mut k = vec![0.0; 18];
        k[4] = 1.0;
        let y = b.conv(&x, &k, &[0.5]);
        assert!(y.iter().zip(&x).all(|(a, b)| (a - b - 0.5).abs() < 1e-12));
    }
}
