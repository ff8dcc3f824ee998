//! Dense building blocks shared by the coordinate networks. Batches are
//! row-major `[rows × features]`.

use crate::error::{Error, Result};

/// `out = z Wᵀ + b` with `W` stored `[fout × fin]`.
pub fn linear(z: &[f64], fin: usize, w: &[f64], b: &[f64], fout: usize) -> Vec<f64> {
    let rows = z.len() / fin;
    let mut out = vec![0.0; rows * fout];
    for (zr, or) in z.chunks_exact(fin).zip(out.chunks_exact_mut(fout)) {
        for (o, (wo, bo)) in or.iter_mut().zip(w.chunks_exact(fin).zip(b)) {
            *o = bo + wo.iter().zip(zr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

/// Backward of [`linear`]: accumulates into `dw`, `db` and returns `dz`.
pub fn linear_backward(
    z: &[f64],
    fin: usize,
    w: &[f64],
    dout: &[f64],
    fout: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dz = vec![0.0; z.len()];
    for ((zr, dr), dzr) in z
        .chunks_exact(fin)
        .zip(dout.chunks_exact(fout))
        .zip(dz.chunks_exact_mut(fin))
    {
        for (o, &g) in dr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wo = &w[o * fin..(o + 1) * fin];
            let dwo = &mut dw[o * fin..(o + 1) * fin];
            for i in 0..fin {
                dwo[i] += g * zr[i];
                dzr[i] += g * wo[i];
            }
        }
    }
    dz
}

pub fn check_finite(values: &[f64], layer: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer: layer.to_string(),
        })
    }
}

/// Per-feature batch normalization statistics over all rows.
pub struct BatchStats {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn batch_normalize(x: &[f64], features: usize, eps: f64) -> BatchStats {
    let rows = (x.len() / features) as f64;
    let mut mean = vec![0.0; features];
    for r in x.chunks_exact(features) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    let mut var = vec![0.0; features];
    for r in x.chunks_exact(features) {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / rows + eps).sqrt()).collect();
    let mut normalized = x.to_vec();
    for r in normalized.chunks_exact_mut(features) {
        for ((v, m), is) in r.iter_mut().zip(&mean).zip(&inv_std) {
            *v = (*v - m) * is;
        }
    }
    BatchStats {
        normalized,
        inv_std,
    }
}

/// Backward of [`batch_normalize`] given `dL/d normalized`.
pub fn batch_normalize_backward(stats: &BatchStats, dnorm: &[f64], features: usize) -> Vec<f64> {
    let rows = (dnorm.len() / features) as f64;
    let mut mean_d = vec![0.0; features];
    let mut mean_dx = vec![0.0; features];
    for (dr, xr) in dnorm
        .chunks_exact(features)
        .zip(stats.normalized.chunks_exact(features))
    {
        for j in 0..features {
            mean_d[j] += dr[j];
            mean_dx[j] += dr[j] * xr[j];
        }
    }
    mean_d.iter_mut().for_each(|m| *m /= rows);
    mean_dx.iter_mut().for_each(|m| *m /= rows);
    let mut out = vec![0.0; dnorm.len()];
    for ((o, dr), xr) in out
        .chunks_exact_mut(features)
        .zip(dnorm.chunks_exact(features))
        .zip(stats.normalized.chunks_exact(features))
    {
        for j in 0..features {
            o[j] = stats.inv_std[j] * (dr[j] - mean_d[j] - xr[j] * mean_dx[j]);
        }
    }
    out
}
