//! Method of moving asymptotes: Svanberg's `mmasub` with the primal–dual
//! interior-point subproblem solver `subsolv`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmaConfig {
    /// Largest step per iteration, as a fraction of the variable range.
    pub move_limit: f64,
    /// Initial asymptote distance, as a fraction of the variable range.
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    pub a0: f64,
    pub c: f64,
    pub d: f64,
    pub raa0: f64,
    pub albefa: f64,
}

impl Default for MmaConfig {
    fn default() -> Self {
        MmaConfig {
            move_limit: 0.2,
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            a0: 1.0,
            c: 1000.0,
            d: 1.0,
            raa0: 1e-5,
            albefa: 0.1,
        }
    }
}

impl MmaConfig {
    pub fn new(move_limit: f64, asyinit: f64) -> Self {
        MmaConfig {
            move_limit,
            asyinit,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.move_limit > 0.0) || !(self.asyinit > 0.0) {
            return Err(Error::param(
                "MMA move limit and asymptote init must be positive",
            ));
        }
        Ok(())
    }
}

/// Iteration history carried between MMA steps.
#[derive(Debug, Clone)]
pub struct MmaState {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    pub iteration: usize,
}

impl MmaState {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::param("MMA bounds need lower < upper elementwise"));
        }
        let n = lower.len();
        Ok(MmaState {
            low: lower.clone(),
            upp: upper.clone(),
            lower,
            upper,
            xold1: vec![0.0; n],
            xold2: vec![0.0; n],
            iteration: 0,
        })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        MmaState::new(vec![lower; n], vec![upper; n])
    }
}

/// One MMA iteration for `min f0(x)` s.t. `g_i(x) ≤ 0`. `dg` holds one
/// gradient row per constraint.
pub fn mma_step(
    state: &mut MmaState,
    x: &[f64],
    df0: &[f64],
    g: &[f64],
    dg: &[Vec<f64>],
    cfg: &MmaConfig,
) -> Result<Vec<f64>> {
    let n = x.len();
    let m = g.len();
    if df0.len() != n || dg.len() != m || dg.iter().any(|r| r.len() != n) || state.lower.len() != n
    {
        return Err(Error::param("MMA dimensions are inconsistent"));
    }
    if x.iter()
        .chain(df0)
        .chain(g)
        .chain(dg.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::param("MMA received non-finite values"));
    }
    state.iteration += 1;
    let iter = state.iteration;
    let (xmin, xmax) = (&state.lower, &state.upper);
    let range: Vec<f64> = xmin.iter().zip(xmax).map(|(l, u)| u - l).collect();

    let mut low = vec![0.0; n];
    let mut upp = vec![0.0; n];
    for j in 0..n {
        if iter <= 2 {
            low[j] = x[j] - cfg.asyinit * range[j];
            upp[j] = x[j] + cfg.asyinit * range[j];
        } else {
            let zzz = (x[j] - state.xold1[j]) * (state.xold1[j] - state.xold2[j]);
            let factor = if zzz > 0.0 {
                cfg.asyincr
            } else if zzz < 0.0 {
                cfg.asydecr
            } else {
                1.0
            };
            low[j] = x[j] - factor * (state.xold1[j] - state.low[j]);
            upp[j] = x[j] + factor * (state.upp[j] - state.xold1[j]);
            low[j] = low[j]
                .max(x[j] - 10.0 * range[j])
                .min(x[j] - 0.01 * range[j]);
            upp[j] = upp[j]
                .min(x[j] + 10.0 * range[j])
                .max(x[j] + 0.01 * range[j]);
        }
    }

    let mut alfa = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut p0 = vec![0.0; n];
    let mut q0 = vec![0.0; n];
    let mut pm = vec![vec![0.0; n]; m];
    let mut qm = vec![vec![0.0; n]; m];
    let mut b = g.iter().map(|v| -v).collect::<Vec<_>>();
    for j in 0..n {
        alfa[j] = (low[j] + cfg.albefa * (x[j] - low[j]))
            .max(x[j] - cfg.move_limit * range[j])
            .max(xmin[j]);
        beta[j] = (upp[j] - cfg.albefa * (upp[j] - x[j]))
            .min(x[j] + cfg.move_limit * range[j])
            .min(xmax[j]);
        let inv_range = 1.0 / range[j].max(1e-5);
        let ux1 = upp[j] - x[j];
        let xl1 = x[j] - low[j];
        let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
        let split = |d: f64| {
            let (p, q) = (d.max(0.0), (-d).max(0.0));
            let pq = 0.001 * (p + q) + cfg.raa0 * inv_range;
            ((p + pq) * ux2, (q + pq) * xl2)
        };
        (p0[j], q0[j]) = split(df0[j]);
        for i in 0..m {
            (pm[i][j], qm[i][j]) = split(dg[i][j]);
            b[i] += pm[i][j] / ux1 + qm[i][j] / xl1;
        }
    }

    let sub = Subproblem {
        m,
        n,
        low: &low,
        upp: &upp,
        alfa: &alfa,
        beta: &beta,
        p0: &p0,
        q0: &q0,
        p: &pm,
        q: &qm,
        a0: cfg.a0,
        b: &b,
        c: cfg.c,
        d: cfg.d,
    };
    let xnew = sub.solve()?;
    state.xold2 = std::mem::replace(&mut state.xold1, x.to_vec());
    state.low = low;
    state.upp = upp;
    Ok(xnew)
}

struct Subproblem<'a> {
    m: usize,
    n: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    p: &'a [Vec<f64>],
    q: &'a [Vec<f64>],
    a0: f64,
    b: &'a [f64],
    c: f64,
    d: f64,
}

/// Primal–dual point of the subproblem (with `a = 0`).
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

const EPSIMIN: f64 = 1e-7;
const MAX_NEWTON: usize = 200;

impl Subproblem<'_> {
    fn plam_qlam(&self, lam: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut plam = self.p0.to_vec();
        let mut qlam = self.q0.to_vec();
        for i in 0..self.m {
            for j in 0..self.n {
                plam[j] += self.p[i][j] * lam[i];
                qlam[j] += self.q[i][j] * lam[i];
            }
        }
        (plam, qlam)
    }

    fn gvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                (0..self.n)
                    .map(|j| {
                        self.p[i][j] / (self.upp[j] - x[j]) + self.q[i][j] / (x[j] - self.low[j])
                    })
                    .sum()
            })
            .collect()
    }

    fn residual(&self, pt: &Point, epsi: f64) -> Vec<f64> {
        let (plam, qlam) = self.plam_qlam(&pt.lam);
        let gvec = self.gvec(&pt.x);
        let mut r = Vec::with_capacity(3 * self.n + 4 * self.m + 2);
        for j in 0..self.n {
            let ux = self.upp[j] - pt.x[j];
            let xl = pt.x[j] - self.low[j];
            r.push(plam[j] / (ux * ux) - qlam[j] / (xl * xl) - pt.xsi[j] + pt.eta[j]);
        }
        for i in 0..self.m {
            r.push(self.c + self.d * pt.y[i] - pt.mu[i] - pt.lam[i]);
        }
        r.push(self.a0 - pt.zet);
        for i in 0..self.m {
            r.push(gvec[i] - pt.y[i] + pt.s[i] - self.b[i]);
        }
        for j in 0..self.n {
            r.push(pt.xsi[j] * (pt.x[j] - self.alfa[j]) - epsi);
        }
        for j in 0..self.n {
            r.push(pt.eta[j] * (self.beta[j] - pt.x[j]) - epsi);
        }
        for i in 0..self.m {
            r.push(pt.mu[i] * pt.y[i] - epsi);
        }
        r.push(pt.zet * pt.z - epsi);
        for i in 0..self.m {
            r.push(pt.lam[i] * pt.s[i] - epsi);
        }
        r
    }

    fn solve(&self) -> Result<Vec<f64>> {
        let m = self.m;
        let x: Vec<f64> = self
            .alfa
            .iter()
            .zip(self.beta)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let mut pt = Point {
            xsi: x
                .iter()
                .zip(self.alfa)
                .map(|(x, a)| (1.0 / (x - a)).max(1.0))
                .collect(),
            eta: x
                .iter()
                .zip(self.beta)
                .map(|(x, b)| (1.0 / (b - x)).max(1.0))
                .collect(),
            x,
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        let mut epsi = 1.0;
        let mut residumax = 0.0;
        while epsi > EPSIMIN {
            let r = self.residual(&pt, epsi);
            let mut residunorm = norm(&r);
            residumax = max_abs(&r);
            let mut ittt = 0;
            while residumax > 0.9 * epsi && ittt < MAX_NEWTON {
                ittt += 1;
                let dir = self.newton_direction(&pt, epsi)?;
                let mut steg = 1.0 / self.max_step(&pt, &dir).max(1.0);
                let old = pt.clone();
                let mut resinew = 2.0 * residunorm;
                let mut itto = 0;
                let mut rnew = r.clone();
                while resinew > residunorm && itto < 50 {
                    itto += 1;
                    pt = old.clone();
                    pt.advance(&dir, steg);
                    rnew = self.residual(&pt, epsi);
                    resinew = norm(&rnew);
                    steg /= 2.0;
                }
                residunorm = resinew;
                residumax = max_abs(&rnew);
            }
            epsi *= 0.1;
        }
        if !residumax.is_finite() || pt.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Subproblem {
                residual: residumax,
            });
        }
        Ok(pt
            .x
            .iter()
            .zip(self.alfa.iter().zip(self.beta))
            .map(|(x, (a, b))| x.clamp(*a, *b))
            .collect())
    }

    fn newton_direction(&self, pt: &Point, epsi: f64) -> Result<Point> {
        let (m, n) = (self.m, self.n);
        let (plam, qlam) = self.plam_qlam(&pt.lam);
        let gvec = self.gvec(&pt.x);
        let mut gg = vec![vec![0.0; n]; m];
        let mut delx = vec![0.0; n];
        let mut diagx = vec![0.0; n];
        for j in 0..n {
            let ux1 = self.upp[j] - pt.x[j];
            let xl1 = pt.x[j] - self.low[j];
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            for i in 0..m {
                gg[i][j] = self.p[i][j] / ux2 - self.q[i][j] / xl2;
            }
            let xa = pt.x[j] - self.alfa[j];
            let bx = self.beta[j] - pt.x[j];
            delx[j] = plam[j] / ux2 - qlam[j] / xl2 - epsi / xa + epsi / bx;
            diagx[j] = 2.0 * (plam[j] / (ux2 * ux1) + qlam[j] / (xl2 * xl1))
                + pt.xsi[j] / xa
                + pt.eta[j] / bx;
        }
        let dely: Vec<f64> = (0..m)
            .map(|i| self.c + self.d * pt.y[i] - pt.lam[i] - epsi / pt.y[i])
            .collect();
        let delz = self.a0 - epsi / pt.z;
        let dellam: Vec<f64> = (0..m)
            .map(|i| gvec[i] - pt.y[i] - self.b[i] + epsi / pt.lam[i])
            .collect();
        let diagy: Vec<f64> = (0..m).map(|i| self.d + pt.mu[i] / pt.y[i]).collect();
        let diaglamyi: Vec<f64> = (0..m)
            .map(|i| pt.s[i] / pt.lam[i] + 1.0 / diagy[i])
            .collect();

        // a = 0 decouples z from the rest of the system
        let dz = -delz * pt.z / pt.zet;
        let (dx, dlam);
        if m < n {
            let mut alam = vec![vec![0.0; m]; m];
            let mut blam = vec![0.0; m];
            for i in 0..m {
                blam[i] = dellam[i] + dely[i] / diagy[i]
                    - (0..n).map(|j| gg[i][j] * delx[j] / diagx[j]).sum::<f64>();
                for k in 0..m {
                    alam[i][k] = (0..n).map(|j| gg[i][j] * gg[k][j] / diagx[j]).sum();
                }
                alam[i][i] += diaglamyi[i];
            }
            dlam = solve_dense(alam, blam)?;
            dx = (0..n)
                .map(|j| {
                    -delx[j] / diagx[j] - (0..m).map(|i| gg[i][j] * dlam[i]).sum::<f64>() / diagx[j]
                })
                .collect::<Vec<_>>();
        } else {
            let dellamyi: Vec<f64> = (0..m).map(|i| dellam[i] + dely[i] / diagy[i]).collect();
            let mut axx = vec![vec![0.0; n]; n];
            let mut bx = delx.clone();
            for j in 0..n {
                for k in 0..n {
                    axx[j][k] = (0..m).map(|i| gg[i][j] * gg[i][k] / diaglamyi[i]).sum();
                }
                axx[j][j] += diagx[j];
                bx[j] += (0..m)
                    .map(|i| gg[i][j] * dellamyi[i] / diaglamyi[i])
                    .sum::<f64>();
            }
            dx = solve_dense(axx, bx.iter().map(|v| -v).collect())?;
            dlam = (0..m)
                .map(|i| {
                    ((0..n).map(|j| gg[i][j] * dx[j]).sum::<f64>() + dellamyi[i]) / diaglamyi[i]
                })
                .collect();
        }
        let dy: Vec<f64> = (0..m).map(|i| (-dely[i] + dlam[i]) / diagy[i]).collect();
        let dxsi = (0..n)
            .map(|j| {
                let xa = pt.x[j] - self.alfa[j];
                -pt.xsi[j] + epsi / xa - pt.xsi[j] * dx[j] / xa
            })
            .collect();
        let deta = (0..n)
            .map(|j| {
                let bx = self.beta[j] - pt.x[j];
                -pt.eta[j] + epsi / bx + pt.eta[j] * dx[j] / bx
            })
            .collect();
        let dmu = (0..m)
            .map(|i| -pt.mu[i] + epsi / pt.y[i] - pt.mu[i] * dy[i] / pt.y[i])
            .collect();
        let dzet = -pt.zet + epsi / pt.z - pt.zet * dz / pt.z;
        let ds = (0..m)
            .map(|i| -pt.s[i] + epsi / pt.lam[i] - pt.s[i] * dlam[i] / pt.lam[i])
            .collect();
        Ok(Point {
            x: dx,
            y: dy,
            z: dz,
            lam: dlam,
            xsi: dxsi,
            eta: deta,
            mu: dmu,
            zet: dzet,
            s: ds,
        })
    }

    /// Inverse of the largest step keeping every positive variable positive
    /// (with a 1% safety margin).
    fn max_step(&self, pt: &Point, dir: &Point) -> f64 {
        let mut worst: f64 = 0.0;
        let mut check = |v: f64, dv: f64| worst = worst.max(-1.01 * dv / v);
        for (v, dv) in [
            (&pt.y, &dir.y),
            (&pt.lam, &dir.lam),
            (&pt.xsi, &dir.xsi),
            (&pt.eta, &dir.eta),
            (&pt.mu, &dir.mu),
            (&pt.s, &dir.s),
        ] {
            v.iter().zip(dv.iter()).for_each(|(a, b)| check(*a, *b));
        }
        check(pt.z, dir.z);
        check(pt.zet, dir.zet);
        for j in 0..self.n {
            check(pt.x[j] - self.alfa[j], dir.x[j]);
            check(self.beta[j] - pt.x[j], -dir.x[j]);
        }
        worst
    }
}

impl Point {
    fn advance(&mut self, dir: &Point, t: f64) {
        let add = |v: &mut Vec<f64>, d: &[f64]| v.iter_mut().zip(d).for_each(|(a, b)| *a += t * b);
        add(&mut self.x, &dir.x);
        add(&mut self.y, &dir.y);
        add(&mut self.lam, &dir.lam);
        add(&mut self.xsi, &dir.xsi);
        add(&mut self.eta, &dir.eta);
        add(&mut self.mu, &dir.mu);
        add(&mut self.s, &dir.s);
        self.z += t * dir.z;
        self.zet += t * dir.zet;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Gaussian elimination with partial pivoting for the small dense systems.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[p][k] == 0.0 || !a[p][k].is_finite() {
            return Err(Error::Subproblem { residual: f64::NAN });
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * b[j]).sum();
        b[k] = (b[k] - s) / a[k][k];
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Iterates produced by the reference Python MMA (mmapy 0.3.1, mmasub with
    // a0 = 1, a = 0, c = 1000, d = 1) on the same inputs.
    const QUADRATIC_TRACE: [f64; 8] = [
        0.7000001640820606,
        0.5000004102156922,
        0.30000085611027033,
        0.28313866526153936,
        0.4831341517041874,
        0.2831346367213238,
        0.48312813161179924,
        0.2831289185188921,
    ];

    const TWOBAR_TRACE: [[f64; 2]; 4] = [
        [0.8515908100869345, 0.873502646606392],
        [0.7233434053997952, 0.766565628144092],
        [0.6163349433832301, 0.6825156875102962],
        [0.5582691449737789, 0.6423794928059654],
    ];

    #[test]
    fn matches_reference_trace_single_constraint() {
        let mut st = MmaState::uniform(1, 0.0, 1.0).unwrap();
        let cfg = MmaConfig::new(0.2, 0.5);
        let mut x = vec![0.9];
        for want in QUADRATIC_TRACE {
            x = mma_step(
                &mut st,
                &x,
                &[2.0 * (x[0] - 0.3)],
                &[-1.0],
                &[vec![0.0]],
                &cfg,
            )
            .unwrap();
            assert!((x[0] - want).abs() < 1e-8, "{} vs {want}", x[0]);
        }
    }

    #[test]
    fn matches_reference_trace_square_system() {
        use crate::problems::{twobar_eval, TwoBarState};
        let mut st = MmaState::uniform(2, 0.0, 2.0).unwrap();
        let cfg = MmaConfig::new(2.0, 0.1);
        let mut x = vec![1.0, 1.0];
        for want in TWOBAR_TRACE {
            let e = twobar_eval(TwoBarState { a1: x[0], a2: x[1] }).unwrap();
            let dg: Vec<Vec<f64>> = e.gbar_grad.iter().map(|r| r.to_vec()).collect();
            x = mma_step(&mut st, &x, &e.mass_grad, &e.gbar, &dg, &cfg).unwrap();
            assert!(
                (x[0] - want[0]).abs() < 1e-8 && (x[1] - want[1]).abs() < 1e-8,
                "{x:?}"
            );
        }
    }

    #[test]
    fn move_limits_and_bounds_hold() {
        let mut st = MmaState::uniform(3, 0.0, 2.0).unwrap();
        let cfg = MmaConfig::new(0.05, 0.1);
        let mut x = vec![1.0, 0.02, 1.99];
        for k in 0..10 {
            let df = vec![1.0, 5.0, -3.0 + k as f64];
            let nx = mma_step(&mut st, &x, &df, &[0.1], &[vec![1.0, 1.0, 1.0]], &cfg).unwrap();
            for (a, b) in nx.iter().zip(&x) {
                assert!((a - b).abs() <= 0.05 * 2.0 + 1e-12);
                assert!((0.0..=2.0).contains(a));
            }
            x = nx;
        }
    }

    #[test]
    fn linear_mass_moves_both_areas_down() {
        let mut st = MmaState::uniform(2, 0.0, 2.0).unwrap();
        let x = vec![1.0, 1.0];
        let nx = mma_step(
            &mut st,
            &x,
            &[0.6, 0.8],
            &[-0.5, -0.5],
            &[vec![0.0, 0.1], vec![0.1, 0.0]],
            &MmaConfig::new(0.2, 0.5),
        )
        .unwrap();
        assert!(nx[0] < 1.0 && nx[1] < 1.0);
    }

    #[test]
    fn constrained_linear_program() {
        // min −x1 − x2 s.t. x1 + 2 x2 ≤ 1, 0 ≤ x ≤ 1 → (1, 0)
        let mut st = MmaState::uniform(2, 0.0, 1.0).unwrap();
        let cfg = MmaConfig::new(0.5, 0.5);
        let mut x = vec![0.2, 0.2];
        for _ in 0..60 {
            let g = x[0] + 2.0 * x[1] - 1.0;
            x = mma_step(&mut st, &x, &[-1.0, -1.0], &[g], &[vec![1.0, 2.0]], &cfg).unwrap();
        }
        assert!((x[0] - 1.0).abs() < 1e-3 && x[1].abs() < 1e-3, "{x:?}");
    }
}
