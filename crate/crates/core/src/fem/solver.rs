//! Direct sparse solver for the reduced (symmetric positive definite)
//! finite element systems.
//!
//! The matrix is stored by rows in a variable-band ("skyline") layout after a
//! reverse Cuthill-McKee reordering. The factorization is the pivot-free
//! symmetric LU, `K = L D Lᵀ`; all fill stays inside the row profile.

use std::collections::VecDeque;

/// Reverse Cuthill-McKee ordering of a symmetric sparsity graph.
///
/// Returns `perm` with `perm[new] = old`. Deterministic: ties between
/// neighbours are broken by degree and then by original index.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    while order.len() < n {
        // start each component from a pseudo-peripheral node
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node exists");
        let start = pseudo_peripheral(adjacency, seed);

        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&u| !visited[u])
                .collect();
            next.sort_unstable_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adjacency: &[Vec<usize>], seed: usize) -> usize {
    let mut current = seed;
    let (mut ecc, mut far) = bfs_levels(adjacency, current);
    loop {
        let (next_ecc, next_far) = bfs_levels(adjacency, far);
        if next_ecc <= ecc {
            return current;
        }
        current = far;
        ecc = next_ecc;
        far = next_far;
    }
}

/// Eccentricity of `start` and the lowest-degree node in its last level.
fn bfs_levels(adjacency: &[Vec<usize>], start: usize) -> (usize, usize) {
    let n = adjacency.len();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut max_level = 0;
    let mut last = vec![start];
    while let Some(v) = queue.pop_front() {
        for &u in &adjacency[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                if level[u] > max_level {
                    max_level = level[u];
                    last.clear();
                }
                if level[u] == max_level {
                    last.push(u);
                }
                queue.push_back(u);
            }
        }
    }
    let far = last
        .into_iter()
        .min_by_key(|&u| (adjacency[u].len(), u))
        .unwrap_or(start);
    (max_level, far)
}

/// Lower row profile of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SkylinePattern {
    /// First stored column of each row.
    first: Vec<usize>,
    /// Offset of each row's first stored entry; `start[n]` is the total size.
    start: Vec<usize>,
}

impl SkylinePattern {
    /// Builds the profile from the (already permuted) adjacency lists.
    pub fn from_adjacency(adjacency: &[Vec<usize>]) -> Self {
        let n = adjacency.len();
        let mut first: Vec<usize> = (0..n).collect();
        for (i, nbrs) in adjacency.iter().enumerate() {
            for &j in nbrs {
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            start.push(acc);
            acc += i - f + 1;
        }
        start.push(acc);
        SkylinePattern { first, start }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn nnz(&self) -> usize {
        self.start[self.dim()]
    }

    /// Storage offset of lower-triangle entry `(row, col)`, `col <= row`.
    pub fn offset(&self, row: usize, col: usize) -> usize {
        debug_assert!(col <= row && col >= self.first[row]);
        self.start[row] + col - self.first[row]
    }
}

/// A factorized symmetric matrix `L D Lᵀ` in skyline storage.
#[derive(Debug, Clone)]
pub struct SkylineFactor<'p> {
    pattern: &'p SkylinePattern,
    /// Strict lower part of `L` in the row slots; `D` on the diagonal slots.
    values: Vec<f64>,
}

/// Failure of the factorization at a given (permuted) equation.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPivot {
    pub equation: usize,
    pub pivot: f64,
}

impl<'p> SkylineFactor<'p> {
    /// Factorizes the matrix whose lower profile is stored in `values`.
    ///
    /// Pivots at or below `rel_tol · max|diag|` are reported as singular.
    pub fn factor(
        pattern: &'p SkylinePattern,
        mut values: Vec<f64>,
        rel_tol: f64,
    ) -> std::result::Result<Self, ZeroPivot> {
        let n = pattern.dim();
        let max_diag = (0..n)
            .map(|i| values[pattern.offset(i, i)].abs())
            .fold(0.0, f64::max);
        let floor = rel_tol * max_diag;
        for i in 0..n {
            let fi = pattern.first[i];
            let si = pattern.start[i];
            // t_ij = a_ij - sum_k t_ik l_jk  (t_ik = l_ik d_k), j in [fi, i)
            for j in fi..i {
                let fj = pattern.first[j];
                let sj = pattern.start[j];
                let k0 = fi.max(fj);
                let (head, tail) = values.split_at_mut(si);
                let row_i = &tail[..j - fi];
                let row_j = &head[sj..sj + (j - fj)];
                let dot: f64 = row_i[k0 - fi..]
                    .iter()
                    .zip(&row_j[k0 - fj..])
                    .map(|(a, b)| a * b)
                    .sum();
                tail[j - fi] -= dot;
            }
            let mut diag = values[si + i - fi];
            for j in fi..i {
                let t = values[si + j - fi];
                let l = t / values[pattern.offset(j, j)];
                values[si + j - fi] = l;
                diag -= t * l;
            }
            if !(diag > floor) {
                return Err(ZeroPivot {
                    equation: i,
                    pivot: diag,
                });
            }
            values[si + i - fi] = diag;
        }
        Ok(SkylineFactor { pattern, values })
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let p = self.pattern;
        let n = p.dim();
        assert_eq!(x.len(), n);
        for i in 0..n {
            let fi = p.first[i];
            let row = &self.values[p.start[i]..p.start[i] + (i - fi)];
            let dot: f64 = row.iter().zip(&x[fi..i]).map(|(l, v)| l * v).sum();
            x[i] -= dot;
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi /= self.values[p.offset(i, i)];
        }
        for i in (0..n).rev() {
            let fi = p.first[i];
            let xi = x[i];
            let row = &self.values[p.start[i]..p.start[i] + (i - fi)];
            for (k, l) in row.iter().enumerate() {
                x[fi + k] -= l * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_skyline(a: &[Vec<f64>]) -> (SkylinePattern, Vec<f64>) {
        let n = a.len();
        let adjacency: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && a[i][j] != 0.0).collect())
            .collect();
        let pattern = SkylinePattern::from_adjacency(&adjacency);
        let mut values = vec![0.0; pattern.nnz()];
        for i in 0..n {
            for j in pattern.first[i]..=i {
                values[pattern.offset(i, j)] = a[i][j];
            }
        }
        (pattern, values)
    }

    #[test]
    fn solves_tridiagonal() {
        let n = 6;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 4.0;
            if i + 1 < n {
                a[i][i + 1] = -1.0;
                a[i + 1][i] = -1.0;
            }
        }
        let (pattern, values) = dense_to_skyline(&a);
        let f = SkylineFactor::factor(&pattern, values, 1e-14).unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut x = b.clone();
        f.solve_in_place(&mut x);
        for i in 0..n {
            let r: f64 = (0..n).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let (pattern, values) = dense_to_skyline(&a);
        assert!(SkylineFactor::factor(&pattern, values, 1e-14).is_err());
    }

    #[test]
    fn rcm_is_permutation() {
        // 4x3 grid graph
        let (w, h) = (4, 3);
        let adjacency: Vec<Vec<usize>> = (0..w * h)
            .map(|v| {
                let (x, y) = (v % w, v / w);
                let mut n = vec![];
                if x > 0 {
                    n.push(v - 1);
                }
                if x + 1 < w {
                    n.push(v + 1);
                }
                if y > 0 {
                    n.push(v - w);
                }
                if y + 1 < h {
                    n.push(v + w);
                }
                n
            })
            .collect();
        let mut perm = reverse_cuthill_mckee(&adjacency);
        perm.sort_unstable();
        assert_eq!(perm, (0..w * h).collect::<Vec<_>>());
    }
}
