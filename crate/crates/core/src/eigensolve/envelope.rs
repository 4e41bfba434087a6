//! Reverse Cuthill-McKee ordering and variable-band (envelope) Cholesky.

use std::collections::VecDeque;

use crate::laplacian::CsrMatrix;

fn bfs_levels(a: &CsrMatrix, start: usize, mark: &mut [bool]) -> Vec<Vec<usize>> {
    let mut levels = vec![vec![start]];
    let mut seen = vec![start];
    mark[start] = true;
    loop {
        let mut next = Vec::new();
        for &u in levels.last().unwrap() {
            for &w in a.row(u).0 {
                if !mark[w] {
                    mark[w] = true;
                    seen.push(w);
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        levels.push(next);
    }
    for s in seen {
        mark[s] = false;
    }
    levels
}

/// Permutation `perm[new] = old` that narrows the profile of a structurally
/// symmetric matrix.
pub(crate) fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut placed = vec![false; n];
    let mut scratch = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let mut root = (0..n)
            .filter(|&i| !placed[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        // Pseudo-peripheral root: walk to the far end until eccentricity stops growing.
        let mut depth = bfs_levels(a, root, &mut scratch).len();
        for _ in 0..8 {
            let levels = bfs_levels(a, root, &mut scratch);
            let cand = *levels
                .last()
                .unwrap()
                .iter()
                .min_by_key(|&&i| (degree[i], i))
                .unwrap();
            let d = bfs_levels(a, cand, &mut scratch).len();
            if d <= depth {
                break;
            }
            depth = d;
            root = cand;
        }
        let mut queue = VecDeque::from([root]);
        placed[root] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = a.row(u).0.iter().copied().filter(|&w| !placed[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                placed[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `A = L Lᵀ` in a permuted ordering, storing each row of `L` from its first
/// nonzero to the diagonal.
#[derive(Debug, Clone)]
pub(crate) struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factor a symmetric positive definite matrix. On failure returns the
    /// original index of the row whose pivot was not positive.
    pub(crate) fn factor(a: &CsrMatrix) -> Result<Self, usize> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0; n];
        let mut start = vec![0; n + 1];
        for i in 0..n {
            let lo = a.row(perm[i]).0.iter().map(|&j| inv[j]).min().unwrap_or(i).min(i);
            first[i] = lo;
            start[i + 1] = start[i] + (i - lo + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            let (cols, vals) = a.row(perm[i]);
            for (&j, &v) in cols.iter().zip(vals) {
                let jn = inv[j];
                if jn <= i {
                    data[start[i] + jn - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(start[i]);
            let row = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let lj = &done[start[j]..start[j] + (j - fj + 1)];
                let s = row[j - fi] - dot(&row[lo - fi..j - fi], &lj[lo - fj..j - fj]);
                row[j - fi] = s / lj[j - fj];
            }
            let d = row[i - fi] - dot(&row[..i - fi], &row[..i - fi]);
            if !(d > 0.0) {
                return Err(perm[i]);
            }
            row[i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            start,
            data,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.start[i]..self.start[i + 1]]
    }

    /// Solve `A X = B` for column-major `B` with any number of columns,
    /// overwriting it with `X`. Columns are interleaved internally so each
    /// factor row is read once per block.
    pub(crate) fn solve_block(&self, b: &mut [f64], work: &mut Vec<f64>) {
        let n = self.perm.len();
        let cols = b.len() / n;
        if cols <= 1 {
            if cols == 1 {
                self.solve_in_place(b, work);
            }
            return;
        }
        work.clear();
        work.resize(n * cols, 0.0);
        let y = work.as_mut_slice();
        for (i, &p) in self.perm.iter().enumerate() {
            for c in 0..cols {
                y[i * cols + c] = b[c * n + p];
            }
        }
        let mut acc = vec![0.0; cols];
        for i in 0..n {
            let fi = self.first[i];
            let row = self.row(i);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (l, yj) in row[..i - fi].iter().zip(y[fi * cols..i * cols].chunks_exact(cols)) {
                for (a, v) in acc.iter_mut().zip(yj) {
                    *a += l * v;
                }
            }
            let d = row[i - fi];
            for (c, a) in acc.iter().enumerate() {
                y[i * cols + c] = (y[i * cols + c] - a) / d;
            }
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            let d = row[i - fi];
            for c in 0..cols {
                y[i * cols + c] /= d;
            }
            let (head, tail) = y.split_at_mut(i * cols);
            let yi = &tail[..cols];
            for (l, yj) in row[..i - fi].iter().zip(head[fi * cols..].chunks_exact_mut(cols)) {
                for (v, w) in yj.iter_mut().zip(yi) {
                    *v -= l * w;
                }
            }
        }
        for (i, &p) in self.perm.iter().enumerate() {
            for c in 0..cols {
                b[c * n + p] = y[i * cols + c];
            }
        }
    }

    /// Solve `A x = b`; `b` is overwritten with `x`.
    pub(crate) fn solve_in_place(&self, b: &mut [f64], work: &mut Vec<f64>) {
        let n = self.perm.len();
        work.clear();
        work.extend(self.perm.iter().map(|&p| b[p]));
        let y = work.as_mut_slice();
        for i in 0..n {
            let fi = self.first[i];
            let row = self.row(i);
            let s = y[i] - dot(&row[..i - fi], &y[fi..i]);
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            y[i] /= row[i - fi];
            let yi = y[i];
            for (yj, l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yj -= l * yi;
            }
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = y[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d_plus_identity(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        t.push((0, n - 1, -0.5));
        t.push((n - 1, 0, -0.5));
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d_plus_identity(30);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = laplacian_1d_plus_identity(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = a.mul_vec(&x);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        chol.solve_in_place(&mut b, &mut Vec::new());
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
        // A ring needs a band of about two, not n.
        assert!(chol.data.len() < 4 * 50);
    }

    #[test]
    fn block_solve_matches_single_solves() {
        let a = laplacian_1d_plus_identity(40);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..40 * 5).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
        let mut block = b.clone();
        chol.solve_block(&mut block, &mut Vec::new());
        for (c, col) in b.chunks(40).enumerate() {
            let mut x = col.to_vec();
            chol.solve_in_place(&mut x, &mut Vec::new());
            for (u, v) in x.iter().zip(&block[c * 40..(c + 1) * 40]) {
                assert!((u - v).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(EnvelopeCholesky::factor(&a).is_err());
    }
}
