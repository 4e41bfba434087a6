use std::io::Write;

/// Compressed sparse row matrix with sorted, duplicate-free columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sum duplicate `(row, col, value)` entries. Duplicates are added in the
    /// order they appear, so the result does not depend on hashing.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (i, j, v) = triplets[t];
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Sum of all entries, i.e. `1ᵀ A 1`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `alpha * A + beta * B` over the union of both patterns.
    pub fn combine(alpha: f64, a: &CsrMatrix, beta: f64, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!(a.n, b.n);
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(a.nnz().max(b.nnz()));
        let mut values = Vec::with_capacity(a.nnz().max(b.nnz()));
        for i in 0..a.n {
            let (ca, va) = a.row(i);
            let (cb, vb) = b.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let ja = ca.get(p).copied().unwrap_or(usize::MAX);
                let jb = cb.get(q).copied().unwrap_or(usize::MAX);
                if ja == jb {
                    col_idx.push(ja);
                    values.push(alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                } else if ja < jb {
                    col_idx.push(ja);
                    values.push(alpha * va[p]);
                    p += 1;
                } else {
                    col_idx.push(jb);
                    values.push(beta * vb[q]);
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: a.n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[i * self.n + j] = v;
            }
        }
        d
    }

    /// Write one `i j v` line per stored entry (0-based indices).
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }

    /// Parse the format written by [`CsrMatrix::write_triplets`].
    pub fn read_triplets(n: usize, text: &str) -> Result<CsrMatrix, String> {
        let mut triplets = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(format!("line {}: expected 'i j v'", ln + 1));
            }
            let i: usize = parts[0].parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
            let j: usize = parts[1].parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
            let v: f64 = parts[2].parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
            if i >= n || j >= n {
                return Err(format!("line {}: index outside {n}x{n}", ln + 1));
            }
            triplets.push((i, j, v));
        }
        Ok(CsrMatrix::from_triplets(n, &triplets))
    }
}
