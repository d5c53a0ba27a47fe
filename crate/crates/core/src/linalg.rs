//! Small dense and sparse vector helpers.

/// Sparse real vector with sorted, unique indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from unsorted `(index, value)` pairs, summing duplicates and
    /// dropping exact zeros.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut out = SparseVec::new();
        for (i, v) in pairs {
            match out.idx.last() {
                Some(&last) if last == i => *out.val.last_mut().unwrap() += v,
                _ => {
                    out.idx.push(i);
                    out.val.push(v);
                }
            }
        }
        out.prune();
        out
    }

    pub fn from_dense(x: &[f64]) -> Self {
        let mut out = SparseVec::new();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                out.idx.push(i);
                out.val.push(v);
            }
        }
        out
    }

    fn prune(&mut self) {
        let mut k = 0;
        for j in 0..self.idx.len() {
            if self.val[j] != 0.0 {
                self.idx[k] = self.idx[j];
                self.val[k] = self.val[j];
                k += 1;
            }
        }
        self.idx.truncate(k);
        self.val.truncate(k);
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn is_zero(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }

    /// Largest index plus one, or 0 when empty.
    pub fn extent(&self) -> usize {
        self.idx.last().map_or(0, |&i| i + 1)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum()
    }

    /// `dense += scale * self`
    pub fn axpy_into(&self, scale: f64, dense: &mut [f64]) {
        for (i, v) in self.iter() {
            dense[i] += scale * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.axpy_into(1.0, &mut out);
        out
    }

    /// `a - b`
    pub fn sub(a: &SparseVec, b: &SparseVec) -> SparseVec {
        let mut pairs: Vec<(usize, f64)> = a.iter().collect();
        pairs.extend(b.iter().map(|(i, v)| (i, -v)));
        SparseVec::from_pairs(pairs)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(a: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

/// Sum of vectors of equal length.
pub fn sum_rows(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for r in rows {
        axpy(1.0, r, &mut out);
    }
    out
}
