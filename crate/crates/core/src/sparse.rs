//! Sparse symmetric matrices: CSR storage, reverse Cuthill-McKee ordering,
//! envelope LDL^T factorization with inertia, and a plain-text triplet format.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::SolverError;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut pos = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0f64; triplets.len()];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet index out of range");
            cols[pos[i]] = j;
            vals[pos[i]] = v;
            pos[i] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(j, _)| j);
            for &(j, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries `(col, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match r.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut top: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                top = top.max(v.abs());
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        if top == 0.0 {
            0.0
        } else {
            worst / top
        }
    }

    /// `D A D` for a diagonal `D`.
    pub fn scaled_sym(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= d[i] * d[self.col_idx[k]];
            }
        }
        out
    }

    /// Submatrix on the kept indices, in the given order.
    pub fn restrict(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (j, v) in self.row(old_i) {
                if map[j] != usize::MAX {
                    t.push((new_i, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), &t)
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nbrs = Vec::new();
    while order.len() < n {
        // start each component from a minimum-degree vertex, then move to a
        // pseudo-peripheral one by repeated breadth-first sweeps
        let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
        let root = pseudo_peripheral(a, start, &visited, &degree);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).map(|(j, _)| j).filter(|&j| j != v && !visited[j]));
            nbrs.sort_by_key(|&j| (degree[j], j));
            nbrs.dedup();
            for &j in &nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &CsrMatrix, start: usize, blocked: &[bool], degree: &[usize]) -> usize {
    let mut root = start;
    let mut ecc = 0;
    for _ in 0..8 {
        let (last_level, depth) = bfs_last_level(a, root, blocked);
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        let cand = last_level.into_iter().min_by_key(|&i| (degree[i], i)).unwrap();
        if cand == root {
            break;
        }
        root = cand;
    }
    root
}

fn bfs_last_level(a: &CsrMatrix, root: usize, blocked: &[bool]) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; a.n()];
    level[root] = 0;
    let mut frontier = vec![root];
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for (j, _) in a.row(v) {
                if !blocked[j] && level[j] == usize::MAX {
                    level[j] = depth + 1;
                    next.push(j);
                }
            }
        }
        if next.is_empty() {
            return (frontier, depth);
        }
        frontier = next;
        depth += 1;
    }
}

/// Envelope (skyline) `LDL^T` factorization of a symmetric matrix in a
/// bandwidth-reducing ordering.
#[derive(Debug, Clone)]
pub struct SkylineLdl {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl SkylineLdl {
    /// Factors `A - diag(shift)`; `shift` may be empty for no shift.
    pub fn factor(a: &CsrMatrix, shift: &[f64]) -> Result<Self, SolverError> {
        let perm = rcm_ordering(a);
        Self::factor_with_ordering(a, shift, perm)
    }

    pub fn factor_with_ordering(a: &CsrMatrix, shift: &[f64], perm: Vec<usize>) -> Result<Self, SolverError> {
        let n = a.n();
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (j, _) in a.row(old_i) {
                let nj = inv_perm[j];
                if nj < first[new_i] {
                    first[new_i] = nj;
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i]);
        }
        let mut l = vec![0f64; start[n]];
        let mut d = vec![0f64; n];
        let mut diag = vec![0f64; n];
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (j, v) in a.row(old_i) {
                let nj = inv_perm[j];
                if nj < new_i {
                    l[start[new_i] + nj - first[new_i]] = v;
                } else if nj == new_i {
                    diag[new_i] = v - shift.get(old_i).copied().unwrap_or(0.0);
                }
            }
        }
        let mut scale: f64 = 0.0;
        for &x in &diag {
            scale = scale.max(x.abs());
        }
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);

        // row-wise Crout: row i holds A(i, j) on entry and u_ij = L_ij d_j after
        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let k0 = fi.max(fj);
                let mut s = l[si + j - fi];
                for k in k0..j {
                    s -= l[si + k - fi] * l[sj + k - fj];
                }
                l[si + j - fi] = s;
            }
            let mut di = diag[i];
            for j in fi..i {
                let u = l[si + j - fi];
                let lij = u / d[j];
                di -= u * lij;
                l[si + j - fi] = lij;
            }
            if !di.is_finite() {
                return Err(SolverError::Factorization(format!("non-finite pivot at row {i}")));
            }
            if di.abs() < tiny {
                di = if di < 0.0 { -tiny } else { tiny };
            }
            d[i] = di;
        }
        Ok(SkylineLdl { n, perm, inv_perm, first, start, l, d })
    }

    /// Number of negative pivots, i.e. negative eigenvalues of the matrix.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn envelope_size(&self) -> usize {
        self.l.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let mut s = y[i];
            for j in fi..i {
                s -= self.l[si + j - fi] * y[j];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let yi = y[i];
            for j in fi..i {
                y[j] -= self.l[si + j - fi] * yi;
            }
        }
        (0..n).map(|old| y[self.inv_perm[old]]).collect()
    }
}

/// Writes a square matrix in the triplet text format:
///
/// ```text
/// %%thinnet-triplet
/// <rows> <cols> <nnz>
/// <row> <col> <value>        (1-based indices, 17 significant digits)
/// ```
pub fn write_triplets(a: &CsrMatrix) -> String {
    let mut s = String::new();
    writeln!(s, "%%thinnet-triplet").unwrap();
    writeln!(s, "{} {} {}", a.n(), a.n(), a.nnz()).unwrap();
    for (i, j, v) in a.triplets() {
        writeln!(s, "{} {} {:.16e}", i + 1, j + 1, v).unwrap();
    }
    s
}

/// Writes a diagonal as a triplet file.
pub fn write_diagonal_triplets(d: &[f64]) -> String {
    let t: Vec<(usize, usize, f64)> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
    write_triplets(&CsrMatrix::from_triplets(d.len(), &t))
}

pub fn read_triplets(text: &str) -> Result<CsrMatrix, SolverError> {
    let bad = |m: &str| SolverError::InvalidArgument(format!("triplet file: {m}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('%'));
    let header = lines.next().ok_or_else(|| bad("missing header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad header")))
        .collect::<Result<_, _>>()?;
    if dims.len() != 3 || dims[0] != dims[1] {
        return Err(bad("header must be `n n nnz`"));
    }
    let mut t = Vec::with_capacity(dims[2]);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad("expected three fields"));
        }
        let i: usize = f[0].parse().map_err(|_| bad("bad row"))?;
        let j: usize = f[1].parse().map_err(|_| bad("bad column"))?;
        let v: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
        if i == 0 || j == 0 || i > dims[0] || j > dims[0] {
            return Err(bad("index out of range"));
        }
        t.push((i - 1, j - 1, v));
    }
    if t.len() != dims[2] {
        return Err(bad("entry count does not match header"));
    }
    Ok(CsrMatrix::from_triplets(dims[0], &t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn ldl_solves_and_counts() {
        let a = laplacian_1d(50);
        let f = SkylineLdl::factor(&a, &[]).unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let mut r = vec![0.0; 50];
        a.mul_vec(&x, &mut r);
        for i in 0..50 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
        assert_eq!(f.negative_count(), 0);
        // eigenvalues 2 - 2 cos(k pi / 51): exactly 25 lie below 2
        let shift = vec![2.0 + 1e-9; 50];
        let g = SkylineLdl::factor(&a, &shift).unwrap();
        assert_eq!(g.negative_count(), 25);
    }

    #[test]
    fn rcm_reduces_profile_of_shuffled_band() {
        let n = 200;
        let a = laplacian_1d(n);
        let shuffle: Vec<usize> = (0..n).map(|i| (i * 37) % n).collect();
        let t: Vec<(usize, usize, f64)> = a.triplets().into_iter().map(|(i, j, v)| (shuffle[i], shuffle[j], v)).collect();
        let b = CsrMatrix::from_triplets(n, &t);
        let f = SkylineLdl::factor(&b, &[]).unwrap();
        assert!(f.envelope_size() <= 2 * n);
        let identity = SkylineLdl::factor_with_ordering(&b, &[], (0..n).collect()).unwrap();
        assert!(identity.envelope_size() > 10 * n);
    }

    #[test]
    fn triplet_round_trip() {
        let a = CsrMatrix::from_triplets(3, &[(0, 0, 1.0 / 3.0), (2, 1, -2.5e-17), (1, 2, 7.0)]);
        let back = read_triplets(&write_triplets(&a)).unwrap();
        assert_eq!(a, back);
        assert!(read_triplets("3 3 1\n0 1 2.0\n").is_err());
    }
}
