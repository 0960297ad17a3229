//! Lowest eigenpairs of `A u = lambda M u` with `A` sparse symmetric positive
//! semi-definite and `M` diagonal positive.
//!
//! The problem is symmetrized to `B x = lambda x` with `B = M^-1/2 A M^-1/2`.
//! A block Krylov space of the shift-inverted operator `(B - sigma)^-1` is
//! built, `B` is projected onto it (Rayleigh-Ritz), and the wanted Ritz
//! vectors restart the next cycle. Clusters are never split: the returned
//! count is extended until the next Ritz value is separated from the last one.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::SolverError;
use crate::sparse::{CsrMatrix, SkylineLdl};

/// Dense fallback below this dimension.
const DENSE_LIMIT: usize = 300;

/// Relative gap below which two eigenvalues belong to one cluster.
pub const CLUSTER_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigOptions {
    /// Residual tolerance relative to `max(1, |lambda|)`. Residuals below
    /// `100 eps ||B||_inf` are always accepted, since rounding in `B x` alone
    /// reaches that level.
    pub tol: f64,
    pub seed: u64,
    pub shift: f64,
    /// Krylov blocks per restart cycle.
    pub depth: usize,
    pub max_restarts: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions { tol: 1e-9, seed: 0, shift: -1.0, depth: 6, max_restarts: 300 }
    }
}

#[derive(Debug, Clone)]
pub struct EigPairs {
    pub values: Vec<f64>,
    /// `||M^-1/2 (A u - lambda M u)|| / ||u||_M` per pair.
    pub residuals: Vec<f64>,
    /// Eigenvectors `u`, normalized in the `M` inner product.
    pub vectors: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Number of leading values to return so that no cluster is split.
fn cluster_end(values: &[f64], k: usize) -> usize {
    let mut end = k.min(values.len());
    while end < values.len() && end > 0 {
        let a = values[end - 1];
        let b = values[end];
        if (b - a).abs() <= CLUSTER_RTOL * a.abs().max(b.abs()).max(1.0) {
            end += 1;
        } else {
            break;
        }
    }
    end
}

/// The `k` smallest eigenpairs of `A u = lambda M u`, extended over clusters.
pub fn lowest_generalized(a: &CsrMatrix, mass: &[f64], k: usize, opts: &EigOptions) -> Result<EigPairs, SolverError> {
    let n = a.n();
    if mass.len() != n {
        return Err(SolverError::InvalidArgument("mass length differs from matrix size".into()));
    }
    if let Some(i) = mass.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(SolverError::InvalidArgument(format!("mass entry {i} is not positive")));
    }
    if k == 0 || k > n {
        return Err(SolverError::InvalidArgument(format!("requested {k} eigenpairs of a {n}x{n} problem")));
    }
    let dinv: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let b = a.scaled_sym(&dinv);
    let pairs = if n <= DENSE_LIMIT {
        dense(&b, k)
    } else if constant_in_kernel(a) {
        // B annihilates M^1/2 1 exactly; lock it instead of resolving it to
        // rounding level
        let mut z: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
        let nz = norm(&z);
        z.iter_mut().for_each(|v| *v /= nz);
        let res = residual(&b, &z, 0.0);
        let rest = if k > 1 { Some(krylov(&b, k - 1, opts, Some(&z))?) } else { None };
        let mut out = EigPairs { values: vec![0.0], residuals: vec![res], vectors: vec![z] };
        if let Some(r) = rest {
            out.values.extend(r.values);
            out.residuals.extend(r.residuals);
            out.vectors.extend(r.vectors);
        }
        out
    } else {
        krylov(&b, k, opts, None)?
    };
    Ok(EigPairs {
        vectors: pairs.vectors.iter().map(|x| x.iter().zip(&dinv).map(|(v, d)| v * d).collect()).collect(),
        ..pairs
    })
}

fn residual(b: &CsrMatrix, x: &[f64], lambda: f64) -> f64 {
    let mut y = vec![0.0; x.len()];
    b.mul_vec(x, &mut y);
    let r: Vec<f64> = y.iter().zip(x).map(|(bx, xi)| bx - lambda * xi).collect();
    norm(&r) / norm(x)
}

/// Row sums of `a` vanish up to rounding.
fn constant_in_kernel(a: &CsrMatrix) -> bool {
    let scale = inf_norm(a);
    (0..a.n()).all(|i| a.row(i).map(|(_, v)| v).sum::<f64>().abs() <= 1e3 * f64::EPSILON * scale)
}

fn inf_norm(b: &CsrMatrix) -> f64 {
    (0..b.n()).map(|i| b.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn dense(b: &CsrMatrix, k: usize) -> EigPairs {
    let n = b.n();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, j, v) in b.triplets() {
        m[(i, j)] = v;
    }
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let end = cluster_end(&values, k);
    let vectors: Vec<Vec<f64>> =
        idx[..end].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    let residuals = vectors.iter().zip(&values).map(|(x, &l)| residual(b, x, l)).collect();
    EigPairs { values: values[..end].to_vec(), residuals, vectors }
}

/// Orthonormalizes `w` against `basis` and itself (two classical Gram-Schmidt
/// passes). Columns that collapse are dropped.
fn orthonormalize(basis: &[Vec<f64>], w: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(w.len());
    for mut v in w {
        let n0 = norm(&v);
        if n0 == 0.0 {
            continue;
        }
        for _pass in 0..2 {
            let coeffs: Vec<f64> = basis.iter().chain(out.iter()).map(|q| dot(q, &v)).collect();
            for (q, c) in basis.iter().chain(out.iter()).zip(coeffs) {
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-13 * n0 {
            v.iter_mut().for_each(|x| *x /= nv);
            out.push(v);
        }
    }
    out
}

fn krylov(b: &CsrMatrix, k: usize, opts: &EigOptions, locked: Option<&[f64]>) -> Result<EigPairs, SolverError> {
    let n = b.n();
    let shift = vec![opts.shift; n];
    let ldl = SkylineLdl::factor(b, &shift)?;
    if ldl.negative_count() > 0 {
        return Err(SolverError::Factorization(format!(
            "matrix has {} eigenvalues below the shift {}",
            ldl.negative_count(),
            opts.shift
        )));
    }

    // residuals cannot drop below the rounding level of B x
    let floor = 100.0 * f64::EPSILON * inf_norm(b);

    let mut block = k + k.max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // first start vector is the constant function, which lies in the kernel
    // of a Neumann Laplacian; the rest are pseudo-random
    let lock: Vec<Vec<f64>> = locked.map(|z| vec![z.to_vec()]).unwrap_or_default();
    let mut start: Vec<Vec<f64>> = Vec::with_capacity(block);
    if locked.is_none() {
        start.push(vec![1.0; n]);
    }
    let fill = |start: &mut Vec<Vec<f64>>, upto: usize, rng: &mut ChaCha8Rng| {
        while start.len() < upto {
            start.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
    };
    fill(&mut start, block, &mut rng);
    let mut x = orthonormalize(&lock, start);

    for _cycle in 0..opts.max_restarts {
        let mut basis: Vec<Vec<f64>> = x.clone();
        let mut last = x.clone();
        for _ in 1..opts.depth {
            let w: Vec<Vec<f64>> = last.par_iter().map(|v| ldl.solve(v)).collect();
            let q = orthonormalize(&basis, orthonormalize(&lock, w));
            if q.is_empty() {
                break;
            }
            basis.extend(q.iter().cloned());
            last = q;
        }
        let m = basis.len();
        let bv: Vec<Vec<f64>> = basis
            .par_iter()
            .map(|v| {
                let mut y = vec![0.0; n];
                b.mul_vec(v, &mut y);
                y
            })
            .collect();
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = 0.5 * (dot(&basis[i], &bv[j]) + dot(&basis[j], &bv[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
        let take = block.min(m);
        let theta: Vec<f64> = idx[..take].iter().map(|&i| eig.eigenvalues[i]).collect();
        let ritz: Vec<Vec<f64>> = idx[..take]
            .par_iter()
            .map(|&c| {
                let mut y = vec![0.0; n];
                for (r, q) in basis.iter().enumerate() {
                    let w = eig.eigenvectors[(r, c)];
                    for (yi, qi) in y.iter_mut().zip(q) {
                        *yi += w * qi;
                    }
                }
                y
            })
            .collect();

        let end = cluster_end(&theta, k);
        if end + 2 > take {
            // the block cannot see past the current cluster; widen it
            block = end + 4;
            let mut s = ritz.clone();
            fill(&mut s, block, &mut rng);
            x = orthonormalize(&lock, s);
            continue;
        }
        let residuals: Vec<f64> = ritz[..end].iter().zip(&theta).map(|(y, &l)| residual(b, y, l)).collect();
        let converged = residuals.iter().zip(&theta).all(|(r, l)| *r <= (opts.tol * l.abs().max(1.0)).max(floor));
        // no new direction left: the Ritz pairs are as accurate as rounding allows
        let stagnant = m == x.len();
        if converged || stagnant {
            return Ok(EigPairs { values: theta[..end].to_vec(), residuals, vectors: ritz[..end].to_vec() });
        }
        x = ritz;
    }
    Err(SolverError::NoConvergence(format!("{} restart cycles", opts.max_restarts)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Lumped-mass P1 Neumann Laplacian on `[0, 1]` with `n` cells.
    fn neumann_1d(n: usize) -> (CsrMatrix, Vec<f64>) {
        let h = 1.0 / n as f64;
        let mut t = Vec::new();
        let mut m = vec![0.0; n + 1];
        for c in 0..n {
            for (i, j, v) in [(c, c, 1.0), (c + 1, c + 1, 1.0), (c, c + 1, -1.0), (c + 1, c, -1.0)] {
                t.push((i, j, v / h));
            }
            m[c] += h / 2.0;
            m[c + 1] += h / 2.0;
        }
        (CsrMatrix::from_triplets(n + 1, &t), m)
    }

    #[test]
    fn dense_and_krylov_agree() {
        let (a, m) = neumann_1d(200);
        let dense = lowest_generalized(&a, &m, 4, &EigOptions::default()).unwrap();
        let (a2, m2) = neumann_1d(2000);
        let sparse = lowest_generalized(&a2, &m2, 4, &EigOptions::default()).unwrap();
        assert!(dense.values[0].abs() < 1e-9);
        assert!(sparse.values[0].abs() < 1e-9);
        assert!((dense.values[1] - PI * PI).abs() < 1e-3);
        assert!((sparse.values[1] - PI * PI).abs() < 1e-5);
        for r in &sparse.residuals {
            assert!(*r <= 1e-6);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (a, m) = neumann_1d(1000);
        let o = EigOptions { seed: 7, ..Default::default() };
        let x = lowest_generalized(&a, &m, 3, &o).unwrap();
        let y = lowest_generalized(&a, &m, 3, &o).unwrap();
        assert_eq!(x.values, y.values);
    }

    #[test]
    fn clusters_are_not_split() {
        // two disjoint copies of the same chain: every eigenvalue is double
        let (a, m) = neumann_1d(400);
        let n = a.n();
        let mut t = a.triplets();
        t.extend(a.triplets().into_iter().map(|(i, j, v)| (i + n, j + n, v)));
        let big = CsrMatrix::from_triplets(2 * n, &t);
        let mm: Vec<f64> = m.iter().chain(m.iter()).copied().collect();
        let r = lowest_generalized(&big, &mm, 3, &EigOptions::default()).unwrap();
        assert_eq!(r.values.len(), 4);
        assert!((r.values[2] - r.values[3]).abs() < 1e-8);
    }
}
