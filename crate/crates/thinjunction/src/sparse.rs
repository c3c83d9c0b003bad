//! Compressed sparse row matrices over mesh connectivity and a Jacobi
//! preconditioned conjugate-gradient solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("conjugate gradient stalled after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
}

#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Zero matrix with the sparsity pattern of the node graph of `cells`.
    pub fn from_cells(n: usize, cells: &[[usize; 4]]) -> Csr {
        let mut adj: Vec<Vec<u32>> = (0..n).map(|i| vec![i as u32]).collect();
        for c in cells {
            for &a in c {
                for &b in c {
                    if a != b {
                        adj[a].push(b as u32);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
            *row = Vec::new();
        }
        let nnz = cols.len();
        Csr { n, row_ptr, cols, vals: vec![0.0; nnz] }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        self.row_ptr[i] + row.binary_search(&(j as u32)).expect("entry outside sparsity pattern")
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.vals[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&(j as u32)).map_or(0.0, |s| self.vals[self.row_ptr[i] + s])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k] as usize];
            }
            *yi = s;
        });
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).with_min_len(4096).map(|(x, y)| x * y).sum()
}

fn project_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// How the operator is restricted before the solve.
#[derive(Clone, Debug)]
pub enum Constraint {
    /// Nonsingular system.
    None,
    /// Listed unknowns are fixed to zero (homogeneous Dirichlet).
    Fixed(Vec<usize>),
    /// Singular with constant kernel; iterates stay orthogonal to constants.
    ZeroMean,
}

/// Coarse space for a two-level additive preconditioner: every fine
/// unknown is a combination of at most two coarse unknowns.
#[derive(Clone, Debug)]
pub struct CoarseSpace {
    pub n: usize,
    pub map: Vec<[(u32, f64); 2]>,
}

impl CoarseSpace {
    fn restrict(&self, r: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.n];
        for (i, m) in self.map.iter().enumerate() {
            for &(k, w) in m {
                c[k as usize] += w * r[i];
            }
        }
        c
    }

    /// Galerkin operator `P^T A P` with masked rows and columns.
    fn galerkin(&self, a: &Csr, mask: &[f64]) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n, self.n);
        for i in 0..a.n {
            if mask[i] == 0.0 {
                continue;
            }
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.cols[k] as usize;
                if mask[j] == 0.0 {
                    continue;
                }
                for &(p, wp) in &self.map[i] {
                    for &(q, wq) in &self.map[j] {
                        if wp != 0.0 && wq != 0.0 {
                            g[(p as usize, q as usize)] += wp * a.vals[k] * wq;
                        }
                    }
                }
            }
        }
        g
    }
}

struct CoarseSolver<'a> {
    space: &'a CoarseSpace,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> CoarseSolver<'a> {
    fn new(space: &'a CoarseSpace, a: &Csr, mask: &[f64], singular: bool) -> Option<Self> {
        let mut g = space.galerkin(a, mask);
        let scale = g.diagonal().max();
        for k in 0..space.n {
            // unused coarse unknowns (fully masked)
            if g[(k, k)] == 0.0 {
                g[(k, k)] = scale.max(1.0);
            }
        }
        if singular {
            g.add_scalar_mut(scale / space.n as f64);
        }
        Cholesky::new(g).map(|chol| CoarseSolver { space, chol })
    }

    fn add_correction(&self, r: &[f64], z: &mut [f64], mask: &[f64]) {
        let c = self.chol.solve(&DVector::from_vec(self.space.restrict(r)));
        for (i, m) in self.space.map.iter().enumerate() {
            z[i] += mask[i] * m.iter().map(|&(k, w)| w * c[k as usize]).sum::<f64>();
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Solve `A x = b` by Jacobi-preconditioned CG to relative residual `tol`.
pub fn pcg(a: &Csr, b: &[f64], constraint: &Constraint, tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgStats), SolveError> {
    pcg_two_level(a, b, constraint, tol, max_iter, None)
}

/// CG with Jacobi smoothing plus an optional additive coarse correction.
pub fn pcg_two_level(
    a: &Csr,
    b: &[f64],
    constraint: &Constraint,
    tol: f64,
    max_iter: usize,
    coarse: Option<&CoarseSpace>,
) -> Result<(Vec<f64>, CgStats), SolveError> {
    let n = a.n;
    let mut mask = vec![1.0; n];
    if let Constraint::Fixed(ids) = constraint {
        for &i in ids {
            mask[i] = 0.0;
        }
    }
    let zero_mean = matches!(constraint, Constraint::ZeroMean);
    let diag = a.diagonal();
    let minv: Vec<f64> = (0..n).map(|i| if diag[i] > 0.0 { mask[i] / diag[i] } else { 0.0 }).collect();
    let mut r: Vec<f64> = b.iter().zip(&mask).map(|(x, m)| x * m).collect();
    if zero_mean {
        project_mean(&mut r);
    }
    let bnorm = dot(&r, &r).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, CgStats { iterations: 0, residual: 0.0 }));
    }
    let coarse = coarse.and_then(|c| CoarseSolver::new(c, a, &mask, zero_mean));
    let precond = |r: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = r.iter().zip(&minv).map(|(a, b)| a * b).collect();
        if let Some(c) = &coarse {
            c.add_correction(r, &mut z, &mask);
        }
        if zero_mean {
            project_mean(&mut z);
        }
        z
    };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec(&p, &mut q);
        q.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        let alpha = rz / dot(&p, &q);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        if zero_mean && it % 50 == 0 {
            project_mean(&mut r);
        }
        let res = dot(&r, &r).sqrt() / bnorm;
        if res <= tol {
            if zero_mean {
                project_mean(&mut x);
            }
            return Ok((x, CgStats { iterations: it, residual: res }));
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let res = dot(&r, &r).sqrt() / bnorm;
    Err(SolveError::NotConverged { iterations: max_iter, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Laplacian chain embedded as degenerate cells.
    fn chain(n: usize) -> Csr {
        let cells: Vec<[usize; 4]> = (0..n - 1).map(|i| [i, i + 1, i + 1, i + 1]).collect();
        let mut a = Csr::from_cells(n, &cells);
        for i in 0..n - 1 {
            a.add(i, i, 1.0);
            a.add(i + 1, i + 1, 1.0);
            a.add(i, i + 1, -1.0);
            a.add(i + 1, i, -1.0);
        }
        a
    }

    #[test]
    fn dirichlet_chain_is_linear() {
        let n = 50;
        let mut a = chain(n);
        // pin node 0 through a penalty-free Dirichlet mask, load the far end
        let mut b = vec![0.0; n];
        b[n - 1] = 1.0;
        let (x, _) = pcg(&a, &b, &Constraint::Fixed(vec![0]), 1e-12, 500).unwrap();
        for (i, v) in x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-9);
        }
        a.add(0, 0, 1.0);
        assert_eq!(a.get(0, 0), 2.0);
    }

    #[test]
    fn coarse_space_cuts_iterations() {
        let n = 400;
        let a = chain(n);
        let mut b = vec![0.0; n];
        b[0] = -1.0;
        b[n - 1] = 1.0;
        // hats on every 5th node
        let h = 5usize;
        let map = (0..n)
            .map(|i| {
                let k = (i / h).min(n / h - 1);
                let t = (i - k * h) as f64 / h as f64;
                [(k as u32, 1.0 - t), (k as u32 + 1, t)]
            })
            .collect();
        let cs = CoarseSpace { n: n / h + 1, map };
        let (x0, s0) = pcg(&a, &b, &Constraint::ZeroMean, 1e-10, 5000).unwrap();
        let (x1, s1) = pcg_two_level(&a, &b, &Constraint::ZeroMean, 1e-10, 5000, Some(&cs)).unwrap();
        assert!(s1.iterations * 4 < s0.iterations, "{} vs {}", s1.iterations, s0.iterations);
        assert!(x0.iter().zip(&x1).all(|(p, q)| (p - q).abs() < 1e-6));
    }

    #[test]
    fn neumann_chain_zero_mean() {
        let n = 40;
        let a = chain(n);
        let mut b = vec![0.0; n];
        b[0] = -1.0;
        b[n - 1] = 1.0;
        let (x, _) = pcg(&a, &b, &Constraint::ZeroMean, 1e-12, 500).unwrap();
        assert!(x.iter().sum::<f64>().abs() < 1e-9);
        let ax = a.apply(&x);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-9);
        }
    }
}
