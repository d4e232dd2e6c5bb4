//! Smallest eigenpairs of real symmetric operators, optionally restricted to the orthogonal
//! complement of a set of constraint vectors.
//!
//! Problems of dimension at most [`DENSE_LIMIT`] are solved densely. Larger ones use block
//! LOBPCG with the operator's preconditioner. Constraints are handled by deflation: after
//! orthonormalizing them into `Q`, the solver works with `P A P + s Q Qᵀ` (`P = I − QQᵀ`),
//! where the shift `s` exceeds the spectrum of `A`.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::numerics::XorShift64Star;

/// Largest dimension handled by the dense solver.
pub const DENSE_LIMIT: usize = 2048;

/// Real symmetric operator acting on vectors of length [`SymOp::dim`].
pub trait SymOp {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Approximate inverse used to accelerate the iterative solver.
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }

    /// Dense matrix of the operator, symmetrized.
    fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        let mut a = Mat::<f64>::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            for i in 0..n {
                a[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        symmetrize(&mut a);
        a
    }
}

/// Solver selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    /// Dense up to [`DENSE_LIMIT`], iterative above.
    Auto,
    Dense,
    MatrixFree,
}

pub(crate) fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Orthonormalizes `vectors` by twice-repeated modified Gram–Schmidt against `basis` and
/// each other. Columns that lose more than `drop` of their norm are discarded when
/// `strict` is false and reported as [`Error::RankDeficient`] otherwise.
fn orthonormalize(
    basis: &[Vec<f64>],
    vectors: Vec<Vec<f64>>,
    drop: f64,
    strict: bool,
) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        let start = dot(&v, &v).sqrt();
        if start == 0.0 {
            if strict {
                return Err(Error::RankDeficient);
            }
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter().chain(out.iter()) {
                let h = dot(q, &v);
                axpy(-h, q, &mut v);
            }
        }
        let nrm = dot(&v, &v).sqrt();
        if nrm <= drop * start {
            if strict {
                return Err(Error::RankDeficient);
            }
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        out.push(v);
    }
    Ok(out)
}

/// Orthonormal basis of the constraint span; fails on (numerically) dependent constraints.
pub fn orthonormal_constraints(constraints: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    orthonormalize(&[], constraints.to_vec(), 1e-10, true)
}

fn project_out(q: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for qi in q {
            let h = dot(qi, v);
            axpy(-h, qi, v);
        }
    }
}

/// Dense symmetric eigen-decomposition, eigenvalues ascending.
fn dense_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// `k` smallest eigenpairs of `op` on the orthogonal complement of `constraints`
/// (Euclidean inner product), eigenvalues ascending and eigenvectors of unit Euclidean norm.
pub fn smallest_eigenpairs(
    op: &dyn SymOp,
    k: usize,
    constraints: &[Vec<f64>],
    method: EigenMethod,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.dim();
    let q = orthonormal_constraints(constraints)?;
    if k == 0 {
        return Ok(Vec::new());
    }
    if k + q.len() > n {
        return Err(Error::SolverFailure(format!("asked for {k} eigenpairs in dimension {}", n - q.len())));
    }
    let dense = match method {
        EigenMethod::Auto => n <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::MatrixFree => false,
    };
    if dense {
        dense_constrained(op, k, &q)
    } else {
        lobpcg(op, k, &q, 1e-9, 2000)
    }
}

fn dense_constrained(op: &dyn SymOp, k: usize, q: &[Vec<f64>]) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.dim();
    let mut a = op.to_dense();
    if !q.is_empty() {
        let bound = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let shift = 2.0 * bound + 1.0;
        // P A P = A − Q(QᵀA) − (AQ)Qᵀ + Q(QᵀAQ)Qᵀ with the shift added on span(Q).
        let m = q.len();
        let qm = Mat::<f64>::from_fn(n, m, |i, j| q[j][i]);
        let aq = &a * &qm;
        let qaq = qm.transpose() * &aq;
        let mut corr = &qm * qm.transpose() * shift;
        corr += &qm * &qaq * qm.transpose();
        corr -= &qm * aq.transpose();
        corr -= &aq * qm.transpose();
        a += corr;
        symmetrize(&mut a);
    }
    let (values, vectors) = dense_eigen(&a)?;
    Ok((0..k)
        .map(|j| (values[j], (0..n).map(|i| vectors[(i, j)]).collect()))
        .collect())
}

/// Applies `op` restricted to the complement of `q`.
fn apply_projected(op: &dyn SymOp, q: &[Vec<f64>], x: &[f64], y: &mut [f64]) {
    let mut xp = x.to_vec();
    project_out(q, &mut xp);
    op.apply(&xp, y);
    project_out(q, y);
}

/// Block LOBPCG for the `k` smallest eigenpairs on the complement of the orthonormal set `q`.
fn lobpcg(op: &dyn SymOp, k: usize, q: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.dim();
    let m = (k + 3).min(n - q.len());
    let mut rng = XorShift64Star::new(0x1ead);
    let init: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            project_out(q, &mut v);
            v
        })
        .collect();
    let mut x = orthonormalize(q, init, 1e-8, false)?;
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut theta = vec![0.0; x.len()];
    let mut ax = vec![vec![0.0; n]; x.len()];
    for _ in 0..max_iter {
        // Rayleigh–Ritz on span[X, W, P].
        let mut basis = x.clone();
        if !theta.iter().all(|&t| t == 0.0) {
            let mut w = Vec::with_capacity(x.len());
            for (j, xj) in x.iter().enumerate() {
                let r: Vec<f64> = ax[j].iter().zip(xj).map(|(a, b)| a - theta[j] * b).collect();
                let mut z = vec![0.0; n];
                op.precondition(&r, &mut z);
                project_out(q, &mut z);
                w.push(z);
            }
            let extra: Vec<Vec<f64>> = w.into_iter().chain(p.iter().cloned()).collect();
            let more = orthonormalize(&basis, extra, 1e-10, false)?;
            basis.extend(more);
        }
        let s = basis.len();
        let mut abasis = vec![vec![0.0; n]; s];
        for (b, ab) in basis.iter().zip(abasis.iter_mut()) {
            apply_projected(op, q, b, ab);
        }
        let g = Mat::<f64>::from_fn(s, s, |i, j| 0.5 * (dot(&basis[i], &abasis[j]) + dot(&basis[j], &abasis[i])));
        let (vals, vecs) = dense_eigen(&g)?;
        let mx = x.len();
        let combine = |cols: &[Vec<f64>], from: usize, j: usize| -> Vec<f64> {
            let mut v = vec![0.0; n];
            for (i, c) in cols.iter().enumerate().skip(from) {
                axpy(vecs[(i, j)], c, &mut v);
            }
            v
        };
        let new_x: Vec<Vec<f64>> = (0..mx).map(|j| combine(&basis, 0, j)).collect();
        let new_ax: Vec<Vec<f64>> = (0..mx).map(|j| combine(&abasis, 0, j)).collect();
        p = if s > mx { (0..mx).map(|j| combine(&basis, mx, j)).collect() } else { Vec::new() };
        theta = vals[..mx].to_vec();
        x = new_x;
        ax = new_ax;
        let converged = (0..k).all(|j| {
            let r: f64 = ax[j].iter().zip(&x[j]).map(|(a, b)| (a - theta[j] * b).powi(2)).sum::<f64>().sqrt();
            r <= tol * f64::max(1.0, theta[j].abs())
        });
        if converged {
            return Ok((0..k).map(|j| (theta[j], x[j].clone())).collect());
        }
    }
    Err(Error::SolverFailure(format!("LOBPCG did not converge in {max_iter} iterations")))
}
