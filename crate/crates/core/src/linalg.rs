//! Dense and sparse linear-algebra kernels shared by the samplers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of the one-time diagonal jitter, in units of `trace / N`.
pub const JITTER_SCALE: f64 = 1e-12;

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    /// Factorizes `a`; on failure adds `1e-12 · trace/N` to the diagonal and
    /// retries once. A second failure reports the offending pivot.
    pub fn new_with_jitter(a: &DMatrix<f64>) -> Result<Self> {
        match cholesky_lower(a) {
            Ok(l) => Ok(Self { l, jitter: 0.0 }),
            Err(_) => {
                let n = a.nrows();
                let jitter = JITTER_SCALE * a.trace() / n as f64;
                let mut b = a.clone();
                for i in 0..n {
                    b[(i, i)] += jitter;
                }
                let l = cholesky_lower(&b)
                    .map_err(|(row, pivot)| Error::Factorization { pivot, row })?;
                Ok(Self { l, jitter })
            }
        }
    }

    /// Factorizes without any jitter.
    pub fn new_strict(a: &DMatrix<f64>) -> Result<Self> {
        let l = cholesky_lower(a).map_err(|(row, pivot)| Error::Factorization { pivot, row })?;
        Ok(Self { l, jitter: 0.0 })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Diagonal shift that was needed, zero if the first attempt succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `L z`.
    pub fn mul_l(&self, z: &DVector<f64>) -> DVector<f64> {
        lower_mul(&self.l, z)
    }

    /// Solves `L x = b`.
    pub fn solve_l(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        forward_substitute(&self.l, x.as_mut_slice());
        x
    }

    /// Solves `A x = b` with `A = L Lᵀ`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        forward_substitute(&self.l, x.as_mut_slice());
        backward_substitute_transpose(&self.l, x.as_mut_slice());
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let s = col.as_mut_slice();
            forward_substitute(&self.l, s);
            backward_substitute_transpose(&self.l, s);
        }
        x
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Plain Cholesky; on failure returns the row and value of the failing pivot.
fn cholesky_lower(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, (usize, f64)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err((j, d));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

fn lower_mul(l: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    DVector::from_fn(n, |i, _| (0..=i).map(|k| l[(i, k)] * z[k]).sum())
}

fn forward_substitute(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
}

fn backward_substitute_transpose(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
}

/// LDLᵀ factorization of a symmetric positive definite tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct TridiagonalFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TridiagonalFactor {
    /// `diag` has length `n`, `off` length `n - 1`.
    pub fn new(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        debug_assert_eq!(off.len() + 1, n.max(1));
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut di = diag[i];
            if i > 0 {
                di -= l[i - 1] * l[i - 1] * d[i - 1];
            }
            if !(di > 0.0) {
                return Err(Error::Factorization { pivot: di, row: i });
            }
            d[i] = di;
            if i + 1 < n {
                l[i] = off[i] / di;
            }
        }
        Ok(Self { d, l })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Copy, Debug)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
///
/// Stops when `‖b − A x‖ ≤ tol ‖b‖`; reports an error if `max_iter` passes first.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r) / b_norm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(Error::SolverDivergence { residual: res, iterations: it });
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm(&r) / b_norm;
        it += 1;
    }
    Ok(CgReport { iterations: it, relative_residual: res })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Symmetric matrix from the lower triangle of `a`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn cholesky_reconstructs_and_solves() {
        let a = spd(6);
        let f = CholeskyFactor::new_with_jitter(&a).unwrap();
        assert_eq!(f.jitter(), 0.0);
        let rec = f.l() * f.l().transpose();
        assert!((rec - &a).amax() < 1e-12);
        let b = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        let x = f.solve(&b);
        assert!((&a * x - &b).amax() < 1e-12);
        let det = a.clone().determinant();
        assert!((f.log_det() - det.ln()).abs() < 1e-10);
        let y = f.solve_l(&b);
        assert!((f.mul_l(&y) - b).amax() < 1e-12);
    }

    #[test]
    fn jitter_rescues_semidefinite_and_reports_failure() {
        let v = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let a = &v * v.transpose();
        let f = CholeskyFactor::new_with_jitter(&a).unwrap();
        assert!((f.jitter() - 1e-12).abs() < 1e-24);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match CholeskyFactor::new_with_jitter(&bad) {
            Err(Error::Factorization { pivot, row }) => {
                assert_eq!(row, 1);
                assert!(pivot < 0.0);
            }
            other => panic!("expected factorization error, got {other:?}"),
        }
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let diag = [4.0, 5.0, 6.0, 5.0, 4.0];
        let off = [-1.0, -2.0, -1.5, -0.5];
        let f = TridiagonalFactor::new(&diag, &off).unwrap();
        let dense = DMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        });
        let b = [1.0, -2.0, 0.5, 3.0, -1.0];
        let mut x = b;
        f.solve_in_place(&mut x);
        let r = &dense * DVector::from_row_slice(&x) - DVector::from_row_slice(&b);
        assert!(r.amax() < 1e-13);
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = spd(8);
        let diag: Vec<f64> = (0..8).map(|i| a[(i, i)]).collect();
        let b: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; 8];
        let rep = conjugate_gradient(
            |v, out| {
                let r = &a * DVector::from_row_slice(v);
                out.copy_from_slice(r.as_slice());
            },
            &diag,
            &b,
            &mut x,
            1e-12,
            100,
        )
        .unwrap();
        assert!(rep.relative_residual <= 1e-12);
        let r = &a * DVector::from_row_slice(&x) - DVector::from_row_slice(&b);
        assert!(r.amax() < 1e-10);
    }
}
