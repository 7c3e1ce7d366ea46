//! Dense kernels used by the interior-point solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// In-place lower Cholesky factor of a symmetric positive (semi)definite matrix.
/// Pivots that collapse below `tiny * max_diag` are replaced by a huge value,
/// which decouples the corresponding (numerically dependent) unknown. Returns
/// the number of replaced pivots; the strict upper triangle is zeroed.
pub fn cholesky_in_place(m: &mut DMatrix<f64>, tiny: f64) -> usize {
    let n = m.nrows();
    let max_diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut fixed = 0;
    for j in 0..n {
        // column j below the diagonal: m[j.., j] -= L[j.., 0..j] * L[j, 0..j]^T
        for k in 0..j {
            let ljk = m[(j, k)];
            if ljk == 0.0 {
                continue;
            }
            let (left, mut right) = m.columns_range_pair_mut(k, j);
            let src = left.rows_range(j..n);
            let mut dst = right.rows_range_mut(j..n);
            dst.axpy(-ljk, &src, 1.0);
        }
        let mut d = m[(j, j)];
        if !(d > tiny * max_diag) {
            d = 1e128;
            fixed += 1;
        }
        let d = d.sqrt();
        m[(j, j)] = d;
        for i in j + 1..n {
            m[(i, j)] /= d;
        }
        for i in 0..j {
            m[(i, j)] = 0.0;
        }
    }
    fixed
}

/// Solve `L L^T x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for j in 0..n {
        x[j] /= l[(j, j)];
        let xj = x[j];
        for i in j + 1..n {
            x[i] -= l[(i, j)] * xj;
        }
    }
    for j in (0..n).rev() {
        let mut s = x[j];
        for i in j + 1..n {
            s -= l[(i, j)] * x[i];
        }
        x[j] = s / l[(j, j)];
    }
    x
}

/// A factor `L` with `L L^T = X`: Cholesky when possible, otherwise a
/// symmetric square root with negative eigenvalues clipped to zero.
pub fn psd_factor(x: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = x.clone().cholesky() {
        return c.l();
    }
    let eig = SymmetricEigen::new(x.clone());
    let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sq)
}

/// Largest `alpha` with `I + alpha * S` PSD (infinity when `S` is PSD).
pub fn max_step(s: &DMatrix<f64>) -> f64 {
    let min = if s.nrows() == 1 {
        s[(0, 0)]
    } else {
        SymmetricEigen::new(s.clone()).eigenvalues.min()
    };
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
