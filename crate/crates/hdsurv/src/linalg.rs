//! Dense solvers for the small systems that arise after screening: Cholesky
//! for symmetric positive definite matrices and LU with partial pivoting as a
//! general fallback. Sized for p in the hundreds; no BLAS/LAPACK bindings.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::validation("cholesky requires a square matrix"));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::numerical(format!(
                "matrix not positive definite at pivot {j}"
            )));
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

fn solve_with_cholesky(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = y[k];
            y[i] -= l[(i, k)] * v;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = y[k];
            y[i] -= l[(k, i)] * v;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Solve a x = b for symmetric positive definite a. If the factorization
/// fails, retries with a small ridge on the diagonal before giving up.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::validation("solve_spd dimension mismatch"));
    }
    match cholesky(a) {
        Ok(l) => Ok(solve_with_cholesky(&l, b)),
        Err(_) => {
            let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
            let mut jittered = a.clone();
            let ridge = 1e-10 * scale.max(1.0);
            for i in 0..a.nrows() {
                jittered[(i, i)] += ridge;
            }
            let l = cholesky(&jittered)?;
            Ok(solve_with_cholesky(&l, b))
        }
    }
}

/// Solve a x = b by LU with partial pivoting.
pub fn solve_lu(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::validation("solve_lu dimension mismatch"));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot = col;
        let mut best = lu[(col, col)].abs();
        for row in (col + 1)..n {
            let v = lu[(row, col)].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return Err(Error::numerical(format!("singular matrix at column {col}")));
        }
        if pivot != col {
            for k in 0..n {
                let tmp = lu[(col, k)];
                lu[(col, k)] = lu[(pivot, k)];
                lu[(pivot, k)] = tmp;
            }
            perm.swap(col, pivot);
            x.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let factor = lu[(row, col)] / lu[(col, col)];
            lu[(row, col)] = factor;
            for k in (col + 1)..n {
                let v = lu[(col, k)];
                lu[(row, k)] -= factor * v;
            }
            let v = x[col];
            x[row] -= factor * v;
        }
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = x[k];
            x[i] -= lu[(i, k)] * v;
        }
        x[i] /= lu[(i, i)];
    }
    Ok(x)
}

/// Least squares min ||a x - b||_2 by Householder QR. A column whose
/// post-elimination norm collapses relative to its input norm is linearly
/// dependent on its predecessors; the error names that column index.
pub fn least_squares(a: &ndarray::ArrayView2<f64>, b: &ndarray::ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    let p = a.ncols();
    if b.len() != n {
        return Err(Error::validation("least_squares dimension mismatch"));
    }
    if n < p {
        return Err(Error::validation(format!(
            "least squares needs at least as many rows ({n}) as columns ({p})"
        )));
    }
    let mut r = a.to_owned();
    let mut rhs = b.to_owned();
    let col_norms: Vec<f64> = (0..p)
        .map(|j| r.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    for j in 0..p {
        let mut norm = 0.0;
        for i in j..n {
            norm += r[(i, j)] * r[(i, j)];
        }
        let norm = norm.sqrt();
        if norm <= 1e-10 * col_norms[j].max(1e-300) {
            return Err(Error::validation(format!(
                "design column {j} is collinear with earlier columns"
            )));
        }
        let alpha = -norm.copysign(r[(j, j)]);
        let mut v = vec![0.0; n - j];
        v[0] = r[(j, j)] - alpha;
        for i in (j + 1)..n {
            v[i - j] = r[(i, j)];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for k in j..p {
                let mut dot = 0.0;
                for i in j..n {
                    dot += v[i - j] * r[(i, k)];
                }
                let scale = 2.0 * dot / vnorm2;
                for i in j..n {
                    r[(i, k)] -= scale * v[i - j];
                }
            }
            let mut dot = 0.0;
            for i in j..n {
                dot += v[i - j] * rhs[i];
            }
            let scale = 2.0 * dot / vnorm2;
            for i in j..n {
                rhs[i] -= scale * v[i - j];
            }
        }
        r[(j, j)] = alpha;
    }
    let mut x = Array1::<f64>::zeros(p);
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for k in (i + 1)..p {
            s -= r[(i, k)] * x[k];
        }
        x[i] = s / r[(i, i)];
    }
    Ok(x)
}

/// Eigenvalues and first components of the orthonormal eigenvectors of a
/// symmetric tridiagonal matrix, by the implicit-shift QL algorithm. `diag`
/// holds the diagonal, `off` the subdiagonal (length n-1). The first
/// components are what Gauss quadrature weight extraction needs.
pub fn tridiagonal_eigen_first_components(
    diag: &[f64],
    off: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::validation("empty tridiagonal matrix"));
    }
    if off.len() + 1 != n {
        return Err(Error::validation("subdiagonal length must be n-1"));
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    // first row of the accumulated rotation product, starts as e_1
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::numerical("tridiagonal QL failed to converge"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if r == 0.0 && m > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let firsts: Vec<f64> = order.iter().map(|&i| z[i]).collect();
    Ok((values, firsts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let b = array![1.0, 2.0];
        let x = solve_spd(&a, &b).unwrap();
        let r0 = 4.0 * x[0] + 2.0 * x[1] - 1.0;
        let r1 = 2.0 * x[0] + 3.0 * x[1] - 2.0;
        assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12);
    }

    #[test]
    fn lu_handles_indefinite_systems() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let b = array![3.0, -2.0];
        let x = solve_lu(&a, &b).unwrap();
        assert!((x[0] + 2.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let a = array![
            [1.0, 0.5, -0.2],
            [1.0, -1.0, 0.3],
            [1.0, 2.0, 1.1],
            [1.0, 0.1, -0.7],
            [1.0, -0.4, 0.9]
        ];
        let b = array![1.0, 2.0, -0.5, 0.3, 1.7];
        let x = least_squares(&a.view(), &b.view()).unwrap();
        let ata = a.t().dot(&a);
        let atb = a.t().dot(&b);
        let oracle = solve_spd(&ata, &atb).unwrap();
        for j in 0..3 {
            assert!((x[j] - oracle[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn least_squares_names_collinear_column() {
        let a = array![[1.0, 2.0, 0.5], [1.0, 2.0, 1.5], [1.0, 2.0, -0.3], [1.0, 2.0, 0.9]];
        let b = array![1.0, 2.0, 3.0, 4.0];
        let err = least_squares(&a.view(), &b.view()).unwrap_err();
        assert!(err.to_string().contains("column 1"), "{err}");
    }

    #[test]
    fn tridiagonal_eigen_matches_hand_2x2() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3 with eigenvectors
        // (1,-1)/sqrt(2) and (1,1)/sqrt(2); first components squared are 1/2.
        let (vals, firsts) = tridiagonal_eigen_first_components(&[2.0, 2.0], &[1.0]).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        assert!((firsts[0].powi(2) - 0.5).abs() < 1e-12);
        assert!((firsts[1].powi(2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_eigen_reproduces_gauss_legendre_3() {
        // Jacobi matrix for Legendre polynomials on [-1,1]: diag 0,
        // off-diagonal k/sqrt(4k^2-1). Nodes 0, +-sqrt(3/5); weights from
        // first components squared times total mass 2: 8/9 and 5/9.
        let off: Vec<f64> = (1..3u32)
            .map(|k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            })
            .collect();
        let (vals, firsts) = tridiagonal_eigen_first_components(&[0.0; 3], &off).unwrap();
        assert!((vals[1]).abs() < 1e-12);
        assert!((vals[2] - (0.6f64).sqrt()).abs() < 1e-12);
        assert!((2.0 * firsts[1].powi(2) - 8.0 / 9.0).abs() < 1e-12);
        assert!((2.0 * firsts[2].powi(2) - 5.0 / 9.0).abs() < 1e-12);
    }
}
