//! Householder QR least squares for the small dense systems used here.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) struct LeastSquares {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Diagonal of (XᵀX)⁻¹.
    pub xtx_inv_diag: Vec<f64>,
}

/// Solves min ‖Xb − y‖ for column-major `cols`. On rank deficiency returns the
/// indices of columns that are (numerically) combinations of earlier ones.
pub(crate) fn least_squares(cols: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares, Vec<usize>> {
    let p = cols.len();
    let n = y.len();
    debug_assert!(cols.iter().all(|c| c.len() == n));
    let norms: Vec<f64> = cols.iter().map(|c| libm::sqrt(c.iter().map(|v| v * v).sum())).collect();
    let mut a: Vec<Vec<f64>> = cols.to_vec();
    let mut qty = y.to_vec();
    let mut dependent = Vec::new();

    for k in 0..p {
        let col_norm = libm::sqrt(a[k][k..].iter().map(|v| v * v).sum());
        if col_norm <= 1e-10 * norms[k] || norms[k] == 0.0 {
            dependent.push(k);
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -col_norm } else { col_norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k) {
            reflect(&v, vnorm2, &mut col[k..]);
        }
        reflect(&v, vnorm2, &mut qty[k..]);
    }
    if !dependent.is_empty() {
        return Err(dependent);
    }

    // Back substitution on R b = Qᵀy; R[i][j] = a[j][i].
    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = qty[i];
        for j in i + 1..p {
            s -= a[j][i] * coef[j];
        }
        coef[i] = s / a[i][i];
    }

    // R⁻¹ (upper triangular); diag((XᵀX)⁻¹) = row norms² of R⁻¹.
    let mut rinv = vec![vec![0.0; p]; p];
    for j in 0..p {
        rinv[j][j] = 1.0 / a[j][j];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in i + 1..=j {
                s += a[k][i] * rinv[k][j];
            }
            rinv[i][j] = -s / a[i][i];
        }
    }
    let xtx_inv_diag = rinv.iter().map(|row| row.iter().map(|v| v * v).sum()).collect();

    let residuals = (0..n).map(|r| y[r] - cols.iter().zip(&coef).map(|(c, b)| c[r] * b).sum::<f64>()).collect();
    Ok(LeastSquares { coef, residuals, xtx_inv_diag })
}

fn reflect(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let s = 2.0 * dot / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let ones = vec![1.0; 4];
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 + 2.0 * v).collect();
        let ls = least_squares(&[ones, x], &y).ok().unwrap();
        assert!((ls.coef[0] - 1.5).abs() < 1e-12);
        assert!((ls.coef[1] - 2.0).abs() < 1e-12);
        assert!(ls.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn detects_dependent_column() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let c = vec![1.0, 0.0, 1.0, 0.0];
        assert_eq!(least_squares(&[a, c, b], &[1.0, 2.0, 3.0, 5.0]).err(), Some(vec![2]));
    }
}
