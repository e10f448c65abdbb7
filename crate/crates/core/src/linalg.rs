//! Small dense linear algebra.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n, "square system expected");
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |m, &x| m.max(x.abs()))
        .max(T::one());
    for col in 0..n {
        let (piv, best) =
            (col..n)
                .map(|r| (r, a[r][col].abs()))
                .fold((col, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= T::pivot_tol() * scale {
            return Err(Error::Singular);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = T::one() / a[col][col];
        for r in col + 1..n {
            let f = a[r][col] * inv;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = a[col][c];
                a[r][c] = a[r][c] - f * v;
            }
            let v = b[col];
            b[r] = b[r] - f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc = acc - a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Ok(x)
}
