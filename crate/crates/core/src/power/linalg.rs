use crate::error::{Error, Result};
use crate::Scalar;

/// Solves `a x = b` in place by LU factorisation with partial pivoting.
/// `a` is row-major `n x n` and is overwritten by its factors; `b` becomes `x`.
pub fn lu_solve<T: Scalar>(a: &mut [T], b: &mut [T]) -> Result<()> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix/vector size mismatch");
    let scale = a.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if !scale.is_finite() {
        return Err(Error::SingularJacobian);
    }
    let tiny = scale * T::epsilon() * T::lit(n as f64);
    for k in 0..n {
        let mut piv = k;
        for r in k + 1..n {
            if a[r * n + k].abs() > a[piv * n + k].abs() {
                piv = r;
            }
        }
        if a[piv * n + k].abs() <= tiny || scale == T::zero() {
            return Err(Error::SingularJacobian);
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * n + k];
        for r in k + 1..n {
            let f = a[r * n + k] / d;
            if f == T::zero() {
                continue;
            }
            a[r * n + k] = f;
            for c in k + 1..n {
                let v = a[k * n + c];
                a[r * n + c] -= f * v;
            }
            let bk = b[k];
            b[r] -= f * bk;
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..n {
            s -= a[k * n + c] * b[c];
        }
        b[k] = s / a[k * n + k];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_system_needing_pivot() {
        let mut a: Vec<f64> = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let mut b = vec![7.0, 3.0, 6.0];
        lu_solve(&mut a, &mut b).unwrap();
        for (x, want) in b.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - want).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(matches!(lu_solve(&mut a, &mut b), Err(Error::SingularJacobian)));
    }
}
