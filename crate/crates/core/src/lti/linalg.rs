//! Dense matrix functions needed for discrete/continuous conversion.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// True iff every eigenvalue of `a` has a strictly negative real part.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    if a.is_empty() {
        return true;
    }
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Largest real part among the eigenvalues (spectral abscissa).
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Principal real matrix logarithm by inverse scaling and squaring.
///
/// Fails when `a` has eigenvalues on the closed negative real axis, where no
/// real principal logarithm exists.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    for l in a.complex_eigenvalues().iter() {
        if l.im.abs() <= 1e-12 * l.norm().max(1.0) && l.re <= 0.0 {
            return Err(Error::Numerical(format!(
                "no real logarithm: eigenvalue {:.6} on the non-positive real axis",
                l.re
            )));
        }
    }
    let mut x = a.clone();
    let mut roots = 0;
    while (&x - &eye).norm() > 0.2 {
        x = sqrtm_denman_beavers(&x)?;
        roots += 1;
        if roots > 60 {
            return Err(Error::Numerical("matrix square-root iteration stalled".into()));
        }
    }
    let e = &x - &eye;
    let mut power = e.clone();
    let mut log = DMatrix::<f64>::zeros(n, n);
    for k in 1..=40 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        log += &power * (sign / k as f64);
        power = &power * &e;
    }
    Ok(log * 2f64.powi(roots))
}

fn sqrtm_denman_beavers(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular iterate in matrix square root".into()))?;
        let zi = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular iterate in matrix square root".into()))?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm().max(1.0) {
            break;
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix square root diverged".into()));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0])));
        assert!(!is_hurwitz(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])));
        let (z, w) = (0.6, 1.812);
        let companion = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, -2.0 * z * w]);
        assert!(is_hurwitz(&companion));
    }

    #[test]
    fn exp_of_rotation_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = expm(&(a * std::f64::consts::FRAC_PI_2));
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((e - expect).norm() < 1e-13);
    }

    #[test]
    fn log_inverts_exp() {
        let a = DMatrix::from_row_slice(3, 3, &[-0.3, 1.2, 0.0, -0.8, -0.5, 0.4, 0.1, 0.0, -2.0]);
        let back = logm(&expm(&a)).unwrap();
        assert!((back - &a).norm() < 1e-10);
    }

    #[test]
    fn log_rejects_negative_eigenvalue() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.9]);
        assert!(logm(&a).is_err());
    }
}
