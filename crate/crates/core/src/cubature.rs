//! Nested adaptive cubature over balls and half balls.

use crate::error::Result;
use crate::quadrature::{adaptive_gk15_vec, Tolerance};

/// Integrates `f(h, out)` over `‖h‖ ≤ r` in `d` dimensions, or over the half
/// ball `h₁ ≥ 0` when `half` is set.
///
/// Each coordinate is integrated by adaptive Gauss–Kronrod over the chord left
/// by the outer coordinates. Returns the integrals and an accumulated error
/// estimate (outer error plus the integrated inner errors).
pub fn ball_vec(
    d: usize,
    r: f64,
    half: bool,
    n_out: usize,
    tol: Tolerance,
    f: &mut dyn FnMut(&[f64], &mut [f64]) -> Result<()>,
) -> Result<(Vec<f64>, f64)> {
    let mut h = vec![0.0; d];
    let (mut v, err) = level(0, d, r * r, half, r, n_out, tol, &mut h, f)?;
    let inner = v.pop().unwrap_or(0.0);
    Ok((v, err + inner.abs()))
}

/// Scalar convenience wrapper around [`ball_vec`].
pub fn ball(
    d: usize,
    r: f64,
    half: bool,
    tol: Tolerance,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<(f64, f64)> {
    let (v, e) = ball_vec(d, r, half, 1, tol, &mut |h, out| {
        out[0] = f(h)?;
        Ok(())
    })?;
    Ok((v[0], e))
}

/// Integrates coordinate `k`; the last output slot carries the inner error.
#[allow(clippy::too_many_arguments)]
fn level(
    k: usize,
    d: usize,
    rem2: f64,
    half: bool,
    r: f64,
    n_out: usize,
    tol: Tolerance,
    h: &mut Vec<f64>,
    f: &mut dyn FnMut(&[f64], &mut [f64]) -> Result<()>,
) -> Result<(Vec<f64>, f64)> {
    let rho = rem2.max(0.0).sqrt();
    let lo = if half && k == 0 { 0.0 } else { -rho };
    if rho == 0.0 {
        return Ok((vec![0.0; n_out + 1], 0.0));
    }
    let inner_tol = Tolerance {
        abs: tol.abs / (2.0 * r),
        ..tol
    };
    let mut g = |t: f64, out: &mut [f64]| -> Result<()> {
        h[k] = t;
        if k + 1 == d {
            f(h, &mut out[..n_out])?;
            out[n_out] = 0.0;
        } else {
            let (v, e) = level(k + 1, d, rem2 - t * t, half, r, n_out, inner_tol, h, f)?;
            out[..n_out].copy_from_slice(&v[..n_out]);
            out[n_out] = v[n_out].abs() + e;
        }
        Ok(())
    };
    let (v, e) = adaptive_gk15_vec(lo, rho, n_out + 1, tol, &mut g)?;
    for slot in h.iter_mut().skip(k) {
        *slot = 0.0;
    }
    Ok((v, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn volume_of_unit_disk_and_ball() {
        let (v, _) = ball(2, 1.0, false, Tolerance::default(), |_| Ok(1.0)).unwrap();
        assert_relative_eq!(v, PI, max_relative = 1e-7);
        let (v, _) = ball(3, 1.0, false, Tolerance::default(), |_| Ok(1.0)).unwrap();
        assert_relative_eq!(v, 4.0 * PI / 3.0, max_relative = 1e-7);
    }

    #[test]
    fn half_ball_first_moment() {
        // ∫_{h₁>0, ‖h‖<1} h₁ dh = 2/3 in the plane
        let (v, _) = ball(2, 1.0, true, Tolerance::default(), |h| Ok(h[0])).unwrap();
        assert_relative_eq!(v, 2.0 / 3.0, max_relative = 1e-8);
    }

    #[test]
    fn gaussian_mass_in_one_dimension() {
        let (v, _) = ball(1, 12.0, false, Tolerance::default(), |h| {
            Ok((-0.5 * h[0] * h[0]).exp() / (2.0 * PI).sqrt())
        })
        .unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
    }
}
