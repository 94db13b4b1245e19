//! Half-space integrals `∫_{h·G>0} (…) p(x,h) dh` by quadrature.
//!
//! The half space is rotated onto `{w₁ > 0}` so no indicator enters a rule.
//! Gaussian kernels use adaptive Gauss–Kronrod in `w₁` against the normal
//! density and a transverse Gauss–Hermite product rule; the integrands are
//! polynomial in the transverse coordinates, so three nodes per axis are exact.
//! Custom kernels use nested adaptive cubature over the rotated half ball.

use std::f64::consts::PI;

use crate::cubature;
use crate::error::{Error, Result};
use crate::linalg::reflector_to;
use crate::model::{KernelKind, MutationKernel};
use crate::quadrature::{adaptive_gk15_vec, GaussRule, Tolerance};
use crate::{Matrix, Vector};

/// Truncation of the radial Gaussian coordinate.
const HALF_LINE_END: f64 = 13.0;

/// Raw half-space moments: `b = ∫h(h·G)₊p`, `b̃ = ½∫_{h·G>0}h(hᵀHh)p`,
/// `a = ∫hhᵀ(h·G)₊p`.
#[derive(Debug, Clone)]
pub struct HalfSpaceMoments {
    pub b: Vector,
    pub b_tilde: Vector,
    pub a: Matrix,
    pub error: f64,
}

fn tolerance(rel: f64) -> Tolerance {
    Tolerance {
        abs: 1e-14,
        rel,
        max_panels: 400,
    }
}

fn unpack(d: usize, v: &[f64], error: f64) -> HalfSpaceMoments {
    let b = Vector::from_column_slice(&v[..d]);
    let b_tilde = Vector::from_column_slice(&v[d..2 * d]);
    let mut a = Matrix::zeros(d, d);
    let mut idx = 2 * d;
    for i in 0..d {
        for j in i..d {
            a[(i, j)] = v[idx];
            a[(j, i)] = v[idx];
            idx += 1;
        }
    }
    HalfSpaceMoments { b, b_tilde, a, error }
}

fn accumulate(h: &Vector, hg: f64, hhh: f64, weight: f64, out: &mut [f64]) {
    let d = h.len();
    for i in 0..d {
        out[i] += weight * h[i] * hg;
        out[d + i] += weight * 0.5 * h[i] * hhh;
    }
    let mut idx = 2 * d;
    for i in 0..d {
        for j in i..d {
            out[idx] += weight * h[i] * h[j] * hg;
            idx += 1;
        }
    }
}

/// Integrates the three half-space moments for `G ≠ 0` to relative tolerance `rel`.
pub fn moments(
    k: &MutationKernel,
    x: &[f64],
    g: &Vector,
    hess: &Matrix,
    rel: f64,
) -> Result<HalfSpaceMoments> {
    let d = g.len();
    let n_out = 2 * d + d * (d + 1) / 2;
    match k.kind() {
        KernelKind::Custom { support_radius, .. } => {
            let gn = g.norm();
            let r = reflector_to(&(g / gn));
            let mut f = |u: &[f64], out: &mut [f64]| -> Result<()> {
                out.iter_mut().for_each(|o| *o = 0.0);
                let h = &r * Vector::from_column_slice(u);
                let p = k.density(x, h.as_slice());
                if !p.is_finite() {
                    return Err(Error::Quadrature {
                        tol: rel,
                        estimate: f64::INFINITY,
                    });
                }
                let hhh = h.dot(&(hess * &h));
                accumulate(&h, u[0] * gn, hhh, p, out);
                Ok(())
            };
            let (v, err) = cubature::ball_vec(d, *support_radius, true, n_out, tolerance(rel), &mut f)?;
            Ok(unpack(d, &v, err))
        }
        _ => {
            let l = k.gaussian_factor().expect("gaussian kind");
            let u = l.transpose() * g;
            let nu = u.norm();
            let r = reflector_to(&(&u / nu));
            let lr = &l * &r;
            let herm = GaussRule::<f64>::hermite_normal(3);
            let n_trans = 3usize.pow((d - 1) as u32);
            let mut f = |w1: f64, out: &mut [f64]| -> Result<()> {
                out.iter_mut().for_each(|o| *o = 0.0);
                let phi = (-0.5 * w1 * w1).exp() / (2.0 * PI).sqrt();
                let mut w = Vector::zeros(d);
                w[0] = w1;
                for idx in 0..n_trans {
                    let mut rem = idx;
                    let mut weight = phi;
                    for j in 1..d {
                        let q = rem % 3;
                        rem /= 3;
                        w[j] = herm.nodes[q];
                        weight *= herm.weights[q];
                    }
                    let h = &lr * &w;
                    let hhh = h.dot(&(hess * &h));
                    accumulate(&h, w1 * nu, hhh, weight, out);
                }
                Ok(())
            };
            let (v, err) = adaptive_gk15_vec(0.0, HALF_LINE_END, n_out, tolerance(rel), &mut f)?;
            Ok(unpack(d, &v, err))
        }
    }
}
