//! Closed forms of the half-space moments for Gaussian mutation kernels.

use std::f64::consts::PI;

use crate::model::FitnessModel;
use crate::{Matrix, Result, Vector};

/// `(b, b̃, a)` for `h ~ N(0, LLᵀ)` given `G = ∇₁g(x,x)` and `H = H₁,₁g(x,x)`.
///
/// With `u = LᵀG`, `e = u/‖u‖`, `H' = LᵀHL` and `Q = I − eeᵀ`:
/// `b = ½KG`, `a = (‖u‖K + KGGᵀK/‖u‖)/√(2π)` and `b̃ = ½L m` where
/// `m = √(2/π) e(eᵀH'e) + (e tr(QH') + 2QH'e)/√(2π)`.
pub fn moments(l: &Matrix, g: &Vector, h: &Matrix) -> (Vector, Vector, Matrix) {
    let d = g.len();
    let k = l * l.transpose();
    let b = &k * g * 0.5;
    let u = l.transpose() * g;
    let nu = u.norm();
    if nu == 0.0 {
        return (b, Vector::zeros(d), Matrix::zeros(d, d));
    }
    let e = &u / nu;
    let kg = &k * g;
    let a = (&k * nu + &kg * kg.transpose() / nu) / (2.0 * PI).sqrt();
    let hp = l.transpose() * h * l;
    let q = Matrix::identity(d, d) - &e * e.transpose();
    let qh = &q * &hp;
    let m = &e * ((2.0 / PI).sqrt() * e.dot(&(&hp * &e)))
        + (&e * qh.trace() + &qh * &e * 2.0) / (2.0 * PI).sqrt();
    let bt = l * m * 0.5;
    (b, bt, a)
}

/// `σ = √a` for an isotropic kernel: `a = κ(I + vvᵀ)` has square root
/// `√κ(I + (√2 − 1)vvᵀ)`.
pub fn isotropic_sigma(a_kappa: f64, v: &Vector) -> Matrix {
    let d = v.len();
    (Matrix::identity(d, d) + v * v.transpose() * (2f64.sqrt() - 1.0)) * a_kappa.sqrt()
}

/// `a(x)` for an isotropic kernel `N(0, s²I)`:
/// `a = ½√(2/π) s³ ‖∇₁g(x,x)‖ (I + vvᵀ)`, `v = ∇₁g/‖∇₁g‖`, zero on `Γ`.
pub fn eval_a_gaussian_closed_form(m: &FitnessModel, s: f64, x: &[f64]) -> Result<Matrix> {
    let g = m.selection_gradient(x)?;
    let d = g.len();
    let n = g.norm();
    if n < super::ZERO_GRADIENT {
        return Ok(Matrix::zeros(d, d));
    }
    let v = &g / n;
    let kappa = 0.5 * (2.0 / PI).sqrt() * s.powi(3) * n;
    Ok((Matrix::identity(d, d) + &v * v.transpose()) * kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn radial2d_a_at_half() {
        let a = eval_a_gaussian_closed_form(&FitnessModel::radial2d(), 1.0, &[0.5, 0.0]).unwrap();
        let c = 0.25 * (2.0 / PI).sqrt();
        assert_relative_eq!(a, Matrix::from_row_slice(2, 2, &[2.0 * c, 0.0, 0.0, c]), epsilon = 1e-15);
        assert_relative_eq!(a[(0, 0)], 0.398_942_3, epsilon = 1e-7);
        assert_relative_eq!(a[(1, 1)], 0.199_471_1, epsilon = 1e-7);
    }

    #[test]
    fn zero_on_the_singular_set() {
        let a = eval_a_gaussian_closed_form(&FitnessModel::radial2d(), 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(a, Matrix::zeros(2, 2));
    }

    #[test]
    fn general_form_reduces_to_isotropic() {
        let s = 0.7;
        let l = Matrix::identity(2, 2) * s;
        let g = Vector::from_vec(vec![0.3, -0.4]);
        let (_, _, a) = moments(&l, &g, &Matrix::zeros(2, 2));
        let v = &g / g.norm();
        let kappa = 0.5 * (2.0 / PI).sqrt() * s.powi(3) * g.norm();
        assert_relative_eq!(a, (Matrix::identity(2, 2) + &v * v.transpose()) * kappa, epsilon = 1e-15);
        let sig = isotropic_sigma(kappa, &v);
        assert_relative_eq!(&sig * &sig, a, epsilon = 1e-15);
    }

    #[test]
    fn dimension_one_formulas() {
        // quad1d at x = 0.5: b = −1/4, a = M₃/4, b̃ = M₃/2 with M₃ = 2√(2/π)
        let m3 = 2.0 * (2.0 / PI).sqrt();
        let (b, bt, a) = moments(
            &Matrix::identity(1, 1),
            &Vector::from_element(1, -0.5),
            &Matrix::from_element(1, 1, -2.0),
        );
        assert_relative_eq!(b[0], -0.25, epsilon = 1e-15);
        assert_relative_eq!(a[(0, 0)], m3 / 4.0, epsilon = 1e-15);
        assert_relative_eq!(bt[0], m3 / 2.0, epsilon = 1e-15);
        assert_relative_eq!(bt[0], 0.797_884_6, epsilon = 1e-7);
    }
}
