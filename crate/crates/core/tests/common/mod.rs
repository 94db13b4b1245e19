#![allow(dead_code)]

use punctual::coeff::{build_field, Backend, CoefficientField};
use punctual::model::{find_singularities, AxisBox, FitnessModel, MutationKernel, DEFAULT_MERGE_RADIUS};

/// Field of a builtin model with the unit isotropic Gaussian kernel, singularities
/// searched in `[-2, 2]^d`.
pub fn field_with(m: FitnessModel, backend: Backend) -> CoefficientField {
    let d = m.dim();
    let bx = AxisBox::cube(d, -2.0, 2.0).unwrap();
    let gamma = find_singularities(&m, &bx, 16, DEFAULT_MERGE_RADIUS).unwrap();
    let k = MutationKernel::gaussian_isotropic(d, 1.0).unwrap();
    build_field(m, k, gamma, backend).unwrap()
}

pub fn field(m: FitnessModel) -> CoefficientField {
    field_with(m, Backend::GaussianClosedForm)
}

pub fn quad_backend() -> Backend {
    Backend::Quadrature { tol: 1e-10 }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
