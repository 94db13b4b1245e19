//! Drift, drift correction and diffusion of the singular diffusion.

mod diagnostics;
mod gaussian;
mod halfspace;

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AxisBox, FitnessModel, KernelKind, MutationKernel, SingularitySet};
use crate::{Matrix, Vector};

pub use crate::linalg::sqrt_psd;
pub use diagnostics::{
    check_h4, degeneracy_profile, h4_value, regularity_probe, sigma_quotient_near, H4Report, RegularityReport,
};
pub use gaussian::eval_a_gaussian_closed_form;
pub use halfspace::HalfSpaceMoments;

/// Below this selection-gradient norm every coefficient is returned as exact zero.
pub const ZERO_GRADIENT: f64 = 1e-12;
/// Default width of the tube around located singularities.
pub const DEFAULT_TUBE: f64 = 1e-6;

/// How the half-space integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Backend {
    GaussianClosedForm,
    Quadrature { tol: f64 },
}

/// Coefficients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub b: Vector,
    pub b_tilde: Vector,
    pub a: Matrix,
    pub sigma: Matrix,
}

impl Coefficients {
    fn zero(d: usize) -> Self {
        Self {
            b: Vector::zeros(d),
            b_tilde: Vector::zeros(d),
            a: Matrix::zeros(d, d),
            sigma: Matrix::zeros(d, d),
        }
    }

    /// `b + ε b̃`.
    pub fn b_eps(&self, eps: f64) -> Vector {
        &self.b + &self.b_tilde * eps
    }
}

/// `(b, b̃, a, σ)` as functions of the trait, with the singular set they vanish on.
///
/// Immutable once built and safe to share between threads.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    model: FitnessModel,
    kernel: MutationKernel,
    gamma: SingularitySet,
    backend: Backend,
    tube: f64,
}

/// Assemble a field from a model, a kernel and the located singular set.
pub fn build_field(
    m: FitnessModel,
    k: MutationKernel,
    gamma: SingularitySet,
    backend: Backend,
) -> Result<CoefficientField> {
    if m.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: k.dim(),
        });
    }
    if gamma.search_box.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: gamma.search_box.dim(),
        });
    }
    match backend {
        Backend::GaussianClosedForm if matches!(k.kind(), KernelKind::Custom { .. }) => {
            return Err(Error::InvalidArgument(
                "the closed-form backend needs a Gaussian kernel".into(),
            ))
        }
        Backend::Quadrature { tol } if !(tol > 0.0 && tol < 1.0) => {
            return Err(Error::InvalidArgument(format!("quadrature tolerance {tol} out of (0,1)")))
        }
        _ => {}
    }
    Ok(CoefficientField {
        model: m,
        kernel: k,
        gamma,
        backend,
        tube: DEFAULT_TUBE,
    })
}

impl CoefficientField {
    pub fn with_tube(mut self, tube: f64) -> Self {
        self.tube = tube;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &FitnessModel {
        &self.model
    }

    pub fn kernel(&self) -> &MutationKernel {
        &self.kernel
    }

    pub fn gamma(&self) -> &SingularitySet {
        &self.gamma
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Width of the tube around `Γ` used for membership tests.
    pub fn tube(&self) -> f64 {
        self.tube
    }

    pub fn dist_to_gamma(&self, x: &[f64]) -> f64 {
        self.gamma.distance(x)
    }

    pub fn in_tube(&self, x: &[f64]) -> bool {
        self.dist_to_gamma(x) <= self.tube
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `(b, b̃, a)` without the square root.
    pub fn drift_diffusion(&self, x: &[f64]) -> Result<(Vector, Vector, Matrix)> {
        self.check_dim(x)?;
        let d = self.dim();
        let g = self.model.selection_gradient(x)?;
        if g.norm() < ZERO_GRADIENT {
            return Ok((Vector::zeros(d), Vector::zeros(d), Matrix::zeros(d, d)));
        }
        let h = self.model.hess11(x, x)?;
        match self.backend {
            Backend::GaussianClosedForm => {
                let l = self.kernel.gaussian_factor().expect("checked at build");
                Ok(gaussian::moments(&l, &g, &h))
            }
            Backend::Quadrature { tol } => {
                let m = halfspace::moments(&self.kernel, x, &g, &h, tol)?;
                Ok((m.b, m.b_tilde, m.a))
            }
        }
    }

    /// All coefficients at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Coefficients> {
        self.check_dim(x)?;
        let g = self.model.selection_gradient(x)?;
        let gn = g.norm();
        if gn < ZERO_GRADIENT {
            return Ok(Coefficients::zero(self.dim()));
        }
        let (b, b_tilde, a) = self.drift_diffusion(x)?;
        let sigma = match (self.backend, self.kernel.kind()) {
            (Backend::GaussianClosedForm, KernelKind::GaussianIsotropic { s }) => {
                let kappa = 0.5 * (2.0 / PI).sqrt() * s.powi(3) * gn;
                gaussian::isotropic_sigma(kappa, &(&g / gn))
            }
            _ => sqrt_psd(&a)?,
        };
        Ok(Coefficients { b, b_tilde, a, sigma })
    }

    pub fn b(&self, x: &[f64]) -> Result<Vector> {
        self.check_dim(x)?;
        let g = self.model.selection_gradient(x)?;
        if g.norm() < ZERO_GRADIENT {
            return Ok(Vector::zeros(self.dim()));
        }
        match (self.backend, self.kernel.gaussian_factor()) {
            (Backend::GaussianClosedForm, Some(l)) => Ok(&l * (l.transpose() * g) * 0.5),
            _ => Ok(self.drift_diffusion(x)?.0),
        }
    }

    pub fn b_tilde(&self, x: &[f64]) -> Result<Vector> {
        Ok(self.drift_diffusion(x)?.1)
    }

    pub fn a(&self, x: &[f64]) -> Result<Matrix> {
        Ok(self.drift_diffusion(x)?.2)
    }

    pub fn sigma(&self, x: &[f64]) -> Result<Matrix> {
        Ok(self.eval(x)?.sigma)
    }

    /// `b(x) + ε b̃(x)`.
    pub fn b_eps(&self, x: &[f64], eps: f64) -> Result<Vector> {
        let (b, bt, _) = self.drift_diffusion(x)?;
        Ok(b + bt * eps)
    }
}

/// Grid of coefficient values over a box, `n_per_axis` points per axis.
pub fn coeff_table(f: &CoefficientField, region: &AxisBox, n_per_axis: usize) -> Result<Vec<(Vec<f64>, Coefficients)>> {
    if n_per_axis < 2 {
        return Err(Error::InvalidArgument("n_per_axis must be at least 2".into()));
    }
    let d = f.dim();
    let total = n_per_axis.pow(d as u32);
    let mut rows = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut x = vec![0.0; d];
        // first coordinate varies slowest
        for i in (0..d).rev() {
            let k = rem % n_per_axis;
            rem /= n_per_axis;
            x[i] = region.lo[i] + (region.hi[i] - region.lo[i]) * k as f64 / (n_per_axis - 1) as f64;
        }
        let c = f.eval(&x)?;
        rows.push((x, c));
    }
    Ok(rows)
}

/// CSV with header `x1..xd,b1..bd,bt1..btd,a11..add`.
pub fn write_coeff_table<W: Write>(w: &mut W, rows: &[(Vec<f64>, Coefficients)]) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.0.len());
    let mut header: Vec<String> = Vec::new();
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=d).map(|i| format!("b{i}")));
    header.extend((1..=d).map(|i| format!("bt{i}")));
    for i in 1..=d {
        for j in 1..=d {
            header.push(format!("a{i}{j}"));
        }
    }
    writeln!(w, "{}", header.join(","))?;
    for (x, c) in rows {
        let mut fields: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        fields.extend(c.b.iter().map(|v| v.to_string()));
        fields.extend(c.b_tilde.iter().map(|v| v.to_string()));
        for i in 0..d {
            for j in 0..d {
                fields.push(c.a[(i, j)].to_string());
            }
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
