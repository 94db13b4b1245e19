use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// A fitness function `g(y, x)`: invasion fitness of mutant trait `y` in a
/// resident population of trait `x`.
///
/// Only [`Fitness::value`] is mandatory. Derivatives that are not supplied are
/// obtained by central finite differences.
pub trait Fitness: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, y: &[f64], x: &[f64]) -> f64;

    /// `∇₁g(y, x)`.
    fn grad1(&self, _y: &[f64], _x: &[f64]) -> Option<Vector> {
        None
    }

    /// `H₁,₁g(y, x)`.
    fn hess11(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        None
    }

    /// `H₁,₂g(y, x)`, entry `(i, j)` is `∂²g/∂yᵢ∂xⱼ`.
    fn hess12(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        None
    }

    /// `H₂,₂g(y, x)`.
    fn hess22(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        None
    }
}

/// How derivatives of a [`FitnessModel`] are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DerivMode {
    /// Use the derivatives the model supplies, finite differences for the rest.
    Analytic,
    /// Ignore supplied derivatives. The step is scaled by `1 + ‖x‖`.
    FiniteDifference { step: f64 },
}

/// Default relative finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Second differences of values use a larger step to limit cancellation.
const FD_STEP_SECOND: f64 = 1e-4;

/// Evaluator of `g` and its derivatives with a fixed derivative policy.
#[derive(Clone)]
pub struct FitnessModel {
    name: String,
    inner: Arc<dyn Fitness>,
    mode: DerivMode,
}

impl fmt::Debug for FitnessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FitnessModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("mode", &self.mode)
            .finish()
    }
}

fn check_finite_value(v: f64, y: &[f64], x: &[f64], what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ModelEvaluation {
            point: y.iter().chain(x).copied().collect(),
            what: format!("{what} is not finite"),
        })
    }
}

fn check_finite_iter<'a>(
    mut it: impl Iterator<Item = &'a f64>,
    y: &[f64],
    x: &[f64],
    what: &str,
) -> Result<()> {
    if it.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::ModelEvaluation {
            point: y.iter().chain(x).copied().collect(),
            what: format!("{what} is not finite"),
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl FitnessModel {
    pub fn new(name: impl Into<String>, inner: Arc<dyn Fitness>, mode: DerivMode) -> Self {
        Self {
            name: name.into(),
            inner,
            mode,
        }
    }

    /// Model from a plain closure; every derivative is a finite difference.
    pub fn from_fn(
        name: impl Into<String>,
        dim: usize,
        g: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            name,
            Arc::new(ClosureFitness { dim, g: Box::new(g) }),
            DerivMode::FiniteDifference { step: FD_STEP },
        )
    }

    /// `g(y, x) = −x(y−x) − (y−x)²`, one singularity at 0.
    pub fn quad1d() -> Self {
        Self::new("quad1d", Arc::new(Quad1d), DerivMode::Analytic)
    }

    /// `g(y, x) = (y−x)(1−x²) + κ(y−x)²`, singularities at ±1.
    pub fn band1d(kappa: f64) -> Self {
        Self::new("band1d", Arc::new(Band1d { kappa }), DerivMode::Analytic)
    }

    /// `g(y, x) = −x·(y−x) − ‖y−x‖²` in the plane, one singularity at the origin.
    pub fn radial2d() -> Self {
        Self::new("radial2d", Arc::new(Radial2d), DerivMode::Analytic)
    }

    pub fn with_mode(mut self, mode: DerivMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn mode(&self) -> DerivMode {
        self.mode
    }

    fn analytic(&self) -> bool {
        matches!(self.mode, DerivMode::Analytic)
    }

    fn step(&self, x: &[f64]) -> f64 {
        let base = match self.mode {
            DerivMode::Analytic => FD_STEP,
            DerivMode::FiniteDifference { step } => step,
        };
        base * (1.0 + norm(x))
    }

    fn step2(&self, x: &[f64]) -> f64 {
        self.step(x).max(FD_STEP_SECOND * (1.0 + norm(x)))
    }

    fn check_dims(&self, y: &[f64], x: &[f64]) -> Result<()> {
        let d = self.dim();
        for len in [y.len(), x.len()] {
            if len != d {
                return Err(Error::DimensionMismatch { expected: d, got: len });
            }
        }
        Ok(())
    }

    pub fn value(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        self.check_dims(y, x)?;
        check_finite_value(self.inner.value(y, x), y, x, "g")
    }

    /// `∇₁g(y, x)`.
    pub fn grad1(&self, y: &[f64], x: &[f64]) -> Result<Vector> {
        self.check_dims(y, x)?;
        if self.analytic() {
            if let Some(g) = self.inner.grad1(y, x) {
                check_finite_iter(g.iter(), y, x, "grad1")?;
                return Ok(g);
            }
        }
        let d = self.dim();
        let h = self.step(x);
        let mut yp = y.to_vec();
        let mut out = Vector::zeros(d);
        for i in 0..d {
            yp[i] = y[i] + h;
            let fp = self.value(&yp, x)?;
            yp[i] = y[i] - h;
            let fm = self.value(&yp, x)?;
            yp[i] = y[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
        Ok(out)
    }

    /// `H₁,₁g(y, x)`.
    pub fn hess11(&self, y: &[f64], x: &[f64]) -> Result<Matrix> {
        self.check_dims(y, x)?;
        if self.analytic() {
            if let Some(m) = self.inner.hess11(y, x) {
                check_finite_iter(m.iter(), y, x, "hess11")?;
                return Ok(m);
            }
            if self.inner.grad1(y, x).is_some() {
                return self.jacobian_of_grad1(y, x, true);
            }
        }
        self.second_difference(y, x, true, true)
    }

    /// `H₁,₂g(y, x)`.
    pub fn hess12(&self, y: &[f64], x: &[f64]) -> Result<Matrix> {
        self.check_dims(y, x)?;
        if self.analytic() {
            if let Some(m) = self.inner.hess12(y, x) {
                check_finite_iter(m.iter(), y, x, "hess12")?;
                return Ok(m);
            }
            if self.inner.grad1(y, x).is_some() {
                return self.jacobian_of_grad1(y, x, false);
            }
        }
        self.second_difference(y, x, true, false)
    }

    /// `H₂,₂g(y, x)`.
    pub fn hess22(&self, y: &[f64], x: &[f64]) -> Result<Matrix> {
        self.check_dims(y, x)?;
        if self.analytic() {
            if let Some(m) = self.inner.hess22(y, x) {
                check_finite_iter(m.iter(), y, x, "hess22")?;
                return Ok(m);
            }
        }
        self.second_difference(y, x, false, false)
    }

    /// Central differences of the supplied gradient, in `y` (`wrt_y`) or in `x`.
    fn jacobian_of_grad1(&self, y: &[f64], x: &[f64], wrt_y: bool) -> Result<Matrix> {
        let d = self.dim();
        let h = self.step(x);
        let mut out = Matrix::zeros(d, d);
        let mut yp = y.to_vec();
        let mut xp = x.to_vec();
        for j in 0..d {
            let (gp, gm) = if wrt_y {
                yp[j] = y[j] + h;
                let gp = self.grad1(&yp, x)?;
                yp[j] = y[j] - h;
                let gm = self.grad1(&yp, x)?;
                yp[j] = y[j];
                (gp, gm)
            } else {
                xp[j] = x[j] + h;
                let gp = self.grad1(y, &xp)?;
                xp[j] = x[j] - h;
                let gm = self.grad1(y, &xp)?;
                xp[j] = x[j];
                (gp, gm)
            };
            out.set_column(j, &((gp - gm) / (2.0 * h)));
        }
        Ok(out)
    }

    /// Second differences of `g`; the first index perturbs `y` (`first_y`) or `x`,
    /// likewise the second.
    fn second_difference(&self, y: &[f64], x: &[f64], first_y: bool, second_y: bool) -> Result<Matrix> {
        let d = self.dim();
        let h = self.step2(x);
        let mut out = Matrix::zeros(d, d);
        let eval = |di: f64, i: usize, dj: f64, j: usize| -> Result<f64> {
            let mut yp = y.to_vec();
            let mut xp = x.to_vec();
            if first_y {
                yp[i] += di;
            } else {
                xp[i] += di;
            }
            if second_y {
                yp[j] += dj;
            } else {
                xp[j] += dj;
            }
            self.value(&yp, &xp)
        };
        for i in 0..d {
            for j in 0..d {
                let v = (eval(h, i, h, j)? - eval(h, i, -h, j)? - eval(-h, i, h, j)? + eval(-h, i, -h, j)?)
                    / (4.0 * h * h);
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// Selection gradient `∇₁g(x, x)`.
    pub fn selection_gradient(&self, x: &[f64]) -> Result<Vector> {
        self.grad1(x, x)
    }

    /// Jacobian of `x ↦ ∇₁g(x, x)`, i.e. `H₁,₁g + H₁,₂g` on the diagonal.
    pub fn singularity_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        Ok(self.hess11(x, x)? + self.hess12(x, x)?)
    }
}

struct ClosureFitness {
    dim: usize,
    g: Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
}

impl Fitness for ClosureFitness {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, y: &[f64], x: &[f64]) -> f64 {
        (self.g)(y, x)
    }
}

struct Quad1d;

impl Fitness for Quad1d {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, y: &[f64], x: &[f64]) -> f64 {
        let h = y[0] - x[0];
        -x[0] * h - h * h
    }

    fn grad1(&self, y: &[f64], x: &[f64]) -> Option<Vector> {
        Some(Vector::from_element(1, -x[0] - 2.0 * (y[0] - x[0])))
    }

    fn hess11(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_element(1, 1, -2.0))
    }

    fn hess12(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_element(1, 1, 1.0))
    }

    fn hess22(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(1, 1))
    }
}

struct Band1d {
    kappa: f64,
}

impl Fitness for Band1d {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, y: &[f64], x: &[f64]) -> f64 {
        let h = y[0] - x[0];
        h * (1.0 - x[0] * x[0]) + self.kappa * h * h
    }

    fn grad1(&self, y: &[f64], x: &[f64]) -> Option<Vector> {
        Some(Vector::from_element(
            1,
            1.0 - x[0] * x[0] + 2.0 * self.kappa * (y[0] - x[0]),
        ))
    }

    fn hess11(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_element(1, 1, 2.0 * self.kappa))
    }

    fn hess12(&self, _y: &[f64], x: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_element(1, 1, -2.0 * x[0] - 2.0 * self.kappa))
    }

    fn hess22(&self, y: &[f64], x: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_element(
            1,
            1,
            4.0 * x[0] - 2.0 * (y[0] - x[0]) + 2.0 * self.kappa,
        ))
    }
}

struct Radial2d;

impl Fitness for Radial2d {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, y: &[f64], x: &[f64]) -> f64 {
        let h0 = y[0] - x[0];
        let h1 = y[1] - x[1];
        -(x[0] * h0 + x[1] * h1) - (h0 * h0 + h1 * h1)
    }

    fn grad1(&self, y: &[f64], x: &[f64]) -> Option<Vector> {
        Some(Vector::from_iterator(
            2,
            (0..2).map(|i| -x[i] - 2.0 * (y[i] - x[i])),
        ))
    }

    fn hess11(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::identity(2, 2) * -2.0)
    }

    fn hess12(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::identity(2, 2))
    }

    fn hess22(&self, _y: &[f64], _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(2, 2))
    }
}

/// Result of [`check_fitness_axioms`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AxiomReport {
    /// `max |g(x, x)|` over the probes.
    pub max_diag_violation: f64,
    /// Probe achieving `max_diag_violation`.
    pub worst_diag_probe: f64,
    /// `max ‖H₁,₁g + 2H₁,₂g + H₂,₂g‖` on the diagonal.
    pub max_identity_violation: f64,
}

/// Probe `g(x,x) = 0` and the derived identity `H₁,₁g + 2H₁,₂g + H₂,₂g = 0` at
/// random points of `[-2, 2]^d`.
///
/// The identity is evaluated in its symmetric matrix form
/// `H₁,₁g + H₁,₂g + H₁,₂gᵀ + H₂,₂g`. The reported violation also covers the
/// mismatch between `H₁,₁g + H₁,₂g` and central differences of `∇₁g` along
/// the diagonal.
pub fn check_fitness_axioms(m: &FitnessModel, probes: usize, seed: u64) -> Result<AxiomReport> {
    if probes == 0 {
        return Err(Error::InvalidArgument("probes must be at least 1".into()));
    }
    let d = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AxiomReport {
        max_diag_violation: 0.0,
        worst_diag_probe: f64::NAN,
        max_identity_violation: 0.0,
    };
    for _ in 0..probes {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let gxx = m.value(&x, &x)?.abs();
        if gxx > report.max_diag_violation || report.worst_diag_probe.is_nan() {
            report.max_diag_violation = report.max_diag_violation.max(gxx);
            report.worst_diag_probe = x[0];
        }
        let h = 1e-4 * (1.0 + norm(&x));
        let mut diag_jac = Matrix::zeros(d, d);
        let mut xp = x.clone();
        for j in 0..d {
            xp[j] = x[j] + h;
            let gp = m.grad1(&xp, &xp)?;
            xp[j] = x[j] - h;
            let gm = m.grad1(&xp, &xp)?;
            xp[j] = x[j];
            diag_jac.set_column(j, &((gp - gm) / (2.0 * h)));
        }
        let h11 = m.hess11(&x, &x)?;
        let h12 = m.hess12(&x, &x)?;
        let h22 = m.hess22(&x, &x)?;
        let identity = &h11 + &h12 + h12.transpose() + &h22;
        let jac_residual = (&diag_jac - (&h11 + &h12)).norm();
        let v = identity.norm().max(jac_residual);
        report.max_identity_violation = report.max_identity_violation.max(v);
    }
    Ok(report)
}
