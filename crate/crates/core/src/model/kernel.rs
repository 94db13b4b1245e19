use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cubature;
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_gk15, Tolerance};
use crate::{Matrix, Vector};

/// Density `p(x, h)` of a custom kernel.
pub type DensityFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Kind of mutation law.
#[derive(Clone)]
pub enum KernelKind {
    /// `N(0, s² I)`.
    GaussianIsotropic { s: f64 },
    /// `N(0, K)` with `K = L Lᵀ`.
    GaussianFull { cov: Matrix, chol: Matrix },
    /// User density, assumed to vanish outside `‖h‖ ≤ support_radius`.
    Custom {
        density: DensityFn,
        support_radius: f64,
    },
}

impl fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GaussianIsotropic { s } => f.debug_struct("GaussianIsotropic").field("s", s).finish(),
            Self::GaussianFull { cov, .. } => f.debug_struct("GaussianFull").field("cov", cov).finish(),
            Self::Custom { support_radius, .. } => f
                .debug_struct("Custom")
                .field("support_radius", support_radius)
                .finish(),
        }
    }
}

/// Mutation law `p(x, h)` of the step `h = y − x`.
#[derive(Debug, Clone)]
pub struct MutationKernel {
    dim: usize,
    kind: KernelKind,
}

/// Tolerance used for custom-kernel moments.
pub const MOMENT_TOL: Tolerance = Tolerance {
    abs: 1e-11,
    rel: 1e-9,
    max_panels: 400,
};

/// `E‖h‖^k` for `h ~ N(0, I_d)`, `k ∈ {2, 3}`.
pub fn chi_moment(d: usize, k: u32) -> f64 {
    match k {
        2 => d as f64,
        3 => {
            // Γ((d+1)/2)/Γ(d/2) by the two-step recurrence
            let mut ratio = if d % 2 == 1 {
                1.0 / PI.sqrt()
            } else {
                PI.sqrt() / 2.0
            };
            let mut n = if d % 2 == 1 { 1 } else { 2 };
            while n < d {
                ratio *= (n as f64 + 1.0) / n as f64;
                n += 2;
            }
            2.0f64.powf(1.5) * 0.5 * (d as f64 + 1.0) * ratio
        }
        _ => f64::NAN,
    }
}

impl MutationKernel {
    pub fn gaussian_isotropic(dim: usize, s: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("kernel dimension must be positive".into()));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("kernel scale s = {s} must be positive")));
        }
        Ok(Self {
            dim,
            kind: KernelKind::GaussianIsotropic { s },
        })
    }

    pub fn gaussian_full(cov: Matrix) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || cov.ncols() != dim {
            return Err(Error::InvalidArgument("covariance must be a nonempty square matrix".into()));
        }
        let asym = crate::linalg::asymmetry(&cov);
        if asym > 1e-12 * cov.norm().max(1.0) {
            return Err(Error::Asymmetric(asym));
        }
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?
            .l();
        Ok(Self {
            dim,
            kind: KernelKind::GaussianFull { cov, chol },
        })
    }

    pub fn custom(
        dim: usize,
        support_radius: f64,
        density: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("kernel dimension must be positive".into()));
        }
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::InvalidArgument("support_radius must be positive and finite".into()));
        }
        Ok(Self {
            dim,
            kind: KernelKind::Custom {
                density: Arc::new(density),
                support_radius,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// Covariance factor `L` with `K = LLᵀ` for Gaussian kinds.
    pub fn gaussian_factor(&self) -> Option<Matrix> {
        match &self.kind {
            KernelKind::GaussianIsotropic { s } => Some(Matrix::identity(self.dim, self.dim) * *s),
            KernelKind::GaussianFull { chol, .. } => Some(chol.clone()),
            KernelKind::Custom { .. } => None,
        }
    }

    /// Density `p(x, h)`.
    pub fn density(&self, x: &[f64], h: &[f64]) -> f64 {
        let d = self.dim as f64;
        match &self.kind {
            KernelKind::GaussianIsotropic { s } => {
                let r2: f64 = h.iter().map(|v| v * v).sum();
                (-(r2) / (2.0 * s * s)).exp() / (2.0 * PI * s * s).powf(d / 2.0)
            }
            KernelKind::GaussianFull { chol, .. } => {
                let hv = Vector::from_column_slice(h);
                let z = chol
                    .solve_lower_triangular(&hv)
                    .unwrap_or_else(|| Vector::from_element(self.dim, f64::NAN));
                let det_l: f64 = chol.diagonal().iter().product();
                (-0.5 * z.norm_squared()).exp() / ((2.0 * PI).powf(d / 2.0) * det_l)
            }
            KernelKind::Custom { density, .. } => density(x, h),
        }
    }

    /// Radius beyond which the kernel is treated as zero.
    pub fn support_radius(&self) -> f64 {
        match &self.kind {
            KernelKind::GaussianIsotropic { s } => 13.0 * s,
            KernelKind::GaussianFull { chol, .. } => {
                let smax = crate::linalg::sym_spectral_norm(&(chol * chol.transpose())).sqrt();
                13.0 * smax
            }
            KernelKind::Custom { support_radius, .. } => *support_radius,
        }
    }

    /// Largest `|p(x, h) − p(x, −h)|` over random `x ∈ [-2,2]^d` and
    /// `‖h‖ ≤ support_radius`.
    pub fn symmetry_defect(&self, probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.support_radius();
        let mut worst = 0.0f64;
        for _ in 0..probes {
            let x: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..self.dim)
                .map(|_| rng.random_range(-1.0..1.0) * r / (self.dim as f64).sqrt())
                .collect();
            let mh: Vec<f64> = h.iter().map(|v| -v).collect();
            worst = worst.max((self.density(&x, &h) - self.density(&x, &mh)).abs());
        }
        worst
    }
}

/// `M_k(x) = ∫ ‖h‖^k p(x, h) dh` for `k ∈ {2, 3}`.
pub fn kernel_moment(k: &MutationKernel, x: &[f64], order: u32) -> Result<f64> {
    if order != 2 && order != 3 {
        return Err(Error::InvalidArgument(format!("moment order {order} not in {{2, 3}}")));
    }
    if x.len() != k.dim {
        return Err(Error::DimensionMismatch {
            expected: k.dim,
            got: x.len(),
        });
    }
    match &k.kind {
        KernelKind::GaussianIsotropic { s } => Ok(s.powi(order as i32) * chi_moment(k.dim, order)),
        KernelKind::GaussianFull { cov, .. } => {
            if order == 2 {
                Ok(cov.trace())
            } else {
                gaussian_third_moment(cov)
            }
        }
        KernelKind::Custom { support_radius, .. } => {
            let (v, err) = cubature::ball(k.dim, *support_radius, false, MOMENT_TOL, |h| {
                let r2: f64 = h.iter().map(|a| a * a).sum();
                let p = k.density(x, h);
                Ok(r2.powf(order as f64 / 2.0) * p)
            })?;
            if !v.is_finite() {
                return Err(Error::Quadrature {
                    tol: MOMENT_TOL.rel,
                    estimate: err,
                });
            }
            Ok(v)
        }
    }
}

/// `E‖h‖³` for `h ~ N(0, K)`.
///
/// With `q = ‖h‖²` and eigenvalues `λᵢ` of `K`,
/// `q^{3/2} = 3/(2√π) ∫₀^∞ (1 − e^{−tq}(1 + tq)) t^{−5/2} dt`, and the
/// expectation of the bracket is explicit through the Laplace transform
/// `Φ(t) = Π(1 + 2tλᵢ)^{−1/2}`.
fn gaussian_third_moment(cov: &Matrix) -> Result<f64> {
    let (lambda, _) = crate::linalg::sym_eigen(cov);
    let lam: Vec<f64> = lambda.iter().copied().collect();
    let bracket = |t: f64| -> f64 {
        let mut log_phi = 0.0;
        let mut s = 0.0;
        for &l in &lam {
            log_phi -= 0.5 * (2.0 * t * l).ln_1p();
            s += l / (1.0 + 2.0 * t * l);
        }
        -(log_phi + (t * s).ln_1p()).exp_m1()
    };
    // t = e^u keeps both tails short: integrand decays like e^{-u/2} and e^{-3u/2}
    let integrand = |u: f64| {
        let t = u.exp();
        let b = if t < 1e-8 {
            // leading term of the small-t series
            let s1: f64 = lam.iter().sum();
            let s2: f64 = lam.iter().map(|l| l * l).sum();
            t * t * (s2 + 0.5 * s1 * s1)
        } else {
            bracket(t)
        };
        b * t.powf(-1.5)
    };
    let est = adaptive_gk15(-90.0, 60.0, Tolerance::default(), integrand)?;
    Ok(3.0 / (2.0 * PI.sqrt()) * est.value)
}
