//! Empirical regularity and non-degeneracy probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{halfspace, CoefficientField};
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::model::{kernel_moment, AxisBox, MutationKernel};
use crate::{Matrix, Vector};

/// Values below `H4_FLAG_REL · M₃(x)` are flagged as degenerate.
pub const H4_FLAG_REL: f64 = 1e-3;

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    loop {
        let v = Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// `∫ |h·u|² |h·v| p(x,h) dh`, computed as twice the half-space moment
/// `uᵀ(∫_{h·v>0} hhᵀ(h·v) p dh)u`.
pub fn h4_value(k: &MutationKernel, x: &[f64], u: &Vector, v: &Vector) -> Result<f64> {
    let d = k.dim();
    let m = halfspace::moments(k, x, v, &Matrix::zeros(d, d), 1e-9)?;
    Ok(2.0 * u.dot(&(&m.a * u)))
}

/// Outcome of [`check_h4`].
#[derive(Debug, Clone, Serialize)]
pub struct H4Report {
    pub min_value: f64,
    pub argmin_x: Vec<f64>,
    pub argmin_u: Vec<f64>,
    pub argmin_v: Vec<f64>,
    pub evaluated: usize,
    /// `min_value` is below `H4_FLAG_REL · M₃` at the minimiser.
    pub degenerate: bool,
}

/// Empirical minimum of `∫|h·u|²|h·v| p(x,h)dh` over `‖x‖ ≤ 1/α` and unit
/// `u, v`.
///
/// Every pair of coordinate axes at `x = 0` is probed in addition to the
/// `samples` random triples.
pub fn check_h4(k: &MutationKernel, alpha: f64, samples: usize, seed: u64) -> Result<H4Report> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    let d = k.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes: Vec<(Vec<f64>, Vector, Vector)> = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let mut u = Vector::zeros(d);
            u[i] = 1.0;
            let mut v = Vector::zeros(d);
            v[j] = 1.0;
            probes.push((vec![0.0; d], u, v));
        }
    }
    for _ in 0..samples {
        let dir = unit(&mut rng, d);
        let r = rng.random::<f64>().powf(1.0 / d as f64) / alpha;
        let x: Vec<f64> = (dir * r).iter().copied().collect();
        let u = unit(&mut rng, d);
        let v = unit(&mut rng, d);
        probes.push((x, u, v));
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, (x, u, v)) in probes.iter().enumerate() {
        let val = h4_value(k, x, u, v)?;
        if best.is_none_or(|(b, _)| val < b) {
            best = Some((val, i));
        }
    }
    let (min_value, i) = best.expect("at least one probe");
    let (x, u, v) = &probes[i];
    let m3 = kernel_moment(k, x, 3)?;
    Ok(H4Report {
        min_value,
        argmin_x: x.clone(),
        argmin_u: u.iter().copied().collect(),
        argmin_v: v.iter().copied().collect(),
        evaluated: probes.len(),
        degenerate: min_value <= H4_FLAG_REL * m3,
    })
}

/// Outcome of [`regularity_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub lip_b: f64,
    pub lip_a: f64,
    pub lip_b_tilde: f64,
    pub holder_sigma: f64,
    pub lip_sigma: f64,
    pub min_eig_on_gamma_alpha: f64,
    pub gamma_alpha_samples: usize,
}

/// Empirical Lipschitz and Hölder quotients of the coefficients over random
/// pairs in `region`, and the smallest eigenvalue of `a` on
/// `Γ_α = {d(x,Γ) ≥ α, ‖x‖ ≤ 1/α} ∩ region`.
///
/// Half of the pairs are close pairs (separation about `10⁻³` of the region
/// diameter) so local slopes are seen as well as global ones.
pub fn regularity_probe(
    f: &CoefficientField,
    region: &AxisBox,
    alpha: f64,
    pairs: usize,
    seed: u64,
) -> Result<RegularityReport> {
    if pairs == 0 {
        return Err(Error::InvalidArgument("pairs must be at least 1".into()));
    }
    let d = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|i| rng.random_range(region.lo[i]..region.hi[i]))
            .collect()
    };
    let close = 1e-3 * region.diameter();
    let mut rep = RegularityReport {
        lip_b: 0.0,
        lip_a: 0.0,
        lip_b_tilde: 0.0,
        holder_sigma: 0.0,
        lip_sigma: 0.0,
        min_eig_on_gamma_alpha: f64::INFINITY,
        gamma_alpha_samples: 0,
    };
    for p in 0..pairs {
        let x = sample(&mut rng);
        let y: Vec<f64> = if p % 2 == 0 {
            sample(&mut rng)
        } else {
            let u = unit(&mut rng, d);
            x.iter()
                .zip(u.iter())
                .enumerate()
                .map(|(i, (a, b))| (a + close * b).clamp(region.lo[i], region.hi[i]))
                .collect()
        };
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let cx = f.eval(&x)?;
        let cy = f.eval(&y)?;
        rep.lip_b = rep.lip_b.max((&cx.b - &cy.b).norm() / dist);
        rep.lip_a = rep.lip_a.max((&cx.a - &cy.a).norm() / dist);
        rep.lip_b_tilde = rep.lip_b_tilde.max((&cx.b_tilde - &cy.b_tilde).norm() / dist);
        let ds = (&cx.sigma - &cy.sigma).norm();
        rep.holder_sigma = rep.holder_sigma.max(ds / dist.sqrt());
        rep.lip_sigma = rep.lip_sigma.max(ds / dist);
    }
    for _ in 0..pairs {
        let x = sample(&mut rng);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 / alpha || f.dist_to_gamma(&x) < alpha {
            continue;
        }
        rep.gamma_alpha_samples += 1;
        let a = f.a(&x)?;
        rep.min_eig_on_gamma_alpha = rep.min_eig_on_gamma_alpha.min(min_eigenvalue(&a));
    }
    if rep.gamma_alpha_samples == 0 {
        rep.min_eig_on_gamma_alpha = f64::NAN;
    }
    Ok(rep)
}

/// `max_u ‖σ(y+δu) − σ(y)‖_F / δ` over `n_dirs` random unit directions.
pub fn sigma_quotient_near(
    f: &CoefficientField,
    y: &[f64],
    delta: f64,
    n_dirs: usize,
    seed: u64,
) -> Result<f64> {
    let d = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0 = f.sigma(y)?;
    let mut worst = 0.0f64;
    for _ in 0..n_dirs.max(1) {
        let u = unit(&mut rng, d);
        let x: Vec<f64> = y.iter().zip(u.iter()).map(|(a, b)| a + delta * b).collect();
        worst = worst.max((f.sigma(&x)? - &s0).norm() / delta);
    }
    Ok(worst)
}

/// `(δ, max_u ‖a(y+δu)‖_F)` for each `δ`.
pub fn degeneracy_profile(
    f: &CoefficientField,
    y: &[f64],
    deltas: &[f64],
    n_dirs: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let d = f.dim();
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..n_dirs.max(1) {
            let u = unit(&mut rng, d);
            let x: Vec<f64> = y.iter().zip(u.iter()).map(|(a, b)| a + delta * b).collect();
            worst = worst.max(f.a(&x)?.norm());
        }
        out.push((delta, worst));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_field, Backend};
    use crate::model::{find_singularities, FitnessModel, DEFAULT_MERGE_RADIUS};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn quad1d() -> CoefficientField {
        let m = FitnessModel::quad1d();
        let bx = AxisBox::cube(1, -2.0, 2.0).unwrap();
        let gamma = find_singularities(&m, &bx, 16, DEFAULT_MERGE_RADIUS).unwrap();
        let k = MutationKernel::gaussian_isotropic(1, 1.0).unwrap();
        build_field(m, k, gamma, Backend::GaussianClosedForm).unwrap()
    }

    #[test]
    fn h4_with_equal_directions() {
        let k = MutationKernel::gaussian_isotropic(2, 1.0).unwrap();
        let u = Vector::from_vec(vec![0.6, 0.8]);
        let v = h4_value(&k, &[0.1, 0.2], &u, &u).unwrap();
        assert_relative_eq!(v, 2.0 * (2.0 / PI).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn h4_positive_for_gaussians() {
        let k = MutationKernel::gaussian_full(Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.4])).unwrap();
        let r = check_h4(&k, 0.5, 20, 3).unwrap();
        assert!(r.min_value > 0.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn h4_flags_kernel_concentrated_on_a_line() {
        let w = 0.01;
        let k = MutationKernel::custom(2, 6.0, move |_, h| {
            (-0.5 * h[0] * h[0] - 0.5 * (h[1] / w).powi(2)).exp() / (2.0 * PI * w)
        })
        .unwrap();
        let u = Vector::from_vec(vec![0.0, 1.0]);
        let v = Vector::from_vec(vec![1.0, 0.0]);
        let val = h4_value(&k, &[0.0, 0.0], &u, &v).unwrap();
        // oracle: E[h₂²]E|h₁| = w²√(2/π)
        assert_relative_eq!(val, w * w * (2.0 / PI).sqrt(), max_relative = 1e-4);
        let r = check_h4(&k, 1.0, 0, 1).unwrap();
        assert!(r.degenerate);
    }

    #[test]
    fn quad1d_drift_slope() {
        let f = quad1d();
        let bx = AxisBox::cube(1, -2.0, 2.0).unwrap();
        let r = regularity_probe(&f, &bx, 0.1, 10_000, 7).unwrap();
        assert_relative_eq!(r.lip_b, 0.5, max_relative = 1e-9);
        assert!(r.min_eig_on_gamma_alpha > 0.0);
        // a = (M₃/2)|x| on Γ_α: smallest eigenvalue near (M₃/2)·α
        assert!(r.min_eig_on_gamma_alpha >= (2.0 / PI).sqrt() * 0.1 * (1.0 - 1e-12));
        assert!(r.holder_sigma.is_finite());
    }

    #[test]
    fn sigma_quotient_grows_near_gamma() {
        // σ = c√|x| so the quotient at distance δ is c/√δ
        let f = quad1d();
        let far = sigma_quotient_near(&f, &[0.0], 1e-2, 4, 1).unwrap();
        let near = sigma_quotient_near(&f, &[0.0], 1e-4, 4, 1).unwrap();
        let c = ((2.0 / PI).sqrt()).sqrt();
        assert_relative_eq!(far, c / 1e-1, max_relative = 1e-12);
        assert_relative_eq!(near / far, 10.0, max_relative = 1e-12);
    }

    #[test]
    fn a_vanishes_linearly() {
        let f = quad1d();
        let prof = degeneracy_profile(&f, &[0.0], &[1e-2, 1e-3, 1e-4], 4, 2).unwrap();
        for (delta, a) in prof {
            assert_relative_eq!(a / delta, (2.0 / PI).sqrt(), max_relative = 1e-12);
        }
    }
}
