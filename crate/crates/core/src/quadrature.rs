//! One-dimensional quadrature rules and adaptive Gauss–Kronrod integration.

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nodes and weights of an interpolatory rule on its reference domain.
#[derive(Debug, Clone)]
pub struct GaussRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

/// Golub–Welsch: eigen-decompose the Jacobi matrix of a three-term recurrence
/// with zero diagonal and off-diagonal `beta(k)`, `k = 1..n-1`.
fn golub_welsch<T: Scalar>(n: usize, mu0: T, beta: impl Fn(usize) -> T) -> GaussRule<T> {
    let mut jac = DMatrix::<T>::zeros(n, n);
    for k in 1..n {
        let b = beta(k);
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(T, T)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

impl<T: Scalar> GaussRule<T> {
    /// Gauss–Legendre on `[-1, 1]`.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        golub_welsch(n, T::lit(2.0), |k| {
            let k = T::lit(k as f64);
            k / Float::sqrt(T::lit(4.0) * k * k - T::one())
        })
    }

    /// Gauss–Hermite for the standard normal density (weights sum to one).
    pub fn hermite_normal(n: usize) -> Self {
        assert!(n >= 1);
        golub_welsch(n, T::one(), |k| Float::sqrt(T::lit(k as f64)))
    }

    /// Integrate over `[lo, hi]`; only meaningful for Legendre rules.
    pub fn integrate(&self, lo: T, hi: T, mut f: impl FnMut(T) -> T) -> T {
        let half = T::lit(0.5) * (hi - lo);
        let mid = T::lit(0.5) * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(mid + half * x))
            * half
    }

    /// Nodes and weights mapped onto `[lo, hi]`.
    pub fn mapped(&self, lo: T, hi: T) -> Vec<(T, T)> {
        let half = T::lit(0.5) * (hi - lo);
        let mid = T::lit(0.5) * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (mid + half * x, w * half))
            .collect()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Largest number of panels the adaptive partition may reach.
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-10,
            max_panels: 2000,
        }
    }
}

/// Value and error estimate of an adaptive integral.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
}

fn gk15<T: Scalar>(lo: T, hi: T, f: &mut impl FnMut(T) -> T) -> (T, T) {
    let half = T::lit(0.5) * (hi - lo);
    let mid = T::lit(0.5) * (hi + lo);
    let fc = f(mid);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let s = f(mid - dx) + f(mid + dx);
        kron += s * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss += s * T::lit(WG[j / 2]);
        }
    }
    (kron * half, Float::abs((kron - gauss) * half))
}

/// Globally adaptive 15-point Gauss–Kronrod: the panel with the largest error
/// estimate is bisected until the summed error meets the target.
///
/// Fails with [`Error::Quadrature`] if the integrand produces non-finite values or
/// the target is missed by more than a factor 10 once `tol.max_panels` is reached.
pub fn adaptive_gk15<T: Scalar>(
    lo: T,
    hi: T,
    tol: Tolerance,
    mut f: impl FnMut(T) -> T,
) -> Result<Estimate<T>> {
    let (whole, err) = gk15(lo, hi, &mut f);
    let mut panels = vec![(lo, hi, whole, err)];
    let mut value = whole;
    let mut error = err;
    let target = |v: T| Float::max(T::lit(tol.abs), T::lit(tol.rel) * Float::abs(v));
    while error > target(value) && panels.len() < tol.max_panels && Float::is_finite(value) {
        let worst = (0..panels.len())
            .max_by(|&i, &j| panels[i].3.partial_cmp(&panels[j].3).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        let (a, b, v, e) = panels.swap_remove(worst);
        let mid = T::lit(0.5) * (a + b);
        let (l, el) = gk15(a, mid, &mut f);
        let (r, er) = gk15(mid, b, &mut f);
        value = value - v + l + r;
        error = error - e + el + er;
        panels.push((a, mid, l, el));
        panels.push((mid, b, r, er));
    }
    // re-sum to shed accumulated cancellation from the running updates
    value = panels.iter().fold(T::zero(), |s, p| s + p.2);
    error = panels.iter().fold(T::zero(), |s, p| s + p.3);
    let tgt = target(value);
    if !Float::is_finite(value) || !Float::is_finite(error) || error > tgt * T::lit(10.0) {
        return Err(Error::Quadrature {
            tol: tgt.to_f64_lossy(),
            estimate: error.to_f64_lossy(),
        });
    }
    Ok(Estimate { value, error })
}

/// Vector-valued adaptive Gauss–Kronrod; `f(x, out)` fills `out`.
///
/// The error of a panel is its largest component error. Unlike
/// [`adaptive_gk15`] a missed target is not an error; the achieved estimate is
/// returned for the caller to judge.
pub fn adaptive_gk15_vec(
    lo: f64,
    hi: f64,
    n_out: usize,
    tol: Tolerance,
    f: &mut dyn FnMut(f64, &mut [f64]) -> Result<()>,
) -> Result<(Vec<f64>, f64)> {
    let (whole, err) = gk15_vec(lo, hi, n_out, f)?;
    let scale = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let target = |v: &[f64]| tol.abs.max(tol.rel * scale(v));
    let mut value = whole.clone();
    let mut error = err;
    let mut panels = vec![(lo, hi, whole, err)];
    while error > target(&value) && panels.len() < tol.max_panels {
        let worst = (0..panels.len())
            .max_by(|&i, &j| panels[i].3.total_cmp(&panels[j].3))
            .unwrap_or(0);
        let (a, b, v, e) = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (l, el) = gk15_vec(a, mid, n_out, f)?;
        let (r, er) = gk15_vec(mid, b, n_out, f)?;
        for k in 0..n_out {
            value[k] += l[k] + r[k] - v[k];
        }
        error += el + er - e;
        panels.push((a, mid, l, el));
        panels.push((mid, b, r, er));
    }
    let mut value = vec![0.0; n_out];
    let mut error = 0.0;
    for p in &panels {
        for k in 0..n_out {
            value[k] += p.2[k];
        }
        error += p.3;
    }
    if value.iter().any(|v| !v.is_finite()) || !error.is_finite() {
        return Err(Error::Quadrature {
            tol: target(&value),
            estimate: error,
        });
    }
    Ok((value, error))
}

fn gk15_vec(
    lo: f64,
    hi: f64,
    n_out: usize,
    f: &mut dyn FnMut(f64, &mut [f64]) -> Result<()>,
) -> Result<(Vec<f64>, f64)> {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut kron = vec![0.0; n_out];
    let mut gauss = vec![0.0; n_out];
    let mut buf = vec![0.0; n_out];
    f(mid, &mut buf)?;
    for k in 0..n_out {
        kron[k] = buf[k] * WGK[7];
        gauss[k] = buf[k] * WG[3];
    }
    let mut buf2 = vec![0.0; n_out];
    for j in 0..7 {
        let dx = half * XGK[j];
        f(mid - dx, &mut buf)?;
        f(mid + dx, &mut buf2)?;
        for k in 0..n_out {
            let s = buf[k] + buf2[k];
            kron[k] += s * WGK[j];
            if j % 2 == 1 {
                gauss[k] += s * WG[j / 2];
            }
        }
    }
    let mut err = 0.0f64;
    for k in 0..n_out {
        err = err.max(((kron[k] - gauss[k]) * half).abs());
        kron[k] *= half;
    }
    if kron.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature {
            tol: 0.0,
            estimate: f64::INFINITY,
        });
    }
    Ok((kron, err))
}
