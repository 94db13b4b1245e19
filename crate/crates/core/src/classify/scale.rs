//! Scale function and speed integral of the one-dimensional diffusion, with
//! endpoint finiteness decided by local power-law fits.

use serde::Serialize;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

/// Half width of the band around exponent 1 reported as inconclusive.
pub const INCONCLUSIVE_BAND: f64 = 0.05;
/// Mesh depth: the innermost node sits this many decades from the endpoint.
const DECADES: f64 = 9.0;
/// Decades used for the exponent fit, counted from the innermost node.
const FIT_DECADES: f64 = 3.0;

/// Finiteness of an improper endpoint integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Finiteness {
    Finite,
    Infinite,
    Inconclusive,
}

impl Finiteness {
    /// `∫₀ u^{−e} du` is finite iff `e < 1`.
    pub fn from_exponent(e: f64) -> Self {
        if !e.is_finite() {
            Self::Inconclusive
        } else if e < 1.0 - INCONCLUSIVE_BAND {
            Self::Finite
        } else if e > 1.0 + INCONCLUSIVE_BAND {
            Self::Infinite
        } else {
            Self::Inconclusive
        }
    }
}

/// Fitted endpoint behaviour `integrand ~ u^{−exponent}` at distance `u`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EndpointFit {
    pub verdict: Finiteness,
    pub exponent: f64,
    /// `log` of the integral over the meshed part `[endpoint ± u_min, γ]`.
    pub log_partial: f64,
}

/// Endpoint diagnostics of `p` and `v`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaleVerdicts {
    pub p_left: EndpointFit,
    pub p_right: EndpointFit,
    pub v_left: EndpointFit,
    pub v_right: EndpointFit,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// One side of the interval: `endpoint` with the reference point `gamma_ref`.
///
/// Nodes `u_j = L·10^{−DECADES·j/n}` measure the distance to the endpoint; the
/// log-derivative `log p′` is accumulated panel by panel with Gauss–Legendre in
/// `log u`, and the speed integrand `q = p′ ∫ 2/(ε p′ σ²)` by the trapezoid rule
/// in `log u`, all in log form.
fn side(f: &CoefficientField, endpoint: f64, gamma_ref: f64, eps: f64, n: usize) -> Result<(EndpointFit, EndpointFit)> {
    let len = (gamma_ref - endpoint).abs();
    let dir = (gamma_ref - endpoint).signum();
    let point = |u: f64| endpoint + dir * u;
    // r(z) = b^ε/(ε a); log p′(y) = −2∫_γ^y r dz
    let r = |u: f64| -> Result<f64> {
        let z = point(u);
        let (b, bt, a) = f.drift_diffusion(&[z])?;
        let a = a[(0, 0)];
        if !(a > 0.0) {
            return Err(Error::OnSingularSet { point: vec![z] });
        }
        Ok((b[0] + eps * bt[0]) / (eps * a))
    };
    let gl = GaussRule::<f64>::legendre(8);
    let log_u: Vec<f64> = (0..=n)
        .map(|j| len.ln() - DECADES * std::f64::consts::LN_10 * j as f64 / n as f64)
        .collect();
    // log p′ at the nodes, with log p′(γ) = 0
    let mut log_pp = vec![0.0; n + 1];
    for j in 1..=n {
        // ∫ over z from point(u_{j-1}) to point(u_j); dz = dir·u ds with s = log u
        let mut acc = 0.0;
        for (s, w) in gl.mapped(log_u[j - 1], log_u[j]) {
            let u = s.exp();
            acc += w * r(u)? * dir * u;
        }
        log_pp[j] = log_pp[j - 1] - 2.0 * acc;
    }
    let log_a: Vec<f64> = log_u
        .iter()
        .map(|&s| Ok(f.a(&[point(s.exp())])?[(0, 0)].ln()))
        .collect::<Result<_>>()?;
    // integrands in the variable s = log u carry the Jacobian u
    let log_p_int: Vec<f64> = (0..=n).map(|j| log_pp[j] + log_u[j]).collect();
    let h = (log_u[0] - log_u[1]).abs();
    let mut log_inner = vec![f64::NEG_INFINITY; n + 1];
    for j in 1..=n {
        // ∫ 2/(ε p′ a) from u_j to L
        let t0 = (2.0f64 / eps).ln() - log_pp[j - 1] - log_a[j - 1] + log_u[j - 1];
        let t1 = (2.0f64 / eps).ln() - log_pp[j] - log_a[j] + log_u[j];
        let trap = log_sum_exp(t0, t1) + (0.5 * h).ln();
        log_inner[j] = log_sum_exp(log_inner[j - 1], trap);
    }
    let log_q: Vec<f64> = (0..=n).map(|j| log_pp[j] + log_inner[j]).collect();

    let fit_nodes = ((FIT_DECADES / DECADES) * n as f64).ceil() as usize;
    let lo = n - fit_nodes.max(2);
    let xs: Vec<f64> = log_u[lo..].to_vec();
    let e_p = -slope(&xs, &log_pp[lo..]);
    let e_q = -slope(&xs, &log_q[lo..]);
    let total = |v: &[f64]| -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for j in 1..v.len() {
            acc = log_sum_exp(acc, log_sum_exp(v[j - 1], v[j]) + (0.5 * h).ln());
        }
        acc
    };
    let log_q_int: Vec<f64> = (0..=n).map(|j| log_q[j] + log_u[j]).collect();
    Ok((
        EndpointFit {
            verdict: Finiteness::from_exponent(e_p),
            exponent: e_p,
            log_partial: total(&log_p_int),
        },
        EndpointFit {
            verdict: Finiteness::from_exponent(e_q),
            exponent: e_q,
            log_partial: total(&log_q_int),
        },
    ))
}

/// Endpoint finiteness of the scale function `p` and the speed integral `v`
/// relative to the reference point `gamma_ref`.
///
/// Each side is meshed geometrically with `n_panels` panels toward the
/// endpoint; the local exponent of the integrand is fitted over the innermost
/// decades and thresholded at 1 with an inconclusive band of
/// [`INCONCLUSIVE_BAND`].
pub fn scale_functions(
    f: &CoefficientField,
    c: f64,
    c_prime: f64,
    gamma_ref: f64,
    eps: f64,
    n_panels: usize,
) -> Result<ScaleVerdicts> {
    if f.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: f.dim() });
    }
    if !(c < gamma_ref && gamma_ref < c_prime) {
        return Err(Error::Precondition(format!(
            "reference point {gamma_ref} not inside ({c}, {c_prime})"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if n_panels < 9 {
        return Err(Error::InvalidArgument("n_panels must be at least 9".into()));
    }
    let (p_left, v_left) = side(f, c, gamma_ref, eps, n_panels)?;
    let (p_right, v_right) = side(f, c_prime, gamma_ref, eps, n_panels)?;
    Ok(ScaleVerdicts {
        p_left,
        p_right,
        v_left,
        v_right,
    })
}
