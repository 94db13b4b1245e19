use serde::Serialize;

use super::scale::{scale_functions, Finiteness, ScaleVerdicts};
use crate::coeff::{build_field, Backend};
use crate::error::{Error, Result};
use crate::model::{FitnessModel, KernelKind, MutationKernel, SingularitySet};

/// Fate of the one-dimensional process started between two singularities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dim1Case {
    /// Neither endpoint is reached; recurrent in `(c, c′)`.
    ARecurrent,
    /// Absorbed at `c′` almost surely.
    BHitsRight,
    /// Absorbed at `c` almost surely.
    CHitsLeft,
    /// Absorbed at either endpoint, each with positive probability.
    DHitsEither,
}

impl Dim1Case {
    /// Case from endpoint reachability.
    pub fn from_reachability(left: bool, right: bool) -> Self {
        match (left, right) {
            (false, false) => Self::ARecurrent,
            (false, true) => Self::BHitsRight,
            (true, false) => Self::CHitsLeft,
            (true, true) => Self::DHitsEither,
        }
    }

    pub fn reaches_left(self) -> bool {
        matches!(self, Self::CHitsLeft | Self::DHitsEither)
    }

    pub fn reaches_right(self) -> bool {
        matches!(self, Self::BHitsRight | Self::DHitsEither)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ARecurrent => "a_recurrent",
            Self::BHitsRight => "b_hits_right",
            Self::CHitsLeft => "c_hits_left",
            Self::DHitsEither => "d_hits_either",
        }
    }
}

/// Verdict for a start point `x` between neighbouring singularities `c < x < c′`.
#[derive(Debug, Clone, Serialize)]
pub struct Dim1Verdict {
    pub x: f64,
    pub c: f64,
    pub c_prime: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `α` through the `∂²₂,₂g` form `2∂²₁,₁g/(∂²₁,₁g − ∂²₂,₂g)`.
    pub alpha_alt: f64,
    pub beta_alt: f64,
    pub case: Dim1Case,
    pub scale_p_left: Finiteness,
    pub scale_p_right: Finiteness,
    pub scale_v_left: Finiteness,
    pub scale_v_right: Finiteness,
    pub scale: ScaleVerdicts,
    /// Conclusive scale diagnostics agree with `case`.
    pub consistent: bool,
}

/// Knobs of the scale-function diagnostics run by [`classify_dim1_with`].
#[derive(Debug, Clone, Copy)]
pub struct Dim1Options {
    pub eps: f64,
    pub n_panels: usize,
}

impl Default for Dim1Options {
    fn default() -> Self {
        Self { eps: 0.1, n_panels: 120 }
    }
}

/// Smallest denominator accepted in `α` and `β`.
const DEGENERATE_DENOM: f64 = 1e-12;

/// [`classify_dim1_with`] with default options.
pub fn classify_dim1(m: &FitnessModel, k: &MutationKernel, gamma: &SingularitySet, x: f64) -> Result<Dim1Verdict> {
    classify_dim1_with(m, k, gamma, x, Dim1Options::default())
}

/// Classify the fate of the one-dimensional process started at `x`.
///
/// The endpoint `c` is reachable iff `α < 1` and `c′` iff `β < 1`, which is
/// what the endpoint asymptotics `p′(y) ~ |y − endpoint|^{−α or −β}` of the
/// scale function give. Scale-function diagnostics are run alongside and
/// reported in the verdict.
pub fn classify_dim1_with(
    m: &FitnessModel,
    k: &MutationKernel,
    gamma: &SingularitySet,
    x: f64,
    opts: Dim1Options,
) -> Result<Dim1Verdict> {
    if m.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: m.dim(),
        });
    }
    if gamma.points.iter().any(|p| (p[0] - x).abs() < gamma.merge_radius) {
        return Err(Error::OnSingularSet { point: vec![x] });
    }
    let c = gamma
        .points
        .iter()
        .map(|p| p[0])
        .filter(|&p| p < x)
        .fold(f64::NEG_INFINITY, f64::max);
    let c_prime = gamma
        .points
        .iter()
        .map(|p| p[0])
        .filter(|&p| p > x)
        .fold(f64::INFINITY, f64::min);
    if !c.is_finite() {
        return Err(Error::UnboundedInterval { x, side: "left" });
    }
    if !c_prime.is_finite() {
        return Err(Error::UnboundedInterval { x, side: "right" });
    }
    let ratio = |p: f64| -> Result<(f64, f64)> {
        let h11 = m.hess11(&[p], &[p])?[(0, 0)];
        let h12 = m.hess12(&[p], &[p])?[(0, 0)];
        let h22 = m.hess22(&[p], &[p])?[(0, 0)];
        let denom = h11 + h12;
        if denom.abs() < DEGENERATE_DENOM {
            return Err(Error::DegenerateSingularity {
                point: vec![p],
                what: "∂²₁,₁g + ∂²₁,₂g vanishes".into(),
            });
        }
        Ok((h11 / denom, 2.0 * h11 / (h11 - h22)))
    };
    let (alpha, alpha_alt) = ratio(c)?;
    let (beta, beta_alt) = ratio(c_prime)?;
    let case = Dim1Case::from_reachability(alpha < 1.0, beta < 1.0);

    let backend = match k.kind() {
        KernelKind::Custom { .. } => Backend::Quadrature { tol: 1e-9 },
        _ => Backend::GaussianClosedForm,
    };
    let field = build_field(m.clone(), k.clone(), gamma.clone(), backend)?;
    let scale = scale_functions(&field, c, c_prime, x, opts.eps, opts.n_panels)?;
    let agrees = |f: Finiteness, reachable: bool| match f {
        Finiteness::Inconclusive => true,
        Finiteness::Finite => reachable,
        Finiteness::Infinite => !reachable,
    };
    let consistent = agrees(scale.p_left.verdict, case.reaches_left())
        && agrees(scale.p_right.verdict, case.reaches_right())
        && agrees(scale.v_left.verdict, case.reaches_left())
        && agrees(scale.v_right.verdict, case.reaches_right());
    Ok(Dim1Verdict {
        x,
        c,
        c_prime,
        alpha,
        beta,
        alpha_alt,
        beta_alt,
        case,
        scale_p_left: scale.p_left.verdict,
        scale_p_right: scale.p_right.verdict,
        scale_v_left: scale.v_left.verdict,
        scale_v_right: scale.v_right.verdict,
        scale,
        consistent,
    })
}
