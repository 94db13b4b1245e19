use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coeff::{build_field, Backend, CoefficientField};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, sym_eigen, sym_spectral_norm};
use crate::model::{
    kernel_moment, AxisBox, FitnessModel, KernelKind, MutationKernel, SingularitySet, ROOT_RESIDUAL_TOL,
};
use crate::{Matrix, Vector};

/// Envelope slack added to the drift-correction bound.
pub const ENVELOPE_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DimDCase {
    NeverAbsorbed,
    AbsorbedWithPositiveProb,
    Inconclusive,
}

/// Bessel-comparison constants and verdict at a singularity `y`.
#[derive(Debug, Clone, Serialize)]
pub struct DimDVerdict {
    pub y: Vec<f64>,
    /// `a^y`: largest Lipschitz quotient of `a` over sampled pairs.
    pub a_upper: f64,
    /// `a_y`: smallest `sᵀa(x)s / (‖s‖²‖x − y‖)`.
    pub a_lower: f64,
    /// `b̃^y`, `b̃_y`: extremes of the radial component of `b̃`.
    pub bt_upper: f64,
    pub bt_lower: f64,
    pub criterion_a: f64,
    pub criterion_b: f64,
    pub verdict: DimDCase,
    /// Extreme eigenvalues of `DᵀD` with `D = H₁,₁g + H₁,₂g` at `(y, y)`.
    pub eig_min: f64,
    pub eig_max: f64,
    #[serde(rename = "D_invertible")]
    pub d_invertible: bool,
    /// `(M₃/2)‖H₁,₁g(y,y)‖ + δ` with the spectral norm.
    pub bt_envelope: f64,
    /// Largest change of either criterion between the two halves of the sample.
    pub sampling_slack: f64,
    pub samples_used: usize,
}

struct Bounds {
    a_upper: f64,
    a_lower: f64,
    bt_upper: f64,
    bt_lower: f64,
}

impl Bounds {
    fn criteria(&self, d: usize) -> (f64, f64) {
        let d = d as f64;
        (
            (self.bt_lower + d * self.a_lower / 2.0) / self.a_upper,
            (self.bt_upper + d * self.a_upper / 2.0) / self.a_lower,
        )
    }
}

struct Sample {
    x: Vec<f64>,
    a: Matrix,
    radial_bt: f64,
    dist: f64,
}

fn bounds(samples: &[Sample], partner: &[usize]) -> Bounds {
    let mut out = Bounds {
        a_upper: 0.0,
        a_lower: f64::INFINITY,
        bt_upper: f64::NEG_INFINITY,
        bt_lower: f64::INFINITY,
    };
    for (i, s) in samples.iter().enumerate() {
        // pair with y itself, where a vanishes
        out.a_upper = out.a_upper.max(sym_spectral_norm(&s.a) / s.dist);
        let t = &samples[partner[i]];
        let sep = s.x.iter().zip(&t.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if sep > 0.0 {
            out.a_upper = out.a_upper.max(sym_spectral_norm(&(&s.a - &t.a)) / sep);
        }
        out.a_lower = out.a_lower.min(min_eigenvalue(&s.a) / s.dist);
        out.bt_upper = out.bt_upper.max(s.radial_bt);
        out.bt_lower = out.bt_lower.min(s.radial_bt);
    }
    out
}

/// Latin-hypercube points of the cube `[y − R, y + R]^d` that fall in the
/// punctured ball of radius `R`; at least `n` of them.
fn lhs_ball(y: &[f64], radius: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = y.len();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let batch = n;
        let perms: Vec<Vec<usize>> = (0..d)
            .map(|_| {
                let mut p: Vec<usize> = (0..batch).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        for i in 0..batch {
            let x: Vec<f64> = (0..d)
                .map(|k| {
                    let u = (perms[k][i] as f64 + rng.random::<f64>()) / batch as f64;
                    y[k] + radius * (2.0 * u - 1.0)
                })
                .collect();
            let r = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if r > 0.0 && r <= radius && out.len() < n {
                out.push(x);
            }
        }
    }
    out
}

/// Bessel-comparison constants at a singularity `y` of a model in dimension
/// `d ≥ 2`, estimated from `samples` Latin-hypercube points of the punctured
/// ball of radius `nbhd_radius`.
///
/// The verdict is `never_absorbed` when `criterion_a ≥ 1`,
/// `absorbed_with_positive_prob` when `criterion_b < 1`, and `inconclusive`
/// otherwise.
pub fn classify_dimd(
    m: &FitnessModel,
    k: &MutationKernel,
    y: &[f64],
    nbhd_radius: f64,
    samples: usize,
    seed: u64,
) -> Result<DimDVerdict> {
    let d = m.dim();
    if k.dim() != d || y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if k.dim() != d { k.dim() } else { y.len() },
        });
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("at least 2 samples are needed".into()));
    }
    if !(nbhd_radius > 0.0) {
        return Err(Error::InvalidArgument("nbhd_radius must be positive".into()));
    }
    let res = m.selection_gradient(y)?.norm();
    if res > ROOT_RESIDUAL_TOL {
        return Err(Error::Precondition(format!(
            "‖∇₁g(y,y)‖ = {res:e} exceeds {ROOT_RESIDUAL_TOL:e}; y is not a singularity"
        )));
    }
    let dmat = m.singularity_jacobian(y)?;
    let dtd = dmat.transpose() * &dmat;
    let (eigs, _) = sym_eigen(&dtd);
    let eig_min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let eig_max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d_invertible = eig_min > 1e-12 * eig_max.max(1.0);
    if !d_invertible {
        return Err(Error::DegenerateSingularity {
            point: y.to_vec(),
            what: "D = H₁,₁g + H₁,₂g is singular".into(),
        });
    }

    let bx = AxisBox::new(
        y.iter().map(|v| v - 2.0 * nbhd_radius).collect(),
        y.iter().map(|v| v + 2.0 * nbhd_radius).collect(),
    )?;
    let gamma = SingularitySet::from_points(vec![y.to_vec()], bx);
    let backend = match k.kind() {
        KernelKind::Custom { .. } => Backend::Quadrature { tol: 1e-8 },
        _ => Backend::GaussianClosedForm,
    };
    let field: CoefficientField = build_field(m.clone(), k.clone(), gamma, backend)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = lhs_ball(y, nbhd_radius, samples, &mut rng);
    let mut data = Vec::with_capacity(pts.len());
    for x in pts {
        let (_, bt, a) = field.drift_diffusion(&x)?;
        let diff = Vector::from_iterator(d, x.iter().zip(y).map(|(a, b)| a - b));
        let dist = diff.norm();
        data.push(Sample {
            radial_bt: bt.dot(&diff) / dist,
            a,
            dist,
            x,
        });
    }
    let n = data.len();
    let mut partner: Vec<usize> = (0..n).collect();
    partner.shuffle(&mut rng);
    let all = bounds(&data, &partner);
    let (criterion_a, criterion_b) = all.criteria(d);

    let half = n / 2;
    let halves: Vec<(f64, f64)> = [(0, half), (half, n)]
        .iter()
        .map(|&(lo, hi)| {
            let part: Vec<usize> = (0..hi - lo).map(|i| (i + 1) % (hi - lo)).collect();
            bounds(&data[lo..hi], &part).criteria(d)
        })
        .collect();
    let sampling_slack = (halves[0].0 - halves[1].0)
        .abs()
        .max((halves[0].1 - halves[1].1).abs());

    let verdict = if criterion_a >= 1.0 {
        DimDCase::NeverAbsorbed
    } else if criterion_b < 1.0 {
        DimDCase::AbsorbedWithPositiveProb
    } else {
        DimDCase::Inconclusive
    };
    let m3 = kernel_moment(k, y, 3)?;
    let h11 = m.hess11(y, y)?;
    let bt_envelope = 0.5 * m3 * sym_spectral_norm(&h11) + ENVELOPE_DELTA;
    Ok(DimDVerdict {
        y: y.to_vec(),
        a_upper: all.a_upper,
        a_lower: all.a_lower,
        bt_upper: all.bt_upper,
        bt_lower: all.bt_lower,
        criterion_a,
        criterion_b,
        verdict,
        eig_min,
        eig_max,
        d_invertible,
        bt_envelope,
        sampling_slack,
        samples_used: n,
    })
}
