//! Freidlin–Wentzell action of discrete paths, the Brownian control that
//! realises it, the control-to-path map, and minimum-action quasi-potentials.

mod lbfgs;
mod qp;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::linalg::psd_inverse_floored;
use crate::{Matrix, Vector};

pub use lbfgs::{minimize, LbfgsOptions, LbfgsResult};
pub use qp::{domain_scale, exit_cost, quasipotential, radial_connector, ExitCost, ExitCostOptions, QpOptions, QuasiPotentialResult};

/// Relative eigenvalue floor of `a` inside the action integrand.
pub const A_INV_FLOOR: f64 = 1e-14;

/// A path sampled on an increasing time grid starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// First grid index inside the `Γ` tube, if any.
    pub t_psi_index: Option<usize>,
}

impl DiscretePath {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != points.len() || times.len() < 2 {
            return Err(Error::InvalidArgument("a path needs at least two nodes and matching lengths".into()));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("times must increase from 0".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidArgument("points of unequal dimension".into()));
        }
        Ok(Self { times, points, t_psi_index: None })
    }

    /// `n` uniform segments on `[0, t_end]` with `ψ(t) = g(t)`.
    pub fn sample(t_end: f64, n: usize, g: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let times: Vec<f64> = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
        let points = times.iter().map(|&t| g(t)).collect();
        Self::new(times, points)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Set `t_psi_index` to the first node inside the tube of `f`.
    pub fn with_tube_index(mut self, f: &CoefficientField) -> Self {
        self.t_psi_index = self.points.iter().position(|p| f.in_tube(p));
        self
    }

    /// CSV with header `t,x1,...,xd`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, p) in self.times.iter().zip(&self.points) {
            let mut row = vec![t.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn sup_distance(&self, other: &DiscretePath) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .flat_map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

/// Value of the action, `+∞` when the path leaves the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionValue {
    pub value: f64,
    pub infinite: bool,
    /// `|midpoint − trapezoid| / 3` over the finite part.
    pub quadrature_error: f64,
}

impl ActionValue {
    fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            infinite: true,
            quadrature_error: 0.0,
        }
    }
}

fn sub(p: &[f64], q: &[f64]) -> Vector {
    Vector::from_iterator(p.len(), p.iter().zip(q).map(|(a, b)| a - b))
}

fn midpoint(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// `vᵀa⁻¹v/2` with the eigenvalue floor.
pub(crate) fn quad_form(a: &Matrix, v: &Vector) -> Option<f64> {
    if v.iter().all(|x| *x == 0.0) {
        return Some(0.0);
    }
    let inv = psd_inverse_floored(a, A_INV_FLOOR)?;
    Some(0.5 * v.dot(&(inv * v)))
}

/// Index from which the path must stay constant, and whether it does.
fn admissible_until(f: &CoefficientField, psi: &DiscretePath) -> (usize, bool) {
    let end = psi.len() - 1;
    let k = psi
        .t_psi_index
        .or_else(|| psi.points.iter().position(|p| f.in_tube(p)));
    match k {
        None => (end, true),
        Some(k) => {
            let frozen = psi.points[k..].iter().all(|p| p == &psi.points[k]);
            (k, frozen)
        }
    }
}

/// Midpoint-rule action `½∫(ψ̇ − b(ψ))ᵀa⁻¹(ψ)(ψ̇ − b(ψ))dt` up to `t_ψ`.
///
/// The value is flagged infinite when the path moves after entering the tube
/// around `Γ`, or when a midpoint lies in the tube before that.
pub fn action(f: &CoefficientField, psi: &DiscretePath) -> Result<ActionValue> {
    if psi.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: psi.dim() });
    }
    let (k, frozen) = admissible_until(f, psi);
    if !frozen {
        return Ok(ActionValue::infinite());
    }
    let mut mid = 0.0;
    let mut trap = 0.0;
    let mut node_b: Vec<Option<(Vector, Matrix)>> = vec![None; k + 1];
    let mut node = |i: usize| -> Result<(Vector, Matrix)> {
        if node_b[i].is_none() {
            let (b, _, a) = f.drift_diffusion(&psi.points[i])?;
            node_b[i] = Some((b, a));
        }
        Ok(node_b[i].clone().unwrap())
    };
    for i in 0..k {
        let (p, q) = (&psi.points[i], &psi.points[i + 1]);
        let h = psi.times[i + 1] - psi.times[i];
        let m = midpoint(p, q);
        if f.in_tube(&m) {
            return Ok(ActionValue::infinite());
        }
        let vel = sub(q, p) / h;
        let (b, _, a) = f.drift_diffusion(&m)?;
        let Some(c) = quad_form(&a, &(&vel - b)) else {
            return Ok(ActionValue::infinite());
        };
        mid += h * c;
        // trapezoid companion, skipping nodes where a vanishes
        let mut t = 0.0;
        for j in [i, i + 1] {
            if f.in_tube(&psi.points[j]) {
                t = f64::NAN;
                break;
            }
            let (bj, aj) = node(j)?;
            t += 0.5 * quad_form(&aj, &(&vel - bj)).unwrap_or(f64::NAN);
        }
        trap += h * if t.is_finite() { t } else { c };
    }
    Ok(ActionValue {
        value: mid,
        infinite: false,
        quadrature_error: (mid - trap).abs() / 3.0,
    })
}

/// Control recovered from a finite-action path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Control {
    pub phi: DiscretePath,
    /// `½∫‖φ̇‖²`.
    pub j_value: f64,
}

/// `φ̇ = σ⁻¹(ψ)(ψ̇ − b(ψ))` per segment, with `φ` constant after `t_ψ`.
pub fn control_from_path(f: &CoefficientField, psi: &DiscretePath) -> Result<Control> {
    let act = action(f, psi)?;
    if act.infinite {
        return Err(Error::Precondition("the path has infinite action".into()));
    }
    let (k, _) = admissible_until(f, psi);
    let d = psi.dim();
    let mut phi = vec![vec![0.0; d]];
    let mut j = 0.0;
    for i in 0..psi.len() - 1 {
        let prev = phi[i].clone();
        if i >= k {
            phi.push(prev);
            continue;
        }
        let (p, q) = (&psi.points[i], &psi.points[i + 1]);
        let h = psi.times[i + 1] - psi.times[i];
        let m = midpoint(p, q);
        let c = f.eval(&m)?;
        let vel = sub(q, p) / h - &c.b;
        let rate = c
            .sigma
            .clone()
            .lu()
            .solve(&vel)
            .filter(|r| r.iter().all(|v| v.is_finite()))
            .ok_or(Error::DegenerateSigma { point: m })?;
        j += 0.5 * h * rate.norm_squared();
        phi.push(prev.iter().zip(rate.iter()).map(|(a, r)| a + h * r).collect());
    }
    let mut path = DiscretePath::new(psi.times.clone(), phi)?;
    path.t_psi_index = (k < psi.len() - 1).then_some(k);
    Ok(Control { phi: path, j_value: j })
}

/// Solve `ẏ = b(y) + σ(y)φ̇` by RK4 on the grid of `phi`, with `φ̇` constant on
/// each segment; the solution freezes on entering the tube around `Γ`.
#[allow(non_snake_case)]
pub fn integrate_S(f: &CoefficientField, x0: &[f64], phi: &DiscretePath) -> Result<DiscretePath> {
    if x0.len() != f.dim() || phi.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x0.len() });
    }
    let rhs = |y: &[f64], rate: &Vector| -> Result<Vector> {
        let c = f.eval(y)?;
        Ok(c.b + c.sigma * rate)
    };
    let axpy = |y: &[f64], h: f64, k: &Vector| -> Vec<f64> { y.iter().zip(k.iter()).map(|(a, b)| a + h * b).collect() };
    let mut points = vec![x0.to_vec()];
    let mut frozen_at = f.in_tube(x0).then_some(0);
    for i in 0..phi.len() - 1 {
        let y = points[i].clone();
        if frozen_at.is_some() {
            points.push(y);
            continue;
        }
        let h = phi.times[i + 1] - phi.times[i];
        let rate = sub(&phi.points[i + 1], &phi.points[i]) / h;
        let k1 = rhs(&y, &rate)?;
        let k2 = rhs(&axpy(&y, 0.5 * h, &k1), &rate)?;
        let k3 = rhs(&axpy(&y, 0.5 * h, &k2), &rate)?;
        let k4 = rhs(&axpy(&y, h, &k3), &rate)?;
        let step = (k1 + k2 * 2.0 + k3 * 2.0 + k4) / 6.0;
        let next = axpy(&y, h, &step);
        if f.in_tube(&next) {
            frozen_at = Some(i + 1);
        }
        points.push(next);
    }
    let mut path = DiscretePath::new(phi.times.clone(), points)?;
    path.t_psi_index = frozen_at;
    Ok(path)
}

/// Deterministic flow `ẋ = b(x)` sampled on `n` uniform RK4 steps.
pub fn flow(f: &CoefficientField, x0: &[f64], t_end: f64, n: usize) -> Result<DiscretePath> {
    let zero = DiscretePath::sample(t_end, n, |_| vec![0.0; x0.len()])?;
    integrate_S(f, x0, &zero)
}

/// Outcome of the lower-semicontinuity counterexample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonLscWitness {
    pub i_limit_path: ActionValue,
    pub n_values: Vec<usize>,
    pub i_sequence: Vec<f64>,
    /// Upper bound on every `I(ψ_n)` from the local lower bound `a ≥ a₀‖x‖` and
    /// the Lipschitz constant of `b` on the segment `[0, x₀]`.
    pub bound: f64,
}

/// Paths `ψ(t) = (1 − 2t/T)²x₀` through the singularity at the origin, and
/// their versions `ψ_n` held constant on `[T/2 − 1/n, T/2 + 1/n]`.
///
/// `ψ` moves after touching `Γ` so its action is infinite, while the `ψ_n`
/// have uniformly bounded action.
pub fn non_lsc_witness(
    f: &CoefficientField,
    x0: &[f64],
    t_end: f64,
    n_values: &[usize],
    n_grid: usize,
) -> Result<NonLscWitness> {
    if f.in_tube(x0) {
        return Err(Error::Precondition("x0 must lie off the singular set".into()));
    }
    if f.gamma().distance(&vec![0.0; x0.len()]) > f.tube() {
        return Err(Error::Precondition("the origin must be a singularity".into()));
    }
    let n_grid = n_grid + n_grid % 2;
    let psi_at = |t: f64| -> Vec<f64> {
        let s = (1.0 - 2.0 * t / t_end).powi(2);
        x0.iter().map(|v| s * v).collect()
    };
    let limit = action(f, &DiscretePath::sample(t_end, n_grid, psi_at)?)?;

    let norm_x0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut i_sequence = Vec::new();
    let mut surcharge: f64 = 0.0;
    for &n in n_values {
        let w = 1.0 / n as f64;
        if !(w < t_end / 2.0) {
            return Err(Error::InvalidArgument(format!("n = {n} too small for T = {t_end}")));
        }
        let (t1, t2) = (t_end / 2.0 - w, t_end / 2.0 + w);
        let mut times: Vec<f64> = (0..=n_grid).map(|i| t_end * i as f64 / n_grid as f64).collect();
        times.retain(|t| (t - t1).abs() > 1e-12 && (t - t2).abs() > 1e-12);
        times.extend([t1, t2]);
        times.sort_by(f64::total_cmp);
        let plateau = psi_at(t1);
        let points = times
            .iter()
            .map(|&t| if t > t1 && t < t2 { plateau.clone() } else { psi_at(t) })
            .collect();
        let v = action(f, &DiscretePath::new(times, points)?)?;
        i_sequence.push(v.value);
        surcharge = surcharge.max(2.0 * w * plateau.iter().map(|v| v * v).sum::<f64>().sqrt());
    }

    // a₀ and K over the segment (0, x₀]
    let mut a0 = f64::INFINITY;
    let mut lip: f64 = 0.0;
    let probes = 200;
    for j in 1..=probes {
        let s = j as f64 / probes as f64;
        let x: Vec<f64> = x0.iter().map(|v| s * v).collect();
        let (b, _, a) = f.drift_diffusion(&x)?;
        a0 = a0.min(crate::linalg::min_eigenvalue(&a) / (s * norm_x0));
        lip = lip.max(b.norm() / (s * norm_x0));
    }
    // ψ̇ = −(4/T)(1 − 2t/T)x₀ and ‖ψ‖ = (1 − 2t/T)²‖x₀‖ give the integrand
    // 2·16‖x₀‖/T² + 2K²‖ψ‖; ∫₀ᵀ‖ψ‖dt = T‖x₀‖/3
    let main = (32.0 * norm_x0 / t_end + 2.0 * lip * lip * t_end * norm_x0 / 3.0) / (2.0 * a0);
    let bound = main + lip * lip * surcharge / (2.0 * a0);
    Ok(NonLscWitness {
        i_limit_path: limit,
        n_values: n_values.to_vec(),
        i_sequence,
        bound,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::coeff::{build_field, Backend};
    use crate::model::{find_singularities, AxisBox, FitnessModel, MutationKernel, DEFAULT_MERGE_RADIUS};
    use approx::assert_relative_eq;

    pub(crate) fn field(m: FitnessModel) -> CoefficientField {
        let d = m.dim();
        let bx = AxisBox::cube(d, -2.0, 2.0).unwrap();
        let gamma = find_singularities(&m, &bx, 16, DEFAULT_MERGE_RADIUS).unwrap();
        let k = MutationKernel::gaussian_isotropic(d, 1.0).unwrap();
        build_field(m, k, gamma, Backend::GaussianClosedForm).unwrap()
    }

    #[test]
    fn flow_has_zero_action() {
        let f = field(FitnessModel::quad1d());
        let psi = flow(&f, &[0.5], 3.0, 2000).unwrap();
        assert_relative_eq!(psi.points.last().unwrap()[0], 0.5 * (-1.5f64).exp(), max_relative = 1e-10);
        assert!(action(&f, &psi).unwrap().value <= 1e-6);
        let c = control_from_path(&f, &psi).unwrap();
        assert!(c.j_value <= 1e-6);
        assert!(c.phi.points.iter().all(|p| p[0].abs() < 1e-5));
    }

    #[test]
    fn linear_path_matches_scalar_oracle() {
        let f = field(FitnessModel::quad1d());
        let psi = DiscretePath::sample(1.0, 100_000, |t| vec![0.5 + 0.3 * t]).unwrap();
        let v = action(&f, &psi).unwrap();
        let c = (2.0 / std::f64::consts::PI).sqrt();
        let g = |t: f64| {
            let p = 0.5 + 0.3 * t;
            0.5 * (0.3 + p / 2.0).powi(2) / (c * p)
        };
        let n = 1_000_000;
        let oracle: f64 = (0..n)
            .map(|i| {
                let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
                0.5 * (g(a) + g(b)) * (b - a)
            })
            .sum();
        assert_relative_eq!(v.value, oracle, max_relative = 1e-4);
        assert!(v.quadrature_error < 1e-8);
    }

    #[test]
    fn moving_after_gamma_is_infinite() {
        let f = field(FitnessModel::quad1d());
        let psi = DiscretePath::sample(1.0, 100, |t| vec![0.5 - t]).unwrap();
        assert!(action(&f, &psi).unwrap().infinite);
        let frozen = DiscretePath::sample(1.0, 100, |t| vec![(0.5 - t).max(0.0)]).unwrap();
        assert!(!action(&f, &frozen).unwrap().infinite);
    }

    #[test]
    fn duality_and_round_trip() {
        let f = field(FitnessModel::radial2d());
        let psi = DiscretePath::sample(1.0, 10_000, |t| vec![0.3 + 0.2 * t, 0.1 * (3.0 * t).sin() + 0.2]).unwrap();
        let i = action(&f, &psi).unwrap();
        let c = control_from_path(&f, &psi).unwrap();
        assert!((i.value - c.j_value).abs() <= 1e-6 * (1.0 + i.value));
        let back = integrate_S(&f, &psi.points[0], &c.phi).unwrap();
        assert!(back.sup_distance(&psi) <= 1e-3);
    }

    #[test]
    fn start_on_gamma_stays_put() {
        let f = field(FitnessModel::quad1d());
        let phi = DiscretePath::sample(1.0, 10, |t| vec![t]).unwrap();
        let y = integrate_S(&f, &[0.0], &phi).unwrap();
        assert!(y.points.iter().all(|p| p[0] == 0.0));
    }

    #[test]
    fn witness_is_bounded() {
        let f = field(FitnessModel::quad1d());
        let w = non_lsc_witness(&f, &[0.5], 1.0, &[4, 16, 64], 20_000).unwrap();
        assert!(w.i_limit_path.infinite);
        assert!(w.i_sequence.iter().all(|v| v.is_finite() && *v <= w.bound));
        assert!(w.i_sequence[2] <= 2.0 * w.i_sequence[1]);
    }
}
