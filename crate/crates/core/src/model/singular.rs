use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FitnessModel;
use crate::Vector;

/// Residual `‖∇₁g(x,x)‖` below which a Newton root is accepted.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-8;
/// Default deduplication radius for roots.
pub const DEFAULT_MERGE_RADIUS: f64 = 1e-4;

/// Axis-aligned box `[lo₁,hi₁] × … × [lo_d,hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument("box bounds must have equal, positive length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("box is degenerate".into()));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= a - slack && *v <= b + slack)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }
}

/// Located elements of `Γ = {x : ∇₁g(x,x) = 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularitySet {
    pub points: Vec<Vec<f64>>,
    pub search_box: AxisBox,
    pub residuals: Vec<f64>,
    pub merge_radius: f64,
    /// Set when no seed converged.
    pub empty_warning: bool,
}

impl SingularitySet {
    /// A set given explicitly, e.g. for a known model.
    pub fn from_points(points: Vec<Vec<f64>>, search_box: AxisBox) -> Self {
        let residuals = vec![0.0; points.len()];
        let empty_warning = points.is_empty();
        Self {
            points,
            search_box,
            residuals,
            merge_radius: DEFAULT_MERGE_RADIUS,
            empty_warning,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Distance from `x` to the nearest located point, `+∞` when empty.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.nearest(x).map_or(f64::INFINITY, |(_, d)| d)
    }

    /// Index of and distance to the nearest located point.
    pub fn nearest(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (i, d2.sqrt())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Distance from the segment `[p, q]` to the nearest located point, and the
    /// segment parameter `s ∈ [0,1]` of the closest approach.
    pub fn segment_distance(&self, p: &[f64], q: &[f64]) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let dq: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
        let len2: f64 = dq.iter().map(|v| v * v).sum();
        for c in &self.points {
            let s = if len2 > 0.0 {
                let dot: f64 = c.iter().zip(p).zip(&dq).map(|((c, p), d)| (c - p) * d).sum();
                (dot / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d2: f64 = c
                .iter()
                .zip(p)
                .zip(&dq)
                .map(|((c, p), d)| {
                    let r = p + s * d - c;
                    r * r
                })
                .sum();
            let d = d2.sqrt();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, s));
            }
        }
        best
    }
}

/// Multi-start damped Newton on `F(x) = ∇₁g(x,x)` from a regular grid of seeds.
///
/// The Jacobian of `F` is `H₁,₁g + H₁,₂g`. Roots with residual above
/// [`ROOT_RESIDUAL_TOL`] or outside the box are discarded; survivors closer than
/// `merge_radius` are merged, keeping the smaller residual. When nothing
/// converges the set is empty and `empty_warning` is raised.
pub fn find_singularities(
    m: &FitnessModel,
    search_box: &AxisBox,
    grid_per_axis: usize,
    merge_radius: f64,
) -> Result<SingularitySet> {
    let d = m.dim();
    if search_box.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: search_box.dim(),
        });
    }
    if grid_per_axis < 2 {
        return Err(Error::InvalidArgument("grid_per_axis must be at least 2".into()));
    }
    if !(merge_radius > 0.0) {
        return Err(Error::InvalidArgument("merge_radius must be positive".into()));
    }
    let n_seeds = grid_per_axis.pow(d as u32);
    let slack = 1e-9 * (1.0 + search_box.diameter());
    let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
    for idx in 0..n_seeds {
        let mut rem = idx;
        let seed: Vec<f64> = (0..d)
            .map(|i| {
                let k = rem % grid_per_axis;
                rem /= grid_per_axis;
                let t = k as f64 / (grid_per_axis - 1) as f64;
                search_box.lo[i] + t * (search_box.hi[i] - search_box.lo[i])
            })
            .collect();
        if let Some((x, res)) = newton(m, seed)? {
            if res <= ROOT_RESIDUAL_TOL && search_box.contains(&x, slack) {
                found.push((x, res));
            }
        }
    }
    found.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut residuals = Vec::new();
    for (x, r) in found {
        let close = points.iter().any(|p| {
            p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < merge_radius
        });
        if !close {
            points.push(x);
            residuals.push(r);
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let points: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
    let residuals: Vec<f64> = order.iter().map(|&i| residuals[i]).collect();
    let empty_warning = points.is_empty();
    if empty_warning {
        log::warn!("no singularity located in {search_box:?}");
    }
    Ok(SingularitySet {
        points,
        search_box: search_box.clone(),
        residuals,
        merge_radius,
        empty_warning,
    })
}

fn newton(m: &FitnessModel, mut x: Vec<f64>) -> Result<Option<(Vec<f64>, f64)>> {
    let mut f = m.selection_gradient(&x)?;
    let mut res = f.norm();
    for _ in 0..100 {
        if res <= 1e-13 {
            break;
        }
        let jac = m.singularity_jacobian(&x)?;
        let step: Vector = match jac.clone().lu().solve(&f) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => jac.transpose() * &f,
        };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - lambda * s).collect();
            let ft = m.selection_gradient(&trial)?;
            let rt = ft.norm();
            if rt.is_finite() && rt < res {
                x = trial;
                f = ft;
                res = rt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(res.is_finite().then_some((x, res)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DerivMode;

    #[test]
    fn quad1d_has_a_single_root_at_zero() {
        let b = AxisBox::cube(1, -2.0, 2.0).unwrap();
        let s = find_singularities(&FitnessModel::quad1d(), &b, 64, DEFAULT_MERGE_RADIUS).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.points[0][0].abs() <= 1e-8);
        assert!(s.residuals[0] <= ROOT_RESIDUAL_TOL);
    }

    #[test]
    fn band1d_roots_are_plus_minus_one() {
        let b = AxisBox::cube(1, -2.0, 2.0).unwrap();
        for grid in [8, 64] {
            let s = find_singularities(&FitnessModel::band1d(0.5), &b, grid, DEFAULT_MERGE_RADIUS).unwrap();
            assert_eq!(s.len(), 2, "grid {grid}");
            assert!((s.points[0][0] + 1.0).abs() <= 1e-8);
            assert!((s.points[1][0] - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn radial2d_root_is_origin() {
        let b = AxisBox::cube(2, -1.0, 1.0).unwrap();
        let s = find_singularities(&FitnessModel::radial2d(), &b, 16, DEFAULT_MERGE_RADIUS).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.points[0].iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn finite_difference_model_finds_same_roots() {
        let m = FitnessModel::band1d(2.0).with_mode(DerivMode::FiniteDifference { step: 1e-5 });
        let b = AxisBox::cube(1, -2.0, 2.0).unwrap();
        let s = find_singularities(&m, &b, 16, DEFAULT_MERGE_RADIUS).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn empty_box_gives_warning_not_error() {
        let b = AxisBox::cube(1, 0.2, 0.8).unwrap();
        let s = find_singularities(&FitnessModel::band1d(0.5), &b, 8, DEFAULT_MERGE_RADIUS).unwrap();
        assert!(s.is_empty());
        assert!(s.empty_warning);
        assert_eq!(s.distance(&[0.5]), f64::INFINITY);
    }

    #[test]
    fn segment_distance_sees_crossing() {
        let b = AxisBox::cube(1, -2.0, 2.0).unwrap();
        let s = SingularitySet::from_points(vec![vec![0.0]], b);
        let (d, t) = s.segment_distance(&[-0.5], &[1.5]).unwrap();
        assert_eq!(d, 0.0);
        assert!((t - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bad_arguments_are_rejected() {
        let b = AxisBox::cube(1, -2.0, 2.0).unwrap();
        assert!(find_singularities(&FitnessModel::quad1d(), &b, 1, 1e-4).is_err());
        assert!(AxisBox::new(vec![0.0], vec![0.0]).is_err());
    }
}
