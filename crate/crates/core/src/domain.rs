//! Bounded domains with signed distance and boundary parametrisation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bounded open domain `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Interval { lo: f64, hi: f64 },
    /// Simple polygon in the plane, vertices in order.
    Polygon { vertices: Vec<[f64; 2]> },
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Ball { center, radius } => {
                if center.is_empty() || !(*radius > 0.0) {
                    return Err(Error::InvalidArgument("ball needs a center and a positive radius".into()));
                }
            }
            Self::Interval { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::InvalidArgument("interval needs lo < hi".into()));
                }
            }
            Self::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidArgument("polygon needs at least 3 vertices".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Ball { center, .. } => center.len(),
            Self::Interval { .. } => 1,
            Self::Polygon { .. } => 2,
        }
    }

    /// Signed Euclidean distance to `∂G`, negative inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            Self::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2.sqrt() - radius
            }
            Self::Interval { lo, hi } => (lo - x[0]).max(x[0] - hi),
            Self::Polygon { vertices } => {
                let p = [x[0], x[1]];
                let n = vertices.len();
                let mut dist = f64::INFINITY;
                let mut inside = false;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    dist = dist.min(dist_to_segment(p, a, b));
                    if (a[1] > p[1]) != (b[1] > p[1]) {
                        let xc = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                        if p[0] < xc {
                            inside = !inside;
                        }
                    }
                }
                if inside {
                    -dist
                } else {
                    dist
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Boundary point at parameter `t ∈ [0, 1)`.
    ///
    /// Balls in the plane and polygons are parametrised by arc length fraction,
    /// intervals by `t < ½ ↦ lo`, otherwise `hi`. Balls in other dimensions are
    /// not parametrised.
    pub fn boundary_param(&self, t: f64) -> Option<Vec<f64>> {
        match self {
            Self::Ball { center, radius } if center.len() == 2 => {
                let th = 2.0 * PI * t;
                Some(vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()])
            }
            Self::Ball { center, radius } if center.len() == 1 => {
                Some(vec![if t < 0.5 { center[0] - radius } else { center[0] + radius }])
            }
            Self::Ball { .. } => None,
            Self::Interval { lo, hi } => Some(vec![if t < 0.5 { *lo } else { *hi }]),
            Self::Polygon { vertices } => {
                let n = vertices.len();
                let lens: Vec<f64> = (0..n)
                    .map(|i| {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % n];
                        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
                    })
                    .collect();
                let total: f64 = lens.iter().sum();
                let mut s = t.rem_euclid(1.0) * total;
                for i in 0..n {
                    if s <= lens[i] || i == n - 1 {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % n];
                        let f = if lens[i] > 0.0 { (s / lens[i]).min(1.0) } else { 0.0 };
                        return Some(vec![a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
                    }
                    s -= lens[i];
                }
                None
            }
        }
    }

    /// `n` evenly spaced boundary points (two for intervals).
    pub fn boundary_grid(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            Self::Interval { .. } => vec![self.boundary_param(0.0).unwrap(), self.boundary_param(0.5).unwrap()],
            Self::Ball { center, .. } if center.len() == 1 => {
                vec![self.boundary_param(0.0).unwrap(), self.boundary_param(0.5).unwrap()]
            }
            _ => (0..n)
                .filter_map(|i| self.boundary_param(i as f64 / n as f64))
                .collect(),
        }
    }

    /// `n` random boundary points.
    pub fn boundary_sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Self::Ball { center, radius } if center.len() > 2 => (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..center.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    v.iter().zip(center).map(|(a, c)| c + radius * a / norm).collect()
                })
                .collect(),
            _ => (0..n)
                .filter_map(|_| self.boundary_param(rng.random::<f64>()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square() -> Domain {
        Domain::Polygon {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]],
        }
    }

    #[test]
    fn signs_inside_and_outside() {
        let b = Domain::Ball { center: vec![0.15, 0.0], radius: 0.6 };
        assert_relative_eq!(b.signed_distance(&[0.15, 0.0]), -0.6);
        assert_relative_eq!(b.signed_distance(&[-0.45, 0.0]), 0.0, epsilon = 1e-15);
        let i = Domain::Interval { lo: -0.8, hi: 0.8 };
        assert_relative_eq!(i.signed_distance(&[0.1]), -0.7, epsilon = 1e-15);
        assert_relative_eq!(i.signed_distance(&[1.0]), 0.2, epsilon = 1e-15);
        let p = square();
        assert_relative_eq!(p.signed_distance(&[1.0, 0.5]), -0.5);
        assert_relative_eq!(p.signed_distance(&[3.0, 0.5]), 1.0);
    }

    #[test]
    fn boundary_points_lie_on_boundary() {
        for d in [Domain::Ball { center: vec![0.15, 0.0], radius: 0.6 }, square()] {
            for p in d.boundary_sample(50, 4) {
                assert!(d.signed_distance(&p).abs() < 1e-12);
            }
            for p in d.boundary_grid(16) {
                assert!(d.signed_distance(&p).abs() < 1e-12);
            }
        }
        let b3 = Domain::Ball { center: vec![0.0; 3], radius: 2.0 };
        for p in b3.boundary_sample(10, 1) {
            assert!(b3.signed_distance(&p).abs() < 1e-12);
        }
    }

    fn domain_strategy() -> impl Strategy<Value = Domain> {
        prop_oneof![
            (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..2.0).prop_map(|(a, b, r)| Domain::Ball { center: vec![a, b], radius: r }),
            Just(square()),
            Just(Domain::Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.2, 0.3], [0.0, 1.0]] }),
        ]
    }

    proptest! {
        #[test]
        fn signed_distance_is_one_lipschitz(
            d in domain_strategy(),
            x in prop::array::uniform2(-3.0f64..3.0),
            y in prop::array::uniform2(-3.0f64..3.0),
        ) {
            let lhs = (d.signed_distance(&x) - d.signed_distance(&y)).abs();
            let rhs = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn interval_distance_is_one_lipschitz(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let d = Domain::Interval { lo: -0.8, hi: 0.8 };
            prop_assert!((d.signed_distance(&[a]) - d.signed_distance(&[b])).abs() <= (a - b).abs() + 1e-15);
        }
    }
}
