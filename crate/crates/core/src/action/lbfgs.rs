use std::collections::VecDeque;

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when `‖∇f‖∞ ≤ tol·(1 + |f|)`.
    pub tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iters: 2000,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking.
///
/// `fg` returns the value and fills the gradient; an infinite value marks an
/// infeasible point and makes the line search back off.
pub fn minimize(
    x0: Vec<f64>,
    opts: LbfgsOptions,
    fg: impl FnMut(&[f64], &mut [f64]) -> Result<f64>,
) -> Result<LbfgsResult> {
    minimize_preconditioned(x0, opts, fg, |_, v| v.to_vec())
}

/// [`minimize`] with the initial inverse Hessian `v ↦ precond(x, v)` taken at
/// the current iterate and rescaled by the latest curvature pair.
pub fn minimize_preconditioned(
    x0: Vec<f64>,
    opts: LbfgsOptions,
    mut fg: impl FnMut(&[f64], &mut [f64]) -> Result<f64>,
    mut precond: impl FnMut(&[f64], &[f64]) -> Vec<f64>,
) -> Result<LbfgsResult> {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = fg(&x, &mut g)?;
    if !fx.is_finite() {
        return Ok(LbfgsResult { x, value: fx, iters: 0, converged: false });
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalls = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    for iter in 0..opts.max_iters {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= opts.tol * (1.0 + fx.abs()) {
            return Ok(LbfgsResult { x, value: fx, iters: iter, converged: true });
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = hist.back().map_or(1.0, |(s, y, _)| {
            let hy = precond(&x, y);
            dot(s, y) / dot(y, &hy)
        });
        let gamma = if gamma.is_finite() && gamma > 0.0 { gamma } else { 1.0 };
        let mut q: Vec<f64> = precond(&x, &q).into_iter().map(|v| v * gamma).collect();
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = precond(&x, &g).into_iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
            if !(slope < 0.0) {
                dir = g.iter().map(|v| -v / gmax.max(1.0)).collect();
                slope = dot(&g, &dir);
            }
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            x_new.iter_mut().zip(&x).zip(&dir).for_each(|((xn, xi), di)| *xn = xi + step * di);
            let f_new = fg(&x_new, &mut g_new)?;
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if hist.len() == opts.memory {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                let decrease = fx - f_new;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                stalls = if decrease <= 1e-14 * (1.0 + fx.abs()) { stalls + 1 } else { 0 };
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if hist.is_empty() {
                return Ok(LbfgsResult { x, value: fx, iters: iter, converged: false });
            }
            hist.clear();
            continue;
        }
        if stalls >= 5 {
            return Ok(LbfgsResult { x, value: fx, iters: iter + 1, converged: true });
        }
    }
    Ok(LbfgsResult { x, value: fx, iters: opts.max_iters, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let r = minimize(vec![-1.2, 1.0], LbfgsOptions::default(), |x, g| {
            g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            g[1] = 200.0 * (x[1] - x[0] * x[0]);
            Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        })
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn respects_infeasible_region() {
        // minimum of (x+1)² restricted to x > 0 via an infinite barrier
        let r = minimize(vec![2.0], LbfgsOptions { max_iters: 200, ..Default::default() }, |x, g| {
            g[0] = 2.0 * (x[0] + 1.0);
            Ok(if x[0] <= 0.0 { f64::INFINITY } else { (x[0] + 1.0).powi(2) })
        })
        .unwrap();
        assert!(r.x[0] > 0.0 && r.x[0] < 1e-3);
    }
}
