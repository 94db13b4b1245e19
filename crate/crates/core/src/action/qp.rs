//! Minimum-action quasi-potentials with a start ring around a degenerate
//! singularity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize_preconditioned, LbfgsOptions};
use super::{action, DiscretePath, A_INV_FLOOR};
use crate::coeff::CoefficientField;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::linalg::psd_inverse_floored;
use crate::{Matrix, Vector};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QpOptions {
    pub n_nodes: usize,
    /// Horizons tried before golden-section refinement around the best one.
    pub t_grid: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
    /// Radius of the start ring when `y` is singular; `None` uses `0.05‖z − y‖`.
    pub origin_rho: Option<f64>,
    /// Golden-section steps in `log T`.
    pub refine_steps: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            n_nodes: 100,
            t_grid: (0..8).map(|i| 0.5 * 2f64.powi(i)).collect(),
            max_iters: 2000,
            tol: 1e-7,
            origin_rho: None,
            refine_steps: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiPotentialResult {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// First node of the optimised path: `start` itself or a point on the ring.
    pub ring_point: Vec<f64>,
    pub value: f64,
    pub path: DiscretePath,
    pub t_star: f64,
    pub connector_cost_bound: f64,
    /// Action of `path` alone.
    pub path_action: f64,
    pub quadrature_error: f64,
    pub converged: bool,
    /// `(T, minimal action at T)` for every horizon tried.
    pub horizon_scan: Vec<(f64, f64)>,
}

/// Discrete midpoint action of nodes on a uniform grid of step `h`, with the
/// gradient with respect to every node when requested.
fn discrete_action(f: &CoefficientField, pts: &[Vec<f64>], h: f64, mut grad: Option<&mut [Vec<f64>]>) -> Result<f64> {
    let d = f.dim();
    if pts.iter().any(|p| p.iter().any(|v| !v.is_finite()) || f.in_tube(p)) {
        return Ok(f64::INFINITY);
    }
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));
    }
    let mut total = 0.0;
    for i in 0..pts.len() - 1 {
        let (p, q) = (&pts[i], &pts[i + 1]);
        let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
        if f.in_tube(&m) {
            return Ok(f64::INFINITY);
        }
        let (b, _, a) = f.drift_diffusion(&m)?;
        let Some(inv) = psd_inverse_floored(&a, A_INV_FLOOR) else {
            return Ok(f64::INFINITY);
        };
        let v = Vector::from_iterator(d, p.iter().zip(q).map(|(a, b)| (b - a) / h)) - b;
        let w = &inv * &v;
        total += 0.5 * h * v.dot(&w);
        let Some(g) = grad.as_deref_mut() else { continue };
        let scale = 1e-6 * (1.0 + m.iter().map(|x| x * x).sum::<f64>().sqrt());
        let mut gm = vec![0.0; d];
        for k in 0..d {
            let side = |sgn: f64| -> Result<Option<(Vector, f64)>> {
                let mut x = m.clone();
                x[k] += sgn * scale;
                let (bk, _, ak) = f.drift_diffusion(&x)?;
                Ok(psd_inverse_floored(&ak, A_INV_FLOOR).map(|ik| (bk, v.dot(&(ik * &v)))))
            };
            let (Some((bp, qp)), Some((bm, qm))) = (side(1.0)?, side(-1.0)?) else {
                return Ok(f64::INFINITY);
            };
            let jb = (bp - bm) / (2.0 * scale);
            gm[k] = h * (-jb.dot(&w) + 0.25 * (qp - qm) / scale);
        }
        for k in 0..d {
            g[i + 1][k] += w[k] + 0.5 * gm[k];
            g[i][k] += -w[k] + 0.5 * gm[k];
        }
    }
    Ok(total)
}

struct Problem<'a> {
    f: &'a CoefficientField,
    start: Vec<f64>,
    end: Vec<f64>,
    /// Ring radius when the first node slides on a sphere around `start`.
    ring: Option<f64>,
    n: usize,
}

impl Problem<'_> {
    fn d(&self) -> usize {
        self.start.len()
    }

    /// Nodes from the optimisation vector: interior nodes, then the ring direction.
    fn nodes(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.d();
        let mut pts = Vec::with_capacity(self.n);
        pts.push(self.first(x));
        for i in 0..self.n - 2 {
            pts.push(x[i * d..(i + 1) * d].to_vec());
        }
        pts.push(self.end.clone());
        pts
    }

    fn first(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d();
        match self.ring {
            None => self.start.clone(),
            Some(rho) => {
                let u = &x[(self.n - 2) * d..];
                let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                self.start.iter().zip(u).map(|(s, v)| s + rho * v / nu).collect()
            }
        }
    }

    /// Straight line from the first node to the end, ring direction toward `end`.
    fn initial(&self) -> Vec<f64> {
        let dir: Vec<f64> = self.end.iter().zip(&self.start).map(|(a, b)| a - b).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let first: Vec<f64> = match self.ring {
            None => self.start.clone(),
            Some(rho) => self.start.iter().zip(&dir).map(|(s, v)| s + rho * v / len).collect(),
        };
        let mut x: Vec<f64> = (1..self.n - 1)
            .flat_map(|i| {
                let s = i as f64 / (self.n - 1) as f64;
                first.iter().zip(&self.end).map(move |(p, q)| p + s * (q - p))
            })
            .collect();
        if self.ring.is_some() {
            x.extend_from_slice(&dir);
        }
        x
    }

    fn objective(&self, t_end: f64, x: &[f64], g: &mut [f64]) -> Result<f64> {
        let d = self.d();
        let pts = self.nodes(x);
        let h = t_end / (self.n - 1) as f64;
        let mut gn = vec![vec![0.0; d]; self.n];
        let v = discrete_action(self.f, &pts, h, Some(&mut gn))?;
        if !v.is_finite() {
            return Ok(v);
        }
        for i in 0..self.n - 2 {
            g[i * d..(i + 1) * d].copy_from_slice(&gn[i + 1]);
        }
        if let Some(rho) = self.ring {
            let u = &x[(self.n - 2) * d..];
            let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let uh: Vec<f64> = u.iter().map(|v| v / nu).collect();
            let along: f64 = gn[0].iter().zip(&uh).map(|(a, b)| a * b).sum();
            for k in 0..d {
                g[(self.n - 2) * d + k] = rho / nu * (gn[0][k] - along * uh[k]);
            }
        }
        Ok(v)
    }

    /// Block-tridiagonal Gauss–Newton part of the Hessian, `a⁻¹/h` per
    /// segment, factored for repeated solves.
    fn factor(&self, t_end: f64, x: &[f64]) -> Option<Precond> {
        let d = self.d();
        let h = t_end / (self.n - 1) as f64;
        let pts = self.nodes(x);
        let mut w = Vec::with_capacity(self.n - 1);
        let mut a_first = None;
        for i in 0..self.n - 1 {
            let m: Vec<f64> = pts[i].iter().zip(&pts[i + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
            let (_, _, a) = self.f.drift_diffusion(&m).ok()?;
            if i == 0 {
                a_first = Some(a.clone() * h);
            }
            w.push(psd_inverse_floored(&a, A_INV_FLOOR)? / h);
        }
        let k = self.n - 2;
        let mut dinv = Vec::with_capacity(k);
        let mut lower = Vec::with_capacity(k);
        for j in 0..k {
            let mut dj = &w[j] + &w[j + 1];
            if j > 0 {
                // C = −W_j couples var j−1 and var j
                let l: Matrix = -&w[j] * &dinv[j - 1];
                dj += &l * &w[j];
                lower.push(l);
            } else {
                lower.push(Matrix::zeros(d, d));
            }
            dinv.push(dj.try_inverse()?);
        }
        let ring = self.ring.map(|rho| {
            let u = &x[k * d..];
            let nu2: f64 = u.iter().map(|v| v * v).sum();
            a_first.unwrap() * (nu2 / (rho * rho))
        });
        Some(Precond { d, w, dinv, lower, ring })
    }

    fn solve(&self, t_end: f64, x0: Vec<f64>, opts: &QpOptions) -> Result<(Vec<f64>, f64, bool)> {
        let lb = LbfgsOptions {
            max_iters: opts.max_iters,
            tol: opts.tol,
            ..Default::default()
        };
        let mut cache: Option<(Vec<f64>, Option<Precond>)> = None;
        let r = minimize_preconditioned(
            x0,
            lb,
            |x, g| self.objective(t_end, x, g),
            |x, v| {
                if cache.as_ref().is_none_or(|(cx, _)| cx.as_slice() != x) {
                    cache = Some((x.to_vec(), self.factor(t_end, x)));
                }
                match &cache.as_ref().unwrap().1 {
                    Some(p) => p.apply(v),
                    None => v.to_vec(),
                }
            },
        )?;
        Ok((r.x, r.value, r.converged))
    }
}

struct Precond {
    d: usize,
    w: Vec<Matrix>,
    dinv: Vec<Matrix>,
    lower: Vec<Matrix>,
    ring: Option<Matrix>,
}

impl Precond {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d;
        let k = self.dinv.len();
        let mut r: Vec<Vector> = (0..k).map(|j| Vector::from_column_slice(&v[j * d..(j + 1) * d])).collect();
        for j in 1..k {
            let prev = r[j - 1].clone();
            r[j] -= &self.lower[j] * prev;
        }
        let mut out = vec![Vector::zeros(d); k];
        for j in (0..k).rev() {
            let mut rhs = r[j].clone();
            if j + 1 < k {
                rhs += &self.w[j + 1] * &out[j + 1];
            }
            out[j] = &self.dinv[j] * rhs;
        }
        let mut res: Vec<f64> = out.iter().flat_map(|o| o.iter().copied()).collect();
        if let Some(m) = &self.ring {
            let tail = Vector::from_column_slice(&v[k * d..]);
            res.extend((m * tail).iter());
        }
        res
    }
}

/// Cost of the radial connector `ψ(t) = y + (r₀ + (t/t₁)²(ρ − r₀))û` from just
/// outside the tube around `y` to `target = y + ρû`, minimised over `t₁`.
pub fn radial_connector(f: &CoefficientField, y: &[f64], target: &[f64]) -> Result<f64> {
    let dir: Vec<f64> = target.iter().zip(y).map(|(a, b)| a - b).collect();
    let rho = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let uh: Vec<f64> = dir.iter().map(|v| v / rho).collect();
    let r0 = (4.0 * f.tube()).min(0.5 * rho);
    let cost = |t1: f64| -> Result<f64> {
        let psi = DiscretePath::sample(t1, 2000, |t| {
            let r = r0 + (t / t1).powi(2) * (rho - r0);
            y.iter().zip(&uh).map(|(a, u)| a + r * u).collect()
        })?;
        let v = action(f, &psi)?;
        Ok(if v.infinite { f64::INFINITY } else { v.value })
    };
    let (mut lo, mut hi) = ((0.05f64).ln(), (200.0f64).ln());
    let mut c = hi - GOLDEN * (hi - lo);
    let mut d = lo + GOLDEN * (hi - lo);
    let (mut fc, mut fd) = (cost(c.exp())?, cost(d.exp())?);
    for _ in 0..40 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - GOLDEN * (hi - lo);
            fc = cost(c.exp())?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + GOLDEN * (hi - lo);
            fd = cost(d.exp())?;
        }
    }
    Ok(fc.min(fd))
}

/// Quasi-potential `V(y, z)` by minimum action over paths and horizons.
///
/// When `y` lies in the tube around `Γ`, paths start on the sphere of radius
/// `origin_rho` around `y` and the cost of an explicit radial connector from
/// the tube to the chosen start point is added as `connector_cost_bound`.
pub fn quasipotential(f: &CoefficientField, y: &[f64], z: &[f64], opts: &QpOptions) -> Result<QuasiPotentialResult> {
    let d = f.dim();
    if y.len() != d || z.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: if y.len() != d { y.len() } else { z.len() } });
    }
    if f.in_tube(z) {
        return Err(Error::Precondition("the end point lies in the singular tube".into()));
    }
    if opts.n_nodes < 3 || opts.t_grid.is_empty() || opts.t_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("need n_nodes >= 3 and a positive horizon grid".into()));
    }
    let span = z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let ring = if f.in_tube(y) {
        let rho = opts.origin_rho.unwrap_or(0.05 * span);
        if !(rho > f.tube()) || rho >= span {
            return Err(Error::Precondition(format!(
                "origin_rho = {rho} must exceed the tube {} and stay below |z - y| = {span}",
                f.tube()
            )));
        }
        Some(rho)
    } else {
        None
    };
    let prob = Problem {
        f,
        start: y.to_vec(),
        end: z.to_vec(),
        ring,
        n: opts.n_nodes,
    };

    let mut grid = opts.t_grid.clone();
    grid.sort_by(f64::total_cmp);
    let mut scan = Vec::new();
    let mut best: Option<(f64, Vec<f64>, f64, bool)> = None;
    let mut warm = prob.initial();
    for &t in &grid {
        let (x, v, ok) = prob.solve(t, warm.clone(), opts)?;
        scan.push((t, v));
        if v.is_finite() {
            warm = x.clone();
            if best.as_ref().is_none_or(|b| v < b.2) {
                best = Some((t, x, v, ok));
            }
        }
    }
    let Some((mut t_star, mut x_star, mut v_star, mut ok_star)) = best else {
        return Err(Error::Precondition("no admissible path found on the horizon grid".into()));
    };

    // golden section in log T between the neighbours of the best grid value
    let k = grid.iter().position(|t| *t == t_star).unwrap();
    let mut lo = grid[k.saturating_sub(1)].ln();
    let mut hi = grid[(k + 1).min(grid.len() - 1)].ln();
    if hi > lo {
        let mut eval = |lt: f64| -> Result<f64> {
            let (x, v, ok) = prob.solve(lt.exp(), x_star.clone(), opts)?;
            scan.push((lt.exp(), v));
            if v < v_star {
                t_star = lt.exp();
                x_star = x;
                v_star = v;
                ok_star = ok;
            }
            Ok(v)
        };
        let mut c = hi - GOLDEN * (hi - lo);
        let mut dd = lo + GOLDEN * (hi - lo);
        let mut fc = eval(c)?;
        let mut fd = eval(dd)?;
        for _ in 0..opts.refine_steps {
            if fc < fd {
                hi = dd;
                dd = c;
                fd = fc;
                c = hi - GOLDEN * (hi - lo);
                fc = eval(c)?;
            } else {
                lo = c;
                c = dd;
                fc = fd;
                dd = lo + GOLDEN * (hi - lo);
                fd = eval(dd)?;
            }
        }
    }
    scan.sort_by(|a, b| a.0.total_cmp(&b.0));

    let pts = prob.nodes(&x_star);
    let times: Vec<f64> = (0..opts.n_nodes).map(|i| t_star * i as f64 / (opts.n_nodes - 1) as f64).collect();
    let path = DiscretePath::new(times, pts)?;
    let act = action(f, &path)?;
    let ring_point = path.points[0].clone();
    let connector = match ring {
        Some(_) => radial_connector(f, y, &ring_point)?,
        None => 0.0,
    };
    Ok(QuasiPotentialResult {
        start: y.to_vec(),
        end: z.to_vec(),
        ring_point,
        value: act.value + connector,
        t_star,
        connector_cost_bound: connector,
        path_action: act.value,
        quadrature_error: act.quadrature_error,
        converged: ok_star,
        horizon_scan: scan,
        path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExitCostOptions {
    pub n_boundary: usize,
    pub qp: QpOptions,
    pub workers: usize,
}

impl Default for ExitCostOptions {
    fn default() -> Self {
        Self {
            n_boundary: 24,
            qp: QpOptions::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitCost {
    pub origin: Vec<f64>,
    pub v_bar: f64,
    pub z_star: Vec<f64>,
    pub boundary_profile: Vec<(Vec<f64>, f64)>,
    pub all_converged: bool,
    /// Some probe on a ray from the origin saw `b·(x − origin) ≥ 0`.
    pub attracting_warning: bool,
}

impl ExitCost {
    /// CSV with header `bx1,...,bxd,V`.
    pub fn write_profile<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        let d = self.origin.len();
        let mut header: Vec<String> = (1..=d).map(|i| format!("bx{i}")).collect();
        header.push("V".into());
        writeln!(w, "{}", header.join(","))?;
        for (p, v) in &self.boundary_profile {
            let mut row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            row.push(v.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Characteristic length of a domain, used for the default start ring.
pub fn domain_scale(domain: &Domain) -> f64 {
    match domain {
        Domain::Ball { radius, .. } => *radius,
        Domain::Interval { lo, hi } => 0.5 * (hi - lo),
        Domain::Polygon { vertices } => {
            let mut s: f64 = 0.0;
            for a in vertices {
                for b in vertices {
                    s = s.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
                }
            }
            0.5 * s
        }
    }
}

/// `V̄ = min V(0, z)` over boundary points of a domain containing exactly one
/// singularity, with the full boundary profile.
pub fn exit_cost(f: &CoefficientField, domain: &Domain, opts: &ExitCostOptions) -> Result<ExitCost> {
    domain.validate()?;
    if domain.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: domain.dim() });
    }
    let inside: Vec<&Vec<f64>> = f.gamma().points.iter().filter(|p| domain.contains(p)).collect();
    if inside.len() != 1 {
        return Err(Error::Precondition(format!(
            "the domain must contain exactly one singularity, found {}",
            inside.len()
        )));
    }
    let origin = inside[0].clone();
    let mut qp = opts.qp.clone();
    qp.origin_rho.get_or_insert(0.05 * domain_scale(domain));
    let boundary = domain.boundary_grid(opts.n_boundary);
    if boundary.is_empty() {
        return Err(Error::InvalidArgument("domain boundary cannot be sampled".into()));
    }

    let mut attracting_warning = false;
    for z in &boundary {
        for j in 1..=20 {
            let s = j as f64 / 20.0;
            let x: Vec<f64> = origin.iter().zip(z).map(|(o, b)| o + s * (b - o)).collect();
            let b = f.b(&x)?;
            let radial: f64 = b.iter().zip(&x).zip(&origin).map(|((bi, xi), oi)| bi * (xi - oi)).sum();
            if radial >= 0.0 {
                attracting_warning = true;
            }
        }
    }
    if attracting_warning {
        log::warn!("drift is not inward on every probed ray; the domain may not be attracting");
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<QuasiPotentialResult> = pool.install(|| {
        boundary
            .par_iter()
            .map(|z| quasipotential(f, &origin, z, &qp))
            .collect::<Result<Vec<_>>>()
    })?;
    let best = results.iter().min_by(|a, b| a.value.total_cmp(&b.value)).unwrap();
    Ok(ExitCost {
        origin,
        v_bar: best.value,
        z_star: best.end.clone(),
        all_converged: results.iter().all(|r| r.converged),
        boundary_profile: results.iter().map(|r| (r.end.clone(), r.value)).collect(),
        attracting_warning,
    })
}
