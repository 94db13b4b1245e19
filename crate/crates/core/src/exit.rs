//! Monte Carlo exit experiments from an attracting domain.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::flow;
use crate::coeff::CoefficientField;
pub use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::sde::{quantile_sorted, simulate_batch, SimConfig, StopKind, StopRule, Trajectory};

/// Label of the boundary stop rule used by exit experiments.
pub const EXIT_LABEL: &str = "exit";
const BOOTSTRAP_RESAMPLES: usize = 400;
const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

/// Knobs of an exit experiment beyond the per-path config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExitOptions {
    pub n_paths: usize,
    pub workers: usize,
    /// Upper limit on the horizon `10·exp(V̄/ε)`.
    pub t_max_cap: f64,
    /// Radius around `z*` used for the location-concentration fraction.
    pub concentration_radius: f64,
}

impl Default for ExitOptions {
    fn default() -> Self {
        Self {
            n_paths: 500,
            workers: 1,
            t_max_cap: 5000.0,
            concentration_radius: 0.3,
        }
    }
}

/// Exit time of one path, censored at the horizon when no exit occurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CensoredTime {
    pub time: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsSummary {
    pub eps: f64,
    pub n_paths: usize,
    pub t_max: f64,
    pub exit_times: Vec<CensoredTime>,
    /// Interpolated boundary crossing, `None` for censored paths.
    pub exit_points: Vec<Option<Vec<f64>>>,
    pub censored: usize,
    pub uncensored: usize,
    pub absorbed: usize,
    /// No path exited before `t_max`.
    pub all_censored: bool,
    pub threshold: f64,
    /// Censored paths count as exceeding only when `t_max ≥ threshold`.
    pub threshold_decidable: bool,
    pub frac_exceeding_threshold: f64,
    /// Median of the censored sample; `None` when half or more are censored.
    pub median_exit_time: Option<f64>,
    pub eps_log_median: Option<f64>,
    /// Bootstrap standard error of `eps_log_median`.
    pub eps_log_median_se: Option<f64>,
    /// Fraction of exit points within `concentration_radius` of `z*`, over exits.
    pub frac_near_z_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitExperimentResult {
    pub eps_values: Vec<f64>,
    pub per_eps: Vec<EpsSummary>,
    pub v_bar_used: f64,
    pub z_star_used: Vec<f64>,
    pub delta: f64,
}

impl ExitExperimentResult {
    /// JSON lines, one summary per `ε` without the per-path samples.
    pub fn write_summaries<W: Write>(&self, w: &mut W) -> Result<()> {
        for s in &self.per_eps {
            let mut v = serde_json::to_value(s)?;
            if let Some(o) = v.as_object_mut() {
                o.remove("exit_times");
                o.remove("exit_points");
                o.insert("v_bar".into(), self.v_bar_used.into());
                o.insert("delta".into(), self.delta.into());
                o.insert("z_star".into(), serde_json::to_value(&self.z_star_used)?);
            }
            serde_json::to_writer(&mut *w, &v)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// CSV `eps,seed_index,t_exit,bx1,...,bxd,censored`; censored rows leave
    /// the coordinates empty.
    pub fn write_exit_points<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.z_star_used.len();
        let mut header = vec!["eps".to_string(), "seed_index".into(), "t_exit".into()];
        header.extend((1..=d).map(|i| format!("bx{i}")));
        header.push("censored".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.per_eps {
            for (i, (t, p)) in s.exit_times.iter().zip(&s.exit_points).enumerate() {
                let mut row = vec![s.eps.to_string(), i.to_string(), t.time.to_string()];
                match p {
                    Some(p) => row.extend(p.iter().map(|v| v.to_string())),
                    None => row.extend(std::iter::repeat_n(String::new(), d)),
                }
                row.push(u8::from(t.censored).to_string());
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Median of a right-censored sample whose censoring time exceeds every
/// observed time; `None` unless fewer than half are censored.
fn censored_median(times: &[CensoredTime]) -> Option<f64> {
    let n = times.len();
    let censored = times.iter().filter(|t| t.censored).count();
    if n == 0 || 2 * censored >= n {
        return None;
    }
    let mut v: Vec<f64> = times.iter().map(|t| t.time).collect();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, 0.5))
}

fn bootstrap_se(times: &[CensoredTime], eps: f64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let n = times.len();
    let mut vals = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut sample = Vec::with_capacity(n);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        sample.clear();
        sample.extend((0..n).map(|_| times[rng.random_range(0..n)]));
        vals.push(eps * censored_median(&sample)?.ln());
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    Some((vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt())
}

/// Simulate exits from `domain` started at `x0` for each `ε`.
///
/// Horizons are `min(10·exp(V̄/ε), t_max_cap)`; `cfg_base` supplies `dt`,
/// `absorb_tube` and the seed. An `ε` at which every path is censored is
/// flagged and the experiment goes on.
#[allow(clippy::too_many_arguments)]
pub fn run_exit_experiment(
    f: &CoefficientField,
    domain: &Domain,
    x0: &[f64],
    eps_values: &[f64],
    cfg_base: &SimConfig,
    opts: &ExitOptions,
    v_bar: f64,
    z_star: &[f64],
    delta: f64,
) -> Result<ExitExperimentResult> {
    domain.validate()?;
    if x0.len() != f.dim() || domain.dim() != f.dim() || z_star.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x0.len() });
    }
    if !domain.contains(x0) {
        return Err(Error::Precondition(format!("x0 = {x0:?} is not strictly inside the domain")));
    }
    if f.gamma().distance(x0) <= cfg_base.absorb_tube {
        return Err(Error::Precondition(format!("x0 = {x0:?} lies in the singular tube")));
    }
    if eps_values.is_empty() || eps_values.iter().any(|e| !(*e > 0.0)) || eps_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("eps_values must be positive and strictly descending".into()));
    }
    if opts.n_paths == 0 || !(opts.t_max_cap > 0.0) {
        return Err(Error::InvalidArgument("need n_paths >= 1 and a positive t_max_cap".into()));
    }
    let rule = StopRule::new(EXIT_LABEL, StopKind::ExitDomain { domain: domain.clone() }, true);
    let mut per_eps = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        let t_max = (10.0 * (v_bar / eps).exp()).min(opts.t_max_cap);
        let mut cfg = cfg_base.clone();
        cfg.eps = eps;
        cfg.t_max = t_max;
        cfg.stride = usize::MAX;
        let batch = simulate_batch(f, x0, &cfg, std::slice::from_ref(&rule), opts.n_paths, opts.workers, false)?;
        let mut exit_times = Vec::with_capacity(opts.n_paths);
        let mut exit_points = Vec::with_capacity(opts.n_paths);
        for s in &batch.summaries {
            match s.exit_events.iter().find(|e| e.label == EXIT_LABEL) {
                Some(e) => {
                    exit_times.push(CensoredTime { time: e.time, censored: false });
                    exit_points.push(Some(e.point.clone()));
                }
                None => {
                    exit_times.push(CensoredTime { time: t_max, censored: true });
                    exit_points.push(None);
                }
            }
        }
        let censored = exit_times.iter().filter(|t| t.censored).count();
        let uncensored = opts.n_paths - censored;
        let threshold = ((v_bar - delta) / eps).exp();
        let threshold_decidable = t_max >= threshold;
        let exceeding = exit_times
            .iter()
            .filter(|t| if t.censored { threshold_decidable } else { t.time > threshold })
            .count();
        let median = censored_median(&exit_times);
        let near = exit_points
            .iter()
            .flatten()
            .filter(|p| p.iter().zip(z_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= opts.concentration_radius)
            .count();
        per_eps.push(EpsSummary {
            eps,
            n_paths: opts.n_paths,
            t_max,
            censored,
            uncensored,
            absorbed: batch.absorbed_count(),
            all_censored: uncensored == 0,
            threshold,
            threshold_decidable,
            frac_exceeding_threshold: exceeding as f64 / opts.n_paths as f64,
            median_exit_time: median,
            eps_log_median: median.map(|m| eps * m.ln()),
            eps_log_median_se: median.and_then(|_| bootstrap_se(&exit_times, eps)),
            frac_near_z_star: (uncensored > 0).then(|| near as f64 / uncensored as f64),
            exit_times,
            exit_points,
        });
    }
    Ok(ExitExperimentResult {
        eps_values: eps_values.to_vec(),
        per_eps,
        v_bar_used: v_bar,
        z_star_used: z_star.to_vec(),
        delta,
    })
}

/// One excursion: start `θ_m` on the outer sphere (`θ₀ = 0`) and the next
/// return `τ_m` to the inner ball or the boundary, if it happens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Excursion {
    pub theta: f64,
    pub tau: Option<f64>,
}

/// Alternating hitting times of `S(two_rho)` and `B(rho) ∪ ∂G` around
/// `center`, read off a fully stored trajectory with interpolated crossings.
pub fn excursion_decomposition(
    traj: &Trajectory,
    center: &[f64],
    rho: f64,
    two_rho: f64,
    domain: Option<&Domain>,
) -> Result<Vec<Excursion>> {
    if traj.stride != 1 {
        return Err(Error::NeedsFullPath(traj.stride));
    }
    if !(two_rho > rho && rho > 0.0) {
        return Err(Error::InvalidArgument("need two_rho > rho > 0".into()));
    }
    let r = |p: &[f64]| p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    // level ≥ 0 means "inside B(ρ) or outside G"
    let inner = |p: &[f64]| {
        let l = rho - r(p);
        match domain {
            Some(d) => l.max(d.signed_distance(p)),
            None => l,
        }
    };
    let outer = |p: &[f64]| r(p) - two_rho;
    let crossing = |i: usize, l0: f64, l1: f64| {
        let s = if l1 != l0 { l0 / (l0 - l1) } else { 1.0 };
        traj.times[i] + s.clamp(0.0, 1.0) * (traj.times[i + 1] - traj.times[i])
    };
    let mut out = vec![Excursion { theta: 0.0, tau: None }];
    let mut seeking_inner = true;
    if inner(&traj.points[0]) >= 0.0 {
        out[0].tau = Some(0.0);
        seeking_inner = false;
    }
    for i in 0..traj.points.len() - 1 {
        let (p, q) = (&traj.points[i], &traj.points[i + 1]);
        if seeking_inner {
            let (l0, l1) = (inner(p), inner(q));
            if l0 < 0.0 && l1 >= 0.0 {
                out.last_mut().unwrap().tau = Some(crossing(i, l0, l1));
                seeking_inner = false;
            }
        } else {
            let (l0, l1) = (outer(p), outer(q));
            if l0 < 0.0 && l1 >= 0.0 {
                out.push(Excursion { theta: crossing(i, l0, l1), tau: None });
                seeking_inner = true;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractingReport {
    pub attracting: bool,
    pub interior_singularities: usize,
    pub seeds: usize,
    /// Largest signed distance to the boundary along any flow line after `t = 0`.
    pub max_signed_distance: f64,
    /// Largest distance to the interior singularity at `t_horizon`.
    pub max_final_distance: f64,
    pub reason: Option<String>,
}

/// Integrate `ẋ = b(x)` from boundary points and interior points halfway to
/// them; the domain is reported attracting when every flow line stays in the
/// closure and ends near the unique interior singularity.
pub fn check_attracting(f: &CoefficientField, domain: &Domain, n_rays: usize, t_horizon: f64) -> Result<AttractingReport> {
    domain.validate()?;
    let inside: Vec<&Vec<f64>> = f.gamma().points.iter().filter(|p| domain.contains(p)).collect();
    let scale = crate::action::domain_scale(domain);
    let mut report = AttractingReport {
        attracting: false,
        interior_singularities: inside.len(),
        seeds: 0,
        max_signed_distance: f64::NEG_INFINITY,
        max_final_distance: 0.0,
        reason: None,
    };
    if inside.len() != 1 {
        report.reason = Some(format!("{} singularities inside the domain", inside.len()));
        return Ok(report);
    }
    let origin = inside[0];
    let boundary = domain.boundary_grid(n_rays.max(2));
    let mut seeds = boundary.clone();
    seeds.extend(boundary.iter().map(|z| z.iter().zip(origin).map(|(a, o)| 0.5 * (a + o)).collect::<Vec<f64>>()));
    let steps = ((t_horizon / 1e-2).ceil() as usize).max(10);
    for s in &seeds {
        let path = flow(f, s, t_horizon, steps)?;
        let sd = path.points[1..].iter().map(|p| domain.signed_distance(p)).fold(f64::NEG_INFINITY, f64::max);
        report.max_signed_distance = report.max_signed_distance.max(sd);
        let last = path.points.last().unwrap();
        let dist = last.iter().zip(origin).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        report.max_final_distance = report.max_final_distance.max(dist);
    }
    report.seeds = seeds.len();
    let stays = report.max_signed_distance <= 1e-9 * scale;
    let converges = report.max_final_distance <= 1e-2 * scale;
    report.attracting = stays && converges;
    if !stays {
        report.reason = Some("a flow line leaves the domain".into());
    } else if !converges {
        report.reason = Some("a flow line does not approach the singularity".into());
    }
    Ok(report)
}
