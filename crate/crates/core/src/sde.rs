//! Euler–Maruyama simulation of the singular diffusion, frozen on `Γ`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::model::ROOT_RESIDUAL_TOL;

/// Integration knobs for one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub eps: f64,
    pub dt: f64,
    pub t_max: f64,
    pub absorb_tube: f64,
    pub seed: u64,
    #[serde(default)]
    pub path_index: u64,
    /// Keep every `stride`-th step; events and the final point are always kept.
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn new(eps: f64, dt: f64, t_max: f64) -> Self {
        Self {
            eps,
            dt,
            t_max,
            absorb_tube: 1e-6,
            seed: 0,
            path_index: 0,
            stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad("eps must be finite and nonnegative");
        }
        if !(self.dt > 0.0 && self.t_max > 0.0 && self.dt <= self.t_max && self.t_max.is_finite()) {
            return bad("need 0 < dt <= t_max < inf");
        }
        if !(self.absorb_tube > ROOT_RESIDUAL_TOL) {
            return bad("absorb_tube must exceed the root residual tolerance 1e-8");
        }
        if self.stride == 0 {
            return bad("stride must be at least 1");
        }
        Ok(())
    }
}

/// Geometry of a stopping condition, as a level set `φ(x) = 0` crossed upward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum StopKind {
    /// `‖x − center‖ ≥ radius`.
    LeaveBall { center: Vec<f64>, radius: f64 },
    /// `‖x − center‖ ≤ radius`, reached from outside.
    EnterBall { center: Vec<f64>, radius: f64 },
    /// `signed_distance(x) ≥ 0`.
    ExitDomain { domain: Domain },
}

impl StopKind {
    fn level(&self, x: &[f64]) -> f64 {
        let dist = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        match self {
            Self::LeaveBall { center, radius } => dist(center) - radius,
            Self::EnterBall { center, radius } => radius - dist(center),
            Self::ExitDomain { domain } => domain.signed_distance(x),
        }
    }
}

/// A labelled stopping condition. Only its first crossing is recorded;
/// terminal rules end the path there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub label: String,
    #[serde(rename = "shape")]
    pub kind: StopKind,
    #[serde(default)]
    pub terminal: bool,
}

impl StopRule {
    pub fn new(label: impl Into<String>, kind: StopKind, terminal: bool) -> Self {
        Self {
            label: label.into(),
            kind,
            terminal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitEvent {
    pub time: f64,
    pub label: String,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub path_index: u64,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub absorbed_at: Option<f64>,
    pub exit_events: Vec<ExitEvent>,
    pub stride: usize,
}

/// Per-path result without the stored path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path_index: u64,
    pub terminal: Vec<f64>,
    pub t_end: f64,
    pub absorbed_at: Option<f64>,
    pub exit_events: Vec<ExitEvent>,
    pub max_norm: f64,
}

impl Trajectory {
    pub fn summary(&self) -> PathSummary {
        PathSummary {
            path_index: self.path_index,
            terminal: self.points.last().cloned().unwrap_or_default(),
            t_end: self.times.last().copied().unwrap_or(0.0),
            absorbed_at: self.absorbed_at,
            exit_events: self.exit_events.clone(),
            max_norm: self
                .points
                .iter()
                .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        }
    }

    pub fn event(&self, label: &str) -> Option<&ExitEvent> {
        self.exit_events.iter().find(|e| e.label == label)
    }

    /// CSV with header `t,x1,...,xd,absorbed`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.points.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.push("absorbed".into());
        writeln!(w, "{}", header.join(","))?;
        for (t, p) in self.times.iter().zip(&self.points) {
            let absorbed = self.absorbed_at.is_some_and(|ta| *t >= ta);
            let mut row = vec![t.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            row.push(u8::from(absorbed).to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn lerp(p: &[f64], q: &[f64], s: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| a + s * (b - a)).collect()
}

/// One Euler–Maruyama path of `dX = (b + εb̃)dt + √ε σ dW` from `x0`.
///
/// The path is absorbed at the first grid point within `absorb_tube` of a
/// located singularity and held there up to `t_max`. A step that jumps across
/// the singular set without landing in the tube is not absorbed. Stop-rule crossings are located by linear
/// interpolation of the level function inside the step.
pub fn simulate(f: &CoefficientField, x0: &[f64], cfg: &SimConfig, stops: &[StopRule]) -> Result<Trajectory> {
    cfg.validate()?;
    let d = f.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("x0 must be finite".into()));
    }
    let mut traj = Trajectory {
        path_index: cfg.path_index,
        times: vec![0.0],
        points: vec![x0.to_vec()],
        absorbed_at: None,
        exit_events: Vec::new(),
        stride: cfg.stride,
    };
    if f.gamma().distance(x0) <= cfg.absorb_tube {
        traj.absorbed_at = Some(0.0);
        traj.times.push(cfg.t_max);
        traj.points.push(x0.to_vec());
        return Ok(traj);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.path_index);
    let n_steps = (cfg.t_max / cfg.dt).ceil() as usize;
    let sqrt_eps = cfg.eps.sqrt();
    let mut fired = vec![false; stops.len()];
    let mut levels: Vec<f64> = stops.iter().map(|r| r.kind.level(x0)).collect();
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut xi = vec![0.0; d];

    for step in 0..n_steps {
        let h = (cfg.t_max - t).min(cfg.dt);
        let c = f.eval(&x).map_err(|e| match e {
            Error::ModelEvaluation { point, what } => Error::ModelEvaluation {
                point,
                what: format!("{what} (step {step})"),
            },
            other => other,
        })?;
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let noise_scale = sqrt_eps * h.sqrt();
        let mut next = x.clone();
        for i in 0..d {
            let mut dw = 0.0;
            for j in 0..d {
                dw += c.sigma[(i, j)] * xi[j];
            }
            next[i] += (c.b[i] + cfg.eps * c.b_tilde[i]) * h + noise_scale * dw;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { step });
        }

        let absorbed = f.gamma().distance(&next) <= cfg.absorb_tube;
        let mut crossings: Vec<(f64, usize)> = Vec::new();
        let new_levels: Vec<f64> = stops.iter().map(|r| r.kind.level(&next)).collect();
        for k in 0..stops.len() {
            if !fired[k] && levels[k] < 0.0 && new_levels[k] >= 0.0 {
                crossings.push((levels[k] / (levels[k] - new_levels[k]), k));
            }
        }
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut stop_at: Option<(f64, Vec<f64>)> = None;
        for (s, k) in crossings {
            let p = lerp(&x, &next, s);
            let te = t + s * h;
            fired[k] = true;
            traj.exit_events.push(ExitEvent {
                time: te,
                label: stops[k].label.clone(),
                point: p.clone(),
            });
            if stops[k].terminal {
                stop_at = Some((te, p));
                break;
            }
        }
        if let Some((te, p)) = stop_at {
            traj.times.push(te);
            traj.points.push(p);
            return Ok(traj);
        }
        if absorbed {
            let ta = if step + 1 == n_steps { cfg.t_max } else { (step + 1) as f64 * cfg.dt };
            traj.absorbed_at = Some(ta);
            traj.times.push(ta);
            traj.points.push(next.clone());
            if ta < cfg.t_max {
                traj.times.push(cfg.t_max);
                traj.points.push(next);
            }
            return Ok(traj);
        }

        x = next;
        levels = new_levels;
        t = if step + 1 == n_steps { cfg.t_max } else { (step + 1) as f64 * cfg.dt };
        if (step + 1) % cfg.stride == 0 || step + 1 == n_steps {
            traj.times.push(t);
            traj.points.push(x.clone());
        }
    }
    Ok(traj)
}

/// Independent paths `0..n_paths` with streams `(seed, i)`.
#[derive(Debug, Clone, Serialize)]
pub struct Batch {
    pub labels: Vec<String>,
    pub summaries: Vec<PathSummary>,
    /// Stored paths, kept only when requested.
    #[serde(skip)]
    pub paths: Vec<Trajectory>,
}

impl Batch {
    /// JSON lines, one summary per path.
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for s in &self.summaries {
            serde_json::to_writer(&mut *w, s)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn absorbed_count(&self) -> usize {
        self.summaries.iter().filter(|s| s.absorbed_at.is_some()).count()
    }
}

/// Run `n_paths` paths on a pool of `workers` threads. Results do not depend on
/// the worker count.
pub fn simulate_batch(
    f: &CoefficientField,
    x0: &[f64],
    cfg: &SimConfig,
    stops: &[StopRule],
    n_paths: usize,
    workers: usize,
    keep_paths: bool,
) -> Result<Batch> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let trajs: Vec<Trajectory> = pool.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let mut c = cfg.clone();
                c.path_index = i as u64;
                simulate(f, x0, &c, stops)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Batch {
        labels: stops.iter().map(|r| r.label.clone()).collect(),
        summaries: trajs.iter().map(Trajectory::summary).collect(),
        paths: if keep_paths { trajs } else { Vec::new() },
    })
}

/// Statistics of a labelled stopping time across a batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingStats {
    pub label: String,
    pub count: usize,
    pub censored: usize,
    /// Empirical 10/25/50/75/90% quantiles of the observed times; `None` when
    /// no path hit.
    pub quantiles: Option<[f64; 5]>,
    pub mean_of_logs: Option<f64>,
}

/// Type-7 empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn hitting_time_stats(batch: &Batch, label: &str) -> Result<HittingStats> {
    if !batch.labels.iter().any(|l| l == label) {
        return Err(Error::UnknownLabel(label.to_string()));
    }
    let mut times: Vec<f64> = batch
        .summaries
        .iter()
        .filter_map(|s| s.exit_events.iter().find(|e| e.label == label).map(|e| e.time))
        .collect();
    times.sort_by(f64::total_cmp);
    let count = times.len();
    let censored = batch.summaries.len() - count;
    if count == 0 {
        return Ok(HittingStats {
            label: label.into(),
            count,
            censored,
            quantiles: None,
            mean_of_logs: None,
        });
    }
    let q = [0.1, 0.25, 0.5, 0.75, 0.9].map(|p| quantile_sorted(&times, p));
    let logs: Vec<f64> = times.iter().filter(|t| **t > 0.0).map(|t| t.ln()).collect();
    Ok(HittingStats {
        label: label.into(),
        count,
        censored,
        quantiles: Some(q),
        mean_of_logs: (!logs.is_empty()).then(|| logs.iter().sum::<f64>() / logs.len() as f64),
    })
}
