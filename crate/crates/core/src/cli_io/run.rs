use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::scenario::{serialize_scenario, Scenario};
use crate::action::{exit_cost, quasipotential, ExitCost, ExitCostOptions};
use crate::classify::{classify_dim1_with, classify_dimd, Dim1Options};
use crate::coeff::{coeff_table, write_coeff_table, CoefficientField};
use crate::error::{Error, Result};
use crate::exit::{check_attracting, run_exit_experiment, ExitOptions};
use crate::sde::{hitting_time_stats, simulate, simulate_batch, SimConfig};

/// Subcommands understood by [`dispatch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CoeffTable,
    Classify,
    Simulate,
    Quasipotential,
    ExitCost,
    ExitExperiment,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::CoeffTable,
        Command::Classify,
        Command::Simulate,
        Command::Quasipotential,
        Command::ExitCost,
        Command::ExitExperiment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::CoeffTable => "coeff-table",
            Command::Classify => "classify",
            Command::Simulate => "simulate",
            Command::Quasipotential => "quasipotential",
            Command::ExitCost => "exit-cost",
            Command::ExitExperiment => "exit-experiment",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command `{s}`")))
    }
}

/// Command-line overrides of a scenario.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, seed: None, out: None }
    }
}

/// Record of one run, written next to its outputs as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the canonical scenario text after overrides, output
    /// directory excluded.
    pub scenario_sha256: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Outputs {
    dir: PathBuf,
    sums: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), sums: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let mut w = BufWriter::new(fs::File::create(self.dir.join(name))?);
        w.write_all(&buf)?;
        w.flush()?;
        self.sums.insert(name.to_string(), sha256_hex(&buf));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |b| {
            serde_json::to_writer_pretty(&mut *b, value)?;
            b.push(b'\n');
            Ok(())
        })
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        self.write(name, |b| {
            for r in rows {
                serde_json::to_writer(&mut *b, r)?;
                b.push(b'\n');
            }
            Ok(())
        })
    }
}

fn missing(block: &str, cmd: Command) -> Error {
    Error::Scenario(format!("command `{}` needs a [{block}] block", cmd.as_str()))
}

/// Run `cmd` on `scenario`, write its outputs and the manifest into the output
/// directory and return the manifest.
pub fn dispatch(cmd: Command, scenario: &Scenario, opts: &RunOptions) -> Result<RunManifest> {
    let start = Instant::now();
    let mut sc = scenario.clone();
    if let Some(seed) = opts.seed {
        sc.seed = seed;
    }
    if let Some(out) = &opts.out {
        sc.output_dir = out.to_string_lossy().into_owned();
    }
    sc.validate()?;
    let canonical = serialize_scenario(&Scenario { output_dir: String::new(), ..sc.clone() })?;
    let workers = opts.workers.max(1);
    let mut out = Outputs::new(Path::new(&sc.output_dir))?;
    let field = sc.build_field()?;
    match cmd {
        Command::CoeffTable => run_coeff_table(&sc, &field, &mut out)?,
        Command::Classify => run_classify(&sc, &field, &mut out)?,
        Command::Simulate => run_simulate(&sc, &field, workers, &mut out)?,
        Command::Quasipotential => run_quasipotential(&sc, &field, &mut out)?,
        Command::ExitCost => {
            run_exit_cost(&sc, &field, workers, &mut out)?;
        }
        Command::ExitExperiment => run_exit_experiment_cmd(&sc, &field, workers, &mut out)?,
    }
    let manifest = RunManifest {
        command: cmd.as_str().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario_sha256: sha256_hex(canonical.as_bytes()),
        seed: sc.seed,
        workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: out.sums.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

fn run_coeff_table(sc: &Scenario, f: &CoefficientField, out: &mut Outputs) -> Result<()> {
    let rows = coeff_table(f, &sc.search_box()?, sc.coeff.table_n)?;
    out.write("coeff_table.csv", |b| write_coeff_table(b, &rows))
}

fn run_classify(sc: &Scenario, f: &CoefficientField, out: &mut Outputs) -> Result<()> {
    let spec = sc.classify.clone().unwrap_or_default();
    let gamma = f.gamma();
    if sc.dim() == 1 {
        let points: Vec<f64> = if spec.points.is_empty() {
            let mut c: Vec<f64> = gamma.points.iter().map(|p| p[0]).collect();
            c.sort_by(f64::total_cmp);
            c.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            spec.points.iter().map(|p| p[0]).collect()
        };
        if points.is_empty() {
            return Err(Error::Precondition("fewer than two singularities; nothing to classify".into()));
        }
        let opts = Dim1Options { eps: spec.eps, n_panels: spec.n_panels };
        let verdicts = points
            .iter()
            .map(|&x| classify_dim1_with(f.model(), f.kernel(), gamma, x, opts))
            .collect::<Result<Vec<_>>>()?;
        out.jsonl("classify.jsonl", &verdicts)
    } else {
        let points = if spec.points.is_empty() { gamma.points.clone() } else { spec.points.clone() };
        if points.is_empty() {
            return Err(Error::Precondition("no singularity was located in the search box".into()));
        }
        let verdicts = points
            .iter()
            .map(|y| classify_dimd(f.model(), f.kernel(), y, spec.nbhd_radius, spec.samples, sc.seed))
            .collect::<Result<Vec<_>>>()?;
        out.jsonl("classify.jsonl", &verdicts)
    }
}

fn run_simulate(sc: &Scenario, f: &CoefficientField, workers: usize, out: &mut Outputs) -> Result<()> {
    let spec = sc.sim.as_ref().ok_or_else(|| missing("sim", Command::Simulate))?;
    let cfg = SimConfig {
        eps: spec.eps,
        dt: spec.dt,
        t_max: spec.t_max,
        absorb_tube: spec.absorb_tube,
        seed: sc.seed,
        path_index: 0,
        stride: spec.stride,
    };
    let first = simulate(f, &spec.x0, &cfg, &spec.stops)?;
    out.write("trajectory.csv", |b| first.write_csv(b))?;
    let batch = simulate_batch(f, &spec.x0, &cfg, &spec.stops, spec.n_paths, workers, false)?;
    out.write("summaries.jsonl", |b| batch.write_jsonl(b))?;
    let stats = batch
        .labels
        .iter()
        .map(|l| hitting_time_stats(&batch, l))
        .collect::<Result<Vec<_>>>()?;
    #[derive(Serialize)]
    struct Stats<'a> {
        n_paths: usize,
        absorbed: usize,
        stops: &'a [crate::sde::HittingStats],
    }
    out.json("hitting_stats.json", &Stats { n_paths: spec.n_paths, absorbed: batch.absorbed_count(), stops: &stats })
}

fn run_quasipotential(sc: &Scenario, f: &CoefficientField, out: &mut Outputs) -> Result<()> {
    let spec = sc.quasipotential.as_ref().ok_or_else(|| missing("quasipotential", Command::Quasipotential))?;
    let r = quasipotential(f, &spec.y, &spec.z, &spec.solver)?;
    out.write("qp_path.csv", |b| r.path.write_csv(b))?;
    let mut v = serde_json::to_value(&r)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("path");
    }
    out.json("quasipotential.json", &v)
}

fn run_exit_cost(sc: &Scenario, f: &CoefficientField, workers: usize, out: &mut Outputs) -> Result<ExitCost> {
    let spec = sc.exit.as_ref().ok_or_else(|| missing("exit", Command::ExitCost))?;
    let attracting = check_attracting(f, &spec.domain, spec.n_boundary, spec.attract_horizon)?;
    out.json("attracting.json", &attracting)?;
    let opts = ExitCostOptions { n_boundary: spec.n_boundary, qp: spec.solver.clone(), workers };
    let ec = exit_cost(f, &spec.domain, &opts)?;
    out.write("boundary_profile.csv", |b| ec.write_profile(b))?;
    let mut v = serde_json::to_value(&ec)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("boundary_profile");
    }
    out.json("exit_cost.json", &v)?;
    Ok(ec)
}

fn run_exit_experiment_cmd(sc: &Scenario, f: &CoefficientField, workers: usize, out: &mut Outputs) -> Result<()> {
    let spec = sc.exit.as_ref().ok_or_else(|| missing("exit", Command::ExitExperiment))?;
    if !spec.domain.contains(&spec.x0) {
        return Err(Error::Precondition(format!("x0 = {:?} is not strictly inside the domain", spec.x0)));
    }
    let (v_bar, z_star) = match (spec.v_bar, &spec.z_star) {
        (Some(v), Some(z)) => (v, z.clone()),
        _ => {
            let ec = run_exit_cost(sc, f, workers, out)?;
            (spec.v_bar.unwrap_or(ec.v_bar), spec.z_star.clone().unwrap_or(ec.z_star))
        }
    };
    let cfg = SimConfig {
        eps: spec.eps_values.first().copied().unwrap_or(0.0),
        dt: spec.dt,
        t_max: 1.0,
        absorb_tube: spec.absorb_tube,
        seed: sc.seed,
        path_index: 0,
        stride: 1,
    };
    let opts = ExitOptions {
        n_paths: spec.n_paths,
        workers,
        t_max_cap: spec.t_max_cap,
        concentration_radius: spec.concentration_radius,
    };
    let r = run_exit_experiment(f, &spec.domain, &spec.x0, &spec.eps_values, &cfg, &opts, v_bar, &z_star, spec.delta_frac * v_bar)?;
    out.write("exit_summary.jsonl", |b| r.write_summaries(b))?;
    out.write("exit_points.csv", |b| r.write_exit_points(b))
}
