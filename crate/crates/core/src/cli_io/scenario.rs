use serde::{Deserialize, Serialize};

use crate::action::QpOptions;
use crate::coeff::{Backend, CoefficientField, DEFAULT_TUBE};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::model::{find_singularities, AxisBox, DerivMode, FitnessModel, MutationKernel, DEFAULT_MERGE_RADIUS};
use crate::sde::StopRule;
use crate::Matrix;

/// A run description; every knob is explicit after parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub singularities: SingularitySpec,
    #[serde(default)]
    pub coeff: CoeffSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasipotential: Option<QpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<ExitSpec>,
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Quad1d,
    Band1d,
    Radial2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelName,
    /// Required by `band1d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Replace supplied derivatives by finite differences with this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum KernelSpec {
    GaussianIsotropic { s: f64 },
    GaussianFull { cov: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingularitySpec {
    /// Search cube `[lo, hi]^d`.
    pub lo: f64,
    pub hi: f64,
    pub grid_per_axis: usize,
    pub merge_radius: f64,
}

impl Default for SingularitySpec {
    fn default() -> Self {
        Self {
            lo: -2.0,
            hi: 2.0,
            grid_per_axis: 16,
            merge_radius: DEFAULT_MERGE_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendName {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoeffSpec {
    pub backend: BackendName,
    pub quad_tol: f64,
    pub tube: f64,
    /// Grid points per axis of the coefficient table over the search cube.
    pub table_n: usize,
}

impl Default for CoeffSpec {
    fn default() -> Self {
        Self {
            backend: BackendName::ClosedForm,
            quad_tol: 1e-9,
            tube: DEFAULT_TUBE,
            table_n: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySpec {
    /// Start points in dimension 1, singularities otherwise; empty means all
    /// interval midpoints or all located singularities.
    pub points: Vec<Vec<f64>>,
    pub eps: f64,
    pub n_panels: usize,
    pub nbhd_radius: f64,
    pub samples: usize,
}

impl Default for ClassifySpec {
    fn default() -> Self {
        Self {
            points: Vec::new(),
            eps: 0.1,
            n_panels: 120,
            nbhd_radius: 0.1,
            samples: 4000,
        }
    }
}

fn default_absorb_tube() -> f64 {
    1e-5
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub x0: Vec<f64>,
    pub eps: f64,
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_absorb_tube")]
    pub absorb_tube: f64,
    #[serde(default = "one")]
    pub n_paths: usize,
    /// Thinning of the stored trajectory of path 0.
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub stops: Vec<StopRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpSpec {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    #[serde(default)]
    pub solver: QpOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitSpec {
    pub domain: Domain,
    pub x0: Vec<f64>,
    pub eps_values: Vec<f64>,
    #[serde(default = "default_exit_paths")]
    pub n_paths: usize,
    #[serde(default = "default_exit_dt")]
    pub dt: f64,
    #[serde(default = "default_absorb_tube")]
    pub absorb_tube: f64,
    #[serde(default = "default_cap")]
    pub t_max_cap: f64,
    #[serde(default = "default_radius")]
    pub concentration_radius: f64,
    /// `δ = delta_frac · V̄`.
    #[serde(default = "default_delta_frac")]
    pub delta_frac: f64,
    #[serde(default = "default_boundary")]
    pub n_boundary: usize,
    /// Flow horizon of the attracting-domain check.
    #[serde(default = "default_attract_horizon")]
    pub attract_horizon: f64,
    /// Use these instead of computing the exit cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_star: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: QpOptions,
}

fn default_exit_paths() -> usize {
    500
}
fn default_exit_dt() -> f64 {
    1e-2
}
fn default_cap() -> f64 {
    5000.0
}
fn default_radius() -> f64 {
    0.3
}
fn default_delta_frac() -> f64 {
    0.3
}
fn default_boundary() -> usize {
    24
}
fn default_attract_horizon() -> f64 {
    30.0
}

/// Strict parse; unknown keys, type mismatches and missing fields are errors
/// carrying the TOML location.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

/// Canonical TOML text of a scenario, defaults included.
pub fn serialize_scenario(s: &Scenario) -> Result<String> {
    toml::to_string(s).map_err(|e| Error::Scenario(e.to_string()))
}

impl Scenario {
    pub fn dim(&self) -> usize {
        match self.model.name {
            ModelName::Quad1d | ModelName::Band1d => 1,
            ModelName::Radial2d => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let check = |what: &str, v: &[f64]| -> Result<()> {
            if v.len() != d {
                return Err(Error::Scenario(format!("{what} has dimension {}, the model has {d}", v.len())));
            }
            Ok(())
        };
        if self.model.name == ModelName::Band1d && self.model.kappa.is_none() {
            return Err(Error::Scenario("model.kappa is required for band1d".into()));
        }
        if let KernelSpec::GaussianFull { cov } = &self.kernel {
            if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                return Err(Error::Scenario(format!("kernel.cov must be {d}x{d}")));
            }
        }
        if let Some(sim) = &self.sim {
            check("sim.x0", &sim.x0)?;
        }
        if let Some(q) = &self.quasipotential {
            check("quasipotential.y", &q.y)?;
            check("quasipotential.z", &q.z)?;
        }
        if let Some(e) = &self.exit {
            check("exit.x0", &e.x0)?;
            if let Some(z) = &e.z_star {
                check("exit.z_star", z)?;
            }
            if e.domain.dim() != d {
                return Err(Error::Scenario(format!("exit.domain has dimension {}", e.domain.dim())));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<FitnessModel> {
        let m = match self.model.name {
            ModelName::Quad1d => FitnessModel::quad1d(),
            ModelName::Band1d => FitnessModel::band1d(self.model.kappa.unwrap_or_default()),
            ModelName::Radial2d => FitnessModel::radial2d(),
        };
        Ok(match self.model.fd_step {
            Some(step) => m.with_mode(DerivMode::FiniteDifference { step }),
            None => m,
        })
    }

    pub fn build_kernel(&self) -> Result<MutationKernel> {
        match &self.kernel {
            KernelSpec::GaussianIsotropic { s } => MutationKernel::gaussian_isotropic(self.dim(), *s),
            KernelSpec::GaussianFull { cov } => {
                let d = self.dim();
                MutationKernel::gaussian_full(Matrix::from_fn(d, d, |i, j| cov[i][j]))
            }
        }
    }

    pub fn search_box(&self) -> Result<AxisBox> {
        AxisBox::cube(self.dim(), self.singularities.lo, self.singularities.hi)
    }

    /// Model, kernel, located singularities and the coefficient field.
    pub fn build_field(&self) -> Result<CoefficientField> {
        let m = self.build_model()?;
        let k = self.build_kernel()?;
        let gamma = find_singularities(&m, &self.search_box()?, self.singularities.grid_per_axis, self.singularities.merge_radius)?;
        let backend = match self.coeff.backend {
            BackendName::ClosedForm => Backend::GaussianClosedForm,
            BackendName::Quadrature => Backend::Quadrature { tol: self.coeff.quad_tol },
        };
        Ok(crate::coeff::build_field(m, k, gamma, backend)?.with_tube(self.coeff.tube))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nname = \"quad1d\"\n\n[kernel]\nkind = \"gaussian_isotropic\"\ns = 1.0\n";

    #[test]
    fn minimal_gets_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.seed, 0);
        assert_eq!(s.output_dir, "out");
        assert_eq!(s.singularities, SingularitySpec::default());
        assert_eq!(s.coeff, CoeffSpec::default());
        let text = serialize_scenario(&s).unwrap();
        assert!(text.contains("grid_per_axis = 16"));
        assert_eq!(parse_scenario(&text).unwrap(), s);
    }

    #[test]
    fn misspelled_key_is_named() {
        let text = format!("{MINIMAL}\n[sim]\nx0 = [0.5]\nepss = 0.1\ndt = 0.01\nt_max = 1.0\n");
        let e = parse_scenario(&text).unwrap_err().to_string();
        assert!(e.contains("epss"), "{e}");
    }

    #[test]
    fn nested_unknown_keys_are_rejected() {
        let text = MINIMAL.replace("s = 1.0", "s = 1.0\nsigma = 2.0");
        assert!(parse_scenario(&text).unwrap_err().to_string().contains("sigma"));
    }

    #[test]
    fn band_needs_kappa() {
        let text = MINIMAL.replace("quad1d", "band1d");
        assert!(matches!(parse_scenario(&text), Err(Error::Scenario(_))));
    }
}
