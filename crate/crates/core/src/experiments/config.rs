use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particles::{InitialPreset, DEFAULT_RESOLUTION};
use crate::regularization::{check_coercivity, delta_exponent, select_parameters, RegParams, CUBIC_CONSTANTS};
use crate::solver::step_count;
use crate::test_function::TestFunction;
use crate::torus::GridSpec;

fn default_safety() -> f64 {
    0.5
}

fn default_cfl() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

/// Time step rule: `dt = T / ceil(T / dt_max)` with
/// `dt_max = dt` if given, else `cfl / (2πM)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeStepRule {
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub dt: Option<f64>,
}

impl Default for TimeStepRule {
    fn default() -> Self {
        Self { cfl: default_cfl(), dt: None }
    }
}

impl TimeStepRule {
    pub fn max_step(&self, cutoff: usize) -> f64 {
        self.dt.unwrap_or(self.cfl / (2.0 * PI * cutoff as f64).powi(2))
    }

    /// Largest step not above the rule that divides `horizon` evenly.
    pub fn resolve(&self, horizon: f64, cutoff: usize) -> Result<(f64, usize)> {
        let dt_max = self.max_step(cutoff);
        if !(dt_max > 0.0) || !dt_max.is_finite() {
            return Err(Error::Config(format!("time step bound {dt_max} must be positive")));
        }
        if horizon == 0.0 {
            return Ok((dt_max, 0));
        }
        let steps = (horizon / dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = horizon / steps as f64;
        Ok((dt, step_count(horizon, dt)?))
    }
}

/// Grid rule. The initial condition is built on a grid with at least
/// `ic_resolution · N` points per axis; the first step runs there and the
/// state is then spectrally restricted to the solver grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRule {
    #[serde(default = "default_resolution")]
    pub ic_resolution: usize,
    /// Solver grid points per axis; default: smallest power of two `>= 4M + 4`.
    #[serde(default)]
    pub solver_n: Option<usize>,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

impl Default for GridRule {
    fn default() -> Self {
        Self { ic_resolution: DEFAULT_RESOLUTION, solver_n: None }
    }
}

impl GridRule {
    pub fn ic_grid(&self, dim: usize, n_particles: usize) -> Result<GridSpec> {
        GridSpec::new(dim, (self.ic_resolution * n_particles).next_power_of_two())
    }

    pub fn solver_grid(&self, dim: usize, cutoff: usize) -> Result<GridSpec> {
        let auto = GridSpec::for_cutoff(dim, cutoff)?;
        match self.solver_n {
            None => Ok(auto),
            Some(n) => {
                let spec = GridSpec::new(dim, n)?;
                if !spec.resolves_cutoff(cutoff) {
                    return Err(Error::Config(format!("solver grid {n} cannot resolve cutoff M = {cutoff}")));
                }
                Ok(spec)
            }
        }
    }
}

/// Pins `δ_N = delta_constant · N^{-1/(d/2+1)}` (and optionally `M`) instead
/// of searching for them; the pair must pass the coercivity gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationOverride {
    pub delta_constant: f64,
    /// Default `⌈δ^{-1/2}⌉`.
    #[serde(default)]
    pub cutoff: Option<usize>,
}

/// Two ordered initial conditions `u⁺ >= u⁻` for the comparison experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub n_particles: usize,
    /// `u⁻ = lower_scale · μ̃₀`
    #[serde(default)]
    pub lower_scale: f64,
    /// `u⁺ = μ̃₀ + gap`
    pub gap: f64,
    /// Refinement levels; each level halves `dt` and doubles the solver grid.
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    2
}

/// Structure-suite settings: the fitted entropy constant is checked against
/// `entropy_constant`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    pub entropy_constant: f64,
    /// Multiple of the Monte Carlo standard error allowed in the inequalities.
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

fn default_sigmas() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub horizon: f64,
    pub n_list: Vec<usize>,
    #[serde(default = "default_safety")]
    pub safety: f64,
    pub mc_paths: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub test_function: TestFunction,
    pub initial: InitialPreset,
    #[serde(default)]
    pub time_step: TimeStepRule,
    #[serde(default)]
    pub grid: GridRule,
    /// Subtract the exact-mean martingale control variate from the estimators.
    #[serde(default = "default_true")]
    pub control_variate: bool,
    #[serde(default)]
    pub regularization: Option<RegularizationOverride>,
    #[serde(default)]
    pub comparison: Option<ComparisonConfig>,
    #[serde(default)]
    pub structure: Option<StructureConfig>,
}

/// Everything derived for one particle count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRow {
    pub row: usize,
    pub params: RegParams,
    pub dt: f64,
    pub steps: usize,
    pub ic_n: usize,
    pub solver_n: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 2 {
            return Err(Error::Config(format!("dim = {} (expected 1 or 2)", self.dim)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon {} must be positive", self.horizon)));
        }
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list is empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) || self.n_list[0] == 0 {
            return Err(Error::Config(format!("n_list {:?} must be positive and strictly increasing", self.n_list)));
        }
        if self.mc_paths < 100 {
            return Err(Error::Config(format!("mc_paths = {} (at least 100)", self.mc_paths)));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::Config(format!("safety {} must lie in (0, 1)", self.safety)));
        }
        if self.test_function.dim != self.dim {
            return Err(Error::Config("test function dimension differs from dim".into()));
        }
        self.test_function.validate()?;
        if self.grid.ic_resolution == 0 {
            return Err(Error::Config("ic_resolution must be positive".into()));
        }
        if let Some(c) = &self.comparison {
            if c.levels == 0 || !(c.gap >= 0.0) || !(c.lower_scale >= 0.0 && c.lower_scale <= 1.0) {
                return Err(Error::Config("comparison needs levels >= 1, gap >= 0, lower_scale in [0, 1]".into()));
            }
        }
        for &n in &self.n_list {
            self.resolve_row(0, n)?;
        }
        Ok(())
    }

    pub fn resolve_row(&self, row: usize, n_particles: usize) -> Result<ResolvedRow> {
        let params = match &self.regularization {
            None => select_parameters(n_particles, self.dim, self.safety),
            Some(o) => {
                let delta = o.delta_constant * (n_particles as f64).powf(delta_exponent(self.dim));
                let cutoff = o.cutoff.unwrap_or_else(|| delta.powf(-0.5).ceil().max(1.0) as usize);
                check_coercivity(n_particles, delta, cutoff, self.dim, CUBIC_CONSTANTS.lip.powi(2))
            }
        }
        .map_err(|e| match e {
            Error::Domain(msg) => Error::Config(msg),
            other => other,
        })?;
        let (dt, steps) = self.time_step.resolve(self.horizon, params.cutoff)?;
        let ic = self.grid.ic_grid(self.dim, n_particles)?;
        let solver = self.grid.solver_grid(self.dim, params.cutoff)?;
        Ok(ResolvedRow { row, params, dt, steps, ic_n: ic.n(), solver_n: solver.n().min(ic.n()) })
    }

    pub fn rows(&self) -> Result<Vec<ResolvedRow>> {
        self.n_list.iter().enumerate().map(|(i, &n)| self.resolve_row(i, n)).collect()
    }
}
