//! Ordering of synchronously coupled solutions.
//!
//! `u⁻₀ = s·μ̃₀` and `u⁺₀ = μ̃₀ + g` with `s ∈ [0, 1]`, `g >= 0` are driven by
//! the same increments; the violation `∫max(u⁻ - u⁺, 0)` is tracked at every
//! step. Each refinement level halves `dt` and doubles the solver grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::sample_increment;
use crate::parallel::map_indexed;
use crate::regularization::RegSqrt;
use crate::rng::{path_rng, StreamFamily};
use crate::solver::{coupled_pair_step, SolverState};
use crate::torus::{GridField, GridSpec};

use super::config::{ComparisonConfig, ExperimentConfig};
use super::weak_error::RowSetup;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonLevel {
    pub level: usize,
    pub dt: f64,
    pub steps: usize,
    pub solver_n: usize,
    pub paths: usize,
    /// `‖u⁺₀ - u⁻₀‖₁`
    pub initial_gap: f64,
    /// Largest violation over paths and time.
    pub max_violation: f64,
    /// Path average of the time-maximal violation.
    pub mean_violation: f64,
    /// Largest `|u⁻|` over paths and time; exactly zero when `u⁻₀ = 0`.
    pub lower_sup: f64,
    /// Largest `∫max(-u⁺, 0)` over paths and time.
    pub upper_neg_mass: f64,
}

impl ComparisonLevel {
    pub const CSV_HEADER: &'static str =
        "level,dt,steps,solver_n,paths,initial_gap,max_violation,mean_violation,lower_sup,upper_neg_mass";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{},{},{},{:.10e},{:.6e},{:.6e},{:.6e},{:.6e}",
            self.level,
            self.dt,
            self.steps,
            self.solver_n,
            self.paths,
            self.initial_gap,
            self.max_violation,
            self.mean_violation,
            self.lower_sup,
            self.upper_neg_mass
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_particles: usize,
    pub lower_scale: f64,
    pub gap: f64,
    pub levels: Vec<ComparisonLevel>,
    pub master_seed: u64,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ComparisonLevel::CSV_HEADER);
        out.push('\n');
        for l in &self.levels {
            out.push_str(&l.csv_line());
            out.push('\n');
        }
        out
    }
}

fn violation(lower: &GridField, upper: &GridField) -> Result<f64> {
    let diff = lower.zip_with(upper, |a, b| (a - b).max(0.0))?;
    Ok(diff.values().iter().sum::<f64>() / diff.values().len() as f64)
}

fn neg_mass(u: &GridField) -> f64 {
    u.values().iter().map(|v| (-v).max(0.0)).sum::<f64>() / u.values().len() as f64
}

pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let c = cfg.comparison.as_ref().ok_or_else(|| Error::Config("missing [comparison] section".into()))?;
    comparison_with(cfg, c, cfg.mc_paths)
}

pub fn comparison_with(cfg: &ExperimentConfig, c: &ComparisonConfig, paths: usize) -> Result<ComparisonReport> {
    let setup = RowSetup::new(cfg, 0, c.n_particles)?;
    let r = &setup.resolved;
    let params = r.params;
    let reg = RegSqrt::new(params.delta)?;
    let mut levels = Vec::new();
    for level in 0..c.levels {
        let refine = 1usize << level;
        let dt = r.dt / refine as f64;
        let steps = r.steps * refine;
        let grid = GridSpec::new(cfg.dim, (r.solver_n * refine).min(r.ic_n))?;
        let lower0 = setup.initial.map(|v| c.lower_scale * v);
        let upper0 = setup.initial.map(|v| v + c.gap);
        let initial_gap = upper0.zip_with(&lower0, |a, b| (a - b).abs())?.mass();
        let per_path: Vec<Result<[f64; 3]>> = map_indexed(paths, |i| {
            let mut rng = path_rng(cfg.master_seed, StreamFamily::Spde, level as u32, i as u32);
            let mut upper = SolverState::new(upper0.clone(), params, reg, dt)?;
            let mut lower = SolverState::new(lower0.clone(), params, reg, dt)?;
            let mut worst = violation(&lower.u, &upper.u)?;
            let mut lower_sup = lower.u.sup_norm();
            let mut upper_neg = neg_mass(&upper.u);
            for j in 0..steps {
                let inc = sample_increment(params.dim, params.cutoff, dt, &mut rng)?;
                let (p, m) = coupled_pair_step(&upper, &lower, &inc)?;
                upper = p;
                lower = m;
                if j == 0 && grid != upper.spec() {
                    upper = upper.resampled(grid)?;
                    lower = lower.resampled(grid)?;
                }
                worst = worst.max(violation(&lower.u, &upper.u)?);
                lower_sup = lower_sup.max(lower.u.sup_norm());
                upper_neg = upper_neg.max(neg_mass(&upper.u));
            }
            Ok([worst, lower_sup, upper_neg])
        });
        let per_path: Vec<[f64; 3]> = per_path.into_iter().collect::<Result<_>>()?;
        levels.push(ComparisonLevel {
            level,
            dt,
            steps,
            solver_n: grid.n(),
            paths,
            initial_gap,
            max_violation: per_path.iter().map(|p| p[0]).fold(0.0, f64::max),
            mean_violation: per_path.iter().map(|p| p[0]).sum::<f64>() / paths as f64,
            lower_sup: per_path.iter().map(|p| p[1]).fold(0.0, f64::max),
            upper_neg_mass: per_path.iter().map(|p| p[2]).fold(0.0, f64::max),
        });
    }
    Ok(ComparisonReport {
        n_particles: c.n_particles,
        lower_scale: c.lower_scale,
        gap: c.gap,
        levels,
        master_seed: cfg.master_seed,
    })
}
