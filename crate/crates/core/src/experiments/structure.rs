//! Ensemble checks of the energy and entropy estimates.
//!
//! Energy: `E‖u_T‖² + (1-r) E∫‖∇u‖² <= ‖u₀‖² + (C₂^W/N) T ‖u₀‖₁`.
//! Entropy: `sup_t E∫u log u + ¼(1-r) E∫fisher <= C (∫u₀ log u₀ + T M^{d+2}/N)`.
//! `∫‖∇u‖²` is the exact heat dissipation of the scheme, `∫fisher` the right
//! Riemann sum of the clamped Fisher information.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::regularization::RegSqrt;
use crate::rng::{path_rng, StreamFamily};
use crate::solver::{diagnostics, integrate_with, IntegrateOptions};
use crate::stats::mean_and_se;

use super::config::ExperimentConfig;
use super::weak_error::RowSetup;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureRow {
    pub n_particles: usize,
    pub delta: f64,
    pub cutoff: usize,
    pub ratio: f64,
    pub dt: f64,
    pub steps: usize,
    pub paths: usize,
    pub energy_initial: f64,
    pub energy_lhs: f64,
    pub energy_lhs_se: f64,
    pub energy_rhs: f64,
    pub entropy_initial: f64,
    /// `d log N + c_m` for the mollified initial condition.
    pub entropy_initial_bound: f64,
    pub entropy_sup: f64,
    pub fisher_integral: f64,
    pub entropy_lhs: f64,
    pub entropy_lhs_se: f64,
    pub entropy_bracket: f64,
    /// `entropy_lhs / entropy_bracket`, the smallest admissible constant.
    pub entropy_ratio: f64,
    pub max_mass_drift: f64,
    pub median_neg_mass: f64,
    pub energy_pass: bool,
    pub entropy_pass: bool,
}

impl StructureRow {
    pub const CSV_HEADER: &'static str = "n_particles,delta,cutoff,ratio,dt,steps,paths,energy_initial,energy_lhs,energy_lhs_se,\
energy_rhs,entropy_initial,entropy_initial_bound,entropy_sup,fisher_integral,entropy_lhs,entropy_lhs_se,entropy_bracket,\
entropy_ratio,max_mass_drift,median_neg_mass,energy_pass,entropy_pass";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{},{:.6},{:e},{},{},{:.10e},{:.10e},{:.3e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.3e},{:.10e},{:.6},{:.3e},{:.3e},{},{}",
            self.n_particles,
            self.delta,
            self.cutoff,
            self.ratio,
            self.dt,
            self.steps,
            self.paths,
            self.energy_initial,
            self.energy_lhs,
            self.energy_lhs_se,
            self.energy_rhs,
            self.entropy_initial,
            self.entropy_initial_bound,
            self.entropy_sup,
            self.fisher_integral,
            self.entropy_lhs,
            self.entropy_lhs_se,
            self.entropy_bracket,
            self.entropy_ratio,
            self.max_mass_drift,
            self.median_neg_mass,
            self.energy_pass,
            self.entropy_pass
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub rows: Vec<StructureRow>,
    pub entropy_constant: f64,
    pub sigmas: f64,
    pub master_seed: u64,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.energy_pass && r.entropy_pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(StructureRow::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

struct PathStats {
    entropy: Vec<f64>,
    energy_final: f64,
    dissipation: f64,
    fisher: f64,
    mass_drift: f64,
    neg_mass: f64,
}

/// Diagnostics are recorded at about this many times per path.
const RECORDS: usize = 200;

pub fn structure_row(
    cfg: &ExperimentConfig,
    row: usize,
    n_particles: usize,
    paths: usize,
    entropy_constant: f64,
    sigmas: f64,
) -> Result<StructureRow> {
    let setup = RowSetup::new(cfg, row, n_particles)?;
    let r = &setup.resolved;
    let params = r.params;
    let reg = RegSqrt::new(params.delta)?;
    let record_every = (r.steps / RECORDS).max(1);
    let options = IntegrateOptions { record_every, solver_grid: Some(setup.solver_grid), track_integrals: true };
    let init = diagnostics(&setup.initial);
    let samples: Vec<Result<PathStats>> = map_indexed(paths, |i| {
        let mut rng = path_rng(cfg.master_seed, StreamFamily::Spde, row as u32, i as u32);
        let traj =
            integrate_with(setup.initial.clone(), params, reg, cfg.horizon, r.dt, &mut rng, options, |_, _, _| Ok(()))?;
        let last = traj.records.last().expect("initial record").1;
        Ok(PathStats {
            entropy: traj.records.iter().map(|(_, d)| d.entropy).collect(),
            energy_final: last.energy,
            dissipation: traj.dissipation_integral,
            fisher: traj.fisher_integral,
            mass_drift: traj.records.iter().map(|(_, d)| (d.mass - init.mass).abs()).fold(0.0, f64::max),
            neg_mass: last.neg_mass,
        })
    });
    let samples: Vec<PathStats> = samples.into_iter().collect::<Result<_>>()?;
    let records = samples[0].entropy.len();
    if samples.iter().any(|s| s.entropy.len() != records) {
        return Err(Error::Shape("paths recorded different numbers of diagnostics".into()));
    }

    let energy_margin = params.energy_margin;
    let energy_samples: Vec<f64> = samples.iter().map(|s| s.energy_final + energy_margin * s.dissipation).collect();
    let (energy_lhs, energy_lhs_se) = mean_and_se(&energy_samples);
    let l1: f64 = setup.initial.values().iter().map(|v| v.abs()).sum::<f64>() / setup.initial.values().len() as f64;
    let energy_rhs = init.energy + params.noise_gradient_sum() / n_particles as f64 * cfg.horizon * l1;

    // sup over recorded times of the ensemble mean entropy; the standard error
    // is the one at the maximizing time
    let (sup_index, entropy_sup) = (0..records)
        .map(|k| (k, samples.iter().map(|s| s.entropy[k]).sum::<f64>() / paths as f64))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let (fisher_integral, _) = mean_and_se(&samples.iter().map(|s| s.fisher).collect::<Vec<_>>());
    let lambda = params.lambda;
    let entropy_samples: Vec<f64> = samples.iter().map(|s| s.entropy[sup_index] + lambda * s.fisher).collect();
    let (_, entropy_lhs_se) = mean_and_se(&entropy_samples);
    let entropy_lhs = entropy_sup + lambda * fisher_integral;
    let dim = cfg.dim as i32;
    let entropy_bracket = init.entropy + cfg.horizon * (params.cutoff as f64).powi(dim + 2) / n_particles as f64;
    let entropy_ratio = entropy_lhs / entropy_bracket;

    let mut neg: Vec<f64> = samples.iter().map(|s| s.neg_mass).collect();
    neg.sort_by(f64::total_cmp);
    let mollifier = crate::particles::Mollifier::standard(cfg.dim, n_particles)?;
    Ok(StructureRow {
        n_particles,
        delta: params.delta,
        cutoff: params.cutoff,
        ratio: params.ratio,
        dt: r.dt,
        steps: r.steps,
        paths,
        energy_initial: init.energy,
        energy_lhs,
        energy_lhs_se,
        energy_rhs,
        entropy_initial: init.entropy,
        entropy_initial_bound: cfg.dim as f64 * (n_particles as f64).ln() + mollifier.entropy_constant(),
        entropy_sup,
        fisher_integral,
        entropy_lhs,
        entropy_lhs_se,
        entropy_bracket,
        entropy_ratio,
        max_mass_drift: samples.iter().map(|s| s.mass_drift).fold(0.0, f64::max),
        median_neg_mass: neg[neg.len() / 2],
        energy_pass: energy_lhs <= energy_rhs + sigmas * energy_lhs_se,
        entropy_pass: entropy_lhs <= entropy_constant * entropy_bracket + sigmas * entropy_lhs_se,
    })
}

/// Runs the structure checks for every `N` of the configuration.
pub fn run_structure_suite(cfg: &ExperimentConfig) -> Result<StructureReport> {
    cfg.validate()?;
    let s = cfg.structure.as_ref().ok_or_else(|| Error::Config("missing [structure] section".into()))?;
    let rows = cfg
        .n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| structure_row(cfg, i, n, cfg.mc_paths, s.entropy_constant, s.sigmas))
        .collect::<Result<_>>()?;
    Ok(StructureReport { rows, entropy_constant: s.entropy_constant, sigmas: s.sigmas, master_seed: cfg.master_seed })
}
