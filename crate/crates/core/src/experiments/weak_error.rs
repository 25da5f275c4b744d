//! Weak error of the regularised SPDE against the exact particle expectation
//! `E exp⟨μ^N_T, φ⟩`.
//!
//! Each path also carries a control variate with exact mean zero. Writing
//! `X_j = ⟨u_j, v_{T-t_j}⟩` with `v` the Hamilton-Jacobi value function and
//! `Z_j = ⟨η_j, Π H(dt) v_{T-t_{j+1}}⟩` for the noise term `η_j` of step `j`,
//! the estimator is
//!
//! `exp(X_n) - Σ_j exp(X_j) [Z_j + ½(Z_j² - E_j Z_j²)]`.
//!
//! `Z_j` is a centred Gaussian given the past with the conditional variance
//! `E_j Z_j²` computed from the noise covariance, so every subtracted term has
//! conditional mean zero and the estimator stays unbiased for `E exp(X_n)`.

use serde::{Deserialize, Serialize};

use crate::duality::{gaussian_baseline_with, heat_prediction, solve_hj};
use crate::error::Result;
use crate::noise::increment_pairing_variance;
use crate::parallel::map_indexed;
use crate::particles::{mollified_initial_with_resolution, Mollifier, ParticleEnsemble};
use crate::regularization::{RegSqrt, Regularizer};
use crate::rng::{path_rng, StreamFamily};
use crate::solver::{integrate_with, IntegrateOptions};
use crate::stats::{loglog_slope, mean_and_se, SlopeFit};
use crate::torus::{GridField, GridSpec};

use super::config::{ExperimentConfig, ResolvedRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorRow {
    pub n_particles: usize,
    pub delta: f64,
    pub cutoff: usize,
    pub dt: f64,
    pub steps: usize,
    pub ic_n: usize,
    pub solver_n: usize,
    pub paths: usize,
    pub duality_value: f64,
    pub heat_value: f64,
    /// Control-variate estimates (plain estimates when the control variate is off).
    pub spde_mc_mean: f64,
    pub spde_mc_se: f64,
    pub gaussian_mc_mean: f64,
    pub gaussian_mc_se: f64,
    pub spde_plain_mean: f64,
    pub spde_plain_se: f64,
    pub gaussian_plain_mean: f64,
    pub gaussian_plain_se: f64,
    pub abs_error_spde: f64,
    pub abs_error_gaussian: f64,
    pub abs_error_heat: f64,
}

impl WeakErrorRow {
    pub const CSV_HEADER: &'static str =
        "n_particles,delta,cutoff,dt,steps,ic_n,solver_n,paths,duality_value,heat_value,\
spde_mc_mean,spde_mc_se,gaussian_mc_mean,gaussian_mc_se,spde_plain_mean,spde_plain_se,\
gaussian_plain_mean,gaussian_plain_se,abs_error_spde,abs_error_gaussian,abs_error_heat";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{},{:e},{},{},{},{},{:.17e},{:.17e},{:.17e},{:.6e},{:.17e},{:.6e},{:.17e},{:.6e},{:.17e},{:.6e},{:.6e},{:.6e},{:.6e}",
            self.n_particles,
            self.delta,
            self.cutoff,
            self.dt,
            self.steps,
            self.ic_n,
            self.solver_n,
            self.paths,
            self.duality_value,
            self.heat_value,
            self.spde_mc_mean,
            self.spde_mc_se,
            self.gaussian_mc_mean,
            self.gaussian_mc_se,
            self.spde_plain_mean,
            self.spde_plain_se,
            self.gaussian_plain_mean,
            self.gaussian_plain_se,
            self.abs_error_spde,
            self.abs_error_gaussian,
            self.abs_error_heat
        )
    }

    /// Row usable in a rate fit: the error is resolved by the Monte Carlo.
    pub fn spde_resolved(&self) -> bool {
        self.spde_mc_se < self.abs_error_spde / 3.0
    }

    pub fn gaussian_resolved(&self) -> bool {
        self.gaussian_mc_se < self.abs_error_gaussian / 3.0
    }
}

/// A row that could not be computed; the rest of the study still runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub n_particles: usize,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rows: Vec<WeakErrorRow>,
    pub failures: Vec<RowFailure>,
    /// Fit of `abs_error_spde` against `N` over resolved rows.
    pub slope_spde: Option<SlopeFit>,
    pub slope_gaussian: Option<SlopeFit>,
    pub slope_heat: Option<SlopeFit>,
    pub master_seed: u64,
}

impl ErrorReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(WeakErrorRow::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Per-step tables of the control variate, shared by all paths of a row.
struct ControlTables {
    /// `v_{T-t_j}` on the solver grid, `j = 0..=steps`.
    values: Vec<GridField>,
    /// `∇ Π H(dt) v_{T-t_{j+1}}`, `j = 0..steps`.
    grad_w: Vec<Vec<GridField>>,
    w: Vec<GridField>,
    /// Step-0 entries on the initial-condition grid.
    first: Option<(GridField, GridField, Vec<GridField>)>,
}

impl ControlTables {
    fn build(phi: &GridField, n_particles: usize, dt: f64, steps: usize, ic: GridSpec) -> Result<Self> {
        let spec = phi.spec();
        let values: Vec<GridField> =
            (0..=steps).map(|j| Ok(solve_hj(phi, n_particles, (steps - j) as f64 * dt)?.v)).collect::<Result<_>>()?;
        let w: Vec<GridField> =
            (0..steps).map(|j| Ok(values[j + 1].heat_semigroup(dt)?.truncated(spec.band()))).collect::<Result<_>>()?;
        let grad_w = w.iter().map(GridField::gradient).collect();
        let first = if steps > 0 && ic != spec {
            let v0 = values[0].resample(ic)?;
            let w0 = w[0].resample(ic)?;
            let g0 = w0.gradient();
            Some((v0, w0, g0))
        } else {
            None
        };
        Ok(Self { values, grad_w, w, first })
    }

    fn at(&self, j: usize, spec: GridSpec) -> (&GridField, &GridField, &[GridField]) {
        match &self.first {
            Some((v, w, g)) if j == 0 && v.spec() == spec => (v, w, g),
            _ => (&self.values[j], &self.w[j], &self.grad_w[j]),
        }
    }
}

/// Running control-variate sum for one path.
struct ControlSum<'a> {
    tables: &'a ControlTables,
    cutoff: usize,
    dt: f64,
    scale: f64,
    total: f64,
}

impl ControlSum<'_> {
    fn add(&mut self, j: usize, u: &GridField, coeff: &GridField, eta: &GridField) -> Result<()> {
        let (v, w, grad_w) = self.tables.at(j, u.spec());
        let x = u.pairing(v)?;
        let z = eta.pairing(w)?;
        let s = increment_pairing_variance(coeff, grad_w, self.cutoff, self.dt, self.scale)?;
        self.total += x.exp() * (z + 0.5 * (z * z - s));
        Ok(())
    }
}

/// Inputs of one row shared across its paths.
pub struct RowSetup {
    pub resolved: ResolvedRow,
    pub ensemble: ParticleEnsemble,
    pub initial: GridField,
    pub phi: GridField,
    pub solver_grid: GridSpec,
    pub duality_value: f64,
    pub heat_value: f64,
}

impl RowSetup {
    pub fn new(cfg: &ExperimentConfig, row: usize, n_particles: usize) -> Result<Self> {
        let resolved = cfg.resolve_row(row, n_particles)?;
        let mut rng = path_rng(cfg.master_seed, StreamFamily::InitialCondition, row as u32, 0);
        let ensemble = cfg.initial.generate(cfg.dim, n_particles, &mut rng)?;
        let ic = GridSpec::new(cfg.dim, resolved.ic_n)?;
        let mollifier = Mollifier::standard(cfg.dim, n_particles)?;
        let initial = mollified_initial_with_resolution(&ensemble, &mollifier, ic, cfg.grid.ic_resolution)?;
        let solver_grid = GridSpec::new(cfg.dim, resolved.solver_n)?;
        let phi = cfg.test_function.on_grid(solver_grid)?;
        let duality_value = solve_hj(&phi, n_particles, cfg.horizon)?.expectation(&ensemble)?;
        let heat_value = heat_prediction(&ensemble, &phi, cfg.horizon)?;
        Ok(Self { resolved, ensemble, initial, phi, solver_grid, duality_value, heat_value })
    }
}

/// One row of the weak-error study.
pub fn weak_error_row(cfg: &ExperimentConfig, row: usize, n_particles: usize, paths: usize) -> Result<WeakErrorRow> {
    let setup = RowSetup::new(cfg, row, n_particles)?;
    let r = &setup.resolved;
    let params = r.params;
    let reg = RegSqrt::new(params.delta)?;
    let tables = if cfg.control_variate {
        Some(ControlTables::build(&setup.phi, n_particles, r.dt, r.steps, setup.initial.spec())?)
    } else {
        None
    };
    let options =
        IntegrateOptions { record_every: r.steps.max(1), solver_grid: Some(setup.solver_grid), track_integrals: false };
    let scale = 1.0 / (n_particles as f64).sqrt();
    let final_value = |u: &GridField| -> Result<f64> {
        let phi = if u.spec() == setup.phi.spec() { setup.phi.clone() } else { cfg.test_function.on_grid(u.spec())? };
        Ok(u.pairing(&phi)?.exp())
    };
    let new_sum =
        || tables.as_ref().map(|t| ControlSum { tables: t, cutoff: params.cutoff, dt: r.dt, scale, total: 0.0 });

    let samples: Vec<Result<[f64; 4]>> = map_indexed(paths, |i| {
        let mut rng = path_rng(cfg.master_seed, StreamFamily::Spde, row as u32, i as u32);
        let mut cv = new_sum();
        let traj = integrate_with(
            setup.initial.clone(),
            params,
            reg,
            cfg.horizon,
            r.dt,
            &mut rng,
            options,
            |state, _, eta| {
                if let Some(cv) = cv.as_mut() {
                    let coeff = state.u.map(|x| reg.value(x));
                    cv.add(state.step_count, &state.u, &coeff, eta)?;
                }
                Ok(())
            },
        )?;
        let f_spde = final_value(&traj.final_state.u)?;
        let y_spde = f_spde - cv.map_or(0.0, |c| c.total);

        let mut rng = path_rng(cfg.master_seed, StreamFamily::Baseline, row as u32, i as u32);
        let mut cv = new_sum();
        let u = gaussian_baseline_with(
            &setup.initial,
            &params,
            cfg.horizon,
            r.dt,
            &mut rng,
            options,
            |j, u, coeff, eta| {
                if let Some(cv) = cv.as_mut() {
                    cv.add(j, u, coeff, eta)?;
                }
                Ok(())
            },
        )?;
        let f_gauss = final_value(&u)?;
        let y_gauss = f_gauss - cv.map_or(0.0, |c| c.total);
        Ok([f_spde, y_spde, f_gauss, y_gauss])
    });
    let samples: Vec<[f64; 4]> = samples.into_iter().collect::<Result<_>>()?;
    let column = |c: usize| mean_and_se(&samples.iter().map(|s| s[c]).collect::<Vec<_>>());
    let (spde_plain_mean, spde_plain_se) = column(0);
    let (spde_mc_mean, spde_mc_se) = column(1);
    let (gaussian_plain_mean, gaussian_plain_se) = column(2);
    let (gaussian_mc_mean, gaussian_mc_se) = column(3);
    Ok(WeakErrorRow {
        n_particles,
        delta: params.delta,
        cutoff: params.cutoff,
        dt: r.dt,
        steps: r.steps,
        ic_n: r.ic_n,
        solver_n: r.solver_n,
        paths,
        duality_value: setup.duality_value,
        heat_value: setup.heat_value,
        spde_mc_mean,
        spde_mc_se,
        gaussian_mc_mean,
        gaussian_mc_se,
        spde_plain_mean,
        spde_plain_se,
        gaussian_plain_mean,
        gaussian_plain_se,
        abs_error_spde: (spde_mc_mean - setup.duality_value).abs(),
        abs_error_gaussian: (gaussian_mc_mean - setup.duality_value).abs(),
        abs_error_heat: (setup.heat_value - setup.duality_value).abs(),
    })
}

fn fit(rows: &[&WeakErrorRow], err: impl Fn(&WeakErrorRow) -> f64) -> Option<SlopeFit> {
    if rows.len() < 2 {
        return None;
    }
    let x: Vec<f64> = rows.iter().map(|r| r.n_particles as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| err(r)).collect();
    loglog_slope(&x, &y, 0.95).ok()
}

/// Runs every row of `cfg.n_list`; row failures are recorded, not propagated.
pub fn run_weak_error(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, &n) in cfg.n_list.iter().enumerate() {
        match weak_error_row(cfg, i, n, cfg.mc_paths) {
            Ok(r) => rows.push(r),
            Err(e) => failures.push(RowFailure { n_particles: n, message: e.to_string(), exit_code: e.exit_code() }),
        }
    }
    let spde: Vec<&WeakErrorRow> = rows.iter().filter(|r| r.spde_resolved()).collect();
    let gauss: Vec<&WeakErrorRow> = rows.iter().filter(|r| r.gaussian_resolved()).collect();
    let heat: Vec<&WeakErrorRow> = rows.iter().filter(|r| r.abs_error_heat > 0.0).collect();
    Ok(ErrorReport {
        slope_spde: fit(&spde, |r| r.abs_error_spde),
        slope_gaussian: fit(&gauss, |r| r.abs_error_gaussian),
        slope_heat: fit(&heat, |r| r.abs_error_heat),
        rows,
        failures,
        master_seed: cfg.master_seed,
    })
}

impl ErrorReport {
    /// Most severe exit code among failed rows (0 if none failed).
    pub fn exit_code(&self) -> i32 {
        self.failures.iter().map(|f| f.exit_code).max().unwrap_or(0)
    }
}
