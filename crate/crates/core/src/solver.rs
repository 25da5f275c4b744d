//! Semi-implicit spectral Galerkin integration of
//! `du = ½Δu dt + (1/√N) ∇·(f_δ(u) dW^M)` on the torus.
//!
//! One step is the exponential Euler update
//! `û_{t+dt}(k) = e^{-½|2πk|² dt} [û_t(k) + η̂(k)]`, where `η` is the noise term
//! truncated to the dealiasing band. The zero mode is never touched, so mass is
//! conserved bit for bit.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{noise_term, sample_increment, NoiseIncrement};
use crate::regularization::{RegParams, RegSqrt, Regularizer};
use crate::torus::{GridField, GridSpec};

/// Relative floor for the entropy and Fisher clamps: `u ∨ (1e-12 ‖u‖_∞)`.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Quadrature diagnostics of a density field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mass: f64,
    /// `‖u‖²_{L²}`
    pub energy: f64,
    /// `∫ u log u`, evaluated at the clamped density.
    pub entropy: f64,
    /// `∫ |∇u|² / u`, evaluated at the clamped density.
    pub fisher: f64,
    pub min_value: f64,
    /// `∫ max(-u, 0)`
    pub neg_mass: f64,
}

pub fn diagnostics(u: &GridField) -> Diagnostics {
    let n = u.values().len() as f64;
    let floor = CLAMP_FLOOR * u.sup_norm();
    let floor = if floor > 0.0 { floor } else { f64::MIN_POSITIVE };
    let grad = u.gradient();
    let mut entropy = 0.0;
    let mut fisher = 0.0;
    let mut neg = 0.0;
    for (idx, &v) in u.values().iter().enumerate() {
        let c = v.max(floor);
        entropy += c * c.ln();
        let g2: f64 = grad.iter().map(|g| g.values()[idx].powi(2)).sum();
        fisher += g2 / c;
        neg += (-v).max(0.0);
    }
    Diagnostics {
        mass: u.mass(),
        energy: u.l2_norm_sq(),
        entropy: entropy / n,
        fisher: fisher / n,
        min_value: u.min(),
        neg_mass: neg / n,
    }
}

/// Per-mode multipliers `e^{-½|2πk|² dt}`.
pub fn heat_factors(spec: GridSpec, dt: f64) -> Vec<f64> {
    (0..spec.len()).map(|idx| (-0.5 * spec.laplace_symbol(idx) * dt).exp()).collect()
}

/// `H(dt)·Π(u + η)` and the exact heat dissipation over the step,
/// `∫_0^dt ‖∇H(s)Π(u+η)‖² ds = Σ_k |ẑ(k)|² (1 - e^{-|2πk|² dt})`.
pub(crate) fn exponential_euler(
    u: &GridField,
    eta: Option<&GridField>,
    heat: &[f64],
    step: usize,
) -> Result<(GridField, f64)> {
    let spec = u.spec();
    if let Some(eta) = eta {
        if eta.spec() != spec {
            return Err(Error::Shape(format!("noise on {:?}, state on {:?}", eta.spec(), spec)));
        }
    }
    let band = spec.band();
    let zero = Complex64::new(0.0, 0.0);
    let noise = eta.map(GridField::spectrum);
    let mut dissipation = 0.0;
    let coeffs: Vec<Complex64> = u
        .spectrum()
        .iter()
        .zip(heat)
        .enumerate()
        .map(|(idx, (a, &h))| {
            if spec.in_band(idx, band) {
                let z = a + noise.map_or(zero, |e| e[idx]);
                dissipation += z.norm_sqr() * (1.0 - h * h);
                z * h
            } else {
                zero
            }
        })
        .collect();
    let next = match GridField::from_spectrum(spec, coeffs) {
        Ok(f) => f,
        Err(Error::NonRealResidue { .. }) if !dissipation.is_finite() => return Err(Error::BlowUp { step }),
        Err(e) => return Err(e),
    };
    if !dissipation.is_finite() || next.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { step });
    }
    Ok((next, dissipation))
}

/// State of one SPDE trajectory.
#[derive(Clone, Debug)]
pub struct SolverState<R: Regularizer = RegSqrt> {
    pub t: f64,
    pub u: GridField,
    pub params: RegParams,
    pub reg: R,
    pub dt: f64,
    pub step_count: usize,
    heat: Arc<Vec<f64>>,
}

impl<R: Regularizer + Clone> SolverState<R> {
    pub fn new(u: GridField, params: RegParams, reg: R, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("time step {dt} must be > 0")));
        }
        if params.ratio >= 1.0 {
            return Err(Error::CoercivityViolation { ratio: params.ratio });
        }
        if u.spec().dim() != params.dim {
            return Err(Error::Shape(format!("{}-d field with {}-d parameters", u.spec().dim(), params.dim)));
        }
        if !u.spec().resolves_cutoff(params.cutoff) {
            return Err(Error::Resolution(format!(
                "grid n = {} too coarse for cutoff M = {}",
                u.spec().n(),
                params.cutoff
            )));
        }
        let heat = Arc::new(heat_factors(u.spec(), dt));
        Ok(Self { t: 0.0, u, params, reg, dt, step_count: 0, heat })
    }

    pub fn spec(&self) -> GridSpec {
        self.u.spec()
    }

    /// The noise term of the next step for the given increment.
    pub fn noise(&self, inc: &NoiseIncrement) -> Result<GridField> {
        if (inc.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Config(format!("increment dt {} != solver dt {}", inc.dt(), self.dt)));
        }
        noise_term(&self.u, &self.reg, &self.params, inc)
    }

    /// Advances by one step with a precomputed noise term; also returns the
    /// heat dissipation accumulated over the step.
    pub fn advance(&self, eta: &GridField) -> Result<(Self, f64)> {
        let step = self.step_count + 1;
        let (u, dissipation) = exponential_euler(&self.u, Some(eta), &self.heat, step)?;
        Ok((
            Self {
                t: self.t + self.dt,
                u,
                params: self.params,
                reg: self.reg.clone(),
                dt: self.dt,
                step_count: step,
                heat: Arc::clone(&self.heat),
            },
            dissipation,
        ))
    }

    pub fn step(&self, inc: &NoiseIncrement) -> Result<Self> {
        let eta = self.noise(inc)?;
        Ok(self.advance(&eta)?.0)
    }

    /// The same state spectrally resampled onto another grid.
    pub fn resampled(&self, spec: GridSpec) -> Result<Self> {
        if spec == self.spec() {
            return Ok(self.clone());
        }
        if !spec.resolves_cutoff(self.params.cutoff) {
            return Err(Error::Resolution(format!("grid n = {} too coarse", spec.n())));
        }
        Ok(Self {
            u: self.u.resample(spec)?,
            heat: Arc::new(heat_factors(spec, self.dt)),
            reg: self.reg.clone(),
            ..*self
        })
    }
}

/// Advances two states driven by the same increment (synchronous coupling).
pub fn coupled_pair_step<R: Regularizer + Clone + PartialEq>(
    plus: &SolverState<R>,
    minus: &SolverState<R>,
    inc: &NoiseIncrement,
) -> Result<(SolverState<R>, SolverState<R>)> {
    if plus.params != minus.params || plus.dt != minus.dt || plus.reg != minus.reg {
        return Err(Error::Config("coupled states must share parameters and step".into()));
    }
    if plus.spec() != minus.spec() {
        return Err(Error::Config("coupled states must share the grid".into()));
    }
    Ok((plus.step(inc)?, minus.step(inc)?))
}

/// Number of steps of size `dt` covering `[0, horizon]`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0) || !(dt > 0.0) {
        return Err(Error::Domain(format!("need horizon >= 0 and dt > 0 (got {horizon}, {dt})")));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(Error::Domain(format!("horizon {horizon} is not a multiple of dt {dt}")));
    }
    Ok(steps as usize)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    /// Record diagnostics every this many steps (and always at both ends).
    pub record_every: usize,
    /// Grid to continue on after the first step when the initial field lives on
    /// a finer grid.
    pub solver_grid: Option<GridSpec>,
    /// Accumulate `∫‖∇u‖²` (exact per step) and `∫ fisher` (right endpoint,
    /// so the unresolved initial field never enters).
    pub track_integrals: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { record_every: 1, solver_grid: None, track_integrals: false }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<R: Regularizer = RegSqrt> {
    pub records: Vec<(f64, Diagnostics)>,
    pub final_state: SolverState<R>,
    pub dissipation_integral: f64,
    pub fisher_integral: f64,
}

/// Integrates over `[0, horizon]`; deterministic given the inputs and the rng state.
pub fn integrate<R: Regularizer + Clone, G: Rng + ?Sized>(
    u0: GridField,
    params: RegParams,
    reg: R,
    horizon: f64,
    dt: f64,
    rng: &mut G,
    record_every: usize,
) -> Result<Trajectory<R>> {
    let options = IntegrateOptions { record_every, ..Default::default() };
    integrate_with(u0, params, reg, horizon, dt, rng, options, |_, _, _| Ok(()))
}

/// [`integrate`] with options and an observer called before each step with
/// the current state, the increment and the noise term about to be applied.
#[allow(clippy::too_many_arguments)]
pub fn integrate_with<R, G, F>(
    u0: GridField,
    params: RegParams,
    reg: R,
    horizon: f64,
    dt: f64,
    rng: &mut G,
    options: IntegrateOptions,
    mut observer: F,
) -> Result<Trajectory<R>>
where
    R: Regularizer + Clone,
    G: Rng + ?Sized,
    F: FnMut(&SolverState<R>, &NoiseIncrement, &GridField) -> Result<()>,
{
    let steps = step_count(horizon, dt)?;
    let record_every = options.record_every.max(1);
    let mut state = SolverState::new(u0, params, reg, dt)?;
    let mut records = vec![(0.0, diagnostics(&state.u))];
    let mut dissipation_integral = 0.0;
    let mut fisher_integral = 0.0;
    for j in 0..steps {
        let inc = sample_increment(params.dim, params.cutoff, dt, rng)?;
        let eta = state.noise(&inc)?;
        observer(&state, &inc, &eta)?;
        let (next, dissipation) = state.advance(&eta)?;
        dissipation_integral += dissipation;
        state = next;
        state.t = (j + 1) as f64 * dt;
        if let Some(grid) = options.solver_grid {
            if grid != state.spec() {
                state = state.resampled(grid)?;
            }
        }
        let record = (j + 1) % record_every == 0 || j + 1 == steps;
        if record || options.track_integrals {
            let d = diagnostics(&state.u);
            if options.track_integrals {
                fisher_integral += d.fisher * dt;
            }
            if record {
                records.push((state.t, d));
            }
        }
    }
    Ok(Trajectory { records, final_state: state, dissipation_integral, fisher_integral })
}
