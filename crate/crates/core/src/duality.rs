//! Laplace duality for independent Brownian particles.
//!
//! For `μ^N_t` the empirical measure of `N` independent Brownian motions,
//! `E exp⟨μ^N_t, φ⟩ = exp⟨μ^N_0, v_t⟩` with `v_t = N log(p_t * e^{φ/N})`, the
//! Cole-Hopf solution of `∂_t v = ½Δv + |∇v|²/(2N)`, `v_0 = φ`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::noise::{divergence_noise, sample_increment, NoiseIncrement};
use crate::particles::ParticleEnsemble;
use crate::regularization::RegParams;
use crate::solver::{exponential_euler, heat_factors, step_count, IntegrateOptions};
use crate::torus::{GridField, GridSpec, TorusFunction};

/// Oversampling factor per axis for evaluating `exp(φ/N)` and the logarithm.
pub const HJ_OVERSAMPLING: usize = 4;

#[derive(Clone, Debug)]
pub struct HJSolution {
    pub phi: GridField,
    pub n_particles: usize,
    pub t: f64,
    /// `v_t` at the nodes of the grid of `phi`.
    pub v: GridField,
    /// `p_t * (e^{φ/N} - 1)` on the oversampled grid.
    shifted: GridField,
}

/// Solves the Hamilton-Jacobi equation through the Cole-Hopf closed form.
/// `phi` is taken as the band-limited interpolant of its grid values.
pub fn solve_hj(phi: &GridField, n_particles: usize, t: f64) -> Result<HJSolution> {
    if n_particles == 0 {
        return Err(Error::Domain("N must be positive".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("horizon {t} must be >= 0")));
    }
    let spec = phi.spec();
    let fine = GridSpec::new(spec.dim(), HJ_OVERSAMPLING * spec.n())?;
    let n = n_particles as f64;
    let shifted = phi.resample(fine)?.map(|p| (p / n).exp_m1()).heat_semigroup(t)?;
    if shifted.min() <= -1.0 {
        return Err(Error::Resolution(format!("heat flow of exp(phi/N) reached {} <= 0", 1.0 + shifted.min())));
    }
    let v = if t == 0.0 { phi.clone() } else { shifted.map(|q| n * q.ln_1p()).subsample(spec)? };
    Ok(HJSolution { phi: phi.clone(), n_particles, t, v, shifted })
}

impl HJSolution {
    /// `exp⟨μ^N_0, v_t⟩`, the exact value of `E exp⟨μ^N_t, φ⟩`.
    pub fn expectation(&self, ens: &ParticleEnsemble) -> Result<f64> {
        if ens.len() != self.n_particles {
            return Err(Error::Config(format!(
                "solution built for N = {}, ensemble has {} particles",
                self.n_particles,
                ens.len()
            )));
        }
        Ok(ens.pair_empirical(self).exp())
    }

    /// Spectral estimate of `‖∇v_t‖_∞` on the oversampled grid.
    pub fn gradient_sup(&self) -> f64 {
        let n = self.n_particles as f64;
        let v = self.shifted.map(|q| n * q.ln_1p());
        let grads = v.gradient();
        (0..v.values().len())
            .map(|i| grads.iter().map(|g| g.values()[i].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

impl TorusFunction for HJSolution {
    fn dim(&self) -> usize {
        self.phi.spec().dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        if self.t == 0.0 {
            return self.phi.eval_at(x);
        }
        self.n_particles as f64 * self.shifted.eval_at(x).ln_1p()
    }
}

/// `E exp⟨μ^N_t, φ⟩` for particles started at `ens`.
pub fn duality_expectation(ens: &ParticleEnsemble, phi: &GridField, t: f64) -> Result<f64> {
    solve_hj(phi, ens.len(), t)?.expectation(ens)
}

/// `exp⟨μ^N_0, p_t φ⟩`: the law-of-large-numbers prediction that ignores
/// fluctuations.
pub fn heat_prediction(ens: &ParticleEnsemble, phi: &GridField, t: f64) -> Result<f64> {
    Ok(ens.pair_empirical(&phi.heat_semigroup(t)?).exp())
}

/// One path of `ρ_T + N^{-1/2} ρ̂_T` with `ρ` the heat flow of `mu0` and
/// `dρ̂ = ½Δρ̂ dt + ∇·(√(ρ∨0) dW^M)`, `ρ̂_0 = 0`.
pub fn gaussian_baseline<G: Rng + ?Sized>(
    mu0: &GridField,
    params: &RegParams,
    horizon: f64,
    dt: f64,
    rng: &mut G,
) -> Result<GridField> {
    gaussian_baseline_with(mu0, params, horizon, dt, rng, IntegrateOptions::default(), |_, _, _, _| Ok(()))
}

/// [`gaussian_baseline`] with a grid switch after the first step and an
/// observer called before each step with `(step, u, √(ρ∨0), noise term)`.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_baseline_with<G, F>(
    mu0: &GridField,
    params: &RegParams,
    horizon: f64,
    dt: f64,
    rng: &mut G,
    options: IntegrateOptions,
    mut observer: F,
) -> Result<GridField>
where
    G: Rng + ?Sized,
    F: FnMut(usize, &GridField, &GridField, &GridField) -> Result<()>,
{
    let steps = step_count(horizon, dt)?;
    if mu0.spec().dim() != params.dim {
        return Err(Error::Shape(format!("{}-d field with {}-d parameters", mu0.spec().dim(), params.dim)));
    }
    if !mu0.spec().resolves_cutoff(params.cutoff) {
        return Err(Error::Resolution(format!("grid n = {} too coarse for M = {}", mu0.spec().n(), params.cutoff)));
    }
    let scale = 1.0 / (params.n_particles as f64).sqrt();
    let mut heat = heat_factors(mu0.spec(), dt);
    let mut rho = mu0.clone();
    let mut u = mu0.clone();
    for j in 0..steps {
        let inc: NoiseIncrement = sample_increment(params.dim, params.cutoff, dt, rng)?;
        let coeff = rho.map(|r| r.max(0.0).sqrt());
        let eta = divergence_noise(&coeff, &inc, scale)?;
        observer(j, &u, &coeff, &eta)?;
        u = exponential_euler(&u, Some(&eta), &heat, j + 1)?.0;
        rho = exponential_euler(&rho, None, &heat, j + 1)?.0;
        if let Some(grid) = options.solver_grid {
            if grid != u.spec() {
                u = u.resample(grid)?;
                rho = rho.resample(grid)?;
                heat = heat_factors(grid, dt);
            }
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularization::check_coercivity;
    use crate::rng::{path_rng, StreamFamily};
    use crate::test_function::TestFunction;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cos1(n: usize) -> GridField {
        TestFunction::cos(&[1]).on_grid(GridSpec::new(1, n).unwrap()).unwrap()
    }

    #[test]
    fn constants_are_fixed_points() {
        let phi = GridField::constant(GridSpec::new(2, 16).unwrap(), 0.7);
        for n in [1, 10, 1000] {
            let sol = solve_hj(&phi, n, 0.3).unwrap();
            for v in sol.v.values() {
                assert_abs_diff_eq!(*v, 0.7, epsilon = 1e-13);
            }
        }
        let ens = ParticleEnsemble::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_abs_diff_eq!(duality_expectation(&ens, &phi, 0.5).unwrap(), 0.7f64.exp(), epsilon = 1e-13);
        let zero = GridField::zeros(GridSpec::new(2, 16).unwrap());
        assert_eq!(duality_expectation(&ens, &zero, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn zero_horizon_returns_phi() {
        let phi = cos1(16);
        let sol = solve_hj(&phi, 7, 0.0).unwrap();
        assert_eq!(sol.v.values(), phi.values());
    }

    #[test]
    fn large_n_linearizes_to_heat_flow() {
        // v_t = p_t φ + O(1/N)
        let phi = cos1(32)
            .zip_with(&TestFunction::sin(&[2]).on_grid(GridSpec::new(1, 32).unwrap()).unwrap(), |a, b| a + b)
            .unwrap();
        let heat = phi.heat_semigroup(0.05).unwrap();
        for n in [1_000usize, 1_000_000] {
            let sol = solve_hj(&phi, n, 0.05).unwrap();
            let diff = sol.v.values().iter().zip(heat.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 10.0 / n as f64, "N = {n}: {diff}");
            assert!(diff > 0.01 / n as f64);
        }
    }

    #[test]
    fn single_particle_duality_is_closed_form() {
        // N = 1: E exp φ(X_t) = Σ_k e^{-2π²k²t} ĉ_k e^{2πikx} with ĉ_k = I_k(1)
        let ens = ParticleEnsemble::new(1, vec![0.3]).unwrap();
        let t = 0.02;
        let phi = cos1(64);
        let exact: f64 = (-30i32..=30)
            .map(|k| {
                let ik = bessel_i(k.unsigned_abs(), 1.0);
                ik * (-2.0 * PI * PI * (k * k) as f64 * t).exp() * (2.0 * PI * k as f64 * 0.3).cos()
            })
            .sum();
        assert_abs_diff_eq!(duality_expectation(&ens, &phi, t).unwrap(), exact, epsilon = 1e-12);
    }

    fn bessel_i(k: u32, x: f64) -> f64 {
        (0..40).map(|m| (x / 2.0).powi((2 * m + k) as i32) / (factorial(m) * factorial(m + k))).sum()
    }

    fn factorial(m: u32) -> f64 {
        (1..=m).map(f64::from).product()
    }

    #[test]
    fn matches_direct_integration_of_the_hj_equation() {
        // integrating-factor RK2 on ∂_t v = ½Δv + |∇v|²/(2N)
        let n = 3usize;
        let spec = GridSpec::new(1, 64).unwrap();
        let phi = TestFunction::cos(&[1]).plus(TestFunction::sin(&[2]).scaled(0.5)).unwrap().on_grid(spec).unwrap();
        let t = 0.1;
        let steps = 4000;
        let dt = t / steps as f64;
        let nonlinear = |v: &GridField| {
            let g = v.gradient();
            g[0].map(|x| x * x / (2.0 * n as f64))
        };
        let mut v = phi.clone();
        for _ in 0..steps {
            let k1 = nonlinear(&v);
            let pred = v.zip_with(&k1, |a, b| a + dt * b).unwrap().heat_semigroup(dt).unwrap();
            let k2 = nonlinear(&pred);
            let half = v.zip_with(&k1, |a, b| a + 0.5 * dt * b).unwrap().heat_semigroup(dt).unwrap();
            v = half.zip_with(&k2, |a, b| a + 0.5 * dt * b).unwrap();
        }
        let sol = solve_hj(&phi, n, t).unwrap();
        for (a, b) in v.values().iter().zip(sol.v.values()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
        }
    }

    #[test]
    fn expectation_checks_particle_count() {
        let sol = solve_hj(&cos1(16), 5, 0.1).unwrap();
        let ens = ParticleEnsemble::new(1, vec![0.0; 4]).unwrap();
        assert!(sol.expectation(&ens).is_err());
    }

    #[test]
    fn baseline_without_noise_is_heat_flow() {
        let spec = GridSpec::new(1, 32).unwrap();
        let params = check_coercivity(100, 0.5, 2, 1, 1.0).unwrap();
        let mu0 = GridField::from_fn(spec, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
        let mut calls = 0;
        let mut rng = path_rng(4, StreamFamily::Baseline, 0, 0);
        let dt = 1e-3;
        let with_noise =
            gaussian_baseline_with(&mu0, &params, 0.01, dt, &mut rng, IntegrateOptions::default(), |_, _, coeff, _| {
                calls += 1;
                assert!(coeff.min() >= 0.0);
                Ok(())
            })
            .unwrap();
        assert_eq!(calls, 10);
        assert_abs_diff_eq!(with_noise.mass(), 1.0, epsilon = 1e-14);
        // N = 10^18 scales the fluctuation down to ~1e-10
        let heat = mu0.heat_semigroup(0.01).unwrap();
        let quiet_params = check_coercivity(1_000_000_000_000_000_000, 0.5, 2, 1, 1.0).unwrap();
        let quiet = gaussian_baseline(&mu0, &quiet_params, 0.01, dt, &mut rng).unwrap();
        for (a, b) in quiet.values().iter().zip(heat.values()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
        }
    }
}
