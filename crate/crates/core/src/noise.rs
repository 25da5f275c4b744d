//! Fourier-truncated space-time noise `W(x) = Σ_{|k|_∞ <= M} e_k(x) B^k` with
//! complex d-dimensional Brownian motions subject to `B^{-k} = conj(B^k)`, and
//! the conservative noise term `∇·(b(u) dW)` it drives.
//!
//! Variance convention: on the representative half of the box (first non-zero
//! component of `k` positive) the real and imaginary parts of every component
//! of `ΔB^k` are independent `Normal(0, dt/2)`; `ΔB^0` is real `Normal(0, dt)`.
//! With this choice `Var Σ_k c_k·ΔB^k = dt Σ_k |c_k|²` for every conjugate
//! symmetric coefficient family `c_{-k} = conj(c_k)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::regularization::{RegParams, Regularizer};
use crate::torus::{forward, GridField, GridSpec};

/// One Euler step of the truncated noise: `ΔB^k ∈ ℂ^d` for `k ∈ {-M..M}^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    dim: usize,
    cutoff: usize,
    dt: f64,
    /// Box-major storage: entry `(box_index(k)) * dim + i` holds component `i`.
    incs: Vec<Complex64>,
}

/// True for `k = 0` and for the half-lattice representative of each pair `±k`.
pub fn is_representative(k: &[i64]) -> bool {
    match k.iter().find(|&&c| c != 0) {
        None => true,
        Some(&c) => c > 0,
    }
}

impl NoiseIncrement {
    pub fn zero(dim: usize, cutoff: usize, dt: f64) -> Self {
        let side = 2 * cutoff + 1;
        Self { dim, cutoff, dt, incs: vec![Complex64::new(0.0, 0.0); side.pow(dim as u32) * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    fn box_index(&self, k: &[i64]) -> usize {
        let m = self.cutoff as i64;
        k[..self.dim].iter().fold(0usize, |acc, &ki| acc * self.side() + (ki + m) as usize)
    }

    /// Wavenumbers of the box in lexicographic order (second entry zero in 1d).
    pub fn modes(&self) -> impl Iterator<Item = [i64; 2]> + '_ {
        let m = self.cutoff as i64;
        let side = self.side();
        (0..side.pow(self.dim as u32)).map(move |b| match self.dim {
            1 => [b as i64 - m, 0],
            _ => [(b / side) as i64 - m, (b % side) as i64 - m],
        })
    }

    /// `ΔB^k`, a slice of `dim` complex components.
    pub fn get(&self, k: &[i64]) -> &[Complex64] {
        let b = self.box_index(k);
        &self.incs[b * self.dim..(b + 1) * self.dim]
    }

    fn set_pair(&mut self, k: &[i64], value: &[Complex64]) {
        let neg: Vec<i64> = k.iter().map(|c| -c).collect();
        let b = self.box_index(k);
        let nb = self.box_index(&neg);
        for (i, v) in value.iter().enumerate().take(self.dim) {
            self.incs[b * self.dim + i] = *v;
            self.incs[nb * self.dim + i] = v.conj();
        }
    }

    /// Real grid fields `ΔW_i(x) = Σ_k e_k(x) ΔB^{k,i}`, one per axis.
    pub fn fields(&self, spec: GridSpec) -> Result<Vec<GridField>> {
        if spec.dim() != self.dim {
            return Err(Error::Shape(format!("{}-d noise on a {}-d grid", self.dim, spec.dim())));
        }
        if !spec.resolves_cutoff(self.cutoff) {
            return Err(Error::Resolution(format!(
                "grid n = {} cannot hold noise modes up to M = {}",
                spec.n(),
                self.cutoff
            )));
        }
        (0..self.dim)
            .map(|i| {
                let mut coeffs = vec![Complex64::new(0.0, 0.0); spec.len()];
                for k in self.modes() {
                    let idx = spec.spectral_index(&k).expect("box resolved by grid");
                    coeffs[idx] = self.get(&k)[i];
                }
                GridField::from_spectrum(spec, coeffs)
            })
            .collect()
    }
}

/// Draws one increment; mirrored modes are derived, never drawn.
pub fn sample_increment<R: Rng + ?Sized>(dim: usize, cutoff: usize, dt: f64, rng: &mut R) -> Result<NoiseIncrement> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("noise step {dt} must be >= 0")));
    }
    if dim == 0 || dim > crate::torus::MAX_DIM {
        return Err(Error::Domain(format!("dimension {dim} not supported")));
    }
    let mut inc = NoiseIncrement::zero(dim, cutoff, dt);
    if dt == 0.0 {
        return Ok(inc);
    }
    let full = dt.sqrt();
    let half = (0.5 * dt).sqrt();
    let modes: Vec<[i64; 2]> = inc.modes().collect();
    let mut value = [Complex64::new(0.0, 0.0); 2];
    for k in modes {
        let k = &k[..dim];
        if !is_representative(k) {
            continue;
        }
        let zero = k.iter().all(|&c| c == 0);
        for v in value.iter_mut().take(dim) {
            *v = if zero {
                let z: f64 = StandardNormal.sample(rng);
                Complex64::new(full * z, 0.0)
            } else {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(half * re, half * im)
            };
        }
        inc.set_pair(k, &value[..dim]);
    }
    Ok(inc)
}

/// `scale · ∇·(coeff · ΔW)` truncated to the grid's dealiasing band.
pub fn divergence_noise(coeff: &GridField, inc: &NoiseIncrement, scale: f64) -> Result<GridField> {
    let spec = coeff.spec();
    let fields = inc.fields(spec)?;
    let band = spec.band();
    let mut acc = vec![Complex64::new(0.0, 0.0); spec.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); spec.len()];
    for (axis, dw) in fields.iter().enumerate() {
        for ((b, c), w) in buf.iter_mut().zip(coeff.values()).zip(dw.values()) {
            *b = Complex64::new(c * w, 0.0);
        }
        forward(spec, &mut buf);
        for (idx, (a, p)) in acc.iter_mut().zip(&buf).enumerate() {
            if spec.in_band(idx, band) {
                let k = spec.mode(idx)[axis] as f64;
                *a += Complex64::new(0.0, 2.0 * PI * k * scale) * p;
            }
        }
    }
    GridField::from_spectrum(spec, acc)
}

/// The noise term `(1/√N) Σ_{|k|<=M} ∇·(f(u) e_k) · ΔB^k` of one step.
pub fn noise_term<R: Regularizer + ?Sized>(
    u: &GridField,
    reg: &R,
    params: &RegParams,
    inc: &NoiseIncrement,
) -> Result<GridField> {
    if inc.cutoff() != params.cutoff {
        return Err(Error::Config(format!(
            "increment cutoff {} differs from parameter cutoff {}",
            inc.cutoff(),
            params.cutoff
        )));
    }
    if u.spec().dim() != params.dim {
        return Err(Error::Shape(format!("{}-d field with {}-d parameters", u.spec().dim(), params.dim)));
    }
    let coeff = u.map(|x| reg.value(x));
    divergence_noise(&coeff, inc, 1.0 / (params.n_particles as f64).sqrt())
}

/// Fourier coefficients `ĝ_i(k)`, `k ∈ {-M..M}^d`, of `g_i = coeff · ∂_i w`.
fn projected_coefficients(
    coeff: &GridField,
    grad_w: &[GridField],
    cutoff: usize,
) -> Result<Vec<Vec<(usize, Complex64)>>> {
    let spec = coeff.spec();
    let probe = NoiseIncrement::zero(spec.dim(), cutoff, 0.0);
    grad_w
        .iter()
        .map(|gw| {
            let g = coeff.zip_with(gw, |a, b| a * b)?;
            let coeffs = g.spectrum();
            Ok(probe
                .modes()
                .map(|k| {
                    let idx = spec.spectral_index(&k).expect("box resolved by grid");
                    (probe.box_index(&k), coeffs[idx])
                })
                .collect())
        })
        .collect()
}

/// `⟨scale·∇·(coeff ΔW), w⟩ = -scale Σ_i Σ_k ĝ_i(-k) ΔB^{k,i}` with
/// `g_i = coeff · ∂_i w`, evaluated from the increment directly.
///
/// `w` must be band limited to the dealiasing band for this to agree with
/// pairing against [`divergence_noise`].
pub fn increment_pairing(coeff: &GridField, grad_w: &[GridField], inc: &NoiseIncrement, scale: f64) -> Result<f64> {
    let dim = inc.dim();
    let per_axis = projected_coefficients(coeff, grad_w, inc.cutoff())?;
    let mut total = 0.0;
    for (axis, coeffs) in per_axis.iter().enumerate() {
        for &(b, g) in coeffs {
            // ĝ(-k) = conj(ĝ(k)) for real g
            total += (g.conj() * inc.incs[b * dim + axis]).re;
        }
    }
    Ok(-scale * total)
}

/// Conditional variance `scale² dt Σ_i Σ_{|k|<=M} |ĝ_i(k)|²` of
/// [`increment_pairing`] given the coefficient field.
pub fn increment_pairing_variance(
    coeff: &GridField,
    grad_w: &[GridField],
    cutoff: usize,
    dt: f64,
    scale: f64,
) -> Result<f64> {
    let per_axis = projected_coefficients(coeff, grad_w, cutoff)?;
    let sum: f64 = per_axis.iter().flatten().map(|(_, g)| g.norm_sqr()).sum();
    Ok(scale * scale * dt * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularization::{check_coercivity, RegSqrt};
    use crate::rng::{path_rng, StreamFamily};
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_step_gives_exact_zeros() {
        let mut rng = path_rng(1, StreamFamily::Spde, 0, 0);
        let inc = sample_increment(2, 3, 0.0, &mut rng).unwrap();
        assert!(inc.incs.iter().all(|c| c.re == 0.0 && c.im == 0.0));
        assert!(sample_increment(1, 3, -1.0, &mut rng).is_err());
    }

    #[test]
    fn mirrored_modes_are_exact_conjugates() {
        let mut rng = path_rng(2, StreamFamily::Spde, 0, 0);
        for dim in [1, 2] {
            let inc = sample_increment(dim, 4, 0.01, &mut rng).unwrap();
            for k in inc.modes() {
                let neg = [-k[0], -k[1]];
                for (a, b) in inc.get(&k).iter().zip(inc.get(&neg)) {
                    assert_eq!(*a, b.conj());
                }
            }
            assert!(inc.get(&[0, 0]).iter().all(|c| c.im == 0.0));
        }
    }

    #[test]
    fn noise_fields_are_real() {
        let mut rng = path_rng(3, StreamFamily::Spde, 0, 0);
        let inc = sample_increment(2, 3, 0.1, &mut rng).unwrap();
        let spec = GridSpec::new(2, 16).unwrap();
        let fields = inc.fields(spec).unwrap();
        assert_eq!(fields.len(), 2);
        assert!(inc.fields(GridSpec::new(2, 8).unwrap()).is_err());
    }

    fn setup() -> (GridSpec, RegSqrt, RegParams) {
        let spec = GridSpec::new(1, 32).unwrap();
        let params = check_coercivity(400, 0.2, 3, 1, 49.0 / 36.0).unwrap();
        (spec, RegSqrt::new(params.delta).unwrap(), params)
    }

    #[test]
    fn zero_density_gives_zero_noise() {
        let (spec, reg, params) = setup();
        let mut rng = path_rng(4, StreamFamily::Spde, 0, 0);
        let inc = sample_increment(1, 3, 1e-3, &mut rng).unwrap();
        let eta = noise_term(&GridField::zeros(spec), &reg, &params, &inc).unwrap();
        assert!(eta.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_term_has_exactly_zero_mass_and_is_linear() {
        let (spec, reg, params) = setup();
        let u = GridField::from_fn(spec, |x| 1.0 + 0.8 * (2.0 * PI * x[0]).cos());
        let mut rng = path_rng(5, StreamFamily::Spde, 0, 0);
        let inc = sample_increment(1, 3, 1e-3, &mut rng).unwrap();
        let eta = noise_term(&u, &reg, &params, &inc).unwrap();
        assert_eq!(eta.mass(), 0.0);

        let mut doubled = inc.clone();
        for c in doubled.incs.iter_mut() {
            *c *= 2.0;
        }
        let eta2 = noise_term(&u, &reg, &params, &doubled).unwrap();
        for (a, b) in eta2.values().iter().zip(eta.values()) {
            assert_abs_diff_eq!(*a, 2.0 * b, epsilon = 1e-13);
        }

        let mut more = params;
        more.n_particles *= 4;
        let eta4 = noise_term(&u, &reg, &more, &inc).unwrap();
        for (a, b) in eta4.values().iter().zip(eta.values()) {
            assert_abs_diff_eq!(*a, 0.5 * b, epsilon = 1e-13);
        }
    }

    #[test]
    fn cutoff_mismatch_is_rejected() {
        let (spec, reg, params) = setup();
        let mut rng = path_rng(6, StreamFamily::Spde, 0, 0);
        let inc = sample_increment(1, 2, 1e-3, &mut rng).unwrap();
        let u = GridField::constant(spec, 1.0);
        assert!(matches!(noise_term(&u, &reg, &params, &inc), Err(Error::Config(_))));
    }

    #[test]
    fn increment_pairing_matches_grid_pairing() {
        let spec = GridSpec::new(2, 32).unwrap();
        let params = check_coercivity(10_000, 0.2, 2, 2, 49.0 / 36.0).unwrap();
        let reg = RegSqrt::new(params.delta).unwrap();
        let u = GridField::from_fn(spec, |x| 1.0 + 0.9 * (2.0 * PI * (x[0] + x[1])).sin());
        let w = GridField::from_fn(spec, |x| (2.0 * PI * x[0]).cos() * (4.0 * PI * x[1]).sin());
        let mut rng = path_rng(7, StreamFamily::Spde, 0, 0);
        let inc = sample_increment(2, 2, 1e-3, &mut rng).unwrap();
        let eta = noise_term(&u, &reg, &params, &inc).unwrap();
        let coeff = u.map(|x| reg.value(x));
        let scale = 1.0 / 100.0;
        let direct = increment_pairing(&coeff, &w.gradient(), &inc, scale).unwrap();
        assert_abs_diff_eq!(direct, eta.pairing(&w).unwrap(), epsilon = 1e-14);
    }
}
