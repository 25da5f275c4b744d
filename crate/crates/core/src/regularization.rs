//! C¹ Lipschitz regularization of the signed square root and the coercivity
//! (stochastic parabolicity) gate on `(N, δ, M, d, C)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Explicit constants in the bounds satisfied by a regularizer `f_δ`:
///
/// * `|f'(x)| <= lip / √δ` for all x,
/// * `|f'(x)| <= dec / √x` for x > 0,
/// * `|f(x)| <= growth · √|x|`,
/// * `|f(x)² - x| <= sq · δ` for x >= 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub lip: f64,
    pub dec: f64,
    pub growth: f64,
    pub sq: f64,
}

/// A C¹ odd approximation of `sign(x)√|x|` that is linear near zero.
pub trait Regularizer: Send + Sync {
    fn delta(&self) -> f64;
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn constants(&self) -> BoundConstants;

    /// The growth constant `C` in `‖f'‖²_∞ <= C / δ`.
    fn c_growth(&self) -> f64 {
        let lip = self.constants().lip;
        lip * lip
    }
}

/// Bound constants of [`RegSqrt`].
///
/// `lip` is the maximum of `-6y² + 8y - 3/2` over `y ∈ [1/2, 1]` (attained at
/// `y = 2/3`); `dec` is the maximum of `(-6y² + 8y - 3/2)√y`, attained at the
/// root `y = (24 + √396)/60` of `30y² - 24y + 3/2`; `growth` is attained at
/// `x = δ`; `sq` at `x = δ/2`.
pub const CUBIC_CONSTANTS: BoundConstants =
    BoundConstants { lip: 7.0 / 6.0, dec: 0.976_253_928_011_526, growth: 1.0, sq: 0.25 };

/// Square-root regularization: `x/√δ` on `|x| <= δ/2`, the cubic
/// `-2√δ x³/δ³ + sign(x)·4x²/(δ√δ) - 3x/(2√δ) + sign(x)·√δ/2` on
/// `δ/2 <= |x| <= δ`, and `sign(x)√|x|` beyond.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegSqrt {
    delta: f64,
    sqrt_delta: f64,
}

impl RegSqrt {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("regularization threshold {delta} must be > 0")));
        }
        Ok(Self { delta, sqrt_delta: delta.sqrt() })
    }
}

impl Regularizer for RegSqrt {
    fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    fn value(&self, x: f64) -> f64 {
        let a = x.abs();
        let d = self.delta;
        if a <= 0.5 * d {
            x / self.sqrt_delta
        } else if a <= d {
            // odd extension of the cubic written in y = |x|/δ
            let y = a / d;
            let v = self.sqrt_delta * (((-2.0 * y + 4.0) * y - 1.5) * y + 0.5);
            v.copysign(x)
        } else {
            a.sqrt().copysign(x)
        }
    }

    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        let a = x.abs();
        let d = self.delta;
        if a <= 0.5 * d {
            1.0 / self.sqrt_delta
        } else if a <= d {
            let y = a / d;
            ((-6.0 * y + 8.0) * y - 1.5) / self.sqrt_delta
        } else {
            0.5 / a.sqrt()
        }
    }

    fn constants(&self) -> BoundConstants {
        CUBIC_CONSTANTS
    }
}

/// Resolved regularization parameters for a particle count `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub n_particles: usize,
    pub delta: f64,
    pub cutoff: usize,
    pub dim: usize,
    pub c_growth: f64,
    /// Coercivity ratio `C (2M+1)^d / (N δ)`.
    pub ratio: f64,
    /// Entropy-estimate margin `¼(1 - ratio)`.
    pub lambda: f64,
    /// Energy-estimate margin `1 - ratio`.
    pub energy_margin: f64,
}

impl RegParams {
    /// Number of retained noise modes `(2M+1)^d`.
    pub fn mode_count(&self) -> usize {
        (2 * self.cutoff + 1).pow(self.dim as u32)
    }

    /// `Σ_{|k|_∞ <= M} |2πk|²`, the gradient summability constant of the noise.
    pub fn noise_gradient_sum(&self) -> f64 {
        let m = self.cutoff as i64;
        let per_axis: f64 = (-m..=m).map(|k| (k * k) as f64).sum();
        let side = (2 * m + 1) as f64;
        4.0 * std::f64::consts::PI.powi(2) * per_axis * side.powi(self.dim as i32 - 1) * self.dim as f64
    }
}

/// Coercivity ratio `C (2M+1)^d / (N δ)`.
pub fn coercivity_ratio(n_particles: usize, delta: f64, cutoff: usize, dim: usize, c_growth: f64) -> f64 {
    c_growth * ((2 * cutoff + 1) as f64).powi(dim as i32) / (n_particles as f64 * delta)
}

/// Accepts a configuration iff its coercivity ratio is below one.
pub fn check_coercivity(n_particles: usize, delta: f64, cutoff: usize, dim: usize, c_growth: f64) -> Result<RegParams> {
    if n_particles == 0 || cutoff == 0 || dim == 0 {
        return Err(Error::Domain("N, M and d must be positive".into()));
    }
    if !(delta > 0.0 && c_growth > 0.0) || !delta.is_finite() || !c_growth.is_finite() {
        return Err(Error::Domain(format!("delta {delta} and C {c_growth} must be positive")));
    }
    let ratio = coercivity_ratio(n_particles, delta, cutoff, dim, c_growth);
    if ratio >= 1.0 {
        return Err(Error::CoercivityViolation { ratio });
    }
    Ok(RegParams {
        n_particles,
        delta,
        cutoff,
        dim,
        c_growth,
        ratio,
        lambda: 0.25 * (1.0 - ratio),
        energy_margin: 1.0 - ratio,
    })
}

/// Exponent `-1/(d/2 + 1)` of the threshold scaling `δ_N ≃ N^{-1/(d/2+1)}`.
pub fn delta_exponent(dim: usize) -> f64 {
    -1.0 / (dim as f64 / 2.0 + 1.0)
}

/// `δ_N = c·N^{-1/(d/2+1)}` and `M_N = ⌈δ_N^{-1/2}⌉` with `c` the smallest power
/// of two whose coercivity ratio is at most `safety`, using the growth constant
/// of [`RegSqrt`].
pub fn select_parameters(n_particles: usize, dim: usize, safety: f64) -> Result<RegParams> {
    select_parameters_with(n_particles, dim, safety, CUBIC_CONSTANTS.lip.powi(2))
}

pub fn select_parameters_with(n_particles: usize, dim: usize, safety: f64, c_growth: f64) -> Result<RegParams> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::Domain(format!("safety {safety} must lie in (0, 1)")));
    }
    if n_particles == 0 || dim == 0 {
        return Err(Error::Domain("N and d must be positive".into()));
    }
    let base = (n_particles as f64).powf(delta_exponent(dim));
    let candidate = |j: i32| {
        let delta = base * 2f64.powi(j);
        let cutoff = (delta.powf(-0.5).ceil() as usize).max(1);
        (delta, cutoff, coercivity_ratio(n_particles, delta, cutoff, dim, c_growth))
    };
    let passes = |j: i32| candidate(j).2 <= safety;
    let mut j = 0;
    if passes(j) {
        while j > -60 && passes(j - 1) {
            j -= 1;
        }
    } else {
        while !passes(j) {
            j += 1;
            if j > 200 {
                return Err(Error::Domain("no admissible threshold multiplier".into()));
            }
        }
    }
    let (delta, cutoff, _) = candidate(j);
    check_coercivity(n_particles, delta, cutoff, dim, c_growth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn branch_values() {
        for delta in [1e-4, 1e-2, 0.5] {
            let f = RegSqrt::new(delta).unwrap();
            let s = delta.sqrt();
            assert_abs_diff_eq!(f.value(delta), s, epsilon = 1e-15);
            assert_abs_diff_eq!(f.value(delta / 2.0), s / 2.0, epsilon = 1e-15);
            assert_abs_diff_eq!(f.value(4.0 * delta), 2.0 * s, epsilon = 1e-15);
            assert_eq!(f.value(0.0), 0.0);
            assert_abs_diff_eq!(f.derivative(0.0), 1.0 / s, epsilon = 1e-12 / s);
            assert_abs_diff_eq!(f.derivative(4.0 * delta), 1.0 / (4.0 * s), epsilon = 1e-12 / s);
        }
        assert!(RegSqrt::new(0.0).is_err());
        assert!(RegSqrt::new(f64::NAN).is_err());
    }

    #[test]
    fn cubic_matches_outer_branch_at_delta() {
        // -2√δ + 4√δ - (3/2)√δ + √δ/2 = √δ and (-6 + 8 - 3/2)/√δ = 1/(2√δ)
        let delta: f64 = 0.01;
        let s = delta.sqrt();
        let cubic = |x: f64| -2.0 * s / delta.powi(3) * x.powi(3) + 4.0 / (delta * s) * x * x - 1.5 / s * x + s / 2.0;
        let cubic_prime = |x: f64| -6.0 * s / delta.powi(3) * x * x + 8.0 / (delta * s) * x - 1.5 / s;
        assert_abs_diff_eq!(cubic(delta), s, epsilon = 1e-15);
        assert_abs_diff_eq!(cubic_prime(delta), 1.0 / (2.0 * s), epsilon = 1e-12);
        let f = RegSqrt::new(delta).unwrap();
        for x in [0.55 * delta, 0.7 * delta, 0.93 * delta] {
            assert_abs_diff_eq!(f.value(x), cubic(x), epsilon = 1e-15);
            assert_abs_diff_eq!(f.value(-x), -cubic(x), epsilon = 1e-15);
            assert_abs_diff_eq!(f.derivative(x), cubic_prime(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_matches_centered_differences() {
        let f = RegSqrt::new(0.1).unwrap();
        for x in [-3.0, -0.08, -0.02, 0.01, 0.061, 0.07, 0.09, 0.5, 2.0] {
            let h = 1e-6;
            let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, f.derivative(x), epsilon = 1e-6);
        }
    }

    #[test]
    fn coercivity_examples() {
        let p = check_coercivity(100, 0.5, 2, 1, 1.0).unwrap();
        assert_abs_diff_eq!(p.ratio, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(p.lambda, 0.225, epsilon = 1e-15);
        assert_abs_diff_eq!(p.energy_margin, 0.9, epsilon = 1e-15);
        match check_coercivity(100, 0.01, 10, 1, 1.0) {
            Err(Error::CoercivityViolation { ratio }) => assert_abs_diff_eq!(ratio, 21.0, epsilon = 1e-12),
            other => panic!("expected violation, got {other:?}"),
        }
        assert!(matches!(check_coercivity(0, 0.5, 2, 1, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn unscaled_threshold_violates_coercivity() {
        // δ = N^{-2/3}, M = ⌈δ^{-1/2}⌉, C = 1 gives a ratio near 2 in d = 1
        for n in [1_000usize, 100_000, 10_000_000] {
            let delta = (n as f64).powf(-2.0 / 3.0);
            let m = delta.powf(-0.5).ceil() as usize;
            let r = coercivity_ratio(n, delta, m, 1, 1.0);
            assert!(r > 1.9 && r < 2.4, "N={n}: r={r}");
            assert!(check_coercivity(n, delta, m, 1, 1.0).is_err());
        }
    }

    #[test]
    fn selected_parameters_pass_and_scale() {
        for dim in [1, 2] {
            for n in [10usize, 64, 100, 1000, 4096, 100_000] {
                let p = select_parameters(n, dim, 0.5).unwrap();
                assert!(p.ratio <= 0.5);
                assert!(check_coercivity(n, p.delta, p.cutoff, dim, p.c_growth).is_ok());
                assert_eq!(p.cutoff, p.delta.powf(-0.5).ceil() as usize);
            }
        }
        // asymptotic exponent: -2/3 in d = 1, -1/2 in d = 2
        for (dim, expected) in [(1usize, -2.0 / 3.0), (2, -0.5)] {
            let n = 1usize << 40;
            let a = select_parameters(n, dim, 0.5).unwrap();
            let b = select_parameters(4 * n, dim, 0.5).unwrap();
            let ratio = b.delta / a.delta;
            assert_abs_diff_eq!(ratio, 4f64.powf(expected), epsilon = 1e-12);
        }
        assert!(select_parameters(10, 1, 1.0).is_err());
    }

    #[test]
    fn selection_is_deterministic() {
        assert_eq!(select_parameters(777, 1, 0.3).unwrap(), select_parameters(777, 1, 0.3).unwrap());
    }

    #[test]
    fn noise_gradient_sum_matches_direct_enumeration() {
        let p = check_coercivity(10_000, 0.5, 3, 2, 1.0).unwrap();
        let mut direct = 0.0;
        for k0 in -3i64..=3 {
            for k1 in -3i64..=3 {
                direct += 4.0 * std::f64::consts::PI.powi(2) * (k0 * k0 + k1 * k1) as f64;
            }
        }
        assert_abs_diff_eq!(p.noise_gradient_sum(), direct, epsilon = 1e-9);
    }
}
