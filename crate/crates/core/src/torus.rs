//! Real fields on the uniform periodic grid of the unit torus in one or two
//! dimensions, with a paired Fourier representation.
//!
//! Fourier coefficients follow `f̂(k) = ∫ f(x) e^{-2πik·x} dx`, computed by the
//! rectangle rule, so `f(x_j) = Σ_k f̂(k) e^{2πik·x_j}` at the grid points.
//! Spectra are stored in FFT order: array index `j` holds wavenumber `j` for
//! `j < n/2` and `j - n` otherwise.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

/// Uniform lattice `{j/n : 0 <= j < n}^d` on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Domain(format!("dimension {dim} not supported (1 or 2)")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Domain(format!("grid size {n} must be a power of two >= 2")));
        }
        Ok(Self { dim, n })
    }

    /// Smallest power-of-two grid with `n >= 4M + 4`, enough to hold products of
    /// two fields whose modes lie in the cutoff box after one truncation.
    pub fn for_cutoff(dim: usize, cutoff: usize) -> Result<Self> {
        Self::new(dim, (4 * cutoff + 4).next_power_of_two())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of grid points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest per-axis wavenumber kept by the 2/3 dealiasing rule.
    pub fn band(&self) -> usize {
        (self.n - 1) / 3
    }

    /// True when the noise box `{-M..M}^d` is represented without aliasing.
    pub fn resolves_cutoff(&self, cutoff: usize) -> bool {
        self.n >= 2 * (2 * cutoff + 1)
    }

    /// Signed wavenumber stored at FFT index `j` along one axis.
    #[inline]
    pub fn wavenumber(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Wavenumber vector of the flattened index (second entry is zero in 1d).
    #[inline]
    pub fn mode(&self, idx: usize) -> [i64; 2] {
        match self.dim {
            1 => [self.wavenumber(idx), 0],
            _ => [self.wavenumber(idx / self.n), self.wavenumber(idx % self.n)],
        }
    }

    /// Coordinates of the flattened grid point (second entry is zero in 1d).
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let h = 1.0 / self.n as f64;
        match self.dim {
            1 => [idx as f64 * h, 0.0],
            _ => [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h],
        }
    }

    /// Flattened spectral index of wavenumber `k`, if `|k_i| < n/2` on every axis.
    pub fn spectral_index(&self, k: &[i64]) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let mut idx = 0usize;
        for &ki in &k[..self.dim] {
            if ki.abs() >= half {
                return None;
            }
            idx = idx * self.n + ki.rem_euclid(self.n as i64) as usize;
        }
        Some(idx)
    }

    /// `|2πk|²` for the flattened spectral index.
    #[inline]
    pub fn laplace_symbol(&self, idx: usize) -> f64 {
        let k = self.mode(idx);
        4.0 * PI * PI * ((k[0] * k[0] + k[1] * k[1]) as f64)
    }

    /// True when every component of the mode at `idx` is at most `kmax` in modulus
    /// and not the Nyquist wavenumber.
    #[inline]
    pub fn in_band(&self, idx: usize, kmax: usize) -> bool {
        let k = self.mode(idx);
        let half = (self.n / 2) as i64;
        k[..self.dim].iter().all(|&ki| ki.unsigned_abs() as usize <= kmax && ki != -half)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

fn fft_rows(data: &mut [Complex64], n: usize, direction: FftDirection) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction));
    SCRATCH.with(|s| {
        let mut scratch = s.borrow_mut();
        let need = fft.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        fft.process_with_scratch(data, &mut scratch[..need]);
    });
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn fft_nd(spec: GridSpec, data: &mut [Complex64], direction: FftDirection) {
    debug_assert_eq!(data.len(), spec.len());
    let n = spec.n;
    fft_rows(data, n, direction);
    if spec.dim == 2 {
        transpose(data, n);
        fft_rows(data, n, direction);
        transpose(data, n);
    }
}

/// Grid values to normalized Fourier coefficients.
pub(crate) fn forward(spec: GridSpec, data: &mut [Complex64]) {
    fft_nd(spec, data, FftDirection::Forward);
    let scale = 1.0 / spec.len() as f64;
    for c in data.iter_mut() {
        *c *= scale;
    }
}

/// Fourier coefficients to grid values.
pub(crate) fn inverse(spec: GridSpec, data: &mut [Complex64]) {
    fft_nd(spec, data, FftDirection::Inverse);
}

/// Relative imaginary residue above which a transform back to grid values is rejected.
pub const REALNESS_TOLERANCE: f64 = 1e-8;

/// A real-valued function sampled on a [`GridSpec`], with a lazily computed spectrum.
///
/// Values are immutable after construction; operations return new fields.
#[derive(Clone, Debug)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!("{} values for a grid of {} points", values.len(), spec.len())));
        }
        Ok(Self { spec, values, spectrum: OnceLock::new() })
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Self { spec, values: vec![c; spec.len()], spectrum: OnceLock::new() }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    /// Samples `f` at every grid point; `f` receives `dim` coordinates.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..spec.len()).map(|idx| f(&spec.point(idx)[..spec.dim])).collect();
        Self { spec, values, spectrum: OnceLock::new() }
    }

    /// Builds a field from Fourier coefficients in FFT order.
    ///
    /// Fails with [`Error::NonRealResidue`] when the inverse transform carries an
    /// imaginary part above [`REALNESS_TOLERANCE`] relative to the field scale.
    pub fn from_spectrum(spec: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != spec.len() {
            return Err(Error::Shape(format!("{} coefficients for a grid of {} points", coeffs.len(), spec.len())));
        }
        let mut data = coeffs.clone();
        inverse(spec, &mut data);
        let mut scale = 1.0f64;
        let mut residue = 0.0f64;
        for c in &data {
            scale = scale.max(c.re.abs());
            residue = residue.max(c.im.abs());
        }
        // NaN residues surface as blow-ups in the callers, not as symmetry errors.
        if residue > REALNESS_TOLERANCE * scale {
            return Err(Error::NonRealResidue { residue });
        }
        let values = data.into_iter().map(|c| c.re).collect();
        let spectrum = OnceLock::new();
        let _ = spectrum.set(coeffs);
        Ok(Self { spec, values, spectrum })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Fourier coefficients in FFT order, computed on first use.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            let mut data: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            forward(self.spec, &mut data);
            data
        })
    }

    /// `∫ f`, the zero Fourier mode.
    pub fn mass(&self) -> f64 {
        self.spectrum()[0].re
    }

    /// Rectangle-rule quadrature of `∫ f g` over the torus.
    pub fn pairing(&self, other: &GridField) -> Result<f64> {
        self.check_same_grid(other)?;
        let sum: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(sum / self.spec.len() as f64)
    }

    /// `∫ f²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.spec.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { spec: self.spec, values: self.values.iter().map(|&v| f(v)).collect(), spectrum: OnceLock::new() }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.check_same_grid(other)?;
        Ok(GridField {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            spectrum: OnceLock::new(),
        })
    }

    /// Applies a Fourier multiplier `m(idx)` (indexed by flattened spectral index).
    pub fn apply_multiplier(&self, m: impl Fn(usize) -> Complex64) -> Result<GridField> {
        let coeffs = self.spectrum().iter().enumerate().map(|(idx, &c)| c * m(idx)).collect();
        GridField::from_spectrum(self.spec, coeffs)
    }

    /// Spectral partial derivatives, component `i` with symbol `2πi k_i`.
    pub fn gradient(&self) -> Vec<GridField> {
        let spec = self.spec;
        let half = (spec.n / 2) as i64;
        (0..spec.dim)
            .map(|axis| {
                self.apply_multiplier(|idx| {
                    let k = spec.mode(idx)[axis];
                    // Nyquist derivative of a real field is taken as zero.
                    if k == -half {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, 2.0 * PI * k as f64)
                    }
                })
                .expect("derivative of a real field is real")
            })
            .collect()
    }

    pub fn laplacian(&self) -> GridField {
        let spec = self.spec;
        self.apply_multiplier(|idx| Complex64::new(-spec.laplace_symbol(idx), 0.0))
            .expect("laplacian of a real field is real")
    }

    /// Heat semigroup of `½Δ`: multiplies `f̂(k)` by `exp(-½|2πk|² t)`.
    pub fn heat_semigroup(&self, t: f64) -> Result<GridField> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("heat semigroup time {t} must be >= 0")));
        }
        if t == 0.0 {
            return Ok(self.clone());
        }
        let spec = self.spec;
        self.apply_multiplier(|idx| Complex64::new((-0.5 * spec.laplace_symbol(idx) * t).exp(), 0.0))
    }

    /// Zeroes every mode with a component above `kmax` (and the Nyquist modes).
    pub fn truncated(&self, kmax: usize) -> GridField {
        let spec = self.spec;
        self.apply_multiplier(
            |idx| {
                if spec.in_band(idx, kmax) {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            },
        )
        .expect("truncation keeps conjugate symmetry")
    }

    /// Spectral resampling onto another grid of the same dimension: zero padding
    /// when refining, truncation when coarsening. Nyquist modes are dropped.
    pub fn resample(&self, target: GridSpec) -> Result<GridField> {
        if target.dim != self.spec.dim {
            return Err(Error::Shape(format!(
                "cannot resample a {}-d field onto a {}-d grid",
                self.spec.dim, target.dim
            )));
        }
        if target == self.spec {
            return Ok(self.clone());
        }
        let src = self.spectrum();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); target.len()];
        let limit = self.spec.n.min(target.n) / 2;
        for (idx, &c) in src.iter().enumerate() {
            let k = self.spec.mode(idx);
            if k[..self.spec.dim].iter().any(|ki| ki.unsigned_abs() as usize >= limit) {
                continue;
            }
            if let Some(t) = target.spectral_index(&k) {
                coeffs[t] = c;
            }
        }
        GridField::from_spectrum(target, coeffs)
    }

    /// Pointwise restriction to a coarser grid whose size divides this one.
    pub fn subsample(&self, target: GridSpec) -> Result<GridField> {
        if target.dim != self.spec.dim || !self.spec.n.is_multiple_of(target.n) {
            return Err(Error::Shape(format!("grid {} is not a refinement of {}", self.spec.n, target.n)));
        }
        let stride = self.spec.n / target.n;
        let values = (0..target.len())
            .map(|idx| match target.dim {
                1 => self.values[idx * stride],
                _ => {
                    let (i, j) = (idx / target.n, idx % target.n);
                    self.values[(i * stride) * self.spec.n + j * stride]
                }
            })
            .collect();
        GridField::new(target, values)
    }

    /// Trigonometric interpolation at an arbitrary point of the torus.
    pub fn eval_at(&self, x: &[f64]) -> f64 {
        let spec = self.spec;
        let n = spec.n;
        let coeffs = self.spectrum();
        let phases = |xi: f64| -> Vec<Complex64> {
            (0..n)
                .map(|j| {
                    let arg = 2.0 * PI * spec.wavenumber(j) as f64 * xi;
                    Complex64::new(arg.cos(), arg.sin())
                })
                .collect()
        };
        match spec.dim {
            1 => {
                let e = phases(x[0]);
                coeffs.iter().zip(&e).map(|(c, e)| (c * e).re).sum()
            }
            _ => {
                let e0 = phases(x[0]);
                let e1 = phases(x[1]);
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    let row: Complex64 = coeffs[i * n..(i + 1) * n].iter().zip(&e1).map(|(c, e)| c * e).sum();
                    acc += row * e0[i];
                }
                acc.re
            }
        }
    }

    fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.spec, other.spec)));
        }
        Ok(())
    }
}

/// A real function on the torus that can be evaluated at arbitrary points.
pub trait TorusFunction {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

impl TorusFunction for GridField {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.eval_at(x)
    }
}

/// Reduces a coordinate to `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    // x = -1e-17 rounds to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}
