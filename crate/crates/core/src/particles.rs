//! Independent Brownian particles on the torus and the mollified empirical
//! measure used as initial condition of the SPDE.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate};
use crate::torus::{wrap, GridField, GridSpec, TorusFunction, MAX_DIM};

/// Grid points per axis required per unit of `N` by [`mollified_initial`].
pub const DEFAULT_RESOLUTION: usize = 8;

/// Gauss-Legendre nodes per cell axis in the cell-averaged mollification.
const CELL_NODES: usize = 16;

/// `N` points of `[0,1)^d` evolving as independent standard Brownian motions
/// (generator `½Δ`) projected onto the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    t: f64,
    /// Point-major coordinates, `positions[i * dim + a]`.
    positions: Vec<f64>,
}

impl ParticleEnsemble {
    /// Builds an ensemble from flattened coordinates, reducing them mod 1.
    pub fn new(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Domain(format!("dimension {dim} not supported")));
        }
        if positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} coordinates for dimension {dim}", positions.len())));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite particle coordinate".into()));
        }
        Ok(Self { dim, t: 0.0, positions: positions.into_iter().map(wrap).collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    /// Exact transition over `dt`: every coordinate gets an independent
    /// `Normal(0, dt)` increment.
    pub fn evolve<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<Self> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("dt = {dt} must be >= 0")));
        }
        let sd = dt.sqrt();
        let positions = self
            .positions
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(rng);
                wrap(x + sd * z)
            })
            .collect();
        Ok(Self { dim: self.dim, t: self.t + dt, positions })
    }

    /// `⟨μ^N, φ⟩ = (1/N) Σ φ(X_i)`.
    pub fn pair_empirical<F: TorusFunction + ?Sized>(&self, phi: &F) -> f64 {
        self.positions().map(|x| phi.eval(x)).sum::<f64>() / self.len() as f64
    }
}

/// The smooth bump `ρ(x) ∝ exp(-1/(1-|x|²))` on the unit ball, rescaled to
/// width `1/N` and periodized: `ρ^N(y) = Σ_k N^d ρ(N(y+k))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    dim: usize,
    scale: usize,
    norm: f64,
}

fn raw_bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

fn radial_integral(dim: usize, f: impl Fn(f64) -> f64) -> f64 {
    // ∫_{|x|<1} f(|x|) dx for radial integrands
    match dim {
        1 => 2.0 * integrate(f, 0.0, 1.0, 64, 16),
        _ => 2.0 * std::f64::consts::PI * integrate(|r| r * f(r), 0.0, 1.0, 64, 16),
    }
}

fn bump_norm(dim: usize) -> f64 {
    static NORMS: OnceLock<[f64; MAX_DIM]> = OnceLock::new();
    NORMS.get_or_init(|| [1, 2].map(|d| radial_integral(d, |r| raw_bump(r * r))))[dim - 1]
}

impl Mollifier {
    pub fn standard(dim: usize, scale: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Domain(format!("dimension {dim} not supported")));
        }
        if scale == 0 {
            return Err(Error::Domain("mollifier scale must be positive".into()));
        }
        Ok(Self { dim, scale, norm: bump_norm(dim) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Unit-mass profile on `ℝ^d`.
    pub fn profile(&self, x: &[f64]) -> f64 {
        raw_bump(x[..self.dim].iter().map(|v| v * v).sum()) / self.norm
    }

    /// Periodized rescaled kernel `ρ^N` at a point of the torus.
    pub fn kernel(&self, y: &[f64]) -> f64 {
        let n = self.scale as f64;
        let reach = (1.0 / n).ceil() as i64 + 1;
        let mut total = 0.0;
        let mut shift = [0i64; MAX_DIM];
        let images = (2 * reach + 1).pow(self.dim as u32);
        for m in 0..images {
            let mut rem = m;
            for s in shift.iter_mut().take(self.dim) {
                *s = rem % (2 * reach + 1) - reach;
                rem /= 2 * reach + 1;
            }
            let r2: f64 = (0..self.dim).map(|a| (n * (wrap(y[a]) + shift[a] as f64)).powi(2)).sum();
            total += raw_bump(r2);
        }
        total * n.powi(self.dim as i32) / self.norm
    }

    /// `∫ ρ log ρ` of the unit profile; the entropy of `ρ^N` is `d log N` plus this.
    pub fn entropy_constant(&self) -> f64 {
        let norm = self.norm;
        radial_integral(self.dim, |r| {
            let p = raw_bump(r * r) / norm;
            if p > 0.0 {
                p * p.ln()
            } else {
                0.0
            }
        })
    }
}

/// Cell averages of `ρ^N * μ^N` on `grid`, renormalized to unit mass.
///
/// Averaging over cells (rather than sampling at nodes) makes the discrete mass
/// equal the continuum mass up to quadrature error and keeps the field
/// nonnegative.
pub fn mollified_initial(ens: &ParticleEnsemble, m: &Mollifier, grid: GridSpec) -> Result<GridField> {
    mollified_initial_with_resolution(ens, m, grid, DEFAULT_RESOLUTION)
}

pub fn mollified_initial_with_resolution(
    ens: &ParticleEnsemble,
    m: &Mollifier,
    grid: GridSpec,
    c_res: usize,
) -> Result<GridField> {
    if ens.dim() != m.dim() || grid.dim() != m.dim() {
        return Err(Error::Shape(format!(
            "ensemble in d={}, mollifier in d={}, grid in d={}",
            ens.dim(),
            m.dim(),
            grid.dim()
        )));
    }
    if grid.n() < c_res * m.scale() {
        return Err(Error::Resolution(format!("grid n = {} below {} x N = {}", grid.n(), c_res, c_res * m.scale())));
    }
    let n = grid.n();
    let h = 1.0 / n as f64;
    let scale = m.scale() as f64;
    let radius = 1.0 / scale;
    let amplitude = scale.powi(m.dim() as i32) / m.norm;
    let (nodes, weights) = gauss_legendre(CELL_NODES);
    let offsets: Vec<f64> = nodes.iter().map(|x| 0.5 * (1.0 + x) * h).collect();
    let half_weights: Vec<f64> = weights.iter().map(|w| 0.5 * w).collect();

    let mut acc = vec![0.0; grid.len()];
    let cells = |x: f64| -> std::ops::RangeInclusive<i64> {
        ((x - radius) * n as f64).floor() as i64..=((x + radius) * n as f64).floor() as i64
    };
    let wrap_index = |j: i64| j.rem_euclid(n as i64) as usize;
    for p in ens.positions() {
        match m.dim() {
            1 => {
                for j in cells(p[0]) {
                    let left = j as f64 * h - p[0];
                    let avg: f64 = offsets
                        .iter()
                        .zip(&half_weights)
                        .map(|(o, w)| w * raw_bump((scale * (left + o)).powi(2)))
                        .sum();
                    acc[wrap_index(j)] += amplitude * avg;
                }
            }
            _ => {
                for i in cells(p[0]) {
                    let left0 = i as f64 * h - p[0];
                    for j in cells(p[1]) {
                        let left1 = j as f64 * h - p[1];
                        let mut avg = 0.0;
                        for (o0, w0) in offsets.iter().zip(&half_weights) {
                            let r0 = (scale * (left0 + o0)).powi(2);
                            if r0 >= 1.0 {
                                continue;
                            }
                            for (o1, w1) in offsets.iter().zip(&half_weights) {
                                avg += w0 * w1 * raw_bump(r0 + (scale * (left1 + o1)).powi(2));
                            }
                        }
                        acc[wrap_index(i) * n + wrap_index(j)] += amplitude * avg;
                    }
                }
            }
        }
    }
    let count = ens.len() as f64;
    let mass: f64 = acc.iter().sum::<f64>() / grid.len() as f64 / count;
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::Resolution(format!("mollified mass {mass} off by more than 1e-8")));
    }
    let norm = count * mass;
    GridField::new(grid, acc.into_iter().map(|v| v / norm).collect())
}

/// Initial particle configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialPreset {
    /// Independent uniform points.
    Uniform,
    /// All particles at one site.
    SingleSite {
        #[serde(default)]
        at: Vec<f64>,
    },
    /// Deterministic low-discrepancy fill of the box `center ± width/2`.
    Clustered { center: Vec<f64>, width: f64 },
    /// `x_j = offset + j/N` in d=1, a square lattice in d=2.
    Equispaced {
        #[serde(default)]
        offset: f64,
    },
    /// Text file, one point per line.
    File { path: PathBuf },
}

fn point_or_origin(p: &[f64], dim: usize, what: &str) -> Result<Vec<f64>> {
    match p.len() {
        0 => Ok(vec![0.0; dim]),
        l if l == dim => Ok(p.to_vec()),
        l => Err(Error::Config(format!("{what} has {l} coordinates, expected {dim}"))),
    }
}

impl InitialPreset {
    pub fn generate<R: Rng + ?Sized>(&self, dim: usize, count: usize, rng: &mut R) -> Result<ParticleEnsemble> {
        if count == 0 {
            return Err(Error::Domain("need at least one particle".into()));
        }
        let coords = match self {
            InitialPreset::Uniform => (0..count * dim).map(|_| rng.random::<f64>()).collect(),
            InitialPreset::SingleSite { at } => point_or_origin(at, dim, "site")?.repeat(count),
            InitialPreset::Clustered { center, width } => {
                let c = point_or_origin(center, dim, "center")?;
                if !(*width > 0.0 && *width <= 1.0) {
                    return Err(Error::Config(format!("cluster width {width} must lie in (0, 1]")));
                }
                // Kronecker sequence with the golden / plastic ratio
                let alpha: Vec<f64> = match dim {
                    1 => vec![0.5 * (5f64.sqrt() - 1.0)],
                    _ => {
                        let g = 1.324_717_957_244_746;
                        vec![1.0 / g, 1.0 / (g * g)]
                    }
                };
                (0..count)
                    .flat_map(|j| {
                        let c = &c;
                        alpha.iter().enumerate().map(move |(a, al)| {
                            let u = if dim == 1 {
                                (j as f64 + 0.5) / count as f64
                            } else {
                                wrap(0.5 + al * (j + 1) as f64)
                            };
                            c[a] + width * (u - 0.5)
                        })
                    })
                    .collect()
            }
            InitialPreset::Equispaced { offset } => match dim {
                1 => (0..count).map(|j| offset + j as f64 / count as f64).collect(),
                _ => {
                    let side = (count as f64).sqrt().round() as usize;
                    if side * side != count {
                        return Err(Error::Config(format!("{count} is not a square lattice size")));
                    }
                    (0..count)
                        .flat_map(|j| {
                            let (i, k) = (j / side, j % side);
                            [offset + i as f64 / side as f64, offset + k as f64 / side as f64]
                        })
                        .collect()
                }
            },
            InitialPreset::File { path } => {
                let ens = load_positions(path, dim)?;
                if ens.len() != count {
                    return Err(Error::Config(format!(
                        "{} holds {} particles, expected {count}",
                        path.display(),
                        ens.len()
                    )));
                }
                return Ok(ens);
            }
        };
        ParticleEnsemble::new(dim, coords)
    }
}

/// Reads whitespace-separated coordinates, one point per line. Blank lines and
/// lines starting with `#` are skipped.
pub fn load_positions(path: &Path, dim: usize) -> Result<ParticleEnsemble> {
    let text = std::fs::read_to_string(path)?;
    let mut coords = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let point: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if point.len() != dim {
            return Err(Error::Config(format!(
                "{}:{}: {} coordinates, expected {dim}",
                path.display(),
                lineno + 1,
                point.len()
            )));
        }
        coords.extend(point);
    }
    ParticleEnsemble::new(dim, coords)
}

/// Monte Carlo of `exp⟨μ^N_t, φ⟩` over independent exact particle paths; returns
/// (mean, standard error).
pub fn particle_laplace_mc<F: TorusFunction + Sync + ?Sized>(
    ens: &ParticleEnsemble,
    phi: &F,
    t: f64,
    paths: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    use crate::rng::{path_rng, StreamFamily};
    let samples: Vec<Result<f64>> = crate::parallel::map_indexed(paths, |i| {
        let mut rng = path_rng(master_seed, StreamFamily::Particles, 0, i as u32);
        Ok(ens.evolve(t, &mut rng)?.pair_empirical(phi).exp())
    });
    let samples: Vec<f64> = samples.into_iter().collect::<Result<_>>()?;
    Ok(crate::stats::mean_and_se(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{path_rng, StreamFamily};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    struct Cos1;
    impl TorusFunction for Cos1 {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &[f64]) -> f64 {
            (2.0 * PI * x[0]).cos()
        }
    }

    #[test]
    fn positions_are_wrapped() {
        let ens = ParticleEnsemble::new(1, vec![1.25, -0.25, 0.5]).unwrap();
        assert_eq!(ens.positions().map(|p| p[0]).collect::<Vec<_>>(), vec![0.25, 0.75, 0.5]);
        assert!(ParticleEnsemble::new(2, vec![0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn zero_step_is_identity() {
        let ens = ParticleEnsemble::new(2, vec![0.1, 0.9, 0.4, 0.3]).unwrap();
        let mut rng = path_rng(1, StreamFamily::Particles, 0, 0);
        let same = ens.evolve(0.0, &mut rng).unwrap();
        assert_eq!(same.positions, ens.positions);
        assert!(ens.evolve(-1.0, &mut rng).is_err());
    }

    #[test]
    fn empirical_pairings() {
        let two = ParticleEnsemble::new(1, vec![0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(two.pair_empirical(&Cos1), 0.0, epsilon = 1e-15);
        let four = InitialPreset::Equispaced { offset: 0.0 }
            .generate(1, 4, &mut path_rng(0, StreamFamily::InitialCondition, 0, 0))
            .unwrap();
        assert_abs_diff_eq!(four.pair_empirical(&Cos1), 0.0, epsilon = 1e-15);
        let mut shuffled = four.clone();
        shuffled.positions.reverse();
        assert_abs_diff_eq!(shuffled.pair_empirical(&Cos1), four.pair_empirical(&Cos1), epsilon = 1e-15);
    }

    #[test]
    fn mollifier_has_unit_mass_and_symmetry() {
        for dim in [1, 2] {
            let m = Mollifier::standard(dim, 4).unwrap();
            let mass = radial_integral(dim, |r| m.profile(&[r, 0.0]));
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
            assert_eq!(m.profile(&[0.3, -0.2]), m.profile(&[-0.3, 0.2]));
            assert_eq!(m.profile(&[1.0, 0.0]), 0.0);
        }
    }

    #[test]
    fn kernel_is_periodized_and_scaled() {
        let m = Mollifier::standard(1, 2).unwrap();
        // support of width 1/2 around 0 seen from both sides of the torus
        assert_abs_diff_eq!(m.kernel(&[0.1]), m.kernel(&[0.9]), epsilon = 1e-14);
        assert_abs_diff_eq!(m.kernel(&[0.0]), 2.0 * m.profile(&[0.0]), epsilon = 1e-14);
        assert_eq!(m.kernel(&[0.5]), 0.0);
    }

    #[test]
    fn mollified_field_matches_kernel_cell_averages() {
        let m = Mollifier::standard(1, 4).unwrap();
        let ens = ParticleEnsemble::new(1, vec![0.95]).unwrap();
        let grid = GridSpec::new(1, 32).unwrap();
        let u = mollified_initial(&ens, &m, grid).unwrap();
        assert_abs_diff_eq!(u.mass(), 1.0, epsilon = 1e-14);
        for (j, &v) in u.values().iter().enumerate() {
            let avg = 32.0 * integrate(|y| m.kernel(&[y - 0.95]), j as f64 / 32.0, (j + 1) as f64 / 32.0, 8, 16);
            assert_abs_diff_eq!(v, avg, epsilon = 1e-9);
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn mollified_initial_rejects_coarse_grids() {
        let m = Mollifier::standard(1, 16).unwrap();
        let ens = ParticleEnsemble::new(1, vec![0.0; 16]).unwrap();
        let err = mollified_initial(&ens, &m, GridSpec::new(1, 64).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)));
        assert!(mollified_initial(&ens, &m, GridSpec::new(1, 128).unwrap()).is_ok());
    }

    #[test]
    fn two_dimensional_mollification_has_unit_mass() {
        let m = Mollifier::standard(2, 4).unwrap();
        let ens = ParticleEnsemble::new(2, vec![0.0, 0.0, 0.3, 0.99, 0.5, 0.5, 0.7, 0.2]).unwrap();
        let u = mollified_initial(&ens, &m, GridSpec::new(2, 32).unwrap()).unwrap();
        assert_abs_diff_eq!(u.mass(), 1.0, epsilon = 1e-13);
        assert!(u.min() >= 0.0);
    }

    #[test]
    fn presets_generate_requested_counts() {
        let mut rng = path_rng(3, StreamFamily::InitialCondition, 0, 0);
        for preset in [
            InitialPreset::Uniform,
            InitialPreset::SingleSite { at: vec![] },
            InitialPreset::Clustered { center: vec![0.5, 0.5], width: 0.2 },
            InitialPreset::Equispaced { offset: 0.0 },
        ] {
            let ens = preset.generate(2, 16, &mut rng).unwrap();
            assert_eq!(ens.len(), 16);
        }
        let c = InitialPreset::Clustered { center: vec![0.1], width: 0.4 }.generate(1, 8, &mut rng).unwrap();
        assert!(c.positions().all(|p| p[0] < 0.3 || p[0] > 0.9));
        assert!(InitialPreset::Equispaced { offset: 0.0 }.generate(2, 8, &mut rng).is_err());
    }

    #[test]
    fn loads_positions_from_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.txt");
        std::fs::write(&path, "# x y\n0.1 0.2\n\n1.5 -0.25\n").unwrap();
        let ens = load_positions(&path, 2).unwrap();
        assert_eq!(ens.len(), 2);
        assert_eq!(ens.position(1), &[0.5, 0.75]);
        assert!(load_positions(&path, 1).is_err());
    }
}
