//! Closed-form trigonometric test functions `φ(x) = c + Σ a_j cos/sin(2π k_j·x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{GridField, GridSpec, TorusFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub wave: Wave,
    /// Integer wave vector, one entry per dimension.
    pub k: Vec<i64>,
    #[serde(default = "one")]
    pub coefficient: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub dim: usize,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<Term>,
}

impl TestFunction {
    pub fn constant(dim: usize, value: f64) -> Self {
        Self { dim, constant: value, terms: Vec::new() }
    }

    /// `cos(2π k·x)`
    pub fn cos(k: &[i64]) -> Self {
        Self::single(Wave::Cos, k)
    }

    /// `sin(2π k·x)`
    pub fn sin(k: &[i64]) -> Self {
        Self::single(Wave::Sin, k)
    }

    fn single(wave: Wave, k: &[i64]) -> Self {
        Self { dim: k.len(), constant: 0.0, terms: vec![Term { wave, k: k.to_vec(), coefficient: 1.0 }] }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.constant *= factor;
        for t in &mut self.terms {
            t.coefficient *= factor;
        }
        self
    }

    pub fn plus(mut self, other: TestFunction) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::Shape(format!("adding {}-d and {}-d functions", self.dim, other.dim)));
        }
        self.constant += other.constant;
        self.terms.extend(other.terms);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 2 {
            return Err(Error::Config(format!("test function dimension {} not supported", self.dim)));
        }
        if let Some(t) = self.terms.iter().find(|t| t.k.len() != self.dim) {
            return Err(Error::Config(format!("wave vector {:?} in a {}-d test function", t.k, self.dim)));
        }
        Ok(())
    }

    /// Largest `|k|_∞` among the terms.
    pub fn band(&self) -> usize {
        self.terms.iter().flat_map(|t| t.k.iter().map(|k| k.unsigned_abs() as usize)).max().unwrap_or(0)
    }

    /// Grid values; exact band-limited representation when `n > 2·band`.
    pub fn on_grid(&self, spec: GridSpec) -> Result<GridField> {
        self.validate()?;
        if spec.dim() != self.dim {
            return Err(Error::Shape(format!("{}-d function on a {}-d grid", self.dim, spec.dim())));
        }
        if spec.n() <= 2 * self.band() {
            return Err(Error::Resolution(format!("grid n = {} cannot carry wave number {}", spec.n(), self.band())));
        }
        Ok(GridField::from_fn(spec, |x| self.eval(x)))
    }

    /// `Σ |a_j|`, an upper bound for `‖φ - c‖_∞`.
    pub fn amplitude(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }
}

impl TorusFunction for TestFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| {
                    let arg = 2.0 * PI * t.k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>();
                    t.coefficient
                        * match t.wave {
                            Wave::Cos => arg.cos(),
                            Wave::Sin => arg.sin(),
                        }
                })
                .sum::<f64>()
    }
}
