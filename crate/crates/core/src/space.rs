//! Type spaces and their quadrature grids.

use rand::Rng;

use crate::error::{Error, Result};

/// Default grid size for `(0,1]`.
pub const DEFAULT_GRID: usize = 2048;

/// The probability space of vertex types.
///
/// Finite types are encoded as their index (`0.0, 1.0, ...`) wherever a
/// type value is passed around as `f64`.
#[derive(Clone, Debug, PartialEq)]
pub enum TypeSpace {
    Finite {
        weights: Vec<f64>,
    },
    /// `(0,1]` with Lebesgue measure, discretized by `m` nodes
    /// `x_i = u_i^theta`, `u_i = (2i-1)/(2m)`. `theta > 1` packs nodes toward 0
    /// to follow `x^{-s}` singularities; `theta = 1` is the plain midpoint rule.
    UnitInterval {
        m: usize,
        theta: f64,
    },
}

impl TypeSpace {
    pub fn finite(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpace("no types".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidSpace(format!(
                "weights must be strictly positive: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpace(format!("weights sum to {total}, not 1")));
        }
        Ok(TypeSpace::Finite { weights })
    }

    pub fn single_type() -> Self {
        TypeSpace::Finite { weights: vec![1.0] }
    }

    pub fn unit_interval(m: usize, theta: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSpace("grid size must be positive".into()));
        }
        if !(theta.is_finite() && theta >= 1.0) {
            return Err(Error::InvalidSpace(format!("stratification exponent {theta} < 1")));
        }
        Ok(TypeSpace::UnitInterval { m, theta })
    }

    /// Grid stratified for factors `x^{-k/alpha}`: picks `theta` so that
    /// `x^{-k/alpha} dx` becomes bounded in the grid variable for the largest
    /// integer `k < alpha` with `k <= 3`.
    pub fn stratified_for_alpha(m: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must exceed 1")));
        }
        Self::unit_interval(m, stratification_theta(alpha))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, TypeSpace::Finite { .. })
    }

    pub fn num_types(&self) -> Option<usize> {
        match self {
            TypeSpace::Finite { weights } => Some(weights.len()),
            TypeSpace::UnitInterval { .. } => None,
        }
    }

    pub fn grid(&self) -> Grid {
        match self {
            TypeSpace::Finite { weights } => Grid {
                nodes: (0..weights.len()).map(|i| i as f64).collect(),
                weights: weights.clone(),
                finite: true,
            },
            TypeSpace::UnitInterval { m, theta } => {
                let m = *m;
                let mut nodes = Vec::with_capacity(m);
                let mut weights = Vec::with_capacity(m);
                for i in 0..m {
                    let u = (2 * i + 1) as f64 / (2 * m) as f64;
                    nodes.push(u.powf(*theta));
                    weights.push(theta * u.powf(theta - 1.0) / m as f64);
                }
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                Grid {
                    nodes,
                    weights,
                    finite: false,
                }
            }
        }
    }

    /// Draws one type from `mu`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TypeSpace::Finite { weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return i as f64;
                    }
                }
                (weights.len() - 1) as f64
            }
            TypeSpace::UnitInterval { .. } => 1.0 - rng.random::<f64>(),
        }
    }
}

pub fn stratification_theta(alpha: f64) -> f64 {
    let mut k = alpha.ceil() - 1.0;
    if k >= alpha {
        k -= 1.0;
    }
    let k = k.clamp(0.0, 3.0);
    if k <= 0.0 {
        1.0
    } else {
        alpha / (alpha - k)
    }
}

/// Quadrature nodes and weights; weights sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub finite: bool,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_i w_i f_i`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}
