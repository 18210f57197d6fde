//! Family configuration: TOML files and the built-in models.
//!
//! ```toml
//! [space]
//! kind = "interval"   # or "finite" with weights = [...]
//! grid = 2048
//! alpha = 3.0         # optional; stratifies the grid for x^(-k/alpha)
//!
//! [[atom]]
//! shape = "K3"        # or edges = [[0, 1], [1, 2]]
//! kernel = { rank1 = { coef = 1.0, alpha = 3.0 } }
//! ```

use std::path::Path;

use kfgraph::kernel::shape_by_name;
use kfgraph::models::{badp2_family, powerlaw_family, two_block, PowerLawParams, TwoBlockParams};
use kfgraph::space::DEFAULT_GRID;
use kfgraph::{AtomShape, FamilyEntry, KernelFamily, KernelFunction, SmallGraph, TypeSpace};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub space: SpaceConfig,
    #[serde(default, rename = "atom")]
    pub atoms: Vec<AtomConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceConfig {
    Finite {
        weights: Vec<f64>,
    },
    Interval {
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
    },
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub shape: Option<String>,
    pub edges: Option<Vec<[usize; 2]>>,
    /// Vertex count when `edges` leaves some vertex out; defaults to the largest label + 1.
    pub vertices: Option<usize>,
    pub kernel: KernelFunction,
}

impl SpaceConfig {
    pub fn build(&self) -> Result<TypeSpace> {
        Ok(match self {
            SpaceConfig::Finite { weights } => TypeSpace::finite(weights.clone())?,
            SpaceConfig::Interval { grid, alpha, theta } => match (alpha, theta) {
                (Some(_), Some(_)) => return Err(CliError::config("space: give alpha or theta, not both")),
                (Some(a), None) => TypeSpace::stratified_for_alpha(*grid, *a)?,
                (None, t) => TypeSpace::unit_interval(*grid, t.unwrap_or(1.0))?,
            },
        })
    }
}

impl AtomConfig {
    pub fn shape(&self, idx: usize) -> Result<AtomShape> {
        match (&self.shape, &self.edges) {
            (Some(name), None) => {
                if self.vertices.is_some() {
                    return Err(CliError::config(format!("atom {idx}: vertices only applies with edges")));
                }
                shape_by_name(name).ok_or_else(|| {
                    CliError::config(format!(
                        "atom {idx}: unknown shape {name:?} (known: K1 K2 K3 K4 P2 P3 S3 C4)"
                    ))
                })
            }
            (None, Some(edges)) => {
                let max = edges.iter().flat_map(|e| e.iter().copied()).max();
                let n = self.vertices.unwrap_or(max.map_or(1, |m| m + 1));
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                let g = SmallGraph::new(n, &pairs).map_err(|e| CliError::config(format!("atom {idx}: {e}")))?;
                AtomShape::new(g).map_err(|e| CliError::config(format!("atom {idx}: {e}")))
            }
            _ => Err(CliError::config(format!("atom {idx}: give exactly one of shape or edges"))),
        }
    }
}

impl FamilyConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn build(&self) -> Result<KernelFamily> {
        let space = self.space.build()?;
        let mut entries = Vec::with_capacity(self.atoms.len());
        for (i, a) in self.atoms.iter().enumerate() {
            entries.push(FamilyEntry::new(a.shape(i)?, a.kernel.clone()));
        }
        Ok(KernelFamily::new(space, entries)?)
    }
}

/// A built-in family with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Single type, complete-graph atoms with constant kernels.
    Constant { c: Vec<(usize, f64)> },
    Powerlaw { a: f64, b: f64, alpha: f64, grid: usize },
    TwoBlock { a: f64, p: f64 },
    Badp2 { eps: f64, grid: usize },
}

impl ModelSpec {
    pub fn build(&self) -> Result<KernelFamily> {
        Ok(match self {
            ModelSpec::Constant { c } => {
                if c.is_empty() {
                    return Err(CliError::config("constant model needs at least one of --c2, --c3, --c4"));
                }
                for &(r, v) in c {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(CliError::config(format!("c{r} = {v} must be a nonnegative number")));
                    }
                }
                KernelFamily::constants(c.iter().map(|&(r, v)| (AtomShape::clique(r), v)).collect())?
            }
            ModelSpec::Powerlaw { a, b, alpha, grid } => powerlaw_family(&PowerLawParams::new(*a, *b, *alpha)?, *grid)?,
            ModelSpec::TwoBlock { a, p } => two_block(&TwoBlockParams::new(*a, *p)?)?,
            ModelSpec::Badp2 { eps, grid } => badp2_family(*eps, *grid)?,
        })
    }

    /// Copy with one named parameter replaced.
    pub fn with_param(&self, name: &str, v: f64) -> Result<Self> {
        let mut m = self.clone();
        let bad = || CliError::config(format!("model has no parameter {name:?}"));
        match &mut m {
            ModelSpec::Constant { c } => {
                let r: usize = name
                    .strip_prefix('c')
                    .and_then(|s| s.parse().ok())
                    .filter(|r| (2..=4).contains(r))
                    .ok_or_else(bad)?;
                c.retain(|e| e.0 != r);
                c.push((r, v));
                c.sort_by_key(|e| e.0);
            }
            ModelSpec::Powerlaw { a, b, alpha, .. } => match name {
                "a" => *a = v,
                "b" => *b = v,
                "alpha" => *alpha = v,
                _ => return Err(bad()),
            },
            ModelSpec::TwoBlock { a, p } => match name {
                "a" => *a = v,
                "p" => *p = v,
                _ => return Err(bad()),
            },
            ModelSpec::Badp2 { eps, .. } => match name {
                "eps" => *eps = v,
                _ => return Err(bad()),
            },
        }
        Ok(m)
    }
}

/// Where a family came from.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilySource {
    Config(FamilyConfig),
    Model(ModelSpec),
}

impl FamilySource {
    pub fn build(&self) -> Result<KernelFamily> {
        match self {
            FamilySource::Config(c) => c.build(),
            FamilySource::Model(m) => m.build(),
        }
    }

    /// The family with parameter `name` set to `v`; `scale` multiplies every kernel.
    pub fn build_with(&self, name: &str, v: f64) -> Result<KernelFamily> {
        if name == "scale" {
            let f = self.build()?;
            let entries = f
                .entries()
                .iter()
                .map(|e| FamilyEntry::new(e.shape.clone(), e.kernel.scaled(v)))
                .collect();
            return Ok(KernelFamily::new(f.space().clone(), entries)?);
        }
        match self {
            FamilySource::Model(m) => m.with_param(name, v)?.build(),
            FamilySource::Config(_) => Err(CliError::config(format!(
                "config families only support --param scale, not {name:?}"
            ))),
        }
    }
}

/// Serializable description of a family, embedded in reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyDesc {
    #[serde(skip_serializing_if = "Option::is_none", flatten)]
    pub model: Option<ModelSpec>,
    pub space: SpaceConfig,
    pub atoms: Vec<AtomDesc>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomDesc {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub kernel: KernelFunction,
}

impl FamilyDesc {
    pub fn new(family: &KernelFamily, model: Option<ModelSpec>) -> Self {
        let space = match family.space() {
            TypeSpace::Finite { weights } => SpaceConfig::Finite {
                weights: weights.clone(),
            },
            TypeSpace::UnitInterval { m, theta } => SpaceConfig::Interval {
                grid: *m,
                alpha: None,
                theta: Some(*theta),
            },
        };
        let atoms = family
            .entries()
            .iter()
            .map(|e| AtomDesc {
                vertices: e.shape.r(),
                edges: e.shape.edges().to_vec(),
                kernel: e.kernel.clone(),
            })
            .collect();
        FamilyDesc { model, space, atoms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_finite_config() {
        let c = FamilyConfig::parse(
            r#"
            [space]
            kind = "finite"
            weights = [0.5, 0.5]

            [[atom]]
            shape = "K2"
            kernel = { table = { types = 2, values = [0.0, 1.0, 1.0, 0.0] } }

            [[atom]]
            edges = [[0, 1], [1, 2]]
            kernel = { const = 0.25 }
            "#,
        )
        .unwrap();
        let f = c.build().unwrap();
        assert_eq!(f.entries().len(), 2);
        assert_eq!(f.entries()[1].shape.edge_count(), 2);
    }

    #[test]
    fn powerlaw_is_expressible() {
        let c = FamilyConfig::parse(
            r#"
            [space]
            kind = "interval"
            grid = 256
            alpha = 3.0
            [[atom]]
            shape = "K2"
            kernel = { rank1 = { coef = 1.0, alpha = 3.0 } }
            [[atom]]
            shape = "K3"
            kernel = { rank1 = { coef = 1.0, alpha = 3.0 } }
            "#,
        )
        .unwrap();
        let built = ModelSpec::Powerlaw {
            a: 1.0,
            b: 1.0,
            alpha: 3.0,
            grid: 256,
        }
        .build()
        .unwrap();
        assert_eq!(c.build().unwrap(), built);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = ["[space]\nkind = \"finite\"\nweights = [1.0]\ncolour = 1\n",
            "[space]\nkind = \"finite\"\nweights = [1.0]\n[[atom]]\nshape = \"K2\"\nkernel = { const = 1.0 }\nextra = 2\n",
            "[space]\nkind = \"finite\"\nweights = [1.0]\n[[atom]]\nshape = \"K2\"\nkernel = { konst = 1.0 }\n",
            "[space]\nkind = \"blob\"\n"];
        for text in bad {
            assert!(FamilyConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn shape_errors() {
        let c = FamilyConfig::parse(
            "[space]\nkind = \"finite\"\nweights = [1.0]\n[[atom]]\nedges = [[0, 1], [2, 3]]\nkernel = { const = 1.0 }\n",
        )
        .unwrap();
        assert!(matches!(c.build(), Err(CliError::Config(_))));
        let c = FamilyConfig::parse(
            "[space]\nkind = \"finite\"\nweights = [1.0]\n[[atom]]\nshape = \"K9\"\nkernel = { const = 1.0 }\n",
        )
        .unwrap();
        assert!(c.build().is_err());
    }

    #[test]
    fn sweep_parameters() {
        let m = ModelSpec::Constant { c: vec![(3, 0.1)] };
        assert_eq!(
            m.with_param("c2", 0.5).unwrap(),
            ModelSpec::Constant {
                c: vec![(2, 0.5), (3, 0.1)]
            }
        );
        assert!(m.with_param("alpha", 2.0).is_err());
        let src = FamilySource::Model(m);
        let f = src.build_with("scale", 2.0).unwrap();
        assert_eq!(f.entries()[0].kernel, KernelFunction::Constant(0.2));
    }
}
