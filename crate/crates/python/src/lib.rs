//! Python bindings: kernel families, sampled graphs and the model formulas.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use kfgraph::branching::{operator_norm, solve_survival, DiscreteBP, NormMethod, SolveOptions};
use kfgraph::graphstats::{
    clustering_c2, components, count_subgraphs, mcpo_reference, mixing_a, stats_report,
    tv_distance, DegreeHistogram,
};
use kfgraph::models::{self, PowerLawParams};
use kfgraph::percolation::{percolation_report, percolation_threshold_constant};
use kfgraph::sampler::{self, GeneratedGraph, SamplerConfig};
use kfgraph_cli::config::{FamilyConfig, ModelSpec};
use kfgraph_cli::CliError;

fn lib_err(e: kfgraph::Error) -> PyErr {
    use kfgraph::Error as E;
    match e {
        E::InvalidParameter(_) | E::InvalidSpace(_) | E::InvalidAtom(_) | E::ArityMismatch { .. } | E::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Library(e) => lib_err(e),
        CliError::Config(_) => PyValueError::new_err(e.to_string()),
        CliError::Io { .. } => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Converts a serializable value to plain Python objects via JSON.
fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A kernel family: a type space with (atom graph, kernel) pairs.
#[pyclass(name = "KernelFamily", module = "kfgraph_py", frozen)]
pub struct PyFamily {
    inner: kfgraph::KernelFamily,
    label: String,
}

impl PyFamily {
    fn from_model(m: ModelSpec) -> PyResult<Self> {
        let inner = m.build().map_err(cli_err)?;
        Ok(Self {
            inner,
            label: format!("{m:?}"),
        })
    }

    fn bp(&self) -> PyResult<DiscreteBP> {
        DiscreteBP::from_family(&self.inner).map_err(lib_err)
    }
}

#[pymethods]
impl PyFamily {
    /// Single type with complete-graph atoms; `c` maps clique size to its constant.
    #[staticmethod]
    fn constants(c: Vec<(usize, f64)>) -> PyResult<Self> {
        Self::from_model(ModelSpec::Constant { c })
    }

    #[staticmethod]
    #[pyo3(signature = (a, b, alpha, grid = 2048))]
    fn powerlaw(a: f64, b: f64, alpha: f64, grid: usize) -> PyResult<Self> {
        Self::from_model(ModelSpec::Powerlaw { a, b, alpha, grid })
    }

    #[staticmethod]
    fn two_block(a: f64, p: f64) -> PyResult<Self> {
        Self::from_model(ModelSpec::TwoBlock { a, p })
    }

    #[staticmethod]
    #[pyo3(signature = (eps, grid = 2048))]
    fn badp2(eps: f64, grid: usize) -> PyResult<Self> {
        Self::from_model(ModelSpec::Badp2 { eps, grid })
    }

    /// Parses a family from TOML text in the config-file format.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = FamilyConfig::parse(text).and_then(|c| c.build()).map_err(cli_err)?;
        Ok(Self {
            inner,
            label: "config".into(),
        })
    }

    /// Number of (atom, kernel) entries.
    fn __len__(&self) -> usize {
        self.inner.entries().len()
    }

    fn __repr__(&self) -> String {
        format!("KernelFamily({}, atoms={})", self.label, self.inner.entries().len())
    }

    /// Atom graphs as `(vertices, edges)` pairs.
    fn atoms(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        self.inner
            .entries()
            .iter()
            .map(|e| (e.shape.r(), e.shape.edges().to_vec()))
            .collect()
    }

    /// Asymptotic edges per vertex.
    fn edge_density(&self) -> PyResult<f64> {
        kfgraph::edge_density(&self.inner).map_err(lib_err)
    }

    /// Asymptotic atom-vertex incidences per vertex.
    fn iota(&self) -> PyResult<f64> {
        kfgraph::percolation::GeneralizedFamily::from_family(&self.inner)
            .iota()
            .map_err(lib_err)
    }

    /// Operator norm of the edge kernel.
    #[pyo3(signature = (tol = 1e-10))]
    fn norm(&self, tol: f64) -> PyResult<f64> {
        Ok(operator_norm(&self.bp()?, NormMethod::Auto, tol).value)
    }

    /// Survival probability of the branching process; returns `(rho, rho_x, nodes)`.
    #[pyo3(signature = (tol = 1e-10, max_iter = 100_000))]
    fn survival(&self, tol: f64, max_iter: usize) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
        let opts = SolveOptions {
            tol,
            max_iter,
            ..SolveOptions::default()
        };
        let s = solve_survival(&self.bp()?, &opts).map_err(lib_err)?;
        Ok((s.rho, s.rho_x, s.nodes))
    }

    /// Samples `G(n, kappa)` with the given seed.
    #[pyo3(signature = (n, seed = 0))]
    fn generate(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<PyGraph> {
        let g = py
            .detach(|| sampler::generate(&self.inner, n, &SamplerConfig::with_seed(seed)))
            .map_err(lib_err)?;
        Ok(PyGraph { inner: g })
    }

    /// Critical bond-percolation probability of a single-type family, or `None`.
    #[pyo3(signature = (tol = 1e-12))]
    fn percolation_threshold(&self, tol: f64) -> PyResult<Option<f64>> {
        match percolation_threshold_constant(&self.inner, tol) {
            Ok(p) => Ok(Some(p)),
            Err(kfgraph::Error::NoThreshold) => Ok(None),
            Err(e) => Err(lib_err(e)),
        }
    }

    /// Bond-percolation report at retention probability `p`, as a dict.
    fn bond_percolate<'py>(&self, py: Python<'py>, p: f64) -> PyResult<Bound<'py, PyAny>> {
        let r = percolation_report(&self.inner, p, true).map_err(lib_err)?;
        to_py(py, &r)
    }

    /// Limiting degree pmf on `0..=d_max` and the mass beyond it.
    #[pyo3(signature = (d_max = 50))]
    fn degree_reference(&self, d_max: usize) -> PyResult<(Vec<f64>, f64)> {
        let r = mcpo_reference(&self.inner, d_max).map_err(lib_err)?;
        Ok((r.pmf, r.tail_mass))
    }

    /// Total variation between a graph's degree law and the limiting one.
    #[pyo3(signature = (graph, d_max = 50))]
    fn degree_tv(&self, graph: &PyGraph, d_max: usize) -> PyResult<f64> {
        let r = mcpo_reference(&self.inner, d_max).map_err(lib_err)?;
        tv_distance(&DegreeHistogram::of_graph(&graph.inner, d_max), &r).map_err(lib_err)
    }
}

/// A sampled or loaded graph.
#[pyclass(name = "Graph", module = "kfgraph_py", frozen)]
pub struct PyGraph {
    inner: GeneratedGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (n, edges, types = None))]
    fn new(n: usize, edges: Vec<(u32, u32)>, types: Option<Vec<f64>>) -> PyResult<Self> {
        let types = types.unwrap_or_else(|| vec![0.0; n]);
        let inner = GeneratedGraph::from_edges(n, types, edges).map_err(lib_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }

    /// Edges of the simple graph.
    fn edges(&self) -> Vec<(u32, u32)> {
        self.inner.simple_edges().to_vec()
    }

    /// Edges of the multigraph, one per atom edge.
    fn multi_edges(&self) -> Vec<(u32, u32)> {
        self.inner.multi_edges().to_vec()
    }

    fn degrees(&self) -> Vec<usize> {
        self.inner.degrees()
    }

    fn types(&self) -> Vec<f64> {
        self.inner.types().to_vec()
    }

    /// Atoms as `(shape index, vertices)` pairs.
    fn atoms(&self) -> Vec<(usize, Vec<u32>)> {
        self.inner.atoms().map(|(s, v)| (s, v.to_vec())).collect()
    }

    /// `(C1, C2, number of components)`.
    fn components(&self) -> (usize, usize, usize) {
        let c = components(&self.inner);
        (c.c1, c.c2, c.count)
    }

    /// Counts of K2, K3, P2, P3 and S3 as a dict.
    fn subgraph_counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &count_subgraphs(&self.inner))
    }

    /// Clustering coefficient, `None` without paths of length 2.
    fn clustering(&self) -> Option<f64> {
        clustering_c2(&count_subgraphs(&self.inner)).ok()
    }

    /// Mixing parameter, `None` when undefined.
    fn mixing(&self) -> Option<f64> {
        mixing_a(&count_subgraphs(&self.inner)).ok()
    }

    #[pyo3(signature = (p, seed = 0))]
    fn percolate_edges(&self, p: f64, seed: u64) -> PyResult<PyGraph> {
        let g = sampler::percolate_edges(&self.inner, p, seed).map_err(lib_err)?;
        Ok(PyGraph { inner: g })
    }

    #[pyo3(signature = (p, seed = 0))]
    fn percolate_vertices(&self, p: f64, seed: u64) -> PyResult<PyGraph> {
        let g = sampler::percolate_vertices(&self.inner, p, seed).map_err(lib_err)?;
        Ok(PyGraph { inner: g })
    }

    /// Summary statistics as a dict.
    #[pyo3(signature = (d_max = 50, census_depth = None))]
    fn stats<'py>(&self, py: Python<'py>, d_max: usize, census_depth: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let r = stats_report(&self.inner, d_max, census_depth).map_err(lib_err)?;
        to_py(py, &r)
    }
}

#[pyfunction]
fn beta_k(alpha: f64, k: f64) -> f64 {
    models::beta_k(alpha, k)
}

/// Closed-form operator norm of the power-law family.
#[pyfunction]
fn powerlaw_norm(a: f64, b: f64, alpha: f64) -> PyResult<f64> {
    let p = PowerLawParams::new(a, b, alpha).map_err(lib_err)?;
    Ok(models::powerlaw_norm(&p))
}

/// Giant-component fraction of the power-law family.
#[pyfunction]
fn powerlaw_rho(a: f64, b: f64, alpha: f64) -> PyResult<f64> {
    let p = PowerLawParams::new(a, b, alpha).map_err(lib_err)?;
    models::rho(&p).map_err(lib_err)
}

/// Adds the classes and functions to `m`.
pub fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFamily>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(beta_k, m)?)?;
    m.add_function(wrap_pyfunction!(powerlaw_norm, m)?)?;
    m.add_function(wrap_pyfunction!(powerlaw_rho, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
fn kfgraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    init(m)
}
