//! Sparse inhomogeneous random graphs built by adding small atom graphs
//! according to a kernel family, together with the branching-process
//! predictions for their giant component, degrees and small subgraphs.

pub mod error;
pub mod graph;
pub mod graphstats;
pub mod branching;
pub mod kernel;
pub mod models;
pub mod percolation;
pub mod sampler;
pub mod space;

mod quad;
mod sep;

pub use error::{Error, Result};
pub use graph::{AtomShape, SmallGraph};
pub use kernel::{
    edge_density, edge_kernel, integrability_report, irreducibility_check, symmetrize,
    tau_kernel, to_hyperkernel, truncate, EdgeKernel, FamilyEntry, Hyperkernel,
    IntegrabilityReport, Irreducibility, KernelFamily, KernelFunction,
};
pub use space::{Grid, TypeSpace};
