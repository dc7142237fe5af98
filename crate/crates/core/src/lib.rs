//! Sparse-lattice lattice Boltzmann engine.
//!
//! Fluid nodes of a voxel geometry are flattened into a 1-D vector according to an
//! enumeration function (blocked lexicographic order or a Hilbert curve). Neighbor
//! access goes through an adjacency list, optionally compressed with run-length coded
//! reduced indirect addressing (RIA). On top of that live the propagation kernels
//! (OS-NT, AA and their RIA / partially vectorized variants), the analytic performance
//! models (loop balance, Roofline, ECM) and a partitioning harness that measures
//! communication volume and runs multi-partition simulations in-process.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod enumeration;
pub mod error;
pub mod kernels;
pub mod lattice_model;
pub mod partition;
pub mod perfmodel;
pub mod sparse_lattice;

pub use enumeration::{
    order_hilbert, order_lexicographic, renumber_within_chunks, Method, Ordering,
};
pub use error::{Error, Result};
pub use kernels::{
    macroscopic, run, Counters, Macroscopic, PdfField, RunReport, TrtParams, Variant,
};
pub use lattice_model::{
    fluid_count, load_geometry, make_channel, make_fixed_bed, save_geometry, Cell, Geometry,
    VelocityModel, D3Q19,
};
pub use partition::{
    comm_stats, make_partition, renumber_partitions, run_partitioned, CommReport, PartitionMap,
};
pub use perfmodel::{
    ecm_predict, in_cache_loop_balance, loop_balance, nets, roofline, MachineModel,
};
pub use sparse_lattice::{
    build_adjacency, build_block_vector, ria_stats, AdjacencyList, BlockVector, Periodicity,
    RiaStats, SparseLattice,
};
