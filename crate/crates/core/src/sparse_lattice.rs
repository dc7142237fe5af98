//! 1-D sparse representation of the fluid nodes: the adjacency list used for
//! indirect PDF access and its run-length coded block vector (RIA).
//!
//! PDFs live in a slot-major vector: all nodes' direction-0 values, then direction 1,
//! and so on, each direction occupying `stride` entries. A flat index is therefore
//! `slot * stride + rank`.

use serde::{Deserialize, Serialize};

use crate::enumeration::{Ordering, NO_RANK};
use crate::error::{Error, Result};
use crate::lattice_model::{Geometry, VelocityModel, D3Q19, Q};

/// Number of indirectly addressed directions per node.
pub const NUM_INDIRECT: usize = Q - 1;

/// Non-center direction addressed by adjacency column `k`.
#[inline]
pub const fn direction_of(k: usize) -> usize {
    k + 1
}

/// Axes along which neighbor lookups wrap around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Periodicity {
    pub x: bool,
    pub y: bool,
    pub z: bool,
}

impl Default for Periodicity {
    /// Periodic along x only (the channel's flow direction).
    fn default() -> Self {
        Periodicity {
            x: true,
            y: false,
            z: false,
        }
    }
}

impl Periodicity {
    pub const NONE: Periodicity = Periodicity {
        x: false,
        y: false,
        z: false,
    };

    fn axis(&self, a: usize) -> bool {
        [self.x, self.y, self.z][a]
    }
}

/// One adjacency entry: where the PDF for a direction is pulled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub rank: usize,
    pub slot: usize,
}

/// For each node and each of the 18 non-center directions `i`, the node the PDF
/// `f_i` is pulled from (the upstream neighbor at `x - c_i`), or the node itself when
/// that neighbor is solid (halfway bounce-back).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyList {
    n_nodes: usize,
    sources: Vec<u32>,
    /// Bit `k` set when column `k` bounces back at a wall.
    bounced: Vec<u32>,
}

impl AdjacencyList {
    /// Bytes per index entry used for traffic accounting.
    pub const BYTES_PER_ENTRY: usize = 4;

    pub(crate) fn from_parts(n_nodes: usize, sources: Vec<u32>, bounced: Vec<u32>) -> Self {
        debug_assert_eq!(sources.len(), n_nodes * NUM_INDIRECT);
        debug_assert_eq!(bounced.len(), n_nodes);
        AdjacencyList {
            n_nodes,
            sources,
            bounced,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn num_entries(&self) -> usize {
        self.sources.len()
    }

    #[inline]
    pub fn source(&self, node: usize, k: usize) -> usize {
        self.sources[node * NUM_INDIRECT + k] as usize
    }

    #[inline]
    pub fn is_bounce(&self, node: usize, k: usize) -> bool {
        self.bounced[node] >> k & 1 == 1
    }

    #[inline]
    pub fn row(&self, node: usize) -> &[u32] {
        &self.sources[node * NUM_INDIRECT..(node + 1) * NUM_INDIRECT]
    }

    #[inline]
    pub fn bounce_mask(&self, node: usize) -> u32 {
        self.bounced[node]
    }

    /// Entry for direction `i` (1..19) under the pull convention: `(upstream, i)` for a
    /// fluid neighbor, `(node, opposite(i))` at a wall.
    pub fn entry(&self, node: usize, i: usize) -> Entry {
        let k = i - 1;
        if self.is_bounce(node, k) {
            Entry {
                rank: node,
                slot: D3Q19.opposite[i],
            }
        } else {
            Entry {
                rank: self.source(node, k),
                slot: i,
            }
        }
    }

    /// Flat index of the pull-convention entry.
    #[inline]
    pub fn pull_index(&self, node: usize, k: usize, stride: usize) -> usize {
        let i = direction_of(k);
        if self.is_bounce(node, k) {
            D3Q19.opposite[i] * stride + node
        } else {
            i * stride + self.source(node, k)
        }
    }

    /// Flat index used by the odd AA step for direction `i = k + 1`: the location that
    /// the even step parked the incoming `f_i` in. Slot `opposite(i)` of the upstream
    /// node, or slot `i` of the node itself at a wall.
    #[inline]
    pub fn aa_index(&self, node: usize, k: usize, stride: usize) -> usize {
        let i = direction_of(k);
        if self.is_bounce(node, k) {
            i * stride + node
        } else {
            D3Q19.opposite[i] * stride + self.source(node, k)
        }
    }

    /// Whether node `n + 1` accesses exactly the locations of node `n` shifted by one.
    #[inline]
    pub fn shifts_by_one(&self, n: usize) -> bool {
        if self.bounced[n] != self.bounced[n + 1] {
            return false;
        }
        self.row(n)
            .iter()
            .zip(self.row(n + 1))
            .all(|(&a, &b)| a.wrapping_add(1) == b)
    }
}

/// Run lengths of consecutive nodes sharing the same access pattern shifted by one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockVector {
    pub runs: Vec<u32>,
}

impl BlockVector {
    pub const BYTES_PER_ENTRY: usize = 4;

    pub fn num_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn total_nodes(&self) -> usize {
        self.runs.iter().map(|&r| r as usize).sum()
    }

    /// `(start, len)` for each run.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.runs.iter().scan(0usize, |start, &len| {
            let s = *start;
            *start += len as usize;
            Some((s, len as usize))
        })
    }
}

/// Builds the pull-scheme adjacency list for `ordering`.
///
/// Fails if a fluid node's neighbor falls outside the domain along a non-periodic axis.
pub fn build_adjacency(
    geometry: &Geometry,
    ordering: &Ordering,
    model: &VelocityModel,
    periodicity: Periodicity,
) -> Result<AdjacencyList> {
    if model.q != Q {
        return Err(Error::InvalidParameter(format!(
            "sparse lattice supports D3Q19 only, got q = {}",
            model.q
        )));
    }
    if ordering.dims() != geometry.dims {
        return Err(Error::Shape(format!(
            "ordering dims {:?} differ from geometry dims {:?}",
            ordering.dims(),
            geometry.dims
        )));
    }
    let dims = geometry.dims;
    let inverse = ordering.inverse();
    let n_nodes = ordering.len();
    let mut sources = Vec::with_capacity(n_nodes * NUM_INDIRECT);
    let mut bounced = Vec::with_capacity(n_nodes);

    for (rank, p) in ordering.nodes().iter().enumerate() {
        let mut mask = 0u32;
        for k in 0..NUM_INDIRECT {
            let c = model.c[direction_of(k)];
            let mut q = [0usize; 3];
            for a in 0..3 {
                let v = p[a] as i64 - c[a] as i64;
                let n = dims[a] as i64;
                q[a] = if (0..n).contains(&v) {
                    v as usize
                } else if periodicity.axis(a) {
                    v.rem_euclid(n) as usize
                } else {
                    return Err(Error::Topology {
                        x: p[0] as usize,
                        y: p[1] as usize,
                        z: p[2] as usize,
                        direction: direction_of(k),
                    });
                };
            }
            match inverse[geometry.index(q[0], q[1], q[2])] {
                NO_RANK => {
                    mask |= 1 << k;
                    sources.push(rank as u32);
                }
                m => sources.push(m),
            }
        }
        bounced.push(mask);
    }
    Ok(AdjacencyList::from_parts(n_nodes, sources, bounced))
}

/// Greedy single-pass run-length coding of the adjacency list.
pub fn build_block_vector(adjacency: &AdjacencyList) -> BlockVector {
    let n = adjacency.n_nodes();
    let mut runs = Vec::new();
    if n == 0 {
        return BlockVector { runs };
    }
    let mut len = 1u32;
    for node in 0..n - 1 {
        if adjacency.shifts_by_one(node) {
            len += 1;
        } else {
            runs.push(len);
            len = 1;
        }
    }
    runs.push(len);
    BlockVector { runs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiaStats {
    pub runs: usize,
    pub nodes: usize,
    /// Runs per fluid node.
    pub r: f64,
    pub mean_run_length: f64,
    pub vectorizable_fraction: f64,
    pub vector_width: usize,
}

/// Run statistics for vector width `v`. The vectorizable fraction counts the nodes
/// covered by whole `v`-wide batches inside runs.
pub fn ria_stats(blocks: &BlockVector, v: usize) -> Result<RiaStats> {
    if v < 1 {
        return Err(Error::InvalidParameter("vector width must be >= 1".into()));
    }
    let nodes = blocks.total_nodes();
    let runs = blocks.num_runs();
    let batched: usize = blocks.runs.iter().map(|&l| l as usize / v * v).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(RiaStats {
        runs,
        nodes,
        r: ratio(runs, nodes),
        mean_run_length: ratio(nodes, runs),
        vectorizable_fraction: ratio(batched, nodes),
        vector_width: v,
    })
}

/// An adjacency list, its block vector and the field layout it indexes into.
///
/// `n_nodes` nodes are updated by the kernels; `n_ghost` further entries after them
/// hold copies of remote nodes when the lattice belongs to a partition.
#[derive(Debug, Clone)]
pub struct SparseLattice {
    pub adjacency: AdjacencyList,
    pub blocks: BlockVector,
    n_ghost: usize,
    padding: usize,
}

impl SparseLattice {
    pub fn build(
        geometry: &Geometry,
        ordering: &Ordering,
        periodicity: Periodicity,
    ) -> Result<Self> {
        let adjacency = build_adjacency(geometry, ordering, &D3Q19, periodicity)?;
        Ok(Self::from_adjacency(adjacency, 0))
    }

    pub fn from_adjacency(adjacency: AdjacencyList, n_ghost: usize) -> Self {
        let blocks = build_block_vector(&adjacency);
        SparseLattice {
            adjacency,
            blocks,
            n_ghost,
            padding: 0,
        }
    }

    /// Extra unused entries appended to every direction of the PDF vector. Has no
    /// effect on results.
    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_nodes()
    }

    pub fn n_ghost(&self) -> usize {
        self.n_ghost
    }

    /// Distance between consecutive directions in the PDF vector.
    pub fn stride(&self) -> usize {
        self.n_nodes() + self.n_ghost + self.padding
    }
}
