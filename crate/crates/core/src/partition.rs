//! Equal-size contiguous partitioning of an ordering, communication statistics,
//! two-stage renumbering, and an in-process multi-partition runner with ghost
//! exchange.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::enumeration::{order_hilbert, renumber_within_chunks, validate_bounds, Ordering};
use crate::error::{Error, Result};
use crate::kernels::{Counters, Macroscopic, Simulation, TrtParams, Variant};
use crate::lattice_model::{Geometry, VelocityModel, D3Q19};
use crate::sparse_lattice::{
    build_adjacency, AdjacencyList, Periodicity, SparseLattice, NUM_INDIRECT,
};

/// Bytes per exchanged PDF.
pub const GHOST_PDF_BYTES: u64 = 8;

/// Vector width used by AA-RP partitions.
const VECTOR_WIDTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionMap {
    /// `P + 1` rank offsets.
    pub chunk_bounds: Vec<usize>,
    #[serde(skip)]
    owner: Vec<u32>,
}

impl PartitionMap {
    /// Partition map from explicit bounds.
    pub fn from_bounds(chunk_bounds: Vec<usize>) -> Result<Self> {
        let len = *chunk_bounds.last().unwrap_or(&0);
        validate_bounds(&chunk_bounds, len)?;
        let mut owner = vec![0u32; len];
        for (p, w) in chunk_bounds.windows(2).enumerate() {
            owner[w[0]..w[1]].fill(p as u32);
        }
        Ok(PartitionMap {
            chunk_bounds,
            owner,
        })
    }

    pub fn num_parts(&self) -> usize {
        self.chunk_bounds.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.owner.len()
    }

    #[inline]
    pub fn owner(&self, rank: usize) -> usize {
        self.owner[rank] as usize
    }

    pub fn range(&self, p: usize) -> std::ops::Range<usize> {
        self.chunk_bounds[p]..self.chunk_bounds[p + 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.chunk_bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Cuts `ordering` into `parts` contiguous chunks whose sizes differ by at most one.
pub fn make_partition(ordering: &Ordering, parts: usize) -> Result<PartitionMap> {
    partition_len(ordering.len(), parts)
}

fn partition_len(n: usize, parts: usize) -> Result<PartitionMap> {
    if parts == 0 || parts > n {
        return Err(Error::InvalidPartition(format!(
            "partition count must lie in 1..={n}, got {parts}"
        )));
    }
    let (q, rem) = (n / parts, n % parts);
    let mut bounds = Vec::with_capacity(parts + 1);
    bounds.push(0);
    for p in 0..parts {
        bounds.push(bounds[p] + q + usize::from(p < rem));
    }
    PartitionMap::from_bounds(bounds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionComm {
    pub size: usize,
    /// PDFs pulled from other partitions per step.
    pub ghost_pdf_count: u64,
    /// PDFs other partitions pull from this one per step.
    pub outgoing_pdf_count: u64,
    pub ghost_bytes: u64,
    pub neighbor_partitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommReport {
    pub partitions: Vec<PartitionComm>,
    /// Crossing PDFs per direction, summed over all partitions.
    pub per_direction: Vec<u64>,
    pub total_ghost_bytes: u64,
    pub max_ghost_bytes: u64,
    pub mean_ghost_bytes: f64,
    pub max_neighbors: usize,
    pub mean_neighbors: f64,
}

impl CommReport {
    pub fn total_ghost_pdfs(&self) -> u64 {
        self.partitions.iter().map(|p| p.ghost_pdf_count).sum()
    }

    /// Whether every PDF received was sent by someone.
    pub fn is_symmetric(&self) -> bool {
        let outgoing: u64 = self.partitions.iter().map(|p| p.outgoing_pdf_count).sum();
        outgoing == self.total_ghost_pdfs()
    }
}

/// Ghost PDFs per partition: every adjacency entry whose source lies in another
/// partition. The count is the same for pull (OS-NT) and AA access since both touch
/// one location of the source node per entry.
pub fn comm_stats(lattice: &SparseLattice, map: &PartitionMap) -> Result<CommReport> {
    let adj = &lattice.adjacency;
    if adj.n_nodes() != map.num_nodes() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} nodes, lattice has {}",
            map.num_nodes(),
            adj.n_nodes()
        )));
    }
    let parts = map.num_parts();
    let mut incoming = vec![0u64; parts];
    let mut outgoing = vec![0u64; parts];
    let mut per_direction = vec![0u64; D3Q19.q];
    let mut touches = vec![Vec::<usize>::new(); parts];
    for p in 0..parts {
        for n in map.range(p) {
            for k in 0..NUM_INDIRECT {
                if adj.is_bounce(n, k) {
                    continue;
                }
                let q = map.owner(adj.source(n, k));
                if q != p {
                    incoming[p] += 1;
                    outgoing[q] += 1;
                    per_direction[k + 1] += 1;
                    touches[p].push(q);
                    touches[q].push(p);
                }
            }
        }
    }
    let partitions: Vec<PartitionComm> = (0..parts)
        .map(|p| {
            let t = &mut touches[p];
            t.sort_unstable();
            t.dedup();
            PartitionComm {
                size: map.range(p).len(),
                ghost_pdf_count: incoming[p],
                outgoing_pdf_count: outgoing[p],
                ghost_bytes: incoming[p] * GHOST_PDF_BYTES,
                neighbor_partitions: t.len(),
            }
        })
        .collect();
    let total_ghost_bytes = partitions.iter().map(|p| p.ghost_bytes).sum();
    Ok(CommReport {
        max_ghost_bytes: partitions.iter().map(|p| p.ghost_bytes).max().unwrap_or(0),
        mean_ghost_bytes: total_ghost_bytes as f64 / parts as f64,
        max_neighbors: partitions
            .iter()
            .map(|p| p.neighbor_partitions)
            .max()
            .unwrap_or(0),
        mean_neighbors: partitions
            .iter()
            .map(|p| p.neighbor_partitions)
            .sum::<usize>() as f64
            / parts as f64,
        partitions,
        per_direction,
        total_ghost_bytes,
    })
}

/// Mean RIA run length inside each partition. Runs never span partition borders.
pub fn partition_run_lengths(adjacency: &AdjacencyList, map: &PartitionMap) -> Vec<f64> {
    (0..map.num_parts())
        .map(|p| {
            let r = map.range(p);
            let runs = 1
                + (r.start + 1..r.end)
                    .filter(|&n| !adjacency.shifts_by_one(n - 1))
                    .count();
            r.len() as f64 / runs as f64
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Renumbered {
    /// Hilbert ordering before the second stage.
    pub hilbert: Ordering,
    pub ordering: Ordering,
    pub map: PartitionMap,
    pub lattice: SparseLattice,
}

/// Two-stage renumbering: cut the Hilbert ordering into equal chunks, then sort each
/// chunk lexicographically and rebuild the adjacency (periodic along x).
pub fn renumber_partitions(
    geometry: &Geometry,
    model: &VelocityModel,
    parts: usize,
) -> Result<Renumbered> {
    let hilbert = order_hilbert(geometry);
    let map = make_partition(&hilbert, parts)?;
    let ordering = renumber_within_chunks(&hilbert, &map.chunk_bounds)?;
    let adjacency = build_adjacency(geometry, &ordering, model, Periodicity::default())?;
    Ok(Renumbered {
        hilbert,
        ordering,
        map,
        lattice: SparseLattice::from_adjacency(adjacency, 0),
    })
}

/// A remote location mirrored by a ghost entry.
#[derive(Debug, Clone, Copy)]
struct Link {
    /// Flat index in the local field.
    local: usize,
    owner: usize,
    /// Flat index in the owner's field.
    remote: usize,
}

struct Part {
    lattice: SparseLattice,
    /// Locations this partition reads from (and, for AA, writes back to) its neighbors.
    links: Vec<Link>,
    /// `(owner, slot, owner-local node)` of each link before strides are known.
    pending: Vec<(usize, usize, usize)>,
    /// For each location owned here that others mirror: `(local, holder, holder flat)`.
    mirrors: Vec<Link>,
}

/// Builds the partition-local lattices. Owned nodes keep their relative order; ghost
/// nodes follow in ascending global rank.
fn split(global: &SparseLattice, map: &PartitionMap, aa: bool) -> Vec<Part> {
    let adj = &global.adjacency;
    let mut parts: Vec<Part> = (0..map.num_parts())
        .map(|p| {
            let range = map.range(p);
            let lo = range.start;
            let mut ghosts: Vec<u32> = range
                .clone()
                .flat_map(|n| {
                    (0..NUM_INDIRECT)
                        .filter(move |&k| !adj.is_bounce(n, k))
                        .map(move |k| (n, k))
                })
                .map(|(n, k)| adj.source(n, k) as u32)
                .filter(|&s| map.owner(s as usize) != p)
                .collect();
            ghosts.sort_unstable();
            ghosts.dedup();
            let local_of = |s: usize| -> usize {
                if map.owner(s) == p {
                    s - lo
                } else {
                    range.len() + ghosts.binary_search(&(s as u32)).unwrap()
                }
            };
            let mut sources = Vec::with_capacity(range.len() * NUM_INDIRECT);
            let mut bounced = Vec::with_capacity(range.len());
            for n in range.clone() {
                bounced.push(adj.bounce_mask(n));
                for k in 0..NUM_INDIRECT {
                    sources.push(if adj.is_bounce(n, k) {
                        (n - lo) as u32
                    } else {
                        local_of(adj.source(n, k)) as u32
                    });
                }
            }
            let local = AdjacencyList::from_parts(range.len(), sources, bounced);
            let lattice = SparseLattice::from_adjacency(local, ghosts.len());
            let stride = lattice.stride();
            let mut links = Vec::new();
            let mut pending = Vec::new();
            for n in range.clone() {
                for k in 0..NUM_INDIRECT {
                    if adj.is_bounce(n, k) {
                        continue;
                    }
                    let s = adj.source(n, k);
                    let q = map.owner(s);
                    if q == p {
                        continue;
                    }
                    let i = k + 1;
                    let slot = if aa { D3Q19.opposite[i] } else { i };
                    links.push(Link {
                        local: slot * stride + local_of(s),
                        owner: q,
                        remote: 0,
                    });
                    pending.push((q, slot, s - map.chunk_bounds[q]));
                }
            }
            Part {
                lattice,
                links,
                pending,
                mirrors: Vec::new(),
            }
        })
        .collect();
    let strides: Vec<usize> = parts.iter().map(|p| p.lattice.stride()).collect();
    for part in &mut parts {
        for (l, &(q, slot, node)) in part
            .links
            .iter_mut()
            .zip(&std::mem::take(&mut part.pending))
        {
            l.remote = slot * strides[q] + node;
        }
    }
    let mut mirrors = vec![Vec::new(); parts.len()];
    for (p, part) in parts.iter().enumerate() {
        for l in &part.links {
            mirrors[l.owner].push(Link {
                local: l.remote,
                owner: p,
                remote: l.local,
            });
        }
    }
    for (part, m) in parts.iter_mut().zip(mirrors) {
        part.mirrors = m;
    }
    parts
}

#[derive(Debug, Clone)]
pub struct PartitionedRun {
    /// Macroscopic fields in global rank order.
    pub macroscopic: Macroscopic,
    pub comm: CommReport,
    /// Bytes moved between partitions in each step.
    pub exchanged_bytes: Vec<u64>,
    pub counters: Counters,
    pub seconds: f64,
    pub mflups: f64,
    pub total_mass: f64,
}

impl PartitionedRun {
    pub fn mean_exchanged_bytes(&self) -> f64 {
        if self.exchanged_bytes.is_empty() {
            return 0.0;
        }
        self.exchanged_bytes.iter().sum::<u64>() as f64 / self.exchanged_bytes.len() as f64
    }
}

/// Copies every mirrored remote location into the local ghost entries.
fn pull_ghosts(parts: &[Part], sims: &mut [Simulation]) -> u64 {
    let incoming: Vec<Vec<f64>> = parts
        .par_iter()
        .map(|part| {
            part.links
                .iter()
                .map(|l| sims[l.owner].field().values[l.remote])
                .collect()
        })
        .collect();
    sims.par_iter_mut()
        .zip(incoming.par_iter())
        .zip(parts.par_iter())
        .for_each(|((sim, vals), part)| {
            let f = &mut sim.field_mut().values;
            for (l, &v) in part.links.iter().zip(vals) {
                f[l.local] = v;
            }
        });
    incoming.iter().map(|v| v.len() as u64).sum::<u64>() * GHOST_PDF_BYTES
}

/// Returns the values written into ghost entries to their owners.
fn push_ghosts(parts: &[Part], sims: &mut [Simulation]) -> u64 {
    let returned: Vec<Vec<f64>> = parts
        .par_iter()
        .map(|part| {
            part.mirrors
                .iter()
                .map(|m| sims[m.owner].field().values[m.remote])
                .collect()
        })
        .collect();
    sims.par_iter_mut()
        .zip(returned.par_iter())
        .zip(parts.par_iter())
        .for_each(|((sim, vals), part)| {
            let f = &mut sim.field_mut().values;
            for (m, &v) in part.mirrors.iter().zip(vals) {
                f[m.local] = v;
            }
        });
    returned.iter().map(|v| v.len() as u64).sum::<u64>() * GHOST_PDF_BYTES
}

/// Runs `n_steps` of `variant` over `parts` partitions of `ordering`, scheduled onto
/// `workers` threads (periodic along x, as [`crate::kernels::run`]).
///
/// OS-NT variants refresh all ghost entries before each step. AA variants need no
/// exchange in the even step; the odd step refreshes ghosts before and returns them
/// to their owners after, since it writes into neighbor slots. Results do not depend
/// on `parts` or `workers`.
pub fn run_partitioned(
    geometry: &Geometry,
    ordering: &Ordering,
    params: TrtParams,
    variant: Variant,
    parts: usize,
    workers: usize,
    n_steps: usize,
) -> Result<PartitionedRun> {
    if workers == 0 {
        return Err(Error::InvalidParameter(
            "worker count must be at least 1".into(),
        ));
    }
    let global = SparseLattice::build(geometry, ordering, Periodicity::default())?;
    let map = make_partition(ordering, parts)?;
    run_partitioned_lattice(
        &global,
        &map,
        params,
        variant,
        VECTOR_WIDTH,
        workers,
        n_steps,
    )
}

/// As [`run_partitioned`] on a prebuilt global lattice and partition map, with an
/// explicit AA-RP vector width.
pub fn run_partitioned_lattice(
    global: &SparseLattice,
    map: &PartitionMap,
    params: TrtParams,
    variant: Variant,
    vector_width: usize,
    workers: usize,
    n_steps: usize,
) -> Result<PartitionedRun> {
    let comm = comm_stats(global, map)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
    let parts = split(global, map, variant.is_aa());
    let mut sims = parts
        .iter()
        .map(|p| Simulation::new(&p.lattice, variant, params, vector_width))
        .collect::<Result<Vec<_>>>()?;

    let start = Instant::now();
    let mut exchanged_bytes = Vec::with_capacity(n_steps);
    pool.install(|| -> Result<()> {
        for t in 0..n_steps {
            let odd = t % 2 == 1;
            let mut bytes = 0;
            if !variant.is_aa() || odd {
                bytes += pull_ghosts(&parts, &mut sims);
            }
            sims.par_iter_mut()
                .zip(parts.par_iter())
                .map(|(sim, part)| sim.step(&part.lattice))
                .collect::<Result<Vec<()>>>()?;
            if variant.is_aa() && odd {
                bytes += push_ghosts(&parts, &mut sims);
            }
            exchanged_bytes.push(bytes);
        }
        Ok(())
    })?;
    let seconds = start.elapsed().as_secs_f64();

    let mut counters = Counters::default();
    let mut macroscopic = Macroscopic {
        density: Vec::with_capacity(map.num_nodes()),
        velocity: Vec::with_capacity(map.num_nodes()),
    };
    for sim in &sims {
        counters.even += sim.counters.even;
        counters.odd += sim.counters.odd;
        let m = sim.macroscopic();
        macroscopic.density.extend(m.density);
        macroscopic.velocity.extend(m.velocity);
    }
    let updates = counters.total().updates as f64;
    Ok(PartitionedRun {
        total_mass: macroscopic.total_mass(),
        mflups: if seconds > 0.0 {
            updates / seconds / 1e6
        } else {
            0.0
        },
        macroscopic,
        comm,
        exchanged_bytes,
        counters,
        seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::order_lexicographic;
    use crate::kernels::run_lattice;
    use crate::lattice_model::{make_channel, Cell};

    #[test]
    fn chunk_sizes() {
        assert_eq!(partition_len(10, 3).unwrap().sizes(), vec![4, 3, 3]);
        assert_eq!(partition_len(10, 1).unwrap().sizes(), vec![10]);
        assert_eq!(partition_len(5, 5).unwrap().sizes(), vec![1; 5]);
        assert!(partition_len(5, 6).is_err());
        assert!(partition_len(5, 0).is_err());
        let m = partition_len(10, 3).unwrap();
        assert_eq!(
            (0..10).map(|r| m.owner(r)).collect::<Vec<_>>(),
            [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]
        );
    }

    #[test]
    fn single_partition_has_no_ghosts() {
        let g = make_channel(16, 8, 8).unwrap();
        let o = order_lexicographic(&g, 1).unwrap();
        let l = SparseLattice::build(&g, &o, Periodicity::default()).unwrap();
        let c = comm_stats(&l, &make_partition(&o, 1).unwrap()).unwrap();
        assert_eq!(c.total_ghost_bytes, 0);
        assert_eq!(c.partitions[0].neighbor_partitions, 0);
    }

    #[test]
    fn slab_partitions_of_channel() {
        let g = make_channel(32, 8, 8).unwrap();
        let o = order_lexicographic(&g, 1).unwrap();
        let l = SparseLattice::build(&g, &o, Periodicity::default()).unwrap();
        let c = comm_stats(&l, &make_partition(&o, 4).unwrap()).unwrap();
        assert!(c.is_symmetric());
        let face = 6 * 6;
        for p in &c.partitions {
            assert_eq!(p.neighbor_partitions, 2);
            // two faces (x-periodic), 5 directions each; the four diagonal directions
            // bounce off the wall along one edge row of the face
            let wall_bounces = 4 * 6;
            assert_eq!(p.ghost_pdf_count, 2 * (5 * face - wall_bounces) as u64);
        }
    }

    #[test]
    fn renumbering_keeps_membership() {
        let g = make_channel(32, 12, 12).unwrap();
        let r = renumber_partitions(&g, &D3Q19, 4).unwrap();
        for p in 0..4 {
            let mut a = r.hilbert.nodes()[r.map.range(p)].to_vec();
            let b = &r.ordering.nodes()[r.map.range(p)];
            a.sort_unstable();
            assert_eq!(a, b);
        }
        let single = renumber_partitions(&g, &D3Q19, 1).unwrap();
        assert_eq!(
            single.ordering.nodes(),
            order_lexicographic(&g, 1).unwrap().nodes()
        );
    }

    fn check_against_single(
        g: &Geometry,
        variant: Variant,
        parts: usize,
        workers: usize,
        steps: usize,
    ) {
        let params = TrtParams::new(1.2, 0.25, [1e-5, 0.0, 0.0]).unwrap();
        let o = order_lexicographic(g, 1).unwrap();
        let l = SparseLattice::build(g, &o, Periodicity::default()).unwrap();
        let single = run_lattice(&l, variant, params, VECTOR_WIDTH, steps).unwrap();
        let reference = crate::kernels::macroscopic(&single.field, &params);
        let part = run_partitioned(g, &o, params, variant, parts, workers, steps).unwrap();
        assert_eq!(
            part.macroscopic, reference,
            "{variant} P={parts} W={workers}"
        );
        let ghost = part.comm.total_ghost_bytes as f64;
        if variant.is_aa() {
            assert_eq!(part.exchanged_bytes[0], 0);
            if steps.is_multiple_of(2) {
                assert_eq!(part.mean_exchanged_bytes(), ghost);
            }
        } else {
            assert!(part.exchanged_bytes.iter().all(|&b| b as f64 == ghost));
        }
    }

    #[test]
    fn partitioned_runs_match_single() {
        let g = make_channel(24, 7, 6).unwrap();
        for v in Variant::ALL {
            for (p, w) in [(1, 1), (3, 2), (5, 1), (8, 3)] {
                check_against_single(&g, v, p, w, 6);
            }
        }
    }

    #[test]
    fn partitioned_porous_geometry() {
        let mut g = make_channel(12, 9, 9).unwrap();
        for (x, y, z) in [(3, 4, 4), (4, 4, 4), (8, 2, 6), (0, 5, 3), (11, 5, 3)] {
            g.set(x, y, z, Cell::Solid);
        }
        for v in Variant::ALL {
            check_against_single(&g, v, 7, 2, 5);
        }
    }
}
