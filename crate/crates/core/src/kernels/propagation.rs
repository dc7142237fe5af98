//! Propagation step implementations over a sparse lattice.
//!
//! All steps update the owned nodes `0..lattice.n_nodes()` and return the first node
//! whose density came out non-positive or non-finite, if any.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::field::{Layout, PdfField, State};
use crate::kernels::trt::{collide_lanes, TrtParams};
use crate::lattice_model::{D3Q19, Q};
use crate::sparse_lattice::{SparseLattice, NUM_INDIRECT};

/// Memory operations issued by a kernel, counted in elements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub pdf_loads: u64,
    pub pdf_stores: u64,
    pub index_loads: u64,
    pub block_loads: u64,
    pub updates: u64,
    /// Updates executed in uniform `V`-wide batches.
    pub batched_updates: u64,
}

pub const PDF_BYTES: u64 = 8;
pub const INDEX_BYTES: u64 = 4;
pub const BLOCK_BYTES: u64 = 4;

impl Traffic {
    pub fn bytes(&self) -> u64 {
        PDF_BYTES * (self.pdf_loads + self.pdf_stores)
            + INDEX_BYTES * self.index_loads
            + BLOCK_BYTES * self.block_loads
    }

    /// Bytes per fluid lattice update.
    pub fn loop_balance(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.bytes() as f64 / self.updates as f64
        }
    }

    pub fn batched_fraction(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.batched_updates as f64 / self.updates as f64
        }
    }
}

impl std::ops::AddAssign for Traffic {
    fn add_assign(&mut self, o: Traffic) {
        self.pdf_loads += o.pdf_loads;
        self.pdf_stores += o.pdf_stores;
        self.index_loads += o.index_loads;
        self.block_loads += o.block_loads;
        self.updates += o.updates;
        self.batched_updates += o.batched_updates;
    }
}

impl std::ops::Add for Traffic {
    type Output = Traffic;
    fn add(mut self, o: Traffic) -> Traffic {
        self += o;
        self
    }
}

#[inline]
fn healthy(rho: f64) -> bool {
    rho > 0.0 && rho.is_finite()
}

fn check_pair(src: &PdfField, dst: &PdfField, lattice: &SparseLattice) -> Result<()> {
    src.check_matches(lattice)?;
    dst.check_matches(lattice)?;
    if src.layout != Layout::Natural || dst.layout != Layout::Natural {
        return Err(Error::State("two-grid steps need natural layout".into()));
    }
    Ok(())
}

/// Two-grid pull step: gather 18 PDFs through the adjacency list plus the center,
/// collide, store all 19 to the local node of `dst`.
pub fn step_os_nt(
    src: &PdfField,
    dst: &mut PdfField,
    lattice: &SparseLattice,
    params: &TrtParams,
    traffic: &mut Traffic,
) -> Result<Option<usize>> {
    check_pair(src, dst, lattice)?;
    let s = lattice.stride();
    let adj = &lattice.adjacency;
    let n_nodes = lattice.n_nodes();
    let mut bad = None;
    for n in 0..n_nodes {
        let mut f = [[0.0; 1]; Q];
        f[0][0] = src.values[n];
        for k in 0..NUM_INDIRECT {
            f[k + 1][0] = src.values[adj.pull_index(n, k, s)];
        }
        let [rho] = collide_lanes::<1>(&mut f, params);
        if bad.is_none() && !healthy(rho) {
            bad = Some(n);
        }
        for i in 0..Q {
            dst.values[i * s + n] = f[i][0];
        }
    }
    let n = n_nodes as u64;
    traffic.pdf_loads += 19 * n;
    traffic.pdf_stores += 19 * n;
    traffic.index_loads += 18 * n;
    traffic.updates += n;
    dst.state = State::PostCollision;
    Ok(bad)
}

/// [`step_os_nt`] with reduced indirect addressing: indices are loaded once per run
/// and incremented for the following nodes of the run.
pub fn step_os_nt_ria(
    src: &PdfField,
    dst: &mut PdfField,
    lattice: &SparseLattice,
    params: &TrtParams,
    traffic: &mut Traffic,
) -> Result<Option<usize>> {
    check_pair(src, dst, lattice)?;
    let s = lattice.stride();
    let adj = &lattice.adjacency;
    let mut bad = None;
    let mut runs = 0u64;
    for (start, len) in lattice.blocks.spans() {
        runs += 1;
        let mut idx = [0usize; NUM_INDIRECT];
        for (k, v) in idx.iter_mut().enumerate() {
            *v = adj.pull_index(start, k, s);
        }
        for j in 0..len {
            let n = start + j;
            let mut f = [[0.0; 1]; Q];
            f[0][0] = src.values[n];
            for k in 0..NUM_INDIRECT {
                f[k + 1][0] = src.values[idx[k] + j];
            }
            let [rho] = collide_lanes::<1>(&mut f, params);
            if bad.is_none() && !healthy(rho) {
                bad = Some(n);
            }
            for i in 0..Q {
                dst.values[i * s + n] = f[i][0];
            }
        }
    }
    let n = lattice.n_nodes() as u64;
    traffic.pdf_loads += 19 * n;
    traffic.pdf_stores += 19 * n;
    traffic.index_loads += 18 * runs;
    traffic.block_loads += runs;
    traffic.updates += n;
    dst.state = State::PostCollision;
    Ok(bad)
}

/// Even AA step: read the node's own slots, collide, write direction `i` into slot
/// `opposite(i)`.
pub fn step_aa_even(
    field: &mut PdfField,
    lattice: &SparseLattice,
    params: &TrtParams,
    traffic: &mut Traffic,
) -> Result<Option<usize>> {
    field.check_matches(lattice)?;
    if field.layout != Layout::Natural {
        return Err(Error::State(
            "even AA step expects natural layout (parity 0)".into(),
        ));
    }
    let s = lattice.stride();
    let n_nodes = lattice.n_nodes();
    let mut bad = None;
    for n in 0..n_nodes {
        let mut f = [[0.0; 1]; Q];
        for i in 0..Q {
            f[i][0] = field.values[i * s + n];
        }
        let [rho] = collide_lanes::<1>(&mut f, params);
        if bad.is_none() && !healthy(rho) {
            bad = Some(n);
        }
        for i in 0..Q {
            field.values[D3Q19.opposite[i] * s + n] = f[i][0];
        }
    }
    let n = n_nodes as u64;
    traffic.pdf_loads += 19 * n;
    traffic.pdf_stores += 19 * n;
    traffic.updates += n;
    field.layout = Layout::Swapped;
    field.state = State::PostCollision;
    Ok(bad)
}

fn check_odd(field: &PdfField, lattice: &SparseLattice) -> Result<()> {
    field.check_matches(lattice)?;
    if field.layout != Layout::Swapped {
        return Err(Error::State(
            "odd AA step expects the layout left by an even step".into(),
        ));
    }
    Ok(())
}

/// Odd AA update of one node given its 18 gather locations (`loc[k]` holds the
/// incoming `f_{k+1}`). Results are pushed back through the same locations.
#[inline(always)]
fn aa_odd_node(
    values: &mut [f64],
    n: usize,
    loc: &[usize; NUM_INDIRECT],
    params: &TrtParams,
) -> f64 {
    let mut f = [[0.0; 1]; Q];
    f[0][0] = values[n];
    for k in 0..NUM_INDIRECT {
        f[k + 1][0] = values[loc[k]];
    }
    let [rho] = collide_lanes::<1>(&mut f, params);
    values[n] = f[0][0];
    for i in 1..Q {
        values[loc[D3Q19.opposite[i] - 1]] = f[i][0];
    }
    rho
}

/// Odd AA step: gather via the adjacency list what the even step parked at the
/// neighbors, collide, scatter the results back through the same entries.
pub fn step_aa_odd(
    field: &mut PdfField,
    lattice: &SparseLattice,
    params: &TrtParams,
    traffic: &mut Traffic,
) -> Result<Option<usize>> {
    check_odd(field, lattice)?;
    let s = lattice.stride();
    let adj = &lattice.adjacency;
    let n_nodes = lattice.n_nodes();
    let mut bad = None;
    let mut loc = [0usize; NUM_INDIRECT];
    for n in 0..n_nodes {
        for (k, l) in loc.iter_mut().enumerate() {
            *l = adj.aa_index(n, k, s);
        }
        let rho = aa_odd_node(&mut field.values, n, &loc, params);
        if bad.is_none() && !healthy(rho) {
            bad = Some(n);
        }
    }
    let n = n_nodes as u64;
    traffic.pdf_loads += 19 * n;
    traffic.pdf_stores += 19 * n;
    traffic.index_loads += 18 * n;
    traffic.updates += n;
    field.layout = Layout::Natural;
    field.state = State::PreCollision;
    Ok(bad)
}

/// Odd AA step with reduced indirect addressing.
pub fn step_aa_odd_ria(
    field: &mut PdfField,
    lattice: &SparseLattice,
    params: &TrtParams,
    traffic: &mut Traffic,
) -> Result<Option<usize>> {
    check_odd(field, lattice)?;
    let s = lattice.stride();
    let adj = &lattice.adjacency;
    let mut bad = None;
    let mut runs = 0u64;
    for (start, len) in lattice.blocks.spans() {
        runs += 1;
        let mut base = [0usize; NUM_INDIRECT];
        for (k, v) in base.iter_mut().enumerate() {
            *v = adj.aa_index(start, k, s);
        }
        for j in 0..len {
            let loc = base.map(|b| b + j);
            let rho = aa_odd_node(&mut field.values, start + j, &loc, params);
            if bad.is_none() && !healthy(rho) {
                bad = Some(start + j);
            }
        }
    }
    let n = lattice.n_nodes() as u64;
    traffic.pdf_loads += 19 * n;
    traffic.pdf_stores += 19 * n;
    traffic.index_loads += 18 * runs;
    traffic.block_loads += runs;
    traffic.updates += n;
    field.layout = Layout::Natural;
    field.state = State::PreCollision;
    Ok(bad)
}

/// Odd AA step with reduced indirect addressing and partial vectorization: inside each
/// run, `floor(len / V) * V` nodes are processed in uniform `V`-wide batches with
/// stride-incremented indices, the remainder one node at a time.
pub fn step_aa_odd_batched(
    field: &mut PdfField,
    lattice: &SparseLattice,
    params: &TrtParams,
    vector_width: usize,
    traffic: &mut Traffic,
) -> Result<Option<usize>> {
    match vector_width {
        1 => odd_batched::<1>(field, lattice, params, traffic),
        2 => odd_batched::<2>(field, lattice, params, traffic),
        4 => odd_batched::<4>(field, lattice, params, traffic),
        8 => odd_batched::<8>(field, lattice, params, traffic),
        v => Err(Error::InvalidParameter(format!(
            "vector width must be 1, 2, 4 or 8, got {v}"
        ))),
    }
}

fn odd_batched<const V: usize>(
    field: &mut PdfField,
    lattice: &SparseLattice,
    params: &TrtParams,
    traffic: &mut Traffic,
) -> Result<Option<usize>> {
    check_odd(field, lattice)?;
    let s = lattice.stride();
    let adj = &lattice.adjacency;
    let values = &mut field.values;
    let mut bad = None;
    let mut runs = 0u64;
    let mut batched = 0u64;
    for (start, len) in lattice.blocks.spans() {
        runs += 1;
        let mut base = [0usize; NUM_INDIRECT];
        for (k, v) in base.iter_mut().enumerate() {
            *v = adj.aa_index(start, k, s);
        }
        let full = len / V * V;
        let mut j = 0;
        while j < full {
            let n0 = start + j;
            let mut f = [[0.0; V]; Q];
            f[0].copy_from_slice(&values[n0..n0 + V]);
            for k in 0..NUM_INDIRECT {
                let b = base[k] + j;
                f[k + 1].copy_from_slice(&values[b..b + V]);
            }
            let rho = collide_lanes::<V>(&mut f, params);
            if bad.is_none() {
                if let Some(l) = rho.iter().position(|&r| !healthy(r)) {
                    bad = Some(n0 + l);
                }
            }
            values[n0..n0 + V].copy_from_slice(&f[0]);
            for i in 1..Q {
                let b = base[D3Q19.opposite[i] - 1] + j;
                values[b..b + V].copy_from_slice(&f[i]);
            }
            j += V;
        }
        batched += full as u64;
        for j in full..len {
            let loc = base.map(|b| b + j);
            let rho = aa_odd_node(values, start + j, &loc, params);
            if bad.is_none() && !healthy(rho) {
                bad = Some(start + j);
            }
        }
    }
    let n = lattice.n_nodes() as u64;
    traffic.pdf_loads += 19 * n;
    traffic.pdf_stores += 19 * n;
    traffic.index_loads += 18 * runs;
    traffic.block_loads += runs;
    traffic.updates += n;
    traffic.batched_updates += batched;
    field.layout = Layout::Natural;
    field.state = State::PreCollision;
    Ok(bad)
}
