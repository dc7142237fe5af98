//! Enumeration functions: the order in which fluid nodes are laid out in the 1-D
//! sparse representation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice_model::Geometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Lexicographic sorting with blocking factor `B`.
    Lexicographic(usize),
    Hilbert,
    /// Any ordering whose ranges were re-sorted lexicographically after partitioning.
    Renumbered,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Lexicographic(b) => write!(f, "ls:{b}"),
            Method::Hilbert => write!(f, "hilbert"),
            Method::Renumbered => write!(f, "renumbered"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("hilbert") {
            return Ok(Method::Hilbert);
        }
        if let Some(b) = s.strip_prefix("ls:").or_else(|| s.strip_prefix("LS:")) {
            let b: usize = b
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad blocking factor in {s:?}")))?;
            if b < 1 {
                return Err(Error::InvalidParameter(
                    "blocking factor must be >= 1".into(),
                ));
            }
            return Ok(Method::Lexicographic(b));
        }
        if s.eq_ignore_ascii_case("ls") {
            return Ok(Method::Lexicographic(1));
        }
        Err(Error::InvalidParameter(format!(
            "unknown ordering {s:?} (expected ls:B or hilbert)"
        )))
    }
}

/// A permutation of the fluid nodes of a geometry.
#[derive(Debug, Clone)]
pub struct Ordering {
    nodes: Vec<[u32; 3]>,
    /// Dense cell index -> rank, `u32::MAX` for solid cells.
    inverse: Vec<u32>,
    dims: [usize; 3],
    pub method: Method,
}

pub(crate) const NO_RANK: u32 = u32::MAX;

impl Ordering {
    fn from_nodes(geometry: &Geometry, nodes: Vec<[u32; 3]>, method: Method) -> Self {
        let mut inverse = vec![NO_RANK; geometry.num_cells()];
        for (rank, n) in nodes.iter().enumerate() {
            inverse[geometry.index(n[0] as usize, n[1] as usize, n[2] as usize)] = rank as u32;
        }
        Ordering {
            nodes,
            inverse,
            dims: geometry.dims,
            method,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[u32; 3]] {
        &self.nodes
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Rank of the fluid node at `(x, y, z)`, or `None` for solid/out-of-range cells.
    pub fn rank_of(&self, x: usize, y: usize, z: usize) -> Option<usize> {
        let [nx, ny, nz] = self.dims;
        if x >= nx || y >= ny || z >= nz {
            return None;
        }
        match self.inverse[(x * ny + y) * nz + z] {
            NO_RANK => None,
            r => Some(r as usize),
        }
    }

    pub(crate) fn inverse(&self) -> &[u32] {
        &self.inverse
    }

    /// Checks that this ordering is a permutation of exactly the fluid cells of
    /// `geometry`.
    pub fn is_permutation_of(&self, geometry: &Geometry) -> bool {
        if self.dims != geometry.dims || self.nodes.len() != crate::fluid_count(geometry) {
            return false;
        }
        let mut seen = vec![false; geometry.num_cells()];
        for n in &self.nodes {
            let (x, y, z) = (n[0] as usize, n[1] as usize, n[2] as usize);
            if !geometry.is_fluid(x, y, z) {
                return false;
            }
            let idx = geometry.index(x, y, z);
            if std::mem::replace(&mut seen[idx], true) {
                return false;
            }
        }
        self.nodes
            .iter()
            .enumerate()
            .all(|(k, n)| self.rank_of(n[0] as usize, n[1] as usize, n[2] as usize) == Some(k))
    }
}

pub fn order(geometry: &Geometry, method: Method) -> Result<Ordering> {
    match method {
        Method::Lexicographic(b) => order_lexicographic(geometry, b),
        Method::Hilbert => Ok(order_hilbert(geometry)),
        Method::Renumbered => Err(Error::InvalidParameter(
            "renumbered orderings are produced by partitioning".into(),
        )),
    }
}

/// Sorts fluid nodes by `(x/B, y/B, z/B, x%B, y%B, z%B)`.
///
/// Blocks are visited in x-major order and nodes inside a block in x-major order
/// as well. With `B = 1` this is plain (x, y, z) order.
pub fn order_lexicographic(geometry: &Geometry, blocking: usize) -> Result<Ordering> {
    if blocking < 1 {
        return Err(Error::InvalidParameter(
            "blocking factor must be >= 1".into(),
        ));
    }
    let [nx, ny, nz] = geometry.dims;
    let b = blocking;
    let mut nodes = Vec::with_capacity(crate::fluid_count(geometry));
    // Walking blocks then intra-block offsets generates the keys in sorted order.
    for bx in (0..nx).step_by(b) {
        for by in (0..ny).step_by(b) {
            for bz in (0..nz).step_by(b) {
                for x in bx..(bx + b).min(nx) {
                    for y in by..(by + b).min(ny) {
                        for z in bz..(bz + b).min(nz) {
                            if geometry.is_fluid(x, y, z) {
                                nodes.push([x as u32, y as u32, z as u32]);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Ordering::from_nodes(
        geometry,
        nodes,
        Method::Lexicographic(blocking),
    ))
}

/// Fluid nodes in the order of a 3-D Hilbert curve through the smallest enclosing
/// power-of-two cube.
pub fn order_hilbert(geometry: &Geometry) -> Ordering {
    let [nx, ny, nz] = geometry.dims;
    let side = nx.max(ny).max(nz).next_power_of_two();
    let bits = side.trailing_zeros();
    let mut keyed: Vec<(u64, [u32; 3])> = geometry
        .fluid_cells()
        .map(|[x, y, z]| {
            let p = [x as u32, y as u32, z as u32];
            (hilbert_index(p, bits), p)
        })
        .collect();
    keyed.sort_unstable_by_key(|&(k, _)| k);
    let nodes = keyed.into_iter().map(|(_, p)| p).collect();
    Ordering::from_nodes(geometry, nodes, Method::Hilbert)
}

/// Hilbert index of a point on a `2^bits` cube (Skilling's transpose algorithm).
pub fn hilbert_index(point: [u32; 3], bits: u32) -> u64 {
    if bits == 0 {
        return 0;
    }
    let mut x = point;
    let m = 1u32 << (bits - 1);

    // inverse undo excess work
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..3 {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    // Gray encode
    for i in 1..3 {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[2] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in &mut x {
        *v ^= t;
    }

    // interleave the transposed representation, x[0] carrying the most significant bit
    let mut h = 0u64;
    for b in (0..bits).rev() {
        for v in &x {
            h = (h << 1) | ((v >> b) & 1) as u64;
        }
    }
    h
}

/// Re-sorts each contiguous range of `ordering` into plain (x, y, z) order. Range
/// membership is unchanged.
pub fn renumber_within_chunks(ordering: &Ordering, chunk_bounds: &[usize]) -> Result<Ordering> {
    validate_bounds(chunk_bounds, ordering.len())?;
    let mut nodes = ordering.nodes.clone();
    for w in chunk_bounds.windows(2) {
        nodes[w[0]..w[1]].sort_unstable();
    }
    let mut inverse = ordering.inverse.clone();
    let [_, ny, nz] = ordering.dims;
    for (rank, n) in nodes.iter().enumerate() {
        inverse[(n[0] as usize * ny + n[1] as usize) * nz + n[2] as usize] = rank as u32;
    }
    Ok(Ordering {
        nodes,
        inverse,
        dims: ordering.dims,
        method: Method::Renumbered,
    })
}

pub(crate) fn validate_bounds(bounds: &[usize], len: usize) -> Result<()> {
    if bounds.len() < 2 {
        return Err(Error::InvalidPartition("need at least two bounds".into()));
    }
    if bounds[0] != 0 || *bounds.last().unwrap() != len {
        return Err(Error::InvalidPartition(format!(
            "bounds must cover 0..{len}, got {}..{}",
            bounds[0],
            bounds.last().unwrap()
        )));
    }
    if bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidPartition(
            "bounds must be strictly increasing".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_model::{make_channel, Cell};

    fn cube(n: usize) -> Geometry {
        Geometry::filled([n, n, n], Cell::Fluid, "cube").unwrap()
    }

    #[test]
    fn ls_blocking_matches_oracle_sort() {
        let g = cube(4);
        let o = order_lexicographic(&g, 2).unwrap();
        let mut oracle: Vec<[u32; 3]> = g.fluid_cells().map(|p| p.map(|v| v as u32)).collect();
        oracle.sort_by_key(|p| (p[0] / 2, p[1] / 2, p[2] / 2, p[0] % 2, p[1] % 2, p[2] % 2));
        assert_eq!(o.nodes(), &oracle[..]);
        let first: Vec<[u32; 3]> = o.nodes()[..8].to_vec();
        let mut block = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    block.push([x, y, z]);
                }
            }
        }
        assert_eq!(first, block);
    }

    #[test]
    fn ls_b1_equals_full_width_blocking_on_channel() {
        let g = make_channel(50, 20, 20).unwrap();
        let a = order_lexicographic(&g, 1).unwrap();
        let b = order_lexicographic(&g, 20).unwrap();
        assert_eq!(a.nodes(), b.nodes());
    }

    #[test]
    fn single_row_any_blocking() {
        let g = Geometry::filled([1, 1, 9], Cell::Fluid, "row").unwrap();
        for b in [1, 2, 4, 7] {
            let o = order_lexicographic(&g, b).unwrap();
            let zs: Vec<u32> = o.nodes().iter().map(|p| p[2]).collect();
            assert_eq!(zs, (0..9).collect::<Vec<_>>());
        }
    }

    #[test]
    fn ls_rejects_zero_blocking() {
        assert!(order_lexicographic(&cube(2), 0).is_err());
    }

    #[test]
    fn ls_z_increments_within_column() {
        let g = make_channel(6, 5, 7).unwrap();
        let o = order_lexicographic(&g, 1).unwrap();
        for w in o.nodes().windows(2) {
            if w[0][0] == w[1][0] && w[0][1] == w[1][1] {
                assert_eq!(w[1][2], w[0][2] + 1);
            }
        }
    }

    #[test]
    fn hilbert_unit_steps_on_2_cube() {
        let o = order_hilbert(&cube(2));
        assert_eq!(o.len(), 8);
        for w in o.nodes().windows(2) {
            let d: i64 = (0..3)
                .map(|a| (w[0][a] as i64 - w[1][a] as i64).abs())
                .sum();
            assert_eq!(d, 1, "{:?} -> {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn hilbert_unit_steps_on_larger_cubes() {
        for n in [4, 8, 16] {
            let o = order_hilbert(&cube(n));
            assert!(o.is_permutation_of(&cube(n)));
            for w in o.nodes().windows(2) {
                let d: i64 = (0..3)
                    .map(|a| (w[0][a] as i64 - w[1][a] as i64).abs())
                    .sum();
                assert_eq!(d, 1);
            }
        }
    }

    #[test]
    fn hilbert_single_node() {
        let g = Geometry::filled([1, 1, 1], Cell::Fluid, "one").unwrap();
        assert_eq!(order_hilbert(&g).nodes(), &[[0, 0, 0]]);
    }

    /// Geometric mean of the rank distance between face neighbors. The arithmetic mean
    /// is dominated by the few pairs straddling the curve's top-level octants.
    fn mean_neighbor_rank_distance(o: &Ordering) -> f64 {
        let mut total = 0f64;
        let mut count = 0u64;
        for (k, p) in o.nodes().iter().enumerate() {
            for a in 0..3 {
                let mut q = [p[0] as usize, p[1] as usize, p[2] as usize];
                q[a] += 1;
                if let Some(r) = o.rank_of(q[0], q[1], q[2]) {
                    total += ((r as i64 - k as i64).unsigned_abs() as f64).ln();
                    count += 1;
                }
            }
        }
        (total / count as f64).exp()
    }

    #[test]
    fn hilbert_is_more_local_than_ls() {
        let g = make_channel(64, 16, 16).unwrap();
        let h = mean_neighbor_rank_distance(&order_hilbert(&g));
        let ls = mean_neighbor_rank_distance(&order_lexicographic(&g, 1).unwrap());
        assert!(h < ls, "hilbert {h} vs ls {ls}");
    }

    #[test]
    fn renumber_single_chunk_is_ls() {
        let g = make_channel(16, 8, 8).unwrap();
        let h = order_hilbert(&g);
        let r = renumber_within_chunks(&h, &[0, h.len()]).unwrap();
        assert_eq!(r.nodes(), order_lexicographic(&g, 1).unwrap().nodes());
        assert!(r.is_permutation_of(&g));
    }

    #[test]
    fn renumber_preserves_chunk_sets() {
        let g = make_channel(32, 10, 10).unwrap();
        let h = order_hilbert(&g);
        let n = h.len();
        let bounds: Vec<usize> = (0..=8).map(|p| p * n / 8).collect();
        let r = renumber_within_chunks(&h, &bounds).unwrap();
        assert!(r.is_permutation_of(&g));
        for w in bounds.windows(2) {
            let mut a = h.nodes()[w[0]..w[1]].to_vec();
            let mut b = r.nodes()[w[0]..w[1]].to_vec();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn renumber_rejects_bad_bounds() {
        let g = make_channel(8, 4, 4).unwrap();
        let o = order_lexicographic(&g, 1).unwrap();
        let n = o.len();
        assert!(renumber_within_chunks(&o, &[0, 5, 3, n]).is_err());
        assert!(renumber_within_chunks(&o, &[0, n - 1]).is_err());
        assert!(renumber_within_chunks(&o, &[1, n]).is_err());
        assert!(renumber_within_chunks(&o, &[0]).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("ls:4".parse::<Method>().unwrap(), Method::Lexicographic(4));
        assert_eq!("hilbert".parse::<Method>().unwrap(), Method::Hilbert);
        assert!("ls:0".parse::<Method>().is_err());
        assert!("morton".parse::<Method>().is_err());
    }
}
