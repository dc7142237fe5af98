//! D3Q19 velocity set and voxel geometries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Discrete velocity set of a DdQq lattice.
#[derive(Debug, Clone, Copy)]
pub struct VelocityModel {
    pub q: usize,
    /// Lattice velocities in lattice units per time step.
    pub c: &'static [[i32; 3]],
    /// Weights as exact rationals `(numerator, denominator)`.
    pub w_rational: &'static [(u32, u32)],
    pub w: &'static [f64],
    pub opposite: &'static [usize],
    pub center_index: usize,
}

const C19: [[i32; 3]; 19] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, -1],
    [0, 1, -1],
    [0, -1, 1],
];

const W19_RATIONAL: [(u32, u32); 19] = [
    (1, 3),
    (1, 18),
    (1, 18),
    (1, 18),
    (1, 18),
    (1, 18),
    (1, 18),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
];

const W19: [f64; 19] = [
    1.0 / 3.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

const OPP19: [usize; 19] = [
    0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17,
];

/// The D3Q19 stencil. Direction 0 is the rest velocity; non-center directions come
/// in opposite pairs `(2k-1, 2k)`.
pub const D3Q19: VelocityModel = VelocityModel {
    q: 19,
    c: &C19,
    w_rational: &W19_RATIONAL,
    w: &W19,
    opposite: &OPP19,
    center_index: 0,
};

/// Number of PDFs per node.
pub const Q: usize = 19;

impl VelocityModel {
    /// Indices of the non-center directions, in ascending order.
    pub fn non_center(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.q).filter(move |&i| i != self.center_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cell {
    Fluid = 0,
    Solid = 1,
}

/// Dense voxel grid of fluid/solid flags. Flags are stored x-major with z fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    flags: Vec<Cell>,
    pub name: String,
    /// Fluid fraction reached by the generator, if it was produced by one.
    pub achieved_porosity: Option<f64>,
}

impl Geometry {
    pub fn new(dims: [usize; 3], flags: Vec<Cell>, name: impl Into<String>) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        if dims.contains(&0) {
            return Err(Error::InvalidGeometry(format!(
                "zero dimension in {dims:?}"
            )));
        }
        if flags.len() != n {
            return Err(Error::InvalidGeometry(format!(
                "{} flags for dims {dims:?} ({n} cells)",
                flags.len()
            )));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::InvalidGeometry("dimension exceeds u32".into()));
        }
        Ok(Geometry {
            dims,
            flags,
            name: name.into(),
            achieved_porosity: None,
        })
    }

    /// Geometry with every cell set to `cell`.
    pub fn filled(dims: [usize; 3], cell: Cell, name: impl Into<String>) -> Result<Self> {
        Self::new(dims, vec![cell; dims.iter().product()], name)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> Cell {
        self.flags[self.index(x, y, z)]
    }

    #[inline]
    pub fn is_fluid(&self, x: usize, y: usize, z: usize) -> bool {
        self.get(x, y, z) == Cell::Fluid
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, cell: Cell) {
        let idx = self.index(x, y, z);
        self.flags[idx] = cell;
    }

    pub fn flags(&self) -> &[Cell] {
        &self.flags
    }

    pub fn num_cells(&self) -> usize {
        self.flags.len()
    }

    /// Fluid cells in x-major, z-fastest order.
    pub fn fluid_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [_, ny, nz] = self.dims;
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == Cell::Fluid)
            .map(move |(idx, _)| [idx / (ny * nz), (idx / nz) % ny, idx % nz])
    }
}

pub fn fluid_count(geometry: &Geometry) -> usize {
    geometry.flags.iter().filter(|&&c| c == Cell::Fluid).count()
}

/// Square-duct channel: one-node solid walls on the y and z faces, the x range is
/// entirely fluid (the channel is periodic along x).
pub fn make_channel(nx: usize, ny: usize, nz: usize) -> Result<Geometry> {
    if nx < 3 || ny < 3 || nz < 3 {
        return Err(Error::InvalidGeometry(format!(
            "channel dimensions must be >= 3, got ({nx}, {ny}, {nz})"
        )));
    }
    let mut g = Geometry::filled([nx, ny, nz], Cell::Fluid, format!("channel-{nx}x{ny}x{nz}"))?;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                if y == 0 || y == ny - 1 || z == 0 || z == nz - 1 {
                    g.set(x, y, z, Cell::Solid);
                }
            }
        }
    }
    Ok(g)
}

/// Minimum center distance between spheres, as a fraction of the diameter.
///
/// Strictly non-overlapping random sequential insertion jams at a solid fraction of
/// about 0.38, far short of fixed-bed porosities around 0.4, so neighbouring spheres
/// may interpenetrate up to this limit.
pub const FIXED_BED_MIN_SEPARATION: f64 = 0.5;

const FIXED_BED_MAX_ATTEMPTS: usize = 1_000_000;

/// Channel filled with randomly placed solid spheres of equal diameter until the
/// fluid fraction of the channel interior first drops to `target_porosity`.
///
/// Sphere centers are drawn uniformly in the fluid region of the channel, periodic in
/// x. Deterministic for a fixed seed.
pub fn make_fixed_bed(
    nx: usize,
    ny: usize,
    nz: usize,
    sphere_diameter: usize,
    target_porosity: f64,
    seed: u64,
) -> Result<Geometry> {
    if sphere_diameter < 3 {
        return Err(Error::InvalidParameter(format!(
            "sphere diameter must be >= 3, got {sphere_diameter}"
        )));
    }
    if !(target_porosity > 0.0 && target_porosity < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target porosity must lie in (0, 1), got {target_porosity}"
        )));
    }
    let mut g = make_channel(nx, ny, nz)?;
    g.name = format!("fixed-bed-{nx}x{ny}x{nz}-d{sphere_diameter}-s{seed}");

    let interior = fluid_count(&g);
    let mut fluid = interior;
    let radius = sphere_diameter as f64 / 2.0;
    let min_dist2 = (FIXED_BED_MIN_SEPARATION * sphere_diameter as f64).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<[f64; 3]> = Vec::new();
    let mut attempts = 0;

    while fluid as f64 / interior as f64 > target_porosity {
        if attempts >= FIXED_BED_MAX_ATTEMPTS {
            return Err(Error::PackingFailure {
                achieved: fluid as f64 / interior as f64,
                target: target_porosity,
                attempts,
            });
        }
        attempts += 1;
        let c = [
            rng.gen_range(0.0..nx as f64),
            rng.gen_range(1.0..(ny - 1) as f64),
            rng.gen_range(1.0..(nz - 1) as f64),
        ];
        let clear = centers.iter().all(|o| {
            let mut dx = (c[0] - o[0]).abs();
            dx = dx.min(nx as f64 - dx);
            let d2 = dx * dx + (c[1] - o[1]).powi(2) + (c[2] - o[2]).powi(2);
            d2 >= min_dist2
        });
        if !clear {
            continue;
        }
        centers.push(c);
        fluid -= rasterize_sphere(&mut g, c, radius);
    }
    g.achieved_porosity = Some(fluid as f64 / interior as f64);
    Ok(g)
}

/// Marks cell centers inside the sphere as solid (periodic in x) and returns the number
/// of cells that changed from fluid to solid.
fn rasterize_sphere(g: &mut Geometry, center: [f64; 3], radius: f64) -> usize {
    let [nx, ny, nz] = g.dims;
    let r2 = radius * radius;
    let lo = |c: f64| (c - radius - 0.5).floor() as i64;
    let hi = |c: f64| (c + radius - 0.5).ceil() as i64;
    let mut changed = 0;
    for xi in lo(center[0])..=hi(center[0]) {
        let x = xi.rem_euclid(nx as i64) as usize;
        let dx = xi as f64 + 0.5 - center[0];
        for yi in lo(center[1]).max(0)..=hi(center[1]).min(ny as i64 - 1) {
            let dy = yi as f64 + 0.5 - center[1];
            for zi in lo(center[2]).max(0)..=hi(center[2]).min(nz as i64 - 1) {
                let dz = zi as f64 + 0.5 - center[2];
                if dx * dx + dy * dy + dz * dz <= r2 && g.is_fluid(x, yi as usize, zi as usize) {
                    g.set(x, yi as usize, zi as usize, Cell::Solid);
                    changed += 1;
                }
            }
        }
    }
    changed
}

pub const GEOMETRY_MAGIC: &[u8; 4] = b"SLBM";
pub const GEOMETRY_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Writes the binary geometry format: magic, version, dims (all u32 LE) followed by
/// one byte per cell (0 fluid, 1 solid), x-major with z fastest.
pub fn write_geometry<W: Write>(geometry: &Geometry, mut out: W) -> Result<()> {
    out.write_all(GEOMETRY_MAGIC)?;
    out.write_u32::<LittleEndian>(GEOMETRY_VERSION)?;
    for &d in &geometry.dims {
        out.write_u32::<LittleEndian>(d as u32)?;
    }
    let payload: Vec<u8> = geometry.flags.iter().map(|&c| c as u8).collect();
    out.write_all(&payload)?;
    Ok(())
}

pub fn read_geometry<R: Read>(mut input: R, name: impl Into<String>) -> Result<Geometry> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match input.read(&mut header[filled..])? {
            0 => {
                return Err(Error::Parse {
                    offset: filled,
                    message: "truncated header".into(),
                })
            }
            k => filled += k,
        }
    }
    if &header[0..4] != GEOMETRY_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {:?}", &header[0..4]),
        });
    }
    let mut fields = &header[4..];
    let version = fields.read_u32::<LittleEndian>()?;
    if version != GEOMETRY_VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let mut dims = [0usize; 3];
    for (k, d) in dims.iter_mut().enumerate() {
        *d = fields.read_u32::<LittleEndian>()? as usize;
        if *d == 0 {
            return Err(Error::Parse {
                offset: 8 + 4 * k,
                message: "zero dimension".into(),
            });
        }
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::Parse {
            offset: 8,
            message: "dimension product overflows".into(),
        })?;

    let mut payload = Vec::with_capacity(n);
    input.take(n as u64 + 1).read_to_end(&mut payload)?;
    if payload.len() < n {
        return Err(Error::Parse {
            offset: HEADER_LEN + payload.len(),
            message: format!(
                "truncated payload: expected {n} bytes, got {}",
                payload.len()
            ),
        });
    }
    if payload.len() > n {
        return Err(Error::Parse {
            offset: HEADER_LEN + n,
            message: "trailing bytes after payload".into(),
        });
    }
    let mut flags = Vec::with_capacity(n);
    for (k, &b) in payload.iter().enumerate() {
        flags.push(match b {
            0 => Cell::Fluid,
            1 => Cell::Solid,
            other => {
                return Err(Error::Parse {
                    offset: HEADER_LEN + k,
                    message: format!("invalid cell flag {other}"),
                })
            }
        });
    }
    Geometry::new(dims, flags, name)
}

pub fn save_geometry(geometry: &Geometry, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_geometry(geometry, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_geometry(path: impl AsRef<Path>) -> Result<Geometry> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_geometry(BufReader::new(File::open(path)?), name)
}
