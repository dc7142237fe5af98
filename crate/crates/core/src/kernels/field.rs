use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::trt::{collide_lanes, equilibrium, TrtParams};
use crate::lattice_model::{D3Q19, Q};
use crate::sparse_lattice::SparseLattice;

/// Where each direction's value sits in the slots of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Layout {
    /// `f_i` in slot `i`.
    Natural,
    /// `f_i` in slot `opposite(i)`: the state right after an even AA step.
    Swapped,
}

/// Whether the stored values have already been collided for the current time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum State {
    PreCollision,
    PostCollision,
}

/// Slot-major PDF storage: `values[i * stride + node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfField {
    pub values: Vec<f64>,
    stride: usize,
    n_nodes: usize,
    pub layout: Layout,
    pub state: State,
}

impl PdfField {
    pub fn zeros(lattice: &SparseLattice) -> Self {
        PdfField {
            values: vec![0.0; Q * lattice.stride()],
            stride: lattice.stride(),
            n_nodes: lattice.n_nodes(),
            layout: Layout::Natural,
            state: State::PreCollision,
        }
    }

    /// Every node (including ghosts and padding) at the given equilibrium.
    pub fn equilibrium(lattice: &SparseLattice, rho: f64, u: [f64; 3]) -> Self {
        let mut field = Self::zeros(lattice);
        let feq = equilibrium(rho, u);
        for (i, chunk) in field.values.chunks_mut(field.stride).enumerate() {
            chunk.fill(feq[i]);
        }
        field
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn get(&self, node: usize, slot: usize) -> f64 {
        self.values[slot * self.stride + node]
    }

    #[inline]
    pub fn set(&mut self, node: usize, slot: usize, v: f64) {
        self.values[slot * self.stride + node] = v;
    }

    /// The 19 PDFs of a node in natural direction order, whatever the layout.
    pub fn node(&self, node: usize) -> [f64; Q] {
        let mut f = [0.0; Q];
        for (i, v) in f.iter_mut().enumerate() {
            let slot = match self.layout {
                Layout::Natural => i,
                Layout::Swapped => D3Q19.opposite[i],
            };
            *v = self.get(node, slot);
        }
        f
    }

    pub fn set_node(&mut self, node: usize, f: &[f64; Q]) {
        for (i, &v) in f.iter().enumerate() {
            let slot = match self.layout {
                Layout::Natural => i,
                Layout::Swapped => D3Q19.opposite[i],
            };
            self.set(node, slot, v);
        }
    }

    pub fn check_matches(&self, lattice: &SparseLattice) -> Result<()> {
        if self.stride != lattice.stride() || self.values.len() != Q * lattice.stride() {
            return Err(Error::Shape(format!(
                "field stride {} (len {}) does not match lattice stride {}",
                self.stride,
                self.values.len(),
                lattice.stride()
            )));
        }
        Ok(())
    }

    /// Collides every owned node in place without propagation. Turns a
    /// pre-collision state into the matching post-collision state.
    pub fn collide_in_place(&mut self, params: &TrtParams) {
        for n in 0..self.n_nodes {
            let mut f = self.node(n).map(|v| [v]);
            collide_lanes::<1>(&mut f, params);
            self.set_node(n, &f.map(|[v]| v));
        }
        self.state = State::PostCollision;
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.n_nodes)
            .map(|n| self.node(n).iter().sum::<f64>())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        (0..Q).all(|i| {
            self.values[i * self.stride..i * self.stride + self.n_nodes]
                .iter()
                .all(|v| v.is_finite())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Macroscopic {
    pub density: Vec<f64>,
    pub velocity: Vec<[f64; 3]>,
}

impl Macroscopic {
    pub fn max_velocity(&self) -> f64 {
        self.velocity
            .iter()
            .map(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum()
    }

    /// Largest relative difference of density and velocity, velocities scaled by the
    /// larger of the two maximum speeds.
    pub fn max_relative_difference(&self, other: &Macroscopic) -> f64 {
        assert_eq!(self.density.len(), other.density.len());
        let vscale = self
            .max_velocity()
            .max(other.max_velocity())
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for (a, b) in self.density.iter().zip(&other.density) {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
        }
        for (a, b) in self.velocity.iter().zip(&other.velocity) {
            for k in 0..3 {
                worst = worst.max((a[k] - b[k]).abs() / vscale);
            }
        }
        worst
    }
}

/// Density and velocity per node.
///
/// The velocity includes the half-force shift of Guo forcing, so pre- and
/// post-collision states of the same time step give the same velocity.
pub fn macroscopic(field: &PdfField, params: &TrtParams) -> Macroscopic {
    let g = params.body_force;
    let shift = match field.state {
        State::PreCollision => 0.5,
        State::PostCollision => -0.5,
    };
    let mut density = Vec::with_capacity(field.n_nodes);
    let mut velocity = Vec::with_capacity(field.n_nodes);
    for n in 0..field.n_nodes {
        let f = field.node(n);
        let mut rho = 0.0;
        let mut j = [0.0; 3];
        for i in 0..Q {
            rho += f[i];
            for a in 0..3 {
                j[a] += D3Q19.c[i][a] as f64 * f[i];
            }
        }
        density.push(rho);
        velocity.push([
            j[0] / rho + shift * g[0],
            j[1] / rho + shift * g[1],
            j[2] / rho + shift * g[2],
        ]);
    }
    Macroscopic { density, velocity }
}
