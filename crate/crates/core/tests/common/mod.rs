#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slbm::kernels::{equilibrium, Simulation};
use slbm::{
    order_lexicographic, Cell, Geometry, PdfField, Periodicity, SparseLattice, TrtParams, Variant,
};

pub const ALL_PERIODIC: Periodicity = Periodicity {
    x: true,
    y: true,
    z: true,
};

/// Fully periodic box with a random fraction of solid cells.
pub fn random_geometry(seed: u64, dims: [usize; 3], solid_fraction: f64) -> Geometry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Geometry::filled(dims, Cell::Fluid, format!("random-{seed}")).unwrap();
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                if rng.gen::<f64>() < solid_fraction {
                    g.set(x, y, z, Cell::Solid);
                }
            }
        }
    }
    // keep at least one fluid node
    g.set(0, 0, 0, Cell::Fluid);
    g
}

/// Pre-collision field with a random local equilibrium per node.
pub fn random_field(lattice: &SparseLattice, seed: u64) -> PdfField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = PdfField::equilibrium(lattice, 1.0, [0.0; 3]);
    for n in 0..lattice.n_nodes() {
        let rho = 1.0 + 0.05 * (rng.gen::<f64>() - 0.5);
        let u = [0.0; 3].map(|_: f64| 0.04 * (rng.gen::<f64>() - 0.5));
        f.set_node(n, &equilibrium(rho, u));
    }
    f
}

pub fn lattice_for(g: &Geometry, periodicity: Periodicity) -> SparseLattice {
    let o = order_lexicographic(g, 1).unwrap();
    SparseLattice::build(g, &o, periodicity).unwrap()
}

pub fn simulate(
    lattice: &SparseLattice,
    variant: Variant,
    params: TrtParams,
    initial: PdfField,
    steps: usize,
) -> Simulation {
    let mut sim = Simulation::with_initial(lattice, variant, params, 4, initial).unwrap();
    for _ in 0..steps {
        sim.step(lattice).unwrap();
    }
    sim
}

/// Relative error of the largest deviation from the analytic velocity profile of
/// body-force-driven flow between two plates, scaled by the peak velocity.
///
/// Walls sit at y = 0 and y = ny - 1; bounce-back places them halfway, so the fluid
/// gap is H = ny - 2 and the profile is u(s) = g s (H - s) / (2 nu) at s = y - 1/2.
pub struct Poiseuille {
    pub max_relative_error: f64,
    pub peak_numeric: f64,
    pub peak_analytic: f64,
}

pub fn poiseuille(ny: usize, magic: f64, steps: usize, variant: Variant) -> Poiseuille {
    let dims = [4, ny, 3];
    let mut g = Geometry::filled(dims, Cell::Fluid, "plates").unwrap();
    for x in 0..dims[0] {
        for z in 0..dims[2] {
            g.set(x, 0, z, Cell::Solid);
            g.set(x, ny - 1, z, Cell::Solid);
        }
    }
    let h = (ny - 2) as f64;
    let omega = 1.0;
    let nu = (1.0 / omega - 0.5) / 3.0;
    let u_peak = 0.02;
    let force = u_peak * 8.0 * nu / (h * h);
    let params = TrtParams::new(omega, magic, [force, 0.0, 0.0]).unwrap();
    let o = order_lexicographic(&g, 1).unwrap();
    let lattice = SparseLattice::build(
        &g,
        &o,
        Periodicity {
            x: true,
            y: false,
            z: true,
        },
    )
    .unwrap();
    let initial = PdfField::equilibrium(&lattice, 1.0, [0.0; 3]);
    let sim = simulate(&lattice, variant, params, initial, steps);
    let m = sim.macroscopic();
    let mut worst = 0.0f64;
    let mut peak = 0.0f64;
    for (rank, node) in o.nodes().iter().enumerate() {
        let s = node[1] as f64 - 0.5;
        let analytic = force * s * (h - s) / (2.0 * nu);
        let u = m.velocity[rank];
        worst = worst
            .max((u[0] - analytic).abs())
            .max(u[1].abs())
            .max(u[2].abs());
        peak = peak.max(u[0]);
    }
    let peak_analytic = force * h * h / (8.0 * nu);
    Poiseuille {
        max_relative_error: worst / peak_analytic,
        peak_numeric: peak,
        peak_analytic,
    }
}

/// Relative total-mass change of a force-free run from a random initial state.
pub fn mass_drift(variant: Variant, steps: usize) -> f64 {
    let g = random_geometry(7, [12, 12, 12], 0.25);
    let lattice = lattice_for(&g, ALL_PERIODIC);
    let params = TrtParams::new(1.3, 0.25, [0.0; 3]).unwrap();
    let initial = random_field(&lattice, 11);
    let m0 = slbm::macroscopic(&initial, &params).total_mass();
    let sim = simulate(&lattice, variant, params, initial, steps);
    let m1 = sim.macroscopic().total_mass();
    ((m1 - m0) / m0).abs()
}
