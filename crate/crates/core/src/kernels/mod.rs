//! TRT collision and the propagation variants over the sparse lattice.

pub mod field;
pub mod propagation;
pub mod trt;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use field::{macroscopic, Layout, Macroscopic, PdfField, State};
pub use propagation::{
    step_aa_even, step_aa_odd, step_aa_odd_batched, step_aa_odd_ria, step_os_nt, step_os_nt_ria,
    Traffic,
};
pub use trt::{equilibrium, trt_collide, TrtParams};

use crate::enumeration::Ordering;
use crate::error::{Error, Result};
use crate::lattice_model::Geometry;
use crate::sparse_lattice::{Periodicity, SparseLattice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "os-nt")]
    OsNt,
    #[serde(rename = "os-nt-r")]
    OsNtR,
    #[serde(rename = "aa")]
    Aa,
    #[serde(rename = "aa-r")]
    AaR,
    #[serde(rename = "aa-rp")]
    AaRp,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::OsNt,
        Variant::OsNtR,
        Variant::Aa,
        Variant::AaR,
        Variant::AaRp,
    ];

    pub fn is_aa(self) -> bool {
        matches!(self, Variant::Aa | Variant::AaR | Variant::AaRp)
    }

    pub fn uses_ria(self) -> bool {
        matches!(self, Variant::OsNtR | Variant::AaR | Variant::AaRp)
    }

    pub fn grids(self) -> usize {
        if self.is_aa() {
            1
        } else {
            2
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::OsNt => "os-nt",
            Variant::OsNtR => "os-nt-r",
            Variant::Aa => "aa",
            Variant::AaR => "aa-r",
            Variant::AaRp => "aa-rp",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant {s:?}")))
    }
}

/// Traffic split by time-step parity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub even: Traffic,
    pub odd: Traffic,
}

impl Counters {
    pub fn total(&self) -> Traffic {
        self.even + self.odd
    }

    pub fn record(&mut self, step: usize, t: Traffic) {
        if step.is_multiple_of(2) {
            self.even += t;
        } else {
            self.odd += t;
        }
    }
}

/// Time stepping of one variant on one lattice.
///
/// The initial state is a pre-collision equilibrium. The two-grid variants keep
/// post-collision values, so they start by colliding it once in place.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub variant: Variant,
    pub params: TrtParams,
    pub vector_width: usize,
    grids: [PdfField; 2],
    current: usize,
    steps_done: usize,
    pub counters: Counters,
}

impl Simulation {
    pub fn new(
        lattice: &SparseLattice,
        variant: Variant,
        params: TrtParams,
        vector_width: usize,
    ) -> Result<Self> {
        let initial = PdfField::equilibrium(lattice, 1.0, [0.0; 3]);
        Self::with_initial(lattice, variant, params, vector_width, initial)
    }

    pub fn with_initial(
        lattice: &SparseLattice,
        variant: Variant,
        params: TrtParams,
        vector_width: usize,
        mut initial: PdfField,
    ) -> Result<Self> {
        initial.check_matches(lattice)?;
        if initial.layout != Layout::Natural || initial.state != State::PreCollision {
            return Err(Error::State(
                "initial field must be a natural-layout pre-collision state".into(),
            ));
        }
        if ![1, 2, 4, 8].contains(&vector_width) {
            return Err(Error::InvalidParameter(format!(
                "vector width must be 1, 2, 4 or 8, got {vector_width}"
            )));
        }
        let other = if variant.is_aa() {
            PdfField::zeros(&empty_lattice())
        } else {
            initial.collide_in_place(&params);
            initial.clone()
        };
        Ok(Simulation {
            variant,
            params,
            vector_width,
            grids: [initial, other],
            current: 0,
            steps_done: 0,
            counters: Counters::default(),
        })
    }

    pub fn field(&self) -> &PdfField {
        &self.grids[self.current]
    }

    pub fn field_mut(&mut self) -> &mut PdfField {
        &mut self.grids[self.current]
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// Advances one time step.
    pub fn step(&mut self, lattice: &SparseLattice) -> Result<()> {
        let t = self.steps_done;
        let mut traffic = Traffic::default();
        let params = self.params;
        let bad = match self.variant {
            Variant::OsNt | Variant::OsNtR => {
                let (a, b) = self.grids.split_at_mut(1);
                let (src, dst) = if self.current == 0 {
                    (&a[0], &mut b[0])
                } else {
                    (&b[0], &mut a[0])
                };
                let bad = if self.variant == Variant::OsNt {
                    step_os_nt(src, dst, lattice, &params, &mut traffic)?
                } else {
                    step_os_nt_ria(src, dst, lattice, &params, &mut traffic)?
                };
                self.current = 1 - self.current;
                bad
            }
            v => {
                let field = &mut self.grids[0];
                if t.is_multiple_of(2) {
                    step_aa_even(field, lattice, &params, &mut traffic)?
                } else {
                    match v {
                        Variant::Aa => step_aa_odd(field, lattice, &params, &mut traffic)?,
                        Variant::AaR => step_aa_odd_ria(field, lattice, &params, &mut traffic)?,
                        _ => step_aa_odd_batched(
                            field,
                            lattice,
                            &params,
                            self.vector_width,
                            &mut traffic,
                        )?,
                    }
                }
            }
        };
        self.counters.record(t, traffic);
        self.steps_done += 1;
        if let Some(node) = bad {
            return Err(Error::Instability {
                step: t,
                reason: format!("non-positive or non-finite density at node {node}"),
            });
        }
        Ok(())
    }

    pub fn macroscopic(&self) -> Macroscopic {
        macroscopic(self.field(), &self.params)
    }

    pub fn into_field(mut self) -> PdfField {
        let c = self.current;
        std::mem::replace(&mut self.grids[c], PdfField::zeros(&empty_lattice()))
    }
}

fn empty_lattice() -> SparseLattice {
    SparseLattice::from_adjacency(
        crate::sparse_lattice::AdjacencyList::from_parts(0, Vec::new(), Vec::new()),
        0,
    )
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub field: PdfField,
    pub counters: Counters,
    pub steps: usize,
    pub seconds: f64,
    pub mflups: f64,
    pub total_mass: f64,
    pub max_velocity: f64,
}

/// Runs `n_steps` of `variant` on a prebuilt lattice.
pub fn run_lattice(
    lattice: &SparseLattice,
    variant: Variant,
    params: TrtParams,
    vector_width: usize,
    n_steps: usize,
) -> Result<RunReport> {
    let mut sim = Simulation::new(lattice, variant, params, vector_width)?;
    let start = Instant::now();
    for _ in 0..n_steps {
        sim.step(lattice)?;
    }
    let seconds = start.elapsed().as_secs_f64();
    let updates = sim.counters.total().updates as f64;
    let mflups = if seconds > 0.0 {
        updates / seconds / 1e6
    } else {
        0.0
    };
    let macro_fields = sim.macroscopic();
    Ok(RunReport {
        counters: sim.counters,
        steps: n_steps,
        seconds,
        mflups,
        total_mass: macro_fields.total_mass(),
        max_velocity: macro_fields.max_velocity(),
        field: sim.into_field(),
    })
}

/// Builds the lattice for `geometry`/`ordering` (periodic along x) and runs
/// `n_steps` of `variant`. AA-RP uses a vector width of 4.
pub fn run(
    geometry: &Geometry,
    ordering: &Ordering,
    variant: Variant,
    params: TrtParams,
    n_steps: usize,
) -> Result<RunReport> {
    let lattice = SparseLattice::build(geometry, ordering, Periodicity::default())?;
    run_lattice(&lattice, variant, params, 4, n_steps)
}
