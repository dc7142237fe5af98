//! Two-relaxation-time collision for D3Q19 with Guo body forcing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice_model::{D3Q19, Q};

/// Default magic parameter linking the two relaxation rates.
pub const DEFAULT_MAGIC: f64 = 0.25;

const CS2_INV: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrtParams {
    /// Relaxation rate of the even (symmetric) moments; sets the viscosity.
    pub omega_even: f64,
    /// Relaxation rate of the odd (antisymmetric) moments.
    pub omega_odd: f64,
    /// `(1/omega_even - 1/2) * (1/omega_odd - 1/2)`.
    pub magic: f64,
    /// Body acceleration in lattice units.
    pub body_force: [f64; 3],
}

impl TrtParams {
    /// Derives `omega_odd` from `omega_even` and the magic parameter.
    pub fn new(omega_even: f64, magic: f64, body_force: [f64; 3]) -> Result<Self> {
        if !(omega_even > 0.0 && omega_even < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "omega_even must lie in (0, 2), got {omega_even}"
            )));
        }
        if !(magic > 0.0) || !magic.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "magic parameter must be positive, got {magic}"
            )));
        }
        let omega_odd = 1.0 / (magic / (1.0 / omega_even - 0.5) + 0.5);
        Self::from_rates(omega_even, omega_odd, body_force)
    }

    pub fn from_rates(omega_even: f64, omega_odd: f64, body_force: [f64; 3]) -> Result<Self> {
        for (name, w) in [("omega_even", omega_even), ("omega_odd", omega_odd)] {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 2), got {w}"
                )));
            }
        }
        if body_force.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("body force must be finite".into()));
        }
        Ok(TrtParams {
            omega_even,
            omega_odd,
            magic: (1.0 / omega_even - 0.5) * (1.0 / omega_odd - 0.5),
            body_force,
        })
    }

    /// Single relaxation time (BGK) limit.
    pub fn bgk(omega: f64, body_force: [f64; 3]) -> Result<Self> {
        Self::from_rates(omega, omega, body_force)
    }

    /// Kinematic viscosity in lattice units.
    pub fn viscosity(&self) -> f64 {
        (1.0 / self.omega_even - 0.5) / CS2_INV
    }
}

impl Default for TrtParams {
    fn default() -> Self {
        TrtParams::new(1.0, DEFAULT_MAGIC, [0.0; 3]).expect("default parameters are valid")
    }
}

/// Second-order D3Q19 equilibrium.
pub fn equilibrium(rho: f64, u: [f64; 3]) -> [f64; Q] {
    let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    let mut feq = [0.0; Q];
    for i in 0..Q {
        let c = D3Q19.c[i];
        let cu = c[0] as f64 * u[0] + c[1] as f64 * u[1] + c[2] as f64 * u[2];
        feq[i] = D3Q19.w[i] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq);
    }
    feq
}

/// Opposite pairs `(i, opposite(i))` with `i` odd.
const PAIRS: [(usize, usize); 9] = [
    (1, 2),
    (3, 4),
    (5, 6),
    (7, 8),
    (9, 10),
    (11, 12),
    (13, 14),
    (15, 16),
    (17, 18),
];

/// Collides `L` nodes at once, PDFs laid out direction-major (`f[i][lane]`). Returns
/// the density of each lane.
///
/// Every lane runs the same arithmetic in the same order, so the scalar path
/// (`L = 1`) and any batched path produce bitwise identical results.
#[inline(always)]
pub fn collide_lanes<const L: usize>(f: &mut [[f64; L]; Q], params: &TrtParams) -> [f64; L] {
    let we = params.omega_even;
    let wo = params.omega_odd;
    let ke = 1.0 - 0.5 * we;
    let ko = 1.0 - 0.5 * wo;
    let g = params.body_force;

    let mut rho = [0.0; L];
    let mut ux = [0.0; L];
    let mut uy = [0.0; L];
    let mut uz = [0.0; L];
    for l in 0..L {
        let mut r = 0.0;
        let mut jx = 0.0;
        let mut jy = 0.0;
        let mut jz = 0.0;
        for i in 0..Q {
            let v = f[i][l];
            let c = D3Q19.c[i];
            r += v;
            jx += c[0] as f64 * v;
            jy += c[1] as f64 * v;
            jz += c[2] as f64 * v;
        }
        rho[l] = r;
        ux[l] = jx / r + 0.5 * g[0];
        uy[l] = jy / r + 0.5 * g[1];
        uz[l] = jz / r + 0.5 * g[2];
    }

    for l in 0..L {
        let r = rho[l];
        let u = [ux[l], uy[l], uz[l]];
        let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        let ug = u[0] * g[0] + u[1] * g[1] + u[2] * g[2];

        let w0 = D3Q19.w[0];
        let feq0 = w0 * r * (1.0 - 1.5 * usq);
        let force0 = w0 * r * (-CS2_INV * ug);
        f[0][l] += -we * (f[0][l] - feq0) + ke * force0;

        for &(i, o) in &PAIRS {
            let c = D3Q19.c[i];
            let w = D3Q19.w[i];
            let cu = c[0] as f64 * u[0] + c[1] as f64 * u[1] + c[2] as f64 * u[2];
            let cg = c[0] as f64 * g[0] + c[1] as f64 * g[1] + c[2] as f64 * g[2];

            let eq_even = w * r * (1.0 + 4.5 * cu * cu - 1.5 * usq);
            let eq_odd = w * r * 3.0 * cu;
            let force_even = w * r * (9.0 * cu * cg - CS2_INV * ug);
            let force_odd = w * r * CS2_INV * cg;

            let fi = f[i][l];
            let fo = f[o][l];
            let even = 0.5 * (fi + fo) - eq_even;
            let odd = 0.5 * (fi - fo) - eq_odd;
            let de = -we * even + ke * force_even;
            let dodd = -wo * odd + ko * force_odd;
            f[i][l] = fi + de + dodd;
            f[o][l] = fo + de - dodd;
        }
    }
    rho
}

/// Returns the post-collision PDFs of a single node.
pub fn trt_collide(f: &[f64; Q], params: &TrtParams) -> [f64; Q] {
    let mut lanes = f.map(|v| [v]);
    collide_lanes::<1>(&mut lanes, params);
    lanes.map(|[v]| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn moments(f: &[f64; Q]) -> (f64, [f64; 3]) {
        let mut rho = 0.0;
        let mut j = [0.0; 3];
        for i in 0..Q {
            rho += f[i];
            for a in 0..3 {
                j[a] += D3Q19.c[i][a] as f64 * f[i];
            }
        }
        (rho, j)
    }

    fn random_state(rng: &mut ChaCha8Rng) -> [f64; Q] {
        let rho = rng.gen_range(0.8..1.2);
        let u = [
            rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.05..0.05),
        ];
        let mut f = equilibrium(rho, u);
        for v in &mut f {
            *v *= 1.0 + rng.gen_range(-0.1..0.1);
        }
        f
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = TrtParams::new(1.3, 0.25, [0.0; 3]).unwrap();
        let feq = equilibrium(1.0, [0.0; 3]);
        // the weights do not sum to exactly 1.0 in binary, so allow the rounding of rho
        for (a, b) in trt_collide(&feq, &p).iter().zip(&feq) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b, "{a} vs {b}");
        }
    }

    #[test]
    fn equilibrium_moments() {
        let u = [0.05, 0.0, 0.0];
        let (rho, j) = moments(&equilibrium(1.0, u));
        assert!((rho - 1.0).abs() < 1e-15);
        assert!((j[0] - 0.05).abs() < 1e-14);
        assert!(j[1].abs() < 1e-15 && j[2].abs() < 1e-15);
    }

    #[test]
    fn conserves_mass_and_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = TrtParams::new(0.7, 0.25, [0.0; 3]).unwrap();
        for _ in 0..100 {
            let f = random_state(&mut rng);
            let out = trt_collide(&f, &p);
            let (r0, j0) = moments(&f);
            let (r1, j1) = moments(&out);
            assert!((r1 - r0).abs() <= 1e-13 * r0);
            for a in 0..3 {
                assert!((j1[a] - j0[a]).abs() <= 1e-13 * r0);
            }
        }
    }

    #[test]
    fn forcing_adds_rho_g_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = [1e-4, -2e-4, 3e-5];
        let p = TrtParams::new(1.2, 0.25, g).unwrap();
        for _ in 0..20 {
            let f = random_state(&mut rng);
            let (r0, j0) = moments(&f);
            let (r1, j1) = moments(&trt_collide(&f, &p));
            assert!((r1 - r0).abs() < 1e-14);
            for a in 0..3 {
                assert!((j1[a] - j0[a] - r0 * g[a]).abs() < 1e-14);
            }
        }
    }

    /// Independent single-relaxation-time collision with Guo forcing.
    fn bgk_oracle(f: &[f64; Q], omega: f64, g: [f64; 3]) -> [f64; Q] {
        let (rho, j) = moments(f);
        let u = [
            j[0] / rho + g[0] / 2.0,
            j[1] / rho + g[1] / 2.0,
            j[2] / rho + g[2] / 2.0,
        ];
        let feq = equilibrium(rho, u);
        let mut out = [0.0; Q];
        for i in 0..Q {
            let c = D3Q19.c[i].map(|v| v as f64);
            let cu: f64 = (0..3).map(|a| c[a] * u[a]).sum();
            let mut force = 0.0;
            for a in 0..3 {
                force += ((c[a] - u[a]) * 3.0 + 9.0 * cu * c[a]) * g[a];
            }
            force *= D3Q19.w[i] * rho;
            out[i] = f[i] - omega * (f[i] - feq[i]) + (1.0 - omega / 2.0) * force;
        }
        out
    }

    #[test]
    fn equal_rates_reduce_to_bgk() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let omega = rng.gen_range(0.3..1.9);
            let g = [rng.gen_range(-1e-4..1e-4), 0.0, rng.gen_range(-1e-4..1e-4)];
            let p = TrtParams::bgk(omega, g).unwrap();
            let f = random_state(&mut rng);
            let a = trt_collide(&f, &p);
            let b = bgk_oracle(&f, omega, g);
            for i in 0..Q {
                assert!(
                    (a[i] - b[i]).abs() <= 1e-14 * b[i].abs().max(1e-3),
                    "dir {i}: {} vs {}",
                    a[i],
                    b[i]
                );
            }
        }
    }

    #[test]
    fn magic_parameter_round_trip() {
        let p = TrtParams::new(1.0, 0.25, [0.0; 3]).unwrap();
        assert!((p.omega_odd - 1.0).abs() < 1e-15);
        let p = TrtParams::new(1.6, 3.0 / 16.0, [0.0; 3]).unwrap();
        assert!((p.magic - 3.0 / 16.0).abs() < 1e-15);
        assert!(TrtParams::new(2.0, 0.25, [0.0; 3]).is_err());
        assert!(TrtParams::from_rates(1.0, 0.0, [0.0; 3]).is_err());
    }

    #[test]
    fn batched_lanes_match_scalar_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = TrtParams::new(1.1, 0.25, [1e-5, 0.0, 0.0]).unwrap();
        let states: Vec<[f64; Q]> = (0..4).map(|_| random_state(&mut rng)).collect();
        let mut lanes = [[0.0; 4]; Q];
        for (l, s) in states.iter().enumerate() {
            for i in 0..Q {
                lanes[i][l] = s[i];
            }
        }
        collide_lanes::<4>(&mut lanes, &p);
        for (l, s) in states.iter().enumerate() {
            let scalar = trt_collide(s, &p);
            for i in 0..Q {
                assert_eq!(lanes[i][l].to_bits(), scalar[i].to_bits());
            }
        }
    }
}
