//! Analytic performance models: loop balance, Roofline with pattern-specific
//! bandwidths, the ECM model for the AA-RP kernel, and energy-to-solution arithmetic.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Counters, Variant};

/// Bytes moved per update for the 19 PDFs: one load and one store each, 8 B.
pub const D_PDF: f64 = 2.0 * 19.0 * 8.0;
/// Index bytes per update for the 18 indirectly addressed PDFs, 4 B each.
pub const D_IDX: f64 = 18.0 * 4.0;
/// Bytes per block-vector entry.
pub const D_BLOCK: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopBalanceReport {
    pub variant: Variant,
    /// Bytes per fluid lattice update.
    pub b_l: f64,
    pub bounds: [f64; 2],
    pub r: f64,
}

/// Memory traffic per update for `variant` at run density `r` (runs per fluid node;
/// ignored for variants without RIA).
pub fn loop_balance(variant: Variant, r: f64) -> Result<LoopBalanceReport> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!(
            "run density must lie in [0, 1], got {r}"
        )));
    }
    let ria = |r: f64| match variant {
        Variant::OsNtR => D_PDF + r * (D_IDX + D_BLOCK),
        _ => D_PDF + r * (D_IDX + D_BLOCK) / 2.0,
    };
    let (b_l, bounds) = match variant {
        Variant::OsNt => (D_PDF + D_IDX, [D_PDF + D_IDX; 2]),
        Variant::Aa => (D_PDF + D_IDX / 2.0, [D_PDF + D_IDX / 2.0; 2]),
        Variant::OsNtR | Variant::AaR | Variant::AaRp => (ria(r), [ria(0.0), ria(1.0)]),
    };
    Ok(LoopBalanceReport {
        variant,
        b_l,
        bounds,
        r: if variant.uses_ria() { r } else { 0.0 },
    })
}

/// Streaming micro-benchmarks whose bandwidths feed the Roofline model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "CNT-1A")]
    Cnt1A,
    #[serde(rename = "CNT-19A")]
    Cnt19A,
    #[serde(rename = "U-1A")]
    U1A,
    #[serde(rename = "U-19A")]
    U19A,
}

impl Pattern {
    /// Benchmark matching the access pattern of a propagation variant.
    pub fn for_variant(variant: Variant) -> Pattern {
        if variant.is_aa() {
            Pattern::U19A
        } else {
            Pattern::Cnt19A
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Cnt1A => "CNT-1A",
            Pattern::Cnt19A => "CNT-19A",
            Pattern::U1A => "U-1A",
            Pattern::U19A => "U-19A",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EcmCase {
    /// Even time step.
    #[serde(rename = "ET")]
    Even,
    /// Odd time step, best case: direct access, vectorized.
    #[serde(rename = "OTB")]
    OddBest,
    /// Odd time step, worst case: indirect access, scalar.
    #[serde(rename = "OTW")]
    OddWorst,
}

impl EcmCase {
    pub const ALL: [EcmCase; 3] = [EcmCase::Even, EcmCase::OddBest, EcmCase::OddWorst];

    pub fn name(self) -> &'static str {
        match self {
            EcmCase::Even => "ET",
            EcmCase::OddBest => "OTB",
            EcmCase::OddWorst => "OTW",
        }
    }
}

impl FromStr for EcmCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EcmCase::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidParameter(format!("unknown ECM case {s:?} (ET, OTB, OTW)"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub pattern: Pattern,
    /// Core frequency in GHz.
    pub frequency: f64,
    pub gb_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyValue {
    pub frequency: f64,
    pub value: f64,
}

/// Cycles per cache line between adjacent memory hierarchy levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCosts {
    pub l1_l2: f64,
    pub l2_l3: f64,
    /// Frequency dependent, derived from the saturated memory bandwidth.
    pub l3_mem: Vec<FrequencyValue>,
}

/// In-core cycles per eight node updates on one execution port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortCycles {
    pub port: String,
    #[serde(default)]
    pub instructions: String,
    #[serde(rename = "ET")]
    pub even: f64,
    #[serde(rename = "OTB")]
    pub odd_best: f64,
    #[serde(rename = "OTW")]
    pub odd_worst: f64,
}

impl PortCycles {
    pub fn cycles(&self, case: EcmCase) -> f64 {
        match case {
            EcmCase::Even => self.even,
            EcmCase::OddBest => self.odd_best,
            EcmCase::OddWorst => self.odd_worst,
        }
    }
}

/// Cache lines moved per eight updates in each ECM case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmCachelines {
    #[serde(rename = "ET")]
    pub even: f64,
    #[serde(rename = "OTB")]
    pub odd_best: f64,
    #[serde(rename = "OTW")]
    pub odd_worst: f64,
}

impl Default for EcmCachelines {
    /// 2 x 19 lines for every case, plus 8 x (4 B index) + 4 B block entry per node
    /// = 4.5 extra lines per eight nodes in the worst odd case.
    fn default() -> Self {
        EcmCachelines {
            even: 38.0,
            odd_best: 38.0,
            odd_worst: 38.0 + 4.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineModel {
    pub name: String,
    /// Core frequencies in GHz.
    pub frequencies: Vec<f64>,
    /// Cores sharing one memory interface (one ccNUMA locality domain).
    pub cores_per_domain: usize,
    pub cacheline_bytes: f64,
    pub bandwidths: Vec<Bandwidth>,
    pub transfer_cy_per_cl: TransferCosts,
    pub port_table: Vec<PortCycles>,
    #[serde(default)]
    pub ecm_cachelines: EcmCachelines,
}

const FREQ_EPS: f64 = 1e-6;

/// Allowed mismatch between the L3-memory transfer cost and the one implied by the
/// saturated U-19A bandwidth.
pub const L3_MEM_CONSISTENCY: f64 = 0.05;

impl MachineModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: MachineModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The Haswell E5-2697 v3 locality domain model shipped with the crate.
    pub fn haswell() -> Self {
        Self::from_json(include_str!("../data/haswell-e5-2697v3.json"))
            .expect("bundled machine model is valid")
    }

    pub fn bandwidth(&self, pattern: Pattern, frequency: f64) -> Result<f64> {
        self.bandwidths
            .iter()
            .find(|b| b.pattern == pattern && (b.frequency - frequency).abs() < FREQ_EPS)
            .map(|b| b.gb_per_s)
            .ok_or_else(|| {
                Error::MachineModel(format!(
                    "no {pattern} bandwidth at {frequency} GHz in {}",
                    self.name
                ))
            })
    }

    pub fn l3_mem_cycles(&self, frequency: f64) -> Result<f64> {
        self.transfer_cy_per_cl
            .l3_mem
            .iter()
            .find(|v| (v.frequency - frequency).abs() < FREQ_EPS)
            .map(|v| v.value)
            .ok_or_else(|| {
                Error::MachineModel(format!("no L3-memory transfer cost at {frequency} GHz"))
            })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::MachineModel(what));
        if self.frequencies.is_empty() || self.frequencies.iter().any(|&f| !(f > 0.0)) {
            return bad("frequencies must be positive and non-empty".into());
        }
        if self.cores_per_domain == 0 || !(self.cacheline_bytes > 0.0) {
            return bad("cores per domain and cache line size must be positive".into());
        }
        if let Some(b) = self
            .bandwidths
            .iter()
            .find(|b| !(b.gb_per_s > 0.0) || !(b.frequency > 0.0))
        {
            return bad(format!("non-positive bandwidth entry {b:?}"));
        }
        let t = &self.transfer_cy_per_cl;
        if !(t.l1_l2 > 0.0 && t.l2_l3 > 0.0) || t.l3_mem.iter().any(|v| !(v.value > 0.0)) {
            return bad("transfer costs must be positive".into());
        }
        for p in &self.port_table {
            if EcmCase::ALL.iter().any(|&c| !(p.cycles(c) >= 0.0)) {
                return bad(format!("negative port cycles for port {}", p.port));
            }
        }
        for v in &t.l3_mem {
            if let Ok(bw) = self.bandwidth(Pattern::U19A, v.frequency) {
                let implied = v.frequency * self.cacheline_bytes / bw;
                if ((v.value - implied) / implied).abs() > L3_MEM_CONSISTENCY {
                    return bad(format!(
                        "L3-memory cost {} cy/cl at {} GHz inconsistent with {bw} GB/s (implies {implied:.2})",
                        v.value, v.frequency
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Roofline performance in MFLUP/s: bandwidth of the benchmark matching the
/// variant's access pattern divided by the loop balance.
pub fn roofline(machine: &MachineModel, variant: Variant, b_l: f64, frequency: f64) -> Result<f64> {
    if !(b_l > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "loop balance must be positive, got {b_l}"
        )));
    }
    let bw = machine.bandwidth(Pattern::for_variant(variant), frequency)?;
    Ok(bw * 1e3 / b_l)
}

/// One row of the Roofline prediction table: loop balance and predicted performance
/// per frequency for OS-NT, OS-NT-R, AA, AA-R.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RooflineRow {
    pub label: String,
    pub variant: Variant,
    pub loop_balance: f64,
    /// `(frequency, MFLUP/s)`.
    pub performance: Vec<(f64, f64)>,
}

/// Predictions for the four table columns given the loop balances of one geometry.
pub fn roofline_table(
    machine: &MachineModel,
    label: &str,
    balances: [(Variant, f64); 4],
) -> Result<Vec<RooflineRow>> {
    balances
        .iter()
        .map(|&(variant, b_l)| {
            let performance = machine
                .frequencies
                .iter()
                .map(|&f| Ok((f, roofline(machine, variant, b_l, f)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(RooflineRow {
                label: label.to_string(),
                variant,
                loop_balance: b_l,
                performance,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcmPrediction {
    pub case: EcmCase,
    pub frequency: f64,
    pub cachelines: f64,
    /// Cycles per eight updates.
    pub t_core: f64,
    pub binding_port: String,
    pub t_l1_l2: f64,
    pub t_l2_l3: f64,
    pub t_l3_mem: f64,
    pub t_data: f64,
    pub t_total: f64,
    pub single_core_mflups: f64,
    /// Memory-bandwidth limit in MFLUP/s.
    pub saturated_mflups: f64,
    pub saturation_cores: usize,
    /// `(cores, MFLUP/s)` for 1..=cores_per_domain.
    pub scaling: Vec<(usize, f64)>,
}

/// ECM prediction for the AVX-vectorized AA-RP kernel, at a granularity of eight node
/// updates.
///
/// Data transfers between levels do not overlap with each other and overlap with
/// in-core execution: `t_total = max(t_core, t_L1L2 + t_L2L3 + t_L3Mem)`. Performance
/// scales linearly with cores until the memory bandwidth saturates.
pub fn ecm_predict(machine: &MachineModel, case: EcmCase, frequency: f64) -> Result<EcmPrediction> {
    let port = machine
        .port_table
        .iter()
        .max_by(|a, b| a.cycles(case).total_cmp(&b.cycles(case)))
        .ok_or_else(|| Error::MachineModel("empty port table".into()))?;
    let t_core = port.cycles(case);
    let cachelines = match case {
        EcmCase::Even => machine.ecm_cachelines.even,
        EcmCase::OddBest => machine.ecm_cachelines.odd_best,
        EcmCase::OddWorst => machine.ecm_cachelines.odd_worst,
    };
    let t = &machine.transfer_cy_per_cl;
    let t_l1_l2 = cachelines * t.l1_l2;
    let t_l2_l3 = cachelines * t.l2_l3;
    let t_l3_mem = cachelines * machine.l3_mem_cycles(frequency)?;
    let t_data = t_l1_l2 + t_l2_l3 + t_l3_mem;
    let t_total = t_core.max(t_data);

    const UPDATES: f64 = 8.0;
    let single_core_mflups = UPDATES * frequency * 1e3 / t_total;
    let bytes_per_update = cachelines * machine.cacheline_bytes / UPDATES;
    let saturated_mflups = roofline(machine, Variant::AaRp, bytes_per_update, frequency)?;
    let saturation_cores = ((t_total / t_l3_mem).ceil() as usize).max(1);
    let scaling = (1..=machine.cores_per_domain)
        .map(|n| (n, (n as f64 * single_core_mflups).min(saturated_mflups)))
        .collect();
    Ok(EcmPrediction {
        case,
        frequency,
        cachelines,
        t_core,
        binding_port: port.port.clone(),
        t_l1_l2,
        t_l2_l3,
        t_l3_mem,
        t_data,
        t_total,
        single_core_mflups,
        saturated_mflups,
        saturation_cores,
        scaling,
    })
}

/// Odd-step cycle estimate for a real geometry, blending the best and worst cases by
/// the fraction of vectorizable nodes. Not part of the published model.
pub fn ecm_odd_blend(
    machine: &MachineModel,
    frequency: f64,
    vectorizable_fraction: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&vectorizable_fraction) {
        return Err(Error::InvalidParameter(
            "vectorizable fraction must lie in [0, 1]".into(),
        ));
    }
    let best = ecm_predict(machine, EcmCase::OddBest, frequency)?.t_total;
    let worst = ecm_predict(machine, EcmCase::OddWorst, frequency)?.t_total;
    Ok(vectorizable_fraction * best + (1.0 - vectorizable_fraction) * worst)
}

/// Normalized energy to solution in J/MFLUP.
pub fn nets(power_watts: f64, performance_mflups: f64) -> Result<f64> {
    if !(performance_mflups > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "performance must be positive, got {performance_mflups}"
        )));
    }
    if !(power_watts >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "power must be non-negative, got {power_watts}"
        )));
    }
    Ok(power_watts / performance_mflups)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InCacheLoopBalance {
    pub even: f64,
    pub odd: f64,
}

/// Bytes per update of the even and odd time steps, from a run's traffic counters.
pub fn in_cache_loop_balance(counters: &Counters) -> InCacheLoopBalance {
    InCacheLoopBalance {
        even: counters.even.loop_balance(),
        odd: counters.odd.loop_balance(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traffic_constants() {
        assert_eq!(D_PDF, 304.0);
        assert_eq!(D_IDX, 72.0);
    }

    #[test]
    fn loop_balance_values_and_bounds() {
        assert_eq!(loop_balance(Variant::OsNt, 0.3).unwrap().b_l, 376.0);
        assert_eq!(loop_balance(Variant::Aa, 0.3).unwrap().b_l, 340.0);
        assert_eq!(loop_balance(Variant::OsNtR, 1.0).unwrap().b_l, 380.0);
        assert_eq!(loop_balance(Variant::AaR, 0.0).unwrap().b_l, 304.0);
        assert_eq!(
            loop_balance(Variant::OsNtR, 0.5).unwrap().bounds,
            [304.0, 380.0]
        );
        assert_eq!(
            loop_balance(Variant::AaRp, 0.5).unwrap().bounds,
            [304.0, 342.0]
        );
        assert!(loop_balance(Variant::AaR, 1.5).is_err());
    }

    #[test]
    fn loop_balance_monotone_in_r() {
        for v in [Variant::OsNtR, Variant::AaR] {
            let mut prev = 0.0;
            for k in 0..=100 {
                let b = loop_balance(v, k as f64 / 100.0).unwrap().b_l;
                assert!(b >= prev);
                prev = b;
            }
        }
    }

    #[test]
    fn roofline_examples() {
        let m = MachineModel::haswell();
        assert!((roofline(&m, Variant::OsNt, 376.0, 2.6).unwrap() - 63.8).abs() < 0.05);
        let aa_r = roofline(&m, Variant::AaR, 305.0, 2.6).unwrap();
        assert!((aa_r - 82.2).abs() / 82.2 < 0.002);
        assert!(roofline(&m, Variant::OsNt, 0.0, 2.6).is_err());
        assert!(roofline(&m, Variant::OsNt, 376.0, 3.0).is_err());
    }

    #[test]
    fn roofline_unit_scaling() {
        let mut m = MachineModel::haswell();
        for b in &mut m.bandwidths {
            b.gb_per_s = 100.0;
        }
        // 100 GB/s at 100 B/FLUP is 1 FLUP/ns
        assert!((roofline(&m, Variant::OsNt, 100.0, 2.6).unwrap() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn ecm_even_step() {
        let m = MachineModel::haswell();
        let et = ecm_predict(&m, EcmCase::Even, 2.6).unwrap();
        assert_eq!(et.t_core, 172.0);
        assert_eq!(et.binding_port, "1");
        assert!((et.t_data - 364.8).abs() < 1e-9);
        assert!((et.t_total - 364.8).abs() < 1e-9);
        assert_eq!(et.saturation_cores, 2);
        let otb = ecm_predict(&m, EcmCase::OddBest, 2.6).unwrap();
        assert_eq!(otb.t_core, 174.0);
        let otw = ecm_predict(&m, EcmCase::OddWorst, 2.6).unwrap();
        assert_eq!(otw.t_core, 1080.0);
        assert!((otw.cachelines - 38.0 - 4.5).abs() < 1e-12);
        assert!(et.t_total <= otb.t_total && otb.t_total <= otw.t_total);
        for p in [&et, &otb, &otw] {
            assert!(p.saturation_cores >= 1);
            assert!(p.scaling.windows(2).all(|w| w[1].1 >= w[0].1));
            assert!(p
                .scaling
                .iter()
                .all(|&(_, v)| v <= p.saturated_mflups + 1e-9));
        }
    }

    #[test]
    fn ecm_blend_lies_between_cases() {
        let m = MachineModel::haswell();
        let best = ecm_predict(&m, EcmCase::OddBest, 2.6).unwrap().t_total;
        let worst = ecm_predict(&m, EcmCase::OddWorst, 2.6).unwrap().t_total;
        assert_eq!(ecm_odd_blend(&m, 2.6, 1.0).unwrap(), best);
        assert_eq!(ecm_odd_blend(&m, 2.6, 0.0).unwrap(), worst);
        let mid = ecm_odd_blend(&m, 2.6, 0.57).unwrap();
        assert!(best < mid && mid < worst);
    }

    #[test]
    fn machine_model_validation() {
        let m = MachineModel::haswell();
        m.validate().unwrap();
        let mut bad = m.clone();
        bad.transfer_cy_per_cl.l3_mem[1].value = 9.0;
        assert!(bad.validate().is_err());
        let mut bad = m.clone();
        bad.bandwidths[0].gb_per_s = 0.0;
        assert!(bad.validate().is_err());
        assert!(MachineModel::from_json("{}").is_err());
    }

    #[test]
    fn nets_arithmetic() {
        assert_eq!(nets(100.0, 50.0).unwrap(), 2.0);
        assert_eq!(nets(0.0, 10.0).unwrap(), 0.0);
        assert!(nets(80.0, 40.0).unwrap() > nets(80.0, 60.0).unwrap());
        assert!(nets(1.0, 0.0).is_err());
    }
}
