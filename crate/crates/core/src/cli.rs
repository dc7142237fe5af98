//! Command-line front end.
//!
//! Every subcommand writes a machine-readable report (JSON or CSV) to standard output
//! or to `--report FILE`. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::enumeration::{order, renumber_within_chunks, Method, Ordering};
use crate::error::{Error, Result};
use crate::kernels::{equilibrium, run_lattice, Counters, TrtParams, Variant};
use crate::lattice_model::{
    fluid_count, load_geometry, make_channel, make_fixed_bed, save_geometry, Geometry,
};
use crate::partition::{
    comm_stats, make_partition, partition_run_lengths, run_partitioned_lattice, PartitionMap,
};
use crate::perfmodel::{
    ecm_predict, in_cache_loop_balance, loop_balance, roofline, EcmCase, InCacheLoopBalance,
    MachineModel,
};
use crate::sparse_lattice::{ria_stats, Periodicity, SparseLattice};

#[derive(Debug, Parser)]
#[command(
    name = "slbm",
    version,
    about = "Sparse-lattice lattice Boltzmann engine"
)]
pub struct Cli {
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Report format (default depends on the subcommand).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark geometry file.
    Geometry {
        #[command(subcommand)]
        kind: GeometryKind,
    },
    /// Run a simulation and report throughput, traffic counters and conserved quantities.
    Run(RunArgs),
    /// Repeated timed runs over variants and worker counts.
    Bench(BenchArgs),
    /// Roofline and ECM predictions from a machine model.
    Predict(PredictArgs),
    /// Per-partition communication volume and run-length statistics.
    PartitionReport(PartitionArgs),
    /// Run-length statistics of the RIA block vector.
    RiaStats(RiaArgs),
}

#[derive(Debug, Subcommand)]
pub enum GeometryKind {
    /// Square channel with walls on the y and z faces, open along x.
    Channel {
        nx: usize,
        ny: usize,
        nz: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Channel filled with randomly placed spheres.
    FixedBed {
        nx: usize,
        ny: usize,
        nz: usize,
        #[arg(long, default_value_t = 20)]
        diameter: usize,
        #[arg(long, default_value_t = 0.44)]
        porosity: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct LatticeArgs {
    /// Geometry file.
    #[arg(long)]
    pub geometry: PathBuf,
    /// Enumeration: `ls:B` or `hilbert`.
    #[arg(long, default_value = "ls:1")]
    pub order: Method,
    /// Re-sort each partition's range lexicographically after cutting.
    #[arg(long)]
    pub renumber: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, default_value = "aa-rp")]
    pub variant: Variant,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Relaxation rate of the even moments.
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// TRT magic parameter.
    #[arg(long, default_value_t = crate::kernels::trt::DEFAULT_MAGIC)]
    pub magic: f64,
    /// Body force `fx,fy,fz`.
    #[arg(long, default_value = "0,0,0", value_parser = parse_vec3)]
    pub force: [f64; 3],
    /// Vector width of AA-RP.
    #[arg(long = "v", default_value_t = 4)]
    pub vector_width: usize,
    #[arg(long, default_value_t = 1)]
    pub parts: usize,
    #[arg(long, env = "SLBM_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    /// Comma-separated variants.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "os-nt,os-nt-r,aa,aa-r,aa-rp"
    )]
    pub variants: Vec<Variant>,
    /// Comma-separated worker counts; each runs with as many partitions as workers
    /// unless `--parts` is given.
    #[arg(long, value_delimiter = ',', env = "SLBM_WORKERS", default_value = "1")]
    pub workers: Vec<usize>,
    #[arg(long)]
    pub parts: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long = "v", default_value_t = 4)]
    pub vector_width: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Machine model JSON; the bundled Haswell model when omitted.
    #[arg(long)]
    pub machine: Option<PathBuf>,
    /// Variants to predict (repeatable); OS-NT, OS-NT-R, AA and AA-R by default.
    #[arg(long)]
    pub variant: Vec<Variant>,
    /// Run density for RIA variants.
    #[arg(long, conflicts_with = "geometry")]
    pub r: Option<f64>,
    /// Geometry to take the run density from.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long, default_value = "ls:1")]
    pub order: Method,
    /// Also report the ECM cases.
    #[arg(long)]
    pub ecm: bool,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long)]
    pub parts: usize,
}

#[derive(Debug, Args)]
pub struct RiaArgs {
    /// Geometry file.
    pub geometry: PathBuf,
    #[arg(long, default_value = "ls:1")]
    pub order: Method,
    #[arg(long = "v", default_value_t = 4)]
    pub vector_width: usize,
}

fn parse_vec3(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected 3 components, got {}", v.len()))
}

/// Parses `args` (including the program name), executes, and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => match emit(&cli, &text) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        },
        Err(Error::InvalidParameter(m)) | Err(Error::InvalidPartition(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.report {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Runs the parsed command and returns the report text.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Geometry { kind } => geometry(kind),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a, cli.format.unwrap_or(Format::Csv)),
        Command::Predict(a) => predict(a, cli.format.unwrap_or(Format::Csv)),
        Command::PartitionReport(a) => partition_report(a, cli.format.unwrap_or(Format::Json)),
        Command::RiaStats(a) => ria(a),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn geometry(kind: &GeometryKind) -> Result<String> {
    let (g, out) = match kind {
        GeometryKind::Channel { nx, ny, nz, out } => (make_channel(*nx, *ny, *nz)?, out),
        GeometryKind::FixedBed {
            nx,
            ny,
            nz,
            diameter,
            porosity,
            seed,
            out,
        } => (
            make_fixed_bed(*nx, *ny, *nz, *diameter, *porosity, *seed)?,
            out,
        ),
    };
    save_geometry(&g, out)?;
    to_json(&json!({
        "file": out,
        "name": g.name,
        "dims": g.dims,
        "fluid_count": fluid_count(&g),
        "achieved_porosity": g.achieved_porosity,
    }))
}

struct Prepared {
    geometry: Geometry,
    ordering: Ordering,
    lattice: SparseLattice,
}

fn prepare(a: &LatticeArgs, parts: usize) -> Result<Prepared> {
    let geometry = load_geometry(&a.geometry)?;
    let mut ordering = order(&geometry, a.order)?;
    if a.renumber {
        let map = make_partition(&ordering, parts)?;
        ordering = renumber_within_chunks(&ordering, &map.chunk_bounds)?;
    }
    let lattice = SparseLattice::build(&geometry, &ordering, Periodicity::default())?;
    Ok(Prepared {
        geometry,
        ordering,
        lattice,
    })
}

struct Outcome {
    counters: Counters,
    seconds: f64,
    mflups: f64,
    mass: f64,
    max_velocity: f64,
    exchanged_bytes: f64,
    ghost_bytes: u64,
}

fn simulate(
    p: &Prepared,
    variant: Variant,
    params: TrtParams,
    vector_width: usize,
    parts: usize,
    workers: usize,
    steps: usize,
) -> Result<Outcome> {
    if parts == 1 && workers == 1 {
        let r = run_lattice(&p.lattice, variant, params, vector_width, steps)?;
        return Ok(Outcome {
            counters: r.counters,
            seconds: r.seconds,
            mflups: r.mflups,
            mass: r.total_mass,
            max_velocity: r.max_velocity,
            exchanged_bytes: 0.0,
            ghost_bytes: 0,
        });
    }
    let map = make_partition(&p.ordering, parts)?;
    let r = run_partitioned_lattice(
        &p.lattice,
        &map,
        params,
        variant,
        vector_width,
        workers,
        steps,
    )?;
    Ok(Outcome {
        counters: r.counters,
        seconds: r.seconds,
        mflups: r.mflups,
        mass: r.total_mass,
        max_velocity: r.macroscopic.max_velocity(),
        exchanged_bytes: r.mean_exchanged_bytes(),
        ghost_bytes: r.comm.total_ghost_bytes,
    })
}

#[derive(Serialize)]
struct RunReport<'a> {
    geometry: &'a str,
    fluid_nodes: usize,
    order: String,
    renumbered: bool,
    variant: Variant,
    steps: usize,
    parts: usize,
    workers: usize,
    params: TrtParams,
    seconds: f64,
    mflups: f64,
    counters: Counters,
    in_cache_loop_balance: InCacheLoopBalance,
    mass: MassReport,
    max_velocity: f64,
    ghost_bytes: u64,
    mean_exchanged_bytes_per_step: f64,
}

#[derive(Serialize)]
struct MassReport {
    initial: f64,
    r#final: f64,
    relative_change: f64,
}

fn run(a: &RunArgs) -> Result<String> {
    let params = TrtParams::new(a.omega, a.magic, a.force)?;
    if a.parts == 0 || a.workers == 0 {
        return Err(Error::InvalidParameter(
            "--parts and --workers must be at least 1".into(),
        ));
    }
    let p = prepare(&a.lattice, a.parts)?;
    let o = simulate(
        &p,
        a.variant,
        params,
        a.vector_width,
        a.parts,
        a.workers,
        a.steps,
    )?;
    let initial = p.lattice.n_nodes() as f64 * equilibrium(1.0, [0.0; 3]).iter().sum::<f64>();
    to_json(&RunReport {
        geometry: &p.geometry.name,
        fluid_nodes: p.lattice.n_nodes(),
        order: a.lattice.order.to_string(),
        renumbered: a.lattice.renumber,
        variant: a.variant,
        steps: a.steps,
        parts: a.parts,
        workers: a.workers,
        params,
        seconds: o.seconds,
        mflups: o.mflups,
        counters: o.counters,
        in_cache_loop_balance: in_cache_loop_balance(&o.counters),
        mass: MassReport {
            initial,
            r#final: o.mass,
            relative_change: (o.mass - initial) / initial,
        },
        max_velocity: o.max_velocity,
        ghost_bytes: o.ghost_bytes,
        mean_exchanged_bytes_per_step: o.exchanged_bytes,
    })
}

#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    variant: Variant,
    workers: usize,
    parts: usize,
    steps: usize,
    repeat: usize,
    min_mflups: f64,
    median_mflups: f64,
    max_mflups: f64,
    loop_balance_even: f64,
    loop_balance_odd: f64,
}

fn bench(a: &BenchArgs, format: Format) -> Result<String> {
    if a.repeat == 0 || a.workers.contains(&0) {
        return Err(Error::InvalidParameter(
            "--repeat and worker counts must be at least 1".into(),
        ));
    }
    let max_parts = a.parts.unwrap_or(*a.workers.iter().max().unwrap_or(&1));
    let p = prepare(&a.lattice, max_parts)?;
    let params = TrtParams::new(a.omega, crate::kernels::trt::DEFAULT_MAGIC, [0.0; 3])?;
    let mut rows = Vec::new();
    for &variant in &a.variants {
        for &workers in &a.workers {
            let parts = a.parts.unwrap_or(workers);
            let mut samples = Vec::with_capacity(a.repeat);
            let mut counters: Option<Counters> = None;
            for _ in 0..a.repeat {
                let o = simulate(&p, variant, params, a.vector_width, parts, workers, a.steps)?;
                if let Some(c) = counters {
                    if c != o.counters {
                        return Err(Error::State(
                            "traffic counters differ between repeats".into(),
                        ));
                    }
                }
                counters = Some(o.counters);
                samples.push(o.mflups);
            }
            samples.sort_by(f64::total_cmp);
            let lb = in_cache_loop_balance(&counters.unwrap_or_default());
            rows.push(BenchRow {
                variant,
                workers,
                parts,
                steps: a.steps,
                repeat: a.repeat,
                min_mflups: samples[0],
                median_mflups: samples[samples.len() / 2],
                max_mflups: samples[samples.len() - 1],
                loop_balance_even: lb.even,
                loop_balance_odd: lb.odd,
            });
        }
    }
    match format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from(
                "variant,workers,parts,steps,repeat,min_mflups,median_mflups,max_mflups,loop_balance_even,loop_balance_odd\n",
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
                    r.variant,
                    r.workers,
                    r.parts,
                    r.steps,
                    r.repeat,
                    r.min_mflups,
                    r.median_mflups,
                    r.max_mflups,
                    r.loop_balance_even,
                    r.loop_balance_odd
                );
            }
            Ok(s)
        }
    }
}

fn predict(a: &PredictArgs, format: Format) -> Result<String> {
    let machine = match &a.machine {
        Some(path) => MachineModel::load(path)?,
        None => MachineModel::haswell(),
    };
    let r = match (&a.geometry, a.r) {
        (Some(path), _) => {
            let g = load_geometry(path)?;
            let lattice = SparseLattice::build(&g, &order(&g, a.order)?, Periodicity::default())?;
            Some(ria_stats(&lattice.blocks, 1)?.r)
        }
        (None, r) => r,
    };
    let variants: Vec<Variant> = if a.variant.is_empty() {
        [Variant::OsNt, Variant::OsNtR, Variant::Aa, Variant::AaR]
            .into_iter()
            .filter(|v| !v.uses_ria() || r.is_some())
            .collect()
    } else {
        a.variant.clone()
    };
    let mut balances = Vec::new();
    for &v in &variants {
        if v.uses_ria() && r.is_none() {
            return Err(Error::InvalidParameter(format!(
                "{v} needs --r or --geometry"
            )));
        }
        balances.push(loop_balance(v, r.unwrap_or(0.0))?);
    }
    let mut table = Vec::new();
    for &f in &machine.frequencies {
        let row = balances
            .iter()
            .map(|b| roofline(&machine, b.variant, b.b_l, f))
            .collect::<Result<Vec<_>>>()?;
        table.push((f, row));
    }
    let ecm = if a.ecm {
        let mut out = Vec::new();
        for &f in &machine.frequencies {
            for case in EcmCase::ALL {
                out.push(ecm_predict(&machine, case, f)?);
            }
        }
        out
    } else {
        Vec::new()
    };
    match format {
        Format::Json => to_json(&json!({
            "machine": machine.name,
            "run_density": r,
            "loop_balance": balances,
            "roofline": table.iter().map(|(f, row)| json!({
                "frequency_ghz": f,
                "mflups": variants.iter().zip(row).map(|(v, p)| (v.name().to_string(), json!(p))).collect::<serde_json::Map<_, _>>()
            })).collect::<Vec<_>>(),
            "ecm": ecm,
        })),
        Format::Csv => {
            let mut s = String::from("quantity,frequency_ghz");
            for v in &variants {
                let _ = write!(s, ",{v}");
            }
            s.push_str("\nloop_balance,");
            for b in &balances {
                let _ = write!(s, ",{:.1}", b.b_l);
            }
            s.push('\n');
            for (f, row) in &table {
                let _ = write!(s, "mflups,{f}");
                for p in row {
                    let _ = write!(s, ",{p:.1}");
                }
                s.push('\n');
            }
            if !ecm.is_empty() {
                s.push_str("\necm_case,frequency_ghz,t_core,t_data,t_total,single_core_mflups,saturation_cores\n");
                for e in &ecm {
                    let _ = writeln!(
                        s,
                        "{},{},{},{:.1},{:.1},{:.2},{}",
                        e.case.name(),
                        e.frequency,
                        e.t_core,
                        e.t_data,
                        e.t_total,
                        e.single_core_mflups,
                        e.saturation_cores
                    );
                }
            }
            Ok(s)
        }
    }
}

#[derive(Serialize)]
struct PartitionRow {
    partition: usize,
    size: usize,
    ghost_bytes: u64,
    neighbors: usize,
    mean_run_length: f64,
}

fn partition_report(a: &PartitionArgs, format: Format) -> Result<String> {
    let p = prepare(&a.lattice, a.parts)?;
    let map: PartitionMap = make_partition(&p.ordering, a.parts)?;
    let comm = comm_stats(&p.lattice, &map)?;
    let runs = partition_run_lengths(&p.lattice.adjacency, &map);
    let rows: Vec<PartitionRow> = comm
        .partitions
        .iter()
        .zip(&runs)
        .enumerate()
        .map(|(i, (c, &r))| PartitionRow {
            partition: i,
            size: c.size,
            ghost_bytes: c.ghost_bytes,
            neighbors: c.neighbor_partitions,
            mean_run_length: r,
        })
        .collect();
    match format {
        Format::Json => to_json(&json!({
            "order": a.lattice.order.to_string(),
            "renumbered": a.lattice.renumber,
            "parts": a.parts,
            "total_ghost_bytes": comm.total_ghost_bytes,
            "max_ghost_bytes": comm.max_ghost_bytes,
            "mean_ghost_bytes": comm.mean_ghost_bytes,
            "max_neighbors": comm.max_neighbors,
            "mean_neighbors": comm.mean_neighbors,
            "partitions": rows,
        })),
        Format::Csv => {
            let mut s = String::from("partition,size,ghost_bytes,neighbors,mean_run_length\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:.4}",
                    r.partition, r.size, r.ghost_bytes, r.neighbors, r.mean_run_length
                );
            }
            Ok(s)
        }
    }
}

fn ria(a: &RiaArgs) -> Result<String> {
    let g = load_geometry(&a.geometry)?;
    let lattice = SparseLattice::build(&g, &order(&g, a.order)?, Periodicity::default())?;
    let stats = ria_stats(&lattice.blocks, a.vector_width)?;
    to_json(&json!({
        "geometry": g.name,
        "order": a.order.to_string(),
        "runs": stats.runs,
        "nodes": stats.nodes,
        "r": stats.r,
        "mean_run_length": stats.mean_run_length,
        "vectorizable_fraction": stats.vectorizable_fraction,
        "vector_width": stats.vector_width,
        "loop_balance_os_nt_r": loop_balance(Variant::OsNtR, stats.r)?.b_l,
        "loop_balance_aa_r": loop_balance(Variant::AaR, stats.r)?.b_l,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec3_parsing() {
        assert_eq!(parse_vec3("1e-6, 0,0").unwrap(), [1e-6, 0.0, 0.0]);
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_vec3("a,b,c").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main(["slbm", "frobnicate"]), 1);
        assert_eq!(main(["slbm", "run"]), 1);
        assert_eq!(main(["slbm", "--help"]), 0);
    }

    #[test]
    fn predict_default_table() {
        let cli = Cli::try_parse_from(["slbm", "predict", "--variant", "os-nt"]).unwrap();
        let text = execute(&cli).unwrap();
        assert!(text.lines().any(|l| l == "mflups,2.6,63.8"), "{text}");
        let cli = Cli::try_parse_from(["slbm", "predict", "--variant", "aa-r"]).unwrap();
        assert!(matches!(execute(&cli), Err(Error::InvalidParameter(_))));
    }
}
