//! Benchmark CLI: partition-quality sweeps and solver experiments on
//! simulated ranks.
//!
//! Exit codes: 0 on success, 2 when a solver fails to converge, 1 on any
//! other error.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use reskit_bench::experiment::{
    run_partition_experiment, run_solver_experiment, PartitionMethod, SolveSpec,
};
use reskit_bench::gen::{ProblemKind, ProblemSpec};
use reskit_bench::report::{
    write_history_csv, write_partition_csv, write_solve_csv, ReportDoc,
};
use reskit_core::krylov::{KrylovMethod, SolverConfig};
use reskit_core::precond::{AmgParams, LocalSolver, PcConfig, PcKind, RasParams};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bench", about = "Structured-grid partitioning and solver benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a grid with several methods and report quality metrics.
    Partition(Box<PartitionArgs>),
    /// Generate a linear system, solve it on simulated ranks, report.
    Solve(Box<SolveArgs>),
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long, default_value_t = 8)]
    nx: usize,
    #[arg(long, default_value_t = 8)]
    ny: usize,
    #[arg(long, default_value_t = 1)]
    nz: usize,
    /// Comma-separated rank counts, e.g. 2,4,8.
    #[arg(long = "np-list", default_value = "2,4,8", value_delimiter = ',')]
    np_list: Vec<usize>,
    /// Comma-separated methods: hsfc, hsfc-nd, morton, block.
    #[arg(long, default_value = "hsfc,morton,block", value_delimiter = ',')]
    methods: Vec<String>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem kind: poisson3d, hetero or coupled2.
    #[arg(long, default_value = "poisson3d")]
    problem: String,
    #[arg(long, default_value_t = 10)]
    nx: usize,
    #[arg(long, default_value_t = 10)]
    ny: usize,
    #[arg(long, default_value_t = 10)]
    nz: usize,
    /// Simulated rank count.
    #[arg(long, default_value_t = 1)]
    np: usize,
    /// Solver: gmres or bicgstab.
    #[arg(long, default_value = "gmres")]
    solver: String,
    /// Preconditioner: ras, amg, cpr-fp, cpr-pf, cpr-fpf, cpr-ffpf, none.
    #[arg(long, default_value = "ras")]
    pc: String,
    #[arg(long, default_value_t = 1e-6)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-50)]
    atol: f64,
    #[arg(long, default_value_t = 0.0)]
    btol: f64,
    #[arg(long, default_value_t = 1000)]
    maxit: usize,
    #[arg(long, default_value_t = 30)]
    restart: usize,
    /// Heterogeneity contrast for hetero / coupled2.
    #[arg(long, default_value_t = 1e4)]
    contrast: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Partitioning method feeding the solve.
    #[arg(long, default_value = "hsfc")]
    partitioner: String,
    /// RAS overlap layers.
    #[arg(long, default_value_t = 1)]
    overlap: usize,
    /// Local factorization: ilu0, iluk or ilut.
    #[arg(long, default_value = "ilu0")]
    ilu: String,
    #[arg(long = "iluk-level", default_value_t = 0)]
    iluk_level: usize,
    /// ILUT fill cap per row (-1 keeps every surviving entry).
    #[arg(long = "ilut-p", default_value_t = -1)]
    ilut_p: i64,
    #[arg(long = "ilut-tol", default_value_t = 1e-3)]
    ilut_tol: f64,
    #[arg(long = "filter-tol", default_value_t = 1e-4)]
    filter_tol: f64,
    #[arg(long = "amg-levels", default_value_t = 6)]
    amg_levels: usize,
    #[arg(long = "amg-strength", default_value_t = 0.5)]
    amg_strength: f64,
    #[arg(long = "amg-max-row-sum", default_value_t = 0.9)]
    amg_max_row_sum: f64,
    #[arg(long = "amg-sweeps", default_value_t = 2)]
    amg_sweeps: usize,
    /// Cell-block diagonal scaling before the pressure extraction.
    #[arg(long, default_value_t = false)]
    decouple: bool,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Optional residual-history CSV path.
    #[arg(long)]
    history: Option<PathBuf>,
}

fn write_out(
    path: &Option<PathBuf>,
    render: impl Fn(&mut dyn Write) -> std::io::Result<()>,
) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            );
            render(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            render(&mut lock)?;
        }
    }
    Ok(())
}

fn cmd_partition(args: &PartitionArgs) -> anyhow::Result<ExitCode> {
    let methods: Vec<PartitionMethod> = args
        .methods
        .iter()
        .map(|m| {
            PartitionMethod::from_name(m).ok_or_else(|| anyhow!("unknown partition method: {m}"))
        })
        .collect::<anyhow::Result<_>>()?;
    let rows = run_partition_experiment([args.nx, args.ny, args.nz], &methods, &args.np_list)?;
    write_out(&args.out, |w| write_partition_csv(w, &rows))?;
    if let Some(json) = &args.json {
        std::fs::write(json, ReportDoc::partition(rows.clone()).to_json())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: &SolveArgs) -> anyhow::Result<ExitCode> {
    let kind = ProblemKind::from_name(&args.problem)
        .ok_or_else(|| anyhow!("unknown problem: {}", args.problem))?;
    let method = match args.solver.as_str() {
        "gmres" => KrylovMethod::Gmres,
        "bicgstab" => KrylovMethod::Bicgstab,
        other => return Err(anyhow!("unknown solver: {other}")),
    };
    let pc = PcKind::from_name(&args.pc)?;
    let partitioner = PartitionMethod::from_name(&args.partitioner)
        .ok_or_else(|| anyhow!("unknown partitioner: {}", args.partitioner))?;
    let solver_ilu = match args.ilu.as_str() {
        "ilu0" | "iluk" => LocalSolver::Iluk,
        "ilut" => LocalSolver::Ilut,
        other => return Err(anyhow!("unknown local factorization: {other}")),
    };
    let iluk_level = if args.ilu == "ilu0" { 0 } else { args.iluk_level };

    let spec = SolveSpec {
        problem: ProblemSpec {
            kind,
            dims: [args.nx, args.ny, args.nz],
            contrast: args.contrast,
            seed: args.seed,
            coupling: 0.1,
        },
        solver: SolverConfig {
            rtol: args.rtol,
            atol: args.atol,
            btol: args.btol,
            maxit: args.maxit,
            restart: args.restart,
            method,
        },
        pc,
        pc_config: PcConfig {
            ras: RasParams {
                overlap: args.overlap,
                iluk_level,
                ilut_p: args.ilut_p,
                solver: solver_ilu,
                ilut_tol: args.ilut_tol,
                filter_tol: args.filter_tol,
                ilutc_drop: 0,
            },
            amg: AmgParams {
                max_levels: args.amg_levels,
                strength: args.amg_strength,
                max_row_sum: args.amg_max_row_sum,
                num_sweeps: args.amg_sweeps,
                ..Default::default()
            },
            cpr_decouple: args.decouple,
        },
        method: partitioner,
        np_list: vec![args.np],
    };

    let outcomes = run_solver_experiment(&spec)?;
    let rows: Vec<_> = outcomes.iter().map(|o| o.row.clone()).collect();
    write_out(&args.out, |w| write_solve_csv(w, &rows))?;
    if let Some(json) = &args.json {
        std::fs::write(json, ReportDoc::solves(rows.clone()).to_json())?;
    }
    if let Some(history) = &args.history {
        let mut w = BufWriter::new(File::create(history)?);
        write_history_csv(&mut w, &outcomes[0].history)?;
        w.flush()?;
    }
    if rows.iter().all(|r| r.converged) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Partition(args) => cmd_partition(args),
        Command::Solve(args) => cmd_solve(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
