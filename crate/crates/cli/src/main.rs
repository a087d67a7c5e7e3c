use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use flowtopo::analysis::{
    self, coverage, export_fields, import_fields, infer_n_div, read_levelset, FieldSet,
};
use flowtopo::config::{parse_config, RunConfig};
use flowtopo::error::Error;
use flowtopo::exec::Execution;
use flowtopo::fem::Tables;
use flowtopo::mesh::TriMesh;
use flowtopo::optimizer::{optimize_with, Evaluation, OptimizationResult, Problem, Termination};
use log::info;

const EXIT_STAGNATION: u8 = 2;
const EXIT_MAX_ITER: u8 = 3;
const EXIT_INPUT: u8 = 4;
const EXIT_SOLVER: u8 = 5;

#[derive(Parser)]
#[command(
    name = "flowtopo",
    version,
    about = "Level-set topology optimization for uniform flow distribution"
)]
struct Cli {
    /// Run every kernel on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization and write convergence history and final fields.
    Optimize(OptimizeArgs),
    /// Forward solve, smoothing and metrics for a given level set.
    Solve(SolveArgs),
    /// Recompute coverage metrics from exported fields.
    Metrics(MetricsArgs),
    /// Run the optimization for several smoothing step lengths.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the smoothing step length.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the mesh resolution.
    #[arg(long)]
    n_div: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV file with a `psi` column holding one value per mesh vertex.
    #[arg(long)]
    levelset: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory containing fields.csv.
    #[arg(long)]
    fields: PathBuf,
    /// Threshold speed.
    #[arg(long, default_value_t = 0.1)]
    u_t: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated smoothing step lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    dt: Vec<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // usage errors are input errors; clap's own code 2 would read as stagnation
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let outcome = match cli.command {
        Command::Optimize(a) => run_optimize(a, exec),
        Command::Solve(a) => run_solve(a, exec),
        Command::Metrics(a) => run_metrics(a),
        Command::Sweep(a) => run_sweep(a, exec),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Iteration { source, .. } => error_code(source),
        Error::Singular(_)
        | Error::Solver { .. }
        | Error::DegenerateDerivative(_)
        | Error::Projection { .. }
        | Error::EmptyFluidRegion => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn termination_code(t: Termination) -> u8 {
    match t {
        Termination::Converged | Termination::ZeroObjective => 0,
        Termination::Stagnation | Termination::Degenerate => EXIT_STAGNATION,
        Termination::MaxIterations => EXIT_MAX_ITER,
    }
}

fn field_set(eval: &Evaluation) -> FieldSet {
    FieldSet {
        psi: eval.psi.clone(),
        u: eval.state.u.clone(),
        p: eval.state.p.clone(),
        u_s: eval.smoothed.u_s.clone(),
    }
}

/// Runs one optimization into `out` and returns its result.
fn optimize_into(
    config: &RunConfig,
    out: &Path,
    exec: Execution,
) -> Result<OptimizationResult, Error> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    std::fs::write(out.join("run.cfg"), config.to_string()).map_err(|e| Error::Io {
        path: out.join("run.cfg"),
        source: e,
    })?;
    let problem = Problem::new(config, exec)?;
    info!(
        "mesh n_div = {}: {} triangles, {} free dofs; dt = {:e}",
        config.n_div,
        problem.mesh().n_triangles(),
        problem.stokes().n_free(),
        config.dt
    );
    let psi0 = problem.initial_levelset()?;
    let every = config.snapshot_every;
    let mesh = problem.mesh().clone();
    let result = optimize_with(&problem, &psi0, |row, eval| {
        if every > 0 && row.iter % every == 0 {
            export_fields(
                &mesh,
                &field_set(eval),
                &out.join(format!("snapshots/iter_{:04}", row.iter)),
            )?;
        }
        Ok(())
    })?;
    result.record.write_csv(&out.join("convergence.csv"))?;
    export_fields(&mesh, &field_set(&result.evaluation), out)?;
    let last = result
        .record
        .rows
        .last()
        .expect("at least one iteration is recorded");
    println!(
        "{}: {} iterations, J = {:e}, theta = {:.4}, volume = {:.4}, coverage_D = {:.2} %, coverage_Omega = {:.2} %",
        result.termination.as_str(),
        last.iter,
        last.j,
        last.theta,
        last.volume,
        100.0 * last.coverage_d,
        100.0 * last.coverage_omega
    );
    Ok(result)
}

fn run_optimize(a: OptimizeArgs, exec: Execution) -> Result<u8, Error> {
    let mut config = parse_config(&a.config)?;
    if let Some(dt) = a.dt {
        config.dt = dt;
    }
    if let Some(n) = a.n_div {
        config.n_div = n;
    }
    if let Some(out) = a.out {
        config.output_dir = out;
    }
    config.validate()?;
    let out = config.output_dir.clone();
    let result = optimize_into(&config, &out, exec)?;
    Ok(termination_code(result.termination))
}

fn run_solve(a: SolveArgs, exec: Execution) -> Result<u8, Error> {
    let config = parse_config(&a.config)?;
    let problem = Problem::new(&config, exec)?;
    let psi = read_levelset(&a.levelset, problem.mesh().n_vertices())?;
    let eval = problem.evaluate(&psi)?;
    let cov = problem.coverage(&eval)?;
    export_fields(problem.mesh(), &field_set(&eval), &config.output_dir)?;
    println!("J = {:e}", eval.j);
    println!("volume = {:.6}", eval.volume);
    println!("coverage_D = {:.6}", cov.coverage_d);
    println!("coverage_Omega = {:.6}", cov.coverage_omega);
    println!("residual = {:.3e}", eval.diagnostics.residual);
    Ok(0)
}

fn run_metrics(a: MetricsArgs) -> Result<u8, Error> {
    let path = a.fields.join(analysis::CSV_FILE);
    let fields = import_fields(&path)?;
    let n = infer_n_div(&fields).ok_or_else(|| Error::Format {
        path: path.clone(),
        message: format!("{} vertices do not form a square grid", fields.psi.len()),
    })?;
    let mesh = Arc::new(TriMesh::unit_square(n)?);
    if fields.u.len() != mesh.n_p2() {
        return Err(Error::Format {
            path,
            message: format!("expected {} nodes, found {}", mesh.n_p2(), fields.u.len()),
        });
    }
    let tables = Tables::default();
    let cov = coverage(&mesh, &tables, &fields.u, &fields.u_s, a.u_t, &fields.psi)?;
    println!("coverage_D = {:.6}", cov.coverage_d);
    println!("coverage_Omega = {:.6}", cov.coverage_omega);
    Ok(0)
}

fn run_sweep(a: SweepArgs, exec: Execution) -> Result<u8, Error> {
    let base = parse_config(&a.config)?;
    let mut summary = String::from("dt,termination,iterations,J,coverage_D,coverage_Omega\n");
    let mut code = 0;
    for dt in a.dt {
        let config = RunConfig {
            dt,
            output_dir: base.output_dir.join(format!("dt_{dt:e}")),
            ..base.clone()
        };
        config.validate()?;
        let result = optimize_into(&config, &config.output_dir, exec)?;
        let last = result
            .record
            .rows
            .last()
            .expect("at least one iteration is recorded");
        summary.push_str(&format!(
            "{dt:e},{},{},{:e},{:e},{:e}\n",
            result.termination.as_str(),
            last.iter,
            last.j,
            last.coverage_d,
            last.coverage_omega
        ));
        code = code.max(termination_code(result.termination));
    }
    let path = base.output_dir.join("sweep.csv");
    std::fs::write(&path, &summary).map_err(|e| Error::Io { path, source: e })?;
    print!("{summary}");
    Ok(code)
}
