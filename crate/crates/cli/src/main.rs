use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use parode::IeksConfig;

use parode_cli::{
    all_problems, default_grid_sizes, emit, make_pool, parse_method, render_svg, run_benchmark, run_compare,
    run_solve, write_csv, BenchmarkPlan, COMPARE_GRID_SIZES,
};

#[derive(Parser)]
#[command(name = "parode", version, about = "Parallel-in-time probabilistic ODE solver")]
struct Cli {
    /// Work-pool width (defaults to the number of hardware threads).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write the solution as JSON.
    Solve {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value = "paraieks")]
        method: String,
        #[arg(long, default_value_t = 2)]
        nu: usize,
        /// Number of grid steps.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        max_iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep grid sizes and write one CSV row per cell.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_value = "logistic,rigidbody,vanderpol")]
        problems: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "paraieks,ieks,eks")]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        nu: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a log-log runtime/RMSE plot.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Check that the sequential and parallel solvers agree.
    Compare {
        #[arg(long, value_delimiter = ',')]
        problems: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        nu: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    let pool = make_pool(cli.workers)?;
    match cli.command {
        Command::Solve { problem, method, nu, n, max_iterations, out } => {
            let method = parse_method(&method)?;
            let cfg = IeksConfig { max_iterations, ..IeksConfig::default() };
            let output = run_solve(&problem, method, nu, n, &cfg, &pool)?;
            let mut json = serde_json::to_vec_pretty(&output)?;
            json.push(b'\n');
            emit(out.as_deref(), &json)?;
            Ok(if output.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Benchmark { problems, methods, nu, grid_sizes, repeats, out, svg } => {
            let plan = BenchmarkPlan {
                problems,
                methods: methods.iter().map(|m| parse_method(m)).collect::<Result<_>>()?,
                nus: nu,
                grid_sizes: grid_sizes.unwrap_or_else(default_grid_sizes),
                repeats,
            };
            let records = run_benchmark(&plan, &pool, |r| {
                eprintln!(
                    "{} {} nu={} N={}: rmse={} iterations={}",
                    r.problem,
                    r.method,
                    r.nu,
                    r.grid_size,
                    r.rmse.map_or("failed".to_string(), |e| format!("{e:.3e}")),
                    r.iterations
                );
            })?;
            let mut buf = Vec::new();
            write_csv(&records, &mut buf)?;
            emit(out.as_deref(), &buf)?;
            if let Some(path) = svg {
                std::fs::write(&path, render_svg(&records))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { problems, nu, grid_sizes, tolerance } => {
            let problems = problems.unwrap_or_else(all_problems);
            let sizes = grid_sizes.unwrap_or_else(|| COMPARE_GRID_SIZES.to_vec());
            let results = run_compare(&problems, &nu, &sizes, tolerance, &pool)?;
            let mut all = true;
            for c in &results {
                all &= c.passed;
                println!(
                    "{} {} nu={} N={}: max mean difference {:.3e}, iterations {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.problem,
                    c.nu,
                    c.grid_size,
                    c.max_mean_diff,
                    if c.same_iterations { "equal" } else { "differ" }
                );
            }
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
