//! Commands behind the `parode` binary.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use parode::{
    by_name, rmse, solve, uniform_grid, IeksConfig, IwpPrior, Method, NamedProblem, SolverReport, WorkPool,
    PROBLEM_NAMES,
};

pub const CSV_HEADER: &str =
    "problem,method,nu,grid_size,rmse,runtime_seconds,iterations,sigma_hat,converged,combine_invocations,sequential_depth";

pub const COMPARE_GRID_SIZES: [usize; 3] = [30, 100, 150];

pub fn default_grid_sizes() -> Vec<usize> {
    (4..=12).map(|k| 1usize << k).collect()
}

/// Output of `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub problem: String,
    pub method: String,
    pub nu: usize,
    pub grid: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
    pub sigma_hat: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveOutput {
    pub fn from_report(problem: &str, method: Method, nu: usize, report: &SolverReport) -> Self {
        Self {
            problem: problem.to_string(),
            method: method.name().to_string(),
            nu,
            grid: report.times.clone(),
            means: report.solution_means().iter().map(|m| m.iter().copied().collect()).collect(),
            stds: report.solution_stds().iter().map(|s| s.iter().copied().collect()).collect(),
            sigma_hat: report.sigma_hat,
            iterations: report.iterations,
            converged: report.converged,
        }
    }
}

/// One benchmark cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub method: String,
    pub nu: usize,
    pub grid_size: usize,
    pub rmse: Option<f64>,
    pub runtime_seconds: Option<f64>,
    pub iterations: usize,
    pub sigma_hat: Option<f64>,
    pub converged: bool,
    pub combine_invocations: usize,
    pub sequential_depth: usize,
}

pub fn parse_problem(name: &str) -> Result<NamedProblem> {
    by_name(name).map_err(Into::into)
}

pub fn parse_method(name: &str) -> Result<Method> {
    name.parse::<Method>().map_err(Into::into)
}

pub fn make_pool(workers: Option<usize>) -> Result<WorkPool> {
    Ok(match workers {
        Some(w) => WorkPool::new(w)?,
        None => WorkPool::hardware()?,
    })
}

fn check_grid_size(n: usize) -> Result<()> {
    if n < 2 {
        bail!("grid size must be at least 2, got {n}");
    }
    Ok(())
}

pub fn run_solve(
    problem: &str,
    method: Method,
    nu: usize,
    n: usize,
    cfg: &IeksConfig,
    pool: &WorkPool,
) -> Result<SolveOutput> {
    check_grid_size(n)?;
    let p = parse_problem(problem)?;
    let prior = IwpPrior::new(nu, p.ivp.dim())?;
    let grid = uniform_grid(p.ivp.t_end(), n);
    let report = solve(method, &p.ivp, &prior, &grid, cfg, pool)?;
    Ok(SolveOutput::from_report(p.name, method, nu, &report))
}

pub struct BenchmarkPlan {
    pub problems: Vec<String>,
    pub methods: Vec<Method>,
    pub nus: Vec<usize>,
    pub grid_sizes: Vec<usize>,
    pub repeats: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn run_cell(
    p: &NamedProblem,
    method: Method,
    nu: usize,
    n: usize,
    repeats: usize,
    pool: &WorkPool,
) -> Result<RunRecord> {
    let prior = IwpPrior::new(nu, p.ivp.dim())?;
    let grid = uniform_grid(p.ivp.t_end(), n);
    let reference = p.reference_on(&grid)?;
    let cfg = IeksConfig::default();
    let mut report = solve(method, &p.ivp, &prior, &grid, &cfg, pool)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        report = solve(method, &p.ivp, &prior, &grid, &cfg, pool)?;
        times.push(start.elapsed().as_secs_f64());
    }
    let stats = report.scan_stats();
    Ok(RunRecord {
        problem: p.name.to_string(),
        method: method.name().to_string(),
        nu,
        grid_size: n,
        rmse: Some(rmse(&report.solution_means(), &reference)?),
        runtime_seconds: Some(median(times)),
        iterations: report.iterations,
        sigma_hat: Some(report.sigma_hat),
        converged: report.converged,
        combine_invocations: stats.combine_invocations,
        sequential_depth: stats.sequential_depth,
    })
}

/// Runs every cell of the plan in order; failing cells are recorded with an
/// empty rmse and `converged = false`.
pub fn run_benchmark(plan: &BenchmarkPlan, pool: &WorkPool, mut progress: impl FnMut(&RunRecord)) -> Result<Vec<RunRecord>> {
    if plan.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    for &n in &plan.grid_sizes {
        check_grid_size(n)?;
    }
    let mut sizes = plan.grid_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let problems = plan.problems.iter().map(|p| parse_problem(p)).collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    for p in &problems {
        for &method in &plan.methods {
            for &nu in &plan.nus {
                for &n in &sizes {
                    let record = run_cell(p, method, nu, n, plan.repeats, pool).unwrap_or_else(|_| RunRecord {
                        problem: p.name.to_string(),
                        method: method.name().to_string(),
                        nu,
                        grid_size: n,
                        rmse: None,
                        runtime_seconds: None,
                        iterations: 0,
                        sigma_hat: None,
                        converged: false,
                        combine_invocations: 0,
                        sequential_depth: 0,
                    });
                    progress(&record);
                    records.push(record);
                }
            }
        }
    }
    Ok(records)
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    if records.is_empty() {
        writer.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(data: &[u8]) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(data);
    reader.deserialize().map(|r| r.map_err(Into::into)).collect()
}

/// Log-log runtime against RMSE, one polyline per (problem, method, ν).
pub fn render_svg(records: &[RunRecord]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 50.0;
    let points: Vec<(&RunRecord, f64, f64)> = records
        .iter()
        .filter_map(|r| match (r.rmse, r.runtime_seconds) {
            (Some(e), Some(t)) if e > 0.0 && t > 0.0 => Some((r, e.log10(), t.log10())),
            _ => None,
        })
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    svg.push_str(&format!(
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log10 RMSE</text>\n",
        W / 2.0,
        H - 15.0
    ));
    svg.push_str(&format!(
        "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">log10 runtime [s]</text>\n",
        H / 2.0,
        H / 2.0
    ));
    if !points.is_empty() {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(_, x, y) in &points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0).max(1e-12) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0).max(1e-12) * (H - 2.0 * PAD);
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for &(r, x, y) in &points {
            let key = format!("{} {} nu={}", r.problem, r.method, r.nu);
            match series.iter_mut().find(|(k, _)| *k == key) {
                Some((_, pts)) => pts.push((sx(x), sy(y))),
                None => series.push((key, vec![(sx(x), sy(y))])),
            }
        }
        for (i, (key, pts)) in series.iter().enumerate() {
            let color = colors[i % colors.len()];
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>\n",
                path.join(" ")
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{key}</text>\n",
                PAD + 8.0,
                PAD + 16.0 * (i + 1) as f64
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// One line of the `compare` report.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub problem: String,
    pub nu: usize,
    pub grid_size: usize,
    pub max_mean_diff: f64,
    pub same_iterations: bool,
    pub passed: bool,
}

pub fn run_compare(
    problems: &[String],
    nus: &[usize],
    grid_sizes: &[usize],
    tolerance: f64,
    pool: &WorkPool,
) -> Result<Vec<Comparison>> {
    if !(tolerance >= 0.0) {
        bail!("--tolerance must be non-negative");
    }
    let cfg = IeksConfig::default();
    let mut out = Vec::new();
    for name in problems {
        let p = parse_problem(name)?;
        for &nu in nus {
            let prior = IwpPrior::new(nu, p.ivp.dim())?;
            for &n in grid_sizes {
                check_grid_size(n)?;
                let grid = uniform_grid(p.ivp.t_end(), n);
                let par = solve(Method::ParaIeks, &p.ivp, &prior, &grid, &cfg, pool)
                    .with_context(|| format!("paraieks on {} N={n}", p.name))?;
                let seq = solve(Method::Ieks, &p.ivp, &prior, &grid, &cfg, pool)
                    .with_context(|| format!("ieks on {} N={n}", p.name))?;
                let max_mean_diff = par
                    .marginals
                    .iter()
                    .zip(&seq.marginals)
                    .map(|(a, b)| (&a.mean - &b.mean).amax())
                    .fold(0.0, f64::max);
                let same_iterations = par.iterations == seq.iterations;
                out.push(Comparison {
                    problem: p.name.to_string(),
                    nu,
                    grid_size: n,
                    max_mean_diff,
                    same_iterations,
                    passed: same_iterations && max_mean_diff <= tolerance,
                });
            }
        }
    }
    Ok(out)
}

pub fn all_problems() -> Vec<String> {
    PROBLEM_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Writes to `path`, or stdout when `None`.
pub fn emit(path: Option<&Path>, contents: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents)?;
            stdout.flush()?;
            Ok(())
        }
    }
}
