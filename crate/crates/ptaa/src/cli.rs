//! Command implementations behind the binary: single runs with CSV/JSON
//! reports, paired-variant comparisons, and the (k, m) sweep.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::anderson::Variant;
use crate::config::RunConfig;
use crate::engine::{init_from_trajectory, solve_parallel, SolveReport, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::schedule::CoefficientTable;
use crate::score::ScoreModel;
use crate::system::{sequential_solve, TrajectoryState};
use crate::trajectory_io::{load_trajectory, save_trajectory};

/// Algorithms selectable in `compare`; `FpPlus` is plain fixed-point with
/// the order swept over a grid and the best mean picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareVariant {
    Fp,
    FpPlus,
    Aa,
    AaPlus,
    Taa,
}

impl CompareVariant {
    pub const ALL: [CompareVariant; 5] = [
        CompareVariant::Fp,
        CompareVariant::FpPlus,
        CompareVariant::Aa,
        CompareVariant::AaPlus,
        CompareVariant::Taa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CompareVariant::Fp => "fp",
            CompareVariant::FpPlus => "fp-plus",
            CompareVariant::Aa => "aa",
            CompareVariant::AaPlus => "aa-plus",
            CompareVariant::Taa => "taa",
        }
    }
}

impl FromStr for CompareVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp" => Ok(CompareVariant::Fp),
            "fp+" | "fp-plus" | "fp_plus" => Ok(CompareVariant::FpPlus),
            "aa" => Ok(CompareVariant::Aa),
            "aa+" | "aa-plus" | "aa_plus" => Ok(CompareVariant::AaPlus),
            "taa" => Ok(CompareVariant::Taa),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedSummary {
    pub seed: u64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub total_evals: usize,
    pub distance_to_oracle: f64,
    pub report_csv: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summaries: Vec<SeedSummary>,
    pub all_converged: bool,
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub variant: String,
    pub seed: u64,
    pub k: usize,
    pub m: usize,
    pub iterations: usize,
    pub evals: usize,
    pub distance: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub k: usize,
    pub m: usize,
    pub mean_iterations: f64,
    pub mean_evals: f64,
}

/// Runs `f` inside a dedicated rayon pool when a thread count is configured.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn rel_distance(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let den = norm(b);
    if den == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / den
    }
}

fn seed_path(base: &Path, seed: u64, multi: bool) -> PathBuf {
    if !multi {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = base.extension().and_then(|s| s.to_str());
    let name = match ext {
        Some(ext) => format!("{stem}_seed{seed}.{ext}"),
        None => format!("{stem}_seed{seed}"),
    };
    base.with_file_name(name)
}

/// Writes the per-iteration convergence records. Non-timing columns are
/// deterministic for a fixed config and seed; wallclock stays in its own
/// trailing column.
pub fn write_report_csv(path: &Path, report: &SolveReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "iteration,t1,t2,sum_residual,max_residual,evals,wallclock_ms"
    )?;
    for rec in &report.records {
        writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{},{:.3}",
            rec.iteration,
            rec.t1,
            rec.t2,
            rec.sum_residual,
            rec.max_residual,
            rec.evals,
            rec.wallclock_ns as f64 / 1e6,
        )?;
    }
    Ok(())
}

struct SingleRun {
    state: TrajectoryState,
    report: SolveReport,
    distance: f64,
}

fn run_single(
    coeffs: &CoefficientTable,
    model: &dyn ScoreModel,
    solver: &SolverConfig,
    init: TrajectoryState,
) -> Result<SingleRun> {
    let oracle = sequential_solve(coeffs, model, init.noises())?;
    let (state, report) = solve_parallel(solver, coeffs, model, init)?;
    let distance = rel_distance(state.value(0), oracle.value(0));
    Ok(SingleRun {
        state,
        report,
        distance,
    })
}

fn initial_state(cfg: &RunConfig, coeffs: &CoefficientTable, seed: u64) -> Result<TrajectoryState> {
    match &cfg.run.init_trajectory {
        Some(path) => {
            let (existing, _) = load_trajectory(path, coeffs)?;
            let t_init = cfg.solver.t_init.unwrap_or(coeffs.steps());
            init_from_trajectory(&existing, t_init, coeffs)
        }
        None => Ok(TrajectoryState::random_init(
            coeffs.steps(),
            coeffs.dim(),
            seed,
        )),
    }
}

/// Executes the sequential oracle plus the configured parallel variant for
/// every seed, writing convergence CSVs, the summary JSON, and optional
/// trajectory files.
pub fn cmd_run(cfg: &RunConfig, verbose: bool) -> Result<RunOutcome> {
    let coeffs = cfg.build_coefficients()?;
    let model = cfg.build_model()?;
    let seeds = cfg.seeds();
    let multi = seeds.len() > 1;

    with_pool(cfg.thread_count(), || {
        let mut summaries = Vec::new();
        for &seed in &seeds {
            let mut solver = cfg.build_solver_config(seed);
            if verbose {
                solver.progress = Some(Arc::new(|rec| {
                    eprintln!(
                        "iter {:>4}  window [{:>4}, {:>4}]  sum_res {:>12.5e}  evals {}",
                        rec.iteration, rec.t1, rec.t2, rec.sum_residual, rec.evals
                    );
                }));
            }
            let init = initial_state(cfg, &coeffs, seed)?;
            let run = run_single(&coeffs, model.as_ref(), &solver, init)?;

            let report_csv = match &cfg.run.report_csv {
                Some(base) => {
                    let path = seed_path(base, seed, multi);
                    write_report_csv(&path, &run.report)?;
                    Some(path)
                }
                None => None,
            };
            if let Some(base) = &cfg.run.save_trajectory {
                let path = seed_path(base, seed, multi);
                save_trajectory(&run.state, &coeffs, seed, &path)?;
            }
            summaries.push(SeedSummary {
                seed,
                status: run.report.status,
                iterations: run.report.iterations,
                total_evals: run.report.total_evals,
                distance_to_oracle: run.distance,
                report_csv,
            });
        }

        let all_converged = summaries
            .iter()
            .all(|s| s.status == SolveStatus::Converged);
        if let Some(path) = &cfg.run.summary_json {
            write_summary_json(path, &summaries, all_converged)?;
        }
        Ok(RunOutcome {
            summaries,
            all_converged,
        })
    })
}

fn write_summary_json(path: &Path, summaries: &[SeedSummary], all_converged: bool) -> Result<()> {
    let runs: Vec<serde_json::Value> = summaries
        .iter()
        .map(|s| {
            serde_json::json!({
                "seed": s.seed,
                "status": s.status,
                "iterations": s.iterations,
                "total_evals": s.total_evals,
                "distance_to_oracle": s.distance_to_oracle,
                "report_csv": s.report_csv.as_ref().map(|p| p.display().to_string()),
            })
        })
        .collect();
    let n = summaries.len() as f64;
    let summary = serde_json::json!({
        "runs": runs,
        "all_converged": all_converged,
        "mean_iterations": summaries.iter().map(|s| s.iterations as f64).sum::<f64>() / n,
        "mean_total_evals": summaries.iter().map(|s| s.total_evals as f64).sum::<f64>() / n,
        "mean_distance_to_oracle": summaries.iter().map(|s| s.distance_to_oracle).sum::<f64>() / n,
    });
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

/// Default order grid for the swept fixed-point baseline: powers of two up
/// to `T`, always including the window size so the swept variant can never
/// lose to the `k = w` baseline on the mean.
pub fn default_k_grid(steps: usize, window: usize) -> Vec<usize> {
    let mut grid = Vec::new();
    let mut k = 1;
    while k <= steps {
        grid.push(k);
        k *= 2;
    }
    if !grid.contains(&window) {
        grid.push(window);
    }
    grid.sort_unstable();
    grid
}

/// Runs each requested variant over the configured seeds and writes one row
/// per (variant, seed). The plain fixed-point baseline uses `k = w`.
pub fn cmd_compare(
    cfg: &RunConfig,
    variants: &[CompareVariant],
    k_grid: Option<&[usize]>,
    out_path: Option<&Path>,
) -> Result<Vec<CompareRow>> {
    let coeffs = cfg.build_coefficients()?;
    let model = cfg.build_model()?;
    let seeds = cfg.seeds();
    let steps = coeffs.steps();
    let window = cfg.solver.window.unwrap_or(steps);
    let default_grid = default_k_grid(steps, window);
    let grid = k_grid.unwrap_or(&default_grid);
    if grid.is_empty() || grid.iter().any(|&k| k < 1 || k > steps) {
        return Err(Error::Config(format!("k grid entries must be in 1..={steps}")));
    }

    with_pool(cfg.thread_count(), || {
        let mut rows = Vec::new();
        for &variant in variants {
            match variant {
                CompareVariant::FpPlus => {
                    // Grid-search the order on mean iterations, then report
                    // the winning column.
                    let mut best: Option<(usize, f64, Vec<CompareRow>)> = None;
                    for &k in grid {
                        let rows_k =
                            run_variant_rows(cfg, &coeffs, model.as_ref(), &seeds, variant, k)?;
                        let mean = rows_k.iter().map(|r| r.iterations as f64).sum::<f64>()
                            / rows_k.len() as f64;
                        let better = match &best {
                            None => true,
                            Some((_, best_mean, _)) => mean < *best_mean,
                        };
                        if better {
                            best = Some((k, mean, rows_k));
                        }
                    }
                    rows.extend(best.expect("nonempty grid").2);
                }
                _ => {
                    let k = match variant {
                        CompareVariant::Fp => window,
                        _ => cfg.solver.k,
                    };
                    rows.extend(run_variant_rows(
                        cfg,
                        &coeffs,
                        model.as_ref(),
                        &seeds,
                        variant,
                        k,
                    )?);
                }
            }
        }
        if let Some(path) = out_path {
            write_compare_csv(path, &rows)?;
        }
        Ok(rows)
    })
}

fn run_variant_rows(
    cfg: &RunConfig,
    coeffs: &CoefficientTable,
    model: &dyn ScoreModel,
    seeds: &[u64],
    variant: CompareVariant,
    k: usize,
) -> Result<Vec<CompareRow>> {
    let (engine_variant, m) = match variant {
        CompareVariant::Fp | CompareVariant::FpPlus => (Variant::Fp, 1),
        CompareVariant::Aa => (Variant::Aa, cfg.solver.m),
        CompareVariant::AaPlus => (Variant::AaPlus, cfg.solver.m),
        CompareVariant::Taa => (Variant::Taa, cfg.solver.m),
    };
    let mut rows = Vec::new();
    for &seed in seeds {
        let mut solver = cfg.build_solver_config(seed);
        solver.variant = engine_variant;
        solver.k = k;
        solver.m = m;
        let init = initial_state(cfg, coeffs, seed)?;
        let run = run_single(coeffs, model, &solver, init)?;
        rows.push(CompareRow {
            variant: variant.name().to_string(),
            seed,
            k,
            m,
            iterations: run.report.iterations,
            evals: run.report.total_evals,
            distance: run.distance,
            status: run.report.status,
        });
    }
    Ok(rows)
}

fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "variant,seed,k,m,iterations,evals,distance,status")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.16e},{}",
            row.variant,
            row.seed,
            row.k,
            row.m,
            row.iterations,
            row.evals,
            row.distance,
            row.status,
        )?;
    }
    Ok(())
}

/// Mean iterations-to-criterion per (k, m) cell over the configured seeds,
/// using the configured variant. `m = 1` cells run plain fixed-point by
/// construction.
pub fn cmd_sweep(
    cfg: &RunConfig,
    k_grid: &[usize],
    m_grid: &[usize],
    out_path: Option<&Path>,
) -> Result<Vec<SweepCell>> {
    let coeffs = cfg.build_coefficients()?;
    let model = cfg.build_model()?;
    let seeds = cfg.seeds();
    let steps = coeffs.steps();
    let dim = coeffs.dim();
    if k_grid.is_empty() || m_grid.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    if k_grid.iter().any(|&k| k < 1 || k > steps) {
        return Err(Error::Config(format!("k grid entries must be in 1..={steps}")));
    }
    if m_grid.iter().any(|&m| m < 1 || m >= dim) {
        return Err(Error::Config(format!(
            "m grid entries must be in 1..{dim} (m < d)"
        )));
    }

    with_pool(cfg.thread_count(), || {
        let mut cells = Vec::new();
        for &k in k_grid {
            for &m in m_grid {
                let mut iter_sum = 0.0;
                let mut eval_sum = 0.0;
                for &seed in &seeds {
                    let mut solver = cfg.build_solver_config(seed);
                    solver.k = k;
                    solver.m = m;
                    let init = initial_state(cfg, &coeffs, seed)?;
                    let (_, report) = solve_parallel(&solver, &coeffs, model.as_ref(), init)?;
                    iter_sum += report.iterations as f64;
                    eval_sum += report.total_evals as f64;
                }
                cells.push(SweepCell {
                    k,
                    m,
                    mean_iterations: iter_sum / seeds.len() as f64,
                    mean_evals: eval_sum / seeds.len() as f64,
                });
            }
        }
        if let Some(path) = out_path {
            write_sweep_csv(path, &cells)?;
        }
        Ok(cells)
    })
}

fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "k,m,mean_iterations,mean_evals")?;
    for cell in cells {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e}",
            cell.k, cell.m, cell.mean_iterations, cell.mean_evals
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in CompareVariant::ALL {
            assert_eq!(CompareVariant::from_str(v.name()).unwrap(), v);
        }
        assert_eq!(
            CompareVariant::from_str("FP+").unwrap(),
            CompareVariant::FpPlus
        );
        assert!(CompareVariant::from_str("nope").is_err());
    }

    #[test]
    fn seed_paths_only_split_for_multi_runs() {
        let base = Path::new("out/report.csv");
        assert_eq!(seed_path(base, 3, false), PathBuf::from("out/report.csv"));
        assert_eq!(
            seed_path(base, 3, true),
            PathBuf::from("out/report_seed3.csv")
        );
    }

    #[test]
    fn default_grid_contains_window() {
        let grid = default_k_grid(100, 100);
        assert!(grid.contains(&1));
        assert!(grid.contains(&64));
        assert!(grid.contains(&100));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
