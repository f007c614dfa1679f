//! Solver orchestration: sliding window, convergence frontier, stopping
//! criterion, history-accelerated updates, early stopping, warm starts, and
//! the per-iteration report.
//!
//! Each pass performs one batched score evaluation over the active window,
//! computes first-order residuals, moves the frontier, then updates the
//! window variables with the configured rule. Updates are applied as
//! `x_new = F - (delta + R)`: for pure fixed-point rows the correction term
//! is exactly `+0.0`, so the assigned value is bitwise `F`. That exactness is
//! what makes a safeguarded frontier's residual vanish identically on the
//! next pass and gives the `T`-step worst-case bound for every variant.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::anderson::{
    aa_apply, aa_plus_apply, safeguard, taa_apply, AAConfig, HistoryBuffer, HistoryColumn, Variant,
};
use crate::error::{Error, Result};
use crate::schedule::CoefficientTable;
use crate::score::{eval_batch, ScoreModel};
use crate::system::{f_order_k, residual_for, TrajectoryState};

/// Decides after each pass whether to keep iterating; returning `Ok(true)`
/// stops the solve with [`SolveStatus::EarlyStopped`].
pub type EarlyStopHook =
    Arc<dyn Fn(&SolveReport, &TrajectoryState) -> std::result::Result<bool, String> + Send + Sync>;

/// Per-pass progress callback.
pub type ProgressHook = Arc<dyn Fn(&IterationRecord) + Send + Sync>;

#[derive(Clone)]
pub struct SolverConfig {
    /// Order of the update functions, `1..=T`.
    pub k: usize,
    /// History capacity; `m <= 1` reverts every variant to plain fixed-point
    /// iteration, which uses no history.
    pub m: usize,
    /// Tolerance used to build the coefficient thresholds; must match the
    /// table the solver runs against.
    pub tau: f64,
    /// Gram regularization.
    pub lambda: f64,
    /// Window size, `1..=T`.
    pub w: usize,
    /// Maximum update passes.
    pub s_max: usize,
    /// Highest unsolved timestep count at start; `T` for a cold start,
    /// smaller after [`init_from_trajectory`].
    pub t_init: usize,
    pub variant: Variant,
    pub safeguard: bool,
    pub seed: u64,
    pub early_stop: Option<EarlyStopHook>,
    pub progress: Option<ProgressHook>,
}

impl std::fmt::Debug for SolverConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverConfig")
            .field("k", &self.k)
            .field("m", &self.m)
            .field("tau", &self.tau)
            .field("lambda", &self.lambda)
            .field("w", &self.w)
            .field("s_max", &self.s_max)
            .field("t_init", &self.t_init)
            .field("variant", &self.variant)
            .field("safeguard", &self.safeguard)
            .field("seed", &self.seed)
            .field("early_stop", &self.early_stop.is_some())
            .field("progress", &self.progress.is_some())
            .finish()
    }
}

impl SolverConfig {
    pub fn new(k: usize, m: usize, tau: f64, w: usize, s_max: usize, t_init: usize) -> Self {
        Self {
            k,
            m,
            tau,
            lambda: 1e-8,
            w,
            s_max,
            t_init,
            variant: Variant::Taa,
            safeguard: true,
            seed: 0,
            early_stop: None,
            progress: None,
        }
    }

    /// The rule actually applied: `m <= 1` keeps no usable history, so every
    /// variant reverts to plain fixed-point iteration.
    pub fn effective_variant(&self) -> Variant {
        if self.m <= 1 {
            Variant::Fp
        } else {
            self.variant
        }
    }

    fn validate(&self, coeffs: &CoefficientTable) -> Result<()> {
        let steps = coeffs.steps();
        if self.k < 1 || self.k > steps {
            return Err(Error::SolverConfig(format!(
                "k must be in 1..={steps}, got {}",
                self.k
            )));
        }
        if self.w < 1 || self.w > steps {
            return Err(Error::SolverConfig(format!(
                "window must be in 1..={steps}, got {}",
                self.w
            )));
        }
        if self.t_init > steps {
            return Err(Error::SolverConfig(format!(
                "t_init must be in 0..={steps}, got {}",
                self.t_init
            )));
        }
        if self.s_max == 0 {
            return Err(Error::SolverConfig("s_max must be >= 1".into()));
        }
        if self.m == 0 {
            return Err(Error::SolverConfig("history size must be >= 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::SolverConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.effective_variant() != Variant::Fp && self.m >= coeffs.dim() {
            return Err(Error::SolverConfig(format!(
                "history size must satisfy m < d for accelerated variants, got m={} d={}",
                self.m,
                coeffs.dim()
            )));
        }
        if self.tau != coeffs.tau() {
            return Err(Error::SolverConfig(format!(
                "tau {} does not match the coefficient table ({})",
                self.tau,
                coeffs.tau()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    EarlyStopped,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::EarlyStopped => "early-stopped",
        };
        f.write_str(name)
    }
}

/// One update pass: the window it evaluated, its first-order residuals, and
/// the evaluation count (window size, the sequential-equivalent measure).
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub t1: usize,
    pub t2: usize,
    pub sum_residual: f64,
    pub max_residual: f64,
    pub residuals: Option<Vec<f64>>,
    pub evals: usize,
    pub wallclock_ns: u64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub records: Vec<IterationRecord>,
    pub status: SolveStatus,
    /// Update passes performed; the final criterion-only check is not
    /// counted (it performs no update).
    pub iterations: usize,
    /// Sum of window sizes over all update passes.
    pub total_evals: usize,
    pub window: usize,
}

impl SolveReport {
    fn new(window: usize) -> Self {
        Self {
            records: Vec::new(),
            status: SolveStatus::MaxIters,
            iterations: 0,
            total_evals: 0,
            window,
        }
    }
}

/// Frontier update for one pass: finds the largest in-window timestep whose
/// residual exceeds its threshold, freezes everything above it, and slides
/// the window bottom. Returns `None` when every window residual is at or
/// below threshold, which terminates the solve.
pub fn update_window(
    window_residuals: &[f64],
    thresholds: &[f64],
    t1: usize,
    t2: usize,
    w: usize,
) -> (Option<(usize, usize)>, Vec<usize>) {
    debug_assert_eq!(window_residuals.len(), t2 - t1 + 1);
    let frontier = (t1..=t2)
        .rev()
        .find(|&t| window_residuals[t - t1] > thresholds[t]);
    match frontier {
        Some(new_t2) => {
            let frozen = ((new_t2 + 1)..=t2).collect();
            let new_t1 = new_t2.saturating_sub(w);
            (Some((new_t1, new_t2)), frozen)
        }
        None => (None, (t1..=t2).collect()),
    }
}

/// Warm start from an existing trajectory: copies the variables and the
/// noise bank, and freezes timesteps `>= t_init` so only `x_0..x_{t_init-1}`
/// are updated.
pub fn init_from_trajectory(
    existing: &TrajectoryState,
    t_init: usize,
    coeffs: &CoefficientTable,
) -> Result<TrajectoryState> {
    if existing.steps() != coeffs.steps() || existing.dim() != coeffs.dim() {
        return Err(Error::IncompatibleTrajectory(format!(
            "trajectory is T={} d={}, table is T={} d={}",
            existing.steps(),
            existing.dim(),
            coeffs.steps(),
            coeffs.dim()
        )));
    }
    if t_init == 0 || t_init > coeffs.steps() {
        return Err(Error::IncompatibleTrajectory(format!(
            "t_init must be in 1..={}, got {t_init}",
            coeffs.steps()
        )));
    }
    let mut state =
        TrajectoryState::from_parts(existing.values().to_vec(), existing.noises().to_vec())?;
    for t in t_init..coeffs.steps() {
        state.freeze(t);
    }
    Ok(state)
}

/// Runs the windowed fixed-point/accelerated solve on `init`. Failing to
/// converge within `s_max` passes is reported as a status, not an error.
pub fn solve_parallel(
    cfg: &SolverConfig,
    coeffs: &CoefficientTable,
    model: &(impl ScoreModel + ?Sized),
    init: TrajectoryState,
) -> Result<(TrajectoryState, SolveReport)> {
    cfg.validate(coeffs)?;
    let steps = coeffs.steps();
    let dim = coeffs.dim();
    if model.steps() != steps || model.dim() != dim {
        return Err(Error::SolverConfig(format!(
            "model is T={} d={}, table is T={} d={}",
            model.steps(),
            model.dim(),
            coeffs.steps(),
            coeffs.dim()
        )));
    }
    if init.steps() != steps || init.dim() != dim {
        return Err(Error::IncompatibleTrajectory(format!(
            "initial state is T={} d={}, table is T={} d={}",
            init.steps(),
            init.dim(),
            steps,
            dim
        )));
    }

    let mut state = init;
    state.set_iteration(0);
    let mut report = SolveReport::new(cfg.w);
    if cfg.t_init == 0 {
        report.status = SolveStatus::Converged;
        return Ok((state, report));
    }

    let variant = cfg.effective_variant();
    let aa_cfg = AAConfig {
        lambda: cfg.lambda,
        variant,
        safeguard: cfg.safeguard,
    };

    // Initial window: the top `w` unsolved variables.
    let mut t1 = cfg.t_init.saturating_sub(cfg.w);
    let mut t2 = cfg.t_init - 1;

    // Pre-frozen timesteps above the window top contribute cached scores to
    // the order-k updates; evaluate them once up front.
    let lookahead = (cfg.t_init - 1 + cfg.k).min(steps);
    if lookahead > cfg.t_init {
        let points: Vec<(&[f64], usize)> = ((cfg.t_init + 1)..=lookahead)
            .filter(|&j| state.eps(j).is_none())
            .map(|j| (state.value(j), j))
            .collect();
        let values = eval_batch(model, &points)?;
        let fill: Vec<(usize, Vec<f64>)> = points
            .iter()
            .map(|&(_, j)| j)
            .zip(values)
            .collect();
        for (j, v) in fill {
            state.set_eps(j, v)?;
        }
    }

    let mut history = HistoryBuffer::new(steps, dim, cfg.m);
    let mut prev_x: Option<Vec<Vec<f64>>> = None;
    let mut prev_r: Vec<Option<Vec<f64>>> = vec![None; steps];

    for s in 1..=cfg.s_max {
        let started = Instant::now();

        // One batched evaluation over the window steps; frozen or terminal
        // inputs with a cached value are read from the cache instead.
        let eval_steps: Vec<usize> = ((t1 + 1)..=(t2 + 1))
            .filter(|&j| {
                let fixed = j == steps || state.is_frozen(j);
                !(fixed && state.eps(j).is_some())
            })
            .collect();
        let points: Vec<(&[f64], usize)> =
            eval_steps.iter().map(|&j| (state.value(j), j)).collect();
        let values = eval_batch(model, &points)?;
        for (j, v) in eval_steps.iter().zip(values) {
            state.set_eps(*j, v)?;
        }
        let evals = t2 - t1 + 1;

        let window_res: Vec<f64> = (t1..=t2)
            .map(|t| residual_for(&state, coeffs, t))
            .collect::<Result<_>>()?;
        let sum_residual: f64 = window_res.iter().sum();
        let max_residual = window_res.iter().cloned().fold(0.0, f64::max);

        let (next, newly_frozen) =
            update_window(&window_res, coeffs.thresholds(), t1, t2, cfg.w);
        for &t in &newly_frozen {
            state.freeze(t);
        }
        let Some((next_t1, next_t2)) = next else {
            report.status = SolveStatus::Converged;
            break;
        };

        // Update window: the batch-window bottom up to the new frontier.
        // Timesteps entering below wait one pass for their scores.
        let lo = t1;
        let hi = next_t2;

        // Order-k targets; under the safeguard the frontier row uses the
        // first-order target so its next residual cancels identically.
        let f_vals: Vec<Vec<f64>> = (lo..=hi)
            .into_par_iter()
            .map(|t| {
                let order = if cfg.safeguard && t == hi { 1 } else { cfg.k };
                f_order_k(t + 1, &state, coeffs, order)
            })
            .collect::<Result<_>>()?;
        let r_blocks: Vec<Vec<f64>> = (lo..=hi)
            .map(|t| {
                let x = state.value(t);
                f_vals[t - lo].iter().zip(x).map(|(&f, &x)| f - x).collect()
            })
            .collect();

        // Corrections on top of the fixed-point target: zero for plain
        // fixed-point and on the first pass (no history yet).
        let corrections: Option<Vec<Vec<f64>>> = if variant == Variant::Fp || prev_x.is_none() {
            None
        } else {
            let prev = prev_x.as_ref().unwrap();
            let columns: Vec<HistoryColumn> = (lo..=hi)
                .map(|t| match &prev_r[t] {
                    Some(pr) => HistoryColumn::Real {
                        dx: state
                            .value(t)
                            .iter()
                            .zip(&prev[t])
                            .map(|(&now, &before)| now - before)
                            .collect(),
                        dr: r_blocks[t - lo].iter().zip(pr).map(|(&now, &before)| now - before).collect(),
                    },
                    None => HistoryColumn::Zero,
                })
                .collect();
            history.push(lo, hi, columns)?;
            history.set_residuals(lo, hi, r_blocks.clone())?;

            let mut delta = match variant {
                Variant::Fp => unreachable!(),
                Variant::Aa => aa_apply(&history, &aa_cfg)?,
                Variant::AaPlus => aa_plus_apply(&history, &aa_cfg)?,
                Variant::Taa => taa_apply(&history, &aa_cfg)?,
            };
            if cfg.safeguard {
                safeguard(&mut delta, &state, &history)?;
            }
            Some(
                delta
                    .into_iter()
                    .zip(&r_blocks)
                    .map(|(d, r)| d.iter().zip(r).map(|(&d, &r)| d + r).collect())
                    .collect(),
            )
        };

        // Snapshot the pre-update iterate for the next history pair.
        prev_x = Some(state.values().to_vec());
        for t in 0..steps {
            prev_r[t] = if (lo..=hi).contains(&t) {
                Some(r_blocks[t - lo].clone())
            } else {
                None
            };
        }

        for t in lo..=hi {
            let value = match &corrections {
                None => f_vals[t - lo].clone(),
                Some(c) => f_vals[t - lo]
                    .iter()
                    .zip(&c[t - lo])
                    .map(|(&f, &corr)| f - corr)
                    .collect(),
            };
            state.set_value(t, value)?;
        }
        state.set_iteration(s);

        let record = IterationRecord {
            iteration: s,
            t1,
            t2,
            sum_residual,
            max_residual,
            residuals: Some(window_res),
            evals,
            wallclock_ns: started.elapsed().as_nanos() as u64,
        };
        if let Some(progress) = &cfg.progress {
            progress(&record);
        }
        report.total_evals += record.evals;
        report.records.push(record);
        report.iterations = s;

        if let Some(hook) = &cfg.early_stop {
            match hook(&report, &state) {
                Ok(true) => {
                    report.status = SolveStatus::EarlyStopped;
                    break;
                }
                Ok(false) => {}
                Err(message) => {
                    return Err(Error::EarlyStop {
                        iteration: s,
                        message,
                    })
                }
            }
        }

        t1 = next_t1;
        t2 = next_t2;
    }

    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{build_beta_schedule, build_coefficients};
    use crate::score::GaussianMixtureModel;
    use crate::system::{noise_bank, sequential_solve};

    fn toy_setup(
        steps: usize,
        eta: f64,
        tau: f64,
    ) -> (CoefficientTable, GaussianMixtureModel) {
        let sched = build_beta_schedule(steps, 1e-4, 0.02).unwrap();
        let coeffs = build_coefficients(&sched, eta, tau, 2).unwrap();
        let model = GaussianMixtureModel::new(
            vec![0.5, 0.5],
            vec![vec![1.5, -0.5], vec![-1.0, 1.0]],
            0.5,
            sched,
        )
        .unwrap();
        (coeffs, model)
    }

    fn fp_config(steps: usize, tau: f64) -> SolverConfig {
        let mut cfg = SolverConfig::new(1, 1, tau, steps, 4 * steps, steps);
        cfg.variant = Variant::Fp;
        cfg
    }

    #[test]
    fn fp_order_one_exact_tolerance_takes_t_passes_bitwise() {
        let steps = 12;
        let (coeffs, model) = toy_setup(steps, 1.0, 0.0);
        let xi = noise_bank(steps, 2, 5);
        let oracle = sequential_solve(&coeffs, &model, &xi).unwrap();

        let init = TrajectoryState::random_init(steps, 2, 5);
        let cfg = fp_config(steps, 0.0);
        let (solved, report) = solve_parallel(&cfg, &coeffs, &model, init).unwrap();

        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.iterations, steps);
        for t in 0..steps {
            assert_eq!(solved.value(t), oracle.value(t), "timestep {t}");
            assert!(solved.is_frozen(t));
        }
    }

    #[test]
    fn initial_window_follows_t_init() {
        let steps = 20;
        let (coeffs, model) = toy_setup(steps, 0.0, 1e-3);
        let mut cfg = fp_config(steps, 1e-3);
        cfg.w = 6;
        let init = TrajectoryState::random_init(steps, 2, 9);
        let (_, report) = solve_parallel(&cfg, &coeffs, &model, init).unwrap();
        assert_eq!(report.records[0].t1, steps - 6);
        assert_eq!(report.records[0].t2, steps - 1);
    }

    #[test]
    fn window_update_rules() {
        // All above threshold: window unchanged.
        let (next, frozen) = update_window(&[1.0, 1.0, 1.0], &[0.1, 0.1, 0.1, 0.1], 0, 2, 4);
        assert_eq!(next, Some((0, 2)));
        assert!(frozen.is_empty());

        // All below: sentinel-empty, everything freezes.
        let (next, frozen) = update_window(&[0.01, 0.01], &[0.1, 0.1, 0.1], 1, 2, 2);
        assert_eq!(next, None);
        assert_eq!(frozen, vec![1, 2]);

        // Mixed: the largest violator wins, everything above it freezes.
        let r = [1.0, 0.01, 1.0, 0.01];
        let eps = [0.1, 0.1, 0.1, 0.1];
        let (next, frozen) = update_window(&r, &eps, 0, 3, 4);
        assert_eq!(next, Some((0, 2)));
        assert_eq!(frozen, vec![3]);
    }

    #[test]
    fn frontier_is_monotone_and_accounting_reconciles() {
        let steps = 30;
        let (coeffs, model) = toy_setup(steps, 1.0, 1e-3);
        let mut cfg = SolverConfig::new(4, 1, 1e-3, 10, 4 * steps, steps);
        cfg.variant = Variant::Fp;
        let init = TrajectoryState::random_init(steps, 2, 13);
        let (_, report) = solve_parallel(&cfg, &coeffs, &model, init).unwrap();

        assert_eq!(report.status, SolveStatus::Converged);
        let mut last_t2 = usize::MAX;
        let mut total = 0;
        for (idx, rec) in report.records.iter().enumerate() {
            assert!(rec.t2 <= last_t2);
            last_t2 = rec.t2;
            assert_eq!(rec.evals, rec.t2 - rec.t1 + 1);
            // The slid window [t2 - w, t2] holds w + 1 variables.
            assert!(rec.evals <= cfg.w + 1);
            if idx > 0 {
                assert_eq!(rec.t1, rec.t2.saturating_sub(cfg.w));
            }
            total += rec.evals;
        }
        assert_eq!(total, report.total_evals);
    }

    #[test]
    fn taa_converges_and_matches_oracle() {
        let steps = 40;
        let sched = build_beta_schedule(steps, 1e-4, 0.02).unwrap();
        let coeffs = build_coefficients(&sched, 0.0, 1e-3, 8).unwrap();
        let model = GaussianMixtureModel::new(
            vec![0.3, 0.4, 0.3],
            vec![
                vec![1.0, -1.0, 0.5, 0.0, 2.0, -0.5, 1.5, 0.0],
                vec![-1.0, 1.0, 0.0, 0.5, -2.0, 0.5, 0.0, 1.5],
                vec![0.0, 0.0, -1.5, 1.0, 0.0, 2.0, -1.0, -1.0],
            ],
            0.4,
            sched,
        )
        .unwrap();
        let xi = noise_bank(steps, 8, 21);
        let oracle = sequential_solve(&coeffs, &model, &xi).unwrap();

        let mut cfg = SolverConfig::new(8, 3, 1e-3, steps, 4 * steps, steps);
        cfg.variant = Variant::Taa;
        let init = TrajectoryState::random_init(steps, 8, 21);
        let (solved, report) = solve_parallel(&cfg, &coeffs, &model, init).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);

        let mut fp_cfg = fp_config(steps, 1e-3);
        fp_cfg.k = cfg.w;
        let init = TrajectoryState::random_init(steps, 8, 21);
        let (_, fp_report) = solve_parallel(&fp_cfg, &coeffs, &model, init).unwrap();
        assert_eq!(fp_report.status, SolveStatus::Converged);
        assert!(
            report.iterations < fp_report.iterations,
            "taa {} vs fp {}",
            report.iterations,
            fp_report.iterations
        );

        let num: f64 = crate::linalg::norm(
            &solved
                .value(0)
                .iter()
                .zip(oracle.value(0))
                .map(|(&a, &b)| a - b)
                .collect::<Vec<f64>>(),
        );
        let den = crate::linalg::norm(oracle.value(0));
        assert!(num / den <= 1e-2, "relative distance {}", num / den);
    }

    #[test]
    fn identity_warm_start_certifies_immediately() {
        let steps = 16;
        let (coeffs, model) = toy_setup(steps, 0.0, 1e-3);
        let xi = noise_bank(steps, 2, 33);
        let solved = sequential_solve(&coeffs, &model, &xi).unwrap();

        let t_init = 11;
        let warm = init_from_trajectory(&solved, t_init, &coeffs).unwrap();
        for t in 0..steps {
            assert_eq!(warm.is_frozen(t), t >= t_init);
        }
        let mut cfg = SolverConfig::new(3, 1, 1e-3, steps, 64, t_init);
        cfg.variant = Variant::Fp;
        let (out, report) = solve_parallel(&cfg, &coeffs, &model, warm).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.iterations <= 2, "took {}", report.iterations);
        for t in 0..steps {
            assert_eq!(out.value(t), solved.value(t));
        }
    }

    #[test]
    fn full_warm_start_has_nothing_pre_frozen() {
        let steps = 8;
        let (coeffs, _) = toy_setup(steps, 0.0, 1e-3);
        let existing = TrajectoryState::random_init(steps, 2, 1);
        let warm = init_from_trajectory(&existing, steps, &coeffs).unwrap();
        for t in 0..steps {
            assert!(!warm.is_frozen(t));
        }
        assert!(init_from_trajectory(&existing, 0, &coeffs).is_err());

        let other = TrajectoryState::random_init(steps + 1, 2, 1);
        assert!(matches!(
            init_from_trajectory(&other, 4, &coeffs),
            Err(Error::IncompatibleTrajectory(_))
        ));
    }

    #[test]
    fn early_stop_hook_controls_termination() {
        let steps = 24;
        let (coeffs, model) = toy_setup(steps, 1.0, 1e-3);

        // Always-false predicate: identical to no hook.
        let mut cfg = fp_config(steps, 1e-3);
        cfg.early_stop = Some(Arc::new(|_: &SolveReport, _: &TrajectoryState| Ok(false)));
        let init = TrajectoryState::random_init(steps, 2, 3);
        let (a, ra) = solve_parallel(&cfg, &coeffs, &model, init).unwrap();
        let base = fp_config(steps, 1e-3);
        let init = TrajectoryState::random_init(steps, 2, 3);
        let (b, rb) = solve_parallel(&base, &coeffs, &model, init).unwrap();
        assert_eq!(ra.iterations, rb.iterations);
        for t in 0..steps {
            assert_eq!(a.value(t), b.value(t));
        }

        // Fixed budget: exactly 7 passes.
        let mut cfg = fp_config(steps, 1e-3);
        cfg.early_stop = Some(Arc::new(|report: &SolveReport, _: &TrajectoryState| {
            Ok(report.iterations >= 7)
        }));
        let init = TrajectoryState::random_init(steps, 2, 3);
        let (_, report) = solve_parallel(&cfg, &coeffs, &model, init).unwrap();
        assert_eq!(report.status, SolveStatus::EarlyStopped);
        assert_eq!(report.iterations, 7);
        assert_eq!(report.records.len(), 7);

        // Predicate failure aborts with context.
        let mut cfg = fp_config(steps, 1e-3);
        cfg.early_stop = Some(Arc::new(|_: &SolveReport, _: &TrajectoryState| {
            Err("boom".to_string())
        }));
        let init = TrajectoryState::random_init(steps, 2, 3);
        match solve_parallel(&cfg, &coeffs, &model, init) {
            Err(Error::EarlyStop { iteration, message }) => {
                assert_eq!(iteration, 1);
                assert_eq!(message, "boom");
            }
            other => panic!("expected early-stop error, got {other:?}"),
        }
    }

    #[test]
    fn max_iters_is_a_status_not_an_error() {
        let steps = 16;
        let (coeffs, model) = toy_setup(steps, 1.0, 0.0);
        let mut cfg = fp_config(steps, 0.0);
        cfg.s_max = 3;
        let init = TrajectoryState::random_init(steps, 2, 17);
        let (_, report) = solve_parallel(&cfg, &coeffs, &model, init).unwrap();
        assert_eq!(report.status, SolveStatus::MaxIters);
        assert_eq!(report.iterations, 3);
    }

    #[test]
    fn config_validation_errors() {
        let steps = 8;
        let (coeffs, model) = toy_setup(steps, 0.0, 1e-3);
        let init = || TrajectoryState::random_init(steps, 2, 0);

        let mut cfg = fp_config(steps, 1e-3);
        cfg.k = 0;
        assert!(solve_parallel(&cfg, &coeffs, &model, init()).is_err());

        let mut cfg = fp_config(steps, 1e-3);
        cfg.w = steps + 1;
        assert!(solve_parallel(&cfg, &coeffs, &model, init()).is_err());

        // m < d is required for accelerated variants (d = 2 here).
        let mut cfg = SolverConfig::new(2, 2, 1e-3, steps, 32, steps);
        cfg.variant = Variant::Taa;
        assert!(solve_parallel(&cfg, &coeffs, &model, init()).is_err());

        let mut cfg = fp_config(steps, 1e-3);
        cfg.tau = 5e-3;
        assert!(solve_parallel(&cfg, &coeffs, &model, init()).is_err());
    }

    #[test]
    fn degenerate_t_init_zero_returns_immediately() {
        let steps = 8;
        let (coeffs, model) = toy_setup(steps, 0.0, 1e-3);
        let mut cfg = fp_config(steps, 1e-3);
        cfg.t_init = 0;
        let init = TrajectoryState::random_init(steps, 2, 0);
        let (_, report) = solve_parallel(&cfg, &coeffs, &model, init).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.iterations, 0);
        assert!(report.records.is_empty());
    }
}
