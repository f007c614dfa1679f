//! Run configuration: a sectioned key-value file (TOML) validated against
//! the module preconditions before any compute happens.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::anderson::Variant;
use crate::engine::SolverConfig;
use crate::error::{Error, Result};
use crate::schedule::{build_beta_schedule, build_coefficients, BetaSchedule, CoefficientTable};
use crate::score::{GaussianMixtureModel, GuidedModel, ScoreModel};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: ScheduleSection,
    pub sampler: SamplerSection,
    pub model: ModelSection,
    pub solver: SolverSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub eta: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub s0_sq: f64,
    pub guidance: Option<GuidanceSection>,
}

/// Second mixture plus a scale; the run model becomes
/// `uncond + scale * (cond - uncond)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSection {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub s0_sq: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub k: usize,
    pub m: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Window size; defaults to the schedule length.
    pub window: Option<usize>,
    /// Maximum update passes; defaults to `4 * steps`.
    pub max_iterations: Option<usize>,
    /// Defaults to the schedule length (cold start).
    pub t_init: Option<usize>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_true")]
    pub safeguard: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    #[serde(default = "default_one")]
    pub repetitions: usize,
    pub report_csv: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
    pub compare_csv: Option<PathBuf>,
    pub sweep_csv: Option<PathBuf>,
    pub save_trajectory: Option<PathBuf>,
    pub init_trajectory: Option<PathBuf>,
    #[serde(default)]
    pub require_convergence: bool,
    /// Early-stop budget; 0 or absent disables the hook.
    pub stop_after_iterations: Option<usize>,
    /// Worker threads; absent or 0 uses the default pool. The
    /// `PTAA_THREADS` environment variable overrides this.
    pub threads: Option<usize>,
}

fn default_lambda() -> f64 {
    1e-8
}

fn default_variant() -> Variant {
    Variant::Taa
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.model.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let steps = self.schedule.steps;
        if steps == 0 {
            return Err(Error::Config("schedule.steps: must be >= 1".into()));
        }
        if !(self.schedule.beta_start > 0.0
            && self.schedule.beta_start <= self.schedule.beta_end
            && self.schedule.beta_end < 1.0)
        {
            return Err(Error::Config(
                "schedule.beta_start/beta_end: need 0 < beta_start <= beta_end < 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.sampler.eta) {
            return Err(Error::Config("sampler.eta: must be in [0, 1]".into()));
        }
        if self.sampler.tau < 0.0 {
            return Err(Error::Config("sampler.tau: must be >= 0".into()));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::Config("model.means: must be nonempty vectors".into()));
        }
        if self.model.weights.len() != self.model.means.len() {
            return Err(Error::Config(
                "model.weights: must have one weight per mean".into(),
            ));
        }
        if let Some(g) = &self.model.guidance {
            if g.means.first().map_or(0, Vec::len) != dim {
                return Err(Error::Config(
                    "model.guidance.means: dimension must match model.means".into(),
                ));
            }
        }
        if self.solver.k < 1 || self.solver.k > steps {
            return Err(Error::Config(format!(
                "solver.k: must be in 1..={steps}"
            )));
        }
        if self.solver.m < 1 {
            return Err(Error::Config("solver.m: must be >= 1".into()));
        }
        if self.solver.m > 1 && self.solver.variant != Variant::Fp && self.solver.m >= dim {
            return Err(Error::Config(format!(
                "solver.m: accelerated variants need m < d (= {dim})"
            )));
        }
        let window = self.solver.window.unwrap_or(steps);
        if window < 1 || window > steps {
            return Err(Error::Config(format!(
                "solver.window: must be in 1..={steps}"
            )));
        }
        if let Some(t_init) = self.solver.t_init {
            if t_init > steps {
                return Err(Error::Config(format!(
                    "solver.t_init: must be in 0..={steps}"
                )));
            }
        }
        if self.run.repetitions == 0 {
            return Err(Error::Config("run.repetitions: must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_schedule(&self) -> Result<BetaSchedule> {
        build_beta_schedule(
            self.schedule.steps,
            self.schedule.beta_start,
            self.schedule.beta_end,
        )
    }

    pub fn build_coefficients(&self) -> Result<CoefficientTable> {
        let sched = self.build_schedule()?;
        build_coefficients(&sched, self.sampler.eta, self.sampler.tau, self.dim())
    }

    pub fn build_model(&self) -> Result<Arc<dyn ScoreModel>> {
        let sched = self.build_schedule()?;
        let base = Arc::new(GaussianMixtureModel::new(
            self.model.weights.clone(),
            self.model.means.clone(),
            self.model.s0_sq,
            sched.clone(),
        )?);
        match &self.model.guidance {
            None => Ok(base),
            Some(g) => {
                let cond = Arc::new(GaussianMixtureModel::new(
                    g.weights.clone(),
                    g.means.clone(),
                    g.s0_sq,
                    sched,
                )?);
                Ok(Arc::new(GuidedModel::new(base, cond, g.scale)?))
            }
        }
    }

    /// Solver configuration for one seed; the early-stop budget from the
    /// run section is installed as a hook.
    pub fn build_solver_config(&self, seed: u64) -> SolverConfig {
        let steps = self.schedule.steps;
        let mut cfg = SolverConfig::new(
            self.solver.k,
            self.solver.m,
            self.sampler.tau,
            self.solver.window.unwrap_or(steps),
            self.solver.max_iterations.unwrap_or(4 * steps),
            self.solver.t_init.unwrap_or(steps),
        );
        cfg.lambda = self.solver.lambda;
        cfg.variant = self.solver.variant;
        cfg.safeguard = self.solver.safeguard;
        cfg.seed = seed;
        if let Some(budget) = self.run.stop_after_iterations {
            if budget > 0 {
                cfg.early_stop = Some(Arc::new(move |report, _state| {
                    Ok(report.iterations >= budget)
                }));
            }
        }
        cfg
    }

    /// Seeds for the configured repetitions.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run.repetitions as u64)
            .map(|i| self.run.seed.wrapping_add(i))
            .collect()
    }

    /// Worker thread count: the `PTAA_THREADS` environment variable wins
    /// over `run.threads`; 0 or absent means the default pool.
    pub fn thread_count(&self) -> Option<usize> {
        let env = std::env::var("PTAA_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok());
        env.or(self.run.threads).filter(|&n| n > 0)
    }
}
