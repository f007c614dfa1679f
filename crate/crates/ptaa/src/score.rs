//! Pluggable noise-prediction models with analytic closed forms.
//!
//! Models are pure functions of `(x, t)`: repeated evaluation at identical
//! inputs is bitwise-identical, which the solver relies on for its frozen-state
//! bookkeeping. Batched evaluation fans out across the installed rayon pool
//! and merges positionally, so outputs never depend on the thread count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::schedule::BetaSchedule;

/// Noise-prediction function over a fixed discretization.
pub trait ScoreModel: Send + Sync {
    /// Data dimension d.
    fn dim(&self) -> usize;

    /// Number of discretization steps T of the schedule the model was built
    /// against.
    fn steps(&self) -> usize;

    /// Noise prediction at `(x, t)`, `t = 1..=T`.
    fn eval_eps(&self, x: &[f64], t: usize) -> Result<Vec<f64>>;
}

fn check_point(model: &(impl ScoreModel + ?Sized), x: &[f64], t: usize) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::Shape {
            expected: model.dim(),
            got: x.len(),
        });
    }
    if t < 1 || t > model.steps() {
        return Err(Error::StepIndex {
            index: t,
            min: 1,
            max: model.steps(),
        });
    }
    Ok(())
}

/// Gaussian mixture data model under the variance-preserving forward process.
///
/// The marginal at step t is `sum_k w_k N(sqrt(abar_t) mu_k, v_t I)` with
/// `v_t = abar_t s0^2 + 1 - abar_t`, so the noise prediction has the closed
/// form `sqrt(1 - abar_t) * sum_k gamma_k(x) (x - sqrt(abar_t) mu_k) / v_t`,
/// with component responsibilities `gamma_k` computed in the log domain.
#[derive(Debug, Clone)]
pub struct GaussianMixtureModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    s0_sq: f64,
    dim: usize,
    schedule: BetaSchedule,
}

impl GaussianMixtureModel {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        s0_sq: f64,
        schedule: BetaSchedule,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::Model(format!(
                "need matching nonempty weights/means, got {} weights and {} means",
                weights.len(),
                means.len()
            )));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Model("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!(
                "weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        if s0_sq <= 0.0 {
            return Err(Error::Model(format!(
                "component variance must be positive, got {s0_sq}"
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::Model("means must share a nonzero dimension".into()));
        }
        Ok(Self {
            weights,
            means,
            s0_sq,
            dim,
            schedule,
        })
    }

    /// Posterior component responsibilities at `(x, t)`.
    pub fn responsibilities(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        check_point(self, x, t)?;
        let abar = self.schedule.alpha_bar(t);
        let var = abar * self.s0_sq + (1.0 - abar);
        let sqrt_abar = abar.sqrt();

        let mut logits = Vec::with_capacity(self.weights.len());
        for (w, mu) in self.weights.iter().zip(&self.means) {
            let mut dist_sq = 0.0;
            for i in 0..self.dim {
                let diff = x[i] - sqrt_abar * mu[i];
                dist_sq += diff * diff;
            }
            logits.push(w.ln() - dist_sq / (2.0 * var));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut gamma: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = gamma.iter().sum();
        for g in &mut gamma {
            *g /= total;
        }
        Ok(gamma)
    }
}

impl ScoreModel for GaussianMixtureModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn steps(&self) -> usize {
        self.schedule.steps()
    }

    fn eval_eps(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let gamma = self.responsibilities(x, t)?;
        let abar = self.schedule.alpha_bar(t);
        let var = abar * self.s0_sq + (1.0 - abar);
        let sqrt_abar = abar.sqrt();
        let coef = (1.0 - abar).sqrt() / var;

        let mut out = vec![0.0; self.dim];
        for (g, mu) in gamma.iter().zip(&self.means) {
            for i in 0..self.dim {
                out[i] += g * (x[i] - sqrt_abar * mu[i]);
            }
        }
        for v in &mut out {
            *v *= coef;
        }
        Ok(out)
    }
}

/// Classifier-free guidance combination of two predictions.
pub fn apply_guidance(eps_uncond: &[f64], eps_cond: &[f64], scale: f64) -> Result<Vec<f64>> {
    if eps_uncond.len() != eps_cond.len() {
        return Err(Error::Shape {
            expected: eps_uncond.len(),
            got: eps_cond.len(),
        });
    }
    Ok(eps_uncond
        .iter()
        .zip(eps_cond)
        .map(|(&u, &c)| u + scale * (c - u))
        .collect())
}

/// Guidance as a model combinator, so the solver stays guidance-agnostic.
pub struct GuidedModel {
    uncond: Arc<dyn ScoreModel>,
    cond: Arc<dyn ScoreModel>,
    scale: f64,
}

impl GuidedModel {
    pub fn new(uncond: Arc<dyn ScoreModel>, cond: Arc<dyn ScoreModel>, scale: f64) -> Result<Self> {
        if uncond.dim() != cond.dim() {
            return Err(Error::Shape {
                expected: uncond.dim(),
                got: cond.dim(),
            });
        }
        if uncond.steps() != cond.steps() {
            return Err(Error::Model(format!(
                "guidance pair must share the schedule length, got {} and {}",
                uncond.steps(),
                cond.steps()
            )));
        }
        Ok(Self {
            uncond,
            cond,
            scale,
        })
    }
}

impl ScoreModel for GuidedModel {
    fn dim(&self) -> usize {
        self.uncond.dim()
    }

    fn steps(&self) -> usize {
        self.uncond.steps()
    }

    fn eval_eps(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let u = self.uncond.eval_eps(x, t)?;
        let c = self.cond.eval_eps(x, t)?;
        apply_guidance(&u, &c, self.scale)
    }
}

/// Evaluates the model at every `(x, t)` point, in parallel, merging results
/// positionally. Output is elementwise bitwise-equal to a sequential map; a
/// failure reports the lowest failing point index.
pub fn eval_batch(
    model: &(impl ScoreModel + ?Sized),
    points: &[(&[f64], usize)],
) -> Result<Vec<Vec<f64>>> {
    let results: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .map(|&(x, t)| model.eval_eps(x, t))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for (index, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::BatchEval {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}
