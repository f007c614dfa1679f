//! The triangular nonlinear system behind first-order autoregressive
//! sampling: trajectory state, the order-k update functions, residuals, the
//! exact sequential oracle, and plain fixed-point stepping.
//!
//! Index conventions: variables are `x_0..x_{T-1}` with the fixed terminal
//! `x_T = xi_T`. Equation `t` (1-based) produces `x_{t-1}` from `x_t` upward.
//! The scalar residual `r_t` always uses the first-order equation, matching
//! the universal stopping criterion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::schedule::CoefficientTable;
use crate::score::{eval_batch, ScoreModel};

/// Derives the initialization stream from the noise-bank stream.
const INIT_SEED_SALT: u64 = 0x9e3779b97f4a7c15;

/// Draws the fixed noise realization `xi_0..xi_T` for one run. The bank is
/// generated once per seed and shared verbatim between the sequential oracle
/// and any parallel solver, which is what makes their outputs comparable.
pub fn noise_bank(steps: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..=steps)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// The unknowns, the noise bank, the score cache, and per-timestep frozen
/// flags for one solve.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    steps: usize,
    dim: usize,
    /// `x_0..x_T`; `x_T` is fixed to `xi_T` at construction.
    x: Vec<Vec<f64>>,
    /// `xi_0..xi_T`.
    xi: Vec<Vec<f64>>,
    /// Most recent score evaluation per step, indexed by step `1..=T`
    /// (slot 0 unused).
    eps: Vec<Option<Vec<f64>>>,
    /// Converged flags for the variables `x_0..x_{T-1}`.
    frozen: Vec<bool>,
    iteration: usize,
}

impl TrajectoryState {
    /// Fresh state with the noise bank from `seed` and all variables drawn
    /// standard normal (from a derived stream, so the bank itself is
    /// independent of the initialization).
    pub fn random_init(steps: usize, dim: usize, seed: u64) -> Self {
        let xi = noise_bank(steps, dim, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_SEED_SALT);
        let mut x: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        x.push(xi[steps].clone());
        Self::assemble(steps, dim, x, xi)
    }

    /// Builds a state from explicit values; `x` and `xi` must both hold
    /// `T + 1` vectors of equal dimension and agree on the terminal entry.
    pub fn from_parts(x: Vec<Vec<f64>>, xi: Vec<Vec<f64>>) -> Result<Self> {
        if x.len() != xi.len() || x.is_empty() {
            return Err(Error::Shape {
                expected: xi.len(),
                got: x.len(),
            });
        }
        let steps = x.len() - 1;
        if steps == 0 {
            return Err(Error::IncompatibleTrajectory("need at least one step".into()));
        }
        let dim = x[0].len();
        for v in x.iter().chain(xi.iter()) {
            if v.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        if x[steps] != xi[steps] {
            return Err(Error::IncompatibleTrajectory(
                "terminal value must equal the terminal noise".into(),
            ));
        }
        Ok(Self::assemble(steps, dim, x, xi))
    }

    fn assemble(steps: usize, dim: usize, x: Vec<Vec<f64>>, xi: Vec<Vec<f64>>) -> Self {
        Self {
            steps,
            dim,
            x,
            xi,
            eps: vec![None; steps + 1],
            frozen: vec![false; steps],
            iteration: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `x_t`, `t = 0..=T`.
    pub fn value(&self, t: usize) -> &[f64] {
        &self.x[t]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// `xi_t`, `t = 0..=T`.
    pub fn noise(&self, t: usize) -> &[f64] {
        &self.xi[t]
    }

    pub fn noises(&self) -> &[Vec<f64>] {
        &self.xi
    }

    /// Cached score value for step `t = 1..=T`, if present.
    pub fn eps(&self, t: usize) -> Option<&[f64]> {
        self.eps[t].as_deref()
    }

    pub fn set_eps(&mut self, t: usize, value: Vec<f64>) -> Result<()> {
        if t < 1 || t > self.steps {
            return Err(Error::StepIndex {
                index: t,
                min: 1,
                max: self.steps,
            });
        }
        if value.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: value.len(),
            });
        }
        self.eps[t] = Some(value);
        Ok(())
    }

    /// Overwrites variable `x_t`. Rejects the terminal and frozen timesteps,
    /// so a frozen variable stays bitwise-constant.
    pub fn set_value(&mut self, t: usize, value: Vec<f64>) -> Result<()> {
        if t >= self.steps {
            return Err(Error::StepIndex {
                index: t,
                min: 0,
                max: self.steps.saturating_sub(1),
            });
        }
        if self.frozen[t] {
            return Err(Error::IncompatibleTrajectory(format!(
                "timestep {t} is frozen"
            )));
        }
        if value.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: value.len(),
            });
        }
        self.x[t] = value;
        Ok(())
    }

    pub fn is_frozen(&self, t: usize) -> bool {
        self.frozen[t]
    }

    pub fn freeze(&mut self, t: usize) {
        self.frozen[t] = true;
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn set_iteration(&mut self, iteration: usize) {
        self.iteration = iteration;
    }

    /// Evaluates the model over all steps `1..=T` into the cache.
    pub fn populate_eps(&mut self, model: &(impl ScoreModel + ?Sized)) -> Result<()> {
        let points: Vec<(&[f64], usize)> =
            (1..=self.steps).map(|t| (self.x[t].as_slice(), t)).collect();
        let values = eval_batch(model, &points)?;
        for (t, v) in (1..=self.steps).zip(values) {
            self.eps[t] = Some(v);
        }
        Ok(())
    }
}

/// Squared first-order residuals `r_0..r_{T-1}`.
#[derive(Debug, Clone)]
pub struct ResidualVector {
    r: Vec<f64>,
}

impl ResidualVector {
    pub fn values(&self) -> &[f64] {
        &self.r
    }

    pub fn sum(&self) -> f64 {
        self.r.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.r.iter().cloned().fold(0.0, f64::max)
    }
}

/// The exact autoregressive solve: `x_T = xi_T`, then for `t = T..1`,
/// `x_{t-1} = a_t x_t + b_t eps(x_t, t) + c_{t-1} xi_{t-1}`. Exactly `T`
/// score evaluations. This is the golden oracle for every parallel solver.
pub fn sequential_solve(
    coeffs: &CoefficientTable,
    model: &(impl ScoreModel + ?Sized),
    xi: &[Vec<f64>],
) -> Result<TrajectoryState> {
    let steps = coeffs.steps();
    let dim = coeffs.dim();
    if xi.len() != steps + 1 {
        return Err(Error::Shape {
            expected: steps + 1,
            got: xi.len(),
        });
    }
    let mut x = vec![vec![0.0; dim]; steps + 1];
    x[steps] = xi[steps].clone();
    let mut state = TrajectoryState::from_parts(x, xi.to_vec())?;
    for t in (1..=steps).rev() {
        let eps = model.eval_eps(state.value(t), t)?;
        let value = first_order_value(coeffs, t, state.value(t), &eps, &state.noise(t - 1));
        state.x[t - 1] = value;
        state.eps[t] = Some(eps);
    }
    Ok(state)
}

/// One first-order update: `a_t x_t + b_t eps + c_{t-1} xi_{t-1}`, with a
/// fixed evaluation order shared by the oracle, the residuals, and the k = 1
/// update function so their outputs agree bitwise.
fn first_order_value(
    coeffs: &CoefficientTable,
    t: usize,
    x_t: &[f64],
    eps_t: &[f64],
    xi_prev: &[f64],
) -> Vec<f64> {
    let a = coeffs.a(t);
    let b = coeffs.b(t);
    let c = coeffs.c(t - 1);
    (0..x_t.len())
        .map(|i| a * x_t[i] + b * eps_t[i] + c * xi_prev[i])
        .collect()
}

/// Order-k update function for equation `t` (producing the value of
/// `x_{t-1}`), reading score values from the cache:
/// `abar(t, t_k) x_{t_k} + sum_j abar(t, j-1) b_j eps_j
///  + sum_j abar(t, j-1) c_{j-1} xi_{j-1}` over `j = t..=t_k`,
/// `t_k = min(t + k - 1, T)`. Ascending-j accumulation keeps results
/// reproducible across runs.
pub fn f_order_k(
    t: usize,
    state: &TrajectoryState,
    coeffs: &CoefficientTable,
    k: usize,
) -> Result<Vec<f64>> {
    let steps = coeffs.steps();
    if t < 1 || t > steps {
        return Err(Error::StepIndex {
            index: t,
            min: 1,
            max: steps,
        });
    }
    if k < 1 || k > steps {
        return Err(Error::SolverConfig(format!(
            "order k must be in 1..={steps}, got {k}"
        )));
    }
    let t_k = (t + k - 1).min(steps);

    if k == 1 || t == steps {
        let eps = state.eps(t).ok_or(Error::MissingEps { step: t })?;
        return Ok(first_order_value(
            coeffs,
            t,
            state.value(t),
            eps,
            state.noise(t - 1),
        ));
    }

    let dim = state.dim();
    let lead = coeffs.abar(t, t_k)?;
    let x_top = state.value(t_k);
    let mut acc: Vec<f64> = (0..dim).map(|i| lead * x_top[i]).collect();
    for j in t..=t_k {
        let w = coeffs.abar(t, j - 1)? * coeffs.b(j);
        let eps = state.eps(j).ok_or(Error::MissingEps { step: j })?;
        for i in 0..dim {
            acc[i] += w * eps[i];
        }
    }
    for j in t..=t_k {
        let w = coeffs.abar(t, j - 1)? * coeffs.c(j - 1);
        let xi = state.noise(j - 1);
        for i in 0..dim {
            acc[i] += w * xi[i];
        }
    }
    Ok(acc)
}

/// Squared first-order residual of the equation producing `x_t`,
/// `t = 0..T`: `||x_t - a_{t+1} x_{t+1} - b_{t+1} eps_{t+1} - c_t xi_t||^2`.
pub fn residual_for(state: &TrajectoryState, coeffs: &CoefficientTable, t: usize) -> Result<f64> {
    let eq = t + 1;
    let eps = state.eps(eq).ok_or(Error::MissingEps { step: eq })?;
    let target = first_order_value(coeffs, eq, state.value(eq), eps, state.noise(t));
    let x_t = state.value(t);
    let diff: Vec<f64> = (0..state.dim()).map(|i| x_t[i] - target[i]).collect();
    Ok(norm_sq(&diff))
}

/// First-order residuals for every equation. Requires a fully populated
/// score cache.
pub fn residuals(state: &TrajectoryState, coeffs: &CoefficientTable) -> Result<ResidualVector> {
    let r = (0..coeffs.steps())
        .map(|t| residual_for(state, coeffs, t))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ResidualVector { r })
}

/// One Jacobi-style fixed-point pass over the variables `x_{t1}..x_{t2}`:
/// every update reads only the old iterate, frozen timesteps pass through
/// untouched. Per-timestep outputs are computed in parallel and swapped in
/// at a single barrier.
pub fn fixed_point_step(
    state: &TrajectoryState,
    coeffs: &CoefficientTable,
    k: usize,
    t1: usize,
    t2: usize,
) -> Result<TrajectoryState> {
    if t2 >= coeffs.steps() || t1 > t2 {
        return Err(Error::SolverConfig(format!(
            "active range [{t1}, {t2}] out of bounds for T = {}",
            coeffs.steps()
        )));
    }
    let updates: Vec<Option<Result<Vec<f64>>>> = (t1..=t2)
        .into_par_iter()
        .map(|t| {
            if state.is_frozen(t) {
                None
            } else {
                Some(f_order_k(t + 1, state, coeffs, k))
            }
        })
        .collect();

    let mut next = state.clone();
    for (offset, update) in updates.into_iter().enumerate() {
        if let Some(value) = update {
            next.x[t1 + offset] = value?;
        }
    }
    next.iteration = state.iteration + 1;
    Ok(next)
}

/// Largest per-equation deviation `||x_{t-1} - F_k(x)||` over all equations;
/// a near-zero value certifies that the trajectory solves the order-k system.
pub fn verify_equivalence(
    state: &TrajectoryState,
    coeffs: &CoefficientTable,
    k: usize,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 1..=coeffs.steps() {
        let target = f_order_k(t, state, coeffs, k)?;
        let x = state.value(t - 1);
        let dev: f64 = (0..state.dim())
            .map(|i| (x[i] - target[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(dev);
    }
    Ok(worst)
}
