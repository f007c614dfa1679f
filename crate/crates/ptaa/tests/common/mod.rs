//! Shared fixtures for the integration suites: the standard toy models and
//! dense reconstructions of the matrix-free history updates.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptaa::anderson::{AAConfig, HistoryBuffer, HistoryColumn, Variant};
use ptaa::error::Result;
use ptaa::linalg::norm;
use ptaa::schedule::{build_beta_schedule, build_coefficients, BetaSchedule, CoefficientTable};
use ptaa::score::GaussianMixtureModel;

pub const SUITE_DIM: usize = 16;

/// Component means of the standard toy mixture.
pub fn suite_means() -> Vec<Vec<f64>> {
    vec![
        vec![
            1.0, -1.0, 0.5, 0.0, 2.0, -0.5, 1.5, 0.0, -1.5, 0.5, 1.0, -1.0, 0.0, 0.5, -0.5, 2.0,
        ],
        vec![
            -1.0, 1.0, 0.0, 0.5, -2.0, 0.5, 0.0, 1.5, 1.5, -0.5, -1.0, 1.0, 0.5, 0.0, 0.5, -2.0,
        ],
        vec![
            0.0, 0.0, -1.5, 1.0, 0.0, 2.0, -1.0, -1.0, 0.0, 1.0, 0.0, 0.0, -1.0, 1.5, 0.0, 0.0,
        ],
    ]
}

pub fn suite_schedule(steps: usize) -> BetaSchedule {
    build_beta_schedule(steps, 1e-4, 0.02).unwrap()
}

/// Standard K=3, d=16 mixture over the linear beta schedule.
pub fn suite_model(steps: usize) -> GaussianMixtureModel {
    GaussianMixtureModel::new(
        vec![0.3, 0.4, 0.3],
        suite_means(),
        0.4,
        suite_schedule(steps),
    )
    .unwrap()
}

/// Same mixture with every mean coordinate shifted, for warm-start sources.
pub fn perturbed_suite_model(steps: usize, shift: f64) -> GaussianMixtureModel {
    let means = suite_means()
        .into_iter()
        .map(|m| m.into_iter().map(|v| v + shift).collect())
        .collect();
    GaussianMixtureModel::new(vec![0.3, 0.4, 0.3], means, 0.4, suite_schedule(steps)).unwrap()
}

pub fn suite_coeffs(steps: usize, eta: f64, tau: f64) -> CoefficientTable {
    build_coefficients(&suite_schedule(steps), eta, tau, SUITE_DIM).unwrap()
}

pub fn rel_distance(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    norm(&diff) / norm(b)
}

/// Prints the per-criterion verdict line and panics on failure so the test
/// report carries one pass/fail line per acceptance criterion.
pub fn check(name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("[{verdict}] {name}: {detail}");
    assert!(ok, "{name}: {detail}");
}

// ---------------------------------------------------------------------------
// Dense reconstruction helpers
// ---------------------------------------------------------------------------

/// A synthetic history over `blocks` timesteps with full-rank random columns
/// at depth `m`, plus a random stacked residual.
pub struct DenseFixture {
    pub buf: HistoryBuffer,
    pub blocks: usize,
    pub dim: usize,
    pub depth: usize,
    pub residual: Vec<Vec<f64>>,
}

pub fn dense_fixture(blocks: usize, dim: usize, m: usize, seed: u64) -> DenseFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand_vec = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let mut buf = HistoryBuffer::new(blocks, dim, m);
    for _ in 0..m {
        let cols: Vec<HistoryColumn> = (0..blocks)
            .map(|_| HistoryColumn::Real {
                dx: rand_vec(dim),
                dr: rand_vec(dim),
            })
            .collect();
        buf.push(0, blocks - 1, cols).unwrap();
    }
    let residual: Vec<Vec<f64>> = (0..blocks).map(|_| rand_vec(dim)).collect();
    buf.set_residuals(0, blocks - 1, residual.clone()).unwrap();
    DenseFixture {
        buf,
        blocks,
        dim,
        depth: m,
        residual,
    }
}

impl DenseFixture {
    pub fn n(&self) -> usize {
        self.blocks * self.dim
    }

    /// Stacked history matrices (n x m), ordered oldest column first.
    pub fn stacked_history(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n();
        let mut x = DMatrix::zeros(n, self.depth);
        let mut f = DMatrix::zeros(n, self.depth);
        for t in 0..self.blocks {
            for j in 0..self.depth {
                let (dx, dr) = self.buf.column(t, j).expect("real column");
                for i in 0..self.dim {
                    x[(t * self.dim + i, j)] = dx[i];
                    f[(t * self.dim + i, j)] = dr[i];
                }
            }
        }
        (x, f)
    }

    pub fn stacked_residual(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, 1, |row, _| self.residual[row / self.dim][row % self.dim])
    }

    /// Reconstructs the dense operator applied by `apply` by probing it with
    /// stacked basis vectors; valid because the update is linear in the
    /// residual once the history is fixed. Restores the fixture residual.
    pub fn probe_operator(
        &mut self,
        apply: impl Fn(&HistoryBuffer, &AAConfig) -> Result<Vec<Vec<f64>>>,
        cfg: &AAConfig,
    ) -> DMatrix<f64> {
        let n = self.n();
        let mut dense = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut basis = vec![vec![0.0; self.dim]; self.blocks];
            basis[col / self.dim][col % self.dim] = 1.0;
            self.buf.set_residuals(0, self.blocks - 1, basis).unwrap();
            let delta = apply(&self.buf, cfg).expect("probe apply");
            for t in 0..self.blocks {
                for i in 0..self.dim {
                    dense[(t * self.dim + i, col)] = delta[t][i];
                }
            }
        }
        self.buf
            .set_residuals(0, self.blocks - 1, self.residual.clone())
            .unwrap();
        dense
    }

    pub fn apply_matrix_free(
        &self,
        apply: impl Fn(&HistoryBuffer, &AAConfig) -> Result<Vec<Vec<f64>>>,
        cfg: &AAConfig,
    ) -> DMatrix<f64> {
        let delta = apply(&self.buf, cfg).expect("apply");
        let n = self.n();
        DMatrix::from_fn(n, 1, |row, _| delta[row / self.dim][row % self.dim])
    }
}

pub fn zero_lambda(variant: Variant) -> AAConfig {
    AAConfig {
        lambda: 0.0,
        variant,
        safeguard: false,
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}
