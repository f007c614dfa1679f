//! History buffers and the accelerated update rules.
//!
//! Three matrix-free updates are provided on top of plain fixed-point
//! stepping: standard multisecant acceleration over the stacked window
//! (`aa_apply`), its block-upper-triangular restriction that solves one
//! suffix least-squares problem per timestep (`taa_apply`), and the heuristic
//! that keeps the global Gram inverse but suffix-restricts the right-hand
//! contraction (`aa_plus_apply`). The stacked window operators are never
//! materialized; every update costs O(window * d * m^2).
//!
//! All three return per-timestep vectors `delta_t` with the meaning
//! `x_next = x - delta`; with no history every rule degenerates to
//! `delta_t = -R_t`, the pure fixed-point step.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_spd};
use crate::system::TrajectoryState;

/// Update rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Fp,
    Aa,
    AaPlus,
    Taa,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Variant::Fp => "fp",
            Variant::Aa => "aa",
            Variant::AaPlus => "aa-plus",
            Variant::Taa => "taa",
        };
        f.write_str(name)
    }
}

/// Acceleration parameters.
#[derive(Debug, Clone, Copy)]
pub struct AAConfig {
    /// Regularization added to the small Gram systems, scaled internally by
    /// the mean diagonal of the full-window Gram so it is invariant to the
    /// residual magnitude.
    pub lambda: f64,
    pub variant: Variant,
    pub safeguard: bool,
}

#[derive(Debug, Clone)]
struct Column {
    dx: Vec<f64>,
    dr: Vec<f64>,
}

/// One per-timestep history contribution for a push.
#[derive(Debug, Clone)]
pub enum HistoryColumn {
    /// Differences of consecutive iterates and residuals.
    Real { dx: Vec<f64>, dr: Vec<f64> },
    /// Placeholder for a timestep that just entered the window.
    Zero,
}

/// Ring buffers of iterate/residual difference columns, per timestep, over
/// the active window, plus the current residual blocks.
///
/// All timesteps logically hold `m_i = min(m, pushes)` columns, oldest first;
/// timesteps that entered the window later are padded with zero columns on
/// the old side. History for timesteps that leave the window is discarded.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dim: usize,
    capacity: usize,
    pushes: usize,
    window: Option<(usize, usize)>,
    cols: Vec<VecDeque<Column>>,
    residuals: Vec<Option<Vec<f64>>>,
}

impl HistoryBuffer {
    pub fn new(steps: usize, dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            capacity,
            pushes: 0,
            window: None,
            cols: vec![VecDeque::new(); steps],
            residuals: vec![None; steps],
        }
    }

    /// Current depth `m_i = min(m, i)`.
    pub fn depth(&self) -> usize {
        self.capacity.min(self.pushes)
    }

    pub fn pushes(&self) -> usize {
        self.pushes
    }

    pub fn window(&self) -> Option<(usize, usize)> {
        self.window
    }

    /// Column `j` (oldest first, over the logical depth) for timestep `t`;
    /// `None` encodes a zero column.
    pub fn column(&self, t: usize, j: usize) -> Option<(&[f64], &[f64])> {
        let dq = &self.cols[t];
        let pad = self.depth() - dq.len();
        if j < pad {
            None
        } else {
            let col = &dq[j - pad];
            Some((col.dx.as_slice(), col.dr.as_slice()))
        }
    }

    /// Appends one column per window timestep, evicting the oldest when the
    /// buffer is full. Timesteps leaving the window lose their history;
    /// entering timesteps are zero-initialized.
    pub fn push(&mut self, t1: usize, t2: usize, columns: Vec<HistoryColumn>) -> Result<()> {
        if t2 >= self.cols.len() || t1 > t2 {
            return Err(Error::History(format!(
                "window [{t1}, {t2}] out of bounds for {} timesteps",
                self.cols.len()
            )));
        }
        if columns.len() != t2 - t1 + 1 {
            return Err(Error::History(format!(
                "expected {} columns, got {}",
                t2 - t1 + 1,
                columns.len()
            )));
        }
        for col in &columns {
            if let HistoryColumn::Real { dx, dr } = col {
                if dx.len() != self.dim || dr.len() != self.dim {
                    return Err(Error::Shape {
                        expected: self.dim,
                        got: dx.len().max(dr.len()),
                    });
                }
            }
        }

        for t in 0..self.cols.len() {
            if !(t1..=t2).contains(&t) {
                self.cols[t].clear();
                self.residuals[t] = None;
            }
        }
        let zero = || Column {
            dx: vec![0.0; self.dim],
            dr: vec![0.0; self.dim],
        };
        for (t, col) in (t1..=t2).zip(columns) {
            let dq = &mut self.cols[t];
            let column = match col {
                HistoryColumn::Real { dx, dr } => Column { dx, dr },
                HistoryColumn::Zero => zero(),
            };
            dq.push_back(column);
            while dq.len() > self.capacity {
                dq.pop_front();
            }
        }
        self.pushes += 1;
        self.window = Some((t1, t2));
        Ok(())
    }

    /// Stores the current residual blocks `R_{t1..t2}`.
    pub fn set_residuals(&mut self, t1: usize, t2: usize, r: Vec<Vec<f64>>) -> Result<()> {
        if r.len() != t2 - t1 + 1 {
            return Err(Error::History(format!(
                "expected {} residual blocks, got {}",
                t2 - t1 + 1,
                r.len()
            )));
        }
        for block in &r {
            if block.len() != self.dim {
                return Err(Error::Shape {
                    expected: self.dim,
                    got: block.len(),
                });
            }
        }
        for slot in &mut self.residuals {
            *slot = None;
        }
        for (t, block) in (t1..=t2).zip(r) {
            self.residuals[t] = Some(block);
        }
        Ok(())
    }

    pub fn residual(&self, t: usize) -> Option<&[f64]> {
        self.residuals[t].as_deref()
    }

    fn require_window(&self) -> Result<(usize, usize)> {
        self.window
            .ok_or_else(|| Error::History("no window pushed yet".into()))
    }

    fn require_residual(&self, t: usize) -> Result<&[f64]> {
        self.residuals[t]
            .as_deref()
            .ok_or_else(|| Error::History(format!("missing residual block for timestep {t}")))
    }

    /// Rank-d contribution of timestep `t` to a Gram matrix and, when `rhs`
    /// is set, to the right-hand contraction with the residual block.
    fn accumulate(&self, t: usize, gram: &mut [f64], rhs: Option<&mut [f64]>) -> Result<()> {
        let m = self.depth();
        for p in 0..m {
            let Some((_, dr_p)) = self.column(t, p) else {
                continue;
            };
            for q in p..m {
                if let Some((_, dr_q)) = self.column(t, q) {
                    let v = dot(dr_p, dr_q);
                    gram[p * m + q] += v;
                    if p != q {
                        gram[q * m + p] += v;
                    }
                }
            }
        }
        if let Some(rhs) = rhs {
            let r = self.require_residual(t)?;
            for p in 0..m {
                if let Some((_, dr_p)) = self.column(t, p) {
                    rhs[p] += dot(dr_p, r);
                }
            }
        }
        Ok(())
    }

    /// Mean diagonal of the full-window Gram, used to scale lambda; falls
    /// back to 1 when the history is entirely zero.
    fn lambda_scale(&self, t1: usize, t2: usize) -> Result<f64> {
        let m = self.depth();
        let mut diag = vec![0.0; m];
        for t in t1..=t2 {
            for p in 0..m {
                if let Some((_, dr_p)) = self.column(t, p) {
                    diag[p] += dot(dr_p, dr_p);
                }
            }
        }
        let mean = diag.iter().sum::<f64>() / m as f64;
        Ok(if mean > 0.0 { mean } else { 1.0 })
    }

    fn pure_fp_delta(&self, t1: usize, t2: usize) -> Result<Vec<Vec<f64>>> {
        (t1..=t2)
            .map(|t| {
                let r = self.require_residual(t)?;
                Ok(r.iter().map(|&v| -v).collect())
            })
            .collect()
    }
}

fn solve_regularized(
    gram: &[f64],
    rhs: &[f64],
    m: usize,
    lambda_eff: f64,
    iteration: usize,
) -> Result<Vec<f64>> {
    let mut sys = gram.to_vec();
    for p in 0..m {
        sys[p * m + p] += lambda_eff;
    }
    solve_spd(&sys, rhs, m).ok_or(Error::RankDeficient { iteration })
}

fn combine(buf: &HistoryBuffer, t: usize, gamma: &[f64]) -> Result<Vec<f64>> {
    let r = buf.require_residual(t)?;
    let mut delta: Vec<f64> = r.iter().map(|&v| -v).collect();
    for (p, &g) in gamma.iter().enumerate() {
        if let Some((dx_p, dr_p)) = buf.column(t, p) {
            for i in 0..delta.len() {
                delta[i] += g * (dx_p[i] + dr_p[i]);
            }
        }
    }
    Ok(delta)
}

/// Standard stacked-window update: one least-squares coefficient vector for
/// the whole window, `delta_t = -R_t + (X_t + F_t) gamma`.
pub fn aa_apply(buf: &HistoryBuffer, cfg: &AAConfig) -> Result<Vec<Vec<f64>>> {
    let (t1, t2) = buf.require_window()?;
    let m = buf.depth();
    if m == 0 {
        return buf.pure_fp_delta(t1, t2);
    }
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for t in t1..=t2 {
        buf.accumulate(t, &mut gram, Some(&mut rhs))?;
    }
    let lambda_eff = cfg.lambda * buf.lambda_scale(t1, t2)?;
    let gamma = solve_regularized(&gram, &rhs, m, lambda_eff, buf.pushes())?;
    (t1..=t2).map(|t| combine(buf, t, &gamma)).collect()
}

/// Block-upper-triangular update: each timestep solves the least-squares
/// problem restricted to its suffix `[t, t2]`, so the update of `x_t` never
/// reads information from timesteps below `t`. Suffix Grams are accumulated
/// in one reverse sweep.
pub fn taa_apply(buf: &HistoryBuffer, cfg: &AAConfig) -> Result<Vec<Vec<f64>>> {
    let (t1, t2) = buf.require_window()?;
    let m = buf.depth();
    if m == 0 {
        return buf.pure_fp_delta(t1, t2);
    }
    let lambda_eff = cfg.lambda * buf.lambda_scale(t1, t2)?;

    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    let mut deltas = vec![Vec::new(); t2 - t1 + 1];
    for t in (t1..=t2).rev() {
        buf.accumulate(t, &mut gram, Some(&mut rhs))?;
        let gamma = solve_regularized(&gram, &rhs, m, lambda_eff, buf.pushes())?;
        deltas[t - t1] = combine(buf, t, &gamma)?;
    }
    Ok(deltas)
}

/// Upper-extraction heuristic on the standard update: the Gram inverse stays
/// global, only the right-hand contraction is suffix-restricted.
pub fn aa_plus_apply(buf: &HistoryBuffer, cfg: &AAConfig) -> Result<Vec<Vec<f64>>> {
    let (t1, t2) = buf.require_window()?;
    let m = buf.depth();
    if m == 0 {
        return buf.pure_fp_delta(t1, t2);
    }
    let mut gram = vec![0.0; m * m];
    for t in t1..=t2 {
        buf.accumulate(t, &mut gram, None)?;
    }
    let lambda_eff = cfg.lambda * buf.lambda_scale(t1, t2)?;

    let mut rhs = vec![0.0; m];
    let mut deltas = vec![Vec::new(); t2 - t1 + 1];
    for t in (t1..=t2).rev() {
        let r = buf.require_residual(t)?;
        for p in 0..m {
            if let Some((_, dr_p)) = buf.column(t, p) {
                rhs[p] += dot(dr_p, r);
            }
        }
        let gamma = solve_regularized(&gram, &rhs, m, lambda_eff, buf.pushes())?;
        deltas[t - t1] = combine(buf, t, &gamma)?;
    }
    Ok(deltas)
}

/// Worst-case guard: overwrites the frontier timestep's update (the window
/// top, whose successors are all frozen with zero residuals) with the pure
/// fixed-point step `delta = -R`. All other blocks pass through. Applied to
/// every variant; for plain fixed-point it is a no-op.
pub fn safeguard(
    update: &mut [Vec<f64>],
    state: &TrajectoryState,
    buf: &HistoryBuffer,
) -> Result<()> {
    let (t1, t2) = buf.require_window()?;
    debug_assert!(((t2 + 1)..state.steps()).all(|t| state.is_frozen(t)));
    let _ = state;
    let r = buf.require_residual(t2)?;
    update[t2 - t1] = r.iter().map(|&v| -v).collect();
    Ok(())
}
