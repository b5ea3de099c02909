//! Proximity operators and the proximal gradient solver.
//!
//! The smooth part handed to [`minimize`] includes the `(α/2)‖u‖²` term;
//! the prox only sees ψ. Stationarity is certified with the fixed-point
//! residual `‖u − prox_{ψ/α}(−(1/α)∇F₁(u))‖`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mesh::DiscreteSpace;

/// Regularizer ψ: zero, or the indicator of a ball / box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizerSpec {
    Zero,
    Ball { radius: f64 },
    Box { lo: f64, hi: f64 },
}

const FEASIBILITY_TOL: f64 = 1e-12;

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Zero => Ok(()),
            Self::Ball { radius } if radius > 0.0 && radius.is_finite() => Ok(()),
            Self::Ball { radius } => Err(Error::InvalidConfig(format!("ball radius {radius} must be positive"))),
            Self::Box { lo, hi } if lo <= hi => Ok(()),
            Self::Box { lo, hi } => Err(Error::InvalidConfig(format!("box bounds [{lo}, {hi}] are empty"))),
        }
    }

    pub fn is_indicator(&self) -> bool {
        !matches!(self, Self::Zero)
    }

    /// `ψ(u) < ∞`, up to a relative tolerance of 1e-12 for the ball.
    pub fn is_feasible(&self, u: &[f64], space: &DiscreteSpace) -> bool {
        match *self {
            Self::Zero => true,
            Self::Ball { radius } => space.norm(u) <= radius * (1.0 + FEASIBILITY_TOL),
            Self::Box { lo, hi } => u.iter().all(|&v| lo <= v && v <= hi),
        }
    }

    /// ψ(u): zero on the feasible set and `+∞` outside.
    pub fn value(&self, u: &[f64], space: &DiscreteSpace) -> f64 {
        if self.is_feasible(u, space) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Radius of the smallest ball about zero containing the feasible set, if bounded.
    pub fn feasible_radius(&self, space: &DiscreteSpace) -> Option<f64> {
        match *self {
            Self::Zero => None,
            Self::Ball { radius } => Some(radius),
            Self::Box { lo, hi } => {
                let c = lo.abs().max(hi.abs());
                // mass entries are nonnegative, so the constant c·1 is extremal
                Some(c * space.norm(&vec![1.0; space.dim()]))
            }
        }
    }
}

/// `prox_ψ` with respect to the norm of `space`.
#[derive(Debug, Clone)]
pub struct ProxOperator {
    spec: RegularizerSpec,
    space: Arc<DiscreteSpace>,
}

impl ProxOperator {
    pub fn new(spec: RegularizerSpec, space: Arc<DiscreteSpace>) -> Self {
        Self { spec, space }
    }

    pub fn spec(&self) -> RegularizerSpec {
        self.spec
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    /// `prox_{ψ/scale}(v)`; for the supported ψ the scale drops out.
    pub fn apply(&self, scale: f64, v: &[f64]) -> Vec<f64> {
        debug_assert!(scale > 0.0);
        match self.spec {
            RegularizerSpec::Zero => v.to_vec(),
            RegularizerSpec::Ball { radius } => {
                let norm = self.space.norm(v);
                if norm <= radius * (1.0 + 4.0 * f64::EPSILON) {
                    v.to_vec()
                } else {
                    linalg::scale(v, radius / norm)
                }
            }
            RegularizerSpec::Box { lo, hi } => project_box(self.space.gram(), v, lo, hi),
        }
    }
}

/// Projection onto `{lo ≤ w ≤ hi}` in the norm `‖·‖_G`, by projected Gauss–Seidel.
fn project_box(g: &linalg::SparseMatrix, v: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut w: Vec<f64> = v.iter().map(|x| x.clamp(lo, hi)).collect();
    let diag: Vec<f64> = (0..v.len()).map(|i| g.get(i, i)).collect();
    for _ in 0..10_000 {
        let mut change = 0.0f64;
        for i in 0..v.len() {
            let off: f64 = g
                .row(i)
                .filter(|&(j, _)| j != i)
                .map(|(j, m)| m * (w[j] - v[j]))
                .sum();
            let next = (v[i] - off / diag[i]).clamp(lo, hi);
            change = change.max((next - w[i]).abs());
            w[i] = next;
        }
        if change <= 1e-15 * (1.0 + linalg::max_abs(&w)) {
            break;
        }
    }
    w
}

/// `‖u − prox_{ψ/α}(−(1/α) grad_f1)‖`, with `grad_f1` the gradient of the
/// smooth part excluding the α-term.
pub fn fixpoint_residual(prox: &ProxOperator, alpha: f64, grad_f1: &[f64], u: &[f64]) -> f64 {
    let target = linalg::scale(grad_f1, -1.0 / alpha);
    let p = prox.apply(alpha, &target);
    prox.space.norm(&linalg::sub(u, &p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub step0: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub fixpoint_tol: f64,
    pub max_iter: usize,
    /// Number of starting points used by multi-start drivers.
    pub starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step0: 1.0,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            fixpoint_tol: 1e-8,
            max_iter: 10_000,
            starts: 3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step0 > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.sufficient_decrease > 0.0
            && self.fixpoint_tol > 0.0
            && self.max_iter > 0
            && self.starts > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("optimizer settings must be positive, backtrack in (0,1)".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub value: f64,
    pub residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub u_star: Vec<f64>,
    /// Composite objective (smooth part + ψ) at `u_star`.
    pub value: f64,
    pub fixpoint_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// Smooth part of the objective: value and Riesz gradient, α-term included.
pub trait SmoothObjective {
    fn value_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> SmoothObjective for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn value_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(u)
    }
}

const MIN_STEP: f64 = 9.313225746154785e-10; // 2^-30

/// Relative size, in units of machine epsilon, below which two objective
/// values are treated as equal by the line search.
pub const ROUNDOFF_FACTOR: f64 = 64.0;

/// Proximal gradient with Barzilai–Borwein trial steps and Armijo backtracking.
pub fn minimize(
    objective: &impl SmoothObjective,
    prox: &ProxOperator,
    alpha: f64,
    cfg: &OptimizerConfig,
    u0: &[f64],
) -> Result<OptimizeResult> {
    let space = prox.space.clone();
    let residual_of = |u: &[f64], g: &[f64]| {
        let g1: Vec<f64> = g.iter().zip(u).map(|(gi, ui)| gi - alpha * ui).collect();
        fixpoint_residual(prox, alpha, &g1, u)
    };

    let mut u = prox.apply(alpha, u0);
    let (mut f, mut g) = objective.value_grad(&u)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue);
    }
    let mut residual = residual_of(&u, &g);
    let mut trace = vec![TraceRow {
        iteration: 0,
        value: f,
        residual,
        step: 0.0,
    }];
    let mut step = cfg.step0;
    let mut iterations = 0;

    while residual > cfg.fixpoint_tol && iterations < cfg.max_iter {
        iterations += 1;
        let mut s = step;
        let (u_next, f_next, g_next) = loop {
            let trial_point = prox.apply(1.0 / s, &linalg::sub(&u, &linalg::scale(&g, s)));
            let du = linalg::sub(&trial_point, &u);
            let dist2 = space.inner(&du, &du);
            let required = cfg.sufficient_decrease / s * dist2;
            match objective.value_grad(&trial_point) {
                Ok((ft, gt)) if ft.is_finite() && gt.iter().all(|v| v.is_finite()) => {
                    if ft <= f - required {
                        break (trial_point, ft, gt);
                    }
                    // value differences drowned in roundoff: fall back to the
                    // trapezoidal estimate ½⟨g + g⁺, u⁺ − u⟩ of the change
                    let noise = ROUNDOFF_FACTOR * f64::EPSILON * (f.abs() + ft.abs());
                    if (ft - f).abs() <= noise {
                        let mean_slope = 0.5 * (space.inner(&g, &du) + space.inner(&gt, &du));
                        if mean_slope <= -required {
                            break (trial_point, ft, gt);
                        }
                    }
                }
                Ok(_) => {}
                // a failed solve at a trial point is treated like an infinite value
                Err(e) if e.is_solver_failure() => {}
                Err(e) => return Err(e),
            }
            s *= cfg.backtrack;
            if s < MIN_STEP {
                return Err(Error::LineSearchStall { iteration: iterations, step: s });
            }
        };

        // Barzilai–Borwein estimate for the next trial step
        let du = linalg::sub(&u_next, &u);
        let dg = linalg::sub(&g_next, &g);
        let (num, den) = (space.inner(&du, &du), space.inner(&du, &dg));
        step = if den > 0.0 && num > 0.0 {
            (num / den).clamp(1e-8, 1e8)
        } else {
            (2.0 * s).min(1e8)
        };

        u = u_next;
        f = f_next;
        g = g_next;
        residual = residual_of(&u, &g);
        trace.push(TraceRow {
            iteration: iterations,
            value: f,
            residual,
            step: s,
        });
    }

    Ok(OptimizeResult {
        value: f + prox.spec.value(&u, &space),
        u_star: u,
        fixpoint_residual: residual,
        iterations,
        converged: residual <= cfg.fixpoint_tol,
        trace,
    })
}

/// Runs [`minimize`] from each start and keeps the lowest converged value.
pub fn minimize_multistart(
    objective: &impl SmoothObjective,
    prox: &ProxOperator,
    alpha: f64,
    cfg: &OptimizerConfig,
    starts: &[Vec<f64>],
) -> Result<OptimizeResult> {
    let mut best: Option<OptimizeResult> = None;
    let mut last_err = None;
    for u0 in starts {
        match minimize(objective, prox, alpha, cfg, u0) {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => (r.converged && !b.converged) || (r.converged == b.converged && r.value < b.value),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::InvalidConfig("multi-start needs at least one start".into())),
    }
}
