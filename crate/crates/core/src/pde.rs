//! Damped Newton state solves and linear adjoint solves for semilinear
//! equations of the form
//!
//! ```text
//! A(ξ) y + N(y) + C(y) = f(u, ξ)
//! ```
//!
//! where `A(ξ)` is SPD, `N(y) = Λ y³` is the monotone cubic with lumped
//! weights `Λ`, and `C(y)` is the optional 1D convective term `⟨y y′, v⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Factorization, SparseMatrix};
use crate::mesh::DiscreteSpace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    /// Tolerance on the dual norm of the residual.
    pub residual_tol: f64,
    pub max_iter: usize,
    pub backtrack: f64,
    pub min_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            max_iter: 50,
            backtrack: 0.5,
            min_step: 2f64.powi(-20),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig("newton: residual_tol > 0 and max_iter >= 1 required".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.min_step > 0.0) {
            return Err(Error::InvalidConfig("newton: backtrack in (0,1) and min_step > 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

/// Exact-quadrature P1 convection `∫ y y′ φᵢ` on a 1D space with
/// homogeneous Dirichlet values at the non-DOF nodes.
#[derive(Debug, Clone)]
pub struct Convection1D {
    n_nodes: usize,
    dofs: Vec<usize>,
}

impl Convection1D {
    pub fn new(space: &DiscreteSpace) -> Self {
        Self {
            n_nodes: space.geometry().n_nodes(),
            dofs: space.dofs().to_vec(),
        }
    }

    fn nodal(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        for (&k, &v) in self.dofs.iter().zip(y) {
            out[k] = v;
        }
        out
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let yn = self.nodal(y);
        let mut out = vec![0.0; self.n_nodes];
        for e in 0..self.n_nodes - 1 {
            let (l, r) = (yn[e], yn[e + 1]);
            out[e] += (r - l) * (2.0 * l + r) / 6.0;
            out[e + 1] += (r - l) * (l + 2.0 * r) / 6.0;
        }
        self.dofs.iter().map(|&k| out[k]).collect()
    }

    /// Node-level Jacobian triplets, mapped to DOFs.
    fn jacobian_triplets(&self, y: &[f64]) -> Vec<(usize, usize, f64)> {
        let yn = self.nodal(y);
        let mut node_to_dof = vec![None; self.n_nodes];
        for (d, &k) in self.dofs.iter().enumerate() {
            node_to_dof[k] = Some(d);
        }
        let mut out = Vec::with_capacity(4 * self.n_nodes);
        for e in 0..self.n_nodes - 1 {
            let (l, r) = (yn[e], yn[e + 1]);
            let local = [
                (e, e, (-4.0 * l + r) / 6.0),
                (e, e + 1, (l + 2.0 * r) / 6.0),
                (e + 1, e, (-2.0 * l - r) / 6.0),
                (e + 1, e + 1, (-l + 4.0 * r) / 6.0),
            ];
            for (i, j, v) in local {
                if let (Some(a), Some(b)) = (node_to_dof[i], node_to_dof[j]) {
                    out.push((a, b, v));
                }
            }
        }
        out
    }
}

/// The operator `y ↦ A y + Λ y³ + C(y)` for one fixed sample.
#[derive(Debug, Clone)]
pub struct SemilinearSystem {
    pub linear: SparseMatrix,
    pub cubic_weights: Option<Vec<f64>>,
    pub convection: Option<Convection1D>,
}

impl SemilinearSystem {
    pub fn linear(linear: SparseMatrix) -> Self {
        Self {
            linear,
            cubic_weights: None,
            convection: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.convection.is_none()
    }

    /// `A y + Λ y³ + C(y)`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.linear.matvec(y);
        if let Some(w) = &self.cubic_weights {
            for ((o, &wi), &yi) in out.iter_mut().zip(w).zip(y) {
                *o += wi * yi * yi * yi;
            }
        }
        if let Some(c) = &self.convection {
            linalg::axpy(1.0, &c.apply(y), &mut out);
        }
        out
    }

    pub fn residual(&self, y: &[f64], rhs: &[f64]) -> Vec<f64> {
        linalg::sub(&self.apply(y), rhs)
    }

    /// Derivative of [`Self::apply`] at `y`.
    pub fn jacobian(&self, y: &[f64]) -> SparseMatrix {
        let n = self.dim();
        let mut extra = Vec::new();
        if let Some(w) = &self.cubic_weights {
            extra.extend((0..n).map(|i| (i, i, 3.0 * w[i] * y[i] * y[i])));
        }
        if let Some(c) = &self.convection {
            extra.extend(c.jacobian_triplets(y));
        }
        if extra.is_empty() {
            return self.linear.clone();
        }
        SparseMatrix::from_triplets(n, n, self.linear.triplets().chain(extra))
    }

    fn factor(&self, j: &SparseMatrix) -> Result<Factorization> {
        let f = if self.is_symmetric() {
            Factorization::cholesky(j)
        } else {
            Factorization::lu(j)
        };
        f.map_err(|_| Error::SingularJacobian)
    }
}

/// Solves `E(y) = A y + N(y) + C(y) − rhs = 0` by damped Newton from `y0`
/// (zero when absent). Residuals are measured in the dual norm of `space`.
pub fn solve_state(
    system: &SemilinearSystem,
    rhs: &[f64],
    space: &DiscreteSpace,
    cfg: &NewtonConfig,
    y0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = system.dim();
    assert_eq!(rhs.len(), n);
    let mut y = y0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = system.residual(&y, rhs);
    let mut norm = space.dual_norm(&r);
    let polish_floor = 64.0 * f64::EPSILON * (1.0 + space.dual_norm(rhs));
    let mut iterations = 0;
    let mut polished = false;

    loop {
        if norm <= cfg.residual_tol && (polished || norm <= polish_floor) {
            break;
        }
        if norm <= cfg.residual_tol {
            polished = true;
        }
        if iterations >= cfg.max_iter {
            let report = SolveReport {
                iterations,
                final_residual: norm,
                converged: norm <= cfg.residual_tol,
            };
            if report.converged {
                return Ok((y, report));
            }
            return Err(Error::NewtonDivergence { report });
        }
        let j = system.jacobian(&y);
        let fac = system.factor(&j)?;
        let delta = fac.solve(&r);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = y.iter().zip(&delta).map(|(a, d)| a - t * d).collect();
            let r_trial = system.residual(&trial, rhs);
            let n_trial = space.dual_norm(&r_trial);
            if n_trial.is_finite() && (n_trial <= (1.0 - 1e-4 * t) * norm || (polished && n_trial <= norm)) {
                y = trial;
                r = r_trial;
                norm = n_trial;
                break;
            }
            if polished {
                // the residual is already within tolerance; keep the iterate
                return Ok((
                    y,
                    SolveReport {
                        iterations,
                        final_residual: norm,
                        converged: true,
                    },
                ));
            }
            t *= cfg.backtrack;
            if t < cfg.min_step {
                return Err(Error::NewtonDivergence {
                    report: SolveReport {
                        iterations,
                        final_residual: norm,
                        converged: false,
                    },
                });
            }
        }
        iterations += 1;
    }
    Ok((
        y,
        SolveReport {
            iterations,
            final_residual: norm,
            converged: true,
        },
    ))
}

/// Solves the adjoint equation `E_y(y)ᵀ z = rhs_dual`.
pub fn solve_adjoint(system: &SemilinearSystem, y: &[f64], rhs_dual: &[f64]) -> Result<Vec<f64>> {
    if rhs_dual.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; rhs_dual.len()]);
    }
    let j = system.jacobian(y);
    let jt = if system.is_symmetric() { j } else { j.transpose() };
    let fac = system.factor(&jt)?;
    Ok(fac.solve(rhs_dual))
}
