//! SAA objectives, exact references on finite supports, consistency sweeps
//! and the compact-set diagnostics.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::problems::{ProblemInstance, SampleSystem};
use crate::prox::{self, OptimizeResult, OptimizerConfig};
use crate::random::{Sample, SampleOrigin, SampleStream};

/// Value and gradient of a weighted sample objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrad {
    /// Composite value including ψ (`+∞` when `u` is infeasible).
    pub value: f64,
    /// Smooth part `Σ wᵢ Ĵ₁ + (α/2)‖u‖²`.
    pub smooth: f64,
    /// Gradient of the smooth part, α-term included.
    pub gradient: Vec<f64>,
}

/// `Σₖ wₖ Ĵ₁(·, ξₖ)` over distinct samples, summed in a fixed order.
#[derive(Debug, Clone)]
struct WeightedSum<'a> {
    problem: &'a ProblemInstance,
    systems: Vec<SampleSystem>,
    weights: Vec<f64>,
    /// Position of each distinct sample in the originating batch.
    positions: Vec<usize>,
}

impl<'a> WeightedSum<'a> {
    fn new(problem: &'a ProblemInstance, samples: Vec<(Sample, f64, usize)>) -> Result<Self> {
        let built = par::map(&samples, |(xi, _, pos)| {
            problem.sample_system(xi).map_err(|e| Error::at_sample(*pos, e))
        });
        let mut systems = Vec::with_capacity(built.len());
        for s in built {
            systems.push(s?);
        }
        Ok(Self {
            problem,
            systems,
            weights: samples.iter().map(|s| s.1).collect(),
            positions: samples.iter().map(|s| s.2).collect(),
        })
    }

    fn evaluate(&self, u: &[f64], with_gradient: bool) -> Result<Vec<crate::problems::Evaluation>> {
        let evals = par::map_indexed(self.systems.len(), |k| {
            self.problem
                .evaluate(&self.systems[k], u, with_gradient)
                .map_err(|e| Error::at_sample(self.positions[k], e))
        });
        evals.into_iter().collect()
    }

    fn value_and_grad(&self, u: &[f64]) -> Result<ValueGrad> {
        let evals = self.evaluate(u, true)?;
        let p = self.problem;
        let mut j = 0.0;
        let mut grad = vec![0.0; u.len()];
        for (w, ev) in self.weights.iter().zip(&evals) {
            j += w * ev.j1;
            linalg::axpy(*w, &ev.gradient, &mut grad);
        }
        linalg::axpy(p.alpha(), u, &mut grad);
        let smooth = j + p.quadratic(u);
        let value = smooth + p.regularizer().value(u, p.control_space());
        Ok(ValueGrad {
            value,
            smooth,
            gradient: grad,
        })
    }

    fn value(&self, u: &[f64]) -> Result<f64> {
        let evals = self.evaluate(u, false)?;
        let p = self.problem;
        let j: f64 = self.weights.iter().zip(&evals).map(|(w, ev)| w * ev.j1).sum();
        Ok(j + p.quadratic(u) + p.regularizer().value(u, p.control_space()))
    }

    /// `Σ wₖ M(u, ξₖ)` and `Σ wₖ ζ(ξₖ)`.
    fn mean_m_and_zeta(&self, u: &[f64]) -> Result<(Vec<f64>, f64)> {
        let evals = self.evaluate(u, true)?;
        let mut m = vec![0.0; self.problem.state_space().dim()];
        let mut zeta = 0.0;
        for ((w, ev), sys) in self.weights.iter().zip(&evals).zip(&self.systems) {
            linalg::axpy(*w, &ev.m, &mut m);
            zeta += w * self.problem.zeta(&sys.sample);
        }
        Ok((m, zeta))
    }

    fn solve(&self, cfg: &OptimizerConfig, start_seed: u64) -> Result<OptimizeResult> {
        cfg.validate()?;
        let p = self.problem;
        let mut starts = vec![p.u0().to_vec()];
        let mut rng = ChaCha8Rng::seed_from_u64(start_seed);
        let radius = p.r_ad().min(1.0);
        for _ in 1..cfg.starts {
            starts.push(p.random_feasible_control(&mut rng, radius));
        }
        let objective = |u: &[f64]| {
            let vg = self.value_and_grad(u)?;
            Ok((vg.smooth, vg.gradient))
        };
        prox::minimize_multistart(&objective, &p.prox(), p.alpha(), cfg, &starts)
    }
}

/// Groups a batch by atom; stream samples stay distinct.
fn weighted_batch(batch: &[Sample]) -> Vec<(Sample, f64, usize)> {
    let n = batch.len() as f64;
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, xi) in batch.iter().enumerate() {
        match xi.origin {
            SampleOrigin::Atom(k) => counts.entry(k).or_insert((0, i + 1)).0 += 1,
            SampleOrigin::Stream { .. } => out.push((xi.clone(), 1.0 / n, i + 1)),
        }
    }
    for (&k, &(c, pos)) in &counts {
        let xi = batch
            .iter()
            .find(|s| s.origin == SampleOrigin::Atom(k))
            .expect("counted atom is in the batch");
        out.push((xi.clone(), c as f64 / n, pos));
    }
    out
}

/// The SAA problem `F̂_N(u) = (1/N) Σ Ĵ₁(u, ξⁱ) + ψ(u) + (α/2)‖u‖²`.
#[derive(Debug, Clone)]
pub struct SaaProblem<'a> {
    batch: Vec<Sample>,
    sum: WeightedSum<'a>,
}

impl<'a> SaaProblem<'a> {
    pub fn new(problem: &'a ProblemInstance, batch: Vec<Sample>) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("an SAA batch needs at least one sample".into()));
        }
        let sum = WeightedSum::new(problem, weighted_batch(&batch))?;
        Ok(Self { batch, sum })
    }

    /// First `n` samples of a stream.
    pub fn from_stream(problem: &'a ProblemInstance, stream: &SampleStream, n: usize) -> Result<Self> {
        Self::new(problem, stream.batch(n))
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.sum.problem
    }

    pub fn batch(&self) -> &[Sample] {
        &self.batch
    }

    pub fn n(&self) -> usize {
        self.batch.len()
    }

    pub fn value_and_grad(&self, u: &[f64]) -> Result<ValueGrad> {
        self.sum.value_and_grad(u)
    }

    pub fn value(&self, u: &[f64]) -> Result<f64> {
        self.sum.value(u)
    }

    /// `(1/N) Σ M(u, ξⁱ)` and `(1/N) Σ ζ(ξⁱ)`.
    pub fn mean_m_and_zeta(&self, u: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.sum.mean_m_and_zeta(u)
    }

    pub fn solve(&self, cfg: &OptimizerConfig, start_seed: u64) -> Result<OptimizeResult> {
        self.sum.solve(cfg, start_seed)
    }
}

/// The risk-neutral problem over a finite support, with exact expectations.
#[derive(Debug, Clone)]
pub struct ExactProblem<'a> {
    sum: WeightedSum<'a>,
}

impl<'a> ExactProblem<'a> {
    pub fn new(problem: &'a ProblemInstance) -> Result<Self> {
        let (weights, atoms) = problem.model().atoms().ok_or(Error::UnsupportedContinuousModel)?;
        let samples = atoms
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(k, (a, &w))| (a.clone(), w, k))
            .collect();
        Ok(Self {
            sum: WeightedSum::new(problem, samples)?,
        })
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.sum.problem
    }

    pub fn value_and_grad(&self, u: &[f64]) -> Result<ValueGrad> {
        self.sum.value_and_grad(u)
    }

    pub fn value(&self, u: &[f64]) -> Result<f64> {
        self.sum.value(u)
    }

    /// `E[ζ(ξ)]`.
    pub fn expected_zeta(&self) -> f64 {
        let p = self.sum.problem;
        self.sum
            .weights
            .iter()
            .zip(&self.sum.systems)
            .map(|(w, s)| w * p.zeta(&s.sample))
            .sum()
    }

    /// `(ϑ*, u*)` by multi-start proximal gradient.
    pub fn solve_reference(&self, cfg: &OptimizerConfig) -> Result<OptimizeResult> {
        self.sum.solve(cfg, 0)
    }
}

/// The level set `V_adʳ(u₀) = {u : (α/2)‖u‖² ≤ E[Ĵ(u₀, ξ)] + ρ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VadEnvelope {
    pub u0: Vec<f64>,
    pub rho: f64,
    pub bound: f64,
    pub r_ad: f64,
}

impl VadEnvelope {
    pub fn from_problem(p: &ProblemInstance) -> Self {
        Self {
            u0: p.u0().to_vec(),
            rho: p.settings().rho,
            bound: p.expected_objective_at_u0() + p.settings().rho,
            r_ad: p.r_ad(),
        }
    }
}

/// Whether `u ∈ V_adʳ(u₀)` (including `ψ(u) < ∞`).
pub fn vad_membership(p: &ProblemInstance, env: &VadEnvelope, u: &[f64]) -> bool {
    p.quadratic(u) <= env.bound && p.regularizer().is_feasible(u, p.control_space())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WadMargins {
    /// `(E[ζ] + ρ) − (1/N) Σ ζ(ξⁱ)`.
    pub lln_margin: f64,
    /// `(1/N) Σ ζ(ξⁱ) − ‖(1/N) Σ M(u*, ξⁱ)‖_V`.
    pub envelope_margin: f64,
    /// `‖u* − prox_{ψ/α}(−(1/α)∇F̂₁,N(u*))‖`.
    pub fixpoint_residual: f64,
}

pub fn wad_bound_check(s: &SaaProblem<'_>, u_star: &[f64], expected_zeta: f64, rho: f64) -> Result<WadMargins> {
    let p = s.problem();
    let (m, zeta) = s.mean_m_and_zeta(u_star)?;
    let vg = s.value_and_grad(u_star)?;
    let g1: Vec<f64> = vg
        .gradient
        .iter()
        .zip(u_star)
        .map(|(g, u)| g - p.alpha() * u)
        .collect();
    Ok(WadMargins {
        lln_margin: expected_zeta + rho - zeta,
        envelope_margin: zeta - p.m_norm(&m),
        fixpoint_residual: prox::fixpoint_residual(&p.prox(), p.alpha(), &g1, u_star),
    })
}

/// One `(N, seed)` row of a consistency sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub seed: u64,
    pub value: f64,
    pub value_error: f64,
    pub solution_error: f64,
    pub fixpoint_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub in_vad: bool,
    pub wall_time: f64,
    /// Set when the SAA solve failed; numeric fields are then NaN.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub n: usize,
    pub median_value_error: f64,
    pub median_solution_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub reference_value: f64,
    pub reference_control: Vec<f64>,
    pub rows: Vec<ConsistencyRow>,
    pub summary: Vec<ConsistencySummary>,
    /// `None` when fewer than two sample sizes were run.
    pub value_trend_decreasing: Option<bool>,
    pub solution_trend_decreasing: Option<bool>,
    /// Median value error at the largest N over the one at the smallest N.
    pub value_error_ratio: Option<f64>,
    /// Errors at or below these levels count as converged.
    pub value_floor: f64,
    pub solution_floor: f64,
}

impl ConsistencyReport {
    pub fn trends_pass(&self, max_ratio: f64) -> Option<bool> {
        let last = self.summary.last()?.median_value_error;
        Some(
            self.value_trend_decreasing?
                && self.solution_trend_decreasing?
                && (self.value_error_ratio? <= max_ratio || last <= self.value_floor),
        )
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Strictly decreasing until both neighbours sit at or below `floor`.
fn decreasing_to_floor(v: &[f64], floor: f64) -> bool {
    v.windows(2).all(|w| w[1] < w[0] || (w[0] <= floor && w[1] <= floor))
}

/// Solves SAA problems for every `(N, seed)` and compares against the reference.
///
/// Within one seed the batch for `N` is a prefix of the batch for larger `N`.
pub fn run_consistency(
    e: &ExactProblem<'_>,
    reference: &OptimizeResult,
    n_list: &[usize],
    seeds: &[u64],
    cfg: &OptimizerConfig,
) -> Result<ConsistencyReport> {
    if n_list.is_empty() || seeds.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidConfig("consistency needs nonempty N and seed lists".into()));
    }
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig("N values must be strictly increasing".into()));
    }
    let p = e.problem();
    let env = VadEnvelope::from_problem(p);
    let space = p.control_space();
    let jobs: Vec<(usize, u64)> = n_list
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let rows = par::map(&jobs, |&(n, seed)| {
        let start = Instant::now();
        let stream = SampleStream::new(p.model().clone(), seed);
        let solved = SaaProblem::from_stream(p, &stream, n).and_then(|s| s.solve(cfg, seed));
        let wall_time = start.elapsed().as_secs_f64();
        match solved {
            Ok(r) => ConsistencyRow {
                n,
                seed,
                value: r.value,
                value_error: (r.value - reference.value).abs(),
                solution_error: space.norm(&linalg::sub(&r.u_star, &reference.u_star)),
                fixpoint_residual: r.fixpoint_residual,
                iterations: r.iterations,
                converged: r.converged,
                in_vad: vad_membership(p, &env, &r.u_star),
                wall_time,
                failure: (!r.converged).then(|| "maximum iterations reached".to_string()),
            },
            Err(err) => ConsistencyRow {
                n,
                seed,
                value: f64::NAN,
                value_error: f64::NAN,
                solution_error: f64::NAN,
                fixpoint_residual: f64::NAN,
                iterations: 0,
                converged: false,
                in_vad: false,
                wall_time,
                failure: Some(err.to_string()),
            },
        }
    });

    let summary: Vec<ConsistencySummary> = n_list
        .iter()
        .map(|&n| {
            let of_n: Vec<&ConsistencyRow> = rows.iter().filter(|r| r.n == n).collect();
            let ok: Vec<&&ConsistencyRow> = of_n.iter().filter(|r| r.failure.is_none()).collect();
            ConsistencySummary {
                n,
                median_value_error: median(&ok.iter().map(|r| r.value_error).collect::<Vec<_>>()),
                median_solution_error: median(&ok.iter().map(|r| r.solution_error).collect::<Vec<_>>()),
                failures: of_n.len() - ok.len(),
            }
        })
        .collect();
    let value_floor = 1e-10 * reference.value.abs().max(1.0);
    let solution_floor = 10.0 * cfg.fixpoint_tol / p.alpha() * space.norm(&reference.u_star).max(1.0);
    let (value_trend, solution_trend, ratio) = if summary.len() >= 2 {
        let v: Vec<f64> = summary.iter().map(|s| s.median_value_error).collect();
        let d: Vec<f64> = summary.iter().map(|s| s.median_solution_error).collect();
        (
            Some(decreasing_to_floor(&v, value_floor)),
            Some(decreasing_to_floor(&d, solution_floor)),
            Some(v[v.len() - 1] / v[0]),
        )
    } else {
        (None, None, None)
    };
    Ok(ConsistencyReport {
        reference_value: reference.value,
        reference_control: reference.u_star.clone(),
        rows,
        summary,
        value_trend_decreasing: value_trend,
        solution_trend_decreasing: solution_trend,
        value_error_ratio: ratio,
        value_floor,
        solution_floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub c_d: f64,
    pub kappa_min: f64,
    pub alpha: f64,
    pub eps_max: f64,
    pub eps: f64,
    pub radius: f64,
    pub n: usize,
    pub seed: u64,
    pub samples: usize,
    pub max_value: f64,
    pub value_at_zero: f64,
}

/// `ε_max = (C_D²/κ_min)² + α`.
pub fn appendix_eps_max(p: &ProblemInstance) -> f64 {
    let env = p.envelope();
    (env.c_d * env.c_d / env.kappa_min).powi(2) + p.alpha()
}

/// Checks `F̂_N(u) ≤ ε` on 100 controls of norm `√(2ε/ε_max)` and 100 inside.
pub fn appendix_epsilon_check(p: &ProblemInstance, n: usize, seed: u64, eps: f64) -> Result<AppendixReport> {
    let eps_max = appendix_eps_max(p);
    if !(eps > 0.0 && eps <= eps_max) {
        return Err(Error::InvalidConfig(format!("eps = {eps} must lie in (0, eps_max = {eps_max}]")));
    }
    let radius = (2.0 * eps / eps_max).sqrt();
    let saa = SaaProblem::from_stream(p, &SampleStream::new(p.model().clone(), seed), n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut controls = Vec::with_capacity(200);
    for k in 0..200 {
        let dir = p.random_direction(&mut rng);
        let t = if k < 100 {
            1.0
        } else {
            rand::Rng::random_range(&mut rng, 0.0..1.0)
        };
        controls.push(linalg::scale(&dir, radius * t));
    }
    let values = par::map(&controls, |u| saa.value(u));
    let mut max_value = 0.0f64;
    for (u, v) in controls.iter().zip(values) {
        let v = v?;
        if !(v <= eps) {
            return Err(Error::ViolationFound {
                control: u.clone(),
                value: v,
                eps,
            });
        }
        max_value = max_value.max(v);
    }
    Ok(AppendixReport {
        c_d: p.envelope().c_d,
        kappa_min: p.envelope().kappa_min,
        alpha: p.alpha(),
        eps_max,
        eps,
        radius,
        n,
        seed,
        samples: controls.len(),
        max_value,
        value_at_zero: saa.value(&vec![0.0; p.control_space().dim()])?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaLlnRow {
    pub n: usize,
    pub max_error: f64,
    pub median_error: f64,
    pub relative_max_error: f64,
}

/// `|(1/N) Σ ζ(ξⁱ) − E[ζ]|` across seeds, per `N`.
pub fn zeta_lln_check(e: &ExactProblem<'_>, n_list: &[usize], seeds: &[u64]) -> Vec<ZetaLlnRow> {
    let p = e.problem();
    let exact = e.expected_zeta();
    n_list
        .iter()
        .map(|&n| {
            let errors: Vec<f64> = par::map(seeds, |&seed| {
                let stream = SampleStream::new(p.model().clone(), seed);
                let mean: f64 = weighted_batch(&stream.batch(n))
                    .iter()
                    .map(|(xi, w, _)| w * p.zeta(xi))
                    .sum();
                (mean - exact).abs()
            });
            let max_error = errors.iter().copied().fold(0.0, f64::max);
            ZetaLlnRow {
                n,
                max_error,
                median_error: median(&errors),
                relative_max_error: max_error / exact.abs(),
            }
        })
        .collect()
}

/// Median over seeds of `max_probe |F̂_N(u) − F(u)|` on a fixed probe set.
pub fn uniform_convergence_proxy(
    e: &ExactProblem<'_>,
    probes: &[Vec<f64>],
    n_list: &[usize],
    seeds: &[u64],
) -> Result<Vec<(usize, f64)>> {
    let p = e.problem();
    let (weights, atoms) = p.model().atoms().ok_or(Error::UnsupportedContinuousModel)?;
    // Ĵ at every (probe, atom); SAA values are then reweightings
    let table = par::map(probes, |u| -> Result<Vec<f64>> {
        atoms.iter().map(|a| p.full_objective(u, a)).collect()
    });
    let table: Vec<Vec<f64>> = table.into_iter().collect::<Result<_>>()?;
    let exact: Vec<f64> = table
        .iter()
        .map(|row| row.iter().zip(weights).map(|(j, w)| w * j).sum())
        .collect();
    Ok(n_list
        .iter()
        .map(|&n| {
            let per_seed: Vec<f64> = seeds
                .iter()
                .map(|&seed| {
                    let stream = SampleStream::new(p.model().clone(), seed);
                    let mut counts = vec![0usize; atoms.len()];
                    for xi in stream.batch(n) {
                        if let SampleOrigin::Atom(k) = xi.origin {
                            counts[k] += 1;
                        }
                    }
                    table
                        .iter()
                        .zip(&exact)
                        .map(|(row, f)| {
                            let saa: f64 = row
                                .iter()
                                .zip(&counts)
                                .map(|(j, &c)| c as f64 / n as f64 * j)
                                .sum();
                            (saa - f).abs()
                        })
                        .fold(0.0, f64::max)
                })
                .collect();
            (n, median(&per_seed))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{ProblemSettings, ProblemTag};
    use crate::random::{CoefficientRanges, RandomModel};

    #[test]
    fn batch_grouping_weights() {
        let m = RandomModel::finite_from_ranges(CoefficientRanges::default(), 1, 3, 4);
        let stream = SampleStream::new(m, 8);
        let batch = stream.batch(30);
        let w = weighted_batch(&batch);
        assert!(w.len() <= 3);
        let total: f64 = w.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decreasing_to_floor_cases() {
        assert!(decreasing_to_floor(&[3.0, 2.0, 1.0], 0.0));
        assert!(!decreasing_to_floor(&[3.0, 3.0, 1.0], 0.0));
        assert!(decreasing_to_floor(&[0.0, 0.0, 0.0], 1e-12));
        assert!(decreasing_to_floor(&[1.0, 1e-13, 2e-13], 1e-12));
        assert!(!decreasing_to_floor(&[1.0, 1e-13, 2e-12], 1e-12));
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn vad_membership_cases() {
        let s = ProblemSettings {
            n: 15,
            ..ProblemSettings::defaults(ProblemTag::Burgers)
        };
        let model = RandomModel::finite_from_ranges(CoefficientRanges::default(), 1, 2, 1);
        let p = ProblemInstance::new(s, model).unwrap();
        let env = VadEnvelope::from_problem(&p);
        assert!(vad_membership(&p, &env, &env.u0));
        let ones = vec![1.0; p.control_space().dim()];
        let n1 = p.control_space().norm(&ones);
        let r = (2.0 * env.bound / p.alpha()).sqrt();
        let just_above = linalg::scale(&ones, r * (1.0 + 1e-9) / n1);
        assert!(!vad_membership(&p, &env, &just_above));
    }
}
