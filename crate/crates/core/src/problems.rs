//! The four risk-neutral control problems.
//!
//! Every instance exposes the same interface: the state map `S(u, ξ)`, the
//! adjoint `z(u, ξ)`, `Ĵ₁`, the factorized gradient `∇Ĵ₁ = K[M(u, ξ)]`, the
//! envelope `ζ(ξ)` and the discrete stability margins.
//!
//! | tag                   | state          | control           | `M`      | `K`          |
//! |-----------------------|----------------|-------------------|----------|--------------|
//! | `boundary_semilinear` | H¹ (2D)        | L²(∂D)            | `z`      | `−τ`         |
//! | `burgers`             | H¹₀ (1D)       | L²(D₀)            | `z`      | `−B*ι`       |
//! | `distributed_maxterm` | H¹ (2D)        | L²(D)             | `B̃ ι* ι z` | `−ι`       |
//! | `appendix_infcompact` | H¹₀ (2D)       | L²(D)             | `z`      | `−ι`         |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, BandCholesky, SparseMatrix};
use crate::mesh::{self, DiscreteSpace, Geometry, Grid1D, Mesh2D, SpaceKind};
use crate::pde::{self, Convection1D, NewtonConfig, SemilinearSystem, SolveReport};
use crate::prox::{ProxOperator, RegularizerSpec};
use crate::random::{RandomModel, Sample, SampleStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemTag {
    BoundarySemilinear,
    Burgers,
    DistributedMaxterm,
    AppendixInfcompact,
}

impl ProblemTag {
    pub const ALL: [ProblemTag; 4] = [
        Self::BoundarySemilinear,
        Self::Burgers,
        Self::DistributedMaxterm,
        Self::AppendixInfcompact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BoundarySemilinear => "boundary_semilinear",
            Self::Burgers => "burgers",
            Self::DistributedMaxterm => "distributed_maxterm",
            Self::AppendixInfcompact => "appendix_infcompact",
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Self::Burgers => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for ProblemTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownProblemTag(s.to_string()))
    }
}

/// Physical, discretization and regularization constants of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSettings {
    pub tag: ProblemTag,
    /// Interior nodes in 1D, cells per side in 2D.
    pub n: usize,
    pub alpha: f64,
    /// Constant deterministic load `b₀`; a sample scales it by `load_scale`.
    pub load_amplitude: f64,
    /// Control subdomain `D₀` of the Burgers problem.
    pub subdomain: [f64; 2],
    pub regularizer: RegularizerSpec,
    /// Slack `ρ` of the level set `V_adʳ(u₀)`.
    pub rho: f64,
    /// Lower bounds used by ζ and the margins; default to the range minima.
    pub kappa_min: Option<f64>,
    pub g_min: Option<f64>,
    pub r_min: Option<f64>,
    /// Samples used to estimate `E[Ĵ(u₀, ξ)]` when the support is continuous.
    pub envelope_samples: usize,
    pub newton: NewtonConfig,
}

impl ProblemSettings {
    pub fn defaults(tag: ProblemTag) -> Self {
        let base = Self {
            tag,
            n: 16,
            alpha: 1e-2,
            load_amplitude: 1.0,
            subdomain: [0.25, 0.75],
            regularizer: RegularizerSpec::Zero,
            rho: 1.0,
            kappa_min: None,
            g_min: None,
            r_min: None,
            envelope_samples: 256,
            newton: NewtonConfig::default(),
        };
        match tag {
            ProblemTag::BoundarySemilinear => base,
            ProblemTag::Burgers => Self {
                n: 63,
                regularizer: RegularizerSpec::Ball { radius: 2.0 },
                ..base
            },
            ProblemTag::DistributedMaxterm => Self {
                load_amplitude: 0.5,
                regularizer: RegularizerSpec::Box { lo: 0.0, hi: 4.0 },
                ..base
            },
            ProblemTag::AppendixInfcompact => Self {
                alpha: 1.0,
                load_amplitude: 0.0,
                regularizer: RegularizerSpec::Ball { radius: 2.0 },
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha = {} must be positive", self.alpha)));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("mesh resolution must be at least 1".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidConfig("rho must be positive".into()));
        }
        if !self.load_amplitude.is_finite() {
            return Err(Error::InvalidConfig("load amplitude must be finite".into()));
        }
        for (name, v) in [("kappa_min", self.kappa_min), ("g_min", self.g_min), ("r_min", self.r_min)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::InvalidConfig(format!("{name} must be positive")));
                }
            }
        }
        if self.envelope_samples == 0 {
            return Err(Error::InvalidConfig("envelope_samples must be at least 1".into()));
        }
        self.regularizer.validate()?;
        self.newton.validate()
    }
}

/// Closed-form constants of the envelope `ζ(ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaEnvelope {
    pub tag: ProblemTag,
    pub kappa_min: f64,
    pub g_min: f64,
    pub r_min: f64,
    /// Trace constant `C_τ` (boundary problem).
    pub c_tau: f64,
    /// Norm of the control operator `B` (identity, so 1).
    pub c_b: f64,
    /// Friedrichs constant of the state space (H¹₀ problems).
    pub c_d: f64,
    pub r_ad: f64,
    pub y_d_norm: f64,
    /// `‖1‖_{L²(D)}`.
    pub one_norm: f64,
}

impl ZetaEnvelope {
    /// `ζ` for a sample whose load has L² norm `b_norm`.
    pub fn evaluate(&self, b_norm: f64) -> f64 {
        let m = self.kappa_min.min(self.g_min);
        match self.tag {
            ProblemTag::BoundarySemilinear => {
                (self.y_d_norm + (self.c_tau * self.c_b * self.r_ad + b_norm) / m) / m
            }
            ProblemTag::Burgers => {
                let k = self.kappa_min;
                let z1 = (b_norm + self.r_ad + self.y_d_norm) / k;
                z1 * (2.0 / k * z1 * (3.0 * z1 / k).exp() + 1.0) / k
            }
            ProblemTag::DistributedMaxterm => {
                (self.one_norm + (b_norm + self.r_ad / self.r_min.min(1.0)) / m) / m
            }
            ProblemTag::AppendixInfcompact => {
                self.c_d.powi(3) * (self.r_ad + b_norm) / (self.kappa_min * self.kappa_min)
            }
        }
    }
}

/// Sample-dependent operators, assembled once per sample.
#[derive(Debug, Clone)]
pub struct SampleSystem {
    pub sample: Sample,
    pub system: SemilinearSystem,
    /// Load `b(ξ)` as a dual vector on the state space.
    pub load: Vec<f64>,
    /// Factor of `r(ξ) K + M` (max-term problem).
    pub btilde: Option<BandCholesky>,
}

/// Everything computed at one `(u, ξ)`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub j1: f64,
    pub state: Vec<f64>,
    pub report: SolveReport,
    pub adjoint: Vec<f64>,
    /// `M(u, ξ)` in the state space V.
    pub m: Vec<f64>,
    /// `∇Ĵ₁(u, ξ) = K[M(u, ξ)]`, a Riesz representative in the control space.
    pub gradient: Vec<f64>,
    /// `B̃(ξ) ι* u` (max-term problem only).
    pub btilde_u: Option<Vec<f64>>,
}

/// A named discrete stability margin (`rhs − lhs`, nonnegative when the bound holds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margin {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone)]
enum Tracking {
    Target(Vec<f64>),
    MaxTerm,
}

/// One concrete problem: spaces, operators and constants.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    settings: ProblemSettings,
    model: RandomModel,
    geometry: Arc<Geometry>,
    state_space: Arc<DiscreteSpace>,
    control_space: Arc<DiscreteSpace>,
    tracking: Tracking,
    load_nodal: Vec<f64>,
    cubic_weights: Vec<f64>,
    coupling: Option<SparseMatrix>,
    k_map: Vec<Option<usize>>,
    c_k: f64,
    envelope: ZetaEnvelope,
    e_j_u0: f64,
    u0: Vec<f64>,
}

impl ProblemInstance {
    pub fn new(settings: ProblemSettings, model: RandomModel) -> Result<Self> {
        settings.validate()?;
        model.validate()?;
        let tag = settings.tag;
        let geometry = Arc::new(match tag.dimension() {
            1 => Geometry::Interval(Grid1D::new(settings.n)?),
            _ => Geometry::Square(Mesh2D::unit_square(settings.n)?),
        });
        if model.regions != geometry.n_regions() {
            return Err(Error::InvalidConfig(format!(
                "{tag} expects {} coefficient regions, the random model has {}",
                geometry.n_regions(),
                model.regions
            )));
        }
        let space = |kind| DiscreteSpace::new(geometry.clone(), kind).map(Arc::new);
        let (state_space, control_space) = match tag {
            ProblemTag::BoundarySemilinear => (space(SpaceKind::H1)?, space(SpaceKind::L2Boundary)?),
            ProblemTag::Burgers => {
                let [lo, hi] = settings.subdomain;
                (space(SpaceKind::H01)?, space(SpaceKind::L2Subdomain { lo, hi })?)
            }
            ProblemTag::DistributedMaxterm => (space(SpaceKind::H1)?, space(SpaceKind::L2Domain)?),
            ProblemTag::AppendixInfcompact => (space(SpaceKind::H01)?, space(SpaceKind::L2Domain)?),
        };

        let tracking = match tag {
            ProblemTag::BoundarySemilinear => Tracking::Target(
                state_space.interpolate(|x, y| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()),
            ),
            ProblemTag::Burgers => Tracking::Target(state_space.interpolate(|x, _| x * (1.0 - x))),
            ProblemTag::DistributedMaxterm => Tracking::MaxTerm,
            ProblemTag::AppendixInfcompact => Tracking::Target(vec![0.0; state_space.dim()]),
        };

        let n_el = geometry.n_elements();
        let coupling = match tag {
            ProblemTag::BoundarySemilinear => {
                Some(state_space.coupling_matrix(&control_space, geometry.boundary_mass_triplets(1.0)))
            }
            ProblemTag::Burgers => {
                let mask: Vec<f64> = (0..n_el)
                    .map(|e| if control_space.has_element(e) { 1.0 } else { 0.0 })
                    .collect();
                Some(state_space.coupling_matrix(&control_space, geometry.mass_triplets(&mask)))
            }
            ProblemTag::DistributedMaxterm => None,
            ProblemTag::AppendixInfcompact => {
                Some(state_space.coupling_matrix(&control_space, geometry.mass_triplets(&vec![1.0; n_el])))
            }
        };
        let k_map: Vec<Option<usize>> = control_space
            .dofs()
            .iter()
            .map(|&node| state_space.dof_of_node(node))
            .collect();

        let lumped = geometry.lumped_mass();
        let cubic_weights = state_space.restrict_from_nodes(&lumped);
        let load_nodal = vec![settings.load_amplitude; geometry.n_nodes()];

        let ranges = model.ranges;
        let kappa_min = settings.kappa_min.unwrap_or(ranges.kappa.lo);
        let g_min = settings.g_min.unwrap_or(ranges.g.lo);
        let r_min = settings.r_min.unwrap_or(ranges.r.lo);
        let c_tau = match tag {
            ProblemTag::BoundarySemilinear => mesh::trace_constant(&state_space, &control_space)?,
            _ => 0.0,
        };
        let c_d = match state_space.kind() {
            SpaceKind::H01 => mesh::friedrichs_constant(&state_space)?,
            _ => 0.0,
        };
        let y_d_norm = match &tracking {
            Tracking::Target(y) => state_space.l2_norm(y),
            Tracking::MaxTerm => 0.0,
        };
        let one_norm = geometry.lumped_mass().iter().sum::<f64>().sqrt();

        let mut inst = Self {
            envelope: ZetaEnvelope {
                tag,
                kappa_min,
                g_min,
                r_min,
                c_tau,
                c_b: 1.0,
                c_d,
                r_ad: f64::NAN,
                y_d_norm,
                one_norm,
            },
            settings,
            model,
            geometry,
            state_space,
            control_space,
            tracking,
            load_nodal,
            cubic_weights,
            coupling,
            k_map,
            c_k: 0.0,
            e_j_u0: f64::NAN,
            u0: Vec::new(),
        };
        inst.c_k = inst.k_factor_norm();
        inst.u0 = inst.prox().apply(1.0, &vec![0.0; inst.control_space.dim()]);
        inst.e_j_u0 = inst.expected_objective(&inst.u0)?;
        let bound = inst.e_j_u0 + inst.settings.rho;
        let recipe = (2.0 * bound / inst.settings.alpha).sqrt();
        let radius = match inst.settings.regularizer.feasible_radius(&inst.control_space) {
            Some(r) => recipe.min(r),
            None => recipe,
        };
        inst.envelope.r_ad = 1.01 * radius;
        Ok(inst)
    }

    /// Replaces the tracking target (tracking problems only).
    pub fn with_target(mut self, y_d: Vec<f64>) -> Result<Self> {
        if y_d.len() != self.state_space.dim() || matches!(self.tracking, Tracking::MaxTerm) {
            return Err(Error::SpaceMismatch("target does not fit this problem".into()));
        }
        self.envelope.y_d_norm = self.state_space.l2_norm(&y_d);
        self.tracking = Tracking::Target(y_d);
        Ok(self)
    }

    pub fn tag(&self) -> ProblemTag {
        self.settings.tag
    }

    pub fn settings(&self) -> &ProblemSettings {
        &self.settings
    }

    pub fn model(&self) -> &RandomModel {
        &self.model
    }

    pub fn alpha(&self) -> f64 {
        self.settings.alpha
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn state_space(&self) -> &Arc<DiscreteSpace> {
        &self.state_space
    }

    pub fn control_space(&self) -> &Arc<DiscreteSpace> {
        &self.control_space
    }

    pub fn target(&self) -> Option<&[f64]> {
        match &self.tracking {
            Tracking::Target(y) => Some(y),
            Tracking::MaxTerm => None,
        }
    }

    pub fn regularizer(&self) -> RegularizerSpec {
        self.settings.regularizer
    }

    pub fn prox(&self) -> ProxOperator {
        ProxOperator::new(self.settings.regularizer, self.control_space.clone())
    }

    pub fn envelope(&self) -> &ZetaEnvelope {
        &self.envelope
    }

    pub fn r_ad(&self) -> f64 {
        self.envelope.r_ad
    }

    /// Operator norm `C_K` of `K: V → U` (power iteration).
    pub fn c_k(&self) -> f64 {
        self.c_k
    }

    /// Default starting point `u₀` (the projection of zero onto `U_ad`).
    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    /// `E[Ĵ(u₀, ξ)]`, exact on finite supports.
    pub fn expected_objective_at_u0(&self) -> f64 {
        self.e_j_u0
    }

    pub fn friedrichs(&self) -> f64 {
        self.envelope.c_d
    }

    /// Per-element diffusion coefficient of a sample.
    pub fn element_kappa(&self, xi: &Sample) -> Vec<f64> {
        (0..self.geometry.n_elements())
            .map(|e| xi.kappa[self.geometry.element_region(e)])
            .collect()
    }

    /// Assembles the sample-dependent operators.
    pub fn sample_system(&self, xi: &Sample) -> Result<SampleSystem> {
        let ss = &self.state_space;
        let stiff = mesh::weighted_stiffness(ss, &self.element_kappa(xi))?;
        let (linear, convection) = match self.tag() {
            ProblemTag::BoundarySemilinear => {
                let bm = ss.boundary_mass().expect("2D state space has a boundary mass");
                (stiff.add_scaled(ss.mass(), xi.g).add_scaled(bm, xi.sigma), None)
            }
            ProblemTag::Burgers => (stiff, Some(Convection1D::new(ss))),
            ProblemTag::DistributedMaxterm => (stiff.add_scaled(ss.mass(), xi.g), None),
            ProblemTag::AppendixInfcompact => (stiff, None),
        };
        let cubic_weights = match self.tag() {
            ProblemTag::Burgers => None,
            _ => Some(self.cubic_weights.clone()),
        };
        let btilde = match self.tag() {
            ProblemTag::DistributedMaxterm => {
                if !(xi.r > 0.0) {
                    return Err(Error::SingularSystem);
                }
                let a = ss.stiffness().scaled(xi.r).add_scaled(ss.mass(), 1.0);
                Some(BandCholesky::factor(&a).map_err(|_| Error::SingularSystem)?)
            }
            _ => None,
        };
        let full_mass = self
            .geometry
            .mass_triplets(&vec![1.0; self.geometry.n_elements()]);
        let mut load_nodes = vec![0.0; self.geometry.n_nodes()];
        for (i, j, v) in full_mass {
            load_nodes[i] += v * self.load_nodal[j] * xi.load_scale;
        }
        Ok(SampleSystem {
            sample: xi.clone(),
            system: SemilinearSystem {
                linear,
                cubic_weights,
                convection,
            },
            load: ss.restrict_from_nodes(&load_nodes),
            btilde,
        })
    }

    /// `‖b(ξ)‖_{L²(D)}`.
    pub fn load_norm(&self, xi: &Sample) -> f64 {
        let m = self.geometry.mass_triplets(&vec![1.0; self.geometry.n_elements()]);
        let s: f64 = m
            .into_iter()
            .map(|(i, j, v)| v * self.load_nodal[i] * self.load_nodal[j])
            .sum();
        xi.load_scale.abs() * s.max(0.0).sqrt()
    }

    /// `w = B̃(ξ) f` for a dual vector `f` on the state space.
    pub fn btilde_apply(&self, sys: &SampleSystem, f: &[f64]) -> Result<Vec<f64>> {
        let fac = sys
            .btilde
            .as_ref()
            .ok_or_else(|| Error::SpaceMismatch(format!("{} has no B̃ operator", self.tag())))?;
        Ok(fac.solve(f))
    }

    /// `B̃(ξ)*`; the operator is self-adjoint.
    pub fn btilde_adjoint_apply(&self, sys: &SampleSystem, f: &[f64]) -> Result<Vec<f64>> {
        self.btilde_apply(sys, f)
    }

    /// Right-hand side `f(u, ξ)` of the state equation and, for the
    /// max-term problem, `B̃(ξ) ι* u`.
    fn state_rhs(&self, sys: &SampleSystem, u: &[f64]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        if u.len() != self.control_space.dim() {
            return Err(Error::SpaceMismatch(format!(
                "control of length {} for a space of dimension {}",
                u.len(),
                self.control_space.dim()
            )));
        }
        match &self.coupling {
            Some(c) => Ok((linalg::add(&sys.load, &c.matvec(u)), None)),
            None => {
                let mu = self.state_space.mass().matvec(u);
                let w = self.btilde_apply(sys, &mu)?;
                let mw = self.state_space.mass().matvec(&w);
                Ok((linalg::add(&sys.load, &mw), Some(w)))
            }
        }
    }

    pub fn solve_state_with(&self, sys: &SampleSystem, u: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let (rhs, _) = self.state_rhs(sys, u)?;
        pde::solve_state(&sys.system, &rhs, &self.state_space, &self.settings.newton, None)
    }

    /// `J₁(y)` and its derivative as a dual vector.
    fn tracking_value(&self, y: &[f64]) -> (f64, Vec<f64>) {
        match &self.tracking {
            Tracking::Target(y_d) => {
                let d = linalg::sub(y, y_d);
                let md = self.state_space.mass().matvec(&d);
                ((0.5 * linalg::dot(&d, &md)).max(0.0), md)
            }
            Tracking::MaxTerm => {
                let f: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
                let (val, g) = self.geometry.positive_part_integrals(&f);
                (0.5 * val, linalg::scale(&g, -1.0))
            }
        }
    }

    /// `K[m]`.
    pub fn k_factor(&self, m: &[f64]) -> Vec<f64> {
        self.k_map
            .iter()
            .map(|k| match k {
                Some(k) => -m[*k],
                None => 0.0,
            })
            .collect()
    }

    /// `C_K = sup ‖K m‖_U / ‖m‖_V`.
    fn k_factor_norm(&self) -> f64 {
        let n = self.state_space.dim();
        let mu = self.control_space.gram();
        let t = mu.triplets().filter_map(|(i, j, v)| Some((self.k_map[i]?, self.k_map[j]?, v)));
        let a = SparseMatrix::from_triplets(n, n, t);
        linalg::power_iteration(&a, self.state_space.gram_factor(), 1e-13, 100_000)
            .max(0.0)
            .sqrt()
    }

    /// Solves state and (optionally) adjoint at `(u, ξ)`.
    pub fn evaluate(&self, sys: &SampleSystem, u: &[f64], with_gradient: bool) -> Result<Evaluation> {
        let (rhs, btilde_u) = self.state_rhs(sys, u)?;
        let (y, report) = pde::solve_state(&sys.system, &rhs, &self.state_space, &self.settings.newton, None)?;
        let (j1, dj) = self.tracking_value(&y);
        if !j1.is_finite() {
            return Err(Error::NonFiniteValue);
        }
        let (adjoint, m, gradient) = if with_gradient {
            let z = pde::solve_adjoint(&sys.system, &y, &linalg::scale(&dj, -1.0))?;
            let m = match sys.btilde {
                Some(_) => self.btilde_adjoint_apply(sys, &self.state_space.mass().matvec(&z))?,
                None => z.clone(),
            };
            let g = self.k_factor(&m);
            (z, m, g)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        Ok(Evaluation {
            j1,
            state: y,
            report,
            adjoint,
            m,
            gradient,
            btilde_u,
        })
    }

    /// `Ĵ₁(u, ξ)`.
    pub fn objective_j1(&self, u: &[f64], xi: &Sample) -> Result<f64> {
        let sys = self.sample_system(xi)?;
        Ok(self.evaluate(&sys, u, false)?.j1)
    }

    /// `∇ᵤĴ₁(u, ξ)` in the control space.
    pub fn gradient_j1(&self, u: &[f64], xi: &Sample) -> Result<Vec<f64>> {
        let sys = self.sample_system(xi)?;
        Ok(self.evaluate(&sys, u, true)?.gradient)
    }

    /// `M(u, ξ) ∈ V`.
    pub fn m_component(&self, u: &[f64], xi: &Sample) -> Result<Vec<f64>> {
        let sys = self.sample_system(xi)?;
        Ok(self.evaluate(&sys, u, true)?.m)
    }

    /// `Ĵ(u, ξ) = Ĵ₁(u, ξ) + ψ(u) + (α/2)‖u‖²`.
    pub fn full_objective(&self, u: &[f64], xi: &Sample) -> Result<f64> {
        let j1 = self.objective_j1(u, xi)?;
        Ok(j1 + self.settings.regularizer.value(u, &self.control_space) + self.quadratic(u))
    }

    /// `(α/2)‖u‖²`.
    pub fn quadratic(&self, u: &[f64]) -> f64 {
        let n = self.control_space.norm(u);
        0.5 * self.settings.alpha * n * n
    }

    /// `E[Ĵ(u, ξ)]`: exact on finite supports, a sample mean otherwise.
    pub fn expected_objective(&self, u: &[f64]) -> Result<f64> {
        if self.model.atoms().is_some() {
            return self.model.try_exact_expectation(|xi| self.full_objective(u, xi));
        }
        let stream = SampleStream::new(self.model.clone(), 0);
        let n = self.settings.envelope_samples;
        let values = crate::par::map_indexed(n, |i| self.full_objective(u, &stream.draw(i as u64 + 1)));
        let mut acc = 0.0;
        for (i, v) in values.into_iter().enumerate() {
            acc += v.map_err(|e| Error::at_sample(i + 1, e))?;
        }
        Ok(acc / n as f64)
    }

    /// `ζ(ξ)`.
    pub fn zeta(&self, xi: &Sample) -> f64 {
        self.envelope.evaluate(self.load_norm(xi))
    }

    /// `‖M(u, ξ)‖_V`.
    pub fn m_norm(&self, m: &[f64]) -> f64 {
        self.state_space.norm(m)
    }

    /// Discrete stability margins at an evaluated point, plus `ζ − ‖M‖_V`
    /// under the name `envelope`.
    pub fn stability_margins(&self, sys: &SampleSystem, u: &[f64], ev: &Evaluation) -> Vec<Margin> {
        let ss = &self.state_space;
        let xi = &sys.sample;
        let env = &self.envelope;
        let m_min = env.kappa_min.min(env.g_min);
        let b_norm = self.load_norm(xi);
        let u_norm = self.control_space.norm(u);
        let (y, z) = (&ev.state, &ev.adjoint);
        let mut out = Vec::new();
        let mut push = |name, value| out.push(Margin { name, value });
        match self.tag() {
            ProblemTag::BoundarySemilinear => {
                let y_d = self.target().unwrap_or(&[]);
                push("gleq_h1_state", b_norm + env.c_tau * u_norm - m_min * ss.h1_norm(y));
                push(
                    "gleq_h1_adjoint",
                    ss.l2_norm(&linalg::sub(y, y_d)) - m_min * ss.h1_norm(z),
                );
            }
            ProblemTag::Burgers => {
                let y_d = self.target().unwrap_or(&[]);
                let kappa = xi.kappa_min();
                let misfit = ss.l2_norm(&linalg::sub(y, y_d));
                push("nsburgers", b_norm + u_norm - env.kappa_min * ss.h01_seminorm(y));
                let l1: f64 = self.cubic_weights.iter().zip(y).map(|(w, v)| w * v.abs()).sum();
                let z_inf = linalg::max_abs(z);
                push(
                    "sburgers_adjoint",
                    2.0 / kappa * (3.0 * l1 / kappa).exp() * misfit - z_inf,
                );
                push(
                    "sburgers_adjoint_h01",
                    ss.l2_norm(y) * z_inf + misfit - kappa * ss.h01_seminorm(z),
                );
            }
            ProblemTag::DistributedMaxterm => {
                let w = ev.btilde_u.as_deref().unwrap_or(&[]);
                let wb: Vec<f64> = w
                    .iter()
                    .zip(&self.load_nodal)
                    .map(|(a, b)| a + xi.load_scale * b)
                    .collect();
                push(
                    "sese_h1_adjoint",
                    env.one_norm + ss.h1_norm(y) - m_min * ss.h1_norm(z),
                );
                push("sese_btilde", u_norm - env.r_min.min(1.0) * ss.h1_norm(w));
                push("sese_h1_state", ss.l2_norm(&wb) - m_min * ss.h1_norm(y));
            }
            ProblemTag::AppendixInfcompact => {
                push(
                    "appendix_state",
                    env.c_d / env.kappa_min * u_norm - ss.h01_seminorm(y),
                );
            }
        }
        push("envelope", self.zeta(xi) - self.m_norm(&ev.m));
        out
    }

    /// Random control with `‖u‖ ≤ radius`, projected onto `U_ad`.
    pub fn random_feasible_control(&self, rng: &mut impl Rng, radius: f64) -> Vec<f64> {
        let dir: Vec<f64> = (0..self.control_space.dim())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = self.control_space.norm(&dir);
        let t: f64 = rng.random();
        let v = linalg::scale(&dir, radius * t / n.max(f64::MIN_POSITIVE));
        self.prox().apply(1.0, &v)
    }

    /// Random unit direction in the control norm.
    pub fn random_direction(&self, rng: &mut impl Rng) -> Vec<f64> {
        let dir: Vec<f64> = (0..self.control_space.dim())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = self.control_space.norm(&dir);
        linalg::scale(&dir, 1.0 / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{CoefficientRanges, SampleOrigin};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn atom(regions: usize) -> Sample {
        Sample {
            kappa: vec![1.3; regions],
            g: 0.9,
            sigma: 0.4,
            r: 1.5,
            load_scale: 1.0,
            origin: SampleOrigin::Atom(0),
        }
    }

    fn instance(tag: ProblemTag, n: usize) -> ProblemInstance {
        let regions = if tag.dimension() == 1 { 1 } else { 4 };
        let model = RandomModel::single_atom(atom(regions), CoefficientRanges::default());
        ProblemInstance::new(ProblemSettings { n, ..ProblemSettings::defaults(tag) }, model).unwrap()
    }

    #[test]
    fn tags_round_trip() {
        for t in ProblemTag::ALL {
            assert_eq!(t.as_str().parse::<ProblemTag>().unwrap(), t);
        }
        assert!(matches!("nope".parse::<ProblemTag>(), Err(Error::UnknownProblemTag(_))));
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        let mut s = ProblemSettings::defaults(ProblemTag::Burgers);
        s.alpha = 0.0;
        let model = RandomModel::single_atom(atom(1), CoefficientRanges::default());
        assert!(matches!(ProblemInstance::new(s, model), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn gradient_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for tag in ProblemTag::ALL {
            let p = instance(tag, if tag.dimension() == 1 { 15 } else { 4 });
            let xi = atom(p.geometry().n_regions());
            let sys = p.sample_system(&xi).unwrap();
            let u = p.random_feasible_control(&mut rng, 1.0);
            let ev = p.evaluate(&sys, &u, true).unwrap();
            assert_eq!(p.k_factor(&ev.m), ev.gradient);
        }
    }

    #[test]
    fn gradient_equals_riesz_of_coupling_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for tag in [ProblemTag::BoundarySemilinear, ProblemTag::Burgers, ProblemTag::AppendixInfcompact] {
            let p = instance(tag, if tag.dimension() == 1 { 15 } else { 4 });
            let xi = atom(p.geometry().n_regions());
            let sys = p.sample_system(&xi).unwrap();
            let u = p.random_feasible_control(&mut rng, 1.0);
            let ev = p.evaluate(&sys, &u, true).unwrap();
            let c = p.coupling.as_ref().unwrap();
            let oracle = p.control_space().riesz(&linalg::scale(&c.transpose_matvec(&ev.adjoint), -1.0));
            for (a, b) in ev.gradient.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{tag}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn maxterm_gradient_matches_dense_transpose() {
        let p = instance(ProblemTag::DistributedMaxterm, 3);
        let xi = atom(4);
        let sys = p.sample_system(&xi).unwrap();
        let u: Vec<f64> = (0..p.control_space().dim()).map(|i| 0.1 * (i % 3) as f64).collect();
        let ev = p.evaluate(&sys, &u, true).unwrap();
        let ss = p.state_space();
        let m = ss.mass().to_dense();
        let a = ss.stiffness().scaled(xi.r).add_scaled(ss.mass(), 1.0).to_dense();
        let g = &m * a.try_inverse().unwrap() * &m;
        let z = nalgebra::DVector::from_vec(ev.adjoint.clone());
        let dual = -(g.transpose() * z);
        let oracle = p.control_space().riesz(dual.as_slice());
        for (a, b) in ev.gradient.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn btilde_reproduces_constants_and_zero() {
        let mut s = ProblemSettings::defaults(ProblemTag::DistributedMaxterm);
        s.n = 4;
        let mut a = atom(4);
        a.r = 1.0;
        let model = RandomModel::single_atom(a.clone(), CoefficientRanges::default());
        let p = ProblemInstance::new(s, model).unwrap();
        let sys = p.sample_system(&a).unwrap();
        let ones = vec![1.0; p.state_space().dim()];
        let w = p.btilde_apply(&sys, &p.state_space().mass().matvec(&ones)).unwrap();
        assert!(w.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let zero = p.btilde_apply(&sys, &vec![0.0; ones.len()]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trivial_objective_values() {
        // zero control, zero load, zero target
        let mut s = ProblemSettings::defaults(ProblemTag::BoundarySemilinear);
        s.n = 4;
        s.load_amplitude = 0.0;
        let model = RandomModel::single_atom(atom(4), CoefficientRanges::default());
        let p = ProblemInstance::new(s, model).unwrap();
        let p = p.clone().with_target(vec![0.0; p.state_space().dim()]).unwrap();
        let u = vec![0.0; p.control_space().dim()];
        assert_eq!(p.objective_j1(&u, &atom(4)).unwrap(), 0.0);

        // states above 1 make the max term vanish
        let mut s = ProblemSettings::defaults(ProblemTag::DistributedMaxterm);
        s.n = 4;
        s.load_amplitude = 40.0;
        let model = RandomModel::single_atom(atom(4), CoefficientRanges::default());
        let p = ProblemInstance::new(s, model).unwrap();
        let sys = p.sample_system(&atom(4)).unwrap();
        let ev = p.evaluate(&sys, &vec![0.0; p.control_space().dim()], true).unwrap();
        assert!(ev.state.iter().all(|&v| v > 1.0));
        assert_eq!(ev.j1, 0.0);
        assert!(ev.gradient.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zeta_closed_forms() {
        let env = ZetaEnvelope {
            tag: ProblemTag::Burgers,
            kappa_min: 1.0,
            g_min: 1.0,
            r_min: 1.0,
            c_tau: 0.0,
            c_b: 1.0,
            c_d: 0.0,
            r_ad: 1.0,
            y_d_norm: 0.0,
            one_norm: 1.0,
        };
        let expected = 2.0 * 3f64.exp() + 1.0;
        assert!((env.evaluate(0.0) - expected).abs() < 1e-13);

        let env = ZetaEnvelope {
            tag: ProblemTag::BoundarySemilinear,
            kappa_min: 0.8,
            g_min: 0.5,
            c_tau: 1.7,
            r_ad: 3.0,
            ..env
        };
        assert!((env.evaluate(0.0) - 1.7 * 3.0 / 0.25).abs() < 1e-13);
        for tag in ProblemTag::ALL {
            let e = ZetaEnvelope { tag, c_d: 0.3, ..env };
            assert!(e.evaluate(1.0) > e.evaluate(0.5));
        }
    }

    #[test]
    fn c_k_matches_trace_constant() {
        let p = instance(ProblemTag::BoundarySemilinear, 4);
        assert!((p.c_k() - p.envelope().c_tau).abs() < 1e-6 * p.envelope().c_tau);
        let q = instance(ProblemTag::AppendixInfcompact, 4);
        assert!((q.c_k() - q.friedrichs()).abs() < 1e-6 * q.friedrichs());
    }
}
