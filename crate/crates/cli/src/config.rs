//! Experiment configuration files (TOML, or JSON by extension).

use std::path::{Path, PathBuf};

use saa_core::pde::NewtonConfig;
use saa_core::problems::{ProblemSettings, ProblemTag};
use saa_core::prox::{OptimizerConfig, RegularizerSpec};
use saa_core::random::{CoefficientRanges, RandomModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Overrides of the per-tag defaults of [`ProblemSettings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub tag: ProblemTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subdomain: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<RegularizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<NewtonConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub ranges: CoefficientRanges,
    /// Coefficient regions; 1 for the 1D problem and 4 otherwise when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<usize>,
    /// Number of equally weighted atoms; continuous uniform model when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
    pub atom_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            ranges: CoefficientRanges::default(),
            regions: None,
            atoms: None,
            atom_seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Base seed of sample streams and random controls.
    pub seed: u64,
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Maximal ratio of the last to the first median value error.
    pub trend_ratio: f64,
    pub gradcheck_tol: f64,
    pub fd_step: f64,
    pub points: usize,
    pub directions: usize,
    pub cases: usize,
    pub margin_tol: f64,
    /// Radius of random controls in `bounds`; `R_ad` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_radius: Option<f64>,
    /// Target accuracy of `appendix`; `ε_max` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub appendix_n: usize,
    pub solve_n: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 0,
            n_list: vec![10, 100, 1000],
            seeds: (1..=20).collect(),
            trend_ratio: 1.0 / 3.0,
            gradcheck_tol: 1e-5,
            fd_step: 1e-5,
            points: 3,
            directions: 10,
            cases: 1000,
            margin_tol: 1e-9,
            control_radius: None,
            eps: None,
            appendix_n: 50,
            solve_n: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn new(tag: ProblemTag) -> Self {
        Self {
            problem: ProblemSection {
                tag,
                n: None,
                alpha: None,
                load_amplitude: None,
                subdomain: None,
                regularizer: None,
                rho: None,
                kappa_min: None,
                g_min: None,
                r_min: None,
                envelope_samples: None,
                newton: None,
            },
            model: ModelSection::default(),
            optimizer: OptimizerConfig::default(),
            experiment: ExperimentSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json { Self::from_json(&text) } else { Self::from_toml(&text) }?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn settings(&self) -> ProblemSettings {
        let p = &self.problem;
        let d = ProblemSettings::defaults(p.tag);
        ProblemSettings {
            tag: p.tag,
            n: p.n.unwrap_or(d.n),
            alpha: p.alpha.unwrap_or(d.alpha),
            load_amplitude: p.load_amplitude.unwrap_or(d.load_amplitude),
            subdomain: p.subdomain.unwrap_or(d.subdomain),
            regularizer: p.regularizer.unwrap_or(d.regularizer),
            rho: p.rho.unwrap_or(d.rho),
            kappa_min: p.kappa_min.or(d.kappa_min),
            g_min: p.g_min.or(d.g_min),
            r_min: p.r_min.or(d.r_min),
            envelope_samples: p.envelope_samples.unwrap_or(d.envelope_samples),
            newton: p.newton.unwrap_or(d.newton),
        }
    }

    pub fn random_model(&self) -> RandomModel {
        let m = &self.model;
        let regions = m
            .regions
            .unwrap_or(if self.problem.tag.dimension() == 1 { 1 } else { 4 });
        match m.atoms {
            Some(k) => RandomModel::finite_from_ranges(m.ranges, regions, k, m.atom_seed),
            None => RandomModel::continuous(m.ranges, regions),
        }
    }

    /// Checks every constraint that does not need an assembled problem.
    pub fn validate(&self) -> Result<(), CliError> {
        let core = |e: saa_core::Error| invalid(e.to_string());
        self.settings().validate().map_err(core)?;
        self.model.ranges.validate().map_err(core)?;
        if self.model.atoms == Some(0) || self.model.regions == Some(0) {
            return Err(invalid("model atoms and regions must be at least 1"));
        }
        self.optimizer.validate().map_err(core)?;
        let x = &self.experiment;
        if x.n_list.is_empty() || x.n_list.contains(&0) || !x.n_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("n_list must be a nonempty, strictly increasing list of positive sizes"));
        }
        if x.seeds.is_empty() {
            return Err(invalid("seeds must be nonempty"));
        }
        let positive = [
            ("trend_ratio", x.trend_ratio),
            ("gradcheck_tol", x.gradcheck_tol),
            ("fd_step", x.fd_step),
            ("margin_tol", x.margin_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if x.points == 0 || x.directions == 0 || x.cases == 0 || x.appendix_n == 0 || x.solve_n == 0 {
            return Err(invalid("points, directions, cases, appendix_n and solve_n must be at least 1"));
        }
        if let Some(r) = x.control_radius {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid("control_radius must be nonnegative"));
            }
        }
        if let Some(eps) = x.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(invalid("eps must be positive"));
            }
        }
        Ok(())
    }

    /// Applies a global `--seed`: base seed becomes `s`, the seed list `s+1, …, s+k`.
    pub fn override_seed(&mut self, s: u64) {
        let k = self.experiment.seeds.len() as u64;
        self.experiment.seed = s;
        self.experiment.seeds = (1..=k).map(|i| s.wrapping_add(i)).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[problem]
tag = "burgers"
alpha = 0.05
regularizer = { kind = "ball", radius = 1.5 }

[model]
atoms = 5

[experiment]
n_list = [4, 8]
seeds = [1, 2, 3]
eps = 0.5
"#;

    #[test]
    fn toml_round_trip_is_canonical() {
        let a = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let text = a.to_toml();
        let b = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(text, b.to_toml());
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), a);
    }

    #[test]
    fn defaults_follow_the_tag() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let s = c.settings();
        assert_eq!(s.n, 63);
        assert_eq!(s.alpha, 0.05);
        assert_eq!(s.regularizer, RegularizerSpec::Ball { radius: 1.5 });
        assert_eq!(c.random_model().regions, 1);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[problem]\ntag = \"burgers\"\nalhpa = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[problem]\ntag = \"burgers\"\n[extra]\nx = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[problem]\ntag = \"heat\"\n").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut c = ExperimentConfig::new(ProblemTag::Burgers);
        c.problem.alpha = Some(0.0);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new(ProblemTag::Burgers);
        c.experiment.n_list = vec![10, 10];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new(ProblemTag::Burgers);
        c.problem.regularizer = Some(RegularizerSpec::Ball { radius: -1.0 });
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_override_shifts_the_seed_list() {
        let mut c = ExperimentConfig::new(ProblemTag::Burgers);
        c.experiment.seeds = vec![4, 9];
        c.override_seed(100);
        assert_eq!(c.experiment.seed, 100);
        assert_eq!(c.experiment.seeds, vec![101, 102]);
    }
}
