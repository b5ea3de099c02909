//! Random inputs: the model of ξ, replayable i.i.d. sample streams and
//! exact expectations over finite supports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Closed interval `[lo, hi]` a coefficient is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn lerp(&self, t: f64) -> f64 {
        (self.lo + t * (self.hi - self.lo)).clamp(self.lo, self.hi)
    }
}

/// Box bounds of every random coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientRanges {
    pub kappa: Range,
    pub g: Range,
    pub sigma: Range,
    pub r: Range,
    pub load_scale: Range,
}

impl Default for CoefficientRanges {
    fn default() -> Self {
        Self {
            kappa: Range::new(1.0, 2.0),
            g: Range::new(0.5, 1.5),
            sigma: Range::new(0.0, 1.0),
            r: Range::new(1.0, 2.0),
            load_scale: Range::new(0.5, 1.5),
        }
    }
}

impl CoefficientRanges {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, r: Range, strictly_positive: bool| {
            if !(r.lo <= r.hi) || !r.lo.is_finite() || !r.hi.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} range [{}, {}] is empty", r.lo, r.hi)));
            }
            if strictly_positive && !(r.lo > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} lower bound must be positive")));
            }
            if !strictly_positive && r.lo < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} lower bound must be nonnegative")));
            }
            Ok(())
        };
        check("kappa", self.kappa, true)?;
        check("g", self.g, true)?;
        check("sigma", self.sigma, false)?;
        check("r", self.r, true)?;
        check("load_scale", self.load_scale, false)
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrigin {
    Atom(usize),
    Stream { seed: u64, position: u64 },
}

/// One realization ξ of the random inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    /// Diffusion coefficient per region.
    pub kappa: Vec<f64>,
    pub g: f64,
    pub sigma: f64,
    pub r: f64,
    /// Load `b = load_scale · b₀`.
    pub load_scale: f64,
    pub origin: SampleOrigin,
}

impl Sample {
    pub fn satisfies(&self, ranges: &CoefficientRanges) -> bool {
        self.kappa.iter().all(|&k| ranges.kappa.contains(k))
            && ranges.g.contains(self.g)
            && ranges.sigma.contains(self.sigma)
            && ranges.r.contains(self.r)
            && ranges.load_scale.contains(self.load_scale)
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    FiniteAtoms { weights: Vec<f64>, atoms: Vec<Sample> },
    Continuous,
}

/// Distribution of ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomModel {
    pub ranges: CoefficientRanges,
    pub regions: usize,
    pub support: Support,
}

// field tags for counter-based generation
const TAG_ATOM: u128 = 1;
const TAG_KAPPA: u128 = 2;
const TAG_G: u128 = 3;
const TAG_SIGMA: u128 = 4;
const TAG_R: u128 = 5;
const TAG_LOAD: u128 = 6;

fn keyed_rng(seed: u64, index: u64, tag: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.set_word_pos(tag << 32);
    rng
}

fn draw_from_ranges(ranges: &CoefficientRanges, regions: usize, seed: u64, index: u64, origin: SampleOrigin) -> Sample {
    let mut k = keyed_rng(seed, index, TAG_KAPPA);
    let kappa = (0..regions).map(|_| ranges.kappa.lerp(k.random())).collect();
    Sample {
        kappa,
        g: ranges.g.lerp(keyed_rng(seed, index, TAG_G).random()),
        sigma: ranges.sigma.lerp(keyed_rng(seed, index, TAG_SIGMA).random()),
        r: ranges.r.lerp(keyed_rng(seed, index, TAG_R).random()),
        load_scale: ranges.load_scale.lerp(keyed_rng(seed, index, TAG_LOAD).random()),
        origin,
    }
}

impl RandomModel {
    /// Finite support of `count` atoms drawn uniformly from `ranges`, equal weights.
    pub fn finite_from_ranges(ranges: CoefficientRanges, regions: usize, count: usize, atom_seed: u64) -> Self {
        let atoms = (0..count)
            .map(|k| draw_from_ranges(&ranges, regions, atom_seed, k as u64, SampleOrigin::Atom(k)))
            .collect();
        Self {
            ranges,
            regions,
            support: Support::FiniteAtoms {
                weights: vec![1.0 / count as f64; count],
                atoms,
            },
        }
    }

    pub fn single_atom(atom: Sample, ranges: CoefficientRanges) -> Self {
        let regions = atom.kappa.len();
        let atom = Sample {
            origin: SampleOrigin::Atom(0),
            ..atom
        };
        Self {
            ranges,
            regions,
            support: Support::FiniteAtoms {
                weights: vec![1.0],
                atoms: vec![atom],
            },
        }
    }

    pub fn continuous(ranges: CoefficientRanges, regions: usize) -> Self {
        Self {
            ranges,
            regions,
            support: Support::Continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if self.regions == 0 {
            return Err(Error::InvalidConfig("random model needs at least one region".into()));
        }
        if let Support::FiniteAtoms { weights, atoms } = &self.support {
            if weights.is_empty() || weights.len() != atoms.len() {
                return Err(Error::InvalidConfig("atom table and weights differ in length".into()));
            }
            if weights.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::InvalidConfig("atom weights must be nonnegative".into()));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-15 * weights.len() as f64 {
                return Err(Error::InvalidConfig(format!("atom weights sum to {total}, not 1")));
            }
            for (k, a) in atoms.iter().enumerate() {
                if a.kappa.len() != self.regions || !a.satisfies(&self.ranges) {
                    return Err(Error::InvalidConfig(format!("atom {k} violates the model bounds")));
                }
            }
        }
        Ok(())
    }

    pub fn atoms(&self) -> Option<(&[f64], &[Sample])> {
        match &self.support {
            Support::FiniteAtoms { weights, atoms } => Some((weights, atoms)),
            Support::Continuous => None,
        }
    }

    /// Σₖ wₖ f(atomₖ).
    pub fn exact_expectation(&self, f: impl Fn(&Sample) -> f64) -> Result<f64> {
        let (weights, atoms) = self.atoms().ok_or(Error::UnsupportedContinuousModel)?;
        Ok(weights.iter().zip(atoms).map(|(w, a)| w * f(a)).sum())
    }

    /// Fallible variant of [`Self::exact_expectation`].
    pub fn try_exact_expectation(&self, f: impl Fn(&Sample) -> Result<f64>) -> Result<f64> {
        let (weights, atoms) = self.atoms().ok_or(Error::UnsupportedContinuousModel)?;
        let mut acc = 0.0;
        for (k, (w, a)) in weights.iter().zip(atoms).enumerate() {
            acc += w * f(a).map_err(|e| Error::at_sample(k, e))?;
        }
        Ok(acc)
    }
}

/// Replayable i.i.d. stream ξ¹, ξ², … of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    model: RandomModel,
    seed: u64,
}

impl SampleStream {
    pub fn new(model: RandomModel, seed: u64) -> Self {
        Self { model, seed }
    }

    pub fn model(&self) -> &RandomModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The `i`-th sample (`i ≥ 1`); a pure function of `(seed, i)`.
    pub fn draw(&self, i: u64) -> Sample {
        assert!(i >= 1, "sample indices start at 1");
        let sample = match &self.model.support {
            Support::FiniteAtoms { weights, atoms } => {
                let u: f64 = keyed_rng(self.seed, i, TAG_ATOM).random();
                let mut acc = 0.0;
                let mut pick = atoms.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                atoms[pick].clone()
            }
            Support::Continuous => draw_from_ranges(
                &self.model.ranges,
                self.model.regions,
                self.seed,
                i,
                SampleOrigin::Stream {
                    seed: self.seed,
                    position: i,
                },
            ),
        };
        debug_assert!(sample.satisfies(&self.model.ranges));
        sample
    }

    /// ξ¹, …, ξᴺ.
    pub fn batch(&self, n: usize) -> Vec<Sample> {
        (1..=n as u64).map(|i| self.draw(i)).collect()
    }

    /// `(1/N) Σ f(ξⁱ)`, evaluated concurrently and summed in index order.
    pub fn sample_mean(&self, n: usize, f: impl Fn(&Sample) -> f64 + Sync + Send) -> f64 {
        assert!(n >= 1);
        let values = par::map_indexed(n, |i| f(&self.draw(i as u64 + 1)));
        values.iter().sum::<f64>() / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atoms() -> RandomModel {
        let mut m = RandomModel::finite_from_ranges(CoefficientRanges::default(), 1, 2, 3);
        if let Support::FiniteAtoms { weights, .. } = &mut m.support {
            *weights = vec![0.5, 0.5];
        }
        m
    }

    #[test]
    fn single_atom_always_drawn() {
        let atom = RandomModel::finite_from_ranges(CoefficientRanges::default(), 4, 1, 9);
        let s = SampleStream::new(atom.clone(), 11);
        let (_, atoms) = atom.atoms().unwrap();
        for i in 1..50 {
            assert_eq!(s.draw(i), atoms[0]);
        }
    }

    #[test]
    fn draws_are_replayable() {
        let m = RandomModel::continuous(CoefficientRanges::default(), 4);
        let a = SampleStream::new(m.clone(), 7);
        let b = SampleStream::new(m, 7);
        assert_eq!(a.draw(3), a.draw(3));
        assert_eq!(a.batch(40), b.batch(40));
        assert_ne!(a.draw(3), a.draw(4));
    }

    #[test]
    fn equal_weights_frequency() {
        let s = SampleStream::new(two_atoms(), 2024);
        let hits = (1..=100_000u64)
            .filter(|&i| s.draw(i).origin == SampleOrigin::Atom(0))
            .count();
        let freq = hits as f64 / 1e5;
        assert!((0.49..=0.51).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn exact_expectation_cases() {
        let one = RandomModel::finite_from_ranges(CoefficientRanges::default(), 1, 1, 0);
        assert_eq!(one.exact_expectation(|s| s.g * 3.0).unwrap(), one.atoms().unwrap().1[0].g * 3.0);

        let two = two_atoms();
        let v = two
            .exact_expectation(|s| match s.origin {
                SampleOrigin::Atom(0) => 2.0,
                _ => 4.0,
            })
            .unwrap();
        assert_eq!(v, 3.0);

        let cont = RandomModel::continuous(CoefficientRanges::default(), 1);
        assert!(matches!(
            cont.exact_expectation(|_| 1.0),
            Err(Error::UnsupportedContinuousModel)
        ));
    }

    #[test]
    fn sample_mean_basics() {
        let s = SampleStream::new(RandomModel::continuous(CoefficientRanges::default(), 4), 5);
        assert_eq!(s.sample_mean(1, |x| x.g), s.draw(1).g);
        for n in [1, 2, 17] {
            assert_eq!(s.sample_mean(n, |_| 0.75), 0.75);
        }
        // concurrent evaluation matches a sequential fold bitwise
        let seq: f64 = (1..=300).map(|i| s.draw(i).sigma).sum::<f64>() / 300.0;
        assert_eq!(s.sample_mean(300, |x| x.sigma), seq);
    }

    #[test]
    fn samples_respect_bounds() {
        let ranges = CoefficientRanges::default();
        let s = SampleStream::new(RandomModel::continuous(ranges, 4), 1);
        assert!(s.batch(2000).iter().all(|x| x.satisfies(&ranges)));
        let f = RandomModel::finite_from_ranges(ranges, 4, 5, 77);
        f.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_weights() {
        let mut m = two_atoms();
        if let Support::FiniteAtoms { weights, .. } = &mut m.support {
            weights[0] = 0.6;
        }
        assert!(m.validate().is_err());
        let mut r = CoefficientRanges::default();
        r.kappa.lo = 0.0;
        assert!(r.validate().is_err());
    }
}
