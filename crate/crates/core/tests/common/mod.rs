#![allow(dead_code)]

use saa_core::problems::{ProblemInstance, ProblemSettings, ProblemTag};
use saa_core::random::{CoefficientRanges, RandomModel, Sample};
use saa_core::Result;

pub fn regions(tag: ProblemTag) -> usize {
    if tag.dimension() == 1 {
        1
    } else {
        4
    }
}

/// Continuous model with default ranges, or `atoms` equally weighted atoms.
pub fn model(tag: ProblemTag, atoms: Option<usize>) -> RandomModel {
    let ranges = CoefficientRanges::default();
    match atoms {
        Some(k) => RandomModel::finite_from_ranges(ranges, regions(tag), k, 17),
        None => RandomModel::continuous(ranges, regions(tag)),
    }
}

pub fn instance(tag: ProblemTag, atoms: Option<usize>) -> ProblemInstance {
    ProblemInstance::new(ProblemSettings::defaults(tag), model(tag, atoms)).unwrap()
}

pub fn instance_with(settings: ProblemSettings, atoms: Option<usize>) -> ProblemInstance {
    let tag = settings.tag;
    ProblemInstance::new(settings, model(tag, atoms)).unwrap()
}

/// Central difference of `Ĵ₁(·, ξ)` along `e` against `⟨∇Ĵ₁, e⟩_U`.
pub fn directional_check(p: &ProblemInstance, xi: &Sample, u: &[f64], e: &[f64], t: f64) -> Result<(f64, f64, f64)> {
    let sys = p.sample_system(xi)?;
    let shifted = |s: f64| -> Vec<f64> { u.iter().zip(e).map(|(a, b)| a + s * b).collect() };
    let jp = p.evaluate(&sys, &shifted(t), false)?.j1;
    let jm = p.evaluate(&sys, &shifted(-t), false)?.j1;
    let fd = (jp - jm) / (2.0 * t);
    let g = p.evaluate(&sys, u, true)?.gradient;
    let ad = p.control_space().inner(&g, e);
    let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(f64::MIN_POSITIVE);
    Ok((fd, ad, rel))
}
