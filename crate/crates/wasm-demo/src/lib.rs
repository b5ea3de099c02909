//! Browser bindings: Burgers profiles, Friedrichs constants, the ε-optimal ball.

use saa_core::mesh::{assemble_1d, friedrichs_constant, Grid1D, SpaceKind};
use saa_core::problems::{ProblemInstance, ProblemSettings, ProblemTag};
use saa_core::random::{CoefficientRanges, RandomModel, Sample, SampleOrigin};
use saa_core::saa;
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Burgers control problem for one fixed sample.
///
/// Returns `[x, state, adjoint, gradient]` concatenated over the `n + 2` nodes,
/// followed by `J₁`.
#[wasm_bindgen]
pub fn burgers_profiles(n: usize, kappa: f64, load_scale: f64, control: f64) -> Result<Vec<f64>, JsError> {
    let settings = ProblemSettings {
        n,
        ..ProblemSettings::defaults(ProblemTag::Burgers)
    };
    let ranges = CoefficientRanges::default();
    let atom = Sample {
        kappa: vec![kappa],
        g: 1.0,
        sigma: 0.0,
        r: 1.0,
        load_scale,
        origin: SampleOrigin::Atom(0),
    };
    let p = ProblemInstance::new(settings, RandomModel::single_atom(atom.clone(), ranges)).map_err(js)?;
    let u = vec![control; p.control_space().dim()];
    let sys = p.sample_system(&atom).map_err(js)?;
    let ev = p.evaluate(&sys, &u, true).map_err(js)?;
    let state = p.state_space().extend_to_nodes(&ev.state);
    let adjoint = p.state_space().extend_to_nodes(&ev.adjoint);
    let gradient = p.control_space().extend_to_nodes(&ev.gradient);
    let geometry = p.state_space().geometry();
    let x: Vec<f64> = (0..geometry.n_nodes()).map(|k| geometry.node_coords(k)[0]).collect();
    let mut out = x;
    out.extend(state);
    out.extend(adjoint);
    out.extend(gradient);
    out.push(ev.j1);
    Ok(out)
}

/// Discrete Friedrichs constants of `H₀¹(0, 1)` for each interior node count.
#[wasm_bindgen]
pub fn friedrichs_sequence(sizes: Vec<u32>) -> Result<Vec<f64>, JsError> {
    sizes
        .iter()
        .map(|&n| {
            let space = assemble_1d(Grid1D::new(n as usize).map_err(js)?, SpaceKind::H01).map_err(js)?;
            friedrichs_constant(&space).map_err(js)
        })
        .collect()
}

/// ε-ball check of the noncompact example on a `cells × cells` mesh.
///
/// Returns `[C_D, ε_max, ε, radius, max F̂_N, F̂_N(0)]`; `eps_fraction` scales `ε_max`.
#[wasm_bindgen]
pub fn appendix_ball(cells: usize, samples: usize, seed: u32, eps_fraction: f64) -> Result<Vec<f64>, JsError> {
    let settings = ProblemSettings {
        n: cells,
        kappa_min: Some(1.0),
        ..ProblemSettings::defaults(ProblemTag::AppendixInfcompact)
    };
    let model = RandomModel::continuous(CoefficientRanges::default(), 4);
    let p = ProblemInstance::new(settings, model).map_err(js)?;
    let eps = eps_fraction * saa::appendix_eps_max(&p);
    let r = saa::appendix_epsilon_check(&p, samples, seed as u64, eps).map_err(js)?;
    Ok(vec![r.c_d, r.eps_max, r.eps, r.radius, r.max_value, r.value_at_zero])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_have_four_node_fields() {
        let v = burgers_profiles(15, 1.5, 1.0, 0.5).unwrap();
        assert_eq!(v.len(), 4 * 17 + 1);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[16], 1.0);
        assert!(v[4 * 17] >= 0.0);
    }

    #[test]
    fn friedrichs_increases() {
        let c = friedrichs_sequence(vec![15, 63]).unwrap();
        assert!(c[0] < c[1] && c[1] < std::f64::consts::FRAC_1_PI);
    }

    #[test]
    fn appendix_ball_radius() {
        let r = appendix_ball(6, 5, 1, 1.0).unwrap();
        assert!((r[3] - 2f64.sqrt()).abs() < 1e-12);
        assert!(r[4] <= r[2]);
    }
}
