//! End-to-end acceptance suite: one line per criterion on stdout.
//!
//! Run with `cargo test -p saa-core --test acceptance -- --nocapture`.

mod common;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use saa_core::linalg;
use saa_core::mesh::{assemble_1d, friedrichs_constant, Grid1D, SpaceKind};
use saa_core::problems::ProblemTag;
use saa_core::prox::{OptimizerConfig, ProxOperator, RegularizerSpec};
use saa_core::random::SampleStream;
use saa_core::saa::{self, ExactProblem, SaaProblem};

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Writes to the process stdout so the lines survive test output capture.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, $($arg)*);
        let _ = out.flush();
    }};
}

fn report(o: &Outcome, start: Instant) {
    say!(
        "criterion {} [{}] {}: {} ({:.1}s)",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.detail,
        start.elapsed().as_secs_f64()
    );
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut failures = Vec::new();
    for tag in ProblemTag::ALL {
        let p = common::instance(tag, None);
        let stream = SampleStream::new(p.model().clone(), 101);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for point in 0..3u64 {
            let xi = stream.draw(point + 1);
            let u = p.random_feasible_control(&mut rng, p.r_ad());
            for _ in 0..10 {
                let e = p.random_direction(&mut rng);
                match common::directional_check(&p, &xi, &u, &e, 1e-5) {
                    Ok((_, _, rel)) => {
                        worst = worst.max(rel);
                        if rel.is_nan() || rel > 1e-5 {
                            failures.push(format!("{tag}: {rel:.2e}"));
                        }
                    }
                    Err(err) => failures.push(format!("{tag}: {err}")),
                }
                cases += 1;
            }
        }
    }
    Outcome {
        id: 1,
        name: "adjoint gradients vs central differences",
        pass: failures.is_empty(),
        detail: format!("{cases} cases, max rel error {worst:.2e}, failures {failures:?}"),
    }
}

/// Criteria 2 and 3 share one sweep.
fn stability_sweep() -> (Outcome, Outcome) {
    let mut worst_margin = f64::INFINITY;
    let mut worst_envelope = f64::INFINITY;
    let mut bad_margins = Vec::new();
    let mut envelope_violations = 0;
    for tag in ProblemTag::ALL {
        let p = common::instance(tag, None);
        let stream = SampleStream::new(p.model().clone(), 202);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 1..=1000u64 {
            let xi = stream.draw(i);
            let u = p.random_feasible_control(&mut rng, p.r_ad());
            let sys = p.sample_system(&xi).unwrap();
            let ev = p.evaluate(&sys, &u, true).unwrap();
            for m in p.stability_margins(&sys, &u, &ev) {
                if m.name == "envelope" {
                    worst_envelope = worst_envelope.min(m.value);
                    if m.value < 0.0 {
                        envelope_violations += 1;
                    }
                } else {
                    worst_margin = worst_margin.min(m.value);
                    if m.value < -1e-9 {
                        bad_margins.push(format!("{tag}/{}: {:.2e}", m.name, m.value));
                    }
                }
            }
        }
    }
    (
        Outcome {
            id: 2,
            name: "stability bounds on 1000 random (u, xi) per problem",
            pass: bad_margins.is_empty(),
            detail: format!("min margin {worst_margin:.3e}, violations {}", bad_margins.len()),
        },
        Outcome {
            id: 3,
            name: "envelope dominance ||M||_V <= zeta",
            pass: envelope_violations == 0,
            detail: format!("min zeta - ||M|| {worst_envelope:.3e}, violations {envelope_violations}"),
        },
    )
}

fn consistency() -> (Outcome, Vec<(f64, bool, bool)>) {
    let p = common::instance(ProblemTag::BoundarySemilinear, Some(5));
    let exact = ExactProblem::new(&p).unwrap();
    let cfg = OptimizerConfig::default();
    let reference = exact.solve_reference(&cfg).unwrap();
    let seeds: Vec<u64> = (1..=20).collect();
    let rep = saa::run_consistency(&exact, &reference, &[10, 100, 1000], &seeds, &cfg).unwrap();
    let mut solves = vec![(reference.fixpoint_residual, reference.converged, true)];
    solves.extend(rep.rows.iter().map(|r| (r.fixpoint_residual, r.converged, true)));
    let failures = rep.rows.iter().filter(|r| r.failure.is_some()).count();
    let medians: Vec<String> = rep
        .summary
        .iter()
        .map(|s| format!("N={}: {:.3e}/{:.3e}", s.n, s.median_value_error, s.median_solution_error))
        .collect();
    let pass = failures == 0 && rep.trends_pass(1.0 / 3.0) == Some(true);
    (
        Outcome {
            id: 4,
            name: "SAA consistency (medians of value / solution error)",
            pass,
            detail: format!(
                "{}, ratio {:.3}, failed rows {failures}",
                medians.join(", "),
                rep.value_error_ratio.unwrap_or(f64::NAN)
            ),
        },
        solves,
    )
}

fn fixed_point(mut solves: Vec<(f64, bool, bool)>) -> Outcome {
    let cfg = OptimizerConfig::default();
    for tag in [ProblemTag::Burgers, ProblemTag::DistributedMaxterm, ProblemTag::AppendixInfcompact] {
        let p = common::instance(tag, Some(5));
        let exact = ExactProblem::new(&p).unwrap();
        let r = exact.solve_reference(&cfg).unwrap();
        let feasible = p.regularizer().is_feasible(&r.u_star, p.control_space());
        solves.push((r.fixpoint_residual, r.converged, feasible));
        let stream = SampleStream::new(p.model().clone(), 3);
        let s = SaaProblem::from_stream(&p, &stream, 50).unwrap();
        let r = s.solve(&cfg, 3).unwrap();
        let feasible = p.regularizer().is_feasible(&r.u_star, p.control_space());
        solves.push((r.fixpoint_residual, r.converged, feasible));
    }
    let converged: Vec<_> = solves.iter().filter(|s| s.1).collect();
    let worst = converged.iter().map(|s| s.0).fold(0.0, f64::max);
    let pass = converged.len() == solves.len() && converged.iter().all(|s| s.0 <= 1e-8 && s.2);
    Outcome {
        id: 5,
        name: "fixed-point optimality of converged solves",
        pass,
        detail: format!(
            "{} of {} solves converged, max residual {worst:.2e}",
            converged.len(),
            solves.len()
        ),
    }
}

fn appendix() -> Outcome {
    let p = common::instance(ProblemTag::AppendixInfcompact, None);
    let c_d = p.friedrichs();
    let eps_max = saa::appendix_eps_max(&p);
    let formula_err = (eps_max - (c_d.powi(4) + 1.0)).abs();
    let check = saa::appendix_epsilon_check(&p, 50, 9, eps_max);
    let (radius_err, detail_tail, ok) = match &check {
        Ok(r) => (
            (r.radius - 2f64.sqrt()).abs(),
            format!("max F_N over V_eps {:.4} <= eps {:.4}", r.max_value, r.eps),
            true,
        ),
        Err(e) => (f64::NAN, e.to_string(), false),
    };
    Outcome {
        id: 6,
        name: "appendix epsilon-optimality",
        pass: ok && formula_err <= 1e-12 && radius_err <= 1e-12,
        detail: format!(
            "C_D {c_d:.6}, eps_max {eps_max:.8}, |eps_max - (C_D^4+1)| {formula_err:.1e}, |r - sqrt2| {radius_err:.1e}, {detail_tail}"
        ),
    }
}

fn exactness_anchors() -> Outcome {
    let mut issues = Vec::new();
    for tag in ProblemTag::ALL {
        let p = common::instance(tag, Some(1));
        let exact = ExactProblem::new(&p).unwrap();
        let stream = SampleStream::new(p.model().clone(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for k in 0..20 {
            let s = SaaProblem::from_stream(&p, &stream, 1 + 7 * k).unwrap();
            let u = p.random_feasible_control(&mut rng, p.r_ad());
            let a = s.value_and_grad(&u).unwrap();
            let b = exact.value_and_grad(&u).unwrap();
            if a != b {
                issues.push(format!("{tag}: SAA differs from exact"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut pairs = 0;
    let mut worst_ratio = 0.0f64;
    for tag in ProblemTag::ALL {
        let p = common::instance(tag, Some(1));
        let space = p.control_space().clone();
        let bound = 3.0;
        for spec in [
            RegularizerSpec::Zero,
            RegularizerSpec::Ball { radius: 1.0 },
            RegularizerSpec::Box { lo: -0.5, hi: 0.75 },
        ] {
            let op = ProxOperator::new(spec, space.clone());
            for _ in 0..250 {
                let v = linalg::scale(&p.random_direction(&mut rng), bound * rand::Rng::random::<f64>(&mut rng));
                let w = linalg::scale(&p.random_direction(&mut rng), bound * rand::Rng::random::<f64>(&mut rng));
                let (pv, pw) = (op.apply(1.0, &v), op.apply(1.0, &w));
                let d_in = space.norm(&linalg::sub(&v, &w));
                let d_out = space.norm(&linalg::sub(&pv, &pw));
                worst_ratio = worst_ratio.max(d_out / d_in);
                if d_out > d_in * (1.0 + 1e-12) {
                    issues.push(format!("{tag}/{spec:?}: expansive pair"));
                }
                if spec != RegularizerSpec::Zero && op.apply(1.0, &pv) != pv {
                    issues.push(format!("{tag}/{spec:?}: not idempotent"));
                }
                pairs += 1;
            }
        }
    }
    Outcome {
        id: 7,
        name: "exactness anchors and prox sweeps",
        pass: issues.is_empty(),
        detail: format!("80 SAA/exact comparisons, {pairs} prox pairs, max contraction ratio {worst_ratio:.6}, issues {issues:?}"),
    }
}

fn friedrichs() -> Outcome {
    let values: Vec<f64> = [15, 63, 255, 511]
        .iter()
        .map(|&n| friedrichs_constant(&assemble_1d(Grid1D::new(n).unwrap(), SpaceKind::H01).unwrap()).unwrap())
        .collect();
    let err = (values[3] - std::f64::consts::FRAC_1_PI).abs();
    let monotone = values.windows(2).all(|w| w[1] > w[0]);
    Outcome {
        id: 8,
        name: "Friedrichs constant",
        pass: err <= 1e-3 && monotone,
        detail: format!("C_D {values:?}, |C_D(511) - 1/pi| {err:.2e}"),
    }
}

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();
    let start = Instant::now();
    let run = |o: Outcome, outcomes: &mut Vec<Outcome>| {
        report(&o, start);
        outcomes.push(o);
    };
    run(gradient_check(), &mut outcomes);
    let (c2, c3) = stability_sweep();
    run(c2, &mut outcomes);
    run(c3, &mut outcomes);
    let (c4, solves) = consistency();
    run(c4, &mut outcomes);
    run(fixed_point(solves), &mut outcomes);
    run(appendix(), &mut outcomes);
    run(exactness_anchors(), &mut outcomes);
    run(friedrichs(), &mut outcomes);

    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    say!(
        "acceptance: {} of {} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
