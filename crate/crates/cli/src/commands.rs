use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use saa_core::problems::{ProblemInstance, ProblemTag};
use saa_core::random::SampleStream;
use saa_core::report::{self, fmt};
use saa_core::saa::{self, ExactProblem, SaaProblem};
use saa_core::{linalg, Error};
use serde::Serialize;
use serde_json::json;

use crate::{CliError, ExperimentConfig};

pub const GRADCHECK_HEADER: [&str; 4] = ["direction", "fd_value", "adjoint_value", "rel_error"];
pub const BOUNDS_HEADER: [&str; 5] = ["case", "sample", "u_norm", "margin", "value"];

// keeps control draws independent of the sample stream
const CONTROL_SALT: u64 = 0x6a09_e667_f3bc_c908;

pub struct Run {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

impl Run {
    pub fn new(cfg: ExperimentConfig, out: Option<PathBuf>) -> Self {
        let out = out.unwrap_or_else(|| cfg.output.dir.clone());
        Self { cfg, out }
    }

    fn instance(&self) -> Result<ProblemInstance, CliError> {
        Ok(ProblemInstance::new(self.cfg.settings(), self.cfg.random_model())?)
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn summary(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        serde_json::to_writer_pretty(self.file(name)?, value).map_err(|e| CliError::Solver(e.to_string()))
    }

    fn stream(&self, p: &ProblemInstance) -> SampleStream {
        SampleStream::new(p.model().clone(), self.cfg.experiment.seed)
    }

    fn control_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.experiment.seed ^ CONTROL_SALT)
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }
}

pub fn gradcheck(run: &Run) -> Result<(), CliError> {
    let p = run.instance()?;
    let x = &run.cfg.experiment;
    let stream = run.stream(&p);
    let mut rng = run.control_rng();
    let mut rows = Vec::new();
    for point in 0..x.points {
        let xi = stream.draw(point as u64 + 1);
        let sys = p.sample_system(&xi)?;
        let u = p.random_feasible_control(&mut rng, p.r_ad());
        let g = p.evaluate(&sys, &u, true)?.gradient;
        for _ in 0..x.directions {
            let e = p.random_direction(&mut rng);
            let at = |s: f64| -> Result<f64, Error> {
                let v: Vec<f64> = u.iter().zip(&e).map(|(a, b)| a + s * b).collect();
                Ok(p.evaluate(&sys, &v, false)?.j1)
            };
            let fd = (at(x.fd_step)? - at(-x.fd_step)?) / (2.0 * x.fd_step);
            let ad = p.control_space().inner(&g, &e);
            let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(f64::MIN_POSITIVE);
            rows.push((fd, ad, rel));
        }
    }
    let mut w = csv::Writer::from_writer(run.file("gradcheck.csv")?);
    w.write_record(GRADCHECK_HEADER)?;
    for (k, (fd, ad, rel)) in rows.iter().enumerate() {
        w.write_record([k.to_string(), fmt(*fd), fmt(*ad), fmt(*rel)])?;
    }
    w.flush()?;
    let worst = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let failures = rows.iter().filter(|r| !(r.2 <= x.gradcheck_tol)).count();
    run.summary(
        "gradcheck_summary.json",
        &json!({
            "problem": p.tag(),
            "cases": rows.len(),
            "max_rel_error": worst,
            "tolerance": x.gradcheck_tol,
            "failures": failures,
            "pass": failures == 0,
        }),
    )?;
    println!("gradcheck {}: {} cases, max rel error {worst:.3e}", p.tag(), rows.len());
    if failures > 0 {
        return Err(CliError::Assertion(format!(
            "{failures} of {} directions exceed tolerance {:e}",
            rows.len(),
            x.gradcheck_tol
        )));
    }
    Ok(())
}

pub fn bounds(run: &Run) -> Result<(), CliError> {
    let p = run.instance()?;
    let x = &run.cfg.experiment;
    let stream = run.stream(&p);
    let mut rng = run.control_rng();
    let radius = x.control_radius.unwrap_or_else(|| p.r_ad());
    let controls: Vec<Vec<f64>> = (0..x.cases).map(|_| p.random_feasible_control(&mut rng, radius)).collect();
    let cases: Vec<(usize, Vec<f64>)> = controls.into_iter().enumerate().collect();
    let margins = cases
        .par_iter()
        .map(|(i, u)| {
            let xi = stream.draw(*i as u64 + 1);
            let sys = p.sample_system(&xi).map_err(|e| Error::at_sample(i + 1, e))?;
            let ev = p.evaluate(&sys, u, true).map_err(|e| Error::at_sample(i + 1, e))?;
            Ok(p.stability_margins(&sys, u, &ev))
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let mut w = csv::Writer::from_writer(run.file("bounds.csv")?);
    w.write_record(BOUNDS_HEADER)?;
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut violations = Vec::new();
    for ((i, u), ms) in cases.iter().zip(&margins) {
        let u_norm = p.control_space().norm(u);
        for m in ms {
            w.write_record([i.to_string(), (i + 1).to_string(), fmt(u_norm), m.name.to_string(), fmt(m.value)])?;
            match worst.iter_mut().find(|(n, _)| *n == m.name) {
                Some(entry) => entry.1 = entry.1.min(m.value),
                None => worst.push((m.name, m.value)),
            }
            if m.value < -x.margin_tol {
                violations.push(json!({"case": i, "sample": i + 1, "margin": m.name, "value": m.value}));
            }
        }
    }
    w.flush()?;
    let min_margins: serde_json::Map<String, serde_json::Value> =
        worst.iter().map(|(n, v)| (n.to_string(), json!(v))).collect();
    run.summary(
        "bounds_summary.json",
        &json!({
            "problem": p.tag(),
            "cases": x.cases,
            "control_radius": radius,
            "stream_seed": x.seed,
            "min_margins": min_margins,
            "violations": violations,
            "pass": violations.is_empty(),
        }),
    )?;
    for (name, v) in &worst {
        println!("bounds {}: min {name} margin {v:.3e}", p.tag());
    }
    if !violations.is_empty() {
        for v in violations.iter().take(20) {
            eprintln!("violation: {v}");
        }
        return Err(CliError::Assertion(format!(
            "{} negative margins (stream seed {}, control seed {})",
            violations.len(),
            x.seed,
            x.seed ^ CONTROL_SALT
        )));
    }
    Ok(())
}

pub fn consistency(run: &Run) -> Result<(), CliError> {
    let p = run.instance()?;
    let x = &run.cfg.experiment;
    let e = ExactProblem::new(&p)?;
    let reference = e.solve_reference(&run.cfg.optimizer)?;
    let rep = saa::run_consistency(&e, &reference, &x.n_list, &x.seeds, &run.cfg.optimizer)?;
    report::write_consistency(run.file("consistency.csv")?, &rep.rows)?;
    let trends = rep.trends_pass(x.trend_ratio);
    run.summary(
        "consistency_summary.json",
        &json!({
            "problem": p.tag(),
            "reference_value": rep.reference_value,
            "reference_residual": reference.fixpoint_residual,
            "summary": rep.summary,
            "value_trend_decreasing": rep.value_trend_decreasing,
            "solution_trend_decreasing": rep.solution_trend_decreasing,
            "value_error_ratio": rep.value_error_ratio,
            "trend_ratio": x.trend_ratio,
            "pass": trends,
        }),
    )?;
    println!("consistency {}: reference value {:.10e}", p.tag(), rep.reference_value);
    for s in &rep.summary {
        println!(
            "  N = {:>6}: median value error {:.3e}, median solution error {:.3e}, failures {}",
            s.n, s.median_value_error, s.median_solution_error, s.failures
        );
    }
    match trends {
        None => {
            eprintln!("warning: a single sample size was given, trend check skipped");
            Ok(())
        }
        Some(true) => Ok(()),
        Some(false) => Err(CliError::Assertion(format!(
            "error medians not decreasing or ratio {:?} above {}",
            rep.value_error_ratio, x.trend_ratio
        ))),
    }
}

pub fn appendix(run: &Run) -> Result<(), CliError> {
    if run.cfg.problem.tag != ProblemTag::AppendixInfcompact {
        return Err(CliError::Config("appendix requires tag = \"appendix_infcompact\"".into()));
    }
    let p = run.instance()?;
    let x = &run.cfg.experiment;
    let eps_max = saa::appendix_eps_max(&p);
    let eps = x.eps.unwrap_or(eps_max);
    match saa::appendix_epsilon_check(&p, x.appendix_n, x.seed, eps) {
        Ok(r) => {
            run.summary("appendix_summary.json", &r)?;
            println!("appendix: C_D = {:.12e}, eps_max = {:.12e}", r.c_d, r.eps_max);
            println!("appendix: eps = {:.6e}, V_eps radius = {:.12e}", r.eps, r.radius);
            println!("appendix: max F_N over {} controls = {:.6e} (N = {})", r.samples, r.max_value, r.n);
            Ok(())
        }
        Err(Error::ViolationFound { control, value, eps }) => {
            report::write_snapshot(
                run.file("appendix_violation.csv")?,
                &[("u", p.control_space(), &control)],
            )?;
            Err(CliError::Assertion(format!(
                "F_N(u) = {value:e} > eps = {eps:e}; control written to appendix_violation.csv"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn solve(run: &Run) -> Result<(), CliError> {
    let p = run.instance()?;
    let x = &run.cfg.experiment;
    let stream = run.stream(&p);
    let s = SaaProblem::from_stream(&p, &stream, x.solve_n)?;
    let r = s.solve(&run.cfg.optimizer, x.seed)?;
    let sys = p.sample_system(&s.batch()[0])?;
    let ev = p.evaluate(&sys, &r.u_star, true)?;
    report::write_snapshot(
        run.file("solve_snapshot.csv")?,
        &[
            ("u", p.control_space(), &r.u_star),
            ("state", p.state_space(), &ev.state),
            ("adjoint", p.state_space(), &ev.adjoint),
        ],
    )?;
    report::write_trace(run.file("solve_trace.csv")?, &r.trace)?;
    run.summary(
        "solve_summary.json",
        &json!({
            "problem": p.tag(),
            "n": x.solve_n,
            "seed": x.seed,
            "value": r.value,
            "u_norm": p.control_space().norm(&r.u_star),
            "u_max_abs": linalg::max_abs(&r.u_star),
            "fixpoint_residual": r.fixpoint_residual,
            "iterations": r.iterations,
            "converged": r.converged,
        }),
    )?;
    println!(
        "solve {}: value {:.10e}, residual {:.3e}, {} iterations",
        p.tag(),
        r.value,
        r.fixpoint_residual,
        r.iterations
    );
    if !r.converged {
        return Err(CliError::Solver(format!("no convergence in {} iterations", r.iterations)));
    }
    Ok(())
}
