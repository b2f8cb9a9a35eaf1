//! `gen` and `run`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use phase_kalman::{aligned_error_on, c64, reconstruct, Alignment, AmplitudeVector, Reconstruction};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::{CliError, Result};
use crate::output::{csv_bytes, ensure_dir, fmt_f64, write_atomic};
use crate::scenario::{builtin, Problem, ScenarioSpec, BUILTINS};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const INTENSITIES_FILE: &str = "intensities.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SITES_FILE: &str = "sites.csv";
pub const TRACE_FILE: &str = "trace.csv";

/// Tail fraction used for the ℓ1 plateau variation.
pub const TAIL_FRACTION: f64 = 0.1;

/// A scenario together with the exact text it was read from.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub spec: ScenarioSpec,
    pub text: String,
}

/// Loads a scenario file, or a builtin when `source` names one and no such
/// file exists.
pub fn load_scenario(source: &str) -> Result<LoadedScenario> {
    let path = Path::new(source);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let spec = ScenarioSpec::from_json(&text)?;
        return Ok(LoadedScenario { spec, text });
    }
    if BUILTINS.contains(&source) {
        let spec = builtin(source)?;
        let text = spec.to_json();
        return Ok(LoadedScenario { spec, text });
    }
    if path.extension().is_some() || source.contains(std::path::MAIN_SEPARATOR) {
        return Err(CliError::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    Err(CliError::UnknownScenario(source.into()))
}

/// Writes `scenario.json` and the noiseless `intensities.csv` into `out`.
pub fn cmd_gen(source: &str, out: &Path, seed: Option<u64>) -> Result<PathBuf> {
    let mut loaded = load_scenario(source)?;
    if seed.is_some() {
        loaded.spec.seed = seed;
        loaded.spec.validate()?;
        loaded.text = loaded.spec.to_json();
    }
    let problem = loaded.spec.materialize()?;
    ensure_dir(out)?;
    let scenario_path = out.join(SCENARIO_FILE);
    let mut text = loaded.text;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    write_atomic(&scenario_path, text.as_bytes())?;
    let csv_path = out.join(INTENSITIES_FILE);
    let rows = problem
        .measured
        .iter()
        .enumerate()
        .map(|(r, v)| vec![r.to_string(), fmt_f64(*v)]);
    write_atomic(&csv_path, &csv_bytes(&csv_path, &["index", "intensity"], rows)?)?;
    Ok(scenario_path)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteReport {
    pub site_index: usize,
    pub q1: usize,
    pub q2: usize,
    pub true_modulus: f64,
    pub true_phase: f64,
    pub est_modulus: f64,
    pub est_phase: f64,
    /// Estimated modulus above the vanishing threshold.
    pub on_support: bool,
}

/// Accuracy of an estimate after alignment to the truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub aligned_error: f64,
    /// `aligned_error / ‖truth‖₂`.
    pub relative_error: f64,
    pub alignment: Alignment,
    /// Largest `| |x̂_j| − |x_j| |` over the true scatterers.
    pub max_modulus_deviation: f64,
    /// Largest wrapped phase difference over the true scatterers.
    pub max_phase_deviation: f64,
    /// Largest estimated modulus off the true support (scatterers and
    /// parasitics).
    pub max_off_support_modulus: f64,
    pub vanishing_threshold: f64,
    pub sites: Vec<SiteReport>,
}

fn wrap_phase(d: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = d.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

fn arg(z: c64) -> f64 {
    if z.norm() == 0.0 {
        0.0
    } else {
        z.im.atan2(z.re)
    }
}

pub fn evaluate(problem: &Problem, estimate: &AmplitudeVector, vanishing_threshold: f64) -> Result<Evaluation> {
    let (aligned_error, alignment) =
        aligned_error_on(estimate, &problem.truth, problem.shape).map_err(CliError::Reconstruction)?;
    let aligned = alignment.undo(estimate.as_slice(), problem.shape);
    let truth = problem.truth.as_slice();

    let mut max_modulus_deviation = 0.0f64;
    let mut max_phase_deviation = 0.0f64;
    for &i in &problem.scatterers {
        max_modulus_deviation = max_modulus_deviation.max((aligned[i].norm() - truth[i].norm()).abs());
        max_phase_deviation = max_phase_deviation.max(wrap_phase(arg(aligned[i]) - arg(truth[i])).abs());
    }
    let max_off_support_modulus = (0..truth.len())
        .filter(|&i| truth[i].norm() == 0.0)
        .fold(0.0f64, |a, i| a.max(aligned[i].norm()));

    let sites = (0..truth.len())
        .map(|i| {
            let (q1, q2) = problem.shape.split_index(i);
            SiteReport {
                site_index: i,
                q1,
                q2,
                true_modulus: truth[i].norm(),
                true_phase: arg(truth[i]),
                est_modulus: aligned[i].norm(),
                est_phase: arg(aligned[i]),
                on_support: aligned[i].norm() > vanishing_threshold,
            }
        })
        .collect();
    Ok(Evaluation {
        aligned_error,
        relative_error: aligned_error / problem.truth.l2_norm(),
        alignment,
        max_modulus_deviation,
        max_phase_deviation,
        max_off_support_modulus,
        vanishing_threshold,
        sites,
    })
}

#[derive(Debug, Serialize)]
pub struct TraceReport<'a> {
    pub l1_true: &'a [f64],
    pub l1_linearized: &'a [f64],
    pub max_intensity_residual: &'a [f64],
    pub gamma: &'a [f64],
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub scenario: &'a str,
    pub n1: usize,
    pub n2: usize,
    /// The scenario text as read.
    pub config: &'a RawValue,
    pub overrides: Overrides,
    pub max_iter: usize,
    pub iterations_run: usize,
    pub plateau_at: Option<usize>,
    pub tail_l1_variation: Option<f64>,
    pub final_l1: f64,
    #[serde(flatten)]
    pub evaluation: &'a Evaluation,
    /// Estimate in the solver's frame as `[re, im]` pairs.
    pub estimate: Vec<[f64; 2]>,
    pub trace: TraceReport<'a>,
    pub wall_clock_seconds: f64,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: ScenarioSpec,
    pub problem: Problem,
    pub reconstruction: Reconstruction,
    pub evaluation: Evaluation,
    pub seconds: f64,
}

/// Applies the overrides, materializes the scenario and reconstructs.
pub fn execute(spec: &ScenarioSpec, overrides: Overrides) -> Result<RunOutcome> {
    let mut spec = spec.clone();
    if let Some(m) = overrides.max_iter {
        spec.filter.max_iter = m;
    }
    if overrides.seed.is_some() {
        spec.seed = overrides.seed;
    }
    let problem = spec.materialize()?;
    let start = Instant::now();
    let reconstruction = reconstruct(&problem.measured, &problem.x0, &problem.sensors, &spec.filter)
        .map_err(CliError::Reconstruction)?;
    let seconds = start.elapsed().as_secs_f64();
    let evaluation = evaluate(&problem, &reconstruction.estimate, spec.filter.vanishing_threshold())?;
    Ok(RunOutcome {
        spec,
        problem,
        reconstruction,
        evaluation,
        seconds,
    })
}

/// Runs a scenario and writes `report.json`, `sites.csv` and `trace.csv`.
pub fn cmd_run(source: &str, out: &Path, overrides: Overrides) -> Result<RunOutcome> {
    let loaded = load_scenario(source)?;
    let outcome = execute(&loaded.spec, overrides)?;
    ensure_dir(out)?;

    let config = RawValue::from_string(loaded.text.trim().to_owned())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let trace = &outcome.reconstruction.trace;
    let estimate = &outcome.reconstruction.estimate;
    let report = RunReport {
        scenario: &outcome.spec.name,
        n1: outcome.problem.shape.n1,
        n2: outcome.problem.shape.n2,
        config: &config,
        overrides,
        max_iter: outcome.spec.filter.max_iter,
        iterations_run: trace.iterations_run,
        plateau_at: trace.plateau_at,
        tail_l1_variation: trace.tail_l1_variation(TAIL_FRACTION),
        final_l1: estimate.l1_norm(),
        evaluation: &outcome.evaluation,
        estimate: estimate.as_slice().iter().map(|z| [z.re, z.im]).collect(),
        trace: TraceReport {
            l1_true: &trace.l1_true,
            l1_linearized: &trace.l1_linearized,
            max_intensity_residual: &trace.intensity_residual_max,
            gamma: &trace.gamma,
        },
        wall_clock_seconds: outcome.seconds,
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    json.push('\n');
    write_atomic(&out.join(REPORT_FILE), json.as_bytes())?;

    let sites_path = out.join(SITES_FILE);
    let rows = outcome.evaluation.sites.iter().map(|s| {
        vec![
            s.site_index.to_string(),
            fmt_f64(s.true_modulus),
            fmt_f64(s.true_phase),
            fmt_f64(s.est_modulus),
            fmt_f64(s.est_phase),
            s.on_support.to_string(),
        ]
    });
    let header = ["site_index", "true_modulus", "true_phase", "est_modulus", "est_phase", "on_support"];
    write_atomic(&sites_path, &csv_bytes(&sites_path, &header, rows)?)?;

    let trace_path = out.join(TRACE_FILE);
    let rows = (0..trace.iterations_run).map(|k| {
        vec![
            (k + 1).to_string(),
            fmt_f64(trace.l1_true[k]),
            fmt_f64(trace.l1_linearized[k]),
            fmt_f64(trace.intensity_residual_max[k]),
            fmt_f64(trace.gamma[k]),
        ]
    });
    let header = ["iter", "l1_true", "l1_linearized", "max_intensity_residual", "gamma"];
    write_atomic(&trace_path, &csv_bytes(&trace_path, &header, rows)?)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_wrapping() {
        assert!((wrap_phase(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_phase(-0.1) + 0.1).abs() < 1e-15);
        assert_eq!(wrap_phase(0.0), 0.0);
    }

    #[test]
    fn evaluation_of_the_truth_is_exact() {
        let spec = builtin("paper-1d").unwrap();
        let p = spec.materialize().unwrap();
        let ev = evaluate(&p, &p.truth, 1e-3).unwrap();
        assert!(ev.aligned_error < 1e-12);
        assert!(ev.max_modulus_deviation < 1e-12);
        assert!(ev.max_phase_deviation < 1e-12);
        assert_eq!(ev.max_off_support_modulus, 0.0);
        assert_eq!(ev.sites.iter().filter(|s| s.on_support).count(), 8);
    }
}
