//! The single-shot experiments behind the `simulate`, `barriers`, `fbp` and
//! `validate` subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use nbbm_core::barrier::{compute_barriers, separating_element};
use nbbm_core::fbp::{check_squeeze, solve_fbp, validate_against, validate_probabilistic, FreeBoundarySolution};
use nbbm_core::measure::write_trajectories_csv;
use nbbm_core::particle::{simulate_lower_barrier, simulate_true, simulate_upper_barrier};
use nbbm_core::rng::replicas;
use nbbm_core::ParticleConfiguration;
use serde::Serialize;

use crate::export::OutDir;
use crate::model::Model;
use crate::spec::ExperimentSpec;

/// Stamps `k δ`, `k = 0..2^depth`.
pub fn stamps(spec: &ExperimentSpec) -> Vec<f64> {
    let d = spec.run.delta();
    (0..=spec.run.steps()).map(|k| k as f64 * d).collect()
}

/// Seed of replica stream `family`; distinct families never share streams.
pub fn family_seed(seed: u64, family: u64) -> u64 {
    seed ^ family.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub replicas: usize,
    /// Mean leftmost position per stamp, for the true process.
    pub mean_front: Vec<f64>,
}

/// True process and both stochastic barriers from `N` i.i.d. draws of `ρ0`.
pub fn simulate(spec: &ExperimentSpec, out: &Path) -> Result<(PathBuf, SimulateSummary)> {
    let model = Model::new(spec)?;
    let n = spec.run.n_particles;
    let times = stamps(spec);
    let (delta, steps, horizon) = (spec.run.delta(), spec.run.steps(), spec.run.horizon);
    let r = spec.run.replicas;
    let start = |rng: &mut nbbm_core::SimRng| ParticleConfiguration::new(model.rho0.sample_n(n, rng));

    let truth = replicas(family_seed(spec.run.seed, 1), r, |_, rng| {
        simulate_true(&start(rng), horizon, &times, &model.kernel, rng)
    })
    .into_iter()
    .collect::<nbbm_core::Result<Vec<_>>>()?;
    let upper = replicas(family_seed(spec.run.seed, 2), r, |_, rng| {
        simulate_upper_barrier(&start(rng), delta, steps, &model.kernel, rng).map(|b| b.trajectory)
    })
    .into_iter()
    .collect::<nbbm_core::Result<Vec<_>>>()?;
    let lower = replicas(family_seed(spec.run.seed, 3), r, |_, rng| {
        simulate_lower_barrier(&start(rng), delta, steps, spec.run.alpha0, &model.kernel, rng).map(|b| b.trajectory)
    })
    .into_iter()
    .collect::<nbbm_core::Result<Vec<_>>>()?;

    let mut dir = OutDir::create(out, spec)?;
    for (name, runs) in [("true.csv", &truth), ("upper.csv", &upper), ("lower.csv", &lower)] {
        dir.with_writer(name, |w, h| Ok(write_trajectories_csv(w, h, runs)?))?;
    }
    let mean_front: Vec<f64> = (0..times.len())
        .map(|k| {
            truth
                .iter()
                .map(|tr| tr.frames()[k].positions().iter().cloned().fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / r as f64
        })
        .collect();
    dir.report(
        &times
            .iter()
            .zip(&mean_front)
            .map(|(t, f)| (format!("mean_front[t={t}]"), format!("{f:.6}")))
            .collect::<Vec<_>>(),
    )?;
    let summary = SimulateSummary { replicas: r, mean_front };
    Ok((dir.finish(spec, &summary)?, summary))
}

#[derive(Debug, Serialize)]
pub struct BarrierSummary {
    pub delta: f64,
    /// `(t, L1 gap)` at every stamp.
    pub gaps: Vec<(f64, f64)>,
    /// `(δ, gap at T)` of the cascade started at `T/4`.
    pub cascade: Vec<(f64, f64)>,
    pub tol: f64,
}

/// Deterministic barriers at the configured `δ`, and the refinement cascade.
pub fn barriers(spec: &ExperimentSpec, out: &Path) -> Result<(PathBuf, BarrierSummary)> {
    let model = Model::new(spec)?;
    let delta = spec.run.delta();
    let b = compute_barriers(&model.evo, &model.grid, delta, spec.run.steps(), delta / 16.0)?;
    let sep = separating_element(&model.evo, &model.grid, spec.run.horizon, spec.run.horizon / 4.0, spec.tol, None)?;
    let mut dir = OutDir::create(out, spec)?;
    let mut gaps = Vec::new();
    for (k, (t, up)) in b.upper.iter().enumerate() {
        let lo = &b.lower.frames()[k];
        gaps.push((t, up.l1_distance(lo)?));
        dir.density(&format!("upper/k{k:03}.csv"), up)?;
        dir.density(&format!("lower/k{k:03}.csv"), lo)?;
    }
    dir.csv("gaps.csv", "t,gap", gaps.iter().map(|(t, g)| format!("{t:.10},{g:.12e}")))?;
    let cascade: Vec<(f64, f64)> = sep.levels.iter().map(|l| (l.delta, l.gap)).collect();
    dir.csv("cascade.csv", "delta,gap", cascade.iter().map(|(d, g)| format!("{d:.10},{g:.12e}")))?;
    let mut report = vec![("delta".to_string(), format!("{delta}")), ("tol".to_string(), format!("{}", spec.tol))];
    report.extend(cascade.iter().map(|(d, g)| (format!("gap[delta={d}]"), format!("{g:.6e}"))));
    dir.report(&report)?;
    let summary = BarrierSummary { delta, gaps, cascade, tol: spec.tol };
    Ok((dir.finish(spec, &summary)?, summary))
}

#[derive(Debug, Serialize)]
pub struct FbpSummary {
    pub cascade: Vec<(f64, f64)>,
    pub gamma: Vec<(f64, f64)>,
    pub killed_mass_at_horizon: f64,
    pub squeeze_pass: bool,
    pub squeeze_margin: f64,
}

pub fn solve(spec: &ExperimentSpec, model: &Model) -> Result<FreeBoundarySolution> {
    Ok(solve_fbp(&model.evo, &model.grid, spec.run.horizon, spec.tol, None)?)
}

/// Free-boundary solution: `γ` at every solver stamp, `u` at the configured
/// stamps, and the squeeze check at `T/4`.
pub fn fbp(spec: &ExperimentSpec, out: &Path) -> Result<(PathBuf, FbpSummary)> {
    let model = Model::new(spec)?;
    let sol = solve(spec, &model)?;
    let sq = check_squeeze(&model.evo, &sol, &model.grid, spec.run.horizon / 4.0, 4, None)?;
    let mut dir = OutDir::create(out, spec)?;
    let gamma: Vec<(f64, f64)> = sol.gamma.times().iter().cloned().zip(sol.gamma.values().iter().cloned()).collect();
    dir.csv("gamma.csv", "t,gamma", gamma.iter().map(|(t, g)| format!("{t:.10},{g:.12}")))?;
    let u = sol.restrict(spec.run.depth)?;
    for (k, f) in u.frames().iter().enumerate() {
        dir.density(&format!("u/k{k:03}.csv"), f)?;
    }
    let summary = FbpSummary {
        cascade: sol.cascade.clone(),
        gamma,
        killed_mass_at_horizon: *sol.killed_mass.last().unwrap(),
        squeeze_pass: sq.pass,
        squeeze_margin: sq.worst_margin,
    };
    dir.report(&[
        ("finest_delta".into(), format!("{}", sol.finest_delta())),
        ("killed_mass_at_horizon".into(), format!("{:.8}", summary.killed_mass_at_horizon)),
        ("squeeze_pass".into(), format!("{}", sq.pass)),
        ("squeeze_worst_margin".into(), format!("{:.6e}", sq.worst_margin)),
    ])?;
    Ok((dir.finish(spec, &summary)?, summary))
}

#[derive(Debug, Serialize)]
pub struct ValidateSummary {
    pub paths: usize,
    pub killed: usize,
    pub ks_statistic: f64,
    pub ks_p: f64,
    pub tail_discrepancy: Vec<(f64, f64)>,
    pub shifted_ks_p: f64,
}

/// Killed-path validation of the solver output with `spec.paths` paths.
pub fn validate(spec: &ExperimentSpec, out: &Path) -> Result<(PathBuf, ValidateSummary)> {
    if spec.paths < 10_000 {
        bail!("validation needs at least 10^4 paths, got {}", spec.paths);
    }
    let model = Model::new(spec)?;
    let sol = solve(spec, &model)?;
    let seed = family_seed(spec.run.seed, 7);
    let rep = validate_probabilistic(&sol, &model.rho0, &model.kernel, spec.paths, seed)?;
    let wrong = validate_against(&sol, &sol.gamma.shifted(0.5), &model.rho0, &model.kernel, spec.paths, seed)?;
    let summary = ValidateSummary {
        paths: spec.paths,
        killed: rep.killed,
        ks_statistic: rep.ks.statistic,
        ks_p: rep.ks.p_value,
        tail_discrepancy: rep.tail_discrepancy.clone(),
        shifted_ks_p: wrong.ks.p_value,
    };
    let mut dir = OutDir::create(out, spec)?;
    let mut lines = vec![
        ("paths".to_string(), format!("{}", spec.paths)),
        ("killed".to_string(), format!("{}", rep.killed)),
        ("ks_statistic".to_string(), format!("{:.6}", rep.ks.statistic)),
        ("ks_p".to_string(), format!("{:.6}", rep.ks.p_value)),
        ("shifted_ks_p".to_string(), format!("{:.6e}", wrong.ks.p_value)),
    ];
    lines.extend(rep.tail_discrepancy.iter().map(|(t, d)| (format!("tail_discrepancy[t={t}]"), format!("{d:.6}"))));
    dir.report(&lines)?;
    Ok((dir.finish(spec, &summary)?, summary))
}
