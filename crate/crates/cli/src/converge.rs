use std::path::{Path, PathBuf};

use anyhow::{ensure, Result};
use nbbm_core::fbp::FreeBoundarySolution;
use nbbm_core::grid::GridDensity;
use nbbm_core::metrics::max_distance;
use nbbm_core::particle::simulate_true;
use nbbm_core::rng::replicas;
use nbbm_core::{ParticleConfiguration, Trajectory};
use serde::Serialize;

use crate::experiments::{family_seed, solve, stamps};
use crate::export::OutDir;
use crate::model::Model;
use crate::spec::ExperimentSpec;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mean: f64,
    pub q90: f64,
    /// `(ε, fraction of runs within ε of u)`.
    pub membership: Vec<(f64, f64)>,
    /// `max_k` distance of every run, in replica order.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub horizon: f64,
    pub depth: u32,
    pub replicas: usize,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn means_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mean < w[0].mean)
    }
}

/// Nearest-rank quantile of `xs`.
fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

/// Distances of true-process runs to `u` for each configured `N`.
pub fn convergence_table(spec: &ExperimentSpec, model: &Model, u: &Trajectory<GridDensity>) -> Result<ConvergenceTable> {
    spec.validate()?;
    let times = stamps(spec);
    let depth = spec.run.depth;
    let mut rows = Vec::new();
    for &n in &spec.n_list {
        let results = replicas(family_seed(spec.run.seed, 100 + n as u64), spec.run.replicas, |_, rng| {
            let x0 = ParticleConfiguration::new(model.rho0.sample_n(n, rng));
            let tr = simulate_true(&x0, spec.run.horizon, &times, &model.kernel, rng)?;
            max_distance(&tr.to_empirical(true)?, u, depth)
        });
        let distances = results.into_iter().collect::<nbbm_core::Result<Vec<f64>>>()?;
        let r = distances.len() as f64;
        let membership = spec
            .eps
            .iter()
            .map(|&e| (e, distances.iter().filter(|&&d| d < e).count() as f64 / r))
            .collect();
        rows.push(ConvergenceRow {
            n,
            mean: distances.iter().sum::<f64>() / r,
            q90: quantile(&distances, 0.9),
            membership,
            distances,
        });
    }
    Ok(ConvergenceTable { horizon: spec.run.horizon, depth, replicas: spec.run.replicas, rows })
}

/// Solves for `u`, then runs [`convergence_table`].
pub fn run_converge_with(spec: &ExperimentSpec, sol: Option<&FreeBoundarySolution>) -> Result<ConvergenceTable> {
    spec.validate()?;
    let model = Model::new(spec)?;
    let owned;
    let sol = match sol {
        Some(s) => s,
        None => {
            owned = solve(spec, &model)?;
            &owned
        }
    };
    ensure!((sol.horizon() - spec.run.horizon).abs() < 1e-12, "solution horizon differs from the configured horizon");
    let u = sol.restrict(spec.run.depth)?;
    convergence_table(spec, &model, &u)
}

pub fn run_converge(spec: &ExperimentSpec) -> Result<ConvergenceTable> {
    run_converge_with(spec, None)
}

/// `converge` subcommand: table to `convergence.csv`, summary to `report.txt`.
pub fn converge(spec: &ExperimentSpec, out: &Path) -> Result<(PathBuf, ConvergenceTable)> {
    let table = run_converge(spec)?;
    let mut dir = OutDir::create(out, spec)?;
    let eps_cols: Vec<String> = spec.eps.iter().map(|e| format!("member_eps_{e}")).collect();
    let columns = format!("n,mean,q90,{}", eps_cols.join(","));
    let rows = table.rows.iter().map(|r| {
        let m: Vec<String> = r.membership.iter().map(|(_, f)| format!("{f:.4}")).collect();
        format!("{},{:.8},{:.8},{}", r.n, r.mean, r.q90, m.join(","))
    });
    dir.csv("convergence.csv", &columns, rows)?;
    dir.csv(
        "distances.csv",
        "n,replica,max_distance",
        table
            .rows
            .iter()
            .flat_map(|r| r.distances.iter().enumerate().map(move |(i, d)| format!("{},{i},{d:.10}", r.n))),
    )?;
    let mut lines: Vec<(String, String)> = table
        .rows
        .iter()
        .flat_map(|r| [(format!("mean[N={}]", r.n), format!("{:.6}", r.mean)), (format!("q90[N={}]", r.n), format!("{:.6}", r.q90))])
        .collect();
    lines.push(("mean_strictly_decreasing".into(), format!("{}", table.means_decreasing())));
    dir.report(&lines)?;
    Ok((dir.finish(spec, &table)?, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantile() {
        let xs: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        assert_eq!(quantile(&xs, 0.9), 9.0);
        assert_eq!(quantile(&xs, 1.0), 10.0);
        assert_eq!(quantile(&[3.0], 0.9), 3.0);
    }
}
