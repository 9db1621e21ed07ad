//! The acceptance suite: ten numbered criteria with fixed seeds, tolerances
//! and runtime budgets.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Result};
use nbbm_core::barrier::{compute_barriers, Barriers};
use nbbm_core::config::Partition;
use nbbm_core::fbp::{check_squeeze, validate_against, validate_probabilistic, FreeBoundarySolution};
use nbbm_core::grid::GridDensity;
use nbbm_core::metrics::{
    coarse_grain, cut_nonexpansive_check, mt_bound_via_seminorm, order_equiv, order_excess, order_modulo, seminorm,
    Measure,
};
use nbbm_core::particle::{coupled_true_lower, coupled_true_pair, coupled_true_upper, simulate_basic_from, yule_count};
use nbbm_core::rng::{replicas, stream};
use nbbm_core::stats::{chi_square, mean_se};
use nbbm_core::{EmpiricalMeasure, ParticleConfiguration, SimRng};
use rand::Rng;
use serde::Serialize;

use crate::converge::run_converge_with;
use crate::experiments::{family_seed, solve};
use crate::export::OutDir;
use crate::model::{core_invariants, Model};
use crate::spec::ExperimentSpec;

/// What a criterion found.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

type Check = fn(&mut Context) -> Result<Outcome>;

pub struct Criterion {
    pub index: usize,
    pub name: &'static str,
    pub limit_seconds: f64,
    check: Check,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub index: usize,
    pub name: String,
    pub pass: bool,
    pub seconds: f64,
    pub limit_seconds: f64,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {:<20} {:>7.1}s / {:>4.0}s  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.index,
            self.name,
            self.seconds,
            self.limit_seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptReport {
    /// Core-invariant lines, or the first failure.
    pub invariants: std::result::Result<Vec<String>, String>,
    pub results: Vec<CriterionResult>,
}

impl AcceptReport {
    pub fn pass(&self) -> bool {
        self.invariants.is_ok() && self.results.iter().all(|r| r.pass)
    }
}

/// State shared across criteria so expensive pieces are computed once.
pub struct Context {
    pub spec: ExperimentSpec,
    model_short: Option<Model>,
    model_long: Option<Model>,
    long_barriers: Option<Vec<Barriers>>,
    solution: Option<FreeBoundarySolution>,
}

const SHORT: f64 = 0.5;
const LONG: f64 = 1.0;
const LONG_DELTAS: [f64; 3] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];

impl Context {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Context { spec: spec.clone(), model_short: None, model_long: None, long_barriers: None, solution: None }
    }

    fn seed(&self, family: u64) -> u64 {
        family_seed(self.spec.run.seed, 1000 + family)
    }

    fn tolerance(&self) -> f64 {
        10.0 * self.spec.run.h
    }

    fn model_short(&mut self) -> Result<&Model> {
        if self.model_short.is_none() {
            self.model_short = Some(Model::for_horizon(&self.spec, SHORT)?);
        }
        Ok(self.model_short.as_ref().unwrap())
    }

    fn model_long(&mut self) -> Result<&Model> {
        if self.model_long.is_none() {
            self.model_long = Some(Model::for_horizon(&self.spec, LONG)?);
        }
        Ok(self.model_long.as_ref().unwrap())
    }

    fn long_barriers(&mut self) -> Result<&[Barriers]> {
        if self.long_barriers.is_none() {
            let m = self.model_long()?.clone();
            let all = LONG_DELTAS
                .iter()
                .map(|&d| compute_barriers(&m.evo, &m.grid, d, (LONG / d).round() as usize, d / 16.0))
                .collect::<nbbm_core::Result<Vec<_>>>()?;
            self.long_barriers = Some(all);
        }
        Ok(self.long_barriers.as_deref().unwrap())
    }

    fn solution(&mut self) -> Result<&FreeBoundarySolution> {
        if self.solution.is_none() {
            let mut spec = self.spec.clone();
            spec.run.horizon = SHORT;
            let m = self.model_short()?.clone();
            self.solution = Some(solve(&spec, &m)?);
        }
        Ok(self.solution.as_ref().unwrap())
    }
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { index: 1, name: "barrier-gap", limit_seconds: 120.0, check: barrier_gap },
        Criterion { index: 2, name: "barrier-sandwich", limit_seconds: 120.0, check: barrier_sandwich },
        Criterion { index: 3, name: "free-domination", limit_seconds: 60.0, check: free_domination },
        Criterion { index: 4, name: "mc-semigroup", limit_seconds: 180.0, check: mc_semigroup },
        Criterion { index: 5, name: "yule-law", limit_seconds: 30.0, check: yule_law },
        Criterion { index: 6, name: "coupling-order", limit_seconds: 120.0, check: coupling_order },
        Criterion { index: 7, name: "fbp-probabilistic", limit_seconds: 180.0, check: fbp_probabilistic },
        Criterion { index: 8, name: "fbp-squeeze", limit_seconds: 60.0, check: fbp_squeeze },
        Criterion { index: 9, name: "hydrodynamic", limit_seconds: 600.0, check: hydrodynamic },
        Criterion { index: 10, name: "metric-identities", limit_seconds: 60.0, check: metric_identities },
    ]
}

/// Runs the core-invariant check, then every criterion (or only `only`).
///
/// A failed invariant check stops the run before any criterion. `on_result`
/// sees each result as soon as it is available.
pub fn run_accept_with(
    spec: &ExperimentSpec,
    only: Option<&str>,
    mut on_result: impl FnMut(&CriterionResult),
) -> Result<AcceptReport> {
    spec.validate()?;
    let all = criteria();
    let selected: Vec<&Criterion> = match only {
        Some(name) => {
            let Some(c) = all.iter().find(|c| c.name == name) else {
                let names: Vec<&str> = all.iter().map(|c| c.name).collect();
                bail!("unknown criterion `{name}`; expected one of {}", names.join(", "));
            };
            vec![c]
        }
        None => all.iter().collect(),
    };
    let mut ctx = Context::new(spec);
    let invariants = ctx.model_short().and_then(|m| core_invariants(spec, m)).map_err(|e| format!("{e:#}"));
    if invariants.is_err() {
        return Ok(AcceptReport { invariants, results: Vec::new() });
    }
    let mut results = Vec::new();
    for c in selected {
        let start = Instant::now();
        let outcome = (c.check)(&mut ctx).unwrap_or_else(|e| Outcome::new(false, format!("error: {e:#}")));
        let seconds = start.elapsed().as_secs_f64();
        let mut detail = outcome.detail;
        if seconds > c.limit_seconds {
            detail.push_str(&format!("; over the {:.0}s budget", c.limit_seconds));
        }
        let r = CriterionResult {
            index: c.index,
            name: c.name.to_string(),
            pass: outcome.pass && seconds <= c.limit_seconds,
            seconds,
            limit_seconds: c.limit_seconds,
            detail,
        };
        on_result(&r);
        results.push(r);
    }
    Ok(AcceptReport { invariants, results })
}

pub fn run_accept(spec: &ExperimentSpec, only: Option<&str>) -> Result<AcceptReport> {
    run_accept_with(spec, only, |_| {})
}

/// `accept` subcommand: results to `report.txt` and `manifest.json`.
pub fn accept(spec: &ExperimentSpec, out: &Path, mut on_result: impl FnMut(&CriterionResult)) -> Result<(PathBuf, AcceptReport)> {
    let report = run_accept_with(spec, spec.only.as_deref(), &mut on_result)?;
    let mut dir = OutDir::create(out, spec)?;
    let mut lines = Vec::new();
    match &report.invariants {
        Ok(v) => lines.extend(v.iter().enumerate().map(|(i, l)| (format!("invariant[{i}]"), l.clone()))),
        Err(e) => lines.push(("core-invariants".to_string(), format!("FAIL {e}"))),
    }
    for r in &report.results {
        lines.push((
            r.name.clone(),
            format!("{} seconds={:.2} limit={:.0} {}", if r.pass { "PASS" } else { "FAIL" }, r.seconds, r.limit_seconds, r.detail),
        ));
    }
    lines.push(("overall".to_string(), if report.pass() { "PASS" } else { "FAIL" }.to_string()));
    dir.report(&lines)?;
    Ok((dir.finish(spec, &report)?, report))
}

fn fmt_list(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", v.join(", "))
}

fn barrier_gap(ctx: &mut Context) -> Result<Outcome> {
    let bs = ctx.long_barriers()?;
    let gaps = bs
        .iter()
        .map(|b| Ok(b.upper.last().unwrap().l1_distance(b.lower.last().unwrap())?))
        .collect::<Result<Vec<f64>>>()?;
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    let pass = ratios.iter().all(|r| (0.3..=0.7).contains(r));
    Ok(Outcome::new(pass, format!("gaps at T=1 {} ratios {} in [0.3, 0.7]", fmt_list(&gaps), fmt_list(&ratios))))
}

fn barrier_sandwich(ctx: &mut Context) -> Result<Outcome> {
    let tol = ctx.tolerance();
    let bs = ctx.long_barriers()?;
    let mut worst_sandwich: f64 = 0.0;
    for b in bs {
        for (lo, up) in b.lower.frames().iter().zip(b.upper.frames()) {
            worst_sandwich = worst_sandwich.max(order_excess(lo, up));
        }
    }
    let mut worst_refine: f64 = 0.0;
    for w in bs.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        for (t, lc) in coarse.lower.iter() {
            let (Some(lf), Some(uf)) = (fine.lower.at(t), fine.upper.at(t)) else {
                bail!("refined barriers have no stamp at {t}");
            };
            let uc = coarse.upper.at(t).unwrap();
            worst_refine = worst_refine.max(order_excess(lc, lf)).max(order_excess(uf, uc));
        }
    }
    let pass = worst_sandwich <= tol && worst_refine <= tol;
    Ok(Outcome::new(
        pass,
        format!("max tail excess: sandwich {worst_sandwich:.2e}, refinement {worst_refine:.2e}, tolerance {tol:.0e}"),
    ))
}

fn free_domination(ctx: &mut Context) -> Result<Outcome> {
    let tol = ctx.tolerance();
    let m = ctx.model_long()?.clone();
    let delta = 1.0 / 16.0;
    let b = compute_barriers(&m.evo, &m.grid, delta, 16, delta / 16.0)?;
    let mut free = m.grid.clone();
    let mut worst = f64::NEG_INFINITY;
    for k in 1..=16 {
        free = m.evo.evolve_free(&free, delta, delta / 16.0)?;
        let slack = tol * free.sup();
        for rho in [&b.upper.frames()[k], &b.lower.frames()[k]] {
            let excess = rho.values().iter().zip(free.values()).map(|(r, f)| r - f).fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(excess - slack);
        }
    }
    Ok(Outcome::new(worst <= 0.0, format!("max (barrier - free - slack) over k <= 16: {worst:.3e}")))
}

fn mc_semigroup(ctx: &mut Context) -> Result<Outcome> {
    let seed = ctx.seed(4);
    let m = ctx.model_short()?.clone();
    let r = 100_000;
    let runs = replicas(seed, r, |_, rng| simulate_basic_from(&[0.0], 0.5, &m.kernel, rng));
    let counts: Vec<f64> = runs.iter().map(|v| v.len() as f64).collect();
    let (mean, se) = mean_se(&counts);
    let mass_ok = (mean - 0.5f64.exp()).abs() < 3.0 * se;
    let mc = EmpiricalMeasure::uniform(&runs.concat(), 1.0 / r as f64);
    let td = m.evo.transition_density(0.0, 0.5, 0.5 / 256.0, 6.0)?;
    let d = seminorm(&mc, &td, &Partition::for_n(100_000, 1.0 / 12.0), None);
    Ok(Outcome::new(
        mass_ok && d < 0.02,
        format!("semi-norm {d:.4} < 0.02; mean count {mean:.4} ± {se:.4} vs e^0.5 = {:.4}", 0.5f64.exp()),
    ))
}

fn yule_law(ctx: &mut Context) -> Result<Outcome> {
    let n = 100_000;
    let xs: Vec<u64> = replicas(ctx.seed(5), n, |_, rng| yule_count(1, 1.0, rng));
    let f: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
    let (mean, se) = mean_se(&f);
    let p = (-1.0f64).exp();
    let kmax = 15;
    let mut obs = vec![0.0; kmax + 1];
    for &x in &xs {
        obs[(x as usize).min(kmax + 1) - 1] += 1.0;
    }
    let mut expect: Vec<f64> = (1..=kmax).map(|k| n as f64 * p * (1.0 - p).powi(k as i32 - 1)).collect();
    expect.push(n as f64 * (1.0 - p).powi(kmax as i32));
    let (stat, dof, pv) = chi_square(&obs, &expect, 0);
    let mean_ok = (mean - std::f64::consts::E).abs() < 3.0 * se;
    Ok(Outcome::new(
        mean_ok && pv > 0.01,
        format!("mean {mean:.4} ± {se:.4} vs e; geometric chi2 {stat:.2} on {dof} dof, p = {pv:.3}"),
    ))
}

fn coupling_order(ctx: &mut Context) -> Result<Outcome> {
    let seed = ctx.seed(6);
    let alpha0 = ctx.spec.run.alpha0;
    let m = ctx.model_short()?.clone();
    let (n, delta, steps) = (50usize, 1.0 / 8.0, 4usize);
    let stamps: Vec<f64> = (0..=steps).map(|k| k as f64 * delta).collect();
    let start = |rng: &mut SimRng| ParticleConfiguration::new(m.rho0.sample_n(n, rng));
    let tally = |a: &ParticleConfiguration, b: &ParticleConfiguration| -> Result<usize> {
        Ok(!order_modulo(&a.to_empirical(false)?, &b.to_empirical(false)?, 0.0) as usize)
    };

    let pair: Vec<Result<usize>> = replicas(seed, 1000, |_, rng| {
        let x0 = start(rng);
        let x1 = ParticleConfiguration::new(x0.positions().iter().map(|x| x + 0.2 * rng.random::<f64>()).collect());
        let c = coupled_true_pair(&x0, &x1, 0.5, &stamps, &m.kernel, rng)?;
        let mut bad = c.violations;
        for (a, b) in c.first.frames().iter().zip(c.second.frames()) {
            bad += tally(a, b)?;
        }
        Ok(bad)
    });
    let lower: Vec<Result<usize>> = replicas(family_seed(seed, 1), 1000, |_, rng| {
        let c = coupled_true_lower(&start(rng), delta, steps, alpha0, &m.kernel, rng)?;
        let mut bad = c.label_violations + c.order_violations;
        for (a, b) in c.lower.frames().iter().zip(c.truth.frames()) {
            bad += tally(a, b)?;
        }
        Ok(bad)
    });
    let upper: Vec<Result<usize>> = replicas(family_seed(seed, 2), 1000, |_, rng| {
        let c = coupled_true_upper(&start(rng), delta, steps, &m.kernel, rng)?;
        let mut bad = c.violations;
        for (a, b) in c.truth.frames().iter().zip(c.upper.frames()) {
            bad += tally(a, b)?;
        }
        Ok(bad)
    });
    let sum = |v: Vec<Result<usize>>| v.into_iter().sum::<Result<usize>>();
    let (p, l, u) = (sum(pair)?, sum(lower)?, sum(upper)?);
    Ok(Outcome::new(p + l + u == 0, format!("violations over 1000 runs each: pair {p}, lower {l}, upper {u}")))
}

fn fbp_probabilistic(ctx: &mut Context) -> Result<Outcome> {
    let seed = ctx.seed(7);
    let m = ctx.model_short()?.clone();
    let sol = ctx.solution()?;
    let ks = validate_probabilistic(sol, &m.rho0, &m.kernel, 10_000, seed)?;
    let tails = validate_probabilistic(sol, &m.rho0, &m.kernel, 100_000, family_seed(seed, 1))?;
    let wrong = validate_against(sol, &sol.gamma.shifted(0.5), &m.rho0, &m.kernel, 10_000, family_seed(seed, 2))?;
    let worst_tail = tails.tail_discrepancy.iter().map(|d| d.1).fold(0.0, f64::max);
    let pass = ks.ks.p_value > 0.01 && worst_tail < 0.03 && wrong.ks.p_value < 1e-3;
    Ok(Outcome::new(
        pass,
        format!(
            "KS p = {:.3} (D = {:.4}, {} killed of 1e4); tail discrepancy {} < 0.03 at 1e5; shifted boundary p = {:.1e}",
            ks.ks.p_value,
            ks.ks.statistic,
            ks.killed,
            fmt_list(&tails.tail_discrepancy.iter().map(|d| d.1).collect::<Vec<_>>()),
            wrong.ks.p_value
        ),
    ))
}

fn fbp_squeeze(ctx: &mut Context) -> Result<Outcome> {
    let m = ctx.model_short()?.clone();
    let sol = ctx.solution()?;
    let rep = check_squeeze(&m.evo, sol, &m.grid, SHORT / 4.0, 4, None)?;
    Ok(Outcome::new(
        rep.pass,
        format!(
            "delta = T/4 against solver delta = {}: worst margin {:.3e} (tolerance {:.0e})",
            sol.finest_delta(),
            rep.worst_margin,
            rep.tolerance
        ),
    ))
}

fn hydrodynamic(ctx: &mut Context) -> Result<Outcome> {
    let mut spec = ctx.spec.clone();
    spec.run.horizon = SHORT;
    spec.run.depth = 3;
    spec.run.replicas = 50;
    spec.n_list = vec![250, 1000, 4000];
    spec.run.seed = ctx.seed(9);
    let sol = ctx.solution()?;
    let table = run_converge_with(&spec, Some(sol))?;
    let means: Vec<f64> = table.rows.iter().map(|r| r.mean).collect();
    let last = *means.last().unwrap();
    Ok(Outcome::new(
        table.means_decreasing() && last <= 0.05,
        format!("mean max-over-k distance for N = 250, 1000, 4000: {}; must decrease and end <= 0.05", fmt_list(&means)),
    ))
}

enum Random {
    Atoms(EmpiricalMeasure),
    Grid(GridDensity),
}

impl Random {
    fn draw(rng: &mut SimRng) -> Self {
        if rng.random::<bool>() {
            let n = rng.random_range(1..40);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            Random::Atoms(EmpiricalMeasure::uniform(&xs, 1.0 / n as f64))
        } else {
            let h = 0.01 * rng.random_range(1..5) as f64;
            let lo = rng.random_range(-2.0..0.0);
            let v: Vec<f64> = (0..rng.random_range(5..200)).map(|_| rng.random::<f64>()).collect();
            Random::Grid(GridDensity::new(lo, h, v).expect("valid grid").normalized().expect("positive mass"))
        }
    }

    fn measure(&self) -> &dyn Measure {
        match self {
            Random::Atoms(m) => m,
            Random::Grid(g) => g,
        }
    }
}

fn nonexpansive(a: &Random, b: &Random, theta: f64, part: &Partition) -> nbbm_core::Result<bool> {
    match (a, b) {
        (Random::Atoms(x), Random::Atoms(y)) => cut_nonexpansive_check(x, y, theta, part),
        (Random::Atoms(x), Random::Grid(y)) => cut_nonexpansive_check(x, y, theta, part),
        (Random::Grid(x), Random::Atoms(y)) => cut_nonexpansive_check(x, y, theta, part),
        (Random::Grid(x), Random::Grid(y)) => cut_nonexpansive_check(x, y, theta, part),
    }
}

fn metric_identities(ctx: &mut Context) -> Result<Outcome> {
    let mut rng = stream(ctx.seed(10), 0);
    let mut identity_err: f64 = 0.0;
    let mut bound_violations = 0;
    let mut cut_violations = 0;
    for _ in 0..1000 {
        let part = Partition::new(rng.random_range(0.05..0.6))?;
        let (a, b) = (Random::draw(&mut rng), Random::draw(&mut rng));
        let l1 = coarse_grain(a.measure(), &part).l1_distance(&coarse_grain(b.measure(), &part))?;
        identity_err = identity_err.max((l1 - seminorm(a.measure(), b.measure(), &part, None)).abs());
        let (bound, actual) = mt_bound_via_seminorm(a.measure(), b.measure(), &part);
        bound_violations += (actual > bound + 1e-12) as usize;
        let theta = rng.random_range(0.0..0.99);
        cut_violations += !nonexpansive(&a, &b, theta, &part)? as usize;
    }
    let mut equiv_violations = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=6);
        let mut draw = || (0..n).map(|_| rng.random_range(0..5) as f64 * 0.5).collect::<Vec<_>>();
        let (s1, s2, s3) = order_equiv(&ParticleConfiguration::new(draw()), &ParticleConfiguration::new(draw()))?;
        equiv_violations += !(s1 == s2 && s2 == s3) as usize;
    }
    let pass = identity_err <= 1e-12 && bound_violations + cut_violations + equiv_violations == 0;
    Ok(Outcome::new(
        pass,
        format!(
            "coarse-grain identity max error {identity_err:.1e}; violations: bound {bound_violations}/1000, cut {cut_violations}/1000, order forms {equiv_violations}/10000"
        ),
    ))
}
