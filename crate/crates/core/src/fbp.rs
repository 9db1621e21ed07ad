//! The free-boundary solution `(γ, u)` and its probabilistic cross-checks.

use rand::Rng;

use crate::barrier::{compute_barriers, dyadic_steps, separating_element, Barriers, CascadeLevel};
use crate::error::{param, Error, Result};
use crate::freeevo::{BoundaryCurve, FreeEvolution};
use crate::grid::GridDensity;
use crate::kernel::{BranchingKernel, InitialDensity};
use crate::measure::{EmpiricalMeasure, Trajectory, TrajectoryMeta, Variant};
use crate::metrics::{mt_distance, order_excess};
use crate::particle::{exp1, gauss};
use crate::rng::replicas;
use crate::stats::{ks_one_sample, KsResult};

/// Default extraction threshold relative to `sup ρ0`.
pub const THRESHOLD_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FreeBoundarySolution {
    pub gamma: BoundaryCurve,
    /// `u(·, t)` at the stamps of the finest level, zero left of `γ(t)`.
    pub u: Trajectory<GridDensity>,
    pub theta_s: f64,
    /// Mass of the killed evolution before renormalization, per stamp.
    pub killed_mass: Vec<f64>,
    /// Midpoint of the finest barrier pair.
    pub separating: Trajectory<GridDensity>,
    /// `(δ, gap at the horizon)` for every cascade level.
    pub cascade: Vec<(f64, f64)>,
    /// Upper-barrier cut points `(fine, coarse)` per stamp; the coarse entry
    /// is NaN where that level has no stamp.
    pub cut_points: Vec<(f64, f64)>,
}

impl FreeBoundarySolution {
    pub fn horizon(&self) -> f64 {
        *self.u.times().last().unwrap()
    }

    pub fn finest_delta(&self) -> f64 {
        self.cascade.last().map(|c| c.0).unwrap_or(f64::NAN)
    }

    /// `u` at the stamps `k 2^-depth T`.
    pub fn restrict(&self, depth: u32) -> Result<Trajectory<GridDensity>> {
        let horizon = self.horizon();
        let steps = 1usize << depth;
        let mut times = Vec::with_capacity(steps + 1);
        let mut frames = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = horizon * k as f64 / steps as f64;
            let f = self
                .u
                .at(t)
                .ok_or_else(|| Error::TimeGrid(format!("solution has no frame at t = {t}; depth {depth} is too fine")))?;
            times.push(t);
            frames.push(f.clone());
        }
        let mut meta = self.u.meta.clone();
        meta.delta = horizon / steps as f64;
        Trajectory::new(times, frames, meta)
    }
}

/// Leftmost point where `f` exceeds `theta`, interpolated linearly between
/// cell centers.
pub fn boundary_extract(f: &GridDensity, theta: f64) -> Result<f64> {
    let v = f.values();
    let j = v.iter().position(|&x| x > theta).ok_or(Error::BelowThreshold(theta))?;
    if j == 0 {
        return Ok(f.center(0));
    }
    let (a, b) = (v[j - 1], v[j]);
    let frac = ((theta - a) / (b - a)).clamp(0.0, 1.0);
    Ok(f.center(j - 1) + frac * f.h())
}

/// Keeps `f` right of `g` only, splitting the cell that contains `g`, and
/// rescales to unit mass.
pub fn project_right_of(f: &GridDensity, g: f64) -> Result<GridDensity> {
    let mut v = f.values().to_vec();
    let pos = (g - f.x_min()) / f.h();
    if pos > 0.0 {
        let j = pos.floor() as usize;
        let n = v.len().min(j);
        v[..n].iter_mut().for_each(|x| *x = 0.0);
        if j < v.len() {
            v[j] *= (j as f64 + 1.0 - pos).clamp(0.0, 1.0);
        }
    }
    let out = GridDensity::new(f.x_min(), f.h(), v)?;
    out.normalized()
}

/// Free-boundary solution on `[0, T]`.
///
/// The barrier cascade is refined until the gap is below `tol`. The boundary
/// is the `√δ`-extrapolation `(√2 V_fine - V_coarse) / (√2 - 1)` of the
/// upper-barrier cut points of the two finest levels, with the shift
/// interpolated at the stamps only the finer level has and `γ(0)` the left
/// edge of the support of `ρ0`. `u` is the free evolution of `ρ0` killed at
/// that boundary, renormalized at each stamp.
pub fn solve_fbp(
    evo: &FreeEvolution,
    rho0: &GridDensity,
    horizon: f64,
    tol: f64,
    dt: Option<f64>,
) -> Result<FreeBoundarySolution> {
    let sep = separating_element(evo, rho0, horizon, horizon / 4.0, tol, dt)?;
    let mut levels: Vec<CascadeLevel> = sep.levels;
    let mut u_fine = sep.u;
    if levels.len() < 2 {
        // Converged at the first level: one finer level for the extrapolation.
        let coarse = levels.last().unwrap();
        let delta = coarse.delta / 2.0;
        let steps = dyadic_steps(horizon, delta)?;
        let barriers = compute_barriers(evo, rho0, delta, steps, dt.unwrap_or(delta / 16.0))?;
        let gap = barriers.upper.last().unwrap().l1_distance(barriers.lower.last().unwrap())?;
        let frames = barriers
            .upper
            .frames()
            .iter()
            .zip(barriers.lower.frames())
            .map(|(a, b)| a.midpoint(b))
            .collect::<Result<Vec<_>>>()?;
        u_fine = Trajectory::new(barriers.upper.times().to_vec(), frames, u_fine.meta.clone())?;
        levels.push(CascadeLevel { delta, gap, barriers });
    }
    let fine = &levels[levels.len() - 1].barriers;
    let coarse = &levels[levels.len() - 2].barriers;
    let steps = coarse.upper_cuts.len();

    let theta_s = THRESHOLD_FRACTION * rho0.sup();
    let g0 = boundary_extract(rho0, 0.0)?;
    let r2 = std::f64::consts::SQRT_2;
    // Extrapolation shift V_fine - γ at the shared stamps.
    let shift: Vec<f64> = (1..=steps)
        .map(|k| (coarse.upper_cuts[k - 1] - fine.upper_cuts[2 * k - 1]) / (r2 - 1.0))
        .collect();
    let fine_times = fine.upper.times();
    let mut times = vec![0.0];
    let mut gamma = vec![g0];
    let mut cut_points = vec![(g0, g0)];
    for j in 1..=2 * steps {
        let vf = fine.upper_cuts[j - 1];
        let d = if j % 2 == 0 {
            shift[j / 2 - 1]
        } else if j == 1 {
            shift[0]
        } else {
            0.5 * (shift[j / 2 - 1] + shift[j / 2])
        };
        times.push(fine_times[j]);
        gamma.push(vf - d);
        let vc = if j % 2 == 0 { coarse.upper_cuts[j / 2 - 1] } else { f64::NAN };
        cut_points.push((vf, vc));
    }
    let gamma = BoundaryCurve::new(times.clone(), gamma)?;
    let step = dt.unwrap_or(fine.delta / 16.0);
    let mut frames = vec![rho0.clone()];
    let mut killed_mass = vec![rho0.mass()];
    let mut cur = rho0.clone();
    for w in times.windows(2) {
        cur = evo.evolve_killed(&cur, &gamma, w[0], w[1], step)?;
        killed_mass.push(cur.mass());
        frames.push(cur.normalized()?);
    }
    let u = Trajectory::new(
        times,
        frames,
        TrajectoryMeta { variant: Variant::Separating, n: 0, delta: fine.delta, seed: None },
    )?;
    Ok(FreeBoundarySolution {
        gamma,
        u,
        killed_mass,
        separating: u_fine,
        theta_s,
        cascade: levels.iter().map(|l| (l.delta, l.gap)).collect(),
        cut_points,
    })
}

/// Outcome of [`check_squeeze`].
#[derive(Debug, Clone)]
pub struct SqueezeReport {
    pub delta: f64,
    pub tolerance: f64,
    /// `(t, sup(tail_lower - tail_u), sup(tail_u - tail_upper))` per stamp.
    pub excesses: Vec<(f64, f64, f64)>,
    /// `tolerance - max excess`; positive when the check passes.
    pub worst_margin: f64,
    pub missing_times: Vec<f64>,
    pub pass: bool,
}

/// Checks `lower(δ) ≼ u ≼ upper(δ)` at every `kδ` up to the horizon, tail-wise
/// with tolerance `10 h`.
pub fn check_squeeze(
    evo: &FreeEvolution,
    sol: &FreeBoundarySolution,
    rho0: &GridDensity,
    delta: f64,
    steps: usize,
    dt: Option<f64>,
) -> Result<SqueezeReport> {
    let barriers = compute_barriers(evo, rho0, delta, steps, dt.unwrap_or(delta / 16.0))?;
    Ok(squeeze_against(&barriers, &sol.u, 10.0 * evo.h()))
}

/// The comparison behind [`check_squeeze`], for given barriers and density.
pub fn squeeze_against(barriers: &Barriers, u: &Trajectory<GridDensity>, tolerance: f64) -> SqueezeReport {
    let mut excesses = Vec::new();
    let mut missing = Vec::new();
    for ((t, low), up) in barriers.lower.iter().zip(barriers.upper.frames()) {
        match u.at(t) {
            Some(uk) => excesses.push((t, order_excess(low, uk), order_excess(uk, up))),
            None => missing.push(t),
        }
    }
    let worst = excesses.iter().map(|e| e.1.max(e.2)).fold(f64::NEG_INFINITY, f64::max);
    let worst_margin = tolerance - worst;
    SqueezeReport {
        delta: barriers.delta,
        tolerance,
        pass: missing.is_empty() && !excesses.is_empty() && worst_margin >= 0.0,
        excesses,
        worst_margin,
        missing_times: missing,
    }
}

/// One path of the jump diffusion killed at `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KilledPathSample {
    pub x0: f64,
    /// Killing time, `None` when the path survives to the horizon.
    pub tau: Option<f64>,
    /// Position at `T/2` if alive then.
    pub x_half: Option<f64>,
    /// Position at `T` if alive then.
    pub x_end: Option<f64>,
}

/// Substeps per unit horizon used to locate a crossing once it is likely.
const LOCATE_STEPS: f64 = 2048.0;

/// Simulates one killed path started at `x0`.
///
/// Brownian motion with rate-1 jumps drawn from the kernel, absorbed when a
/// jump lands at or below `γ` or when the path meets the piecewise-linear
/// boundary. Crossings between sampled points are detected with the exact
/// Brownian-bridge probability `exp(-2 a b / Δ)`; when that probability is not
/// negligible the bridge is refined on substeps of `T/2048` to place `τ`.
pub fn simulate_killed_path<R: Rng + ?Sized>(
    x0: f64,
    gamma: &BoundaryCurve,
    kernel: &BranchingKernel,
    horizon: f64,
    rng: &mut R,
) -> KilledPathSample {
    let mut sample = KilledPathSample { x0, tau: None, x_half: None, x_end: None };
    if x0 <= gamma.at(0.0) {
        sample.tau = Some(0.0);
        return sample;
    }
    let half = 0.5 * horizon;
    let mut knots: Vec<f64> = gamma.times().iter().cloned().filter(|&t| t > 0.0 && t < horizon).collect();
    knots.push(half);
    knots.push(horizon);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let sub = horizon / LOCATE_STEPS;
    let mut x = x0;
    let mut s = 0.0;
    let mut next_jump = exp1(rng);
    let mut knot = 0;
    loop {
        let target = knots[knot].min(next_jump);
        let dt = target - s;
        let y = x + dt.sqrt() * gauss(rng);
        let (a, b) = (x - gamma.at(s), y - gamma.at(target));
        let cross = if b <= 0.0 { 1.0 } else { (-2.0 * a * b / dt).exp() };
        if cross > 1e-14 {
            if let Some(tau) = locate_crossing(s, x, target, y, gamma, sub, rng) {
                sample.tau = Some(tau);
                return sample;
            }
        }
        x = y;
        s = target;
        if target == next_jump && next_jump < knots[knot] {
            x += kernel.sample(rng);
            if x <= gamma.at(s) {
                sample.tau = Some(s);
                return sample;
            }
            next_jump = s + exp1(rng);
            continue;
        }
        if s == half {
            sample.x_half = Some(x);
        }
        if s >= horizon {
            sample.x_end = Some(x);
            return sample;
        }
        knot += 1;
    }
}

/// Refines a Brownian bridge from `(s0, x0)` to `(s1, x1)` on substeps of
/// length at most `sub` and returns the first crossing time, if any.
fn locate_crossing<R: Rng + ?Sized>(
    s0: f64,
    x0: f64,
    s1: f64,
    x1: f64,
    gamma: &BoundaryCurve,
    sub: f64,
    rng: &mut R,
) -> Option<f64> {
    let n = ((s1 - s0) / sub).ceil().max(1.0) as usize;
    let step = (s1 - s0) / n as f64;
    let (mut t, mut x) = (s0, x0);
    for i in 1..=n {
        let tn = if i == n { s1 } else { s0 + i as f64 * step };
        let xn = if i == n {
            x1
        } else {
            let rest = s1 - t;
            let mean = x + (x1 - x) * (tn - t) / rest;
            let var = (tn - t) * (s1 - tn) / rest;
            mean + var.max(0.0).sqrt() * gauss(rng)
        };
        let (a, b) = (x - gamma.at(t), xn - gamma.at(tn));
        if a <= 0.0 {
            return Some(t);
        }
        let crossed = b <= 0.0 || rng.random::<f64>() < (-2.0 * a * b / (tn - t)).exp();
        if crossed {
            return Some(t + rng.random::<f64>() * (tn - t));
        }
        t = tn;
        x = xn;
    }
    None
}

/// Outcome of [`validate_probabilistic`].
#[derive(Debug, Clone)]
pub struct ProbabilisticReport {
    pub replicas: usize,
    pub killed: usize,
    /// Killing times on `[0, T]` against `Exp(1)` truncated to `[0, T]`.
    pub ks: KsResult,
    /// `(t, sup_r |e^t (survivors in [r,∞))/R - ∫_r^∞ u(·,t)|)` at `T/2` and `T`.
    pub tail_discrepancy: Vec<(f64, f64)>,
}

/// Runs `replicas` killed paths from `ρ0` with replica streams of `seed`.
pub fn validate_probabilistic(
    sol: &FreeBoundarySolution,
    rho0: &InitialDensity,
    kernel: &BranchingKernel,
    replica_count: usize,
    seed: u64,
) -> Result<ProbabilisticReport> {
    validate_against(sol, &sol.gamma, rho0, kernel, replica_count, seed)
}

/// As [`validate_probabilistic`] but killing at an arbitrary boundary.
pub fn validate_against(
    sol: &FreeBoundarySolution,
    gamma: &BoundaryCurve,
    rho0: &InitialDensity,
    kernel: &BranchingKernel,
    replica_count: usize,
    seed: u64,
) -> Result<ProbabilisticReport> {
    if replica_count == 0 {
        return Err(param("replica count must be positive"));
    }
    let horizon = sol.horizon();
    let paths = replicas(seed, replica_count, |_, rng| {
        let x0 = rho0.sample(rng);
        simulate_killed_path(x0, gamma, kernel, horizon, rng)
    });
    let taus: Vec<f64> = paths.iter().filter_map(|p| p.tau).collect();
    let norm = 1.0 - (-horizon).exp();
    let ks = ks_one_sample(&taus, |t| ((1.0 - (-t.clamp(0.0, horizon)).exp()) / norm).clamp(0.0, 1.0));
    let mut tail_discrepancy = Vec::new();
    for (t, pick) in [(0.5 * horizon, 0usize), (horizon, 1usize)] {
        let Some(ut) = sol.u.at(t) else {
            return Err(Error::TimeGrid(format!("solution has no frame at t = {t}")));
        };
        let alive: Vec<f64> = paths.iter().filter_map(|p| if pick == 0 { p.x_half } else { p.x_end }).collect();
        let w = t.exp() / replica_count as f64;
        let mu = EmpiricalMeasure::uniform(&alive, w);
        tail_discrepancy.push((t, mt_distance(&mu, ut)));
    }
    Ok(ProbabilisticReport { replicas: replica_count, killed: taus.len(), ks, tail_discrepancy })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_indicator_edge() {
        let f = GridDensity::from_fn(-1.0, 1e-3, 3000, |x| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 }).unwrap();
        assert!(boundary_extract(&f, 0.5).unwrap().abs() < 1e-3);
        assert!(matches!(boundary_extract(&f, 2.0), Err(Error::BelowThreshold(_))));
    }

    #[test]
    fn projection_has_unit_tail_from_cut() {
        let f = GridDensity::from_fn(-1.0, 1e-2, 200, |x| (1.0 - x * x).max(0.0)).unwrap();
        let p = project_right_of(&f, -0.333).unwrap();
        assert!((p.mass() - 1.0).abs() < 1e-12);
        let j = p.cell_of(-0.333).unwrap();
        let kept = p.values()[j] / p.values()[j + 1] * f.values()[j + 1] / f.values()[j];
        assert!((kept - (p.edge(j + 1) + 0.333) / p.h()).abs() < 1e-9);
        assert!(p.values().iter().enumerate().all(|(j, v)| p.edge(j + 1) > -0.333 || *v == 0.0));
    }

    #[test]
    fn killed_path_far_boundary_never_dies() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let g = BoundaryCurve::new(vec![0.0, 1.0], vec![-50.0, -50.0]).unwrap();
        let mut rng = crate::rng::stream(0, 0);
        for _ in 0..100 {
            let s = simulate_killed_path(0.0, &g, &k, 1.0, &mut rng);
            assert!(s.tau.is_none());
            assert!(s.x_half.is_some() && s.x_end.is_some());
        }
    }

    #[test]
    fn killed_path_static_boundary_matches_reflection_principle() {
        // Pure Brownian motion (jumps to the left of a far boundary are rare
        // enough to ignore here): P(hit -1 before 1 starting at 0) = 2 Φ(-1).
        let k = BranchingKernel::symmetric(1e-9).unwrap();
        let g = BoundaryCurve::new(vec![0.0, 1.0], vec![-1.0, -1.0]).unwrap();
        let mut rng = crate::rng::stream(1, 0);
        let n = 20_000;
        let dead = (0..n).filter(|_| simulate_killed_path(0.0, &g, &k, 1.0, &mut rng).tau.is_some()).count();
        let p = dead as f64 / n as f64;
        let exact = 0.317_310_507_862_914_1;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p - exact).abs() < 4.0 * se, "p {p}");
    }
}
