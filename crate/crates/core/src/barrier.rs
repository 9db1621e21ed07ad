//! Cut operators, the deterministic barriers, and their separating element.

use crate::error::{param, Error, Result};
use crate::freeevo::{FreeEvolution, Propagator};
use crate::grid::GridDensity;
use crate::measure::{Trajectory, TrajectoryMeta, Variant};

/// Largest dyadic depth tried by [`separating_element`].
pub const MAX_DEPTH: u32 = 10;

/// A cut density and the point `V` left of which it vanishes.
#[derive(Debug, Clone)]
pub struct Cut {
    pub density: GridDensity,
    pub point: f64,
}

/// `C-_δ`: removes mass `1 - e^-δ` from the left of a unit-mass density.
pub fn cut_lower(v: &GridDensity, delta: f64) -> Result<Cut> {
    let m = v.mass();
    if !(m > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    if (m - 1.0).abs() >= 1e-6 {
        return Err(param(format!("lower cut expects unit mass, got {m}")));
    }
    let (density, point) = v.keep_right_tail((-delta).exp())?;
    Ok(Cut { density, point })
}

/// `C+_δ`: removes mass `e^δ - 1` from the left of a density of mass `e^δ`.
pub fn cut_upper(v: &GridDensity, delta: f64) -> Result<Cut> {
    let m = v.mass();
    if !(m > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    if (m - delta.exp()).abs() >= 1e-5 {
        return Err(param(format!("upper cut expects mass e^delta = {}, got {m}", delta.exp())));
    }
    let (density, point) = v.keep_right_tail(1.0)?;
    Ok(Cut { density, point })
}

/// `h Σ |upper - lower|`.
pub fn l1_gap(upper: &GridDensity, lower: &GridDensity) -> Result<f64> {
    upper.l1_distance(lower)
}

/// Both barriers sampled at `t_k = k δ`, with the cut points used at each step.
#[derive(Debug, Clone)]
pub struct Barriers {
    pub delta: f64,
    pub upper: Trajectory<GridDensity>,
    pub lower: Trajectory<GridDensity>,
    /// `V+` of the cut applied at `t_k`, `k = 1..=K`.
    pub upper_cuts: Vec<f64>,
    /// `V-` of the cut applied right after `t_k`, `k = 0..K`.
    pub lower_cuts: Vec<f64>,
}

impl Barriers {
    /// Barriers between stamps: `T*_{t - kδ}` applied to the values at `kδ`.
    pub fn at_time(&self, evo: &FreeEvolution, t: f64, dt: f64) -> Result<(GridDensity, GridDensity)> {
        let times = self.upper.times();
        let last = *times.last().unwrap();
        if !(0.0..=last).contains(&t) {
            return Err(param(format!("time {t} outside [0, {last}]")));
        }
        let k = ((t / self.delta).floor() as usize).min(times.len() - 1);
        let s = t - times[k];
        if s <= 1e-12 * (1.0 + t) {
            return Ok((self.upper.frames()[k].clone(), self.lower.frames()[k].clone()));
        }
        let up = evo.evolve_free(&self.upper.frames()[k], s, dt)?;
        let low = evo.evolve_free(&self.lower.frames()[k], s, dt)?;
        Ok((up, low))
    }
}

fn stamps(delta: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 * delta).collect()
}

/// `lower_k = (T*_δ C-_δ)^k ρ0` and `upper_k = (C+_δ T*_δ)^k ρ0`.
///
/// `T*_δ` is precomputed once as a single stencil with inner step `dt`.
pub fn compute_barriers(
    evo: &FreeEvolution,
    rho0: &GridDensity,
    delta: f64,
    steps: usize,
    dt: f64,
) -> Result<Barriers> {
    let m = rho0.mass();
    if (m - 1.0).abs() >= 1e-6 {
        return Err(param(format!("initial density must have unit mass, got {m}")));
    }
    if !(delta > 0.0) {
        return Err(param("delta must be positive"));
    }
    let prop = evo.propagator(delta, dt)?;
    let (up, low) = rayon::join(|| upper_iteration(&prop, rho0, delta, steps), || {
        lower_iteration(&prop, rho0, delta, steps)
    });
    let (upper, upper_cuts) = up?;
    let (lower, lower_cuts) = low?;
    let meta = |variant| TrajectoryMeta { variant, n: 0, delta, seed: None };
    Ok(Barriers {
        delta,
        upper: Trajectory::new(stamps(delta, steps), upper, meta(Variant::Upper))?,
        lower: Trajectory::new(stamps(delta, steps), lower, meta(Variant::Lower))?,
        upper_cuts,
        lower_cuts,
    })
}

fn upper_iteration(prop: &Propagator, rho0: &GridDensity, delta: f64, steps: usize) -> Result<(Vec<GridDensity>, Vec<f64>)> {
    let mut frames = vec![rho0.clone()];
    let mut cuts = Vec::with_capacity(steps);
    for _ in 0..steps {
        let grown = prop.apply(frames.last().unwrap())?;
        let cut = cut_upper(&grown, delta)?;
        cuts.push(cut.point);
        frames.push(cut.density);
    }
    Ok((frames, cuts))
}

fn lower_iteration(prop: &Propagator, rho0: &GridDensity, delta: f64, steps: usize) -> Result<(Vec<GridDensity>, Vec<f64>)> {
    let mut frames = vec![rho0.clone()];
    let mut cuts = Vec::with_capacity(steps);
    for _ in 0..steps {
        let cut = cut_lower(frames.last().unwrap(), delta)?;
        cuts.push(cut.point);
        frames.push(prop.apply(&cut.density)?);
    }
    Ok((frames, cuts))
}

/// One level of the dyadic cascade.
#[derive(Debug, Clone)]
pub struct CascadeLevel {
    pub delta: f64,
    /// `l1_gap` at the horizon.
    pub gap: f64,
    pub barriers: Barriers,
}

#[derive(Debug, Clone)]
pub struct SeparatingElement {
    /// Midpoint of the finest barriers at each of their stamps.
    pub u: Trajectory<GridDensity>,
    pub levels: Vec<CascadeLevel>,
}

impl SeparatingElement {
    pub fn finest(&self) -> &CascadeLevel {
        self.levels.last().unwrap()
    }
}

/// Number of steps of size `delta` in `horizon`, if `delta` divides it.
pub fn dyadic_steps(horizon: f64, delta: f64) -> Result<usize> {
    let k = (horizon / delta).round();
    if !(k >= 1.0) || (k * delta - horizon).abs() > 1e-9 * horizon {
        return Err(param(format!("delta {delta} does not divide the horizon {horizon}")));
    }
    Ok(k as usize)
}

/// Halves `δ` from `delta_start` until the barrier gap at `horizon` drops
/// below `tol`, then returns the midpoint of the last pair of barriers.
///
/// `dt` is the inner step of `T*_δ`; `None` uses `δ/16` at each level.
pub fn separating_element(
    evo: &FreeEvolution,
    rho0: &GridDensity,
    horizon: f64,
    delta_start: f64,
    tol: f64,
    dt: Option<f64>,
) -> Result<SeparatingElement> {
    if !(tol > 20.0 * evo.h()) {
        return Err(param(format!("tolerance {tol} must exceed 20 h = {}", 20.0 * evo.h())));
    }
    let mut steps = dyadic_steps(horizon, delta_start)?;
    let mut levels = Vec::new();
    for _ in 0..=MAX_DEPTH {
        let delta = horizon / steps as f64;
        let barriers = compute_barriers(evo, rho0, delta, steps, dt.unwrap_or(delta / 16.0))?;
        let gap = l1_gap(barriers.upper.last().unwrap(), barriers.lower.last().unwrap())?;
        levels.push(CascadeLevel { delta, gap, barriers });
        if gap < tol {
            let b = &levels.last().unwrap().barriers;
            let frames = b
                .upper
                .frames()
                .iter()
                .zip(b.lower.frames())
                .map(|(a, c)| a.midpoint(c))
                .collect::<Result<Vec<_>>>()?;
            let u = Trajectory::new(
                b.upper.times().to_vec(),
                frames,
                TrajectoryMeta { variant: Variant::Separating, n: 0, delta, seed: None },
            )?;
            return Ok(SeparatingElement { u, levels });
        }
        steps *= 2;
    }
    let last = levels.last().unwrap();
    Err(Error::Convergence { tol, gap: last.gap, delta: last.delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::BranchingKernel;
    use crate::rng::stream;
    use rand::Rng;

    fn uniform01(h: f64, scale: f64) -> GridDensity {
        GridDensity::from_fn(-0.5, h, (2.0 / h).round() as usize, |x| {
            if (0.0..1.0).contains(&x) {
                scale
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn lower_cut_of_uniform() {
        let c = cut_lower(&uniform01(1e-3, 1.0), 2f64.ln()).unwrap();
        assert!((c.point - 0.5).abs() < 1e-9);
        assert!((c.density.mass() - 0.5).abs() < 1e-10);
        assert!((c.density.tail_mass(0.5) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn tiny_lower_cut_keeps_nearly_everything() {
        let c = cut_lower(&uniform01(1e-3, 1.0), 1e-8).unwrap();
        assert!((c.density.mass() - (-1e-8f64).exp()).abs() < 1e-12);
        assert!(c.point.abs() < 1e-6);
    }

    #[test]
    fn upper_cut_of_scaled_uniform() {
        let d: f64 = 0.3;
        let c = cut_upper(&uniform01(1e-3, d.exp()), d).unwrap();
        assert!((c.point - (1.0 - (-d).exp())).abs() < 1e-9);
        assert!((c.density.mass() - 1.0).abs() < 1e-10);
        let c0 = cut_upper(&uniform01(1e-3, 1.0), 0.0).unwrap();
        assert_eq!(c0.density, uniform01(1e-3, 1.0));
    }

    fn two_bumps(h: f64, left: f64, right: f64) -> GridDensity {
        GridDensity::from_fn(-2.0, h, (4.0 / h).round() as usize, |x| {
            let b = |c: f64| if (x - c).abs() < 0.25 { 2.0 } else { 0.0 };
            left * b(-1.0) + right * b(1.0)
        })
        .unwrap()
    }

    #[test]
    fn cuts_remove_left_bump_exactly() {
        let h = 1e-3;
        let v = two_bumps(h, 0.3, 0.7);
        let c = cut_lower(&v, -(0.7f64).ln()).unwrap();
        let oracle = two_bumps(h, 0.0, 0.7);
        assert!(c.density.l1_distance(&oracle).unwrap() < 1e-10);

        let d: f64 = 0.2;
        let v = two_bumps(h, d.exp() - 1.0, 1.0);
        let c = cut_upper(&v, d).unwrap();
        assert!(c.density.l1_distance(&two_bumps(h, 0.0, 1.0)).unwrap() < 1e-10);
    }

    #[test]
    fn cut_preconditions() {
        assert!(cut_lower(&uniform01(1e-3, 0.5), 0.1).is_err());
        assert!(cut_upper(&uniform01(1e-3, 1.0), 0.1).is_err());
        let zero = GridDensity::zeros(0.0, 0.1, 10).unwrap();
        assert!(matches!(cut_lower(&zero, 0.1), Err(Error::EmptyMeasure)));
    }

    #[test]
    fn cut_commutation_identity() {
        let mut rng = stream(9, 0);
        for _ in 0..50 {
            let h = 1e-2;
            let vals: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
            let w = GridDensity::new(-1.5, h, vals).unwrap().normalized().unwrap();
            let d = rng.random_range(0.01..0.5);
            let a = cut_lower(&w, d).unwrap();
            let b = cut_upper(&w.scaled(d.exp()), d).unwrap();
            assert!((a.point - b.point).abs() < 1e-9);
            let lhs = a.density.scaled(d.exp());
            assert!(lhs.l1_distance(&b.density).unwrap() < 1e-10);
        }
    }

    #[test]
    fn barriers_start_at_rho0_and_keep_unit_mass() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let evo = FreeEvolution::new(&k, 0.01).unwrap();
        let rho0 = GridDensity::from_fn(-4.0, 0.01, 800, |x| (1.0 - x * x).max(0.0)).unwrap().normalized().unwrap();
        let b = compute_barriers(&evo, &rho0, 0.125, 4, 0.125 / 16.0).unwrap();
        assert_eq!(b.upper.frames()[0], rho0);
        assert_eq!(b.lower.frames()[0], rho0);
        for (u, l) in b.upper.frames().iter().zip(b.lower.frames()) {
            assert!((u.mass() - 1.0).abs() < 1e-6);
            assert!((l.mass() - 1.0).abs() < 1e-6);
        }
        assert_eq!(l1_gap(&b.upper.frames()[0], &b.lower.frames()[0]).unwrap(), 0.0);
    }
}
