//! Free evolution `∂ρ = ½ρ'' + ∫ρ(z) p(z,·) dz` and its killed variant on a
//! uniform grid.
//!
//! Every operator is a convolution on the grid: the creation operator `P*`
//! uses hat-function weights of the kernel, the heat step uses the exact
//! cell-averaged Gaussian. One time step is the Strang splitting
//! creation/2, heat, creation/2, with the creation half step truncated at
//! second order.

use statrs::function::erf::erfc;

use crate::error::{param, precondition, Error, Result};
use crate::grid::GridDensity;
use crate::kernel::BranchingKernel;

/// Values smaller than this fraction of the maximum are dropped from the
/// outer tails after every step.
pub const TRIM: f64 = 1e-20;

/// Largest admissible mass loss through the window edges, relative to the total.
pub const MAX_LEAK: f64 = 1e-6;

// 8-point Gauss-Legendre on [-1, 1].
const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Weights `w[i]` placed at offsets `first + i`.
#[derive(Debug, Clone)]
pub struct Stencil {
    first: isize,
    weights: Vec<f64>,
}

impl Stencil {
    fn identity() -> Self {
        Stencil { first: 0, weights: vec![1.0] }
    }

    pub fn first(&self) -> isize {
        self.first
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn reversed(&self) -> Self {
        let mut w = self.weights.clone();
        w.reverse();
        Stencil { first: -(self.first + self.weights.len() as isize - 1), weights: w }
    }

    fn convolve(&self, other: &Stencil) -> Stencil {
        let mut w = vec![0.0; self.weights.len() + other.weights.len() - 1];
        for (i, a) in self.weights.iter().enumerate() {
            for (j, b) in other.weights.iter().enumerate() {
                w[i + j] += a * b;
            }
        }
        Stencil { first: self.first + other.first, weights: w }
    }

    fn axpy(&self, c: f64, other: &Stencil) -> Stencil {
        let lo = self.first.min(other.first);
        let hi = (self.first + self.weights.len() as isize).max(other.first + other.weights.len() as isize);
        let mut w = vec![0.0; (hi - lo) as usize];
        for (i, a) in self.weights.iter().enumerate() {
            w[(self.first - lo) as usize + i] += a;
        }
        for (i, b) in other.weights.iter().enumerate() {
            w[(other.first - lo) as usize + i] += c * b;
        }
        Stencil { first: lo, weights: w }
    }

    /// `dst[i + d] += src[i] w_d` over the nonzero range of `src`.
    /// Returns the weight that fell outside `dst`.
    fn scatter(&self, src: &[f64], range: (usize, usize), dst: &mut [f64]) -> f64 {
        let m = dst.len() as isize;
        let len = self.weights.len() as isize;
        let mut leaked = 0.0;
        for i in range.0..range.1 {
            let v = src[i];
            if v == 0.0 {
                continue;
            }
            let t0 = i as isize + self.first;
            if t0 >= 0 && t0 + len <= m {
                let out = &mut dst[t0 as usize..(t0 + len) as usize];
                for (o, w) in out.iter_mut().zip(&self.weights) {
                    *o += v * w;
                }
            } else {
                for (k, w) in self.weights.iter().enumerate() {
                    let t = t0 + k as isize;
                    if t >= 0 && t < m {
                        dst[t as usize] += v * w;
                    } else {
                        leaked += v * w;
                    }
                }
            }
        }
        leaked
    }
}

/// `E[(X - c)^+]` for `X ~ N(0, s^2)`.
fn call_price(c: f64, s: f64) -> f64 {
    let z = c / s;
    s * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() - c * 0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Cell-to-cell transfer of a Gaussian step of variance `dt`, truncated at 8
/// standard deviations and renormalized.
pub fn heat_stencil(dt: f64, h: f64) -> Stencil {
    if dt <= 0.0 {
        return Stencil::identity();
    }
    let s = dt.sqrt();
    let reach = (8.0 * s / h).ceil() as isize + 1;
    let mut w: Vec<f64> = (-reach..=reach)
        .map(|d| {
            let d = d as f64;
            let v = (call_price((d - 1.0) * h, s) - 2.0 * call_price(d * h, s) + call_price((d + 1.0) * h, s)) / h;
            v.max(0.0)
        })
        .collect();
    // Enforce exact symmetry, then unit sum.
    let n = w.len();
    for i in 0..n / 2 {
        let avg = 0.5 * (w[i] + w[n - 1 - i]);
        w[i] = avg;
        w[n - 1 - i] = avg;
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Stencil { first: -reach, weights: w }
}

/// `W_d = ∫ p(s) Λ(s/h - d) ds` with `Λ` the unit hat, renormalized to unit sum.
pub fn creation_stencil(kernel: &BranchingKernel, h: f64) -> Stencil {
    let (lo, hi) = kernel.support();
    let dmin = (lo / h).floor() as isize - 1;
    let dmax = (hi / h).ceil() as isize + 1;
    let mut w = Vec::with_capacity((dmax - dmin + 1) as usize);
    for d in dmin..=dmax {
        let c = d as f64 * h;
        let mut acc = 0.0;
        for (a, b, rising) in [(c - h, c, true), (c, c + h, false)] {
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for (x, wt) in GL8_X.iter().zip(&GL8_W) {
                let s = mid + half * x;
                let hat = if rising { (s - a) / h } else { (b - s) / h };
                acc += wt * half * kernel.density(s) * hat;
            }
        }
        w.push(acc / h);
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Stencil { first: dmin, weights: w }
}

fn nonzero_range(v: &[f64]) -> Option<(usize, usize)> {
    let lo = v.iter().position(|&x| x != 0.0)?;
    let hi = v.iter().rposition(|&x| x != 0.0)? + 1;
    Some((lo, hi))
}

fn trim_tails(v: &mut [f64]) {
    let Some((lo, hi)) = nonzero_range(v) else { return };
    let max = v[lo..hi].iter().cloned().fold(0.0, f64::max);
    let cut = max * TRIM;
    let mut i = lo;
    while i < hi && v[i] < cut {
        v[i] = 0.0;
        i += 1;
    }
    let mut j = hi;
    while j > i && v[j - 1] < cut {
        v[j - 1] = 0.0;
        j -= 1;
    }
}

/// Boundary `γ(s)` sampled at increasing times and interpolated linearly.
/// `-∞` stands for no boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl BoundaryCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(param("boundary needs matching, nonempty time and value lists"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::TimeGrid("boundary times must increase strictly".into()));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(param("boundary values must be finite or -inf"));
        }
        Ok(BoundaryCurve { times, values })
    }

    /// No boundary at all.
    pub fn absent() -> Self {
        BoundaryCurve { times: vec![0.0], values: vec![f64::NEG_INFINITY] }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Constant outside the sampled range.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (a, b) = (self.values[k], self.values[k + 1]);
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        a + w * (b - a)
    }

    pub fn shifted(&self, by: f64) -> Self {
        BoundaryCurve { times: self.times.clone(), values: self.values.iter().map(|v| v + by).collect() }
    }
}

/// Free evolution on grids of spacing `h` for one kernel.
#[derive(Debug, Clone)]
pub struct FreeEvolution {
    h: f64,
    creation: Stencil,
}

/// `T*_t` for a fixed `t`, stored as a single convolution stencil.
#[derive(Debug, Clone)]
pub struct Propagator {
    h: f64,
    time: f64,
    stencil: Stencil,
}

impl Propagator {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn apply(&self, f: &GridDensity) -> Result<GridDensity> {
        check_spacing(f, self.h)?;
        let mut out = vec![0.0; f.len()];
        if let Some(range) = nonzero_range(f.values()) {
            let leaked = self.stencil.scatter(f.values(), range, &mut out);
            check_leak(leaked, self.stencil.sum() * f.mass() / self.h)?;
        }
        Ok(f.with_values(out))
    }
}

fn check_spacing(f: &GridDensity, h: f64) -> Result<()> {
    if (f.h() - h).abs() > 1e-12 * h {
        return Err(Error::GridMismatch(format!("density spacing {} vs operator spacing {h}", f.h())));
    }
    Ok(())
}

fn check_leak(leaked: f64, total: f64) -> Result<()> {
    if leaked > MAX_LEAK * total {
        return Err(Error::Window { leaked, total });
    }
    Ok(())
}

fn steps_for(t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(param(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok((0, 0.0));
    }
    if !(dt > 0.0) {
        return Err(param(format!("time step must be positive, got {dt}")));
    }
    let n = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((n, t / n as f64))
}

impl FreeEvolution {
    pub fn new(kernel: &BranchingKernel, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(param(format!("grid spacing must be positive, got {h}")));
        }
        Ok(FreeEvolution { h, creation: creation_stencil(kernel, h) })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn creation(&self) -> &Stencil {
        &self.creation
    }

    /// The forward semigroup `e^{L t}`, acting on test functions: same
    /// splitting with the creation stencil reflected.
    pub fn adjoint(&self) -> Self {
        FreeEvolution { h: self.h, creation: self.creation.reversed() }
    }

    /// `I + a P + a²/2 P²` as one stencil.
    fn creation_half(&self, a: f64) -> Stencil {
        let p2 = self.creation.convolve(&self.creation);
        Stencil::identity().axpy(a, &self.creation).axpy(0.5 * a * a, &p2)
    }

    /// Applies `e^{L* t}` with Strang steps no longer than `dt`.
    pub fn evolve_free(&self, f: &GridDensity, t: f64, dt: f64) -> Result<GridDensity> {
        self.evolve_killed_inner(f, &BoundaryCurve::absent(), 0.0, t, dt)
    }

    /// `T*_t` applied to a unit mass in the cell containing `x`.
    ///
    /// The grid covers `[x - half_width, x + half_width]` and is aligned so
    /// that `x` is a cell center.
    pub fn transition_density(&self, x: f64, t: f64, dt: f64, half_width: f64) -> Result<GridDensity> {
        if !(t > 0.0) {
            return Err(param("transition density needs t > 0"));
        }
        let reach = (half_width / self.h).ceil() as usize;
        let mut values = vec![0.0; 2 * reach + 1];
        values[reach] = 1.0 / self.h;
        let f = GridDensity::new(x - (reach as f64 + 0.5) * self.h, self.h, values)?;
        self.evolve_free(&f, t, dt)
    }

    /// Precomputes `T*_t` as a stencil by evolving a single cell.
    pub fn propagator(&self, t: f64, dt: f64) -> Result<Propagator> {
        let (n, step) = steps_for(t, dt)?;
        let half = self.creation_half(0.5 * step);
        let heat = heat_stencil(step, self.h);
        let growth = (half.weights.len() as isize - 1) * 2 + heat.weights.len() as isize - 1;
        let reach = (growth as usize / 2 + 1) * n + 1;
        let mut cur = vec![0.0; 2 * reach + 1];
        cur[reach] = 1.0;
        let mut tmp = vec![0.0; cur.len()];
        for _ in 0..n {
            for op in [&half, &heat, &half] {
                tmp.iter_mut().for_each(|v| *v = 0.0);
                let range = nonzero_range(&cur).unwrap_or((0, 0));
                op.scatter(&cur, range, &mut tmp);
                std::mem::swap(&mut cur, &mut tmp);
            }
            trim_tails(&mut cur);
        }
        let (lo, hi) = nonzero_range(&cur).unwrap_or((reach, reach + 1));
        Ok(Propagator {
            h: self.h,
            time: t,
            stencil: Stencil { first: lo as isize - reach as isize, weights: cur[lo..hi].to_vec() },
        })
    }

    /// Evolution absorbed at `γ` on `[t0, t1]`.
    ///
    /// Offspring landing at or left of the boundary are removed, and each heat
    /// step only transmits paths that stay above the (linearly interpolated)
    /// boundary: the Gaussian weight between cell centers at distances `a`
    /// and `b` above it is multiplied by `1 - exp(-2ab/dt)`.
    pub fn evolve_killed(
        &self,
        f: &GridDensity,
        gamma: &BoundaryCurve,
        t0: f64,
        t1: f64,
        dt: f64,
    ) -> Result<GridDensity> {
        if !(t1 > t0) {
            return Err(param("killed evolution needs t1 > t0"));
        }
        let g0 = gamma.at(t0);
        let total = f.mass();
        let left: f64 = (0..f.len()).filter(|&j| f.center(j) <= g0).map(|j| f.values()[j] * f.h()).sum();
        if left > MAX_LEAK * total {
            return Err(precondition(format!("{left:.3e} of mass {total:.3e} lies left of the boundary")));
        }
        self.evolve_killed_inner(f, gamma, t0, t1, dt)
    }

    fn evolve_killed_inner(
        &self,
        f: &GridDensity,
        gamma: &BoundaryCurve,
        t0: f64,
        t1: f64,
        dt: f64,
    ) -> Result<GridDensity> {
        check_spacing(f, self.h)?;
        let (n, step) = steps_for(t1 - t0, dt)?;
        if n == 0 {
            return Ok(f.clone());
        }
        let half = self.creation_half(0.5 * step);
        let heat = heat_stencil(step, self.h);
        let mut cur = f.values().to_vec();
        let mut tmp = vec![0.0; cur.len()];
        let mut leaked = 0.0;
        let mut expected = f.mass() / self.h;
        let growth = half.sum();
        for s in 0..n {
            let (s0, s1) = (t0 + s as f64 * step, t0 + (s + 1) as f64 * step);
            let (g0, g1) = (gamma.at(s0), gamma.at(s1));
            expected *= growth * growth;

            tmp.iter_mut().for_each(|v| *v = 0.0);
            if let Some(range) = nonzero_range(&cur) {
                leaked += half.scatter(&cur, range, &mut tmp);
            }
            std::mem::swap(&mut cur, &mut tmp);
            zero_below(f, &mut cur, g0);

            tmp.iter_mut().for_each(|v| *v = 0.0);
            if let Some(range) = nonzero_range(&cur) {
                if g0 == f64::NEG_INFINITY && g1 == f64::NEG_INFINITY {
                    leaked += heat.scatter(&cur, range, &mut tmp);
                } else {
                    leaked += killed_heat(f, &heat, &cur, range, &mut tmp, g0, g1, step);
                }
            }
            std::mem::swap(&mut cur, &mut tmp);

            tmp.iter_mut().for_each(|v| *v = 0.0);
            if let Some(range) = nonzero_range(&cur) {
                leaked += half.scatter(&cur, range, &mut tmp);
            }
            std::mem::swap(&mut cur, &mut tmp);
            zero_below(f, &mut cur, g1);
            trim_tails(&mut cur);
        }
        check_leak(leaked, expected)?;
        Ok(f.with_values(cur))
    }

    /// Mass of `f` in `[r, ∞)`.
    pub fn tail_mass(f: &GridDensity, r: f64) -> f64 {
        f.tail_mass(r)
    }
}

/// Zeroes every cell whose center is at or left of `g`.
fn zero_below(grid: &GridDensity, v: &mut [f64], g: f64) {
    if g == f64::NEG_INFINITY {
        return;
    }
    let pos = (g - grid.x_min()) / grid.h() - 0.5;
    if pos < 0.0 {
        return;
    }
    let last = (pos.floor() as usize).min(v.len() - 1);
    for x in &mut v[..=last] {
        *x = 0.0;
    }
}

#[allow(clippy::too_many_arguments)]
fn killed_heat(
    grid: &GridDensity,
    heat: &Stencil,
    src: &[f64],
    range: (usize, usize),
    dst: &mut [f64],
    g0: f64,
    g1: f64,
    dt: f64,
) -> f64 {
    let m = dst.len() as isize;
    let reach = heat.first.unsigned_abs().max(heat.weights.len()) as f64 * grid.h();
    let mut leaked = 0.0;
    for i in range.0..range.1 {
        let v = src[i];
        if v == 0.0 {
            continue;
        }
        let a = grid.center(i) - g0;
        if a <= 0.0 {
            continue;
        }
        let b_min = a - reach - (g1 - g0).max(0.0);
        let lo = i as isize + heat.first;
        if b_min > 0.0 && 2.0 * a * b_min / dt > 50.0 && lo >= 0 && lo + (heat.weights.len() as isize) <= m {
            let out = &mut dst[lo as usize..lo as usize + heat.weights.len()];
            out.iter_mut().zip(&heat.weights).for_each(|(d, w)| *d += v * w);
            continue;
        }
        for (k, w) in heat.weights.iter().enumerate() {
            let t = i as isize + heat.first + k as isize;
            let b = grid.x_min() + (t as f64 + 0.5) * grid.h() - g1;
            if b <= 0.0 {
                continue;
            }
            let x = 2.0 * a * b / dt;
            let survive = if x > 50.0 { 1.0 } else { -(-x).exp_m1() };
            if t >= 0 && t < m {
                dst[t as usize] += v * w * survive;
            } else {
                leaked += v * w * survive;
            }
        }
    }
    leaked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel() -> BranchingKernel {
        BranchingKernel::symmetric(0.25).unwrap()
    }

    #[test]
    fn stencils_have_unit_sum_and_right_moments() {
        let k = BranchingKernel::with_mean(0.25, 0.05).unwrap();
        let c = creation_stencil(&k, 1e-3);
        assert!((c.sum() - 1.0).abs() < 1e-14);
        let mean: f64 = c.weights().iter().enumerate().map(|(i, w)| w * (c.first() + i as isize) as f64 * 1e-3).sum();
        assert!((mean - 0.05).abs() < 1e-9, "mean {mean}");
        let g = heat_stencil(0.01, 1e-3);
        let var: f64 = g.weights().iter().enumerate().map(|(i, w)| w * ((g.first() + i as isize) as f64 * 1e-3).powi(2)).sum();
        // Cell averaging adds h²/6 to the variance of the transfer.
        assert!((var - 0.01 - 1e-6 / 6.0).abs() < 1e-9, "var {var}");
    }

    #[test]
    fn zero_time_is_identity() {
        let e = FreeEvolution::new(&kernel(), 0.01).unwrap();
        let f = GridDensity::from_fn(-1.0, 0.01, 200, |x| (1.0 - x * x).max(0.0)).unwrap();
        assert_eq!(e.evolve_free(&f, 0.0, 0.1).unwrap(), f);
    }

    #[test]
    fn boundary_curve_interpolates() {
        let b = BoundaryCurve::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert_eq!(b.at(0.5), 1.0);
        assert_eq!(b.at(-1.0), 0.0);
        assert_eq!(b.at(3.0), 2.0);
        assert_eq!(BoundaryCurve::absent().at(0.3), f64::NEG_INFINITY);
        assert!(BoundaryCurve::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn window_leak_is_reported() {
        let e = FreeEvolution::new(&kernel(), 0.01).unwrap();
        let f = GridDensity::new(0.0, 0.01, vec![1.0; 20]).unwrap();
        assert!(matches!(e.evolve_free(&f, 0.5, 0.05), Err(Error::Window { .. })));
    }

    #[test]
    fn killed_precondition() {
        let e = FreeEvolution::new(&kernel(), 0.01).unwrap();
        let f = GridDensity::from_fn(-2.0, 0.01, 400, |x| (1.0 - x * x).max(0.0)).unwrap();
        let g = BoundaryCurve::new(vec![0.0], vec![0.0]).unwrap();
        assert!(matches!(e.evolve_killed(&f, &g, 0.0, 0.1, 0.01), Err(Error::Precondition(_))));
    }
}
