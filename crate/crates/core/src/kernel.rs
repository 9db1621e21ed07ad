//! Smooth compactly supported densities: the branching displacement kernel
//! and the initial particle density.

use rand::Rng;

use crate::error::{param, Result};

/// Nodes of the inverse-CDF table used for sampling.
pub const SAMPLER_NODES: usize = 1 << 14;

const MEAN_QUADRATURE_NODES: usize = 4096;

// 4-point Gauss-Legendre on [-1, 1].
const GL_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_W: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Normalized `exp(-1/(1-s^2)) * exp(tilt * (z - center))` on `(lo, hi)`,
/// with `s` the position rescaled to `(-1, 1)`.
///
/// All derivatives vanish at both endpoints, so the density is `C^inf` on the
/// line. Sampling goes through a monotone inverse-CDF table with
/// [`SAMPLER_NODES`] intervals and linear interpolation.
#[derive(Debug, Clone)]
pub struct SmoothBump {
    lo: f64,
    hi: f64,
    tilt: f64,
    norm: f64,
    cdf_table: Vec<f64>,
}

impl SmoothBump {
    pub fn new(lo: f64, hi: f64, tilt: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(param(format!("bump support [{lo}, {hi}] is empty")));
        }
        if !tilt.is_finite() {
            return Err(param("bump tilt must be finite"));
        }
        let mut bump = SmoothBump { lo, hi, tilt, norm: 1.0, cdf_table: Vec::new() };
        let step = (hi - lo) / SAMPLER_NODES as f64;
        let mut table = Vec::with_capacity(SAMPLER_NODES + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for j in 0..SAMPLER_NODES {
            let a = lo + j as f64 * step;
            let mid = a + 0.5 * step;
            let piece: f64 = GL_X
                .iter()
                .zip(GL_W.iter())
                .map(|(x, w)| w * bump.unnormalized(mid + 0.5 * step * x))
                .sum();
            acc += 0.5 * step * piece;
            table.push(acc);
        }
        if !(acc > 0.0) {
            return Err(param("bump has zero mass (tilt too extreme)"));
        }
        for c in &mut table {
            *c /= acc;
        }
        // Pin the last node against rounding.
        *table.last_mut().unwrap() = 1.0;
        bump.norm = acc;
        bump.cdf_table = table;
        Ok(bump)
    }

    fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn unnormalized(&self, z: f64) -> f64 {
        if z <= self.lo || z >= self.hi {
            return 0.0;
        }
        let s = (2.0 * z - self.lo - self.hi) / (self.hi - self.lo);
        let q = 1.0 - s * s;
        if q <= 0.0 {
            return 0.0;
        }
        (-1.0 / q + self.tilt * (z - self.center())).exp()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn density(&self, z: f64) -> f64 {
        self.unnormalized(z) / self.norm
    }

    /// CDF from the sampler table (linear between nodes).
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= self.lo {
            return 0.0;
        }
        if z >= self.hi {
            return 1.0;
        }
        let pos = (z - self.lo) / (self.hi - self.lo) * SAMPLER_NODES as f64;
        let j = (pos.floor() as usize).min(SAMPLER_NODES - 1);
        let frac = pos - j as f64;
        self.cdf_table[j] + frac * (self.cdf_table[j + 1] - self.cdf_table[j])
    }

    /// Inverse of [`SmoothBump::cdf`].
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let table = &self.cdf_table;
        // First node strictly above u, kept inside the table.
        let upper = table.partition_point(|&c| c <= u).clamp(1, SAMPLER_NODES);
        let j = upper - 1;
        let (c0, c1) = (table[j], table[j + 1]);
        let step = (self.hi - self.lo) / SAMPLER_NODES as f64;
        let z0 = self.lo + j as f64 * step;
        if c1 > c0 {
            z0 + step * ((u - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            z0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// `∫ z p(z) dz` by the trapezoid rule, which converges spectrally here.
    pub fn mean(&self) -> f64 {
        let (num, den) = tilted_moments(self.lo, self.hi, self.tilt);
        num / den
    }
}

fn tilted_moments(lo: f64, hi: f64, tilt: f64) -> (f64, f64) {
    let n = MEAN_QUADRATURE_NODES;
    let step = (hi - lo) / n as f64;
    let center = 0.5 * (lo + hi);
    let (mut m0, mut m1) = (0.0, 0.0);
    for j in 1..n {
        let z = lo + j as f64 * step;
        let s = (2.0 * z - lo - hi) / (hi - lo);
        let q = 1.0 - s * s;
        let v = (-1.0 / q + tilt * (z - center)).exp();
        m0 += v;
        m1 += v * z;
    }
    (m1 * step, m0 * step)
}

/// Which side of the parent a one-sided kernel places the offspring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Displacement density `p(0, ·)` of a newborn relative to its parent.
///
/// `p(x, y)` is always evaluated as `p(0, y - x)`.
#[derive(Debug, Clone)]
pub struct BranchingKernel {
    range: f64,
    bump: SmoothBump,
}

impl BranchingKernel {
    /// Symmetric bump on `[-range, range]`, exponentially tilted so that its
    /// mean equals `mean_shift`.
    pub fn with_mean(range: f64, mean_shift: f64) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(param(format!("kernel range must be positive, got {range}")));
        }
        if !(mean_shift.abs() < 0.5 * range) {
            return Err(param(format!(
                "mean shift {mean_shift} outside (-range/2, range/2) for range {range}"
            )));
        }
        let tilt = if mean_shift == 0.0 {
            0.0
        } else {
            solve_tilt(-range, range, mean_shift)?
        };
        Ok(BranchingKernel { range, bump: SmoothBump::new(-range, range, tilt)? })
    }

    pub fn symmetric(range: f64) -> Result<Self> {
        Self::with_mean(range, 0.0)
    }

    /// Bump supported in `(-range, 0)` or `(0, range)`.
    pub fn one_sided(range: f64, side: Side) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(param(format!("kernel range must be positive, got {range}")));
        }
        let bump = match side {
            Side::Left => SmoothBump::new(-range, 0.0, 0.0)?,
            Side::Right => SmoothBump::new(0.0, range, 0.0)?,
        };
        Ok(BranchingKernel { range, bump })
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn density(&self, z: f64) -> f64 {
        self.bump.density(z)
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.bump.cdf(z)
    }

    pub fn mean(&self) -> f64 {
        self.bump.mean()
    }

    pub fn support(&self) -> (f64, f64) {
        self.bump.support()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.bump.sample(rng)
    }

    pub fn shape(&self) -> &SmoothBump {
        &self.bump
    }
}

fn solve_tilt(lo: f64, hi: f64, target: f64) -> Result<f64> {
    let mean_at = |t: f64| {
        let (m1, m0) = tilted_moments(lo, hi, t);
        m1 / m0
    };
    let scale = 1.0 / (hi - lo);
    let (mut a, mut b) = (-scale, scale);
    let mut guard = 0;
    while mean_at(a) > target {
        a *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(param("tilt bracket not found"));
        }
    }
    while mean_at(b) < target {
        b *= 2.0;
        guard += 1;
        if guard > 120 {
            return Err(param("tilt bracket not found"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mean_at(mid) < target {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Smooth bump on `[-A, A]`, the density of the i.i.d. initial positions.
#[derive(Debug, Clone)]
pub struct InitialDensity {
    half_width: f64,
    bump: SmoothBump,
}

impl InitialDensity {
    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(param(format!("support half-width must be positive, got {half_width}")));
        }
        Ok(InitialDensity { half_width, bump: SmoothBump::new(-half_width, half_width, 0.0)? })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn density(&self, r: f64) -> f64 {
        self.bump.density(r)
    }

    pub fn cdf(&self, r: f64) -> f64 {
        self.bump.cdf(r)
    }

    /// Left edge of the support.
    pub fn left_edge(&self) -> f64 {
        -self.half_width
    }

    pub fn sup(&self) -> f64 {
        self.bump.density(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.bump.sample(rng)
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// C^inf bump kernel on `[-xi, xi]` with mean `mean_shift`.
pub fn make_default_kernel(xi: f64, mean_shift: f64) -> Result<BranchingKernel> {
    BranchingKernel::with_mean(xi, mean_shift)
}

/// C^inf unit-mass bump on `[-a, a]`.
pub fn make_default_rho0(a: f64) -> Result<InitialDensity> {
    InitialDensity::new(a)
}
