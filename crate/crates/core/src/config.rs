//! Run parameters and the semi-norm partition.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Parameters shared by the stochastic and deterministic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Particle count.
    pub n_particles: usize,
    /// Horizon.
    pub horizon: f64,
    /// Dyadic depth; `delta = 2^-depth * horizon`.
    pub depth: u32,
    /// Lower-barrier exponent in `(1/2, 1)`.
    pub alpha0: f64,
    /// Semi-norm cell exponent.
    pub beta: f64,
    /// Confinement exponent.
    pub b: f64,
    pub seed: u64,
    /// Grid spacing.
    pub h: f64,
    /// Left end of the grid window; `None` picks the default window.
    pub x_min: Option<f64>,
    /// Cell count; `None` picks the default window.
    pub cells: Option<usize>,
    /// Monte Carlo replicas.
    pub replicas: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_particles: 1000,
            horizon: 0.5,
            depth: 3,
            alpha0: 2.0 / 3.0,
            beta: 1.0 / 12.0,
            b: 1.0 / 12.0,
            seed: 42,
            h: 1e-3,
            x_min: None,
            cells: None,
            replicas: 50,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(param("N must be at least 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(param(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.depth > 40 {
            return Err(param("dyadic depth above 40"));
        }
        if !(self.alpha0 > 0.5 && self.alpha0 < 1.0) {
            return Err(param(format!("alpha0 must lie in (1/2, 1), got {}", self.alpha0)));
        }
        if !(self.beta > 0.0 && self.b > 0.0) {
            return Err(param("beta and b must be positive"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(param(format!("grid spacing must be positive, got {}", self.h)));
        }
        if let Some(x) = self.x_min {
            if !x.is_finite() {
                return Err(param("x_min must be finite"));
            }
        }
        if self.cells == Some(0) {
            return Err(param("cell count must be positive"));
        }
        if self.replicas == 0 {
            return Err(param("replica count must be positive"));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        dyadic_delta(self.horizon, self.depth)
    }

    pub fn steps(&self) -> usize {
        1usize << self.depth
    }

    pub fn partition(&self) -> Partition {
        Partition::for_n(self.n_particles, self.beta)
    }
}

/// `2^-n T`, exact in binary floating point.
pub fn dyadic_delta(horizon: f64, depth: u32) -> f64 {
    horizon * (-(depth as f64)).exp2()
}

/// Cells `[k w, (k+1) w)` anchored at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    width: f64,
}

impl Partition {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(param(format!("cell width must be positive, got {width}")));
        }
        Ok(Partition { width })
    }

    /// Width `N^-beta`.
    pub fn for_n(n: usize, beta: f64) -> Self {
        Partition { width: (n as f64).powf(-beta) }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn left(&self, k: i64) -> f64 {
        k as f64 * self.width
    }

    pub fn right(&self, k: i64) -> f64 {
        (k + 1) as f64 * self.width
    }

    /// Index of the cell containing `x`, consistent with [`Partition::left`].
    pub fn cell_of(&self, x: f64) -> i64 {
        let mut k = (x / self.width).floor() as i64;
        // Guard against rounding in the division.
        while self.left(k) > x {
            k -= 1;
        }
        while self.right(k) <= x {
            k += 1;
        }
        k
    }
}
