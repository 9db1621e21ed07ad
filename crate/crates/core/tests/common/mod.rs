#![allow(dead_code)]

use nbbm_core::freeevo::FreeEvolution;
use nbbm_core::grid::{default_window, GridDensity};
use nbbm_core::kernel::{make_default_kernel, make_default_rho0};
use nbbm_core::{BranchingKernel, InitialDensity};

pub const A: f64 = 1.0;
pub const XI: f64 = 0.25;
pub const H: f64 = 1e-3;

pub struct Setup {
    pub kernel: BranchingKernel,
    pub rho0: InitialDensity,
    pub grid: GridDensity,
    pub evo: FreeEvolution,
}

/// Default kernel and initial density, discretized on the window for `horizon`.
pub fn setup(horizon: f64) -> Setup {
    setup_with(horizon, make_default_kernel(XI, 0.0).unwrap())
}

pub fn setup_with(horizon: f64, kernel: BranchingKernel) -> Setup {
    let rho0 = make_default_rho0(A).unwrap();
    let (lo, hi) = default_window(A, horizon, XI);
    let cells = ((hi - lo) / H).round() as usize;
    let grid = GridDensity::from_fn(lo, H, cells, |x| rho0.density(x)).unwrap().normalized().unwrap();
    let evo = FreeEvolution::new(&kernel, H).unwrap();
    Setup { kernel, rho0, grid, evo }
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
