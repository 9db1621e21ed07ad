use anyhow::{ensure, Result};
use nbbm_core::freeevo::FreeEvolution;
use nbbm_core::grid::{default_window, GridDensity};
use nbbm_core::kernel::{make_default_kernel, make_default_rho0};
use nbbm_core::{BranchingKernel, InitialDensity};

use crate::spec::ExperimentSpec;

/// Kernel, initial density and its grid discretization for one spec.
#[derive(Debug, Clone)]
pub struct Model {
    pub kernel: BranchingKernel,
    pub rho0: InitialDensity,
    pub grid: GridDensity,
    pub evo: FreeEvolution,
}

impl Model {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        Self::for_horizon(spec, spec.run.horizon)
    }

    /// As [`Model::new`] with the grid window sized for `horizon`.
    pub fn for_horizon(spec: &ExperimentSpec, horizon: f64) -> Result<Self> {
        let kernel = make_default_kernel(spec.kernel.xi, spec.kernel.mean_shift)?;
        let rho0 = make_default_rho0(spec.a)?;
        let h = spec.run.h;
        let (lo, cells) = match (spec.run.x_min, spec.run.cells) {
            (Some(lo), Some(c)) => (lo, c),
            (lo, c) => {
                let (wl, wh) = default_window(spec.a, horizon, spec.kernel.xi);
                let lo = lo.unwrap_or(wl);
                (lo, c.unwrap_or(((wh - lo) / h).round() as usize))
            }
        };
        let grid = GridDensity::from_fn(lo, h, cells, |x| rho0.density(x))?.normalized()?;
        let evo = FreeEvolution::new(&kernel, h)?;
        Ok(Model { kernel, rho0, grid, evo })
    }
}

/// The model's standing assumptions, checked before any experiment runs.
/// Returns one line per check.
pub fn core_invariants(spec: &ExperimentSpec, model: &Model) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    ensure!(
        (spec.kernel.mass - 1.0).abs() < 1e-12,
        "branching kernel mass is {}, expected 1",
        spec.kernel.mass
    );
    let stencil = model.evo.creation().sum();
    ensure!((stencil - 1.0).abs() < 1e-12, "creation stencil sums to {stencil}");
    lines.push(format!("kernel mass 1, creation stencil sum {stencil:.15}"));
    let m = model.grid.mass();
    ensure!((m - 1.0).abs() < 1e-12, "initial density mass {m}");
    ensure!(model.rho0.density(model.rho0.left_edge()) == 0.0, "initial density does not vanish at its left edge");
    lines.push("initial density has unit mass and vanishes at -A".to_string());
    let margin = model.grid.x_max() - spec.a;
    ensure!(model.grid.x_min() < -spec.a && margin > 0.0, "grid window does not contain [-A, A]");
    lines.push(format!("grid [{:.3}, {:.3}] with {} cells", model.grid.x_min(), model.grid.x_max(), model.grid.len()));
    Ok(lines)
}
