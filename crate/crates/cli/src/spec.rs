use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nbbm_core::RunConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Simulate,
    Barriers,
    Fbp,
    Converge,
    Validate,
    Accept,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Barriers => "barriers",
            Kind::Fbp => "fbp",
            Kind::Converge => "converge",
            Kind::Validate => "validate",
            Kind::Accept => "accept",
        }
    }
}

/// Branching kernel: C^inf bump on `[-xi, xi]` tilted to mean `mean_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub xi: f64,
    pub mean_shift: f64,
    /// Total mass of the kernel. Only 1 is admissible; anything else is
    /// reported by the core-invariant check.
    pub mass: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { xi: 0.25, mean_shift: 0.0, mass: 1.0 }
    }
}

/// Everything a run needs. Deserializes from a flat JSON object; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub run: RunConfig,
    pub kernel: KernelParams,
    /// Half-width `A` of the initial density.
    pub a: f64,
    /// Gap tolerance for the barrier cascade.
    pub tol: f64,
    /// Particle counts of the convergence study, strictly increasing.
    pub n_list: Vec<usize>,
    /// Neighborhood radii swept by the convergence study.
    pub eps: Vec<f64>,
    /// Paths for `validate`.
    pub paths: usize,
    #[serde(skip)]
    pub kind: Option<Kind>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub only: Option<String>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            run: RunConfig::default(),
            kernel: KernelParams::default(),
            a: 1.0,
            tol: 0.025,
            n_list: vec![250, 1000, 4000],
            eps: vec![0.02, 0.03, 0.05, 0.1, 2.0],
            paths: 10_000,
            kind: None,
            out: None,
            jobs: None,
            only: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).context("invalid configuration")?;
        let known = serde_json::to_value(ExperimentSpec::default())?;
        check_keys(&value, &known, "")?;
        serde_json::from_value(value).context("invalid configuration")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Checks every numeric field before anything runs.
    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if !(self.kernel.xi > 0.0 && self.kernel.xi.is_finite()) {
            bail!("kernel xi must be positive, got {}", self.kernel.xi);
        }
        if !(self.kernel.mean_shift.abs() < 0.5 * self.kernel.xi) {
            bail!("kernel mean shift {} must be below xi/2 in magnitude", self.kernel.mean_shift);
        }
        if !(self.kernel.mass > 0.0 && self.kernel.mass.is_finite()) {
            bail!("kernel mass must be positive, got {}", self.kernel.mass);
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            bail!("initial half-width must be positive, got {}", self.a);
        }
        if !(self.tol > 20.0 * self.run.h) {
            bail!("tol {} must exceed 20 h = {}", self.tol, 20.0 * self.run.h);
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            bail!("n_list must be a nonempty list of positive counts");
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            bail!("n_list must be strictly increasing, got {:?}", self.n_list);
        }
        if self.eps.iter().any(|e| !(*e > 0.0)) {
            bail!("eps values must be positive");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}

fn check_keys(value: &serde_json::Value, known: &serde_json::Value, prefix: &str) -> Result<()> {
    let (Some(obj), Some(known)) = (value.as_object(), known.as_object()) else {
        return Ok(());
    };
    for (k, v) in obj {
        match known.get(k) {
            None => bail!("unknown configuration key `{prefix}{k}`"),
            Some(inner) => check_keys(v, inner, &format!("{prefix}{k}."))?,
        }
    }
    Ok(())
}
