use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use nbbm_cli::spec::{ExperimentSpec, Kind};
use nbbm_cli::{accept, converge, experiments};

#[derive(Parser)]
#[command(name = "nbbm", version, about = "Branching Brownian motion with selection: simulation, barriers and the free boundary problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// True process and stochastic barriers from i.i.d. initial particles.
    Simulate(Flags),
    /// Deterministic barriers and the refinement cascade.
    Barriers(Flags),
    /// Free boundary solution.
    Fbp(Flags),
    /// Distance of the particle system to the free boundary solution as N grows.
    Converge(Flags),
    /// Killed-path validation of the free boundary solution.
    Validate(Flags),
    /// Acceptance suite.
    Accept(Flags),
}

#[derive(Args, Clone)]
struct Flags {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `out/<subcommand>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    /// Run a single acceptance criterion by name.
    #[arg(long)]
    only: Option<String>,
    #[arg(long)]
    n_particles: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    x_min: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    /// Killed paths for `validate`.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated particle counts for `converge`.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
}

impl Flags {
    fn spec(&self, kind: Kind) -> Result<ExperimentSpec> {
        let mut s = match &self.config {
            Some(p) => ExperimentSpec::from_file(p)?,
            None => ExperimentSpec::default(),
        };
        let r = &mut s.run;
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $( if let Some(v) = self.$flag.clone() { $field = v; } )*
            };
        }
        set!(
            seed => r.seed, replicas => r.replicas, n_particles => r.n_particles, horizon => r.horizon,
            depth => r.depth, alpha0 => r.alpha0, beta => r.beta, b => r.b, h => r.h,
        );
        if self.x_min.is_some() {
            r.x_min = self.x_min;
        }
        if self.cells.is_some() {
            r.cells = self.cells;
        }
        set!(paths => s.paths, tol => s.tol, n_list => s.n_list);
        s.kind = Some(kind);
        s.out = Some(self.out.clone().unwrap_or_else(|| PathBuf::from("out").join(kind.name())));
        s.jobs = self.jobs;
        s.only = self.only.clone();
        s.validate()?;
        Ok(s)
    }
}

fn run(kind: Kind, flags: &Flags) -> Result<bool> {
    let spec = flags.spec(kind)?;
    if let Some(j) = spec.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let out = spec.out.clone().unwrap();
    let dir = match kind {
        Kind::Simulate => experiments::simulate(&spec, &out)?.0,
        Kind::Barriers => experiments::barriers(&spec, &out)?.0,
        Kind::Fbp => experiments::fbp(&spec, &out)?.0,
        Kind::Validate => {
            let (dir, s) = experiments::validate(&spec, &out)?;
            println!("KS p = {:.4}, tail discrepancy {:?}, shifted boundary p = {:.2e}", s.ks_p, s.tail_discrepancy, s.shifted_ks_p);
            dir
        }
        Kind::Converge => {
            let (dir, t) = converge::converge(&spec, &out)?;
            for r in &t.rows {
                println!("N = {:>6}  mean {:.5}  q90 {:.5}  membership {:?}", r.n, r.mean, r.q90, r.membership);
            }
            dir
        }
        Kind::Accept => {
            let (dir, report) = accept::accept(&spec, &out, |r| println!("{}", r.line()))?;
            if let Err(e) = &report.invariants {
                println!("FAIL core-invariants: {e}");
            }
            println!("results in {}", dir.display());
            return Ok(report.pass());
        }
    };
    println!("results in {}", dir.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = match &cli.command {
        Command::Simulate(f) => (Kind::Simulate, f),
        Command::Barriers(f) => (Kind::Barriers, f),
        Command::Fbp(f) => (Kind::Fbp, f),
        Command::Converge(f) => (Kind::Converge, f),
        Command::Validate(f) => (Kind::Validate, f),
        Command::Accept(f) => (Kind::Accept, f),
    };
    match run(kind, flags) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
