mod common;

use common::{setup, A, XI};
use nbbm_core::config::Partition;
use nbbm_core::kernel::{BranchingKernel, Side};
use nbbm_core::metrics::{order_modulo, seminorm};
use nbbm_core::particle::{
    coupled_true_lower, coupled_true_pair, coupled_true_upper, simulate_basic_from, simulate_lower_barrier,
    simulate_true, simulate_upper_barrier, yule_count,
};
use nbbm_core::rng::{replicas, stream};
use nbbm_core::stats::{chi_square, ks_one_sample, ks_two_sample, mean_se};
use nbbm_core::{EmpiricalMeasure, ParticleConfiguration};
use rand::Rng;
use rand_distr::{Distribution, Exp};

fn normal_cdf(x: f64, var: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / (2.0 * var).sqrt())
}

#[test]
fn basic_mean_count_is_e() {
    let k = BranchingKernel::symmetric(XI).unwrap();
    let counts: Vec<f64> = replicas(21, 100_000, |_, rng| simulate_basic_from(&[0.0], 1.0, &k, rng).len() as f64);
    let (m, se) = mean_se(&counts);
    assert!((m - std::f64::consts::E).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn averaged_counting_measure_matches_transition_density() {
    let s = setup(0.5);
    let r = 100_000;
    let runs = replicas(22, r, |_, rng| simulate_basic_from(&[0.0], 0.5, &s.kernel, rng));
    let counts: Vec<f64> = runs.iter().map(|v| v.len() as f64).collect();
    let pos = runs.concat();
    let (m, se) = mean_se(&counts);
    assert!((m - 0.5f64.exp()).abs() < 3.0 * se);
    let mc = EmpiricalMeasure::uniform(&pos, 1.0 / r as f64);
    let td = s.evo.transition_density(0.0, 0.5, 0.5 / 256.0, 6.0).unwrap();
    let part = Partition::for_n(100_000, 1.0 / 12.0);
    let d = seminorm(&mc, &td, &part, None);
    assert!(d < 0.02, "seminorm {d}");
}

#[test]
fn yule_mean_and_geometric_law() {
    let n = 100_000;
    let xs: Vec<u64> = replicas(23, n, |_, rng| yule_count(1, 1.0, rng));
    let as_f: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
    let (m, se) = mean_se(&as_f);
    assert!((m - std::f64::consts::E).abs() < 3.0 * se);

    let p = (-1.0f64).exp();
    let kmax = 15;
    let mut obs = vec![0.0; kmax + 1];
    for &x in &xs {
        obs[(x as usize).min(kmax + 1) - 1] += 1.0;
    }
    let mut exp: Vec<f64> = (1..=kmax).map(|k| n as f64 * p * (1.0 - p).powi(k as i32 - 1)).collect();
    exp.push(n as f64 * (1.0 - p).powi(kmax as i32));
    let (_, _, pv) = chi_square(&obs, &exp, 0);
    assert!(pv > 0.01, "p {pv}");
    assert_eq!(yule_count(3, 0.0, &mut stream(0, 0)), 3);
}

#[test]
fn single_clock_and_per_particle_clocks_agree() {
    let n = 5usize;
    let draws = 100_000;
    let per: Vec<(f64, usize)> = replicas(24, draws, |_, rng| {
        let e = Exp::new(1.0).unwrap();
        let ts: Vec<f64> = (0..n).map(|_| e.sample(rng)).collect();
        let i = (0..n).min_by(|&a, &b| ts[a].total_cmp(&ts[b])).unwrap();
        (ts[i], i)
    });
    let single: Vec<(f64, usize)> = replicas(25, draws, |_, rng| {
        let t = Exp::new(n as f64).unwrap().sample(rng);
        (t, rng.random_range(0..n))
    });
    let ta: Vec<f64> = per.iter().map(|x| x.0).collect();
    let tb: Vec<f64> = single.iter().map(|x| x.0).collect();
    assert!(ks_two_sample(&ta, &tb).p_value > 0.01);
    let mut ca = vec![0.0; n];
    let mut cb = vec![0.0; n];
    per.iter().for_each(|x| ca[x.1] += 1.0);
    single.iter().for_each(|x| cb[x.1] += 1.0);
    let uniform = vec![draws as f64 / n as f64; n];
    assert!(chi_square(&ca, &uniform, 0).2 > 0.01);
    assert!(chi_square(&cb, &uniform, 0).2 > 0.01);
}

#[test]
fn confinement_at_n_100() {
    let s = setup(1.0);
    // Q: 0.999-quantile of Yule(1) at T = 1, i.e. of Geometric(e^-1).
    let p = (-1.0f64).exp();
    let q = ((0.001f64).ln() / (1.0 - p).ln()).ceil();
    let bound = A + 10.0 + XI * q;
    let stamps: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
    let runs = 2000;
    let exits: usize = replicas(26, runs, |_, rng| {
        let x0 = ParticleConfiguration::new(s.rho0.sample_n(100, rng));
        let tr = simulate_true(&x0, 1.0, &stamps, &s.kernel, rng).unwrap();
        tr.frames().iter().any(|c| c.positions().iter().any(|x| x.abs() > bound)) as usize
    })
    .iter()
    .sum();
    assert!((exits as f64) / (runs as f64) < 1e-3);
}

#[test]
fn fluctuation_bound_at_n_10000() {
    let s = setup(0.5);
    let n = 10_000;
    let lambda = s.evo.evolve_free(&s.grid, 0.5, 0.5 / 64.0).unwrap().scaled(n as f64);
    let part = Partition::for_n(n, 1.0 / 12.0);
    let lambda_cells = nbbm_core::metrics::coarse_grain(&lambda, &part);
    let bound = (n as f64).powf(2.0 / 3.0);
    let runs = 1000;
    let ok: usize = replicas(27, runs, |_, rng| {
        let x0 = s.rho0.sample_n(n, rng);
        let y = simulate_basic_from(&x0, 0.5, &s.kernel, rng);
        let pi = nbbm_core::metrics::coarse_grain(&EmpiricalMeasure::uniform(&y, 1.0), &part);
        let lo = pi.first_cell.min(lambda_cells.first_cell);
        let hi = (pi.first_cell + pi.values.len() as i64).max(lambda_cells.first_cell + lambda_cells.values.len() as i64);
        let w = part.width();
        (lo..hi).all(|k| ((pi.value_at(k) - lambda_cells.value_at(k)) * w).abs() <= bound) as usize
    })
    .iter()
    .sum();
    assert!(ok as f64 >= 0.99 * runs as f64, "{ok}/{runs}");
}

#[test]
fn true_process_single_particle_with_positive_jumps() {
    let k = BranchingKernel::one_sided(XI, Side::Right).unwrap();
    let t = 1.0;
    let xs: Vec<f64> = replicas(28, 50_000, |_, rng| {
        let tr = simulate_true(&ParticleConfiguration::new(vec![0.3]), t, &[t], &k, rng).unwrap();
        tr.frames()[0].positions()[0]
    });
    let (m, se) = mean_se(&xs);
    let exact = 0.3 + common::simpson(|z| z * k.density(z), 0.0, XI, 4000) * t;
    assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact}");
}

#[test]
fn true_process_single_particle_with_negative_jumps_is_brownian() {
    let k = BranchingKernel::one_sided(XI, Side::Left).unwrap();
    let xs: Vec<f64> = replicas(29, 20_000, |_, rng| {
        simulate_true(&ParticleConfiguration::new(vec![0.0]), 0.7, &[0.7], &k, rng).unwrap().frames()[0].positions()[0]
    });
    assert!(ks_one_sample(&xs, |x| normal_cdf(x, 0.7)).p_value > 0.01);
}

#[test]
fn upper_barrier_grows_by_e_delta_per_cycle() {
    let k = BranchingKernel::symmetric(XI).unwrap();
    let (n, delta) = (20, 0.125);
    let counts: Vec<f64> = replicas(30, 10_000, |_, rng| {
        let x0 = ParticleConfiguration::new((0..n).map(|i| i as f64 * 0.01).collect());
        simulate_upper_barrier(&x0, delta, 1, &k, rng).unwrap().counts_before_cut[0] as f64
    });
    let (m, se) = mean_se(&counts);
    assert!((m - delta.exp() * n as f64).abs() < 3.0 * se, "{m}");
}

#[test]
fn coupled_barriers_have_standalone_laws() {
    let s = setup(0.5);
    let (n, delta, steps, alpha0) = (50, 0.125, 4, 2.0 / 3.0);
    let runs = 1000;
    let r = 0.0;
    let tail = |c: &ParticleConfiguration| c.positions().iter().filter(|&&x| x >= r).count() as f64;
    let start = |rng: &mut nbbm_core::SimRng| ParticleConfiguration::new(s.rho0.sample_n(n, rng));

    let coupled_lo: Vec<f64> = replicas(31, runs, |_, rng| {
        let x0 = start(rng);
        tail(coupled_true_lower(&x0, delta, steps, alpha0, &s.kernel, rng).unwrap().lower.last().unwrap())
    });
    let alone_lo: Vec<f64> = replicas(32, runs, |_, rng| {
        let x0 = start(rng);
        tail(simulate_lower_barrier(&x0, delta, steps, alpha0, &s.kernel, rng).unwrap().trajectory.last().unwrap())
    });
    let ks = ks_two_sample(&coupled_lo, &alone_lo);
    assert!(ks.p_value > 0.01, "lower {ks:?}");

    let coupled_up: Vec<f64> = replicas(33, runs, |_, rng| {
        let x0 = start(rng);
        tail(coupled_true_upper(&x0, delta, steps, &s.kernel, rng).unwrap().upper.last().unwrap())
    });
    let alone_up: Vec<f64> = replicas(34, runs, |_, rng| {
        let x0 = start(rng);
        tail(simulate_upper_barrier(&x0, delta, steps, &s.kernel, rng).unwrap().trajectory.last().unwrap())
    });
    let ks = ks_two_sample(&coupled_up, &alone_up);
    assert!(ks.p_value > 0.01, "upper {ks:?}");
}

#[test]
fn couplings_preserve_order() {
    let s = setup(0.5);
    let (n, delta, steps, alpha0) = (50, 0.125, 4, 2.0 / 3.0);
    let stamps: Vec<f64> = (0..=steps).map(|k| k as f64 * delta).collect();
    let bad: usize = replicas(35, 200, |_, rng| {
        let x0 = ParticleConfiguration::new(s.rho0.sample_n(n, rng));
        let shifted = ParticleConfiguration::new(x0.positions().iter().map(|x| x + rng.random::<f64>() * 0.2).collect());
        let pair = coupled_true_pair(&x0, &shifted, 0.5, &stamps, &s.kernel, rng).unwrap();
        let lower = coupled_true_lower(&x0, delta, steps, alpha0, &s.kernel, rng).unwrap();
        let upper = coupled_true_upper(&x0, delta, steps, &s.kernel, rng).unwrap();
        let mut bad = pair.violations + lower.label_violations + lower.order_violations + upper.violations;
        for (a, b) in lower.lower.frames().iter().zip(lower.truth.frames()) {
            bad += !order_modulo(&a.to_empirical(false).unwrap(), &b.to_empirical(false).unwrap(), 0.0) as usize;
        }
        for (a, b) in upper.truth.frames().iter().zip(upper.upper.frames()) {
            bad += !order_modulo(&a.to_empirical(false).unwrap(), &b.to_empirical(false).unwrap(), 0.0) as usize;
        }
        bad
    })
    .iter()
    .sum();
    assert_eq!(bad, 0);
}

#[test]
fn lower_barrier_counts() {
    let s = setup(0.5);
    let (n, delta, steps, alpha0) = (200, 0.125, 4, 2.0 / 3.0);
    let m = nbbm_core::particle::lower_barrier_deletions(n, delta, alpha0);
    for rep in 0..50 {
        let mut rng = stream(36, rep);
        let x0 = ParticleConfiguration::new(s.rho0.sample_n(n, &mut rng));
        let run = simulate_lower_barrier(&x0, delta, steps, alpha0, &s.kernel, &mut rng).unwrap();
        assert!(run.trajectory.frames().iter().all(|c| c.len() == n - m));
        assert!(run.counts_before_cut.iter().all(|&c| c <= n));
    }
}
