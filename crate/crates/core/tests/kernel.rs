mod common;

use common::{simpson, A, XI};
use nbbm_core::grid::default_window;
use nbbm_core::kernel::{make_default_kernel, make_default_rho0, BranchingKernel};
use nbbm_core::rng::stream;
use nbbm_core::stats::ks_one_sample;

#[test]
fn kernel_sampler_matches_integrated_density() {
    let k = make_default_kernel(XI, 0.0).unwrap();
    let mut rng = stream(11, 0);
    let xs: Vec<f64> = (0..100_000).map(|_| k.sample(&mut rng)).collect();
    let cdf = |z: f64| simpson(|s| k.density(s), -XI, z.clamp(-XI, XI), 2000);
    let ks = ks_one_sample(&xs, cdf);
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn tilted_kernel_sampler_mean() {
    let k = make_default_kernel(XI, 0.08).unwrap();
    let mut rng = stream(12, 0);
    let xs: Vec<f64> = (0..100_000).map(|_| k.sample(&mut rng)).collect();
    let (m, se) = nbbm_core::stats::mean_se(&xs);
    let exact = simpson(|s| s * k.density(s), -XI, XI, 4000);
    assert!((exact - 0.08).abs() < 1e-6);
    assert!((m - exact).abs() < 4.0 * se, "{m} vs {exact}");
}

#[test]
fn rho0_sampler_matches_integrated_density() {
    let r = make_default_rho0(A).unwrap();
    let mut rng = stream(13, 0);
    let xs = r.sample_n(100_000, &mut rng);
    let ks = ks_one_sample(&xs, |x| simpson(|s| r.density(s), -A, x.clamp(-A, A), 2000));
    assert!(ks.p_value > 0.01, "{ks:?}");
    assert!(xs.iter().all(|x| x.abs() < A));
}

#[test]
fn rho0_vanishes_at_its_left_edge() {
    let r = make_default_rho0(A).unwrap();
    assert_eq!(r.density(r.left_edge()), 0.0);
    assert_eq!(r.left_edge(), -A);
    assert!(r.density(-A + 1e-3) >= 0.0);
}

#[test]
fn regressive_kernel_lives_left_of_zero() {
    let k = BranchingKernel::one_sided(XI, nbbm_core::kernel::Side::Left).unwrap();
    let mut rng = stream(14, 0);
    assert!((0..10_000).all(|_| k.sample(&mut rng) < 0.0));
    assert!(k.mean() < 0.0);
}

#[test]
fn default_window_covers_diffusion_and_jumps() {
    let (lo, hi) = default_window(1.0, 0.5, 0.25);
    let w = 1.0 + 3.0 * 0.5f64.sqrt() + 0.25 * 4.0 + 1.0;
    assert!((lo + w).abs() < 1e-12 && (hi - w).abs() < 1e-12);
}
