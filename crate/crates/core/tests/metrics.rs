use nbbm_core::config::Partition;
use nbbm_core::grid::GridDensity;
use nbbm_core::metrics::{
    coarse_grain, cut_nonexpansive_check, mt_bound_via_seminorm, mt_distance, neighborhood_check, order_equiv,
    order_modulo, seminorm, Measure,
};
use nbbm_core::rng::stream;
use nbbm_core::{EmpiricalMeasure, ParticleConfiguration, SimRng, Trajectory, TrajectoryMeta, Variant};
use rand::Rng;

enum Random {
    Atoms(EmpiricalMeasure),
    Grid(GridDensity),
}

impl Random {
    fn as_measure(&self) -> &dyn Measure {
        match self {
            Random::Atoms(m) => m,
            Random::Grid(g) => g,
        }
    }
}

/// Unit-mass measure, atomic or gridded, on roughly `[-2, 2]`.
fn random_measure(rng: &mut SimRng) -> Random {
    if rng.random::<bool>() {
        let n = rng.random_range(1..40);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        Random::Atoms(EmpiricalMeasure::uniform(&xs, 1.0 / n as f64))
    } else {
        let h = 0.01 * rng.random_range(1..5) as f64;
        let lo = rng.random_range(-2.0..0.0);
        let cells = rng.random_range(5..200);
        let v: Vec<f64> = (0..cells).map(|_| rng.random::<f64>()).collect();
        Random::Grid(GridDensity::new(lo, h, v).unwrap().normalized().unwrap())
    }
}

#[test]
fn coarse_grained_l1_equals_seminorm() {
    let mut rng = stream(61, 0);
    for _ in 0..1000 {
        let part = Partition::new(rng.random_range(0.05..0.6)).unwrap();
        let (a, b) = (random_measure(&mut rng), random_measure(&mut rng));
        let (a, b) = (a.as_measure(), b.as_measure());
        let l1 = coarse_grain(a, &part).l1_distance(&coarse_grain(b, &part)).unwrap();
        let semi = seminorm(a, b, &part, None);
        assert!((l1 - semi).abs() < 1e-12, "{l1} vs {semi}");
    }
}

#[test]
fn mt_distance_bounded_via_seminorm() {
    let mut rng = stream(62, 0);
    let mut violations = 0;
    for _ in 0..1000 {
        let part = Partition::new(rng.random_range(0.05..0.6)).unwrap();
        let (a, b) = (random_measure(&mut rng), random_measure(&mut rng));
        let (bound, actual) = mt_bound_via_seminorm(a.as_measure(), b.as_measure(), &part);
        violations += (actual > bound + 1e-12) as usize;
    }
    assert_eq!(violations, 0);
}

#[test]
fn left_cuts_are_nonexpansive() {
    let mut rng = stream(63, 0);
    let mut violations = 0;
    for _ in 0..1000 {
        let part = Partition::new(rng.random_range(0.05..0.6)).unwrap();
        let (a, b) = (random_measure(&mut rng), random_measure(&mut rng));
        let theta = rng.random_range(0.0..0.99);
        let ok = match (&a, &b) {
            (Random::Atoms(x), Random::Atoms(y)) => cut_nonexpansive_check(x, y, theta, &part),
            (Random::Atoms(x), Random::Grid(y)) => cut_nonexpansive_check(x, y, theta, &part),
            (Random::Grid(x), Random::Atoms(y)) => cut_nonexpansive_check(x, y, theta, &part),
            (Random::Grid(x), Random::Grid(y)) => cut_nonexpansive_check(x, y, theta, &part),
        }
        .unwrap();
        violations += !ok as usize;
    }
    assert_eq!(violations, 0);
    let p = Partition::new(0.1).unwrap();
    let m = EmpiricalMeasure::uniform(&[0.3], 1.0);
    assert!(cut_nonexpansive_check(&m, &m, 0.0, &p).unwrap());
}

#[test]
fn three_order_forms_agree() {
    let mut rng = stream(64, 0);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=6);
        // Coarse values make ties common.
        let mut draw = || (0..n).map(|_| rng.random_range(0..5) as f64 * 0.5).collect::<Vec<_>>();
        let x = ParticleConfiguration::new(draw());
        let z = ParticleConfiguration::new(draw());
        let (s1, s2, s3) = order_equiv(&x, &z).unwrap();
        assert!(s1 == s2 && s2 == s3, "{x:?} {z:?}");
    }
    let x = ParticleConfiguration::new(vec![0.0, 2.0]);
    let z = ParticleConfiguration::new(vec![1.0, 1.0]);
    assert_eq!(order_equiv(&x, &z).unwrap(), (false, false, false));
    assert!(order_equiv(&x, &ParticleConfiguration::new(vec![1.0])).is_err());
}

#[test]
fn distance_examples() {
    let d0 = EmpiricalMeasure::uniform(&[0.0], 1.0);
    let d1 = EmpiricalMeasure::uniform(&[1.0], 1.0);
    assert_eq!(mt_distance(&d0, &d0), 0.0);
    assert!((mt_distance(&d0, &d1) - 1.0).abs() < 1e-15);
    assert!(!order_modulo(&d1, &d0, 0.0) && order_modulo(&d1, &d0, 1.0));
    let u0 = GridDensity::from_fn(-1.0, 1e-3, 3000, |x| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 }).unwrap();
    let u1 = GridDensity::from_fn(-1.0, 1e-3, 3000, |x| if (0.3..1.3).contains(&x) { 1.0 } else { 0.0 }).unwrap();
    assert!((mt_distance(&u0, &u1) - 0.3).abs() < 1e-9);
}

#[test]
fn neighborhood_membership() {
    let meta = TrajectoryMeta { variant: Variant::True, n: 1, delta: 0.25, seed: None };
    let times = vec![0.0, 0.25, 0.5];
    let a = Trajectory::new(times.clone(), vec![EmpiricalMeasure::uniform(&[0.0], 1.0); 3], meta.clone()).unwrap();
    let b = Trajectory::new(
        times,
        vec![
            EmpiricalMeasure::uniform(&[0.0], 1.0),
            EmpiricalMeasure::uniform(&[0.0, 1.0], 0.5),
            EmpiricalMeasure::uniform(&[0.0], 1.0),
        ],
        meta,
    )
    .unwrap();
    assert!(neighborhood_check(&a, &b, 0.51, 1).unwrap());
    assert!(!neighborhood_check(&a, &b, 0.5, 1).unwrap());
    assert!(neighborhood_check(&a, &b, 2.0, 1).unwrap());
    assert!(neighborhood_check(&a, &b, 1.0, 3).is_err());
}
