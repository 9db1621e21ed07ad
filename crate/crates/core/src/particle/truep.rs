use rand::Rng;

use super::{argmin, exp1, increments};
use crate::error::{param, Result};
use crate::kernel::BranchingKernel;
use crate::measure::{ParticleConfiguration, Trajectory, TrajectoryMeta, Variant};

/// Constant-size process: each branching adds `parent + Z` and removes the
/// leftmost of the `N + 1` particles.
///
/// Leftmost ties go to the smallest stable index, which puts existing
/// particles before the newborn.
pub fn simulate_true<R: Rng + ?Sized>(
    x0: &ParticleConfiguration,
    horizon: f64,
    sample_times: &[f64],
    kernel: &BranchingKernel,
    rng: &mut R,
) -> Result<Trajectory<ParticleConfiguration>> {
    let n = x0.len();
    if n == 0 {
        return Err(param("true process needs at least one particle"));
    }
    if sample_times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(param("sample times must lie in [0, T]"));
    }
    let mut x = x0.positions().to_vec();
    let mut now = 0.0;
    let mut frames = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    loop {
        let ring = now + exp1(rng) / n as f64;
        let limit = if ring > horizon { f64::INFINITY } else { ring };
        while next_sample < sample_times.len() && sample_times[next_sample] < limit {
            let ts = sample_times[next_sample];
            increments(&mut x, ts - now, rng);
            now = ts;
            frames.push(ParticleConfiguration::new(x.clone()));
            next_sample += 1;
        }
        if ring > horizon {
            break;
        }
        increments(&mut x, ring - now, rng);
        now = ring;
        let i = rng.random_range(0..n);
        let child = x[i] + kernel.sample(rng);
        let j = argmin(&x);
        if child > x[j] {
            x[j] = child;
        }
    }
    let delta = if sample_times.len() >= 2 { sample_times[1] - sample_times[0] } else { 0.0 };
    Trajectory::new(
        sample_times.to_vec(),
        frames,
        TrajectoryMeta { variant: Variant::True, n, delta, seed: None },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Side;
    use crate::rng::stream;

    #[test]
    fn cardinality_is_constant() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let x0: ParticleConfiguration = (0..20).map(|i| i as f64 * 0.05).collect::<Vec<_>>().into();
        let times: Vec<f64> = (0..=8).map(|k| k as f64 / 16.0).collect();
        let tr = simulate_true(&x0, 0.5, &times, &k, &mut stream(3, 0)).unwrap();
        assert_eq!(tr.len(), 9);
        assert!(tr.frames().iter().all(|c| c.len() == 20));
        assert_eq!(tr.frames()[0], x0);
    }

    #[test]
    fn regressive_kernel_single_particle_is_brownian() {
        // The child always lands left of its parent and is removed at once.
        let k = BranchingKernel::one_sided(0.25, Side::Left).unwrap();
        let mut rng = stream(4, 0);
        let mut finals = Vec::new();
        for _ in 0..4000 {
            let tr = simulate_true(&vec![0.0].into(), 1.0, &[1.0], &k, &mut rng).unwrap();
            finals.push(tr.frames()[0].positions()[0]);
        }
        let (m, se) = crate::stats::mean_se(&finals);
        assert!(m.abs() < 4.0 * se, "mean {m} se {se}");
        let var = finals.iter().map(|x| x * x).sum::<f64>() / finals.len() as f64;
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn rejects_bad_sample_times() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        assert!(simulate_true(&vec![0.0].into(), 1.0, &[2.0], &k, &mut stream(0, 0)).is_err());
        assert!(simulate_true(&ParticleConfiguration::default(), 1.0, &[0.5], &k, &mut stream(0, 0)).is_err());
    }
}
