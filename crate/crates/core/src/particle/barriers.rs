use rand::Rng;

use super::{exp1, gauss, simulate_basic_from, sort};
use crate::error::{param, Result};
use crate::kernel::BranchingKernel;
use crate::measure::{ParticleConfiguration, Trajectory, TrajectoryMeta, Variant};

/// A barrier trajectory (configurations at `t_k^+`) together with the
/// particle counts reached just before each cut.
#[derive(Debug, Clone)]
pub struct BarrierRun {
    pub trajectory: Trajectory<ParticleConfiguration>,
    pub counts_before_cut: Vec<usize>,
}

/// `M_δ = ⌈(1 - e^-δ) N + N^α0⌉`.
pub fn lower_barrier_deletions(n: usize, delta: f64, alpha0: f64) -> usize {
    let nf = n as f64;
    ((1.0 - (-delta).exp()) * nf + nf.powf(alpha0)).ceil() as usize
}

fn stamps(delta: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 * delta).collect()
}

/// Keeps the `keep` rightmost entries, returned sorted.
fn keep_rightmost(mut xs: Vec<f64>, keep: usize) -> Vec<f64> {
    sort(&mut xs);
    let drop = xs.len().saturating_sub(keep);
    xs.drain(..drop);
    xs
}

/// Basic process on each `(t_{k-1}, t_k)`, then only the `N` rightmost
/// particles survive at `t_k`.
pub fn simulate_upper_barrier<R: Rng + ?Sized>(
    x0: &ParticleConfiguration,
    delta: f64,
    steps: usize,
    kernel: &BranchingKernel,
    rng: &mut R,
) -> Result<BarrierRun> {
    let n = x0.len();
    if n == 0 {
        return Err(param("upper barrier needs at least one particle"));
    }
    if !(delta > 0.0) {
        return Err(param("delta must be positive"));
    }
    let mut cur = x0.sorted_positions();
    let mut frames = vec![ParticleConfiguration::new(cur.clone())];
    let mut counts = Vec::with_capacity(steps);
    for _ in 0..steps {
        let grown = simulate_basic_from(&cur, delta, kernel, rng);
        counts.push(grown.len());
        cur = keep_rightmost(grown, n);
        frames.push(ParticleConfiguration::new(cur.clone()));
    }
    Ok(BarrierRun {
        trajectory: Trajectory::new(
            stamps(delta, steps),
            frames,
            TrajectoryMeta { variant: Variant::Upper, n, delta, seed: None },
        )?,
        counts_before_cut: counts,
    })
}

/// Deletes the `M_δ` leftmost particles at `0^+` and refills to `N - M_δ` at
/// each `t_k^+`. Within a cycle, once the count reaches `N` branching stops
/// until the next `t_k`.
pub fn simulate_lower_barrier<R: Rng + ?Sized>(
    x0: &ParticleConfiguration,
    delta: f64,
    steps: usize,
    alpha0: f64,
    kernel: &BranchingKernel,
    rng: &mut R,
) -> Result<BarrierRun> {
    let n = x0.len();
    if !(delta > 0.0) {
        return Err(param("delta must be positive"));
    }
    let m = lower_barrier_deletions(n, delta, alpha0);
    if m >= n {
        return Err(param(format!("M_delta = {m} is not below N = {n}; increase N or decrease delta")));
    }
    let keep = n - m;
    let mut cur = keep_rightmost(x0.positions().to_vec(), keep);
    let mut frames = vec![ParticleConfiguration::new(cur.clone())];
    let mut counts = Vec::with_capacity(steps);
    let mut last: Vec<f64> = Vec::with_capacity(n);
    for _ in 0..steps {
        // Lazily advanced positions: `last[i]` is the time of `cur[i]`.
        last.clear();
        last.resize(cur.len(), 0.0);
        let mut now = 0.0;
        while cur.len() < n {
            let ring = now + exp1(rng) / cur.len() as f64;
            if ring >= delta {
                break;
            }
            let i = rng.random_range(0..cur.len());
            cur[i] += (ring - last[i]).sqrt() * gauss(rng);
            last[i] = ring;
            cur.push(cur[i] + kernel.sample(rng));
            last.push(ring);
            now = ring;
        }
        for (x, &s) in cur.iter_mut().zip(&last) {
            *x += (delta - s).sqrt() * gauss(rng);
        }
        counts.push(cur.len());
        cur = keep_rightmost(std::mem::take(&mut cur), keep);
        frames.push(ParticleConfiguration::new(cur.clone()));
    }
    Ok(BarrierRun {
        trajectory: Trajectory::new(
            stamps(delta, steps),
            frames,
            TrajectoryMeta { variant: Variant::Lower, n, delta, seed: None },
        )?,
        counts_before_cut: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn start(n: usize) -> ParticleConfiguration {
        (0..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect::<Vec<_>>().into()
    }

    #[test]
    fn upper_zero_steps_returns_start() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let run = simulate_upper_barrier(&start(10), 0.1, 0, &k, &mut stream(0, 0)).unwrap();
        assert_eq!(run.trajectory.len(), 1);
        assert_eq!(run.trajectory.frames()[0].positions(), start(10).sorted_positions().as_slice());
    }

    #[test]
    fn upper_counts_are_n_after_each_cut() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let run = simulate_upper_barrier(&start(40), 0.125, 4, &k, &mut stream(1, 0)).unwrap();
        assert!(run.trajectory.frames().iter().all(|c| c.len() == 40));
        assert!(run.counts_before_cut.iter().all(|&c| c >= 40));
    }

    #[test]
    fn lower_zero_steps_drops_leftmost() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let x0 = start(100);
        let m = lower_barrier_deletions(100, 0.125, 2.0 / 3.0);
        let run = simulate_lower_barrier(&x0, 0.125, 0, 2.0 / 3.0, &k, &mut stream(0, 0)).unwrap();
        let expect: Vec<f64> = x0.sorted_positions()[m..].to_vec();
        assert_eq!(run.trajectory.frames()[0].positions(), expect.as_slice());
    }

    #[test]
    fn lower_counts_respect_bounds() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let m = lower_barrier_deletions(50, 0.125, 2.0 / 3.0);
        let mut rng = stream(2, 0);
        for _ in 0..200 {
            let run = simulate_lower_barrier(&start(50), 0.125, 4, 2.0 / 3.0, &k, &mut rng).unwrap();
            assert!(run.trajectory.frames().iter().all(|c| c.len() == 50 - m));
            assert!(run.counts_before_cut.iter().all(|&c| c <= 50 && c >= 50 - m));
        }
    }

    #[test]
    fn lower_rejects_small_n() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        assert!(simulate_lower_barrier(&start(3), 0.125, 1, 2.0 / 3.0, &k, &mut stream(0, 0)).is_err());
    }
}
