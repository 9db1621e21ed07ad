use rand::Rng;

use super::{exp1, gauss};
use crate::kernel::BranchingKernel;
use crate::measure::ParticleConfiguration;

/// Basic process at time `t`: rate-1 branching with offspring displaced by
/// the kernel, no deaths.
pub fn simulate_basic<R: Rng + ?Sized>(
    y0: &ParticleConfiguration,
    t: f64,
    kernel: &BranchingKernel,
    rng: &mut R,
) -> ParticleConfiguration {
    ParticleConfiguration::new(simulate_basic_from(y0.positions(), t, kernel, rng))
}

/// Positions-only form of [`simulate_basic`].
///
/// Each particle is followed along its own lifeline; offspring are pushed on
/// a stack together with their birth time. The cost is linear in the final
/// population.
pub fn simulate_basic_from<R: Rng + ?Sized>(start: &[f64], t: f64, kernel: &BranchingKernel, rng: &mut R) -> Vec<f64> {
    if t <= 0.0 {
        return start.to_vec();
    }
    let mut out = Vec::with_capacity(start.len() * 2);
    let mut stack: Vec<(f64, f64)> = start.iter().rev().map(|&x| (x, 0.0)).collect();
    while let Some((mut x, mut s)) = stack.pop() {
        loop {
            let ring = s + exp1(rng);
            if ring >= t {
                out.push(x + (t - s).sqrt() * gauss(rng));
                break;
            }
            x += (ring - s).sqrt() * gauss(rng);
            stack.push((x + kernel.sample(rng), ring));
            s = ring;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_time_is_identity() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let y0: ParticleConfiguration = vec![0.1, -0.3].into();
        let y = simulate_basic(&y0, 0.0, &k, &mut stream(1, 0));
        assert_eq!(y, y0);
    }

    #[test]
    fn population_never_shrinks() {
        let k = BranchingKernel::symmetric(0.25).unwrap();
        let mut rng = stream(2, 0);
        for _ in 0..100 {
            let y = simulate_basic(&vec![0.0; 3].into(), 0.7, &k, &mut rng);
            assert!(y.len() >= 3);
        }
    }
}
