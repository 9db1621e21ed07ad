//! Exact event-driven simulation of the particle systems.
//!
//! Every particle carries a rate-1 exponential clock; with `n` particles the
//! next ring is `Exp(n)` away and the ringing particle is uniform. Positions
//! are only sampled at event and observation times, with exact Gaussian
//! increments in between.

mod barriers;
mod basic;
mod coupling;
mod truep;
mod yule;

pub use barriers::{lower_barrier_deletions, simulate_lower_barrier, simulate_upper_barrier, BarrierRun};
pub use basic::{simulate_basic, simulate_basic_from};
pub use coupling::{
    coupled_true_lower, coupled_true_pair, coupled_true_upper, LowerCoupling, PairCoupling, UpperCoupling,
};
pub use truep::simulate_true;
pub use yule::yule_count;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

#[inline]
pub(crate) fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub(crate) fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Index of the smallest value, ties to the smallest index.
pub(crate) fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn sort(xs: &mut [f64]) {
    xs.sort_unstable_by(f64::total_cmp);
}

/// Adds the same independent Gaussian increment of variance `dt` to the
/// `l`-th entry of every slice in `sets`.
pub(crate) fn shared_increments<R: Rng + ?Sized>(sets: &mut [&mut [f64]], dt: f64, rng: &mut R) {
    if dt <= 0.0 {
        return;
    }
    let s = dt.sqrt();
    let n = sets[0].len();
    for l in 0..n {
        let g = s * gauss(rng);
        for set in sets.iter_mut() {
            set[l] += g;
        }
    }
}

pub(crate) fn increments<R: Rng + ?Sized>(xs: &mut [f64], dt: f64, rng: &mut R) {
    if dt <= 0.0 {
        return;
    }
    let s = dt.sqrt();
    for x in xs {
        *x += s * gauss(rng);
    }
}
