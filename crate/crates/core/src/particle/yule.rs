use rand::Rng;

use super::exp1;

/// Pure-birth process with rate `n` in state `n`, observed at time `t`.
pub fn yule_count<R: Rng + ?Sized>(n0: u64, t: f64, rng: &mut R) -> u64 {
    assert!(n0 >= 1, "yule_count needs n0 >= 1");
    let mut n = n0;
    let mut s = 0.0;
    loop {
        s += exp1(rng) / n as f64;
        if s > t {
            return n;
        }
        n += 1;
    }
}
