use rand::Rng;

use super::{exp1, increments, shared_increments, sort};
use crate::error::{param, precondition, Result};
use crate::kernel::BranchingKernel;
use crate::measure::{Color, ParticleConfiguration, Tag, Trajectory, TrajectoryMeta, Variant};
use crate::metrics::order_modulo;

use super::barriers::lower_barrier_deletions;

fn rankwise_le(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

fn meta(variant: Variant, n: usize, delta: f64) -> TrajectoryMeta {
    TrajectoryMeta { variant, n, delta, seed: None }
}

/// Two true processes driven by the same clocks, increments and jumps,
/// matched by rank.
#[derive(Debug, Clone)]
pub struct PairCoupling {
    pub first: Trajectory<ParticleConfiguration>,
    pub second: Trajectory<ParticleConfiguration>,
    pub events: usize,
    /// Event or sample times at which rank-wise order failed.
    pub violations: usize,
}

pub fn coupled_true_pair<R: Rng + ?Sized>(
    x0: &ParticleConfiguration,
    x0p: &ParticleConfiguration,
    horizon: f64,
    sample_times: &[f64],
    kernel: &BranchingKernel,
    rng: &mut R,
) -> Result<PairCoupling> {
    let n = x0.len();
    if n == 0 || x0p.len() != n {
        return Err(param("coupled configurations must be nonempty and of equal size"));
    }
    if !order_modulo(&x0.to_empirical(false)?, &x0p.to_empirical(false)?, 0.0) {
        return Err(precondition("initial configurations are not ordered"));
    }
    if sample_times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(param("sample times must lie in [0, T]"));
    }
    let mut a = x0.sorted_positions();
    let mut b = x0p.sorted_positions();
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    let mut now = 0.0;
    let mut next = 0;
    let mut events = 0;
    let mut violations = 0;
    loop {
        let ring = now + exp1(rng) / n as f64;
        let limit = if ring > horizon { f64::INFINITY } else { ring };
        while next < sample_times.len() && sample_times[next] < limit {
            shared_increments(&mut [&mut a, &mut b], sample_times[next] - now, rng);
            sort(&mut a);
            sort(&mut b);
            now = sample_times[next];
            if !rankwise_le(&a, &b) {
                violations += 1;
            }
            fa.push(ParticleConfiguration::new(a.clone()));
            fb.push(ParticleConfiguration::new(b.clone()));
            next += 1;
        }
        if ring > horizon {
            break;
        }
        shared_increments(&mut [&mut a, &mut b], ring - now, rng);
        sort(&mut a);
        sort(&mut b);
        now = ring;
        let i = rng.random_range(0..n);
        let z = kernel.sample(rng);
        // Both vectors are sorted, so index 0 is the leftmost.
        let (ca, cb) = (a[i] + z, b[i] + z);
        a[0] = a[0].max(ca);
        b[0] = b[0].max(cb);
        sort(&mut a);
        sort(&mut b);
        events += 1;
        if !rankwise_le(&a, &b) {
            violations += 1;
        }
    }
    let delta = if sample_times.len() >= 2 { sample_times[1] - sample_times[0] } else { 0.0 };
    Ok(PairCoupling {
        first: Trajectory::new(sample_times.to_vec(), fa, meta(Variant::True, n, delta))?,
        second: Trajectory::new(sample_times.to_vec(), fb, meta(Variant::True, n, delta))?,
        events,
        violations,
    })
}

/// True process with a red/blue auxiliary process below it, label by label.
#[derive(Debug, Clone)]
pub struct LowerCoupling {
    pub truth: Trajectory<ParticleConfiguration>,
    /// Blue particles at each `t_k^+`.
    pub lower: Trajectory<ParticleConfiguration>,
    /// Full auxiliary state (positions with colours) at each `t_k^+`.
    pub auxiliary: Vec<ParticleConfiguration>,
    pub events: usize,
    /// Events at which some label had `x_i < z_i`.
    pub label_violations: usize,
    /// Stamps at which the blue counting measure was not below the true one.
    pub order_violations: usize,
}

/// Label-wise coupling of the true process `x` with the lower barrier.
///
/// The auxiliary process `z` carries `N` labelled particles, red or blue. At
/// time 0 the `M_δ` leftmost are red. Both systems share every increment
/// label by label. When label `i` rings, `x` replaces its leftmost `x_j` by
/// `max(x_i + Z, x_j)`; if `i` is blue and a red exists, the blue child
/// takes label `j`, the former occupant of `j` moves to the label `k` of the
/// rightmost red, and that red disappears. At each `t_k` the leftmost blues
/// are repainted so that `M_δ` reds are present again.
pub fn coupled_true_lower<R: Rng + ?Sized>(
    x0: &ParticleConfiguration,
    delta: f64,
    steps: usize,
    alpha0: f64,
    kernel: &BranchingKernel,
    rng: &mut R,
) -> Result<LowerCoupling> {
    let n = x0.len();
    if !(delta > 0.0) {
        return Err(param("delta must be positive"));
    }
    let m = lower_barrier_deletions(n, delta, alpha0);
    if m >= n {
        return Err(param(format!("M_delta = {m} is not below N = {n}")));
    }
    let mut x = x0.positions().to_vec();
    let mut z = x.clone();
    let mut color = vec![Color::Blue; n];
    let mut reds = 0usize;
    repaint(&z, &mut color, &mut reds, m);

    let mut truth = vec![ParticleConfiguration::new(x.clone())];
    let mut lower = vec![blues(&z, &color)];
    let mut auxiliary = vec![tagged(&z, &color)];
    let mut events = 0;
    let mut label_violations = 0;
    let mut order_violations = usize::from(!blue_below(&lower[0], &truth[0])?);

    for _ in 0..steps {
        let mut now = 0.0;
        loop {
            let ring = now + exp1(rng) / n as f64;
            if ring >= delta {
                break;
            }
            shared_increments(&mut [&mut x, &mut z], ring - now, rng);
            now = ring;
            let i = rng.random_range(0..n);
            let jump = kernel.sample(rng);
            let j = super::argmin(&x);
            x[j] = x[j].max(x[i] + jump);
            if color[i] == Color::Blue && reds > 0 {
                let k = rightmost_red(&z, &color);
                let (old_z, old_c) = (z[j], color[j]);
                z[j] = z[i] + jump;
                color[j] = Color::Blue;
                if j != k {
                    z[k] = old_z;
                    color[k] = old_c;
                }
                reds -= 1;
            }
            events += 1;
            if x.iter().zip(&z).any(|(a, b)| a < b) {
                label_violations += 1;
            }
        }
        shared_increments(&mut [&mut x, &mut z], delta - now, rng);
        repaint(&z, &mut color, &mut reds, m);
        let t_frame = ParticleConfiguration::new(x.clone());
        let l_frame = blues(&z, &color);
        if !blue_below(&l_frame, &t_frame)? {
            order_violations += 1;
        }
        truth.push(t_frame);
        lower.push(l_frame);
        auxiliary.push(tagged(&z, &color));
    }
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * delta).collect();
    Ok(LowerCoupling {
        truth: Trajectory::new(times.clone(), truth, meta(Variant::True, n, delta))?,
        lower: Trajectory::new(times, lower, meta(Variant::Lower, n, delta))?,
        auxiliary,
        events,
        label_violations,
        order_violations,
    })
}

fn rightmost_red(z: &[f64], color: &[Color]) -> usize {
    let mut best: Option<usize> = None;
    for (i, c) in color.iter().enumerate() {
        if *c == Color::Red && best.is_none_or(|b| z[i] > z[b]) {
            best = Some(i);
        }
    }
    best.expect("a red particle exists")
}

/// Paints the leftmost blues red until `target` reds exist.
fn repaint(z: &[f64], color: &mut [Color], reds: &mut usize, target: usize) {
    if *reds >= target {
        return;
    }
    let mut order: Vec<usize> = (0..z.len()).filter(|&i| color[i] == Color::Blue).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    for &i in order.iter().take(target - *reds) {
        color[i] = Color::Red;
    }
    *reds = target;
}

fn blues(z: &[f64], color: &[Color]) -> ParticleConfiguration {
    let mut v: Vec<f64> = z.iter().zip(color).filter(|(_, c)| **c == Color::Blue).map(|(x, _)| *x).collect();
    sort(&mut v);
    ParticleConfiguration::new(v)
}

fn tagged(z: &[f64], color: &[Color]) -> ParticleConfiguration {
    let tags = color.iter().enumerate().map(|(label, &color)| Tag { color, label }).collect();
    ParticleConfiguration::with_tags(z.to_vec(), tags).expect("one tag per particle")
}

fn blue_below(blue: &ParticleConfiguration, truth: &ParticleConfiguration) -> Result<bool> {
    Ok(order_modulo(&blue.to_empirical(false)?, &truth.to_empirical(false)?, 0.0))
}

/// True process with the upper barrier above it.
#[derive(Debug, Clone)]
pub struct UpperCoupling {
    pub truth: Trajectory<ParticleConfiguration>,
    /// All particles kept at each `t_k^+`.
    pub upper: Trajectory<ParticleConfiguration>,
    pub events: usize,
    /// Events and stamps at which the order `truth ≼ upper` failed.
    pub violations: usize,
}

/// Coupling of the true process `x` with the upper barrier.
///
/// Within a cycle the blue particles follow the true dynamics, rank-matched
/// with `x`. Each blue deletion revives the deleted particle as a red one;
/// reds move and branch independently as a basic process. At `t_k` the `N`
/// rightmost particles of either colour become the new blues.
pub fn coupled_true_upper<R: Rng + ?Sized>(
    x0: &ParticleConfiguration,
    delta: f64,
    steps: usize,
    kernel: &BranchingKernel,
    rng: &mut R,
) -> Result<UpperCoupling> {
    let n = x0.len();
    if n == 0 {
        return Err(param("upper coupling needs at least one particle"));
    }
    if !(delta > 0.0) {
        return Err(param("delta must be positive"));
    }
    let mut x = x0.sorted_positions();
    let mut blue = x.clone();
    let mut red: Vec<f64> = Vec::new();
    let mut truth = vec![ParticleConfiguration::new(x.clone())];
    let mut upper = vec![ParticleConfiguration::new(blue.clone())];
    let mut events = 0;
    let mut violations = 0;
    for _ in 0..steps {
        let mut now = 0.0;
        loop {
            let rate = (n + red.len()) as f64;
            let ring = now + exp1(rng) / rate;
            if ring >= delta {
                break;
            }
            shared_increments(&mut [&mut x, &mut blue], ring - now, rng);
            increments(&mut red, ring - now, rng);
            sort(&mut x);
            sort(&mut blue);
            now = ring;
            let e = rng.random_range(0..n + red.len());
            if e < n {
                let jump = kernel.sample(rng);
                let (cx, cb) = (x[e] + jump, blue[e] + jump);
                x[0] = x[0].max(cx);
                red.push(blue[0].min(cb));
                blue[0] = blue[0].max(cb);
                sort(&mut x);
                sort(&mut blue);
            } else {
                let parent = red[e - n];
                red.push(parent + kernel.sample(rng));
            }
            events += 1;
            if !rankwise_le(&x, &blue) {
                violations += 1;
            }
        }
        shared_increments(&mut [&mut x, &mut blue], delta - now, rng);
        increments(&mut red, delta - now, rng);
        sort(&mut x);
        let mut all = std::mem::take(&mut blue);
        all.append(&mut red);
        sort(&mut all);
        let drop = all.len() - n;
        all.drain(..drop);
        blue = all;
        if !rankwise_le(&x, &blue) {
            violations += 1;
        }
        truth.push(ParticleConfiguration::new(x.clone()));
        upper.push(ParticleConfiguration::new(blue.clone()));
    }
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * delta).collect();
    Ok(UpperCoupling {
        truth: Trajectory::new(times.clone(), truth, meta(Variant::True, n, delta))?,
        upper: Trajectory::new(times, upper, meta(Variant::Upper, n, delta))?,
        events,
        violations,
    })
}
