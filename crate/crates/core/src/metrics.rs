//! Mass-transport order and distance, cell semi-norms and coarse graining.

use std::collections::{BTreeMap, HashMap};

use crate::config::Partition;
use crate::error::{param, Error, Result};
use crate::grid::GridDensity;
use crate::measure::{EmpiricalMeasure, ParticleConfiguration, Trajectory};

/// Slack absorbing floating-point accumulation in tail comparisons.
pub const ORDER_SLACK: f64 = 1e-12;

/// Finite measure on the line that is either atomic or piecewise constant.
pub trait Measure {
    fn total_mass(&self) -> f64;

    /// Points between which the tail is affine (constant or linear).
    fn breakpoints(&self, out: &mut Vec<f64>);

    /// Evaluates `μ[r, ∞)` and `μ(r, ∞)` at increasing points.
    fn tails_at(&self, sorted: &[f64]) -> (Vec<f64>, Vec<f64>);

    /// Mass per partition cell, nonzero cells only.
    fn cell_masses(&self, part: &Partition) -> HashMap<i64, f64>;

    /// Removes mass `theta` from the left.
    fn cut_left(&self, theta: f64) -> Result<Self>
    where
        Self: Sized;
}

impl Measure for EmpiricalMeasure {
    fn total_mass(&self) -> f64 {
        EmpiricalMeasure::total_mass(self)
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.atoms());
    }

    fn tails_at(&self, sorted: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let closed = sorted.iter().map(|&r| self.tail(r)).collect();
        let open = sorted.iter().map(|&r| self.tail_strict(r)).collect();
        (closed, open)
    }

    fn cell_masses(&self, part: &Partition) -> HashMap<i64, f64> {
        let mut out = HashMap::new();
        for (&x, &w) in self.atoms().iter().zip(self.weights()) {
            *out.entry(part.cell_of(x)).or_insert(0.0) += w;
        }
        out
    }

    fn cut_left(&self, theta: f64) -> Result<Self> {
        EmpiricalMeasure::cut_left(self, theta)
    }
}

impl Measure for GridDensity {
    fn total_mass(&self) -> f64 {
        self.mass()
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        if let Some((lo, hi)) = self.support_range() {
            out.extend((lo..=hi).map(|j| self.edge(j)));
        }
    }

    fn tails_at(&self, sorted: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let v = self.values();
        let n = v.len();
        let mut suffix = vec![0.0; n + 1];
        for j in (0..n).rev() {
            suffix[j] = suffix[j + 1] + v[j];
        }
        let h = self.h();
        let tails: Vec<f64> = sorted
            .iter()
            .map(|&r| {
                if r <= self.x_min() {
                    return h * suffix[0];
                }
                if r >= self.x_max() {
                    return 0.0;
                }
                let pos = (r - self.x_min()) / h;
                let j = (pos.floor() as usize).min(n - 1);
                let frac = (j as f64 + 1.0 - pos).clamp(0.0, 1.0);
                h * (suffix[j + 1] + frac * v[j])
            })
            .collect();
        (tails.clone(), tails)
    }

    fn cell_masses(&self, part: &Partition) -> HashMap<i64, f64> {
        let mut out = HashMap::new();
        let h = self.h();
        for (j, &v) in self.values().iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let (a, b) = (self.edge(j), self.edge(j + 1));
            let mut k = part.cell_of(a);
            let mut lo = a;
            loop {
                let hi = part.right(k).min(b);
                if hi > lo {
                    *out.entry(k).or_insert(0.0) += v * (hi - lo);
                }
                if hi >= b {
                    break;
                }
                lo = hi;
                k += 1;
            }
            debug_assert!(h > 0.0);
        }
        out
    }

    fn cut_left(&self, theta: f64) -> Result<Self> {
        GridDensity::cut_left(self, theta)
    }
}

/// Largest values of `tail_μ - tail_ν` and `tail_ν - tail_μ` over the line.
fn tail_extremes<A: Measure + ?Sized, B: Measure + ?Sized>(mu: &A, nu: &B) -> (f64, f64) {
    let mut pts = Vec::new();
    mu.breakpoints(&mut pts);
    nu.breakpoints(&mut pts);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let (ma, mo) = mu.tails_at(&pts);
    let (na, no) = nu.tails_at(&pts);
    // Left of every breakpoint the tails are the total masses; right of
    // every breakpoint they vanish.
    let d0 = mu.total_mass() - nu.total_mass();
    let (mut up, mut down) = (d0.max(0.0), (-d0).max(0.0));
    for i in 0..pts.len() {
        for d in [ma[i] - na[i], mo[i] - no[i]] {
            up = up.max(d);
            down = down.max(-d);
        }
    }
    (up, down)
}

/// `sup_r |μ[r,∞) - ν[r,∞)|`, evaluated exactly on the breakpoint set.
pub fn mt_distance<A: Measure + ?Sized, B: Measure + ?Sized>(mu: &A, nu: &B) -> f64 {
    let (up, down) = tail_extremes(mu, nu);
    up.max(down)
}

/// `sup_r (μ[r,∞) - ν[r,∞))`; nonpositive when `μ ≼ ν`.
pub fn order_excess<A: Measure + ?Sized, B: Measure + ?Sized>(mu: &A, nu: &B) -> f64 {
    tail_extremes(mu, nu).0
}

/// `μ ≼ ν` modulo `eps`.
pub fn order_modulo<A: Measure + ?Sized, B: Measure + ?Sized>(mu: &A, nu: &B, eps: f64) -> bool {
    order_excess(mu, nu) <= eps + ORDER_SLACK
}

fn check_time_grids(a: &[f64], b: &[f64], depth: u32) -> Result<()> {
    let steps = 1usize << depth;
    if a.len() != steps + 1 || b.len() != steps + 1 {
        return Err(Error::TimeGrid(format!(
            "expected {} stamps, got {} and {}",
            steps + 1,
            a.len(),
            b.len()
        )));
    }
    let horizon = a[steps];
    for k in 0..=steps {
        let t = horizon * k as f64 / steps as f64;
        let tol = 1e-9 * (1.0 + horizon);
        if (a[k] - t).abs() > tol || (b[k] - t).abs() > tol {
            return Err(Error::TimeGrid(format!("stamp {k} is not k 2^-{depth} T")));
        }
    }
    Ok(())
}

/// `max_k mt_distance(traj_k, u_k)` over the dyadic stamps.
pub fn max_distance<A: Measure, B: Measure>(traj: &Trajectory<A>, u: &Trajectory<B>, depth: u32) -> Result<f64> {
    check_time_grids(traj.times(), u.times(), depth)?;
    Ok(traj
        .frames()
        .iter()
        .zip(u.frames())
        .map(|(a, b)| mt_distance(a, b))
        .fold(0.0, f64::max))
}

/// Membership of `traj` in the `eps`-neighborhood of `u`.
pub fn neighborhood_check<A: Measure, B: Measure>(
    traj: &Trajectory<A>,
    u: &Trajectory<B>,
    eps: f64,
    depth: u32,
) -> Result<bool> {
    Ok(max_distance(traj, u, depth)? < eps)
}

/// `Σ_I |μ(I) - ν(I)|`, over `cells` if given, else over every cell.
pub fn seminorm<A: Measure + ?Sized, B: Measure + ?Sized>(
    mu: &A,
    nu: &B,
    part: &Partition,
    cells: Option<&[i64]>,
) -> f64 {
    let cm = mu.cell_masses(part);
    let cn = nu.cell_masses(part);
    let get = |m: &HashMap<i64, f64>, k: i64| m.get(&k).cloned().unwrap_or(0.0);
    match cells {
        Some(ks) => ks.iter().map(|&k| (get(&cm, k) - get(&cn, k)).abs()).sum(),
        None => {
            let mut keys: Vec<i64> = cm.keys().chain(cn.keys()).cloned().collect();
            keys.sort_unstable();
            keys.dedup();
            keys.iter().map(|&k| (get(&cm, k) - get(&cn, k)).abs()).sum()
        }
    }
}

/// Step function equal to `μ(I)/|I|` on each partition cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrained {
    pub width: f64,
    pub first_cell: i64,
    pub values: Vec<f64>,
}

impl CoarseGrained {
    pub fn mass(&self) -> f64 {
        self.width * self.values.iter().sum::<f64>()
    }

    pub fn value_at(&self, k: i64) -> f64 {
        let i = k - self.first_cell;
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    pub fn l1_distance(&self, other: &CoarseGrained) -> Result<f64> {
        if (self.width - other.width).abs() > 1e-15 * self.width {
            return Err(Error::GridMismatch("coarse grainings on different partitions".into()));
        }
        if self.values.is_empty() && other.values.is_empty() {
            return Ok(0.0);
        }
        let lo = self.first_cell.min(other.first_cell);
        let hi = (self.first_cell + self.values.len() as i64).max(other.first_cell + other.values.len() as i64);
        Ok((lo..hi).map(|k| (self.value_at(k) - other.value_at(k)).abs() * self.width).sum())
    }
}

pub fn coarse_grain<A: Measure + ?Sized>(mu: &A, part: &Partition) -> CoarseGrained {
    let masses = mu.cell_masses(part);
    let w = part.width();
    let Some(&lo) = masses.keys().min() else {
        return CoarseGrained { width: w, first_cell: 0, values: Vec::new() };
    };
    let hi = *masses.keys().max().unwrap();
    let mut values = vec![0.0; (hi - lo + 1) as usize];
    for (k, m) in masses {
        values[(k - lo) as usize] = m / w;
    }
    CoarseGrained { width: w, first_cell: lo, values }
}

/// `(seminorm + sup_I (μ[I] + ν[I]), mt_distance)`; the first bounds the second.
pub fn mt_bound_via_seminorm<A: Measure + ?Sized, B: Measure + ?Sized>(
    mu: &A,
    nu: &B,
    part: &Partition,
) -> (f64, f64) {
    let cm = mu.cell_masses(part);
    let cn = nu.cell_masses(part);
    let mut keys: Vec<i64> = cm.keys().chain(cn.keys()).cloned().collect();
    keys.sort_unstable();
    keys.dedup();
    let get = |m: &HashMap<i64, f64>, k: i64| m.get(&k).cloned().unwrap_or(0.0);
    let mut semi = 0.0;
    let mut max_cell: f64 = 0.0;
    for &k in &keys {
        let (a, b) = (get(&cm, k), get(&cn, k));
        semi += (a - b).abs();
        max_cell = max_cell.max(a + b);
    }
    (semi + max_cell, mt_distance(mu, nu))
}

/// Cutting mass `theta` from the left of both measures does not increase
/// the semi-norm (up to `1e-9`).
pub fn cut_nonexpansive_check<A: Measure, B: Measure>(mu: &A, nu: &B, theta: f64, part: &Partition) -> Result<bool> {
    if !(theta >= 0.0 && theta < mu.total_mass() && theta < nu.total_mass()) {
        return Err(param(format!(
            "cut {theta} must be below both masses ({}, {})",
            mu.total_mass(),
            nu.total_mass()
        )));
    }
    let before = seminorm(mu, nu, part, None);
    let after = seminorm(&mu.cut_left(theta)?, &nu.cut_left(theta)?, part, None);
    Ok(after <= before + 1e-9)
}

/// The three equivalent forms of `π_x ≼ π_z` for equal-size configurations:
/// tail order, existence of a dominating matching, and rank-wise order.
pub fn order_equiv(x: &ParticleConfiguration, z: &ParticleConfiguration) -> Result<(bool, bool, bool)> {
    if x.len() != z.len() {
        return Err(param(format!("sizes differ: {} vs {}", x.len(), z.len())));
    }
    let px = x.to_empirical(false)?;
    let pz = z.to_empirical(false)?;
    let s1 = order_modulo(&px, &pz, 0.0);

    let xs = x.sorted_positions();
    let zs = z.sorted_positions();
    let s3 = xs.iter().zip(&zs).all(|(a, b)| a <= b);

    // Greedy matching: largest x first, each takes the smallest free z above it.
    let mut pool: BTreeMap<OrdF64, usize> = BTreeMap::new();
    for &v in &zs {
        *pool.entry(OrdF64(v)).or_insert(0) += 1;
    }
    let mut s2 = true;
    for &v in xs.iter().rev() {
        let key = pool.range(OrdF64(v)..).next().map(|(k, _)| *k);
        match key {
            Some(k) => {
                let c = pool.get_mut(&k).unwrap();
                *c -= 1;
                if *c == 0 {
                    pool.remove(&k);
                }
            }
            None => {
                s2 = false;
                break;
            }
        }
    }
    Ok((s1, s2, s3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
