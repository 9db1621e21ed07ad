//! Particle configurations, their counting measures, and time-indexed trajectories.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Colour used by the auxiliary coupled processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Color {
    Red,
    Blue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub color: Color,
    pub label: usize,
}

/// Finite multiset of positions with stable indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleConfiguration {
    positions: Vec<f64>,
    tags: Option<Vec<Tag>>,
}

impl ParticleConfiguration {
    pub fn new(positions: Vec<f64>) -> Self {
        ParticleConfiguration { positions, tags: None }
    }

    pub fn with_tags(positions: Vec<f64>, tags: Vec<Tag>) -> Result<Self> {
        if tags.len() != positions.len() {
            return Err(crate::error::param("one tag per particle required"));
        }
        Ok(ParticleConfiguration { positions, tags: Some(tags) })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn tags(&self) -> Option<&[Tag]> {
        self.tags.as_deref()
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn sorted_positions(&self) -> Vec<f64> {
        let mut v = self.positions.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn to_empirical(&self, normalized: bool) -> Result<EmpiricalMeasure> {
        to_empirical(self, normalized)
    }
}

impl From<Vec<f64>> for ParticleConfiguration {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

/// Counting measure of a configuration, with weight `1/N` when `normalized`.
pub fn to_empirical(cfg: &ParticleConfiguration, normalized: bool) -> Result<EmpiricalMeasure> {
    let n = cfg.len();
    if normalized && n == 0 {
        return Err(Error::EmptyMeasure);
    }
    let w = if normalized { 1.0 / n as f64 } else { 1.0 };
    Ok(EmpiricalMeasure::uniform(cfg.positions(), w))
}

/// Atomic measure: distinct sorted atoms with positive weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    // suffix[i] = sum of weights[i..]
    suffix: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Each position gets weight `w`; coinciding positions merge.
    pub fn uniform(positions: &[f64], w: f64) -> Self {
        let mut pairs: Vec<(f64, f64)> = positions.iter().map(|&x| (x, w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::from_sorted_pairs(pairs)
    }

    pub fn weighted(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(crate::error::param("atoms and weights differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(crate::error::param("weights must be finite and nonnegative"));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(crate::error::param("atoms must be finite"));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.iter().cloned().zip(weights.iter().cloned()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::from_sorted_pairs(pairs))
    }

    fn from_sorted_pairs(pairs: Vec<(f64, f64)>) -> Self {
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            if w == 0.0 {
                continue;
            }
            match atoms.last() {
                Some(&last) if last == x => *weights.last_mut().unwrap() += w,
                _ => {
                    atoms.push(x);
                    weights.push(w);
                }
            }
        }
        let mut suffix = vec![0.0; atoms.len() + 1];
        for i in (0..atoms.len()).rev() {
            suffix[i] = suffix[i + 1] + weights[i];
        }
        EmpiricalMeasure { atoms, weights, suffix }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.suffix[0]
    }

    /// `μ[r, ∞)`.
    pub fn tail(&self, r: f64) -> f64 {
        self.suffix[self.atoms.partition_point(|&a| a < r)]
    }

    /// `μ(r, ∞)`.
    pub fn tail_strict(&self, r: f64) -> f64 {
        self.suffix[self.atoms.partition_point(|&a| a <= r)]
    }

    /// Removes mass `theta` from the left; the last atom touched keeps a fraction.
    pub fn cut_left(&self, theta: f64) -> Result<Self> {
        let total = self.total_mass();
        if !(theta >= 0.0 && theta <= total) {
            return Err(crate::error::param(format!("cannot cut {theta} from mass {total}")));
        }
        let mut remaining = theta;
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (&x, &w) in self.atoms.iter().zip(&self.weights) {
            if remaining >= w {
                remaining -= w;
                continue;
            }
            atoms.push(x);
            weights.push(w - remaining);
            remaining = 0.0;
        }
        Self::weighted(&atoms, &weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    True,
    Upper,
    Lower,
    Basic,
    /// Midpoint of the deterministic barriers.
    Separating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub variant: Variant,
    pub n: usize,
    pub delta: f64,
    pub seed: Option<u64>,
}

/// Frames sampled at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<M> {
    times: Vec<f64>,
    frames: Vec<M>,
    pub meta: TrajectoryMeta,
}

impl<M> Trajectory<M> {
    pub fn new(times: Vec<f64>, frames: Vec<M>, meta: TrajectoryMeta) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::TimeGrid(format!("{} times for {} frames", times.len(), frames.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::TimeGrid("times must be strictly increasing".into()));
        }
        Ok(Trajectory { times, frames, meta })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[M] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> Option<&M> {
        self.frames.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &M)> {
        self.times.iter().cloned().zip(self.frames.iter())
    }

    /// Frame at time `t`, if `t` is one of the stamps (to within `1e-12` relative).
    pub fn at(&self, t: f64) -> Option<&M> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .map(|k| &self.frames[k])
    }

    pub fn map<N, F: FnMut(&M) -> N>(&self, f: F) -> Trajectory<N> {
        Trajectory {
            times: self.times.clone(),
            frames: self.frames.iter().map(f).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn try_map<N, F: FnMut(&M) -> Result<N>>(&self, f: F) -> Result<Trajectory<N>> {
        Ok(Trajectory {
            times: self.times.clone(),
            frames: self.frames.iter().map(f).collect::<Result<_>>()?,
            meta: self.meta.clone(),
        })
    }
}

impl Trajectory<ParticleConfiguration> {
    pub fn to_empirical(&self, normalized: bool) -> Result<Trajectory<EmpiricalMeasure>> {
        self.try_map(|c| to_empirical(c, normalized))
    }
}

/// Writes `replica,k,t_k,atom_index,position` rows, atoms sorted within each frame.
pub fn write_trajectories_csv<W: Write>(
    mut out: W,
    header: &[String],
    runs: &[Trajectory<ParticleConfiguration>],
) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "replica,k,t_k,atom_index,position")?;
    for (replica, traj) in runs.iter().enumerate() {
        for (k, (t, cfg)) in traj.iter().enumerate() {
            for (i, x) in cfg.sorted_positions().iter().enumerate() {
                writeln!(out, "{replica},{k},{t:.10},{i},{x:.12}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalized_two_atoms() {
        let m = to_empirical(&vec![0.5, -0.2].into(), true).unwrap();
        assert_eq!(m.atoms(), &[-0.2, 0.5]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn empty_configuration() {
        let cfg = ParticleConfiguration::default();
        assert_eq!(to_empirical(&cfg, false).unwrap().total_mass(), 0.0);
        assert!(matches!(to_empirical(&cfg, true), Err(Error::EmptyMeasure)));
    }

    #[test]
    fn duplicates_merge() {
        let m = to_empirical(&vec![0.0, 0.0, 1.0].into(), false).unwrap();
        assert_eq!(m.atoms(), &[0.0, 1.0]);
        assert_eq!(m.weights(), &[2.0, 1.0]);
        assert_eq!(m.tail(0.5), 1.0);
        assert_eq!(m.tail(0.0), 3.0);
        assert_eq!(m.tail_strict(0.0), 1.0);
    }

    #[test]
    fn cut_left_keeps_fraction() {
        let m = EmpiricalMeasure::uniform(&[0.0, 1.0, 2.0], 1.0);
        let c = m.cut_left(1.5).unwrap();
        assert_eq!(c.atoms(), &[1.0, 2.0]);
        assert_eq!(c.weights(), &[0.5, 1.0]);
        assert!(m.cut_left(3.5).is_err());
    }

    #[test]
    fn trajectory_times_must_increase() {
        let meta = TrajectoryMeta { variant: Variant::True, n: 1, delta: 0.1, seed: None };
        assert!(Trajectory::new(vec![0.0, 0.0], vec![1, 2], meta.clone()).is_err());
        assert!(Trajectory::new(vec![0.0], vec![1, 2], meta.clone()).is_err());
        assert!(Trajectory::new(vec![0.0, 0.1], vec![1, 2], meta).is_ok());
    }

    proptest! {
        #[test]
        fn tail_matches_brute_force(xs in prop::collection::vec(-5i32..5, 0..40), r in -6.0f64..6.0) {
            let pos: Vec<f64> = xs.iter().map(|&x| x as f64 * 0.5).collect();
            let m = EmpiricalMeasure::uniform(&pos, 0.25);
            let brute = pos.iter().filter(|&&x| x >= r).count() as f64 * 0.25;
            prop_assert!((m.tail(r) - brute).abs() < 1e-12);
            let at_atom = pos.first().cloned().unwrap_or(0.0);
            let brute = pos.iter().filter(|&&x| x >= at_atom).count() as f64 * 0.25;
            prop_assert!((m.tail(at_atom) - brute).abs() < 1e-12);
        }
    }
}
