//! Densities on a uniform one-dimensional grid.

use std::io::{BufRead, Write};

use crate::error::{param, Error, Result};

/// Nonnegative piecewise-constant density.
///
/// Cell `j` covers `[x_min + j h, x_min + (j + 1) h)` and carries mass
/// `values[j] * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    x_min: f64,
    h: f64,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(x_min: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(param(format!("grid spacing must be positive, got {h}")));
        }
        if !x_min.is_finite() {
            return Err(param("grid origin must be finite"));
        }
        if let Some(bad) = values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(param(format!("cell {bad} has invalid value {}", values[bad])));
        }
        Ok(GridDensity { x_min, h, values })
    }

    pub fn zeros(x_min: f64, h: f64, cells: usize) -> Result<Self> {
        Self::new(x_min, h, vec![0.0; cells])
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(x_min: f64, h: f64, cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..cells).map(|j| f(x_min + (j as f64 + 0.5) * h).max(0.0)).collect();
        Self::new(x_min, h, values)
    }

    /// Covers `[lo, hi]` with cells of width `h`, aligned so that `lo` is a cell edge.
    pub fn window(lo: f64, hi: f64, h: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(param(format!("empty window [{lo}, {hi}]")));
        }
        let cells = ((hi - lo) / h).ceil() as usize;
        Self::zeros(lo, h, cells)
    }

    /// Same grid, new values. Values are trusted to be nonnegative.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        GridDensity { x_min: self.x_min, h: self.h, values }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.edge(self.values.len())
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }


    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Left edge of cell `j` (`j == len()` gives the right end of the window).
    pub fn edge(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.h
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.h
    }

    /// Index of the cell containing `x`, if inside the window.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let pos = (x - self.x_min) / self.h;
        if pos < 0.0 || !pos.is_finite() {
            return None;
        }
        let j = pos.floor() as usize;
        (j < self.values.len()).then_some(j)
    }

    pub fn mass(&self) -> f64 {
        self.h * self.values.iter().sum::<f64>()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// `∫_r^∞ f`, with the cell containing `r` counted fractionally.
    pub fn tail_mass(&self, r: f64) -> f64 {
        let n = self.values.len();
        if n == 0 || r >= self.x_max() {
            return 0.0;
        }
        if r <= self.x_min {
            return self.mass();
        }
        let pos = (r - self.x_min) / self.h;
        let j = (pos.floor() as usize).min(n - 1);
        let frac = (j as f64 + 1.0 - pos).clamp(0.0, 1.0);
        let right: f64 = self.values[j + 1..].iter().sum();
        self.h * (right + frac * self.values[j])
    }

    /// Mass in `[a, b)`.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.tail_mass(a) - self.tail_mass(b)).max(0.0)
    }

    pub fn mean(&self) -> f64 {
        let m = self.mass();
        if m == 0.0 {
            return f64::NAN;
        }
        let first: f64 = self.values.iter().enumerate().map(|(j, v)| v * self.center(j)).sum();
        first * self.h / m
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0);
        self.with_values(self.values.iter().map(|v| v * c).collect())
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        Ok(self.scaled(1.0 / m))
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.values.len() == other.values.len()
            && (self.h - other.h).abs() <= 1e-12 * self.h
            && (self.x_min - other.x_min).abs() <= 1e-9 * self.h
    }

    pub fn check_same_grid(&self, other: &GridDensity) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "({}, {}, {}) vs ({}, {}, {})",
                self.x_min,
                self.h,
                self.values.len(),
                other.x_min,
                other.h,
                other.values.len()
            )))
        }
    }

    /// `h Σ |f - g|`.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.h * self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Pointwise average.
    pub fn midpoint(&self, other: &GridDensity) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| 0.5 * (a + b)).collect()))
    }

    /// Keeps mass `target` at the right end: cells are kept whole from the
    /// right, and the cell where the running mass reaches `target` keeps only
    /// the remainder. Returns the cut density and the cut point `V`, placed by
    /// linear interpolation inside that cell.
    pub fn keep_right_tail(&self, target: f64) -> Result<(Self, f64)> {
        let total = self.mass();
        if !(total > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        if !(target >= 0.0 && target <= total * (1.0 + 1e-12)) {
            return Err(param(format!("cannot keep {target} out of mass {total}")));
        }
        if target >= total {
            let cut = self.support_range().map(|(lo, _)| self.edge(lo)).unwrap_or(self.x_min);
            return Ok((self.clone(), cut));
        }
        let mut out = vec![0.0; self.values.len()];
        let mut acc = 0.0;
        let mut cut = self.x_min;
        let mut done = false;
        for j in (0..self.values.len()).rev() {
            let m = self.values[j] * self.h;
            if acc + m < target {
                out[j] = self.values[j];
                acc += m;
                continue;
            }
            let rem = (target - acc).max(0.0);
            out[j] = rem / self.h;
            cut = if self.values[j] > 0.0 { self.edge(j + 1) - rem / self.values[j] } else { self.edge(j + 1) };
            done = true;
            break;
        }
        if !done {
            // Target equals the whole mass up to rounding.
            cut = self.support_range().map(|(lo, _)| self.edge(lo)).unwrap_or(self.x_min);
        }
        Ok((self.with_values(out), cut))
    }

    /// Removes mass `theta` from the left.
    pub fn cut_left(&self, theta: f64) -> Result<Self> {
        let total = self.mass();
        if !(theta >= 0.0 && theta <= total) {
            return Err(param(format!("cannot cut {theta} from mass {total}")));
        }
        if theta == 0.0 {
            return Ok(self.clone());
        }
        Ok(self.keep_right_tail(total - theta)?.0)
    }

    /// Indices of the first and one past the last nonzero cell.
    pub fn support_range(&self) -> Option<(usize, usize)> {
        let lo = self.values.iter().position(|&v| v > 0.0)?;
        let hi = self.values.iter().rposition(|&v| v > 0.0)? + 1;
        Some((lo, hi))
    }

    /// Writes `center,value` rows after a `#`-prefixed header.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "x,value")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.10},{:e}", self.center(j), v)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`GridDensity::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut centers = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("x,") {
                continue;
            }
            let mut it = line.split(',');
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("line {}: expected two columns", lineno + 1)));
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            centers.push(parse(a)?);
            values.push(parse(b)?);
        }
        if centers.len() < 2 {
            return Err(Error::Parse("need at least two cells".into()));
        }
        let h = (centers[centers.len() - 1] - centers[0]) / (centers.len() - 1) as f64;
        for (j, c) in centers.iter().enumerate() {
            if (c - (centers[0] + j as f64 * h)).abs() > 1e-6 * h {
                return Err(Error::Parse(format!("non-uniform spacing at row {j}")));
            }
        }
        Self::new(centers[0] - 0.5 * h, h, values)
    }
}

/// Default window `[-W, W]` with `W = A + 3 sqrt(T) + xi ceil(8T) + 1`.
pub fn default_window(a: f64, horizon: f64, xi: f64) -> (f64, f64) {
    let w = a + 3.0 * horizon.sqrt() + xi * (8.0 * horizon).ceil() + 1.0;
    (-w, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform01(h: f64) -> GridDensity {
        GridDensity::from_fn(-1.0, h, (3.0 / h).round() as usize, |x| {
            if (0.0..1.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn tail_mass_edges_and_uniform() {
        let f = uniform01(1e-3);
        assert!((f.tail_mass(-5.0) - f.mass()).abs() < 1e-15);
        assert_eq!(f.tail_mass(10.0), 0.0);
        assert!((f.tail_mass(0.25) - 0.75).abs() < 1e-3);
        assert!((f.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tail_mass_is_continuous_and_monotone() {
        let f = GridDensity::new(0.0, 0.5, vec![1.0, 3.0, 0.0, 2.0]).unwrap();
        let mut prev = f.tail_mass(-1.0);
        let mut r = -1.0;
        while r < 3.0 {
            r += 0.01;
            let t = f.tail_mass(r);
            assert!(t <= prev + 1e-15);
            assert!(prev - t <= 3.0 * 0.01 + 1e-12);
            prev = t;
        }
        assert!((f.tail_mass(0.75) - (0.5 * 1.5 + 0.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_values() {
        assert!(GridDensity::new(0.0, 1.0, vec![1.0, -0.1]).is_err());
        assert!(GridDensity::new(0.0, 0.0, vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let f = GridDensity::new(-0.3, 0.1, vec![0.0, 1.5, 2.25, 0.125]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, &["test".into()]).unwrap();
        let g = GridDensity::read_csv(buf.as_slice()).unwrap();
        assert!(f.same_grid(&g));
        assert_eq!(f.values(), g.values());
    }

    #[test]
    fn l1_requires_matching_grids() {
        let f = GridDensity::new(0.0, 0.1, vec![1.0; 4]).unwrap();
        let g = GridDensity::new(0.0, 0.1, vec![1.0; 5]).unwrap();
        assert!(matches!(f.l1_distance(&g), Err(Error::GridMismatch(_))));
        assert_eq!(f.l1_distance(&f).unwrap(), 0.0);
    }
}
