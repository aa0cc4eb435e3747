use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// A uniform one-dimensional sampling grid (time or frequency).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        ensure(start.is_finite(), || format!("grid start {start} is not finite"))?;
        ensure(step.is_finite() && step > 0.0, || {
            format!("grid step must be positive, got {step}")
        })?;
        ensure(len >= 2, || format!("grid needs at least 2 points, got {len}"))?;
        Ok(Self { start, step, len })
    }

    /// Grid covering `[start, stop]` inclusive with the given step. The last
    /// point is the largest `start + k*step` not exceeding `stop` (plus a
    /// rounding allowance of 1e-9 steps).
    pub fn span(start: f64, stop: f64, step: f64) -> Result<Self> {
        ensure(stop > start, || format!("empty span [{start}, {stop}]"))?;
        ensure(step > 0.0, || format!("grid step must be positive, got {step}"))?;
        let len = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Self::new(start, step, len)
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.at(self.len - 1)
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.at(i))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.points().collect()
    }

    /// Index of the sample nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.start) / self.step).round();
        k.clamp(0.0, (self.len - 1) as f64) as usize
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start - 1e-9 * self.step && x <= self.end() + 1e-9 * self.step
    }

    /// Recover a uniform grid from explicit sample positions.
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        ensure(xs.len() >= 2, || "need at least 2 samples".into())?;
        let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        ensure(step > 0.0, || "samples must be strictly increasing".into())?;
        for (i, &x) in xs.iter().enumerate() {
            let expected = xs[0] + step * i as f64;
            ensure((x - expected).abs() <= 1e-6 * step, || {
                format!("sample {i} at {x} breaks uniform spacing {step}")
            })?;
        }
        Self::new(xs[0], step, xs.len())
    }
}

/// Linear interpolation of `ys` sampled on `grid`, clamped at the edges.
pub fn interpolate(grid: &UniformGrid, ys: &[f64], x: f64) -> f64 {
    let u = (x - grid.start) / grid.step;
    if u <= 0.0 {
        return ys[0];
    }
    let last = grid.len - 1;
    if u >= last as f64 {
        return ys[last];
    }
    let i = u.floor() as usize;
    let frac = u - i as f64;
    ys[i] * (1.0 - frac) + ys[i + 1] * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_includes_endpoint() {
        let g = UniformGrid::span(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len, 11);
        assert!((g.end() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_samples_rejects_jitter() {
        assert!(UniformGrid::from_samples(&[0.0, 1.0, 2.5]).is_err());
        let g = UniformGrid::from_samples(&[1.0, 1.5, 2.0]).unwrap();
        assert_eq!(g.step, 0.5);
    }

    #[test]
    fn interpolation_is_clamped() {
        let g = UniformGrid::new(0.0, 1.0, 3).unwrap();
        let ys = [0.0, 2.0, 4.0];
        assert_eq!(interpolate(&g, &ys, -1.0), 0.0);
        assert_eq!(interpolate(&g, &ys, 0.25), 0.5);
        assert_eq!(interpolate(&g, &ys, 9.0), 4.0);
    }
}
