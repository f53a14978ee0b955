use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result, Side};

/// Running-variable / response pairs for a sharp design with treatment
/// `D = 1[x ≥ cutoff]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdDataset {
    x: Vec<f64>,
    y: Vec<f64>,
    cutoff: f64,
}

impl RdDataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, cutoff: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(RdError::InvalidData(format!(
                "x has {} values but y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(RdError::InvalidData(format!("need at least 2 observations, got {}", x.len())));
        }
        if !cutoff.is_finite() {
            return Err(RdError::InvalidData(format!("cutoff must be finite, got {cutoff}")));
        }
        if let Some(i) = x.iter().chain(y.iter()).position(|v| !v.is_finite()) {
            let (col, row) = if i < x.len() { ("x", i) } else { ("y", i - x.len()) };
            return Err(RdError::InvalidData(format!("non-finite {col} value at index {row}")));
        }
        let above = x.iter().filter(|&&v| v >= cutoff).count();
        if above == 0 {
            return Err(RdError::Sparse {
                side: Some(Side::Above),
                detail: "no observations".into(),
            });
        }
        if above == x.len() {
            return Err(RdError::Sparse {
                side: Some(Side::Below),
                detail: "no observations".into(),
            });
        }
        Ok(RdDataset { x, y, cutoff })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Treatment indicator `1[x ≥ c]`.
    pub fn treated(&self, i: usize) -> bool {
        self.x[i] >= self.cutoff
    }

    pub fn treatment(&self) -> Vec<f64> {
        self.x.iter().map(|&v| if v >= self.cutoff { 1.0 } else { 0.0 }).collect()
    }

    pub fn side(&self, i: usize) -> Side {
        if self.treated(i) {
            Side::Above
        } else {
            Side::Below
        }
    }

    pub fn range(&self) -> f64 {
        let (lo, hi) = min_max(&self.x);
        hi - lo
    }

    /// Same design, different responses.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        RdDataset::new(self.x.clone(), y, self.cutoff)
    }

    /// Copy without observation `i`.
    pub fn without(&self, i: usize) -> Result<Self> {
        let mut x = self.x.clone();
        let mut y = self.y.clone();
        x.remove(i);
        y.remove(i);
        RdDataset::new(x, y, self.cutoff)
    }

    /// Observations with `|x - c| ≤ radius`.
    pub fn window(&self, radius: f64) -> (Vec<f64>, Vec<f64>) {
        self.x
            .iter()
            .zip(&self.y)
            .filter(|(&x, _)| (x - self.cutoff).abs() <= radius)
            .map(|(&x, &y)| (x, y))
            .unzip()
    }
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Linear-interpolation quantile (R type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
