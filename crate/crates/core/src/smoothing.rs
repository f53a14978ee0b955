//! Local polynomial regression weights and the smoother matrix.
//!
//! For an evaluation point `x0` the weights are the first row of
//! `(XᵀWX)⁻¹XᵀW`, with `X` the local design in powers of `(x_j - x0)/h` and
//! `W = diag(K((x_j - x0)/h))`. Scaling the columns by powers of `h` leaves
//! the intercept row unchanged and keeps the moment matrix well scaled.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::RdDataset;
use crate::error::{RdError, Result, Side};
use crate::kernels::Kernel;
use crate::linalg::{spd_inverse, MAX_CONDITION};
use crate::par::{map_indices, Parallelism};

pub const MAX_DEGREE: u32 = 5;

/// Window radius (in bandwidths) used for the Gaussian kernel; its weight
/// underflows to zero beyond ~38.6.
const GAUSSIAN_WINDOW: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocPolyConfig {
    pub degree: u32,
    pub kernel: Kernel,
    pub bandwidth: f64,
}

impl LocPolyConfig {
    pub fn new(degree: u32, kernel: Kernel, bandwidth: f64) -> Result<Self> {
        let cfg = LocPolyConfig {
            degree,
            kernel,
            bandwidth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree > MAX_DEGREE {
            return Err(RdError::Domain(format!(
                "local polynomial degree {} exceeds {MAX_DEGREE}",
                self.degree
            )));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(RdError::Domain(format!(
                "bandwidth must be positive and finite, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }

    pub fn with_bandwidth(self, bandwidth: f64) -> Self {
        LocPolyConfig { bandwidth, ..self }
    }

    fn window_radius(&self) -> f64 {
        self.bandwidth * self.kernel.support().unwrap_or(GAUSSIAN_WINDOW)
    }
}

/// Local weights for the points in `xs` (all candidates; zero-weight points
/// get weight 0). Fails when fewer than `p + 1` distinct positive-weight
/// points exist or the local moment matrix is ill-conditioned.
fn local_weights(xs: &[f64], x0: f64, cfg: &LocPolyConfig) -> std::result::Result<Vec<f64>, String> {
    let h = cfg.bandwidth;
    let p = cfg.degree as usize;
    let dim = p + 1;
    let mut kw = Vec::with_capacity(xs.len());
    let mut support: Vec<f64> = Vec::new();
    for &x in xs {
        let u = (x - x0) / h;
        let w = cfg.kernel.weight(u);
        kw.push((u, w));
        if w > 0.0 {
            support.push(x);
        }
    }
    support.sort_by(f64::total_cmp);
    support.dedup();
    if support.len() < dim {
        return Err(format!(
            "{} distinct points with positive weight, degree {} needs {}",
            support.len(),
            p,
            dim
        ));
    }
    if p == 0 {
        let total: f64 = kw.iter().map(|&(_, w)| w).sum();
        return Ok(kw.iter().map(|&(_, w)| w / total).collect());
    }
    let mut moments = vec![0.0; 2 * p + 1];
    for &(u, w) in &kw {
        if w > 0.0 {
            let mut pw = w;
            for m in moments.iter_mut() {
                *m += pw;
                pw *= u;
            }
        }
    }
    let s = DMatrix::from_fn(dim, dim, |a, b| moments[a + b]);
    let (inv, cond) = spd_inverse(&s).ok_or_else(|| "singular local design".to_string())?;
    if cond > MAX_CONDITION {
        return Err(format!("local design condition estimate {cond:e} exceeds {MAX_CONDITION:e}"));
    }
    let first: Vec<f64> = (0..dim).map(|k| inv[(0, k)]).collect();
    Ok(kw
        .iter()
        .map(|&(u, w)| {
            if w == 0.0 {
                return 0.0;
            }
            let mut poly = 0.0;
            let mut pu = 1.0;
            for c in &first {
                poly += c * pu;
                pu *= u;
            }
            w * poly
        })
        .collect())
}

/// Weight vector `l(x0)` over all of `data_x`.
pub fn locpoly_weights(data_x: &[f64], eval_point: f64, config: &LocPolyConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if !eval_point.is_finite() {
        return Err(RdError::Domain(format!("evaluation point must be finite, got {eval_point}")));
    }
    local_weights(data_x, eval_point, config).map_err(|reason| RdError::BandwidthTooSmall {
        point: eval_point,
        h: config.bandwidth,
        index: None,
        reason,
    })
}

/// The `n × n` matrix `L` whose column `i` holds the local polynomial
/// weights for evaluation at `x_i`. Stored column-compressed; entries within
/// a column are ordered by increasing `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherMatrix {
    n: usize,
    config: LocPolyConfig,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

impl SmootherMatrix {
    pub fn build(data: &RdDataset, config: &LocPolyConfig, mode: Parallelism) -> Result<Self> {
        config.validate()?;
        let x = data.x();
        let n = x.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        let sorted: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        let radius = config.window_radius();

        let columns = map_indices(n, mode, |i| {
            let x0 = x[i];
            let lo = sorted.partition_point(|&v| v < x0 - radius);
            let hi = sorted.partition_point(|&v| v <= x0 + radius);
            let w = local_weights(&sorted[lo..hi], x0, config).map_err(|reason| {
                RdError::BandwidthTooSmall {
                    point: x0,
                    h: config.bandwidth,
                    index: Some(i),
                    reason,
                }
            })?;
            Ok((lo..hi)
                .zip(w)
                .filter(|&(_, v)| v != 0.0)
                .map(|(k, v)| (order[k], v))
                .collect::<Vec<_>>())
        });

        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        for col in columns {
            for (j, v) in col? {
                rows.push(j);
                vals.push(v);
            }
            col_ptr.push(rows.len());
        }
        Ok(SmootherMatrix {
            n,
            config: *config,
            col_ptr,
            rows,
            vals,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn config(&self) -> &LocPolyConfig {
        &self.config
    }

    /// Nonzero entries `(j, l_j(x_i))` of column `i`.
    pub fn column(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[i]..self.col_ptr[i + 1];
        self.rows[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// Fitted values `L'v`.
    pub fn fitted(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.column(i).map(|(j, w)| w * v[j]).sum()).collect()
    }

    /// Residuals `(I - L')v`.
    pub fn residualize(&self, v: &[f64]) -> Vec<f64> {
        self.fitted(v).iter().zip(v).map(|(f, x)| x - f).collect()
    }

    /// `(I - L) v`.
    pub fn residualize_transposed(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for i in 0..self.n {
            for (j, w) in self.column(i) {
                out[j] -= w * v[i];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, w) in self.column(i) {
                m[(j, i)] = w;
            }
        }
        m
    }
}

pub fn smoother_matrix(data: &RdDataset, config: &LocPolyConfig) -> Result<SmootherMatrix> {
    SmootherMatrix::build(data, config, Parallelism::Sequential)
}

/// Conventional two-sided estimate: a local linear fit at the cutoff on each
/// side, returning `intercept_above - intercept_below`.
pub fn lpe_two_sided(data: &RdDataset, kernel: Kernel, h: f64) -> Result<f64> {
    let cfg = LocPolyConfig::new(1, kernel, h)?;
    let c = data.cutoff();
    let mut intercept = [0.0; 2];
    for (slot, side) in intercept.iter_mut().zip([Side::Below, Side::Above]) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = data
            .x()
            .iter()
            .zip(data.y())
            .filter(|(&x, _)| (x >= c) == (side == Side::Above))
            .map(|(&x, &y)| (x, y))
            .unzip();
        let w = local_weights(&xs, c, &cfg).map_err(|reason| RdError::Sparse {
            side: Some(side),
            detail: format!("local linear fit at the cutoff with h = {h}: {reason}"),
        })?;
        *slot = w.iter().zip(&ys).map(|(w, y)| w * y).sum();
    }
    Ok(intercept[1] - intercept[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    /// First row of (XᵀWX)⁻¹XᵀW from an unscaled dense design.
    fn dense_oracle(xs: &[f64], x0: f64, h: f64, p: usize, k: Kernel) -> Vec<f64> {
        let n = xs.len();
        let x = DMatrix::from_fn(n, p + 1, |j, c| (xs[j] - x0).powi(c as i32));
        let w = DMatrix::from_diagonal(&DVector::from_iterator(n, xs.iter().map(|&v| k.weight((v - x0) / h))));
        let xtw = x.transpose() * &w;
        let a = (&xtw * &x).try_inverse().unwrap() * xtw;
        a.row(0).iter().copied().collect()
    }

    fn rd(x: Vec<f64>, y: Vec<f64>) -> RdDataset {
        RdDataset::new(x, y, 0.0).unwrap()
    }

    #[test]
    fn local_constant_uniform_is_mean() {
        let cfg = LocPolyConfig::new(0, Kernel::Uniform, 1.0).unwrap();
        let w = locpoly_weights(&[-0.5, 0.0, 0.5, 3.0], 0.0, &cfg).unwrap();
        for v in &w[..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(w[3], 0.0);
    }

    #[test]
    fn local_linear_reproduces_lines() {
        let xs = [-0.9, -0.4, -0.1, 0.2, 0.35, 0.8];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x).collect();
        for k in Kernel::ALL {
            let cfg = LocPolyConfig::new(1, k, 0.7).unwrap();
            for &x0 in &[-0.5, 0.0, 0.3] {
                let w = locpoly_weights(&xs, x0, &cfg).unwrap();
                let fit: f64 = w.iter().zip(&ys).map(|(a, b)| a * b).sum();
                assert!((fit - (2.0 - 3.0 * x0)).abs() < 1e-12, "{k} at {x0}");
            }
        }
    }

    #[test]
    fn epanechnikov_five_point_oracle() {
        let xs = [-0.2, -0.1, 0.0, 0.1, 0.2];
        let cfg = LocPolyConfig::new(1, Kernel::Epanechnikov, 0.25).unwrap();
        let w = locpoly_weights(&xs, 0.0, &cfg).unwrap();
        let oracle = dense_oracle(&xs, 0.0, 0.25, 1, Kernel::Epanechnikov);
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        // Symmetric design: the slope column drops out, weights ∝ K.
        let k: Vec<f64> = xs.iter().map(|x| 0.75 * (1.0 - (x / 0.25f64).powi(2))).collect();
        let total: f64 = k.iter().sum();
        for (a, b) in w.iter().zip(&k) {
            assert!((a - b / total).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_distinct_points_errors() {
        let cfg = LocPolyConfig::new(1, Kernel::Epanechnikov, 0.05).unwrap();
        let err = locpoly_weights(&[0.0, 0.0, 0.5], 0.0, &cfg).unwrap_err();
        assert!(matches!(err, RdError::BandwidthTooSmall { point, .. } if point == 0.0));
        // Duplicates do not count twice.
        let cfg = LocPolyConfig::new(1, Kernel::Uniform, 0.05).unwrap();
        assert!(locpoly_weights(&[0.01, 0.01, 0.01], 0.0, &cfg).is_err());
    }

    #[test]
    fn smoother_columns_sum_to_one_and_respect_window() {
        let x: Vec<f64> = (0..25).map(|i| -1.0 + 2.0 * (i as f64 + 0.3 * ((i * 7) % 5) as f64) / 25.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let data = rd(x.clone(), y);
        let cfg = LocPolyConfig::new(2, Kernel::Epanechnikov, 0.45).unwrap();
        let l = smoother_matrix(&data, &cfg).unwrap().to_dense();
        for i in 0..25 {
            let s: f64 = l.column(i).sum();
            assert!((s - 1.0).abs() < 1e-10);
            let oracle = dense_oracle(&x, x[i], 0.45, 2, Kernel::Epanechnikov);
            for j in 0..25 {
                assert!((l[(j, i)] - oracle[j]).abs() < 1e-9, "({j},{i})");
                if (x[j] - x[i]).abs() > 0.45 {
                    assert_eq!(l[(j, i)], 0.0);
                }
            }
        }
    }

    #[test]
    fn smoother_parallel_build_is_identical() {
        let x: Vec<f64> = (0..60).map(|i| ((i * 37) % 60) as f64 / 30.0 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let data = rd(x, y);
        let cfg = LocPolyConfig::new(1, Kernel::Triangular, 0.3).unwrap();
        let a = SmootherMatrix::build(&data, &cfg, Parallelism::Sequential).unwrap();
        let b = SmootherMatrix::build(&data, &cfg, Parallelism::Rayon).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smoother_error_names_index() {
        let data = rd(vec![-1.0, -0.9, 0.5, 0.55, 0.9], vec![0.0; 5]);
        let cfg = LocPolyConfig::new(1, Kernel::Epanechnikov, 0.2).unwrap();
        match smoother_matrix(&data, &cfg) {
            Err(RdError::BandwidthTooSmall { index: Some(i), .. }) => assert_eq!(i, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn three_collinear_points() {
        let data = rd(vec![-1.0, 0.0, 1.0], vec![-1.0, 1.0, 3.0]);
        let cfg = LocPolyConfig::new(1, Kernel::Uniform, 5.0).unwrap();
        let l = smoother_matrix(&data, &cfg).unwrap();
        let fit = l.fitted(data.y());
        for (a, b) in fit.iter().zip(data.y()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_residualization_matches_dense() {
        let x: Vec<f64> = (0..15).map(|i| -1.0 + i as f64 / 7.0).collect();
        let data = rd(x, vec![0.0; 15]);
        let cfg = LocPolyConfig::new(1, Kernel::Epanechnikov, 0.4).unwrap();
        let l = smoother_matrix(&data, &cfg).unwrap();
        let v: Vec<f64> = (0..15).map(|i| (i as f64).cos()).collect();
        let dense = l.to_dense();
        let expect = DVector::from_vec(v.clone()) - &dense * DVector::from_vec(v.clone());
        for (a, b) in l.residualize_transposed(&v).iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn lpe_examples() {
        let x: Vec<f64> = (0..40).map(|i| -1.0 + (i as f64 + 0.5) / 20.0).collect();
        let step: Vec<f64> = x.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect();
        let tau = lpe_two_sided(&rd(x.clone(), step), Kernel::Triangular, 5.0).unwrap();
        assert!((tau - 1.0).abs() < 1e-12);
        let line: Vec<f64> = x.iter().map(|&v| v + if v >= 0.0 { 0.1 } else { 0.0 }).collect();
        let tau = lpe_two_sided(&rd(x.clone(), line), Kernel::Epanechnikov, 0.5).unwrap();
        assert!((tau - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lpe_sparse_side_is_named() {
        let data = rd(vec![-0.9, 0.1, 0.2, 0.3], vec![0.0; 4]);
        match lpe_two_sided(&data, Kernel::Epanechnikov, 0.5) {
            Err(RdError::Sparse { side: Some(Side::Below), .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
