//! Rule-of-thumb bandwidth and the DISS sample-size metric: the (expected)
//! number of observations within one rule-of-thumb bandwidth of the cutoff.

use crate::data::{quantile_sorted, sample_variance, RdDataset};
use crate::dist::{beta_cdf, beta_quantile};
use crate::error::{RdError, Result};
use crate::simulation::dgp::DgpSpec;

/// `h = ROT_FACTOR · min(sd, IQR/1.34) · n^{-1/5}`.
pub const ROT_FACTOR: f64 = 0.9;

pub fn rot_bandwidth(x_data: &[f64]) -> Result<f64> {
    rot_bandwidth_with(x_data, ROT_FACTOR)
}

pub fn rot_bandwidth_with(x_data: &[f64], factor: f64) -> Result<f64> {
    let n = x_data.len();
    if n < 2 {
        return Err(RdError::InvalidData(format!("rule of thumb needs n ≥ 2, got {n}")));
    }
    let sd = sample_variance(x_data).sqrt();
    let mut sorted = x_data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    Ok(rule(factor, sd, iqr, n)?)
}

fn rule(factor: f64, sd: f64, iqr: f64, n: usize) -> Result<f64> {
    // A zero IQR with positive sd falls back to sd alone.
    let scale = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(scale > 0.0) {
        return Err(RdError::DegenerateInput("running variable has zero spread".into()));
    }
    Ok(factor * scale * (n as f64).powf(-0.2))
}

/// Number of observations within `h_rot` of the cutoff.
pub fn diss_m(data: &RdDataset) -> Result<usize> {
    let h = rot_bandwidth(data.x())?;
    let c = data.cutoff();
    Ok(data.x().iter().filter(|&&x| (x - c).abs() <= h).count())
}

/// Population rule-of-thumb bandwidth for `X = 2Z - 1`, `Z ~ Beta(a, b)`.
pub fn population_rot(dgp: &DgpSpec, n: usize) -> Result<f64> {
    let (a, b) = (dgp.beta_a, dgp.beta_b);
    let var_z = a * b / ((a + b).powi(2) * (a + b + 1.0));
    let sd = 2.0 * var_z.sqrt();
    let iqr = 2.0 * (beta_quantile(a, b, 0.75) - beta_quantile(a, b, 0.25));
    rule(ROT_FACTOR, sd, iqr, n)
}

/// `n · P(|X - c| ≤ h_rot)` under the DGP's Beta law.
pub fn expected_m(dgp: &DgpSpec, n: usize) -> Result<f64> {
    let h = population_rot(dgp, n)?;
    let c = dgp.cutoff;
    let to_z = |x: f64| (x + 1.0) / 2.0;
    let p = beta_cdf(dgp.beta_a, dgp.beta_b, to_z(c + h)) - beta_cdf(dgp.beta_a, dgp.beta_b, to_z(c - h));
    Ok(n as f64 * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::dgp::DgpSpec;
    use crate::simulation::rng::CounterRng;

    #[test]
    fn uniform_population_value() {
        // Evenly spread points on [-1, 1]: sd ≈ 1/√3 < IQR/1.34.
        let n = 140;
        let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
        let h = rot_bandwidth_with(&x, 1.06).unwrap();
        let sd = sample_variance(&x).sqrt();
        assert!((h - 1.06 * sd * 140f64.powf(-0.2)).abs() < 1e-12);
        assert!((h - 0.2277).abs() < 2e-3, "{h}");
    }

    #[test]
    fn standard_normal_like_sample() {
        let mut r = CounterRng::new(3);
        let x: Vec<f64> = (0..5000).map(|_| r.normal(0.0, 1.0)).collect();
        let h = rot_bandwidth(&x).unwrap();
        assert!((h / (ROT_FACTOR * 5000f64.powf(-0.2)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn scale_equivariance() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 17) % 50) as f64 / 10.0).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let h = rot_bandwidth(&x).unwrap();
        assert!((rot_bandwidth(&x2).unwrap() - 2.0 * h).abs() < 1e-12);
    }

    #[test]
    fn zero_scale_errors() {
        assert!(matches!(rot_bandwidth(&[2.0; 7]), Err(RdError::DegenerateInput(_))));
    }

    #[test]
    fn table_one_study_sizes() {
        let d1 = DgpSpec::paper(1).unwrap();
        let d3 = DgpSpec::paper(3).unwrap();
        let m1 = expected_m(&d1, 140).unwrap();
        let m3 = expected_m(&d3, 140).unwrap();
        assert!((m1 / 27.0 - 1.0).abs() < 0.2, "{m1}");
        assert!((m3 / 10.0 - 1.0).abs() < 0.2, "{m3}");
    }

    #[test]
    fn diss_count() {
        let x = vec![-0.5, -0.05, 0.02, 0.04, 0.6, 0.9];
        let d = RdDataset::new(x.clone(), vec![0.0; 6], 0.0).unwrap();
        let h = rot_bandwidth(&x).unwrap();
        let expect = x.iter().filter(|v| v.abs() <= h).count();
        assert_eq!(diss_m(&d).unwrap(), expect);
    }
}
