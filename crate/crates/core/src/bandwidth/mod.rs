//! Bandwidth selection.
//!
//! The SM bandwidth minimizes the asymptotic MSE of the partial linear
//! estimator under a single smooth mean function spanning the cutoff:
//!
//! ```text
//!     AMSE(h) = h⁶ b_P² + C_P1 (σ²₊ + σ²₋) / (4 n h f(c))
//!     h_SM    = ( C_P1 (σ²₊ + σ²₋) / (24 n b_P² f(c)) )^{1/7}
//! ```
//!
//! Its plug-ins come from three stages: Gaussian KDE of `f, f', f''` at the
//! cutoff; derivatives of the mean function from jump polynomials refitted
//! inside Fan–Gijbels pilot windows; nearest-neighbour variances on each
//! side.

pub mod ik;
pub mod rot;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{sample_variance, RdDataset};
use crate::density::{density_at_cutoff, DensityEstimate};
use crate::error::{RdError, Result, Side, StageExt};
use crate::kernels::Kernel;
use crate::linalg::least_squares;
use crate::ple::min_feasible_bandwidth;

pub use ik::{ik_bandwidth, IkDiagnostics};
pub use rot::{diss_m, expected_m, rot_bandwidth, rot_bandwidth_with, ROT_FACTOR};

/// Kernel whose constants scale the pilot windows. The windowed refits
/// weight every in-window point equally.
pub const PILOT_KERNEL: Kernel = Kernel::Uniform;

/// Nearest neighbours per side for the variance plug-in.
pub const NN_NEIGHBOURS: usize = 3;

const DERIVATIVE_EPS: f64 = 1e-10;

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Least-squares fit of `y` on `{1, D, (x-c), …, (x-c)^q}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPolyFit {
    pub degree: u32,
    /// `[intercept, jump, β_1, …, β_q]` in the centered basis.
    pub coefficients: Vec<f64>,
    /// `RSS / (n - q - 2)`
    pub sigma2: f64,
    pub n: usize,
}

impl JumpPolyFit {
    pub fn jump(&self) -> f64 {
        self.coefficients[1]
    }

    /// Coefficient on `(x-c)^k`.
    pub fn poly_coefficient(&self, k: u32) -> f64 {
        if k == 0 {
            self.coefficients[0]
        } else {
            self.coefficients[k as usize + 1]
        }
    }

    /// `μ̂*^{(k)}(c) = k! β_k`.
    pub fn derivative(&self, k: u32) -> f64 {
        factorial(k) * self.poly_coefficient(k)
    }
}

fn fit_jump_poly(x: &[f64], y: &[f64], c: f64, q: u32) -> Result<JumpPolyFit> {
    let n = x.len();
    let cols = q as usize + 2;
    if n < q as usize + 3 {
        return Err(RdError::Sparse {
            side: None,
            detail: format!("degree-{q} jump polynomial needs {} points, got {n}", q + 3),
        });
    }
    let scale = x.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(RdError::Rank("all x equal the cutoff".into()));
    }
    let design = DMatrix::from_fn(n, cols, |i, j| match j {
        0 => 1.0,
        1 => {
            if x[i] >= c {
                1.0
            } else {
                0.0
            }
        }
        k => ((x[i] - c) / scale).powi(k as i32 - 1),
    });
    let yv = DVector::from_column_slice(y);
    let beta = least_squares(&design, &yv)?;
    let resid = &yv - &design * &beta;
    let rss = resid.norm_squared();
    let mut coefficients: Vec<f64> = beta.iter().copied().collect();
    for (k, b) in coefficients.iter_mut().enumerate().skip(2) {
        *b /= scale.powi(k as i32 - 1);
    }
    Ok(JumpPolyFit {
        degree: q,
        coefficients,
        sigma2: rss / (n - q as usize - 2) as f64,
        n,
    })
}

/// Global polynomial of degree `q` with a jump at the cutoff.
pub fn jump_polynomial_fit(data: &RdDataset, degree: u32) -> Result<JumpPolyFit> {
    fit_jump_poly(data.x(), data.y(), data.cutoff(), degree)
}

/// `C_FG (σ² / (m² f n))^{1/(2ρ+3)}`.
pub fn fg_formula(c_fg: f64, sigma2: f64, deriv: f64, f: f64, n: usize, rho: u32) -> f64 {
    c_fg * (sigma2 / (deriv * deriv * f * n as f64)).powf(1.0 / (2 * rho + 3) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotBandwidth {
    pub nu: u32,
    pub rho: u32,
    pub h: f64,
    /// `μ̂*^{(ρ+1)}(c)` from the global fit of degree `ρ+1`.
    pub deriv: f64,
    pub sigma2: f64,
    pub c_fg: f64,
    /// Derivative below `1e-10` in magnitude; `h` set to `range(x)`.
    pub degenerate: bool,
    /// Raw value exceeded `range(x)` and was capped.
    pub capped: bool,
}

/// Fan–Gijbels pilot bandwidth for the `ν`-th derivative with `ρ = ν + 1`.
pub fn pilot_bandwidth_fg(nu: u32, data: &RdDataset, density: &DensityEstimate) -> Result<PilotBandwidth> {
    if !(1..=3).contains(&nu) {
        return Err(RdError::Domain(format!("pilot derivative order must be 1, 2 or 3, got {nu}")));
    }
    let rho = nu + 1;
    let global = jump_polynomial_fit(data, rho + 1)?;
    let deriv = global.derivative(rho + 1);
    let c_fg = PILOT_KERNEL.functionals()?.fg(nu)?;
    let range = data.range();
    let (h, degenerate) = if deriv.abs() < DERIVATIVE_EPS {
        (range, true)
    } else {
        (fg_formula(c_fg, global.sigma2, deriv, density.f_c, data.len(), rho), false)
    };
    let capped = !degenerate && !(h <= range);
    Ok(PilotBandwidth {
        nu,
        rho,
        h: if capped { range } else { h },
        deriv,
        sigma2: global.sigma2,
        c_fg,
        degenerate,
        capped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDerivative {
    pub nu: u32,
    pub value: f64,
    /// Window radius actually used.
    pub radius: f64,
    pub count: usize,
    /// Window was widened beyond the pilot bandwidth.
    pub expanded: bool,
}

fn window_fit(data: &RdDataset, radius: f64, rho: u32) -> Option<Result<JumpPolyFit>> {
    let (x, y) = data.window(radius);
    let c = data.cutoff();
    let above = x.iter().filter(|&&v| v >= c).count();
    if x.len() < rho as usize + 3 || above == 0 || above == x.len() {
        return None;
    }
    Some(fit_jump_poly(&x, &y, c, rho))
}

/// `μ̂*^{(ν)}(c)` for `ν = 1, 2, 3`, each from a degree-`ρ = ν+1` jump
/// polynomial fitted to observations within `h_fg(ν)` of the cutoff. A
/// window that is too sparse (fewer than `ρ + 3` points, a side missing, or
/// a singular fit) is widened to the next distance that works.
pub fn windowed_derivatives(data: &RdDataset, pilots: [f64; 3]) -> Result<[WindowedDerivative; 3]> {
    let c = data.cutoff();
    let mut dist: Vec<f64> = data.x().iter().map(|v| (v - c).abs()).collect();
    dist.sort_by(f64::total_cmp);
    dist.dedup();
    let mut out = Vec::with_capacity(3);
    for (nu, &h) in (1u32..=3).zip(&pilots) {
        let rho = nu + 1;
        let mut radius = h;
        let mut expanded = false;
        let mut candidates = dist.iter().copied().filter(|&d| d > h);
        let fit = loop {
            match window_fit(data, radius, rho) {
                Some(Ok(fit)) => break fit,
                Some(Err(RdError::Rank(_))) | None => match candidates.next() {
                    Some(d) => {
                        radius = d;
                        expanded = true;
                    }
                    None => {
                        return Err(RdError::Sparse {
                            side: None,
                            detail: format!("no window supports a degree-{rho} jump polynomial"),
                        })
                    }
                },
                Some(Err(e)) => return Err(e),
            }
        };
        out.push(WindowedDerivative {
            nu,
            value: fit.derivative(nu),
            radius,
            count: fit.n,
            expanded,
        });
    }
    Ok([out[0].clone(), out[1].clone(), out[2].clone()])
}

/// Sample variance (divisor `count - 1`) of the responses of the `j`
/// observations closest to the cutoff on `side`. Observations tied with the
/// `j`-th distance are all included.
pub fn nn_variance(data: &RdDataset, side: Side, j: usize) -> Result<f64> {
    let c = data.cutoff();
    let mut obs: Vec<(f64, usize)> = (0..data.len())
        .filter(|&i| data.side(i) == side)
        .map(|i| ((data.x()[i] - c).abs(), i))
        .collect();
    if obs.len() < j || j < 2 {
        return Err(RdError::Sparse {
            side: Some(side),
            detail: format!("{} observations, nearest-neighbour variance needs {j}", obs.len()),
        });
    }
    obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let cut = obs[j - 1].0;
    let ys: Vec<f64> = obs
        .iter()
        .take_while(|(d, _)| *d <= cut)
        .map(|&(_, i)| data.y()[i])
        .collect();
    Ok(sample_variance(&ys))
}

/// Unclamped `h_SM` from its plug-ins.
pub fn sm_formula(cp1: f64, sigma2_minus: f64, sigma2_plus: f64, n: usize, b_p: f64, f: f64) -> f64 {
    (cp1 * (sigma2_plus + sigma2_minus) / (24.0 * n as f64 * b_p * b_p * f)).powf(1.0 / 7.0)
}

/// `h⁶ b_P² + C_P1 (σ²₊ + σ²₋) / (4 n h f)`.
pub fn amse_ple(h: f64, b_p: f64, cp1: f64, sigma2_minus: f64, sigma2_plus: f64, n: usize, f: f64) -> f64 {
    h.powi(6) * b_p * b_p + cp1 * (sigma2_plus + sigma2_minus) / (4.0 * n as f64 * h * f)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SmClamps {
    pub density_floored: bool,
    pub pilot_degenerate: [bool; 3],
    pub pilot_capped: [bool; 3],
    pub window_expanded: [bool; 3],
    /// `b_P = 0`; bandwidth set to `range(x)`.
    pub bias_zero: bool,
    /// Raised to the minimum feasible bandwidth.
    pub floor_binding: bool,
    /// Lowered to `range(x)`.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmDiagnostics {
    pub f_c: f64,
    pub f1_c: f64,
    pub f2_c: f64,
    pub density_bandwidths: [f64; 3],
    pub mu1_c: f64,
    pub mu2_c: f64,
    pub mu3_c: f64,
    pub g2_c: f64,
    pub g2p_c: f64,
    pub b_p: f64,
    pub sigma2_minus: f64,
    pub sigma2_plus: f64,
    pub h_fg: [f64; 3],
    pub windows: [f64; 3],
    pub h_min: f64,
    pub h_unclamped: f64,
    pub h_sm: f64,
    pub clamps: SmClamps,
}

impl SmDiagnostics {
    /// Named values in a fixed order, for reports.
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("f_c", self.f_c),
            ("f1_c", self.f1_c),
            ("f2_c", self.f2_c),
            ("kde_h0", self.density_bandwidths[0]),
            ("kde_h1", self.density_bandwidths[1]),
            ("kde_h2", self.density_bandwidths[2]),
            ("mu1_c", self.mu1_c),
            ("mu2_c", self.mu2_c),
            ("mu3_c", self.mu3_c),
            ("g2_c", self.g2_c),
            ("g2p_c", self.g2p_c),
            ("b_p", self.b_p),
            ("sigma2_minus", self.sigma2_minus),
            ("sigma2_plus", self.sigma2_plus),
            ("h_fg1", self.h_fg[0]),
            ("h_fg2", self.h_fg[1]),
            ("h_fg3", self.h_fg[2]),
            ("window1", self.windows[0]),
            ("window2", self.windows[1]),
            ("window3", self.windows[2]),
            ("h_min", self.h_min),
            ("h_unclamped", self.h_unclamped),
            ("h_sm", self.h_sm),
        ]
    }
}

/// `g₂(c) = μ'f' + μ''f/2` and its derivative
/// `g₂'(c) = μ''f' + μ'f'' + μ'''f/2 + μ''f'/2`.
pub fn curvature_terms(mu: [f64; 3], f: f64, f1: f64, f2: f64) -> (f64, f64) {
    let [m1, m2, m3] = mu;
    let g2 = m1 * f1 + m2 * f / 2.0;
    let g2p = m2 * f1 + m1 * f2 + m3 * f / 2.0 + m2 * f1 / 2.0;
    (g2, g2p)
}

/// The SM plug-in bandwidth for a PLE fit with `kernel` and `degree`,
/// clamped to `[min feasible bandwidth, range(x)]`.
pub fn sm_bandwidth(data: &RdDataset, kernel: Kernel, degree: u32) -> Result<SmDiagnostics> {
    let density = density_at_cutoff(data).stage("sm:density")?;
    let mut pilots = Vec::with_capacity(3);
    for nu in 1..=3 {
        pilots.push(pilot_bandwidth_fg(nu, data, &density).stage("sm:pilot")?);
    }
    let h_fg = [pilots[0].h, pilots[1].h, pilots[2].h];
    let derivs = windowed_derivatives(data, h_fg).stage("sm:derivatives")?;
    let sigma2_minus = nn_variance(data, Side::Below, NN_NEIGHBOURS).stage("sm:variance")?;
    let sigma2_plus = nn_variance(data, Side::Above, NN_NEIGHBOURS).stage("sm:variance")?;

    let mu = [derivs[0].value, derivs[1].value, derivs[2].value];
    let f = density.f_c;
    let (g2_c, g2p_c) = curvature_terms(mu, f, density.f1_c, density.f2_c);
    let functionals = kernel.functionals().stage("sm:kernel")?;
    let b_p = functionals.porter.bias_constant(f, density.f1_c, g2_c, g2p_c);

    let range = data.range();
    let floor = min_feasible_bandwidth(data, degree, kernel).stage("sm:floor")?;
    let mut clamps = SmClamps {
        density_floored: density.floored,
        pilot_degenerate: [pilots[0].degenerate, pilots[1].degenerate, pilots[2].degenerate],
        pilot_capped: [pilots[0].capped, pilots[1].capped, pilots[2].capped],
        window_expanded: [derivs[0].expanded, derivs[1].expanded, derivs[2].expanded],
        ..SmClamps::default()
    };
    let h_unclamped = if b_p == 0.0 {
        clamps.bias_zero = true;
        range
    } else {
        sm_formula(functionals.porter.cp1, sigma2_minus, sigma2_plus, data.len(), b_p, f)
    };
    if !h_unclamped.is_finite() && !clamps.bias_zero {
        return Err(RdError::Numerical(format!("h_SM = {h_unclamped}")).at("sm:formula"));
    }
    let mut h_sm = h_unclamped;
    if h_sm > range {
        h_sm = range;
        clamps.capped = true;
    }
    if h_sm < floor.h_min {
        h_sm = floor.h_min;
        clamps.floor_binding = true;
    }
    Ok(SmDiagnostics {
        f_c: f,
        f1_c: density.f1_c,
        f2_c: density.f2_c,
        density_bandwidths: density.bandwidths,
        mu1_c: mu[0],
        mu2_c: mu[1],
        mu3_c: mu[2],
        g2_c,
        g2p_c,
        b_p,
        sigma2_minus,
        sigma2_plus,
        h_fg,
        windows: [derivs[0].radius, derivs[1].radius, derivs[2].radius],
        h_min: floor.h_min,
        h_unclamped,
        h_sm,
        clamps,
    })
}
