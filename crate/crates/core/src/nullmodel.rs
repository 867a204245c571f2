//! Empirical null estimation and level adjustment.
//!
//! The null distribution of z-values (normal quantiles of the levels) is
//! modelled as `N(mu0, sigma0^2)`. It is estimated by maximizing the
//! likelihood of the z-values in a central interval `[a, b]` under a
//! normal truncated to that interval; the less extreme values are taken to
//! be dominated by unaffected features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{norm_cdf, norm_pdf, norm_quantile};
use crate::error::{Error, Result};
use crate::levels::{ConfidenceVector, FeatureLevel};
use crate::optim::NelderMead;

pub const DEFAULT_CENTER_FRACTION: f64 = 0.9;
/// Minimum number of z-values accepted by [`fit_null`].
pub const MIN_FIT_SIZE: usize = 100;
/// Minimum number of z-values inside the central interval.
pub const MIN_CENTRAL: usize = 10;
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Assumed,
    Estimated,
}

/// Normal null distribution on the z scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub mu0: f64,
    pub sigma0: f64,
    /// Estimated null proportion; diagnostic only, never used to adjust.
    pub p0: f64,
    pub provenance: Provenance,
    pub central_interval: Option<[f64; 2]>,
    pub n_central: Option<usize>,
}

impl NullModel {
    /// The theoretical `N(0, 1)` null.
    pub fn assumed() -> Self {
        Self {
            mu0: 0.0,
            sigma0: 1.0,
            p0: 1.0,
            provenance: Provenance::Assumed,
            central_interval: None,
            n_central: None,
        }
    }

    /// A plain normal with the given location and scale, tagged as
    /// estimated without fit metadata.
    pub fn normal(mu0: f64, sigma0: f64) -> Self {
        Self {
            mu0,
            sigma0,
            p0: 1.0,
            provenance: Provenance::Estimated,
            central_interval: None,
            n_central: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.mu0 == 0.0 && self.sigma0 == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(Error::InvalidConfig(format!("mu0 must be finite, got {}", self.mu0)));
        }
        if !(self.sigma0.is_finite() && self.sigma0 >= SIGMA_FLOOR) {
            return Err(Error::InvalidConfig(format!("sigma0 must be >= {SIGMA_FLOOR}, got {}", self.sigma0)));
        }
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(Error::InvalidConfig(format!("p0 must lie in (0, 1], got {}", self.p0)));
        }
        match self.provenance {
            Provenance::Assumed => {
                if self.mu0 != 0.0 || self.sigma0 != 1.0 || self.p0 != 1.0 {
                    return Err(Error::InvalidConfig("assumed null must be N(0, 1) with p0 = 1".into()));
                }
            }
            Provenance::Estimated => {
                if let Some([a, b]) = self.central_interval {
                    if !(a < b) {
                        return Err(Error::InvalidConfig(format!("central interval [{a}, {b}] is empty")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: NullModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

/// A fitted null together with fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NullFit {
    pub model: NullModel,
    /// Truncated-normal log-likelihood at the estimate.
    pub log_likelihood: f64,
    pub evaluations: usize,
}

/// Sample quantile by linear interpolation of order statistics
/// (`h = (n - 1) q`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return sorted[lo.min(sorted.len() - 1)];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Sufficient statistics of the central z-values, centered at `shift`.
#[derive(Debug, Clone, Copy)]
struct Central {
    a: f64,
    b: f64,
    n: f64,
    shift: f64,
    s1: f64,
    s2: f64,
}

impl Central {
    fn new(values: &[f64], a: f64, b: f64, shift: f64) -> Self {
        let (s1, s2) = values.iter().fold((0.0, 0.0), |(s1, s2), &z| {
            let d = z - shift;
            (s1 + d, s2 + d * d)
        });
        Self { a, b, n: values.len() as f64, shift, s1, s2 }
    }

    fn log_mass(&self, mu: f64, sigma: f64) -> f64 {
        interval_mass(self.a, self.b, mu, sigma).ln()
    }

    fn log_likelihood(&self, mu: f64, sigma: f64) -> f64 {
        let m = mu - self.shift;
        let q = self.s2 - 2.0 * m * self.s1 + self.n * m * m;
        -0.5 * self.n * (2.0 * std::f64::consts::PI).ln() - q / (2.0 * sigma * sigma)
            - self.n * sigma.ln()
            - self.n * self.log_mass(mu, sigma)
    }

    /// Gradient in (mu, log sigma).
    fn gradient(&self, mu: f64, sigma: f64) -> [f64; 2] {
        let m = mu - self.shift;
        let sum_dev = self.s1 - self.n * m;
        let q = self.s2 - 2.0 * m * self.s1 + self.n * m * m;
        let alpha = (self.a - mu) / sigma;
        let beta = (self.b - mu) / sigma;
        let mass = interval_mass(self.a, self.b, mu, sigma);
        let (pa, pb) = (norm_pdf(alpha), norm_pdf(beta));
        let d_mu = sum_dev / (sigma * sigma) - self.n * (pa - pb) / (sigma * mass);
        let d_sigma = q / sigma.powi(3) - self.n / sigma - self.n * (alpha * pa - beta * pb) / (sigma * mass);
        [d_mu, d_sigma * sigma]
    }
}

/// `Φ((b-μ)/σ) - Φ((a-μ)/σ)`, evaluated on the side that avoids cancellation.
fn interval_mass(a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let alpha = (a - mu) / sigma;
    let beta = (b - mu) / sigma;
    if alpha > 0.0 {
        norm_cdf(-alpha) - norm_cdf(-beta)
    } else {
        norm_cdf(beta) - norm_cdf(alpha)
    }
}

/// Truncated-normal log-likelihood of the values of `z` inside `[a, b]`.
pub fn truncated_log_likelihood(z: &[f64], a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let inside: Vec<f64> = z.iter().copied().filter(|&v| v >= a && v <= b).collect();
    let shift = if inside.is_empty() { 0.0 } else { inside[inside.len() / 2] };
    Central::new(&inside, a, b, shift).log_likelihood(mu, sigma)
}

/// Estimate the null from z-values. See [`fit_null_detailed`].
pub fn fit_null(z: &[f64], center_fraction: f64) -> Result<NullModel> {
    fit_null_detailed(z, center_fraction).map(|f| f.model)
}

/// Maximum-likelihood fit of a normal truncated to the central
/// `center_fraction` of the z-values. `(mu, sigma)` are searched over
/// `mu in [a, b]`, `sigma in [1e-3, 10 sd(z)]`.
pub fn fit_null_detailed(z: &[f64], center_fraction: f64) -> Result<NullFit> {
    if !(center_fraction > 0.0 && center_fraction <= 1.0) {
        return Err(Error::domain("center fraction", center_fraction));
    }
    if let Some(&bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("z-value", bad));
    }
    if z.len() < MIN_FIT_SIZE {
        return Err(Error::InsufficientData { needed: MIN_FIT_SIZE, got: z.len() });
    }
    let d = z.len() as f64;
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let a = quantile_sorted(&sorted, (1.0 - center_fraction) / 2.0);
    let b = quantile_sorted(&sorted, (1.0 + center_fraction) / 2.0);
    let lo = sorted.partition_point(|&v| v < a);
    let hi = sorted.partition_point(|&v| v <= b);
    let inside = &sorted[lo..hi];
    if inside.len() < MIN_CENTRAL || !(a < b) {
        return Err(Error::DegenerateInterval { a, b, n_central: inside.len() });
    }

    let mean = z.iter().sum::<f64>() / d;
    let sd = (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (d - 1.0)).sqrt();
    let sigma_max = (10.0 * sd).max(SIGMA_FLOOR);

    let median = quantile_sorted(inside, 0.5);
    let central = Central::new(inside, a, b, median);
    let iqr = quantile_sorted(inside, 0.75) - quantile_sorted(inside, 0.25);
    let sigma_start = (iqr / 1.349).clamp(SIGMA_FLOOR, sigma_max);

    let feasible = |mu: f64, sigma: f64| mu >= a && mu <= b && sigma >= SIGMA_FLOOR && sigma <= sigma_max;
    let objective = |[mu, log_sigma]: [f64; 2]| {
        let sigma = log_sigma.exp();
        if !feasible(mu, sigma) {
            return f64::INFINITY;
        }
        -central.log_likelihood(mu, sigma)
    };

    let nm = NelderMead::default();
    let width = b - a;
    let mut start = [median, sigma_start.ln()];
    let mut step = [0.1 * width, 0.1];
    let mut evaluations = 0;
    let mut best = nm.minimize(objective, start, step);
    evaluations += best.evaluations;
    // restart from the optimum until the value stops moving
    for _ in 0..5 {
        start = best.x;
        step = [0.01 * width, 0.01];
        let again = nm.minimize(objective, start, step);
        evaluations += again.evaluations;
        let improved = again.fx < best.fx - 1e-13 * (1.0 + best.fx.abs());
        if again.fx <= best.fx {
            best = again;
        }
        if !improved {
            break;
        }
    }
    if !best.converged || !best.fx.is_finite() {
        let sigma = best.x[1].exp();
        return Err(Error::NoConvergence { mu: best.x[0], sigma, log_likelihood: -best.fx });
    }

    let (mu, log_sigma, neg_ll) = newton_polish(&central, best.x, best.fx, &feasible, &mut evaluations);
    let sigma = log_sigma.exp();
    let mass = interval_mass(a, b, mu, sigma);
    let p0 = ((inside.len() as f64 / d) / mass).min(1.0);
    Ok(NullFit {
        model: NullModel {
            mu0: mu,
            sigma0: sigma,
            p0,
            provenance: Provenance::Estimated,
            central_interval: Some([a, b]),
            n_central: Some(inside.len()),
        },
        log_likelihood: -neg_ll,
        evaluations,
    })
}

/// Newton steps on the gradient in (mu, log sigma) with a finite-difference
/// Hessian; a step is taken only if it stays feasible and does not lower
/// the likelihood by more than rounding.
fn newton_polish(
    c: &Central,
    x0: [f64; 2],
    f0: f64,
    feasible: &impl Fn(f64, f64) -> bool,
    evaluations: &mut usize,
) -> (f64, f64, f64) {
    let neg_ll = |x: [f64; 2]| -c.log_likelihood(x[0], x[1].exp());
    let grad = |x: [f64; 2]| {
        let g = c.gradient(x[0], x[1].exp());
        [-g[0], -g[1]]
    };
    let (mut x, mut fx) = (x0, f0);
    for _ in 0..20 {
        let g = grad(x);
        let h = [1e-6 * (1.0 + x[0].abs()), 1e-6];
        let g_mu = (grad([x[0] + h[0], x[1]]), grad([x[0] - h[0], x[1]]));
        let g_ls = (grad([x[0], x[1] + h[1]]), grad([x[0], x[1] - h[1]]));
        let h00 = (g_mu.0[0] - g_mu.1[0]) / (2.0 * h[0]);
        let h11 = (g_ls.0[1] - g_ls.1[1]) / (2.0 * h[1]);
        let h01 = 0.5 * ((g_mu.0[1] - g_mu.1[1]) / (2.0 * h[0]) + (g_ls.0[0] - g_ls.1[0]) / (2.0 * h[1]));
        *evaluations += 5;
        let det = h00 * h11 - h01 * h01;
        if !(h00 > 0.0 && det > 0.0) {
            break;
        }
        let step = [(h11 * g[0] - h01 * g[1]) / det, (h00 * g[1] - h01 * g[0]) / det];
        let cand = [x[0] - step[0], x[1] - step[1]];
        if !feasible(cand[0], cand[1].exp()) {
            break;
        }
        let fc = neg_ll(cand);
        *evaluations += 1;
        if !(fc <= fx + 1e-12 * (1.0 + fx.abs())) {
            break;
        }
        // near the optimum the likelihood is flat to rounding, so the
        // gradient (not the value) decides convergence
        x = cand;
        fx = fc;
        if step[0].abs().max(step[1].abs()) < 1e-12 {
            break;
        }
    }
    (x[0], x[1], fx)
}

/// Level of a feature under `null`: `Φ((Φ⁻¹(level) - mu0) / sigma0)`.
/// The identity null returns `level` unchanged.
pub fn adjust_level(level: f64, null: &NullModel) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain("confidence level", level));
    }
    if null.is_identity() {
        return Ok(level);
    }
    Ok(norm_cdf((norm_quantile(level) - null.mu0) / null.sigma0))
}

/// Adjust every included feature; excluded features pass through.
pub fn adjust_vector(v: &ConfidenceVector, null: &NullModel) -> ConfidenceVector {
    if null.is_identity() {
        return v.clone();
    }
    let features = v
        .features()
        .par_iter()
        .map(|f| {
            if !f.is_included() {
                return f.clone();
            }
            FeatureLevel::from_z(f.id.clone(), f.n_obs, (f.z - null.mu0) / null.sigma0)
        })
        .collect();
    ConfidenceVector::new(features)
}
