//! Grid-search oracle for the truncated-normal null fit. It shares no code
//! with the library: its own quantiles, a power-series normal CDF, raw-sum
//! likelihood, and a zooming grid.

pub struct OracleFit {
    pub mu: f64,
    pub sigma: f64,
    pub log_likelihood: f64,
    pub a: f64,
    pub b: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

/// `Φ(x) - 1/2` by the series `φ(x) Σ x^(2n+1) / (2n+1)!!`.
fn phi_minus_half(x: f64) -> f64 {
    let (mut term, mut sum, mut k) = (x, x, 1.0);
    while term.abs() > 1e-18 * sum.abs().max(1e-300) {
        k += 2.0;
        term *= x * x / k;
        sum += term;
    }
    sum * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn log_likelihood(inside: &[f64], a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let body: f64 = inside.iter().map(|&z| {
        let u = (z - mu) / sigma;
        -0.5 * u * u - half_log_2pi - sigma.ln()
    }).sum();
    let mass = phi_minus_half((b - mu) / sigma) - phi_minus_half((a - mu) / sigma);
    body - inside.len() as f64 * mass.ln()
}

pub fn fit(z: &[f64], center_fraction: f64) -> OracleFit {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let a = quantile(&sorted, (1.0 - center_fraction) / 2.0);
    let b = quantile(&sorted, (1.0 + center_fraction) / 2.0);
    let inside: Vec<f64> = sorted.iter().copied().filter(|&v| v >= a && v <= b).collect();

    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
    let (mut mu_c, mut sigma_c) = (mean, b - a);
    let mut half = [b - a, b - a];
    let mut best = (f64::NEG_INFINITY, mu_c, sigma_c);
    while half[0] > 1e-13 * (1.0 + mu_c.abs()) {
        for i in -10..=10 {
            for j in -10..=10 {
                let mu = mu_c + half[0] * i as f64 / 10.0;
                let sigma = sigma_c + half[1] * j as f64 / 10.0;
                if sigma <= 1e-3 {
                    continue;
                }
                let ll = log_likelihood(&inside, a, b, mu, sigma);
                if ll > best.0 {
                    best = (ll, mu, sigma);
                }
            }
        }
        (mu_c, sigma_c) = (best.1, best.2);
        half = [half[0] / 5.0, half[1] / 5.0];
    }
    OracleFit { mu: best.1, sigma: best.2, log_likelihood: best.0, a, b }
}

/// `-2 log2` of the Bhattacharyya coefficient of two normals.
pub fn renyi_half(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let v = s1 * s1 + s2 * s2;
    let bc = (2.0 * s1 * s2 / v).sqrt() * (-(m1 - m2).powi(2) / (4.0 * v)).exp();
    -2.0 * bc.log2()
}
