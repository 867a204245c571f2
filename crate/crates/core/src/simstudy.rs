//! Simulation of null estimation as conditional inference.
//!
//! Each trial draws a precision `sigma_k` and `d` independent z-values:
//! unaffected features from `N(0, sigma_k^2)` and affected ones from
//! `N(m sigma_k, (s sigma_k)^2)`. Levels computed under the assumed or the
//! estimated null are compared with the true levels conditional on
//! `sigma_k` through the conservative error: the net fraction of features
//! whose level is indecisive (inside `[alpha, 1 - alpha]`) while the true
//! conditional level is decisive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{norm_cdf, norm_quantile_tails};
use crate::error::{Error, Result};
use crate::nullmodel::{fit_null, NullModel, DEFAULT_CENTER_FRACTION};
use crate::rng::CounterRng;
use crate::DEFAULT_SEED;

const SIGMA_STREAM: u64 = 0x51_6D_A0;
const Z_STREAM: u64 = 0x2_7A1E;
/// Nodes of the log-scale rule used to marginalize over a continuous prior.
const LOG_UNIFORM_NODES: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthMode {
    /// Observed levels are `Φ(z)`, exact given `sigma = 1`.
    Conditional,
    /// Observed levels are tail areas under the mixture over precisions.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullMode {
    Estimated,
    Assumed,
}

impl NullMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NullMode::Estimated => "estimated",
            NullMode::Assumed => "assumed",
        }
    }
}

/// Distribution of the per-trial precision.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecisionPrior {
    Discrete { support: Vec<f64>, probs: Vec<f64> },
    /// `log sigma` uniform between `log lo` and `log hi`.
    LogUniform { lo: f64, hi: f64 },
}

impl PrecisionPrior {
    /// Inverse-CDF draw from a uniform variate.
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            PrecisionPrior::Discrete { support, probs } => {
                let mut acc = 0.0;
                for (s, p) in support.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *s;
                    }
                }
                *support.last().expect("validated nonempty")
            }
            PrecisionPrior::LogUniform { lo, hi } => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
        }
    }

    /// Mixture components `(sigma, weight)`; the continuous prior is
    /// discretized with Simpson's rule on the log scale.
    pub fn components(&self) -> Vec<(f64, f64)> {
        match self {
            PrecisionPrior::Discrete { support, probs } => support.iter().copied().zip(probs.iter().copied()).collect(),
            PrecisionPrior::LogUniform { lo, hi } => {
                let n = LOG_UNIFORM_NODES;
                let (a, b) = (lo.ln(), hi.ln());
                let h = (b - a) / (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        let w = if i == 0 || i == n - 1 {
                            1.0
                        } else if i % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        ((a + i as f64 * h).exp(), w * h / 3.0 / (b - a))
                    })
                    .collect()
            }
        }
    }
}

fn default_k() -> usize {
    500
}
fn default_d() -> usize {
    10_000
}
fn default_n_affected() -> usize {
    500
}
fn default_support() -> Vec<f64> {
    vec![2.0 / 3.0, 1.0, 1.5]
}
fn default_probs() -> Vec<f64> {
    vec![0.3, 0.4, 0.3]
}
fn default_mean_mult() -> f64 {
    2.5
}
fn default_sd_mult() -> f64 {
    1.25
}
fn default_alpha() -> f64 {
    0.01
}
fn default_truth() -> TruthMode {
    TruthMode::Conditional
}
fn default_null() -> NullMode {
    NullMode::Estimated
}
fn default_center() -> f64 {
    DEFAULT_CENTER_FRACTION
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Study design. Every field has a default, so `{}` is the full-size
/// design with 500 trials of 10,000 features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_k", alias = "K")]
    pub k: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n_affected")]
    pub n_affected: usize,
    #[serde(default = "default_support")]
    pub precision_support: Vec<f64>,
    #[serde(default = "default_probs")]
    pub precision_probs: Vec<f64>,
    /// When set, `sigma_k` is log-uniform on these bounds and the discrete
    /// support is ignored.
    #[serde(default)]
    pub log_uniform_precision: Option<[f64; 2]>,
    #[serde(default = "default_mean_mult")]
    pub affected_mean_mult: f64,
    #[serde(default = "default_sd_mult")]
    pub affected_sd_mult: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_truth")]
    pub truth_mode: TruthMode,
    #[serde(default = "default_null")]
    pub null_mode: NullMode,
    #[serde(default = "default_center")]
    pub center_fraction: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.n_affected >= self.d {
            return bad(format!("n_affected ({}) must be below d ({})", self.n_affected, self.d));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must lie in (0, 0.5), got {}", self.alpha));
        }
        if !(self.center_fraction > 0.0 && self.center_fraction <= 1.0) {
            return bad(format!("center_fraction must lie in (0, 1], got {}", self.center_fraction));
        }
        if !(self.affected_sd_mult > 0.0 && self.affected_mean_mult.is_finite()) {
            return bad("affected multipliers must be finite with a positive sd".into());
        }
        match self.log_uniform_precision {
            Some([lo, hi]) => {
                if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                    return bad(format!("log-uniform bounds must satisfy 0 < lo < hi, got [{lo}, {hi}]"));
                }
            }
            None => {
                if self.precision_support.is_empty() || self.precision_support.len() != self.precision_probs.len() {
                    return bad("precision_support and precision_probs must be nonempty and equally long".into());
                }
                if self.precision_support.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return bad("precision support values must be positive".into());
                }
                if self.precision_probs.iter().any(|p| !(*p >= 0.0)) {
                    return bad("precision probabilities must be nonnegative".into());
                }
                let total: f64 = self.precision_probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("precision probabilities sum to {total}, not 1"));
                }
            }
        }
        Ok(())
    }

    pub fn prior(&self) -> PrecisionPrior {
        match self.log_uniform_precision {
            Some([lo, hi]) => PrecisionPrior::LogUniform { lo, hi },
            None => PrecisionPrior::Discrete {
                support: self.precision_support.clone(),
                probs: self.precision_probs.clone(),
            },
        }
    }

    pub fn n_unaffected(&self) -> usize {
        self.d - self.n_affected
    }
}

/// Raw draws of one trial. Affected features occupy the last
/// `n_affected` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub sigma_k: f64,
    pub z: Vec<f64>,
}

pub fn generate_trial(config: &StudyConfig, k: usize) -> Trial {
    let root = CounterRng::new(config.seed);
    let sigma_k = config.prior().sample(root.fork(SIGMA_STREAM).uniform_at(k as u64));
    let stream = root.fork(Z_STREAM).fork(k as u64);
    let first_affected = config.n_unaffected();
    let z = (0..config.d)
        .map(|i| {
            let n = stream.normal_at(i as u64);
            if i < first_affected {
                sigma_k * n
            } else {
                sigma_k * (config.affected_mean_mult + config.affected_sd_mult * n)
            }
        })
        .collect();
    Trial { sigma_k, z }
}

/// `Φ(z / sigma_k)` elementwise.
pub fn true_conditional_levels(z: &[f64], sigma_k: f64) -> Vec<f64> {
    z.iter().map(|&v| norm_cdf(v / sigma_k)).collect()
}

/// Tail areas under the precision mixture, `Σ w Φ(z / sigma)`.
pub fn marginalize_levels(z: &[f64], support: &[f64], probs: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| mixture_tails(v, support.iter().copied().zip(probs.iter().copied())).0).collect()
}

fn mixture_tails(z: f64, components: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    components.fold((0.0, 0.0), |(lo, up), (s, w)| (lo + w * norm_cdf(z / s), up + w * norm_cdf(-z / s)))
}

/// Net fraction of `subset` whose `levels_f0` value is inside
/// `[alpha, 1 - alpha]` while `levels_true` is outside, minus the reverse.
pub fn conservatism(levels_f0: &[f64], levels_true: &[f64], alpha: f64, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidConfig("conservatism needs a nonempty index set".into()));
    }
    if levels_f0.len() != levels_true.len() {
        return Err(Error::InvalidConfig(format!(
            "level vectors differ in length ({} vs {})",
            levels_f0.len(),
            levels_true.len()
        )));
    }
    let inside = |p: f64| p >= alpha && p <= 1.0 - alpha;
    let mut net = 0i64;
    for &i in subset {
        let (f0, t) = (inside(levels_f0[i]), inside(levels_true[i]));
        net += i64::from(f0 && !t) - i64::from(t && !f0);
    }
    Ok(net as f64 / subset.len() as f64)
}

/// Conservative error on the unaffected and affected features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conservatism {
    pub unaffected: f64,
    /// NaN when the design has no affected features.
    pub affected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub k: usize,
    pub sigma_k: f64,
    pub null_fit: Option<NullModel>,
    pub fit_error: Option<String>,
    pub assumed: Conservatism,
    /// `None` when the null fit failed.
    pub estimated: Option<Conservatism>,
}

impl TrialResult {
    pub fn conservatism(&self, mode: NullMode) -> Option<Conservatism> {
        match mode {
            NullMode::Assumed => Some(self.assumed),
            NullMode::Estimated => self.estimated,
        }
    }
}

/// Per-feature levels of one trial, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLevels {
    pub sigma_k: f64,
    pub observed: Vec<f64>,
    pub observed_z: Vec<f64>,
    pub estimated: Option<Vec<f64>>,
    pub truth: Vec<f64>,
}

/// Levels of trial `k` under the configured truth mode.
pub fn trial_levels(config: &StudyConfig, k: usize) -> (TrialLevels, Result<NullModel>) {
    let trial = generate_trial(config, k);
    let truth = true_conditional_levels(&trial.z, trial.sigma_k);
    let (observed, observed_z): (Vec<f64>, Vec<f64>) = match config.truth_mode {
        TruthMode::Conditional => trial.z.iter().map(|&z| (norm_cdf(z), z)).unzip(),
        TruthMode::Marginal => {
            let components = config.prior().components();
            trial
                .z
                .iter()
                .map(|&z| {
                    let (lo, up) = mixture_tails(z, components.iter().copied());
                    (lo, norm_quantile_tails(lo, up))
                })
                .unzip()
        }
    };
    let finite: Vec<f64> = observed_z.iter().copied().filter(|z| z.is_finite()).collect();
    let fit = fit_null(&finite, config.center_fraction);
    let estimated = fit
        .as_ref()
        .ok()
        .map(|m| observed_z.iter().map(|&z| norm_cdf((z - m.mu0) / m.sigma0)).collect());
    (TrialLevels { sigma_k: trial.sigma_k, observed, observed_z, estimated, truth }, fit)
}

fn evaluate_trial(config: &StudyConfig, k: usize, unaffected: &[usize], affected: &[usize]) -> Result<TrialResult> {
    let (levels, fit) = trial_levels(config, k);
    let score = |f0: &[f64]| -> Result<Conservatism> {
        Ok(Conservatism {
            unaffected: conservatism(f0, &levels.truth, config.alpha, unaffected)?,
            affected: if affected.is_empty() {
                f64::NAN
            } else {
                conservatism(f0, &levels.truth, config.alpha, affected)?
            },
        })
    };
    let assumed = score(&levels.observed)?;
    let estimated = levels.estimated.as_deref().map(score).transpose()?;
    let (null_fit, fit_error) = match fit {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(TrialResult { k, sigma_k: levels.sigma_k, null_fit, fit_error, assumed, estimated })
}

/// Mean and standard error of one (null mode, feature subset) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub null_mode: NullMode,
    pub subset: String,
    pub n_trials: usize,
    pub mean: f64,
    pub se: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub cells: Vec<SummaryCell>,
    pub n_failed_fits: usize,
}

impl StudySummary {
    pub fn cell(&self, mode: NullMode, subset: &str) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.null_mode == mode && c.subset == subset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub config: StudyConfig,
    pub trials: Vec<TrialResult>,
    pub summary: StudySummary,
}

/// Run all trials (in parallel; results do not depend on scheduling) and
/// summarize both null modes. Trials whose null fit fails are kept with
/// the error attached and left out of the estimated-null cells.
pub fn run_study(config: &StudyConfig) -> Result<StudyOutcome> {
    config.validate()?;
    let unaffected: Vec<usize> = (0..config.n_unaffected()).collect();
    let affected: Vec<usize> = (config.n_unaffected()..config.d).collect();
    let trials = (0..config.k)
        .into_par_iter()
        .map(|k| evaluate_trial(config, k, &unaffected, &affected))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&trials);
    Ok(StudyOutcome { config: config.clone(), trials, summary })
}

fn summarize(trials: &[TrialResult]) -> StudySummary {
    let mut cells = Vec::with_capacity(4);
    for mode in [NullMode::Assumed, NullMode::Estimated] {
        for subset in ["unaffected", "affected"] {
            let values: Vec<f64> = trials
                .iter()
                .filter_map(|t| t.conservatism(mode))
                .map(|c| if subset == "unaffected" { c.unaffected } else { c.affected })
                .filter(|v| !v.is_nan())
                .collect();
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let se = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
            } else {
                f64::NAN
            };
            let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
            cells.push(SummaryCell { null_mode: mode, subset: subset.to_owned(), n_trials: n, mean, se, mean_abs });
        }
    }
    StudySummary { cells, n_failed_fits: trials.iter().filter(|t| t.fit_error.is_some()).count() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(k: usize) -> StudyConfig {
        StudyConfig { k, d: 2000, n_affected: 100, ..StudyConfig::default() }
    }

    #[test]
    fn default_config_is_the_full_design() {
        let c = StudyConfig::default();
        assert_eq!((c.k, c.d, c.n_affected), (500, 10_000, 500));
        assert_eq!(c.precision_support, vec![2.0 / 3.0, 1.0, 1.5]);
        assert_eq!(c.alpha, 0.01);
        c.validate().unwrap();
        let parsed: StudyConfig = serde_json::from_str(r#"{"K": 50}"#).unwrap();
        assert_eq!(parsed.k, 50);
        assert!(serde_json::from_str::<StudyConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = [
            StudyConfig { precision_probs: vec![0.3, 0.3, 0.3], ..StudyConfig::default() },
            StudyConfig { alpha: 0.5, ..StudyConfig::default() },
            StudyConfig { n_affected: 10_000, ..StudyConfig::default() },
            StudyConfig { log_uniform_precision: Some([2.0, 0.5]), ..StudyConfig::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn degenerate_mixture_gives_unit_precision() {
        let c = StudyConfig { precision_support: vec![1.0], precision_probs: vec![1.0], ..small(1) };
        for k in 0..50 {
            assert_eq!(generate_trial(&c, k).sigma_k, 1.0);
        }
    }

    #[test]
    fn precision_frequencies() {
        let c = StudyConfig { d: 10, n_affected: 1, ..StudyConfig::default() };
        let ones = (0..500).filter(|&k| generate_trial(&c, k).sigma_k == 1.0).count();
        assert!((ones as f64 / 500.0 - 0.40).abs() <= 0.07, "{ones}");
    }

    #[test]
    fn unaffected_mean_is_centered() {
        let c = StudyConfig::default();
        for k in 0..5 {
            let t = generate_trial(&c, k);
            let n = c.n_unaffected();
            let mean = t.z[..n].iter().sum::<f64>() / n as f64;
            assert!(mean.abs() <= 4.0 * t.sigma_k / (n as f64).sqrt(), "k={k} mean={mean}");
            let aff = t.z[n..].iter().sum::<f64>() / c.n_affected as f64;
            assert!((aff - 2.5 * t.sigma_k).abs() < 4.0 * 1.25 * t.sigma_k / (c.n_affected as f64).sqrt());
        }
    }

    #[test]
    fn level_transform_examples() {
        assert_eq!(true_conditional_levels(&[0.0], 1.5), vec![0.5]);
        assert_eq!(true_conditional_levels(&[1.3], 1.0), vec![norm_cdf(1.3)]);
        assert!((true_conditional_levels(&[3.0], 1.5)[0] - 0.97725).abs() < 1e-5);

        let (s, w) = (default_support(), default_probs());
        assert_eq!(marginalize_levels(&[0.0], &s, &w), vec![0.5]);
        assert_eq!(marginalize_levels(&[0.7], &[1.0], &[1.0]), vec![norm_cdf(0.7)]);
        let want = 0.3 * norm_cdf(1.645 * 1.5) + 0.4 * norm_cdf(1.645) + 0.3 * norm_cdf(1.645 / 1.5);
        let got = marginalize_levels(&[1.645], &s, &w)[0];
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.937_047_064_522_835_9).abs() < 1e-13);
    }

    #[test]
    fn log_uniform_components_integrate_to_one() {
        let p = PrecisionPrior::LogUniform { lo: 0.5, hi: 2.0 };
        let total: f64 = p.components().iter().map(|c| c.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((p.sample(0.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conservatism_examples() {
        let f = [0.5, 0.995];
        assert_eq!(conservatism(&f, &f, 0.01, &[0, 1]).unwrap(), 0.0);
        assert_eq!(conservatism(&[0.5, 0.995], &[0.5, 0.95], 0.01, &[0, 1]).unwrap(), -0.5);
        assert_eq!(conservatism(&[0.5, 0.95], &[0.5, 0.995], 0.01, &[0, 1]).unwrap(), 0.5);
        assert!(conservatism(&f, &f, 0.01, &[]).is_err());
    }

    #[test]
    fn unit_precision_trial_has_zero_assumed_error() {
        let c = StudyConfig { precision_support: vec![1.0], precision_probs: vec![1.0], ..small(3) };
        let out = run_study(&c).unwrap();
        for t in &out.trials {
            assert_eq!(t.assumed.unaffected, 0.0);
            assert_eq!(t.assumed.affected, 0.0);
        }
    }

    #[test]
    fn study_is_schedule_independent() {
        let c = small(6);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| run_study(&c).unwrap());
        let b = many.install(|| run_study(&c).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.summary.cells.len(), 4);
    }

    #[test]
    fn marginal_truth_runs() {
        let c = StudyConfig { truth_mode: TruthMode::Marginal, ..small(4) };
        let out = run_study(&c).unwrap();
        assert_eq!(out.summary.n_failed_fits, 0);
        let c = StudyConfig { log_uniform_precision: Some([0.5, 2.0]), ..c };
        assert_eq!(run_study(&c).unwrap().trials.len(), 4);
    }

    proptest! {
        #[test]
        fn conservatism_antisymmetric(pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..50)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let idx: Vec<usize> = (0..a.len()).collect();
            let ab = conservatism(&a, &b, 0.01, &idx).unwrap();
            prop_assert_eq!(ab, -conservatism(&b, &a, 0.01, &idx).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn marginal_transform_increasing(z in -6.0f64..6.0, dz in 1e-3f64..1.0) {
            let (s, w) = (default_support(), default_probs());
            let v = marginalize_levels(&[z, z + dz], &s, &w);
            prop_assert!(v[1] > v[0]);
        }
    }
}
