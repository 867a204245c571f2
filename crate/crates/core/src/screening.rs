//! Sign calls that minimize expected non-additive screening loss.
//!
//! The loss of a set of calls is `c * M^(1+a) + m`, where `M` is the number
//! of wrong sign calls and `m` the number of features left uncalled. Under
//! the confidence posterior each call is wrong independently with
//! probability `e_i = min(p_i, 1 - p_i)`, so `M` is Poisson-binomial.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::ConfidenceVector;
use crate::rng::CounterRng;
use crate::DEFAULT_SEED;

/// Decided sets up to this size are evaluated exactly.
pub const EXACT_LIMIT: usize = 20;
pub const BRUTE_FORCE_LIMIT: usize = 12;
const MC_STREAM: u64 = 0x5C4E_E101;
const MC_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    /// Acceleration of the cost of compounded errors.
    pub a: f64,
    /// Cost of a wrong call relative to a non-call.
    pub c: f64,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { a: 0.0, c: 9.0, n_mc: 10_000, seed: DEFAULT_SEED }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::domain("acceleration a", self.a));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::domain("cost ratio c", self.c));
        }
        if self.n_mc == 0 {
            return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Call the parameter negative (level above one half).
    Negative,
    /// Call the parameter positive.
    Positive,
    NoCall,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Negative => "negative",
            Action::Positive => "positive",
            Action::NoCall => "no_call",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionReport {
    pub feature_ids: Vec<String>,
    pub actions: Vec<Action>,
    /// `min(p, 1 - p)` per feature; NaN for excluded features.
    pub error_probs: Vec<f64>,
    pub n_decisions: usize,
    pub expected_loss: f64,
    pub params: LossParams,
}

/// Exact distribution of a sum of independent Bernoulli variables.
pub fn poisson_binomial_pmf(probs: &[f64]) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(probs.len() + 1);
    pmf.push(1.0);
    for &p in probs {
        push_bernoulli(&mut pmf, p);
    }
    pmf
}

fn push_bernoulli(pmf: &mut Vec<f64>, p: f64) {
    let q = 1.0 - p;
    pmf.push(0.0);
    for k in (1..pmf.len()).rev() {
        pmf[k] = pmf[k] * q + pmf[k - 1] * p;
    }
    pmf[0] *= q;
}

fn power_moment(pmf: &[f64], exponent: f64) -> f64 {
    pmf.iter().enumerate().skip(1).map(|(k, w)| w * (k as f64).powf(exponent)).sum()
}

/// Expected loss of calling features with wrong-call probabilities
/// `errors` and leaving `m` uncalled.
///
/// Exact when `a = 0` or when at most [`EXACT_LIMIT`] features are called;
/// otherwise a Monte-Carlo mean over `n_mc` draws keyed by
/// `(seed, draw, position in errors)`.
pub fn expected_loss(errors: &[f64], m: usize, params: &LossParams) -> Result<f64> {
    params.validate()?;
    if let Some(&bad) = errors.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::domain("error probability", bad));
    }
    let m = m as f64;
    if errors.is_empty() {
        return Ok(m);
    }
    if params.a == 0.0 {
        return Ok(params.c * errors.iter().sum::<f64>() + m);
    }
    if errors.len() <= EXACT_LIMIT {
        let pmf = poisson_binomial_pmf(errors);
        return Ok(params.c * power_moment(&pmf, 1.0 + params.a) + m);
    }
    let means = mc_prefix_power_means(errors, errors.len(), params);
    Ok(params.c * means[means.len() - 1] + m)
}

/// Monte-Carlo means of `M_n^(1+a)` for every prefix length
/// `n in first..=errors.len()`, using one shared set of uniforms so that
/// prefix losses are comparable. Chunking is fixed, so the result does not
/// depend on the thread count.
fn mc_prefix_power_means(errors: &[f64], first: usize, params: &LossParams) -> Vec<f64> {
    let n = errors.len();
    let first = first.max(1);
    let width = n + 1 - first;
    let exponent = 1.0 + params.a;
    let powers: Vec<f64> = (0..=n).map(|k| (k as f64).powf(exponent)).collect();
    let rng = CounterRng::new(params.seed).fork(MC_STREAM);
    let draws: Vec<u64> = (0..params.n_mc as u64).collect();
    let partials: Vec<Vec<f64>> = draws
        .par_chunks(MC_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; width];
            for &k in chunk {
                let draw = rng.fork(k);
                let mut wrong = 0usize;
                for (j, &e) in errors.iter().enumerate() {
                    if draw.uniform_at(j as u64) < e {
                        wrong += 1;
                    }
                    if j + 1 >= first {
                        acc[j + 1 - first] += powers[wrong];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for acc in &partials {
        for (t, v) in total.iter_mut().zip(acc) {
            *t += v;
        }
    }
    let scale = params.n_mc as f64;
    total.iter().map(|t| t / scale).collect()
}

struct Candidate {
    index: usize,
    error: f64,
    action: Action,
}

/// Candidates for a sign call: included features with a preferred
/// direction, sorted by error probability then feature index.
fn candidates(levels: &ConfidenceVector) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = levels
        .features()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_included() && f.level != f.upper)
        .map(|(index, f)| Candidate {
            index,
            error: f.error_prob(),
            action: if f.level > f.upper { Action::Negative } else { Action::Positive },
        })
        .collect();
    out.sort_by(|x, y| x.error.total_cmp(&y.error).then(x.index.cmp(&y.index)));
    out
}

fn error_probs(levels: &ConfidenceVector) -> Vec<f64> {
    levels
        .features()
        .iter()
        .map(|f| if f.is_included() { f.error_prob() } else { f64::NAN })
        .collect()
}

/// Expected loss for calling each prefix of `errors` (ascending), indexed
/// by prefix length `0..=errors.len()`.
pub fn prefix_losses(errors: &[f64], d: usize, params: &LossParams) -> Vec<f64> {
    let n = errors.len();
    let mut losses = Vec::with_capacity(n + 1);
    losses.push(d as f64);
    if params.a == 0.0 {
        let mut sum = 0.0;
        for (j, &e) in errors.iter().enumerate() {
            sum += e;
            losses.push(params.c * sum + (d - j - 1) as f64);
        }
        return losses;
    }
    let exponent = 1.0 + params.a;
    let mut pmf = vec![1.0];
    for (j, &e) in errors.iter().take(EXACT_LIMIT).enumerate() {
        push_bernoulli(&mut pmf, e);
        losses.push(params.c * power_moment(&pmf, exponent) + (d - j - 1) as f64);
    }
    if n > EXACT_LIMIT {
        let means = mc_prefix_power_means(errors, EXACT_LIMIT + 1, params);
        for (offset, mean) in means.into_iter().enumerate() {
            let called = EXACT_LIMIT + 1 + offset;
            losses.push(params.c * mean + (d - called) as f64);
        }
    }
    losses
}

/// Call the most confident features, choosing how many by minimizing
/// expected loss over every prefix of the error-sorted order. Ties go to
/// fewer calls.
pub fn optimize_decisions(levels: &ConfidenceVector, params: &LossParams) -> Result<DecisionReport> {
    params.validate()?;
    let d = levels.len();
    let cands = candidates(levels);
    let errors: Vec<f64> = cands.iter().map(|c| c.error).collect();
    let losses = prefix_losses(&errors, d, params);
    let mut best = 0;
    for (n, &loss) in losses.iter().enumerate() {
        if loss < losses[best] {
            best = n;
        }
    }
    let mut actions = vec![Action::NoCall; d];
    for c in &cands[..best] {
        actions[c.index] = c.action;
    }
    Ok(DecisionReport {
        feature_ids: levels.ids(),
        actions,
        error_probs: error_probs(levels),
        n_decisions: best,
        expected_loss: losses[best],
        params: *params,
    })
}

/// Exhaustive search over all `3^d` action vectors with exact expected
/// losses. Verification aid for small problems.
pub fn brute_force_decisions(levels: &ConfidenceVector, params: &LossParams) -> Result<DecisionReport> {
    params.validate()?;
    let d = levels.len();
    if d > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyFeatures { d, max: BRUTE_FORCE_LIMIT });
    }
    let free: Vec<usize> = levels
        .features()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_included() && f.level != f.upper)
        .map(|(i, _)| i)
        .collect();
    let exponent = 1.0 + params.a;
    let feats = levels.features();
    let total = 3usize.pow(free.len() as u32);

    let mut best_actions = vec![Action::NoCall; d];
    let mut best_loss = d as f64;
    let mut best_calls = 0usize;
    let mut actions = vec![Action::NoCall; d];
    let mut errors = Vec::with_capacity(free.len());
    for code in 0..total {
        let mut rest = code;
        errors.clear();
        for &i in &free {
            actions[i] = match rest % 3 {
                0 => Action::NoCall,
                1 => {
                    errors.push(feats[i].upper);
                    Action::Negative
                }
                _ => {
                    errors.push(feats[i].level);
                    Action::Positive
                }
            };
            rest /= 3;
        }
        let calls = errors.len();
        let pmf = poisson_binomial_pmf(&errors);
        let loss = params.c * power_moment(&pmf, exponent) + (d - calls) as f64;
        if loss < best_loss || (loss == best_loss && calls < best_calls) {
            best_loss = loss;
            best_calls = calls;
            best_actions.clone_from(&actions);
        }
    }
    Ok(DecisionReport {
        feature_ids: levels.ids(),
        actions: best_actions,
        error_probs: error_probs(levels),
        n_decisions: best_calls,
        expected_loss: best_loss,
        params: *params,
    })
}

/// One point of an acceleration sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub a: f64,
    pub n_decisions: usize,
    pub expected_loss: f64,
}

/// Number of calls as a function of the acceleration `a`, other
/// parameters fixed.
pub fn sweep_acceleration(levels: &ConfidenceVector, a_values: &[f64], params: &LossParams) -> Result<Vec<SweepPoint>> {
    a_values
        .iter()
        .map(|&a| {
            let p = LossParams { a, ..*params };
            let r = optimize_decisions(levels, &p)?;
            Ok(SweepPoint { a, n_decisions: r.n_decisions, expected_loss: r.expected_loss })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(a: f64, c: f64) -> LossParams {
        LossParams { a, c, ..LossParams::default() }
    }

    fn vector(levels: &[f64]) -> ConfidenceVector {
        ConfidenceVector::from_levels((0..levels.len()).map(|i| format!("f{i}")).collect(), levels).unwrap()
    }

    /// E[M^k] by enumerating all 2^n error patterns.
    fn enumerate_moment(errors: &[f64], exponent: f64) -> f64 {
        let n = errors.len();
        (0u32..1 << n)
            .map(|mask| {
                let mut p = 1.0;
                for (j, &e) in errors.iter().enumerate() {
                    p *= if mask >> j & 1 == 1 { e } else { 1.0 - e };
                }
                p * (mask.count_ones() as f64).powf(exponent)
            })
            .sum()
    }

    #[test]
    fn pmf_matches_enumeration() {
        let e = [0.1, 0.25, 0.6, 0.05, 0.9];
        for exponent in [1.0, 1.5, 2.0, 3.0] {
            let exact = power_moment(&poisson_binomial_pmf(&e), exponent);
            assert!((exact - enumerate_moment(&e, exponent)).abs() < 1e-14);
        }
        let pmf = poisson_binomial_pmf(&e);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn expected_loss_examples() {
        for a in [0.0, 0.5, 2.0] {
            assert_eq!(expected_loss(&[], 7, &params(a, 9.0)).unwrap(), 7.0);
        }
        let v = expected_loss(&[0.001, 0.002], 1, &params(1.0, 9.0)).unwrap();
        assert!((v - 1.027036).abs() < 1e-12, "{v}");
        let v = expected_loss(&[0.1, 0.2], 0, &params(0.0, 9.0)).unwrap();
        assert!((v - 2.7).abs() < 1e-15);
        assert!(matches!(expected_loss(&[1.2], 0, &params(1.0, 9.0)), Err(Error::Domain { .. })));
        assert!(matches!(expected_loss(&[-0.1], 0, &params(0.0, 9.0)), Err(Error::Domain { .. })));
    }

    #[test]
    fn monte_carlo_branch_is_close_to_exact() {
        // 30 equal errors: M ~ Binomial(30, 0.05), E[M^2] = 30*0.05*0.95 + 1.5^2
        let e = vec![0.05; 30];
        let p = LossParams { n_mc: 200_000, ..params(1.0, 1.0) };
        let v = expected_loss(&e, 0, &p).unwrap();
        let exact = 30.0 * 0.05 * 0.95 + 1.5f64.powi(2);
        // sd of M^2 is below 6 here, so 4 sd of the mean is < 0.06
        assert!((v - exact).abs() < 0.06, "{v} vs {exact}");
        // and reproducible
        assert_eq!(v, expected_loss(&e, 0, &p).unwrap());
    }

    #[test]
    fn optimizer_examples() {
        let half = vector(&[0.5; 6]);
        for a in [0.0, 1.0] {
            let r = optimize_decisions(&half, &params(a, 9.0)).unwrap();
            assert_eq!(r.n_decisions, 0);
            assert_eq!(r.expected_loss, 6.0);
        }

        let r = optimize_decisions(&vector(&[0.999, 0.95, 0.6]), &params(0.0, 9.0)).unwrap();
        assert_eq!(r.actions, vec![Action::Negative, Action::Negative, Action::NoCall]);

        let r = optimize_decisions(&vector(&[0.999, 0.998, 0.6]), &params(1.0, 9.0)).unwrap();
        assert_eq!(r.actions, vec![Action::Negative, Action::Negative, Action::NoCall]);
        assert!((r.expected_loss - 1.027036).abs() < 1e-12);
        let b = brute_force_decisions(&vector(&[0.999, 0.998, 0.6]), &params(1.0, 9.0)).unwrap();
        assert_eq!(b.actions, r.actions);
    }

    #[test]
    fn positive_calls_and_exclusions() {
        let mut v = vector(&[0.001, 0.5, 0.9999]).into_features();
        v.push(crate::levels::FeatureLevel::too_few("x".into(), 1));
        let v = ConfidenceVector::new(v);
        let r = optimize_decisions(&v, &params(0.0, 9.0)).unwrap();
        assert_eq!(r.actions, vec![Action::Positive, Action::NoCall, Action::Negative, Action::NoCall]);
        assert!(r.error_probs[3].is_nan());
        assert_eq!(r.n_decisions, 2);
    }

    #[test]
    fn brute_force_examples() {
        let r = brute_force_decisions(&vector(&[0.999]), &params(0.0, 9.0)).unwrap();
        assert_eq!(r.actions, vec![Action::Negative]);
        assert!((r.expected_loss - 0.009).abs() < 1e-15);
        let r = brute_force_decisions(&vector(&[]), &params(1.0, 9.0)).unwrap();
        assert!(r.actions.is_empty());
        assert_eq!(r.expected_loss, 0.0);
        assert!(matches!(
            brute_force_decisions(&vector(&[0.9; 13]), &params(0.0, 9.0)),
            Err(Error::TooManyFeatures { d: 13, .. })
        ));
    }

    #[test]
    fn report_loss_agrees_with_expected_loss() {
        let r = CounterRng::new(3);
        let levels: Vec<f64> = (0..300).map(|i| r.uniform_at(i).powi(3)).collect();
        let v = vector(&levels);
        let p = LossParams { n_mc: 500, ..params(0.5, 9.0) };
        let report = optimize_decisions(&v, &p).unwrap();
        assert!(report.n_decisions > EXACT_LIMIT);
        let mut called: Vec<(f64, usize)> = report
            .actions
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != Action::NoCall)
            .map(|(i, _)| (report.error_probs[i], i))
            .collect();
        called.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let errors: Vec<f64> = called.iter().map(|c| c.0).collect();
        let loss = expected_loss(&errors, v.len() - errors.len(), &p).unwrap();
        assert_eq!(loss, report.expected_loss);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let r = CounterRng::new(8);
        let levels: Vec<f64> = (0..2000).map(|i| r.uniform_at(i)).collect();
        let v = vector(&levels);
        let p = LossParams { n_mc: 1000, ..params(1.0, 9.0) };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| optimize_decisions(&v, &p).unwrap());
        let b = four.install(|| optimize_decisions(&v, &p).unwrap());
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.expected_loss.to_bits(), b.expected_loss.to_bits());
    }

    proptest! {
        #[test]
        fn additive_case_is_threshold_rule(levels in prop::collection::vec(0.0f64..=1.0, 0..200), c in 1.5f64..30.0) {
            let v = vector(&levels);
            let r = optimize_decisions(&v, &params(0.0, c)).unwrap();
            for (f, act) in v.features().iter().zip(&r.actions) {
                let want = if !f.is_included() || f.error_prob() >= 1.0 / c || f.level == f.upper {
                    Action::NoCall
                } else if f.level > 0.5 {
                    Action::Negative
                } else {
                    Action::Positive
                };
                prop_assert_eq!(*act, want);
            }
        }

        #[test]
        fn matches_brute_force(levels in prop::collection::vec(0.0f64..=1.0, 0..7), ai in 0usize..4) {
            let a = [0.0, 0.5, 1.0, 2.0][ai];
            let v = vector(&levels);
            let r = optimize_decisions(&v, &params(a, 9.0)).unwrap();
            let b = brute_force_decisions(&v, &params(a, 9.0)).unwrap();
            prop_assert!((r.expected_loss - b.expected_loss).abs() <= 1e-12);
        }

        #[test]
        fn exact_loss_non_decreasing_in_a(errors in prop::collection::vec(0.0f64..=1.0, 1..10), a in 0.0f64..3.0, da in 0.0f64..2.0) {
            prop_assume!(errors.iter().any(|&e| e > 0.0));
            let lo = expected_loss(&errors, 0, &params(a, 9.0)).unwrap();
            let hi = expected_loss(&errors, 0, &params(a + da, 9.0)).unwrap();
            prop_assert!(hi >= lo - 1e-12 * lo.abs());
        }
    }
}
