//! Per-feature one-sided confidence levels from replicate measurements.
//!
//! The level of a feature is the confidence that its mean log ratio is
//! negative, which is numerically the upper-tail p-value of a one-sample
//! t test against zero. Both tails are carried so that the opposite
//! direction (and the normal-quantile transform) stays exact near 0 and 1.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{norm_cdf, norm_quantile_tails, student_t_tails};
use crate::error::{Error, Result};

/// Logarithm base of the stored ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    E,
    Two,
}

impl LogBase {
    /// Back-transform a mean log ratio to a ratio (the geometric mean of
    /// the ratios when applied to a sample mean).
    pub fn exp(self, x: f64) -> f64 {
        match self {
            LogBase::E => x.exp(),
            LogBase::Two => x.exp2(),
        }
    }
}

/// Ragged table of replicate log ratios; missing values are simply absent.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    ids: Vec<String>,
    observations: Vec<Vec<f64>>,
    log_base: LogBase,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, observations: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != observations.len() {
            return Err(Error::InvalidConfig(format!(
                "{} identifiers but {} observation rows",
                ids.len(),
                observations.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for (row, (id, obs)) in ids.iter().zip(&observations).enumerate() {
            if id.is_empty() {
                return Err(Error::EmptyFeatureId { row });
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateFeature(id.clone()));
            }
            if let Some(&value) = obs.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFiniteObservation { feature: id.clone(), value });
            }
        }
        Ok(Self { ids, observations, log_base: LogBase::E })
    }

    pub fn with_log_base(mut self, base: LogBase) -> Self {
        self.log_base = base;
        self
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    pub fn log_base(&self) -> LogBase {
        self.log_base
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Geometric mean of the ratios of each feature, `None` when it has no
    /// observations.
    pub fn estimated_ratios(&self) -> Vec<Option<f64>> {
        self.observations
            .iter()
            .map(|obs| {
                (!obs.is_empty()).then(|| self.log_base.exp(obs.iter().sum::<f64>() / obs.len() as f64))
            })
            .collect()
    }
}

/// Why a feature carries no usable level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    TooFewObservations,
    NonfiniteZ,
}

impl Exclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Exclusion::TooFewObservations => "too_few_observations",
            Exclusion::NonfiniteZ => "nonfinite_z",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "too_few_observations" => Some(Exclusion::TooFewObservations),
            "nonfinite_z" => Some(Exclusion::NonfiniteZ),
            _ => None,
        }
    }
}

/// One feature's confidence levels. `level` is the confidence of a
/// negative parameter, `upper` the confidence of a positive one; they sum
/// to one up to rounding but are computed independently.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    pub id: String,
    pub n_obs: Option<usize>,
    pub level: f64,
    pub upper: f64,
    pub z: f64,
    pub exclusion: Option<Exclusion>,
}

impl FeatureLevel {
    /// Build from the two tails, classifying the degenerate cases. Either
    /// tail at exactly 0 or 1 flags the feature, so the flag is the same
    /// for a vector and its complement.
    pub fn from_tails(id: String, n_obs: Option<usize>, level: f64, upper: f64) -> Self {
        if level <= 0.0 || level >= 1.0 || upper <= 0.0 || upper >= 1.0 {
            return Self {
                id,
                n_obs,
                level,
                upper,
                z: if level >= 1.0 || upper <= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                exclusion: Some(Exclusion::NonfiniteZ),
            };
        }
        Self { id, n_obs, level, upper, z: norm_quantile_tails(level, upper), exclusion: None }
    }

    /// Build from a z-value, i.e. `level = Φ(z)`.
    pub fn from_z(id: String, n_obs: Option<usize>, z: f64) -> Self {
        Self::from_tails(id, n_obs, norm_cdf(z), norm_cdf(-z))
    }

    pub fn too_few(id: String, n_obs: usize) -> Self {
        Self {
            id,
            n_obs: Some(n_obs),
            level: f64::NAN,
            upper: f64::NAN,
            z: f64::NAN,
            exclusion: Some(Exclusion::TooFewObservations),
        }
    }

    pub fn is_included(&self) -> bool {
        self.exclusion.is_none()
    }

    /// Probability of calling the wrong sign when deciding in the more
    /// confident direction.
    pub fn error_prob(&self) -> f64 {
        self.level.min(self.upper)
    }
}

/// Confidence levels for every feature of a table, excluded ones included
/// with a flag so that reports stay aligned with the input.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfidenceVector {
    features: Vec<FeatureLevel>,
}

impl ConfidenceVector {
    pub fn new(features: Vec<FeatureLevel>) -> Self {
        Self { features }
    }

    /// Levels given directly (e.g. simulated); levels of exactly 0 or 1,
    /// and levels so close to 0 that `1 - level` rounds to 1, are flagged
    /// `nonfinite_z`. Anything outside [0, 1] is rejected.
    pub fn from_levels(ids: Vec<String>, levels: &[f64]) -> Result<Self> {
        if ids.len() != levels.len() {
            return Err(Error::InvalidConfig(format!(
                "{} identifiers but {} levels",
                ids.len(),
                levels.len()
            )));
        }
        let features = ids
            .into_iter()
            .zip(levels)
            .map(|(id, &p)| {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain("confidence level", p));
                }
                Ok(FeatureLevel::from_tails(id, None, p, 1.0 - p))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { features })
    }

    /// Levels `Φ(z)` for the given z-values.
    pub fn from_z(ids: Vec<String>, z: &[f64]) -> Self {
        Self {
            features: ids
                .into_iter()
                .zip(z)
                .map(|(id, &z)| FeatureLevel::from_z(id, None, z))
                .collect(),
        }
    }

    pub fn features(&self) -> &[FeatureLevel] {
        &self.features
    }

    pub fn into_features(self) -> Vec<FeatureLevel> {
        self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn included(&self) -> impl Iterator<Item = &FeatureLevel> {
        self.features.iter().filter(|f| f.is_included())
    }

    pub fn n_included(&self) -> usize {
        self.included().count()
    }

    pub fn n_excluded(&self) -> usize {
        self.len() - self.n_included()
    }

    /// z-values of the included features, in feature order.
    pub fn included_z(&self) -> Vec<f64> {
        self.included().map(|f| f.z).collect()
    }

    pub fn levels(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.level).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.features.iter().map(|f| f.id.clone()).collect()
    }
}

/// One-sample t-test levels for every feature.
pub fn levels_from_table(table: &FeatureTable) -> Result<ConfidenceVector> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let features = table
        .ids
        .par_iter()
        .zip(table.observations.par_iter())
        .map(|(id, obs)| feature_level(id, obs))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfidenceVector { features })
}

fn feature_level(id: &str, obs: &[f64]) -> Result<FeatureLevel> {
    if let Some(&value) = obs.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObservation { feature: id.to_owned(), value });
    }
    let n = obs.len();
    if n < 2 {
        return Ok(FeatureLevel::too_few(id.to_owned(), n));
    }
    let nf = n as f64;
    let mean = obs.iter().sum::<f64>() / nf;
    let ss = obs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let sd = (ss / (nf - 1.0)).sqrt();
    if sd == 0.0 {
        if mean == 0.0 {
            return Ok(FeatureLevel::from_tails(id.to_owned(), Some(n), 0.5, 0.5));
        }
        let (level, upper) = if mean < 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
        return Ok(FeatureLevel::from_tails(id.to_owned(), Some(n), level, upper));
    }
    let t = mean / (sd / nf.sqrt());
    // level = P(T > t) = 1 - T_{n-1}(t)
    let (below, above) = student_t_tails(t, nf - 1.0);
    Ok(FeatureLevel::from_tails(id.to_owned(), Some(n), above, below))
}

/// Levels of the opposite direction (confidence of a positive parameter).
pub fn complement(v: &ConfidenceVector) -> ConfidenceVector {
    ConfidenceVector {
        features: v
            .features
            .iter()
            .map(|f| FeatureLevel {
                id: f.id.clone(),
                n_obs: f.n_obs,
                level: f.upper,
                upper: f.level,
                z: -f.z,
                exclusion: f.exclusion,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[&[f64]]) -> FeatureTable {
        FeatureTable::new(
            (0..rows.len()).map(|i| format!("g{i}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_sample_is_one_half() {
        let v = levels_from_table(&table(&[&[-1.0, 1.0]])).unwrap();
        assert_eq!(v.features()[0].level, 0.5);
        assert_eq!(v.features()[0].z, 0.0);
    }

    #[test]
    fn single_observation_is_excluded() {
        let v = levels_from_table(&table(&[&[0.5]])).unwrap();
        assert_eq!(v.features()[0].exclusion, Some(Exclusion::TooFewObservations));
        assert_eq!(v.n_included(), 0);
    }

    #[test]
    fn two_observations_one_df() {
        let v = levels_from_table(&table(&[&[0.5, 1.5]])).unwrap();
        // t = 2 with 1 df: 1 - T_1(2) = 1/2 - atan(2)/pi
        let want = 0.5 - 2f64.atan() / std::f64::consts::PI;
        assert!((v.features()[0].level - want).abs() < 1e-15);
        assert!((v.features()[0].level - 0.14758).abs() < 1e-5);
    }

    #[test]
    fn zero_variance_cases() {
        let v = levels_from_table(&table(&[&[0.0, 0.0, 0.0], &[1.0, 1.0], &[-2.0, -2.0]])).unwrap();
        let f = v.features();
        assert_eq!(f[0].level, 0.5);
        assert!(f[0].is_included());
        assert_eq!(f[1].exclusion, Some(Exclusion::NonfiniteZ));
        assert_eq!(f[1].level, 0.0);
        assert_eq!(f[2].exclusion, Some(Exclusion::NonfiniteZ));
        assert_eq!(f[2].level, 1.0);
    }

    #[test]
    fn errors() {
        let empty = FeatureTable::new(vec![], vec![]).unwrap();
        assert!(matches!(levels_from_table(&empty), Err(Error::EmptyTable)));
        let err = FeatureTable::new(vec!["a".into()], vec![vec![1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteObservation { ref feature, .. } if feature == "a"));
        assert!(matches!(
            FeatureTable::new(vec!["a".into(), "a".into()], vec![vec![], vec![]]),
            Err(Error::DuplicateFeature(_))
        ));
        assert!(matches!(
            FeatureTable::new(vec!["".into()], vec![vec![]]),
            Err(Error::EmptyFeatureId { row: 0 })
        ));
    }

    #[test]
    fn complement_examples() {
        let v = ConfidenceVector::from_levels(vec!["a".into(), "b".into()], &[0.3, 0.5]).unwrap();
        let c = complement(&v);
        assert_eq!(c.features()[0].level, 0.7);
        assert_eq!(c.features()[1].level, 0.5);
        assert_eq!(complement(&c), v);
    }

    #[test]
    fn exclusion_count_matches_definition() {
        let v = levels_from_table(&table(&[&[1.0], &[], &[2.0, 2.0], &[1.0, 2.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(v.n_excluded(), 3);
    }

    #[test]
    fn tiny_tail_keeps_precision() {
        // a strong but representable effect: the small tail must survive the z transform
        let v = levels_from_table(&table(&[&[-1.0, -1.002, -0.998, -1.001, -0.999, -1.0]])).unwrap();
        let f = &v.features()[0];
        assert!(f.is_included());
        let small = f.error_prob();
        assert!(small > 0.0 && small < 1e-9, "{small}");
        assert!(f.z.is_finite());
        let back = norm_cdf(-f.z.abs());
        assert!(((back - small) / small).abs() < 1e-10);
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 2..12)
    }

    proptest! {
        #[test]
        fn scale_invariance(obs in sample(), lambda in 0.01f64..100.0) {
            let scaled: Vec<f64> = obs.iter().map(|x| x * lambda).collect();
            let v = levels_from_table(&table(&[&obs, &scaled])).unwrap();
            let f = v.features();
            prop_assume!(f[0].is_included() && f[1].is_included());
            prop_assert!((f[0].level - f[1].level).abs() < 1e-12);
        }

        #[test]
        fn negation_antisymmetry(obs in sample()) {
            let neg: Vec<f64> = obs.iter().map(|x| -x).collect();
            let v = levels_from_table(&table(&[&obs, &neg])).unwrap();
            let f = v.features();
            prop_assume!(f[0].is_included());
            prop_assert!((f[0].level - (1.0 - f[1].level)).abs() < 1e-12);
        }

        #[test]
        fn z_round_trip(obs in sample()) {
            let v = levels_from_table(&table(&[&obs])).unwrap();
            let f = &v.features()[0];
            prop_assume!(f.is_included());
            prop_assert!(f.level > 0.0 && f.level < 1.0);
            prop_assert!((norm_cdf(f.z) - f.level).abs() < 1e-12);
        }

        #[test]
        fn complement_is_an_involution(levels in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let ids = (0..levels.len()).map(|i| i.to_string()).collect();
            let v = ConfidenceVector::from_levels(ids, &levels).unwrap();
            prop_assert_eq!(complement(&complement(&v)), v);
        }
    }
}
