//! Is conditioning on the estimated null worth it?
//!
//! Relevance is the divergence between the estimated and the assumed null.
//! Nonancillarity at `d1` is the divergence between the estimated null and
//! a refit in which the `d1` most extreme levels are replaced by their
//! expected order statistics under the assumed null. The benefit is their
//! difference; it is positive while conditioning on the estimate helps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{ConfidenceVector, FeatureLevel};
use crate::nullmodel::{fit_null, NullModel};

/// Rényi divergence of order 1/2 between two normal nulls, in bits.
///
/// Equal to `-2 log2` of the Bhattacharyya coefficient; symmetric in its
/// arguments and zero only for identical distributions.
pub fn renyi_half(f: &NullModel, g: &NullModel) -> Result<f64> {
    for s in [f.sigma0, g.sigma0] {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::domain("normal scale", s));
        }
    }
    let var_sum = f.sigma0 * f.sigma0 + g.sigma0 * g.sigma0;
    let dmu = f.mu0 - g.mu0;
    let bhattacharyya = dmu * dmu / (4.0 * var_sum) + 0.5 * (var_sum / (2.0 * f.sigma0 * g.sigma0)).ln();
    Ok(2.0 / std::f64::consts::LN_2 * bhattacharyya)
}

/// How replaced levels below one half are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenullMode {
    /// Keep the side of one half the original level was on.
    #[default]
    SignPreserving,
    /// Always use `(r - 1/2) / d`.
    Literal,
}

impl std::str::FromStr for DenullMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign-preserving" => Ok(DenullMode::SignPreserving),
            "literal" => Ok(DenullMode::Literal),
            other => Err(Error::InvalidConfig(format!("unknown denull mode `{other}`"))),
        }
    }
}

/// Replace the `d1` included levels farthest from one half with expected
/// uniform order statistics `(r - 1/2)/d`, `r` being the ascending rank of
/// `|level - 1/2|` among the `d` included levels (ties by feature order).
pub fn denull(levels: &ConfidenceVector, d1: usize, mode: DenullMode) -> Result<ConfidenceVector> {
    let included: Vec<usize> = levels
        .features()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_included())
        .map(|(i, _)| i)
        .collect();
    let d = included.len();
    if d1 > d {
        return Err(Error::domain("d1", d1 as f64));
    }
    let mut features = levels.features().to_vec();
    if d1 == 0 {
        return Ok(ConfidenceVector::new(features));
    }
    let feats = levels.features();
    let mut order = included.clone();
    order.sort_by(|&i, &j| distance(&feats[i]).total_cmp(&distance(&feats[j])).then(i.cmp(&j)));
    let df = d as f64;
    for (pos, &i) in order.iter().enumerate().skip(d - d1) {
        let rank = (pos + 1) as f64;
        // expected order statistic and its complement, both computed directly
        let (lo, hi) = ((rank - 0.5) / df, (df - rank + 0.5) / df);
        let original = &feats[i];
        let (level, upper) = match mode {
            DenullMode::SignPreserving if original.level < original.upper => (hi, lo),
            _ => (lo, hi),
        };
        features[i] = FeatureLevel::from_tails(original.id.clone(), original.n_obs, level, upper);
    }
    Ok(ConfidenceVector::new(features))
}

fn distance(f: &FeatureLevel) -> f64 {
    (f.level - 0.5).abs()
}

/// Nonancillarity, relevance and benefit over a grid of hypothetical
/// affected counts. Divergences are in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitCurve {
    pub d1_grid: Vec<usize>,
    pub nonancillarity: Vec<f64>,
    pub relevance: f64,
    pub benefit: Vec<f64>,
    /// Refitted null at each grid point.
    pub refits: Vec<NullModel>,
}

impl BenefitCurve {
    /// Number of sign changes of the benefit along the grid, zeros skipped.
    pub fn sign_changes(&self) -> usize {
        let signs: Vec<bool> = self.benefit.iter().filter(|b| **b != 0.0).map(|b| *b > 0.0).collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// First grid value at which the benefit is negative.
    pub fn first_negative(&self) -> Option<usize> {
        self.d1_grid.iter().zip(&self.benefit).find(|(_, b)| **b < 0.0).map(|(d1, _)| *d1)
    }
}

/// `null_est` must have been fit to `levels` with the same
/// `center_fraction`, otherwise the curve does not start at zero.
pub fn benefit_curve(
    levels: &ConfidenceVector,
    null_est: &NullModel,
    d1_grid: &[usize],
    center_fraction: f64,
    mode: DenullMode,
) -> Result<BenefitCurve> {
    let relevance = renyi_half(null_est, &NullModel::assumed())?;
    let points = d1_grid
        .par_iter()
        .map(|&d1| {
            let refit = denull(levels, d1, mode)
                .and_then(|v| fit_null(&v.included_z(), center_fraction))
                .map_err(|e| Error::RefitFailed { d1, source: Box::new(e) })?;
            let nonanc = renyi_half(&refit, null_est)?;
            Ok((refit, nonanc))
        })
        .collect::<Result<Vec<_>>>()?;
    let (refits, nonancillarity): (Vec<_>, Vec<_>) = points.into_iter().unzip();
    let benefit = nonancillarity.iter().map(|n| relevance - n).collect();
    Ok(BenefitCurve { d1_grid: d1_grid.to_vec(), nonancillarity, relevance, benefit, refits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vector(levels: &[f64]) -> ConfidenceVector {
        ConfidenceVector::from_levels((0..levels.len()).map(|i| format!("f{i}")).collect(), levels).unwrap()
    }

    #[test]
    fn renyi_examples() {
        let n01 = NullModel::normal(0.0, 1.0);
        assert_eq!(renyi_half(&n01, &n01).unwrap(), 0.0);
        let v = renyi_half(&n01, &NullModel::normal(1.0, 1.0)).unwrap();
        assert!((v - 2.0 / std::f64::consts::LN_2 / 8.0).abs() < 1e-15);
        assert!((v - 0.36067).abs() < 1e-5);
        let v = renyi_half(&n01, &NullModel::normal(0.0, 2.0)).unwrap();
        assert!((v - 0.32193).abs() < 1e-5);
        assert!(renyi_half(&n01, &NullModel::normal(0.0, 0.0)).is_err());
        assert!(renyi_half(&NullModel::normal(0.0, -1.0), &n01).is_err());
    }

    #[test]
    fn denull_examples() {
        let v = vector(&[0.1, 0.4, 0.6, 0.9999]);
        assert_eq!(denull(&v, 0, DenullMode::SignPreserving).unwrap(), v);

        let out = denull(&v, 1, DenullMode::SignPreserving).unwrap();
        assert_eq!(out.levels(), vec![0.1, 0.4, 0.6, 0.875]);

        let v = vector(&[0.0001, 0.4, 0.6, 0.9]);
        let out = denull(&v, 1, DenullMode::SignPreserving).unwrap();
        assert_eq!(out.levels()[0], 0.125);
        let out = denull(&v, 1, DenullMode::Literal).unwrap();
        assert_eq!(out.levels()[0], 0.875);

        assert!(matches!(denull(&v, 5, DenullMode::Literal), Err(Error::Domain { .. })));
    }

    #[test]
    fn denull_ranks_ignore_excluded_features() {
        let mut f = vector(&[0.2, 0.99, 0.7]).into_features();
        f.insert(1, FeatureLevel::too_few("x".into(), 1));
        let v = ConfidenceVector::new(f);
        let out = denull(&v, 1, DenullMode::SignPreserving).unwrap();
        // three included levels: 0.99 has rank 3 -> 2.5/3
        assert_eq!(out.levels()[2], 2.5 / 3.0);
        assert!(out.levels()[1].is_nan());
        assert_eq!(out.features()[1].exclusion, v.features()[1].exclusion);
    }

    proptest! {
        #[test]
        fn renyi_symmetric_nonnegative(m1 in -3.0f64..3.0, s1 in 0.2f64..5.0, m2 in -3.0f64..3.0, s2 in 0.2f64..5.0) {
            let f = NullModel::normal(m1, s1);
            let g = NullModel::normal(m2, s2);
            let fg = renyi_half(&f, &g).unwrap();
            prop_assert!(fg >= 0.0);
            prop_assert!((fg - renyi_half(&g, &f).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn denull_changes_exactly_d1_levels(levels in prop::collection::vec(0.001f64..0.999, 1..60), frac in 0.0f64..=1.0) {
            let v = vector(&levels);
            let d1 = ((levels.len() as f64) * frac) as usize;
            let out = denull(&v, d1, DenullMode::SignPreserving).unwrap();
            let changed = v.levels().iter().zip(out.levels()).filter(|(a, b)| **a != *b).count();
            prop_assert_eq!(changed, d1);
        }
    }
}
