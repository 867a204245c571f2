//! Normal and Student-t distribution functions.
//!
//! Tails are always evaluated directly rather than as `1 - cdf`, so that
//! quantile transforms of tiny one-sided levels keep their precision.

use statrs::function::beta::beta_reg;
use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile. Returns `-inf`/`inf` at 0 and 1.
pub fn norm_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    // erfc_inv gives ~1e-11; Newton steps on the tail area finish the job.
    let x = if p < 0.5 {
        -SQRT_2 * erfc_inv(2.0 * p)
    } else {
        SQRT_2 * erfc_inv(2.0 * (1.0 - p))
    };
    // 1 - p is exact for p >= 0.5
    let (tail, upper) = if p < 0.5 { (p, false) } else { (1.0 - p, true) };
    newton_polish(newton_polish(x, tail, upper), tail, upper)
}

/// Quantile from whichever tail is smaller: `lower = P(X <= x)`,
/// `upper = P(X > x)`. Keeps precision when `lower` is within an ulp of 1.
pub fn norm_quantile_tails(lower: f64, upper: f64) -> f64 {
    if lower <= upper {
        norm_quantile(lower)
    } else {
        -norm_quantile(upper)
    }
}

fn newton_polish(x: f64, tail: f64, upper: bool) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let pdf = norm_pdf(x);
    if pdf <= 0.0 {
        return x;
    }
    let step = if upper {
        (tail - norm_cdf(-x)) / pdf
    } else {
        (norm_cdf(x) - tail) / pdf
    };
    if upper {
        x + step
    } else {
        x - step
    }
}

/// Tail areas `(P(T <= t), P(T > t))` of Student's t with `df` degrees of
/// freedom, via the regularized incomplete beta function.
pub fn student_t_tails(t: f64, df: f64) -> (f64, f64) {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    if t == f64::INFINITY {
        return (1.0, 0.0);
    }
    if t == f64::NEG_INFINITY {
        return (0.0, 1.0);
    }
    if t == 0.0 {
        return (0.5, 0.5);
    }
    let t2 = t * t;
    // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2); the complementary form is
    // used when x is close to 1 to avoid cancellation.
    let x = df / (df + t2);
    let two_sided = if x < 0.5 {
        beta_reg(df / 2.0, 0.5, x)
    } else {
        1.0 - beta_reg(0.5, df / 2.0, t2 / (df + t2))
    };
    let tail = 0.5 * two_sided;
    if t > 0.0 {
        (1.0 - tail, tail)
    } else {
        (tail, 1.0 - tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with mpmath at 50 digits.
    #[test]
    fn normal_cdf_reference_values() {
        let cases = [
            (0.0, 0.5),
            (1.0, 0.841344746068542948585232545632),
            (-1.96, 0.0249978951482204362128236923955),
            (2.0, 0.977249868051820792799717362833),
            (-8.0, 6.22096057427178412351599517259e-16),
            (-20.0, 2.75362411860623369507562278086e-89),
        ];
        for (x, want) in cases {
            let got = norm_cdf(x);
            assert!(((got - want) / want).abs() < 1e-13, "x={x} got={got} want={want}");
        }
    }

    #[test]
    fn normal_quantile_reference_values() {
        let cases = [
            (0.5, 0.0),
            (0.99, 2.32634787404084110088560616335),
            (0.01, -2.32634787404084110088560616335),
            (0.975, 1.95996398454005423552459),
            (1e-10, -6.36134090240405620469537582827),
            (1e-300, -37.0470962993611992372229625079),
        ];
        for (p, want) in cases {
            let got = norm_quantile(p);
            assert!((got - want).abs() <= 1e-13 * want.abs().max(1.0), "p={p} got={got} want={want}");
        }
    }

    #[test]
    fn quantile_round_trips() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = norm_quantile(p);
            assert!((norm_cdf(z) - p).abs() < 1e-15, "p={p}");
        }
        for k in 1..300 {
            let p = 10f64.powi(-k);
            let z = norm_quantile(p);
            assert!(((norm_cdf(z) - p) / p).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(norm_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(norm_quantile(1.0), f64::INFINITY);
        assert!(norm_quantile(1.5).is_nan());
        assert_eq!(norm_quantile_tails(1.0, 1e-20), -norm_quantile(1e-20));
    }

    #[test]
    fn student_t_reference_values() {
        // 1 - T_1(2) = 1/2 - atan(2)/pi
        let (_, up) = student_t_tails(2.0, 1.0);
        assert!((up - (0.5 - 2f64.atan() / PI)).abs() < 1e-15);
        // mpmath: 1 - T_5(2.5), T_3(-4.0), 1 - T_30(1.0), 1 - T_2(50)
        let cases = [
            (2.5, 5.0, 0.0272450496711881205578),
            (4.0, 3.0, 0.0140042280050730834843),
            (1.0, 30.0, 0.162654307713014945617),
            (50.0, 2.0, 0.000199880079944040290454),
        ];
        for (t, df, want) in cases {
            let (lo, up) = student_t_tails(t, df);
            assert!((up - want).abs() < 1e-13, "t={t} df={df} got={up} want={want}");
            let (lo_neg, up_neg) = student_t_tails(-t, df);
            assert_eq!(lo_neg, up);
            assert_eq!(up_neg, lo);
        }
    }
}
