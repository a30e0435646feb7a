use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub halfwidth: f64,
}

impl Interval {
    pub fn low(&self) -> f64 {
        self.mean - self.halfwidth
    }

    pub fn high(&self) -> f64 {
        self.mean + self.halfwidth
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
fn sample_sd(xs: &[f64], mean: f64) -> f64 {
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

fn t_quantile(p: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("dof > 0")
        .inverse_cdf(p)
}

fn check_finite(xs: &[f64]) -> Result<(), EvalError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Student-t 95% interval of the mean: `mean ± t(0.975, k-1) · s / √k`.
pub fn ci95(scores: &[f64]) -> Result<Interval, EvalError> {
    if scores.len() < 2 {
        return Err(EvalError::TooFewScores(scores.len()));
    }
    check_finite(scores)?;
    let k = scores.len() as f64;
    let m = mean(scores);
    let s = sample_sd(scores, m);
    Ok(Interval {
        mean: m,
        halfwidth: t_quantile(0.975, k - 1.0) * s / k.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub dof: usize,
    pub mean_difference: f64,
}

impl PairedT {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

/// Two-sided paired t-test on `a[i] - b[i]`.
///
/// All-zero differences give `t = 0, p = 1`. Constant non-zero differences
/// have no variance to test against and are reported as
/// [`EvalError::ZeroVarianceDifferences`].
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedT, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewScores(a.len()));
    }
    check_finite(a)?;
    check_finite(b)?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let dof = diffs.len() - 1;
    let m = mean(&diffs);
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(PairedT {
            t: 0.0,
            p: 1.0,
            dof,
            mean_difference: 0.0,
        });
    }
    let s = sample_sd(&diffs, m);
    if s == 0.0 {
        return Err(EvalError::ZeroVarianceDifferences);
    }
    let t = m / (s / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("dof > 0");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(PairedT {
        t,
        p,
        dof,
        mean_difference: m,
    })
}

/// `(x - y) / y`.
pub fn relative_gain(x: f64, baseline: f64) -> Result<f64, EvalError> {
    if !(baseline > 0.0) || !baseline.is_finite() || !x.is_finite() {
        return Err(EvalError::NonpositiveBaseline(baseline));
    }
    Ok((x - baseline) / baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ci_examples() {
        let flat = ci95(&[0.5; 5]).unwrap();
        assert_eq!((flat.mean, flat.halfwidth), (0.5, 0.0));

        // s = sqrt(0.0068 / 4) = 0.0412311; t(0.975, 4) = 2.7764451
        let ci = ci95(&[0.50, 0.60, 0.55, 0.58, 0.52]).unwrap();
        assert_abs_diff_eq!(ci.mean, 0.55, epsilon = 1e-12);
        assert_abs_diff_eq!(ci.halfwidth, 0.051_195_118, epsilon = 1e-8);

        assert_eq!(ci95(&[0.4]), Err(EvalError::TooFewScores(1)));
        assert_eq!(ci95(&[0.4, f64::NAN]), Err(EvalError::NonFinite));
    }

    #[test]
    fn t_quantile_matches_tables() {
        assert_abs_diff_eq!(t_quantile(0.975, 4.0), 2.776_445, epsilon = 1e-6);
        assert_abs_diff_eq!(t_quantile(0.975, 9.0), 2.262_157, epsilon = 1e-6);
    }

    #[test]
    fn paired_examples() {
        let a = [0.55, 0.6, 0.58];
        let same = paired_t(&a, &a).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));

        // scipy.stats.ttest_rel reference values
        let x = [0.61, 0.70, 0.66, 0.67, 0.62];
        let y = [0.50, 0.60, 0.55, 0.58, 0.52];
        let r = paired_t(&x, &y).unwrap();
        assert_abs_diff_eq!(r.t, 27.260_646_675_067_4, epsilon = 1e-9);
        assert_abs_diff_eq!(r.p, 1.076_764_259_251e-5, epsilon = 1e-12);
        assert!(r.is_significant(0.05));

        let r = paired_t(&[0.70, 0.30, 0.20, 0.60, 0.40], &[0.50, 0.10, 0.00, 0.20, 0.40]).unwrap();
        assert_abs_diff_eq!(r.t, 3.162_277_660_168_38, epsilon = 1e-9);
        assert_abs_diff_eq!(r.p, 0.034_109_423_167_409_6, epsilon = 1e-9);

        assert_eq!(paired_t(&[1.0, 2.0], &[1.0]), Err(EvalError::LengthMismatch(2, 1)));
        assert_eq!(
            paired_t(&[0.6, 0.7], &[0.5, 0.6]),
            Err(EvalError::ZeroVarianceDifferences)
        );
    }

    #[test]
    fn relative_gain_examples() {
        assert_abs_diff_eq!(relative_gain(44.5, 26.6).unwrap(), 0.672_932, epsilon = 1e-6);
        assert_abs_diff_eq!(relative_gain(58.4, 45.0).unwrap(), 0.297_778, epsilon = 1e-6);
        assert_eq!(relative_gain(0.7, 0.7).unwrap(), 0.0);
        assert_eq!(relative_gain(0.7, 0.0), Err(EvalError::NonpositiveBaseline(0.0)));
    }

    proptest! {
        #[test]
        fn ci_is_reflection_invariant(scores in proptest::collection::vec(0.0f64..1.0, 2..10)) {
            let flipped: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
            let a = ci95(&scores).unwrap();
            let b = ci95(&flipped).unwrap();
            prop_assert!(a.halfwidth >= 0.0);
            prop_assert!((a.halfwidth - b.halfwidth).abs() < 1e-9);
        }

        #[test]
        fn paired_t_is_antisymmetric(
            a in proptest::collection::vec(0.0f64..1.0, 5),
            b in proptest::collection::vec(0.0f64..1.0, 5),
        ) {
            if let (Ok(ab), Ok(ba)) = (paired_t(&a, &b), paired_t(&b, &a)) {
                prop_assert!((ab.t + ba.t).abs() < 1e-9 * (1.0 + ab.t.abs()));
                prop_assert!((ab.p - ba.p).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab.p));
            }
        }
    }
}
