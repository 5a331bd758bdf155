//! Descriptive statistics of a signal window.
//!
//! Spread and shape statistics use the n-1 sample convention throughout:
//! `standard_deviation` is s, `sample_variance` is s², and kurtosis and
//! skewness are the bias-adjusted spreadsheet forms built on s. Central
//! moments are accumulated from mean-subtracted values (two passes), so a
//! large constant offset does not eat the precision of the higher moments.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Condition, SignalWindow};

/// Column order of the feature table.
pub const FEATURE_NAMES: [&str; 13] = [
    "mean",
    "standard_error",
    "median",
    "mode",
    "standard_deviation",
    "sample_variance",
    "kurtosis",
    "skewness",
    "range",
    "minimum",
    "maximum",
    "sum",
    "count",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean: f64,
    pub standard_error: f64,
    pub median: f64,
    pub mode: f64,
    pub standard_deviation: f64,
    pub sample_variance: f64,
    pub kurtosis: f64,
    pub skewness: f64,
    pub range: f64,
    pub minimum: f64,
    pub maximum: f64,
    pub sum: f64,
    pub count: usize,
    pub condition: Option<Condition>,
}

impl FeatureVector {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [f64; 13] {
        [
            self.mean,
            self.standard_error,
            self.median,
            self.mode,
            self.standard_deviation,
            self.sample_variance,
            self.kurtosis,
            self.skewness,
            self.range,
            self.minimum,
            self.maximum,
            self.sum,
            self.count as f64,
        ]
    }
}

fn require(x: &[f64], needed: usize) -> Result<()> {
    if x.len() < needed {
        Err(Error::TooFewValues {
            needed,
            got: x.len(),
        })
    } else {
        Ok(())
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn sum(x: &[f64]) -> f64 {
    compensated_sum(x.iter().copied())
}

pub fn mean(x: &[f64]) -> Result<f64> {
    require(x, 1)?;
    Ok(sum(x) / x.len() as f64)
}

/// Central moment sums Σd², Σd³, Σd⁴ with d = x - mean.
struct CentralSums {
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

fn central_sums(x: &[f64]) -> Result<CentralSums> {
    let mean = mean(x)?;
    // second pass corrects the mean by the residual sum of deviations
    let residual = compensated_sum(x.iter().map(|v| v - mean)) / x.len() as f64;
    let mean = mean + residual;
    let dev = || x.iter().map(move |v| v - mean);
    Ok(CentralSums {
        mean,
        m2: compensated_sum(dev().map(|d| d * d)),
        m3: compensated_sum(dev().map(|d| d * d * d)),
        m4: compensated_sum(dev().map(|d| (d * d) * (d * d))),
    })
}

pub fn sample_std_dev(x: &[f64]) -> Result<f64> {
    require(x, 2)?;
    let c = central_sums(x)?;
    Ok((c.m2 / (x.len() - 1) as f64).sqrt())
}

pub fn standard_error(x: &[f64]) -> Result<f64> {
    Ok(sample_std_dev(x)? / (x.len() as f64).sqrt())
}

fn total_order(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}

pub fn median(x: &[f64]) -> Result<f64> {
    require(x, 1)?;
    let mut v = x.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (lower, upper, _) = v.select_nth_unstable_by(mid, total_order);
    let upper = *upper;
    if n % 2 == 1 {
        Ok(upper)
    } else {
        let below = lower.iter().copied().max_by(total_order).expect("n >= 2");
        Ok((below + upper) / 2.0)
    }
}

/// Most frequent exact value; ties go to the smallest value.
pub fn mode(x: &[f64]) -> Result<f64> {
    require(x, 1)?;
    let mut v = x.to_vec();
    v.sort_by(total_order);
    let mut best = v[0];
    let mut best_run = 0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if j - i > best_run {
            best_run = j - i;
            best = v[i];
        }
        i = j;
    }
    Ok(best)
}

fn standardized(x: &[f64], min_len: usize) -> Result<(CentralSums, f64)> {
    require(x, min_len)?;
    let c = central_sums(x)?;
    let var = c.m2 / (x.len() - 1) as f64;
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::ConstantWindow);
    }
    Ok((c, var))
}

/// Bias-adjusted excess kurtosis.
pub fn kurtosis(x: &[f64]) -> Result<f64> {
    let (c, var) = standardized(x, 4)?;
    let n = x.len() as f64;
    let sum4 = c.m4 / (var * var);
    Ok(n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0)) * sum4
        - 3.0 * (n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0)))
}

/// Bias-adjusted sample skewness.
pub fn skewness(x: &[f64]) -> Result<f64> {
    let (c, var) = standardized(x, 3)?;
    let n = x.len() as f64;
    let sum3 = c.m3 / (var * var.sqrt());
    Ok(n / ((n - 1.0) * (n - 2.0)) * sum3)
}

pub fn extract_features(window: &SignalWindow) -> Result<FeatureVector> {
    features_of(window.samples(), window.condition())
}

/// Same as [`extract_features`] on a bare slice.
pub fn features_of(x: &[f64], condition: Option<Condition>) -> Result<FeatureVector> {
    require(x, 4)?;
    let (c, var) = standardized(x, 4)?;
    let n = x.len();
    let sd = var.sqrt();
    let (minimum, maximum) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(FeatureVector {
        mean: c.mean,
        standard_error: sd / (n as f64).sqrt(),
        median: median(x)?,
        mode: mode(x)?,
        standard_deviation: sd,
        sample_variance: var,
        kurtosis: kurtosis(x)?,
        skewness: skewness(x)?,
        range: maximum - minimum,
        minimum,
        maximum,
        sum: sum(x),
        count: n,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mean(&[4.25; 17]).unwrap(), 4.25);
        assert!(mean(&[]).is_err());
    }

    #[test]
    fn std_dev_examples() {
        assert_eq!(sample_std_dev(&[2.0; 4]).unwrap(), 0.0);
        let s = sample_std_dev(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((s - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((s - 1.5811388).abs() < 1e-7);
        assert!(sample_std_dev(&[1.0]).is_err());
    }

    #[test]
    fn standard_error_examples() {
        assert_eq!(standard_error(&[2.0; 4]).unwrap(), 0.0);
        let se = standard_error(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((se - 0.7071068).abs() < 1e-7);
        assert!(standard_error(&[3.0]).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn mode_examples() {
        assert_eq!(mode(&[1.0, 2.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mode(&[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(mode(&[3.0, 2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mode(&[5.0, 5.0, 7.0, 7.0, 1.0]).unwrap(), 5.0);
        assert!(mode(&[]).is_err());
    }

    #[test]
    fn kurtosis_examples() {
        let k = kurtosis(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((k + 1.2).abs() < 1e-12, "{k}");
        assert!(matches!(kurtosis(&[1.0, 2.0, 3.0]), Err(Error::TooFewValues { .. })));
        assert!(matches!(kurtosis(&[2.0; 6]), Err(Error::ConstantWindow)));
    }

    #[test]
    fn kurtosis_of_normal_sample_near_zero() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let k = kurtosis(&x).unwrap();
        assert!(k.abs() < 0.2, "{k}");
    }

    #[test]
    fn skewness_examples() {
        assert!(skewness(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap().abs() < 1e-15);
        let s = skewness(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-12, "{s}");
        assert!(skewness(&[1.0, 2.0]).is_err());
        assert!(matches!(skewness(&[1.0; 3]), Err(Error::ConstantWindow)));
    }

    #[test]
    fn extract_small_window() {
        let w = SignalWindow::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], Some(Condition::C4mis));
        let f = extract_features(&w).unwrap();
        assert_eq!(f.mean, 3.0);
        assert_eq!(f.median, 3.0);
        assert_eq!(f.mode, 1.0);
        assert!((f.standard_deviation - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((f.sample_variance - 2.5).abs() < 1e-14);
        assert!((f.standard_error - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((f.kurtosis + 1.2).abs() < 1e-12);
        assert!(f.skewness.abs() < 1e-15);
        assert_eq!((f.minimum, f.maximum, f.range, f.sum), (1.0, 5.0, 4.0, 15.0));
        assert_eq!(f.count, 5);
        assert_eq!(f.condition, Some(Condition::C4mis));
    }

    #[test]
    fn extract_rejects_short_and_constant() {
        let short = SignalWindow::new(vec![1.0, 2.0, 3.0], None);
        assert!(matches!(extract_features(&short), Err(Error::TooFewValues { needed: 4, .. })));
        let flat = SignalWindow::new(vec![0.5; 64], None);
        assert!(matches!(extract_features(&flat), Err(Error::ConstantWindow)));
    }

    #[test]
    fn large_offset_keeps_shape_statistics() {
        let x: Vec<f64> = (0..8192).map(|i| ((i * 37 % 101) as f64 / 7.0).sin()).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + 1e6).collect();
        let (a, b) = (features_of(&x, None).unwrap(), features_of(&shifted, None).unwrap());
        assert!((a.kurtosis - b.kurtosis).abs() < 1e-6);
        assert!((a.skewness - b.skewness).abs() < 1e-6);
    }

    fn window() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 4..300)
            .prop_filter("non-constant", |v| v.iter().any(|x| *x != v[0]))
    }

    proptest! {
        #[test]
        fn internal_consistency(x in window()) {
            let f = features_of(&x, None).unwrap();
            prop_assert!(f.minimum <= f.median && f.median <= f.maximum);
            prop_assert_eq!(f.range, f.maximum - f.minimum);
            prop_assert!(close(f.sample_variance, f.standard_deviation.powi(2), 1e-12));
            prop_assert!(close(f.standard_error, f.standard_deviation / (x.len() as f64).sqrt(), 1e-12));
            prop_assert_eq!(f.count, x.len());
            prop_assert!(close(f.sum / f.count as f64, f.mean, 1e-12));
        }

        #[test]
        fn permutation_invariant(x in window(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut y = x.clone();
            y.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (a, b) = (features_of(&x, None).unwrap(), features_of(&y, None).unwrap());
            for (u, v) in a.values().iter().zip(b.values()) {
                prop_assert!(close(*u, v, 1e-10), "{} vs {}", u, v);
            }
        }

        #[test]
        fn affine_covariance(x in window(), scale in 0.01f64..100.0, shift in -1e3f64..1e3) {
            let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let (a, b) = (features_of(&x, None).unwrap(), features_of(&y, None).unwrap());
            prop_assert!((a.kurtosis - b.kurtosis).abs() < 1e-8);
            prop_assert!((a.skewness - b.skewness).abs() < 1e-8);
            prop_assert!(close(b.mean, scale * a.mean + shift, 1e-10));
            prop_assert!(close(b.standard_error, scale * a.standard_error, 1e-10));
        }

        #[test]
        fn std_dev_translation_invariant(x in window(), shift in -1e3f64..1e3) {
            let y: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let (a, b) = (sample_std_dev(&x).unwrap(), sample_std_dev(&y).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn skewness_is_odd(x in window()) {
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert!((skewness(&x).unwrap() + skewness(&neg).unwrap()).abs() < 1e-10);
        }
    }
}
