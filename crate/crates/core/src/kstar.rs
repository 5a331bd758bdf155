//! K* instance-based classifier.
//!
//! The probability of transforming a query `a` into training instance `b`
//! is a product of per-attribute Laplace densities,
//! `exp(-|a_i - b_i| / x0_i) / (2 x0_i)`, normalised over the training set.
//! The K* "distance" is `-log2` of that probability; it is not symmetric.
//!
//! Each attribute's scale `x0_i` is chosen per query: the blend parameter
//! fixes a target effective neighbourhood size between the number of nearest
//! training values (blend 0) and the whole training set (blend 100), and the
//! scale is found by bisection on the effective count `(Σw)² / Σw²`, which is
//! nondecreasing in `x0`. Everything is kept in log space.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSearch {
    pub max_iterations: usize,
    /// Allowed |n_eff - n_target| as a fraction of the training-set size.
    pub tolerance: f64,
}

impl Default for ScaleSearch {
    fn default() -> Self {
        ScaleSearch {
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeScale {
    pub x0: f64,
    /// All training values are equidistant from the query; every x0 gives
    /// uniform weights.
    pub degenerate: bool,
    pub converged: bool,
    pub iterations: usize,
    pub target: f64,
}

/// Effective number of equally weighted instances for weights
/// `exp(-d / x0)`, given distances `d`.
pub fn effective_count(distances: &[f64], x0: f64) -> f64 {
    let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    effective_count_shifted(distances, d_min, x0)
}

// The common factor exp(-d_min / x0) cancels in the ratio.
fn effective_count_shifted(distances: &[f64], d_min: f64, x0: f64) -> f64 {
    let (mut s1, mut s2) = (0.0, 0.0);
    for &d in distances {
        let w = (-(d - d_min) / x0).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

/// Chooses the scale of one attribute for one query.
pub fn attribute_scale(
    query: f64,
    training_values: &[f64],
    blend: f64,
    search: ScaleSearch,
) -> Result<AttributeScale> {
    if training_values.is_empty() {
        return Err(Error::InvalidArgument("attribute_scale needs training values".into()));
    }
    check_blend(blend)?;
    let distances: Vec<f64> = training_values.iter().map(|b| (query - b).abs()).collect();
    Ok(scale_for_distances(&distances, blend, search))
}

fn scale_for_distances(distances: &[f64], blend: f64, search: ScaleSearch) -> AttributeScale {
    let n = distances.len() as f64;
    let (d_min, d_max) = distances
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let nearest = distances.iter().filter(|&&d| d == d_min).count() as f64;
    let target = nearest + (n - nearest) * blend / 100.0;
    let spread = if d_max > 0.0 { d_max } else { 1.0 };
    let (mut lo, mut hi) = ((1e-10 * spread).ln(), (1e10 * spread).ln());

    if d_min == d_max {
        return AttributeScale {
            x0: lo.exp(),
            degenerate: true,
            converged: true,
            iterations: 0,
            target,
        };
    }

    let tol = search.tolerance * n;
    for iteration in 1..=search.max_iterations {
        let mid = 0.5 * (lo + hi);
        let x0 = mid.exp();
        let n_eff = effective_count_shifted(distances, d_min, x0);
        if (n_eff - target).abs() <= tol {
            return AttributeScale {
                x0,
                degenerate: false,
                converged: true,
                iterations: iteration,
                target,
            };
        }
        if n_eff < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    AttributeScale {
        x0: (0.5 * (lo + hi)).exp(),
        degenerate: false,
        converged: false,
        iterations: search.max_iterations,
        target,
    }
}

fn check_blend(blend: f64) -> Result<()> {
    if (0.0..=100.0).contains(&blend) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("blend must lie in [0, 100], got {blend}")))
    }
}

/// Result of classifying one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEvaluation {
    /// P*(b|a) for every training instance b, in training order.
    pub probabilities: Vec<f64>,
    /// Summed probability per class, in class order.
    pub class_scores: Vec<f64>,
    pub predicted: usize,
    /// Per-attribute scale x0.
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KStarModel {
    training: Dataset,
    blend: f64,
    search: ScaleSearch,
}

impl KStarModel {
    pub const DEFAULT_BLEND: f64 = 20.0;

    pub fn new(training: Dataset, blend: f64) -> Result<Self> {
        Self::with_search(training, blend, ScaleSearch::default())
    }

    pub fn with_search(training: Dataset, blend: f64, search: ScaleSearch) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::InvalidArgument("K* needs a non-empty training set".into()));
        }
        check_blend(blend)?;
        if (0..training.len()).any(|i| training.row(i).iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("training values must be finite".into()));
        }
        Ok(KStarModel {
            training,
            blend,
            search,
        })
    }

    pub fn training(&self) -> &Dataset {
        &self.training
    }

    pub fn blend(&self) -> f64 {
        self.blend
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.training.n_features() {
            return Err(Error::SchemaMismatch {
                expected: self.training.n_features(),
                got: query.len(),
            });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("query values must be finite".into()));
        }
        Ok(())
    }

    /// Per-attribute scales for `query`.
    pub fn scales(&self, query: &[f64]) -> Result<Vec<AttributeScale>> {
        self.check_query(query)?;
        let mut distances = vec![0.0; self.training.len()];
        Ok((0..self.training.n_features())
            .map(|f| {
                for (i, d) in distances.iter_mut().enumerate() {
                    *d = (query[f] - self.training.value(i, f)).abs();
                }
                scale_for_distances(&distances, self.blend, self.search)
            })
            .collect())
    }

    /// ln W(b|a) for every training instance, up to an additive constant.
    ///
    /// Each attribute's distances are measured relative to the nearest
    /// training value, which only shifts every log weight by the same amount.
    fn log_weights(&self, query: &[f64], scales: &[f64]) -> Vec<f64> {
        let n = self.training.len();
        let mut lw = vec![0.0; n];
        for (f, (&a, &x0)) in query.iter().zip(scales).enumerate() {
            let d_min = self
                .training
                .column(f)
                .map(|b| (a - b).abs())
                .fold(f64::INFINITY, f64::min);
            let norm = (2.0 * x0).ln();
            for (i, w) in lw.iter_mut().enumerate() {
                *w -= ((a - self.training.value(i, f)).abs() - d_min) / x0 + norm;
            }
        }
        lw
    }

    fn check_scales(&self, scales: &[f64]) -> Result<()> {
        if scales.len() != self.training.n_features() || scales.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidArgument("one positive scale per attribute required".into()));
        }
        Ok(())
    }

    /// P*(b|a) for training instance `b`.
    pub fn transform_probability(&self, query: &[f64], b: usize, scales: &[f64]) -> Result<f64> {
        Ok((-self.kstar_distance(query, b, scales)? * std::f64::consts::LN_2).exp())
    }

    /// K*(b|a) = -log2 P*(b|a), in bits.
    pub fn kstar_distance(&self, query: &[f64], b: usize, scales: &[f64]) -> Result<f64> {
        self.check_query(query)?;
        self.check_scales(scales)?;
        if b >= self.training.len() {
            return Err(Error::InvalidArgument(format!("no training instance {b}")));
        }
        let lw = self.log_weights(query, scales);
        let lse = log_sum_exp(&lw);
        Ok(((lse - lw[b]) / std::f64::consts::LN_2).max(0.0))
    }

    pub fn classify(&self, query: &[f64]) -> Result<QueryEvaluation> {
        let scales: Vec<f64> = self.scales(query)?.iter().map(|s| s.x0).collect();
        let lw = self.log_weights(query, &scales);
        let lse = log_sum_exp(&lw);
        let probabilities: Vec<f64> = lw.iter().map(|w| (w - lse).exp()).collect();
        let mut class_scores = vec![0.0; self.training.n_classes()];
        for (p, &label) in probabilities.iter().zip(self.training.labels()) {
            class_scores[label] += p;
        }
        let mut predicted = 0;
        for (c, &s) in class_scores.iter().enumerate() {
            if s > class_scores[predicted] {
                predicted = c;
            }
        }
        Ok(QueryEvaluation {
            probabilities,
            class_scores,
            predicted,
            scales,
        })
    }

    /// Classifies every test instance; output order follows the test set.
    pub fn predict_dataset(&self, test: &Dataset) -> Result<Vec<(usize, Vec<f64>)>> {
        if test.n_features() != self.training.n_features() {
            return Err(Error::SchemaMismatch {
                expected: self.training.n_features(),
                got: test.n_features(),
            });
        }
        (0..test.len())
            .into_par_iter()
            .map(|i| self.classify(test.row(i)).map(|e| (e.predicted, e.class_scores)))
            .collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_d(points: &[(f64, &str)]) -> Dataset {
        Dataset::from_labeled_rows(
            vec!["x".into()],
            points.iter().map(|&(v, l)| (vec![v], l)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn full_blend_gives_near_uniform_weights() {
        let training = [0.0, 0.3, 1.0, 2.5, 10.0, -4.0];
        let s = attribute_scale(0.7, &training, 100.0, ScaleSearch::default()).unwrap();
        assert!(s.converged);
        let w: Vec<f64> = training.iter().map(|b| (-(0.7f64 - b).abs() / s.x0).exp()).collect();
        let (lo, hi) = w.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi / lo <= 1.0 + 1e-3, "{}", hi / lo);
    }

    #[test]
    fn zero_blend_concentrates_on_nearest() {
        let s = attribute_scale(0.0, &[0.0, 1.0, 10.0], 0.0, ScaleSearch::default()).unwrap();
        assert_eq!(s.target, 1.0);
        let w = |b: f64| (-b.abs() / s.x0).exp();
        assert!(w(0.0) / (w(1.0) + w(10.0)) >= 1e3);
    }

    #[test]
    fn identical_training_values_are_degenerate() {
        for q in [3.0, -1.0] {
            let s = attribute_scale(q, &[3.0; 5], 20.0, ScaleSearch::default()).unwrap();
            assert!(s.degenerate);
            assert!(s.x0 > 0.0);
        }
        assert!(attribute_scale(1.0, &[], 20.0, ScaleSearch::default()).is_err());
        assert!(attribute_scale(1.0, &[1.0, 2.0], 101.0, ScaleSearch::default()).is_err());
    }

    #[test]
    fn single_training_instance() {
        let m = KStarModel::new(one_d(&[(2.0, "A")]), 20.0).unwrap();
        let e = m.classify(&[7.0]).unwrap();
        assert_eq!(e.probabilities, vec![1.0]);
        assert_eq!(m.kstar_distance(&[7.0], 0, &e.scales).unwrap(), 0.0);
        assert_eq!(m.transform_probability(&[7.0], 0, &e.scales).unwrap(), 1.0);
    }

    #[test]
    fn equidistant_pair_splits_evenly() {
        let d = Dataset::from_labeled_rows(
            vec!["x".into(), "y".into()],
            vec![(vec![0.0, 0.0], "A"), (vec![2.0, 2.0], "B")],
        )
        .unwrap();
        let m = KStarModel::new(d, 20.0).unwrap();
        let q = [1.0, 1.0];
        let e = m.classify(&q).unwrap();
        for b in 0..2 {
            assert!((m.transform_probability(&q, b, &e.scales).unwrap() - 0.5).abs() < 1e-15);
            assert!((m.kstar_distance(&q, b, &e.scales).unwrap() - 1.0).abs() < 1e-12);
        }
        // tie goes to the first class
        assert_eq!(e.predicted, 0);
    }

    #[test]
    fn distance_is_not_symmetric() {
        let m = KStarModel::new(one_d(&[(0.0, "A"), (1.0, "A"), (3.0, "B")]), 20.0).unwrap();
        let (a, b) = ([0.0], [1.0]);
        let sa: Vec<f64> = m.scales(&a).unwrap().iter().map(|s| s.x0).collect();
        let sb: Vec<f64> = m.scales(&b).unwrap().iter().map(|s| s.x0).collect();
        let k_ba = m.kstar_distance(&a, 1, &sa).unwrap();
        let k_ab = m.kstar_distance(&b, 0, &sb).unwrap();
        assert!((k_ba - k_ab).abs() > 1e-3, "{k_ba} vs {k_ab}");
    }

    #[test]
    fn nearest_neighbour_limit() {
        let m = KStarModel::new(
            one_d(&[(0.0, "A"), (5.0, "B"), (5.5, "B"), (6.0, "B"), (7.0, "B")]),
            0.01,
        )
        .unwrap();
        assert_eq!(m.classify(&[0.0]).unwrap().predicted, 0);
    }

    #[test]
    fn full_blend_scores_are_priors() {
        let points: Vec<(f64, &str)> = (0..100)
            .map(|i| ((i as f64 * 0.37).sin() * 3.0, if i < 70 { "A" } else { "B" }))
            .collect();
        let m = KStarModel::new(one_d(&points), 100.0).unwrap();
        let e = m.classify(&[0.25]).unwrap();
        assert_eq!(e.predicted, 0);
        assert!((e.class_scores[0] - 0.7).abs() < 1e-3, "{:?}", e.class_scores);
    }

    #[test]
    fn near_instances_win_at_default_blend() {
        let m = KStarModel::new(one_d(&[(0.0, "A"), (1.0, "A"), (10.0, "B")]), 20.0).unwrap();
        let e = m.classify(&[0.5]).unwrap();
        assert_eq!(m.training().class_names()[e.predicted], "A");
    }

    #[test]
    fn schema_and_argument_errors() {
        let m = KStarModel::new(one_d(&[(0.0, "A"), (1.0, "B")]), 20.0).unwrap();
        assert!(matches!(m.classify(&[1.0, 2.0]), Err(Error::SchemaMismatch { .. })));
        let wide = Dataset::from_labeled_rows(vec!["a".into(), "b".into()], vec![(vec![0.0, 0.0], "A")]).unwrap();
        assert!(m.predict_dataset(&wide).is_err());
        assert!(KStarModel::new(one_d(&[(0.0, "A")]), -1.0).is_err());
        assert!(m.kstar_distance(&[0.0], 5, &[1.0]).is_err());
        assert!(m.kstar_distance(&[0.0], 0, &[0.0]).is_err());
    }

    #[test]
    fn empty_and_self_prediction() {
        let train = one_d(&[(0.0, "A"), (1.0, "B"), (2.0, "C"), (3.5, "A")]);
        let m = KStarModel::new(train.clone(), 0.5).unwrap();
        assert!(m.predict_dataset(&train.subset(&[])).unwrap().is_empty());
        let out = m.predict_dataset(&train).unwrap();
        let preds: Vec<usize> = out.iter().map(|p| p.0).collect();
        assert_eq!(preds, train.labels());
    }

    fn random_model() -> impl Strategy<Value = (Vec<(Vec<f64>, usize)>, Vec<f64>, f64)> {
        (1usize..4).prop_flat_map(|dim| {
            (
                prop::collection::vec((prop::collection::vec(-50.0f64..50.0, dim), 0usize..3), 1..25),
                prop::collection::vec(-60.0f64..60.0, dim),
                0.0f64..=100.0,
            )
        })
    }

    proptest! {
        #[test]
        fn probability_axioms((rows, query, blend) in random_model()) {
            let dim = query.len();
            let d = Dataset::new((0..dim).map(|i| format!("f{i}")).collect(),
                vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
            let m = KStarModel::new(d, blend).unwrap();
            let e = m.classify(&query).unwrap();
            let total: f64 = e.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(e.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((e.class_scores.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for b in 0..m.training().len() {
                prop_assert!(m.kstar_distance(&query, b, &e.scales).unwrap() >= 0.0);
            }
            prop_assert_eq!(&e, &m.classify(&query).unwrap());
        }

        #[test]
        fn training_order_does_not_change_prediction((rows, query, blend) in random_model(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let dim = query.len();
            let make = |r: Vec<(Vec<f64>, usize)>| KStarModel::new(Dataset::new(
                (0..dim).map(|i| format!("f{i}")).collect(),
                vec!["a".into(), "b".into(), "c".into()], r).unwrap(), blend).unwrap();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (a, b) = (make(rows).classify(&query).unwrap(), make(shuffled).classify(&query).unwrap());
            let margin = {
                let mut s = a.class_scores.clone();
                s.sort_by(|x, y| y.total_cmp(x));
                s[0] - s.get(1).copied().unwrap_or(0.0)
            };
            // exact score ties can flip under float reassociation
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(a.predicted, b.predicted);
        }
    }
}
