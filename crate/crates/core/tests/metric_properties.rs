use edc_core::eval::{auc, best_threshold, log_loss};
use proptest::prelude::*;

/// Scores on a coarse grid so ties are common, with at least one sample of
/// each class.
fn instance(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0..8i32, any::<bool>()), 2..=max_n)
        .prop_map(|v| {
            let (s, y): (Vec<i32>, Vec<bool>) = v.into_iter().unzip();
            (s.into_iter().map(|k| k as f64 * 0.5 - 1.0).collect::<Vec<_>>(), y)
        })
        .prop_filter("both classes", |(_, y)| y.iter().any(|&b| b) && y.iter().any(|&b| !b))
}

fn pair_counting_auc(s: &[f64], y: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in (0..s.len()).filter(|&i| y[i]) {
        for j in (0..s.len()).filter(|&j| !y[j]) {
            pairs += 1.0;
            if s[i] > s[j] {
                wins += 1.0;
            } else if s[i] == s[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Area under the ROC polyline obtained by sweeping thresholds from high to low.
fn trapezoidal_roc_auc(s: &[f64], y: &[bool]) -> f64 {
    let p = y.iter().filter(|&&b| b).count() as f64;
    let n = y.len() as f64 - p;
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut fpr0, mut tpr0, mut area) = (0.0, 0.0, 0.0);
    for t in thresholds {
        let tp = s.iter().zip(y).filter(|(&v, &l)| l && v >= t).count() as f64;
        let fp = s.iter().zip(y).filter(|(&v, &l)| !l && v >= t).count() as f64;
        let (fpr, tpr) = (fp / n, tp / p);
        area += (fpr - fpr0) * (tpr + tpr0) / 2.0;
        fpr0 = fpr;
        tpr0 = tpr;
    }
    area
}

fn accuracy_at(s: &[f64], y: &[bool], t: f64) -> f64 {
    s.iter().zip(y).filter(|(&v, &l)| (v >= t) == l).count() as f64 / s.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn auc_matches_pair_counting_and_trapezoidal_roc((s, y) in instance(12)) {
        let a = auc(&s, &y).unwrap();
        prop_assert!((a - pair_counting_auc(&s, &y)).abs() < 1e-12);
        prop_assert!((a - trapezoidal_roc_auc(&s, &y)).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_transforms_and_flips_under_negation((s, y) in instance(20)) {
        let a = auc(&s, &y).unwrap();
        let warped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + 7.0).collect();
        prop_assert!((auc(&warped, &y).unwrap() - a).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auc(&neg, &y).unwrap() + a - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn best_threshold_matches_exhaustive_enumeration(
        v in prop::collection::vec((0..10i32, any::<bool>()), 1..=30)
    ) {
        let (s, y): (Vec<f64>, Vec<bool>) = v.into_iter().map(|(k, b)| (k as f64, b)).unzip();
        // Every distinct labelling `s >= t` is produced by some observed score
        // or by +inf.
        let mut candidates = s.clone();
        candidates.push(f64::INFINITY);
        let best = candidates
            .iter()
            .map(|&t| accuracy_at(&s, &y, t))
            .fold(f64::NEG_INFINITY, f64::max);
        let found = best_threshold(&s, &y).unwrap();
        prop_assert!((found.accuracy - best).abs() < 1e-12);
        prop_assert!((accuracy_at(&s, &y, found.threshold) - best).abs() < 1e-12);
        // No lower cut point reaches the same accuracy.
        for &t in candidates.iter().filter(|&&t| t < found.threshold) {
            prop_assert!(accuracy_at(&s, &y, t) < best);
        }
    }
}

proptest! {
    #[test]
    fn constant_probability_loss_is_minimized_at_base_rate(
        y in prop::collection::vec(any::<bool>(), 2..200)
    ) {
        let rate = y.iter().filter(|&&b| b).count() as f64 / y.len() as f64;
        prop_assume!(rate > 0.02 && rate < 0.98);
        let at = |p: f64| log_loss(&vec![p; y.len()], &y).unwrap();
        let opt = at(rate);
        for d in [-0.02, -0.01, -0.001, 0.001, 0.01, 0.02] {
            prop_assert!(opt <= at(rate + d) + 1e-15);
        }
    }
}
