//! Metrics and statistics: logistic transform, log loss, ROC AUC,
//! accuracy-maximizing threshold and the paired t-test.

use thiserror::Error;

/// Sigmoid inputs are clamped to `±SIGMOID_CLAMP`.
pub const SIGMOID_CLAMP: f64 = 35.0;
/// Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("metric undefined: both classes must be present")]
    SingleClass,
    #[error("empty input")]
    Empty,
    #[error("paired test needs at least two pairs")]
    TooFewPairs,
    #[error("paired differences have zero variance")]
    ZeroVariance,
}

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

/// Loss contribution of one sample with pre-sigmoid score `z`.
#[inline]
pub fn point_log_loss(z: f64, positive: bool) -> f64 {
    let p = sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS);
    if positive {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `-mean[y ln p + (1 - y) ln(1 - p)]`, probabilities clipped.
pub fn log_loss(probs: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Area under the ROC curve in its Mann-Whitney form: the fraction of
/// positive/negative pairs ranked correctly, ties counting one half.
///
/// Runs in `O(N log N)` through tied-rank sums.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (1-based, tie-averaged) ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// A decision threshold and the training accuracy it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub threshold: f64,
    pub accuracy: f64,
}

/// Threshold maximizing the accuracy of `score >= t → positive`.
///
/// Candidates are the midpoints between adjacent distinct scores plus the
/// `±∞` sentinels; among equally accurate thresholds the lowest wins.
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> Result<Threshold, MetricError> {
    check_lengths(scores, labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Threshold below everything: all predicted positive.
    let mut correct = labels.iter().filter(|&&y| y).count();
    let mut best = Threshold {
        threshold: f64::NEG_INFINITY,
        accuracy: correct as f64 / n as f64,
    };
    let mut best_correct = correct;
    let mut i = 0;
    while i < n {
        let s = scores[order[i]];
        // Move every sample with this score to the negative side.
        while i < n && scores[order[i]] == s {
            if labels[order[i]] {
                correct -= 1;
            } else {
                correct += 1;
            }
            i += 1;
        }
        if correct > best_correct {
            best_correct = correct;
            best.threshold = if i < n {
                midpoint(s, scores[order[i]])
            } else {
                f64::INFINITY
            };
            best.accuracy = correct as f64 / n as f64;
        }
    }
    Ok(best)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m.is_finite() {
        m
    } else {
        a / 2.0 + b / 2.0
    }
}

/// Outcome of a paired Student t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    pub t: f64,
    pub df: usize,
    /// Two-sided p-value.
    pub p_two_sided: f64,
    pub mean_difference: f64,
}

impl PairedTTest {
    /// One-sided p-value for the alternative `mean(a - b) > 0`.
    pub fn p_greater(&self) -> f64 {
        if self.t >= 0.0 {
            self.p_two_sided / 2.0
        } else {
            1.0 - self.p_two_sided / 2.0
        }
    }
}

/// Paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricError::TooFewPairs);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_sd(&d);
    if !(sd > 0.0) {
        return Err(MetricError::ZeroVariance);
    }
    let t = mean / (sd / (n as f64).sqrt());
    let df = n - 1;
    Ok(PairedTTest {
        t,
        df,
        p_two_sided: student_t_two_sided_p(t, df as f64),
        mean_difference: mean,
    })
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for `n < 2`).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// `I_x(a, b)` by the Lentz continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges fast for x < (a + 1) / (a + b + 2).
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        let low = sigmoid(-1000.0);
        assert_eq!(low, sigmoid(-35.0));
        assert!((low - 6.3e-16).abs() < 0.1e-16, "{low}");
    }

    #[test]
    fn log_loss_values() {
        let half = log_loss(&[0.5; 4], &[true, false, true, true]).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        let l = log_loss(&[0.9, 0.1], &[true, false]).unwrap();
        assert!((l - 0.105_360_515_657_826_3).abs() < 1e-12);
        let clipped = log_loss(&[1.0], &[true]).unwrap();
        assert!((clipped - 1e-12).abs() < 1e-15);
        assert!(log_loss(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn point_loss_agrees_with_log_loss() {
        for &(z, y) in &[(0.3, true), (-2.0, false), (50.0, false), (-50.0, true)] {
            let direct = log_loss(&[sigmoid(z)], &[y]).unwrap();
            assert_eq!(point_log_loss(z, y), direct);
        }
    }

    #[test]
    fn auc_examples() {
        let a = auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((a - 0.75).abs() < 1e-15);
        assert_eq!(auc(&[1.0, 2.0, 3.0], &[false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 5], &[false, true, true, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.3, 0.4], &[true, true]), Err(MetricError::SingleClass));
    }

    #[test]
    fn threshold_examples() {
        let t = best_threshold(&[0.2, 0.8], &[false, true]).unwrap();
        assert_eq!(t, Threshold { threshold: 0.5, accuracy: 1.0 });
        let t = best_threshold(&[0.2, 0.8], &[true, true]).unwrap();
        assert_eq!(t.threshold, f64::NEG_INFINITY);
        assert_eq!(t.accuracy, 1.0);
        let t = best_threshold(&[0.1, 0.2, 0.3], &[true, false, true]).unwrap();
        assert!((t.accuracy - 2.0 / 3.0).abs() < 1e-15);
        // −∞ already achieves 2/3, and the lowest threshold wins.
        assert_eq!(t.threshold, f64::NEG_INFINITY);
        let t = best_threshold(&[0.2, 0.8], &[false, false]).unwrap();
        assert_eq!(t.threshold, f64::INFINITY);
    }

    #[test]
    fn paired_t_examples() {
        let zero = paired_t_test(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!(zero.t, 0.0);
        assert!((zero.p_two_sided - 1.0).abs() < 1e-12);
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert!((r.t - 4.242_640_687_119_285).abs() < 1e-12);
        assert_eq!(r.df, 4);
        assert!(matches!(
            paired_t_test(&[1.0, 2.0], &[0.0, 1.0]),
            Err(MetricError::ZeroVariance)
        ));
    }

    #[test]
    fn t_distribution_against_statrs() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        for &df in &[1.0, 4.0, 9.0, 29.0, 99.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for &t in &[0.1, 0.7, 1.5, 2.3, 4.24, 5.4, 9.0] {
                let ours = student_t_two_sided_p(t, df);
                let reference = 2.0 * (1.0 - dist.cdf(t));
                assert!(
                    (ours - reference).abs() < 1e-9 * reference.max(1e-3),
                    "df={df} t={t}: {ours} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn sample_sd_uses_n_minus_one() {
        let (m, sd) = mean_sd(&[0.9, 1.0]);
        assert!((m - 0.95).abs() < 1e-15);
        assert!((sd - 0.070_710_678_118_654_76).abs() < 1e-12);
    }
}
