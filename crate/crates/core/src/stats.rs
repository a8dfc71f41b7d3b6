//! Small statistical helpers shared by the DP primitives and the test
//! harness: reference CDFs, a one-sample Kolmogorov-Smirnov test, and
//! ROC/AUC construction.

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Laplace(mu, scale) CDF.
pub fn laplace_cdf(x: f64, mu: f64, scale: f64) -> f64 {
    let z = (x - mu) / scale;
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}

/// One-sample KS statistic sup |F_hat - F| for sorted samples.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic p-value of the KS statistic, with the Stephens small-sample
/// correction on the effective sample size.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let n = n as f64;
    let en = n.sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    // Kolmogorov distribution tail: 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
    let mut p = 0.0f64;
    let mut sign = 1.0f64;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// ROC curve from (score, label) pairs, sweeping a threshold from above the
/// maximum score down. Tied scores move as a block, so the curve's area
/// equals the Mann-Whitney statistic with half-credit for ties.
/// Returns points (fpr, tpr), starting at (0,0) and ending at (1,1).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64)> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        // Consume the whole tie block at this score.
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let fpr = if neg > 0.0 { fp / neg } else { 0.0 };
        let tpr = if pos > 0.0 { tp / pos } else { 0.0 };
        points.push((fpr, tpr));
    }
    if *points.last().unwrap() != (1.0, 1.0) {
        points.push((1.0, 1.0));
    }
    points
}

/// Area under an ROC curve by the trapezoidal rule.
pub fn auc_from_roc(points: &[(f64, f64)]) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        area += (x1 - x0) * (y0 + y1) * 0.5;
    }
    area
}

/// AUC of scores against binary labels; 0.5 when one class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return 0.5;
    }
    auc_from_roc(&roc_curve(scores, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-9);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-12);
    }

    #[test]
    fn laplace_cdf_reference_values() {
        assert!((laplace_cdf(0.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((laplace_cdf(1.0, 0.0, 1.0) - (1.0 - 0.5 * (-1.0f64).exp())).abs() < 1e-15);
        assert!((laplace_cdf(-2.0, 0.0, 2.0) - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ks_rejects_wrong_distribution() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut samples: Vec<f64> = (0..5_000).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_statistic(&samples, normal_cdf);
        assert!(ks_p_value(d, samples.len()) < 1e-6);
    }

    /// Mann-Whitney U based AUC with half-credit ties: the rank-based oracle.
    fn mann_whitney_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut u = 0.0f64;
        let mut n_pos = 0.0;
        let mut n_neg = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if li == 1 {
                n_pos += 1.0;
                for (j, &lj) in labels.iter().enumerate() {
                    if lj == 0 {
                        if scores[i] > scores[j] {
                            u += 1.0;
                        } else if scores[i] == scores[j] {
                            u += 0.5;
                        }
                    }
                }
            } else {
                n_neg += 1.0;
            }
        }
        u / (n_pos * n_neg)
    }

    #[test]
    fn auc_matches_mann_whitney_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..50 {
            let n = rng.gen_range(2..60);
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            // Guarantee both classes appear.
            labels[0] = 0;
            if n > 1 {
                labels[1] = 1;
            }
            // Coarse grid of scores to force ties.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
            let fast = auc(&scores, &labels);
            let oracle = mann_whitney_auc(&scores, &labels);
            assert!(
                (fast - oracle).abs() < 1e-9,
                "auc {fast} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn auc_perfect_and_constant() {
        let labels = vec![0, 0, 1, 1];
        assert!((auc(&[0.1, 0.2, 0.8, 0.9], &labels) - 1.0).abs() < 1e-12);
        assert!((auc(&[0.5, 0.5, 0.5, 0.5], &labels) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n = 100;
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let roc = roc_curve(&scores, &labels);
        for w in roc.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }
}
