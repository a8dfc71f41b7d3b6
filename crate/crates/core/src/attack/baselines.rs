//! The two comparison attacks: distance-to-closest-record with mode-collapse
//! preprocessing, and a categorical naive Bayes classifier trained on the
//! synthetic data.

use std::collections::HashMap;

use rand::{Rng, RngCore};

use crate::data::{Category, Dataset};

use super::{AttackError, AttackGuess};

/// Groups synthetic records by quasi-identifiers and keeps one record per
/// group with the modal secret bit; exact ties are broken by a fair coin.
/// Entries come back sorted by quasi-identifier so coin consumption is
/// deterministic under a fixed seed.
pub fn collapse_by_qi_mode(s: &Dataset, rng: &mut dyn RngCore) -> Vec<(Vec<Category>, u8)> {
    let qi_width = s.schema().qi_width();
    let mut groups: HashMap<&[Category], (u32, u32)> = HashMap::new();
    for row in s.iter_rows() {
        let e = groups.entry(&row[..qi_width]).or_insert((0, 0));
        if row[qi_width] == 0 {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let mut entries: Vec<(Vec<Category>, (u32, u32))> = groups
        .into_iter()
        .map(|(k, v)| (k.to_vec(), v))
        .collect();
    entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    entries
        .into_iter()
        .map(|(qi, (c0, c1))| {
            let bit = match c0.cmp(&c1) {
                std::cmp::Ordering::Greater => 0,
                std::cmp::Ordering::Less => 1,
                std::cmp::Ordering::Equal => u8::from(rng.gen::<bool>()),
            };
            (qi, bit)
        })
        .collect()
}

/// Squared Euclidean distance on raw category indices. The indices are
/// nominal, but this mirrors the distance heuristic as published.
fn qi_distance_sq(a: &[Category], b: &[Category]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum()
}

/// Distance-to-closest-record attack: collapse the synthetic data by
/// quasi-identifier mode, then guess the secret value whose completed record
/// sits closest to a collapsed record.
pub fn dcr_attack(
    s: &Dataset,
    x_u: &[Category],
    rng: &mut dyn RngCore,
) -> Result<AttackGuess, AttackError> {
    if s.n_rows() == 0 {
        return Err(AttackError::EmptyDataset);
    }
    let collapsed = collapse_by_qi_mode(s, rng);
    // ||(x_u | t) - (z_qi | z_s)||^2 = ||x_u - z_qi||^2 + (t - z_s)^2.
    let mut best0 = u64::MAX;
    let mut best1 = u64::MAX;
    for (qi, bit) in &collapsed {
        let dq = qi_distance_sq(x_u, qi);
        let d0 = dq + *bit as u64;
        let d1 = dq + (1 - *bit) as u64;
        best0 = best0.min(d0);
        best1 = best1.min(d1);
    }
    let guess = match best0.cmp(&best1) {
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Equal => u8::from(rng.gen::<bool>()),
    };
    Ok(AttackGuess {
        guess,
        score: guess as f64,
    })
}

/// Categorical naive Bayes over quasi-identifiers with additive smoothing,
/// stored in log space.
#[derive(Debug, Clone)]
pub struct CategoricalNb {
    log_prior: [f64; 2],
    /// Per attribute, per class, per label.
    log_cond: Vec<[Vec<f64>; 2]>,
}

/// Maximum-likelihood fit with additive smoothing `alpha` on the synthetic
/// data's quasi-identifier -> secret mapping.
pub fn nb_fit(s: &Dataset, alpha: f64) -> Result<CategoricalNb, AttackError> {
    if s.n_rows() == 0 {
        return Err(AttackError::EmptyDataset);
    }
    let qi_width = s.schema().qi_width();
    let m = s.n_rows() as f64;
    let mut class_counts = [0f64; 2];
    let mut counts: Vec<[Vec<f64>; 2]> = (0..qi_width)
        .map(|a| {
            let card = s.schema().cardinality(a);
            [vec![0f64; card], vec![0f64; card]]
        })
        .collect();
    for row in s.iter_rows() {
        let c = row[qi_width] as usize;
        class_counts[c] += 1.0;
        for (a, &v) in row[..qi_width].iter().enumerate() {
            counts[a][c][v as usize] += 1.0;
        }
    }
    let log_prior = [
        ((class_counts[0] + alpha) / (m + 2.0 * alpha)).ln(),
        ((class_counts[1] + alpha) / (m + 2.0 * alpha)).ln(),
    ];
    let log_cond = counts
        .into_iter()
        .map(|per_class| {
            let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for c in 0..2 {
                let card = per_class[c].len() as f64;
                out[c] = per_class[c]
                    .iter()
                    .map(|&cnt| ((cnt + alpha) / (class_counts[c] + alpha * card)).ln())
                    .collect();
            }
            out
        })
        .collect();
    Ok(CategoricalNb {
        log_prior,
        log_cond,
    })
}

impl CategoricalNb {
    pub fn log_joint(&self, x_u: &[Category]) -> [f64; 2] {
        let mut l = self.log_prior;
        for (a, &v) in x_u.iter().enumerate() {
            l[0] += self.log_cond[a][0][v as usize];
            l[1] += self.log_cond[a][1][v as usize];
        }
        l
    }

    /// P(secret = 1 | quasi-identifiers).
    pub fn posterior_one(&self, x_u: &[Category]) -> f64 {
        let [l0, l1] = self.log_joint(x_u);
        1.0 / (1.0 + (l0 - l1).exp())
    }
}

/// Inference attack: train the classifier on the synthetic data, predict the
/// target's secret from its quasi-identifiers. Argmax ties go to class 0.
pub fn ml_attack(s: &Dataset, x_u: &[Category], alpha: f64) -> Result<AttackGuess, AttackError> {
    let nb = nb_fit(s, alpha)?;
    let score = nb.posterior_one(x_u);
    Ok(AttackGuess {
        guess: u8::from(score > 0.5),
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeDomain, DomainSchema};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::sync::Arc;

    fn schema(cards: &[usize]) -> Arc<DomainSchema> {
        let attrs: Vec<AttributeDomain> = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                AttributeDomain::new(format!("a{i}"), (0..c).map(|v| v.to_string()).collect())
                    .unwrap()
            })
            .collect();
        let secret = format!("a{}", cards.len() - 1);
        Arc::new(DomainSchema::new(attrs, &secret).unwrap())
    }

    #[test]
    fn dcr_mode_collapse_hand_example() {
        // S contains (x_u | 0) twice and (x_u | 1) once: the collapse keeps
        // secret 0 at distance zero, so the guess is 0.
        let s = schema(&[3, 2]);
        let synth = Dataset::from_rows(
            Arc::clone(&s),
            &[vec![2, 0], vec![2, 0], vec![2, 1], vec![0, 1]],
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let g = dcr_attack(&synth, &[2], &mut rng).unwrap();
        assert_eq!(g.guess, 0);
        assert_eq!(g.score, 0.0);
    }

    #[test]
    fn dcr_exact_match_wins() {
        let s = schema(&[3, 2]);
        let synth = Dataset::from_rows(Arc::clone(&s), &[vec![1, 1]]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let g = dcr_attack(&synth, &[1], &mut rng).unwrap();
        assert_eq!(g.guess, 1);
    }

    #[test]
    fn dcr_tie_flips_fairly() {
        // Equal mode counts at the target cell: collapse flips a coin, and
        // the decision then sits at distance 0 vs 1 accordingly.
        let s = schema(&[2, 2]);
        let synth = Dataset::from_rows(Arc::clone(&s), &[vec![0, 0], vec![0, 1]]).unwrap();
        let mut ones = 0u32;
        let reps = 10_000;
        for i in 0..reps {
            let mut rng = ChaCha12Rng::seed_from_u64(i as u64);
            ones += dcr_attack(&synth, &[0], &mut rng).unwrap().guess as u32;
        }
        let sigma = (reps as f64 * 0.25).sqrt();
        assert!((ones as f64 - reps as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn dcr_invariant_under_row_permutation() {
        let s = schema(&[4, 3, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let rows: Vec<Vec<Category>> = (0..200)
            .map(|_| {
                vec![
                    rng.gen_range(0..4) as Category,
                    rng.gen_range(0..3) as Category,
                    rng.gen_range(0..2) as Category,
                ]
            })
            .collect();
        let synth = Dataset::from_rows(Arc::clone(&s), &rows).unwrap();
        let mut rev = rows.clone();
        rev.reverse();
        let synth_rev = Dataset::from_rows(Arc::clone(&s), &rev).unwrap();
        for target in [[0u16, 0], [3, 2], [1, 1]] {
            let a = dcr_attack(&synth, &target, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
            let b = dcr_attack(&synth_rev, &target, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn collapse_is_idempotent() {
        let s = schema(&[2, 2, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let rows: Vec<Vec<Category>> = (0..100)
            .map(|_| {
                vec![
                    rng.gen_range(0..2) as Category,
                    rng.gen_range(0..2) as Category,
                    rng.gen_range(0..2) as Category,
                ]
            })
            .collect();
        let synth = Dataset::from_rows(Arc::clone(&s), &rows).unwrap();
        let once = collapse_by_qi_mode(&synth, &mut ChaCha12Rng::seed_from_u64(5));
        let as_rows: Vec<Vec<Category>> = once
            .iter()
            .map(|(qi, bit)| {
                let mut r = qi.clone();
                r.push(*bit as Category);
                r
            })
            .collect();
        let collapsed_ds = Dataset::from_rows(Arc::clone(&s), &as_rows).unwrap();
        let twice = collapse_by_qi_mode(&collapsed_ds, &mut ChaCha12Rng::seed_from_u64(6));
        assert_eq!(once, twice);
    }

    #[test]
    fn nb_constant_secret_prior_and_prediction() {
        let s = schema(&[2, 2]);
        let n = 10usize;
        let rows: Vec<Vec<Category>> = (0..n).map(|i| vec![(i % 2) as Category, 0]).collect();
        let synth = Dataset::from_rows(Arc::clone(&s), &rows).unwrap();
        let alpha = 1.0;
        let nb = nb_fit(&synth, alpha).unwrap();
        let expected_prior0 = (n as f64 + alpha) / (n as f64 + 2.0 * alpha);
        assert!((nb.log_prior[0].exp() - expected_prior0).abs() < 1e-12);
        for v in 0..2u16 {
            let g = ml_attack(&synth, &[v], alpha).unwrap();
            assert_eq!(g.guess, 0);
            assert!(g.score < 0.5);
        }
    }

    #[test]
    fn nb_perfect_predictor_is_learned() {
        let s = schema(&[2, 2]);
        let mut rows = Vec::new();
        for _ in 0..50 {
            rows.push(vec![0, 0]);
            rows.push(vec![1, 1]);
        }
        let synth = Dataset::from_rows(Arc::clone(&s), &rows).unwrap();
        let mut correct = 0;
        for row in synth.iter_rows() {
            let g = ml_attack(&synth, &row[..1], 1.0).unwrap();
            if g.guess == row[1] as u8 {
                correct += 1;
            }
        }
        assert_eq!(correct, synth.n_rows());
    }

    #[test]
    fn nb_independence_keeps_posterior_near_prior() {
        let s = schema(&[2, 3, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let m = 100_000usize;
        // Secret drawn with p = 0.3 independently of the attributes.
        let rows: Vec<Vec<Category>> = (0..m)
            .map(|_| {
                vec![
                    rng.gen_range(0..2) as Category,
                    rng.gen_range(0..3) as Category,
                    u16::from(rng.gen_bool(0.3)),
                ]
            })
            .collect();
        let synth = Dataset::from_rows(Arc::clone(&s), &rows).unwrap();
        let nb = nb_fit(&synth, 1.0).unwrap();
        let prior1 = nb.log_prior[1].exp();
        for a in 0..2u16 {
            for b in 0..3u16 {
                let post = nb.posterior_one(&[a, b]);
                assert!(
                    (post - prior1).abs() < 0.05,
                    "posterior {post} far from prior {prior1}"
                );
            }
        }
    }

    #[test]
    fn nb_log_space_matches_direct_product() {
        let s = schema(&[3, 4, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let rows: Vec<Vec<Category>> = (0..50)
            .map(|_| {
                vec![
                    rng.gen_range(0..3) as Category,
                    rng.gen_range(0..4) as Category,
                    rng.gen_range(0..2) as Category,
                ]
            })
            .collect();
        let synth = Dataset::from_rows(Arc::clone(&s), &rows).unwrap();
        let alpha = 1.0;
        let nb = nb_fit(&synth, alpha).unwrap();
        // Direct-product posterior from raw (non-log) probabilities.
        for a in 0..3u16 {
            for b in 0..4u16 {
                let x_u = [a, b];
                let mut joint = [nb.log_prior[0].exp(), nb.log_prior[1].exp()];
                for (attr, &v) in x_u.iter().enumerate() {
                    joint[0] *= nb.log_cond[attr][0][v as usize].exp();
                    joint[1] *= nb.log_cond[attr][1][v as usize].exp();
                }
                let direct = joint[1] / (joint[0] + joint[1]);
                assert!((nb.posterior_one(&x_u) - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nb_probabilities_strictly_positive() {
        let s = schema(&[4, 2]);
        // Label 3 never appears.
        let synth =
            Dataset::from_rows(Arc::clone(&s), &[vec![0, 0], vec![1, 1], vec![2, 0]]).unwrap();
        let nb = nb_fit(&synth, 1.0).unwrap();
        for per_class in &nb.log_cond {
            for c in 0..2 {
                for &lp in &per_class[c] {
                    assert!(lp.is_finite() && lp.exp() > 0.0);
                }
            }
        }
    }
}
