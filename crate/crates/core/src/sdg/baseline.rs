//! Baseline generators: resampling the original data with replacement
//! (NonPrivate) and independent per-attribute histogram sampling (IndHist).

use rand::Rng;

use crate::data::{Category, Dataset};

use super::SdgError;

/// I.i.d. rows drawn uniformly from the original dataset with replacement.
pub fn gen_nonprivate(d: &Dataset, m: usize, rng: &mut (impl Rng + ?Sized)) -> Result<Dataset, SdgError> {
    let w = d.width();
    let mut cells = Vec::with_capacity(m * w);
    for _ in 0..m {
        let i = rng.gen_range(0..d.n_rows());
        cells.extend_from_slice(d.row(i));
    }
    Ok(Dataset::new(d.schema_arc(), cells, m)?)
}

/// Each attribute sampled independently from its empirical marginal in the
/// original dataset. All cross-attribute association is destroyed.
pub fn gen_indhist(d: &Dataset, m: usize, rng: &mut (impl Rng + ?Sized)) -> Result<Dataset, SdgError> {
    let w = d.width();
    let n = d.n_rows();
    // Per-attribute cumulative counts.
    let mut cumulative: Vec<Vec<u64>> = Vec::with_capacity(w);
    for j in 0..w {
        let card = d.schema().cardinality(j);
        let mut counts = vec![0u64; card];
        for i in 0..n {
            counts[d.get(i, j) as usize] += 1;
        }
        let mut acc = 0u64;
        for c in counts.iter_mut() {
            acc += *c;
            *c = acc;
        }
        cumulative.push(counts);
    }
    let mut cells = Vec::with_capacity(m * w);
    for _ in 0..m {
        for cum in &cumulative {
            let r = rng.gen_range(0..n as u64);
            let v = cum.partition_point(|&c| c <= r);
            cells.push(v as Category);
        }
    }
    Ok(Dataset::new(d.schema_arc(), cells, m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeDomain, DomainSchema};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::collections::HashSet;
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
    fn nonprivate_rows_come_from_input() {
        let s = schema(&[4, 2]);
        let rows: Vec<Vec<Category>> = vec![vec![0, 0], vec![1, 1], vec![2, 0]];
        let d = Dataset::from_rows(s, &rows).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let synth = gen_nonprivate(&d, 200, &mut rng).unwrap();
        let allowed: HashSet<Vec<Category>> = rows.into_iter().collect();
        for r in synth.iter_rows() {
            assert!(allowed.contains(r));
        }
    }

    #[test]
    fn nonprivate_single_row_input_is_constant() {
        let s = schema(&[4, 2]);
        let d = Dataset::from_rows(s, &[vec![3, 1]]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let synth = gen_nonprivate(&d, 50, &mut rng).unwrap();
        assert!(synth.iter_rows().all(|r| r == [3, 1]));
    }

    #[test]
    fn indhist_matches_marginals_within_3_sigma() {
        let s = schema(&[3, 2]);
        // Marginal of attribute 0: [0.5, 0.3, 0.2].
        let mut rows = Vec::new();
        for _ in 0..50 {
            rows.push(vec![0, 0]);
        }
        for _ in 0..30 {
            rows.push(vec![1, 0]);
        }
        for _ in 0..20 {
            rows.push(vec![2, 1]);
        }
        let d = Dataset::from_rows(s, &rows).unwrap();
        let m = 10_000usize;
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let synth = gen_indhist(&d, m, &mut rng).unwrap();
        for (v, p) in [(0u16, 0.5), (1, 0.3), (2, 0.2)] {
            let count = synth.iter_rows().filter(|r| r[0] == v).count() as f64;
            let sigma = (m as f64 * p * (1.0 - p)).sqrt();
            assert!((count - m as f64 * p).abs() < 3.0 * sigma + 1.0);
        }
    }

    #[test]
    fn indhist_breaks_correlation() {
        // Two perfectly correlated binary columns; synthetic correlation ~ 0.
        let s = schema(&[2, 2]);
        let mut rows = Vec::new();
        for _ in 0..50 {
            rows.push(vec![0, 0]);
            rows.push(vec![1, 1]);
        }
        let d = Dataset::from_rows(s, &rows).unwrap();
        let m = 1_000_000usize;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let synth = gen_indhist(&d, m, &mut rng).unwrap();
        let (mut sa, mut sb, mut sab) = (0f64, 0f64, 0f64);
        for r in synth.iter_rows() {
            let a = r[0] as f64;
            let b = r[1] as f64;
            sa += a;
            sb += b;
            sab += a * b;
        }
        let n = m as f64;
        let (ma, mb) = (sa / n, sb / n);
        let cov = sab / n - ma * mb;
        let corr = cov / ((ma * (1.0 - ma)).sqrt() * (mb * (1.0 - mb)).sqrt());
        assert!(corr.abs() < 0.01, "correlation {corr} not near zero");
    }

    #[test]
    fn indhist_constant_column_stays_constant() {
        let s = schema(&[3, 2]);
        let d = Dataset::from_rows(s, &[vec![1, 0], vec![1, 1], vec![1, 0]]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let synth = gen_indhist(&d, 100, &mut rng).unwrap();
        assert!(synth.iter_rows().all(|r| r[0] == 1));
    }
}
