//! Utility error metrics between original and synthetic data: mean relative
//! error over random 3-way marginal queries with adequate support, and
//! average total variation distance over random attribute subsets.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Category, Dataset};
use crate::query::{batch_counts, build_tables, MarginalQuery, QueryError};

#[derive(Debug, Error)]
pub enum UtilityError {
    #[error("no sampled query evaluates above the support threshold on the original data")]
    NoQualifyingQueries,
    #[error("datasets use different schemas")]
    SchemaMismatch,
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilityReport {
    /// Mean relative error over random 3-way marginals with original count > 10.
    pub mre_gt10: f64,
    /// Average 3-way total variation distance.
    pub k_tvd: f64,
    /// Qualifying queries behind `mre_gt10`.
    pub query_count: usize,
    /// Attribute subsets behind `k_tvd`.
    pub subset_count: usize,
}

/// Support threshold: queries must match more than this many original rows
/// to count toward the relative error.
const SUPPORT_THRESHOLD: u64 = 10;

/// Uniformly random `k`-way query: attribute subset then one cell.
fn random_query(d: &Dataset, k: usize, rng: &mut (impl Rng + ?Sized)) -> MarginalQuery {
    let mut attrs: Vec<usize> = rand::seq::index::sample(rng, d.width(), k)
        .into_iter()
        .collect();
    attrs.sort_unstable();
    let values: Vec<Category> = attrs
        .iter()
        .map(|&a| rng.gen_range(0..d.schema().cardinality(a)) as Category)
        .collect();
    MarginalQuery { attrs, values }
}

/// Mean relative error of `s` against `d` over an explicit query list,
/// keeping only queries whose original count exceeds the support threshold.
pub fn mre_over_queries(
    d: &Dataset,
    s: &Dataset,
    queries: &[MarginalQuery],
) -> Result<(f64, usize), UtilityError> {
    if d.schema() != s.schema() {
        return Err(UtilityError::SchemaMismatch);
    }
    let counts_d = batch_counts(queries, d, d.schema());
    let counts_s = batch_counts(queries, s, s.schema());
    let n = d.n_rows() as f64;
    let m = s.n_rows() as f64;
    let mut total = 0.0;
    let mut kept = 0usize;
    for (cd, cs) in counts_d.iter().zip(&counts_s) {
        if *cd > SUPPORT_THRESHOLD {
            let fd = *cd as f64 / n;
            let fs = *cs as f64 / m;
            total += (fs - fd).abs() / fd;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(UtilityError::NoQualifyingQueries);
    }
    Ok((total / kept as f64, kept))
}

/// Mean relative error over `num_queries` random 3-way marginals whose
/// original count exceeds 10. Fractions are compared after normalization, so
/// synthetic datasets of any size are handled.
pub fn mre_gt10(
    d: &Dataset,
    s: &Dataset,
    num_queries: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<f64, UtilityError> {
    if d.width() < 3 {
        return Err(QueryError::KTooLarge {
            k: 3,
            d: d.width(),
        }
        .into());
    }
    let queries: Vec<MarginalQuery> = (0..num_queries).map(|_| random_query(d, 3, rng)).collect();
    mre_over_queries(d, s, &queries).map(|(mre, _)| mre)
}

/// Total variation distance between the two datasets' joint histograms over
/// a fixed attribute subset: half the L1 distance over all cells.
pub fn tvd_subset(d: &Dataset, s: &Dataset, attrs: &[usize]) -> f64 {
    let td = &build_tables(d, &[attrs.to_vec()], d.schema())[0];
    let ts = &build_tables(s, &[attrs.to_vec()], s.schema())[0];
    let n = d.n_rows() as f64;
    let m = s.n_rows() as f64;
    0.5 * td
        .counts
        .iter()
        .zip(&ts.counts)
        .map(|(&cd, &cs)| (cd as f64 / n - cs as f64 / m).abs())
        .sum::<f64>()
}

/// Average total variation distance over `p` distinct random `k`-subsets of
/// attributes (all subsets when fewer than `p` exist).
pub fn k_tvd(
    d: &Dataset,
    s: &Dataset,
    k: usize,
    p: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<f64, UtilityError> {
    if d.schema() != s.schema() {
        return Err(UtilityError::SchemaMismatch);
    }
    let width = d.width();
    if k < 1 || k > width {
        return Err(QueryError::KTooLarge { k, d: width }.into());
    }
    let total_subsets = n_choose_k(width, k);
    let subsets: Vec<Vec<usize>> = if (p as u128) >= total_subsets {
        crate::query::combinations(&(0..width).collect::<Vec<_>>(), k)
    } else {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(p);
        while out.len() < p {
            let mut attrs: Vec<usize> = rand::seq::index::sample(rng, width, k)
                .into_iter()
                .collect();
            attrs.sort_unstable();
            if seen.insert(attrs.clone()) {
                out.push(attrs);
            }
        }
        out
    };
    // All subset tables in one pass per dataset.
    let tables_d = build_tables(d, &subsets, d.schema());
    let tables_s = build_tables(s, &subsets, s.schema());
    let n = d.n_rows() as f64;
    let m = s.n_rows() as f64;
    let mut total = 0.0;
    for (td, ts) in tables_d.iter().zip(&tables_s) {
        total += 0.5
            * td.counts
                .iter()
                .zip(&ts.counts)
                .map(|(&cd, &cs)| (cd as f64 / n - cs as f64 / m).abs())
                .sum::<f64>();
    }
    Ok(total / subsets.len() as f64)
}

fn n_choose_k(n: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Both metrics with the paper-scale defaults (1000 random 3-way queries,
/// 100 subsets of size 3).
pub fn utility_report(
    d: &Dataset,
    s: &Dataset,
    num_queries: usize,
    subsets: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<UtilityReport, UtilityError> {
    let queries: Vec<MarginalQuery> = (0..num_queries).map(|_| random_query(d, 3, rng)).collect();
    let (mre, kept) = mre_over_queries(d, s, &queries)?;
    let tvd = k_tvd(d, s, 3, subsets, rng)?;
    Ok(UtilityReport {
        mre_gt10: mre,
        k_tvd: tvd,
        query_count: kept,
        subset_count: subsets.min(n_choose_k(d.width(), 3).min(usize::MAX as u128) as usize),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeDomain, DomainSchema};
    use crate::query::{eval_fraction, MarginalQuery};
    use crate::sdg::gen_nonprivate;
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

    fn random_dataset(s: &Arc<DomainSchema>, n: usize, rng: &mut impl Rng) -> Dataset {
        let rows: Vec<Vec<Category>> = (0..n)
            .map(|_| {
                (0..s.width())
                    .map(|j| rng.gen_range(0..s.cardinality(j)) as Category)
                    .collect()
            })
            .collect();
        Dataset::from_rows(Arc::clone(s), &rows).unwrap()
    }

    #[test]
    fn self_comparison_is_exactly_zero() {
        let s = schema(&[3, 4, 2, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let d = random_dataset(&s, 200, &mut rng);
        assert_eq!(mre_gt10(&d, &d, 500, &mut rng).unwrap(), 0.0);
        assert_eq!(k_tvd(&d, &d, 3, 50, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn relative_error_arithmetic() {
        // Original rate 0.2 (count 200 of n = 1000), synthetic rate 0.25:
        // the query contributes |0.25 - 0.2| / 0.2 = 0.25.
        let s = schema(&[2, 2, 2, 2]);
        let mut rows_d = Vec::new();
        for i in 0..1000 {
            if i < 200 {
                rows_d.push(vec![0, 0, 0, 0]);
            } else {
                rows_d.push(vec![1, 1, 1, (i % 2) as Category]);
            }
        }
        let d = Dataset::from_rows(Arc::clone(&s), &rows_d).unwrap();
        let mut rows_s = Vec::new();
        for i in 0..1000 {
            if i < 250 {
                rows_s.push(vec![0, 0, 0, 0]);
            } else {
                rows_s.push(vec![1, 1, 1, (i % 2) as Category]);
            }
        }
        let synth = Dataset::from_rows(Arc::clone(&s), &rows_s).unwrap();
        let q = MarginalQuery::new(&s, vec![0, 1, 2], vec![0, 0, 0]).unwrap();
        let (mre, kept) = mre_over_queries(&d, &synth, &[q]).unwrap();
        assert_eq!(kept, 1);
        assert!((mre - 0.25).abs() < 1e-12);
    }

    #[test]
    fn low_support_queries_are_filtered() {
        let s = schema(&[2, 2, 2, 2]);
        // Cell (0,0,0) has exactly 10 matches: not strictly greater, so the
        // query must not qualify.
        let mut rows = Vec::new();
        for _ in 0..10 {
            rows.push(vec![0, 0, 0, 0]);
        }
        for _ in 0..90 {
            rows.push(vec![1, 1, 1, 0]);
        }
        let d = Dataset::from_rows(Arc::clone(&s), &rows).unwrap();
        let q = MarginalQuery::new(&s, vec![0, 1, 2], vec![0, 0, 0]).unwrap();
        assert!(matches!(
            mre_over_queries(&d, &d, &[q]),
            Err(UtilityError::NoQualifyingQueries)
        ));
    }

    #[test]
    fn tvd_identical_and_disjoint() {
        let s = schema(&[3, 2, 2]);
        let a = Dataset::from_rows(Arc::clone(&s), &[vec![0, 0, 0], vec![0, 0, 0]]).unwrap();
        let b = Dataset::from_rows(Arc::clone(&s), &[vec![1, 1, 1], vec![2, 1, 0]]).unwrap();
        assert_eq!(tvd_subset(&a, &a, &[0, 1]), 0.0);
        // Disjoint support on attrs {0,1}.
        assert_eq!(tvd_subset(&a, &b, &[0, 1]), 1.0);
    }

    #[test]
    fn tvd_matches_per_cell_oracle() {
        let s = schema(&[3, 4, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = random_dataset(&s, 57, &mut rng);
        let b = random_dataset(&s, 91, &mut rng);
        let attrs = [0usize, 1];
        // Oracle: naive per-row evaluation of every cell.
        let mut oracle = 0.0;
        for v0 in 0..3u16 {
            for v1 in 0..4u16 {
                let q = MarginalQuery::new(&s, attrs.to_vec(), vec![v0, v1]).unwrap();
                oracle += (eval_fraction(&q, &a) - eval_fraction(&q, &b)).abs();
            }
        }
        oracle *= 0.5;
        assert!((tvd_subset(&a, &b, &attrs) - oracle).abs() < 1e-12);
    }

    #[test]
    fn tvd_triangle_inequality() {
        let s = schema(&[3, 3, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_dataset(&s, 40, &mut rng);
            let b = random_dataset(&s, 40, &mut rng);
            let c = random_dataset(&s, 40, &mut rng);
            let attrs = [0usize, 2];
            let ab = tvd_subset(&a, &b, &attrs);
            let bc = tvd_subset(&b, &c, &attrs);
            let ac = tvd_subset(&a, &c, &attrs);
            assert!(ac <= ab + bc + 1e-12);
            assert!((0.0..=1.0).contains(&ac));
        }
    }

    #[test]
    fn k_tvd_deterministic_and_bounded() {
        let s = schema(&[3, 2, 4, 2, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a = random_dataset(&s, 100, &mut rng);
        let b = random_dataset(&s, 100, &mut rng);
        let x = k_tvd(&a, &b, 3, 5, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
        let y = k_tvd(&a, &b, 3, 5, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
        assert_eq!(x, y);
        assert!((0.0..=1.0).contains(&x));
        assert!(matches!(
            k_tvd(&a, &b, 9, 5, &mut rng),
            Err(UtilityError::Query(QueryError::KTooLarge { .. }))
        ));
    }

    #[test]
    fn nonprivate_tvd_decreases_with_m() {
        let s = schema(&[3, 3, 3, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let d = random_dataset(&s, 500, &mut rng);
        let mut small_total = 0.0;
        let mut large_total = 0.0;
        let seeds = 20;
        for i in 0..seeds {
            let mut r = ChaCha12Rng::seed_from_u64(100 + i);
            let s_small = gen_nonprivate(&d, 100, &mut r).unwrap();
            let s_large = gen_nonprivate(&d, 10_000, &mut r).unwrap();
            small_total += k_tvd(&d, &s_small, 3, 4, &mut r).unwrap();
            large_total += k_tvd(&d, &s_large, 3, 4, &mut r).unwrap();
        }
        assert!(
            small_total / seeds as f64 > large_total / seeds as f64,
            "sampling error should shrink with m"
        );
    }
}
