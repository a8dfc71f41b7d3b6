//! k-way marginal queries: definition, enumeration, sampling, and exact
//! evaluation.
//!
//! Evaluation counts matching rows with exact integer arithmetic and divides
//! once at the end, so answers are exact for any dataset that fits in memory.
//! Two evaluation paths exist: a naive per-row scan (the reference) and a
//! batched path that builds one contingency table per attribute set and reads
//! query cells out of it. The batched path is what makes attacks on synthetic
//! datasets with millions of rows tractable.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Category, Dataset, DomainSchema, QuasiIdentifierTable};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("k = {k} out of range for {d} attributes")]
    KTooLarge { k: usize, d: usize },
    #[error("attribute indices must be strictly increasing")]
    UnsortedAttrs,
    #[error("attribute index {0} out of range")]
    AttrOutOfRange(usize),
    #[error("value {value} out of range for attribute {attr}")]
    ValueOutOfRange { attr: usize, value: Category },
    #[error("attrs and values have different lengths")]
    LengthMismatch,
    #[error("query does not involve the secret attribute")]
    SecretAbsent,
    #[error("query set is empty")]
    EmptyQuerySet,
    #[error("queries in a set must share the same k")]
    MixedK,
}

/// A `k`-way marginal query: a strictly increasing attribute subset and one
/// value per attribute. Serialized as `{"attrs":[...],"values":[...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarginalQuery {
    pub attrs: Vec<usize>,
    pub values: Vec<Category>,
}

impl MarginalQuery {
    pub fn new(
        schema: &DomainSchema,
        attrs: Vec<usize>,
        values: Vec<Category>,
    ) -> Result<Self, QueryError> {
        if attrs.len() != values.len() {
            return Err(QueryError::LengthMismatch);
        }
        if attrs.is_empty() || attrs.len() > schema.width() {
            return Err(QueryError::KTooLarge {
                k: attrs.len(),
                d: schema.width(),
            });
        }
        if !attrs.windows(2).all(|w| w[0] < w[1]) {
            return Err(QueryError::UnsortedAttrs);
        }
        for (&a, &v) in attrs.iter().zip(&values) {
            if a >= schema.width() {
                return Err(QueryError::AttrOutOfRange(a));
            }
            if (v as usize) >= schema.cardinality(a) {
                return Err(QueryError::ValueOutOfRange { attr: a, value: v });
            }
        }
        Ok(Self { attrs, values })
    }

    pub fn k(&self) -> usize {
        self.attrs.len()
    }

    pub fn involves(&self, attr: usize) -> bool {
        self.attrs.binary_search(&attr).is_ok()
    }

    pub fn matches(&self, row: &[Category]) -> bool {
        self.attrs
            .iter()
            .zip(&self.values)
            .all(|(&a, &v)| row[a] == v)
    }

    /// Removes the secret attribute (and its value) from the query, yielding
    /// the parent query over quasi-identifiers only.
    pub fn drop_secret(&self, schema: &DomainSchema) -> Result<MarginalQuery, QueryError> {
        let s = schema.secret_index();
        let pos = self
            .attrs
            .iter()
            .position(|&a| a == s)
            .ok_or(QueryError::SecretAbsent)?;
        let mut attrs = self.attrs.clone();
        let mut values = self.values.clone();
        attrs.remove(pos);
        values.remove(pos);
        Ok(MarginalQuery { attrs, values })
    }

    /// The query's secret value, if the query involves the secret attribute.
    pub fn secret_value(&self, schema: &DomainSchema) -> Option<Category> {
        let s = schema.secret_index();
        self.attrs
            .iter()
            .position(|&a| a == s)
            .map(|pos| self.values[pos])
    }
}

/// A collection of queries sharing the same `k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuerySet {
    pub queries: Vec<MarginalQuery>,
    pub k: usize,
    pub includes_secret: bool,
}

impl QuerySet {
    pub fn new(queries: Vec<MarginalQuery>, includes_secret: bool) -> Result<Self, QueryError> {
        let k = queries.first().map(|q| q.k()).ok_or(QueryError::EmptyQuerySet)?;
        if queries.iter().any(|q| q.k() != k) {
            return Err(QueryError::MixedK);
        }
        Ok(Self {
            queries,
            k,
            includes_secret,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// One query per line, `{"attrs":[...],"values":[...]}`.
    pub fn write_jsonl(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for q in &self.queries {
            serde_json::to_writer(&mut w, q)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Anything that exposes rows of category indices. Lets query evaluation run
/// against both full datasets and quasi-identifier tables.
pub trait RowSource {
    fn n_rows(&self) -> usize;
    fn row(&self, i: usize) -> &[Category];
}

impl RowSource for Dataset {
    fn n_rows(&self) -> usize {
        Dataset::n_rows(self)
    }
    fn row(&self, i: usize) -> &[Category] {
        Dataset::row(self, i)
    }
}

impl RowSource for QuasiIdentifierTable {
    fn n_rows(&self) -> usize {
        QuasiIdentifierTable::n_rows(self)
    }
    fn row(&self, i: usize) -> &[Category] {
        QuasiIdentifierTable::row(self, i)
    }
}

/// Number of rows matching the query. Naive per-row scan; the reference
/// implementation that the batched evaluator is tested against.
pub fn eval_count(q: &MarginalQuery, rows: &impl RowSource) -> u64 {
    (0..rows.n_rows())
        .filter(|&i| q.matches(rows.row(i)))
        .count() as u64
}

/// Fraction of rows matching the query.
pub fn eval_fraction(q: &MarginalQuery, rows: &impl RowSource) -> f64 {
    eval_count(q, rows) as f64 / rows.n_rows() as f64
}

/// Contingency table over a fixed attribute subset: flat counts indexed in
/// mixed radix with the last attribute varying fastest.
pub struct ContingencyTable {
    pub attrs: Vec<usize>,
    cards: Vec<usize>,
    pub counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn cell_index(&self, values: &[Category]) -> usize {
        let mut idx = 0usize;
        for (pos, &v) in values.iter().enumerate() {
            idx = idx * self.cards[pos] + v as usize;
        }
        idx
    }

    pub fn count(&self, values: &[Category]) -> u64 {
        self.counts[self.cell_index(values)]
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }
}

/// Builds contingency tables for several attribute subsets in a single pass
/// over the rows.
pub fn build_tables(
    rows: &impl RowSource,
    attr_sets: &[Vec<usize>],
    schema: &DomainSchema,
) -> Vec<ContingencyTable> {
    let mut tables: Vec<ContingencyTable> = attr_sets
        .iter()
        .map(|attrs| {
            let cards: Vec<usize> = attrs.iter().map(|&a| schema.cardinality(a)).collect();
            let size = cards.iter().product();
            ContingencyTable {
                attrs: attrs.clone(),
                cards,
                counts: vec![0u64; size],
            }
        })
        .collect();
    for i in 0..rows.n_rows() {
        let row = rows.row(i);
        for t in &mut tables {
            let mut idx = 0usize;
            for (pos, &a) in t.attrs.iter().enumerate() {
                idx = idx * t.cards[pos] + row[a] as usize;
            }
            t.counts[idx] += 1;
        }
    }
    tables
}

/// Evaluates many queries at once by grouping them per attribute subset and
/// building one contingency table per group. Returns counts aligned with the
/// input order. Agrees exactly with `eval_count`.
pub fn batch_counts(queries: &[MarginalQuery], rows: &impl RowSource, schema: &DomainSchema) -> Vec<u64> {
    let mut groups: HashMap<&[usize], Vec<usize>> = HashMap::new();
    for (i, q) in queries.iter().enumerate() {
        groups.entry(&q.attrs).or_default().push(i);
    }
    let attr_sets: Vec<Vec<usize>> = groups.keys().map(|a| a.to_vec()).collect();
    let tables = build_tables(rows, &attr_sets, schema);
    let mut out = vec![0u64; queries.len()];
    for (t, attrs) in tables.iter().zip(&attr_sets) {
        for &qi in &groups[attrs.as_slice()] {
            out[qi] = t.count(&queries[qi].values);
        }
    }
    out
}

/// All `k`-way queries whose attribute set contains the secret attribute,
/// over every value combination. Enumeration order is lexicographic in
/// (attribute subset, value cell).
pub fn enumerate_secret_queries(schema: &DomainSchema, k: usize) -> Result<QuerySet, QueryError> {
    let d = schema.width();
    if k < 2 || k > d {
        return Err(QueryError::KTooLarge { k, d });
    }
    let secret = schema.secret_index();
    let mut queries = Vec::new();
    let qi_attrs: Vec<usize> = (0..secret).collect();
    for subset in combinations(&qi_attrs, k - 1) {
        let mut attrs = subset.clone();
        attrs.push(secret); // secret index is the largest, order stays sorted
        let cards: Vec<usize> = attrs.iter().map(|&a| schema.cardinality(a)).collect();
        let mut values = vec![0 as Category; attrs.len()];
        loop {
            queries.push(MarginalQuery {
                attrs: attrs.clone(),
                values: values.clone(),
            });
            // Mixed-radix increment, last position fastest.
            let mut pos = attrs.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                values[pos] += 1;
                if (values[pos] as usize) < cards[pos] {
                    break;
                }
                values[pos] = 0;
            }
            if values.iter().all(|&v| v == 0) {
                break;
            }
        }
    }
    QuerySet::new(queries, true)
}

/// All `k`-way queries over every attribute subset (secret included or not),
/// over every value combination.
pub fn enumerate_all_queries(schema: &DomainSchema, k: usize) -> Result<QuerySet, QueryError> {
    let d = schema.width();
    if k < 1 || k > d {
        return Err(QueryError::KTooLarge { k, d });
    }
    let all: Vec<usize> = (0..d).collect();
    let mut queries = Vec::new();
    for attrs in combinations(&all, k) {
        let cards: Vec<usize> = attrs.iter().map(|&a| schema.cardinality(a)).collect();
        let mut values = vec![0 as Category; k];
        loop {
            queries.push(MarginalQuery {
                attrs: attrs.clone(),
                values: values.clone(),
            });
            let mut pos = k;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                values[pos] += 1;
                if (values[pos] as usize) < cards[pos] {
                    break;
                }
                values[pos] = 0;
            }
            if values.iter().all(|&v| v == 0) {
                break;
            }
        }
    }
    QuerySet::new(queries, false)
}

/// Number of queries `enumerate_secret_queries` generates, computed without
/// enumerating.
pub fn secret_query_count(schema: &DomainSchema, k: usize) -> Result<u64, QueryError> {
    let d = schema.width();
    if k < 2 || k > d {
        return Err(QueryError::KTooLarge { k, d });
    }
    let secret = schema.secret_index();
    let qi_attrs: Vec<usize> = (0..secret).collect();
    let mut total = 0u64;
    for subset in combinations(&qi_attrs, k - 1) {
        let cells: u64 = subset
            .iter()
            .map(|&a| schema.cardinality(a) as u64)
            .product();
        total += 2 * cells;
    }
    Ok(total)
}

/// All size-`r` subsets of `items`, in lexicographic order.
pub fn combinations(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if r > items.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // Advance the combination.
        let mut pos = r;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if idx[pos] != pos + items.len() - r {
                break;
            }
            if pos == 0 {
                return out;
            }
        }
        idx[pos] += 1;
        for j in pos + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Conditional answer for a secret-involving query: the within-parent secret
/// rate on the synthetic data, rescaled by the parent rate on the known
/// quasi-identifiers. `None` when the parent has no support in `s`.
pub fn conditional_answer(
    q: &MarginalQuery,
    s: &Dataset,
    x: &QuasiIdentifierTable,
) -> Result<Option<f64>, QueryError> {
    let parent = q.drop_secret(s.schema())?;
    let c_q = eval_count(q, s);
    let c_parent_s = eval_count(&parent, s);
    if c_parent_s == 0 {
        return Ok(None);
    }
    let c_parent_x = eval_count(&parent, x);
    let ratio = c_q as f64 / c_parent_s as f64;
    Ok(Some(ratio * (c_parent_x as f64 / x.n_rows() as f64)))
}

/// Uniform sample of `count` queries without replacement; returns the whole
/// set when `count >= len`.
pub fn sample_queries(qs: &QuerySet, count: usize, rng: &mut (impl Rng + ?Sized)) -> QuerySet {
    if count >= qs.len() {
        return qs.clone();
    }
    let idx = rand::seq::index::sample(rng, qs.len(), count);
    let mut picked: Vec<usize> = idx.into_iter().collect();
    picked.sort_unstable();
    QuerySet {
        queries: picked.iter().map(|&i| qs.queries[i].clone()).collect(),
        k: qs.k,
        includes_secret: qs.includes_secret,
    }
}
