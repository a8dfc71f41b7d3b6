//! Benchmark dataset generators: census-style and incident-log-style schemas
//! with correlated categorical attributes, for exercising the game harness
//! when no real extract is at hand.
//!
//! Rows come from a latent-class mixture: each record draws a hidden class,
//! then each attribute samples from that class's categorical distribution
//! with probability `class_strength` (and from a shared background
//! distribution otherwise). This produces realistic cross-attribute
//! association without any continuous machinery.

use std::sync::Arc;

use rand::Rng;

use crate::data::{AttributeDomain, Category, Dataset, DomainSchema};

/// 16 discrete attributes with mixed cardinalities, binary `secret` last.
pub fn acs_like_schema() -> Arc<DomainSchema> {
    let cards = [2usize, 2, 2, 3, 3, 3, 3, 4, 4, 4, 5, 5, 5, 6, 6];
    let mut attrs: Vec<AttributeDomain> = cards
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            AttributeDomain::new(
                format!("attr{:02}", i + 1),
                (0..c).map(|v| format!("v{v}")).collect(),
            )
            .unwrap()
        })
        .collect();
    attrs.push(AttributeDomain::new("secret", vec!["no".into(), "yes".into()]).unwrap());
    Arc::new(DomainSchema::new(attrs, "secret").unwrap())
}

/// 10 discrete attributes whose quasi-identifier space is large enough that
/// most rows of a thousand-record sample are unique.
pub fn fire_like_schema() -> Arc<DomainSchema> {
    let cards = [2usize, 3, 3, 4, 4, 5, 5, 6, 7];
    let mut attrs: Vec<AttributeDomain> = cards
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            AttributeDomain::new(
                format!("attr{:02}", i + 1),
                (0..c).map(|v| format!("v{v}")).collect(),
            )
            .unwrap()
        })
        .collect();
    attrs.push(AttributeDomain::new("secret", vec!["no".into(), "yes".into()]).unwrap());
    Arc::new(DomainSchema::new(attrs, "secret").unwrap())
}

/// 14 attributes, all binary: a survey-style response battery. Binary
/// domains keep the marginal-query space compact while the 13 background
/// items still make most records unique.
pub fn survey_like_schema() -> Arc<DomainSchema> {
    let mut attrs: Vec<AttributeDomain> = (0..13)
        .map(|i| {
            AttributeDomain::new(format!("item{:02}", i + 1), vec!["no".into(), "yes".into()])
                .unwrap()
        })
        .collect();
    attrs.push(AttributeDomain::new("secret", vec!["no".into(), "yes".into()]).unwrap());
    Arc::new(DomainSchema::new(attrs, "secret").unwrap())
}

/// A compact 8-attribute schema for quick experiments.
pub fn small_schema() -> Arc<DomainSchema> {
    let cards = [2usize, 3, 3, 4, 4, 5, 5];
    let mut attrs: Vec<AttributeDomain> = cards
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            AttributeDomain::new(
                format!("attr{:02}", i + 1),
                (0..c).map(|v| format!("v{v}")).collect(),
            )
            .unwrap()
        })
        .collect();
    attrs.push(AttributeDomain::new("secret", vec!["no".into(), "yes".into()]).unwrap());
    Arc::new(DomainSchema::new(attrs, "secret").unwrap())
}

/// Sampling knobs for the latent-class mixture.
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkParams {
    /// Hidden mixture components.
    pub latent_classes: usize,
    /// Probability that an attribute draws from its class distribution
    /// rather than the shared background; 0 gives fully independent columns.
    pub class_strength: f64,
    /// Log-scale spread of the random marginals; larger concentrates mass on
    /// fewer labels.
    pub marginal_skew: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            latent_classes: 5,
            class_strength: 0.5,
            marginal_skew: 5.0,
        }
    }
}

/// Draws a categorical distribution with the given log-scale skew.
fn random_simplex(card: usize, skew: f64, rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
    let mut p: Vec<f64> = (0..card).map(|_| (rng.gen::<f64>() * skew).exp()).collect();
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    p
}

fn sample_categorical(p: &[f64], rng: &mut (impl Rng + ?Sized)) -> Category {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as Category;
        }
    }
    (p.len() - 1) as Category
}

/// Latent-class mixture sample over the given schema. `class_strength` in
/// [0, 1] dials cross-attribute association from none to strong. The secret
/// attribute is always class-driven with a near-deterministic per-class
/// rate, the way real sensitive attributes track their correlates.
pub fn sample_benchmark(
    schema: &Arc<DomainSchema>,
    n: usize,
    params: &BenchmarkParams,
    rng: &mut (impl Rng + ?Sized),
) -> Dataset {
    let width = schema.width();
    let secret = schema.secret_index();
    let skew = params.marginal_skew;
    let background: Vec<Vec<f64>> = (0..width)
        .map(|a| random_simplex(schema.cardinality(a), skew, rng))
        .collect();
    let class_probs: Vec<Vec<Vec<f64>>> = (0..params.latent_classes)
        .map(|_| {
            (0..width)
                .map(|a| {
                    if a == secret {
                        // Strongly one-sided secret rate per class.
                        let p1 = if rng.gen_bool(0.5) {
                            rng.gen_range(0.03..0.15)
                        } else {
                            rng.gen_range(0.85..0.97)
                        };
                        vec![1.0 - p1, p1]
                    } else {
                        random_simplex(schema.cardinality(a), skew, rng)
                    }
                })
                .collect()
        })
        .collect();
    let weights = random_simplex(params.latent_classes, 1.0, rng);
    let mut cells = Vec::with_capacity(n * width);
    for _ in 0..n {
        let z = sample_categorical(&weights, rng) as usize;
        for a in 0..width {
            let p = if a == secret || rng.gen_bool(params.class_strength) {
                &class_probs[z][a]
            } else {
                &background[a]
            };
            cells.push(sample_categorical(p, rng));
        }
    }
    Dataset::new(Arc::clone(schema), cells, n).expect("benchmark rows conform to their schema")
}
