//! Synthetic data generators spanning three paradigms: resampling baselines
//! (NonPrivate, IndHist), Bayesian networks (BayNet and its differentially
//! private variant PrivBayes), and relaxed-projection query release (Rap and
//! RapDp).

mod baseline;
mod bayes;
mod rap;

pub use baseline::{gen_indhist, gen_nonprivate};
pub use bayes::{fit_bayes_net, sample_bayes_net, BayesNetModel, Cpt};
pub use rap::{
    rap_dp_fit, rap_dp_fit_traced, rap_fit, round_relaxed, RapDpParams, RapDpTrace, RapOptimizer,
    RelaxedDataset,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::dp::DpError;
use crate::query::{enumerate_all_queries, QueryError};

#[derive(Debug, Error)]
pub enum SdgError {
    #[error("network degree {degree} too large for {d} attributes")]
    DegreeTooLarge { degree: usize, d: usize },
    #[error("privacy budget cannot cover {events} select/measure events: {reason}")]
    BudgetExhausted { events: usize, reason: String },
    #[error("optimization diverged to a non-finite loss (try a smaller learning rate)")]
    NonFiniteLoss,
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

pub fn default_degree() -> usize {
    3
}
pub fn default_iterations() -> usize {
    2000
}
pub fn default_relaxed_rows() -> usize {
    1000
}
pub fn default_learning_rate() -> f64 {
    0.1
}
pub fn default_delta() -> f64 {
    1e-6
}
pub fn default_rounds() -> usize {
    10
}
pub fn default_queries_per_round() -> usize {
    50
}
pub fn default_select_budget_fraction() -> f64 {
    0.5
}

/// Which algorithm generates the synthetic data, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum GeneratorVariant {
    NonPrivate,
    IndHist,
    BayNet {
        #[serde(default = "default_degree")]
        degree: usize,
    },
    PrivBayes {
        #[serde(default = "default_degree")]
        degree: usize,
        epsilon: f64,
    },
    Rap {
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_relaxed_rows")]
        relaxed_rows: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
    },
    RapDp {
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_relaxed_rows")]
        relaxed_rows: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        epsilon: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_queries_per_round")]
        queries_per_round: usize,
        #[serde(default = "default_select_budget_fraction")]
        select_budget_fraction: f64,
    },
}

impl GeneratorVariant {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorVariant::NonPrivate => "NonPrivate",
            GeneratorVariant::IndHist => "IndHist",
            GeneratorVariant::BayNet { .. } => "BayNet",
            GeneratorVariant::PrivBayes { .. } => "PrivBayes",
            GeneratorVariant::Rap { .. } => "RAP",
            GeneratorVariant::RapDp { .. } => "RAP-DP",
        }
    }

    /// Privacy budget, for differentially private variants.
    pub fn epsilon(&self) -> Option<f64> {
        match self {
            GeneratorVariant::PrivBayes { epsilon, .. }
            | GeneratorVariant::RapDp { epsilon, .. } => Some(*epsilon),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SdgError> {
        let bad = |msg: String| Err(SdgError::InvalidConfig(msg));
        match *self {
            GeneratorVariant::NonPrivate | GeneratorVariant::IndHist => Ok(()),
            GeneratorVariant::BayNet { degree } => {
                if degree < 1 {
                    return bad("BayNet degree must be >= 1".into());
                }
                Ok(())
            }
            GeneratorVariant::PrivBayes { degree, epsilon } => {
                if degree < 1 {
                    return bad("PrivBayes degree must be >= 1".into());
                }
                if !(epsilon > 0.0) {
                    return bad(format!("PrivBayes epsilon must be > 0, got {epsilon}"));
                }
                Ok(())
            }
            GeneratorVariant::Rap {
                iterations,
                relaxed_rows,
                learning_rate,
            } => {
                if iterations < 1 || relaxed_rows < 1 {
                    return bad("RAP iterations and relaxed_rows must be >= 1".into());
                }
                if !(learning_rate > 0.0) {
                    return bad("RAP learning rate must be > 0".into());
                }
                Ok(())
            }
            GeneratorVariant::RapDp {
                iterations,
                relaxed_rows,
                learning_rate,
                epsilon,
                delta,
                rounds,
                queries_per_round,
                select_budget_fraction,
            } => {
                if iterations < 1 || relaxed_rows < 1 || rounds < 1 || queries_per_round < 1 {
                    return bad("RAP-DP iteration/row/round counts must be >= 1".into());
                }
                if !(learning_rate > 0.0) {
                    return bad("RAP-DP learning rate must be > 0".into());
                }
                if !(epsilon > 0.0) {
                    return bad(format!("RAP-DP epsilon must be > 0, got {epsilon}"));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return bad(format!("RAP-DP delta must be in (0,1), got {delta}"));
                }
                if !(select_budget_fraction > 0.0 && select_budget_fraction < 1.0) {
                    return bad(format!(
                        "RAP-DP select budget fraction must be in (0,1), got {select_budget_fraction}"
                    ));
                }
                Ok(())
            }
        }
    }
}

/// A generator variant plus the synthetic data size to emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(flatten)]
    pub variant: GeneratorVariant,
    pub m: usize,
}

impl GeneratorConfig {
    pub fn new(variant: GeneratorVariant, m: usize) -> Self {
        Self { variant, m }
    }

    pub fn validate(&self) -> Result<(), SdgError> {
        if self.m < 1 {
            return Err(SdgError::InvalidConfig("m must be >= 1".into()));
        }
        self.variant.validate()
    }
}

/// Runs the configured generator on an original dataset. Deterministic for a
/// given random source.
pub fn generate(
    cfg: &GeneratorConfig,
    d: &Dataset,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Dataset, SdgError> {
    cfg.validate()?;
    let m = cfg.m;
    match cfg.variant {
        GeneratorVariant::NonPrivate => gen_nonprivate(d, m, rng),
        GeneratorVariant::IndHist => gen_indhist(d, m, rng),
        GeneratorVariant::BayNet { degree } => {
            let model = fit_bayes_net(d, degree, None, rng)?;
            sample_bayes_net(&model, m, rng)
        }
        GeneratorVariant::PrivBayes { degree, epsilon } => {
            let model = fit_bayes_net(d, degree, Some(epsilon), rng)?;
            sample_bayes_net(&model, m, rng)
        }
        GeneratorVariant::Rap {
            iterations,
            relaxed_rows,
            learning_rate,
        } => {
            let queries = enumerate_all_queries(d.schema(), 3.min(d.width()))?;
            let relaxed = rap_fit(d, &queries, iterations, relaxed_rows, learning_rate, rng)?;
            round_relaxed(&relaxed, m, rng)
        }
        GeneratorVariant::RapDp {
            iterations,
            relaxed_rows,
            learning_rate,
            epsilon,
            delta,
            rounds,
            queries_per_round,
            select_budget_fraction,
        } => {
            let queries = enumerate_all_queries(d.schema(), 3.min(d.width()))?;
            let relaxed = rap_dp_fit(
                d,
                &queries,
                rap::RapDpParams {
                    iterations,
                    relaxed_rows,
                    learning_rate,
                    epsilon,
                    delta,
                    rounds,
                    queries_per_round,
                    select_budget_fraction,
                },
                rng,
            )?;
            round_relaxed(&relaxed, m, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeDomain, Category, DomainSchema};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::sync::Arc;

    fn small_dataset() -> Dataset {
        let attrs = vec![
            AttributeDomain::new("a", vec!["0".into(), "1".into(), "2".into()]).unwrap(),
            AttributeDomain::new("b", vec!["x".into(), "y".into()]).unwrap(),
            AttributeDomain::new("s", vec!["0".into(), "1".into()]).unwrap(),
        ];
        let schema = Arc::new(DomainSchema::new(attrs, "s").unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let rows: Vec<Vec<Category>> = (0..60)
            .map(|_| {
                use rand::Rng;
                vec![
                    rng.gen_range(0..3) as Category,
                    rng.gen_range(0..2) as Category,
                    rng.gen_range(0..2) as Category,
                ]
            })
            .collect();
        Dataset::from_rows(schema, &rows).unwrap()
    }

    #[test]
    fn all_variants_emit_schema_conformant_rows() {
        let d = small_dataset();
        let variants = vec![
            GeneratorVariant::NonPrivate,
            GeneratorVariant::IndHist,
            GeneratorVariant::BayNet { degree: 2 },
            GeneratorVariant::PrivBayes {
                degree: 2,
                epsilon: 1.0,
            },
            GeneratorVariant::Rap {
                iterations: 30,
                relaxed_rows: 20,
                learning_rate: 0.1,
            },
            GeneratorVariant::RapDp {
                iterations: 30,
                relaxed_rows: 20,
                learning_rate: 0.1,
                epsilon: 1.0,
                delta: 1e-6,
                rounds: 2,
                queries_per_round: 3,
                select_budget_fraction: 0.5,
            },
        ];
        for v in variants {
            let cfg = GeneratorConfig::new(v.clone(), 40);
            let mut rng = ChaCha12Rng::seed_from_u64(7);
            let s = generate(&cfg, &d, &mut rng).unwrap();
            assert_eq!(s.n_rows(), 40, "{}", v.name());
            assert_eq!(s.schema(), d.schema());
            // Dataset construction validates every cell against the schema.
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let d = small_dataset();
        for v in [
            GeneratorVariant::NonPrivate,
            GeneratorVariant::IndHist,
            GeneratorVariant::BayNet { degree: 2 },
            GeneratorVariant::PrivBayes {
                degree: 2,
                epsilon: 5.0,
            },
            GeneratorVariant::Rap {
                iterations: 20,
                relaxed_rows: 10,
                learning_rate: 0.1,
            },
        ] {
            let cfg = GeneratorConfig::new(v, 25);
            let a = generate(&cfg, &d, &mut ChaCha12Rng::seed_from_u64(42)).unwrap();
            let b = generate(&cfg, &d, &mut ChaCha12Rng::seed_from_u64(42)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn thousand_random_configs_emit_conformant_rows() {
        use rand::Rng;
        let d = small_dataset();
        let mut rng = ChaCha12Rng::seed_from_u64(1000);
        for trial in 0..1000 {
            let variant = match rng.gen_range(0..6) {
                0 => GeneratorVariant::NonPrivate,
                1 => GeneratorVariant::IndHist,
                2 => GeneratorVariant::BayNet {
                    degree: rng.gen_range(1..3),
                },
                3 => GeneratorVariant::PrivBayes {
                    degree: rng.gen_range(1..3),
                    epsilon: rng.gen_range(0.1..50.0),
                },
                4 => GeneratorVariant::Rap {
                    iterations: rng.gen_range(1..8),
                    relaxed_rows: rng.gen_range(1..12),
                    learning_rate: rng.gen_range(0.01..1.0),
                },
                _ => GeneratorVariant::RapDp {
                    iterations: rng.gen_range(1..8),
                    relaxed_rows: rng.gen_range(1..12),
                    learning_rate: rng.gen_range(0.01..1.0),
                    epsilon: rng.gen_range(0.1..50.0),
                    delta: 1e-6,
                    rounds: 1,
                    queries_per_round: rng.gen_range(1..4),
                    select_budget_fraction: rng.gen_range(0.2..0.8),
                },
            };
            let m = rng.gen_range(1..40);
            let cfg = GeneratorConfig::new(variant, m);
            let mut gen_rng = ChaCha12Rng::seed_from_u64(trial);
            // Dataset construction re-validates every cell against the schema.
            let s = generate(&cfg, &d, &mut gen_rng).unwrap();
            assert_eq!(s.n_rows(), m);
        }
    }

    #[test]
    fn more_privacy_budget_means_less_query_error() {
        // PrivBayes and RAP-DP: average 1-way marginal error at a small
        // epsilon should exceed the error at a large one across seeds.
        use crate::query::{batch_counts, enumerate_all_queries};
        let d = small_dataset();
        let queries = enumerate_all_queries(d.schema(), 1).unwrap();
        let n = d.n_rows() as f64;
        let exact: Vec<f64> = batch_counts(&queries.queries, &d, d.schema())
            .into_iter()
            .map(|c| c as f64 / n)
            .collect();
        let mean_err = |variant: &dyn Fn(f64) -> GeneratorVariant, eps: f64| -> f64 {
            let mut total = 0.0;
            let seeds = 50;
            for seed in 0..seeds {
                let cfg = GeneratorConfig::new(variant(eps), 400);
                let mut rng = ChaCha12Rng::seed_from_u64(9000 + seed);
                let s = generate(&cfg, &d, &mut rng).unwrap();
                let counts = batch_counts(&queries.queries, &s, s.schema());
                let m = s.n_rows() as f64;
                total += counts
                    .iter()
                    .zip(&exact)
                    .map(|(&c, &e)| (c as f64 / m - e).abs())
                    .sum::<f64>()
                    / exact.len() as f64;
            }
            total / seeds as f64
        };
        let privbayes =
            |eps: f64| GeneratorVariant::PrivBayes { degree: 1, epsilon: eps };
        assert!(
            mean_err(&privbayes, 0.2) > mean_err(&privbayes, 100.0),
            "PrivBayes error should shrink with epsilon"
        );
        let rapdp = |eps: f64| GeneratorVariant::RapDp {
            iterations: 60,
            relaxed_rows: 20,
            learning_rate: 1.0,
            epsilon: eps,
            delta: 1e-6,
            rounds: 2,
            queries_per_round: 4,
            select_budget_fraction: 0.5,
        };
        assert!(
            mean_err(&rapdp, 0.2) > mean_err(&rapdp, 100.0),
            "RAP-DP error should shrink with epsilon"
        );
    }

    #[test]
    fn config_validation_catches_bad_params() {
        assert!(GeneratorVariant::PrivBayes {
            degree: 3,
            epsilon: 0.0
        }
        .validate()
        .is_err());
        assert!(GeneratorVariant::Rap {
            iterations: 0,
            relaxed_rows: 10,
            learning_rate: 0.1
        }
        .validate()
        .is_err());
        assert!(GeneratorVariant::RapDp {
            iterations: 10,
            relaxed_rows: 10,
            learning_rate: 0.1,
            epsilon: 1.0,
            delta: 1.5,
            rounds: 2,
            queries_per_round: 2,
            select_budget_fraction: 0.5
        }
        .validate()
        .is_err());
        assert!(GeneratorConfig::new(GeneratorVariant::NonPrivate, 0)
            .validate()
            .is_err());
    }

    #[test]
    fn generator_config_json_round_trip() {
        let cfg = GeneratorConfig::new(
            GeneratorVariant::PrivBayes {
                degree: 3,
                epsilon: 10.0,
            },
            1000,
        );
        let s = serde_json::to_string(&cfg).unwrap();
        let back: GeneratorConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
        // Defaults fill in when omitted.
        let parsed: GeneratorConfig =
            serde_json::from_str(r#"{"variant":"BayNet","m":100}"#).unwrap();
        assert_eq!(
            parsed.variant,
            GeneratorVariant::BayNet { degree: 3 }
        );
    }
}
