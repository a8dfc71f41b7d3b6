//! Attribute-inference attacks. Every attack sees exactly the adversary's
//! knowledge from the privacy game -- the synthetic dataset, the target's
//! quasi-identifiers, and the quasi-identifier table -- and nothing else;
//! the trait signature is what enforces that boundary.

mod baselines;
mod recon;

pub use baselines::{collapse_by_qi_mode, dcr_attack, ml_attack, nb_fit, CategoricalNb};
pub use recon::{
    build_problem, build_problem_from_queries, decode, recon_attack, solve, QueryMode,
    ReconstructionConfig, ReconstructionProblem, ReconstructionSolution,
};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Category, Dataset, QuasiIdentifierTable};
use crate::lp::LpError;
use crate::query::QueryError;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("no usable queries remain after filtering")]
    NoQueries,
    #[error("target quasi-identifiers not found in the table")]
    TargetNotFound,
    #[error("synthetic and original data use different schemas")]
    SchemaMismatch,
    #[error("attack requires a nonempty synthetic dataset")]
    EmptyDataset,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// One attack's output for one game: the guessed secret bit and a
/// continuous score in [0, 1] usable for ROC analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackGuess {
    pub guess: u8,
    pub score: f64,
}

/// The adversary interface: synthetic data, target quasi-identifiers, and
/// the full quasi-identifier table. Secrets never cross this boundary.
pub trait Attack: Sync {
    fn name(&self) -> String;
    fn run(
        &self,
        s: &Dataset,
        x_u: &[Category],
        x: &QuasiIdentifierTable,
        rng: &mut dyn RngCore,
    ) -> Result<AttackGuess, AttackError>;
}

fn default_alpha() -> f64 {
    1.0
}

/// Configurable attack selection for experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "attack")]
pub enum AttackConfig {
    Recon(ReconstructionConfig),
    Dcr,
    Ml {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Fair-coin guesser; the accuracy floor any attack must beat.
    RandomGuess,
}

impl Attack for AttackConfig {
    fn name(&self) -> String {
        match self {
            AttackConfig::Recon(cfg) => format!(
                "recon-k{}-{}",
                cfg.k,
                match cfg.mode {
                    QueryMode::Marginal => "marginal",
                    QueryMode::Conditional => "conditional",
                }
            ),
            AttackConfig::Dcr => "dcr".into(),
            AttackConfig::Ml { .. } => "ml-nb".into(),
            AttackConfig::RandomGuess => "random".into(),
        }
    }

    fn run(
        &self,
        s: &Dataset,
        x_u: &[Category],
        x: &QuasiIdentifierTable,
        rng: &mut dyn RngCore,
    ) -> Result<AttackGuess, AttackError> {
        match self {
            AttackConfig::Recon(cfg) => recon_attack(s, x_u, x, cfg, rng),
            AttackConfig::Dcr => dcr_attack(s, x_u, rng),
            AttackConfig::Ml { alpha } => ml_attack(s, x_u, *alpha),
            AttackConfig::RandomGuess => {
                let score: f64 = rng.gen();
                Ok(AttackGuess {
                    guess: u8::from(score > 0.5),
                    score,
                })
            }
        }
    }
}
