//! The attribute-inference privacy game.
//!
//! One game: sample an original dataset, pick a target whose
//! quasi-identifiers are unique, replace the target's secret bit with a fair
//! coin, generate synthetic data from the result, and let each configured
//! attack guess the coin from the synthetic data, the target's
//! quasi-identifiers, and the quasi-identifier table. The coin flip removes
//! any base-rate shortcut: an adversary who ignores the synthetic data
//! cannot beat 50%.
//!
//! Games are independent and seeded individually from the master seed, so
//! batches parallelize freely and adding games never perturbs earlier ones.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{Attack, AttackConfig, AttackError};
use crate::data::{split_secret, subsample, unique_qi_indices, DataError, Dataset};
use crate::sdg::{generate, GeneratorConfig, SdgError};
use crate::stats::{auc, roc_curve};

/// The deterministic generator behind every seeded stream in the harness.
pub type GameRng = ChaCha12Rng;

/// Splittable seed derivation: mixes a parent seed with a stream index so
/// sibling streams are independent and stable.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("no quasi-identifier-unique target found after {attempts} subsamples")]
    NoUniqueTarget { attempts: usize },
    #[error("attack `{attack}` failed: {source}")]
    Attack {
        attack: String,
        source: AttackError,
    },
    #[error("no records to score")]
    EmptyRecords,
    #[error("records disagree on the configured attacks")]
    InconsistentRecords,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sdg(#[from] SdgError),
}

fn default_n() -> usize {
    1000
}
fn default_games() -> usize {
    500
}
fn default_retries() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Original dataset size sampled per game.
    #[serde(default = "default_n")]
    pub n: usize,
    pub generator: GeneratorConfig,
    pub attacks: Vec<AttackConfig>,
    #[serde(default = "default_games")]
    pub games: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Fresh subsamples drawn before a game is declared failed for lack of a
    /// unique target.
    #[serde(default = "default_retries")]
    pub max_target_retries: usize,
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), SdgError> {
        if self.n < 2 {
            return Err(SdgError::InvalidConfig("game n must be >= 2".into()));
        }
        if self.games < 1 {
            return Err(SdgError::InvalidConfig("games must be >= 1".into()));
        }
        self.generator.validate()
    }
}

/// One attack's result within one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub attack: String,
    pub guess: u8,
    pub score: f64,
}

/// Everything observable about one finished game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_index: usize,
    pub target_row: usize,
    pub true_bit: u8,
    pub outcomes: Vec<AttackOutcome>,
    pub generator_millis: u64,
}

/// A finished game plus the challenger-side datasets, for diagnostics and
/// utility measurement. Attacks never see these; they are produced after the
/// adversary calls return.
pub struct GameTranscript {
    pub record: GameRecord,
    pub original: Dataset,
    pub target_dataset: Dataset,
    pub synthetic: Dataset,
}

/// Anything that can stand in for the synthetic data generator in a game.
pub trait SyntheticGenerator: Sync {
    fn generate_for_game(&self, d: &Dataset, rng: &mut dyn RngCore)
        -> Result<Dataset, SdgError>;
}

impl SyntheticGenerator for GeneratorConfig {
    fn generate_for_game(
        &self,
        d: &Dataset,
        rng: &mut dyn RngCore,
    ) -> Result<Dataset, SdgError> {
        generate(self, d, rng)
    }
}

/// Runs one game with explicit generator and attack implementations.
pub fn play_one_with(
    full: &Dataset,
    n: usize,
    generator: &dyn SyntheticGenerator,
    attacks: &[&dyn Attack],
    max_target_retries: usize,
    game_index: usize,
    game_seed: u64,
) -> Result<GameTranscript, GameError> {
    for attempt in 0..=max_target_retries {
        // Step 1: sample the original dataset.
        let mut rng_sample = GameRng::seed_from_u64(derive_seed(game_seed, 1000 + attempt as u64));
        let original = subsample(full, n, &mut rng_sample)?;
        let (x, y) = split_secret(&original);

        // Step 2: a uniformly random target among rows with unique
        // quasi-identifiers; resample if none exist.
        let unique = unique_qi_indices(&x);
        if unique.is_empty() {
            continue;
        }
        let mut rng_target = GameRng::seed_from_u64(derive_seed(game_seed, 2));
        let u = unique[rng_target.gen_range(0..unique.len())];

        // Step 3: randomize the target's secret bit.
        let coin = u8::from(rng_target.gen::<bool>());
        let mut y_prime = y;
        y_prime[u] = coin;
        let target_dataset = Dataset::from_parts(&x, &y_prime)?;

        // Step 4: synthesize from the target dataset.
        let mut rng_gen = GameRng::seed_from_u64(derive_seed(game_seed, 3));
        let started = Instant::now();
        let synthetic = generator.generate_for_game(&target_dataset, &mut rng_gen)?;
        let generator_millis = started.elapsed().as_millis() as u64;

        // Steps 5-6: each attack sees only (S, x_u, X).
        let x_u = x.row(u).to_vec();
        let mut outcomes = Vec::with_capacity(attacks.len());
        for (i, attack) in attacks.iter().enumerate() {
            let mut rng_attack = GameRng::seed_from_u64(derive_seed(game_seed, 100 + i as u64));
            let guess = attack
                .run(&synthetic, &x_u, &x, &mut rng_attack)
                .map_err(|source| GameError::Attack {
                    attack: attack.name(),
                    source,
                })?;
            outcomes.push(AttackOutcome {
                attack: attack.name(),
                guess: guess.guess,
                score: guess.score,
            });
        }
        return Ok(GameTranscript {
            record: GameRecord {
                game_index,
                target_row: u,
                true_bit: coin,
                outcomes,
                generator_millis,
            },
            original,
            target_dataset,
            synthetic,
        });
    }
    Err(GameError::NoUniqueTarget {
        attempts: max_target_retries + 1,
    })
}

/// Runs one configured game.
pub fn play_one(full: &Dataset, cfg: &GameConfig, game_seed: u64) -> Result<GameRecord, GameError> {
    let attacks: Vec<&dyn Attack> = cfg.attacks.iter().map(|a| a as &dyn Attack).collect();
    play_one_with(
        full,
        cfg.n,
        &cfg.generator,
        &attacks,
        cfg.max_target_retries,
        0,
        game_seed,
    )
    .map(|t| t.record)
}

/// A failed game, kept out of the statistics but reported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameFailure {
    pub game_index: usize,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct GameRunOutcome {
    pub records: Vec<GameRecord>,
    pub failures: Vec<GameFailure>,
}

/// Runs the configured batch in parallel. Per-game seeds derive from the
/// master seed and game index, so results are independent of scheduling and
/// of the total game count.
pub fn run_games(full: &Dataset, cfg: &GameConfig) -> GameRunOutcome {
    let attacks: Vec<&dyn Attack> = cfg.attacks.iter().map(|a| a as &dyn Attack).collect();
    let mut results: Vec<(usize, Result<GameRecord, GameError>)> = (0..cfg.games)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.master_seed, i as u64);
            let result = play_one_with(
                full,
                cfg.n,
                &cfg.generator,
                &attacks,
                cfg.max_target_retries,
                i,
                seed,
            )
            .map(|t| t.record);
            (i, result)
        })
        .collect();
    results.sort_by_key(|(i, _)| *i);
    let mut outcome = GameRunOutcome::default();
    for (i, r) in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(e) => outcome.failures.push(GameFailure {
                game_index: i,
                error: e.to_string(),
            }),
        }
    }
    outcome
}

/// Per-attack aggregate over a batch of games.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackScore {
    pub attack: String,
    /// Fraction of games where the guess equals the randomized bit.
    pub accuracy: f64,
    /// Sample standard deviation of the per-game win indicator.
    pub sd: f64,
    pub auc: f64,
    /// ROC points (false positive rate, true positive rate).
    pub roc: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub games: usize,
    pub attacks: Vec<AttackScore>,
}

impl ScoreSummary {
    /// Maximum accuracy across attacks, computed on the same record set.
    pub fn max_accuracy(&self) -> f64 {
        self.attacks.iter().map(|a| a.accuracy).fold(0.0, f64::max)
    }

    pub fn attack(&self, name: &str) -> Option<&AttackScore> {
        self.attacks.iter().find(|a| a.attack == name)
    }
}

/// Accuracy, standard deviation, and ROC/AUC per attack.
pub fn score(records: &[GameRecord]) -> Result<ScoreSummary, GameError> {
    let first = records.first().ok_or(GameError::EmptyRecords)?;
    let names: Vec<String> = first.outcomes.iter().map(|o| o.attack.clone()).collect();
    let games = records.len();
    let mut attacks = Vec::with_capacity(names.len());
    for (pos, name) in names.iter().enumerate() {
        let mut wins = 0usize;
        let mut scores = Vec::with_capacity(games);
        let mut labels = Vec::with_capacity(games);
        for r in records {
            let o = r
                .outcomes
                .get(pos)
                .filter(|o| &o.attack == name)
                .ok_or(GameError::InconsistentRecords)?;
            if o.guess == r.true_bit {
                wins += 1;
            }
            scores.push(o.score);
            labels.push(r.true_bit);
        }
        let accuracy = wins as f64 / games as f64;
        let sd = if games > 1 {
            // Bernoulli win indicator, n-1 denominator.
            let mean = accuracy;
            (records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let win = f64::from(records[i].outcomes[pos].guess == r.true_bit);
                    (win - mean) * (win - mean)
                })
                .sum::<f64>()
                / (games as f64 - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let roc = roc_curve(&scores, &labels);
        attacks.push(AttackScore {
            attack: name.clone(),
            accuracy,
            sd,
            auc: auc(&scores, &labels),
            roc,
        });
    }
    Ok(ScoreSummary { games, attacks })
}
