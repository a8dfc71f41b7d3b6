//! Batch experiment runner: a grid of (generator, synthetic data size)
//! cells, each played for a configured number of games against every
//! configured attack, with utility metrics sampled per cell. Emits raw
//! records as JSON lines, a flat CSV summary, and a full JSON report, all
//! written atomically and reproducible byte-for-byte from the master seed.

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::AttackConfig;
use crate::data::{load_csv, subsample, DataError, Dataset};
use crate::game::{
    derive_seed, run_games, score, GameConfig, GameFailure, GameRecord, GameRng, ScoreSummary,
};
use crate::sdg::{generate, GeneratorConfig, GeneratorVariant, SdgError};
use crate::utility::{utility_report, UtilityError, UtilityReport};
use rand::SeedableRng;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("records file is empty or malformed: {0}")]
    BadRecords(String),
}

fn default_games() -> usize {
    500
}
fn default_n() -> usize {
    1000
}
fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(32)
}
fn default_utility_queries() -> usize {
    1000
}
fn default_utility_subsets() -> usize {
    100
}
fn default_utility_games() -> usize {
    10
}
fn default_retries() -> usize {
    10
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Labelled CSV of the full original data.
    pub dataset: PathBuf,
    /// Schema JSON document.
    pub schema: PathBuf,
    pub generators: Vec<GeneratorVariant>,
    /// Synthetic data sizes; the grid is generators x m_values.
    pub m_values: Vec<usize>,
    pub attacks: Vec<AttackConfig>,
    #[serde(default = "default_games")]
    pub games: usize,
    /// Original dataset size sampled per game.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Random 3-way queries behind the relative-error metric.
    #[serde(default = "default_utility_queries")]
    pub utility_queries: usize,
    /// Random attribute subsets behind the total-variation metric.
    #[serde(default = "default_utility_subsets")]
    pub utility_subsets: usize,
    /// Synthetic datasets sampled per cell for utility metrics ( 0 disables).
    #[serde(default = "default_utility_games")]
    pub utility_games: usize,
    #[serde(default = "default_retries")]
    pub max_target_retries: usize,
}

impl ExperimentConfig {
    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let f = fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    /// Collects every problem before any work starts.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let mut problems = Vec::new();
        if self.generators.is_empty() {
            problems.push("at least one generator is required".to_string());
        }
        if self.m_values.is_empty() {
            problems.push("at least one synthetic data size is required".to_string());
        }
        if self.attacks.is_empty() {
            problems.push("at least one attack is required".to_string());
        }
        if self.games < 1 {
            problems.push("games must be >= 1".to_string());
        }
        if self.n < 2 {
            problems.push("n must be >= 2".to_string());
        }
        if self.workers < 1 {
            problems.push("workers must be >= 1".to_string());
        }
        for (i, g) in self.generators.iter().enumerate() {
            if let Err(e) = g.validate() {
                problems.push(format!("generator {i}: {e}"));
            }
        }
        for (i, &m) in self.m_values.iter().enumerate() {
            if m < 1 {
                problems.push(format!("m_values[{i}] must be >= 1"));
            }
        }
        if !self.dataset.exists() {
            problems.push(format!("dataset not found: {}", self.dataset.display()));
        }
        if !self.schema.exists() {
            problems.push(format!("schema not found: {}", self.schema.display()));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Config(problems))
        }
    }
}

/// One grid cell's results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub generator: String,
    pub epsilon: Option<f64>,
    pub m: usize,
    pub summary: Option<ScoreSummary>,
    pub utility: Option<UtilityReport>,
    pub failures: Vec<GameFailure>,
    pub utility_error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub generator: String,
    pub m: usize,
    pub epsilon: Option<f64>,
    /// Maximum attack accuracy across attacks on the same games.
    pub a_max: f64,
    pub mre_gt10: Option<f64>,
    pub k_tvd: Option<f64>,
    /// True when both error metrics fall below the utility threshold.
    pub utility_ok: Option<bool>,
    /// True when the maximum attack accuracy stays below the privacy threshold.
    pub privacy_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellReport>,
    pub tradeoff: Vec<TradeoffRow>,
}

impl ExperimentReport {
    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let f = fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    pub fn total_failures(&self) -> usize {
        self.cells.iter().map(|c| c.failures.len()).sum()
    }
}

/// One line of `records.jsonl`: a game record plus its grid-cell context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordLine {
    pub generator: String,
    pub m: usize,
    pub epsilon: Option<f64>,
    #[serde(flatten)]
    pub record: GameRecord,
}

/// Default privacy threshold on maximum attack accuracy.
pub const PRIVACY_THRESHOLD: f64 = 0.60;
/// Default utility threshold on both error metrics.
pub const UTILITY_THRESHOLD: f64 = 0.20;

/// Runs the whole grid and writes `records.jsonl`, `summary.csv`, and
/// `report.json` under the output directory.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let full = load_csv(&config.dataset, &config.schema)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ExperimentError::Config(vec![format!("worker pool: {e}")]))?;

    let mut cells = Vec::new();
    let mut record_lines: Vec<RecordLine> = Vec::new();
    for (gi, variant) in config.generators.iter().enumerate() {
        for (mi, &m) in config.m_values.iter().enumerate() {
            let cell_index = (gi * config.m_values.len() + mi) as u64;
            let cell_seed = derive_seed(config.master_seed, cell_index);
            let game_cfg = GameConfig {
                n: config.n,
                generator: GeneratorConfig::new(variant.clone(), m),
                attacks: config.attacks.clone(),
                games: config.games,
                master_seed: cell_seed,
                max_target_retries: config.max_target_retries,
            };
            let outcome = pool.install(|| run_games(&full, &game_cfg));
            let summary = score(&outcome.records).ok();
            let (utility, utility_error) = if config.utility_games > 0 {
                match measure_utility(config, &full, variant, m, cell_seed) {
                    Ok(u) => (Some(u), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            } else {
                (None, None)
            };
            for r in &outcome.records {
                record_lines.push(RecordLine {
                    generator: variant.name().to_string(),
                    m,
                    epsilon: variant.epsilon(),
                    record: r.clone(),
                });
            }
            cells.push(CellReport {
                generator: variant.name().to_string(),
                epsilon: variant.epsilon(),
                m,
                summary,
                utility,
                failures: outcome.failures,
                utility_error,
            });
        }
    }
    let tradeoff = tradeoff_table(&cells, PRIVACY_THRESHOLD, UTILITY_THRESHOLD);
    let report = ExperimentReport {
        config: config.clone(),
        cells,
        tradeoff,
    };

    fs::create_dir_all(&config.out_dir)?;
    write_records(&config.out_dir.join("records.jsonl"), &record_lines)?;
    write_summary_csv(&config.out_dir.join("summary.csv"), &report.cells)?;
    write_atomic(&config.out_dir.join("report.json"), |w| {
        serde_json::to_writer_pretty(w, &report).map_err(std::io::Error::other)
    })?;
    Ok(report)
}

/// Mean utility metrics over freshly generated synthetic datasets for one
/// cell, on a seed stream disjoint from the games'.
fn measure_utility(
    config: &ExperimentConfig,
    full: &Dataset,
    variant: &GeneratorVariant,
    m: usize,
    cell_seed: u64,
) -> Result<UtilityReport, UtilityFailure> {
    let mut mre_total = 0.0;
    let mut tvd_total = 0.0;
    let mut kept = 0usize;
    let mut subsets = 0usize;
    for g in 0..config.utility_games {
        let seed = derive_seed(cell_seed, 1_000_000 + g as u64);
        let mut rng = GameRng::seed_from_u64(seed);
        let d = subsample(full, config.n, &mut rng)?;
        let s = generate(&GeneratorConfig::new(variant.clone(), m), &d, &mut rng)?;
        let report = utility_report(
            &d,
            &s,
            config.utility_queries,
            config.utility_subsets,
            &mut rng,
        )?;
        mre_total += report.mre_gt10;
        tvd_total += report.k_tvd;
        kept += report.query_count;
        subsets = report.subset_count;
    }
    let runs = config.utility_games as f64;
    Ok(UtilityReport {
        mre_gt10: mre_total / runs,
        k_tvd: tvd_total / runs,
        query_count: kept / config.utility_games,
        subset_count: subsets,
    })
}

#[derive(Debug, Error)]
enum UtilityFailure {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sdg(#[from] SdgError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

/// Privacy/utility tradeoff rows with pass/fail flags at the given
/// thresholds.
pub fn tradeoff_table(
    cells: &[CellReport],
    privacy_threshold: f64,
    utility_threshold: f64,
) -> Vec<TradeoffRow> {
    cells
        .iter()
        .filter_map(|c| {
            let summary = c.summary.as_ref()?;
            let a_max = summary.max_accuracy();
            let (mre, tvd) = match &c.utility {
                Some(u) => (Some(u.mre_gt10), Some(u.k_tvd)),
                None => (None, None),
            };
            let utility_ok = match (mre, tvd) {
                (Some(m), Some(t)) => Some(m < utility_threshold && t < utility_threshold),
                _ => None,
            };
            Some(TradeoffRow {
                generator: c.generator.clone(),
                m: c.m,
                epsilon: c.epsilon,
                a_max,
                mre_gt10: mre,
                k_tvd: tvd,
                utility_ok,
                privacy_ok: a_max < privacy_threshold,
            })
        })
        .collect()
}

fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_records(path: &Path, lines: &[RecordLine]) -> Result<(), ExperimentError> {
    write_atomic(path, |w| {
        for line in lines {
            serde_json::to_writer(&mut *w, line).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

fn fmt_eps(e: Option<f64>) -> String {
    match e {
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

/// One CSV row per (cell, attack), sorted by (generator, m, epsilon, attack).
pub fn summary_csv_to_writer(
    mut w: impl Write,
    cells: &[CellReport],
) -> std::io::Result<()> {
    let mut rows: Vec<(String, usize, String, String, String)> = Vec::new();
    for c in cells {
        let (mre, tvd) = match &c.utility {
            Some(u) => (format!("{:.6}", u.mre_gt10), format!("{:.6}", u.k_tvd)),
            None => (String::new(), String::new()),
        };
        if let Some(summary) = &c.summary {
            for a in &summary.attacks {
                rows.push((
                    c.generator.clone(),
                    c.m,
                    fmt_eps(c.epsilon),
                    a.attack.clone(),
                    format!(
                        "{},{:.6},{:.6},{:.6},{},{}",
                        summary.games, a.accuracy, a.sd, a.auc, mre, tvd
                    ),
                ));
            }
        }
    }
    rows.sort();
    writeln!(
        w,
        "generator,m,epsilon,attack,games,accuracy,sd,auc,mre_gt10,k_tvd"
    )?;
    for (generator, m, eps, attack, rest) in &rows {
        writeln!(w, "{generator},{m},{eps},{attack},{rest}")?;
    }
    Ok(())
}

pub fn write_summary_csv(path: &Path, cells: &[CellReport]) -> Result<(), ExperimentError> {
    write_atomic(path, |w| summary_csv_to_writer(w, cells))
}

/// Tradeoff rows as CSV.
pub fn tradeoff_csv_to_writer(mut w: impl Write, rows: &[TradeoffRow]) -> std::io::Result<()> {
    writeln!(
        w,
        "generator,m,epsilon,a_max,mre_gt10,k_tvd,privacy_ok,utility_ok"
    )?;
    for r in rows {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let fmt_flag = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{:.6},{},{},{},{}",
            r.generator,
            r.m,
            fmt_eps(r.epsilon),
            r.a_max,
            fmt_opt(r.mre_gt10),
            fmt_opt(r.k_tvd),
            r.privacy_ok,
            fmt_flag(r.utility_ok),
        )?;
    }
    Ok(())
}

/// Reads a records.jsonl stream back.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RecordLine>, ExperimentError> {
    let f = fs::File::open(path.as_ref())?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line)
            .map_err(|e| ExperimentError::BadRecords(format!("line {}: {e}", i + 1)))?;
        out.push(parsed);
    }
    if out.is_empty() {
        return Err(ExperimentError::BadRecords("no records".into()));
    }
    Ok(out)
}

/// Re-scores a records stream, grouping lines by grid cell. Returns cells in
/// first-appearance order.
pub fn score_records(lines: &[RecordLine]) -> Vec<CellReport> {
    let mut order: Vec<(String, usize, Option<f64>)> = Vec::new();
    for l in lines {
        let key = (l.generator.clone(), l.m, l.epsilon);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(generator, m, epsilon)| {
            let records: Vec<GameRecord> = lines
                .iter()
                .filter(|l| l.generator == generator && l.m == m && l.epsilon == epsilon)
                .map(|l| l.record.clone())
                .collect();
            CellReport {
                generator,
                epsilon,
                m,
                summary: score(&records).ok(),
                utility: None,
                failures: Vec::new(),
                utility_error: None,
            }
        })
        .collect()
}
