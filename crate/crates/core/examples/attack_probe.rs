use std::time::Instant;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use synth_audit::attack::{AttackConfig, QueryMode, ReconstructionConfig};
use synth_audit::benchdata::{sample_benchmark, survey_like_schema, BenchmarkParams};
use synth_audit::game::{run_games, score, GameConfig};
use synth_audit::sdg::{GeneratorConfig, GeneratorVariant};

fn main() {
    let schema = survey_like_schema();
    let params = BenchmarkParams { class_strength: 0.8, marginal_skew: 2.0, ..Default::default() };
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let full = sample_benchmark(&schema, 10_000, &params, &mut rng);
    let recon = AttackConfig::Recon(ReconstructionConfig { k: 3, mode: QueryMode::Conditional, cap: 100_000 });
    for (n, rounds, k, frac) in [
        (300usize, 3usize, 14usize, 0.1f64),
        (300, 3, 20, 0.1),
        (300, 2, 12, 0.1),
        (300, 5, 20, 0.5),
    ] {
        let mut accs = Vec::new();
        for eps in [1.0f64, 100.0] {
            let cfg = GameConfig {
                n,
                generator: GeneratorConfig::new(GeneratorVariant::RapDp {
                    iterations: 1500, relaxed_rows: 300, learning_rate: 3.0,
                    epsilon: eps, delta: 1e-6, rounds, queries_per_round: k,
                    select_budget_fraction: frac,
                }, 1_000_000),
                attacks: vec![recon.clone()],
                games: 30,
                master_seed: 17,
                max_target_retries: 10,
            };
            let t0 = Instant::now();
            let out = run_games(&full, &cfg);
            let s = score(&out.records).unwrap();
            accs.push((s.attacks[0].accuracy, t0.elapsed().as_secs_f64(), out.failures.len()));
        }
        println!(
            "n={n} R={rounds} K={k} frac={frac}: eps1={:.2} eps100={:.2} gap={:+.2} [{:.0}+{:.0}s f{}{}]",
            accs[0].0, accs[1].0, accs[1].0 - accs[0].0, accs[0].1, accs[1].1, accs[0].2, accs[1].2
        );
    }
}
