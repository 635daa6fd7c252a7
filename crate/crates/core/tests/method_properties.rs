use uqbench::methods::{fit_bnn_vi, fit_ensemble, fit_mc_dropout, EnsembleConfig, ViConfig};
use uqbench::network::{Architecture, OptimizerConfig, PriorSpec};
use uqbench::rng::rng_from_seed;
use uqbench::simulator::{simulate, Dataset, TccConfig};
use uqbench::{MethodTag, ProbabilitySampleSet};

fn data(n: usize) -> Dataset {
    simulate(&TccConfig { seed: 12, ..TccConfig::default() }, n).unwrap()
}

fn quick_opt() -> OptimizerConfig {
    OptimizerConfig { epochs: 300, ..OptimizerConfig::default() }
}

fn eval_points() -> Vec<[f64; 2]> {
    (0..25).map(|i| [(i % 5) as f64 - 2.0, (i / 5) as f64 - 2.0]).collect()
}

fn dropout(rate: f64, seed: u64) -> ProbabilitySampleSet {
    let cfg = EnsembleConfig { members: 20, resample: false, dropout_rate: rate };
    let arch = Architecture::default();
    fit_mc_dropout(&arch, &data(80), &PriorSpec::default(), &cfg, &quick_opt(), &eval_points(), &mut rng_from_seed(seed))
        .unwrap()
}

#[test]
fn deep_ensemble_members_start_from_distinct_values() {
    let cfg = EnsembleConfig { members: 2, resample: false, dropout_rate: 0.0 };
    let set = fit_ensemble(
        &Architecture::default(),
        &data(60),
        &PriorSpec::default(),
        &cfg,
        &quick_opt(),
        &eval_points(),
        &mut rng_from_seed(1),
    )
    .unwrap();
    assert_eq!(set.method, MethodTag::DeepEnsemble);
    assert_eq!(set.num_draws(), 2);
    assert_ne!(set.row(0), set.row(1));
}

#[test]
fn bootstrap_of_a_single_point_trains_identical_members() {
    let one = data(1);
    let cfg = EnsembleConfig { members: 3, resample: true, dropout_rate: 0.0 };
    let set = fit_ensemble(
        &Architecture::default(),
        &one,
        &PriorSpec::default(),
        &cfg,
        &OptimizerConfig { epochs: 50, ..OptimizerConfig::default() },
        &eval_points(),
        &mut rng_from_seed(2),
    )
    .unwrap();
    assert_eq!(set.method, MethodTag::Bootstrap);
    assert_eq!(set.num_draws(), 3);
}

#[test]
fn ensemble_is_reproducible_per_seed() {
    let cfg = EnsembleConfig { members: 3, resample: true, dropout_rate: 0.0 };
    let run = |seed| {
        fit_ensemble(&Architecture::default(), &data(60), &PriorSpec::default(), &cfg, &quick_opt(), &eval_points(), &mut rng_from_seed(seed))
            .unwrap()
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn vanishing_dropout_rate_gives_identical_passes() {
    let set = dropout(1e-9, 3);
    for s in 1..set.num_draws() {
        for (a, b) in set.row(0).iter().zip(set.row(s)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn dropout_is_deterministic_given_rng() {
    assert_eq!(dropout(0.2, 6), dropout(0.2, 6));
}

#[test]
fn half_dropout_varies_at_every_unsaturated_point() {
    let set = dropout(0.5, 7);
    for j in 0..set.num_points() {
        let col = set.column(j);
        let saturated = col.iter().all(|&p| !(1e-9..=1.0 - 1e-9).contains(&p));
        if !saturated {
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|p| (p - m) * (p - m)).sum::<f64>();
            assert!(var > 0.0, "point {j} has zero spread");
        }
    }
}

#[test]
fn vi_with_one_step_still_returns_valid_samples() {
    let cfg = ViConfig { steps: 1, predictive_draws: 5, ..ViConfig::default() };
    let set = fit_bnn_vi(&Architecture::default(), &data(40), &PriorSpec::default(), &cfg, &eval_points(), &mut rng_from_seed(9))
        .unwrap();
    assert_eq!(set.num_draws(), 5);
    assert!(set.meta.contains_key("elbo_trace"));
}
