use edc_core::data::EncodedDataset;
use edc_core::expr::{Equation, GrammarConfig, SummandShape};
use edc_core::optimize::{optimize_constants, OptimizerConfig};
use edc_core::search::{beam_search, beam_search_with_progress, score, SearchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn xor_like(n: usize, seed: u64) -> EncodedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
    let y = x.chunks(2).map(|r| (r[0] - 0.5) * (r[1] - 0.5) > 0.0).collect();
    EncodedDataset::from_normalized(x, 2, y, vec!["a".into(), "b".into()]).unwrap()
}

fn band(n: usize, seed: u64) -> EncodedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
    let y = x
        .chunks(2)
        .map(|r| r[1] > 0.3 + 0.4 * r[0] * r[0] || rng.random::<f64>() < 0.05)
        .collect();
    EncodedDataset::from_normalized(x, 2, y, vec!["a".into(), "b".into()]).unwrap()
}

fn hyperbola(n: usize, seed: u64) -> EncodedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
    let y = x
        .chunks(2)
        .map(|r| r[0] * r[1] > 0.2 || rng.random::<f64>() < 0.05)
        .collect();
    EncodedDataset::from_normalized(x, 2, y, vec!["a".into(), "b".into()]).unwrap()
}

fn small_opt() -> OptimizerConfig {
    let mut opt = OptimizerConfig::default();
    opt.sgd.epochs = 60;
    opt.hill.budget = 600;
    opt
}

#[test]
fn width_one_depth_one_equals_exhaustive_choice() {
    let data = hyperbola(300, 2);
    let grammar = GrammarConfig::search(2, 1);
    let opt = small_opt();
    let cfg = SearchConfig {
        beam_width: 1,
        max_depth: 1,
        restarts_per_candidate: 3,
        seed: 9,
        workers: 1,
    };
    let found = beam_search(&data, &grammar, &cfg, &opt).unwrap();

    // Oracle: fit every one-summand structure independently, several times,
    // and keep the lowest loss.
    let children = Equation::constant(0.0).refinements(&grammar);
    assert_eq!(children.len(), 7);
    let mut fitted: Vec<(f64, Vec<SummandShape>)> = children
        .iter()
        .map(|child| {
            let best = (0..6)
                .map(|r| {
                    let o = OptimizerConfig { seed: 100 + r, ..opt };
                    optimize_constants(child, &data, &o).unwrap().final_loss
                })
                .fold(f64::INFINITY, f64::min);
            (best, child.shapes())
        })
        .collect();
    fitted.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(fitted[0].0 < fitted[1].0 - 0.01, "oracle winner is clear: {fitted:?}");
    assert_eq!(found.equation.shapes(), fitted[0].1);
    assert!((found.train_loss - fitted[0].0).abs() < 0.01);
    assert!((score(&found.equation, &data) - found.train_loss).abs() < 1e-12);
}

#[test]
fn best_loss_never_increases_with_depth() {
    let data = band(400, 4);
    let opt = small_opt();
    let mut previous = f64::INFINITY;
    for depth in 1..=3 {
        let cfg = SearchConfig {
            beam_width: 4,
            max_depth: depth,
            restarts_per_candidate: 2,
            seed: 1,
            workers: 1,
        };
        let best = beam_search(&data, &GrammarConfig::search(2, depth), &cfg, &opt).unwrap();
        assert!(best.train_loss <= previous, "depth {depth}: {} > {previous}", best.train_loss);
        previous = best.train_loss;
    }
}

#[test]
fn progress_reports_every_level_monotonically() {
    let data = band(200, 5);
    let cfg = SearchConfig {
        beam_width: 3,
        max_depth: 3,
        restarts_per_candidate: 1,
        seed: 2,
        workers: 1,
    };
    let mut seen = Vec::new();
    beam_search_with_progress(&data, &GrammarConfig::search(2, 3), &cfg, &small_opt(), |p| seen.push(p)).unwrap();
    assert_eq!(seen.iter().map(|p| p.depth).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert!(seen.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
    assert!(seen.windows(2).all(|w| w[1].candidates_evaluated > w[0].candidates_evaluated));
}

#[test]
fn product_term_found_on_xor_layout() {
    let data = xor_like(500, 3);
    let cfg = SearchConfig {
        beam_width: 5,
        max_depth: 3,
        restarts_per_candidate: 2,
        seed: 3,
        workers: 1,
    };
    let best = beam_search(&data, &GrammarConfig::search(2, 3), &cfg, &small_opt()).unwrap();
    assert!(best
        .equation
        .shapes()
        .iter()
        .any(|s| matches!(s, SummandShape::Product(a, b) if a != b)));
}

#[test]
fn search_is_deterministic_and_independent_of_workers() {
    let data = band(300, 6);
    let mk = |workers| SearchConfig {
        beam_width: 4,
        max_depth: 2,
        restarts_per_candidate: 2,
        seed: 8,
        workers,
    };
    let grammar = GrammarConfig::search(2, 2);
    let a = beam_search(&data, &grammar, &mk(1), &small_opt()).unwrap();
    let b = beam_search(&data, &grammar, &mk(1), &small_opt()).unwrap();
    let c = beam_search(&data, &grammar, &mk(3), &small_opt()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}
