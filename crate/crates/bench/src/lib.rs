//! Fixtures shared by the benchmarks.

use edc_core::data::EncodedDataset;
use edc_core::expr::{Equation, FeatureId, Summand};
use edc_core::synth::{gen_within_dataset, SynthConfig};

/// A noisy two-feature dataset labelled by a random grammar equation.
pub fn boundary_dataset(n_points: usize, seed: u64) -> EncodedDataset {
    let cfg = SynthConfig {
        n_points,
        ..SynthConfig::default()
    }
    .with_seed(seed);
    gen_within_dataset(&cfg)
        .expect("generator succeeds for fixture seeds")
        .noisy
        .to_dataset()
}

/// `c0 + c1·x1 + c2·x1·x2` with zero constants: fitted by SGD.
pub fn product_structure() -> Equation {
    Equation::new(
        0.0,
        vec![
            Summand::Linear {
                coef: 0.0,
                feature: FeatureId(0),
            },
            Summand::Product {
                coef: 0.0,
                left: FeatureId(0),
                right: FeatureId(1),
            },
        ],
    )
    .expect("distinct summands")
}

/// `c0 + c1·x2 + c2·exp(c3·x1)`: fitted by the hill climber.
pub fn exp_structure() -> Equation {
    Equation::new(
        0.0,
        vec![
            Summand::Linear {
                coef: 0.0,
                feature: FeatureId(1),
            },
            Summand::Exp {
                outer: 0.0,
                inner: 0.0,
                feature: FeatureId(0),
            },
        ],
    )
    .expect("distinct summands")
}
