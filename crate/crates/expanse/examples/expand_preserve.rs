//! Expands a small network into a larger one and shows that zero-mode
//! expansion preserves the small model's logits exactly on the mapped
//! classes.

use expanse::{
    coverage_report, expand_network, forward, init_network, ExpansionPlan, NetworkSpec,
    NewWeightMode,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let small = init_network(&NetworkSpec::new(vec![784, 150, 80, 5]).unwrap(), 3);
    let plan = ExpansionPlan {
        source_sizes: vec![784, 150, 80, 5],
        target_sizes: vec![784, 256, 128, 10],
        class_map: None, // identity into classes 0..5
        new_weight_mode: NewWeightMode::Zero,
    };

    let coverage = coverage_report(&plan).unwrap();
    for layer in &coverage.layers {
        println!(
            "layer {}: {} frozen / {} new weight entries",
            layer.layer, layer.frozen_weights, layer.new_weights
        );
    }

    let (big, mask) = expand_network(&small, &plan, 17).unwrap();
    println!(
        "mask freezes {} of {} parameters",
        mask.frozen_count(),
        mask.entry_count()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = Array2::from_shape_fn((100, 784), |_| rng.gen_range(0.0..1.0));
    let (small_logits, _) = forward(&small, &batch).unwrap();
    let (big_logits, _) = forward(&big, &batch).unwrap();

    let mut max_diff = 0.0f64;
    for i in 0..batch.nrows() {
        for c in 0..5 {
            max_diff = max_diff.max((small_logits[[i, c]] - big_logits[[i, c]]).abs());
        }
        for c in 5..10 {
            assert_eq!(big_logits[[i, c]], 0.0, "new-class logits must be zero");
        }
    }
    println!("max |small - big| logit difference on mapped classes: {max_diff:.3e}");
    assert!(max_diff <= 1e-12);
}
