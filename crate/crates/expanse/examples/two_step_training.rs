//! Two-step training on a synthetic problem: a handful of "exemplary"
//! prototypes at a high learning rate, then the full noisy set (which
//! contains them) at a low one.

use expanse::{evaluate, init_network, two_step_train, Dataset, NetworkSpec, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Four prototype patterns in 16 dimensions, plus noisy copies.
fn synthetic(seed: u64) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> = (0..4)
        .map(|c| (0..16).map(|j| if j % 4 == c { 1.0 } else { 0.1 }).collect())
        .collect();

    // duplicated so the 4 prototypes can fill 10 folds
    let exemplary = Dataset::new(
        Array2::from_shape_fn((4, 16), |(i, j)| prototypes[i][j]),
        vec![0, 1, 2, 3],
        4,
    )
    .unwrap()
    .duplicate(10)
    .unwrap();

    let n = 400;
    let mut features = Array2::zeros((n, 16));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 4;
        for j in 0..16 {
            let noise = rng.gen_range(-0.25..0.25);
            features[[i, j]] = (prototypes[c][j] + noise).clamp(0.0, 1.0);
        }
        labels.push(c);
    }
    // the full mix must contain the exemplary samples themselves
    for (i, proto) in prototypes.iter().enumerate() {
        for j in 0..16 {
            features[[i, j]] = proto[j];
        }
        labels[i] = i;
    }
    (exemplary, Dataset::new(features, labels, 4).unwrap())
}

fn main() {
    let (exemplary, full) = synthetic(5);
    let base = TrainConfig {
        learning_rate: 0.002,
        epochs: 3,
        batch_size: 16,
        weight_decay: 0.0,
        folds: 10,
        seed: 42,
    };

    let mut net = init_network(&NetworkSpec::new(vec![16, 24, 4]).unwrap(), 0);
    let stats = two_step_train(&mut net, &exemplary, &full, 0.01, 0.002, 8, 3, &base, None).unwrap();

    println!(
        "step one: {} epochs on {} exemplary samples",
        stats.step_a.as_ref().unwrap().epochs.len(),
        exemplary.len()
    );
    println!(
        "step two: {} epochs on the {}-sample mix",
        stats.step_b.epochs.len(),
        full.len()
    );
    let ex = evaluate(&net, &exemplary).unwrap();
    let all = evaluate(&net, &full).unwrap();
    println!("exemplary accuracy: {:.2}%", ex.accuracy * 100.0);
    println!("full-mix accuracy:  {:.2}%", all.accuracy * 100.0);
}
