//! Shows the k-fold epoch regimen's accounting: with k folds, each
//! sample is trained on exactly k-1 times per epoch.

use expanse::{init_network, kfold_split, train_kfold, Dataset, NetworkSpec, TrainConfig};
use ndarray::Array2;

fn main() {
    let n = 500;
    let features = Array2::from_shape_fn((n, 8), |(i, j)| ((i * 3 + j) % 17) as f64 / 17.0);
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let d = Dataset::new(features, labels, 4).unwrap();

    let folds = kfold_split(n, 10, 1).unwrap();
    let sizes: Vec<usize> = (0..10).map(|f| folds.fold_indices(f).len()).collect();
    println!("fold sizes: {sizes:?}");

    let cfg = TrainConfig {
        learning_rate: 0.005,
        epochs: 2,
        batch_size: 25,
        weight_decay: 0.0,
        folds: 10,
        seed: 1,
    };
    let mut net = init_network(&NetworkSpec::new(vec![8, 16, 4]).unwrap(), 0);
    let stats = train_kfold(&mut net, &d, &cfg, None).unwrap();

    for (e, epoch) in stats.epochs.iter().enumerate() {
        println!(
            "epoch {e}: {} visits (expected {}), mean loss {:.4}",
            epoch.visits,
            (cfg.folds - 1) * n,
            epoch.mean_train_loss
        );
        assert_eq!(epoch.visits as usize, (cfg.folds - 1) * n);
    }
    println!("total visits: {}", stats.total_visits());
}
