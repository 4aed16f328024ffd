use expanse::*;
use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dup: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(8);
    let seeds: Vec<u64> = args[2..].iter().map(|s| s.parse().unwrap()).collect();
    let train = load_idx(
        Path::new("data/mnist/train-images-idx3-ubyte"),
        Path::new("data/mnist/train-labels-idx1-ubyte"),
        Some(10),
    )
    .unwrap();
    let test = load_idx(
        Path::new("data/mnist/t10k-images-idx3-ubyte"),
        Path::new("data/mnist/t10k-labels-idx1-ubyte"),
        Some(10),
    )
    .unwrap();
    let printed = load_idx(
        Path::new("data/printed/printed-images-idx3-ubyte"),
        Path::new("data/printed/printed-labels-idx1-ubyte"),
        Some(10),
    )
    .unwrap();
    let exemplary = printed.duplicate(2).unwrap();
    let exemplary_mix = printed.duplicate(dup).unwrap();
    for seed in seeds {
        let mixed = mix(&[(&train, 1.0), (&exemplary_mix, 1.0)], seed).unwrap();
        let base = TrainConfig {
            learning_rate: 0.002,
            epochs: 3,
            batch_size: 32,
            weight_decay: 0.0,
            folds: 10,
            seed,
        };
        let spec = NetworkSpec::new(vec![784, 256, 128, 10]).unwrap();

        let mut net = init_network(&spec, seed);
        train_kfold(&mut net, &mixed, &base, None).unwrap();
        let one = evaluate(&net, &test).unwrap().accuracy;

        let mut net = init_network(&spec, seed);
        two_step_train(&mut net, &exemplary, &mixed, 0.01, 0.002, 8, 3, &base, None).unwrap();
        let two = evaluate(&net, &test).unwrap().accuracy;
        let ex = evaluate(&net, &printed).unwrap().accuracy;
        println!(
            "dup {dup} seed {seed}: one {:.2}%  two {:.2}%  diff {:+.2}  retention {:.2}%",
            one * 100.0, two * 100.0, (two - one) * 100.0, ex * 100.0
        );
    }
}
