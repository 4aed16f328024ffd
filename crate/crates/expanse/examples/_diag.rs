use expanse::*;
use std::path::Path;

fn main() {
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
    let spec = NetworkSpec::new(vec![784, 256, 128, 10]).unwrap();
    let mut net = init_network(&spec, 21);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 8,
        batch_size: 32,
        weight_decay: 0.0,
        folds: 10,
        seed: 21,
    };
    train_kfold(&mut net, &exemplary, &cfg, None).unwrap();
    println!("exemplary acc {:.2}%", evaluate(&net, &printed).unwrap().accuracy * 100.0);
    println!("mnist transfer {:.2}%", evaluate(&net, &test).unwrap().accuracy * 100.0);
    let mut a = test.features().clone();
    let depth = net.layers().len();
    for (i, layer) in net.layers().iter().enumerate() {
        let mut z = a.dot(&layer.weights.t());
        z += &layer.bias;
        if i + 1 < depth {
            z.mapv_inplace(|v| v.max(0.0));
            let d = (0..z.ncols()).filter(|&j| z.column(j).iter().all(|&v| v <= 0.0)).count();
            println!("layer {i}: dead {d}/{}", z.ncols());
        }
        a = z;
    }
}
