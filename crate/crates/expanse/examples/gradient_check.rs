//! Verifies backprop gradients against central finite differences on a
//! batch of random networks.

use expanse::{backward, forward, init_network, softmax_xent, NetworkSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let spec = NetworkSpec::new(vec![6, 8, 8, 4]).unwrap();
        let mut net = init_network(&spec, trial);
        let batch = Array2::from_shape_fn((8, 6), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..8).map(|_| rng.gen_range(0..4)).collect();

        let (logits, cache) = forward(&net, &batch).unwrap();
        let (_, dlogits) = softmax_xent(&logits, &labels);
        let grads = backward(&net, &cache, &dlogits).unwrap();

        let h = 1e-5;
        let mut trial_worst = 0.0f64;
        for l in 0..net.layers().len() {
            let (rows, cols) = net.layers()[l].weights.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let orig = net.layers()[l].weights[[r, c]];
                    net.layers_mut()[l].weights[[r, c]] = orig + h;
                    let (lp, _) = forward(&net, &batch).unwrap();
                    let (fp, _) = softmax_xent(&lp, &labels);
                    net.layers_mut()[l].weights[[r, c]] = orig - h;
                    let (lm, _) = forward(&net, &batch).unwrap();
                    let (fm, _) = softmax_xent(&lm, &labels);
                    net.layers_mut()[l].weights[[r, c]] = orig;

                    let fd = (fp - fm) / (2.0 * h);
                    let an = grads.layers[l].0[[r, c]];
                    let rel = (an - fd).abs() / fd.abs().max(1e-6);
                    trial_worst = trial_worst.max(rel);
                }
            }
        }
        println!("net {trial}: worst relative error {trial_worst:.3e}");
        worst = worst.max(trial_worst);
    }
    println!("overall worst relative error {worst:.3e}");
    assert!(worst < 1e-6, "gradient check failed");
}
