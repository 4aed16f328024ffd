//! Saves a network with its freeze mask and Adam state, loads it back,
//! and verifies the roundtrip is bitwise exact.

use expanse::optim::AdamState;
use expanse::{
    expand_network, init_network, load_checkpoint, save_checkpoint, ExpansionPlan, NetworkSpec,
    NewWeightMode,
};

fn main() {
    let small = init_network(&NetworkSpec::new(vec![16, 12, 3]).unwrap(), 1);
    let plan = ExpansionPlan {
        source_sizes: vec![16, 12, 3],
        target_sizes: vec![16, 20, 6],
        class_map: None,
        new_weight_mode: NewWeightMode::Random,
    };
    let (net, mask) = expand_network(&small, &plan, 2).unwrap();
    let state = AdamState::new(&net);

    let dir = std::env::temp_dir().join("expanse-roundtrip");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.ckpt");

    save_checkpoint(&path, &net, Some(&mask), Some(&state)).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    println!("wrote {} ({bytes} bytes)", path.display());

    let (net2, mask2, state2) = load_checkpoint(&path).unwrap();
    assert_eq!(net, net2, "network roundtrip");
    assert_eq!(Some(mask), mask2, "mask roundtrip");
    assert_eq!(Some(state), state2, "optimizer state roundtrip");
    println!("network, mask, and optimizer state are bitwise identical");

    std::fs::remove_file(&path).ok();
}
