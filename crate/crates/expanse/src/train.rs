//! Training regimens: the k-fold epoch loop, two-step training, and
//! reporting structures shared by the experiment runner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{kfold_split, permutation, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::expand::FreezeMask;
use crate::netcore::{backward, evaluate, forward, softmax_xent, EvalReport, Network};
use crate::optim::{adam_step, AdamState, TrainConfig};

/// Bookkeeping for one epoch of the k-fold regimen.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Validation accuracy on each held-out fold, in fold order.
    pub fold_val_accuracy: Vec<f64>,
    /// Training-sample visits this epoch; exactly `(k - 1) * N`.
    pub visits: u64,
    /// Mean training loss over all batches of the epoch.
    pub mean_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainStats {
    pub epochs: Vec<EpochStats>,
}

impl TrainStats {
    pub fn total_visits(&self) -> u64 {
        self.epochs.iter().map(|e| e.visits).sum()
    }
}

/// One epoch of the k-fold regimen: for every fold, a full mini-batch
/// pass over the other `k - 1` folds, then validation accuracy on the
/// held-out fold. Each sample is trained on exactly `k - 1` times.
pub fn train_epoch_kfold(
    net: &mut Network,
    d: &Dataset,
    folds: &FoldAssignment,
    cfg: &TrainConfig,
    state: &mut AdamState,
    mask: Option<&FreezeMask>,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    if folds.len() != d.len() {
        return Err(Error::DatasetMismatch(format!(
            "fold assignment covers {} samples, dataset has {}",
            folds.len(),
            d.len()
        )));
    }
    let mut fold_val_accuracy = Vec::with_capacity(folds.k());
    let mut visits = 0u64;
    let mut loss_sum = 0.0;
    let mut batches = 0u64;
    for fold in 0..folds.k() {
        let train_idx = folds.complement_indices(fold);
        let order = permutation(train_idx.len(), rng);
        let shuffled: Vec<usize> = order.iter().map(|&p| train_idx[p]).collect();
        for chunk in shuffled.chunks(cfg.batch_size) {
            let batch = d.features().select(ndarray::Axis(0), chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| d.labels()[i]).collect();
            let (logits, cache) = forward(net, &batch)?;
            let (loss, dlogits) = softmax_xent(&logits, &labels);
            let grads = backward(net, &cache, &dlogits)?;
            adam_step(net, &grads, state, cfg, mask)?;
            visits += chunk.len() as u64;
            loss_sum += loss;
            batches += 1;
        }
        let val = d.subset(&folds.fold_indices(fold));
        fold_val_accuracy.push(evaluate(net, &val)?.accuracy);
    }
    Ok(EpochStats {
        fold_val_accuracy,
        visits,
        mean_train_loss: loss_sum / batches.max(1) as f64,
    })
}

/// Train for `cfg.epochs` epochs of the k-fold regimen with a fresh
/// Adam state. The fold assignment is fixed for the whole call.
pub fn train_kfold(
    net: &mut Network,
    d: &Dataset,
    cfg: &TrainConfig,
    mask: Option<&FreezeMask>,
) -> Result<TrainStats> {
    cfg.validate()?;
    let folds = kfold_split(d.len(), cfg.folds, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1); // batch shuffling, decoupled from the fold split
    let mut state = AdamState::new(net);
    let mut stats = TrainStats::default();
    for _ in 0..cfg.epochs {
        stats
            .epochs
            .push(train_epoch_kfold(net, d, &folds, cfg, &mut state, mask, &mut rng)?);
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TwoStepStats {
    pub step_a: Option<TrainStats>,
    pub step_b: TrainStats,
}

/// Two-step training: first the exemplary set at a higher learning
/// rate, then the full mix at a lower one, each with a fresh Adam state.
///
/// `epochs_a = 0` degenerates to single-step training on the mix. When
/// step one runs, a spot-check asserts that the mix actually contains
/// the exemplary samples.
#[allow(clippy::too_many_arguments)]
pub fn two_step_train(
    net: &mut Network,
    exemplary: &Dataset,
    full_mix: &Dataset,
    lr_high: f64,
    lr_low: f64,
    epochs_a: usize,
    epochs_b: usize,
    base: &TrainConfig,
    mask: Option<&FreezeMask>,
) -> Result<TwoStepStats> {
    let step_a = if epochs_a > 0 {
        check_contains(full_mix, exemplary, 5)?;
        let cfg_a = base.with_lr_epochs(lr_high, epochs_a);
        Some(train_kfold(net, exemplary, &cfg_a, mask)?)
    } else {
        None
    };
    // step two reuses the base seed, so a two-step run sees the same
    // fold split and batch order as a single-step run on the same mix
    let cfg_b = base.with_lr_epochs(lr_low, epochs_b);
    let step_b = train_kfold(net, full_mix, &cfg_b, mask)?;
    Ok(TwoStepStats { step_a, step_b })
}

/// Spot-check that `haystack` contains the first `limit` samples of
/// `needles` (feature-equal row with the same label).
fn check_contains(haystack: &Dataset, needles: &Dataset, limit: usize) -> Result<()> {
    for i in 0..needles.len().min(limit) {
        let row = needles.features().row(i);
        let label = needles.labels()[i];
        let found = haystack
            .labels()
            .iter()
            .enumerate()
            .any(|(j, &l)| l == label && haystack.features().row(j) == row);
        if !found {
            return Err(Error::DatasetMismatch(format!(
                "mix does not contain exemplary sample {i}"
            )));
        }
    }
    Ok(())
}

/// Outcome of one experiment stage: the three-way evaluation the
/// result tables are built from, plus a config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub freeze: bool,
    pub lr_high: Option<f64>,
    pub epochs_high: Option<usize>,
    pub lr_low: Option<f64>,
    pub epochs_low: Option<usize>,
    pub batch_size: usize,
    pub folds: usize,
    pub weight_decay: f64,
    pub exemplary: Option<EvalReport>,
    pub train: Option<EvalReport>,
    pub test: Option<EvalReport>,
    /// Wall-clock seconds; excluded from report files so reruns are
    /// byte-identical.
    #[serde(skip)]
    pub seconds: f64,
}

/// Source-set accuracy trajectory across stages, with per-stage deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub rows: Vec<ForgettingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingRow {
    pub stage: String,
    pub source_accuracy: f64,
    /// Change versus the previous stage with a source evaluation.
    pub delta: Option<f64>,
}

pub fn forgetting_report(results: &[StageResult]) -> ForgettingReport {
    let mut rows = Vec::new();
    let mut prev: Option<f64> = None;
    for r in results {
        if let Some(train) = &r.train {
            rows.push(ForgettingRow {
                stage: r.name.clone(),
                source_accuracy: train.accuracy,
                delta: prev.map(|p| train.accuracy - p),
            });
            prev = Some(train.accuracy);
        }
    }
    ForgettingReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{init_network, NetworkSpec};
    use ndarray::Array2;

    /// Two linearly separable 2-D blobs.
    fn blobs(n_per: usize) -> Dataset {
        let n = 2 * n_per;
        let mut features = Array2::zeros((n, 2));
        for i in 0..n_per {
            let jitter = (i % 7) as f64 / 100.0;
            features[[i, 0]] = 0.2 + jitter;
            features[[i, 1]] = 0.25 + jitter / 2.0;
            features[[n_per + i, 0]] = 0.8 - jitter;
            features[[n_per + i, 1]] = 0.75 - jitter / 2.0;
        }
        let mut labels = vec![0; n_per];
        labels.extend(std::iter::repeat(1).take(n_per));
        Dataset::new(features, labels, 2).unwrap()
    }

    fn cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 1,
            batch_size: 8,
            weight_decay: 0.0,
            folds: 4,
            seed,
        }
    }

    #[test]
    fn visit_count_is_k_minus_one_times_n() {
        let d = blobs(30);
        let mut net = init_network(&NetworkSpec::new(vec![2, 8, 2]).unwrap(), 0);
        let stats = train_kfold(&mut net, &d, &cfg(3), None).unwrap();
        assert_eq!(stats.epochs[0].visits, (4 - 1) * 60);
    }

    #[test]
    fn k2_visits_each_sample_once_per_epoch() {
        let d = blobs(10);
        let mut net = init_network(&NetworkSpec::new(vec![2, 4, 2]).unwrap(), 0);
        let mut c = cfg(1);
        c.folds = 2;
        let stats = train_kfold(&mut net, &d, &c, None).unwrap();
        assert_eq!(stats.epochs[0].visits, 20);
    }

    #[test]
    fn training_is_deterministic() {
        let d = blobs(25);
        let run = || {
            let mut net = init_network(&NetworkSpec::new(vec![2, 8, 2]).unwrap(), 7);
            let mut c = cfg(42);
            c.epochs = 3;
            train_kfold(&mut net, &d, &c, None).unwrap();
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let d = blobs(40);
        let mut net = init_network(&NetworkSpec::new(vec![2, 8, 2]).unwrap(), 2);
        let mut c = cfg(5);
        c.epochs = 50;
        let stats = train_kfold(&mut net, &d, &c, None).unwrap();
        let reached = stats
            .epochs
            .iter()
            .any(|e| e.fold_val_accuracy.iter().all(|&a| a == 1.0));
        assert!(reached, "never hit 100% fold validation accuracy");
        assert_eq!(evaluate(&net, &d).unwrap().accuracy, 1.0);
    }

    #[test]
    fn two_step_zero_epochs_a_skips_step_one() {
        let d = blobs(20);
        let mut net = init_network(&NetworkSpec::new(vec![2, 4, 2]).unwrap(), 3);
        let stats =
            two_step_train(&mut net, &d, &d, 0.05, 0.01, 0, 2, &cfg(9), None).unwrap();
        assert!(stats.step_a.is_none());
        assert_eq!(stats.step_b.epochs.len(), 2);
    }

    #[test]
    fn two_step_rejects_mix_missing_exemplars() {
        let d = blobs(20);
        let mut other = blobs(20);
        // shift the features so no row matches
        other = Dataset::new(other.features() + 0.01, other.labels().to_vec(), 2).unwrap();
        let mut net = init_network(&NetworkSpec::new(vec![2, 4, 2]).unwrap(), 3);
        let err = two_step_train(&mut net, &d, &other, 0.05, 0.01, 1, 1, &cfg(9), None);
        assert!(err.is_err());
    }

    #[test]
    fn frozen_entries_survive_training() {
        let d = blobs(30);
        let spec = NetworkSpec::new(vec![2, 6, 2]).unwrap();
        let mut net = init_network(&spec, 4);
        // freeze half of the first layer
        let mask = FreezeMask::empty(&spec);
        let mask = {
            let (w0, b0) = (&mask.layers()[0], &mask.layers()[1]);
            let mut mw0 = w0.0.clone();
            mw0.slice_mut(ndarray::s![..3, ..]).fill(true);
            let mut mb0 = w0.1.clone();
            mb0.slice_mut(ndarray::s![..3]).fill(true);
            FreezeMask::from_layers(vec![(mw0, mb0), (b0.0.clone(), b0.1.clone())])
        };
        let before = net.clone();
        let mut c = cfg(6);
        c.epochs = 3;
        train_kfold(&mut net, &d, &c, Some(&mask)).unwrap();
        for (l, ((mw, mb), layer)) in mask.layers().iter().zip(net.layers()).enumerate() {
            ndarray::Zip::indexed(mw).for_each(|(i, j), &frozen| {
                if frozen {
                    assert_eq!(
                        layer.weights[[i, j]],
                        before.layers()[l].weights[[i, j]],
                        "layer {l} weight ({i},{j}) changed"
                    );
                }
            });
            for (i, &frozen) in mb.iter().enumerate() {
                if frozen {
                    assert_eq!(layer.bias[i], before.layers()[l].bias[i]);
                }
            }
        }
        // and the unfrozen half actually trained
        assert_ne!(net, before);
    }

    #[test]
    fn forgetting_report_zero_delta_for_identical_stages() {
        let eval = EvalReport {
            accuracy: 0.9,
            mean_loss: 0.3,
            confusion: vec![],
        };
        let stage = StageResult {
            name: "s".into(),
            description: String::new(),
            seed: 0,
            freeze: false,
            lr_high: None,
            epochs_high: None,
            lr_low: Some(0.001),
            epochs_low: Some(1),
            batch_size: 32,
            folds: 10,
            weight_decay: 0.0,
            exemplary: None,
            train: Some(eval),
            test: None,
            seconds: 0.0,
        };
        let report = forgetting_report(&[stage.clone(), stage]);
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[1].delta, Some(0.0));
    }
}
