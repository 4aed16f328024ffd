//! Drives a configured experiment: a linear chain of training and
//! expansion stages, each snapshotting its network, mask, and
//! three-way evaluation.

use std::path::Path;
use std::time::Instant;

use crate::config::{DataBank, ExperimentConfig, StageConfig};
use crate::data::mix;
use crate::error::{Error, Result};
use crate::expand::{expand_network, ExpansionPlan, FreezeMask};
use crate::netcore::{evaluate, init_network, Network, NetworkSpec};
use crate::optim::TrainConfig;
use crate::train::{train_kfold, two_step_train, StageResult};

/// Snapshot of one completed stage.
pub struct StageOutput {
    pub result: StageResult,
    pub network: Network,
    pub mask: Option<FreezeMask>,
}

pub struct RunOutput {
    pub stages: Vec<StageOutput>,
}

impl RunOutput {
    pub fn results(&self) -> Vec<StageResult> {
        self.stages.iter().map(|s| s.result.clone()).collect()
    }

    pub fn final_network(&self) -> &Network {
        &self.stages.last().expect("at least one stage").network
    }
}

/// Execute every stage of the config in order.
///
/// `seed_override`, when given, replaces stage `i`'s seed with
/// `override + i`. Any stage failure aborts the run with the stage
/// index and cause.
pub fn expanse_run(
    config: &ExperimentConfig,
    data_root: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<RunOutput> {
    config.validate()?;
    let mut bank = DataBank::new(&config.data, data_root);
    let mut current: Option<Network> = None;
    let mut current_mask: Option<FreezeMask> = None;
    let mut stages = Vec::with_capacity(config.stages.len());
    for (index, stage) in config.stages.iter().enumerate() {
        let seed = seed_override.map_or(stage.seed, |s| s.wrapping_add(index as u64));
        let outcome = run_stage(config, stage, seed, &mut bank, &mut current, &mut current_mask)
            .map_err(|e| Error::Stage {
                index,
                name: stage.name.clone(),
                source: Box::new(e),
            })?;
        stages.push(outcome);
    }
    Ok(RunOutput { stages })
}

fn run_stage(
    config: &ExperimentConfig,
    stage: &StageConfig,
    seed: u64,
    bank: &mut DataBank,
    current: &mut Option<Network>,
    current_mask: &mut Option<FreezeMask>,
) -> Result<StageOutput> {
    let started = Instant::now();
    let mut result = StageResult {
        name: stage.name.clone(),
        description: stage.description.clone(),
        seed,
        freeze: stage.freeze,
        lr_high: None,
        epochs_high: None,
        lr_low: None,
        epochs_low: None,
        batch_size: config.settings.batch_size,
        folds: config.settings.folds,
        weight_decay: config.settings.weight_decay,
        exemplary: None,
        train: None,
        test: None,
        seconds: 0.0,
    };

    if let Some(expand) = &stage.expand {
        let small = current
            .as_ref()
            .ok_or_else(|| Error::Config("expand stage has no network to expand".into()))?;
        let plan = ExpansionPlan {
            source_sizes: small.spec().layer_sizes().to_vec(),
            target_sizes: expand.target.clone(),
            class_map: expand.class_map.clone(),
            new_weight_mode: expand.mode,
        };
        let (big, mask) = expand_network(small, &plan, seed)?;
        *current = Some(big);
        *current_mask = Some(mask);
    } else {
        let step_b = stage.step_b.as_ref().expect("validated train stage");
        if let Some(sizes) = &stage.init {
            let spec = NetworkSpec::new(sizes.clone())?;
            *current = Some(init_network(&spec, seed));
            *current_mask = None;
        }
        let net = current
            .as_mut()
            .ok_or_else(|| Error::Config("training stage has no network".into()))?;
        let mask = if stage.freeze {
            Some(current_mask.as_ref().ok_or_else(|| {
                Error::Config("freeze requested but no mask from an expansion".into())
            })?)
        } else {
            None
        };

        let parts: Vec<(std::sync::Arc<crate::data::Dataset>, f64)> = step_b
            .mix
            .iter()
            .map(|p| Ok((bank.get(&p.data)?, p.fraction)))
            .collect::<Result<_>>()?;
        let borrowed: Vec<(&crate::data::Dataset, f64)> =
            parts.iter().map(|(d, f)| (d.as_ref(), *f)).collect();
        let mix_seed = step_b.mix_seed.unwrap_or(seed);
        let mixed = mix(&borrowed, mix_seed)?;

        let base = TrainConfig {
            learning_rate: step_b.learning_rate,
            epochs: step_b.epochs,
            batch_size: config.settings.batch_size,
            weight_decay: config.settings.weight_decay,
            folds: config.settings.folds,
            seed,
        };
        result.lr_low = Some(step_b.learning_rate);
        result.epochs_low = Some(step_b.epochs);
        match &stage.step_a {
            Some(a) => {
                let exemplary = bank.get(&a.data)?;
                result.lr_high = Some(a.learning_rate);
                result.epochs_high = Some(a.epochs);
                two_step_train(
                    net,
                    &exemplary,
                    &mixed,
                    a.learning_rate,
                    step_b.learning_rate,
                    a.epochs,
                    step_b.epochs,
                    &base,
                    mask,
                )?;
            }
            None => {
                train_kfold(net, &mixed, &base, mask)?;
            }
        }
    }

    let net = current.as_ref().expect("stage produced a network");
    let eval_names = config.eval_names_for(stage);
    if let Some(name) = &eval_names.exemplary {
        result.exemplary = Some(evaluate(net, bank.get(name)?.as_ref())?);
    }
    if let Some(name) = &eval_names.train {
        result.train = Some(evaluate(net, bank.get(name)?.as_ref())?);
    }
    if let Some(name) = &eval_names.test {
        result.test = Some(evaluate(net, bank.get(name)?.as_ref())?);
    }
    result.seconds = started.elapsed().as_secs_f64();
    Ok(StageOutput {
        result,
        network: net.clone(),
        mask: current_mask.clone(),
    })
}
