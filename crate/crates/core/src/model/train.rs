use log::debug;

use super::config::ModelConfig;
use super::uncle::{LossTerms, Normalization, UncleModel};
use crate::datagen::TimeSeriesDataset;
use crate::diffcore::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::error::{ensure, Result, UncleError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Reconstruction-only pretraining of the TCNs.
    Recon,
    /// Joint training of all parameters on the total loss.
    Joint,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Recon => "recon",
            Stage::Joint => "joint",
        }
    }
}

/// Training-mode losses of one epoch. `pred`/`l1` are absent in pretraining.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub recon: f64,
    pub pred: Option<f64>,
    pub l1: Option<f64>,
    pub total: f64,
}

/// Trains a freshly initialized model on one replica.
pub fn train(dataset: &TimeSeriesDataset, config: &ModelConfig) -> Result<(UncleModel, Vec<EpochRecord>)> {
    train_with(dataset, config, |_| {})
}

/// [`train`] with a per-epoch observer (progress reporting).
pub fn train_with(
    dataset: &TimeSeriesDataset,
    config: &ModelConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(UncleModel, Vec<EpochRecord>)> {
    ensure!(
        dataset.num_vars() == config.num_vars,
        "dataset has {} variables, config expects {}",
        dataset.num_vars(),
        config.num_vars
    );
    ensure!(
        dataset.steps() > config.lag,
        "dataset has {} steps; need more than lag {}",
        dataset.steps(),
        config.lag
    );
    let norm = Normalization::fit(dataset);
    let x = norm.apply(dataset)?;
    let mut model = UncleModel::new(config.clone(), norm)?;
    let mut trainer = Trainer::new(&model, AdamConfig::with_lr(config.lr));
    let mut history = Vec::with_capacity(config.recon_epochs + config.joint_epochs);

    for epoch in 0..config.recon_epochs {
        let rec = trainer.step(&mut model, &x, Stage::Recon, epoch)?;
        on_epoch(&rec);
        history.push(rec);
    }
    for epoch in 0..config.joint_epochs {
        let rec = trainer.step(&mut model, &x, Stage::Joint, epoch)?;
        on_epoch(&rec);
        history.push(rec);
    }
    Ok((model, history))
}

/// Full-batch Adam over the model's parameters.
pub struct Trainer {
    adam: AdamConfig,
    states: Vec<AdamState>,
}

impl Trainer {
    pub fn new(model: &UncleModel, adam: AdamConfig) -> Self {
        Self {
            adam,
            states: model.params().into_iter().map(AdamState::for_param).collect(),
        }
    }

    /// One optimizer step. Pretraining updates only the TCN parameters.
    pub fn step(&mut self, model: &mut UncleModel, x: &Tensor, stage: Stage, epoch: usize) -> Result<EpochRecord> {
        let with_prediction = stage == Stage::Joint;
        let mut tape = Tape::new(dropout_seed(model.config.seed, stage, epoch));
        let bound = model.bind(&mut tape)?;
        let losses = bound.losses(&mut tape, x, &model.config, true, with_prediction)?;
        let LossTerms { recon, pred, l1, total } = losses.terms(&tape);
        if !total.is_finite() {
            return Err(UncleError::NonFiniteLoss {
                stage: stage.name(),
                epoch,
                value: total,
            });
        }
        let grads = tape.backward(losses.total)?;
        let vars = bound.vars();
        let trainable = if with_prediction {
            vars.len()
        } else {
            model.tcn_param_tensors()
        };
        {
            let mut params = model.params_mut();
            for (v, p) in vars.iter().zip(params.iter_mut()).take(trainable) {
                p.zero_grad();
                grads.accumulate_into(*v, p)?;
            }
            let mut states: Vec<&mut AdamState> = self.states.iter_mut().take(trainable).collect();
            params.truncate(trainable);
            adam_step(&mut params, &mut states, &self.adam)?;
            for p in params.iter_mut() {
                p.zero_grad();
            }
        }
        let rec = EpochRecord {
            epoch,
            stage,
            recon,
            pred: with_prediction.then_some(pred),
            l1: (with_prediction && model.dependencies().is_some()).then_some(l1),
            total,
        };
        if epoch % 100 == 0 {
            debug!("{} epoch {epoch}: total {total:.6} recon {recon:.6} pred {pred:.6}", stage.name());
        }
        Ok(rec)
    }
}

fn dropout_seed(seed: u64, stage: Stage, epoch: usize) -> u64 {
    let tag = match stage {
        Stage::Recon => 0x5245_434f_4e00_0000u64,
        Stage::Joint => 0x4a4f_494e_5400_0000u64,
    };
    splitmix(seed ^ tag ^ (epoch as u64))
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
