use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{model_step, AdamConfig, AdamState};
use super::model::{batch_loss, loss_and_gradients, TrainingSample, TwoPathwayModel};
use super::{NeuralError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of samples held out for early stopping.
    pub validation_fraction: f64,
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 32, validation_fraction: 0.1, patience: 20, adam: AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub final_validation_loss: Option<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Mean mini-batch loss per epoch.
    pub train_history: Vec<f64>,
    pub validation_history: Vec<f64>,
}

/// Mini-batch Adam with seeded per-epoch shuffling. When a validation split
/// exists, training stops after `patience` epochs without improvement and
/// the best weights seen are restored.
pub fn fit<S: TrainingSample>(
    model: &mut TwoPathwayModel,
    samples: &[S],
    config: &TrainConfig,
    seed: u64,
) -> Result<FitReport> {
    if samples.is_empty() {
        return Err(NeuralError::Shape("no training samples".into()));
    }
    if config.batch_size == 0 {
        return Err(NeuralError::Shape("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (samples.len() as f64 * config.validation_fraction).floor() as usize;
    let n_val = if samples.len() - n_val == 0 { 0 } else { n_val };
    let (val_idx, train_idx) = order.split_at(n_val);
    let train: Vec<&S> = train_idx.iter().map(|&i| &samples[i]).collect();
    let val: Vec<&S> = val_idx.iter().map(|&i| &samples[i]).collect();

    let initial_train_loss = batch_loss(model, &train)?;
    let mut state = AdamState::default();
    let mut train_history = Vec::with_capacity(config.epochs);
    let mut validation_history = Vec::new();
    let mut best: Option<(f64, usize, TwoPathwayModel)> = None;
    let mut indices: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in indices.chunks(config.batch_size) {
            let batch: Vec<&S> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grads) = loss_and_gradients(model, &batch)
                .map_err(|e| NeuralError::Divergence { epoch, message: e.to_string() })?;
            epoch_loss += loss * batch.len() as f64;
            model_step(model, &grads, &mut state, &config.adam)?;
        }
        let epoch_loss = epoch_loss / train.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(NeuralError::Divergence { epoch, message: "training loss is not finite".into() });
        }
        train_history.push(epoch_loss);

        if !val.is_empty() {
            let v = batch_loss(model, &val).map_err(|e| NeuralError::Divergence { epoch, message: e.to_string() })?;
            validation_history.push(v);
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.clone()));
            } else if epoch - best.as_ref().map_or(0, |b| b.1) >= config.patience {
                break;
            }
        }
    }

    let epochs_run = train_history.len();
    let (best_epoch, final_validation_loss) = match best {
        Some((v, epoch, weights)) => {
            *model = weights;
            (epoch, Some(v))
        }
        None => (epochs_run.saturating_sub(1), None),
    };
    Ok(FitReport {
        initial_train_loss,
        final_train_loss: batch_loss(model, &train)?,
        final_validation_loss,
        epochs_run,
        best_epoch,
        train_history,
        validation_history,
    })
}

impl<S: TrainingSample> TrainingSample for &S {
    fn case_window(&self) -> &[f64] {
        (**self).case_window()
    }

    fn policy_window(&self) -> &[[f64; crate::data::NUM_INDICATORS]] {
        (**self).policy_window()
    }

    fn target(&self) -> f64 {
        (**self).target()
    }
}
