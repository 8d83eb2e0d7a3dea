use radfed_autodiff::{adam_step, AdamConfig, AdamState};
use radfed_signal::{derive_seed, ClientDataset, Frame};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FedError, TrainingConfig};
use crate::batch::{labels, stack_frames};
use crate::model::{PartitionedModel, Share, WeightVector};

const SHUFFLE_TAG: u64 = 0x5348_5546;

/// One sensor's model, optimizer and data. The optimizer moments persist
/// across rounds.
#[derive(Debug, Clone)]
pub struct ClientState<'a> {
    pub esc_id: u32,
    pub model: PartitionedModel,
    pub optimizer: AdamState,
    pub dataset: &'a ClientDataset,
    /// Training-split size.
    pub n_k: usize,
    /// Which parameters are loaded from and returned to the server.
    pub share: Share,
    pub last_loss: f64,
    rng: ChaCha8Rng,
}

impl<'a> ClientState<'a> {
    pub fn new(
        dataset: &'a ClientDataset,
        model: PartitionedModel,
        share: Share,
        cfg: &TrainingConfig,
    ) -> Result<Self, FedError> {
        if dataset.train.is_empty() {
            return Err(FedError::EmptyTrainSplit(dataset.esc_id));
        }
        let optimizer = AdamState::new(
            model.parameters(),
            AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() },
        );
        Ok(Self {
            esc_id: dataset.esc_id,
            model,
            optimizer,
            dataset,
            n_k: dataset.train.len(),
            share,
            last_loss: f64::NAN,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, SHUFFLE_TAG, dataset.esc_id as u64])),
        })
    }
}

/// Loads `incoming` (if any), trains `epochs` passes of minibatch Adam over
/// the training split and returns the shared parameters.
pub fn client_local_update(
    client: &mut ClientState<'_>,
    incoming: Option<&WeightVector>,
    epochs: usize,
    batch_size: usize,
) -> Result<WeightVector, FedError> {
    if epochs == 0 || batch_size == 0 {
        return Err(FedError::Config("epochs and batch size must be at least 1".into()));
    }
    if client.dataset.train.is_empty() {
        return Err(FedError::EmptyTrainSplit(client.esc_id));
    }
    if let Some(w) = incoming {
        client.model.load(client.share, w)?;
    }
    let train: &[Frame] = &client.dataset.train;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let (mut loss_sum, mut batches) = (0.0, 0usize);
    for _ in 0..epochs {
        order.shuffle(&mut client.rng);
        for chunk in order.chunks(batch_size) {
            let frames: Vec<&Frame> = chunk.iter().map(|&i| &train[i]).collect();
            let x = stack_frames(&frames)?;
            loss_sum += client.model.loss_and_grad(x, &labels(&frames))?;
            adam_step(client.model.parameters_mut(), &mut client.optimizer)?;
            client.model.clear_grads();
            batches += 1;
        }
    }
    client.last_loss = loss_sum / batches as f64;
    Ok(client.model.flatten(client.share))
}
