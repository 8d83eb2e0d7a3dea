use std::time::Instant;

use radfed_signal::{derive_seed, ClientDataset, Frame};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::message::{self, MessageKind, SERVER_ID};
use super::{client_local_update, gammas_from_sizes, server_aggregate, ClientState, FedError, Message};
use super::{Paradigm, RoundReport, ServerState, TrainingConfig};
use crate::metrics::{confusion_of, ConfusionMatrix};
use crate::model::{build_model, PartitionedModel, ResidualCnnConfig, Share};

const HEAD_TAG: u64 = 0x4845_4144;
const PARTICIPATION_TAG: u64 = 0x5041_5254;

/// Builds one client state per dataset.
///
/// Local-only and centralized learners start from the model seed directly.
/// FedAvg clients share that initialization; FedPer clients draw their own
/// head from a per-client seed and take the base from the server.
pub fn setup_clients<'a>(
    datasets: &'a [ClientDataset],
    model_cfg: &ResidualCnnConfig,
    cfg: &TrainingConfig,
) -> Result<Vec<ClientState<'a>>, FedError> {
    cfg.validate()?;
    let global = build_model(model_cfg, cfg.seed)?;
    datasets
        .iter()
        .map(|d| {
            let (model, share) = match cfg.paradigm {
                Paradigm::FedPer => {
                    let mut m = build_model(model_cfg, derive_seed(&[cfg.seed, HEAD_TAG, d.esc_id as u64]))?;
                    m.load(Share::Base, &global.flatten(Share::Base))?;
                    (m, Share::Base)
                }
                _ => (global.clone(), Share::Full),
            };
            ClientState::new(d, model, share, cfg)
        })
        .collect()
}

pub fn setup_server(clients: &[ClientState<'_>], cfg: &TrainingConfig) -> Result<ServerState, FedError> {
    let first = clients.first().ok_or_else(|| FedError::Config("no clients".into()))?;
    let share = cfg
        .paradigm
        .shared()
        .ok_or_else(|| FedError::Config(format!("{} has no server", cfg.paradigm)))?;
    let sizes: Vec<usize> = clients.iter().map(|c| c.n_k).collect();
    Ok(ServerState {
        global: first.model.flatten(share),
        gammas: gammas_from_sizes(&sizes)?,
        round: 0,
        target_recall: cfg.target_recall,
        max_rounds: cfg.rounds,
    })
}

pub fn run_federated(
    clients: &mut [ClientState<'_>],
    server: &mut ServerState,
    cfg: &TrainingConfig,
) -> Result<Vec<RoundReport>, FedError> {
    run_federated_observed(clients, server, cfg, |_| {})
}

/// Runs rounds until the pooled validation H1 recall exceeds the target or
/// `max_rounds` is reached. `observe` sees every serialized message.
pub fn run_federated_observed(
    clients: &mut [ClientState<'_>],
    server: &mut ServerState,
    cfg: &TrainingConfig,
    mut observe: impl FnMut(&Message),
) -> Result<Vec<RoundReport>, FedError> {
    cfg.validate()?;
    let share = cfg
        .paradigm
        .shared()
        .ok_or_else(|| FedError::Config(format!("{} is not a federated paradigm", cfg.paradigm)))?;
    if clients.is_empty() {
        return Err(FedError::Config("no clients".into()));
    }
    let sizes: Vec<usize> = clients.iter().map(|c| c.n_k).collect();
    if gammas_from_sizes(&sizes)? != server.gammas {
        return Err(FedError::Config("server gammas do not match client training sizes".into()));
    }
    let layout = clients[0].model.layout(share);
    let declared: usize = layout.iter().map(|e| e.len).sum();
    let head_ids = clients[0].model.head_ids().clone();
    let bpp = cfg.bytes_per_param;
    let mut history = Vec::new();

    while server.round < server.max_rounds {
        let started = Instant::now();
        server.round += 1;
        let round = server.round as u32;
        let selected = participants(clients.len(), cfg, round);

        let broadcast = message::encode(MessageKind::Broadcast, SERVER_ID, round, &server.global, bpp)?;
        observe(&broadcast);
        audit(&broadcast, share, declared, &head_ids)?;

        let uploads: Vec<Result<(usize, Message, f64), FedError>> = clients
            .par_iter_mut()
            .enumerate()
            .filter(|(k, _)| selected[*k])
            .map(|(k, c)| {
                let incoming = message::decode(&broadcast.bytes, &c.model.layout(share))?;
                let out = client_local_update(c, Some(&incoming), cfg.local_epochs, cfg.batch_size)?;
                let msg = message::encode(MessageKind::Upload, c.esc_id, round, &out, bpp)?;
                Ok((k, msg, c.last_loss))
            })
            .collect();

        let (mut updates, mut weights, mut losses) = (Vec::new(), Vec::new(), Vec::new());
        let (mut up, mut down) = (0u64, 0u64);
        for res in uploads {
            let (k, msg, loss) = res?;
            observe(&msg);
            audit(&msg, share, declared, &head_ids)?;
            up += msg.len() as u64;
            down += broadcast.len() as u64;
            updates.push(message::decode(&msg.bytes, &layout)?);
            weights.push(sizes[k] as f64);
            losses.push(loss);
        }
        let total: f64 = weights.iter().sum();
        let gammas: Vec<f64> = if updates.len() == clients.len() {
            server.gammas.clone()
        } else {
            weights.iter().map(|w| w / total).collect()
        };
        server.global = server_aggregate(&updates, &gammas)?;

        // Evaluate what every client would deploy: the next broadcast's
        // weights, with FedPer heads kept local.
        let deployed = message::decode(
            &message::encode(MessageKind::Broadcast, SERVER_ID, round, &server.global, bpp)?.bytes,
            &layout,
        )?;
        for c in clients.iter_mut() {
            c.model.load(share, &deployed)?;
        }
        let mut report = evaluate_round(server.round, clients, |c| &c.model)?;
        report.train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        report.uplink_bytes = up;
        report.downlink_bytes = down;
        if cfg.record_wall_time {
            report.wall_time_s = Some(started.elapsed().as_secs_f64());
        }
        let done = report.global_val_recall_h1.is_some_and(|r| r > server.target_recall);
        history.push(report);
        if done {
            break;
        }
    }
    Ok(history)
}

fn participants(k: usize, cfg: &TrainingConfig, round: u32) -> Vec<bool> {
    if cfg.participation >= 1.0 {
        return vec![true; k];
    }
    let m = ((cfg.participation * k as f64).round() as usize).clamp(1, k);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, PARTICIPATION_TAG, round as u64])));
    let mut chosen = vec![false; k];
    for &i in &order[..m] {
        chosen[i] = true;
    }
    chosen
}

fn audit(
    msg: &Message,
    share: Share,
    declared: usize,
    head_ids: &std::collections::BTreeSet<radfed_autodiff::ParamId>,
) -> Result<(), FedError> {
    if share == Share::Base {
        if let Some(id) = msg.ids().find(|id| head_ids.contains(id)) {
            return Err(FedError::Privacy(format!("head parameter {id} in a {:?} message", msg.kind)));
        }
    }
    if msg.value_count() != declared {
        return Err(FedError::Privacy(format!(
            "message carries {} values, paradigm shares {declared}",
            msg.value_count()
        )));
    }
    Ok(())
}

fn evaluate_round<T>(
    round: usize,
    learners: &[T],
    model_of: impl Fn(&T) -> &PartitionedModel + Sync,
) -> Result<RoundReport, FedError>
where
    T: Sync + HasDataset,
{
    let per: Vec<Result<ConfusionMatrix, FedError>> = learners
        .par_iter()
        .map(|l| {
            let val: Vec<&Frame> = l.dataset().val.iter().collect();
            if val.is_empty() {
                return Ok(ConfusionMatrix::default());
            }
            Ok(confusion_of(model_of(l), &val)?)
        })
        .collect();
    let per: Vec<ConfusionMatrix> = per.into_iter().collect::<Result<_, _>>()?;
    let pooled = per.iter().fold(ConfusionMatrix::default(), |a, b| a.merge(b));
    Ok(RoundReport {
        round,
        per_client_val_accuracy: per.iter().map(|c| c.accuracy().unwrap_or(f64::NAN)).collect(),
        per_client_recall_h0: per.iter().map(|c| c.recall_h0().ok()).collect(),
        per_client_recall_h1: per.iter().map(|c| c.recall_h1().ok()).collect(),
        global_val_accuracy: pooled.accuracy().unwrap_or(f64::NAN),
        global_val_recall_h1: pooled.recall_h1().ok(),
        train_loss: f64::NAN,
        uplink_bytes: 0,
        downlink_bytes: 0,
        wall_time_s: None,
    })
}

trait HasDataset {
    fn dataset(&self) -> &ClientDataset;
}

impl HasDataset for ClientState<'_> {
    fn dataset(&self) -> &ClientDataset {
        self.dataset
    }
}

impl HasDataset for &ClientDataset {
    fn dataset(&self) -> &ClientDataset {
        self
    }
}

/// Trains each client on its own data only. Runs every round; nothing is
/// communicated.
pub fn run_local_only(clients: &mut [ClientState<'_>], cfg: &TrainingConfig) -> Result<Vec<RoundReport>, FedError> {
    cfg.validate()?;
    let mut history = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let started = Instant::now();
        let losses: Vec<Result<f64, FedError>> = clients
            .par_iter_mut()
            .map(|c| {
                client_local_update(c, None, cfg.local_epochs, cfg.batch_size)?;
                Ok(c.last_loss)
            })
            .collect();
        let losses: Vec<f64> = losses.into_iter().collect::<Result<_, _>>()?;
        let mut report = evaluate_round(round, clients, |c| &c.model)?;
        report.train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        if cfg.record_wall_time {
            report.wall_time_s = Some(started.elapsed().as_secs_f64());
        }
        history.push(report);
    }
    Ok(history)
}

/// Concatenates every client's splits into one dataset with id 0.
pub fn pool_clients(clients: &[ClientDataset]) -> ClientDataset {
    let mixture = clients.iter().fold([0.0; 2], |acc, c| {
        let w = c.len() as f64;
        [acc[0] + w * c.radar_mixture[0], acc[1] + w * c.radar_mixture[1]]
    });
    let n: f64 = clients.iter().map(|c| c.len() as f64).sum();
    ClientDataset {
        esc_id: 0,
        radar_mixture: if n > 0.0 { [mixture[0] / n, mixture[1] / n] } else { [0.5, 0.5] },
        power_offset_db: 0.0,
        train: clients.iter().flat_map(|c| c.train.iter().cloned()).collect(),
        val: clients.iter().flat_map(|c| c.val.iter().cloned()).collect(),
        test: clients.iter().flat_map(|c| c.test.iter().cloned()).collect(),
    }
}

/// Trains one model on pooled data. Per-client columns of the reports
/// score that single model on each client's validation split.
pub fn run_centralized(
    pooled: &ClientDataset,
    clients: &[ClientDataset],
    model_cfg: &ResidualCnnConfig,
    cfg: &TrainingConfig,
) -> Result<(PartitionedModel, Vec<RoundReport>), FedError> {
    cfg.validate()?;
    if pooled.train.is_empty() {
        return Err(FedError::EmptyTrainSplit(pooled.esc_id));
    }
    let mut learner = ClientState::new(pooled, build_model(model_cfg, cfg.seed)?, Share::Full, cfg)?;
    let views: Vec<&ClientDataset> = clients.iter().collect();
    let mut history = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let started = Instant::now();
        client_local_update(&mut learner, None, cfg.local_epochs, cfg.batch_size)?;
        let model = &learner.model;
        let mut report = evaluate_round(round, &views, |_| model)?;
        report.train_loss = learner.last_loss;
        if cfg.record_wall_time {
            report.wall_time_s = Some(started.elapsed().as_secs_f64());
        }
        history.push(report);
    }
    Ok((learner.model, history))
}

