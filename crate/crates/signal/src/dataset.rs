//! Per-sensor dataset planning and generation.

use log::warn;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::radar::RadarType;
use crate::scene::{gen_frame, ChannelParams, Frame, FrameSpec, Subcategory};
use crate::seed::derive_seed;
use crate::{Result, SignalError};

const TAG_RADAR: u64 = 1;
const TAG_SINR: u64 = 2;
const TAG_SPLIT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub clients: usize,
    pub frames_per_subcat: usize,
    /// Per-client `[Type1, Type2]` proportions.
    pub mixtures: Vec<[f64; 2]>,
    /// Per-client dB offset on commercial signal power.
    pub comm_power_offsets_db: Vec<f64>,
    pub sinr_db: (f64, f64),
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub master_seed: u64,
    pub channel: ChannelParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            clients: 5,
            frames_per_subcat: 50,
            mixtures: vec![[1.0, 0.0], [0.8, 0.2], [0.5, 0.5], [0.2, 0.8], [0.0, 1.0]],
            comm_power_offsets_db: vec![0.0, 2.0, -2.0, 1.0, -1.0],
            sinr_db: (20.0, 24.0),
            val_fraction: 0.1,
            test_fraction: 0.1,
            master_seed: 2024,
            channel: ChannelParams::default(),
        }
    }
}

impl DatasetConfig {
    pub fn full_scale() -> Self {
        Self { frames_per_subcat: 500, ..Self::default() }
    }

    pub fn iid(clients: usize) -> Self {
        Self {
            clients,
            mixtures: vec![[0.5, 0.5]; clients],
            comm_power_offsets_db: vec![0.0; clients],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(SignalError::Config("need at least one client".into()));
        }
        if self.frames_per_subcat == 0 {
            return Err(SignalError::Config("frames_per_subcat must be positive".into()));
        }
        if self.mixtures.len() != self.clients {
            return Err(SignalError::Config(format!(
                "{} mixture rows for {} clients",
                self.mixtures.len(),
                self.clients
            )));
        }
        for (k, row) in self.mixtures.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row[0] + row[1] - 1.0).abs() > 1e-9 {
                return Err(SignalError::Config(format!("mixture row {k} {row:?} is not a distribution")));
            }
        }
        if !self.comm_power_offsets_db.is_empty() && self.comm_power_offsets_db.len() != self.clients {
            return Err(SignalError::Config(format!(
                "{} power offsets for {} clients",
                self.comm_power_offsets_db.len(),
                self.clients
            )));
        }
        if !(self.sinr_db.0 <= self.sinr_db.1) || !self.sinr_db.0.is_finite() || !self.sinr_db.1.is_finite() {
            return Err(SignalError::Config(format!("bad SINR range {:?}", self.sinr_db)));
        }
        if self.sinr_db.0 < crate::scene::MIN_SINR_DB {
            return Err(SignalError::Config(format!(
                "SINR floor {} dB is below {} dB",
                self.sinr_db.0,
                crate::scene::MIN_SINR_DB
            )));
        }
        let fractions = [self.val_fraction, self.test_fraction];
        if fractions.iter().any(|f| !(0.0..1.0).contains(f)) || self.val_fraction + self.test_fraction >= 1.0 {
            return Err(SignalError::Config("val and test fractions must leave a training share".into()));
        }
        self.channel.validate()
    }

    pub fn power_offset(&self, client: usize) -> f64 {
        self.comm_power_offsets_db.get(client).copied().unwrap_or(0.0)
    }

    /// Channel parameters seen by one client.
    pub fn client_channel(&self, client: usize) -> ChannelParams {
        ChannelParams { comm_power_offset_db: self.power_offset(client), ..self.channel.clone() }
    }

    pub fn total_frames(&self) -> usize {
        self.clients * Subcategory::ALL.len() * self.frames_per_subcat
    }
}

/// Frame specs for one client, already assigned to splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPlan {
    pub esc_id: u32,
    pub train: Vec<FrameSpec>,
    pub val: Vec<FrameSpec>,
    pub test: Vec<FrameSpec>,
}

impl ClientPlan {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = (Split, &FrameSpec)> {
        self.train
            .iter()
            .map(|s| (Split::Train, s))
            .chain(self.val.iter().map(|s| (Split::Val, s)))
            .chain(self.test.iter().map(|s| (Split::Test, s)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub esc_id: u32,
    pub radar_mixture: [f64; 2],
    pub power_offset_db: f64,
    pub train: Vec<Frame>,
    pub val: Vec<Frame>,
    pub test: Vec<Frame>,
}

impl ClientDataset {
    pub fn split(&self, split: Split) -> &[Frame] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub config: DatasetConfig,
    pub clients: Vec<ClientDataset>,
    /// Union of every client's test split, in client order.
    pub global_test: Vec<Frame>,
}

impl FederatedDataset {
    pub fn len(&self) -> usize {
        self.clients.iter().map(ClientDataset::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deterministic frame specs and split assignment, without rendering.
pub fn plan_client_datasets(cfg: &DatasetConfig) -> Result<Vec<ClientPlan>> {
    cfg.validate()?;
    if cfg.frames_per_subcat < 10 {
        warn!(
            "frames_per_subcat = {} is below 10; split fractions will be coarse",
            cfg.frames_per_subcat
        );
    }
    let seed = cfg.master_seed;
    let per = cfg.frames_per_subcat;
    let n_test = (per as f64 * cfg.test_fraction).round() as usize;
    let n_val = ((per as f64 * cfg.val_fraction).round() as usize).min(per - n_test);
    let mut plans = Vec::with_capacity(cfg.clients);
    for k in 0..cfg.clients {
        let mut plan = ClientPlan { esc_id: k as u32, train: Vec::new(), val: Vec::new(), test: Vec::new() };
        let p_type1 = cfg.mixtures[k][0];
        for sub in Subcategory::ALL {
            let s = sub.index() as u64;
            let specs: Vec<FrameSpec> = (0..per as u64)
                .map(|i| {
                    let radar_type = sub.has_radar().then(|| {
                        let mut r = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, k as u64, s, i, TAG_RADAR]));
                        if r.random::<f64>() < p_type1 {
                            RadarType::Type1
                        } else {
                            RadarType::Type2
                        }
                    });
                    let sinr_db = sub.has_radar().then(|| {
                        let mut r = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, k as u64, s, i, TAG_SINR]));
                        if cfg.sinr_db.1 > cfg.sinr_db.0 {
                            r.random_range(cfg.sinr_db.0..cfg.sinr_db.1)
                        } else {
                            cfg.sinr_db.0
                        }
                    });
                    FrameSpec {
                        subcategory: sub,
                        radar_type,
                        esc_id: k as u32,
                        sinr_db,
                        seed: derive_seed(&[seed, k as u64, s, i]),
                    }
                })
                .collect();
            let mut order: Vec<usize> = (0..per).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, k as u64, s, TAG_SPLIT])));
            let mut split = vec![Split::Train; per];
            for &i in &order[..n_test] {
                split[i] = Split::Test;
            }
            for &i in &order[n_test..n_test + n_val] {
                split[i] = Split::Val;
            }
            for (spec, sp) in specs.into_iter().zip(split) {
                match sp {
                    Split::Train => plan.train.push(spec),
                    Split::Val => plan.val.push(spec),
                    Split::Test => plan.test.push(spec),
                }
            }
        }
        plans.push(plan);
    }
    Ok(plans)
}

/// Renders every planned frame. Frames are generated in parallel but each
/// depends only on its own spec, so the result is independent of thread
/// count.
pub fn build_client_datasets(cfg: &DatasetConfig) -> Result<FederatedDataset> {
    let plans = plan_client_datasets(cfg)?;
    let mut clients = Vec::with_capacity(plans.len());
    for plan in plans {
        let channel = cfg.client_channel(plan.esc_id as usize);
        let render = |specs: &[FrameSpec]| -> Result<Vec<Frame>> {
            specs.par_iter().map(|s| gen_frame(s, &channel)).collect()
        };
        let k = plan.esc_id as usize;
        clients.push(ClientDataset {
            esc_id: plan.esc_id,
            radar_mixture: cfg.mixtures[k],
            power_offset_db: cfg.power_offset(k),
            train: render(&plan.train)?,
            val: render(&plan.val)?,
            test: render(&plan.test)?,
        });
    }
    let global_test = clients.iter().flat_map(|c| c.test.iter().cloned()).collect();
    Ok(FederatedDataset { config: cfg.clone(), clients, global_test })
}
