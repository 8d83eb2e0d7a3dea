//! Residual CNN with an explicit shared-base / private-head split.
//!
//! Layout: a 3x3 stem convolution, four residual blocks that each halve the
//! spatial size, global average pooling, then a two-layer classifier head.
//! Everything up to and including the pooling layer is base; the two
//! classifier layers are head.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use radfed_autodiff::{ParamId, Parameter, Role, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ModelError;

const CHECKPOINT_MAGIC: &[u8; 8] = b"RFEDCKPT";
const CHECKPOINT_VERSION: u32 = 1;
const MIN_INPUT_EXTENT: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualCnnConfig {
    pub input_channels: usize,
    /// `(height, width)` of the spectrogram image.
    pub input_size: (usize, usize),
    pub stem_channels: usize,
    pub block_channels: Vec<usize>,
    pub head_hidden: usize,
    pub num_classes: usize,
}

impl Default for ResidualCnnConfig {
    fn default() -> Self {
        Self {
            input_channels: 3,
            input_size: (64, 64),
            stem_channels: 16,
            block_channels: vec![32, 64, 128, 128],
            head_hidden: 128,
            num_classes: 2,
        }
    }
}

impl ResidualCnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.block_channels.len() != 4 {
            return bad(format!(
                "expected exactly 4 residual blocks, got {}",
                self.block_channels.len()
            ));
        }
        if self.num_classes != 2 {
            return bad(format!("binary task needs 2 classes, got {}", self.num_classes));
        }
        if self.head_hidden == 0 {
            return bad("head_hidden must be positive; an empty head cannot be personalized".into());
        }
        if self.input_channels == 0 || self.stem_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        let mut prev = self.stem_channels;
        for &c in &self.block_channels {
            if c < prev {
                return bad(format!(
                    "channel plan must be non-decreasing, got {} after {prev}",
                    c
                ));
            }
            prev = c;
        }
        let (h, w) = self.input_size;
        if h < MIN_INPUT_EXTENT || w < MIN_INPUT_EXTENT {
            return Err(ModelError::InputTooSmall { height: h, width: w, min: MIN_INPUT_EXTENT });
        }
        Ok(())
    }

    /// Channels entering the head (output of global average pooling).
    pub fn feature_channels(&self) -> usize {
        *self.block_channels.last().unwrap_or(&self.stem_channels)
    }

    /// Spatial size after each residual block.
    pub fn stage_sizes(&self) -> Vec<(usize, usize)> {
        let (mut h, mut w) = self.input_size;
        self.block_channels
            .iter()
            .map(|_| {
                h = h.div_ceil(2);
                w = w.div_ceil(2);
                (h, w)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub total: usize,
    pub base: usize,
    pub head: usize,
}

/// Convolution/linear layer as indices into the parameter list.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    conv1: Affine,
    conv2: Affine,
    /// `None` means a parameter-free strided identity shortcut.
    projection: Option<Affine>,
}

#[derive(Debug, Clone, PartialEq)]
struct Architecture {
    stem: Affine,
    blocks: Vec<Block>,
    fc1: Affine,
    fc2: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedModel {
    config: ResidualCnnConfig,
    parameters: Vec<Parameter>,
    names: Vec<String>,
    base_ids: BTreeSet<ParamId>,
    head_ids: BTreeSet<ParamId>,
    arch: Architecture,
}

struct Builder {
    rng: ChaCha8Rng,
    parameters: Vec<Parameter>,
    names: Vec<String>,
}

impl Builder {
    fn push(&mut self, name: String, role: Role, shape: Vec<usize>, bound: f64) -> usize {
        let n: usize = shape.iter().product();
        let data = if bound == 0.0 {
            vec![0.0; n]
        } else {
            (0..n).map(|_| self.rng.random_range(-bound..bound)).collect()
        };
        let id = ParamId(self.parameters.len() as u32);
        let tensor = Tensor::new(shape, data).expect("shape is positive");
        self.parameters.push(Parameter::new(id, role, tensor));
        self.names.push(name);
        self.parameters.len() - 1
    }

    /// He-uniform weights (ReLU gain), zero bias.
    fn conv(&mut self, name: &str, out_c: usize, in_c: usize, k: usize) -> Affine {
        let fan_in = (in_c * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        Affine {
            weight: self.push(format!("{name}.weight"), Role::Base, vec![out_c, in_c, k, k], bound),
            bias: self.push(format!("{name}.bias"), Role::Base, vec![out_c], 0.0),
        }
    }

    /// Uniform(+-1/sqrt(fan_in)) weights and bias.
    fn linear(&mut self, name: &str, out_f: usize, in_f: usize) -> Affine {
        let bound = 1.0 / (in_f as f64).sqrt();
        Affine {
            weight: self.push(format!("{name}.weight"), Role::Head, vec![out_f, in_f], bound),
            bias: self.push(format!("{name}.bias"), Role::Head, vec![out_f], bound),
        }
    }
}

pub fn build_model(config: &ResidualCnnConfig, seed: u64) -> Result<PartitionedModel, ModelError> {
    config.validate()?;
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        parameters: Vec::new(),
        names: Vec::new(),
    };
    let stem = b.conv("stem", config.stem_channels, config.input_channels, 3);
    let mut in_c = config.stem_channels;
    let mut blocks = Vec::with_capacity(4);
    for (i, &out_c) in config.block_channels.iter().enumerate() {
        let name = format!("block{}", i + 1);
        let conv1 = b.conv(&format!("{name}.conv1"), out_c, in_c, 3);
        let conv2 = b.conv(&format!("{name}.conv2"), out_c, out_c, 3);
        let projection = (in_c != out_c).then(|| b.conv(&format!("{name}.shortcut"), out_c, in_c, 1));
        blocks.push(Block { conv1, conv2, projection });
        in_c = out_c;
    }
    let fc1 = b.linear("head.fc1", config.head_hidden, in_c);
    let fc2 = b.linear("head.fc2", config.num_classes, config.head_hidden);

    let (base_ids, head_ids) = b.parameters.iter().fold(
        (BTreeSet::new(), BTreeSet::new()),
        |(mut base, mut head), p| {
            match p.role() {
                Role::Base => base.insert(p.id()),
                Role::Head => head.insert(p.id()),
            };
            (base, head)
        },
    );
    Ok(PartitionedModel {
        config: config.clone(),
        parameters: b.parameters,
        names: b.names,
        base_ids,
        head_ids,
        arch: Architecture { stem, blocks, fc1, fc2 },
    })
}

pub fn count_parameters(model: &PartitionedModel) -> ParameterCounts {
    let (mut base, mut head) = (0, 0);
    for p in &model.parameters {
        match p.role() {
            Role::Base => base += p.len(),
            Role::Head => head += p.len(),
        }
    }
    ParameterCounts { total: base + head, base, head }
}

/// Which part of the model a weight vector carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Share {
    Base,
    /// Only the head. Never sent by any paradigm; used to inspect private
    /// parameters.
    Head,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutEntry {
    pub id: ParamId,
    pub offset: usize,
    pub len: usize,
}

/// Flat parameter values plus the descriptors needed to scatter them back.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub layout: Vec<LayoutEntry>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layout.iter().map(|e| e.id)
    }

    pub fn slice(&self, entry: &LayoutEntry) -> &[f64] {
        &self.values[entry.offset..entry.offset + entry.len]
    }
}

impl PartitionedModel {
    pub fn config(&self) -> &ResidualCnnConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.parameters
    }

    pub fn parameter(&self, id: ParamId) -> Option<&Parameter> {
        self.parameters.get(id.0 as usize)
    }

    pub fn name(&self, id: ParamId) -> Option<&str> {
        self.names.get(id.0 as usize).map(String::as_str)
    }

    pub fn base_ids(&self) -> &BTreeSet<ParamId> {
        &self.base_ids
    }

    pub fn head_ids(&self) -> &BTreeSet<ParamId> {
        &self.head_ids
    }

    pub fn layout(&self, share: Share) -> Vec<LayoutEntry> {
        let mut offset = 0;
        self.parameters
            .iter()
            .filter(|p| match share {
                Share::Full => true,
                Share::Base => p.role() == Role::Base,
                Share::Head => p.role() == Role::Head,
            })
            .map(|p| {
                let e = LayoutEntry { id: p.id(), offset, len: p.len() };
                offset += p.len();
                e
            })
            .collect()
    }

    pub fn flatten(&self, share: Share) -> WeightVector {
        let layout = self.layout(share);
        let mut values = Vec::with_capacity(layout.last().map_or(0, |e| e.offset + e.len));
        for e in &layout {
            values.extend_from_slice(self.parameters[e.id.0 as usize].tensor.data());
        }
        WeightVector { values, layout }
    }

    /// Overwrites the parameters named by `share` with `wv`; every other
    /// parameter is untouched.
    pub fn load(&mut self, share: Share, wv: &WeightVector) -> Result<(), ModelError> {
        let expected = self.layout(share);
        if expected != wv.layout {
            return Err(ModelError::LayoutMismatch(describe_mismatch(&expected, &wv.layout)));
        }
        let total = expected.last().map_or(0, |e| e.offset + e.len);
        if wv.values.len() != total {
            return Err(ModelError::LayoutMismatch(format!(
                "layout covers {total} values but vector holds {}",
                wv.values.len()
            )));
        }
        for e in &expected {
            self.parameters[e.id.0 as usize]
                .tensor
                .data_mut()
                .copy_from_slice(wv.slice(e));
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.parameters {
            p.tensor.clear_grad();
        }
    }

    fn forward(&self, tape: &mut Tape, batch: Tensor) -> Result<Var, ModelError> {
        let s = batch.shape();
        let (h, w) = self.config.input_size;
        if s.len() != 4 || s[1] != self.config.input_channels || s[2] != h || s[3] != w {
            return Err(ModelError::InputShape {
                expected: vec![0, self.config.input_channels, h, w],
                actual: s.to_vec(),
            });
        }
        let vars: Vec<Var> = self.parameters.iter().map(|p| tape.param(p)).collect();
        let a = &self.arch;
        let x = tape.input(batch);
        let mut h = tape.conv2d(x, vars[a.stem.weight], vars[a.stem.bias], 1, 1)?;
        h = tape.relu(h);
        for block in &a.blocks {
            let m = tape.conv2d(h, vars[block.conv1.weight], vars[block.conv1.bias], 2, 1)?;
            let m = tape.relu(m);
            let m = tape.conv2d(m, vars[block.conv2.weight], vars[block.conv2.bias], 1, 1)?;
            let shortcut = match block.projection {
                Some(p) => tape.conv2d(h, vars[p.weight], vars[p.bias], 2, 0)?,
                None => tape.subsample(h, 2)?,
            };
            let sum = tape.add(m, shortcut)?;
            h = tape.relu(sum);
        }
        let pooled = tape.global_avg_pool(h)?;
        let z = tape.linear(pooled, vars[a.fc1.weight], vars[a.fc1.bias])?;
        let z = tape.relu(z);
        Ok(tape.linear(z, vars[a.fc2.weight], vars[a.fc2.bias])?)
    }

    /// Logits `[N, num_classes]` for a `[N, C, H, W]` batch.
    pub fn logits(&self, batch: Tensor) -> Result<Tensor, ModelError> {
        let mut tape = Tape::inference();
        let z = self.forward(&mut tape, batch)?;
        Ok(tape.value(z).clone())
    }

    /// Mean cross-entropy on the batch; gradients are written into every
    /// parameter's grad buffer.
    pub fn loss_and_grad(&mut self, batch: Tensor, labels: &[usize]) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let z = self.forward(&mut tape, batch)?;
        let loss = tape.softmax_cross_entropy(z, labels)?;
        let value = tape.value(loss).data()[0];
        let grads = tape.backward(loss)?;
        grads.write_to(&mut self.parameters)?;
        Ok(value)
    }

    pub fn save_checkpoint<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        let config = serde_json::to_vec(&self.config)?;
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(config.len() as u32).to_le_bytes())?;
        out.write_all(&config)?;
        let layout = self.layout(Share::Full);
        out.write_all(&(layout.len() as u32).to_le_bytes())?;
        for e in &layout {
            let role = match self.parameters[e.id.0 as usize].role() {
                Role::Base => 0u8,
                Role::Head => 1u8,
            };
            out.write_all(&e.id.0.to_le_bytes())?;
            out.write_all(&[role])?;
            out.write_all(&(e.offset as u64).to_le_bytes())?;
            out.write_all(&(e.len as u64).to_le_bytes())?;
        }
        for p in &self.parameters {
            for v in p.tensor.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(mut input: R) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a model checkpoint".into()));
        }
        let version = read_u32(&mut input)?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let config_len = read_u32(&mut input)? as usize;
        let mut config = vec![0u8; config_len];
        input.read_exact(&mut config)?;
        let config: ResidualCnnConfig = serde_json::from_slice(&config)?;
        let mut model = build_model(&config, 0)?;
        let expected = model.layout(Share::Full);
        let entries = read_u32(&mut input)? as usize;
        if entries != expected.len() {
            return Err(bad(format!("{entries} layout entries, model has {}", expected.len())));
        }
        for e in &expected {
            let id = read_u32(&mut input)?;
            let mut role = [0u8; 1];
            input.read_exact(&mut role)?;
            let offset = read_u64(&mut input)? as usize;
            let len = read_u64(&mut input)? as usize;
            let want_role = u8::from(model.parameters[e.id.0 as usize].role() == Role::Head);
            if id != e.id.0 || offset != e.offset || len != e.len || role[0] != want_role {
                return Err(bad(format!("layout entry for parameter {} does not match config", e.id)));
            }
        }
        let mut buf = [0u8; 8];
        for p in &mut model.parameters {
            for v in p.tensor.data_mut() {
                input.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        Ok(model)
    }
}

fn describe_mismatch(expected: &[LayoutEntry], actual: &[LayoutEntry]) -> String {
    if expected.len() != actual.len() {
        return format!("expected {} tensors, got {}", expected.len(), actual.len());
    }
    expected
        .iter()
        .zip(actual)
        .find(|(a, b)| a != b)
        .map(|(a, b)| {
            format!(
                "entry mismatch: expected id {} at {}+{}, got id {} at {}+{}",
                a.id, a.offset, a.len, b.id, b.offset, b.len
            )
        })
        .unwrap_or_else(|| "layouts differ".into())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ResidualCnnConfig {
        ResidualCnnConfig {
            input_channels: 3,
            input_size: (16, 16),
            stem_channels: 4,
            block_channels: vec![4, 8, 8, 16],
            head_hidden: 8,
            num_classes: 2,
        }
    }

    #[test]
    fn rejects_wrong_block_count() {
        let cfg = ResidualCnnConfig { block_channels: vec![8, 16, 32], ..tiny() };
        assert!(matches!(build_model(&cfg, 0), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn rejects_small_input() {
        let cfg = ResidualCnnConfig { input_size: (8, 32), ..tiny() };
        assert!(matches!(build_model(&cfg, 0), Err(ModelError::InputTooSmall { .. })));
    }

    #[test]
    fn rejects_empty_head() {
        let cfg = ResidualCnnConfig { head_hidden: 0, ..tiny() };
        assert!(build_model(&cfg, 0).is_err());
    }

    #[test]
    fn logits_have_two_columns() {
        let model = build_model(&tiny(), 3).unwrap();
        let batch = Tensor::zeros(vec![5, 3, 16, 16]).unwrap();
        assert_eq!(model.logits(batch).unwrap().shape(), &[5, 2]);
    }

    #[test]
    fn wrong_input_size_is_reported() {
        let model = build_model(&tiny(), 3).unwrap();
        let batch = Tensor::zeros(vec![1, 3, 32, 32]).unwrap();
        assert!(matches!(model.logits(batch), Err(ModelError::InputShape { .. })));
    }

    #[test]
    fn equal_channel_blocks_use_identity_shortcut() {
        let model = build_model(&tiny(), 0).unwrap();
        let projections: Vec<bool> = model.arch.blocks.iter().map(|b| b.projection.is_some()).collect();
        assert_eq!(projections, vec![false, true, false, true]);
    }
}
