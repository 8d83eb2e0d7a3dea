//! On-disk dataset layout.
//!
//! A dataset directory holds `manifest.json`, one `client_<k>.bin` shard per
//! client and `global_test.bin`. Shards are little-endian:
//!
//! ```text
//! header: b"RFEDSHRD" | version u32 | esc_id u32 (u32::MAX for global test)
//!         | height u32 | width u32 | channels u32 | frames u64
//! frame:  split u8 | label u8 | subcategory u8 | radar type u8 (0 none, 1, 2)
//!         | esc_id u32 | seed u64 | sinr target f64 | achieved sinr f64
//!         | plane f64 * height*width | radar mask u8 * height*width
//!         | comm mask u8 * height*width
//! ```
//!
//! Absent SINR values are stored as NaN. Channels are identical copies, so
//! only one plane is written.

use std::fs;
use std::path::Path;

use radfed_autodiff::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ClientDataset, DatasetConfig, FederatedDataset, Split};
use crate::radar::RadarType;
use crate::scene::{Frame, FrameSpec, Subcategory};
use crate::stft::replicate_channels;
use crate::support::{Label, SupportMask};
use crate::{Result, SignalError};

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"RFEDSHRD";
const GLOBAL_ID: u32 = u32::MAX;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GLOBAL_TEST_FILE: &str = "global_test.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub file: String,
    pub esc_id: Option<u32>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub total_frames: usize,
    pub config: DatasetConfig,
    pub clients: Vec<ShardEntry>,
    pub global_test: ShardEntry,
}

pub fn client_file(esc_id: u32) -> String {
    format!("client_{esc_id}.bin")
}

pub fn save_dataset(data: &FederatedDataset, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let (h, w) = (data.config.channel.render.height, data.config.channel.render.width);
    let channels = data.config.channel.render.channels;
    let mut clients = Vec::new();
    for c in &data.clients {
        let frames: Vec<(Split, &Frame)> = [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .flat_map(|s| c.split(s).iter().map(move |f| (s, f)))
            .collect();
        let bytes = encode_shard(c.esc_id, h, w, channels, &frames)?;
        let file = client_file(c.esc_id);
        fs::write(dir.join(&file), &bytes)?;
        clients.push(ShardEntry {
            file,
            esc_id: Some(c.esc_id),
            train: c.train.len(),
            val: c.val.len(),
            test: c.test.len(),
            sha256: digest(&bytes),
        });
    }
    let frames: Vec<(Split, &Frame)> = data.global_test.iter().map(|f| (Split::Test, f)).collect();
    let bytes = encode_shard(GLOBAL_ID, h, w, channels, &frames)?;
    fs::write(dir.join(GLOBAL_TEST_FILE), &bytes)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        master_seed: data.config.master_seed,
        total_frames: data.len(),
        config: data.config.clone(),
        clients,
        global_test: ShardEntry {
            file: GLOBAL_TEST_FILE.into(),
            esc_id: None,
            train: 0,
            val: 0,
            test: data.global_test.len(),
            sha256: digest(&bytes),
        },
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(SignalError::Version { found, expected: SCHEMA_VERSION });
    }
    Ok(serde_json::from_value(value)?)
}

pub fn load_dataset(dir: &Path) -> Result<FederatedDataset> {
    let manifest = read_manifest(dir)?;
    let cfg = &manifest.config;
    let mut clients = Vec::new();
    for entry in &manifest.clients {
        let frames = read_shard(dir, entry)?;
        let esc_id = entry.esc_id.ok_or_else(|| SignalError::Format(format!("{} has no esc id", entry.file)))?;
        let k = esc_id as usize;
        let mixture = *cfg
            .mixtures
            .get(k)
            .ok_or_else(|| SignalError::Format(format!("no mixture for client {esc_id}")))?;
        let mut c = ClientDataset {
            esc_id,
            radar_mixture: mixture,
            power_offset_db: cfg.power_offset(k),
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (split, frame) in frames {
            match split {
                Split::Train => c.train.push(frame),
                Split::Val => c.val.push(frame),
                Split::Test => c.test.push(frame),
            }
        }
        if (c.train.len(), c.val.len(), c.test.len()) != (entry.train, entry.val, entry.test) {
            return Err(SignalError::Format(format!("{} split counts disagree with the manifest", entry.file)));
        }
        clients.push(c);
    }
    let global_test: Vec<Frame> = read_shard(dir, &manifest.global_test)?.into_iter().map(|(_, f)| f).collect();
    if global_test.len() != manifest.global_test.test {
        return Err(SignalError::Format("global test count disagrees with the manifest".into()));
    }
    Ok(FederatedDataset { config: manifest.config, clients, global_test })
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_shard(dir: &Path, entry: &ShardEntry) -> Result<Vec<(Split, Frame)>> {
    let bytes = fs::read(dir.join(&entry.file))?;
    let actual = digest(&bytes);
    if actual != entry.sha256 {
        return Err(SignalError::Checksum { file: entry.file.clone(), expected: entry.sha256.clone(), actual });
    }
    decode_shard(&bytes, &entry.file)
}

fn encode_shard(esc_id: u32, h: usize, w: usize, channels: usize, frames: &[(Split, &Frame)]) -> Result<Vec<u8>> {
    let cells = h * w;
    let mut out = Vec::with_capacity(40 + frames.len() * (40 + 10 * cells));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    out.extend_from_slice(&esc_id.to_le_bytes());
    for v in [h, w, channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(frames.len() as u64).to_le_bytes());
    for (split, f) in frames {
        if f.spectrogram.shape() != [channels, h, w] {
            return Err(SignalError::Format(format!(
                "frame shape {:?} does not match [{channels}, {h}, {w}]",
                f.spectrogram.shape()
            )));
        }
        let data = f.spectrogram.data();
        let plane = &data[..cells];
        if data.chunks(cells).any(|c| c != plane) {
            return Err(SignalError::Format("spectrogram channels differ; cannot store one plane".into()));
        }
        out.push(split.code());
        out.push(f.label.class() as u8);
        out.push(f.spec.subcategory.index() as u8);
        out.push(match f.spec.radar_type {
            None => 0,
            Some(RadarType::Type1) => 1,
            Some(RadarType::Type2) => 2,
        });
        out.extend_from_slice(&f.spec.esc_id.to_le_bytes());
        out.extend_from_slice(&f.spec.seed.to_le_bytes());
        out.extend_from_slice(&f.spec.sinr_db.unwrap_or(f64::NAN).to_le_bytes());
        out.extend_from_slice(&f.achieved_sinr_db.unwrap_or(f64::NAN).to_le_bytes());
        for v in plane {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for m in [&f.radar_support, &f.comm_support] {
            if m.shape() != (h, w) {
                return Err(SignalError::Format("support mask shape differs from the image".into()));
            }
            out.extend(m.cells().iter().map(|&b| b as u8));
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(SignalError::Format(format!("{} is truncated at byte {}", self.file, self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode_shard(bytes: &[u8], file: &str) -> Result<Vec<(Split, Frame)>> {
    let mut r = Reader { bytes, pos: 0, file };
    if r.take(8)? != MAGIC {
        return Err(SignalError::Format(format!("{file} is not a dataset shard")));
    }
    let version = r.u32()?;
    if version != SCHEMA_VERSION {
        return Err(SignalError::Version { found: version, expected: SCHEMA_VERSION });
    }
    let _esc = r.u32()?;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let count = r.u64()? as usize;
    let cells = h * w;
    let bad = |what: &str| SignalError::Format(format!("{file}: invalid {what}"));
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let split = Split::from_code(r.u8()?).ok_or_else(|| bad("split"))?;
        let label = Label::from_class(r.u8()? as usize).ok_or_else(|| bad("label"))?;
        let subcategory = Subcategory::from_index(r.u8()? as usize).ok_or_else(|| bad("subcategory"))?;
        let radar_type = match r.u8()? {
            0 => None,
            1 => Some(RadarType::Type1),
            2 => Some(RadarType::Type2),
            _ => return Err(bad("radar type")),
        };
        let esc_id = r.u32()?;
        let seed = r.u64()?;
        let opt = |v: f64| (!v.is_nan()).then_some(v);
        let sinr_db = opt(r.f64()?);
        let achieved_sinr_db = opt(r.f64()?);
        let plane: Vec<f64> = r.take(cells * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut mask = || -> Result<SupportMask> {
            let cells = r.take(cells)?.iter().map(|&b| b != 0).collect();
            SupportMask::new(h, w, cells)
        };
        let radar_support = mask()?;
        let comm_support = mask()?;
        let spectrogram: Tensor = replicate_channels(&plane, h, w, channels);
        frames.push((
            split,
            Frame {
                spectrogram,
                label,
                spec: FrameSpec { subcategory, radar_type, esc_id, sinr_db, seed },
                radar_support,
                comm_support,
                achieved_sinr_db,
            },
        ));
    }
    if r.pos != bytes.len() {
        return Err(SignalError::Format(format!("{file} has trailing bytes")));
    }
    Ok(frames)
}
