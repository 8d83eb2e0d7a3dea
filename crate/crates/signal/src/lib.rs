//! Labeled spectrogram synthesis for shared-band radar interference
//! detection.
//!
//! A frame is a 20 ms snapshot of a 10 MHz channel that may contain a pulsed
//! radar burst, an LTE carrier, a 5G carrier and white noise. Each frame is
//! labeled by whether the radar and commercial time-frequency supports
//! intersect, and datasets are split across simulated sensors with
//! configurable radar-type mixtures and power offsets.

pub mod comm;
pub mod dataset;
pub mod mix;
pub mod radar;
pub mod scene;
pub mod stft;
pub mod store;
pub mod support;

mod error;
mod seed;

pub use comm::{gen_comm_waveform, CommProfile, CommTech, DutyPattern};
pub use dataset::{
    build_client_datasets, plan_client_datasets, ClientDataset, ClientPlan, DatasetConfig, FederatedDataset, Split,
};
pub use error::SignalError;
pub use mix::{measure_sinr_db, mix_at_sinr, Mixture};
pub use radar::{gen_radar_waveform, PulseBurst, RadarProfile, RadarType, RadarWaveform};
pub use scene::{gen_frame, ChannelParams, Frame, FrameSpec, Subcategory, MIN_SINR_DB};
pub use seed::derive_seed;
pub use stft::{stft_magnitude, stft_spectrogram, RenderParams, Spectrogram};
pub use store::{load_dataset, read_manifest, save_dataset, Manifest};
pub use support::{label_overlap, Label, SupportMask};

pub type Result<T, E = SignalError> = std::result::Result<T, E>;
