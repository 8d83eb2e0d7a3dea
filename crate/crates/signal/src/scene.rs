//! Scenario construction: one labeled frame per `FrameSpec`.

use std::fmt;

use num_complex::Complex64;
use radfed_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comm::{gen_comm_waveform, CommProfile, CommTech, DutyPattern};
use crate::mix::{complex_noise, mix_at_sinr};
use crate::radar::{PulseBurst, RadarProfile, RadarType};
use crate::seed::derive_seed;
use crate::stft::{normalize_db, replicate_channels, stft_magnitude, RenderParams};
use crate::support::{label_overlap, Label, SupportMask};
use crate::{Result, SignalError};

/// Lowest SINR accepted when radar shares the frame with a commercial signal.
pub const MIN_SINR_DB: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subcategory {
    RadarFiveGOverlap,
    RadarLteOverlap,
    RadarBothOverlap,
    RadarOnly,
    FiveGOnly,
    LteOnly,
    LteFiveG,
    RadarFiveGDisjoint,
    RadarLteDisjoint,
}

impl Subcategory {
    pub const ALL: [Subcategory; 9] = [
        Subcategory::RadarFiveGOverlap,
        Subcategory::RadarLteOverlap,
        Subcategory::RadarBothOverlap,
        Subcategory::RadarOnly,
        Subcategory::FiveGOnly,
        Subcategory::LteOnly,
        Subcategory::LteFiveG,
        Subcategory::RadarFiveGDisjoint,
        Subcategory::RadarLteDisjoint,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).expect("listed")
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn hypothesis(self) -> Label {
        match self {
            Subcategory::RadarFiveGOverlap | Subcategory::RadarLteOverlap | Subcategory::RadarBothOverlap => {
                Label::H1
            }
            _ => Label::H0,
        }
    }

    pub fn has_radar(self) -> bool {
        !matches!(self, Subcategory::FiveGOnly | Subcategory::LteOnly | Subcategory::LteFiveG)
    }

    pub fn has_lte(self) -> bool {
        matches!(
            self,
            Subcategory::RadarLteOverlap
                | Subcategory::RadarBothOverlap
                | Subcategory::LteOnly
                | Subcategory::LteFiveG
                | Subcategory::RadarLteDisjoint
        )
    }

    pub fn has_five_g(self) -> bool {
        matches!(
            self,
            Subcategory::RadarFiveGOverlap
                | Subcategory::RadarBothOverlap
                | Subcategory::FiveGOnly
                | Subcategory::LteFiveG
                | Subcategory::RadarFiveGDisjoint
        )
    }

    pub fn has_comm(self) -> bool {
        self.has_lte() || self.has_five_g()
    }

    pub fn name(self) -> &'static str {
        match self {
            Subcategory::RadarFiveGOverlap => "radar+5g overlap",
            Subcategory::RadarLteOverlap => "radar+lte overlap",
            Subcategory::RadarBothOverlap => "radar+lte+5g overlap",
            Subcategory::RadarOnly => "radar only",
            Subcategory::FiveGOnly => "5g only",
            Subcategory::LteOnly => "lte only",
            Subcategory::LteFiveG => "lte+5g",
            Subcategory::RadarFiveGDisjoint => "radar+5g disjoint",
            Subcategory::RadarLteDisjoint => "radar+lte disjoint",
        }
    }
}

impl fmt::Display for Subcategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything about a frame that is fixed before rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub subcategory: Subcategory,
    pub radar_type: Option<RadarType>,
    pub esc_id: u32,
    /// SINR target; `None` for frames without radar.
    pub sinr_db: Option<f64>,
    pub seed: u64,
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        let sub = self.subcategory;
        if sub.has_radar() != self.radar_type.is_some() {
            return Err(SignalError::Config(format!(
                "{sub} frame with radar type {:?}",
                self.radar_type
            )));
        }
        match (sub.has_radar(), self.sinr_db) {
            (true, None) => return Err(SignalError::Config(format!("{sub} frame has no SINR target"))),
            (true, Some(s)) if !s.is_finite() => {
                return Err(SignalError::Config(format!("SINR target {s} is not finite")))
            }
            (true, Some(s)) if sub.has_comm() && s < MIN_SINR_DB => {
                return Err(SignalError::ImpossibleScene {
                    subcategory: sub.to_string(),
                    attempts: 0,
                    reason: format!("SINR {s} dB is below the {MIN_SINR_DB} dB floor"),
                })
            }
            (false, Some(_)) => return Err(SignalError::Config(format!("{sub} frame carries an SINR target"))),
            _ => {}
        }
        Ok(())
    }
}

/// Channel and rendering parameters shared by every frame of a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub sample_rate_hz: f64,
    pub duration_ms: f64,
    pub render: RenderParams,
    pub noise_dbm_per_mhz: f64,
    pub comm_power_dbm_per_mhz: (f64, f64),
    /// Added to every commercial signal's power (per-sensor feature skew).
    pub comm_power_offset_db: f64,
    pub support_threshold_db: f64,
    /// On-probability range for commercial slots.
    pub comm_duty: (f64, f64),
    /// Fraction of the frame that a time-disjoint burst may occupy.
    pub disjoint_window: (f64, f64),
    /// Extra image columns kept silent on each side of a time-disjoint burst.
    pub guard_columns: usize,
    /// Minimum gap between a frequency-disjoint carrier and the comm band.
    pub band_margin_hz: f64,
    pub max_attempts: u32,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            sample_rate_hz: 10e6,
            duration_ms: 20.0,
            render: RenderParams::default(),
            noise_dbm_per_mhz: -121.0,
            comm_power_dbm_per_mhz: (-112.0, -110.0),
            comm_power_offset_db: 0.0,
            support_threshold_db: 20.0,
            comm_duty: (0.5, 0.9),
            disjoint_window: (0.25, 0.5),
            guard_columns: 1,
            band_margin_hz: 1e6,
            max_attempts: 16,
        }
    }
}

impl ChannelParams {
    pub fn n_samples(&self) -> usize {
        (self.duration_ms * 1e-3 * self.sample_rate_hz).round() as usize
    }

    /// Total noise power across the sampled bandwidth.
    pub fn noise_power(&self) -> f64 {
        10f64.powf(self.noise_dbm_per_mhz / 10.0) * self.sample_rate_hz / 1e6
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !(self.duration_ms > 0.0) {
            return Err(SignalError::Config("sample rate and duration must be positive".into()));
        }
        if self.n_samples() < self.render.fft_size {
            return Err(SignalError::SignalTooShort { len: self.n_samples(), window: self.render.fft_size });
        }
        let (lo, hi) = self.comm_duty;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(SignalError::Config(format!("comm duty range {:?} is not inside (0, 1]", self.comm_duty)));
        }
        let (lo, hi) = self.disjoint_window;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(SignalError::Config(format!("disjoint window {:?} is not inside (0, 1)", self.disjoint_window)));
        }
        if self.comm_power_dbm_per_mhz.0 > self.comm_power_dbm_per_mhz.1 {
            return Err(SignalError::Config("comm power range is reversed".into()));
        }
        if self.max_attempts == 0 {
            return Err(SignalError::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `[channels, height, width]`, values in `[0, 1]`.
    pub spectrogram: Tensor,
    pub label: Label,
    pub spec: FrameSpec,
    pub radar_support: SupportMask,
    pub comm_support: SupportMask,
    pub achieved_sinr_db: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Placement {
    Anywhere,
    InBand(CommTech),
    OutOfBand(CommTech),
    TimeDisjoint,
}

pub fn gen_frame(spec: &FrameSpec, channel: &ChannelParams) -> Result<Frame> {
    spec.validate()?;
    channel.validate()?;
    let mut last = String::new();
    for attempt in 0..channel.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, attempt as u64]));
        match try_scene(spec, channel, &mut rng)? {
            Ok(frame) => return Ok(frame),
            Err(reason) => last = reason,
        }
    }
    Err(SignalError::ImpossibleScene {
        subcategory: spec.subcategory.to_string(),
        attempts: channel.max_attempts,
        reason: last,
    })
}

/// Inner `Err(String)` means this draw missed the target hypothesis and
/// another attempt may succeed.
fn try_scene(
    spec: &FrameSpec,
    ch: &ChannelParams,
    rng: &mut ChaCha8Rng,
) -> Result<std::result::Result<Frame, String>> {
    let sub = spec.subcategory;
    let n = ch.n_samples();
    let (h, w) = (ch.render.height, ch.render.width);
    let dur_s = ch.duration_ms * 1e-3;

    let mut techs = Vec::new();
    if sub.has_lte() {
        techs.push(CommTech::Lte);
    }
    if sub.has_five_g() {
        techs.push(CommTech::FiveG);
    }

    let placement = match sub {
        Subcategory::RadarOnly => Placement::Anywhere,
        Subcategory::RadarFiveGOverlap => Placement::InBand(CommTech::FiveG),
        Subcategory::RadarLteOverlap => Placement::InBand(CommTech::Lte),
        Subcategory::RadarBothOverlap => {
            Placement::InBand(if rng.random_bool(0.5) { CommTech::Lte } else { CommTech::FiveG })
        }
        Subcategory::RadarFiveGDisjoint | Subcategory::RadarLteDisjoint => {
            let tech = techs[0];
            // Short pulses spread across several MHz, so Type 1 can only be
            // separated in time.
            match spec.radar_type {
                Some(RadarType::Type2) if rng.random_bool(0.5) => Placement::OutOfBand(tech),
                _ => Placement::TimeDisjoint,
            }
        }
        _ => Placement::Anywhere,
    };

    let radar = match spec.radar_type {
        Some(t) => {
            let mut burst = PulseBurst::draw(&RadarProfile::for_type(t), dur_s, ch.sample_rate_hz, rng)?;
            place_burst(&mut burst, placement, ch, rng);
            let samples = burst.render(n, ch.sample_rate_hz);
            Some((burst, samples))
        }
        None => None,
    };
    let radar_support = match &radar {
        Some((_, samples)) => support_of(samples, ch)?,
        None => SupportMask::empty(h, w),
    };
    if radar.is_some() && radar_support.is_empty() {
        return Ok(Err("radar burst fell outside the frame".into()));
    }

    // Slots that must stay silent so a time-disjoint burst keeps clear of
    // every commercial signal.
    let quiet = match placement {
        Placement::TimeDisjoint => Some(quiet_sample_range(&radar_support, ch, n)),
        _ => None,
    };

    let mut comm = vec![Complex64::new(0.0, 0.0); n];
    for &tech in &techs {
        let slots = draw_duty(tech, ch, quiet, n, rng);
        let Some(slots) = slots else {
            return Ok(Err(format!("no {tech:?} slot clear of the radar burst")));
        };
        let power = uniform(rng, ch.comm_power_dbm_per_mhz) + ch.comm_power_offset_db;
        let profile = CommProfile::new(tech, power, DutyPattern { slot_ms: tech.slot_ms(), slots });
        let x = gen_comm_waveform(&profile, ch.duration_ms, ch.sample_rate_hz, rng)?;
        for (c, v) in comm.iter_mut().zip(x) {
            *c += v;
        }
    }
    let comm_support = if techs.is_empty() { SupportMask::empty(h, w) } else { support_of(&comm, ch)? };

    let label = label_overlap(&radar_support, &comm_support)?;
    if label != sub.hypothesis() {
        return Ok(Err(format!("supports gave {label:?}")));
    }

    let (samples, achieved) = match (&radar, spec.sinr_db) {
        (Some((_, r)), Some(sinr)) => {
            let m = mix_at_sinr(r, &comm, ch.noise_power(), sinr, rng)?;
            (m.samples, Some(m.achieved_sinr_db))
        }
        _ => {
            let noise = complex_noise(n, ch.noise_power(), rng);
            (comm.iter().zip(noise).map(|(c, z)| c + z).collect(), None)
        }
    };
    let spectrogram = render(&samples, ch)?;
    Ok(Ok(Frame {
        spectrogram,
        label,
        spec: spec.clone(),
        radar_support,
        comm_support,
        achieved_sinr_db: achieved,
    }))
}

fn place_burst(burst: &mut PulseBurst, placement: Placement, ch: &ChannelParams, rng: &mut ChaCha8Rng) {
    let edge = 0.4 * ch.sample_rate_hz;
    let dur_s = ch.duration_ms * 1e-3;
    match placement {
        Placement::Anywhere => {}
        Placement::InBand(tech) => {
            let p = CommProfile::new(tech, 0.0, DutyPattern::all_on(1.0, 1.0));
            let half = 0.4 * p.bandwidth_mhz * 1e6;
            let c = p.center_offset_mhz * 1e6;
            burst.carrier_hz = uniform(rng, ((c - half).max(-edge), (c + half).min(edge)));
        }
        Placement::OutOfBand(tech) => {
            let p = CommProfile::new(tech, 0.0, DutyPattern::all_on(1.0, 1.0));
            let (lo, hi) = p.occupied_band_hz();
            let range = if p.center_offset_mhz < 0.0 {
                (hi + ch.band_margin_hz, edge)
            } else {
                (-edge, lo - ch.band_margin_hz)
            };
            burst.carrier_hz = uniform(rng, range);
        }
        Placement::TimeDisjoint => {
            let window = uniform(rng, ch.disjoint_window) * dur_s;
            burst.start_s = if rng.random_bool(0.5) {
                dur_s - window
            } else {
                window - burst.span_s()
            };
        }
    }
}

/// Sample interval, widened by the guard columns, that the radar support's
/// columns draw from.
fn quiet_sample_range(radar: &SupportMask, ch: &ChannelParams, n: usize) -> (usize, usize) {
    let cols = radar.occupied_columns();
    let w = cols.len();
    let first = cols.iter().position(|&c| c).unwrap_or(0).saturating_sub(ch.guard_columns);
    let last = (cols.iter().rposition(|&c| c).unwrap_or(0) + ch.guard_columns).min(w - 1);
    let frames = 1 + (n - ch.render.fft_size) / ch.render.hop;
    let scale = frames as f64 / w as f64;
    let f0 = (first as f64 * scale).floor() as usize;
    let f1 = (((last + 1) as f64 * scale).ceil() as usize).min(frames);
    (f0 * ch.render.hop, ((f1.saturating_sub(1)) * ch.render.hop + ch.render.fft_size).min(n))
}

fn draw_duty(
    tech: CommTech,
    ch: &ChannelParams,
    quiet: Option<(usize, usize)>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<bool>> {
    let mut pattern = DutyPattern::all_off(tech.slot_ms(), ch.duration_ms);
    let allowed: Vec<bool> = (0..pattern.slots.len())
        .map(|i| {
            let (a, b) = pattern.slot_samples(i, ch.sample_rate_hz, n);
            match quiet {
                Some((q0, q1)) => b <= q0 || a >= q1,
                None => true,
            }
        })
        .collect();
    let p_on = uniform(rng, ch.comm_duty);
    for (slot, &ok) in pattern.slots.iter_mut().zip(&allowed) {
        let draw = rng.random_bool(p_on);
        *slot = ok && draw;
    }
    if pattern.is_silent() {
        let candidates: Vec<usize> = allowed.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect();
        if candidates.is_empty() {
            return None;
        }
        pattern.slots[candidates[rng.random_range(0..candidates.len())]] = true;
    }
    Some(pattern.slots)
}

fn pooled(samples: &[Complex64], ch: &ChannelParams) -> Result<Vec<f64>> {
    stft_magnitude(samples, ch.render.fft_size, ch.render.hop)?.pooled_power(ch.render.height, ch.render.width)
}

fn support_of(samples: &[Complex64], ch: &ChannelParams) -> Result<SupportMask> {
    let power = pooled(samples, ch)?;
    SupportMask::from_power(&power, ch.render.height, ch.render.width, ch.support_threshold_db)
}

fn render(samples: &[Complex64], ch: &ChannelParams) -> Result<Tensor> {
    let plane = normalize_db(&pooled(samples, ch)?, ch.render.dynamic_range_db);
    Ok(replicate_channels(&plane, ch.render.height, ch.render.width, ch.render.channels))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}
