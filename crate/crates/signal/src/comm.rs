//! Band-limited noise standing in for LTE and 5G carriers.
//!
//! Each carrier is white complex Gaussian noise filtered to its occupied
//! band with one full-length FFT, then gated by a slot on/off pattern.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Result, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommTech {
    Lte,
    FiveG,
}

impl CommTech {
    /// Default slot length in milliseconds.
    pub fn slot_ms(self) -> f64 {
        match self {
            CommTech::Lte => 1.0,
            CommTech::FiveG => 0.5,
        }
    }

    pub fn default_center_mhz(self) -> f64 {
        match self {
            CommTech::Lte => -2.5,
            CommTech::FiveG => 2.5,
        }
    }
}

/// Slot-level on/off mask. Slot `i` covers `[i, i+1) * slot_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DutyPattern {
    pub slot_ms: f64,
    pub slots: Vec<bool>,
}

impl DutyPattern {
    pub fn all_on(slot_ms: f64, duration_ms: f64) -> Self {
        Self { slot_ms, slots: vec![true; slot_count(slot_ms, duration_ms)] }
    }

    pub fn all_off(slot_ms: f64, duration_ms: f64) -> Self {
        Self { slot_ms, slots: vec![false; slot_count(slot_ms, duration_ms)] }
    }

    pub fn is_silent(&self) -> bool {
        !self.slots.iter().any(|&s| s)
    }

    /// Sample range `[start, end)` covered by slot `i`.
    pub fn slot_samples(&self, i: usize, sample_rate_hz: f64, n_samples: usize) -> (usize, usize) {
        let per = self.slot_ms * 1e-3 * sample_rate_hz;
        let start = ((i as f64 * per).round() as usize).min(n_samples);
        let end = (((i + 1) as f64 * per).round() as usize).min(n_samples);
        (start, end)
    }
}

fn slot_count(slot_ms: f64, duration_ms: f64) -> usize {
    (duration_ms / slot_ms).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommProfile {
    pub tech: CommTech,
    pub bandwidth_mhz: f64,
    /// Fraction of the nominal bandwidth that carries energy (guard bands
    /// take the rest).
    pub occupied_fraction: f64,
    pub center_offset_mhz: f64,
    pub power_dbm_per_mhz: f64,
    pub duty_pattern: DutyPattern,
    /// Raised-cosine ramp length at each on/off transition, in samples.
    /// Ramps sit inside on-slots so off-slots stay exactly zero.
    pub ramp_samples: usize,
}

impl CommProfile {
    pub fn new(tech: CommTech, power_dbm_per_mhz: f64, duty_pattern: DutyPattern) -> Self {
        Self {
            tech,
            bandwidth_mhz: 5.0,
            occupied_fraction: 0.9,
            center_offset_mhz: tech.default_center_mhz(),
            power_dbm_per_mhz,
            duty_pattern,
            ramp_samples: 64,
        }
    }

    pub fn occupied_mhz(&self) -> f64 {
        self.bandwidth_mhz * self.occupied_fraction
    }

    /// Edges of the occupied band in Hz.
    pub fn occupied_band_hz(&self) -> (f64, f64) {
        let half = 0.5 * self.occupied_mhz() * 1e6;
        let c = self.center_offset_mhz * 1e6;
        (c - half, c + half)
    }

    /// Edges of the nominal band in Hz.
    pub fn band_hz(&self) -> (f64, f64) {
        let half = 0.5 * self.bandwidth_mhz * 1e6;
        let c = self.center_offset_mhz * 1e6;
        (c - half, c + half)
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.bandwidth_mhz > 0.0) || !(self.occupied_fraction > 0.0 && self.occupied_fraction <= 1.0) {
            return Err(SignalError::Config(format!(
                "bandwidth {} MHz with occupied fraction {} is not usable",
                self.bandwidth_mhz, self.occupied_fraction
            )));
        }
        let (lo, hi) = self.band_hz();
        let nyquist = 0.5 * sample_rate_hz;
        if lo < -nyquist - 1e-6 || hi > nyquist + 1e-6 {
            return Err(SignalError::Config(format!(
                "{:?} band [{lo}, {hi}] Hz exceeds the {nyquist} Hz Nyquist limit",
                self.tech
            )));
        }
        if !(self.duty_pattern.slot_ms > 0.0) {
            return Err(SignalError::Config("duty slot length must be positive".into()));
        }
        Ok(())
    }
}

pub fn gen_comm_waveform<R: Rng + ?Sized>(
    profile: &CommProfile,
    duration_ms: f64,
    sample_rate_hz: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    profile.validate(sample_rate_hz)?;
    let n = (duration_ms * 1e-3 * sample_rate_hz).round() as usize;
    if n == 0 {
        return Err(SignalError::Config("comm waveform needs a positive duration".into()));
    }
    if profile.duty_pattern.is_silent() {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }

    let (lo, hi) = profile.occupied_band_hz();
    let df = sample_rate_hz / n as f64;
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let mut occupied = 0usize;
    for (k, bin) in spectrum.iter_mut().enumerate() {
        let f = if k < n.div_ceil(2) { k as f64 * df } else { (k as f64 - n as f64) * df };
        if f >= lo && f <= hi {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *bin = Complex64::new(re, im);
            occupied += 1;
        }
    }
    if occupied == 0 {
        return Err(SignalError::Config("occupied band is narrower than one frequency bin".into()));
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let mut samples = spectrum;

    // Scale to the requested density over the occupied band.
    let target = 10f64.powf(profile.power_dbm_per_mhz / 10.0) * profile.occupied_mhz();
    let mean: f64 = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
    let scale = (target / mean).sqrt();
    for s in &mut samples {
        *s *= scale;
    }

    apply_duty(&mut samples, profile, sample_rate_hz);
    Ok(samples)
}

fn apply_duty(samples: &mut [Complex64], profile: &CommProfile, sample_rate_hz: f64) {
    let n = samples.len();
    let mut gate = vec![0.0f64; n];
    let pattern = &profile.duty_pattern;
    for (i, &on) in pattern.slots.iter().enumerate() {
        if on {
            let (a, b) = pattern.slot_samples(i, sample_rate_hz, n);
            gate[a..b].fill(1.0);
        }
    }
    let ramp = profile.ramp_samples;
    if ramp > 0 {
        let mut i = 0;
        while i < n {
            if gate[i] == 0.0 {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && gate[i] > 0.0 {
                i += 1;
            }
            let run = i - start;
            let len = ramp.min(run / 2);
            for j in 0..len {
                let w = 0.5 * (1.0 - (PI * (j as f64 + 0.5) / len as f64).cos());
                if start > 0 {
                    gate[start + j] = w;
                }
                if i < n {
                    gate[i - 1 - j] = gate[i - 1 - j].min(w);
                }
            }
        }
    }
    for (s, g) in samples.iter_mut().zip(gate) {
        *s *= g;
    }
}
