//! Unmodulated rectangular pulse trains.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Result, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RadarType {
    Type1,
    Type2,
}

impl RadarType {
    pub fn index(self) -> usize {
        match self {
            RadarType::Type1 => 0,
            RadarType::Type2 => 1,
        }
    }
}

/// Ranges from which one burst's parameters are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarProfile {
    pub radar_type: RadarType,
    pub pulse_width_us: (f64, f64),
    pub prf_pps: (f64, f64),
    pub pulses_per_burst: (u32, u32),
    pub peak_power_dbm_per_mhz: (f64, f64),
}

impl RadarProfile {
    pub fn type1() -> Self {
        Self {
            radar_type: RadarType::Type1,
            pulse_width_us: (0.5, 2.5),
            prf_pps: (1000.0, 1100.0),
            pulses_per_burst: (15, 20),
            peak_power_dbm_per_mhz: (-89.0, -85.0),
        }
    }

    pub fn type2() -> Self {
        Self {
            radar_type: RadarType::Type2,
            pulse_width_us: (13.0, 52.0),
            prf_pps: (1000.0, 2000.0),
            pulses_per_burst: (10, 20),
            peak_power_dbm_per_mhz: (-89.0, -85.0),
        }
    }

    pub fn for_type(t: RadarType) -> Self {
        match t {
            RadarType::Type1 => Self::type1(),
            RadarType::Type2 => Self::type2(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.pulse_width_us) || self.pulse_width_us.0 <= 0.0 {
            return Err(SignalError::Config(format!("bad pulse width range {:?}", self.pulse_width_us)));
        }
        if !ordered(self.prf_pps) || self.prf_pps.0 <= 0.0 {
            return Err(SignalError::Config(format!("bad PRF range {:?}", self.prf_pps)));
        }
        if self.pulses_per_burst.0 == 0 || self.pulses_per_burst.0 > self.pulses_per_burst.1 {
            return Err(SignalError::Config(format!("bad burst range {:?}", self.pulses_per_burst)));
        }
        if !ordered(self.peak_power_dbm_per_mhz) {
            return Err(SignalError::Config("bad peak power range".into()));
        }
        let min_pri_us = 1e6 / self.prf_pps.1;
        if self.pulse_width_us.1 >= min_pri_us {
            return Err(SignalError::Config(format!(
                "pulse width up to {} us does not fit the {min_pri_us} us repetition interval",
                self.pulse_width_us.1
            )));
        }
        Ok(())
    }
}

/// One concrete burst: every quantity needed to render it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseBurst {
    pub radar_type: RadarType,
    pub pulse_width_s: f64,
    pub pri_s: f64,
    pub pulses: u32,
    pub start_s: f64,
    pub carrier_hz: f64,
    pub peak_power_dbm_per_mhz: f64,
    pub phase: f64,
}

impl PulseBurst {
    /// Draws parameters uniformly from the profile. The burst is placed at a
    /// uniform offset when it fits in `duration_s`, otherwise at zero with
    /// the trailing pulses falling outside the snapshot.
    pub fn draw<R: Rng + ?Sized>(
        profile: &RadarProfile,
        duration_s: f64,
        sample_rate_hz: f64,
        rng: &mut R,
    ) -> Result<Self> {
        profile.validate()?;
        if !(duration_s > 0.0) {
            return Err(SignalError::Config(format!("duration must be positive, got {duration_s} s")));
        }
        let width_us = uniform(rng, profile.pulse_width_us);
        let prf = uniform(rng, profile.prf_pps);
        let pulses = rng.random_range(profile.pulses_per_burst.0..=profile.pulses_per_burst.1);
        let power = uniform(rng, profile.peak_power_dbm_per_mhz);
        let pri_s = 1.0 / prf;
        if duration_s < pri_s {
            return Err(SignalError::Config(format!(
                "duration {duration_s} s is shorter than one repetition interval ({pri_s} s)"
            )));
        }
        let width_s = width_us * 1e-6;
        let span = (pulses - 1) as f64 * pri_s + width_s;
        let start_s = if span < duration_s { rng.random_range(0.0..duration_s - span) } else { 0.0 };
        let half = 0.4 * sample_rate_hz;
        Ok(Self {
            radar_type: profile.radar_type,
            pulse_width_s: width_s,
            pri_s,
            pulses,
            start_s,
            carrier_hz: rng.random_range(-half..half),
            peak_power_dbm_per_mhz: power,
            phase: rng.random_range(0.0..TAU),
        })
    }

    /// Time spanned from the first pulse's leading edge to the last
    /// pulse's trailing edge.
    pub fn span_s(&self) -> f64 {
        (self.pulses.max(1) - 1) as f64 * self.pri_s + self.pulse_width_s
    }

    /// Leading-edge sample index of every pulse that starts inside
    /// `[0, n_samples)`. `start_s` may be negative, in which case the
    /// burst began before the snapshot.
    pub fn pulse_starts(&self, n_samples: usize, sample_rate_hz: f64) -> Vec<usize> {
        (0..self.pulses)
            .map(|i| ((self.start_s + i as f64 * self.pri_s) * sample_rate_hz).round())
            .filter(|&s| s >= 0.0 && s < n_samples as f64)
            .map(|s| s as usize)
            .collect()
    }

    pub fn width_samples(&self, sample_rate_hz: f64) -> usize {
        ((self.pulse_width_s * sample_rate_hz).round() as usize).max(1)
    }

    pub fn amplitude(&self) -> f64 {
        10f64.powf(self.peak_power_dbm_per_mhz / 20.0)
    }

    /// Complex baseband samples: constant-envelope pulses on a carrier.
    pub fn render(&self, n_samples: usize, sample_rate_hz: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n_samples];
        let width = self.width_samples(sample_rate_hz);
        let amp = self.amplitude();
        let omega = TAU * self.carrier_hz / sample_rate_hz;
        for start in self.pulse_starts(n_samples, sample_rate_hz) {
            for n in start..(start + width).min(n_samples) {
                out[n] = Complex64::from_polar(amp, omega * n as f64 + self.phase);
            }
        }
        out
    }
}

/// Rendered burst together with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct RadarWaveform {
    pub samples: Vec<Complex64>,
    pub burst: PulseBurst,
}

pub fn gen_radar_waveform<R: Rng + ?Sized>(
    profile: &RadarProfile,
    duration_ms: f64,
    sample_rate_hz: f64,
    rng: &mut R,
) -> Result<RadarWaveform> {
    let duration_s = duration_ms * 1e-3;
    let burst = PulseBurst::draw(profile, duration_s, sample_rate_hz, rng)?;
    let n = (duration_s * sample_rate_hz).round() as usize;
    Ok(RadarWaveform {
        samples: burst.render(n, sample_rate_hz),
        burst,
    })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed_profile() -> RadarProfile {
        RadarProfile {
            radar_type: RadarType::Type1,
            pulse_width_us: (1.0, 1.0),
            prf_pps: (1000.0, 1000.0),
            pulses_per_burst: (2, 2),
            peak_power_dbm_per_mhz: (-87.0, -87.0),
        }
    }

    #[test]
    fn zero_duration_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_radar_waveform(&RadarProfile::type1(), 0.0, 10e6, &mut rng).is_err());
    }

    #[test]
    fn duration_shorter_than_pri_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_radar_waveform(&fixed_profile(), 0.5, 10e6, &mut rng).is_err());
    }

    #[test]
    fn width_beyond_pri_is_rejected() {
        let profile = RadarProfile { pulse_width_us: (900.0, 1200.0), ..fixed_profile() };
        assert!(matches!(profile.validate(), Err(SignalError::Config(_))));
    }

    #[test]
    fn two_pulses_of_ten_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let wf = gen_radar_waveform(&fixed_profile(), 20.0, 10e6, &mut rng).unwrap();
        let on: Vec<usize> = wf
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.norm() > 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(on.len(), 20);
        let first = on[0];
        let expected: Vec<usize> = (first..first + 10).chain(first + 10_000..first + 10_010).collect();
        assert_eq!(on, expected);
    }

    #[test]
    fn envelope_is_zero_or_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for profile in [RadarProfile::type1(), RadarProfile::type2()] {
            let wf = gen_radar_waveform(&profile, 20.0, 10e6, &mut rng).unwrap();
            let amp = wf.burst.amplitude();
            for s in &wf.samples {
                let m = s.norm();
                assert!(m == 0.0 || (m - amp).abs() <= 1e-12 * amp, "{m} vs {amp}");
            }
        }
    }

    #[test]
    fn draws_respect_profile_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let p = RadarProfile::type2();
            let b = PulseBurst::draw(&p, 0.02, 10e6, &mut rng).unwrap();
            assert!((13e-6..=52e-6).contains(&b.pulse_width_s));
            assert!((1.0 / 2000.0..=1.0 / 1000.0).contains(&b.pri_s));
            assert!((10..=20).contains(&b.pulses));
            assert!((-89.0..=-85.0).contains(&b.peak_power_dbm_per_mhz));
            assert!(b.carrier_hz.abs() < 5e6);
        }
    }
}
