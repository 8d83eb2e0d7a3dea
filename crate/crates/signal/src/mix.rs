//! Additive channel: radar scaled against commercial signal plus noise.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Result, SignalError};

#[derive(Debug, Clone)]
pub struct Mixture {
    /// Received samples `radar + comm + noise`.
    pub samples: Vec<Complex64>,
    /// Radar component after scaling.
    pub radar: Vec<Complex64>,
    /// `comm + noise`.
    pub interference: Vec<Complex64>,
    pub achieved_sinr_db: f64,
}

/// Peak radar power over mean interference power, in dB.
pub fn measure_sinr_db(radar: &[Complex64], interference: &[Complex64]) -> Result<f64> {
    if radar.len() != interference.len() || radar.is_empty() {
        return Err(SignalError::Config(format!(
            "radar has {} samples, interference {}",
            radar.len(),
            interference.len()
        )));
    }
    let peak = radar.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    let power = mean_power(interference);
    if power == 0.0 {
        return Err(SignalError::InfeasibleSinr("interference power is zero".into()));
    }
    Ok(10.0 * (peak / power).log10())
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len().max(1) as f64
}

/// Circular complex Gaussian noise with `E|n|^2 = power`.
pub fn complex_noise<R: Rng + ?Sized>(n: usize, power: f64, rng: &mut R) -> Vec<Complex64> {
    let sigma = (0.5 * power).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(sigma * re, sigma * im)
        })
        .collect()
}

/// Adds noise to `comm`, then rescales `radar` so the SINR hits `sinr_db`.
pub fn mix_at_sinr<R: Rng + ?Sized>(
    radar: &[Complex64],
    comm: &[Complex64],
    noise_power: f64,
    sinr_db: f64,
    rng: &mut R,
) -> Result<Mixture> {
    if radar.len() != comm.len() {
        return Err(SignalError::Config(format!(
            "radar has {} samples but comm has {}",
            radar.len(),
            comm.len()
        )));
    }
    if !sinr_db.is_finite() {
        return Err(SignalError::InfeasibleSinr(format!("target {sinr_db} dB is not finite")));
    }
    if !(noise_power >= 0.0) {
        return Err(SignalError::Config(format!("noise power {noise_power} is negative")));
    }
    let noise = complex_noise(comm.len(), noise_power, rng);
    let interference: Vec<Complex64> = comm.iter().zip(&noise).map(|(c, n)| c + n).collect();
    let power = mean_power(&interference);
    if power == 0.0 {
        return Err(SignalError::InfeasibleSinr("comm and noise power are both zero".into()));
    }
    let peak = radar.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(SignalError::InfeasibleSinr("radar waveform is identically zero".into()));
    }
    let gain = (10f64.powf(sinr_db / 10.0) * power / peak).sqrt();
    let radar: Vec<Complex64> = radar.iter().map(|s| s * gain).collect();
    let samples = radar.iter().zip(&interference).map(|(r, i)| r + i).collect();
    let achieved_sinr_db = measure_sinr_db(&radar, &interference)?;
    Ok(Mixture { samples, radar, interference, achieved_sinr_db })
}
