//! Short-time Fourier transform and spectrogram rendering.

use std::f64::consts::TAU;

use num_complex::Complex64;
use radfed_autodiff::Tensor;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Result, SignalError};

/// STFT magnitudes in row-major `[freq_bins, time_bins]` layout. Row `k` is
/// DFT bin `k` (no shift), so negative frequencies occupy the upper half.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub freq_bins: usize,
    pub time_bins: usize,
    pub magnitude: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    pub fft_size: usize,
    pub hop: usize,
    pub height: usize,
    pub width: usize,
    /// Cells more than this far below the frame's peak are clamped.
    pub dynamic_range_db: f64,
    pub channels: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self { fft_size: 256, hop: 128, height: 64, width: 64, dynamic_range_db: 60.0, channels: 3 }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 * (1.0 - (TAU * i as f64 / n as f64).cos())).collect()
}

pub fn stft_magnitude(y: &[Complex64], fft_size: usize, hop: usize) -> Result<Spectrogram> {
    if fft_size == 0 || !fft_size.is_power_of_two() {
        return Err(SignalError::Config(format!("fft size {fft_size} is not a power of two")));
    }
    if hop == 0 || hop > fft_size {
        return Err(SignalError::Config(format!("hop {hop} must lie in 1..={fft_size}")));
    }
    if y.len() < fft_size {
        return Err(SignalError::SignalTooShort { len: y.len(), window: fft_size });
    }
    let frames = 1 + (y.len() - fft_size) / hop;
    let window = hann(fft_size);
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut magnitude = vec![0.0; fft_size * frames];
    for t in 0..frames {
        let seg = &y[t * hop..t * hop + fft_size];
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = s * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, b) in buf.iter().enumerate() {
            magnitude[k * frames + t] = b.norm();
        }
    }
    Ok(Spectrogram { freq_bins: fft_size, time_bins: frames, magnitude })
}

impl Spectrogram {
    pub fn at(&self, k: usize, t: usize) -> f64 {
        self.magnitude[k * self.time_bins + t]
    }

    /// Power averaged onto a `height x width` grid by fractional area
    /// overlap. Rows are reordered so row 0 is the most negative frequency.
    pub fn pooled_power(&self, height: usize, width: usize) -> Result<Vec<f64>> {
        if height == 0 || width == 0 {
            return Err(SignalError::Config(format!("cannot render a {height}x{width} image")));
        }
        let (f, t) = (self.freq_bins, self.time_bins);
        let col_w = area_weights(t, width);
        let row_w = area_weights(f, height);
        let mut by_col = vec![0.0; f * width];
        for r in 0..f {
            let src = (r + f / 2) % f;
            let row = &self.magnitude[src * t..(src + 1) * t];
            for (j, ws) in col_w.iter().enumerate() {
                by_col[r * width + j] = ws.iter().map(|&(c, w)| w * row[c] * row[c]).sum();
            }
        }
        let mut out = vec![0.0; height * width];
        for (i, ws) in row_w.iter().enumerate() {
            for &(r, w) in ws {
                for j in 0..width {
                    out[i * width + j] += w * by_col[r * width + j];
                }
            }
        }
        Ok(out)
    }
}

/// For each output cell, the input indices it covers and their normalized
/// overlap weights.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let mut ws: Vec<(usize, f64)> = (lo.floor() as usize..(hi.ceil() as usize).min(n_in))
                .map(|i| (i, (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0)))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let total: f64 = ws.iter().map(|&(_, w)| w).sum();
            for w in &mut ws {
                w.1 /= total;
            }
            ws
        })
        .collect()
}

/// Log-scales power, clamps to the dynamic range below the peak and
/// min-max normalizes to `[0, 1]`. A flat or all-zero input maps to zeros.
pub fn normalize_db(power: &[f64], dynamic_range_db: f64) -> Vec<f64> {
    let peak = power.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return vec![0.0; power.len()];
    }
    let top = 10.0 * peak.log10();
    let floor = top - dynamic_range_db;
    let db: Vec<f64> = power
        .iter()
        .map(|&p| if p > 0.0 { (10.0 * p.log10()).max(floor) } else { floor })
        .collect();
    let lo = db.iter().copied().fold(f64::INFINITY, f64::min);
    if top - lo <= 0.0 {
        return vec![0.0; power.len()];
    }
    db.iter().map(|&v| ((v - lo) / (top - lo)).clamp(0.0, 1.0)).collect()
}

/// Stacks one `[h, w]` plane into a `[channels, h, w]` tensor.
pub fn replicate_channels(plane: &[f64], height: usize, width: usize, channels: usize) -> Tensor {
    let data: Vec<f64> = (0..channels).flat_map(|_| plane.iter().copied()).collect();
    Tensor::new(vec![channels, height, width], data).expect("plane length matches height*width")
}

/// Normalized single-channel image of `y`.
pub fn render_plane(y: &[Complex64], params: &RenderParams) -> Result<Vec<f64>> {
    let spec = stft_magnitude(y, params.fft_size, params.hop)?;
    let power = spec.pooled_power(params.height, params.width)?;
    Ok(normalize_db(&power, params.dynamic_range_db))
}

pub fn stft_spectrogram(y: &[Complex64], params: &RenderParams) -> Result<Tensor> {
    if params.channels == 0 {
        return Err(SignalError::Config("spectrogram needs at least one channel".into()));
    }
    let plane = render_plane(y, params)?;
    Ok(replicate_channels(&plane, params.height, params.width, params.channels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_weights_partition_each_input() {
        for (n_in, n_out) in [(1561, 64), (256, 32), (10, 3), (3, 10)] {
            let ws = area_weights(n_in, n_out);
            let mut mass = vec![0.0; n_in];
            for cell in &ws {
                let total: f64 = cell.iter().map(|w| w.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
                for &(i, w) in cell {
                    mass[i] += w * n_in as f64 / n_out as f64;
                }
            }
            for m in mass {
                assert!((m - 1.0).abs() < 1e-9, "{n_in}->{n_out}: {m}");
            }
        }
    }

    #[test]
    fn flat_power_normalizes_to_zero() {
        assert_eq!(normalize_db(&[2.0; 6], 60.0), vec![0.0; 6]);
        assert_eq!(normalize_db(&[0.0; 6], 60.0), vec![0.0; 6]);
    }

    #[test]
    fn bad_sizes_are_rejected() {
        let y = vec![Complex64::new(0.0, 0.0); 300];
        assert!(stft_magnitude(&y, 250, 100).is_err());
        assert!(stft_magnitude(&y, 256, 0).is_err());
        assert!(stft_magnitude(&y, 256, 512).is_err());
        assert!(matches!(stft_magnitude(&y[..100], 256, 128), Err(SignalError::SignalTooShort { .. })));
    }
}
