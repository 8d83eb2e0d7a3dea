use radfed_autodiff::Tensor;
use radfed_signal::Frame;

use crate::ModelError;

/// Stacks frame images into one `[N, C, H, W]` tensor.
pub fn stack_frames(frames: &[&Frame]) -> Result<Tensor, ModelError> {
    let first = frames
        .first()
        .ok_or_else(|| ModelError::InvalidConfig("cannot stack an empty batch".into()))?;
    let shape = first.spectrogram.shape().to_vec();
    let mut data = Vec::with_capacity(frames.len() * first.spectrogram.len());
    for f in frames {
        if f.spectrogram.shape() != shape.as_slice() {
            return Err(ModelError::InputShape {
                expected: [&[frames.len()][..], &shape].concat(),
                actual: f.spectrogram.shape().to_vec(),
            });
        }
        data.extend_from_slice(f.spectrogram.data());
    }
    let mut full = vec![frames.len()];
    full.extend(shape);
    Ok(Tensor::new(full, data)?)
}

pub fn labels(frames: &[&Frame]) -> Vec<usize> {
    frames.iter().map(|f| f.label.class()).collect()
}
