//! Forward and backward kernels. Everything here works on raw row-major
//! slices; shape validation happens in [`crate::Tape`].

use crate::gemm::{gemm, Trans};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn plane_out(&self) -> usize {
        self.ho * self.wo
    }
}

/// Lays out every receptive field as a column: `[C*kh*kw, N*ho*wo]`.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let np = g.n * g.plane_out();
    let mut cols = vec![0.0; g.patch() * np];
    for ci in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * np..(row + 1) * np];
                for n in 0..g.n {
                    let plane = &x[(n * g.c + ci) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * g.w..][..g.w];
                        let base = n * g.plane_out() + oy * g.wo;
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[base + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let np = g.n * g.plane_out();
    for ci in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * np..(row + 1) * np];
                for n in 0..g.n {
                    let plane = &mut dx[(n * g.c + ci) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let dst_row = &mut plane[iy as usize * g.w..][..g.w];
                        let base = n * g.plane_out() + oy * g.wo;
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst_row[ix as usize] += src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Returns `(output [N,K,ho,wo], cols)`.
pub(crate) fn conv2d_forward(
    x: &[f64],
    kernel: &[f64],
    bias: &[f64],
    g: &ConvGeom,
) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(x, g);
    let p = g.plane_out();
    let np = g.n * p;
    let mut ymat = vec![0.0; g.k * np];
    gemm(g.k, g.patch(), np, 1.0, kernel, Trans::No, &cols, Trans::No, 0.0, &mut ymat);
    let mut out = vec![0.0; g.n * g.k * p];
    for k in 0..g.k {
        let b = bias[k];
        let src = &ymat[k * np..(k + 1) * np];
        for n in 0..g.n {
            let dst = &mut out[(n * g.k + k) * p..][..p];
            for (d, s) in dst.iter_mut().zip(&src[n * p..(n + 1) * p]) {
                *d = s + b;
            }
        }
    }
    (out, cols)
}

pub(crate) struct ConvGrads {
    pub input: Vec<f64>,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn conv2d_backward(gout: &[f64], kernel: &[f64], cols: &[f64], g: &ConvGeom) -> ConvGrads {
    let p = g.plane_out();
    let np = g.n * p;
    let mut gmat = vec![0.0; g.k * np];
    let mut gbias = vec![0.0; g.k];
    for k in 0..g.k {
        let dst = &mut gmat[k * np..(k + 1) * np];
        for n in 0..g.n {
            let src = &gout[(n * g.k + k) * p..][..p];
            dst[n * p..(n + 1) * p].copy_from_slice(src);
        }
        gbias[k] = dst.iter().sum();
    }
    let mut gkernel = vec![0.0; g.k * g.patch()];
    gemm(g.k, np, g.patch(), 1.0, &gmat, Trans::No, cols, Trans::Yes, 0.0, &mut gkernel);
    let mut gcols = vec![0.0; g.patch() * np];
    gemm(g.patch(), g.k, np, 1.0, kernel, Trans::Yes, &gmat, Trans::No, 0.0, &mut gcols);
    let mut ginput = vec![0.0; g.n * g.c * g.h * g.w];
    col2im(&gcols, g, &mut ginput);
    ConvGrads {
        input: ginput,
        kernel: gkernel,
        bias: gbias,
    }
}

/// `y[N,O] = x[N,F] * w[O,F]^T + b[O]`.
pub(crate) fn linear_forward(x: &[f64], w: &[f64], b: &[f64], n: usize, f: usize, o: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * o];
    for row in y.chunks_exact_mut(o) {
        row.copy_from_slice(b);
    }
    gemm(n, f, o, 1.0, x, Trans::No, w, Trans::Yes, 1.0, &mut y);
    y
}

pub(crate) struct LinearGrads {
    pub input: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn linear_backward(
    gy: &[f64],
    x: &[f64],
    w: &[f64],
    n: usize,
    f: usize,
    o: usize,
) -> LinearGrads {
    let mut gx = vec![0.0; n * f];
    gemm(n, o, f, 1.0, gy, Trans::No, w, Trans::No, 0.0, &mut gx);
    let mut gw = vec![0.0; o * f];
    gemm(o, n, f, 1.0, gy, Trans::Yes, x, Trans::No, 0.0, &mut gw);
    let mut gb = vec![0.0; o];
    for row in gy.chunks_exact(o) {
        for (acc, v) in gb.iter_mut().zip(row) {
            *acc += v;
        }
    }
    LinearGrads {
        input: gx,
        weight: gw,
        bias: gb,
    }
}

/// Per-row softmax probabilities and the mean negative log-likelihood.
pub(crate) fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for ((row, prow), &label) in logits
        .chunks_exact(classes)
        .zip(probs.chunks_exact_mut(classes))
        .zip(labels)
    {
        let (argmax, max) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        let tail: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != argmax)
            .map(|(_, &v)| (v - max).exp())
            .sum();
        let log_norm = max + tail.ln_1p();
        for (p, &z) in prow.iter_mut().zip(row) {
            *p = (z - log_norm).exp();
        }
        total += log_norm - row[label];
    }
    (total / labels.len() as f64, probs)
}
