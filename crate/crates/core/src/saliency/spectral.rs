//! Spectral-residual saliency.
//!
//! The luminance image is resampled onto a small square grid, transformed
//! with a 2-D FFT, and the log-amplitude spectrum is compared against its
//! local 3x3 average. The residual, recombined with the original phase and
//! transformed back, highlights the statistically unexpected parts of the
//! image. The squared magnitude is smoothed with a Gaussian and bilinearly
//! resampled to the image size.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{SaliencyBackend, SaliencyMap};
use crate::backend::BackendError;
use crate::ingest::{coverage_spans, ChartImage};

const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralResidual {
    /// Side of the square working grid.
    pub grid: usize,
    /// Gaussian smoothing applied on the working grid, in grid cells.
    pub blur_sigma: f64,
}

impl Default for SpectralResidual {
    fn default() -> Self {
        Self {
            grid: 64,
            blur_sigma: 2.5,
        }
    }
}

impl SaliencyBackend for SpectralResidual {
    fn id(&self) -> &str {
        "spectral-residual"
    }

    fn compute(&self, img: &ChartImage) -> Result<SaliencyMap, BackendError> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let luma: Vec<f64> = img
            .pixels()
            .iter()
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .collect();
        let n = self.grid;
        let small = area_resample(&luma, w, h, n, n);
        let residual = residual_saliency(&small, n, n);
        let smooth = gaussian_blur(&residual, n, n, self.blur_sigma);
        let full = bilinear_resample(&smooth, n, n, w, h);
        SaliencyMap::from_raw(img.width(), img.height(), full, self.id())
    }
}

/// Unsmoothed spectral-residual saliency of a `width x height` grid:
/// `|IDFT(exp(R + i*phase))|^2 / N^2` where `R` is the log amplitude minus its
/// wrap-around 3x3 mean.
pub fn residual_saliency(gray: &[f64], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(gray.len(), width * height);
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = gray.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_2d(&mut planner, &mut buf, width, height, false);

    let log_amp: Vec<f64> = buf.iter().map(|c| c.norm().max(LOG_FLOOR).ln()).collect();
    let mut spectrum = Vec::with_capacity(buf.len());
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            for dy in [height - 1, 0, 1] {
                for dx in [width - 1, 0, 1] {
                    sum += log_amp[((y + dy) % height) * width + (x + dx) % width];
                }
            }
            let i = y * width + x;
            let residual = log_amp[i] - sum / 9.0;
            let phase = buf[i].im.atan2(buf[i].re);
            spectrum.push(Complex64::from_polar(residual.exp(), phase));
        }
    }

    fft_2d(&mut planner, &mut spectrum, width, height, true);
    let scale = (width * height) as f64;
    spectrum.iter().map(|c| (c / scale).norm_sqr()).collect()
}

fn fft_2d(planner: &mut FftPlanner<f64>, buf: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    for r in buf.chunks_exact_mut(width) {
        row.process(r);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = buf[y * width + x];
        }
        col.process(&mut column);
        for y in 0..height {
            buf[y * width + x] = column[y];
        }
    }
}

fn area_resample(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let xs = coverage_spans(sw as u32, dw as u32);
    let ys = coverage_spans(sh as u32, dh as u32);
    let mut out = Vec::with_capacity(dw * dh);
    for ycov in &ys {
        for xcov in &xs {
            let mut acc = 0.0;
            let mut total = 0.0;
            for &(sy, wy) in ycov {
                for &(sx, wx) in xcov {
                    acc += src[sy as usize * sw + sx as usize] * wx * wy;
                    total += wx * wy;
                }
            }
            out.push(acc / total);
        }
    }
    out
}

fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

    let pass = |input: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; input.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let off = k as isize - radius;
                    let (sx, sy) = if horizontal {
                        ((x as isize + off).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + off).clamp(0, h as isize - 1) as usize)
                    };
                    acc += input[sy * w + sx] * weight;
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    let tmp = pass(src, true);
    pass(&tmp, false)
}

fn bilinear_resample(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let coord = |d: usize, s: usize, n: usize| -> (usize, usize, f64) {
        let f = ((d as f64 + 0.5) * s as f64 / n as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, f - i0 as f64)
    };
    let xs: Vec<_> = (0..dw).map(|x| coord(x, sw, dw)).collect();
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, ty) = coord(y, sh, dh);
        for &(x0, x1, tx) in &xs {
            let top = src[y0 * sw + x0] * (1.0 - tx) + src[y0 * sw + x1] * tx;
            let bottom = src[y1 * sw + x0] * (1.0 - tx) + src[y1 * sw + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}
