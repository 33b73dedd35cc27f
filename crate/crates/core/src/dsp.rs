//! Shared short-time Fourier transform helpers for the audio-space
//! metrics and the mel codec.

use ndarray::Array2;
use rustfft::{num_complex::Complex64, FftPlanner};

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided complex STFT: (frame/2 + 1) bins x frames, Hann window,
/// no centering. Input shorter than one frame is zero-padded.
pub fn stft(samples: &[f64], frame: usize, hop: usize) -> Array2<Complex64> {
    assert!(frame > 0 && hop > 0, "frame and hop must be positive");
    let window = hann_window(frame);
    let padded_len = samples.len().max(frame);
    let num_frames = 1 + (padded_len - frame) / hop;
    let bins = frame / 2 + 1;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(frame);
    let mut out = Array2::<Complex64>::zeros((bins, num_frames));
    let mut buf = vec![Complex64::default(); frame];
    for f in 0..num_frames {
        let start = f * hop;
        for i in 0..frame {
            let s = samples.get(start + i).copied().unwrap_or(0.0);
            buf[i] = Complex64::new(s * window[i], 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            out[[b, f]] = buf[b];
        }
    }
    out
}

/// Magnitudes of [`stft`].
pub fn stft_magnitude(samples: &[f64], frame: usize, hop: usize) -> Array2<f64> {
    stft(samples, frame, hop).mapv(|c| c.norm())
}

/// Inverse one-sided STFT by windowed overlap-add with window-square
/// normalization. Output length is `(frames - 1) * hop + frame`.
pub fn istft(spec: &Array2<Complex64>, frame: usize, hop: usize) -> Vec<f64> {
    let bins = spec.nrows();
    assert_eq!(bins, frame / 2 + 1, "spectrum bin count mismatch");
    let num_frames = spec.ncols();
    let window = hann_window(frame);
    let out_len = (num_frames - 1) * hop + frame;
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(frame);
    let mut buf = vec![Complex64::default(); frame];
    for f in 0..num_frames {
        for b in 0..bins {
            buf[b] = spec[[b, f]];
        }
        // reconstruct the negative-frequency half by conjugate symmetry
        for b in bins..frame {
            buf[b] = spec[[frame - b, f]].conj();
        }
        ifft.process(&mut buf);
        let start = f * hop;
        for i in 0..frame {
            out[start + i] += buf[i].re / frame as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        if *n > 1e-12 {
            *o /= *n;
        }
    }
    out
}
