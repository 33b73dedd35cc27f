//! Boundary between latent tensors and signals: an exact identity
//! codec for the toy spectrogram space, a lossy mel codec for real
//! audio, a sine-bank sonifier for toy clips, and PCM16 WAV file I/O.

use std::io::Read;
use std::path::Path;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex64;

use crate::dsp;
use crate::error::{Error, Result};
use crate::schedule::LatentClip;

/// What flows across the codec boundary: either a mono waveform or a
/// spectrogram-shaped tensor that is already in latent layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Audio { samples: Vec<f64>, sample_rate: u32 },
    Tensor(Array3<f64>),
}

/// Latent/signal converter. `decode(encode(x))` preserves shape for
/// every codec; only the identity codec promises exact values.
pub trait Codec: Send + Sync {
    /// Stable identifier for manifests and reports.
    fn name(&self) -> &'static str;

    /// Sample rate of decoded audio (metadata only for tensor codecs).
    fn sample_rate(&self) -> u32;

    /// Fixed (channels, bins) of produced latents; the frame count
    /// follows the input length.
    fn latent_layout(&self) -> (usize, usize);

    fn encode(&self, signal: &Signal) -> Result<LatentClip>;

    fn decode(&self, latent: &LatentClip) -> Result<Signal>;
}

/// Exact pass-through codec for the toy space, where the latent is
/// the spectrogram itself.
#[derive(Debug, Clone, Default)]
pub struct IdentityCodec;

impl Codec for IdentityCodec {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn sample_rate(&self) -> u32 {
        16_000
    }

    fn latent_layout(&self) -> (usize, usize) {
        (1, crate::toybench::BINS)
    }

    fn encode(&self, signal: &Signal) -> Result<LatentClip> {
        match signal {
            Signal::Tensor(data) => LatentClip::new(data.clone(), self.sample_rate(), {
                let frames = data.shape()[2] as f64;
                frames * 512.0 / self.sample_rate() as f64
            }),
            Signal::Audio { .. } => Err(Error::shape(
                "identity codec carries spectrogram tensors, not audio",
            )),
        }
    }

    fn decode(&self, latent: &LatentClip) -> Result<Signal> {
        Ok(Signal::Tensor(latent.data.clone()))
    }
}

/// Mel codec geometry and phase-reconstruction effort.
#[derive(Debug, Clone, PartialEq)]
pub struct MelCodecConfig {
    pub sample_rate: u32,
    pub num_mels: usize,
    pub frame: usize,
    pub hop: usize,
    /// Iterations of alternating-projection phase recovery in decode.
    pub phase_iters: usize,
}

impl Default for MelCodecConfig {
    fn default() -> Self {
        MelCodecConfig {
            sample_rate: 16_000,
            num_mels: 64,
            frame: 1024,
            hop: 256,
            phase_iters: 32,
        }
    }
}

/// Lossy audio codec: magnitude mel spectrogram forward, filterbank
/// back-projection plus iterative phase reconstruction backward.
#[derive(Debug, Clone)]
pub struct MelCodec {
    config: MelCodecConfig,
    /// Triangular filterbank, num_mels x (frame/2 + 1).
    filters: Array2<f64>,
    /// Cholesky factor of the ridge-stabilized filter Gram matrix
    /// F·Fᵀ, precomputed for the least-squares decode.
    gram_chol: Array2<f64>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0_f64.powf(mel / 2595.0) - 1.0)
}

impl MelCodec {
    pub fn new(config: MelCodecConfig) -> Result<Self> {
        if config.sample_rate == 0 {
            return Err(Error::parameter("mel codec sample rate must be positive"));
        }
        if config.num_mels == 0 || config.frame == 0 || config.hop == 0 {
            return Err(Error::parameter(
                "mel codec needs positive num_mels, frame, and hop",
            ));
        }
        if config.hop > config.frame {
            return Err(Error::parameter("mel codec hop must not exceed frame"));
        }
        let bins = config.frame / 2 + 1;
        if config.num_mels + 2 > bins {
            return Err(Error::parameter(
                "mel codec needs at least num_mels + 2 frequency bins",
            ));
        }
        let filters = mel_filterbank(config.num_mels, config.frame, config.sample_rate);
        let mels = config.num_mels;
        let mut gram = Array2::<f64>::zeros((mels, mels));
        for i in 0..mels {
            for j in 0..mels {
                let mut acc = 0.0;
                for k in 0..bins {
                    acc += filters[[i, k]] * filters[[j, k]];
                }
                gram[[i, j]] = acc;
            }
            gram[[i, i]] += 1e-9;
        }
        let gram_chol = cholesky(&gram)?;
        Ok(MelCodec {
            config,
            filters,
            gram_chol,
        })
    }

    pub fn with_default_config() -> Self {
        MelCodec::new(MelCodecConfig::default()).expect("default mel config is valid")
    }

    pub fn config(&self) -> &MelCodecConfig {
        &self.config
    }

    /// Center frequency of mel band `m` in Hz.
    pub fn band_center_hz(&self, m: usize) -> f64 {
        let mel_max = hz_to_mel(self.config.sample_rate as f64 / 2.0);
        mel_to_hz(mel_max * (m + 1) as f64 / (self.config.num_mels + 1) as f64)
    }

    /// Minimal-norm least-squares inverse of the filterbank:
    /// lin = Fᵀ(F·Fᵀ)⁻¹·mel per frame, clamped at zero. The zero
    /// targets of inactive neighboring bands keep reconstructed peaks
    /// from smearing across a whole filter triangle.
    fn mel_to_linear(&self, mel: &Array2<f64>) -> Array2<f64> {
        let bins = self.config.frame / 2 + 1;
        let mels = self.config.num_mels;
        let frames = mel.ncols();
        let mut linear = Array2::<f64>::zeros((bins, frames));
        let mut y = vec![0.0; mels];
        for f in 0..frames {
            for m in 0..mels {
                y[m] = mel[[m, f]];
            }
            solve_cholesky(&self.gram_chol, &mut y);
            for k in 0..bins {
                let mut acc = 0.0;
                for m in 0..mels {
                    acc += self.filters[[m, k]] * y[m];
                }
                linear[[k, f]] = acc.max(0.0);
            }
        }
        linear
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite
/// matrix.
fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::parameter(
                        "mel filter Gram matrix is not positive definite",
                    ));
                }
                l[[i, i]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve (L·Lᵀ)·x = b in place given the Cholesky factor L.
fn solve_cholesky(l: &Array2<f64>, b: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[[i, k]] * b[k];
        }
        b[i] = acc / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for k in i + 1..n {
            acc -= l[[k, i]] * b[k];
        }
        b[i] = acc / l[[i, i]];
    }
}

/// Triangular mel filterbank with band edges evenly spaced on the mel
/// scale between 0 Hz and Nyquist.
fn mel_filterbank(num_mels: usize, frame: usize, sample_rate: u32) -> Array2<f64> {
    let bins = frame / 2 + 1;
    let mel_max = hz_to_mel(sample_rate as f64 / 2.0);
    let edges_hz: Vec<f64> = (0..num_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (num_mels + 1) as f64))
        .collect();
    let mut filters = Array2::<f64>::zeros((num_mels, bins));
    for m in 0..num_mels {
        let (lo, center, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / frame as f64;
            let rising = (f - lo) / (center - lo).max(1e-12);
            let falling = (hi - f) / (hi - center).max(1e-12);
            filters[[m, k]] = rising.min(falling).max(0.0);
        }
    }
    filters
}

impl Codec for MelCodec {
    fn name(&self) -> &'static str {
        "mel"
    }

    fn sample_rate(&self) -> u32 {
        self.config.sample_rate
    }

    fn latent_layout(&self) -> (usize, usize) {
        (1, self.config.num_mels)
    }

    fn encode(&self, signal: &Signal) -> Result<LatentClip> {
        let (samples, sample_rate) = match signal {
            Signal::Audio {
                samples,
                sample_rate,
            } => (samples, *sample_rate),
            Signal::Tensor(_) => {
                return Err(Error::shape("mel codec encodes audio, not tensors"))
            }
        };
        if samples.is_empty() {
            return Err(Error::parameter("mel codec input audio is empty"));
        }
        if sample_rate != self.config.sample_rate {
            return Err(Error::parameter(format!(
                "mel codec expects {} Hz input, got {} Hz",
                self.config.sample_rate, sample_rate
            )));
        }
        let magnitude = dsp::stft_magnitude(samples, self.config.frame, self.config.hop);
        let frames = magnitude.ncols();
        let mut data = Array3::<f64>::zeros((1, self.config.num_mels, frames));
        for m in 0..self.config.num_mels {
            for f in 0..frames {
                let mut acc = 0.0;
                for k in 0..magnitude.nrows() {
                    acc += self.filters[[m, k]] * magnitude[[k, f]];
                }
                data[[0, m, f]] = acc;
            }
        }
        LatentClip::new(
            data,
            sample_rate,
            samples.len() as f64 / sample_rate as f64,
        )
    }

    fn decode(&self, latent: &LatentClip) -> Result<Signal> {
        let (channels, bands, frames) = latent.shape();
        if channels != 1 || bands != self.config.num_mels {
            return Err(Error::shape(format!(
                "mel codec decodes [1, {}, frames] latents, got [{channels}, {bands}, {frames}]",
                self.config.num_mels
            )));
        }
        let mel = latent
            .data
            .index_axis(ndarray::Axis(0), 0)
            .mapv(|v| v.max(0.0));
        let magnitude = self.mel_to_linear(&mel);

        // Alternating projections: keep the target magnitude, adopt
        // the phase implied by resynthesis.
        let mut spec = magnitude.mapv(|m| Complex64::new(m, 0.0));
        for _ in 0..self.config.phase_iters {
            let audio = dsp::istft(&spec, self.config.frame, self.config.hop);
            let reanalyzed = dsp::stft(&audio, self.config.frame, self.config.hop);
            for ((k, f), cell) in spec.indexed_iter_mut() {
                let phase = reanalyzed[[k, f]];
                let norm = phase.norm();
                let unit = if norm > 1e-12 {
                    phase / norm
                } else {
                    Complex64::new(1.0, 0.0)
                };
                *cell = unit * magnitude[[k, f]];
            }
        }
        let samples = dsp::istft(&spec, self.config.frame, self.config.hop);
        Ok(Signal::Audio {
            samples,
            sample_rate: self.config.sample_rate,
        })
    }
}

/// Hop length used when rendering one toy spectrogram frame to audio.
pub const SONIFY_HOP: usize = 512;

/// Render a toy spectrogram to audio as a bank of sines, one per bin,
/// spaced a semitone apart upward from 440 Hz. The register sits where
/// a 64-band mel analysis resolves individual semitones, so pitch
/// content survives a mel round trip. Amplitudes follow the per-frame
/// bin values; the peak is normalized to 0.7.
pub fn sonify_toy(clip: &LatentClip) -> Result<Signal> {
    let (channels, bins, frames) = clip.shape();
    if channels != 1 {
        return Err(Error::shape(format!(
            "sonification expects a single-channel spectrogram, got {channels} channels"
        )));
    }
    let sample_rate = clip.sample_rate;
    let freqs: Vec<f64> = (0..bins)
        .map(|b| 440.0 * 2.0_f64.powf(b as f64 / 12.0))
        .collect();
    let total = frames * SONIFY_HOP;
    let mut samples = vec![0.0; total];
    for b in 0..bins {
        let omega = 2.0 * std::f64::consts::PI * freqs[b] / sample_rate as f64;
        for f in 0..frames {
            let amp = clip.data[[0, b, f]];
            if amp.abs() <= 1e-12 {
                continue;
            }
            for i in 0..SONIFY_HOP {
                let n = f * SONIFY_HOP + i;
                samples[n] += amp * (omega * n as f64).sin();
            }
        }
    }
    let peak = samples.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    if peak > 0.0 {
        let gain = 0.7 / peak;
        for s in &mut samples {
            *s *= gain;
        }
    }
    Ok(Signal::Audio {
        samples,
        sample_rate,
    })
}

/// Write mono PCM16 little-endian WAV. Samples are clamped to
/// [-1, 1] and scaled by 32767.
pub fn write_wav_pcm16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut bytes = Vec::with_capacity(44 + data_len);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&sample_rate.to_le_bytes());
    bytes.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    crate::container::write_atomic(path, &bytes)
}

/// Read mono PCM16 little-endian WAV, returning samples in [-1, 1]
/// (divided by 32767) and the sample rate.
pub fn read_wav_pcm16(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| Error::Container(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(bad("chunk extends past end of file"));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if format != 1 || channels != 1 || bits != 16 {
                    return Err(bad("only mono PCM16 is supported"));
                }
                sample_rate = Some(rate);
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_end + (size & 1);
    }
    let rate = sample_rate.ok_or_else(|| bad("missing fmt chunk"))?;
    let body = data.ok_or_else(|| bad("missing data chunk"))?;
    if body.len() % 2 != 0 {
        return Err(bad("data chunk has odd length"));
    }
    let samples = body
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32767.0)
        .collect();
    Ok((samples, rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{chroma_similarity, chromagram_audio};
    use crate::toybench::{build_dataset, AttributeSpace};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_codec_is_exact_over_random_clips() {
        let codec = IdentityCodec;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let data = Array3::from_shape_fn((1, 32, 32), |_| rng.gen_range(-3.0..3.0));
            let latent = codec.encode(&Signal::Tensor(data.clone())).unwrap();
            let Signal::Tensor(back) = codec.decode(&latent).unwrap() else {
                panic!("identity codec must decode to a tensor");
            };
            for (a, b) in data.iter().zip(back.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
        assert_eq!(worst, 0.0, "identity round trip must be bit-exact");
    }

    #[test]
    fn identity_codec_rejects_audio() {
        let err = IdentityCodec
            .encode(&Signal::Audio {
                samples: vec![0.0; 16],
                sample_rate: 16_000,
            })
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn sine_concentrates_in_the_expected_mel_band() {
        let codec = MelCodec::with_default_config();
        let sr = codec.sample_rate();
        let samples: Vec<f64> = (0..sr as usize)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
            .collect();
        let latent = codec
            .encode(&Signal::Audio {
                samples,
                sample_rate: sr,
            })
            .unwrap();
        let (_, bands, frames) = latent.shape();
        assert_eq!(bands, 64);
        // average band energy across frames, then take the peak band
        let mut energy = vec![0.0; bands];
        for m in 0..bands {
            for f in 0..frames {
                energy[m] += latent.data[[0, m, f]];
            }
        }
        let argmax = (0..bands).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        let center = codec.band_center_hz(argmax);
        let spacing = codec.band_center_hz(argmax + 1) - center;
        assert!(
            (center - 440.0).abs() <= spacing,
            "peak band centered at {center:.1} Hz is more than one band from 440 Hz"
        );
    }

    #[test]
    fn mel_round_trip_keeps_melody_chroma() {
        let ds = build_dataset(&AttributeSpace::default_space(), 1, 0xC0DEC).unwrap();
        let clip = LatentClip::toy(ds.clips[0].spectrogram.clone());
        let Signal::Audio {
            samples: original,
            sample_rate,
        } = sonify_toy(&clip).unwrap()
        else {
            panic!("sonification must produce audio");
        };
        let codec = MelCodec::with_default_config();
        let latent = codec
            .encode(&Signal::Audio {
                samples: original.clone(),
                sample_rate,
            })
            .unwrap();
        let Signal::Audio {
            samples: decoded, ..
        } = codec.decode(&latent).unwrap()
        else {
            panic!("mel codec must decode to audio");
        };
        let chroma_in = chromagram_audio(&original, sample_rate).unwrap();
        let chroma_out = chromagram_audio(&decoded, sample_rate).unwrap();
        let similarity = chroma_similarity(&chroma_in, &chroma_out).unwrap();
        assert!(
            similarity >= 0.9,
            "mel round-trip chroma similarity {similarity:.4} below 0.9"
        );
    }

    #[test]
    fn mel_codec_rejects_tensors_and_wrong_rates() {
        let codec = MelCodec::with_default_config();
        let err = codec
            .encode(&Signal::Tensor(Array3::zeros((1, 32, 32))))
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let err = codec
            .encode(&Signal::Audio {
                samples: vec![0.1; 2048],
                sample_rate: 22_050,
            })
            .unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
        let bad_latent = LatentClip::toy(Array3::zeros((1, 32, 32)));
        let err = codec.decode(&bad_latent).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn mel_config_validation() {
        let mut cfg = MelCodecConfig::default();
        cfg.hop = 4096;
        assert!(MelCodec::new(cfg).is_err());
        let mut cfg = MelCodecConfig::default();
        cfg.num_mels = 0;
        assert!(MelCodec::new(cfg).is_err());
        let mut cfg = MelCodecConfig::default();
        cfg.frame = 64;
        cfg.num_mels = 64;
        assert!(MelCodec::new(cfg).is_err(), "64 mels need more than 33 bins");
    }


    #[test]
    fn wav_round_trip_is_quantization_accurate_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..2000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        write_wav_pcm16(&path, &samples, 16_000).unwrap();
        let (back, rate) = read_wav_pcm16(&path).unwrap();
        assert_eq!(rate, 16_000);
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 0.5 / 32767.0 + 1e-12);
        }
        // a second pass through the quantizer changes nothing
        let path2 = dir.path().join("tone2.wav");
        write_wav_pcm16(&path2, &back, 16_000).unwrap();
        let (back2, _) = read_wav_pcm16(&path2).unwrap();
        assert_eq!(back, back2);
    }

    #[test]
    fn wav_reader_rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not.wav");
        std::fs::write(&path, b"definitely not audio").unwrap();
        assert!(matches!(
            read_wav_pcm16(&path).unwrap_err(),
            Error::Container(_)
        ));
    }
}
