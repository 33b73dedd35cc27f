//! Diffusion noise schedule and sampling kernels.
//!
//! Owns the variance schedule (α_t, ᾱ_t, σ_t), the forward-diffusion
//! marginal, the stochastic reverse (DDPM) step, the deterministic
//! DDIM step, and the exact algebraic DDIM inversion step. All
//! functions are pure; callers supply noise tensors explicitly so
//! every step is reproducible.

use crate::error::{Error, Result};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

/// Beta spacing for [`NoiseSchedule::build`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSpacing {
    /// β_t linearly spaced between beta_min and beta_max.
    Linear,
    /// √β_t linearly spaced; betas are the squares.
    ScaledLinear,
}

/// A latent spectrogram clip: rank-3 tensor (channels, freq bins,
/// time frames) plus audio metadata carried through processing.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClip {
    pub data: Array3<f64>,
    pub sample_rate: u32,
    pub duration_seconds: f64,
}

impl LatentClip {
    pub fn new(data: Array3<f64>, sample_rate: u32, duration_seconds: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::shape("latent clip must be non-empty"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::parameter("latent clip contains non-finite entries"));
        }
        Ok(LatentClip {
            data,
            sample_rate,
            duration_seconds,
        })
    }

    /// Wrap a toy-benchmark latent (16 kHz metadata, one frame = one
    /// hop of 512 samples).
    pub fn toy(data: Array3<f64>) -> Self {
        let frames = data.shape()[2] as f64;
        LatentClip {
            data,
            sample_rate: 16_000,
            duration_seconds: frames * 512.0 / 16_000.0,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2])
    }

    /// Same tensor metadata with replaced contents.
    pub fn with_data(&self, data: Array3<f64>) -> Self {
        LatentClip {
            data,
            sample_rate: self.sample_rate,
            duration_seconds: self.duration_seconds,
        }
    }
}

/// Precomputed diffusion schedule over T training timesteps plus the
/// decreasing timestep subsequence used for DDIM sampling.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    /// Noise scale of the stochastic reverse step, σ_t = √β_t. The
    /// deterministic DDIM path derives its own σ from eta (0 when
    /// eta = 0).
    sigmas: Vec<f64>,
    inference_timesteps: Vec<usize>,
}

impl NoiseSchedule {
    /// Build a schedule with β spaced over [beta_min, beta_max].
    pub fn build(
        num_train_steps: usize,
        beta_min: f64,
        beta_max: f64,
        spacing: BetaSpacing,
        num_inference_steps: usize,
    ) -> Result<Self> {
        if num_train_steps == 0 {
            return Err(Error::parameter("num_train_steps must be positive"));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::parameter(format!(
                "betas must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let t = num_train_steps;
        let frac = |i: usize| {
            if t == 1 {
                0.0
            } else {
                i as f64 / (t - 1) as f64
            }
        };
        let betas: Vec<f64> = match spacing {
            BetaSpacing::Linear => (0..t)
                .map(|i| beta_min + (beta_max - beta_min) * frac(i))
                .collect(),
            BetaSpacing::ScaledLinear => (0..t)
                .map(|i| {
                    let s = beta_min.sqrt() + (beta_max.sqrt() - beta_min.sqrt()) * frac(i);
                    s * s
                })
                .collect(),
        };
        Self::from_betas(&betas, num_inference_steps)
    }

    /// Build from explicit per-step betas. Zero betas are accepted
    /// here (useful for degenerate test schedules); [`Self::build`]
    /// always produces strictly positive ones.
    pub fn from_betas(betas: &[f64], num_inference_steps: usize) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::parameter("beta list must be non-empty"));
        }
        if betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::parameter("each beta must lie in [0, 1)"));
        }
        if num_inference_steps == 0 || num_inference_steps > betas.len() {
            return Err(Error::parameter(format!(
                "num_inference_steps must be in [1, {}], got {num_inference_steps}",
                betas.len()
            )));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut prod = 1.0;
        for a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        let sigmas: Vec<f64> = betas.iter().map(|b| b.sqrt()).collect();
        let t = betas.len();
        let s = num_inference_steps;
        // Evenly spaced, strictly decreasing; for T=1000, S=100 this
        // is 1000, 990, ..., 10.
        let inference_timesteps: Vec<usize> = (1..=s).map(|i| t * (s - i + 1) / s).collect();
        Ok(NoiseSchedule {
            alphas,
            alpha_bars,
            sigmas,
            inference_timesteps,
        })
    }

    pub fn num_train_steps(&self) -> usize {
        self.alphas.len()
    }

    /// α_t for 1-based t.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t for 0-based-inclusive t, with the convention ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// σ_t = √β_t for the stochastic reverse step, 1-based t.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn inference_timesteps(&self) -> &[usize] {
        &self.inference_timesteps
    }

    /// (t, t_prev) pairs visited by DDIM sampling, ending at (τ_S, 0).
    pub fn sampling_pairs(&self) -> Vec<(usize, usize)> {
        let ts = &self.inference_timesteps;
        let mut pairs = Vec::with_capacity(ts.len());
        for w in ts.windows(2) {
            pairs.push((w[0], w[1]));
        }
        pairs.push((ts[ts.len() - 1], 0));
        pairs
    }

    /// (t_prev, t) pairs visited by DDIM inversion, starting at
    /// (0, τ_S) and ending at (τ_2, τ_1).
    pub fn inversion_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = self.sampling_pairs();
        pairs.reverse();
        pairs.iter().map(|&(t, t_prev)| (t_prev, t)).collect()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.num_train_steps() {
            return Err(Error::parameter(format!(
                "timestep {t} outside [1, {}]",
                self.num_train_steps()
            )));
        }
        Ok(())
    }
}

/// Serializable recipe for [`NoiseSchedule::build`], used by
/// checkpoints and run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub num_train_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub spacing: BetaSpacing,
    pub num_inference_steps: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            num_train_steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            spacing: BetaSpacing::Linear,
            num_inference_steps: 50,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(
            self.num_train_steps,
            self.beta_min,
            self.beta_max,
            self.spacing,
            self.num_inference_steps,
        )
    }
}

fn check_same_shape(a: &Array3<f64>, b: &Array3<f64>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Sample the forward-diffusion marginal z_t = √ᾱ_t·z_0 + √(1−ᾱ_t)·ε.
pub fn forward_diffuse(
    z0: &LatentClip,
    t: usize,
    noise: &Array3<f64>,
    schedule: &NoiseSchedule,
) -> Result<LatentClip> {
    schedule.check_t(t)?;
    check_same_shape(&z0.data, noise, "forward_diffuse noise shape")?;
    let ab = schedule.alpha_bar(t);
    let data = z0.data.mapv(|v| v * ab.sqrt()) + noise.mapv(|v| v * (1.0 - ab).sqrt());
    Ok(z0.with_data(data))
}

/// One stochastic reverse step:
/// z_{t−1} = (z_t − ((1−α_t)/√(1−ᾱ_t))·ε̂)/√α_t + σ_t·noise.
pub fn ddpm_step(
    z_t: &LatentClip,
    eps_hat: &Array3<f64>,
    t: usize,
    schedule: &NoiseSchedule,
    noise: &Array3<f64>,
) -> Result<LatentClip> {
    schedule.check_t(t)?;
    check_same_shape(&z_t.data, eps_hat, "ddpm_step eps_hat shape")?;
    check_same_shape(&z_t.data, noise, "ddpm_step noise shape")?;
    let alpha = schedule.alpha(t);
    let ab = schedule.alpha_bar(t);
    // degenerate noiseless step (alpha_bar = 1): the update is the identity
    let coeff = if ab < 1.0 {
        (1.0 - alpha) / (1.0 - ab).sqrt()
    } else {
        0.0
    };
    let sigma = schedule.sigma(t);
    let data = (&z_t.data - &eps_hat.mapv(|v| v * coeff)).mapv(|v| v / alpha.sqrt())
        + noise.mapv(|v| v * sigma);
    Ok(z_t.with_data(data))
}

/// σ for the DDIM step at a given eta; zero when eta = 0 or when the
/// step lands on clean data (ᾱ_{t_prev} = 1).
fn ddim_sigma(schedule: &NoiseSchedule, t: usize, t_prev: usize, eta: f64) -> f64 {
    let ab_t = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t_prev);
    let ratio = (1.0 - ab_prev) / (1.0 - ab_t);
    eta * (ratio * (1.0 - ab_t / ab_prev)).max(0.0).sqrt()
}

/// One DDIM step from t down to t_prev. With eta = 0 the update is
/// fully deterministic and `noise` may be `None`.
pub fn ddim_step(
    z_t: &LatentClip,
    eps_hat: &Array3<f64>,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    eta: f64,
    noise: Option<&Array3<f64>>,
) -> Result<LatentClip> {
    schedule.check_t(t)?;
    if t_prev >= t {
        return Err(Error::parameter(format!(
            "ddim_step requires t_prev < t, got {t_prev} >= {t}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::parameter(format!("eta must be in [0, 1], got {eta}")));
    }
    check_same_shape(&z_t.data, eps_hat, "ddim_step eps_hat shape")?;
    let ab_t = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t_prev);
    let sigma = if eta == 0.0 {
        0.0
    } else {
        ddim_sigma(schedule, t, t_prev, eta)
    };
    let z0_pred = (&z_t.data - &eps_hat.mapv(|v| v * (1.0 - ab_t).sqrt()))
        .mapv(|v| v / ab_t.sqrt());
    let dir_coeff = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let mut data = z0_pred.mapv(|v| v * ab_prev.sqrt()) + eps_hat.mapv(|v| v * dir_coeff);
    if sigma > 0.0 {
        let n = noise.ok_or_else(|| {
            Error::parameter("ddim_step with eta > 0 requires a noise tensor")
        })?;
        check_same_shape(&z_t.data, n, "ddim_step noise shape")?;
        data += &n.mapv(|v| v * sigma);
    }
    Ok(z_t.with_data(data))
}

/// Exact algebraic inverse of the eta = 0 DDIM step under the same
/// ε̂: maps z_{t_prev} back up to z_t.
pub fn ddim_invert_step(
    z_prev: &LatentClip,
    eps_hat: &Array3<f64>,
    t_prev: usize,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<LatentClip> {
    schedule.check_t(t)?;
    if t_prev >= t {
        return Err(Error::parameter(format!(
            "ddim_invert_step requires t_prev < t, got {t_prev} >= {t}"
        )));
    }
    check_same_shape(&z_prev.data, eps_hat, "ddim_invert_step eps_hat shape")?;
    let ab_t = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t_prev);
    let scale = (ab_t / ab_prev).sqrt();
    let coeff = (1.0 - ab_t).sqrt() - scale * (1.0 - ab_prev).sqrt();
    let data = z_prev.data.mapv(|v| v * scale) + eps_hat.mapv(|v| v * coeff);
    Ok(z_prev.with_data(data))
}
