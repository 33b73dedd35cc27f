//! Editing pre-existing clips. The clip is captioned, DDIM-inverted
//! under that caption back to an estimated starting latent, and the
//! estimate is handed to the editor so both passes share it. An
//! optional autocorrelation regularizer whitens the estimate between
//! inversion steps.

use crate::autodiff::Graph;
use crate::condition::{EditDirection, TextEncoder};
use crate::denoiser::Denoiser;
use crate::editor::{cfg_combine, edit_from, EditReport, EditRequest};
use crate::error::{Error, Result};
use crate::schedule::{ddim_invert_step, LatentClip, NoiseSchedule};
use crate::toybench::{from_model_space, ToyCaptioner};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

/// Circular-shift lags probed by the regularizer, along both the bin
/// and frame axes.
pub const AUTOCORR_LAGS: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub num_inference_steps: usize,
    /// Inversion fidelity is best at 1; higher values trade
    /// reconstruction accuracy for editability and are flagged in the
    /// trace.
    pub guidance_scale: f64,
    pub autocorr_weight: f64,
    pub autocorr_iters: usize,
    pub autocorr_step: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            num_inference_steps: 100,
            guidance_scale: 1.0,
            autocorr_weight: 0.0,
            autocorr_iters: 0,
            autocorr_step: 0.05,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_inference_steps == 0 {
            return Err(Error::parameter("at least one inversion step is required"));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 0.0) {
            return Err(Error::parameter("guidance scale must be finite and non-negative"));
        }
        if !(self.autocorr_weight.is_finite() && self.autocorr_weight >= 0.0) {
            return Err(Error::parameter("autocorr weight must be finite and non-negative"));
        }
        if !(self.autocorr_step.is_finite() && self.autocorr_step > 0.0) {
            return Err(Error::parameter("autocorr step must be finite and positive"));
        }
        Ok(())
    }

    fn autocorr_enabled(&self) -> bool {
        self.autocorr_weight > 0.0 && self.autocorr_iters > 0
    }
}

/// Per-step record of one inversion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionTrace {
    /// Timestep reached after each inversion step.
    pub timesteps: Vec<usize>,
    /// Latent L2 norm after each step (post regularization).
    pub norms: Vec<f64>,
    /// Regularizer value before the step's correction, when enabled.
    pub autocorr_values: Vec<Option<f64>>,
    /// Set when the configuration trades fidelity for editability.
    pub fidelity_note: Option<String>,
}

/// Estimate the starting latent that reproduces `z0` under the
/// caption: walk the inversion pairs upward, predicting noise at each
/// pair's upper timestep, optionally whitening after every step. The
/// trace records per-step norms.
pub fn invert(
    z0: &LatentClip,
    caption: &str,
    config: &InversionConfig,
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    encoder: &dyn TextEncoder,
) -> Result<(LatentClip, InversionTrace)> {
    config.validate()?;
    if schedule.inference_timesteps().len() != config.num_inference_steps {
        return Err(Error::parameter(format!(
            "config asks for {} inversion steps but the schedule provides {}",
            config.num_inference_steps,
            schedule.inference_timesteps().len()
        )));
    }
    let e = encoder.encode(caption)?;
    let uncond = encoder.empty();
    let w = config.guidance_scale;
    invert_with(z0, config, schedule, |z, t| {
        let (eps_cond, _) = denoiser.predict_noise(z, t, &e, false)?;
        if w == 1.0 {
            Ok(eps_cond)
        } else {
            let (eps_uncond, _) = denoiser.predict_noise(z, t, &uncond, false)?;
            cfg_combine(&eps_uncond, &eps_cond, w)
        }
    })
}

/// Inversion loop over an arbitrary noise predictor; the injection
/// point used to verify that replaying recorded predictions walks the
/// sampling trajectory backwards exactly.
fn invert_with(
    z0: &LatentClip,
    config: &InversionConfig,
    schedule: &NoiseSchedule,
    mut eps_at: impl FnMut(&Array3<f64>, usize) -> Result<Array3<f64>>,
) -> Result<(LatentClip, InversionTrace)> {
    let n = z0.data.len() as f64;
    let norm_limit = 1e3 * n.sqrt();
    let mut z = z0.clone();
    let mut timesteps = Vec::with_capacity(config.num_inference_steps);
    let mut norms = Vec::with_capacity(config.num_inference_steps);
    let mut autocorr_values = Vec::with_capacity(config.num_inference_steps);
    for (t_prev, t) in schedule.inversion_pairs() {
        let eps = eps_at(&z.data, t)?;
        z = ddim_invert_step(&z, &eps, t_prev, t, schedule)?;
        let r_before = if config.autocorr_enabled() {
            let (r, regularized) = autocorr_descend(&z, config);
            z = regularized;
            Some(r)
        } else {
            None
        };
        let norm = z.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > norm_limit {
            return Err(Error::Inversion(format!(
                "latent norm {norm:.3e} at timestep {t} exceeds {norm_limit:.3e}"
            )));
        }
        timesteps.push(t);
        norms.push(norm);
        autocorr_values.push(r_before);
    }
    let fidelity_note = if config.guidance_scale != 1.0 {
        Some(format!(
            "guidance scale {} trades reconstruction fidelity for editability",
            config.guidance_scale
        ))
    } else {
        None
    };
    Ok((
        z,
        InversionTrace {
            timesteps,
            norms,
            autocorr_values,
            fidelity_note,
        },
    ))
}

/// Regularizer value and its gradient with respect to `z`:
/// R(z) = sum over lags and both spatial axes of the squared
/// normalized circular autocorrelation, plus mean(z)^2 and
/// (var(z) - 1)^2.
fn autocorr_value_grad(z: &Array3<f64>) -> (f64, Array3<f64>) {
    let mut g = Graph::new();
    let zn = g.leaf(z.clone().into_dyn(), true);
    let mean = g.mean_all(zn);
    let centered = g.sub_scalar_node(zn, mean);
    let den_raw = g.dot_all(centered, centered);
    // epsilon keeps constant inputs (zero variance) differentiable
    let eps = g.constant(ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1]), 1e-12));
    let den = g.add(den_raw, eps);

    let mut total = None;
    for axis in [1usize, 2] {
        for lag in AUTOCORR_LAGS {
            if lag >= z.shape()[axis] {
                continue;
            }
            let rolled = g.roll(centered, axis, lag);
            let num = g.dot_all(centered, rolled);
            let rho = g.div_scalars(num, den);
            let rho2 = g.square(rho);
            total = Some(match total {
                Some(acc) => g.add(acc, rho2),
                None => rho2,
            });
        }
    }
    let mean2 = g.square(mean);
    total = Some(match total {
        Some(acc) => g.add(acc, mean2),
        None => mean2,
    });
    // var = mean(z^2) - mean(z)^2
    let z2 = g.square(zn);
    let m2 = g.mean_all(z2);
    let var = g.sub(m2, mean2);
    let one = g.constant(ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1]), 1.0));
    let var_err = g.sub(var, one);
    let var_term = g.square(var_err);
    let root = g.add(total.expect("moment terms always present"), var_term);

    let r = g.value(root)[[0]];
    let mut grads = g.backward(root);
    let grad = grads
        .take(zn)
        .expect("z marked for gradients")
        .into_dimensionality::<ndarray::Ix3>()
        .expect("latent rank");
    (r, grad)
}

/// Value of R(z), exposed for diagnostics.
pub fn autocorr_value(z: &LatentClip) -> f64 {
    autocorr_value_grad(&z.data).0
}

fn autocorr_descend(z: &LatentClip, config: &InversionConfig) -> (f64, LatentClip) {
    let mut current = z.clone();
    let (r_before, mut grad) = autocorr_value_grad(&current.data);
    for i in 0..config.autocorr_iters {
        let scale = config.autocorr_step * config.autocorr_weight;
        let candidate = &current.data - &grad.mapv(|v| v * scale);
        if candidate.iter().any(|v| !v.is_finite()) {
            // a bad step is dropped rather than propagated
            break;
        }
        current = current.with_data(candidate);
        if i + 1 < config.autocorr_iters {
            grad = autocorr_value_grad(&current.data).1;
        }
    }
    (r_before, current)
}

/// Gradient descent on R(z); the identity when iterations or weight
/// are zero.
pub fn autocorr_regularize(z: &LatentClip, config: &InversionConfig) -> LatentClip {
    if !config.autocorr_enabled() {
        return z.clone();
    }
    autocorr_descend(z, config).1
}

/// Adapter contract for captioning services: clip in (model space),
/// one-sentence caption out.
pub trait Captioner: Send + Sync {
    fn caption(&self, clip: &LatentClip) -> Result<String>;
    fn name(&self) -> &str;
}

impl Captioner for ToyCaptioner {
    /// The inherent probe works in storage range [0, 1]; the adapter
    /// receives model-space clips and converts first.
    fn caption(&self, clip: &LatentClip) -> Result<String> {
        ToyCaptioner::caption(self, &clip.with_data(from_model_space(&clip.data)))
    }

    fn name(&self) -> &str {
        "toy-probe"
    }
}

/// Caption a clip through the registered adapter.
pub fn caption_for_clip(
    clip: &LatentClip,
    captioner: Option<&dyn Captioner>,
) -> Result<String> {
    let c = captioner.ok_or_else(|| Error::Config("no captioner registered".into()))?;
    c.caption(clip)
}

/// Everything produced by one real-clip edit.
#[derive(Debug, Clone)]
pub struct RealEdit {
    pub caption: String,
    pub z_start_estimate: LatentClip,
    /// Reconstruction from the estimated latent under the caption.
    pub original: LatentClip,
    pub edited: LatentClip,
    pub report: EditReport,
    pub trace: InversionTrace,
}

/// Edit a pre-existing clip (model space): caption it, invert under
/// the caption, then run the constrained edit from the estimated
/// latent so both editor passes share it.
#[allow(clippy::too_many_arguments)]
pub fn edit_real(
    clip: &LatentClip,
    target_prompt: &str,
    direction: &EditDirection,
    config: &InversionConfig,
    alpha: f64,
    constraint_enabled: bool,
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    encoder: &dyn TextEncoder,
    captioner: Option<&dyn Captioner>,
) -> Result<RealEdit> {
    let caption = caption_for_clip(clip, captioner)?;
    let (z_start, trace) = invert(clip, &caption, config, denoiser, schedule, encoder)?;
    let mut request = EditRequest::new(
        caption.clone(),
        target_prompt,
        direction.clone(),
        0,
        config.num_inference_steps,
    );
    request.alpha = alpha;
    request.constraint_enabled = constraint_enabled;
    request.guidance_scale = config.guidance_scale;
    let (original, edited, report) = edit_from(&z_start, &request, denoiser, schedule, encoder)?;
    Ok(RealEdit {
        caption,
        z_start_estimate: z_start,
        original,
        edited,
        report,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::{ToyEncoderConfig, ToyTextEncoder};
    use crate::denoiser::{CondDims, DenoiserConfig};
    use crate::schedule::{ddim_step, BetaSpacing};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn harness(steps: usize) -> (Denoiser, ToyTextEncoder, NoiseSchedule) {
        let encoder = ToyTextEncoder::new(ToyEncoderConfig {
            d_s: 8,
            d_g: 8,
            d_c: 4,
            l_max: 8,
            k: 3,
            seed: 2,
        });
        let denoiser =
            Denoiser::init(DenoiserConfig::tiny(), CondDims::of(&encoder), 7).unwrap();
        let schedule = NoiseSchedule::build(200, 1e-4, 0.02, BetaSpacing::Linear, steps).unwrap();
        (denoiser, encoder, schedule)
    }

    fn noise_clip(seed: u64, shape: (usize, usize, usize)) -> LatentClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LatentClip::toy(Array3::from_shape_fn(shape, |_| rng.sample(StandardNormal)))
    }

    #[test]
    fn default_guidance_is_one() {
        let config = InversionConfig::default();
        assert_eq!(config.guidance_scale, 1.0);
        assert_eq!(config.num_inference_steps, 100);
        assert_eq!(config.autocorr_weight, 0.0);
    }

    #[test]
    fn replayed_predictions_walk_the_trajectory_back_exactly() {
        let (denoiser, encoder, schedule) = harness(10);
        let e = encoder.encode("relaxing jazz").unwrap();
        let z_t_start = noise_clip(3, (1, 8, 8));
        // forward sampling, recording eps by the timestep it was
        // predicted at
        let mut z = z_t_start.clone();
        let mut recorded: std::collections::HashMap<usize, Array3<f64>> =
            std::collections::HashMap::new();
        for (t, t_prev) in schedule.sampling_pairs() {
            let (eps, _) = denoiser.predict_noise(&z.data, t, &e, false).unwrap();
            recorded.insert(t, eps.clone());
            z = ddim_step(&z, &eps, t, t_prev, &schedule, 0.0, None).unwrap();
        }
        let z0 = z;
        let config = InversionConfig {
            num_inference_steps: 10,
            ..InversionConfig::default()
        };
        let (recovered, trace) = invert_with(&z0, &config, &schedule, |_, t| {
            Ok(recorded[&t].clone())
        })
        .unwrap();
        let max_err = (&recovered.data - &z_t_start.data)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_err < 1e-5, "max elementwise error {max_err}");
        assert_eq!(trace.timesteps.len(), 10);
        assert_eq!(*trace.timesteps.last().unwrap(), schedule.inference_timesteps()[0]);
    }

    #[test]
    fn inversion_recovers_sampler_start_approximately() {
        let (denoiser, encoder, schedule) = harness(25);
        let e = encoder.encode("relaxing jazz").unwrap();
        let caption = "relaxing jazz";
        let z_t_start = noise_clip(5, (1, 8, 8));
        let mut z = z_t_start.clone();
        for (t, t_prev) in schedule.sampling_pairs() {
            let (eps, _) = denoiser.predict_noise(&z.data, t, &e, false).unwrap();
            z = ddim_step(&z, &eps, t, t_prev, &schedule, 0.0, None).unwrap();
        }
        let config = InversionConfig {
            num_inference_steps: 25,
            ..InversionConfig::default()
        };
        let (recovered, _) =
            invert(&z, caption, &config, &denoiser, &schedule, &encoder).unwrap();
        let num = (&recovered.data - &z_t_start.data)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let den = z_t_start.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = num / den;
        assert!(rel < 1e-3, "relative recovery error {rel}");
    }

    #[test]
    fn divergent_predictions_are_reported() {
        let (_, _, schedule) = harness(10);
        let z0 = noise_clip(1, (1, 8, 8));
        let config = InversionConfig {
            num_inference_steps: 10,
            ..InversionConfig::default()
        };
        let out = invert_with(&z0, &config, &schedule, |z, _| {
            Ok(z.mapv(|_| 1e9))
        });
        match out {
            Err(Error::Inversion(msg)) => assert!(msg.contains("norm")),
            other => panic!("expected inversion error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn autocorr_disabled_is_identity() {
        let z = noise_clip(7, (1, 16, 16));
        let config = InversionConfig::default();
        let out = autocorr_regularize(&z, &config);
        assert_eq!(out.data, z.data);
        let config = InversionConfig {
            autocorr_weight: 1.0,
            autocorr_iters: 0,
            ..InversionConfig::default()
        };
        assert_eq!(autocorr_regularize(&z, &config).data, z.data);
    }

    #[test]
    fn autocorr_decreases_on_constant_input() {
        let z = LatentClip::toy(Array3::from_elem((1, 16, 16), 1.0));
        let config = InversionConfig {
            autocorr_weight: 1.0,
            autocorr_iters: 3,
            autocorr_step: 1.0,
            ..InversionConfig::default()
        };
        let before = autocorr_value(&z);
        let after = autocorr_value(&autocorr_regularize(&z, &config));
        // constant tensor: R = mean^2 + (0 - 1)^2 = 2
        assert!((before - 2.0).abs() < 1e-9, "R on constant ones = {before}");
        assert!(after < before, "R did not decrease: {before} -> {after}");
    }

    #[test]
    fn autocorr_near_iid_expectation_on_white_noise() {
        // analytic iid baseline: each squared autocorrelation has
        // mean 1/N, mean(z)^2 has mean 1/N, (var - 1)^2 has mean 2/N;
        // total 11/N with standard deviation sqrt(26)/N
        let n = 10_000usize;
        let z = noise_clip(11, (1, 100, 100));
        let r = autocorr_value(&z);
        let expected = 11.0 / n as f64;
        let sd = 26f64.sqrt() / n as f64;
        assert!(
            (r - expected).abs() <= 3.0 * sd,
            "R = {r}, expected {expected} within {}",
            3.0 * sd
        );
        // one regularizer step barely moves white noise
        let config = InversionConfig {
            autocorr_weight: 1.0,
            autocorr_iters: 1,
            ..InversionConfig::default()
        };
        let out = autocorr_regularize(&z, &config);
        let disp = (&out.data - &z.data).iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = z.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(disp < 0.01 * norm, "displacement {disp} vs norm {norm}");
    }

    #[test]
    fn caption_adapter_contract() {
        let clip = noise_clip(1, (1, 32, 32));
        assert!(matches!(
            caption_for_clip(&clip, None),
            Err(Error::Config(_))
        ));
        let captioner = ToyCaptioner::new(crate::toybench::AttributeSpace::default_space());
        let caption = caption_for_clip(&clip, Some(&captioner)).unwrap();
        assert!(!caption.is_empty());
    }

    #[test]
    fn identity_edit_real_reduces_to_reconstruction() {
        let (denoiser, encoder, schedule) = harness(10);
        let clip = noise_clip(9, (1, 8, 8));
        let captioner = EchoCaptioner("relaxing jazz music".into());
        let config = InversionConfig {
            num_inference_steps: 10,
            ..InversionConfig::default()
        };
        let out = edit_real(
            &clip,
            "relaxing jazz music",
            &EditDirection::identity("jazz", encoder.d_s()),
            &config,
            crate::editor::DEFAULT_ALPHA,
            true,
            &denoiser,
            &schedule,
            &encoder,
            Some(&captioner),
        )
        .unwrap();
        assert_eq!(out.caption, "relaxing jazz music");
        assert_eq!(out.original.data, out.edited.data);
        assert!(out
            .report
            .step_losses
            .iter()
            .all(|l| l.expect("constraint on") == 0.0));
    }

    struct EchoCaptioner(String);

    impl Captioner for EchoCaptioner {
        fn caption(&self, _clip: &LatentClip) -> Result<String> {
            Ok(self.0.clone())
        }

        fn name(&self) -> &str {
            "echo"
        }
    }

    #[test]
    fn trace_flags_guidance_away_from_one() {
        let (denoiser, encoder, schedule) = harness(10);
        let clip = noise_clip(2, (1, 8, 8));
        let config = InversionConfig {
            num_inference_steps: 10,
            guidance_scale: 2.5,
            ..InversionConfig::default()
        };
        let (_, trace) = invert(&clip, "jazz", &config, &denoiser, &schedule, &encoder).unwrap();
        assert!(trace.fidelity_note.is_some());
        let config = InversionConfig {
            num_inference_steps: 10,
            ..InversionConfig::default()
        };
        let (_, trace) = invert(&clip, "jazz", &config, &denoiser, &schedule, &encoder).unwrap();
        assert!(trace.fidelity_note.is_none());
    }
}
