//! Zero-shot editing loop. A clip generated (or inverted) under the
//! source prompt is regenerated under the shifted embedding while the
//! cross-attention maps of every site are pulled toward the maps
//! recorded during reconstruction: at each timestep the edited pass
//! first captures its provisional maps, takes one gradient step on
//! z_t against the map discrepancy, then predicts noise at the
//! shifted latent and applies the deterministic DDIM update.

use crate::autodiff::Id;
use crate::condition::{apply_edit, EditDirection, PromptEmbedding, TextEncoder};
use crate::denoiser::{AttentionMaps, Denoiser};
use crate::error::{Error, Result};
use crate::schedule::{ddim_step, LatentClip, NoiseSchedule};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Uniform gradient step length applied to z_t at every timestep.
pub const DEFAULT_ALPHA: f64 = 0.04;

/// Attention maps of every site, one entry per inference timestep in
/// sampling order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrajectory {
    pub steps: Vec<AttentionMaps>,
}

impl AttentionTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One requested edit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditRequest {
    pub source_prompt: String,
    pub target_prompt: String,
    pub direction: EditDirection,
    /// Gradient step length on z_t; 0 disables the map constraint.
    pub alpha: f64,
    /// Classifier-free guidance weight; 1 = pure conditional.
    pub guidance_scale: f64,
    pub seed: u64,
    pub num_inference_steps: usize,
    pub constraint_enabled: bool,
}

impl EditRequest {
    pub fn new(
        source_prompt: impl Into<String>,
        target_prompt: impl Into<String>,
        direction: EditDirection,
        seed: u64,
        num_inference_steps: usize,
    ) -> Self {
        EditRequest {
            source_prompt: source_prompt.into(),
            target_prompt: target_prompt.into(),
            direction,
            alpha: DEFAULT_ALPHA,
            guidance_scale: 1.0,
            seed,
            num_inference_steps,
            constraint_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::parameter("alpha must be finite and non-negative"));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 0.0) {
            return Err(Error::parameter("guidance scale must be finite and non-negative"));
        }
        if self.num_inference_steps == 0 {
            return Err(Error::parameter("at least one inference step is required"));
        }
        Ok(())
    }
}

pub const EDIT_REPORT_SCHEMA_VERSION: u32 = 1;

/// Structured record of one edit run: config echo plus the per-step
/// constraint loss (absent where the constraint was skipped).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditReport {
    pub schema_version: u32,
    pub source_prompt: String,
    pub target_prompt: String,
    pub seed: u64,
    pub alpha: f64,
    pub guidance_scale: f64,
    pub constraint_enabled: bool,
    /// Per-site losses are summed into one scalar per step.
    pub site_reduction: String,
    pub timesteps: Vec<usize>,
    pub step_losses: Vec<Option<f64>>,
    pub denoiser_evals_per_step: Vec<usize>,
}

impl EditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("edit report: {e}")))
    }
}

/// DDIM reconstruction from `z_start` under `e`, recording the
/// conditional pass's attention maps at every timestep. With
/// `guidance_scale` away from 1 an unconditional embedding must be
/// supplied for the second prediction branch.
pub fn reconstruct_and_record(
    z_start: &LatentClip,
    e: &PromptEmbedding,
    schedule: &NoiseSchedule,
    denoiser: &Denoiser,
    guidance_scale: f64,
    uncond: Option<&PromptEmbedding>,
) -> Result<(LatentClip, AttentionTrajectory)> {
    let mut z = z_start.clone();
    let mut steps = Vec::with_capacity(schedule.inference_timesteps().len());
    for (t, t_prev) in schedule.sampling_pairs() {
        let (eps_cond, maps) = denoiser.predict_noise(&z.data, t, e, true)?;
        let eps = guided_eps(&z, eps_cond, t, denoiser, guidance_scale, uncond)?;
        steps.push(maps.expect("capture requested"));
        z = ddim_step(&z, &eps, t, t_prev, schedule, 0.0, None)?;
    }
    Ok((z, AttentionTrajectory { steps }))
}

fn guided_eps(
    z: &LatentClip,
    eps_cond: Array3<f64>,
    t: usize,
    denoiser: &Denoiser,
    guidance_scale: f64,
    uncond: Option<&PromptEmbedding>,
) -> Result<Array3<f64>> {
    if guidance_scale == 1.0 {
        return Ok(eps_cond);
    }
    let empty = uncond.ok_or_else(|| {
        Error::parameter("guidance away from 1 needs the unconditional embedding")
    })?;
    let (eps_uncond, _) = denoiser.predict_noise(&z.data, t, empty, false)?;
    cfg_combine(&eps_uncond, &eps_cond, guidance_scale)
}

/// Classifier-free guidance mix: eps_uncond + w * (eps_cond - eps_uncond).
pub fn cfg_combine(
    eps_uncond: &Array3<f64>,
    eps_cond: &Array3<f64>,
    w: f64,
) -> Result<Array3<f64>> {
    if eps_uncond.dim() != eps_cond.dim() {
        return Err(Error::shape(format!(
            "guidance branches disagree: {:?} vs {:?}",
            eps_uncond.dim(),
            eps_cond.dim()
        )));
    }
    Ok(eps_uncond + &((eps_cond - eps_uncond).mapv(|v| v * w)))
}

/// Euclidean norm of the difference between two recorded map sets,
/// all sites stacked into one vector.
pub fn attention_loss(m_edit: &AttentionMaps, m_origin: &AttentionMaps) -> Result<f64> {
    if m_edit.maps.len() != m_origin.maps.len() {
        return Err(Error::shape(format!(
            "map sets have {} vs {} sites",
            m_edit.maps.len(),
            m_origin.maps.len()
        )));
    }
    let mut total = 0.0;
    for (s, (a, b)) in m_edit.maps.iter().zip(&m_origin.maps).enumerate() {
        if a.dim() != b.dim() {
            return Err(Error::shape(format!(
                "site {s} maps disagree: {:?} vs {:?}; prompt edits must preserve token count",
                a.dim(),
                b.dim()
            )));
        }
        total += a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(total.sqrt())
}

/// Constraint loss at one timestep and its gradient with respect to
/// z_t, differentiated through the provisional pass's attention maps
/// with the recorded maps held constant.
pub fn attention_loss_gradient(
    denoiser: &Denoiser,
    z_t: &Array3<f64>,
    t: usize,
    e_edit: &PromptEmbedding,
    m_origin: &AttentionMaps,
) -> Result<(f64, Array3<f64>)> {
    let mut pass = denoiser.forward_pass(z_t, t, e_edit, true)?;
    if pass.maps.len() != m_origin.maps.len() {
        return Err(Error::shape(format!(
            "recorded {} sites, model has {}",
            m_origin.maps.len(),
            pass.maps.len()
        )));
    }
    let map_ids = pass.maps.clone();
    let mut total: Option<Id> = None;
    for (&m_id, target) in map_ids.iter().zip(&m_origin.maps) {
        if pass.graph.value(m_id).shape() != target.shape() {
            return Err(Error::shape(format!(
                "site map {:?} vs recorded {:?}",
                pass.graph.value(m_id).shape(),
                target.shape()
            )));
        }
        let tgt = pass.graph.constant(target.clone().into_dyn());
        let diff = pass.graph.sub(m_id, tgt);
        let sq = pass.graph.square(diff);
        let s = pass.graph.sum_all(sq);
        total = Some(match total {
            Some(acc) => pass.graph.add(acc, s),
            None => s,
        });
    }
    let loss_id = pass.graph.sqrt_scalar(total.expect("at least one site"));
    let loss = pass.graph.value(loss_id)[[0]];
    let mut grads = pass.graph.backward(loss_id);
    let g = grads
        .take(pass.z)
        .expect("z marked for gradients")
        .into_dimensionality::<ndarray::Ix3>()
        .expect("latent rank");
    if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            timestep: t,
            detail: "attention constraint gradient is not finite".into(),
        });
    }
    Ok((loss, g))
}

/// Outcome of one edited denoising step.
#[derive(Debug, Clone)]
pub struct EditStep {
    pub z_prev: LatentClip,
    /// Constraint loss at this step; absent when skipped.
    pub loss: Option<f64>,
    pub denoiser_evals: usize,
}

/// One timestep of the edited pass: capture provisional maps under
/// the edited embedding, take a single gradient step of length
/// `alpha` on z_t against the recorded maps, predict noise at the
/// shifted latent, then apply the deterministic DDIM update. With
/// alpha = 0 the capture and shift are skipped entirely.
#[allow(clippy::too_many_arguments)]
pub fn constrained_edit_step(
    z_t: &LatentClip,
    e_edit: &PromptEmbedding,
    m_origin_t: &AttentionMaps,
    t: usize,
    t_prev: usize,
    alpha: f64,
    schedule: &NoiseSchedule,
    denoiser: &Denoiser,
    guidance_scale: f64,
    uncond: Option<&PromptEmbedding>,
) -> Result<EditStep> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::parameter("alpha must be finite and non-negative"));
    }
    let mut evals = 0usize;
    let (z_shifted, loss) = if alpha > 0.0 {
        let (loss, g) = attention_loss_gradient(denoiser, &z_t.data, t, e_edit, m_origin_t)?;
        evals += 1;
        // g = 0 must reproduce the unconstrained step bit-for-bit, so
        // skip the arithmetic rather than subtracting a zero tensor
        let shifted = if g.iter().all(|&v| v == 0.0) {
            z_t.clone()
        } else {
            z_t.with_data(&z_t.data - &g.mapv(|v| v * alpha))
        };
        (shifted, Some(loss))
    } else {
        (z_t.clone(), None)
    };
    let (eps_cond, _) = denoiser.predict_noise(&z_shifted.data, t, e_edit, false)?;
    evals += 1;
    if guidance_scale != 1.0 {
        evals += 1;
    }
    let eps = guided_eps(&z_shifted, eps_cond, t, denoiser, guidance_scale, uncond)?;
    let z_prev = ddim_step(&z_shifted, &eps, t, t_prev, schedule, 0.0, None)?;
    Ok(EditStep {
        z_prev,
        loss,
        denoiser_evals: evals,
    })
}

/// The two-pass core over explicit embeddings: reconstruct under
/// `e_source` recording maps, then run the edited pass from the same
/// starting latent under `e_edit` with per-step gradient length
/// `alpha`. Returns the reconstruction, the edited clip, and the
/// per-step losses and denoiser evaluation counts.
#[allow(clippy::too_many_arguments)]
pub fn edit_with_embeddings(
    z_start: &LatentClip,
    e_source: &PromptEmbedding,
    e_edit: &PromptEmbedding,
    alpha: f64,
    guidance_scale: f64,
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    uncond: Option<&PromptEmbedding>,
) -> Result<(LatentClip, LatentClip, Vec<Option<f64>>, Vec<usize>)> {
    let (original, trajectory) = reconstruct_and_record(
        z_start,
        e_source,
        schedule,
        denoiser,
        guidance_scale,
        uncond,
    )?;
    let mut z = z_start.clone();
    let mut step_losses = Vec::with_capacity(trajectory.len());
    let mut evals = Vec::with_capacity(trajectory.len());
    for (i, (t, t_prev)) in schedule.sampling_pairs().into_iter().enumerate() {
        let step = constrained_edit_step(
            &z,
            e_edit,
            &trajectory.steps[i],
            t,
            t_prev,
            alpha,
            schedule,
            denoiser,
            guidance_scale,
            uncond,
        )?;
        if let Some(l) = step.loss {
            debug_assert!(l >= 0.0);
        }
        step_losses.push(step.loss);
        evals.push(step.denoiser_evals);
        z = step.z_prev;
    }
    Ok((original, z, step_losses, evals))
}

/// Run a full edit from an explicit starting latent: reconstruct
/// under the source prompt while recording maps, shift the embedding,
/// and run the constrained edited pass from the same z_T over the
/// same timesteps. Returns the reconstruction, the edited clip (both
/// in model space), and the step-by-step report.
pub fn edit_from(
    z_start: &LatentClip,
    request: &EditRequest,
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    encoder: &dyn TextEncoder,
) -> Result<(LatentClip, LatentClip, EditReport)> {
    request.validate()?;
    let timesteps = schedule.inference_timesteps().to_vec();
    if timesteps.len() != request.num_inference_steps {
        return Err(Error::parameter(format!(
            "request asks for {} inference steps but the schedule provides {}",
            request.num_inference_steps,
            timesteps.len()
        )));
    }
    let e_source = encoder.encode(&request.source_prompt)?;
    let e_target = encoder.encode(&request.target_prompt)?;
    let e_edit = apply_edit(&e_source, &request.direction, &e_target)?;
    let uncond = encoder.empty();
    let alpha = if request.constraint_enabled {
        request.alpha
    } else {
        0.0
    };
    let (original, edited, step_losses, evals) = edit_with_embeddings(
        z_start,
        &e_source,
        &e_edit,
        alpha,
        request.guidance_scale,
        denoiser,
        schedule,
        Some(&uncond),
    )?;
    let report = EditReport {
        schema_version: EDIT_REPORT_SCHEMA_VERSION,
        source_prompt: request.source_prompt.clone(),
        target_prompt: request.target_prompt.clone(),
        seed: request.seed,
        alpha: request.alpha,
        guidance_scale: request.guidance_scale,
        constraint_enabled: request.constraint_enabled,
        site_reduction: "sum".into(),
        timesteps,
        step_losses,
        denoiser_evals_per_step: evals,
    };
    Ok((original, edited, report))
}

/// [`edit_from`] with the starting latent drawn from the request's
/// seed, the generated-clip editing workflow.
pub fn edit(
    request: &EditRequest,
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    encoder: &dyn TextEncoder,
) -> Result<(LatentClip, LatentClip, EditReport)> {
    let shape = denoiser.config().latent_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let z_start = LatentClip::toy(Array3::from_shape_fn(shape, |_| rng.sample(StandardNormal)));
    edit_from(&z_start, request, denoiser, schedule, encoder)
}
