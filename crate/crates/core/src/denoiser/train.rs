//! Noise-prediction training on the toy dataset: sample a timestep
//! and a Gaussian noise draw per clip, diffuse, and regress the
//! prediction onto the drawn noise. Prompts are dropped with
//! probability `p_uncond` so the trained model also covers the
//! unconditional branch used by classifier-free guidance.

use super::{CondDims, Denoiser, DenoiserConfig};
use crate::autodiff::Graph;
use crate::condition::{PromptEmbedding, TextEncoder};
use crate::error::{Error, Result};
use crate::schedule::{forward_diffuse, LatentClip, NoiseSchedule};
use crate::toybench::{to_model_space, ToyDataset};
use ndarray::{Array3, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine-decay floor for the learning rate, reached on the last
    /// optimizer step; unset keeps the rate constant.
    #[serde(default)]
    pub final_learning_rate: Option<f64>,
    /// Probability of replacing a clip's prompt with the empty
    /// (unconditional) embedding for one step.
    pub p_uncond: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 8,
            learning_rate: 2e-3,
            final_learning_rate: None,
            p_uncond: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::parameter("epochs and batch size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::parameter("learning rate must be positive"));
        }
        if let Some(f) = self.final_learning_rate {
            if !(f.is_finite() && f > 0.0 && f <= self.learning_rate) {
                return Err(Error::parameter(
                    "final learning rate must lie in (0, learning_rate]",
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.p_uncond) {
            return Err(Error::parameter("p_uncond must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub struct TrainingRun {
    pub denoiser: Denoiser,
    /// Mean per-sample MSE for each epoch.
    pub loss_curve: Vec<f64>,
}

/// Adam optimizer over the named weight map.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: usize,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn apply(
        &mut self,
        weights: &mut BTreeMap<String, Arc<ArrayD<f64>>>,
        grads: &BTreeMap<String, ArrayD<f64>>,
    ) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, g) in grads {
            let w = weights.get_mut(name).expect("gradient for unknown weight");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let target = Arc::make_mut(w);
            ndarray::Zip::from(target)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|wi, mi, vi, &gi| {
                    *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                    *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                    let m_hat = *mi / bc1;
                    let v_hat = *vi / bc2;
                    *wi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
    }
}

/// Train a fresh denoiser on the dataset. Clips are mapped from
/// storage range [0, 1] into model range [-1, 1] before diffusion.
/// Returns the weights and the per-epoch loss curve; a non-finite
/// epoch loss aborts with the last finite epoch reported.
pub fn train_toy_denoiser(
    dataset: &ToyDataset,
    schedule: &NoiseSchedule,
    config: DenoiserConfig,
    encoder: &dyn TextEncoder,
    train: &TrainConfig,
) -> Result<TrainingRun> {
    config.validate()?;
    train.validate()?;
    if dataset.clips.is_empty() {
        return Err(Error::parameter("dataset is empty"));
    }
    let shape = config.latent_shape();
    for (i, clip) in dataset.clips.iter().enumerate() {
        if clip.spectrogram.dim() != shape {
            return Err(Error::shape(format!(
                "clip {i} has shape {:?}, config expects {:?}",
                clip.spectrogram.dim(),
                shape
            )));
        }
    }

    let cond = CondDims::of(encoder);
    let mut denoiser = Denoiser::init(config, cond, train.seed)?;
    let uncond = encoder.empty();
    let embeddings: Vec<PromptEmbedding> = dataset
        .clips
        .iter()
        .map(|c| encoder.encode(&c.prompt))
        .collect::<Result<_>>()?;
    let latents: Vec<LatentClip> = dataset
        .clips
        .iter()
        .map(|c| LatentClip::toy(to_model_space(&c.spectrogram)))
        .collect();

    let t_max = schedule.num_train_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed.wrapping_add(0x5EED));
    let mut adam = Adam::new(train.learning_rate);
    let mut loss_curve = Vec::with_capacity(train.epochs);

    let batches_per_epoch = latents.len().div_ceil(train.batch_size);
    let total_steps = (train.epochs * batches_per_epoch).max(1);
    let mut opt_step = 0usize;

    for epoch in 0..train.epochs {
        let mut order: Vec<usize> = (0..latents.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for batch in order.chunks(train.batch_size) {
            let mut grad_acc: BTreeMap<String, ArrayD<f64>> = BTreeMap::new();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let t = rng.gen_range(1..=t_max);
                let eps = Array3::from_shape_fn(shape, |_| rng.sample(StandardNormal));
                let z_t = forward_diffuse(&latents[idx], t, &eps, schedule)?.data;
                let e = if rng.gen::<f64>() < train.p_uncond {
                    &uncond
                } else {
                    &embeddings[idx]
                };

                let mut g = Graph::new();
                let ids = denoiser.bind(&mut g, true);
                let z_id = g.constant(z_t.into_dyn());
                let (eps_hat, _) = denoiser.forward_graph(&mut g, &ids, z_id, t, e);
                let target = g.constant(eps.into_dyn());
                let diff = g.sub(eps_hat, target);
                let sq = g.square(diff);
                let loss_id = g.mean_all(sq);
                let loss = g.value(loss_id)[[0]];
                batch_loss += loss;

                let mut grads = g.backward(loss_id);
                for (name, &id) in &ids {
                    if let Some(grad) = grads.take(id) {
                        grad_acc
                            .entry(name.clone())
                            .and_modify(|acc| *acc += &grad)
                            .or_insert(grad);
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for grad in grad_acc.values_mut() {
                grad.mapv_inplace(|v| v * scale);
            }
            if let Some(floor) = train.final_learning_rate {
                let progress = opt_step as f64 / (total_steps - 1).max(1) as f64;
                let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                adam.set_lr(floor + (train.learning_rate - floor) * cos);
            }
            opt_step += 1;
            adam.apply(denoiser.weights_mut(), &grad_acc);
            epoch_loss += batch_loss;
            epoch_count += batch.len();
        }
        let mean_loss = epoch_loss / epoch_count as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Training {
                last_finite_epoch: epoch,
                detail: format!("epoch {} loss is not finite", epoch + 1),
            });
        }
        loss_curve.push(mean_loss);
    }

    Ok(TrainingRun {
        denoiser,
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::{ToyEncoderConfig, ToyTextEncoder};
    use crate::schedule::BetaSpacing;
    use crate::toybench::{Attributes, AttributeSpace, ToyClip};
    use ndarray::Array3;

    fn tiny_dataset(n: usize, bins: usize, frames: usize, seed: u64) -> ToyDataset {
        use rand::{Rng as _, SeedableRng as _};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = AttributeSpace::default_space();
        let clips = (0..n)
            .map(|i| {
                let spec = Array3::from_shape_fn((1, bins, frames), |_| rng.gen_range(0.0..1.0));
                let attributes = Attributes {
                    mood: space.moods[i % 3].0.clone(),
                    genre: space.genres[i % 3].0.clone(),
                    timbre: space.timbres[i % 3].0.clone(),
                };
                let prompt = attributes.prompt();
                ToyClip {
                    spectrogram: spec,
                    attributes,
                    prompt,
                    melody: vec![0; 8],
                    melody_seed: i as u64,
                }
            })
            .collect();
        ToyDataset {
            clips,
            space,
            seed,
        }
    }

    fn tiny_encoder() -> ToyTextEncoder {
        ToyTextEncoder::new(ToyEncoderConfig {
            d_s: 8,
            d_g: 8,
            d_c: 4,
            l_max: 8,
            k: 3,
            seed: 2,
        })
    }

    fn short_schedule() -> NoiseSchedule {
        NoiseSchedule::build(50, 1e-4, 0.05, BetaSpacing::Linear, 10).unwrap()
    }

    #[test]
    fn training_beats_zero_predictor_and_trends_down() {
        let dataset = tiny_dataset(16, 8, 8, 3);
        let schedule = short_schedule();
        let encoder = tiny_encoder();
        let train = TrainConfig {
            epochs: 12,
            batch_size: 4,
            learning_rate: 3e-3,
            p_uncond: 0.1,
            seed: 5,
        };
        let run = train_toy_denoiser(
            &dataset,
            &schedule,
            DenoiserConfig::tiny(),
            &encoder,
            &train,
        )
        .unwrap();
        assert_eq!(run.loss_curve.len(), 12);
        let first = run.loss_curve[0];
        let last = *run.loss_curve.last().unwrap();
        // zero-init output conv starts the loss at E[eps^2] ~= 1
        assert!(first > 0.5 && first < 2.0, "first epoch loss {first}");
        assert!(last < 1.0, "final loss {last} should beat the zero predictor");
        assert!(last < first, "loss should decrease: {first} -> {last}");
        // smoothed trend: quarter medians non-increasing within slack
        let quarter = run.loss_curve.len() / 4;
        let med = |s: &[f64]| {
            let mut v = s.to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let q1 = med(&run.loss_curve[..quarter]);
        let q4 = med(&run.loss_curve[3 * quarter..]);
        assert!(q4 <= q1 + 1e-9, "quarter medians increased: {q1} -> {q4}");
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let dataset = tiny_dataset(6, 8, 8, 1);
        let schedule = short_schedule();
        let encoder = tiny_encoder();
        let train = TrainConfig {
            epochs: 2,
            batch_size: 3,
            learning_rate: 1e-3,
            p_uncond: 0.1,
            seed: 9,
        };
        let a = train_toy_denoiser(&dataset, &schedule, DenoiserConfig::tiny(), &encoder, &train)
            .unwrap();
        let b = train_toy_denoiser(&dataset, &schedule, DenoiserConfig::tiny(), &encoder, &train)
            .unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        for (name, w) in a.denoiser.weights() {
            assert_eq!(w.as_ref(), b.denoiser.weights()[name].as_ref(), "{name}");
        }
        let other = TrainConfig { seed: 10, ..train };
        let c = train_toy_denoiser(&dataset, &schedule, DenoiserConfig::tiny(), &encoder, &other)
            .unwrap();
        assert_ne!(a.loss_curve, c.loss_curve);
    }

    #[test]
    fn divergence_reports_last_finite_epoch() {
        let dataset = tiny_dataset(4, 8, 8, 2);
        let schedule = short_schedule();
        let encoder = tiny_encoder();
        // one Adam step moves each weight by about lr, so this jumps
        // straight past the f64 range inside the conv stack
        let train = TrainConfig {
            epochs: 30,
            batch_size: 4,
            learning_rate: 1e30,
            p_uncond: 0.0,
            seed: 1,
        };
        match train_toy_denoiser(&dataset, &schedule, DenoiserConfig::tiny(), &encoder, &train) {
            Err(Error::Training {
                last_finite_epoch,
                detail,
            }) => {
                assert!(last_finite_epoch < 30);
                assert!(!detail.is_empty());
            }
            Ok(run) => panic!(
                "expected divergence, got curve ending at {:?}",
                run.loss_curve.last()
            ),
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let dataset = ToyDataset {
            clips: vec![],
            space: AttributeSpace::default_space(),
            seed: 0,
        };
        let schedule = short_schedule();
        let encoder = tiny_encoder();
        let err = train_toy_denoiser(
            &dataset,
            &schedule,
            DenoiserConfig::tiny(),
            &encoder,
            &TrainConfig::default(),
        );
        assert!(matches!(err, Err(Error::Parameter(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dataset = tiny_dataset(2, 16, 16, 0);
        let schedule = short_schedule();
        let encoder = tiny_encoder();
        let err = train_toy_denoiser(
            &dataset,
            &schedule,
            DenoiserConfig::tiny(),
            &encoder,
            &TrainConfig::default(),
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
