//! `train-toy`: build a synthetic dataset, train the denoiser on it,
//! and save checkpoint plus dataset artifacts.

use cadenza::condition::{ToyEncoderConfig, ToyTextEncoder};
use cadenza::container::{dataset_manifest, save_checkpoint, save_dataset, CheckpointMeta};
use cadenza::denoiser::{train_toy_denoiser, DenoiserConfig, TrainConfig};
use cadenza::schedule::{BetaSpacing, ScheduleSpec};
use cadenza::toybench::{build_dataset, AttributeSpace};

use crate::config::{load_section, Resolver};
use crate::error::{CliError, CliResult};

use super::CommonArgs;

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Synthetic training clips to generate.
    #[arg(long)]
    pub clips: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Probability of dropping the condition during training.
    #[arg(long)]
    pub p_uncond: Option<f64>,

    /// Training seed (shuffling, timesteps, noise draws).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Dataset generation seed.
    #[arg(long)]
    pub data_seed: Option<u64>,

    /// Model size: "default" or "tiny".
    #[arg(long)]
    pub arch: Option<String>,

    /// Diffusion training timesteps T.
    #[arg(long)]
    pub train_steps: Option<usize>,

    #[arg(long)]
    pub beta_min: Option<f64>,

    #[arg(long)]
    pub beta_max: Option<f64>,

    /// Beta spacing: "linear" or "scaled-linear".
    #[arg(long)]
    pub spacing: Option<String>,

    /// Default DDIM inference step count stored with the checkpoint.
    #[arg(long)]
    pub steps: Option<usize>,
}

pub const COMMAND: &str = "train-toy";

pub fn run(args: &TrainArgs) -> CliResult {
    let defaults = TrainConfig::default();
    let spec_defaults = ScheduleSpec::default();
    let mut r = Resolver::new(
        COMMAND,
        load_section(args.common.config.as_deref(), COMMAND)?,
    );
    let clips = r.usize("clips", args.clips, Some(96))?;
    let epochs = r.usize("epochs", args.epochs, Some(defaults.epochs))?;
    let batch_size = r.usize("batch-size", args.batch_size, Some(defaults.batch_size))?;
    let learning_rate = r.f64(
        "learning-rate",
        args.learning_rate,
        Some(defaults.learning_rate),
    )?;
    let p_uncond = r.f64("p-uncond", args.p_uncond, Some(defaults.p_uncond))?;
    let seed = r.u64("seed", args.seed, Some(defaults.seed))?;
    let data_seed = r.u64("data-seed", args.data_seed, Some(7))?;
    let arch = r.string("arch", args.arch.as_deref(), Some("default"))?;
    let train_steps = r.usize(
        "train-steps",
        args.train_steps,
        Some(spec_defaults.num_train_steps),
    )?;
    let beta_min = r.f64("beta-min", args.beta_min, Some(spec_defaults.beta_min))?;
    let beta_max = r.f64("beta-max", args.beta_max, Some(spec_defaults.beta_max))?;
    let spacing = r.string("spacing", args.spacing.as_deref(), Some("linear"))?;
    let steps = r.usize("steps", args.steps, Some(spec_defaults.num_inference_steps))?;

    let denoiser_config = match arch.as_str() {
        "default" => DenoiserConfig::default(),
        // reduced capacity, same latent shape as the toy clips
        "tiny" => DenoiserConfig {
            stage_channels: vec![8],
            attention_width: 16,
            heads: 2,
            time_embed_dim: 16,
            ..DenoiserConfig::default()
        },
        other => {
            return Err(CliError::usage(format!(
                "unknown arch {other:?}; expected \"default\" or \"tiny\""
            )))
        }
    };
    let spacing = match spacing.as_str() {
        "linear" => BetaSpacing::Linear,
        "scaled-linear" => BetaSpacing::ScaledLinear,
        other => {
            return Err(CliError::usage(format!(
                "unknown spacing {other:?}; expected \"linear\" or \"scaled-linear\""
            )))
        }
    };
    let schedule_spec = ScheduleSpec {
        num_train_steps: train_steps,
        beta_min,
        beta_max,
        spacing,
        num_inference_steps: steps,
    };
    let run_dir = args.common.run_dir(COMMAND)?;

    let dataset = build_dataset(&AttributeSpace::default_space(), clips, data_seed)?;
    let schedule = schedule_spec
        .build()
        .map_err(|e| CliError::usage(format!("bad schedule parameters: {e}")))?;
    let encoder_config = ToyEncoderConfig::default();
    let encoder = ToyTextEncoder::new(encoder_config.clone());
    let train_config = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        p_uncond,
        seed,
    };
    let outcome = train_toy_denoiser(
        &dataset,
        &schedule,
        denoiser_config.clone(),
        &encoder,
        &train_config,
    )?;

    let meta = CheckpointMeta {
        denoiser: denoiser_config,
        encoder: encoder_config,
        schedule: schedule_spec,
        loss_curve: outcome.loss_curve.clone(),
    };
    save_checkpoint(&run_dir.file("model.ckpt"), &outcome.denoiser, &meta)
        .map_err(|e| CliError::runtime(format!("writing model.ckpt: {e}")))?;
    save_dataset(&run_dir.file("dataset.f32b"), &dataset)
        .map_err(|e| CliError::runtime(format!("writing dataset.f32b: {e}")))?;
    run_dir.write_text("dataset_manifest.json", &dataset_manifest(&dataset)?)?;
    run_dir.write_json("loss_curve.json", &outcome.loss_curve)?;
    run_dir.write_manifest(COMMAND, r.into_resolved())?;
    println!(
        "trained {} epochs, final loss {:.6}; artifacts in {}",
        epochs,
        outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
        run_dir.path().display()
    );
    Ok(())
}
