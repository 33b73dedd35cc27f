//! `generate`: sample a clip from noise under a text prompt.

use cadenza::condition::TextEncoder;
use cadenza::editor::reconstruct_and_record;
use cadenza::schedule::LatentClip;
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::{load_section, Resolver};
use crate::error::CliResult;

use super::{build_schedule, load_model, CommonArgs};

#[derive(clap::Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Checkpoint written by train-toy.
    #[arg(long)]
    pub model: Option<String>,

    /// Text condition for the sample.
    #[arg(long)]
    pub prompt: Option<String>,

    /// Seed for the starting latent.
    #[arg(long)]
    pub seed: Option<u64>,

    /// DDIM steps; defaults to the checkpoint's setting.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Classifier-free guidance weight; 1 = pure conditional.
    #[arg(long)]
    pub guidance: Option<f64>,
}

pub const COMMAND: &str = "generate";

#[derive(Serialize)]
struct GenerateReport<'a> {
    schema_version: u32,
    model: &'a str,
    prompt: &'a str,
    seed: u64,
    num_inference_steps: usize,
    guidance_scale: f64,
}

pub fn run(args: &GenerateArgs) -> CliResult {
    let mut r = Resolver::new(
        COMMAND,
        load_section(args.common.config.as_deref(), COMMAND)?,
    );
    let model_path = r.string("model", args.model.as_deref(), None)?;
    let prompt = r.string("prompt", args.prompt.as_deref(), None)?;
    let seed = r.u64("seed", args.seed, Some(0))?;
    let model = load_model(&model_path)?;
    let steps = r.usize(
        "steps",
        args.steps,
        Some(model.meta.schedule.num_inference_steps),
    )?;
    let guidance = r.f64("guidance", args.guidance, Some(1.0))?;
    let run_dir = args.common.run_dir(COMMAND)?;

    let schedule = build_schedule(&model.meta, steps)?;
    let e = model.encoder.encode(&prompt)?;
    let uncond = model.encoder.empty();
    let shape = model.denoiser.config().latent_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_start = LatentClip::toy(Array3::from_shape_fn(shape, |_| {
        StandardNormal.sample(&mut rng)
    }));
    let (clip, _) = reconstruct_and_record(
        &z_start,
        &e,
        &schedule,
        &model.denoiser,
        guidance,
        Some(&uncond),
    )?;

    super::export_clip(&run_dir, "clip", &clip)?;
    run_dir.write_json(
        "report.json",
        &GenerateReport {
            schema_version: 1,
            model: &model_path,
            prompt: &prompt,
            seed,
            num_inference_steps: steps,
            guidance_scale: guidance,
        },
    )?;
    run_dir.write_manifest(COMMAND, r.into_resolved())?;
    println!("generated clip in {}", run_dir.path().display());
    Ok(())
}
