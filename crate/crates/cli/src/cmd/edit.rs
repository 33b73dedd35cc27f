//! `edit`: generate under the source prompt and re-generate under the
//! shifted embedding, writing both clips and the step report.

use cadenza::condition::CaptionBank;
use cadenza::editor::{edit, EditRequest};

use crate::config::{load_section, Resolver};
use crate::error::CliResult;

use super::{
    build_schedule, canonical_keyword, direction_between, infer_source_keyword, load_model,
    swap_keyword, CommonArgs,
};

#[derive(clap::Args, Debug)]
pub struct EditArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Checkpoint written by train-toy.
    #[arg(long)]
    pub model: Option<String>,

    /// Source prompt describing the clip to generate.
    #[arg(long)]
    pub source: Option<String>,

    /// Keyword whose meaning the edit moves toward.
    #[arg(long)]
    pub target_keyword: Option<String>,

    /// Keyword the edit moves away from; inferred from the source
    /// prompt when omitted.
    #[arg(long)]
    pub source_keyword: Option<String>,

    /// Gradient step length for the attention-map constraint; 0
    /// disables it.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// DDIM steps; defaults to the checkpoint's setting.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Seed for the starting latent.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Classifier-free guidance weight; 1 = pure conditional.
    #[arg(long)]
    pub guidance: Option<f64>,

    /// Captions synthesized per keyword for the direction estimate.
    #[arg(long)]
    pub captions: Option<usize>,

    #[arg(long)]
    pub caption_seed: Option<u64>,

    /// Keep the cross-attention constraint enabled.
    #[arg(long)]
    pub constraint: Option<bool>,
}

pub const COMMAND: &str = "edit";

pub fn run(args: &EditArgs) -> CliResult {
    let mut r = Resolver::new(
        COMMAND,
        load_section(args.common.config.as_deref(), COMMAND)?,
    );
    let model_path = r.string("model", args.model.as_deref(), None)?;
    let source = r.string("source", args.source.as_deref(), None)?;
    let target_raw = r.string("target-keyword", args.target_keyword.as_deref(), None)?;

    let bank = CaptionBank::default_bank();
    let (target_keyword, category) = canonical_keyword(&bank, &target_raw)?;
    let source_keyword = match r.opt_string("source-keyword", args.source_keyword.as_deref())? {
        Some(raw) => canonical_keyword(&bank, &raw)?.0,
        None => infer_source_keyword(&source, &bank, category)?,
    };
    r.record_string("source-keyword", &source_keyword);
    let alpha = r.f64("alpha", args.alpha, Some(cadenza::editor::DEFAULT_ALPHA))?;
    let seed = r.u64("seed", args.seed, Some(0))?;
    let guidance = r.f64("guidance", args.guidance, Some(1.0))?;
    let captions = r.usize("captions", args.captions, Some(12))?;
    let caption_seed = r.u64("caption-seed", args.caption_seed, Some(0xCA9))?;
    let constraint = r.bool("constraint", args.constraint, true)?;
    let model = load_model(&model_path)?;
    let steps = r.usize(
        "steps",
        args.steps,
        Some(model.meta.schedule.num_inference_steps),
    )?;
    let run_dir = args.common.run_dir(COMMAND)?;

    let schedule = build_schedule(&model.meta, steps)?;
    let direction = direction_between(
        &bank,
        &source_keyword,
        &target_keyword,
        captions,
        caption_seed,
        &model.encoder,
    )?;
    let target_prompt = swap_keyword(&source, &source_keyword, &target_keyword);
    let mut request = EditRequest::new(source, target_prompt, direction, seed, steps);
    request.alpha = alpha;
    request.guidance_scale = guidance;
    request.constraint_enabled = constraint;

    let (original, edited, report) = edit(&request, &model.denoiser, &schedule, &model.encoder)?;

    super::export_clip(&run_dir, "original", &original)?;
    super::export_clip(&run_dir, "edited", &edited)?;
    run_dir.write_json("report.json", &report)?;
    run_dir.write_manifest(COMMAND, r.into_resolved())?;
    println!(
        "edited {source_keyword} -> {target_keyword}; artifacts in {}",
        run_dir.path().display()
    );
    Ok(())
}
