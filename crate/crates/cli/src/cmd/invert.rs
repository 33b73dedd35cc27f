//! `invert-edit`: estimate the latent trajectory of an existing clip,
//! then run the embedding edit from that estimate.

use cadenza::condition::CaptionBank;
use cadenza::inversion::{edit_real, InversionConfig, InversionTrace};
use cadenza::schedule::LatentClip;
use cadenza::toybench::{to_model_space, AttributeSpace, ToyCaptioner};
use serde::Serialize;

use crate::artifacts::read_clip;
use crate::config::{load_section, Resolver};
use crate::error::CliResult;

use super::{
    build_schedule, canonical_keyword, direction_between, infer_source_keyword, load_model,
    swap_keyword, CommonArgs,
};

#[derive(clap::Args, Debug)]
pub struct InvertArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Checkpoint written by train-toy.
    #[arg(long)]
    pub model: Option<String>,

    /// Clip tensor to edit (rank 3, storage space).
    #[arg(long)]
    pub input: Option<String>,

    /// Keyword whose meaning the edit moves toward.
    #[arg(long)]
    pub target_keyword: Option<String>,

    /// Keyword the edit moves away from; inferred from the caption
    /// when omitted.
    #[arg(long)]
    pub source_keyword: Option<String>,

    /// Gradient step length for the attention-map constraint; 0
    /// disables it.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// DDIM steps; defaults to the checkpoint's setting.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Classifier-free guidance weight; values away from 1 lose
    /// inversion fidelity.
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

    /// Weight of the noise-whitening correction during inversion; 0
    /// disables it.
    #[arg(long)]
    pub autocorr_weight: Option<f64>,

    #[arg(long)]
    pub autocorr_iters: Option<usize>,

    #[arg(long)]
    pub autocorr_step: Option<f64>,
}

pub const COMMAND: &str = "invert-edit";

#[derive(Serialize)]
struct InversionReport<'a> {
    schema_version: u32,
    caption: &'a str,
    trace: &'a InversionTrace,
}

pub fn run(args: &InvertArgs) -> CliResult {
    let inv_defaults = InversionConfig::default();
    let mut r = Resolver::new(
        COMMAND,
        load_section(args.common.config.as_deref(), COMMAND)?,
    );
    let model_path = r.string("model", args.model.as_deref(), None)?;
    let input = r.string("input", args.input.as_deref(), None)?;
    let target_raw = r.string("target-keyword", args.target_keyword.as_deref(), None)?;
    let source_keyword_arg = r.opt_string("source-keyword", args.source_keyword.as_deref())?;
    let alpha = r.f64("alpha", args.alpha, Some(cadenza::editor::DEFAULT_ALPHA))?;
    let guidance = r.f64("guidance", args.guidance, Some(1.0))?;
    let captions = r.usize("captions", args.captions, Some(12))?;
    let caption_seed = r.u64("caption-seed", args.caption_seed, Some(0xCA9))?;
    let constraint = r.bool("constraint", args.constraint, true)?;
    let autocorr_weight = r.f64(
        "autocorr-weight",
        args.autocorr_weight,
        Some(inv_defaults.autocorr_weight),
    )?;
    let autocorr_iters = r.usize(
        "autocorr-iters",
        args.autocorr_iters,
        Some(inv_defaults.autocorr_iters),
    )?;
    let autocorr_step = r.f64(
        "autocorr-step",
        args.autocorr_step,
        Some(inv_defaults.autocorr_step),
    )?;
    let model = load_model(&model_path)?;
    let steps = r.usize(
        "steps",
        args.steps,
        Some(model.meta.schedule.num_inference_steps),
    )?;
    let run_dir = args.common.run_dir(COMMAND)?;

    let storage_clip = read_clip(std::path::Path::new(&input))?;
    let clip = LatentClip::toy(to_model_space(&storage_clip.data));
    let space = AttributeSpace::default_space();
    let captioner = ToyCaptioner::new(space);
    let caption = cadenza::inversion::caption_for_clip(&clip, Some(&captioner))?;

    let bank = CaptionBank::default_bank();
    let (target_keyword, category) = canonical_keyword(&bank, &target_raw)?;
    let source_keyword = match source_keyword_arg {
        Some(raw) => canonical_keyword(&bank, &raw)?.0,
        None => infer_source_keyword(&caption, &bank, category)?,
    };
    r.record_string("source-keyword", &source_keyword);

    let schedule = build_schedule(&model.meta, steps)?;
    let direction = direction_between(
        &bank,
        &source_keyword,
        &target_keyword,
        captions,
        caption_seed,
        &model.encoder,
    )?;
    let target_prompt = swap_keyword(&caption, &source_keyword, &target_keyword);
    let inv_config = InversionConfig {
        num_inference_steps: steps,
        guidance_scale: guidance,
        autocorr_weight,
        autocorr_iters,
        autocorr_step,
    };
    let result = edit_real(
        &clip,
        &target_prompt,
        &direction,
        &inv_config,
        alpha,
        constraint,
        &model.denoiser,
        &schedule,
        &model.encoder,
        Some(&captioner),
    )?;

    run_dir.write_tensor(
        "z_start.f32t",
        &result.z_start_estimate.data.clone().into_dyn(),
    )?;
    super::export_clip(&run_dir, "original", &result.original)?;
    super::export_clip(&run_dir, "edited", &result.edited)?;
    run_dir.write_text("caption.txt", &format!("{}\n", result.caption))?;
    run_dir.write_json("report.json", &result.report)?;
    run_dir.write_json(
        "inversion.json",
        &InversionReport {
            schema_version: 1,
            caption: &result.caption,
            trace: &result.trace,
        },
    )?;
    run_dir.write_manifest(COMMAND, r.into_resolved())?;
    println!(
        "inverted and edited {source_keyword} -> {target_keyword}; artifacts in {}",
        run_dir.path().display()
    );
    Ok(())
}
