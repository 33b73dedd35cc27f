//! `delta`: estimate an embedding-space editing direction from
//! synthesized caption sets.

use cadenza::condition::{synthesize_captions, CaptionBank, ToyEncoderConfig, ToyTextEncoder};
use serde::Serialize;

use crate::config::{load_section, Resolver};
use crate::error::CliResult;

use super::{canonical_keyword, direction_between, CommonArgs};

#[derive(clap::Args, Debug)]
pub struct DeltaArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Keyword the direction points away from.
    #[arg(long)]
    pub source_keyword: Option<String>,

    /// Keyword the direction points toward.
    #[arg(long)]
    pub target_keyword: Option<String>,

    /// Captions synthesized per keyword.
    #[arg(long)]
    pub captions: Option<usize>,

    #[arg(long)]
    pub caption_seed: Option<u64>,
}

pub const COMMAND: &str = "delta";

#[derive(Serialize)]
struct DeltaReport<'a> {
    schema_version: u32,
    source_keyword: &'a str,
    target_keyword: &'a str,
    num_captions: usize,
    caption_seed: u64,
    delta_l2: f64,
}

#[derive(Serialize)]
struct CaptionSets<'a> {
    source: &'a [String],
    target: &'a [String],
}

pub fn run(args: &DeltaArgs) -> CliResult {
    let mut r = Resolver::new(
        COMMAND,
        load_section(args.common.config.as_deref(), COMMAND)?,
    );
    let source_raw = r.string("source-keyword", args.source_keyword.as_deref(), None)?;
    let target_raw = r.string("target-keyword", args.target_keyword.as_deref(), None)?;
    let captions = r.usize("captions", args.captions, Some(12))?;
    let caption_seed = r.u64("caption-seed", args.caption_seed, Some(0xCA9))?;

    let bank = CaptionBank::default_bank();
    let (source_keyword, _) = canonical_keyword(&bank, &source_raw)?;
    let (target_keyword, _) = canonical_keyword(&bank, &target_raw)?;
    let run_dir = args.common.run_dir(COMMAND)?;

    let encoder = ToyTextEncoder::new(ToyEncoderConfig::default());
    let direction = direction_between(
        &bank,
        &source_keyword,
        &target_keyword,
        captions,
        caption_seed,
        &encoder,
    )?;
    let src_captions = synthesize_captions(&source_keyword, &bank, captions, caption_seed)?;
    let tgt_captions = synthesize_captions(&target_keyword, &bank, captions, caption_seed)?;

    let delta_l2 = direction.delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    run_dir.write_tensor("delta.f32t", &direction.delta.clone().into_dyn())?;
    run_dir.write_json(
        "captions.json",
        &CaptionSets {
            source: &src_captions,
            target: &tgt_captions,
        },
    )?;
    run_dir.write_json(
        "report.json",
        &DeltaReport {
            schema_version: 1,
            source_keyword: &source_keyword,
            target_keyword: &target_keyword,
            num_captions: captions,
            caption_seed,
            delta_l2,
        },
    )?;
    run_dir.write_manifest(COMMAND, r.into_resolved())?;
    println!(
        "direction {source_keyword} -> {target_keyword}, |delta| = {delta_l2:.6}; artifacts in {}",
        run_dir.path().display()
    );
    Ok(())
}
