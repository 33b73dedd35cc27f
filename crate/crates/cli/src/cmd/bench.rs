//! `bench`: run the ablation benchmark on a trained checkpoint.

use cadenza::condition::CaptionBank;
use cadenza::toybench::{run_benchmark, AttributeSpace, BenchmarkConfig, EditPair};

use crate::config::{load_section, Resolver};
use crate::error::{CliError, CliResult};

use super::{build_schedule, canonical_keyword, load_model, CommonArgs};

#[derive(clap::Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Checkpoint written by train-toy.
    #[arg(long)]
    pub model: Option<String>,

    /// Comma-separated source:target keyword pairs.
    #[arg(long)]
    pub pairs: Option<String>,

    /// Paired seeds per edit pair.
    #[arg(long)]
    pub seeds: Option<usize>,

    /// Gradient step length for the attention-map constraint in the
    /// full arm.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Classifier-free guidance weight; 1 = pure conditional.
    #[arg(long)]
    pub guidance: Option<f64>,

    /// Captions synthesized per keyword for the direction estimates.
    #[arg(long)]
    pub captions: Option<usize>,

    #[arg(long)]
    pub caption_seed: Option<u64>,

    /// Base seed for the per-run latents.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Minimum reconstruction probe accuracy before the model is
    /// trusted; 0 disables the gate.
    #[arg(long)]
    pub quality_gate: Option<f64>,

    /// One-sided significance level for the paired chroma comparison.
    #[arg(long)]
    pub significance: Option<f64>,

    /// DDIM steps; defaults to the checkpoint's setting.
    #[arg(long)]
    pub steps: Option<usize>,
}

pub const COMMAND: &str = "bench";

pub const DEFAULT_PAIRS: &str = "timbreA:timbreB,timbreB:timbreA,timbreA:timbreC";

fn parse_pairs(text: &str, bank: &CaptionBank) -> CliResult<Vec<EditPair>> {
    let mut pairs = Vec::new();
    for chunk in text.split(',') {
        let chunk = chunk.trim();
        let Some((src, tgt)) = chunk.split_once(':') else {
            return Err(CliError::usage(format!(
                "bad pair {chunk:?}; expected source:target"
            )));
        };
        let (src, _) = canonical_keyword(bank, src.trim())?;
        let (tgt, _) = canonical_keyword(bank, tgt.trim())?;
        pairs.push(EditPair::new(src, tgt));
    }
    Ok(pairs)
}

pub fn run(args: &BenchArgs) -> CliResult {
    let defaults = BenchmarkConfig::default();
    let mut r = Resolver::new(
        COMMAND,
        load_section(args.common.config.as_deref(), COMMAND)?,
    );
    let model_path = r.string("model", args.model.as_deref(), None)?;
    let pairs_text = r.string("pairs", args.pairs.as_deref(), Some(DEFAULT_PAIRS))?;
    let seeds = r.usize("seeds", args.seeds, Some(20))?;
    let alpha = r.f64("alpha", args.alpha, Some(defaults.alpha))?;
    let guidance = r.f64("guidance", args.guidance, Some(defaults.guidance_scale))?;
    let captions = r.usize("captions", args.captions, Some(defaults.num_captions))?;
    let caption_seed = r.u64("caption-seed", args.caption_seed, Some(defaults.caption_seed))?;
    let seed = r.u64("seed", args.seed, Some(defaults.seed))?;
    let quality_gate = r.f64("quality-gate", args.quality_gate, Some(defaults.quality_gate))?;
    let significance = r.f64("significance", args.significance, Some(defaults.significance))?;
    let model = load_model(&model_path)?;
    let steps = r.usize(
        "steps",
        args.steps,
        Some(model.meta.schedule.num_inference_steps),
    )?;
    let run_dir = args.common.run_dir(COMMAND)?;

    let bank = CaptionBank::default_bank();
    let pairs = parse_pairs(&pairs_text, &bank)?;
    let schedule = build_schedule(&model.meta, steps)?;
    let config = BenchmarkConfig {
        alpha,
        guidance_scale: guidance,
        num_captions: captions,
        caption_seed,
        seed,
        quality_gate,
        significance,
    };
    let space = AttributeSpace::default_space();
    let report = run_benchmark(
        &model.denoiser,
        &pairs,
        seeds,
        &config,
        &schedule,
        &model.encoder,
        &bank,
        &space,
    )?;

    run_dir.write_json("benchmark.json", &report)?;
    run_dir.write_manifest(COMMAND, r.into_resolved())?;
    println!(
        "benchmarked {} pairs x {} seeds; artifacts in {}",
        pairs.len(),
        seeds,
        run_dir.path().display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parsing() {
        let bank = CaptionBank::default_bank();
        let pairs = parse_pairs("timbreA:timbreB, timbreb:timbrea", &bank).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].source, "timbreA");
        assert_eq!(pairs[1].source, "timbreB");
        assert_eq!(pairs[1].target, "timbreA");
        assert!(parse_pairs("timbreA", &bank).is_err());
        assert!(parse_pairs("timbreA:banjo", &bank).is_err());
    }
}
