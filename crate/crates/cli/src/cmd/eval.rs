//! `eval`: score an original/edited clip pair with the objective
//! metrics.

use cadenza::metrics::{evaluate_batch, EvalPair};
use cadenza::toybench::{AttributeSpace, ProbeScorer};

use crate::artifacts::read_clip;
use crate::config::{load_section, Resolver};
use crate::error::CliResult;

use super::CommonArgs;

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Original clip tensor (rank 3, storage space).
    #[arg(long)]
    pub original: Option<String>,

    /// Edited clip tensor (rank 3, storage space).
    #[arg(long)]
    pub edited: Option<String>,

    /// Text the edited clip should match.
    #[arg(long)]
    pub target_text: Option<String>,

    /// Label for the report row.
    #[arg(long)]
    pub label: Option<String>,
}

pub const COMMAND: &str = "eval";

pub fn run(args: &EvalArgs) -> CliResult {
    let mut r = Resolver::new(
        COMMAND,
        load_section(args.common.config.as_deref(), COMMAND)?,
    );
    let original = r.string("original", args.original.as_deref(), None)?;
    let edited = r.string("edited", args.edited.as_deref(), None)?;
    let target_text = r.string("target-text", args.target_text.as_deref(), None)?;
    let label = r.string("label", args.label.as_deref(), Some("cli"))?;
    let run_dir = args.common.run_dir(COMMAND)?;

    let pair = EvalPair {
        original: read_clip(std::path::Path::new(&original))?,
        edited: read_clip(std::path::Path::new(&edited))?,
        target_text,
        label,
    };
    let scorer = ProbeScorer::new(AttributeSpace::default_space());
    let mut report = evaluate_batch(&[pair], &scorer)?;
    let resolved = r.into_resolved();
    report.config_echo = serde_json::to_value(&resolved)
        .map_err(|e| crate::error::CliError::runtime(format!("echoing config: {e}")))?;

    run_dir.write_json("eval.json", &report)?;
    run_dir.write_manifest(COMMAND, resolved)?;
    println!(
        "mean chroma {:.4}, mean semantic {:.4}; artifacts in {}",
        report.mean_chroma, report.mean_semantic,
        run_dir.path().display()
    );
    Ok(())
}
