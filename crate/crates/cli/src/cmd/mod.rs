//! One module per subcommand plus the plumbing they share.

pub mod bench;
pub mod delta;
pub mod edit;
pub mod eval;
pub mod generate;
pub mod invert;
pub mod train;

use std::path::{Path, PathBuf};

use cadenza::condition::{
    compute_delta, synthesize_captions, CaptionBank, EditDirection, ToyTextEncoder,
};
use cadenza::container::{load_checkpoint, CheckpointMeta};
use cadenza::denoiser::Denoiser;
use cadenza::schedule::{LatentClip, NoiseSchedule};
use cadenza::toybench::from_model_space;

use crate::artifacts::RunDir;
use crate::error::{CliError, CliResult};

/// Flags every subcommand accepts.
#[derive(clap::Args, Debug, Clone)]
pub struct CommonArgs {
    /// Config file; this subcommand reads its own section. Flags
    /// override file entries.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory receiving all artifacts of this run.
    #[arg(long, value_name = "PATH")]
    pub run_dir: Option<PathBuf>,

    /// Parent for auto-named run directories [env: CADENZA_RUN_ROOT,
    /// default: runs].
    #[arg(long, value_name = "PATH")]
    pub run_root: Option<PathBuf>,

    /// Write into a non-empty run directory.
    #[arg(long)]
    pub force: bool,
}

impl CommonArgs {
    pub fn run_dir(&self, command: &str) -> CliResult<RunDir> {
        RunDir::create(
            self.run_dir.clone(),
            self.run_root.clone(),
            command,
            self.force,
        )
    }
}

pub(crate) struct Model {
    pub denoiser: Denoiser,
    pub meta: CheckpointMeta,
    pub encoder: ToyTextEncoder,
}

pub(crate) fn load_model(path: &str) -> CliResult<Model> {
    let (denoiser, meta) = load_checkpoint(Path::new(path))
        .map_err(|e| CliError::runtime(format!("loading model {path}: {e}")))?;
    let encoder = ToyTextEncoder::new(meta.encoder.clone());
    Ok(Model {
        denoiser,
        meta,
        encoder,
    })
}

/// The checkpoint's schedule with the inference step count swapped in.
pub(crate) fn build_schedule(meta: &CheckpointMeta, steps: usize) -> CliResult<NoiseSchedule> {
    let mut spec = meta.schedule.clone();
    spec.num_inference_steps = steps;
    spec.build()
        .map_err(|e| CliError::runtime(format!("building schedule: {e}")))
}

/// Resolve a keyword against the caption bank, case-insensitively,
/// returning its canonical spelling and category.
pub(crate) fn canonical_keyword(
    bank: &CaptionBank,
    raw: &str,
) -> CliResult<(String, &'static str)> {
    let lists: [(&'static str, &[String]); 3] = [
        ("mood", &bank.moods),
        ("genre", &bank.genres),
        ("timbre", &bank.timbres),
    ];
    for (category, words) in lists {
        if let Some(w) = words.iter().find(|w| w.eq_ignore_ascii_case(raw)) {
            return Ok((w.clone(), category));
        }
    }
    let known: Vec<&str> = bank
        .moods
        .iter()
        .chain(&bank.genres)
        .chain(&bank.timbres)
        .map(|s| s.as_str())
        .collect();
    Err(CliError::usage(format!(
        "unknown keyword {raw:?}; known keywords: {}",
        known.join(", ")
    )))
}

/// Find the one word of `category` that `text` names; the source
/// keyword of an edit when not given explicitly.
pub(crate) fn infer_source_keyword(
    text: &str,
    bank: &CaptionBank,
    category: &str,
) -> CliResult<String> {
    let words: &[String] = match category {
        "mood" => &bank.moods,
        "genre" => &bank.genres,
        _ => &bank.timbres,
    };
    let mut found: Vec<String> = Vec::new();
    for token in text.split(|c: char| !c.is_alphanumeric()) {
        if let Some(w) = words.iter().find(|w| w.eq_ignore_ascii_case(token)) {
            if !found.contains(w) {
                found.push(w.clone());
            }
        }
    }
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(CliError::usage(format!(
            "cannot infer the source keyword: the prompt names no {category}; pass --source-keyword"
        ))),
        _ => Err(CliError::usage(format!(
            "cannot infer the source keyword: the prompt names several {category}s ({}); pass --source-keyword",
            found.join(", ")
        ))),
    }
}

/// Replace whole-word, case-insensitive occurrences of `from` with
/// `to`.
pub(crate) fn swap_keyword(text: &str, from: &str, to: &str) -> String {
    fn flush(word: &mut String, out: &mut String, from: &str, to: &str) {
        if word.eq_ignore_ascii_case(from) {
            out.push_str(to);
        } else {
            out.push_str(word);
        }
        word.clear();
    }
    let mut out = String::with_capacity(text.len());
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
        } else {
            flush(&mut word, &mut out, from, to);
            out.push(ch);
        }
    }
    flush(&mut word, &mut out, from, to);
    out
}

/// Estimate the editing direction between two same-category keywords
/// from synthesized caption sets. Equal keywords give the exact zero
/// direction, so such an edit is a null edit.
pub(crate) fn direction_between(
    bank: &CaptionBank,
    source_keyword: &str,
    target_keyword: &str,
    num_captions: usize,
    caption_seed: u64,
    encoder: &ToyTextEncoder,
) -> CliResult<EditDirection> {
    if source_keyword == target_keyword {
        return Ok(EditDirection::identity(source_keyword, encoder.config().d_s));
    }
    let src = synthesize_captions(source_keyword, bank, num_captions, caption_seed)?;
    let tgt = synthesize_captions(target_keyword, bank, num_captions, caption_seed)?;
    Ok(compute_delta(
        &src,
        &tgt,
        source_keyword,
        target_keyword,
        encoder,
    )?)
}

/// Write a model-space clip as a storage-space tensor plus rendered
/// audio.
pub(crate) fn export_clip(run: &RunDir, stem: &str, model_clip: &LatentClip) -> CliResult {
    let storage = model_clip.with_data(from_model_space(&model_clip.data));
    run.write_clip(&format!("{stem}.f32t"), &storage)?;
    let cadenza::codec::Signal::Audio {
        samples,
        sample_rate,
    } = cadenza::codec::sonify_toy(&storage)?
    else {
        return Err(CliError::runtime("sonification produced no audio"));
    };
    run.write_wav(&format!("{stem}.wav"), &samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_canonicalization_and_category() {
        let bank = CaptionBank::default_bank();
        let (w, cat) = canonical_keyword(&bank, "TIMBREb").unwrap();
        assert_eq!(w, "timbreB");
        assert_eq!(cat, "timbre");
        let (w, cat) = canonical_keyword(&bank, "jazz").unwrap();
        assert_eq!(w, "jazz");
        assert_eq!(cat, "genre");
        assert!(matches!(
            canonical_keyword(&bank, "banjo").unwrap_err(),
            CliError::Usage(_)
        ));
    }

    #[test]
    fn source_keyword_inference() {
        let bank = CaptionBank::default_bank();
        let prompt = "A relaxing jazz music with timbreA performance.";
        assert_eq!(infer_source_keyword(prompt, &bank, "timbre").unwrap(), "timbreA");
        assert_eq!(infer_source_keyword(prompt, &bank, "genre").unwrap(), "jazz");
        assert!(infer_source_keyword("plain tune", &bank, "timbre").is_err());
        assert!(infer_source_keyword("timbreA or timbreB", &bank, "timbre").is_err());
    }

    #[test]
    fn keyword_swap_is_whole_word_and_case_insensitive() {
        assert_eq!(
            swap_keyword("A jazz music, jazzy TIMBREA.", "timbreA", "timbreB"),
            "A jazz music, jazzy timbreB."
        );
        assert_eq!(swap_keyword("rock rocks", "rock", "jazz"), "jazz rocks");
    }
}
