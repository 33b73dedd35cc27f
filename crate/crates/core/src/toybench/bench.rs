//! Benchmark harness: word-swap edit pairs evaluated over seeded
//! generations, with the two ablation arms (constraint removed, then
//! direction replaced by the raw target embedding) scored against the
//! full method on probe agreement and melody chroma.

use super::{attribute_probe, from_model_space, AttributeSpace, Attributes};
use crate::condition::{
    apply_edit, compute_delta, synthesize_captions, CaptionBank, TextEncoder,
};
use crate::denoiser::Denoiser;
use crate::editor::{edit_with_embeddings, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_batch, EvalPair, EvalReport};
use crate::schedule::{LatentClip, NoiseSchedule};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// One word swap: both names must belong to the same attribute
/// category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditPair {
    pub source: String,
    pub target: String,
}

impl EditPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        EditPair {
            source: source.into(),
            target: target.into(),
        }
    }

    /// The stock timbre swaps, three pairs.
    pub fn default_timbre_pairs(space: &AttributeSpace) -> Vec<EditPair> {
        let t: Vec<&str> = space.timbres.iter().map(|(n, _)| n.as_str()).collect();
        vec![
            EditPair::new(t[0], t[1]),
            EditPair::new(t[1], t[0]),
            EditPair::new(t[0], t[2]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeCategory {
    Mood,
    Genre,
    Timbre,
}

impl AttributeCategory {
    fn of(space: &AttributeSpace, name: &str) -> Option<Self> {
        if space.moods.iter().any(|(n, _)| n == name) {
            Some(AttributeCategory::Mood)
        } else if space.genres.iter().any(|(n, _)| n == name) {
            Some(AttributeCategory::Genre)
        } else if space.timbres.iter().any(|(n, _)| n == name) {
            Some(AttributeCategory::Timbre)
        } else {
            None
        }
    }

    fn get<'a>(&self, attrs: &'a Attributes) -> &'a str {
        match self {
            AttributeCategory::Mood => &attrs.mood,
            AttributeCategory::Genre => &attrs.genre,
            AttributeCategory::Timbre => &attrs.timbre,
        }
    }

    fn set(&self, attrs: &mut Attributes, value: &str) {
        match self {
            AttributeCategory::Mood => attrs.mood = value.into(),
            AttributeCategory::Genre => attrs.genre = value.into(),
            AttributeCategory::Timbre => attrs.timbre = value.into(),
        }
    }
}

fn probe_value<'a>(
    category: AttributeCategory,
    outcome: &'a super::ProbeOutcome,
) -> &'a str {
    match category {
        AttributeCategory::Mood => &outcome.mood,
        AttributeCategory::Genre => &outcome.genre,
        AttributeCategory::Timbre => &outcome.timbre,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub alpha: f64,
    pub guidance_scale: f64,
    /// Captions synthesized per side when estimating the direction.
    pub num_captions: usize,
    pub caption_seed: u64,
    /// Base for the per-run latent seeds.
    pub seed: u64,
    /// Minimum reconstruction probe accuracy before the weights are
    /// trusted for benchmarking.
    pub quality_gate: f64,
    /// One-sided significance level for the paired chroma comparison.
    pub significance: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            alpha: DEFAULT_ALPHA,
            guidance_scale: 1.0,
            num_captions: 12,
            caption_seed: 0xCA9,
            seed: 0,
            quality_gate: 0.8,
            significance: 0.05,
        }
    }
}

/// Names of the three arms, in report order.
pub const ARM_FULL: &str = "full";
pub const ARM_NO_L2: &str = "no_l2";
pub const ARM_NO_L2_NO_DELTA: &str = "no_l2_no_delta";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub eval: EvalReport,
    /// Fraction of runs where the probe reads the target word in the
    /// swapped category.
    pub target_word_rate: f64,
    /// Fraction of runs where the probe agrees with every target
    /// attribute.
    pub full_match_rate: f64,
}

/// Paired one-sided comparison of per-run chroma similarity between
/// the full method and the constraint-free arm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedChromaTest {
    pub mean_full: f64,
    pub mean_no_l2: f64,
    pub mean_difference: f64,
    pub n: usize,
    /// Absent when every paired difference is identical.
    pub t_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub pairs: Vec<EditPair>,
    pub n_seeds: usize,
    pub reconstruction_probe_accuracy: f64,
    pub arms: Vec<ArmResult>,
    pub chroma_paired: PairedChromaTest,
    pub config: BenchmarkConfig,
}

pub const BENCHMARK_SCHEMA_VERSION: u32 = 1;

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("benchmark report: {e}")))
    }
}

struct RunOutcome {
    original: LatentClip,
    edited: LatentClip,
    target_attrs: Attributes,
    swap_category: AttributeCategory,
    label: String,
}

/// Run the word-swap benchmark: for every pair and seed, generate a
/// clip under the source prompt, edit it under each arm, and score
/// probe agreement and melody chroma. Aborts with a model-quality
/// error when the reconstruction probe accuracy falls below the gate.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    denoiser: &Denoiser,
    edit_pairs: &[EditPair],
    n_seeds: usize,
    config: &BenchmarkConfig,
    schedule: &NoiseSchedule,
    encoder: &dyn TextEncoder,
    bank: &CaptionBank,
    space: &AttributeSpace,
) -> Result<BenchmarkReport> {
    if edit_pairs.is_empty() || n_seeds == 0 {
        return Err(Error::parameter("need at least one edit pair and one seed"));
    }
    if !(0.0..=1.0).contains(&config.quality_gate) {
        return Err(Error::parameter("quality gate must lie in [0, 1]"));
    }
    let uncond = encoder.empty();
    let shape = denoiser.config().latent_shape();

    // per (pair, seed): run all three arms from the same z_T
    let mut runs: Vec<(String, Vec<RunOutcome>)> = vec![
        (ARM_FULL.into(), Vec::new()),
        (ARM_NO_L2.into(), Vec::new()),
        (ARM_NO_L2_NO_DELTA.into(), Vec::new()),
    ];
    let mut recon_hits = 0usize;
    let mut recon_total = 0usize;

    for (pi, pair) in edit_pairs.iter().enumerate() {
        let category = AttributeCategory::of(space, &pair.source).ok_or_else(|| {
            Error::parameter(format!("unknown attribute {:?}", pair.source))
        })?;
        let target_category = AttributeCategory::of(space, &pair.target).ok_or_else(|| {
            Error::parameter(format!("unknown attribute {:?}", pair.target))
        })?;
        if category != target_category {
            return Err(Error::parameter(format!(
                "edit pair {:?} -> {:?} crosses attribute categories",
                pair.source, pair.target
            )));
        }

        let src_captions =
            synthesize_captions(&pair.source, bank, config.num_captions, config.caption_seed)?;
        let tgt_captions =
            synthesize_captions(&pair.target, bank, config.num_captions, config.caption_seed)?;
        let direction = compute_delta(
            &src_captions,
            &tgt_captions,
            &pair.source,
            &pair.target,
            encoder,
        )?;

        for s in 0..n_seeds {
            let run_seed = config
                .seed
                .wrapping_add((pi * n_seeds + s) as u64)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(1);
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);

            let mut source_attrs = Attributes {
                mood: space.moods[rng.gen_range(0..space.moods.len())].0.clone(),
                genre: space.genres[rng.gen_range(0..space.genres.len())].0.clone(),
                timbre: space.timbres[rng.gen_range(0..space.timbres.len())].0.clone(),
            };
            category.set(&mut source_attrs, &pair.source);
            let mut target_attrs = source_attrs.clone();
            category.set(&mut target_attrs, &pair.target);

            let e_source = encoder.encode(&source_attrs.prompt())?;
            let e_target = encoder.encode(&target_attrs.prompt())?;
            let e_edit_delta = apply_edit(&e_source, &direction, &e_target)?;

            let z_start =
                LatentClip::toy(Array3::from_shape_fn(shape, |_| rng.sample(StandardNormal)));
            let label = format!("{}->{} seed {s}", pair.source, pair.target);

            let arm_specs: [(usize, &crate::condition::PromptEmbedding, f64); 3] = [
                (0, &e_edit_delta, config.alpha),
                (1, &e_edit_delta, 0.0),
                (2, &e_target, 0.0),
            ];
            let mut original_for_gate: Option<LatentClip> = None;
            for (arm_idx, e_edit, alpha) in arm_specs {
                let (original, edited, _, _) = edit_with_embeddings(
                    &z_start,
                    &e_source,
                    e_edit,
                    alpha,
                    config.guidance_scale,
                    denoiser,
                    schedule,
                    Some(&uncond),
                )?;
                if original_for_gate.is_none() {
                    original_for_gate = Some(original.clone());
                }
                runs[arm_idx].1.push(RunOutcome {
                    original,
                    edited,
                    target_attrs: target_attrs.clone(),
                    swap_category: category,
                    label: label.clone(),
                });
            }

            let recon = original_for_gate.expect("at least one arm ran");
            let probe = attribute_probe(&from_model_space(&recon.data), space)?;
            recon_total += 1;
            if probe.matches(&source_attrs) {
                recon_hits += 1;
            }
        }
    }

    let recon_accuracy = recon_hits as f64 / recon_total as f64;
    if recon_accuracy < config.quality_gate {
        return Err(Error::ModelQuality(format!(
            "reconstruction probe accuracy {recon_accuracy:.3} below gate {:.3}",
            config.quality_gate
        )));
    }

    let scorer = super::ProbeScorer::new(space.clone());
    let mut arms = Vec::with_capacity(runs.len());
    let mut chroma_by_arm: Vec<Vec<f64>> = Vec::with_capacity(runs.len());
    for (name, outcomes) in &runs {
        let eval_pairs: Vec<EvalPair> = outcomes
            .iter()
            .map(|o| EvalPair {
                original: o.original.with_data(from_model_space(&o.original.data)),
                edited: o.edited.with_data(from_model_space(&o.edited.data)),
                target_text: o.target_attrs.prompt(),
                label: o.label.clone(),
            })
            .collect();
        let eval = evaluate_batch(&eval_pairs, &scorer)?;
        chroma_by_arm.push(
            eval.rows
                .iter()
                .map(|r| r.chroma.unwrap_or(f64::NAN))
                .collect(),
        );

        let mut word_hits = 0usize;
        let mut full_hits = 0usize;
        for o in outcomes {
            let probe = attribute_probe(&from_model_space(&o.edited.data), space)?;
            if !probe.silence
                && probe_value(o.swap_category, &probe) == o.swap_category.get(&o.target_attrs)
            {
                word_hits += 1;
            }
            if probe.matches(&o.target_attrs) {
                full_hits += 1;
            }
        }
        arms.push(ArmResult {
            name: name.clone(),
            eval,
            target_word_rate: word_hits as f64 / outcomes.len() as f64,
            full_match_rate: full_hits as f64 / outcomes.len() as f64,
        });
    }

    let chroma_paired = paired_chroma_test(
        &chroma_by_arm[0],
        &chroma_by_arm[1],
        config.significance,
    );

    Ok(BenchmarkReport {
        schema_version: BENCHMARK_SCHEMA_VERSION,
        pairs: edit_pairs.to_vec(),
        n_seeds,
        reconstruction_probe_accuracy: recon_accuracy,
        arms,
        chroma_paired,
        config: config.clone(),
    })
}

/// One-sided paired t-test for "full arm chroma exceeds the
/// constraint-free arm" at the given significance level.
fn paired_chroma_test(full: &[f64], no_l2: &[f64], significance: f64) -> PairedChromaTest {
    let n = full.len();
    let diffs: Vec<f64> = full.iter().zip(no_l2).map(|(a, b)| a - b).collect();
    let mean_full = full.iter().sum::<f64>() / n as f64;
    let mean_no_l2 = no_l2.iter().sum::<f64>() / n as f64;
    let mean_d = diffs.iter().sum::<f64>() / n as f64;
    let var_d = if n > 1 {
        diffs.iter().map(|d| (d - mean_d) * (d - mean_d)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let (t_statistic, p_value, significant) = if var_d > 0.0 && n > 1 {
        let t = mean_d / (var_d / n as f64).sqrt();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
        let p = 1.0 - dist.cdf(t);
        (Some(t), Some(p), p < significance)
    } else {
        // all paired differences identical: degenerate but decided
        (None, None, mean_d > 0.0)
    };
    PairedChromaTest {
        mean_full,
        mean_no_l2,
        mean_difference: mean_d,
        n,
        t_statistic,
        p_value,
        significant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::ToyTextEncoder;
    use crate::denoiser::{CondDims, DenoiserConfig};
    use crate::schedule::BetaSpacing;

    fn harness() -> (Denoiser, ToyTextEncoder, NoiseSchedule, CaptionBank, AttributeSpace) {
        let encoder = ToyTextEncoder::with_default_config();
        let denoiser = Denoiser::init(
            DenoiserConfig {
                in_channels: 1,
                latent_bins: 32,
                latent_frames: 32,
                stage_channels: vec![4],
                attention_width: 8,
                heads: 2,
                time_embed_dim: 8,
            },
            CondDims::of(&encoder),
            5,
        )
        .unwrap();
        let schedule = NoiseSchedule::build(50, 1e-4, 0.05, BetaSpacing::Linear, 4).unwrap();
        (
            denoiser,
            encoder,
            schedule,
            CaptionBank::default_bank(),
            AttributeSpace::default_space(),
        )
    }

    #[test]
    fn default_timbre_pairs_are_three_swaps() {
        let space = AttributeSpace::default_space();
        let pairs = EditPair::default_timbre_pairs(&space);
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0], EditPair::new("timbreA", "timbreB"));
        assert_eq!(pairs[1], EditPair::new("timbreB", "timbreA"));
        assert_eq!(pairs[2], EditPair::new("timbreA", "timbreC"));
    }

    #[test]
    fn untrained_weights_fail_the_quality_gate() {
        let (denoiser, encoder, schedule, bank, space) = harness();
        let pairs = vec![EditPair::new("timbreA", "timbreB")];
        let err = run_benchmark(
            &denoiser,
            &pairs,
            2,
            &BenchmarkConfig::default(),
            &schedule,
            &encoder,
            &bank,
            &space,
        );
        assert!(matches!(err, Err(Error::ModelQuality(_))));
    }

    #[test]
    fn gateless_benchmark_reports_three_arms_deterministically() {
        let (denoiser, encoder, schedule, bank, space) = harness();
        let pairs = vec![EditPair::new("timbreA", "timbreB")];
        let config = BenchmarkConfig {
            quality_gate: 0.0,
            num_captions: 4,
            ..BenchmarkConfig::default()
        };
        let a = run_benchmark(
            &denoiser, &pairs, 2, &config, &schedule, &encoder, &bank, &space,
        )
        .unwrap();
        let b = run_benchmark(
            &denoiser, &pairs, 2, &config, &schedule, &encoder, &bank, &space,
        )
        .unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(
            a.arms.iter().map(|x| x.name.as_str()).collect::<Vec<_>>(),
            vec![ARM_FULL, ARM_NO_L2, ARM_NO_L2_NO_DELTA]
        );
        for arm in &a.arms {
            assert_eq!(arm.eval.rows.len(), 2);
        }
        assert_eq!(a.chroma_paired.n, 2);
        let round = BenchmarkReport::from_json(&a.to_json()).unwrap();
        assert_eq!(round.arms.len(), 3);
    }

    #[test]
    fn cross_category_pairs_rejected() {
        let (denoiser, encoder, schedule, bank, space) = harness();
        let pairs = vec![EditPair::new("timbreA", "jazz")];
        let err = run_benchmark(
            &denoiser,
            &pairs,
            1,
            &BenchmarkConfig {
                quality_gate: 0.0,
                ..BenchmarkConfig::default()
            },
            &schedule,
            &encoder,
            &bank,
            &space,
        );
        assert!(matches!(err, Err(Error::Parameter(_))));
    }

    #[test]
    fn paired_test_degenerate_and_regular_cases() {
        let t = paired_chroma_test(&[0.9, 0.9], &[0.9, 0.9], 0.05);
        assert!(t.t_statistic.is_none());
        assert!(!t.significant);
        let t = paired_chroma_test(&[0.9, 0.95, 0.92, 0.97], &[0.7, 0.72, 0.69, 0.74], 0.05);
        assert!(t.significant, "clear separation should be significant");
        assert!(t.p_value.unwrap() < 0.05);
        assert!(t.mean_difference > 0.19);
        // symmetric case is not significant in this direction
        let t = paired_chroma_test(&[0.7, 0.72], &[0.9, 0.95], 0.05);
        assert!(!t.significant);
    }
}
