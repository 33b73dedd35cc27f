//! Objective evaluation: chromagrams, chroma cosine similarity, the
//! pluggable semantic scorer interface, and batch evaluation reports.

use crate::dsp;
use crate::error::{Error, Result};
use crate::schedule::LatentClip;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Pitch classes in the toy spectrogram space (frequency bins fold
/// mod 8).
pub const TOY_PITCH_CLASSES: usize = 8;
/// Pitch classes for real audio (semitones).
pub const AUDIO_PITCH_CLASSES: usize = 12;

/// Analysis window for audio-space chromagrams at 16 kHz.
pub const CHROMA_FRAME: usize = 2048;
pub const CHROMA_HOP: usize = 512;

/// Pitch-class x time energy matrix; entries non-negative and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromagram {
    pub energies: Array2<f64>,
}

impl Chromagram {
    pub fn pitch_classes(&self) -> usize {
        self.energies.nrows()
    }

    pub fn frames(&self) -> usize {
        self.energies.ncols()
    }

    /// Argmax pitch class per frame (ties to the lowest class).
    pub fn argmax_per_frame(&self) -> Vec<usize> {
        self.energies
            .columns()
            .into_iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| {
                        if v > acc.1 {
                            (i, v)
                        } else {
                            acc
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// Toy-space chromagram: channels summed, negative energies clamped
/// to zero, then frequency bins folded into 8 pitch classes by summing
/// bins congruent mod 8. Column sums match the clamped spectrogram's.
pub fn chromagram(clip: &LatentClip) -> Result<Chromagram> {
    if clip.data.is_empty() {
        return Err(Error::parameter("empty clip"));
    }
    let (channels, bins, frames) = clip.shape();
    let p = TOY_PITCH_CLASSES;
    let mut energies = Array2::<f64>::zeros((p, frames));
    for c in 0..channels {
        for b in 0..bins {
            let class = b % p;
            for f in 0..frames {
                energies[[class, f]] += clip.data[[c, b, f]].max(0.0);
            }
        }
    }
    Ok(Chromagram { energies })
}

/// Audio-space chromagram: STFT magnitudes (2048-sample frames, hop
/// 512) with every bin assigned to the pitch class of its center
/// frequency; the DC bin maps to class 0. Column sums match the
/// magnitude spectrogram's.
pub fn chromagram_audio(samples: &[f64], sample_rate: u32) -> Result<Chromagram> {
    if samples.is_empty() {
        return Err(Error::parameter("empty audio"));
    }
    if sample_rate == 0 {
        return Err(Error::parameter("sample rate must be positive"));
    }
    let mag = dsp::stft_magnitude(samples, CHROMA_FRAME, CHROMA_HOP);
    let p = AUDIO_PITCH_CLASSES;
    let mut energies = Array2::<f64>::zeros((p, mag.ncols()));
    for (b, row) in mag.outer_iter().enumerate() {
        let class = if b == 0 {
            0
        } else {
            let freq = b as f64 * sample_rate as f64 / CHROMA_FRAME as f64;
            let midi = 69.0 + 12.0 * (freq / 440.0).log2();
            (midi.round() as i64).rem_euclid(p as i64) as usize
        };
        for (f, &v) in row.iter().enumerate() {
            energies[[class, f]] += v;
        }
    }
    Ok(Chromagram { energies })
}

/// Cosine similarity of flattened chromagrams in [0, 1]. Identical
/// chromagrams score exactly 1 (including two all-zero ones); zero
/// against non-zero is 0.
pub fn chroma_similarity(a: &Chromagram, b: &Chromagram) -> Result<f64> {
    if a.energies.raw_dim() != b.energies.raw_dim() {
        return Err(Error::shape(format!(
            "chromagram shapes {:?} vs {:?}",
            a.energies.shape(),
            b.energies.shape()
        )));
    }
    if a.energies == b.energies {
        return Ok(1.0);
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.energies.iter().zip(b.energies.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 && nb == 0.0 {
        return Ok(1.0);
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0))
}

/// Scores how well a clip matches a text description, in [0, 1].
/// The toy benchmark registers a probe-backed oracle; adapters for
/// pretrained audio-text models implement the same contract.
pub trait SemanticScorer: Send + Sync {
    fn score(&self, clip: &LatentClip, text: &str) -> Result<f64>;
    fn name(&self) -> &str;
}

/// Delegate to a registered scorer; absent scorer is a configuration
/// error, out-of-range scores are numeric bugs surfaced loudly.
pub fn semantic_similarity(
    clip: &LatentClip,
    text: &str,
    scorer: Option<&dyn SemanticScorer>,
) -> Result<f64> {
    let scorer = scorer.ok_or_else(|| Error::Config("no semantic scorer registered".into()))?;
    let s = scorer.score(clip, text)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Config(format!(
            "scorer {} returned {s}, outside [0, 1]",
            scorer.name()
        )));
    }
    Ok(s)
}

/// One evaluation item: an original/edited pair and the text the edit
/// was supposed to realize.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub original: LatentClip,
    pub edited: LatentClip,
    pub target_text: String,
    pub label: String,
}

/// Per-pair scores; `error` marks rows excluded from the means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub label: String,
    pub semantic: Option<f64>,
    pub chroma: Option<f64>,
    pub avg: Option<f64>,
    pub error: Option<String>,
}

/// Batch evaluation table: per-row metrics plus column means over the
/// rows that scored successfully.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub scorer: String,
    pub rows: Vec<EvalRow>,
    pub mean_semantic: f64,
    pub mean_chroma: f64,
    pub mean_avg: f64,
    pub scored_rows: usize,
    pub failed_rows: usize,
    /// Resolved configuration echoed by the caller for provenance.
    pub config_echo: serde_json::Value,
}

pub const EVAL_SCHEMA_VERSION: u32 = 1;

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("eval report serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("eval report parse failure: {e}")))
    }
}

/// Score every pair: semantic similarity of the edited clip against
/// the target text, chroma similarity of edited against original, and
/// their per-row mean. Scorer failures annotate the row and are
/// excluded from the means.
pub fn evaluate_batch(pairs: &[EvalPair], scorer: &dyn SemanticScorer) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::parameter("no pairs to evaluate"));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let mut sum_sem = 0.0;
    let mut sum_chr = 0.0;
    let mut sum_avg = 0.0;
    let mut scored = 0usize;
    for pair in pairs {
        let outcome = (|| -> Result<(f64, f64)> {
            let sem = semantic_similarity(&pair.edited, &pair.target_text, Some(scorer))?;
            let ca = chromagram(&pair.original)?;
            let cb = chromagram(&pair.edited)?;
            let chr = chroma_similarity(&ca, &cb)?;
            Ok((sem, chr))
        })();
        match outcome {
            Ok((sem, chr)) => {
                let avg = (sem + chr) / 2.0;
                sum_sem += sem;
                sum_chr += chr;
                sum_avg += avg;
                scored += 1;
                rows.push(EvalRow {
                    label: pair.label.clone(),
                    semantic: Some(sem),
                    chroma: Some(chr),
                    avg: Some(avg),
                    error: None,
                });
            }
            Err(e) => rows.push(EvalRow {
                label: pair.label.clone(),
                semantic: None,
                chroma: None,
                avg: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let denom = scored.max(1) as f64;
    Ok(EvalReport {
        schema_version: EVAL_SCHEMA_VERSION,
        scorer: scorer.name().to_string(),
        rows,
        mean_semantic: sum_sem / denom,
        mean_chroma: sum_chr / denom,
        mean_avg: sum_avg / denom,
        scored_rows: scored,
        failed_rows: pairs.len() - scored,
        config_echo: serde_json::Value::Null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip_from(data: Array3<f64>) -> LatentClip {
        LatentClip::toy(data)
    }

    fn random_clip(seed: u64) -> LatentClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        clip_from(Array3::from_shape_fn((1, 32, 32), |_| {
            rng.gen_range(-1.0..1.0)
        }))
    }

    #[test]
    fn single_bin_gives_one_hot_class() {
        for r in [0usize, 5, 11, 30] {
            let mut data = Array3::<f64>::zeros((1, 32, 32));
            for f in 0..32 {
                data[[0, r, f]] = 1.0;
            }
            let ch = chromagram(&clip_from(data)).unwrap();
            for f in 0..32 {
                for p in 0..TOY_PITCH_CLASSES {
                    let expect = if p == r % TOY_PITCH_CLASSES { 1.0 } else { 0.0 };
                    assert_eq!(ch.energies[[p, f]], expect);
                }
            }
        }
    }

    #[test]
    fn zero_clip_gives_zero_chroma() {
        let ch = chromagram(&clip_from(Array3::zeros((1, 32, 32)))).unwrap();
        assert!(ch.energies.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_conserved_over_random_clips() {
        for seed in 0..100 {
            let clip = random_clip(seed);
            let ch = chromagram(&clip).unwrap();
            for f in 0..32 {
                let pre: f64 = (0..32).map(|b| clip.data[[0, b, f]].max(0.0)).sum();
                let post: f64 = (0..TOY_PITCH_CLASSES).map(|p| ch.energies[[p, f]]).sum();
                assert!((pre - post).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn similarity_identity_orthogonality_scale() {
        let x = chromagram(&random_clip(1)).unwrap();
        assert_eq!(chroma_similarity(&x, &x).unwrap(), 1.0);

        let mut a = Array3::<f64>::zeros((1, 32, 32));
        let mut b = Array3::<f64>::zeros((1, 32, 32));
        a[[0, 0, 0]] = 1.0;
        b[[0, 1, 0]] = 1.0;
        let ca = chromagram(&clip_from(a)).unwrap();
        let cb = chromagram(&clip_from(b)).unwrap();
        assert_eq!(chroma_similarity(&ca, &cb).unwrap(), 0.0);

        let two = Chromagram {
            energies: x.energies.mapv(|v| v * 2.0),
        };
        assert!((chroma_similarity(&x, &two).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_both_zero_is_one_single_zero_is_zero() {
        let z = chromagram(&clip_from(Array3::zeros((1, 32, 32)))).unwrap();
        let x = chromagram(&random_clip(2)).unwrap();
        assert_eq!(chroma_similarity(&z, &z).unwrap(), 1.0);
        assert_eq!(chroma_similarity(&z, &x).unwrap(), 0.0);
        assert_eq!(chroma_similarity(&x, &z).unwrap(), 0.0);
    }

    #[test]
    fn similarity_rejects_shape_mismatch() {
        let a = Chromagram {
            energies: Array2::zeros((8, 32)),
        };
        let b = Chromagram {
            energies: Array2::zeros((8, 16)),
        };
        assert!(matches!(chroma_similarity(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn transposition_strictly_decreases_similarity() {
        // one-hot melody walking across classes
        let melody = [0usize, 2, 4, 5, 7, 4, 2, 0];
        let render = |shift: usize| {
            let mut data = Array3::<f64>::zeros((1, 32, 32));
            for (seg, &m) in melody.iter().enumerate() {
                for f in (seg * 4)..(seg * 4 + 4) {
                    data[[0, (m + shift) % 8, f]] = 1.0;
                }
            }
            chromagram(&clip_from(data)).unwrap()
        };
        let base = render(0);
        let shifted = render(1);
        let s = chroma_similarity(&base, &shifted).unwrap();
        assert!(s < 1.0, "shifted similarity {s}");
    }

    #[test]
    fn audio_chroma_sine_concentrates_on_a() {
        let sr = 16_000u32;
        let samples: Vec<f64> = (0..16_384)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
            .collect();
        let ch = chromagram_audio(&samples, sr).unwrap();
        assert_eq!(ch.pitch_classes(), 12);
        // midi 69 -> class 69 % 12 = 9
        let per_class: Vec<f64> = (0..12)
            .map(|p| (0..ch.frames()).map(|f| ch.energies[[p, f]]).sum())
            .collect();
        let argmax = per_class
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        assert_eq!(argmax, 9);
    }

    #[test]
    fn audio_chroma_conserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..8192).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ch = chromagram_audio(&samples, 16_000).unwrap();
        let mag = dsp::stft_magnitude(&samples, CHROMA_FRAME, CHROMA_HOP);
        for f in 0..mag.ncols() {
            let pre: f64 = mag.column(f).sum();
            let post: f64 = ch.energies.column(f).sum();
            assert!((pre - post).abs() < 1e-6);
        }
    }

    struct MatchScorer;
    impl SemanticScorer for MatchScorer {
        fn score(&self, clip: &LatentClip, text: &str) -> Result<f64> {
            // toy stand-in: "loud" matches clips with positive mean
            let m = clip.data.mean().unwrap_or(0.0);
            Ok(if (m > 0.0) == text.contains("loud") {
                1.0
            } else {
                0.0
            })
        }
        fn name(&self) -> &str {
            "match-stub"
        }
    }

    struct BrokenScorer;
    impl SemanticScorer for BrokenScorer {
        fn score(&self, _clip: &LatentClip, text: &str) -> Result<f64> {
            if text.contains("fail") {
                Err(Error::Config("stub failure".into()))
            } else {
                Ok(0.5)
            }
        }
        fn name(&self) -> &str {
            "broken-stub"
        }
    }

    #[test]
    fn semantic_similarity_requires_scorer() {
        let clip = random_clip(4);
        assert!(matches!(
            semantic_similarity(&clip, "x", None),
            Err(Error::Config(_))
        ));
        let s = semantic_similarity(&clip, "loud", Some(&MatchScorer)).unwrap();
        assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn semantic_scores_in_range_over_random_pairs() {
        for seed in 0..100 {
            let clip = random_clip(seed);
            let text = if seed % 2 == 0 { "loud music" } else { "soft music" };
            let s = semantic_similarity(&clip, text, Some(&MatchScorer)).unwrap();
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn evaluate_batch_identity_pair() {
        let clip = random_clip(5);
        let pairs = vec![EvalPair {
            original: clip.clone(),
            edited: clip.clone(),
            target_text: if clip.data.mean().unwrap() > 0.0 {
                "loud".into()
            } else {
                "soft".into()
            },
            label: "identity".into(),
        }];
        let report = evaluate_batch(&pairs, &MatchScorer).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!((report.rows[0].chroma.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(report.failed_rows, 0);
    }

    #[test]
    fn evaluate_batch_means_match_recomputation() {
        let pairs: Vec<EvalPair> = (0..10)
            .map(|i| EvalPair {
                original: random_clip(i),
                edited: random_clip(i + 100),
                target_text: if i % 3 == 0 { "loud".into() } else { "soft".into() },
                label: format!("pair-{i}"),
            })
            .collect();
        let report = evaluate_batch(&pairs, &MatchScorer).unwrap();
        let sem: Vec<f64> = report.rows.iter().filter_map(|r| r.semantic).collect();
        let chr: Vec<f64> = report.rows.iter().filter_map(|r| r.chroma).collect();
        let avg: Vec<f64> = report.rows.iter().filter_map(|r| r.avg).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((report.mean_semantic - mean(&sem)).abs() < 1e-9);
        assert!((report.mean_chroma - mean(&chr)).abs() < 1e-9);
        assert!((report.mean_avg - mean(&avg)).abs() < 1e-9);
        for r in &report.rows {
            let expect = (r.semantic.unwrap() + r.chroma.unwrap()) / 2.0;
            assert!((r.avg.unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_batch_annotates_failures() {
        let pairs = vec![
            EvalPair {
                original: random_clip(6),
                edited: random_clip(7),
                target_text: "ok".into(),
                label: "good".into(),
            },
            EvalPair {
                original: random_clip(8),
                edited: random_clip(9),
                target_text: "fail please".into(),
                label: "bad".into(),
            },
        ];
        let report = evaluate_batch(&pairs, &BrokenScorer).unwrap();
        assert_eq!(report.failed_rows, 1);
        assert_eq!(report.scored_rows, 1);
        assert!(report.rows[1].error.is_some());
        assert!((report.mean_semantic - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_batch_rejects_empty() {
        assert!(evaluate_batch(&[], &MatchScorer).is_err());
    }

    #[test]
    fn eval_report_json_round_trip() {
        let pairs = vec![EvalPair {
            original: random_clip(10),
            edited: random_clip(11),
            target_text: "loud".into(),
            label: "rt".into(),
        }];
        let report = evaluate_batch(&pairs, &MatchScorer).unwrap();
        let back = EvalReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back.rows.len(), report.rows.len());
        assert_eq!(back.schema_version, EVAL_SCHEMA_VERSION);
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_in_range(sa in 0u64..50, sb in 50u64..100) {
            let a = chromagram(&random_clip(sa)).unwrap();
            let b = chromagram(&random_clip(sb)).unwrap();
            let ab = chroma_similarity(&a, &b).unwrap();
            let ba = chroma_similarity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
