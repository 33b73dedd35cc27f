//! Desk-scale verification substrate: procedural attribute-conditioned
//! spectrograms with an exact oracle probe.
//!
//! Every clip is 1x32x32 (channel, frequency bin, time frame). A
//! melody random walk occupies fundamental bins 0-7; timbres add
//! overtones at offsets that are multiples of 8 so pitch-class folding
//! is exactly invariant to timbre changes; moods gate frames with a
//! period-4 rhythm and genres shape a longer envelope. Because the
//! generator is the ground truth, the probe can score generations and
//! edits objectively.

mod bench;

pub use bench::{
    run_benchmark, ArmResult, AttributeCategory, BenchmarkConfig, BenchmarkReport, EditPair,
    PairedChromaTest, ARM_FULL, ARM_NO_L2, ARM_NO_L2_NO_DELTA, BENCHMARK_SCHEMA_VERSION,
};

use crate::error::{Error, Result};
use crate::metrics::SemanticScorer;
use crate::schedule::LatentClip;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const BINS: usize = 32;
pub const FRAMES: usize = 32;
pub const SEGMENTS: usize = 8;
pub const SEGMENT_FRAMES: usize = FRAMES / SEGMENTS;
/// Melody pitch classes; fundamentals live in bins 0..MELODY_CLASSES.
pub const MELODY_CLASSES: usize = 8;

/// Rhythm gate per mood (period 4), envelope per genre, overtone
/// template per timbre. All gate/envelope values are in (0, 1] so the
/// per-frame argmax bin is always the melody fundamental.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeSpace {
    pub moods: Vec<(String, [f64; 4])>,
    pub genres: Vec<(String, Vec<f64>)>,
    /// (bin offset, amplitude) pairs; offsets are positive multiples
    /// of 8 so chroma folding maps overtones onto the fundamental's
    /// pitch class.
    pub timbres: Vec<(String, Vec<(usize, f64)>)>,
}

impl AttributeSpace {
    pub fn default_space() -> Self {
        AttributeSpace {
            moods: vec![
                ("upbeat".into(), [1.0, 1.0, 1.0, 1.0]),
                ("relaxing".into(), [1.0, 0.55, 0.85, 0.55]),
                ("peaceful".into(), [0.9, 0.35, 0.6, 0.35]),
            ],
            genres: vec![
                ("classical".into(), vec![1.0]),
                (
                    "jazz".into(),
                    vec![1.0, 0.9, 0.75, 0.6, 0.5, 0.6, 0.75, 0.9],
                ),
                ("rock".into(), vec![1.0, 0.5]),
            ],
            timbres: vec![
                ("timbreA".into(), vec![(8, 0.7), (16, 0.45)]),
                ("timbreB".into(), vec![(8, 0.95)]),
                ("timbreC".into(), vec![(8, 0.3), (16, 0.8)]),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.moods.is_empty() || self.genres.is_empty() || self.timbres.is_empty() {
            return Err(Error::Config("attribute space has an empty axis".into()));
        }
        for (name, gate) in &self.moods {
            if gate.iter().any(|&g| !(0.0 < g && g <= 1.0)) {
                return Err(Error::Config(format!(
                    "mood {name:?} gate values must be in (0, 1]"
                )));
            }
        }
        for (name, env) in &self.genres {
            if env.is_empty() || env.iter().any(|&g| !(0.0 < g && g <= 1.0)) {
                return Err(Error::Config(format!(
                    "genre {name:?} envelope values must be in (0, 1]"
                )));
            }
        }
        for (name, overtones) in &self.timbres {
            for &(offset, amp) in overtones {
                if offset == 0 || offset % MELODY_CLASSES != 0 {
                    return Err(Error::Config(format!(
                        "timbre {name:?} overtone offset {offset} must be a positive multiple of {MELODY_CLASSES}"
                    )));
                }
                if MELODY_CLASSES - 1 + offset >= BINS {
                    return Err(Error::Config(format!(
                        "timbre {name:?} overtone offset {offset} exceeds the bin range"
                    )));
                }
                if !(0.0 < amp && amp < 1.0) {
                    return Err(Error::Config(format!(
                        "timbre {name:?} overtone amplitude {amp} must be in (0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mood_names(&self) -> Vec<&str> {
        self.moods.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn genre_names(&self) -> Vec<&str> {
        self.genres.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn timbre_names(&self) -> Vec<&str> {
        self.timbres.iter().map(|(n, _)| n.as_str()).collect()
    }

    fn mood(&self, name: &str) -> Result<&[f64; 4]> {
        self.moods
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g)
            .ok_or_else(|| Error::parameter(format!("unknown mood {name:?}")))
    }

    fn genre(&self, name: &str) -> Result<&Vec<f64>> {
        self.genres
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g)
            .ok_or_else(|| Error::parameter(format!("unknown genre {name:?}")))
    }

    fn timbre(&self, name: &str) -> Result<&Vec<(usize, f64)>> {
        self.timbres
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::parameter(format!("unknown timbre {name:?}")))
    }

    /// All (mood, genre) frame-energy product patterns, normalized.
    fn envelope_templates(&self) -> Vec<(usize, usize, Vec<f64>)> {
        let mut out = Vec::new();
        for (mi, (_, gate)) in self.moods.iter().enumerate() {
            for (gi, (_, env)) in self.genres.iter().enumerate() {
                let mut pat: Vec<f64> = (0..FRAMES)
                    .map(|f| gate[f % 4] * env[f % env.len()])
                    .collect();
                let norm = pat.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in &mut pat {
                    *v /= norm;
                }
                out.push((mi, gi, pat));
            }
        }
        out
    }
}

/// One point in the attribute space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attributes {
    pub mood: String,
    pub genre: String,
    pub timbre: String,
}

impl Attributes {
    pub fn new(
        mood: impl Into<String>,
        genre: impl Into<String>,
        timbre: impl Into<String>,
    ) -> Self {
        Attributes {
            mood: mood.into(),
            genre: genre.into(),
            timbre: timbre.into(),
        }
    }

    /// The prompt template shared by the dataset, captioner, and CLI.
    pub fn prompt(&self) -> String {
        format!(
            "A {} {} music with {} performance.",
            self.mood, self.genre, self.timbre
        )
    }
}

/// Deterministic melody random walk: one pitch class per 4-frame
/// segment, steps in {-2, -1, +1, +2} clamped to [0, 7].
pub fn melody_walk(seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = rng.gen_range(0..MELODY_CLASSES) as isize;
    let mut melody = Vec::with_capacity(SEGMENTS);
    melody.push(current as usize);
    const STEPS: [isize; 4] = [-2, -1, 1, 2];
    for _ in 1..SEGMENTS {
        let step = STEPS[rng.gen_range(0..STEPS.len())];
        current = (current + step).clamp(0, MELODY_CLASSES as isize - 1);
        melody.push(current as usize);
    }
    melody
}

/// Render a clip for the given attributes and melody seed. Values lie
/// in [0, 1]; deterministic given the inputs.
pub fn generate_clip(
    attributes: &Attributes,
    melody_seed: u64,
    space: &AttributeSpace,
) -> Result<(Array3<f64>, Vec<usize>)> {
    let gate = space.mood(&attributes.mood)?;
    let env = space.genre(&attributes.genre)?;
    let overtones = space.timbre(&attributes.timbre)?;
    let melody = melody_walk(melody_seed);
    let mut spec = Array3::<f64>::zeros((1, BINS, FRAMES));
    for f in 0..FRAMES {
        let m = melody[f / SEGMENT_FRAMES];
        let level = gate[f % 4] * env[f % env.len()];
        spec[[0, m, f]] = level;
        for &(offset, amp) in overtones {
            spec[[0, m + offset, f]] = amp * level;
        }
    }
    Ok((spec, melody))
}

/// Probe outcome; `silence` marks all-zero input, in which case the
/// attribute fields hold `"silence"` and confidences are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub silence: bool,
    pub mood: String,
    pub genre: String,
    pub timbre: String,
    pub melody: Vec<usize>,
    pub envelope_confidence: f64,
    pub timbre_confidence: f64,
}

impl ProbeOutcome {
    pub fn matches(&self, attributes: &Attributes) -> bool {
        !self.silence
            && self.mood == attributes.mood
            && self.genre == attributes.genre
            && self.timbre == attributes.timbre
    }
}

/// Oracle attribute probe: melody by per-frame fundamental argmax,
/// timbre by overtone-ratio matching at the detected fundamentals,
/// mood/genre by cosine against the (mood x genre) envelope products.
pub fn attribute_probe(spec: &Array3<f64>, space: &AttributeSpace) -> Result<ProbeOutcome> {
    let shape = spec.shape();
    if shape != [1, BINS, FRAMES] {
        return Err(Error::parameter(format!(
            "probe expects a 1x{BINS}x{FRAMES} spectrogram, got {shape:?}"
        )));
    }
    space.validate()?;
    let clamped = spec.mapv(|v| v.max(0.0));
    let total: f64 = clamped.sum();
    if total < 1e-9 {
        return Ok(ProbeOutcome {
            silence: true,
            mood: "silence".into(),
            genre: "silence".into(),
            timbre: "silence".into(),
            melody: Vec::new(),
            envelope_confidence: 0.0,
            timbre_confidence: 0.0,
        });
    }

    // melody: strongest fundamental bin per frame, majority per segment
    let mut per_frame = Vec::with_capacity(FRAMES);
    for f in 0..FRAMES {
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for b in 0..MELODY_CLASSES {
            let v = clamped[[0, b, f]];
            if v > best_v {
                best_v = v;
                best = b;
            }
        }
        per_frame.push(best);
    }
    let mut melody = Vec::with_capacity(SEGMENTS);
    for s in 0..SEGMENTS {
        let mut counts = [0usize; MELODY_CLASSES];
        for f in (s * SEGMENT_FRAMES)..((s + 1) * SEGMENT_FRAMES) {
            counts[per_frame[f]] += 1;
        }
        let cls = counts
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .map(|(i, _)| i)
            .unwrap_or(0);
        melody.push(cls);
    }

    // timbre: overtone-to-fundamental energy ratios at detected pitches
    let mut e_fund = 0.0;
    let mut e_over = vec![0.0; BINS / MELODY_CLASSES];
    for f in 0..FRAMES {
        let m = melody[f / SEGMENT_FRAMES];
        e_fund += clamped[[0, m, f]];
        for harm in 1..(BINS / MELODY_CLASSES) {
            let bin = m + harm * MELODY_CLASSES;
            if bin < BINS {
                e_over[harm] += clamped[[0, bin, f]];
            }
        }
    }
    let ratios: Vec<f64> = (1..(BINS / MELODY_CLASSES))
        .map(|h| if e_fund > 0.0 { e_over[h] / e_fund } else { 0.0 })
        .collect();
    let mut best_timbre = 0usize;
    let mut best_dist = f64::INFINITY;
    for (ti, (_, overtones)) in space.timbres.iter().enumerate() {
        let mut template = vec![0.0; ratios.len()];
        for &(offset, amp) in overtones {
            template[offset / MELODY_CLASSES - 1] = amp;
        }
        let dist: f64 = ratios
            .iter()
            .zip(&template)
            .map(|(r, t)| (r - t) * (r - t))
            .sum::<f64>()
            .sqrt();
        if dist < best_dist {
            best_dist = dist;
            best_timbre = ti;
        }
    }
    let timbre_confidence = (1.0 - best_dist).clamp(0.0, 1.0);

    // mood + genre: cosine of the frame-energy profile against every
    // (mood, genre) product pattern
    let mut energy: Vec<f64> = (0..FRAMES)
        .map(|f| (0..BINS).map(|b| clamped[[0, b, f]]).sum())
        .collect();
    let norm = energy.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut energy {
        *v /= norm;
    }
    let mut best_pair = (0usize, 0usize);
    let mut best_cos = f64::NEG_INFINITY;
    for (mi, gi, pat) in space.envelope_templates() {
        let cos: f64 = energy.iter().zip(&pat).map(|(a, b)| a * b).sum();
        if cos > best_cos {
            best_cos = cos;
            best_pair = (mi, gi);
        }
    }

    Ok(ProbeOutcome {
        silence: false,
        mood: space.moods[best_pair.0].0.clone(),
        genre: space.genres[best_pair.1].0.clone(),
        timbre: space.timbres[best_timbre].0.clone(),
        melody,
        envelope_confidence: best_cos.clamp(0.0, 1.0),
        timbre_confidence,
    })
}

/// One labeled training example.
#[derive(Debug, Clone)]
pub struct ToyClip {
    pub spectrogram: Array3<f64>,
    pub attributes: Attributes,
    pub prompt: String,
    pub melody: Vec<usize>,
    pub melody_seed: u64,
}

/// Attribute-balanced training set; spectrograms stay in [0, 1].
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub clips: Vec<ToyClip>,
    pub space: AttributeSpace,
    pub seed: u64,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Build a dataset cycling through every (mood, genre, timbre) combo
/// with fresh melody seeds derived from `seed`.
pub fn build_dataset(space: &AttributeSpace, n_clips: usize, seed: u64) -> Result<ToyDataset> {
    space.validate()?;
    if n_clips == 0 {
        return Err(Error::parameter("dataset size must be positive"));
    }
    let mut combos = Vec::new();
    for (m, _) in &space.moods {
        for (g, _) in &space.genres {
            for (t, _) in &space.timbres {
                combos.push(Attributes::new(m.clone(), g.clone(), t.clone()));
            }
        }
    }
    let mut clips = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let attributes = combos[i % combos.len()].clone();
        let melody_seed = seed.wrapping_add(i as u64);
        let (spectrogram, melody) = generate_clip(&attributes, melody_seed, space)?;
        clips.push(ToyClip {
            prompt: attributes.prompt(),
            spectrogram,
            attributes,
            melody,
            melody_seed,
        });
    }
    Ok(ToyDataset {
        clips,
        space: space.clone(),
        seed,
    })
}

/// Dataset values live in [0, 1]; the diffusion model trains in
/// [-1, 1]. These two maps convert between the spaces.
pub fn to_model_space(spec: &Array3<f64>) -> Array3<f64> {
    spec.mapv(|v| 2.0 * v - 1.0)
}

/// Inverse of [`to_model_space`], clamped to the data range since
/// sampled latents overshoot slightly.
pub fn from_model_space(latent: &Array3<f64>) -> Array3<f64> {
    latent.mapv(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
}

/// Probe-backed semantic scorer: fraction of attribute words named in
/// the text that the probe confirms in the clip.
pub struct ProbeScorer {
    space: AttributeSpace,
}

impl ProbeScorer {
    pub fn new(space: AttributeSpace) -> Self {
        ProbeScorer { space }
    }
}

impl SemanticScorer for ProbeScorer {
    fn score(&self, clip: &LatentClip, text: &str) -> Result<f64> {
        let probe = attribute_probe(&clip.data, &self.space)?;
        let lower = text.to_lowercase();
        let mut named = 0usize;
        let mut matched = 0usize;
        let mut tally = |candidates: Vec<&str>, predicted: &str| {
            for name in candidates {
                if lower.contains(&name.to_lowercase()) {
                    named += 1;
                    if name == predicted {
                        matched += 1;
                    }
                    break;
                }
            }
        };
        tally(self.space.mood_names(), &probe.mood);
        tally(self.space.genre_names(), &probe.genre);
        tally(self.space.timbre_names(), &probe.timbre);
        if named == 0 {
            return Ok(0.0);
        }
        Ok(matched as f64 / named as f64)
    }

    fn name(&self) -> &str {
        "toy-probe"
    }
}

/// Caption a clip by echoing the probe's attributes through the shared
/// prompt template.
pub struct ToyCaptioner {
    space: AttributeSpace,
}

impl ToyCaptioner {
    pub fn new(space: AttributeSpace) -> Self {
        ToyCaptioner { space }
    }

    pub fn caption(&self, clip: &LatentClip) -> Result<String> {
        let probe = attribute_probe(&clip.data, &self.space)?;
        if probe.silence {
            return Ok("music".to_string());
        }
        Ok(Attributes::new(probe.mood, probe.genre, probe.timbre).prompt())
    }
}

/// Add iid Gaussian noise, for robustness tests and noisy evaluation.
pub fn with_noise(spec: &Array3<f64>, sigma: f64, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.mapv(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
}
