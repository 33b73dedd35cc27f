//! Prompt conditioning: two-branch text embeddings, caption synthesis,
//! editing directions, and edited-embedding assembly.
//!
//! The editing mechanism never looks inside the encoder; it only needs
//! a sentence branch (per-token vectors), a fixed-length sequence
//! branch, and a pooled vector. [`ToyTextEncoder`] provides those from
//! a seeded random embedding table so the whole pipeline runs without
//! pretrained weights; adapters for real encoders implement the same
//! [`TextEncoder`] interface.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Two-branch prompt embedding plus pooled summary.
///
/// `sentence` is L x D_s with padding rows zeroed and flagged false in
/// `valid_mask`; `sequence` is exactly K x D_g; `pooled` is D_c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEmbedding {
    pub sentence: Array2<f64>,
    pub sequence: Array2<f64>,
    pub pooled: Array1<f64>,
    pub valid_mask: Vec<bool>,
}

impl PromptEmbedding {
    pub fn len_sentence(&self) -> usize {
        self.sentence.nrows()
    }

    pub fn num_sequence_rows(&self) -> usize {
        self.sequence.nrows()
    }

    /// Mean of sentence rows at valid positions; zeros when none are
    /// valid (empty prompt).
    pub fn pooled_sentence(&self) -> Array1<f64> {
        let d = self.sentence.ncols();
        let mut acc = Array1::<f64>::zeros(d);
        let mut n = 0usize;
        for (row, &ok) in self.sentence.outer_iter().zip(&self.valid_mask) {
            if ok {
                acc += &row;
                n += 1;
            }
        }
        if n > 0 {
            acc.mapv_inplace(|v| v / n as f64);
        }
        acc
    }
}

/// Direction in sentence-embedding space from a source keyword toward
/// a target keyword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDirection {
    pub delta: Array1<f64>,
    pub source_keyword: String,
    pub target_keyword: String,
    pub num_captions: usize,
}

impl EditDirection {
    pub fn new(
        delta: Array1<f64>,
        source_keyword: impl Into<String>,
        target_keyword: impl Into<String>,
        num_captions: usize,
    ) -> Result<Self> {
        let source_keyword = source_keyword.into();
        let target_keyword = target_keyword.into();
        if source_keyword.is_empty() || target_keyword.is_empty() {
            return Err(Error::parameter("edit keywords must be non-empty"));
        }
        if source_keyword == target_keyword {
            return Err(Error::parameter(
                "edit keywords must be distinct; use EditDirection::identity for null edits",
            ));
        }
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(Error::parameter("delta contains non-finite entries"));
        }
        if num_captions == 0 {
            return Err(Error::parameter("num_captions must be positive"));
        }
        Ok(EditDirection {
            delta,
            source_keyword,
            target_keyword,
            num_captions,
        })
    }

    /// Zero direction for null edits (source == target allowed).
    pub fn identity(keyword: impl Into<String>, d_s: usize) -> Self {
        let keyword = keyword.into();
        EditDirection {
            delta: Array1::zeros(d_s),
            source_keyword: keyword.clone(),
            target_keyword: keyword,
            num_captions: 1,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.delta.iter().all(|&v| v == 0.0)
    }
}

/// Caption templates and slot vocabularies for synthesizing keyword
/// caption sets. Each template contains exactly one `{KEY}` slot for
/// the keyword plus optional `{mood}`/`{genre}`/`{timbre}` slots.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CaptionBank {
    pub templates: Vec<String>,
    pub moods: Vec<String>,
    pub genres: Vec<String>,
    pub timbres: Vec<String>,
}

impl CaptionBank {
    /// The built-in bank mirroring the toy benchmark's attribute space.
    pub fn default_bank() -> Self {
        CaptionBank {
            templates: vec![
                "A {KEY} {genre} music with {timbre} performance.".into(),
                "A {mood} {KEY} music with {timbre} performance.".into(),
                "A {mood} {genre} music with {KEY} performance.".into(),
            ],
            moods: vec!["upbeat".into(), "relaxing".into(), "peaceful".into()],
            genres: vec!["classical".into(), "jazz".into(), "rock".into()],
            timbres: vec!["timbreA".into(), "timbreB".into(), "timbreC".into()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::Config("caption bank has no templates".into()));
        }
        for t in &self.templates {
            if t.matches("{KEY}").count() != 1 {
                return Err(Error::Config(format!(
                    "template must contain exactly one {{KEY}} slot: {t:?}"
                )));
            }
        }
        if self.moods.is_empty() || self.genres.is_empty() || self.timbres.is_empty() {
            return Err(Error::Config("caption bank has an empty vocabulary".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bank: CaptionBank = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("caption bank parse failure: {e}")))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("caption bank serialization")
    }

    /// Category of a keyword if it appears in one of the vocabularies.
    fn keyword_category(&self, keyword: &str) -> Option<&'static str> {
        if self.moods.iter().any(|m| m == keyword) {
            Some("mood")
        } else if self.genres.iter().any(|g| g == keyword) {
            Some("genre")
        } else if self.timbres.iter().any(|t| t == keyword) {
            Some("timbre")
        } else {
            None
        }
    }
}

/// Synthesize `n` captions that each contain `keyword` exactly once.
///
/// Enumerates every (template, slot values) combination compatible
/// with the keyword, permutes the list by `seed`, and cycles through
/// it, so small `n` yields distinct captions and the sampling is
/// deterministic. Pairing calls for a source and a target keyword with
/// the same seed aligns the non-keyword slots caption-for-caption.
pub fn synthesize_captions(
    keyword: &str,
    bank: &CaptionBank,
    n: usize,
    seed: u64,
) -> Result<Vec<String>> {
    bank.validate()?;
    if keyword.is_empty() {
        return Err(Error::parameter("keyword must be non-empty"));
    }
    if n == 0 {
        return Err(Error::parameter("caption count must be positive"));
    }
    let category = bank.keyword_category(keyword);
    // A template is compatible when it does not also sample the
    // keyword's own category (avoids captions naming two timbres).
    let compatible: Vec<&String> = bank
        .templates
        .iter()
        .filter(|t| match category {
            Some(cat) => !t.contains(&format!("{{{cat}}}")),
            None => true,
        })
        .collect();
    if compatible.is_empty() {
        return Err(Error::Config(format!(
            "no template is compatible with keyword {keyword:?}"
        )));
    }
    let mut combos = Vec::new();
    for t in &compatible {
        let mood_opts: Vec<Option<&String>> = if t.contains("{mood}") {
            bank.moods.iter().map(Some).collect()
        } else {
            vec![None]
        };
        let genre_opts: Vec<Option<&String>> = if t.contains("{genre}") {
            bank.genres.iter().map(Some).collect()
        } else {
            vec![None]
        };
        let timbre_opts: Vec<Option<&String>> = if t.contains("{timbre}") {
            bank.timbres.iter().map(Some).collect()
        } else {
            vec![None]
        };
        for m in &mood_opts {
            for g in &genre_opts {
                for tb in &timbre_opts {
                    let mut s = t.replacen("{KEY}", keyword, 1);
                    if let Some(m) = m {
                        s = s.replace("{mood}", m);
                    }
                    if let Some(g) = g {
                        s = s.replace("{genre}", g);
                    }
                    if let Some(tb) = tb {
                        s = s.replace("{timbre}", tb);
                    }
                    combos.push(s);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates so a fixed seed gives a fixed caption order.
    for i in (1..combos.len()).rev() {
        let j = rng.gen_range(0..=i);
        combos.swap(i, j);
    }
    Ok((0..n).map(|i| combos[i % combos.len()].clone()).collect())
}

/// Text encoder contract consumed by the denoiser and editor.
pub trait TextEncoder: Send + Sync {
    fn encode(&self, prompt: &str) -> Result<PromptEmbedding>;
    /// Sentence-branch width D_s.
    fn d_s(&self) -> usize;
    /// Sequence-branch width D_g.
    fn d_g(&self) -> usize;
    /// Fixed sentence length L (padding included).
    fn l_max(&self) -> usize;
    /// Sequence row count K.
    fn k(&self) -> usize;
    /// Unconditional embedding (empty prompt).
    fn empty(&self) -> PromptEmbedding {
        self.encode("").expect("empty prompt must encode")
    }
}

/// Configuration for [`ToyTextEncoder`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ToyEncoderConfig {
    pub d_s: usize,
    pub d_g: usize,
    pub d_c: usize,
    pub l_max: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        ToyEncoderConfig {
            d_s: 32,
            d_g: 32,
            d_c: 16,
            l_max: 12,
            k: 8,
            seed: 0xC0DE,
        }
    }
}

/// Deterministic stand-in for a pretrained two-branch text encoder.
///
/// Embedding table and projections are seeded random and fixed at
/// construction; the encoder is a frozen feature extractor, not a
/// trained model. Tokenization lowercases and strips punctuation.
pub struct ToyTextEncoder {
    config: ToyEncoderConfig,
    vocab: Vec<String>,
    table: Array2<f64>,
    pooled_proj: Array2<f64>,
    sentence_key_proj: Array2<f64>,
    pooled_key_proj: Array2<f64>,
    seq_queries: Array2<f64>,
}

impl ToyTextEncoder {
    pub fn new(config: ToyEncoderConfig) -> Self {
        let vocab: Vec<String> = [
            "a", "the", "music", "with", "performance", "melody", "tune", "song", "style",
            "of", "sound", "upbeat", "relaxing", "peaceful", "classical", "jazz", "rock",
            "timbrea", "timbreb", "timbrec",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut mat = |rows: usize, cols: usize, scale: f64| {
            Array2::from_shape_fn((rows, cols), |_| {
                rng.gen_range(-1.0..1.0) * scale
            })
        };
        let ds_scale = 1.0 / (config.d_s as f64).sqrt();
        let table = mat(vocab.len(), config.d_s, 1.0);
        let pooled_proj = mat(config.d_s, config.d_c, ds_scale);
        let sentence_key_proj = mat(config.d_s, config.d_g, ds_scale);
        let pooled_key_proj = mat(config.d_c, config.d_g, 1.0 / (config.d_c as f64).sqrt());
        let seq_queries = mat(config.k, config.d_g, 1.0);
        ToyTextEncoder {
            config,
            vocab,
            table,
            pooled_proj,
            sentence_key_proj,
            pooled_key_proj,
            seq_queries,
        }
    }

    pub fn with_default_config() -> Self {
        Self::new(ToyEncoderConfig::default())
    }

    pub fn config(&self) -> &ToyEncoderConfig {
        &self.config
    }

    /// Lowercase, strip punctuation, split on whitespace.
    pub fn tokenize(prompt: &str) -> Vec<String> {
        prompt
            .split_whitespace()
            .map(|w| {
                w.chars()
                    .filter(|c| c.is_alphanumeric())
                    .flat_map(|c| c.to_lowercase())
                    .collect::<String>()
            })
            .filter(|w| !w.is_empty())
            .collect()
    }

    fn token_index(&self, token: &str) -> Result<usize> {
        self.vocab
            .iter()
            .position(|v| v == token)
            .ok_or_else(|| Error::Vocabulary {
                token: token.to_string(),
            })
    }

    /// Embedding-table row for a token (after tokenization rules).
    /// Exposed so callers can cross-check pooling arithmetic.
    pub fn token_embedding(&self, token: &str) -> Result<Array1<f64>> {
        let norm = Self::tokenize(token);
        if norm.len() != 1 {
            return Err(Error::parameter(format!(
                "expected a single token, got {token:?}"
            )));
        }
        Ok(self.table.row(self.token_index(&norm[0])?).to_owned())
    }

    /// Deterministic sequence branch: K fixed query rows attend once
    /// over the projected sentence rows plus the projected pooled
    /// vector. Empty prompts yield all-zero sequence rows.
    fn sequence_branch(
        &self,
        sentence: &Array2<f64>,
        valid_mask: &[bool],
        pooled: &Array1<f64>,
    ) -> Array2<f64> {
        let k = self.config.k;
        let d_g = self.config.d_g;
        let n_valid = valid_mask.iter().filter(|&&b| b).count();
        if n_valid == 0 {
            return Array2::zeros((k, d_g));
        }
        // keys/values: valid sentence rows and the pooled row, in d_g
        let mut keys = Array2::<f64>::zeros((n_valid + 1, d_g));
        let mut row = 0;
        for (s, &ok) in sentence.outer_iter().zip(valid_mask) {
            if ok {
                keys.row_mut(row).assign(&s.dot(&self.sentence_key_proj));
                row += 1;
            }
        }
        keys.row_mut(n_valid)
            .assign(&pooled.dot(&self.pooled_key_proj));
        let scale = 1.0 / (d_g as f64).sqrt();
        let logits = self.seq_queries.dot(&keys.t()).mapv(|v| v * scale);
        let mut out = Array2::<f64>::zeros((k, d_g));
        for (qi, lrow) in logits.outer_iter().enumerate() {
            let mx = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Array1<f64> = lrow.mapv(|v| (v - mx).exp());
            let denom = exps.sum();
            let weights = exps.mapv(|v| v / denom);
            out.row_mut(qi).assign(&weights.dot(&keys));
        }
        out
    }
}

impl TextEncoder for ToyTextEncoder {
    fn encode(&self, prompt: &str) -> Result<PromptEmbedding> {
        let tokens = Self::tokenize(prompt);
        if tokens.len() > self.config.l_max {
            return Err(Error::parameter(format!(
                "prompt has {} tokens, max is {}",
                tokens.len(),
                self.config.l_max
            )));
        }
        let l = self.config.l_max;
        let mut sentence = Array2::<f64>::zeros((l, self.config.d_s));
        let mut valid_mask = vec![false; l];
        for (p, tok) in tokens.iter().enumerate() {
            let idx = self.token_index(tok)?;
            sentence.row_mut(p).assign(&self.table.row(idx));
            valid_mask[p] = true;
        }
        let pooled_sentence = {
            let mut acc = Array1::<f64>::zeros(self.config.d_s);
            if !tokens.is_empty() {
                for p in 0..tokens.len() {
                    acc += &sentence.row(p);
                }
                acc.mapv_inplace(|v| v / tokens.len() as f64);
            }
            acc
        };
        let pooled = pooled_sentence.dot(&self.pooled_proj);
        let pooled = if tokens.is_empty() {
            Array1::zeros(self.config.d_c)
        } else {
            pooled
        };
        let sequence = self.sequence_branch(&sentence, &valid_mask, &pooled);
        Ok(PromptEmbedding {
            sentence,
            sequence,
            pooled,
            valid_mask,
        })
    }

    fn d_s(&self) -> usize {
        self.config.d_s
    }

    fn d_g(&self) -> usize {
        self.config.d_g
    }

    fn l_max(&self) -> usize {
        self.config.l_max
    }

    fn k(&self) -> usize {
        self.config.k
    }
}

/// Editing direction from two caption sets: mean-pool each caption's
/// sentence branch over valid positions, average within each set, and
/// subtract (target minus source).
pub fn compute_delta(
    captions_src: &[String],
    captions_tgt: &[String],
    source_keyword: &str,
    target_keyword: &str,
    encoder: &dyn TextEncoder,
) -> Result<EditDirection> {
    if captions_src.is_empty() || captions_tgt.is_empty() {
        return Err(Error::parameter("caption sets must be non-empty"));
    }
    let set_mean = |captions: &[String]| -> Result<Array1<f64>> {
        let mut acc = Array1::<f64>::zeros(encoder.d_s());
        for c in captions {
            acc += &encoder.encode(c)?.pooled_sentence();
        }
        acc.mapv_inplace(|v| v / captions.len() as f64);
        Ok(acc)
    };
    let mean_src = set_mean(captions_src)?;
    let mean_tgt = set_mean(captions_tgt)?;
    EditDirection::new(
        mean_tgt - mean_src,
        source_keyword,
        target_keyword,
        captions_src.len().max(captions_tgt.len()),
    )
}

/// Assemble the edited embedding: sentence branch shifted by the
/// direction at valid positions, sequence branch taken from the target
/// prompt's embedding. L, K, the valid mask, and the pooled vector are
/// preserved from `e`.
pub fn apply_edit(
    e: &PromptEmbedding,
    dir: &EditDirection,
    e_target: &PromptEmbedding,
) -> Result<PromptEmbedding> {
    apply_edit_with_mask(e, dir, e_target, None)
}

/// [`apply_edit`] with an optional per-position override: when
/// `positions` is given, the direction is added only where both the
/// override and the valid mask are true.
pub fn apply_edit_with_mask(
    e: &PromptEmbedding,
    dir: &EditDirection,
    e_target: &PromptEmbedding,
    positions: Option<&[bool]>,
) -> Result<PromptEmbedding> {
    if dir.delta.len() != e.sentence.ncols() {
        return Err(Error::shape(format!(
            "delta length {} vs sentence width {}",
            dir.delta.len(),
            e.sentence.ncols()
        )));
    }
    if e_target.sequence.raw_dim() != e.sequence.raw_dim() {
        return Err(Error::shape(format!(
            "target sequence branch {:?} vs source {:?}",
            e_target.sequence.shape(),
            e.sequence.shape()
        )));
    }
    if let Some(p) = positions {
        if p.len() != e.valid_mask.len() {
            return Err(Error::shape(format!(
                "position override length {} vs sentence length {}",
                p.len(),
                e.valid_mask.len()
            )));
        }
    }
    let mut sentence = e.sentence.clone();
    // skipping the add when delta is exactly zero keeps null edits
    // bit-identical
    if !dir.is_zero() {
        for (i, mut row) in sentence.outer_iter_mut().enumerate() {
            let allowed = e.valid_mask[i] && positions.map_or(true, |p| p[i]);
            if allowed {
                row += &dir.delta;
            }
        }
    }
    Ok(PromptEmbedding {
        sentence,
        sequence: e_target.sequence.clone(),
        pooled: e.pooled.clone(),
        valid_mask: e.valid_mask.clone(),
    })
}
