//! The conditional noise predictor: a small convolutional
//! encoder-decoder over the latent with a cross-attention transformer
//! block at every stage, attending over the prompt embedding's
//! sentence and sequence branches. Every cross-attention map can be
//! captured, and the whole network runs on the autodiff graph so
//! attention-map losses are differentiable with respect to the input
//! latent.

mod train;

pub use train::{train_toy_denoiser, Adam, TrainConfig};

use crate::autodiff::{Graph, Id};
use crate::condition::PromptEmbedding;
use crate::error::{Error, Result};
use ndarray::{Array2, Array3, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Network shape. One encoder block per stage (each followed by a
/// 2x downsample), a bottleneck block, and mirrored decoder blocks;
/// every block carries one cross-attention site, so there are
/// `2 * stage_channels.len() + 1` sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub in_channels: usize,
    pub latent_bins: usize,
    pub latent_frames: usize,
    pub stage_channels: Vec<usize>,
    /// Attention width d at every site.
    pub attention_width: usize,
    pub heads: usize,
    pub time_embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            in_channels: 1,
            latent_bins: 32,
            latent_frames: 32,
            stage_channels: vec![32, 64, 96],
            attention_width: 64,
            heads: 4,
            time_embed_dim: 64,
        }
    }
}

impl DenoiserConfig {
    /// Smallest config that still exercises every code path; used by
    /// gradient checks.
    pub fn tiny() -> Self {
        DenoiserConfig {
            in_channels: 1,
            latent_bins: 8,
            latent_frames: 8,
            stage_channels: vec![8],
            attention_width: 8,
            heads: 2,
            time_embed_dim: 16,
        }
    }

    pub fn num_sites(&self) -> usize {
        2 * self.stage_channels.len() + 1
    }

    pub fn latent_shape(&self) -> (usize, usize, usize) {
        (self.in_channels, self.latent_bins, self.latent_frames)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() {
            return Err(Error::parameter("at least one stage is required"));
        }
        if self.attention_width == 0 || self.heads == 0 {
            return Err(Error::parameter("attention width and heads must be positive"));
        }
        if self.attention_width % self.heads != 0 {
            return Err(Error::parameter(format!(
                "attention width {} must be divisible by heads {}",
                self.attention_width, self.heads
            )));
        }
        if self.time_embed_dim % 2 != 0 || self.time_embed_dim == 0 {
            return Err(Error::parameter("time embedding size must be positive and even"));
        }
        let down = 1usize << self.stage_channels.len();
        if self.latent_bins % down != 0 || self.latent_frames % down != 0 {
            return Err(Error::parameter(format!(
                "latent {}x{} must be divisible by 2^stages = {down}",
                self.latent_bins, self.latent_frames
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::parameter("in_channels must be positive"));
        }
        Ok(())
    }
}

/// Prompt-embedding dimensions the denoiser was built against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondDims {
    pub l: usize,
    pub k: usize,
    pub d_s: usize,
    pub d_g: usize,
}

impl CondDims {
    pub fn of(encoder: &dyn crate::condition::TextEncoder) -> Self {
        CondDims {
            l: encoder.l_max(),
            k: encoder.k(),
            d_s: encoder.d_s(),
            d_g: encoder.d_g(),
        }
    }

    pub fn tokens(&self) -> usize {
        self.l + self.k
    }

    fn check(&self, e: &PromptEmbedding) -> Result<()> {
        let ok = e.sentence.nrows() == self.l
            && e.sentence.ncols() == self.d_s
            && e.sequence.nrows() == self.k
            && e.sequence.ncols() == self.d_g
            && e.valid_mask.len() == self.l;
        if !ok {
            return Err(Error::shape(format!(
                "prompt embedding {}x{} / {}x{} does not match condition dims L={} D_s={} K={} D_g={}",
                e.sentence.nrows(),
                e.sentence.ncols(),
                e.sequence.nrows(),
                e.sequence.ncols(),
                self.l,
                self.d_s,
                self.k,
                self.d_g
            )));
        }
        Ok(())
    }
}

/// Cross-attention maps recorded at every site for one forward call.
/// Each map is (spatial queries) x (L + K condition tokens); rows are
/// stochastic with padding columns exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    pub maps: Vec<Array2<f64>>,
}

impl AttentionMaps {
    pub fn num_sites(&self) -> usize {
        self.maps.len()
    }

    /// Verify row-stochasticity within `tol` and entries in [0, 1].
    pub fn check_row_stochastic(&self, tol: f64) -> Result<()> {
        for (s, m) in self.maps.iter().enumerate() {
            for (r, row) in m.outer_iter().enumerate() {
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > tol {
                    return Err(Error::Numeric {
                        timestep: 0,
                        detail: format!("site {s} row {r} sums to {sum}"),
                    });
                }
                if row.iter().any(|&v| !(0.0..=1.0 + tol).contains(&v)) {
                    return Err(Error::Numeric {
                        timestep: 0,
                        detail: format!("site {s} row {r} has entries outside [0, 1]"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Projection set for one standalone cross-attention evaluation.
pub struct CrossAttentionWeights {
    pub w_q: Array2<f64>,
    pub w_k_sentence: Array2<f64>,
    pub w_k_sequence: Array2<f64>,
    pub w_v_sentence: Array2<f64>,
    pub w_v_sequence: Array2<f64>,
    pub heads: usize,
}

/// Multi-head cross-attention over the two prompt branches:
/// M = row-softmax(QK^T / sqrt(d_head)) with padding masked, output
/// = M.V (heads concatenated). Returns the output and the head-mean
/// map.
pub fn cross_attention(
    features: &Array2<f64>,
    e: &PromptEmbedding,
    weights: &CrossAttentionWeights,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = weights.w_q.ncols();
    if weights.heads == 0 || d % weights.heads != 0 {
        return Err(Error::parameter("head count must divide attention width"));
    }
    if features.ncols() != weights.w_q.nrows() {
        return Err(Error::shape("query projection does not match feature width"));
    }
    for (name, w, rows) in [
        ("sentence key", &weights.w_k_sentence, e.sentence.ncols()),
        ("sentence value", &weights.w_v_sentence, e.sentence.ncols()),
        ("sequence key", &weights.w_k_sequence, e.sequence.ncols()),
        ("sequence value", &weights.w_v_sequence, e.sequence.ncols()),
    ] {
        if w.ncols() != d || (rows > 0 && w.nrows() != rows) {
            return Err(Error::shape(format!("{name} projection shape {:?}", w.shape())));
        }
    }
    let mut g = Graph::new();
    let x = g.constant(features.clone().into_dyn());
    let wq = g.constant(weights.w_q.clone().into_dyn());
    let sent = g.constant(e.sentence.clone().into_dyn());
    let seq = g.constant(e.sequence.clone().into_dyn());
    let wks = g.constant(weights.w_k_sentence.clone().into_dyn());
    let wkg = g.constant(weights.w_k_sequence.clone().into_dyn());
    let wvs = g.constant(weights.w_v_sentence.clone().into_dyn());
    let wvg = g.constant(weights.w_v_sequence.clone().into_dyn());
    let mask = condition_mask(e);
    let (out, map) = attention_core(
        &mut g,
        x,
        wq,
        BranchIds { sent, seq, wks, wkg, wvs, wvg, k_rows: e.sequence.nrows() },
        mask,
        weights.heads,
    );
    let out = to2(g.value(out));
    let map = to2(g.value(map));
    Ok((out, map))
}

fn condition_mask(e: &PromptEmbedding) -> Arc<Vec<bool>> {
    let mut mask = e.valid_mask.clone();
    mask.extend(std::iter::repeat(true).take(e.sequence.nrows()));
    Arc::new(mask)
}

struct BranchIds {
    sent: Id,
    seq: Id,
    wks: Id,
    wkg: Id,
    wvs: Id,
    wvg: Id,
    k_rows: usize,
}

/// Shared attention computation: queries from `x` via `wq`, keys and
/// values from both condition branches, masked row softmax per head.
/// Returns (concatenated head outputs [N, d], head-mean map).
fn attention_core(
    g: &mut Graph,
    x: Id,
    wq: Id,
    branches: BranchIds,
    mask: Arc<Vec<bool>>,
    heads: usize,
) -> (Id, Id) {
    let q = g.matmul(x, wq);
    let ks = g.matmul(branches.sent, branches.wks);
    let vs = g.matmul(branches.sent, branches.wvs);
    let (k, v) = if branches.k_rows > 0 {
        let kg = g.matmul(branches.seq, branches.wkg);
        let vg = g.matmul(branches.seq, branches.wvg);
        (g.concat_rows(ks, kg), g.concat_rows(vs, vg))
    } else {
        (ks, vs)
    };
    let d = g.value(q).shape()[1];
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut map_sum: Option<Id> = None;
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dh, dh);
        let kh = g.slice_cols(k, h * dh, dh);
        let vh = g.slice_cols(v, h * dh, dh);
        let scores = g.matmul_nt(qh, kh);
        let scaled = g.scale(scores, scale);
        let m = g.softmax_rows_masked(scaled, Arc::clone(&mask));
        let oh = g.matmul(m, vh);
        outs.push(oh);
        map_sum = Some(match map_sum {
            Some(acc) => g.add(acc, m),
            None => m,
        });
    }
    let mut out = outs[0];
    for &oh in &outs[1..] {
        out = g.concat_cols(out, oh);
    }
    let map = g.scale(map_sum.expect("at least one head"), 1.0 / heads as f64);
    (out, map)
}

/// The noise predictor. Weights are named tensors; the same map backs
/// prediction, z-gradients, and training.
pub struct Denoiser {
    config: DenoiserConfig,
    cond: CondDims,
    weights: BTreeMap<String, Arc<ArrayD<f64>>>,
}

/// One recorded forward computation. `z` is the input leaf (marked
/// for gradients when requested), `maps` are the per-site head-mean
/// attention map nodes in site order.
pub struct ForwardPass {
    pub graph: Graph,
    pub z: Id,
    pub eps: Id,
    pub maps: Vec<Id>,
}

impl Denoiser {
    /// Freshly initialized weights: small-uniform projections scaled
    /// by fan-in, zero-initialized output conv.
    pub fn init(config: DenoiserConfig, cond: CondDims, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = BTreeMap::new();
        for (name, shape) in Self::expected_shapes(&config, &cond) {
            let n = shape.iter().product::<usize>();
            let value = if name == "out.w" || name == "out.b" {
                ArrayD::zeros(IxDyn(&shape))
            } else if name.ends_with(".b") || name.ends_with(".bo") || name.ends_with(".beta") {
                ArrayD::zeros(IxDyn(&shape))
            } else if name.ends_with(".gamma") {
                ArrayD::from_elem(IxDyn(&shape), 1.0)
            } else {
                let fan_in = if shape.len() >= 2 {
                    shape[1..].iter().product::<usize>().max(1)
                } else {
                    n.max(1)
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                ArrayD::from_shape_fn(IxDyn(&shape), |_| rng.gen_range(-bound..bound))
            };
            weights.insert(name, Arc::new(value));
        }
        Ok(Denoiser {
            config,
            cond,
            weights,
        })
    }

    /// Reconstruct from a checkpoint's named tensors; missing or
    /// misshapen entries are state errors.
    pub fn from_weights(
        config: DenoiserConfig,
        cond: CondDims,
        weights: BTreeMap<String, Arc<ArrayD<f64>>>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = Self::expected_shapes(&config, &cond);
        for (name, shape) in &expected {
            match weights.get(name) {
                None => {
                    return Err(Error::State(format!("checkpoint is missing tensor {name:?}")))
                }
                Some(w) if w.shape() != &shape[..] => {
                    return Err(Error::State(format!(
                        "tensor {name:?} has shape {:?}, expected {:?}",
                        w.shape(),
                        shape
                    )))
                }
                Some(_) => {}
            }
        }
        if weights.len() != expected.len() {
            let known: std::collections::BTreeSet<_> =
                expected.iter().map(|(n, _)| n.clone()).collect();
            let extra: Vec<_> = weights.keys().filter(|k| !known.contains(*k)).collect();
            return Err(Error::State(format!("checkpoint has unknown tensors {extra:?}")));
        }
        Ok(Denoiser {
            config,
            cond,
            weights,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn cond_dims(&self) -> &CondDims {
        &self.cond
    }

    pub fn weights(&self) -> &BTreeMap<String, Arc<ArrayD<f64>>> {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut BTreeMap<String, Arc<ArrayD<f64>>> {
        &mut self.weights
    }

    /// Every tensor name and shape for this configuration, in
    /// deterministic order.
    pub fn expected_shapes(
        config: &DenoiserConfig,
        cond: &CondDims,
    ) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let te = config.time_embed_dim;
        let stages = &config.stage_channels;
        let n = stages.len();
        let d = config.attention_width;
        out.push(("temb.w1".into(), vec![te, te]));
        out.push(("temb.b1".into(), vec![te]));
        out.push(("temb.w2".into(), vec![te, te]));
        out.push(("temb.b2".into(), vec![te]));
        out.push((
            "stem.w".into(),
            vec![stages[0], config.in_channels, 3, 3],
        ));
        out.push(("stem.b".into(), vec![stages[0]]));
        let site = |out: &mut Vec<(String, Vec<usize>)>, s: usize, c: usize| {
            out.push((format!("site{s}.ln.gamma"), vec![c]));
            out.push((format!("site{s}.ln.beta"), vec![c]));
            out.push((format!("site{s}.wq"), vec![c, d]));
            out.push((format!("site{s}.wks"), vec![cond.d_s, d]));
            out.push((format!("site{s}.wkg"), vec![cond.d_g, d]));
            out.push((format!("site{s}.wvs"), vec![cond.d_s, d]));
            out.push((format!("site{s}.wvg"), vec![cond.d_g, d]));
            out.push((format!("site{s}.wo"), vec![d, c]));
            out.push((format!("site{s}.bo"), vec![c]));
        };
        let mut s = 0usize;
        for i in 0..n {
            let c = stages[i];
            out.push((format!("enc{i}.conv.w"), vec![c, c, 3, 3]));
            out.push((format!("enc{i}.conv.b"), vec![c]));
            out.push((format!("enc{i}.tproj.w"), vec![te, c]));
            out.push((format!("enc{i}.tproj.b"), vec![c]));
            site(&mut out, s, c);
            s += 1;
            let c_next = if i + 1 < n { stages[i + 1] } else { stages[i] };
            out.push((format!("down{i}.w"), vec![c_next, c, 3, 3]));
            out.push((format!("down{i}.b"), vec![c_next]));
        }
        let cm = stages[n - 1];
        out.push(("mid.conv.w".into(), vec![cm, cm, 3, 3]));
        out.push(("mid.conv.b".into(), vec![cm]));
        out.push(("mid.tproj.w".into(), vec![te, cm]));
        out.push(("mid.tproj.b".into(), vec![cm]));
        site(&mut out, s, cm);
        s += 1;
        for i in (0..n).rev() {
            let c = stages[i];
            let c_in = if i + 1 < n { stages[i + 1] } else { stages[n - 1] };
            out.push((format!("dec{i}.up.w"), vec![c, c_in, 1, 1]));
            out.push((format!("dec{i}.up.b"), vec![c]));
            out.push((format!("dec{i}.conv.w"), vec![c, c, 3, 3]));
            out.push((format!("dec{i}.conv.b"), vec![c]));
            out.push((format!("dec{i}.tproj.w"), vec![te, c]));
            out.push((format!("dec{i}.tproj.b"), vec![c]));
            site(&mut out, s, c);
            s += 1;
        }
        out.push((
            "out.w".into(),
            vec![config.in_channels, stages[0], 3, 3],
        ));
        out.push(("out.b".into(), vec![config.in_channels]));
        out
    }

    pub(crate) fn bind(
        &self,
        g: &mut Graph,
        needs_grad: bool,
    ) -> BTreeMap<String, Id> {
        self.weights
            .iter()
            .map(|(name, w)| (name.clone(), g.leaf_shared(Arc::clone(w), needs_grad)))
            .collect()
    }

    /// Build the full forward computation in `g`. Returns the noise
    /// prediction node and the per-site map nodes.
    pub(crate) fn forward_graph(
        &self,
        g: &mut Graph,
        ids: &BTreeMap<String, Id>,
        z: Id,
        t: usize,
        e: &PromptEmbedding,
    ) -> (Id, Vec<Id>) {
        let id = |name: &str| *ids.get(name).unwrap_or_else(|| panic!("weight {name}"));
        let config = &self.config;
        let stages = &config.stage_channels;
        let n = stages.len();
        let mask = condition_mask(e);
        let sent = g.constant(e.sentence.clone().into_dyn());
        let seq = g.constant(e.sequence.clone().into_dyn());
        let k_rows = e.sequence.nrows();

        // timestep embedding MLP
        let sin = g.constant(sinusoidal_embedding(t, config.time_embed_dim).into_dyn());
        let h1 = g.matmul(sin, id("temb.w1"));
        let h1b = g.add_row_vec(h1, id("temb.b1"));
        let h1s = g.silu(h1b);
        let h2 = g.matmul(h1s, id("temb.w2"));
        let temb = g.add_row_vec(h2, id("temb.b2"));

        let tbias = |g: &mut Graph, x: Id, prefix: &str| {
            let p = g.matmul(temb, id(&format!("{prefix}.tproj.w")));
            let pb = g.add_row_vec(p, id(&format!("{prefix}.tproj.b")));
            g.add_channel_bias(x, pb)
        };
        let site_block = |g: &mut Graph, x: Id, s: usize, h: usize, w: usize| -> (Id, Id) {
            let tokens = g.to_tokens(x);
            let normed = g.layer_norm_rows(
                tokens,
                id(&format!("site{s}.ln.gamma")),
                id(&format!("site{s}.ln.beta")),
            );
            let (att, map) = attention_core(
                g,
                normed,
                id(&format!("site{s}.wq")),
                BranchIds {
                    sent,
                    seq,
                    wks: id(&format!("site{s}.wks")),
                    wkg: id(&format!("site{s}.wkg")),
                    wvs: id(&format!("site{s}.wvs")),
                    wvg: id(&format!("site{s}.wvg")),
                    k_rows,
                },
                Arc::clone(&mask),
                self.config.heads,
            );
            let proj = g.matmul(att, id(&format!("site{s}.wo")));
            let projb = g.add_row_vec(proj, id(&format!("site{s}.bo")));
            let res = g.add(tokens, projb);
            (g.from_tokens(res, h, w), map)
        };

        let (mut hh, mut ww) = (config.latent_bins, config.latent_frames);
        let mut maps = Vec::with_capacity(config.num_sites());
        let mut site_idx = 0usize;

        let mut x = g.conv2d(z, id("stem.w"), id("stem.b"), 1, 1);
        let mut skips = Vec::with_capacity(n);
        for i in 0..n {
            let c = g.conv2d(x, id(&format!("enc{i}.conv.w")), id(&format!("enc{i}.conv.b")), 1, 1);
            let ct = tbias(g, c, &format!("enc{i}"));
            let act = g.silu(ct);
            let (with_attn, map) = site_block(g, act, site_idx, hh, ww);
            maps.push(map);
            site_idx += 1;
            skips.push(with_attn);
            x = g.conv2d(
                with_attn,
                id(&format!("down{i}.w")),
                id(&format!("down{i}.b")),
                2,
                1,
            );
            hh /= 2;
            ww /= 2;
        }

        let m = g.conv2d(x, id("mid.conv.w"), id("mid.conv.b"), 1, 1);
        let mt = tbias(g, m, "mid");
        let ms = g.silu(mt);
        let (mid_out, map) = site_block(g, ms, site_idx, hh, ww);
        maps.push(map);
        site_idx += 1;
        x = mid_out;

        for i in (0..n).rev() {
            let up = g.upsample2x(x);
            hh *= 2;
            ww *= 2;
            let proj = g.conv2d(up, id(&format!("dec{i}.up.w")), id(&format!("dec{i}.up.b")), 1, 0);
            let fused = g.add(proj, skips[i]);
            let c = g.conv2d(
                fused,
                id(&format!("dec{i}.conv.w")),
                id(&format!("dec{i}.conv.b")),
                1,
                1,
            );
            let ct = tbias(g, c, &format!("dec{i}"));
            let act = g.silu(ct);
            let (with_attn, map) = site_block(g, act, site_idx, hh, ww);
            maps.push(map);
            site_idx += 1;
            x = with_attn;
        }

        let eps = g.conv2d(x, id("out.w"), id("out.b"), 1, 1);
        (eps, maps)
    }

    /// Record a forward computation; set `z_needs_grad` to
    /// differentiate losses over the maps or the prediction with
    /// respect to the input latent.
    pub fn forward_pass(
        &self,
        z: &Array3<f64>,
        t: usize,
        e: &PromptEmbedding,
        z_needs_grad: bool,
    ) -> Result<ForwardPass> {
        if z.dim() != self.config.latent_shape() {
            return Err(Error::shape(format!(
                "latent {:?} does not match config {:?}",
                z.dim(),
                self.config.latent_shape()
            )));
        }
        if t == 0 {
            return Err(Error::parameter("timestep must be >= 1"));
        }
        self.cond.check(e)?;
        let mut graph = Graph::new();
        let ids = self.bind(&mut graph, false);
        let z_id = graph.leaf(z.clone().into_dyn(), z_needs_grad);
        let (eps, maps) = self.forward_graph(&mut graph, &ids, z_id, t, e);
        Ok(ForwardPass {
            graph,
            z: z_id,
            eps,
            maps,
        })
    }

    /// Predict the noise in `z_t`; optionally capture every site's
    /// attention map. Capture never alters the prediction.
    pub fn predict_noise(
        &self,
        z_t: &Array3<f64>,
        t: usize,
        e: &PromptEmbedding,
        capture: bool,
    ) -> Result<(Array3<f64>, Option<AttentionMaps>)> {
        let pass = self.forward_pass(z_t, t, e, false)?;
        let eps = to3(pass.graph.value(pass.eps));
        let maps = if capture {
            Some(AttentionMaps {
                maps: pass.maps.iter().map(|&m| to2(pass.graph.value(m))).collect(),
            })
        } else {
            None
        };
        Ok((eps, maps))
    }
}

/// Standard sinusoidal embedding of an integer timestep, returned as
/// a 1 x dim row.
fn sinusoidal_embedding(t: usize, dim: usize) -> Array2<f64> {
    let half = dim / 2;
    let mut out = Array2::<f64>::zeros((1, dim));
    for i in 0..half {
        let exponent = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let freq = (10_000f64).powf(-exponent);
        out[[0, 2 * i]] = (t as f64 * freq).sin();
        out[[0, 2 * i + 1]] = (t as f64 * freq).cos();
    }
    out
}

fn to2(a: &ArrayD<f64>) -> Array2<f64> {
    a.view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("rank-2 value")
        .to_owned()
}

fn to3(a: &ArrayD<f64>) -> Array3<f64> {
    a.view()
        .into_dimensionality::<ndarray::Ix3>()
        .expect("rank-3 value")
        .to_owned()
}
