//! A frozen, seeded-random vision transformer at toy scale.
//!
//! Patches of 8x8 pixels are scaled to `[0, 1]`, projected to `d_model`,
//! offset by fixed sinusoidal position codes, passed through pre-norm
//! transformer layers (multi-head softmax attention, tanh-approximate GELU
//! MLP), layer-normed and mean-pooled over positions.

use ndarray::{s, Array1, Array2, Axis};

use super::{make_tag, Encoder, VisualEmbedding};
use crate::dataset::Image;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const INIT_RANGE: f64 = 0.05;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VitConfig {
    pub patch_size: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
}

impl Default for VitConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            d_model: 32,
            layers: 2,
            heads: 4,
        }
    }
}

impl VitConfig {
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub o: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn: AttentionWeights,
    pub mlp_in: Array2<f64>,
    pub mlp_out: Array2<f64>,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VitWeights {
    pub config: VitConfig,
    pub seed: u64,
    pub patch_projection: Array2<f64>,
    pub layers: Vec<LayerWeights>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
}

fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform(-INIT_RANGE, INIT_RANGE))
}

/// Fill every matrix from SplitMix64 in a fixed order: patch projection,
/// then per layer Q, K, V, O, MLP-in, MLP-out.
pub fn init_vit_weights(seed: u64) -> VitWeights {
    let config = VitConfig::default();
    let d = config.d_model;
    let mut rng = SplitMix64::for_purpose(seed, "vit-weights");
    let patch_projection = random_matrix(&mut rng, config.patch_dim(), d);
    let layers = (0..config.layers)
        .map(|_| LayerWeights {
            attn: AttentionWeights {
                q: random_matrix(&mut rng, d, d),
                k: random_matrix(&mut rng, d, d),
                v: random_matrix(&mut rng, d, d),
                o: random_matrix(&mut rng, d, d),
            },
            mlp_in: random_matrix(&mut rng, d, 4 * d),
            mlp_out: random_matrix(&mut rng, 4 * d, d),
            ln1_gain: Array1::ones(d),
            ln1_bias: Array1::zeros(d),
            ln2_gain: Array1::ones(d),
            ln2_bias: Array1::zeros(d),
        })
        .collect();
    VitWeights {
        config,
        seed,
        patch_projection,
        layers,
        final_gain: Array1::ones(d),
        final_bias: Array1::zeros(d),
    }
}

/// `pe[pos, 2i] = sin(pos / 10000^(2i/d))`, `pe[pos, 2i+1] = cos(...)`.
pub fn sinusoidal_positions(count: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((count, d), |(pos, j)| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

pub fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gain[j] + bias[j];
        }
    }
    out
}

pub fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

/// Multi-head scaled dot-product self-attention. Returns the output tokens
/// (after the output projection) and one attention matrix per head.
pub fn self_attention(
    x: &Array2<f64>,
    weights: &AttentionWeights,
    heads: usize,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let (n, d) = x.dim();
    let hd = d / heads;
    let q = x.dot(&weights.q);
    let k = x.dot(&weights.k);
    let v = x.dot(&weights.v);
    let scale = 1.0 / (hd as f64).sqrt();
    let mut concat = Array2::zeros((n, d));
    let mut maps = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut scores);
        concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        maps.push(scores);
    }
    (concat.dot(&weights.o), maps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VitOptions {
    /// Disable to test permutation equivariance.
    pub positional_encoding: bool,
}

impl Default for VitOptions {
    fn default() -> Self {
        Self {
            positional_encoding: true,
        }
    }
}

/// Intermediate values from one forward pass.
#[derive(Debug, Clone)]
pub struct VitTrace {
    /// Token matrix after the embedding and after each layer.
    pub tokens: Vec<Array2<f64>>,
    /// `attention[layer][head]`, each `patches x patches`.
    pub attention: Vec<Vec<Array2<f64>>>,
    pub pooled: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyVitEncoder {
    weights: VitWeights,
    tag: String,
}

impl ToyVitEncoder {
    pub fn new(weights: VitWeights) -> Self {
        let c = weights.config;
        let tag = make_tag(&format!(
            "toy_vit:p{}-d{}-l{}-h{}:sinusoidal:prenorm:gelu:meanpool:seed={}",
            c.patch_size, c.d_model, c.layers, c.heads, weights.seed
        ));
        Self { weights, tag }
    }

    pub fn weights(&self) -> &VitWeights {
        &self.weights
    }

    fn patchify(&self, image: &Image) -> Result<Array2<f64>> {
        let p = self.weights.config.patch_size;
        let (w, h) = (image.width(), image.height());
        if w % p != 0 || h % p != 0 {
            return Err(Error::Image(format!("{w}x{h} is not divisible into {p}x{p} patches")));
        }
        let (gx, gy) = (w / p, h / p);
        Ok(Array2::from_shape_fn((gx * gy, p * p), |(patch, j)| {
            let (px, py) = (patch % gx, patch / gx);
            let (dx, dy) = (j % p, j / p);
            image.get(px * p + dx, py * p + dy) as f64 / 255.0
        }))
    }

    pub fn forward(&self, image: &Image, options: VitOptions) -> Result<VitTrace> {
        let wts = &self.weights;
        let c = wts.config;
        if wts.patch_projection.dim() != (c.patch_dim(), c.d_model) {
            return Err(Error::Dimension {
                expected: c.patch_dim(),
                actual: wts.patch_projection.nrows(),
            });
        }
        let patches = self.patchify(image)?;
        let mut x = patches.dot(&wts.patch_projection);
        if options.positional_encoding {
            x += &sinusoidal_positions(x.nrows(), c.d_model);
        }
        let mut tokens = vec![x.clone()];
        let mut attention = Vec::with_capacity(wts.layers.len());
        for layer in &wts.layers {
            let normed = layer_norm(&x, &layer.ln1_gain, &layer.ln1_bias);
            let (attn_out, maps) = self_attention(&normed, &layer.attn, c.heads);
            x += &attn_out;
            let normed = layer_norm(&x, &layer.ln2_gain, &layer.ln2_bias);
            let hidden = normed.dot(&layer.mlp_in).mapv(gelu);
            x += &hidden.dot(&layer.mlp_out);
            tokens.push(x.clone());
            attention.push(maps);
        }
        let normed = layer_norm(&x, &wts.final_gain, &wts.final_bias);
        let pooled = normed.mean_axis(Axis(0)).expect("at least one patch");
        Ok(VitTrace {
            tokens,
            attention,
            pooled,
        })
    }
}

impl Encoder for ToyVitEncoder {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn dim(&self) -> usize {
        self.weights.config.d_model
    }

    fn encode(&self, image: &Image) -> Result<VisualEmbedding> {
        let trace = self.forward(image, VitOptions::default())?;
        VisualEmbedding::new(trace.pooled.to_vec(), self.tag.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{plant_concepts, ConceptSet};

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = init_vit_weights(0);
        assert_eq!(a, init_vit_weights(0));
        let b = init_vit_weights(1);
        assert_ne!(a.patch_projection, b.patch_projection);
        let first = a.patch_projection[[0, 0]];
        assert!(a.patch_projection.iter().any(|&v| v != first));
        assert!(a
            .patch_projection
            .iter()
            .all(|v| (-INIT_RANGE..INIT_RANGE).contains(v)));
    }

    #[test]
    fn layer_norm_params_start_at_identity() {
        for seed in [0, 5, 99] {
            let w = init_vit_weights(seed);
            for layer in &w.layers {
                assert!(layer.ln1_gain.iter().chain(&layer.ln2_gain).all(|&g| g == 1.0));
                assert!(layer.ln1_bias.iter().chain(&layer.ln2_bias).all(|&b| b == 0.0));
            }
            assert!(w.final_gain.iter().all(|&g| g == 1.0));
        }
    }

    #[test]
    fn shape_and_finiteness() {
        let enc = ToyVitEncoder::new(init_vit_weights(4));
        let img = plant_concepts(64, 64, ConceptSet::from_bits(0b1010_0101), 2, 8.0).unwrap();
        let emb = enc.encode(&img).unwrap();
        assert_eq!(emb.dim(), 32);
        assert!(emb.values.iter().all(|v| v.is_finite()));
        assert_eq!(emb, enc.encode(&img).unwrap());
    }

    #[test]
    fn attention_rows_are_distributions() {
        let enc = ToyVitEncoder::new(init_vit_weights(9));
        let img = plant_concepts(64, 64, ConceptSet::from_bits(0xff), 1, 8.0).unwrap();
        let trace = enc.forward(&img, VitOptions::default()).unwrap();
        assert_eq!(trace.attention.len(), 2);
        for layer in &trace.attention {
            assert_eq!(layer.len(), 4);
            for map in layer {
                assert_eq!(map.dim(), (64, 64));
                for row in map.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-9);
                    assert!(row.iter().all(|&p| p >= 0.0));
                }
            }
        }
    }

    #[test]
    fn constant_image_without_positions_keeps_tokens_equal() {
        let enc = ToyVitEncoder::new(init_vit_weights(2));
        let img = Image::filled(64, 64, 123).unwrap();
        let trace = enc
            .forward(
                &img,
                VitOptions {
                    positional_encoding: false,
                },
            )
            .unwrap();
        for tokens in &trace.tokens {
            let first = tokens.row(0).to_owned();
            for row in tokens.rows() {
                for (a, b) in row.iter().zip(first.iter()) {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_patch_grid() {
        let enc = ToyVitEncoder::new(init_vit_weights(0));
        assert!(enc.encode(&Image::filled(60, 64, 0).unwrap()).is_err());
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841192).abs() < 1e-6);
        assert!((gelu(-1.0) + 0.158808).abs() < 1e-6);
    }
}
