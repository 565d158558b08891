//! Visual feature extraction: image in, fixed-length embedding out.

mod region;
mod vit;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Image;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub use region::{RegionStatsEncoder, GRID_CELLS, REGION_STATS_DIM};
pub use vit::{
    gelu, init_vit_weights, layer_norm, self_attention, sinusoidal_positions, softmax_rows,
    AttentionWeights, LayerWeights, ToyVitEncoder, VitConfig, VitOptions, VitTrace, VitWeights,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualEmbedding {
    pub values: Vec<f64>,
    pub encoder_tag: String,
}

impl VisualEmbedding {
    pub fn new(values: Vec<f64>, encoder_tag: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("visual embedding"));
        }
        Ok(Self {
            values,
            encoder_tag: encoder_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Anything that maps an image to a [`VisualEmbedding`] of fixed size.
pub trait Encoder: Send + Sync {
    /// Stable identifier of the encoder and its configuration.
    fn tag(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, image: &Image) -> Result<VisualEmbedding>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    RegionStats,
    ToyVit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    #[serde(default)]
    pub kind: EncoderKind,
    /// Weight seed for the toy ViT; derived from the run seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl EncoderConfig {
    pub fn build(&self, run_seed: u64) -> Box<dyn Encoder> {
        match self.kind {
            EncoderKind::RegionStats => Box::new(RegionStatsEncoder::new()),
            EncoderKind::ToyVit => {
                let seed = self.seed.unwrap_or_else(|| derive_seed(run_seed, "encoder.vit"));
                Box::new(ToyVitEncoder::new(init_vit_weights(seed)))
            }
        }
    }
}

/// `"<descriptor>#<8 hex digits of its sha256>"`.
pub(crate) fn make_tag(descriptor: &str) -> String {
    let digest = Sha256::digest(descriptor.as_bytes());
    format!("{descriptor}#{}", &hex::encode(digest)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_rejects_non_finite() {
        assert!(VisualEmbedding::new(vec![1.0, f64::NAN], "t").is_err());
        assert!(VisualEmbedding::new(vec![1.0, f64::INFINITY], "t").is_err());
    }

    #[test]
    fn config_builds_both_kinds() {
        let region = EncoderConfig::default().build(0);
        assert_eq!(region.dim(), 128);
        let vit = EncoderConfig {
            kind: EncoderKind::ToyVit,
            seed: Some(3),
        }
        .build(0);
        assert_eq!(vit.dim(), 32);
        assert!(vit.tag().starts_with("toy_vit"));
        assert_ne!(region.tag(), vit.tag());
    }
}
