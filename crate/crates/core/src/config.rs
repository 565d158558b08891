//! Run configuration: one JSON file with a section per stage, dotted-path
//! overrides, and a fingerprint that is embedded in every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::alignment::AlignConfig;
use crate::backend::{build_backend, Backend, BackendConfig};
use crate::concepts::{MlcHyper, Vocabulary};
use crate::cot::{ablation_preset, ablation_presets, AblationConfig, PromptTemplates};
use crate::dataset::{GenConfig, SplitCounts, MANIFEST_FILE};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::pipeline::RecognizerKind;
use crate::rng::derive_seed;

/// JSON schema describing [`RunConfig`], shipped for external tooling.
pub const RUN_CONFIG_SCHEMA: &str = include_str!("../schema/run_config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every PRNG stream in a run is derived from this value.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub encoder: EncoderConfig,
    pub recognizer: RecognizerSection,
    pub align: AlignConfig,
    pub prompt: PromptSection,
    pub ablation: AblationSection,
    pub backend: BackendConfig,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("runs/default"),
            dataset: DatasetSection::default(),
            encoder: EncoderConfig::default(),
            recognizer: RecognizerSection::default(),
            align: AlignConfig::default(),
            prompt: PromptSection::default(),
            ablation: AblationSection::default(),
            backend: BackendConfig::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Where the manifest lives; `<output_dir>/dataset` when absent.
    pub dir: Option<PathBuf>,
    pub n_per_split: SplitCounts,
    pub noise_sigma: f64,
    pub concept_prior: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let g = GenConfig::new(
            SplitCounts {
                train: 500,
                calib: 100,
                test: 200,
            },
            0,
        );
        Self {
            dir: None,
            n_per_split: g.n_per_split,
            noise_sigma: g.noise_sigma,
            concept_prior: g.concept_prior,
            width: g.width,
            height: g.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerSection {
    pub variant: RecognizerKind,
    pub mlc: MlcSection,
    pub exemplars_per_concept: usize,
    /// Defaults to `<output_dir>/artifacts/mlc_head.json`.
    pub mlc_head_path: Option<PathBuf>,
    /// Defaults to `<output_dir>/artifacts/prototypes.json`.
    pub prototypes_path: Option<PathBuf>,
}

impl Default for RecognizerSection {
    fn default() -> Self {
        Self {
            variant: RecognizerKind::Mlc,
            mlc: MlcSection::default(),
            exemplars_per_concept: 16,
            mlc_head_path: None,
            prototypes_path: None,
        }
    }
}

/// MLC hyperparameters minus the seed, which comes from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlcSection {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub threshold: f64,
}

impl Default for MlcSection {
    fn default() -> Self {
        let h = MlcHyper::default();
        Self {
            lr: h.lr,
            epochs: h.epochs,
            l2: h.l2,
            threshold: h.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub templates_path: Option<PathBuf>,
    pub vocabulary_path: Option<PathBuf>,
    pub include_digest: bool,
}

impl Default for PromptSection {
    fn default() -> Self {
        Self {
            templates_path: None,
            vocabulary_path: None,
            include_digest: true,
        }
    }
}

/// A named preset, optionally with individual flags overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub preset: String,
    pub use_cot: Option<bool>,
    pub use_cvis: Option<bool>,
    pub use_fimg: Option<bool>,
    pub use_pmed: Option<bool>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            preset: "full".into(),
            use_cot: None,
            use_cvis: None,
            use_fimg: None,
            use_pmed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Falls back to the backend's preference when absent.
    pub lenient_severity: Option<bool>,
}

/// Parse `key=value`, where value is JSON if it parses and a bare string
/// otherwise.
fn parse_override(arg: &str) -> Result<(Vec<&str>, Value)> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {arg:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override {arg:?} has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

/// Set a leaf inside `root`, creating intermediate objects as needed.
pub fn apply_override(root: &mut Value, arg: &str) -> Result<()> {
    let (path, value) = parse_override(arg)?;
    let mut node = root;
    for (i, seg) in path.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            _ => {
                return Err(Error::Config(format!(
                    "override {arg:?}: {} is not an object",
                    path[..i].join(".")
                )))
            }
        };
        if i + 1 == path.len() {
            obj.insert(seg.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(seg.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("override path has at least one segment")
}

impl RunConfig {
    /// Build from a JSON document plus overrides, then validate.
    pub fn from_value(mut value: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(value, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen_config().validate()?;
        if self.align.d_a == 0 {
            return Err(Error::Config("align.d_a must be >= 1".into()));
        }
        if self.recognizer.exemplars_per_concept == 0 {
            return Err(Error::Config(
                "recognizer.exemplars_per_concept must be >= 1".into(),
            ));
        }
        let m = &self.recognizer.mlc;
        if !(m.lr > 0.0 && m.lr.is_finite()) || !(m.l2 >= 0.0 && m.l2.is_finite()) {
            return Err(Error::Config("recognizer.mlc lr must be > 0 and l2 >= 0".into()));
        }
        if !(m.threshold > 0.0 && m.threshold < 1.0) {
            return Err(Error::Config("recognizer.mlc.threshold must lie in (0, 1)".into()));
        }
        self.ablation()?;
        self.backend
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// sha256 over the normalized config without `output_dir`, 16 hex chars.
    /// Two runs that differ only in where they write share a fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn gen_config(&self) -> GenConfig {
        let d = &self.dataset;
        GenConfig {
            n_per_split: d.n_per_split,
            seed: derive_seed(self.seed, "dataset"),
            noise_sigma: d.noise_sigma,
            concept_prior: d.concept_prior,
            width: d.width,
            height: d.height,
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset
            .dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("dataset"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dataset_dir().join(MANIFEST_FILE)
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.output_dir.join("artifacts")
    }

    pub fn mlc_head_path(&self) -> PathBuf {
        self.recognizer
            .mlc_head_path
            .clone()
            .unwrap_or_else(|| self.artifacts_dir().join("mlc_head.json"))
    }

    pub fn prototypes_path(&self) -> PathBuf {
        self.recognizer
            .prototypes_path
            .clone()
            .unwrap_or_else(|| self.artifacts_dir().join("prototypes.json"))
    }

    pub fn mlc_hyper(&self) -> MlcHyper {
        let m = self.recognizer.mlc;
        MlcHyper {
            lr: m.lr,
            epochs: m.epochs,
            l2: m.l2,
            seed: derive_seed(self.seed, "mlc"),
            threshold: m.threshold,
        }
    }

    pub fn prototype_seed(&self) -> u64 {
        derive_seed(self.seed, "prototypes")
    }

    pub fn align_seed(&self) -> u64 {
        self.align
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, "align"))
    }

    pub fn build_encoder(&self) -> Box<dyn Encoder> {
        self.encoder.build(self.seed)
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>> {
        build_backend(&self.backend, derive_seed(self.seed, "backoff"))
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn ablation(&self) -> Result<AblationConfig> {
        let a = &self.ablation;
        let mut flags = ablation_preset(&a.preset).ok_or_else(|| {
            let names: Vec<_> = ablation_presets().into_iter().map(|(n, _)| n).collect();
            Error::Config(format!(
                "unknown ablation preset {:?}; expected one of {names:?}",
                a.preset
            ))
        })?;
        if let Some(v) = a.use_cot {
            flags.use_cot = v;
        }
        if let Some(v) = a.use_cvis {
            flags.use_cvis = v;
        }
        if let Some(v) = a.use_fimg {
            flags.use_fimg = v;
        }
        if let Some(v) = a.use_pmed {
            flags.use_pmed = v;
        }
        Ok(flags)
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        match &self.prompt.vocabulary_path {
            Some(p) => Vocabulary::load(p),
            None => Ok(Vocabulary::default()),
        }
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        match &self.prompt.templates_path {
            Some(p) => PromptTemplates::load(p),
            None => Ok(PromptTemplates::default()),
        }
    }
}
