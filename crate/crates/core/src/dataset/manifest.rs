//! Dataset generation and the JSONL manifest / PGM on-disk format.

use std::collections::HashSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use super::{disease_from_concepts, plant_concepts, ConceptId, ConceptSet, DiseaseLabel, Image, Sample, Split};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: u32,
    pub calib: u32,
    pub test: u32,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> u32 {
        match split {
            Split::Train => self.train,
            Split::Calib => self.calib,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> u32 {
        self.train + self.calib + self.test
    }
}

fn default_sigma() -> f64 {
    8.0
}
fn default_prior() -> f64 {
    0.25
}
fn default_side() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n_per_split: SplitCounts,
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// Independent inclusion probability applied to every concept.
    #[serde(default = "default_prior")]
    pub concept_prior: f64,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
}

impl GenConfig {
    pub fn new(n_per_split: SplitCounts, seed: u64) -> Self {
        Self {
            n_per_split,
            seed,
            noise_sigma: default_sigma(),
            concept_prior: default_prior(),
            width: default_side(),
            height: default_side(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.concept_prior) {
            return Err(Error::Config(format!(
                "concept_prior must lie in [0, 1], got {}",
                self.concept_prior
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be a finite value >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.width < super::MIN_SIDE || self.height < super::MIN_SIDE {
            return Err(Error::Config(format!(
                "image size {}x{} is below {}x{}",
                self.width,
                self.height,
                super::MIN_SIDE,
                super::MIN_SIDE
            )));
        }
        Ok(())
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub image_path: String,
    pub split: Split,
    pub gold_concepts: ConceptSet,
    pub gold_disease: DiseaseLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// Encode as binary PGM (`P5`, maxval 255).
pub fn write_pgm(image: &Image, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            image.pixels(),
            image.width() as u32,
            image.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| Error::Image(e.to_string()))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load(Cursor::new(bytes), ImageFormat::Pnm)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = decoded.dimensions();
    Image::new(w as usize, h as usize, decoded.into_raw())
}

/// Draw every split in memory, in train, calib, test order.
///
/// Each sample draws from its own stream keyed by `(seed, sample_id)`, so
/// output does not depend on generation order.
pub fn generate_samples(config: &GenConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    let mut samples = Vec::with_capacity(config.n_per_split.total() as usize);
    for split in Split::ALL {
        for index in 0..config.n_per_split.get(split) {
            let sample_id = format!("{}-{index:05}", split.as_str());
            let mut rng = SplitMix64::for_purpose(config.seed, &sample_id);
            let concepts: ConceptSet = ConceptId::ALL
                .into_iter()
                .filter(|_| rng.bernoulli(config.concept_prior))
                .collect();
            let image_seed = rng.next();
            let image = plant_concepts(
                config.width,
                config.height,
                concepts,
                image_seed,
                config.noise_sigma,
            )?;
            samples.push(Sample {
                sample_id,
                split,
                image,
                gold_concepts: concepts,
                gold_disease: disease_from_concepts(concepts),
            });
        }
    }
    Ok(samples)
}

/// Generate every split into `out_dir` and write the manifest.
pub fn generate_dataset(config: &GenConfig, out_dir: &Path) -> Result<Manifest> {
    let samples = generate_samples(config)?;
    let image_dir = out_dir.join(IMAGE_DIR);
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;

    let mut entries = Vec::with_capacity(samples.len());
    let mut lines = String::new();
    for sample in samples {
        let rel = format!("{IMAGE_DIR}/{}.pgm", sample.sample_id);
        write_pgm(&sample.image, &out_dir.join(&rel))?;
        let entry = ManifestEntry {
            sample_id: sample.sample_id,
            image_path: rel,
            split: sample.split,
            gold_concepts: sample.gold_concepts,
            gold_disease: sample.gold_disease,
        };
        lines.push_str(&serde_json::to_string(&entry)?);
        lines.push('\n');
        entries.push(entry);
    }
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
    Ok(Manifest { path, entries })
}

/// Load samples in file order, re-checking rule-table consistency.
pub fn load_manifest(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(raw).map_err(|e| Error::Manifest {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(entry.sample_id.clone()) {
            return Err(Error::Manifest {
                line,
                message: format!("duplicate sample_id {}", entry.sample_id),
            });
        }
        let expected = disease_from_concepts(entry.gold_concepts);
        if expected != entry.gold_disease {
            return Err(Error::RuleInconsistency {
                sample_id: entry.sample_id,
                recorded: entry.gold_disease.to_string(),
                expected: expected.to_string(),
            });
        }
        let image_path = base.join(&entry.image_path);
        if !image_path.is_file() {
            return Err(Error::Manifest {
                line,
                message: format!("image file not found: {}", image_path.display()),
            });
        }
        let image = read_pgm(&image_path)?;
        samples.push(Sample {
            sample_id: entry.sample_id,
            split: entry.split,
            image,
            gold_concepts: entry.gold_concepts,
            gold_disease: entry.gold_disease,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GenConfig {
        GenConfig::new(
            SplitCounts {
                train: 8,
                calib: 4,
                test: 4,
            },
            42,
        )
    }

    #[test]
    fn pgm_header_is_binary_graymap() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(16, 16, (0..=255).collect()).unwrap();
        let path = dir.path().join("x.pgm");
        write_pgm(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(&bytes[bytes.len() - 256..], img.pixels());
        assert_eq!(read_pgm(&path).unwrap(), img);
    }

    #[test]
    fn counts_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(&small_config(), dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), 16);
        let pgms = fs::read_dir(dir.path().join(IMAGE_DIR)).unwrap().count();
        assert_eq!(pgms, 16);
        let samples = load_manifest(&manifest.path).unwrap();
        assert_eq!(samples.len(), 16);
        assert_eq!(samples[0].sample_id, "train-00000");
        assert_eq!(samples[15].split, Split::Test);
    }

    #[test]
    fn generation_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_dataset(&small_config(), a.path()).unwrap();
        generate_dataset(&small_config(), b.path()).unwrap();
        let read = |d: &Path, rel: &str| fs::read(d.join(rel)).unwrap();
        assert_eq!(read(a.path(), MANIFEST_FILE), read(b.path(), MANIFEST_FILE));
        for entry in fs::read_dir(a.path().join(IMAGE_DIR)).unwrap() {
            let name = entry.unwrap().file_name();
            let rel = format!("{IMAGE_DIR}/{}", name.to_string_lossy());
            assert_eq!(read(a.path(), &rel), read(b.path(), &rel));
        }
    }

    #[test]
    fn zero_prior_gives_all_normal() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.concept_prior = 0.0;
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        assert!(manifest
            .entries
            .iter()
            .all(|e| e.gold_concepts.is_empty() && e.gold_disease == DiseaseLabel::Normal));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.concept_prior = 1.5;
        assert!(matches!(generate_dataset(&cfg, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn hand_edited_label_is_caught() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(64, 64, 40).unwrap();
        write_pgm(&img, &dir.path().join("a.pgm")).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        fs::write(
            &path,
            r#"{"sample_id":"s1","image_path":"a.pgm","split":"test","gold_concepts":["right_lower_lobe_opacity"],"gold_disease":"normal"}"#,
        )
        .unwrap();
        match load_manifest(&path) {
            Err(Error::RuleInconsistency { sample_id, .. }) => assert_eq!(sample_id, "s1"),
            other => panic!("expected rule inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn empty_manifest_loads_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        fs::write(&path, "").unwrap();
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(64, 64, 40).unwrap();
        write_pgm(&img, &dir.path().join("a.pgm")).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        fs::write(
            &path,
            "{\"sample_id\":\"s1\",\"image_path\":\"a.pgm\",\"split\":\"test\",\"gold_concepts\":[],\"gold_disease\":\"normal\"}\nnot json\n",
        )
        .unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Manifest { line: 2, .. })));
    }

    #[test]
    fn missing_image_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        fs::write(
            &path,
            r#"{"sample_id":"s1","image_path":"nope.pgm","split":"test","gold_concepts":[],"gold_disease":"normal"}"#,
        )
        .unwrap();
        match load_manifest(&path) {
            Err(Error::Manifest { line: 1, message }) => assert!(message.contains("nope.pgm")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
