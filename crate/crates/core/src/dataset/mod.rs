//! Synthetic concept-annotated chest images with rule-derived diagnoses.
//!
//! Every sample's gold diagnosis is a pure function of its gold concept set
//! (see [`disease_from_concepts`]), so the end-to-end pipeline has a ground
//! truth that can be checked exactly.

mod manifest;
mod plant;

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{
    generate_dataset, generate_samples, load_manifest, read_pgm, write_pgm, GenConfig, Manifest, ManifestEntry,
    SplitCounts, MANIFEST_FILE,
};
pub use plant::{
    concept_footprint, nodule_site_index, plant_concepts, BACKGROUND_INTENSITY, MIN_SIDE, NODULE_RADIUS,
    NODULE_SITES, REFERENCE_SIDE,
};

/// The closed vocabulary of radiological findings, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptId {
    RightLowerLobeOpacity,
    LeftLowerLobeOpacity,
    BilateralPerihilarOpacity,
    IncreasedLungMarkings,
    ElevatedDiaphragm,
    EnlargedCardiacSilhouette,
    BluntedCostophrenicAngle,
    PulmonaryNodule,
}

impl ConceptId {
    pub const ALL: [ConceptId; 8] = [
        ConceptId::RightLowerLobeOpacity,
        ConceptId::LeftLowerLobeOpacity,
        ConceptId::BilateralPerihilarOpacity,
        ConceptId::IncreasedLungMarkings,
        ConceptId::ElevatedDiaphragm,
        ConceptId::EnlargedCardiacSilhouette,
        ConceptId::BluntedCostophrenicAngle,
        ConceptId::PulmonaryNodule,
    ];

    pub const COUNT: usize = Self::ALL.len();

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConceptId::RightLowerLobeOpacity => "right_lower_lobe_opacity",
            ConceptId::LeftLowerLobeOpacity => "left_lower_lobe_opacity",
            ConceptId::BilateralPerihilarOpacity => "bilateral_perihilar_opacity",
            ConceptId::IncreasedLungMarkings => "increased_lung_markings",
            ConceptId::ElevatedDiaphragm => "elevated_diaphragm",
            ConceptId::EnlargedCardiacSilhouette => "enlarged_cardiac_silhouette",
            ConceptId::BluntedCostophrenicAngle => "blunted_costophrenic_angle",
            ConceptId::PulmonaryNodule => "pulmonary_nodule",
        }
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConceptId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConceptId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownConcept(s.to_string()))
    }
}

/// A subset of the concept vocabulary, stored as a bitmask.
///
/// Iteration always follows the canonical concept order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptSet(u8);

impl ConceptSet {
    pub const EMPTY: ConceptSet = ConceptSet(0);

    pub fn from_bits(bits: u8) -> Self {
        ConceptSet(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Every one of the 2^8 subsets, in bitmask order.
    pub fn all_subsets() -> impl Iterator<Item = ConceptSet> {
        (0..=u8::MAX).map(ConceptSet)
    }

    pub fn contains(self, concept: ConceptId) -> bool {
        self.0 & (1 << concept.index()) != 0
    }

    pub fn insert(&mut self, concept: ConceptId) {
        self.0 |= 1 << concept.index();
    }

    pub fn remove(&mut self, concept: ConceptId) {
        self.0 &= !(1 << concept.index());
    }

    pub fn with(mut self, concept: ConceptId) -> Self {
        self.insert(concept);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = ConceptId> {
        ConceptId::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// Indicator vector in canonical order.
    pub fn indicator(self) -> [f64; ConceptId::COUNT] {
        let mut out = [0.0; ConceptId::COUNT];
        for c in self.iter() {
            out[c.index()] = 1.0;
        }
        out
    }
}

impl FromIterator<ConceptId> for ConceptSet {
    fn from_iter<I: IntoIterator<Item = ConceptId>>(iter: I) -> Self {
        let mut set = ConceptSet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl Serialize for ConceptSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for c in self.iter() {
            seq.serialize_element(&c)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ConceptSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<ConceptId>::deserialize(deserializer)?;
        let set: ConceptSet = ids.iter().copied().collect();
        if set.len() != ids.len() {
            return Err(de::Error::custom("duplicate concept in set"));
        }
        Ok(set)
    }
}

/// Single-label diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiseaseLabel {
    CongestiveHeartFailure,
    Pneumonia,
    Cardiomegaly,
    Normal,
}

impl DiseaseLabel {
    pub const ALL: [DiseaseLabel; 4] = [
        DiseaseLabel::CongestiveHeartFailure,
        DiseaseLabel::Pneumonia,
        DiseaseLabel::Cardiomegaly,
        DiseaseLabel::Normal,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DiseaseLabel::CongestiveHeartFailure => "congestive_heart_failure",
            DiseaseLabel::Pneumonia => "pneumonia",
            DiseaseLabel::Cardiomegaly => "cardiomegaly",
            DiseaseLabel::Normal => "normal",
        }
    }

    /// Human-readable name, e.g. "Congestive Heart Failure".
    pub fn display_name(self) -> &'static str {
        match self {
            DiseaseLabel::CongestiveHeartFailure => "Congestive Heart Failure",
            DiseaseLabel::Pneumonia => "Pneumonia",
            DiseaseLabel::Cardiomegaly => "Cardiomegaly",
            DiseaseLabel::Normal => "Normal",
        }
    }

    /// Case-insensitive match that treats spaces, hyphens and underscores alike.
    pub fn parse_loose(text: &str) -> Option<Self> {
        let key: String = text
            .trim()
            .chars()
            .map(|c| match c {
                ' ' | '-' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        DiseaseLabel::ALL.into_iter().find(|d| d.as_str() == key)
    }
}

impl fmt::Display for DiseaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which rule of the priority table produced a diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticRule {
    /// Perihilar opacity together with costophrenic blunting.
    EdemaWithEffusion,
    /// Any lower-lobe opacity.
    LobarOpacity,
    /// Enlarged cardiac silhouette on its own.
    CardiacEnlargement,
    /// Nothing above matched.
    Fallthrough,
}

impl DiagnosticRule {
    pub fn label(self) -> DiseaseLabel {
        match self {
            DiagnosticRule::EdemaWithEffusion => DiseaseLabel::CongestiveHeartFailure,
            DiagnosticRule::LobarOpacity => DiseaseLabel::Pneumonia,
            DiagnosticRule::CardiacEnlargement => DiseaseLabel::Cardiomegaly,
            DiagnosticRule::Fallthrough => DiseaseLabel::Normal,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            DiagnosticRule::EdemaWithEffusion => "R1",
            DiagnosticRule::LobarOpacity => "R2",
            DiagnosticRule::CardiacEnlargement => "R3",
            DiagnosticRule::Fallthrough => "R4",
        }
    }

    /// The concepts from `concepts` that the rule's condition refers to.
    pub fn matched(self, concepts: ConceptSet) -> ConceptSet {
        use ConceptId::*;
        let mentioned: &[ConceptId] = match self {
            DiagnosticRule::EdemaWithEffusion => {
                &[BilateralPerihilarOpacity, BluntedCostophrenicAngle]
            }
            DiagnosticRule::LobarOpacity => &[RightLowerLobeOpacity, LeftLowerLobeOpacity],
            DiagnosticRule::CardiacEnlargement => &[EnlargedCardiacSilhouette],
            DiagnosticRule::Fallthrough => &[],
        };
        mentioned
            .iter()
            .copied()
            .filter(|c| concepts.contains(*c))
            .collect()
    }
}

/// First matching rule in priority order R1..R4.
pub fn fired_rule(concepts: ConceptSet) -> DiagnosticRule {
    use ConceptId::*;
    if concepts.contains(BilateralPerihilarOpacity) && concepts.contains(BluntedCostophrenicAngle) {
        DiagnosticRule::EdemaWithEffusion
    } else if concepts.contains(RightLowerLobeOpacity) || concepts.contains(LeftLowerLobeOpacity) {
        DiagnosticRule::LobarOpacity
    } else if concepts.contains(EnlargedCardiacSilhouette) {
        DiagnosticRule::CardiacEnlargement
    } else {
        DiagnosticRule::Fallthrough
    }
}

pub fn disease_from_concepts(concepts: ConceptSet) -> DiseaseLabel {
    fired_rule(concepts).label()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Calib,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Calib, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Calib => "calib",
            Split::Test => "test",
        }
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("zero-sized image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Image(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub split: Split,
    pub image: Image,
    pub gold_concepts: ConceptSet,
    pub gold_disease: DiseaseLabel,
}
