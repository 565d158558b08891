use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::ConceptId;
use crate::error::{Error, Result};

pub const DEFAULT_VOCABULARY_JSON: &str = include_str!("../../data/vocabulary.json");

/// Concept-id to description-template mapping; descriptions are unique so
/// they can be mapped back to concepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    descriptions: [String; ConceptId::COUNT],
}

impl Vocabulary {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        let mut descriptions: [Option<String>; ConceptId::COUNT] = Default::default();
        for (key, desc) in raw {
            let id: ConceptId = key.parse()?;
            let desc = desc.trim().to_string();
            if desc.is_empty() {
                return Err(Error::Config(format!("empty description for {id}")));
            }
            descriptions[id.index()] = Some(desc);
        }
        let descriptions = ConceptId::ALL.map(|c| descriptions[c.index()].take());
        if let Some(pos) = descriptions.iter().position(Option::is_none) {
            return Err(Error::Config(format!(
                "vocabulary has no description for {}",
                ConceptId::ALL[pos]
            )));
        }
        let descriptions = descriptions.map(Option::unwrap);
        for (i, a) in descriptions.iter().enumerate() {
            if descriptions[..i].contains(a) {
                return Err(Error::Config(format!("duplicate description {a:?}")));
            }
        }
        Ok(Self { descriptions })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn describe(&self, concept: ConceptId) -> &str {
        &self.descriptions[concept.index()]
    }

    /// Inverse lookup by exact (trimmed) description.
    pub fn lookup(&self, description: &str) -> Option<ConceptId> {
        let d = description.trim();
        ConceptId::ALL
            .into_iter()
            .find(|c| self.descriptions[c.index()] == d)
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_json(DEFAULT_VOCABULARY_JSON).expect("bundled vocabulary is valid")
    }
}

/// Template string for `concept` from the bundled vocabulary.
pub fn render_description(concept: ConceptId) -> String {
    Vocabulary::default().describe(concept).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_templates() {
        assert_eq!(
            render_description(ConceptId::RightLowerLobeOpacity),
            "detected lung opacities, located in the right lower lobe"
        );
        assert_eq!(
            render_description(ConceptId::EnlargedCardiacSilhouette),
            "cardiomegaly, with increased cardiothoracic ratio"
        );
        assert_eq!(
            render_description(ConceptId::PulmonaryNodule),
            render_description(ConceptId::PulmonaryNodule)
        );
    }

    #[test]
    fn lookup_inverts_describe() {
        let v = Vocabulary::default();
        for c in ConceptId::ALL {
            assert_eq!(v.lookup(v.describe(c)), Some(c));
        }
        assert_eq!(v.lookup("florid example text"), None);
    }

    #[test]
    fn incomplete_or_ambiguous_vocabularies_fail() {
        assert!(Vocabulary::from_json(r#"{"pulmonary_nodule": "x"}"#).is_err());
        let mut map: BTreeMap<String, String> =
            serde_json::from_str(DEFAULT_VOCABULARY_JSON).unwrap();
        map.insert("pulmonary_nodule".into(), "increased lung markings".into());
        assert!(Vocabulary::from_json(&serde_json::to_string(&map).unwrap()).is_err());
        map.insert("lung_cancer".into(), "y".into());
        assert!(Vocabulary::from_json(&serde_json::to_string(&map).unwrap()).is_err());
    }
}
