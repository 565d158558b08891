//! Prompt assembly: the medical-knowledge preamble, concept descriptions
//! and task instruction, plus the step-by-step reasoning scaffold.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::AlignedRepresentation;
use crate::concepts::ConceptFinding;
use crate::error::{Error, Result};
use crate::report::StepKey;

pub const DEFAULT_TEMPLATES_JSON: &str = include_str!("../data/templates.json");

/// Header line that opens the concept-description segment.
pub const CDESC_HEADER: &str = "Visual findings:";
pub const NO_FINDINGS_SENTENCE: &str = "No abnormal visual concepts detected.";
/// Header line that opens the aligned-representation digest.
pub const DIGEST_HEADER: &str = "Aligned visual digest:";
const COT_PREFACE: &str =
    "Reason step by step. Write each step under its header before the report:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplates {
    #[serde(default)]
    pub version: u32,
    pub p_med: String,
    pub d_task: String,
    pub cot_steps: [String; 4],
    pub output_grammar: String,
}

impl PromptTemplates {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: PromptTemplates = serde_json::from_str(text)?;
        let empty = [&t.p_med, &t.d_task, &t.output_grammar]
            .into_iter()
            .chain(&t.cot_steps)
            .any(|s| s.trim().is_empty());
        if empty {
            return Err(Error::Config("prompt templates must be non-empty".into()));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn cot(&self) -> CoTPromptTemplate {
        CoTPromptTemplate {
            steps: StepKey::ALL.map(|k| (k, self.cot_steps[k as usize].clone())),
            output_grammar_instructions: self.output_grammar.clone(),
        }
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::from_json(DEFAULT_TEMPLATES_JSON).expect("bundled templates are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoTPromptTemplate {
    pub steps: [(StepKey, String); 4],
    pub output_grammar_instructions: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub use_cot: bool,
    pub use_cvis: bool,
    pub use_fimg: bool,
    pub use_pmed: bool,
}

impl AblationConfig {
    pub const FULL: AblationConfig = AblationConfig {
        use_cot: true,
        use_cvis: true,
        use_fimg: true,
        use_pmed: true,
    };

    /// All 16 flag combinations.
    pub fn all() -> impl Iterator<Item = AblationConfig> {
        (0u8..16).map(|m| AblationConfig {
            use_cot: m & 1 != 0,
            use_cvis: m & 2 != 0,
            use_fimg: m & 4 != 0,
            use_pmed: m & 8 != 0,
        })
    }
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::FULL
    }
}

/// The full pipeline plus one row per disabled component.
pub fn ablation_presets() -> Vec<(&'static str, AblationConfig)> {
    let full = AblationConfig::FULL;
    vec![
        ("full", full),
        ("w/o CoT", AblationConfig { use_cot: false, ..full }),
        ("w/o C_vis", AblationConfig { use_cvis: false, ..full }),
        ("w/o F_img", AblationConfig { use_fimg: false, ..full }),
        ("w/o P_med", AblationConfig { use_pmed: false, ..full }),
    ]
}

pub fn ablation_preset(name: &str) -> Option<AblationConfig> {
    ablation_presets()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, a)| a)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub p_med: Option<String>,
    pub c_desc: Option<String>,
    pub d_task: String,
    pub ablation: AblationConfig,
    pub fimg_digest: Option<String>,
}

pub fn assemble_prompt(
    findings: &[ConceptFinding],
    aligned: Option<&AlignedRepresentation>,
    ablation: AblationConfig,
    templates: &PromptTemplates,
    include_digest: bool,
) -> Result<PromptBundle> {
    if ablation.use_fimg && aligned.is_none() {
        return Err(Error::Precondition(
            "use_fimg is set but no aligned representation was computed".into(),
        ));
    }
    let c_desc = ablation.use_cvis.then(|| {
        let mut s = String::from(CDESC_HEADER);
        if findings.is_empty() {
            s.push('\n');
            s.push_str(NO_FINDINGS_SENTENCE);
        }
        for f in findings {
            s.push_str("\n- ");
            s.push_str(&f.description);
        }
        s
    });
    let fimg_digest = match aligned {
        Some(a) if ablation.use_fimg && include_digest => {
            let values: Vec<String> = a.visual_proj.iter().map(|v| format!("{v:.4}")).collect();
            Some(format!("{DIGEST_HEADER}\n[{}]", values.join(", ")))
        }
        _ => None,
    };
    Ok(PromptBundle {
        p_med: ablation.use_pmed.then(|| templates.p_med.clone()),
        c_desc,
        d_task: templates.d_task.clone(),
        ablation,
        fimg_digest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMetadata {
    pub sample_id: String,
    pub ablation: AblationConfig,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<Message>,
    pub metadata: RequestMetadata,
}

impl GenerationRequest {
    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }

    pub fn system_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    pub fn with_metadata(mut self, sample_id: &str, backend: &str) -> Self {
        self.metadata.sample_id = sample_id.to_string();
        self.metadata.backend = backend.to_string();
        self
    }
}

pub fn render_messages(
    bundle: &PromptBundle,
    cot: &CoTPromptTemplate,
    ablation: AblationConfig,
) -> GenerationRequest {
    let mut parts: Vec<String> = Vec::new();
    parts.extend(bundle.c_desc.clone());
    parts.extend(bundle.fimg_digest.clone());
    parts.push(bundle.d_task.clone());
    if ablation.use_cot {
        let mut steps = String::from(COT_PREFACE);
        for (key, instruction) in &cot.steps {
            steps.push('\n');
            steps.push_str(&key.header());
            steps.push(' ');
            steps.push_str(instruction);
        }
        parts.push(steps);
    }
    parts.push(cot.output_grammar_instructions.clone());

    let mut messages = Vec::with_capacity(2);
    if let Some(p) = &bundle.p_med {
        messages.push(Message {
            role: Role::System,
            content: p.clone(),
        });
    }
    messages.push(Message {
        role: Role::User,
        content: parts.join("\n\n"),
    });
    GenerationRequest {
        messages,
        metadata: RequestMetadata {
            ablation,
            ..Default::default()
        },
    }
}

/// True when `text` carries all four bracketed step headers.
pub fn has_cot_steps(text: &str) -> bool {
    StepKey::ALL.iter().all(|k| text.contains(&k.header()))
}
