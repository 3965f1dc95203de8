//! Zero-shot, chain-of-thought and few-shot prompt assembly.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AdmissionNote, CodeTable, LabeledNote};

pub const ZERO_SHOT: &str = "You are a medical professional. Given an admission note for a patient, \
present a list of possible diagnoses for the patient. The admission note is as follows: {note}.";

pub const ZERO_SHOT_COT: &str = "You are a medical professional. Given an admission note for a patient, \
present a list of possible diagnoses for the patient. The admission note is as follows: {note}. \
TASK: Solve this task step by step and give an explanation in maximum one or two sentences for each \
diagnosis decision.";

pub const FEW_SHOT: &str = "You are a medical professional. Given an admission note for a patient, \
present a list of possible diagnoses for the patient. Similar patients look like this: {few_shots}. \
The admission note is as follows: {note}. Give the diagnoses following the schema from the examples.";

/// Optional output-format sentence for the zero-shot modes, which otherwise
/// never show the expected JSON shape.
pub const FORMAT_HINT: &str =
    "Answer with a JSON object of the form {\"diagnoses\": [\"<diagnosis>\", ...]}.";

/// Allowed demonstration counts for few-shot prompts.
pub const DEMO_COUNTS: [usize; 3] = [1, 3, 5];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("{mode} prompts take {expected} demonstrations, got {found}")]
    DemoCountMismatch { mode: PromptMode, expected: &'static str, found: usize },
    #[error("{mode} template: {message}")]
    TemplateSlots { mode: PromptMode, message: String },
    #[error("demonstration {0} has no diagnoses")]
    EmptyDiagnoses(usize),
    #[error("no description for code {0}")]
    UnknownCode(String),
    #[error("unknown prompt mode {0:?}")]
    UnknownMode(String),
    #[error("template config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    ZeroShotCot,
    FewShot,
}

impl PromptMode {
    pub fn name(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::ZeroShotCot => "zero_shot_cot",
            PromptMode::FewShot => "few_shot",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptMode {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "zero_shot" => Ok(PromptMode::ZeroShot),
            "zero_shot_cot" | "cot" => Ok(PromptMode::ZeroShotCot),
            "few_shot" => Ok(PromptMode::FewShot),
            _ => Err(PromptError::UnknownMode(s.to_owned())),
        }
    }
}

/// A similar patient shown in a few-shot prompt, serialized in the shape the
/// model must produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    #[serde(rename = "admission_note")]
    pub note_text: String,
    pub output: DemoOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoOutput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    pub diagnoses: Vec<String>,
}

impl Demonstration {
    pub fn new(note_text: impl Into<String>, diagnoses: Vec<String>) -> Self {
        Demonstration {
            note_text: note_text.into(),
            output: DemoOutput { reasoning: None, diagnoses },
        }
    }

    /// Built from a neighbor's annotated codes: each full code's short
    /// description (long one when blank), repeated strings dropped.
    pub fn from_neighbor(note: &LabeledNote, table: &CodeTable) -> Result<Self, PromptError> {
        let mut seen = HashSet::new();
        let mut diagnoses = Vec::new();
        for code in &note.full_labels {
            let desc = match table.get(note.version, code) {
                Some(e) => e.display_desc(),
                None => crate::corpus::truncate_code(code)
                    .ok()
                    .and_then(|c| table.short_code_description(note.version, &c))
                    .ok_or_else(|| PromptError::UnknownCode(code.clone()))?,
            };
            if seen.insert(desc) {
                diagnoses.push(desc.to_owned());
            }
        }
        Ok(Demonstration::new(note.note.full_text(), diagnoses))
    }
}

/// Mode → template text. Loadable from TOML or JSON with keys `zero_shot`,
/// `zero_shot_cot`, `few_shot` and optional `format_hint`; missing keys keep
/// the defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Templates {
    pub zero_shot: String,
    pub zero_shot_cot: String,
    pub few_shot: String,
    /// Appended to zero-shot prompts when set.
    pub format_hint: Option<String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            zero_shot: ZERO_SHOT.to_owned(),
            zero_shot_cot: ZERO_SHOT_COT.to_owned(),
            few_shot: FEW_SHOT.to_owned(),
            format_hint: None,
        }
    }
}

impl Templates {
    pub fn with_format_hint(mut self) -> Self {
        self.format_hint = Some(FORMAT_HINT.to_owned());
        self
    }

    pub fn get(&self, mode: PromptMode) -> &str {
        match mode {
            PromptMode::ZeroShot => &self.zero_shot,
            PromptMode::ZeroShotCot => &self.zero_shot_cot,
            PromptMode::FewShot => &self.few_shot,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for mode in [PromptMode::ZeroShot, PromptMode::ZeroShotCot, PromptMode::FewShot] {
            let t = self.get(mode);
            let count = |slot: &str| t.matches(slot).count();
            let (note, shots) = (count("{note}"), count("{few_shots}"));
            let want_shots = (mode == PromptMode::FewShot) as usize;
            if note != 1 || shots != want_shots {
                return Err(PromptError::TemplateSlots {
                    mode,
                    message: format!(
                        "expected {{note}} once and {{few_shots}} {want_shots} times, found {note} and {shots}"
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<Self, PromptError> {
        let t: Templates = toml::from_str(s).map_err(|e| PromptError::Config(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_json(s: &str) -> Result<Self, PromptError> {
        let t: Templates = serde_json::from_str(s).map_err(|e| PromptError::Config(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    /// `.json` files are read as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Io(path.display().to_string(), e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }
}

/// Replace `{note}` and `{few_shots}` in one left-to-right pass, so slot-like
/// text inside the note is never expanded.
fn substitute(template: &str, note: &str, few_shots: &str) -> String {
    let mut out = String::with_capacity(template.len() + note.len() + few_shots.len());
    let mut rest = template;
    while let Some(i) = rest.find('{') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("{note}") {
            out.push_str(note);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{few_shots}") {
            out.push_str(few_shots);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// JSON array embedded in few-shot prompts.
pub fn demonstrations_json(demos: &[Demonstration]) -> String {
    serde_json::to_string(demos).expect("demonstrations serialize")
}

pub fn assemble(
    mode: PromptMode,
    note_text: &str,
    demos: &[Demonstration],
    templates: &Templates,
) -> Result<String, PromptError> {
    match mode {
        PromptMode::FewShot if !DEMO_COUNTS.contains(&demos.len()) => {
            return Err(PromptError::DemoCountMismatch { mode, expected: "1, 3 or 5", found: demos.len() })
        }
        PromptMode::ZeroShot | PromptMode::ZeroShotCot if !demos.is_empty() => {
            return Err(PromptError::DemoCountMismatch { mode, expected: "no", found: demos.len() })
        }
        _ => {}
    }
    if let Some(i) = demos.iter().position(|d| d.output.diagnoses.is_empty()) {
        return Err(PromptError::EmptyDiagnoses(i));
    }
    let shots = if mode == PromptMode::FewShot { demonstrations_json(demos) } else { String::new() };
    let mut text = substitute(templates.get(mode), note_text, &shots);
    if let (Some(hint), PromptMode::ZeroShot | PromptMode::ZeroShotCot) = (&templates.format_hint, mode) {
        text.push(' ');
        text.push_str(hint);
    }
    Ok(text)
}

pub fn assemble_note(
    mode: PromptMode,
    note: &AdmissionNote,
    demos: &[Demonstration],
    templates: &Templates,
) -> Result<String, PromptError> {
    assemble(mode, &note.full_text(), demos, templates)
}

/// The demonstration array embedded in a few-shot prompt built from the
/// default template, parsed back.
pub fn extract_demonstrations(prompt: &str) -> Option<Vec<Demonstration>> {
    let start = prompt.find(" Similar patients look like this: ")? + " Similar patients look like this: ".len();
    let mut stream = serde_json::Deserializer::from_str(&prompt[start..]).into_iter::<Vec<Demonstration>>();
    stream.next()?.ok()
}
