use serde::{Deserialize, Serialize};

/// Which output object the model must produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaMode {
    /// `{"diagnoses": [...]}`
    Plain,
    /// `{"reasoning": "...", "diagnoses": [...]}`
    Cot,
}

impl std::str::FromStr for SchemaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(SchemaMode::Plain),
            "cot" => Ok(SchemaMode::Cot),
            _ => Err(format!("unknown schema mode {s:?} (plain or cot)")),
        }
    }
}

/// Printable ASCII and space, minus `"` and `\`.
pub const SAFE_CHAR_CLASS: &str = r"[ !#-\[\]-~]";

/// Shape of the structured output. Length limits are counted in characters of
/// the string body and unrolled into DFA states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub reasoning_max_len: usize,
    /// Regex character class allowed inside strings.
    pub char_class: String,
    /// Whitespace characters permitted between JSON tokens.
    pub max_whitespace: usize,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            count: 20,
            min_len: 3,
            max_len: 70,
            reasoning_max_len: 1200,
            char_class: SAFE_CHAR_CLASS.to_owned(),
            max_whitespace: 1,
        }
    }
}

impl SchemaConfig {
    fn ws(&self) -> String {
        match self.max_whitespace {
            0 => String::new(),
            n => format!("[ \\t\\n\\r]{{0,{n}}}"),
        }
    }

    pub fn regex(&self, mode: SchemaMode) -> String {
        let ws = self.ws();
        let item = format!("\"{}{{{},{}}}\"", self.char_class, self.min_len, self.max_len);
        let list = match self.count {
            0 => format!(r"\[{ws}\]"),
            1 => format!(r"\[{ws}{item}{ws}\]"),
            n => format!(r"\[{ws}{item}(?:{ws},{ws}{item}){{{}}}{ws}\]", n - 1),
        };
        let diagnoses = format!(r#""diagnoses"{ws}:{ws}{list}"#);
        match mode {
            SchemaMode::Plain => format!(r"\{{{ws}{diagnoses}{ws}\}}"),
            SchemaMode::Cot => format!(
                r#"\{{{ws}"reasoning"{ws}:{ws}"{}{{0,{}}}"{ws},{ws}{diagnoses}{ws}\}}"#,
                self.char_class, self.reasoning_max_len
            ),
        }
    }
}

/// Regex for the default output schema: exactly 20 diagnosis strings of 3 to
/// 70 safe characters, optionally preceded by a reasoning string.
pub fn schema_regex(mode: SchemaMode) -> String {
    SchemaConfig::default().regex(mode)
}
