use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum IcdVersion {
    Icd9,
    Icd10,
}

impl IcdVersion {
    pub fn number(self) -> u8 {
        match self {
            IcdVersion::Icd9 => 9,
            IcdVersion::Icd10 => 10,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().trim_start_matches("ICD") {
            "9" | "-9" => Some(IcdVersion::Icd9),
            "10" | "-10" => Some(IcdVersion::Icd10),
            _ => None,
        }
    }
}

impl TryFrom<u8> for IcdVersion {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            9 => Ok(IcdVersion::Icd9),
            10 => Ok(IcdVersion::Icd10),
            other => Err(format!("unsupported ICD version {other}")),
        }
    }
}

impl From<IcdVersion> for u8 {
    fn from(v: IcdVersion) -> u8 {
        v.number()
    }
}

impl fmt::Display for IcdVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ICD{}", self.number())
    }
}

/// Canonical form of a full code: trimmed, uppercase, decimal point removed.
pub(crate) fn canonical_code(code: &str) -> String {
    code.trim()
        .chars()
        .filter(|&c| c != '.')
        .flat_map(char::to_uppercase)
        .collect()
}

/// Reduce a code to its 3-character category. Works for numeric, E and V
/// ICD-9 codes as well as alphanumeric ICD-10 codes.
pub fn truncate_code(code: &str) -> Result<String, CorpusError> {
    let canonical = canonical_code(code);
    if canonical.chars().count() < 3 || !canonical.chars().all(|c| c.is_ascii_alphanumeric()) {
        return Err(CorpusError::InvalidCode(code.to_owned()));
    }
    Ok(canonical.chars().take(3).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcdEntry {
    pub full_code: String,
    pub version: IcdVersion,
    pub short_code: String,
    pub short_desc: String,
    pub long_desc: String,
}

impl IcdEntry {
    pub fn new(
        full_code: &str,
        version: IcdVersion,
        short_desc: impl Into<String>,
        long_desc: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        Ok(IcdEntry {
            full_code: canonical_code(full_code),
            version,
            short_code: truncate_code(full_code)?,
            short_desc: short_desc.into(),
            long_desc: long_desc.into(),
        })
    }

    /// Short description, or the long one when the short one is blank.
    pub fn display_desc(&self) -> &str {
        if self.short_desc.trim().is_empty() {
            &self.long_desc
        } else {
            &self.short_desc
        }
    }
}

#[derive(Debug, Deserialize)]
struct CodeRow {
    full_code: String,
    version: String,
    short_desc: String,
    long_desc: String,
}

/// A slice of the ICD ontology, possibly holding both versions.
#[derive(Debug, Clone, Default)]
pub struct CodeTable {
    entries: Vec<IcdEntry>,
    by_code: HashMap<(IcdVersion, String), usize>,
    by_short: BTreeMap<(IcdVersion, String), Vec<usize>>,
}

impl CodeTable {
    pub fn new(entries: Vec<IcdEntry>) -> Result<Self, CorpusError> {
        let mut table = CodeTable::default();
        for entry in entries {
            table.push(entry)?;
        }
        Ok(table)
    }

    fn push(&mut self, entry: IcdEntry) -> Result<(), CorpusError> {
        let key = (entry.version, entry.full_code.clone());
        if self.by_code.contains_key(&key) {
            return Err(CorpusError::DuplicateCode {
                code: entry.full_code,
                version: entry.version,
            });
        }
        let idx = self.entries.len();
        self.by_code.insert(key, idx);
        self.by_short
            .entry((entry.version, entry.short_code.clone()))
            .or_default()
            .push(idx);
        self.entries.push(entry);
        Ok(())
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_csv_reader(file)
    }

    /// Reads `full_code,version,short_desc,long_desc` with a header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut table = CodeTable::default();
        for (i, row) in rdr.deserialize::<CodeRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| CorpusError::MalformedCodeTable {
                line,
                message: e.to_string(),
            })?;
            let version =
                IcdVersion::parse(&row.version).ok_or_else(|| CorpusError::MalformedCodeTable {
                    line,
                    message: format!("bad version {:?}", row.version),
                })?;
            let entry = IcdEntry::new(&row.full_code, version, row.short_desc, row.long_desc)
                .map_err(|e| CorpusError::MalformedCodeTable {
                    line,
                    message: e.to_string(),
                })?;
            table.push(entry)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["full_code", "version", "short_desc", "long_desc"])?;
        for e in &self.entries {
            wtr.write_record([
                e.full_code.as_str(),
                &e.version.number().to_string(),
                e.short_desc.as_str(),
                e.long_desc.as_str(),
            ])?;
        }
        wtr.flush().map_err(|e| CorpusError::io("<csv>", e))?;
        Ok(())
    }

    pub fn entries(&self) -> &[IcdEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, version: IcdVersion, full_code: &str) -> Option<&IcdEntry> {
        self.by_code
            .get(&(version, canonical_code(full_code)))
            .map(|&i| &self.entries[i])
    }

    pub fn has_short_code(&self, version: IcdVersion, short_code: &str) -> bool {
        self.by_short
            .contains_key(&(version, short_code.to_owned()))
    }

    /// Entries grouped under a 3-character category.
    pub fn category(&self, version: IcdVersion, short_code: &str) -> Vec<&IcdEntry> {
        self.by_short
            .get(&(version, short_code.to_owned()))
            .map(|ix| ix.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    /// Human-readable description of a category: the entry whose full code is
    /// the category itself if present, otherwise the first entry under it.
    pub fn short_code_description(&self, version: IcdVersion, short_code: &str) -> Option<&str> {
        let members = self.by_short.get(&(version, short_code.to_owned()))?;
        let pick = members
            .iter()
            .map(|&i| &self.entries[i])
            .find(|e| e.full_code == short_code)
            .unwrap_or(&self.entries[members[0]]);
        Some(pick.display_desc())
    }

    pub fn short_codes(&self, version: IcdVersion) -> BTreeSet<&str> {
        self.by_short
            .keys()
            .filter(|(v, _)| *v == version)
            .map(|(_, s)| s.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_rules() {
        assert_eq!(truncate_code("4019").unwrap(), "401");
        assert_eq!(truncate_code("I10.9").unwrap(), "I10");
        assert_eq!(truncate_code("i10").unwrap(), "I10");
        assert_eq!(truncate_code("E8490").unwrap(), "E84");
        assert_eq!(truncate_code("V4581").unwrap(), "V45");
        assert!(truncate_code("I1").is_err());
        assert!(truncate_code("A-1").is_err());
    }

    #[test]
    fn csv_roundtrip_with_quotes() {
        let csv = "full_code,version,short_desc,long_desc\n\
                   4019,9,Hypertension NOS,\"Unspecified essential hypertension, NOS\"\n\
                   I10,10,,Essential (primary) hypertension\n";
        let table = CodeTable::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(table.len(), 2);
        let e = table.get(IcdVersion::Icd9, "401.9").unwrap();
        assert_eq!(e.short_code, "401");
        assert_eq!(e.long_desc, "Unspecified essential hypertension, NOS");
        assert_eq!(
            table.short_code_description(IcdVersion::Icd10, "I10"),
            Some("Essential (primary) hypertension")
        );
        let mut out = Vec::new();
        table.write_csv(&mut out).unwrap();
        let again = CodeTable::from_csv_reader(out.as_slice()).unwrap();
        assert_eq!(again.entries(), table.entries());
    }

    #[test]
    fn duplicate_codes_rejected() {
        let csv = "full_code,version,short_desc,long_desc\nI10,10,a,b\nI1.0,10,c,d\n";
        assert!(matches!(
            CodeTable::from_csv_reader(csv.as_bytes()),
            Err(CorpusError::DuplicateCode { .. })
        ));
        // same code under a different version is fine
        let csv = "full_code,version,short_desc,long_desc\n401,9,a,b\n401,10,c,d\n";
        assert_eq!(CodeTable::from_csv_reader(csv.as_bytes()).unwrap().len(), 2);
    }
}
