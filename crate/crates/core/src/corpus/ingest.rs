use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::codes::canonical_code;
use super::{
    truncate_code, AdmissionNote, CareModule, CodeTable, CorpusError, IcdVersion, LabeledNote,
};

/// One line of a notes file as it arrives from the extraction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note_id: String,
    pub sections: BTreeMap<String, String>,
    pub labels: Vec<String>,
    pub module: CareModule,
    pub icd_version: IcdVersion,
}

/// Normalized dataset line written by `write_dataset`; labels already
/// truncated, so it can be reloaded without the code table.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetRecord {
    note_id: String,
    sections: BTreeMap<String, String>,
    labels: Vec<String>,
    full_labels: Vec<String>,
    module: CareModule,
    icd_version: IcdVersion,
}

fn label_note(record: NoteRecord, table: &CodeTable) -> Result<LabeledNote, CorpusError> {
    let note = AdmissionNote::new(record.note_id.clone(), record.sections)?;
    let mut labels = Vec::new();
    let mut full_labels = Vec::new();
    let mut seen_short = HashSet::new();
    let mut seen_full = HashSet::new();
    for raw in &record.labels {
        let unknown = || CorpusError::UnknownCode {
            note_id: record.note_id.clone(),
            code: raw.clone(),
        };
        let short = truncate_code(raw).map_err(|_| unknown())?;
        if !table.has_short_code(record.icd_version, &short) {
            return Err(unknown());
        }
        let full = canonical_code(raw);
        if seen_full.insert(full.clone()) {
            full_labels.push(full);
        }
        if seen_short.insert(short.clone()) {
            labels.push(short);
        }
    }
    if labels.is_empty() {
        return Err(CorpusError::EmptyLabels {
            note_id: record.note_id,
        });
    }
    Ok(LabeledNote {
        note,
        labels,
        full_labels,
        module: record.module,
        version: record.icd_version,
    })
}

/// Validate and label already-parsed records.
pub fn ingest_records<I>(records: I, table: &CodeTable) -> Result<Vec<LabeledNote>, CorpusError>
where
    I: IntoIterator<Item = NoteRecord>,
{
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for record in records {
        if !ids.insert(record.note_id.clone()) {
            return Err(CorpusError::DuplicateNoteId(record.note_id));
        }
        out.push(label_note(record, table)?);
    }
    Ok(out)
}

fn read_jsonl<T, F>(path: &Path, mut f: F) -> Result<(), CorpusError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T) -> Result<(), CorpusError>,
{
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        f(value)?;
    }
    Ok(())
}

/// Read a notes JSONL file, truncate and deduplicate labels, and reject notes
/// with sections outside the admission-time list.
pub fn ingest_notes(path: &Path, table: &CodeTable) -> Result<Vec<LabeledNote>, CorpusError> {
    let mut records = Vec::new();
    read_jsonl(path, |r: NoteRecord| {
        records.push(r);
        Ok(())
    })?;
    ingest_records(records, table)
}

pub fn write_dataset<W: Write>(notes: &[LabeledNote], mut out: W) -> Result<(), CorpusError> {
    for n in notes {
        let record = DatasetRecord {
            note_id: n.note.note_id.clone(),
            sections: n
                .note
                .sections()
                .map(|(s, t)| (s.name().to_owned(), t.to_owned()))
                .collect(),
            labels: n.labels.clone(),
            full_labels: n.full_labels.clone(),
            module: n.module,
            icd_version: n.version,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| CorpusError::io("<dataset>", e))?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledNote>, CorpusError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    read_jsonl(path, |r: DatasetRecord| {
        if !ids.insert(r.note_id.clone()) {
            return Err(CorpusError::DuplicateNoteId(r.note_id));
        }
        if r.labels.is_empty() {
            return Err(CorpusError::EmptyLabels { note_id: r.note_id });
        }
        out.push(LabeledNote {
            note: AdmissionNote::new(r.note_id, r.sections)?,
            labels: r.labels,
            full_labels: r.full_labels,
            module: r.module,
            version: r.icd_version,
        });
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IcdEntry;

    fn table() -> CodeTable {
        CodeTable::new(vec![
            IcdEntry::new("I10", IcdVersion::Icd10, "Hypertension", "Essential hypertension").unwrap(),
            IcdEntry::new("4019", IcdVersion::Icd9, "Hypertension NOS", "Unspecified hypertension").unwrap(),
            IcdEntry::new("25000", IcdVersion::Icd9, "DMII wo cmp", "Diabetes mellitus").unwrap(),
        ])
        .unwrap()
    }

    fn record(labels: &[&str], version: IcdVersion) -> NoteRecord {
        NoteRecord {
            note_id: "n1".into(),
            sections: [("Chief Complaint".to_owned(), "headache".to_owned())].into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            module: CareModule::Hosp,
            icd_version: version,
        }
    }

    #[test]
    fn truncation_collapses_duplicates() {
        let notes = ingest_records([record(&["I10", "I10.9"], IcdVersion::Icd10)], &table()).unwrap();
        assert_eq!(notes[0].labels, vec!["I10"]);
        assert_eq!(notes[0].full_labels, vec!["I10", "I109"]);
    }

    #[test]
    fn icd9_hypertension_truncates_to_401() {
        let notes = ingest_records([record(&["4019", "25000"], IcdVersion::Icd9)], &table()).unwrap();
        assert_eq!(notes[0].labels, vec!["401", "250"]);
        assert_eq!(notes[0].main_diagnosis(), "401");
    }

    #[test]
    fn unknown_code_reports_note() {
        let err = ingest_records([record(&["I10", "J45"], IcdVersion::Icd10)], &table()).unwrap_err();
        match err {
            CorpusError::UnknownCode { note_id, code } => {
                assert_eq!(note_id, "n1");
                assert_eq!(code, "J45");
            }
            other => panic!("{other:?}"),
        }
        // version mismatch is also unknown
        assert!(ingest_records([record(&["4019"], IcdVersion::Icd10)], &table()).is_err());
    }

    #[test]
    fn discharge_diagnosis_section_is_forbidden() {
        let mut r = record(&["I10"], IcdVersion::Icd10);
        r.sections.insert("Discharge Diagnosis".into(), "HTN".into());
        assert!(matches!(
            ingest_records([r], &table()),
            Err(CorpusError::ForbiddenSection { section, .. }) if section == "Discharge Diagnosis"
        ));
    }

    #[test]
    fn malformed_line_number_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("notes.jsonl");
        let good = serde_json::to_string(&record(&["I10"], IcdVersion::Icd10)).unwrap();
        std::fs::write(&path, format!("{good}\n\n{{\"note_id\": 3}}\n")).unwrap();
        match ingest_notes(&path, &table()) {
            Err(CorpusError::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dataset_roundtrip() {
        let notes = ingest_records([record(&["4019", "25000"], IcdVersion::Icd9)], &table()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.jsonl");
        let mut buf = Vec::new();
        write_dataset(&notes, &mut buf).unwrap();
        std::fs::write(&path, buf).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), notes);
    }
}
