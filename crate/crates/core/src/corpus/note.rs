use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CorpusError, IcdVersion};

/// The nine sections known at admission time, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdmissionSection {
    ChiefComplaint,
    MajorProcedure,
    Allergies,
    PresentIllness,
    PastMedicalHistory,
    SocialHistory,
    FamilyHistory,
    PhysicalExamAtAdmission,
    MedicationAtAdmission,
}

impl AdmissionSection {
    pub const ALL: [AdmissionSection; 9] = [
        AdmissionSection::ChiefComplaint,
        AdmissionSection::MajorProcedure,
        AdmissionSection::Allergies,
        AdmissionSection::PresentIllness,
        AdmissionSection::PastMedicalHistory,
        AdmissionSection::SocialHistory,
        AdmissionSection::FamilyHistory,
        AdmissionSection::PhysicalExamAtAdmission,
        AdmissionSection::MedicationAtAdmission,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdmissionSection::ChiefComplaint => "Chief Complaint",
            AdmissionSection::MajorProcedure => "Major Surgical or Invasive Procedure",
            AdmissionSection::Allergies => "Allergies",
            AdmissionSection::PresentIllness => "History of Present Illness",
            AdmissionSection::PastMedicalHistory => "Past Medical History",
            AdmissionSection::SocialHistory => "Social History",
            AdmissionSection::FamilyHistory => "Family History",
            AdmissionSection::PhysicalExamAtAdmission => "Physical Exam at Admission",
            AdmissionSection::MedicationAtAdmission => "Medication at Admission",
        }
    }

    /// Case- and whitespace-insensitive lookup.
    pub fn from_name(name: &str) -> Option<Self> {
        let wanted = squash(name);
        Self::ALL.into_iter().find(|s| squash(s.name()) == wanted)
    }
}

impl fmt::Display for AdmissionSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sections written during or after the stay. Listed so ingest errors can say
/// why a section was refused; any name outside [`AdmissionSection`] is refused.
pub const OUTCOME_SECTIONS: [&str; 10] = [
    "Physical Exam during Stay and at Discharge",
    "Pertinent Results",
    "Brief Hospital Course",
    "Medication at Discharge",
    "Discharge Disposition",
    "Facility",
    "Discharge Diagnosis",
    "Discharge Condition",
    "Discharge Instructions",
    "Followup Instructions",
];

fn squash(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissionNote {
    pub note_id: String,
    sections: BTreeMap<AdmissionSection, String>,
}

impl AdmissionNote {
    pub fn new<I, K, V>(note_id: impl Into<String>, sections: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        let note_id = note_id.into();
        let mut map = BTreeMap::new();
        for (name, text) in sections {
            let name = name.as_ref();
            let section =
                AdmissionSection::from_name(name).ok_or_else(|| CorpusError::ForbiddenSection {
                    note_id: note_id.clone(),
                    section: name.to_owned(),
                })?;
            if map.insert(section, text.into()).is_some() {
                return Err(CorpusError::DuplicateSection {
                    note_id,
                    section: name.to_owned(),
                });
            }
        }
        Ok(AdmissionNote {
            note_id,
            sections: map,
        })
    }

    pub fn sections(&self) -> impl Iterator<Item = (AdmissionSection, &str)> {
        self.sections.iter().map(|(s, t)| (*s, t.as_str()))
    }

    pub fn section(&self, section: AdmissionSection) -> Option<&str> {
        self.sections.get(&section).map(String::as_str)
    }

    /// `"<Section>: <text>"` blocks in canonical section order joined by a
    /// blank line.
    pub fn full_text(&self) -> String {
        self.sections
            .iter()
            .map(|(s, t)| format!("{}: {}", s.name(), t))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CareModule {
    Hosp,
    Icu,
}

impl std::str::FromStr for CareModule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hosp" => Ok(CareModule::Hosp),
            "icu" => Ok(CareModule::Icu),
            _ => Err(format!("unknown care module {s:?} (hosp or icu)")),
        }
    }
}

/// A note with its 3-character labels; `labels[0]` is the main diagnosis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledNote {
    pub note: AdmissionNote,
    pub labels: Vec<String>,
    /// Canonical full codes in annotation order, duplicates removed.
    pub full_labels: Vec<String>,
    pub module: CareModule,
    pub version: IcdVersion,
}

impl LabeledNote {
    pub fn id(&self) -> &str {
        &self.note.note_id
    }

    pub fn main_diagnosis(&self) -> &str {
        &self.labels[0]
    }
}
