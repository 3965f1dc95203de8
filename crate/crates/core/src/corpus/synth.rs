use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CareModule, CodeTable, CorpusError, IcdEntry, IcdVersion, NoteRecord};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub notes: usize,
    pub codes: usize,
    pub seed: u64,
    pub version: IcdVersion,
    pub module: CareModule,
    pub min_labels: usize,
    pub max_labels: usize,
    /// Exponent of the Zipf law over categories.
    pub zipf_exponent: f64,
    /// Probability that a label's signature terms appear in the note. Kept
    /// well below 1: many discharge diagnoses are not yet visible at admission.
    pub mention_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            notes: 300,
            codes: 50,
            seed: 0,
            version: IcdVersion::Icd10,
            module: CareModule::Hosp,
            min_labels: 3,
            max_labels: 8,
            zipf_exponent: 1.0,
            mention_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub codes: CodeTable,
    pub notes: Vec<NoteRecord>,
    /// Signature terms per category, the words that tie text to labels.
    pub signatures: BTreeMap<String, [String; 2]>,
}

const ONSETS: [&str; 16] = [
    "b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "th",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
const CODAS: [&str; 8] = ["", "n", "r", "s", "x", "l", "m", "t"];
const FILLER: [&str; 24] = [
    "patient", "presents", "with", "history", "of", "reports", "denies", "noted", "since",
    "days", "weeks", "mild", "severe", "acute", "chronic", "stable", "admitted", "for",
    "evaluation", "and", "the", "was", "on", "exam",
];
const QUALIFIERS: [&str; 4] = ["complication", "exacerbation", "crisis", "residual"];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    (0..syllables)
        .map(|_| {
            format!(
                "{}{}{}",
                ONSETS.choose(rng).unwrap(),
                VOWELS.choose(rng).unwrap(),
                CODAS.choose(rng).unwrap()
            )
        })
        .collect()
}

fn category_code(version: IcdVersion, i: usize) -> String {
    match version {
        IcdVersion::Icd9 => format!("{:03}", i + 1),
        IcdVersion::Icd10 => {
            let letter = (b'A' + (i / 100) as u8) as char;
            format!("{letter}{:02}", i % 100)
        }
    }
}

fn sub_code(version: IcdVersion, category: &str, k: usize) -> String {
    match version {
        IcdVersion::Icd9 => format!("{category}{k}"),
        IcdVersion::Icd10 => format!("{category}.{k}"),
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generate a code table and a notes file with the ingest schema. Labels are
/// drawn from a Zipf law over categories and each label's signature words are
/// planted in the note text, so lexical retrieval has real signal.
pub fn synthesize(cfg: &SynthConfig) -> Result<SynthCorpus, CorpusError> {
    let max_codes = match cfg.version {
        IcdVersion::Icd9 => 999,
        IcdVersion::Icd10 => 2600,
    };
    if cfg.codes == 0 || cfg.codes > max_codes {
        return Err(CorpusError::InvalidRatios(format!(
            "code count must be in 1..={max_codes}"
        )));
    }
    if cfg.min_labels == 0 || cfg.min_labels > cfg.max_labels {
        return Err(CorpusError::InvalidRatios("label range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut used = BTreeSet::new();
    let mut fresh_word = |rng: &mut ChaCha8Rng| loop {
        let w = pseudo_word(rng);
        if used.insert(w.clone()) {
            break w;
        }
    };

    let mut entries = Vec::new();
    let mut signatures = BTreeMap::new();
    let mut categories = Vec::with_capacity(cfg.codes);
    for i in 0..cfg.codes {
        let short = category_code(cfg.version, i);
        let sig = [fresh_word(&mut rng), fresh_word(&mut rng)];
        let base = format!("{} {} disorder", capitalize(&sig[0]), sig[1]);
        entries.push(IcdEntry::new(
            &short,
            cfg.version,
            base.clone(),
            format!("{base}, unspecified"),
        )?);
        let mut members = vec![short.clone()];
        for k in 0..2 {
            let q = QUALIFIERS[(i + k) % QUALIFIERS.len()];
            let full = sub_code(cfg.version, &short, k);
            entries.push(IcdEntry::new(
                &full,
                cfg.version,
                format!("{base} w {q}"),
                format!("{base} with {q}"),
            )?);
            members.push(full);
        }
        signatures.insert(short.clone(), sig);
        categories.push((short, members));
    }

    let weights: Vec<f64> = (0..cfg.codes)
        .map(|r| 1.0 / ((r + 1) as f64).powf(cfg.zipf_exponent))
        .collect();
    let zipf = WeightedIndex::new(&weights).expect("positive weights");
    let max_labels = cfg.max_labels.min(cfg.codes);
    let min_labels = cfg.min_labels.min(max_labels);

    let mut notes = Vec::with_capacity(cfg.notes);
    for n in 0..cfg.notes {
        let k = rng.random_range(min_labels..=max_labels);
        let mut picked: Vec<usize> = Vec::with_capacity(k);
        while picked.len() < k {
            let c = zipf.sample(&mut rng);
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        let filler = |rng: &mut ChaCha8Rng, len: usize| {
            (0..len)
                .map(|_| *FILLER.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        };

        let mut hpi = Vec::new();
        for &c in &picked {
            if rng.random_bool(cfg.mention_rate) {
                let [a, b] = &signatures[&categories[c].0];
                hpi.push(format!("{} {a} {b}", filler(&mut rng, 3)));
            }
        }
        hpi.push(filler(&mut rng, 8));
        let main_sig = &signatures[&categories[picked[0]].0];

        let labels = picked
            .iter()
            .map(|&c| categories[c].1.choose(&mut rng).unwrap().clone())
            .collect();
        let sections = BTreeMap::from([
            ("Chief Complaint".to_owned(), format!("{} {}", main_sig[0], filler(&mut rng, 2))),
            ("History of Present Illness".to_owned(), hpi.join(". ")),
            ("Past Medical History".to_owned(), filler(&mut rng, 6)),
            ("Physical Exam at Admission".to_owned(), filler(&mut rng, 6)),
            ("Medication at Admission".to_owned(), filler(&mut rng, 3)),
        ]);
        notes.push(NoteRecord {
            note_id: format!("N{n:06}"),
            sections,
            labels,
            module: cfg.module,
            icd_version: cfg.version,
        });
    }

    Ok(SynthCorpus {
        codes: CodeTable::new(entries)?,
        notes,
        signatures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ingest_records;

    #[test]
    fn deterministic_and_ingestible() {
        let cfg = SynthConfig {
            notes: 50,
            codes: 20,
            seed: 7,
            ..Default::default()
        };
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a.notes, b.notes);
        assert_eq!(a.codes.entries(), b.codes.entries());
        let notes = ingest_records(a.notes.clone(), &a.codes).unwrap();
        assert_eq!(notes.len(), 50);
        assert!(notes.iter().all(|n| (3..=8).contains(&n.labels.len())));
    }

    #[test]
    fn icd9_codes_are_numeric() {
        let cfg = SynthConfig {
            notes: 5,
            codes: 12,
            version: IcdVersion::Icd9,
            ..Default::default()
        };
        let s = synthesize(&cfg).unwrap();
        assert!(s.codes.entries().iter().all(|e| e.full_code.chars().all(|c| c.is_ascii_digit())));
        ingest_records(s.notes, &s.codes).unwrap();
    }
}
