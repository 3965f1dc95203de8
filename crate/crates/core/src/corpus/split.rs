use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, LabeledNote};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, CorpusError> {
        let r = SplitRatios { train, val, test };
        let parts = [train, val, test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CorpusError::InvalidRatios(format!("{parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(CorpusError::InvalidRatios(format!("{parts:?} do not sum to 1")));
        }
        Ok(r)
    }

    /// Parse `"0.7,0.1,0.2"`.
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CorpusError::InvalidRatios(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            [a, b, c] => Self::new(*a, *b, *c),
            _ => Err(CorpusError::InvalidRatios(format!("{s:?}: expected three values"))),
        }
    }

    /// Integer split sizes by largest remainder; they always sum to `n`.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let quotas = [self.train, self.val, self.test].map(|r| r * n as f64);
        let mut sizes = quotas.map(|q| q.floor() as usize);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut left = n.saturating_sub(sizes.iter().sum());
        for i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[*i] += 1;
            left -= 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tertile {
    Head,
    Body,
    Tail,
}

impl Tertile {
    pub const ALL: [Tertile; 3] = [Tertile::Head, Tertile::Body, Tertile::Tail];

    pub fn name(self) -> &'static str {
        match self {
            Tertile::Head => "head",
            Tertile::Body => "body",
            Tertile::Tail => "tail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TertileThresholds {
    /// Largest training frequency among tail codes.
    pub tail_max_count: usize,
    /// Smallest training frequency among head codes.
    pub head_min_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    #[serde(rename = "train")]
    pub train_ids: Vec<String>,
    #[serde(rename = "val")]
    pub val_ids: Vec<String>,
    #[serde(rename = "test")]
    pub test_ids: Vec<String>,
    #[serde(rename = "registry")]
    pub label_registry: BTreeSet<String>,
    pub tertiles: BTreeMap<String, Tertile>,
    pub tertile_thresholds: TertileThresholds,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn all_ids(&self) -> impl Iterator<Item = &String> {
        self.train_ids
            .iter()
            .chain(&self.val_ids)
            .chain(&self.test_ids)
    }

    pub fn ids(&self, part: &str) -> Option<&[String]> {
        match part {
            "train" => Some(&self.train_ids),
            "val" => Some(&self.val_ids),
            "test" => Some(&self.test_ids),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        Ok(serde_json::from_str(s)?)
    }
}

fn label_counts<'a>(notes: impl Iterator<Item = &'a LabeledNote>) -> HashMap<&'a str, usize> {
    let mut counts = HashMap::new();
    for n in notes {
        for l in &n.labels {
            *counts.entry(l.as_str()).or_insert(0) += 1;
        }
    }
    counts
}

/// Rank registry codes by descending training frequency (ties by code) and cut
/// into three groups whose sizes differ by at most one.
pub(crate) fn assign_tertiles(
    registry: &BTreeSet<String>,
    train_counts: &HashMap<&str, usize>,
) -> (BTreeMap<String, Tertile>, TertileThresholds) {
    let count = |c: &str| train_counts.get(c).copied().unwrap_or(0);
    let mut ranked: Vec<&String> = registry.iter().collect();
    ranked.sort_by(|a, b| count(b).cmp(&count(a)).then_with(|| a.cmp(b)));
    let m = ranked.len();
    let head_len = m / 3 + usize::from(m % 3 > 0);
    let body_len = m / 3 + usize::from(m % 3 > 1);

    let mut tertiles = BTreeMap::new();
    for (i, code) in ranked.iter().enumerate() {
        let t = if i < head_len {
            Tertile::Head
        } else if i < head_len + body_len {
            Tertile::Body
        } else {
            Tertile::Tail
        };
        tertiles.insert((*code).clone(), t);
    }
    let thresholds = TertileThresholds {
        head_min_count: ranked[..head_len].last().map_or(0, |c| count(c)),
        tail_max_count: ranked[head_len + body_len..].first().map_or(0, |c| count(c)),
    };
    (tertiles, thresholds)
}

/// Stratify on the main diagnosis: notes are grouped by `labels[0]`, shuffled
/// inside each group, and dealt out so every prefix of the sequence stays as
/// close as possible to the target proportions.
pub fn stratified_split(
    notes: &[LabeledNote],
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if notes.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if notes.len() < 3 {
        return Err(CorpusError::TooFewNotes(notes.len()));
    }
    let mut seen = HashSet::new();
    for n in notes {
        if !seen.insert(n.id()) {
            return Err(CorpusError::DuplicateNoteId(n.id().to_owned()));
        }
    }

    let mut groups: BTreeMap<&str, Vec<&LabeledNote>> = BTreeMap::new();
    for n in notes {
        groups.entry(n.main_diagnosis()).or_default().push(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ordered = Vec::with_capacity(notes.len());
    for group in groups.values_mut() {
        group.sort_by(|a, b| a.id().cmp(b.id()));
        group.shuffle(&mut rng);
        ordered.extend(group.iter().copied());
    }

    let total = notes.len() as i128;
    let targets = ratios.sizes(notes.len());
    let mut parts: [Vec<&LabeledNote>; 3] = Default::default();
    for (i, note) in ordered.into_iter().enumerate() {
        let step = i as i128 + 1;
        let pick = (0..3)
            .filter(|&s| parts[s].len() < targets[s])
            .max_by(|&a, &b| {
                let da = targets[a] as i128 * step - parts[a].len() as i128 * total;
                let db = targets[b] as i128 * step - parts[b].len() as i128 * total;
                da.cmp(&db).then(b.cmp(&a))
            })
            .expect("targets sum to the corpus size");
        parts[pick].push(note);
    }

    let counts: Vec<HashMap<&str, usize>> =
        parts.iter().map(|p| label_counts(p.iter().copied())).collect();
    let label_registry: BTreeSet<String> = counts[0]
        .keys()
        .filter(|c| counts[1].contains_key(*c) && counts[2].contains_key(*c))
        .map(|c| c.to_string())
        .collect();
    let (tertiles, tertile_thresholds) = assign_tertiles(&label_registry, &counts[0]);

    let ids = |p: &Vec<&LabeledNote>| p.iter().map(|n| n.id().to_owned()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train_ids: ids(&parts[0]),
        val_ids: ids(&parts[1]),
        test_ids: ids(&parts[2]),
        label_registry,
        tertiles,
        tertile_thresholds,
        seed,
    })
}
