use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use clinibench::corpus::{load_dataset, DatasetSplit, LabeledNote};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_split(path: &Path) -> Result<DatasetSplit> {
    Ok(DatasetSplit::from_json(&read_text(path)?)?)
}

/// Dataset notes keyed by id.
pub struct Dataset {
    pub notes: Vec<LabeledNote>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let notes = load_dataset(path)?;
        let index = notes.iter().enumerate().map(|(i, n)| (n.id().to_owned(), i)).collect();
        Ok(Dataset { notes, index })
    }

    pub fn get(&self, id: &str) -> Result<&LabeledNote> {
        match self.index.get(id) {
            Some(&i) => Ok(&self.notes[i]),
            None => bail!("note {id} is not in the dataset"),
        }
    }

    pub fn part<'a>(&'a self, split: &'a DatasetSplit, part: &str) -> Result<Vec<&'a LabeledNote>> {
        let Some(ids) = split.ids(part) else {
            bail!("unknown split part {part:?} (train, val or test)");
        };
        ids.iter().map(|id| self.get(id)).collect()
    }

    /// Short-code labels, main diagnosis first.
    pub fn labels<'a>(&self, notes: impl IntoIterator<Item = &'a LabeledNote>) -> HashMap<String, Vec<String>> {
        notes.into_iter().map(|n| (n.id().to_owned(), n.labels.clone())).collect()
    }
}

/// Map `f` over `items` on up to `jobs` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs.min(items.len()));
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Print a progress line; a closed stdout (e.g. piped into `head`) is ignored.
pub fn emit(line: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().with_context(|| format!("not a count: {p:?}")))
        .collect()
}
