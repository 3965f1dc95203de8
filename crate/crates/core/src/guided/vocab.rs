//! Token vocabularies. File format: a header line `{"eos_id": n}` followed by
//! one `{"id": int, "bytes": base64}` object per token; ids must be dense.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GuidedError;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    eos_id: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct TokenLine {
    id: u32,
    bytes: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    eos_id: u32,
    hash: [u8; 32],
}

impl Vocabulary {
    pub fn new(tokens: Vec<Vec<u8>>, eos_id: u32) -> Result<Self, GuidedError> {
        if tokens.is_empty() {
            return Err(GuidedError::InvalidVocabulary("no tokens".into()));
        }
        if eos_id as usize >= tokens.len() {
            return Err(GuidedError::InvalidVocabulary(format!(
                "eos id {eos_id} outside 0..{}",
                tokens.len()
            )));
        }
        let mut v = Vocabulary {
            tokens,
            eos_id,
            hash: [0; 32],
        };
        v.hash = Sha256::digest(v.to_jsonl()).into();
        Ok(v)
    }

    /// Printable ASCII bytes, then `merges` as extra multi-byte tokens, then
    /// an empty eos token. Used for toy tests and synthetic runs.
    pub fn printable_ascii<S: AsRef<str>>(merges: &[S]) -> Self {
        let mut tokens: Vec<Vec<u8>> = (0x20u8..=0x7e).map(|b| vec![b]).collect();
        tokens.extend([b"\n".to_vec(), b"\t".to_vec()]);
        for m in merges {
            let m = m.as_ref().as_bytes().to_vec();
            if !tokens.contains(&m) {
                tokens.push(m);
            }
        }
        tokens.push(Vec::new());
        let eos = (tokens.len() - 1) as u32;
        Self::new(tokens, eos).expect("non-empty vocabulary")
    }

    /// [`Self::printable_ascii`] plus JSON scaffolding pieces and `merges`
    /// random lowercase words of 2–8 bytes, so typical outputs take a few
    /// hundred tokens rather than one per byte.
    pub fn synthetic(merges: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut pieces: Vec<String> = [
            "{\"diagnoses\": [\"",
            "{\"reasoning\": \"",
            "\", \"diagnoses\": [\"",
            "\", \"",
            "\"]}",
            "\",\"",
            "\"",
        ]
        .map(str::to_owned)
        .to_vec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        while pieces.len() < merges + 7 {
            let len = rng.random_range(2..=8);
            let mut w: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
            if rng.random_bool(0.3) {
                w.insert(0, ' ');
            }
            pieces.push(w);
        }
        Self::printable_ascii(&pieces)
    }

    pub fn from_jsonl(bytes: &[u8]) -> Result<Self, GuidedError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| GuidedError::InvalidVocabulary("file is not UTF-8".into()))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Header = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| GuidedError::InvalidVocabulary("missing header".into()))?,
        )
        .map_err(|e| GuidedError::InvalidVocabulary(format!("header: {e}")))?;
        let mut by_id = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let t: TokenLine = serde_json::from_str(line)
                .map_err(|e| GuidedError::InvalidVocabulary(format!("line {}: {e}", i + 2)))?;
            let bytes = STANDARD
                .decode(&t.bytes)
                .map_err(|e| GuidedError::InvalidVocabulary(format!("line {}: {e}", i + 2)))?;
            if by_id.insert(t.id, bytes).is_some() {
                return Err(GuidedError::InvalidVocabulary(format!("duplicate id {}", t.id)));
            }
        }
        if by_id.keys().enumerate().any(|(i, &id)| i as u32 != id) {
            return Err(GuidedError::InvalidVocabulary("token ids are not dense".into()));
        }
        let mut v = Self::new(by_id.into_values().collect(), header.eos_id)?;
        v.hash = Sha256::digest(bytes).into();
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self, GuidedError> {
        let bytes = std::fs::read(path).map_err(|e| GuidedError::Io(path.display().to_string(), e))?;
        Self::from_jsonl(&bytes)
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        serde_json::to_writer(&mut out, &Header { eos_id: self.eos_id }).expect("header");
        out.push(b'\n');
        for (id, bytes) in self.tokens.iter().enumerate() {
            let line = TokenLine {
                id: id as u32,
                bytes: STANDARD.encode(bytes),
            };
            serde_json::to_writer(&mut out, &line).expect("token line");
            out.write_all(b"\n").expect("vec write");
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos_id(&self) -> u32 {
        self.eos_id
    }

    pub fn token(&self, id: u32) -> &[u8] {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> impl Iterator<Item = (u32, &[u8])> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (i as u32, t.as_slice()))
    }

    /// SHA-256 of the vocabulary file this was loaded from (or of its
    /// canonical serialization when built in memory).
    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn hash_hex(&self) -> String {
        self.hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<u8> {
        ids.iter()
            .filter(|&&id| id != self.eos_id)
            .flat_map(|&id| self.token(id).iter().copied())
            .collect()
    }

    /// Greedy longest-match tokenization; `None` when some byte cannot be
    /// covered.
    pub fn encode_greedy(&self, bytes: &[u8]) -> Option<Vec<u32>> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < bytes.len() {
            let (id, len) = self
                .tokens()
                .filter(|(id, t)| *id != self.eos_id && !t.is_empty() && bytes[pos..].starts_with(t))
                .map(|(id, t)| (id, t.len()))
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))?;
            out.push(id);
            pos += len;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_roundtrip_and_hash() {
        let v = Vocabulary::printable_ascii(&["ab", "\", \""]);
        let bytes = v.to_jsonl();
        let back = Vocabulary::from_jsonl(&bytes).unwrap();
        assert_eq!(back, v);
        let expect: [u8; 32] = Sha256::digest(&bytes).into();
        assert_eq!(back.hash(), expect);
    }

    #[test]
    fn invalid_files() {
        assert!(Vocabulary::from_jsonl(b"").is_err());
        assert!(Vocabulary::from_jsonl(b"{\"eos_id\":0}\n{\"id\":1,\"bytes\":\"YQ==\"}\n").is_err());
        assert!(Vocabulary::from_jsonl(b"{\"eos_id\":5}\n{\"id\":0,\"bytes\":\"YQ==\"}\n").is_err());
    }

    #[test]
    fn greedy_encoding_prefers_longest() {
        let v = Vocabulary::printable_ascii(&["ab", "abc"]);
        let ids = v.encode_greedy(b"abcab").unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(v.decode(&ids), b"abcab");
        assert!(v.encode_greedy(&[0xff]).is_none());
    }
}
