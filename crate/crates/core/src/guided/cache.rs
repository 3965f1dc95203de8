//! Versioned binary automaton cache.
//!
//! Layout (all integers little-endian):
//! `"CBFA2"`, `u32` token-state count, `u32` start, `u32` vocab size,
//! `u32` eos id, 32-byte regex SHA-256, 32-byte vocabulary SHA-256,
//! `u32` byte-DFA state count, `u32` byte-DFA start, byte-DFA accepting bitset,
//! byte-DFA transitions (`states × 256 × u32`), token→byte state map
//! (`states × u32`), token-state accepting bitset, per state `u32` edge count
//! followed by `(u32 token, u32 next)` pairs, then the allowed masks as
//! `states × ceil(vocab / 64)` `u64` words. Bitsets are plain `u64` words.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::automaton::words_for;
use super::{ByteDfa, GuidedError, MaskAutomaton, Vocabulary};

pub const MAGIC: &[u8; 5] = b"CBFA2";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bits(out: &mut Vec<u8>, bits: &[bool]) {
    let mut words = vec![0u64; words_for(bits.len())];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], GuidedError> {
        if self.buf.len() < n {
            return Err(GuidedError::CacheFormat("truncated automaton file".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, GuidedError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, GuidedError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn hash(&mut self) -> Result<[u8; 32], GuidedError> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn bits(&mut self, n: usize) -> Result<Vec<bool>, GuidedError> {
        let words = (0..words_for(n)).map(|_| self.u64()).collect::<Result<Vec<_>, _>>()?;
        Ok((0..n).map(|i| words[i / 64] >> (i % 64) & 1 == 1).collect())
    }

    /// Guard against absurd counts in corrupt files before allocating.
    fn check_len(&self, items: usize, item_size: usize) -> Result<(), GuidedError> {
        match items.checked_mul(item_size) {
            Some(total) if total <= self.buf.len() => Ok(()),
            _ => Err(GuidedError::CacheFormat("declared size exceeds file".into())),
        }
    }
}

impl MaskAutomaton {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.accepting.len() as u32);
        put_u32(&mut out, self.start);
        put_u32(&mut out, self.vocab_size);
        put_u32(&mut out, self.eos_id);
        out.extend_from_slice(&self.regex_hash);
        out.extend_from_slice(&self.vocab_hash);

        put_u32(&mut out, self.char_dfa.state_count() as u32);
        put_u32(&mut out, self.char_dfa.start());
        put_bits(&mut out, self.char_dfa.accepting());
        for &t in self.char_dfa.table() {
            put_u32(&mut out, t);
        }

        for &c in &self.char_state {
            put_u32(&mut out, c);
        }
        put_bits(&mut out, &self.accepting);
        for edges in &self.edges {
            put_u32(&mut out, edges.len() as u32);
            for &(t, n) in edges {
                put_u32(&mut out, t);
                put_u32(&mut out, n);
            }
        }
        for &w in &self.masks {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GuidedError> {
        let mut r = Reader { buf: bytes };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(GuidedError::CacheFormat("bad magic".into()));
        }
        let states = r.u32()? as usize;
        let start = r.u32()?;
        let vocab_size = r.u32()?;
        let eos_id = r.u32()?;
        let regex_hash = r.hash()?;
        let vocab_hash = r.hash()?;

        let char_states = r.u32()? as usize;
        let char_start = r.u32()?;
        let char_accepting = r.bits(char_states)?;
        r.check_len(char_states, 256 * 4)?;
        let trans = (0..char_states * 256).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let char_dfa = ByteDfa::from_parts(char_start, char_accepting, trans)?;

        r.check_len(states, 4)?;
        let char_state = (0..states).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let accepting = r.bits(states)?;
        let mut edges = Vec::with_capacity(states);
        for _ in 0..states {
            let n = r.u32()? as usize;
            r.check_len(n, 8)?;
            let list = (0..n)
                .map(|_| Ok((r.u32()?, r.u32()?)))
                .collect::<Result<Vec<_>, GuidedError>>()?;
            if list.iter().any(|&(t, s)| t >= vocab_size || s as usize >= states) {
                return Err(GuidedError::CacheFormat("edge out of range".into()));
            }
            edges.push(list);
        }
        let words = words_for(vocab_size as usize);
        r.check_len(states * words, 8)?;
        let masks = (0..states * words).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        if !r.buf.is_empty() {
            return Err(GuidedError::CacheFormat("trailing bytes".into()));
        }
        if start as usize >= states || eos_id >= vocab_size {
            return Err(GuidedError::CacheFormat("header out of range".into()));
        }
        if char_state.iter().any(|&c| c as usize >= char_states) {
            return Err(GuidedError::CacheFormat("byte state out of range".into()));
        }
        Ok(MaskAutomaton {
            char_dfa,
            vocab_size,
            eos_id,
            start,
            char_state,
            accepting,
            edges,
            masks,
            regex_hash,
            vocab_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), GuidedError> {
        let mut f = std::fs::File::create(path).map_err(|e| GuidedError::Io(path.display().to_string(), e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| GuidedError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, GuidedError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| GuidedError::Io(path.display().to_string(), e))?;
        Self::from_bytes(&buf)
    }
}

/// Cache file name for a (regex, vocabulary) pair.
pub fn cache_path(dir: &Path, regex: &str, vocab: &Vocabulary) -> PathBuf {
    let mut h = Sha256::new();
    h.update(regex.as_bytes());
    h.update(vocab.hash());
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{hex}.cbfa"))
}

/// Compile, reusing a cached automaton from `cache_dir` when one exists for
/// the same regex and vocabulary.
pub fn compile_cached(
    regex: &str,
    vocab: &Vocabulary,
    cache_dir: Option<&Path>,
) -> Result<MaskAutomaton, GuidedError> {
    let Some(dir) = cache_dir else {
        return MaskAutomaton::compile(regex, vocab);
    };
    let path = cache_path(dir, regex, vocab);
    if let Ok(a) = MaskAutomaton::load(&path) {
        if a.matches_regex(regex) && a.vocab_hash() == vocab.hash() {
            return Ok(a);
        }
    }
    let a = MaskAutomaton::compile(regex, vocab)?;
    std::fs::create_dir_all(dir).map_err(|e| GuidedError::Io(dir.display().to_string(), e))?;
    a.save(&path)?;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guided::{schema_regex, SchemaMode};

    #[test]
    fn roundtrip() {
        let v = Vocabulary::printable_ascii(&["abc", "\",\""]);
        let a = MaskAutomaton::compile("(abc|[a-c]{2})+,?", &v).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..5], b"CBFA2");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize, a.state_count());
        assert_eq!(MaskAutomaton::from_bytes(&bytes).unwrap(), a);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let v = Vocabulary::printable_ascii::<&str>(&[]);
        let a = MaskAutomaton::compile("ab", &v).unwrap();
        let bytes = a.to_bytes();
        assert!(MaskAutomaton::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(MaskAutomaton::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(MaskAutomaton::from_bytes(&extra).is_err());
    }

    #[test]
    fn cached_compile_reuses_file() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::printable_ascii(&["abc"]);
        let re = schema_regex(SchemaMode::Plain);
        let a = compile_cached(&re, &v, Some(dir.path())).unwrap();
        let path = cache_path(dir.path(), &re, &v);
        assert!(path.exists());
        let b = compile_cached(&re, &v, Some(dir.path())).unwrap();
        assert_eq!(a, b);
    }
}
