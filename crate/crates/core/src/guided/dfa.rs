//! Byte-level DFA with dead states removed, extracted from a regex-automata
//! dense DFA so it can be walked, serialized and compared directly.

use std::collections::{HashMap, VecDeque};

use regex_automata::dfa::{dense, Automaton, StartKind};
use regex_automata::nfa::thompson;
use regex_automata::util::{start, syntax};
use regex_automata::{Anchored, MatchKind};

use super::GuidedError;

pub const DEAD: u32 = u32::MAX;

/// Anchored full-match DFA over bytes. Every stored state can still reach an
/// accepting state; transitions that cannot are [`DEAD`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteDfa {
    start: u32,
    accepting: Vec<bool>,
    trans: Vec<u32>,
}

impl ByteDfa {
    pub fn compile(pattern: &str) -> Result<Self, GuidedError> {
        let dfa = dense::Builder::new()
            .configure(
                // leftmost-first would prune lower-priority branches once an
                // earlier one matches (`a|ab` would reject "ab")
                dense::Config::new()
                    .match_kind(MatchKind::All)
                    .start_kind(StartKind::Anchored)
                    .dfa_size_limit(None)
                    .determinize_size_limit(None),
            )
            .syntax(syntax::Config::new().unicode(false).utf8(false))
            .thompson(thompson::Config::new().nfa_size_limit(None))
            .build(pattern)
            .map_err(|e| GuidedError::RegexParse(e.to_string()))?;
        let start_id = dfa
            .start_state(&start::Config::new().anchored(Anchored::Yes))
            .map_err(|e| GuidedError::RegexParse(e.to_string()))?;

        // Breadth-first renumbering of every non-dead state.
        let mut ids = HashMap::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        ids.insert(start_id, 0u32);
        order.push(start_id);
        queue.push_back(start_id);
        let mut trans = Vec::new();
        let mut accepting = Vec::new();
        while let Some(sid) = queue.pop_front() {
            accepting.push(dfa.is_match_state(dfa.next_eoi_state(sid)));
            for byte in 0..=255u8 {
                let next = dfa.next_state(sid, byte);
                if dfa.is_dead_state(next) || dfa.is_quit_state(next) {
                    trans.push(DEAD);
                    continue;
                }
                let id = *ids.entry(next).or_insert_with(|| {
                    order.push(next);
                    queue.push_back(next);
                    (order.len() - 1) as u32
                });
                trans.push(id);
            }
        }
        let raw = ByteDfa {
            start: 0,
            accepting,
            trans,
        };
        raw.prune()
    }

    /// Drop states that cannot reach acceptance and renumber the survivors
    /// in their original order.
    fn prune(self) -> Result<Self, GuidedError> {
        let n = self.accepting.len();
        let mut reverse: Vec<Vec<u32>> = vec![Vec::new(); n];
        for s in 0..n {
            for b in 0..256 {
                let t = self.trans[s * 256 + b];
                if t != DEAD {
                    reverse[t as usize].push(s as u32);
                }
            }
        }
        let mut live = self.accepting.clone();
        let mut stack: Vec<usize> = (0..n).filter(|&s| live[s]).collect();
        while let Some(s) = stack.pop() {
            for &p in &reverse[s] {
                if !live[p as usize] {
                    live[p as usize] = true;
                    stack.push(p as usize);
                }
            }
        }
        if !live[self.start as usize] {
            return Err(GuidedError::EmptyLanguage);
        }
        let mut remap = vec![DEAD; n];
        let mut next_id = 0u32;
        for s in 0..n {
            if live[s] {
                remap[s] = next_id;
                next_id += 1;
            }
        }
        let mut trans = Vec::with_capacity(next_id as usize * 256);
        let mut accepting = Vec::with_capacity(next_id as usize);
        for s in (0..n).filter(|&s| live[s]) {
            accepting.push(self.accepting[s]);
            for b in 0..256 {
                let t = self.trans[s * 256 + b];
                trans.push(if t == DEAD { DEAD } else { remap[t as usize] });
            }
        }
        Ok(ByteDfa {
            start: remap[self.start as usize],
            accepting,
            trans,
        })
    }

    pub(crate) fn from_parts(start: u32, accepting: Vec<bool>, trans: Vec<u32>) -> Result<Self, GuidedError> {
        let n = accepting.len();
        if trans.len() != n * 256 || start as usize >= n.max(1) || n == 0 {
            return Err(GuidedError::CacheFormat("inconsistent byte DFA tables".into()));
        }
        if trans.iter().any(|&t| t != DEAD && t as usize >= n) {
            return Err(GuidedError::CacheFormat("byte DFA transition out of range".into()));
        }
        Ok(ByteDfa {
            start,
            accepting,
            trans,
        })
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn state_count(&self) -> usize {
        self.accepting.len()
    }

    pub fn is_accepting(&self, state: u32) -> bool {
        self.accepting[state as usize]
    }

    pub(crate) fn accepting(&self) -> &[bool] {
        &self.accepting
    }

    pub(crate) fn table(&self) -> &[u32] {
        &self.trans
    }

    /// Next live state, or `None` if the byte leads outside the language.
    pub fn next(&self, state: u32, byte: u8) -> Option<u32> {
        match self.trans[state as usize * 256 + byte as usize] {
            DEAD => None,
            t => Some(t),
        }
    }

    pub fn walk(&self, state: u32, bytes: &[u8]) -> Option<u32> {
        bytes.iter().try_fold(state, |s, &b| self.next(s, b))
    }

    /// Full-match test.
    pub fn accepts(&self, bytes: &[u8]) -> bool {
        self.walk(self.start, bytes)
            .is_some_and(|s| self.is_accepting(s))
    }

    /// Bytes with a live transition out of `state`.
    pub fn live_bytes(&self, state: u32) -> Vec<u8> {
        (0..=255u8).filter(|&b| self.next(state, b).is_some()).collect()
    }
}
