use std::collections::{HashMap, VecDeque};

use sha2::{Digest, Sha256};

use super::{ByteDfa, GuidedError, Vocabulary};

/// Generation limits; decoding is always greedy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationBudget {
    pub max_tokens: usize,
    pub temperature: f32,
}

impl Default for GenerationBudget {
    fn default() -> Self {
        GenerationBudget {
            max_tokens: 1500,
            temperature: 0.0,
        }
    }
}

#[derive(Default)]
struct TrieNode {
    children: Vec<(u8, usize)>,
    tokens: Vec<u32>,
}

struct TokenTrie {
    nodes: Vec<TrieNode>,
}

impl TokenTrie {
    fn new(vocab: &Vocabulary) -> Self {
        let mut nodes = vec![TrieNode::default()];
        for (id, bytes) in vocab.tokens() {
            if id == vocab.eos_id() || bytes.is_empty() {
                continue;
            }
            let mut at = 0;
            for &b in bytes {
                at = match nodes[at].children.iter().find(|(c, _)| *c == b) {
                    Some(&(_, child)) => child,
                    None => {
                        nodes.push(TrieNode::default());
                        let child = nodes.len() - 1;
                        nodes[at].children.push((b, child));
                        child
                    }
                };
            }
            nodes[at].tokens.push(id);
        }
        TokenTrie { nodes }
    }

    /// All `(token, end_state)` pairs whose bytes stay live from `state`.
    fn edges_from(&self, dfa: &ByteDfa, state: u32) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, state)];
        while let Some((node, s)) = stack.pop() {
            for &(byte, child) in &self.nodes[node].children {
                if let Some(next) = dfa.next(s, byte) {
                    out.extend(self.nodes[child].tokens.iter().map(|&t| (t, next)));
                    stack.push((child, next));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Token-level automaton with a precomputed allowed-token bitmask per state.
///
/// A token is allowed in a state iff walking its bytes through the byte DFA
/// never leaves the live states; eos is allowed exactly in accepting states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskAutomaton {
    pub(crate) char_dfa: ByteDfa,
    pub(crate) vocab_size: u32,
    pub(crate) eos_id: u32,
    pub(crate) start: u32,
    pub(crate) char_state: Vec<u32>,
    pub(crate) accepting: Vec<bool>,
    pub(crate) edges: Vec<Vec<(u32, u32)>>,
    pub(crate) masks: Vec<u64>,
    pub(crate) regex_hash: [u8; 32],
    pub(crate) vocab_hash: [u8; 32],
}

pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

pub(crate) fn regex_digest(regex: &str) -> [u8; 32] {
    Sha256::digest(regex.as_bytes()).into()
}

/// Outcome of one greedy decoding step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepChoice {
    Token { token: u32, next_state: u32 },
    Finished,
}

impl MaskAutomaton {
    pub fn compile(regex: &str, vocab: &Vocabulary) -> Result<Self, GuidedError> {
        if vocab.is_empty() {
            return Err(GuidedError::InvalidVocabulary("empty vocabulary".into()));
        }
        let dfa = ByteDfa::compile(regex)?;
        let trie = TokenTrie::new(vocab);

        let mut index: HashMap<u32, u32> = HashMap::new();
        let mut char_state = vec![dfa.start()];
        let mut raw_edges: Vec<Vec<(u32, u32)>> = Vec::new();
        index.insert(dfa.start(), 0);
        let mut queue = VecDeque::from([dfa.start()]);
        while let Some(cs) = queue.pop_front() {
            let mut edges = trie.edges_from(&dfa, cs);
            for e in edges.iter_mut() {
                let target = e.1;
                e.1 = *index.entry(target).or_insert_with(|| {
                    char_state.push(target);
                    queue.push_back(target);
                    (char_state.len() - 1) as u32
                });
            }
            raw_edges.push(edges);
        }

        let accepting: Vec<bool> = char_state.iter().map(|&c| dfa.is_accepting(c)).collect();
        for (s, edges) in raw_edges.iter().enumerate() {
            if edges.is_empty() && !accepting[s] {
                return Err(GuidedError::VocabCoverage {
                    state: s as u32,
                    needed: dfa.live_bytes(char_state[s]),
                });
            }
        }

        let v = vocab.len();
        let words = words_for(v);
        let mut masks = vec![0u64; words * char_state.len()];
        for (s, edges) in raw_edges.iter().enumerate() {
            let row = &mut masks[s * words..(s + 1) * words];
            for &(t, _) in edges {
                row[t as usize / 64] |= 1 << (t % 64);
            }
            if accepting[s] {
                let e = vocab.eos_id();
                row[e as usize / 64] |= 1 << (e % 64);
            }
        }

        Ok(MaskAutomaton {
            char_dfa: dfa,
            vocab_size: v as u32,
            eos_id: vocab.eos_id(),
            start: 0,
            char_state,
            accepting,
            edges: raw_edges,
            masks,
            regex_hash: regex_digest(regex),
            vocab_hash: vocab.hash(),
        })
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn state_count(&self) -> usize {
        self.accepting.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size as usize
    }

    pub fn eos_id(&self) -> u32 {
        self.eos_id
    }

    pub fn is_accepting(&self, state: u32) -> bool {
        self.accepting[state as usize]
    }

    pub fn char_dfa(&self) -> &ByteDfa {
        &self.char_dfa
    }

    /// Byte-DFA state a token state stands for.
    pub fn char_state(&self, state: u32) -> u32 {
        self.char_state[state as usize]
    }

    pub fn vocab_hash(&self) -> [u8; 32] {
        self.vocab_hash
    }

    pub fn matches_regex(&self, regex: &str) -> bool {
        self.regex_hash == regex_digest(regex)
    }

    pub fn edges(&self, state: u32) -> &[(u32, u32)] {
        &self.edges[state as usize]
    }

    pub fn mask_words(&self, state: u32) -> &[u64] {
        let w = words_for(self.vocab_size as usize);
        &self.masks[state as usize * w..(state as usize + 1) * w]
    }

    pub fn is_allowed(&self, state: u32, token: u32) -> bool {
        token < self.vocab_size && self.mask_words(state)[token as usize / 64] >> (token % 64) & 1 == 1
    }

    /// Allowed token ids in ascending order.
    pub fn allowed(&self, state: u32) -> Vec<u32> {
        let mut out = Vec::new();
        for (w, &word) in self.mask_words(state).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros();
                out.push(w as u32 * 64 + b);
                bits &= bits - 1;
            }
        }
        out
    }

    pub fn next_state(&self, state: u32, token: u32) -> Option<u32> {
        let edges = &self.edges[state as usize];
        edges
            .binary_search_by(|(t, _)| t.cmp(&token))
            .ok()
            .map(|i| edges[i].1)
    }

    /// Greedy masked argmax. Ties go to the lowest token id; NaN logits are
    /// never preferred over a number.
    pub fn step(&self, state: u32, logits: &[f32]) -> Result<StepChoice, GuidedError> {
        if logits.len() != self.vocab_size as usize {
            return Err(GuidedError::LogitsLength {
                expected: self.vocab_size as usize,
                found: logits.len(),
            });
        }
        let mut best: Option<(u32, f32)> = None;
        for (w, &word) in self.mask_words(state).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let t = w as u32 * 64 + bits.trailing_zeros();
                bits &= bits - 1;
                let l = logits[t as usize];
                let l = if l.is_nan() { f32::NEG_INFINITY } else { l };
                if best.is_none_or(|(_, bl)| l > bl) {
                    best = Some((t, l));
                }
            }
        }
        match best {
            None => Err(GuidedError::NoAllowedToken { state }),
            Some((t, _)) if t == self.eos_id && self.is_accepting(state) => Ok(StepChoice::Finished),
            Some((t, _)) => Ok(StepChoice::Token {
                token: t,
                next_state: self
                    .next_state(state, t)
                    .ok_or(GuidedError::NoAllowedToken { state })?,
            }),
        }
    }

    pub fn session(&self, budget: GenerationBudget) -> DecodeSession<'_> {
        DecodeSession {
            automaton: self,
            state: self.start,
            tokens: Vec::new(),
            budget,
            finished: false,
        }
    }
}

/// One decoding cursor over a shared automaton.
#[derive(Debug, Clone)]
pub struct DecodeSession<'a> {
    automaton: &'a MaskAutomaton,
    state: u32,
    tokens: Vec<u32>,
    budget: GenerationBudget,
    finished: bool,
}

impl DecodeSession<'_> {
    pub fn state(&self) -> u32 {
        self.state
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Consume one logits vector. Returns [`StepChoice::Finished`] once eos
    /// wins or the token budget is spent in an accepting state.
    pub fn step(&mut self, logits: &[f32]) -> Result<StepChoice, GuidedError> {
        if self.finished {
            return Ok(StepChoice::Finished);
        }
        if self.tokens.len() >= self.budget.max_tokens {
            return if self.automaton.is_accepting(self.state) {
                self.finished = true;
                Ok(StepChoice::Finished)
            } else {
                Err(GuidedError::BudgetExhaustedInvalid {
                    tokens: self.tokens.len(),
                })
            };
        }
        let choice = self.automaton.step(self.state, logits)?;
        match choice {
            StepChoice::Token { token, next_state } => {
                self.tokens.push(token);
                self.state = next_state;
            }
            StepChoice::Finished => self.finished = true,
        }
        Ok(choice)
    }

    /// Run to completion, pulling logits from `next_logits` with the tokens
    /// generated so far.
    pub fn run<F, E>(&mut self, mut next_logits: F) -> Result<Vec<u32>, E>
    where
        F: FnMut(&[u32]) -> Result<Vec<f32>, E>,
        E: From<GuidedError>,
    {
        while !self.finished {
            if self.tokens.len() >= self.budget.max_tokens {
                self.step(&[])?;
                continue;
            }
            let logits = next_logits(&self.tokens)?;
            self.step(&logits)?;
        }
        Ok(self.tokens.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        let mut t: Vec<Vec<u8>> = tokens.iter().map(|s| s.as_bytes().to_vec()).collect();
        t.push(Vec::new());
        let eos = (t.len() - 1) as u32;
        Vocabulary::new(t, eos).unwrap()
    }

    #[test]
    fn start_mask_is_prefix_closure() {
        let v = vocab(&["a", "b", "ab"]);
        let a = MaskAutomaton::compile("ab", &v).unwrap();
        assert_eq!(a.allowed(a.start()), vec![0, 2]);
        let after_ab = a.next_state(a.start(), 2).unwrap();
        assert!(a.is_accepting(after_ab));
        assert_eq!(a.allowed(after_ab), vec![3]);
    }

    #[test]
    fn forced_move_ignores_logits() {
        let v = vocab(&["a", "b"]);
        let a = MaskAutomaton::compile("b", &v).unwrap();
        let choice = a.step(a.start(), &[10.0, -10.0, 99.0]).unwrap();
        assert_eq!(choice, StepChoice::Token { token: 1, next_state: a.next_state(0, 1).unwrap() });
    }

    #[test]
    fn mask_takes_precedence_over_logits() {
        let v = vocab(&["a", "b", "c"]);
        let a = MaskAutomaton::compile("[ab]", &v).unwrap();
        let choice = a.step(a.start(), &[0.1, 0.5, 9.0, 9.0]).unwrap();
        assert!(matches!(choice, StepChoice::Token { token: 1, .. }));
    }

    #[test]
    fn eos_only_in_accepting_states() {
        let v = vocab(&["a"]);
        let a = MaskAutomaton::compile("a+", &v).unwrap();
        assert!(!a.is_allowed(a.start(), 1));
        // eos logit highest but the start state is not accepting
        let c = a.step(a.start(), &[0.0, 5.0]).unwrap();
        assert!(matches!(c, StepChoice::Token { token: 0, .. }));
        let s = a.next_state(a.start(), 0).unwrap();
        assert_eq!(a.step(s, &[0.0, 5.0]).unwrap(), StepChoice::Finished);
    }

    #[test]
    fn coverage_error_when_byte_has_no_token() {
        let v = vocab(&["a", "c"]);
        match MaskAutomaton::compile("ab", &v) {
            Err(GuidedError::VocabCoverage { needed, .. }) => assert_eq!(needed, b"b".to_vec()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn budget_exhaustion() {
        let v = vocab(&["a"]);
        let a = MaskAutomaton::compile("a{5}", &v).unwrap();
        let budget = GenerationBudget { max_tokens: 3, ..Default::default() };
        let mut s = a.session(budget);
        for _ in 0..3 {
            s.step(&[1.0, 0.0]).unwrap();
        }
        assert!(matches!(
            s.step(&[1.0, 0.0]),
            Err(GuidedError::BudgetExhaustedInvalid { tokens: 3 })
        ));

        let a = MaskAutomaton::compile("a+", &v).unwrap();
        let mut s = a.session(GenerationBudget { max_tokens: 2, ..Default::default() });
        let out = s.run(|_| Ok::<_, GuidedError>(vec![1.0, 0.0])).unwrap();
        assert_eq!(out, vec![0, 0]);
    }

    #[test]
    fn logits_length_checked() {
        let v = vocab(&["a"]);
        let a = MaskAutomaton::compile("a", &v).unwrap();
        assert!(matches!(a.step(0, &[1.0]), Err(GuidedError::LogitsLength { .. })));
    }
}
