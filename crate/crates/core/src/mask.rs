//! Token-level masking: which vocabulary entries keep the recognizer alive.
//!
//! Two implementations compute the same mask. `compute_mask_naive` probes
//! every token independently and is the reference. `compute_mask` walks a
//! byte trie over the vocabulary, sharing recognizer work across tokens with
//! a common prefix and pruning whole subtrees once a prefix goes dead. The
//! two must agree bit for bit; the test suite enforces this.

use thiserror::Error;

use crate::earley::ScanCache;
use crate::recognizer::RecognizerState;
use crate::util::BitSet;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("eos id {eos} out of range for vocabulary of {len} tokens")]
    EosOutOfRange { eos: u32, len: usize },
    #[error("eos token {eos} must have empty bytes")]
    EosNotEmpty { eos: u32 },
    #[error("token {id} has empty bytes; only the eos token may be empty")]
    EmptyToken { id: u32 },
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("score vector has {got} entries but the vocabulary has {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// A dense token inventory. Ids are indexes into `tokens`. The eos token is
/// the only one allowed to carry no bytes; every other token must be a
/// nonempty byte string so detokenization is injective-enough for greedy
/// retokenization to terminate.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    eos_id: u32,
}

impl Vocabulary {
    pub fn new(tokens: Vec<Vec<u8>>, eos_id: u32) -> Result<Vocabulary, VocabError> {
        if (eos_id as usize) >= tokens.len() {
            return Err(VocabError::EosOutOfRange {
                eos: eos_id,
                len: tokens.len(),
            });
        }
        if !tokens[eos_id as usize].is_empty() {
            return Err(VocabError::EosNotEmpty { eos: eos_id });
        }
        for (id, tok) in tokens.iter().enumerate() {
            if id as u32 != eos_id && tok.is_empty() {
                return Err(VocabError::EmptyToken { id: id as u32 });
            }
        }
        Ok(Vocabulary { tokens, eos_id })
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

    pub fn token_bytes(&self, id: u32) -> &[u8] {
        &self.tokens[id as usize]
    }

    /// Concatenated bytes of a token sequence. Eos ids contribute nothing.
    pub fn detokenize(&self, ids: &[u32]) -> Vec<u8> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend_from_slice(&self.tokens[id as usize]);
        }
        out
    }

    /// Greedy longest-prefix tokenization. Returns None when no token
    /// matches at some position.
    pub fn tokenize_greedy(&self, bytes: &[u8], trie: &TokenTrie) -> Option<Vec<u32>> {
        let mut out = Vec::new();
        let mut at = 0;
        while at < bytes.len() {
            let (id, len) = trie.longest_match(&bytes[at..])?;
            out.push(id);
            at += len;
        }
        Some(out)
    }
}

#[derive(Debug, Default)]
struct TrieNode {
    /// Sorted by byte; value is an index into `TokenTrie::nodes`.
    children: Vec<(u8, u32)>,
    /// Token ids whose bytes end exactly here.
    ids: Vec<u32>,
}

/// Byte trie over the vocabulary, used for shared-prefix mask computation
/// and greedy tokenization.
#[derive(Debug)]
pub struct TokenTrie {
    nodes: Vec<TrieNode>,
}

impl TokenTrie {
    pub fn build(vocab: &Vocabulary) -> TokenTrie {
        let mut nodes = vec![TrieNode::default()];
        for id in 0..vocab.len() as u32 {
            if id == vocab.eos_id() {
                continue;
            }
            let mut at = 0usize;
            for &b in vocab.token_bytes(id) {
                let next = match nodes[at].children.binary_search_by_key(&b, |c| c.0) {
                    Ok(i) => nodes[at].children[i].1 as usize,
                    Err(i) => {
                        let fresh = nodes.len();
                        nodes[at].children.insert(i, (b, fresh as u32));
                        nodes.push(TrieNode::default());
                        fresh
                    }
                };
                at = next;
            }
            nodes[at].ids.push(id);
        }
        TokenTrie { nodes }
    }

    /// Longest token matching a prefix of `bytes`, with its byte length.
    /// Lowest id wins among tokens with identical bytes.
    pub fn longest_match(&self, bytes: &[u8]) -> Option<(u32, usize)> {
        let mut at = 0usize;
        let mut hit = None;
        for (i, &b) in bytes.iter().enumerate() {
            let node = &self.nodes[at];
            match node.children.binary_search_by_key(&b, |c| c.0) {
                Ok(j) => at = node.children[j].1 as usize,
                Err(_) => break,
            }
            if let Some(&id) = self.nodes[at].ids.iter().min() {
                hit = Some((id, i + 1));
            }
        }
        hit
    }
}

/// One bit per vocabulary entry: 1 means sampling this token keeps the
/// recognizer alive (or, for eos, that the text so far is a member).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMask {
    bits: BitSet,
    len: usize,
}

impl TokenMask {
    fn empty(len: usize) -> TokenMask {
        TokenMask {
            bits: BitSet::new(len),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn allowed(&self, id: u32) -> bool {
        self.bits.get(id as usize)
    }

    pub fn count_allowed(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn any_allowed(&self) -> bool {
        !self.bits.is_empty_set()
    }

    pub fn iter_allowed(&self) -> impl Iterator<Item = u32> + '_ {
        self.bits.iter_ones().map(|i| i as u32)
    }
}

/// Reference mask: probe every token separately.
pub fn compute_mask_naive(state: &RecognizerState, vocab: &Vocabulary) -> TokenMask {
    let mut mask = TokenMask::empty(vocab.len());
    for id in 0..vocab.len() as u32 {
        let ok = if id == vocab.eos_id() {
            state.is_complete_member()
        } else {
            state.advance(vocab.token_bytes(id)).is_alive()
        };
        if ok {
            mask.bits.set(id as usize);
        }
    }
    mask
}

/// Trie-accelerated mask. Bit-identical to `compute_mask_naive`: a prefix
/// that cannot stay alive cannot have a live extension, so dead subtrees are
/// skipped wholesale.
pub fn compute_mask(state: &RecognizerState, vocab: &Vocabulary, trie: &TokenTrie) -> TokenMask {
    let mut mask = TokenMask::empty(vocab.len());
    if state.is_complete_member() {
        mask.bits.set(vocab.eos_id() as usize);
    }
    let mut cache = ScanCache::new();
    let mut stack: Vec<(u32, RecognizerState)> = trie.nodes[0]
        .children
        .iter()
        .map(|&(b, child)| (child, state.advance_cached(&[b], &mut cache)))
        .collect();
    // Single-child chains advance one state in place; only fan-out clones.
    while let Some((mut node, mut st)) = stack.pop() {
        loop {
            if !st.is_alive_cached(&mut cache) {
                break;
            }
            let n = &trie.nodes[node as usize];
            for &id in &n.ids {
                mask.bits.set(id as usize);
            }
            let Some((&(b0, c0), rest)) = n.children.split_first() else {
                break;
            };
            for &(b, child) in rest {
                stack.push((child, st.advance_cached(&[b], &mut cache)));
            }
            st.advance_in_place_cached(&[b0], &mut cache);
            node = c0;
        }
    }
    mask
}

/// Overwrite scores of masked-out tokens with negative infinity.
pub fn apply_mask(scores: &mut [f64], mask: &TokenMask) -> Result<(), MaskError> {
    if scores.len() != mask.len() {
        return Err(MaskError::LengthMismatch {
            expected: mask.len(),
            got: scores.len(),
        });
    }
    for (id, s) in scores.iter_mut().enumerate() {
        if !mask.bits.get(id) {
            *s = f64::NEG_INFINITY;
        }
    }
    Ok(())
}
