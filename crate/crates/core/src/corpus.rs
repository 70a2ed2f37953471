//! Tokenization, vocabulary, and context windows.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::Thread;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("vocab file line {line}: {reason}")]
    BadVocabLine { line: usize, reason: String },
    #[error("unknown context paradigm {0:?} (expected `symmetric` or `before`)")]
    UnknownParadigm(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || "…“”‘’«»¿¡–—".contains(c)
}

/// Lowercase, split on whitespace, trim surrounding punctuation, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|tok| tok.trim_matches(is_punct))
        .filter(|tok| !tok.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    index: HashMap<String, u32>,
    tokens: Vec<String>,
    counts: Vec<usize>,
    min_count: usize,
}

impl Vocab {
    fn reserved(min_count: usize) -> Self {
        Self {
            index: HashMap::new(),
            tokens: vec!["<pad>".to_string(), "<unk>".to_string()],
            counts: vec![0, 0],
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 2
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn count(&self, index: u32) -> usize {
        self.counts.get(index as usize).copied().unwrap_or(0)
    }

    /// Serialize as `min_count<TAB>size` followed by `token<TAB>index<TAB>count`
    /// lines for every non-reserved entry.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}\t{}", self.min_count, self.len())?;
        for (i, tok) in self.tokens.iter().enumerate().skip(2) {
            writeln!(out, "{}\t{}\t{}", tok, i, self.counts[i])?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let bad = |line: usize, reason: &str| CorpusError::BadVocabLine {
            line,
            reason: reason.to_string(),
        };
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))??;
        let mut fields = header.split('\t');
        let min_count: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad(1, "bad min_count"))?;
        let size: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad(1, "bad size"))?;
        let mut vocab = Vocab::reserved(min_count);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(bad(line_no, "expected 3 tab-separated fields"));
            }
            let index: usize = parts[1].parse().map_err(|_| bad(line_no, "bad index"))?;
            let count: usize = parts[2].parse().map_err(|_| bad(line_no, "bad count"))?;
            if index != vocab.tokens.len() {
                return Err(bad(line_no, "indices must be consecutive from 2"));
            }
            if vocab.index.insert(parts[0].to_string(), index as u32).is_some() {
                return Err(bad(line_no, "duplicate token"));
            }
            vocab.tokens.push(parts[0].to_string());
            vocab.counts.push(count);
        }
        if vocab.len() != size {
            return Err(bad(1, "size does not match entry count"));
        }
        Ok(vocab)
    }
}

/// Build a vocabulary over every post of every thread. Tokens are indexed by
/// descending frequency, then lexicographically.
pub fn build_vocab(threads: &[Thread], min_count: usize) -> Vocab {
    let min_count = min_count.max(1);
    let mut freq: HashMap<String, usize> = HashMap::new();
    for thread in threads {
        for post in &thread.posts {
            for tok in tokenize(&post.text) {
                *freq.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut entries: Vec<(String, usize)> = freq.into_iter().filter(|(_, c)| *c >= min_count).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut vocab = Vocab::reserved(min_count);
    for (tok, count) in entries {
        vocab.index.insert(tok.clone(), vocab.tokens.len() as u32);
        vocab.tokens.push(tok);
        vocab.counts.push(count);
    }
    vocab
}

/// A post's tokens as vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq(pub Vec<u32>);

impl TokenSeq {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

pub fn encode_text(vocab: &Vocab, text: &str, max_len: usize) -> TokenSeq {
    TokenSeq(
        tokenize(text)
            .iter()
            .take(max_len.max(1))
            .map(|t| vocab.get(t).unwrap_or(UNK))
            .collect(),
    )
}

/// Which neighbours make up a post's context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    /// `k` posts on each side.
    Symmetric,
    /// The `k` preceding posts only.
    Before,
}

impl FromStr for Paradigm {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "symmetric" | "sym" | "1" => Ok(Paradigm::Symmetric),
            "before" | "before-only" | "beforeonly" | "2" => Ok(Paradigm::Before),
            _ => Err(CorpusError::UnknownParadigm(s.to_string())),
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Symmetric => "symmetric",
            Paradigm::Before => "before",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    pub center: usize,
    pub members: Vec<usize>,
    pub paradigm: Paradigm,
    pub k: usize,
}

/// One window per post with a non-empty neighbourhood, ordered by center.
pub fn build_windows(n: usize, paradigm: Paradigm, k: usize) -> Vec<ContextWindow> {
    let k = k.max(1);
    (0..n)
        .filter_map(|i| {
            let mut members: Vec<usize> = (i.saturating_sub(k)..i).collect();
            if paradigm == Paradigm::Symmetric {
                members.extend(i + 1..(i + k + 1).min(n));
            }
            (!members.is_empty()).then_some(ContextWindow {
                center: i,
                members,
                paradigm,
                k,
            })
        })
        .collect()
}

/// Convenience wrapper over [`build_windows`] for a thread.
pub fn thread_windows(thread: &Thread, paradigm: Paradigm, k: usize) -> Vec<ContextWindow> {
    build_windows(thread.len(), paradigm, k)
}
