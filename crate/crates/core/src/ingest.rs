//! Chat-log ingestion: JSON-Lines parsing, canonical ordering, and thread
//! statistics.
//!
//! Each input line is an object `{"id": str, "ts": number, "text": str,
//! "author": str?}`. Parsing yields a [`Thread`] whose posts are sorted by
//! timestamp; ties keep their input order. Post positions in that order are
//! the canonical indices used by every downstream stage.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate post id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: negative or non-finite timestamp {ts}")]
    BadTimestamp { line: usize, ts: f64 },
    #[error("line {line}: empty post id")]
    EmptyId { line: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    /// Seconds since epoch.
    #[serde(rename = "ts")]
    pub timestamp: f64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

/// A chronologically ordered sequence of posts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Thread {
    pub name: String,
    pub posts: Vec<Post>,
}

impl Thread {
    pub fn new(name: impl Into<String>, posts: Vec<Post>) -> Self {
        Self {
            name: name.into(),
            posts,
        }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.posts.iter().map(|p| p.timestamp).collect()
    }

    /// Canonical index of the post with the given id.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.posts.iter().position(|p| p.id == id)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Keep posts whose text is empty or whitespace-only.
    pub keep_empty: bool,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    ts: f64,
    text: String,
    #[serde(default)]
    author: Option<String>,
}

/// Parse a JSON-Lines chat log into a canonical thread.
///
/// Blank lines are skipped. Line numbers in errors are 1-based.
pub fn parse_chat_log<R: BufRead>(reader: R, options: ParseOptions) -> Result<Thread, IngestError> {
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if rec.id.is_empty() {
            return Err(IngestError::EmptyId { line: line_no });
        }
        if !rec.ts.is_finite() || rec.ts < 0.0 {
            return Err(IngestError::BadTimestamp {
                line: line_no,
                ts: rec.ts,
            });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(IngestError::DuplicateId {
                line: line_no,
                id: rec.id,
            });
        }
        if !options.keep_empty && rec.text.trim().is_empty() {
            continue;
        }
        posts.push(Post {
            id: rec.id,
            timestamp: rec.ts,
            text: rec.text,
            author: rec.author,
        });
    }
    Ok(canonicalize(Thread::new("", posts)))
}

/// Sort posts by timestamp. `sort_by` is stable, so ties keep input order.
pub fn canonicalize(mut thread: Thread) -> Thread {
    thread.posts.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    thread
}

/// Write a thread back out as JSON-Lines, one post per line.
pub fn write_chat_log<W: Write>(thread: &Thread, mut out: W) -> std::io::Result<()> {
    for post in &thread.posts {
        serde_json::to_writer(&mut out, post)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadStats {
    pub message_count: usize,
    pub span_minutes: f64,
    /// Word count -> number of posts with that many words.
    pub length_histogram: BTreeMap<usize, usize>,
    pub mean_words: f64,
    pub median_words: f64,
    pub max_words: usize,
}

pub fn thread_stats(thread: &Thread) -> ThreadStats {
    let n = thread.len();
    let span_minutes = match (thread.posts.first(), thread.posts.last()) {
        (Some(first), Some(last)) => ((last.timestamp - first.timestamp) / 60.0).max(0.0),
        _ => 0.0,
    };
    let mut lengths: Vec<usize> = thread.posts.iter().map(|p| p.text.split_whitespace().count()).collect();
    let mut length_histogram = BTreeMap::new();
    for &len in &lengths {
        *length_histogram.entry(len).or_insert(0) += 1;
    }
    lengths.sort_unstable();
    let mean_words = if n == 0 {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / n as f64
    };
    let median_words = match n {
        0 => 0.0,
        _ if n % 2 == 1 => lengths[n / 2] as f64,
        _ => (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0,
    };
    ThreadStats {
        message_count: n,
        span_minutes,
        length_histogram,
        mean_words,
        median_words,
        max_words: lengths.last().copied().unwrap_or(0),
    }
}
