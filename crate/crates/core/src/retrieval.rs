//! Context retrieval: chunking, hashed embeddings, cosine ranking and prompt
//! aggregation.
//!
//! Prompt grammar (all lengths are UTF-8 byte counts, every line ends in
//! `\n`):
//!
//! ```text
//! ### QUERY bytes=<q>
//! <query>
//! ### CONTEXT count=<n>
//! (no retrieved context)                      <- only when n = 0
//! ### CHUNK rank=<r> id=<i> score=<s> source_bytes=<a> text_bytes=<b>
//! <source>
//! <text>
//! ### END
//! ```
//!
//! Length prefixes make the encoding injective whatever the payload holds.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBED_DIM: usize = 256;
pub const CHUNK_TOKENS: usize = 512;
pub const CHUNK_OVERLAP: usize = 64;
pub const DEFAULT_K: usize = 5;
pub const EMPTY_CONTEXT: &str = "(no retrieved context)";

/// Lower-cased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Text encoder shared by queries and chunks.
pub trait Encoder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Feature-hashed token counts with `1 + ln(count)` weighting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashEncoder {
    pub dim: usize,
}

impl Default for HashEncoder {
    fn default() -> Self {
        Self { dim: EMBED_DIM }
    }
}

impl HashEncoder {
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut counts = vec![0u32; self.dim];
        let mut any = false;
        for t in tokenize(text) {
            counts[self.bucket(&t)] += 1;
            any = true;
        }
        if !any {
            return Err(Error::Retrieval("text has no tokens; its embedding would be the zero vector".into()));
        }
        Ok(counts
            .into_iter()
            .map(|c| if c == 0 { 0.0 } else { 1.0 + (c as f64).ln() })
            .collect())
    }
}

/// Cosine similarity, clamped to `[-1, 1]` against rounding.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) || !na.is_finite() || !nb.is_finite() {
        return Err(Error::Retrieval("cosine similarity of a zero-norm vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Token windows `[start, end)` of `window` tokens overlapping by `overlap`.
pub fn chunk_spans(n_tokens: usize, window: usize, overlap: usize) -> Result<Vec<(usize, usize)>> {
    if window == 0 || overlap >= window {
        return Err(Error::Retrieval(format!("chunk window {window} must exceed overlap {overlap}")));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < n_tokens {
        let end = (start + window).min(n_tokens);
        out.push((start, end));
        if end == n_tokens {
            break;
        }
        start += window - overlap;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub source: String,
    pub start_token: usize,
    pub text: String,
}

/// Immutable chunk store with one embedding per chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub chunks: Vec<Chunk>,
    pub embeddings: Vec<Vec<f64>>,
}

impl Corpus {
    /// Chunks every `(source, text)` document and embeds each chunk.
    pub fn build(enc: &dyn Encoder, docs: &[(String, String)]) -> Result<Self> {
        let mut chunks = Vec::new();
        for (source, text) in docs {
            let toks = tokenize(text);
            for (s, e) in chunk_spans(toks.len(), CHUNK_TOKENS, CHUNK_OVERLAP)? {
                chunks.push(Chunk {
                    source: source.clone(),
                    start_token: s,
                    text: toks[s..e].join(" "),
                });
            }
        }
        Self::from_chunks(enc, chunks)
    }

    pub fn from_chunks(enc: &dyn Encoder, chunks: Vec<Chunk>) -> Result<Self> {
        let embeddings = chunks.iter().map(|c| enc.embed(&c.text)).collect::<Result<_>>()?;
        Ok(Self { chunks, embeddings })
    }

    /// Indexes every regular file in `dir` (sorted by name), read as UTF-8.
    pub fn from_dir(enc: &dyn Encoder, dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let mut docs = Vec::new();
        for p in paths {
            let text = fs::read_to_string(&p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            docs.push((name, text));
        }
        Self::build(enc, &docs)
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub chunks: Vec<Chunk>,
}

/// Descending score, then ascending index.
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Exact top-`k` by cosine similarity.
pub fn top_k(query: &[f64], corpus: &Corpus, k: usize) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::Retrieval("k must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Retrieval("empty corpus".into()));
    }
    let scores = corpus
        .embeddings
        .iter()
        .map(|e| cosine(query, e))
        .collect::<Result<Vec<f64>>>()?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(idx.len());
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(&scores, a, b));
        idx.truncate(k);
    }
    idx.sort_by(|&a, &b| rank_order(&scores, a, b));
    Ok(RetrievalResult {
        scores: idx.iter().map(|&i| scores[i]).collect(),
        chunks: idx.iter().map(|&i| corpus.chunks[i].clone()).collect(),
        indices: idx,
    })
}

/// Builds the retrieval-augmented prompt.
pub fn aggregate(query: &str, r: &RetrievalResult) -> String {
    let mut p = format!("### QUERY bytes={}\n{query}\n### CONTEXT count={}\n", query.len(), r.indices.len());
    if r.indices.is_empty() {
        p.push_str(EMPTY_CONTEXT);
        p.push('\n');
    }
    for (rank, ((&i, &s), c)) in r.indices.iter().zip(&r.scores).zip(&r.chunks).enumerate() {
        p.push_str(&format!(
            "### CHUNK rank={} id={i} score={s} source_bytes={} text_bytes={}\n{}\n{}\n",
            rank + 1,
            c.source.len(),
            c.text.len(),
            c.source,
            c.text
        ));
    }
    p.push_str("### END\n");
    p
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedChunk {
    pub id: usize,
    pub score: f64,
    pub source: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedPrompt {
    pub query: String,
    pub chunks: Vec<ParsedChunk>,
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.s[self.pos..];
        let n = rest.find('\n').ok_or_else(|| bad("unterminated line"))?;
        self.pos += n + 1;
        Ok(&rest[..n])
    }

    fn bytes(&mut self, n: usize) -> Result<&'a str> {
        let end = self.pos + n;
        let out = self.s.get(self.pos..end).ok_or_else(|| bad("payload length out of range"))?;
        if self.s.as_bytes().get(end) != Some(&b'\n') {
            return Err(bad("payload not followed by newline"));
        }
        self.pos = end + 1;
        Ok(out)
    }
}

fn bad(m: &str) -> Error {
    Error::Retrieval(format!("malformed prompt: {m}"))
}

fn field<T: std::str::FromStr>(header: &str, key: &str) -> Result<T> {
    header
        .split(' ')
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(&format!("missing field {key}")))
}

/// Inverse of [`aggregate`].
pub fn parse_prompt(p: &str) -> Result<ParsedPrompt> {
    let mut c = Cursor { s: p, pos: 0 };
    let h = c.line()?;
    if !h.starts_with("### QUERY ") {
        return Err(bad("missing query header"));
    }
    let query = c.bytes(field(h, "bytes")?)?.to_string();
    let h = c.line()?;
    if !h.starts_with("### CONTEXT ") {
        return Err(bad("missing context header"));
    }
    let n: usize = field(h, "count")?;
    if n == 0 && c.line()? != EMPTY_CONTEXT {
        return Err(bad("missing empty-context marker"));
    }
    let mut chunks = Vec::with_capacity(n);
    for rank in 1..=n {
        let h = c.line()?;
        if !h.starts_with("### CHUNK ") || field::<usize>(h, "rank")? != rank {
            return Err(bad("chunk header out of order"));
        }
        let source = c.bytes(field(h, "source_bytes")?)?.to_string();
        let text = c.bytes(field(h, "text_bytes")?)?.to_string();
        chunks.push(ParsedChunk {
            id: field(h, "id")?,
            score: field(h, "score")?,
            source,
            text,
        });
    }
    if c.line()? != "### END" || c.pos != p.len() {
        return Err(bad("trailing content"));
    }
    Ok(ParsedPrompt { query, chunks })
}

/// Boundary for an external text generator conditioned on the prompt. No
/// implementation ships with this crate.
pub trait Generator {
    fn generate(&self, prompt: &str) -> Result<String>;
}

/// Embeds `query`, ranks the corpus and aggregates the prompt.
pub fn retrieve(enc: &dyn Encoder, corpus: &Corpus, query: &str, k: usize) -> Result<(RetrievalResult, String)> {
    let q = enc.embed(query)?;
    let r = top_k(&q, corpus, k)?;
    let prompt = aggregate(query, &r);
    Ok((r, prompt))
}

/// Mass-weighted rate at which distinct tokens of two texts share a bucket:
/// `sum w_a w_b [h(a) = h(b)] / sum w_a w_b` over token types `a` of the
/// first text and `b != a` of the second, with `w` the log-scaled counts.
/// A uniform hash gives about `1 / dim`.
pub fn collision_rate(enc: &HashEncoder, a: &str, b: &str) -> f64 {
    let weights = |t: &str| {
        let mut m = std::collections::BTreeMap::<String, u32>::new();
        for tok in tokenize(t) {
            *m.entry(tok).or_default() += 1;
        }
        m.into_iter()
            .map(|(k, c)| (enc.bucket(&k), k, 1.0 + (c as f64).ln()))
            .collect::<Vec<_>>()
    };
    let (wa, wb) = (weights(a), weights(b));
    let mut hit = 0.0;
    let mut all = 0.0;
    for (ha, ta, xa) in &wa {
        for (hb, tb, xb) in &wb {
            if ta == tb {
                continue;
            }
            all += xa * xb;
            if ha == hb {
                hit += xa * xb;
            }
        }
    }
    if all == 0.0 {
        0.0
    } else {
        hit / all
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_and_case_do_not_change_embedding() {
        let e = HashEncoder::default();
        assert_eq!(e.embed("uav routing").unwrap(), e.embed("  UAV\t\n routing ").unwrap());
        assert!(e.embed(" ,.; ").is_err());
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn spans_cover_with_overlap() {
        assert_eq!(chunk_spans(0, 512, 64).unwrap(), vec![]);
        assert_eq!(chunk_spans(100, 512, 64).unwrap(), vec![(0, 100)]);
        assert_eq!(chunk_spans(1000, 512, 64).unwrap(), vec![(0, 512), (448, 960), (896, 1000)]);
        assert!(chunk_spans(10, 64, 64).is_err());
    }

    #[test]
    fn empty_context_has_marker_and_parses() {
        let r = RetrievalResult {
            indices: vec![],
            scores: vec![],
            chunks: vec![],
        };
        let p = aggregate("q", &r);
        assert!(p.contains(EMPTY_CONTEXT));
        let back = parse_prompt(&p).unwrap();
        assert_eq!(back.query, "q");
        assert!(back.chunks.is_empty());
    }
}
