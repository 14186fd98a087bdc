//! Text similarity between a query case and a candidate document.
//!
//! Both texts are cut into overlapping sentence windows, each window is
//! embedded, and the cosine similarity matrix between query and document
//! windows is max-pooled over document windows. The pooled vector `T_s` is
//! laid out as `[T_s, 0…0, T_s]` to a fixed length.

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a;

/// Default fixed length of the text similarity vector.
pub const DEFAULT_TEXT_LEN: usize = 54;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TextSimError {
    #[error("text has no sentences")]
    EmptyText,
    #[error("window and step must be at least 1, with step at most the window")]
    InvalidWindow,
    #[error("{0} query passages do not fit twice into length {1}")]
    InputTooLong(usize, usize),
    #[error("embedding provider: {0}")]
    Provider(String),
}

/// Sliding-window sizes for queries and documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub query_window: usize,
    pub query_step: usize,
    pub doc_window: usize,
    pub doc_step: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { query_window: 3, query_step: 1, doc_window: 13, doc_step: 5 }
    }
}

/// A window of exactly `w` sentences, padded with empty strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub sentences: Vec<String>,
}

impl Passage {
    /// Non-empty sentences joined by single spaces.
    pub fn text(&self) -> String {
        let parts: Vec<&str> = self.sentences.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
        parts.join(" ")
    }
}

/// Cuts sentences into windows of `w` starting at the first sentence and
/// advancing by `d`, stopping after the first window that reaches the last
/// sentence.
pub fn csw_slice(sentences: &[String], w: usize, d: usize) -> Result<Vec<Passage>, TextSimError> {
    if w == 0 || d == 0 || d > w {
        return Err(TextSimError::InvalidWindow);
    }
    if sentences.is_empty() {
        return Err(TextSimError::EmptyText);
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + w).min(sentences.len());
        let mut window: Vec<String> = sentences[start..end].to_vec();
        window.resize(w, String::new());
        out.push(Passage { sentences: window });
        if start + w >= sentences.len() {
            break;
        }
        start += d;
    }
    Ok(out)
}

/// Turns passages into vectors. Implementations must be deterministic per
/// input and independent of batch composition.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, TextSimError>;
}

/// Signed feature hashing of character 2- and 3-grams, L2-normalised.
/// Empty text embeds to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 128;

    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut v = vec![0.0f64; self.dim];
        let mut buf = String::new();
        for n in [2usize, 3] {
            for gram in chars.windows(n) {
                buf.clear();
                buf.extend(gram);
                let h = fnv1a(buf.as_bytes()) ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let h = fnv1a(&h.to_le_bytes());
                let slot = (h % self.dim as u64) as usize;
                let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
                v[slot] += sign;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter().map(|x| (x / norm) as f32).collect()
        } else {
            vec![0.0; self.dim]
        }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, TextSimError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Row-wise maximum of the query × document cosine matrix.
pub fn max_pool_similarity(query: &[Vec<f32>], doc: &[Vec<f32>]) -> Vec<f64> {
    query
        .iter()
        .map(|q| doc.iter().map(|d| cosine(q, d)).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn embed_passages(passages: &[Passage], provider: &dyn EmbeddingProvider) -> Result<Vec<Vec<f32>>, TextSimError> {
    let texts: Vec<String> = passages.iter().map(Passage::text).collect();
    let out = provider.embed(&texts)?;
    if out.len() != texts.len() {
        return Err(TextSimError::Provider(format!("{} vectors for {} passages", out.len(), texts.len())));
    }
    Ok(out)
}

/// `T_s[i] = max_j cos(embed(q_i), embed(d_j))`.
pub fn similarity_vector(
    query_passages: &[Passage],
    doc_passages: &[Passage],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<f64>, TextSimError> {
    if query_passages.is_empty() || doc_passages.is_empty() {
        return Err(TextSimError::EmptyText);
    }
    let q = embed_passages(query_passages, provider)?;
    let d = embed_passages(doc_passages, provider)?;
    Ok(max_pool_similarity(&q, &d))
}

/// `[T_s, 0…0, T_s]` of length `len`.
pub fn pad_fixed(ts: &[f64], len: usize) -> Result<Vec<f64>, TextSimError> {
    let n = ts.len();
    if 2 * n > len {
        return Err(TextSimError::InputTooLong(n, len));
    }
    let mut out = vec![0.0; len];
    out[..n].copy_from_slice(ts);
    out[len - n..].copy_from_slice(ts);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sents(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("s{i}.")).collect()
    }

    fn starts(passages: &[Passage]) -> Vec<String> {
        passages.iter().map(|p| p.sentences[0].clone()).collect()
    }

    #[test]
    fn query_windows() {
        let p = csw_slice(&sents(5), 3, 1).unwrap();
        assert_eq!(starts(&p), vec!["s1.", "s2.", "s3."]);
        assert_eq!(p[2].sentences, vec!["s3.", "s4.", "s5."]);
    }

    #[test]
    fn short_text_single_padded_window() {
        let p = csw_slice(&sents(2), 3, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].sentences, vec!["s1.", "s2.", ""]);
        assert_eq!(p[0].text(), "s1. s2.");
    }

    #[test]
    fn document_windows_stop_at_last_sentence() {
        let p = csw_slice(&sents(14), 13, 5).unwrap();
        assert_eq!(starts(&p), vec!["s1.", "s6."]);
        assert_eq!(p[1].sentences[8], "s14.");
        assert!(p[1].sentences[9..].iter().all(String::is_empty));
    }

    #[test]
    fn slicing_errors() {
        assert_eq!(csw_slice(&[], 3, 1), Err(TextSimError::EmptyText));
        assert_eq!(csw_slice(&sents(3), 0, 1), Err(TextSimError::InvalidWindow));
        assert_eq!(csw_slice(&sents(3), 3, 0), Err(TextSimError::InvalidWindow));
        assert_eq!(csw_slice(&sents(3), 1, 2), Err(TextSimError::InvalidWindow));
    }

    #[test]
    fn row_max_pooling() {
        // unit vectors at chosen angles give the cosine matrix [[0.1,0.5,0.2],[0.9,0.3,0.4]]
        let unit = |c: f64| vec![c as f32, (1.0 - c * c).sqrt() as f32];
        let q = [vec![1.0f32, 0.0], vec![1.0, 0.0]];
        let d1 = vec![unit(0.1), unit(0.5), unit(0.2)];
        let d2 = vec![unit(0.9), unit(0.3), unit(0.4)];
        assert!((max_pool_similarity(&q[..1], &d1)[0] - 0.5).abs() < 1e-6);
        assert!((max_pool_similarity(&q[1..], &d2)[0] - 0.9).abs() < 1e-6);
    }

    struct Orthogonal;

    impl EmbeddingProvider for Orthogonal {
        fn dim(&self) -> usize {
            64
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, TextSimError> {
            Ok(texts
                .iter()
                .map(|t| {
                    let mut v = vec![0.0; 64];
                    v[(fnv1a(t.as_bytes()) % 64) as usize] = 1.0;
                    v
                })
                .collect())
        }
    }

    #[test]
    fn identical_passage_scores_one_and_orthogonal_zero() {
        let q = csw_slice(&sents(3), 3, 1).unwrap();
        let d = csw_slice(&sents(3), 3, 1).unwrap();
        let t = similarity_vector(&q, &d, &HashEmbedder::default()).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-6);
        let q = vec![Passage { sentences: vec!["alpha".into()] }];
        let d = vec![Passage { sentences: vec!["beta".into()] }, Passage { sentences: vec!["gamma".into()] }];
        assert_eq!(similarity_vector(&q, &d, &Orthogonal).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_vectors_have_zero_cosine() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        let e = HashEmbedder::default();
        assert!(e.embed_one("").iter().all(|x| *x == 0.0));
        assert_eq!(e.embed_one("x").iter().filter(|x| **x != 0.0).count(), 0);
    }

    #[test]
    fn hash_embedder_is_stable() {
        let e = HashEmbedder::default();
        let v = e.embed_one("the defendant took the wallet.");
        assert_eq!(v.len(), 128);
        let norm: f32 = v.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-5);
        // frozen: a change here changes every cached feature downstream
        let nonzero: Vec<usize> = v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).take(3).collect();
        assert_eq!(nonzero, vec![3, 5, 6]);
        assert_abs_diff_eq!(v[3], 0.149_071_2, epsilon = 1e-6);
        assert_abs_diff_eq!(v[5], -0.149_071_2, epsilon = 1e-6);
        assert_eq!(v, HashEmbedder::default().embed_one("the defendant took the wallet."));
    }

    #[test]
    fn padding_layout() {
        assert_eq!(pad_fixed(&[0.3, 0.7], 8).unwrap(), vec![0.3, 0.7, 0.0, 0.0, 0.0, 0.0, 0.3, 0.7]);
        assert_eq!(pad_fixed(&[0.4], 2).unwrap(), vec![0.4, 0.4]);
        assert_eq!(pad_fixed(&[0.1; 28], 54), Err(TextSimError::InputTooLong(28, 54)));
    }

    proptest! {
        #[test]
        fn windows_cover_every_sentence(l in 1usize..40, (w, d) in (1usize..15).prop_flat_map(|w| (Just(w), 1..=w))) {
            let s = sents(l);
            let passages = csw_slice(&s, w, d).unwrap();
            let mut covered = vec![false; l];
            for (k, p) in passages.iter().enumerate() {
                prop_assert_eq!(p.sentences.len(), w);
                for (off, sentence) in p.sentences.iter().enumerate() {
                    let pos = k * d + off;
                    if pos < l {
                        prop_assert_eq!(sentence, &s[pos]);
                        covered[pos] = true;
                    } else {
                        prop_assert!(sentence.is_empty());
                    }
                }
            }
            prop_assert!(covered.iter().all(|c| *c));
            // only the last window may reach the end
            for (k, _) in passages.iter().enumerate().take(passages.len() - 1) {
                prop_assert!(k * d + w < l);
            }
        }

        #[test]
        fn pooled_entries_are_row_maxima(nq in 1usize..6, nd in 1usize..6, seed in any::<u64>()) {
            let e = HashEmbedder::new(16);
            let q: Vec<Vec<f32>> = (0..nq).map(|i| e.embed_one(&format!("q{seed}x{i}"))).collect();
            let d: Vec<Vec<f32>> = (0..nd).map(|i| e.embed_one(&format!("d{i}y{seed}"))).collect();
            let t = max_pool_similarity(&q, &d);
            prop_assert_eq!(t.len(), nq);
            for (i, row) in q.iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for col in &d {
                    best = best.max(cosine(row, col));
                }
                prop_assert_eq!(t[i], best);
                prop_assert!((-1.0..=1.0).contains(&t[i]));
            }
        }

        #[test]
        fn padding_is_palindromic_in_placement(ts in prop::collection::vec(-1.0f64..1.0, 1..20), extra in 0usize..10) {
            let len = 2 * ts.len() + extra;
            let out = pad_fixed(&ts, len).unwrap();
            let rev: Vec<f64> = out.iter().rev().copied().collect();
            let rev_ts: Vec<f64> = ts.iter().rev().copied().collect();
            prop_assert_eq!(rev, pad_fixed(&rev_ts, len).unwrap());
            prop_assert!(out[ts.len()..len - ts.len()].iter().all(|x| *x == 0.0));
        }
    }
}
