use std::collections::{BTreeMap, HashMap};

/// Text similarity in `[-1, 1]`.
pub trait Embedder: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn counts(text: &str) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for t in tokens(text) {
        *m.entry(t).or_insert(0.0) += 1.0;
    }
    m
}

/// Cosine similarity of token count vectors. Texts without tokens are
/// similar to nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenEmbedder;

impl Embedder for TokenEmbedder {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let (ca, cb) = (counts(a), counts(b));
        let dot: f64 = ca.iter().filter_map(|(t, x)| cb.get(t).map(|y| x * y)).sum();
        let na: f64 = ca.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = cb.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot / (na * nb)).clamp(-1.0, 1.0)
        }
    }
}

/// Cosine over vectors computed elsewhere (for example by a sentence
/// encoder). Unknown texts score 0.
#[derive(Debug, Clone, Default)]
pub struct VectorEmbedder {
    vectors: HashMap<String, Vec<f64>>,
}

impl VectorEmbedder {
    pub fn new(vectors: HashMap<String, Vec<f64>>) -> Self {
        Self { vectors }
    }

    /// One `{"text": ..., "vector": [...]}` object per line.
    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        #[derive(serde::Deserialize)]
        struct Line {
            text: String,
            vector: Vec<f64>,
        }
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let l: Line = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            vectors.insert(l.text, l.vector);
        }
        Ok(Self { vectors })
    }
}

impl Embedder for VectorEmbedder {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let (Some(x), Some(y)) = (self.vectors.get(a), self.vectors.get(b)) else {
            return 0.0;
        };
        if x.len() != y.len() {
            return 0.0;
        }
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            (dot / (nx * ny)).clamp(-1.0, 1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_cosine_by_hand() {
        // {turn, on, the, coffee, machine} . {switch, on, coffee, maker} = 2
        let s = TokenEmbedder.similarity("turn on the coffee machine", "switch on coffee maker");
        assert!((s - 2.0 / (5f64.sqrt() * 2.0)).abs() < 1e-12);
        assert_eq!(TokenEmbedder.similarity("turn on the coffee machine", "grab cup"), 0.0);
        assert!((TokenEmbedder.similarity("grab the cup", "grab the cup") - 1.0).abs() < 1e-12);
        assert_eq!(TokenEmbedder.similarity("", "grab"), 0.0);
    }

    #[test]
    fn vector_cosine() {
        let e = VectorEmbedder::from_jsonl("{\"text\":\"a\",\"vector\":[1,0]}\n{\"text\":\"b\",\"vector\":[1,1]}").unwrap();
        assert!((e.similarity("a", "b") - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(e.similarity("a", "zzz"), 0.0);
    }
}
