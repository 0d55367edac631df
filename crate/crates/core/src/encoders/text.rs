use ndarray::{Array1, Array2};

/// Frozen text featuriser standing in for a pre-trained language model.
/// Implementations must be deterministic.
pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Array1<f64>;

    fn embed_batch(&self, texts: &[String]) -> Array2<f64> {
        let mut out = Array2::zeros((texts.len(), self.dim()));
        for (mut row, t) in out.outer_iter_mut().zip(texts) {
            row.assign(&self.embed(t));
        }
        out
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of a bag of words, L2-normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    /// Bucket and sign for one token.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        (bucket, sign)
    }
}

impl TextEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Array1<f64> {
        let mut v = Array1::<f64>::zeros(self.dim);
        for tok in tokenize(text) {
            let (bucket, sign) = self.slot(&tok);
            v[bucket] += sign;
        }
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        v
    }
}
