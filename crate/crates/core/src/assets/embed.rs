//! Deterministic feature-hashed bag-of-tokens text embedding.

use super::AssetError;

/// Embedding dimensionality.
pub const EMBED_DIM: usize = 256;

pub type Embedding = [f64; EMBED_DIM];

/// Lowercases and splits on non-alphanumeric boundaries, dropping empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of token counts, L2-normalized.
///
/// Each token lands in bucket `h mod 256` with sign taken from bit 32 of `h`.
pub fn embed_text(text: &str) -> Result<Embedding, AssetError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(AssetError::EmptyText);
    }
    let mut v = [0.0f64; EMBED_DIM];
    for t in &tokens {
        let h = fnv1a(t.as_bytes());
        let bucket = (h % EMBED_DIM as u64) as usize;
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // Every token cancelled against another one of opposite sign. Fall
        // back to an unsigned count so the vector stays well defined.
        for t in &tokens {
            let bucket = (fnv1a(t.as_bytes()) % EMBED_DIM as u64) as usize;
            v[bucket] = 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        return Ok(v);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}
