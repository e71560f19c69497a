//! Shared feature space for the map, the detector and the memory layers.
//!
//! The synthetic provider assigns every token a deterministic random unit
//! vector and embeds a phrase as the normalized sum of its token vectors.
//! Cosine similarity then becomes a function of token overlap: a generic
//! class word scores high against any object of that class; a personal name
//! only matches text that carries the same name.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::remote::RemoteEncoder;
use crate::text::tokenize;

pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("empty token")]
    EmptyToken,
    #[error("no content tokens in {0:?}")]
    NoContentTokens(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("remote encoder: {0}")]
    Remote(String),
}

/// A point in the shared feature space: unit norm, or exactly zero for
/// unwritten map cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Normalizes `values`; an all-zero input stays zero.
    pub fn from_values(values: Vec<f64>) -> Self {
        let mut v = Self(values);
        v.normalize();
        v
    }

    /// Wraps stored values verbatim, for snapshots that were unit norm when
    /// written; renormalizing would perturb the low bits.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|x| *x == 0.0)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|x| *x /= n);
        }
    }

    /// `normalize(self + other)`, the accumulation rule for memory cells.
    pub fn accumulate(&self, other: &Self) -> Self {
        let summed = self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect();
        Self::from_values(summed)
    }
}

/// Cosine of two feature vectors. Zero vectors score 0.
pub fn cosine(u: &FeatureVector, v: &FeatureVector) -> Result<f64, EmbeddingError> {
    if u.dim() != v.dim() {
        return Err(EmbeddingError::DimensionMismatch { left: u.dim(), right: v.dim() });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// The SplitMix64 generator; small, fully specified and platform independent.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Deterministic token-vector encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEncoder {
    pub dim: usize,
    /// Mixed into every token hash; 0 reproduces the reference geometry.
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticEncoder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM, seed: 0 }
    }
}

impl SyntheticEncoder {
    pub fn new(dim: usize) -> Self {
        Self { dim, seed: 0 }
    }

    pub fn token_vector(&self, token: &str) -> Result<FeatureVector, EmbeddingError> {
        if token.is_empty() {
            return Err(EmbeddingError::EmptyToken);
        }
        let mut rng = SplitMix64::new(fnv1a64(token.as_bytes()) ^ self.seed);
        let mut values = Vec::with_capacity(self.dim + 1);
        while values.len() < self.dim {
            // Box-Muller; u1 in (0, 1] keeps the log finite.
            let u1 = 1.0 - rng.next_f64();
            let u2 = rng.next_f64();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = std::f64::consts::TAU * u2;
            values.push(r * theta.cos());
            values.push(r * theta.sin());
        }
        values.truncate(self.dim);
        Ok(FeatureVector::from_values(values))
    }

    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<FeatureVector, EmbeddingError> {
        let mut sum = vec![0.0; self.dim];
        for token in tokens {
            let v = self.token_vector(token.as_ref())?;
            sum.iter_mut().zip(v.values()).for_each(|(s, x)| *s += x);
        }
        Ok(FeatureVector::from_values(sum))
    }

    pub fn embed_phrase(&self, text: &str) -> Result<FeatureVector, EmbeddingError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EmbeddingError::NoContentTokens(text.to_string()));
        }
        self.embed_tokens(&tokens)
    }
}

/// Where text features come from.
#[derive(Debug)]
pub enum EmbeddingProvider {
    Synthetic(SyntheticEncoder),
    Remote(RemoteEncoder),
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        Self::Synthetic(SyntheticEncoder::default())
    }
}

impl EmbeddingProvider {
    pub fn synthetic(dim: usize) -> Self {
        Self::Synthetic(SyntheticEncoder::new(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Synthetic(s) => s.dim,
            Self::Remote(r) => r.dim(),
        }
    }

    pub fn embed_phrase(&self, text: &str) -> Result<FeatureVector, EmbeddingError> {
        match self {
            Self::Synthetic(s) => s.embed_phrase(text),
            Self::Remote(r) => {
                if tokenize(text).is_empty() {
                    return Err(EmbeddingError::NoContentTokens(text.to_string()));
                }
                r.embed(text)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc() -> SyntheticEncoder {
        SyntheticEncoder::default()
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference_values() {
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xe220a8397b1dcdaf);
        assert_eq!(rng.next_u64(), 0x6e789e6aa1b965f4);
    }

    #[test]
    fn token_vector_is_deterministic_unit() {
        let a = enc().token_vector("computer").unwrap();
        let b = enc().token_vector("computer").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.dim(), 64);
    }

    #[test]
    fn distinct_tokens_near_orthogonal() {
        let a = enc().token_vector("alice").unwrap();
        let c = enc().token_vector("computer").unwrap();
        assert!(cosine(&a, &c).unwrap().abs() < 0.3);
    }

    #[test]
    fn empty_token_rejected() {
        assert_eq!(enc().token_vector(""), Err(EmbeddingError::EmptyToken));
        assert!(matches!(enc().embed_phrase("the of"), Err(EmbeddingError::NoContentTokens(_))));
    }

    #[test]
    fn single_token_phrase_equals_token_vector() {
        assert_eq!(enc().embed_phrase("computer").unwrap(), enc().token_vector("computer").unwrap());
    }

    #[test]
    fn shared_token_geometry() {
        let e = enc();
        let ac = e.embed_phrase("alice's computer").unwrap();
        let c = e.embed_phrase("computer").unwrap();
        let bc = e.embed_phrase("bob's computer").unwrap();
        assert!((cosine(&ac, &c).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1);
        assert!((cosine(&ac, &bc).unwrap() - 0.5).abs() < 0.1);
    }

    #[test]
    fn cosine_degenerate_cases() {
        let u = enc().token_vector("lamp").unwrap();
        let neg = FeatureVector::from_values(u.values().iter().map(|x| -x).collect());
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&u, &FeatureVector::zeros(64)).unwrap(), 0.0);
        assert!((cosine(&u, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            cosine(&u, &FeatureVector::zeros(3)),
            Err(EmbeddingError::DimensionMismatch { left: 64, right: 3 })
        ));
    }

    #[test]
    fn accumulate_stays_unit() {
        let e = enc();
        let a = e.embed_phrase("alice's desk").unwrap();
        let b = e.embed_phrase("wooden desk").unwrap();
        let s = a.accumulate(&b);
        assert!((s.norm() - 1.0).abs() < 1e-12);
        let (ca, cb) = (cosine(&s, &a).unwrap(), cosine(&s, &b).unwrap());
        assert!((ca - cb).abs() < 1e-9);
    }
}
