//! Signed feature hashing of word unigrams and bigrams.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::template::ClinicalReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    pub dim: usize,
    pub hash_seed: u64,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig { dim: 256, hash_seed: 0 }
    }
}

/// Unit-norm text feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeature(pub Vec<f64>);

const SIGN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeded 64-bit hash (FNV-1a followed by a splitmix finalizer).
pub fn hash_token(token: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ splitmix64(seed);
    for &b in token.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Unigrams followed by adjacent-word bigrams.
pub fn ngrams(text: &str) -> Vec<String> {
    let words = tokenize(text);
    let mut grams = words.clone();
    grams.extend(words.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    grams
}

pub fn embed_text(text: &str, config: &TextConfig) -> Result<TextFeature> {
    if config.dim < 16 {
        return Err(Error::Config(format!(
            "text dim must be at least 16, got {}",
            config.dim
        )));
    }
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let mut v = vec![0.0; config.dim];
    for gram in ngrams(text) {
        let bucket = (hash_token(&gram, config.hash_seed) % config.dim as u64) as usize;
        let sign = if hash_token(&gram, config.hash_seed ^ SIGN_SALT) >> 63 == 0 {
            1.0
        } else {
            -1.0
        };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::EmptyText);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(TextFeature(v))
}

/// Stacks report features into an N×D matrix, one row per report.
pub fn embed_batch(reports: &[ClinicalReport], config: &TextConfig) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((reports.len(), config.dim));
    for (i, r) in reports.iter().enumerate() {
        let f = embed_text(&r.text, config)?;
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&f.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn tokens_and_bigrams() {
        assert_eq!(tokenize("The subject, aged 55!"), vec!["the", "subject", "aged", "55"]);
        assert_eq!(ngrams("a b c"), vec!["a", "b", "c", "a b", "b c"]);
    }

    #[test]
    fn unit_norm_and_deterministic() {
        let cfg = TextConfig::default();
        let a = embed_text("The subject is 55 years old British male.", &cfg).unwrap();
        let b = embed_text("The subject is 55 years old British male.", &cfg).unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a.0, &a.0) - 1.0).abs() < 1e-12);
        assert!((cosine(&a.0, &b.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_errors() {
        let cfg = TextConfig::default();
        assert!(matches!(embed_text("", &cfg), Err(Error::EmptyText)));
        assert!(matches!(embed_text(" ,.; ", &cfg), Err(Error::EmptyText)));
        let small = TextConfig { dim: 8, hash_seed: 0 };
        assert!(matches!(embed_text("x", &small), Err(Error::Config(_))));
    }

    #[test]
    fn disjoint_reports_are_nearly_orthogonal() {
        // Monte Carlo over hash seeds: two reports without shared tokens
        let a = "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima mike";
        let b = "november oscar papa quebec romeo sierra tango uniform victor whiskey xray yankee zulu";
        let mut hits = 0;
        for seed in 0..1000 {
            let cfg = TextConfig {
                dim: 256,
                hash_seed: seed,
            };
            let c = cosine(&embed_text(a, &cfg).unwrap().0, &embed_text(b, &cfg).unwrap().0);
            if c.abs() < 0.25 {
                hits += 1;
            }
        }
        assert!(hits >= 950, "{hits}/1000");
    }

    #[test]
    fn batch_rows_follow_report_order() {
        let cfg = TextConfig::default();
        let reports: Vec<ClinicalReport> = ["one two three", "four five six", "seven eight"]
            .iter()
            .enumerate()
            .map(|(i, t)| ClinicalReport {
                id: i.to_string(),
                text: t.to_string(),
            })
            .collect();
        let t = embed_batch(&reports, &cfg).unwrap();
        let mut rev = reports.clone();
        rev.reverse();
        let tr = embed_batch(&rev, &cfg).unwrap();
        for i in 0..3 {
            assert_eq!(t.row(i), tr.row(2 - i));
        }
        let gram = t.dot(&t.t());
        for i in 0..3 {
            assert!((gram[[i, i]] - 1.0).abs() < 1e-9);
        }
        let single = embed_batch(&reports[..1], &cfg).unwrap();
        assert_eq!(single.dim(), (1, 256));
    }
}
