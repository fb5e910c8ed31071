//! Cosine similarity between weighted tag lists and the user x user matrix
//! used to pick collaborative partners.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::Tag;
use crate::profile::WeightedTagList;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimilarityError {
    #[error("user `{0}` is not in the similarity matrix")]
    NotFound(String),
    #[error("similarity threshold must be in (0, 1], got {0}")]
    Threshold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfConfig {
    pub similarity_threshold: f64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            similarity_threshold: 0.95,
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        let t = self.similarity_threshold;
        if t > 0.0 && t <= 1.0 {
            Ok(())
        } else {
            Err(SimilarityError::Threshold(t.to_string()))
        }
    }
}

/// Cosine of two non-negative tag weight vectors; a tag missing from one side
/// has weight 0 there. Either vector being all-zero gives 0.
///
/// Both maps iterate in tag order, so the dot product is summed in the same
/// order regardless of argument order and the result is exactly symmetric.
pub fn cosine_weights(u: &BTreeMap<Tag, f64>, v: &BTreeMap<Tag, f64>) -> f64 {
    let norm_u: f64 = u.values().map(|w| w * w).sum();
    let norm_v: f64 = v.values().map(|w| w * w).sum();
    if norm_u == 0.0 || norm_v == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    let mut a = u.iter().peekable();
    let mut b = v.iter().peekable();
    while let (Some((ta, wa)), Some((tb, wb))) = (a.peek(), b.peek()) {
        match ta.cmp(tb) {
            std::cmp::Ordering::Less => {
                a.next();
            }
            std::cmp::Ordering::Greater => {
                b.next();
            }
            std::cmp::Ordering::Equal => {
                dot += *wa * *wb;
                a.next();
                b.next();
            }
        }
    }
    (dot / (norm_u * norm_v).sqrt()).clamp(0.0, 1.0)
}

pub fn cosine(u: &WeightedTagList, v: &WeightedTagList) -> f64 {
    cosine_weights(&u.entries, &v.entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub users: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub built_at: DateTime<Utc>,
}

/// Users are taken in key order. The diagonal is 1 for users with a non-zero
/// profile and 0 otherwise.
pub fn build_matrix(
    profiles: &BTreeMap<String, BTreeMap<Tag, f64>>,
    built_at: DateTime<Utc>,
) -> SimilarityMatrix {
    let users: Vec<String> = profiles.keys().cloned().collect();
    let vectors: Vec<&BTreeMap<Tag, f64>> = profiles.values().collect();
    let n = users.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if i == j {
                        if vectors[i].values().any(|w| *w > 0.0) {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        cosine_weights(vectors[i], vectors[j])
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![vec![0.0; n]; n];
    for (i, row) in upper.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let j = i + k;
            values[i][j] = *v;
            values[j][i] = *v;
        }
    }
    SimilarityMatrix {
        users,
        values,
        built_at,
    }
}

impl SimilarityMatrix {
    pub fn index_of(&self, user: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(user)).ok()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.values[self.index_of(a)?][self.index_of(b)?])
    }

    /// Other users at or above the threshold, most similar first, ties by
    /// user id.
    pub fn cf_partners(
        &self,
        user: &str,
        config: &CfConfig,
    ) -> Result<Vec<(String, f64)>, SimilarityError> {
        let i = self
            .index_of(user)
            .ok_or_else(|| SimilarityError::NotFound(user.to_string()))?;
        let mut partners: Vec<(String, f64)> = self
            .users
            .iter()
            .zip(&self.values[i])
            .enumerate()
            .filter(|(j, (_, s))| *j != i && **s >= config.similarity_threshold)
            .map(|(_, (u, s))| (u.clone(), *s))
            .collect();
        partners.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(partners)
    }

    /// CSV with user ids as the header row and first column.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["user_id".to_string()];
        header.extend(self.users.iter().cloned());
        w.write_record(&header)?;
        for (u, row) in self.users.iter().zip(&self.values) {
            let mut rec = vec![u.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}
