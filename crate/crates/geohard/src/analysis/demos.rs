//! Demonstration selection for in-context learning: per class, cluster the
//! class's vectors into as many clusters as requested shots and take the
//! member nearest each centroid, then lay the picks out as a prompt.

use serde::Serialize;

use super::AnalysisError;
use crate::kmeans::{self, nearest_to_centroid};
use crate::matrix::Matrix;

/// Chosen demonstration rows plus the assembled prompt text. The prompt ends
/// with a literal `{input}` placeholder for the caller to substitute.
#[derive(Debug, Clone, Serialize)]
pub struct Demonstrations {
    /// Global row indices, grouped by composition entry in order.
    pub indices: Vec<usize>,
    pub prompt: String,
}

/// Picks `shots` cluster medoids per class, in composition order, and builds
/// the prompt. One shot degenerates to the global class medoid.
pub fn select_demonstrations(
    coords: &Matrix,
    labels: &[String],
    texts: &[String],
    composition: &[(String, usize)],
    seed: u64,
) -> Result<Demonstrations, AnalysisError> {
    if labels.len() != coords.rows() {
        return Err(AnalysisError::LengthMismatch(coords.rows(), labels.len()));
    }
    if texts.len() != coords.rows() {
        return Err(AnalysisError::LengthMismatch(coords.rows(), texts.len()));
    }
    let mut indices = Vec::new();
    for (class, shots) in composition {
        if *shots == 0 {
            return Err(AnalysisError::BadParam(format!("class `{class}`: zero shots")));
        }
        let members: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == class).collect();
        if members.is_empty() {
            return Err(AnalysisError::UnknownClass(class.clone()));
        }
        if members.len() < *shots {
            return Err(AnalysisError::TooFewMembers {
                class: class.clone(),
                have: members.len(),
                need: *shots,
            });
        }
        let sub = coords.select_rows(&members);
        let model = kmeans::kmeans_fit(&sub, *shots, seed)?;
        for local in nearest_to_centroid(&sub, &model)? {
            indices.push(members[local]);
        }
    }

    let mut prompt = String::new();
    for &i in &indices {
        prompt.push_str(&format!("Sentence: {}\nSentiment: {}\n#####\n", texts[i], labels[i]));
    }
    prompt.push_str("Sentence: {input}\nSentiment:");
    Ok(Demonstrations { indices, prompt })
}
