//! Embedding-redundancy diagnostics over vision-encoder tokens: how many
//! tokens have a near-duplicate anywhere in the image, the longest run of
//! near-identical neighbours in spatial order, and how much attention lands on
//! the hidden-content region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor_io::{Matrix, TokenEmbeddingSet};

pub const DEFAULT_THRESHOLD: f32 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RedundancyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub token_count: usize,
    pub repetition_rate: f64,
    pub repeated_token_count: usize,
    pub max_consecutive_run: usize,
    pub threshold: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_mass_hidden: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    /// low minus high
    pub repeated_token_delta: i64,
    pub repetition_rate_delta: f64,
    pub max_run_delta: i64,
    pub redundancy_reduced: bool,
}

fn check_tokens(tokens: &Matrix, threshold: f32) -> Result<(), RedundancyError> {
    if tokens.rows() == 0 || tokens.cols() == 0 {
        return Err(RedundancyError::InvalidInput(format!(
            "token matrix must be non-empty, got {}x{}",
            tokens.rows(),
            tokens.cols()
        )));
    }
    if tokens.data().iter().any(|v| !v.is_finite()) {
        return Err(RedundancyError::InvalidInput("token matrix contains NaN or Inf".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(RedundancyError::InvalidInput(format!("threshold {threshold} outside (0, 1]")));
    }
    Ok(())
}

/// Unit-normalised rows in f64; zero rows stay `None`.
fn normalized_rows(tokens: &Matrix) -> Vec<Option<Vec<f64>>> {
    (0..tokens.rows())
        .map(|i| {
            let row: Vec<f64> = tokens.row(i).iter().map(|&v| v as f64).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm > 0.0).then(|| row.iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Cosine between two normalised rows, clamped to [-1, 1]. Two zero vectors
/// count as identical; a zero vector against anything else scores 0.
fn similarity(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0),
        (None, None) => 1.0,
        _ => 0.0,
    }
}

/// Fills the rate fields; `max_consecutive_run` is computed as well so the
/// report is complete.
pub fn repetition_rate(tokens: &Matrix, threshold: f32) -> Result<RedundancyReport, RedundancyError> {
    check_tokens(tokens, threshold)?;
    let rows = normalized_rows(tokens);
    let t = threshold as f64;
    let n = rows.len();
    let mut repeated = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            if repeated[i] && repeated[j] {
                continue;
            }
            if similarity(&rows[i], &rows[j]) > t {
                repeated[i] = true;
                repeated[j] = true;
            }
        }
    }
    let repeated_token_count = repeated.iter().filter(|&&r| r).count();
    Ok(RedundancyReport {
        token_count: n,
        repetition_rate: repeated_token_count as f64 / n as f64,
        repeated_token_count,
        max_consecutive_run: longest_run(&rows, t),
        threshold,
        attention_mass_hidden: None,
    })
}

fn longest_run(rows: &[Option<Vec<f64>>], threshold: f64) -> usize {
    let mut best = 1;
    let mut current = 1;
    for pair in rows.windows(2) {
        if similarity(&pair[0], &pair[1]) > threshold {
            current += 1;
            best = best.max(current);
        } else {
            current = 1;
        }
    }
    best
}

pub fn max_consecutive_run(tokens: &Matrix, threshold: f32) -> Result<usize, RedundancyError> {
    check_tokens(tokens, threshold)?;
    Ok(longest_run(&normalized_rows(tokens), threshold as f64))
}

/// Share of total attention weight that falls on masked (hidden-content) columns.
pub fn attention_mass(attention: &Matrix, mask: &[bool]) -> Result<f64, RedundancyError> {
    if mask.len() != attention.cols() {
        return Err(RedundancyError::InvalidInput(format!(
            "mask has {} entries for {} attention columns",
            mask.len(),
            attention.cols()
        )));
    }
    if !mask.iter().any(|&m| m) || mask.iter().all(|&m| m) {
        return Err(RedundancyError::InvalidInput("mask needs at least one hidden and one background position".into()));
    }
    if attention.data().iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(RedundancyError::InvalidInput("attention must be finite and non-negative".into()));
    }
    let mut hidden = 0.0f64;
    let mut total = 0.0f64;
    for q in 0..attention.rows() {
        for (&w, &m) in attention.row(q).iter().zip(mask) {
            total += w as f64;
            if m {
                hidden += w as f64;
            }
        }
    }
    if total <= 0.0 {
        return Err(RedundancyError::InvalidInput("attention is all zero".into()));
    }
    Ok((hidden / total).clamp(0.0, 1.0))
}

/// Full report for an exported embedding set, including attention mass when
/// both attention and mask are present.
pub fn analyze(set: &TokenEmbeddingSet, threshold: f32) -> Result<RedundancyReport, RedundancyError> {
    let mut report = repetition_rate(&set.tokens, threshold)?;
    if let (Some(att), Some(mask)) = (&set.attention, &set.mask) {
        report.attention_mass_hidden = Some(attention_mass(att, mask)?);
    }
    Ok(report)
}

pub fn compare_reports(high_res: &RedundancyReport, low_res: &RedundancyReport) -> ComparisonSummary {
    ComparisonSummary {
        repeated_token_delta: low_res.repeated_token_count as i64 - high_res.repeated_token_count as i64,
        repetition_rate_delta: low_res.repetition_rate - high_res.repetition_rate,
        max_run_delta: low_res.max_consecutive_run as i64 - high_res.max_consecutive_run as i64,
        redundancy_reduced: low_res.repeated_token_count < high_res.repeated_token_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f32]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_tokens_all_repeated() {
        let r = repetition_rate(&m(&[&[1.0f32, 2.0][..]; 4]), 0.95).unwrap();
        assert_eq!((r.repeated_token_count, r.repetition_rate), (4, 1.0));
        assert_eq!(r.max_consecutive_run, 4);
    }

    #[test]
    fn orthogonal_tokens_none_repeated() {
        let r = repetition_rate(&m(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]), 0.95).unwrap();
        assert_eq!(r.repetition_rate, 0.0);
        assert_eq!(r.max_consecutive_run, 1);
    }

    #[test]
    fn two_of_five() {
        let tokens = m(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        let r = repetition_rate(&tokens, 0.95).unwrap();
        assert_eq!(r.repeated_token_count, 2);
        assert!((r.repetition_rate - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_vectors() {
        let r = repetition_rate(&m(&[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]]), 0.95).unwrap();
        assert_eq!(r.repeated_token_count, 2);
        let r = repetition_rate(&m(&[&[0.0, 0.0], &[1.0, 0.0]]), 0.5).unwrap();
        assert_eq!(r.repeated_token_count, 0);
    }

    #[test]
    fn runs() {
        assert_eq!(max_consecutive_run(&m(&[&[3.0, 1.0]]), 0.95).unwrap(), 1);
        let (a, b): (&[f32], &[f32]) = (&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(max_consecutive_run(&m(&[a, a, a, b, a]), 0.95).unwrap(), 3);
        assert_eq!(max_consecutive_run(&m(&[a; 10]), 0.95).unwrap(), 10);
    }

    #[test]
    fn invalid_inputs() {
        assert!(repetition_rate(&m(&[&[f32::NAN]]), 0.95).is_err());
        assert!(repetition_rate(&Matrix::new(0, 0, vec![]).unwrap(), 0.95).is_err());
        assert!(repetition_rate(&m(&[&[1.0]]), 0.0).is_err());
        assert!(max_consecutive_run(&m(&[&[f32::INFINITY]]), 0.95).is_err());
    }

    #[test]
    fn attention_cases() {
        let uniform = Matrix::new(2, 8, vec![1.0; 16]).unwrap();
        let mask = [true, true, false, false, false, false, false, false];
        assert!((attention_mass(&uniform, &mask).unwrap() - 0.25).abs() < 1e-12);
        let focused = Matrix::new(1, 4, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(attention_mass(&focused, &[true, true, false, false]).unwrap(), 1.0);
        assert!(attention_mass(&Matrix::new(1, 2, vec![0.0, 0.0]).unwrap(), &[true, false]).is_err());
        assert!(attention_mass(&focused, &[true; 4]).is_err());
        assert!(attention_mass(&focused, &[false; 4]).is_err());
    }

    fn report(repeated: usize, run: usize, count: usize) -> RedundancyReport {
        RedundancyReport {
            token_count: count,
            repetition_rate: repeated as f64 / count as f64,
            repeated_token_count: repeated,
            max_consecutive_run: run,
            threshold: DEFAULT_THRESHOLD,
            attention_mass_hidden: None,
        }
    }

    #[test]
    fn comparisons() {
        let c = compare_reports(&report(1000, 666, 1370), &report(10, 6, 16));
        assert!(c.redundancy_reduced);
        assert_eq!(c.repeated_token_delta, -990);
        assert_eq!(c.max_run_delta, -660);
        let same = report(5, 2, 9);
        let c = compare_reports(&same, &same);
        assert_eq!((c.repeated_token_delta, c.max_run_delta, c.repetition_rate_delta), (0, 0, 0.0));
        assert!(!c.redundancy_reduced);
    }
}
