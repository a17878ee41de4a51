use std::collections::BTreeMap;

use super::MetricError;

pub const GAP: char = '-';

/// Per-column Shannon entropy in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyProfile {
    pub values: Vec<f64>,
}

impl EntropyProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Column entropies of an aligned set. Gaps (`-` or `.`) count as a symbol
/// unless `exclude_gaps` is set, in which case they are dropped from the
/// column before counting; an all-gap column then has entropy 0.
pub fn shannon_profile<S: AsRef<str>>(aligned: &[S], exclude_gaps: bool) -> Result<EntropyProfile, MetricError> {
    let rows: Vec<Vec<char>> = aligned.iter().map(|s| s.as_ref().chars().collect()).collect();
    let first = rows.first().ok_or(MetricError::EmptySequence)?;
    let width = first.len();
    if let Some(r) = rows.iter().find(|r| r.len() != width) {
        return Err(MetricError::RaggedAlignment(width, r.len()));
    }
    let mut values = Vec::with_capacity(width);
    for col in 0..width {
        let mut counts: BTreeMap<char, usize> = BTreeMap::new();
        for r in &rows {
            let c = match r[col] {
                '.' => GAP,
                c => c.to_ascii_uppercase(),
            };
            if exclude_gaps && c == GAP {
                continue;
            }
            *counts.entry(c).or_default() += 1;
        }
        let n: usize = counts.values().sum();
        let h = counts
            .values()
            .map(|&k| {
                let p = k as f64 / n as f64;
                -p * p.log2()
            })
            .sum::<f64>();
        values.push(h.max(0.0));
    }
    Ok(EntropyProfile { values })
}

pub fn entropy_mse(a: &EntropyProfile, b: &EntropyProfile) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}
