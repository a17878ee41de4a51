use super::MetricError;
use crate::corpus::Point3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactRatio {
    /// Top `L` pairs.
    L1,
    /// Top `L / 5` pairs.
    L5,
    /// Top `L / n` pairs.
    Divisor(usize),
}

impl ContactRatio {
    fn divisor(self) -> usize {
        match self {
            ContactRatio::L1 => 1,
            ContactRatio::L5 => 5,
            ContactRatio::Divisor(n) => n.max(1),
        }
    }
}

/// Fraction of true contacts among the `max(1, L / divisor)` highest-scoring
/// pairs with `j - i >= min_separation`. Both matrices are row-major `L x L`;
/// only the upper triangle is read. Equal scores rank by `(i, j)`. If fewer
/// eligible pairs exist than requested, all of them are used.
pub fn contact_precision(
    scores: &[f64],
    truth: &[bool],
    len: usize,
    ratio: ContactRatio,
    min_separation: usize,
) -> Result<f64, MetricError> {
    if scores.len() != len * len {
        return Err(MetricError::LengthMismatch(scores.len(), len * len));
    }
    if truth.len() != len * len {
        return Err(MetricError::LengthMismatch(truth.len(), len * len));
    }
    let sep = min_separation.max(1);
    let mut pairs: Vec<(usize, usize)> = (0..len)
        .flat_map(|i| (i + sep..len).map(move |j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(MetricError::NoEligiblePairs);
    }
    pairs.sort_by(|&(a, b), &(c, d)| {
        scores[c * len + d]
            .total_cmp(&scores[a * len + b])
            .then((a, b).cmp(&(c, d)))
    });
    let k = (len / ratio.divisor()).max(1).min(pairs.len());
    let hits = pairs[..k].iter().filter(|&&(i, j)| truth[i * len + j]).count();
    Ok(hits as f64 / k as f64)
}

/// Boolean contact map: residues closer than `threshold` (8 Å by convention).
pub fn contacts_from_coords(coords: &[Point3], threshold: f64) -> Vec<bool> {
    let n = coords.len();
    let mut out = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = (0..3).map(|k| (coords[i][k] - coords[j][k]).powi(2)).sum();
            out[i * n + j] = d2.sqrt() < threshold;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_true_truth_is_perfect() {
        let len = 10;
        let scores: Vec<f64> = (0..len * len).map(|v| (v * 37 % 11) as f64).collect();
        let p = contact_precision(&scores, &vec![true; len * len], len, ContactRatio::L1, 6).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn hand_built_l5_case() {
        let len = 10;
        let mut truth = vec![false; len * len];
        let mut scores = vec![0.0; len * len];
        for (i, j) in [(0, 7), (1, 8), (2, 9)] {
            truth[i * len + j] = true;
            truth[j * len + i] = true;
        }
        scores[len + 8] = 0.9;
        scores[2 * len + 9] = 0.8;
        scores[3 * len + 9] = 0.7;
        let p = contact_precision(&scores, &truth, len, ContactRatio::L5, 6).unwrap();
        assert_eq!(p, 1.0);
        let p = contact_precision(&scores, &truth, len, ContactRatio::Divisor(3), 6).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_pairs_and_coordinates() {
        assert_eq!(
            contact_precision(&[0.0; 9], &[false; 9], 3, ContactRatio::L1, 6),
            Err(MetricError::NoEligiblePairs)
        );
        let map = contacts_from_coords(&[[0.0; 3], [7.9, 0.0, 0.0], [20.0, 0.0, 0.0]], 8.0);
        assert_eq!(map, vec![true, true, false, true, true, false, false, false, true]);
    }
}
