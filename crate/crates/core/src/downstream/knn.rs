use super::DownstreamError;

/// Class, architecture, topology and homologous-superfamily labels.
pub type EatLabels = [String; 4];

/// Lookup set for embedding-based annotation transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct EatIndex {
    dim: usize,
    embeddings: Vec<Vec<f64>>,
    labels: Vec<EatLabels>,
}

impl EatIndex {
    pub fn new(embeddings: Vec<Vec<f64>>, labels: Vec<EatLabels>) -> Result<Self, DownstreamError> {
        if embeddings.is_empty() {
            return Err(DownstreamError::EmptyIndex);
        }
        if embeddings.len() != labels.len() {
            return Err(DownstreamError::LengthMismatch(embeddings.len(), labels.len()));
        }
        let dim = embeddings[0].len();
        if let Some(e) = embeddings.iter().find(|e| e.len() != dim) {
            return Err(DownstreamError::ShapeMismatch {
                expected: format!("[{dim}]"),
                found: format!("[{}]", e.len()),
            });
        }
        Ok(Self { dim, embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Labels transferred from the `k` nearest entries by Euclidean distance.
/// Equal distances favour the lower index. With `k > 1` each level takes the
/// most frequent label among the neighbours, ties going to the closer one.
pub fn knn_transfer(queries: &[Vec<f64>], index: &EatIndex, k: usize) -> Result<Vec<EatLabels>, DownstreamError> {
    if index.is_empty() {
        return Err(DownstreamError::EmptyIndex);
    }
    let k = k.clamp(1, index.len());
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        if q.len() != index.dim {
            return Err(DownstreamError::ShapeMismatch {
                expected: format!("[{}]", index.dim),
                found: format!("[{}]", q.len()),
            });
        }
        let mut order: Vec<(f64, usize)> = index
            .embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| (sq_dist(q, e), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let near: Vec<&EatLabels> = order[..k].iter().map(|&(_, i)| &index.labels[i]).collect();
        let labels: EatLabels = std::array::from_fn(|level| {
            let mut best: Option<(&String, usize)> = None;
            for cand in &near {
                let label = &cand[level];
                let count = near.iter().filter(|n| &n[level] == label).count();
                if best.is_none_or(|(_, c)| count > c) {
                    best = Some((label, count));
                }
            }
            best.map(|(l, _)| l.clone()).unwrap_or_default()
        });
        out.push(labels);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EatAccuracy {
    pub levels: [f64; 4],
    /// Arithmetic mean of the four level accuracies.
    pub mean: f64,
}

pub fn eat_accuracy(predicted: &[EatLabels], truth: &[EatLabels]) -> Result<EatAccuracy, DownstreamError> {
    if predicted.len() != truth.len() {
        return Err(DownstreamError::LengthMismatch(predicted.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(DownstreamError::EmptySplit("evaluation"));
    }
    let n = truth.len() as f64;
    let levels: [f64; 4] = std::array::from_fn(|l| {
        predicted.iter().zip(truth).filter(|(p, t)| p[l] == t[l]).count() as f64 / n
    });
    let mean = levels.iter().sum::<f64>() / 4.0;
    Ok(EatAccuracy { levels, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: &str) -> EatLabels {
        let parts: Vec<String> = s.split('.').map(String::from).collect();
        [parts[0].clone(), parts[1].clone(), parts[2].clone(), parts[3].clone()]
    }

    #[test]
    fn exact_match_and_tie_rule() {
        let index = EatIndex::new(
            vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 5.0]],
            vec![labels("1.1.1.1"), labels("2.2.2.2"), labels("3.3.3.3")],
        )
        .unwrap();
        let got = knn_transfer(&[vec![1.0, 5.0], vec![1.0, 0.0]], &index, 1).unwrap();
        assert_eq!(got[0], labels("3.3.3.3"));
        // equidistant from entries 0 and 1
        assert_eq!(got[1], labels("1.1.1.1"));
    }

    #[test]
    fn majority_vote_for_larger_k() {
        let index = EatIndex::new(
            vec![vec![0.0], vec![1.0], vec![1.5], vec![9.0]],
            vec![labels("1.1.1.1"), labels("1.2.2.2"), labels("1.2.3.3"), labels("4.4.4.4")],
        )
        .unwrap();
        let got = knn_transfer(&[vec![0.9]], &index, 3).unwrap();
        assert_eq!(got[0], labels("1.2.2.2"));
    }

    #[test]
    fn errors() {
        assert!(matches!(EatIndex::new(vec![], vec![]), Err(DownstreamError::EmptyIndex)));
        let index = EatIndex::new(vec![vec![0.0]], vec![labels("1.1.1.1")]).unwrap();
        assert!(matches!(
            knn_transfer(&[vec![0.0, 1.0]], &index, 1),
            Err(DownstreamError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn accuracy_levels() {
        let truth = vec![labels("1.1.1.1"), labels("2.2.2.2")];
        let acc = eat_accuracy(&truth, &truth).unwrap();
        assert_eq!(acc.levels, [1.0; 4]);
        assert_eq!(acc.mean, 1.0);
        let wrong4 = vec![labels("1.1.1.9"), labels("2.2.2.9")];
        assert_eq!(eat_accuracy(&wrong4, &truth).unwrap().mean, 0.75);
        assert!(matches!(
            eat_accuracy(&truth[..1], &truth),
            Err(DownstreamError::LengthMismatch(1, 2))
        ));
    }
}
