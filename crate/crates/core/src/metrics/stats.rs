use super::MetricError;

/// Exact-match fraction, skipping positions whose truth equals `ignore`.
pub fn q_accuracy<T: PartialEq>(pred: &[T], truth: &[T], ignore: Option<&T>) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    let mut total = 0;
    let mut correct = 0;
    for (p, t) in pred.iter().zip(truth) {
        if ignore == Some(t) {
            continue;
        }
        total += 1;
        correct += (p == t) as usize;
    }
    if total == 0 {
        return Err(MetricError::EmptySequence);
    }
    Ok(correct as f64 / total as f64)
}

/// 1-based fractional ranks; tied values share the mean of their ranks.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman's rho: Pearson correlation of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: x.len(),
        });
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ConstantInput);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_accuracy_cases() {
        let t = "HHHEEECCCC".as_bytes();
        assert_eq!(q_accuracy(t, t, None), Ok(1.0));
        assert_eq!(q_accuracy(b"EEECCCHHHH", t, None), Ok(0.0));
        // 7 of 10 correct; two of the wrong ones are ignored
        let truth = [1, 1, 1, 1, 1, 1, 1, 9, 9, 2];
        let pred = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0];
        assert_eq!(q_accuracy(&pred, &truth, Some(&9)), Ok(7.0 / 8.0));
        assert_eq!(q_accuracy(&[1], &[1, 2], None), Err(MetricError::LengthMismatch(1, 2)));
    }

    #[test]
    fn spearman_cases() {
        let x = [1.0, 2.5, 3.0, 7.0, 9.0];
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        let cubed: Vec<f64> = x.iter().map(|v| v * v * v + 4.0).collect();
        assert!((spearman(&x, &cubed).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(spearman(&x, &[2.0; 5]), Err(MetricError::ConstantInput));
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
