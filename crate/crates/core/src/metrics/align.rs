use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MetricError;

/// Linear-gap scoring, optionally with a substitution matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scoring {
    pub match_score: f64,
    pub mismatch: f64,
    pub gap: f64,
    pub matrix: Option<BTreeMap<(char, char), f64>>,
}

impl Default for Scoring {
    fn default() -> Self {
        Self {
            match_score: 1.0,
            mismatch: 0.0,
            gap: 0.0,
            matrix: None,
        }
    }
}

impl Scoring {
    /// Parses an NCBI-style whitespace matrix: a header row of symbols, then
    /// one row per symbol. `#` lines are comments.
    pub fn from_matrix_str(text: &str, gap: f64) -> Result<Self, String> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header: Vec<char> = lines
            .next()
            .ok_or("empty matrix")?
            .split_whitespace()
            .map(|t| t.chars().next().unwrap_or(' '))
            .collect();
        let mut matrix = BTreeMap::new();
        for line in lines {
            let mut fields = line.split_whitespace();
            let row = fields.next().and_then(|t| t.chars().next()).ok_or("empty row")?;
            let values: Vec<&str> = fields.collect();
            if values.len() != header.len() {
                return Err(format!("row {row}: {} values for {} columns", values.len(), header.len()));
            }
            for (col, v) in header.iter().zip(values) {
                let v: f64 = v.parse().map_err(|_| format!("bad score {v:?}"))?;
                matrix.insert((row, *col), v);
            }
        }
        Ok(Self {
            gap,
            matrix: Some(matrix),
            ..Self::default()
        })
    }

    fn pair(&self, a: char, b: char) -> f64 {
        if let Some(m) = &self.matrix {
            if let Some(&v) = m.get(&(a, b)).or_else(|| m.get(&(b, a))) {
                return v;
            }
        }
        if a == b {
            self.match_score
        } else {
            self.mismatch
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdentityDenominator {
    #[default]
    AlignmentLength,
    ShorterSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub aligned_a: String,
    pub aligned_b: String,
    pub score: f64,
    pub matches: usize,
    pub length: usize,
    /// In `[0, 1]`.
    pub identity: f64,
}

/// Cell value ordered by score, then identical columns, then aligned
/// (non-gap) columns. Every criterion is symmetric in the two sequences, so
/// swapping them yields the same optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    score: f64,
    matches: usize,
    diagonal: usize,
}

impl Cell {
    fn better(&self, other: &Cell) -> bool {
        (self.score, self.matches, self.diagonal) > (other.score, other.matches, other.diagonal)
    }
}

/// Needleman-Wunsch global alignment.
pub fn global_identity(
    a: &str,
    b: &str,
    scoring: &Scoring,
    denominator: IdentityDenominator,
) -> Result<AlignmentResult, MetricError> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    // 0 = diagonal, 1 = up (gap in b), 2 = left (gap in a)
    let mut cells = vec![
        Cell {
            score: 0.0,
            matches: 0,
            diagonal: 0
        };
        (n + 1) * w
    ];
    let mut moves = vec![0u8; (n + 1) * w];
    for i in 1..=n {
        cells[i * w].score = scoring.gap * i as f64;
        moves[i * w] = 1;
    }
    for j in 1..=m {
        cells[j].score = scoring.gap * j as f64;
        moves[j] = 2;
    }
    for i in 1..=n {
        for j in 1..=m {
            let d = cells[(i - 1) * w + j - 1];
            let same = a[i - 1] == b[j - 1];
            let diag = Cell {
                score: d.score + scoring.pair(a[i - 1], b[j - 1]),
                matches: d.matches + same as usize,
                diagonal: d.diagonal + 1,
            };
            let u = cells[(i - 1) * w + j];
            let up = Cell {
                score: u.score + scoring.gap,
                ..u
            };
            let l = cells[i * w + j - 1];
            let left = Cell {
                score: l.score + scoring.gap,
                ..l
            };
            let (mut best, mut mv) = (diag, 0);
            if up.better(&best) {
                (best, mv) = (up, 1);
            }
            if left.better(&best) {
                (best, mv) = (left, 2);
            }
            cells[i * w + j] = best;
            moves[i * w + j] = mv;
        }
    }
    let end = cells[n * w + m];
    let (mut i, mut j) = (n, m);
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    while i > 0 || j > 0 {
        match moves[i * w + j] {
            0 => {
                ra.push(a[i - 1]);
                rb.push(b[j - 1]);
                i -= 1;
                j -= 1;
            }
            1 => {
                ra.push(a[i - 1]);
                rb.push('-');
                i -= 1;
            }
            _ => {
                ra.push('-');
                rb.push(b[j - 1]);
                j -= 1;
            }
        }
    }
    ra.reverse();
    rb.reverse();
    let length = ra.len();
    let denom = match denominator {
        IdentityDenominator::AlignmentLength => length,
        IdentityDenominator::ShorterSequence => n.min(m),
    };
    Ok(AlignmentResult {
        aligned_a: ra.into_iter().collect(),
        aligned_b: rb.into_iter().collect(),
        score: end.score,
        matches: end.matches,
        length,
        identity: end.matches as f64 / denom as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentitySummary {
    /// One identity per compared pair, in pair order.
    pub values: Vec<f64>,
    pub mean: f64,
    /// Ten equal-width bins over `[0, 1]`; 1.0 falls in the last bin.
    pub histogram: [usize; 10],
}

/// Pairwise identity within a set. When there are more pairs than
/// `sample_size`, a seeded sample of distinct pairs is compared instead.
pub fn internal_identity<S: AsRef<str>>(
    seqs: &[S],
    sample_size: usize,
    seed: u64,
    scoring: &Scoring,
) -> Result<IdentitySummary, MetricError> {
    if seqs.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: seqs.len(),
        });
    }
    let mut pairs = Vec::new();
    for i in 0..seqs.len() {
        for j in i + 1..seqs.len() {
            pairs.push((i, j));
        }
    }
    if pairs.len() > sample_size.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, pairs.len(), sample_size.max(1)).into_vec();
        picked.sort_unstable();
        pairs = picked.into_iter().map(|k| pairs[k]).collect();
    }
    let mut values = Vec::with_capacity(pairs.len());
    let mut histogram = [0usize; 10];
    for (i, j) in pairs {
        let r = global_identity(seqs[i].as_ref(), seqs[j].as_ref(), scoring, IdentityDenominator::AlignmentLength)?;
        histogram[((r.identity * 10.0) as usize).min(9)] += 1;
        values.push(r.identity);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(IdentitySummary {
        values,
        mean,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ident(a: &str, b: &str) -> AlignmentResult {
        global_identity(a, b, &Scoring::default(), IdentityDenominator::AlignmentLength).unwrap()
    }

    #[test]
    fn identical_sequences() {
        let r = ident("MKVLA", "MKVLA");
        assert_eq!(r.identity, 1.0);
        assert!(!r.aligned_a.contains('-'));
    }

    #[test]
    fn single_substitution() {
        let r = ident("ACD", "AXD");
        assert_eq!(r.matches, 2);
        assert_eq!(r.length, 3);
        assert!((r.identity - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric() {
        for (a, b) in [("ACDAC", "CADCA"), ("MKV", "KVMKV"), ("AAAA", "A")] {
            assert_eq!(ident(a, b).identity, ident(b, a).identity);
        }
    }

    #[test]
    fn shorter_denominator_and_errors() {
        let r = global_identity("AAAA", "AA", &Scoring::default(), IdentityDenominator::ShorterSequence).unwrap();
        assert_eq!(r.identity, 1.0);
        assert_eq!(
            global_identity("", "A", &Scoring::default(), IdentityDenominator::AlignmentLength),
            Err(MetricError::EmptySequence)
        );
    }

    #[test]
    fn matrix_scoring() {
        let s = Scoring::from_matrix_str("# toy\n  A C\nA 4 -1\nC -1 9\n", -2.0).unwrap();
        let r = global_identity("AC", "AC", &s, IdentityDenominator::AlignmentLength).unwrap();
        assert_eq!(r.score, 13.0);
        assert!(Scoring::from_matrix_str("A C\nA 1\n", 0.0).is_err());
    }

    #[test]
    fn internal_identity_cases() {
        let s = Scoring::default();
        let r = internal_identity(&["MKV", "MKV"], 100, 0, &s).unwrap();
        assert_eq!(r.values, vec![1.0]);
        assert_eq!(r.histogram[9], 1);
        let r = internal_identity(&["AAAA", "CCCC"], 100, 0, &s).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(
            internal_identity(&["A"], 10, 0, &s),
            Err(MetricError::TooFew { needed: 2, got: 1 })
        );
        let set = ["ACDE", "ACDF", "MKVL", "ACKL", "WWWW"];
        let sampled = internal_identity(&set, 4, 3, &s).unwrap();
        assert_eq!(sampled.values.len(), 4);
        assert_eq!(sampled, internal_identity(&set, 4, 3, &s).unwrap());
    }
}
