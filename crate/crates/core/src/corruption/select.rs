use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CorruptionError, CorruptionSpec, Selection};
use crate::corpus::TokenId;

/// Number of positions to mask: `max(1, round_half_up(p * len))`, capped at `len`.
pub fn mask_count(len: usize, p: f64) -> usize {
    let raw = (p * len as f64 + 0.5).floor() as usize;
    raw.max(1).min(len.max(1))
}

/// Picks the positions to corrupt, sorted ascending.
pub fn select_indices<R: Rng + ?Sized>(
    seq: &[TokenId],
    spec: &CorruptionSpec,
    rng: &mut R,
) -> Result<Vec<usize>, CorruptionError> {
    if seq.is_empty() {
        return Err(CorruptionError::EmptySequence);
    }
    let budget = mask_count(seq.len(), spec.probability);
    let mut picked = match spec.strategy.selection() {
        Selection::Uniform => uniform(seq.len(), budget, rng),
        Selection::CoverageFirst => coverage_first(seq, budget, rng),
        Selection::CoverageTrigram => {
            let centres = coverage_first(seq, budget, rng);
            let mut widened: Vec<usize> = centres
                .iter()
                .flat_map(|&i| [i.wrapping_sub(1), i, i + 1])
                .filter(|&j| j < seq.len())
                .collect();
            widened.sort_unstable();
            widened.dedup();
            widened
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

fn uniform<R: Rng + ?Sized>(len: usize, budget: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, len, budget).into_vec()
}

/// Visits positions in random order, masking the first occurrence of every
/// symbol except the most frequent one (ties to the lowest id), then fills
/// the remaining budget uniformly from the untouched positions.
fn coverage_first<R: Rng + ?Sized>(seq: &[TokenId], budget: usize, rng: &mut R) -> Vec<usize> {
    let mut counts: BTreeMap<TokenId, usize> = BTreeMap::new();
    for &t in seq {
        *counts.entry(t).or_default() += 1;
    }
    // BTreeMap iterates in id order, so max_by_key keeping the first max
    // needs a reversed comparison on the id.
    let dominant = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&t, _)| t)
        .expect("non-empty sequence");

    let mut order: Vec<usize> = (0..seq.len()).collect();
    order.shuffle(rng);

    let mut picked = Vec::with_capacity(budget);
    let mut covered = HashSet::new();
    let mut taken = vec![false; seq.len()];
    for &i in &order {
        if picked.len() == budget {
            break;
        }
        let t = seq[i];
        if t != dominant && covered.insert(t) {
            picked.push(i);
            taken[i] = true;
        }
    }
    let mut rest: Vec<usize> = (0..seq.len()).filter(|&i| !taken[i]).collect();
    rest.shuffle(rng);
    let missing = budget - picked.len();
    picked.extend(rest.into_iter().take(missing));
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::corruption::Strategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(strategy: Strategy, p: f64, seed: u64) -> CorruptionSpec {
        CorruptionSpec::new(strategy, p, seed).unwrap()
    }

    #[test]
    fn budget_rule() {
        assert_eq!(mask_count(20, 0.15), 3);
        assert_eq!(mask_count(1, 0.15), 1);
        assert_eq!(mask_count(100, 0.30), 30);
        assert_eq!(mask_count(10, 0.05), 1);
        assert_eq!(mask_count(10, 0.25), 3);
    }

    #[test]
    fn coverage_first_masks_rare_symbols_once() {
        let v = Vocabulary::new();
        let seq = v.encode("ABCAAAAAAAAAAAAAAAAA").unwrap();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = select_indices(&seq, &spec(Strategy::S1, 0.15, seed), &mut rng).unwrap();
            assert_eq!(idx.len(), 3);
            let mut symbols: Vec<char> = idx
                .iter()
                .map(|&i| v.residue_symbol(seq[i]).unwrap())
                .collect();
            symbols.sort_unstable();
            assert_eq!(symbols, vec!['A', 'B', 'C'], "seed {seed}");
        }
    }

    #[test]
    fn trigram_window_includes_neighbours() {
        let v = Vocabulary::new();
        let seq = v.encode("ABCDEFG").unwrap();
        let mut seen_d = false;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut probe = ChaCha8Rng::seed_from_u64(seed);
            let centres = coverage_first(&seq, mask_count(7, 0.15), &mut probe);
            let idx = select_indices(&seq, &spec(Strategy::S2, 0.15, seed), &mut rng).unwrap();
            if centres.contains(&3) {
                seen_d = true;
                assert!([2, 3, 4].iter().all(|i| idx.contains(i)), "{idx:?}");
            }
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(seen_d);
    }

    #[test]
    fn deterministic_under_seed() {
        let v = Vocabulary::new();
        let seq = v.encode("MKVLAAGIVGLLLAAGCSSEKKAEQ").unwrap();
        for strategy in Strategy::ALL {
            let s = spec(strategy, 0.2, 42);
            let a = select_indices(&seq, &s, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
            let b = select_indices(&seq, &s, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dominant_tie_goes_to_lowest_id() {
        // A and C both appear twice; A has the lower id so C must be covered.
        let v = Vocabulary::new();
        let seq = v.encode("AACC").unwrap();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = coverage_first(&seq, 1, &mut rng);
            assert_eq!(v.residue_symbol(seq[idx[0]]), Some('C'));
        }
    }
}
