use super::{CorruptionError, Strategy};
use crate::corpus::{TokenId, Vocabulary, EOS_ID};

/// Encoder input, decoder target and target loss mask for one sequence.
/// Both token lists end with `eos`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPair {
    pub strategy: Strategy,
    pub input_ids: Vec<TokenId>,
    pub target_ids: Vec<TokenId>,
    pub loss_mask: Vec<bool>,
    pub mask_positions: Vec<usize>,
    /// `mask_positions.len() / L`; exceeds the nominal rate for S2 windows.
    pub masked_fraction: f64,
}

/// A maximal stretch of positions sharing the same masked/unmasked state.
struct Run {
    masked: bool,
    start: usize,
    end: usize,
}

fn runs(mask: &[bool]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for (i, &m) in mask.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.masked == m => r.end = i + 1,
            _ => out.push(Run {
                masked: m,
                start: i,
                end: i + 1,
            }),
        }
    }
    out
}

pub fn build_pair(
    seq: &[TokenId],
    indices: &[usize],
    strategy: Strategy,
) -> Result<MaskedPair, CorruptionError> {
    if seq.is_empty() {
        return Err(CorruptionError::EmptySequence);
    }
    let mut positions = indices.to_vec();
    positions.sort_unstable();
    positions.dedup();
    if let Some(&index) = positions.iter().find(|&&i| i >= seq.len()) {
        return Err(CorruptionError::IndexOutOfRange {
            index,
            len: seq.len(),
        });
    }
    let mut mask = vec![false; seq.len()];
    for &i in &positions {
        mask[i] = true;
    }

    let vocab = Vocabulary::new();
    let runs = runs(&mask);

    let mut input = Vec::with_capacity(seq.len() + 1);
    if strategy.per_position_input() {
        let mut k = 0;
        for (i, &t) in seq.iter().enumerate() {
            if mask[i] {
                input.push(vocab.sentinel_id(k));
                k += 1;
            } else {
                input.push(t);
            }
        }
    } else {
        let mut k = 0;
        for r in &runs {
            if r.masked {
                input.push(vocab.sentinel_id(k));
                k += 1;
            } else {
                input.extend_from_slice(&seq[r.start..r.end]);
            }
        }
    }

    let mut target = Vec::with_capacity(seq.len() + 1);
    let mut loss_mask = Vec::with_capacity(seq.len() + 1);
    match strategy {
        Strategy::S0 | Strategy::S1 | Strategy::S2 => {
            target.extend_from_slice(seq);
            loss_mask.resize(seq.len(), true);
        }
        Strategy::S3 => {
            target.extend_from_slice(seq);
            loss_mask.extend_from_slice(&mask);
        }
        Strategy::S4 | Strategy::S5 | Strategy::S6Span => {
            let mut k = 0;
            for r in &runs {
                if r.masked {
                    target.extend_from_slice(&seq[r.start..r.end]);
                } else {
                    target.push(vocab.sentinel_id(k));
                    k += 1;
                }
            }
            loss_mask.resize(target.len(), true);
        }
        Strategy::S6Literal => {
            target.extend((0..runs.len()).map(|k| vocab.sentinel_id(k)));
            loss_mask.resize(target.len(), true);
        }
    }

    input.push(EOS_ID);
    target.push(EOS_ID);
    // Under S3 only masked positions contribute, eos included.
    loss_mask.push(strategy != Strategy::S3);

    Ok(MaskedPair {
        strategy,
        input_ids: input,
        target_ids: target,
        loss_mask,
        masked_fraction: positions.len() as f64 / seq.len() as f64,
        mask_positions: positions,
    })
}

fn strip_eos(ids: &[TokenId]) -> &[TokenId] {
    match ids.last() {
        Some(&EOS_ID) => &ids[..ids.len() - 1],
        _ => ids,
    }
}

/// Reconstructs the original sequence from a pair.
pub fn invert(pair: &MaskedPair) -> Result<Vec<TokenId>, CorruptionError> {
    let vocab = Vocabulary::new();
    let target = strip_eos(&pair.target_ids);
    match pair.strategy {
        Strategy::S0 | Strategy::S1 | Strategy::S2 | Strategy::S3 => {
            if let Some(i) = target.iter().position(|&t| !vocab.is_residue(t)) {
                return Err(CorruptionError::SpliceMismatch(format!(
                    "non-residue token at target position {i}"
                )));
            }
            Ok(target.to_vec())
        }
        Strategy::S4 | Strategy::S5 => splice_span_target(&pair.input_ids, &pair.target_ids),
        Strategy::S6Span => splice_merged_runs(&pair.input_ids, target),
        Strategy::S6Literal => Err(CorruptionError::NotInvertible(pair.strategy)),
    }
}

/// Splices a per-position-sentinel span target back into its input.
///
/// The input fixes the expected target layout exactly: one sentinel per
/// maximal unmasked run and one residue per input sentinel, in order. Any
/// deviation is a [`CorruptionError::SpliceMismatch`].
pub fn splice_span_target(
    input: &[TokenId],
    target: &[TokenId],
) -> Result<Vec<TokenId>, CorruptionError> {
    let vocab = Vocabulary::new();
    let input = strip_eos(input);
    let target = strip_eos(target);
    let mut out = Vec::with_capacity(input.len());
    let mut t = 0;
    let mut in_unmasked_run = false;
    let mismatch = |what: String| CorruptionError::SpliceMismatch(what);
    for (i, &tok) in input.iter().enumerate() {
        if vocab.is_sentinel(tok) {
            in_unmasked_run = false;
            let got = *target
                .get(t)
                .ok_or_else(|| mismatch(format!("target ended before input position {i}")))?;
            if !vocab.is_residue(got) {
                return Err(mismatch(format!(
                    "expected a residue at target position {t}, found {}",
                    vocab.token_name(got)
                )));
            }
            out.push(got);
            t += 1;
        } else {
            if !in_unmasked_run {
                let got = *target
                    .get(t)
                    .ok_or_else(|| mismatch(format!("target ended before input position {i}")))?;
                if !vocab.is_sentinel(got) {
                    return Err(mismatch(format!(
                        "expected a sentinel at target position {t}, found {}",
                        vocab.token_name(got)
                    )));
                }
                t += 1;
                in_unmasked_run = true;
            }
            out.push(tok);
        }
    }
    if t != target.len() {
        return Err(mismatch(format!(
            "{} trailing target tokens",
            target.len() - t
        )));
    }
    Ok(out)
}

fn splice_merged_runs(input: &[TokenId], target: &[TokenId]) -> Result<Vec<TokenId>, CorruptionError> {
    let vocab = Vocabulary::new();
    let mut masked_runs: Vec<Vec<TokenId>> = Vec::new();
    let mut current: Vec<TokenId> = Vec::new();
    for &tok in target {
        if vocab.is_sentinel(tok) {
            if !current.is_empty() {
                masked_runs.push(std::mem::take(&mut current));
            }
        } else {
            current.push(tok);
        }
    }
    if !current.is_empty() {
        masked_runs.push(current);
    }
    let mut runs = masked_runs.into_iter();
    let mut out = Vec::new();
    for &tok in strip_eos(input) {
        if vocab.is_sentinel(tok) {
            let run = runs.next().ok_or_else(|| {
                CorruptionError::SpliceMismatch("more input sentinels than masked runs".into())
            })?;
            out.extend(run);
        } else {
            out.push(tok);
        }
    }
    if runs.next().is_some() {
        return Err(CorruptionError::SpliceMismatch(
            "more masked runs than input sentinels".into(),
        ));
    }
    Ok(out)
}
