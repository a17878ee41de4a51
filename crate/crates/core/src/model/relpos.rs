use super::{ModelConfig, ModelError, ParameterStore};
use crate::autograd::Tensor;

/// Maps a signed key-minus-query offset to a bucket id.
///
/// Half of the available buckets (all of them when `bidirectional` is false)
/// cover small offsets exactly; the rest are log-spaced up to `max_distance`,
/// beyond which every offset lands in the terminal bucket. Bidirectional
/// buckets put positive offsets in the upper half.
pub fn relative_bucket(delta: i64, num_buckets: usize, max_distance: usize, bidirectional: bool) -> usize {
    let mut buckets = num_buckets;
    let mut base = 0;
    let n = if bidirectional {
        buckets /= 2;
        if delta > 0 {
            base = buckets;
        }
        delta.unsigned_abs() as usize
    } else {
        (-delta).max(0) as usize
    };
    let max_exact = buckets / 2;
    if n < max_exact {
        return base + n;
    }
    if max_exact == 0 || max_distance <= max_exact {
        return base + buckets - 1;
    }
    let ratio = (n as f64 / max_exact as f64).ln() / (max_distance as f64 / max_exact as f64).ln();
    let large = max_exact + (ratio * (buckets - max_exact) as f64) as usize;
    base + large.min(buckets - 1)
}

/// Bucket ids for every `(query i, key j)` pair, flattened row-major.
pub(crate) fn bucket_grid(
    q_len: usize,
    k_len: usize,
    config: &ModelConfig,
    bidirectional: bool,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(q_len * k_len);
    for i in 0..q_len {
        for j in 0..k_len {
            out.push(relative_bucket(
                j as i64 - i as i64,
                config.relpos_num_embeddings,
                config.relpos_offset,
                bidirectional,
            ));
        }
    }
    out
}

/// `[n_heads, q_len, k_len]` encoder (bidirectional) bias:
/// `bias[h][i][j] = table[bucket(j - i)][h]`.
pub fn position_bias(
    q_len: usize,
    k_len: usize,
    config: &ModelConfig,
    params: &ParameterStore,
) -> Result<Tensor, ModelError> {
    let table = params.get(super::params::RELPOS_BIAS)?;
    let heads = config.n_heads;
    let buckets = bucket_grid(q_len, k_len, config, true);
    let mut out = vec![0.0; heads * q_len * k_len];
    for (ij, &b) in buckets.iter().enumerate() {
        for h in 0..heads {
            out[h * q_len * k_len + ij] = table.data()[b * heads + h];
        }
    }
    Ok(Tensor::new(vec![heads, q_len, k_len], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Precision;

    #[test]
    fn zero_offset_is_bucket_zero() {
        assert_eq!(relative_bucket(0, 32, 128, true), 0);
        assert_eq!(relative_bucket(0, 32, 128, false), 0);
    }

    #[test]
    fn saturates_beyond_max_distance() {
        let far = relative_bucket(200, 32, 128, true);
        assert_eq!(far, relative_bucket(500, 32, 128, true));
        assert_eq!(far, 31);
        assert_eq!(relative_bucket(-200, 32, 128, true), 15);
        assert_eq!(relative_bucket(-10_000, 32, 128, false), 31);
        // future offsets collapse to bucket 0 in the causal case
        assert_eq!(relative_bucket(5, 32, 128, false), 0);
    }

    #[test]
    fn tiny_bucket_counts_stay_in_range() {
        for nb in 2..6 {
            for delta in -300..300 {
                assert!(relative_bucket(delta, nb, 128, true) < nb);
                assert!(relative_bucket(delta, nb, 128, false) < nb);
            }
        }
    }

    #[test]
    fn bias_is_toeplitz() {
        let cfg = ModelConfig::toy();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let (lq, lk) = (9, 11);
        let bias = position_bias(lq, lk, &cfg, &params).unwrap();
        let d = bias.data();
        for h in 0..cfg.n_heads {
            for i in 1..lq {
                for j in 1..lk {
                    assert_eq!(d[(h * lq + i) * lk + j], d[(h * lq + i - 1) * lk + j - 1]);
                }
            }
        }
        let one = position_bias(1, 1, &cfg, &params).unwrap();
        let table = params.get("shared.relpos_bias").unwrap();
        assert_eq!(one.data(), &table.data()[..cfg.n_heads]);
    }
}
