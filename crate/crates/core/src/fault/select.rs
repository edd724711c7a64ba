use super::bits::SignFilter;
use crate::rng::RandomStream;

/// `round_half_up(pool * amount / 100)`, at least one target whenever
/// `amount > 0` and the pool is non-empty.
pub fn target_count(pool: usize, amount: f64) -> usize {
    if pool == 0 || amount <= 0.0 {
        return 0;
    }
    let k = (pool as f64 * amount / 100.0 + 0.5).floor() as usize;
    k.clamp(1, pool)
}

/// Picks `amount` percent of the indices of `values` that pass
/// `sign_filter`, uniformly without replacement. Returned sorted.
pub fn select_targets(values: &[f32], amount: f64, sign_filter: SignFilter, stream: &mut RandomStream) -> Vec<usize> {
    let pool: Vec<usize> = (0..values.len()).filter(|&i| sign_filter.accepts(values[i])).collect();
    let k = target_count(pool.len(), amount);
    if k == 0 {
        return Vec::new();
    }
    let mut picked: Vec<usize> = if k == pool.len() {
        pool
    } else {
        stream.sample_indices(pool.len(), k).into_iter().map(|i| pool[i]).collect()
    };
    picked.sort_unstable();
    picked
}
