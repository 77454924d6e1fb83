//! Popularity-biased negative sampling without replacement.
//!
//! Each eligible item gets the key `ln(u) / w` with `u ~ U(0, 1)` and its
//! support `w`; the `k` largest keys form the sample. A single draw picks
//! an item with probability proportional to its support.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::ArticleId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeSample {
    pub ids: Vec<ArticleId>,
    /// Fewer than `k` items were eligible; all of them were returned.
    pub short: bool,
}

/// Draws `k` distinct items of `supports` not rejected by `excluded`.
/// Items with zero support are never drawn.
pub fn sample_negatives<F>(supports: &[(ArticleId, u64)], excluded: F, k: usize, seed: u64) -> NegativeSample
where
    F: Fn(ArticleId) -> bool,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, ArticleId)> = Vec::with_capacity(supports.len());
    for &(a, w) in supports {
        if w == 0 || excluded(a) {
            continue;
        }
        let u: f64 = 1.0 - rng.gen::<f64>();
        keyed.push((u.ln() / w as f64, a));
    }
    let short = keyed.len() < k;
    let order = |x: &(f64, ArticleId), y: &(f64, ArticleId)| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1));
    if k < keyed.len() {
        if k > 0 {
            keyed.select_nth_unstable_by(k - 1, order);
        }
        keyed.truncate(k);
    }
    keyed.sort_by(order);
    NegativeSample { ids: keyed.into_iter().map(|(_, a)| a).collect(), short }
}

/// splitmix64 over the inputs.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        z ^= p;
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(n: u32) -> Vec<(ArticleId, u64)> {
        (0..n).map(|i| (ArticleId(i), 1)).collect()
    }

    #[test]
    fn dominant_item_is_almost_always_drawn() {
        let mut s = ids(53);
        s[0].1 = 999_999;
        let hits = (0..1000).filter(|&seed| sample_negatives(&s, |_| false, 50, seed).ids.contains(&ArticleId(0))).count();
        assert!(hits as f64 / 1000.0 > 0.99);
    }

    #[test]
    fn forced_set() {
        let s = ids(80);
        let viewed: HashSet<ArticleId> = (50..80).map(ArticleId).collect();
        let a = sample_negatives(&s, |x| viewed.contains(&x), 50, 1);
        let b = sample_negatives(&s, |x| viewed.contains(&x), 50, 2);
        assert!(!a.short);
        let set: HashSet<_> = a.ids.iter().copied().collect();
        assert_eq!(set, (0..50).map(ArticleId).collect());
        assert_eq!(set, b.ids.iter().copied().collect());
    }

    #[test]
    fn short_supply_is_flagged() {
        let s = ids(10);
        let r = sample_negatives(&s, |a| a.0 < 3, 50, 0);
        assert!(r.short);
        assert_eq!(r.ids.len(), 7);
        let mut zero = ids(3);
        zero[1].1 = 0;
        assert!(!sample_negatives(&zero, |_| false, 2, 0).ids.contains(&ArticleId(1)));
    }

    #[test]
    fn deterministic_and_distinct() {
        let s: Vec<(ArticleId, u64)> = (0..300).map(|i| (ArticleId(i), 1 + (i as u64 % 17))).collect();
        let a = sample_negatives(&s, |x| x.0 % 7 == 0, 50, 99);
        assert_eq!(a, sample_negatives(&s, |x| x.0 % 7 == 0, 50, 99));
        let set: HashSet<_> = a.ids.iter().collect();
        assert_eq!(set.len(), 50);
        assert!(a.ids.iter().all(|x| x.0 % 7 != 0));
    }

    #[test]
    fn seeds_mix_all_parts() {
        assert_ne!(mix_seed(&[1, 2, 3]), mix_seed(&[1, 3, 2]));
        assert_eq!(mix_seed(&[5, 6]), mix_seed(&[5, 6]));
    }
}
