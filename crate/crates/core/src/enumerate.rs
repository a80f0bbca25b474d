//! Exact counting and exhaustive enumeration of labeled DAGs.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

use crate::dag::{bits, full_mask, Dag, MAX_NODES};
use crate::error::{Error, Result};

/// Largest node count accepted by [`enumerate_dags`].
pub const MAX_ENUMERATION_NODES: usize = 6;

fn binomial(n: usize, k: usize) -> BigUint {
    let mut c = BigUint::one();
    for i in 0..k {
        c = c * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    c
}

/// Number of labeled DAGs on `n` nodes (Robinson's alternating recurrence).
pub fn count_dags(n: usize) -> BigUint {
    let mut a: Vec<BigInt> = vec![BigInt::one()];
    for m in 1..=n {
        let mut total = BigInt::zero();
        for k in 1..=m {
            let term = BigInt::from(binomial(m, k)) * (BigInt::one() << (k * (m - k))) * &a[m - k];
            if k % 2 == 1 {
                total += term;
            } else {
                total -= term;
            }
        }
        a.push(total);
    }
    a[n].to_biguint().expect("DAG counts are non-negative")
}

/// Table of `a(m, k)`: DAGs on `m` labeled nodes with exactly `k` sources,
/// for `1 <= k <= m <= n`. Index as `table[m][k]`.
pub fn source_count_table(n: usize) -> Vec<Vec<BigUint>> {
    let mut a: Vec<Vec<BigUint>> = vec![vec![BigUint::zero(); n + 1]; n + 1];
    for m in 1..=n {
        a[m][m] = BigUint::one();
        for k in 1..m {
            let rest = m - k;
            let nonempty = (BigUint::one() << k) - BigUint::one();
            let mut sum = BigUint::zero();
            for s in 1..=rest {
                sum += nonempty.pow(s as u32) * (BigUint::one() << (k * (rest - s))) * &a[rest][s];
            }
            a[m][k] = binomial(m, k) * sum;
        }
    }
    a
}

/// Natural log of a big count, exact to double precision.
pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return num_traits::ToPrimitive::to_f64(x).unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top: BigUint = x >> shift;
    num_traits::ToPrimitive::to_f64(&top).unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Calls `f` once with the parent masks of every labeled DAG on `n` nodes.
///
/// Each DAG is generated once through its unique source-layer decomposition:
/// layer 1 holds the sources, and every node of layer `t > 1` has at least one
/// parent in layer `t - 1` plus any subset of the earlier layers.
pub(crate) fn for_each_parent_masks(n: usize, f: &mut dyn FnMut(&[u64])) -> Result<()> {
    if n > MAX_NODES {
        return Err(Error::TooManyNodes(n));
    }
    let mut masks = vec![0u64; n];
    if n == 0 {
        f(&masks);
        return Ok(());
    }
    next_layer(full_mask(n), 0, 0, &mut masks, f);
    Ok(())
}

fn next_layer(remaining: u64, prev: u64, earlier: u64, masks: &mut [u64], f: &mut dyn FnMut(&[u64])) {
    if remaining == 0 {
        f(masks);
        return;
    }
    // every non-empty subset of `remaining`
    let mut layer = remaining;
    while layer != 0 {
        if prev == 0 {
            for v in bits(layer) {
                masks[v] = 0;
            }
            next_layer(remaining & !layer, layer, 0, masks, f);
        } else {
            let nodes: Vec<usize> = bits(layer).collect();
            assign_parents(&nodes, remaining & !layer, layer, prev, earlier, masks, f);
        }
        layer = (layer - 1) & remaining;
    }
}

fn assign_parents(
    nodes: &[usize],
    remaining: u64,
    layer: u64,
    prev: u64,
    earlier: u64,
    masks: &mut [u64],
    f: &mut dyn FnMut(&[u64]),
) {
    let Some((&v, rest)) = nodes.split_first() else {
        next_layer(remaining, layer, earlier | prev, masks, f);
        return;
    };
    let mut from_prev = prev;
    while from_prev != 0 {
        let mut from_earlier = earlier;
        loop {
            masks[v] = from_prev | from_earlier;
            assign_parents(rest, remaining, layer, prev, earlier, masks, f);
            if from_earlier == 0 {
                break;
            }
            from_earlier = (from_earlier - 1) & earlier;
        }
        from_prev = (from_prev - 1) & prev;
    }
}

/// All labeled DAGs on `n <= 6` nodes, each exactly once.
pub fn enumerate_dags(n: usize) -> Result<impl Iterator<Item = Dag>> {
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::TooLarge {
            what: "DAG enumeration",
            n,
            max: MAX_ENUMERATION_NODES,
        });
    }
    // n <= 6 parent masks of 6 bits each pack into one word
    let mut packed: Vec<u64> = Vec::new();
    for_each_parent_masks(n, &mut |m| {
        packed.push(m.iter().enumerate().fold(0u64, |acc, (v, &p)| acc | (p << (6 * v))));
    })?;
    Ok(packed.into_iter().map(move |word| {
        let masks = (0..n).map(|v| (word >> (6 * v)) & 0x3f).collect();
        Dag::from_parent_masks(masks)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::bit;
    use std::collections::HashSet;

    #[test]
    fn small_counts() {
        let got: Vec<u64> = (0..=8)
            .map(|n| num_traits::ToPrimitive::to_u64(&count_dags(n)).unwrap())
            .collect();
        // values from an independent evaluation of the recurrence
        assert_eq!(got, vec![1, 1, 3, 25, 543, 29281, 3781503, 1138779265, 783702329343]);
    }

    #[test]
    fn count_twenty_matches_independent_evaluation() {
        assert_eq!(
            count_dags(20).to_string(),
            "2344880451051088988152559855229099188899081192234291298795803236068491263"
        );
    }

    #[test]
    fn source_table_sums_to_total() {
        let t = source_count_table(12);
        for m in 1..=12 {
            let total: BigUint = (1..=m).map(|k| t[m][k].clone()).sum();
            assert_eq!(total, count_dags(m));
        }
    }

    #[test]
    fn enumeration_sizes_and_uniqueness() {
        for (n, expected) in [(1usize, 1usize), (2, 3), (3, 25), (4, 543)] {
            let all: Vec<Dag> = enumerate_dags(n).unwrap().collect();
            assert_eq!(all.len(), expected);
            let distinct: HashSet<Vec<u64>> = all.iter().map(|g| g.parent_masks().to_vec()).collect();
            assert_eq!(distinct.len(), expected);
            assert!(all.iter().all(|g| g.is_acyclic()));
        }
        assert_eq!(enumerate_dags(5).unwrap().count(), 29281);
        assert!(matches!(enumerate_dags(7), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn ln_big_matches_float_for_moderate_values() {
        let c = count_dags(30);
        let direct = num_traits::ToPrimitive::to_f64(&c).unwrap().ln();
        assert!((ln_big(&c) - direct).abs() < 1e-9);
        let huge = count_dags(60);
        let lower = (huge.bits() - 1) as f64 * std::f64::consts::LN_2;
        assert!(ln_big(&huge) >= lower && ln_big(&huge) < lower + std::f64::consts::LN_2);
    }

    #[test]
    fn layer_masks_are_consistent() {
        let mut count = 0;
        for_each_parent_masks(3, &mut |m| {
            count += 1;
            for (v, &p) in m.iter().enumerate() {
                assert_eq!(p & bit(v), 0);
            }
        })
        .unwrap();
        assert_eq!(count, 25);
    }
}
