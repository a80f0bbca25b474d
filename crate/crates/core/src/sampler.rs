//! Exact uniform sampling of labeled DAGs.
//!
//! A DAG is peeled into layers: its sources, then the sources of what remains,
//! and so on. With `a(m, k)` the number of DAGs on `m` nodes with `k` sources,
//! the layer sizes are drawn from the exact counts, edges are filled in under
//! the layering rules and the labels are permuted at random. No Markov chain
//! is involved.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dag::{bit, full_mask, Dag, MAX_NODES};
use crate::enumerate::source_count_table;
use crate::error::{Error, Result};

/// Precomputed cumulative weights for one node count.
#[derive(Clone, Debug)]
pub struct DagSampler {
    n: usize,
    /// cumulative `a(n, k)` over `k = 1..=n`
    first: Vec<BigUint>,
    /// `next[m][k]`: cumulative weights over `s = 1..=m-k` of choosing `s`
    /// sources for the remaining `m - k` nodes below a layer of `k`
    next: Vec<Vec<Vec<BigUint>>>,
}

fn cumulative(xs: impl Iterator<Item = BigUint>) -> Vec<BigUint> {
    let mut acc = BigUint::zero();
    xs.map(|x| {
        acc += x;
        acc.clone()
    })
    .collect()
}

impl DagSampler {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_NODES {
            return Err(Error::TooManyNodes(n));
        }
        let a = source_count_table(n);
        let first = cumulative((1..=n).map(|k| a[n][k].clone()));
        let mut next = vec![Vec::new(); n + 1];
        for (m, row) in next.iter_mut().enumerate().skip(1) {
            *row = vec![Vec::new(); m];
            for (k, cell) in row.iter_mut().enumerate().skip(1) {
                let rest = m - k;
                let nonempty = (BigUint::one() << k) - BigUint::one();
                let mut pow = BigUint::one();
                *cell = cumulative((1..=rest).map(|s| {
                    pow *= &nonempty;
                    &pow * (BigUint::one() << (k * (rest - s))) * &a[rest][s]
                }));
            }
        }
        Ok(DagSampler { n, first, next })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// One DAG, each of the `count_dags(n)` labeled DAGs with equal probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dag {
        let n = self.n;
        if n == 0 {
            return Dag::from_parent_masks(Vec::new());
        }
        let mut sizes = Vec::new();
        let mut k = pick(&self.first, rng) + 1;
        let mut m = n;
        loop {
            sizes.push(k);
            if k == m {
                break;
            }
            let s = pick(&self.next[m][k], rng) + 1;
            m -= k;
            k = s;
        }

        // positions 0..n in layer order
        let mut parents = vec![0u64; n];
        let mut start = 0;
        let mut prev = 0u64;
        let mut earlier = 0u64;
        for &size in &sizes {
            let layer = full_mask(start + size) & !full_mask(start);
            if prev != 0 {
                for (pos, p) in parents.iter_mut().enumerate().take(start + size).skip(start) {
                    debug_assert!(layer & bit(pos) != 0);
                    *p = nonempty_subset(prev, rng) | (rng.next_u64() & earlier);
                }
            }
            earlier |= prev;
            prev = layer;
            start += size;
        }

        let mut label: Vec<usize> = (0..n).collect();
        label.shuffle(rng);
        let mut masks = vec![0u64; n];
        for (pos, &p) in parents.iter().enumerate() {
            let mut m = 0u64;
            let mut rest = p;
            while rest != 0 {
                let q = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                m |= bit(label[q]);
            }
            masks[label[pos]] = m;
        }
        Dag::from_parent_masks(masks)
    }
}

/// Uniform non-empty subset of the set bits of `mask`.
fn nonempty_subset<R: Rng + ?Sized>(mask: u64, rng: &mut R) -> u64 {
    loop {
        let s = rng.next_u64() & mask;
        if s != 0 {
            return s;
        }
    }
}

/// Index `i` with probability proportional to `cum[i] - cum[i - 1]`.
fn pick<R: Rng + ?Sized>(cum: &[BigUint], rng: &mut R) -> usize {
    let total = cum.last().expect("non-empty weights");
    let x = below(total, rng);
    cum.partition_point(|c| c <= &x)
}

/// Uniform integer in `[0, bound)` by rejection.
fn below<R: Rng + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    let bits = bound.bits() as usize;
    let nbytes = bits.div_ceil(8);
    let excess = nbytes * 8 - bits;
    let mut buf = vec![0u8; nbytes];
    loop {
        rng.fill_bytes(&mut buf);
        if let Some(top) = buf.last_mut() {
            *top &= 0xff >> excess;
        }
        let x = BigUint::from_bytes_le(&buf);
        if &x < bound {
            return x;
        }
    }
}

/// One uniformly random DAG on `n` nodes.
pub fn sample_uniform_dag<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dag> {
    Ok(DagSampler::new(n)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{count_dags, enumerate_dags};
    use crate::rng::RngSeed;
    use std::collections::HashMap;

    /// Upper 0.001 quantiles of the chi-square distribution.
    const CHI2_999: [(usize, f64); 3] = [(2, 13.815510557964274), (24, 51.17859777737739), (542, 649.4667097474696)];

    fn chi2_uniform(n: usize, draws: usize, seed: u64) -> (f64, usize) {
        let sampler = DagSampler::new(n).unwrap();
        let mut rng = RngSeed::new(seed, 0).rng();
        let mut freq: HashMap<Vec<u64>, usize> = HashMap::new();
        for _ in 0..draws {
            *freq.entry(sampler.sample(&mut rng).parent_masks().to_vec()).or_default() += 1;
        }
        let cells: Vec<Vec<u64>> = enumerate_dags(n).unwrap().map(|g| g.parent_masks().to_vec()).collect();
        assert!(freq.len() <= cells.len());
        let e = draws as f64 / cells.len() as f64;
        let stat = cells
            .iter()
            .map(|c| {
                let o = *freq.get(c).unwrap_or(&0) as f64;
                (o - e) * (o - e) / e
            })
            .sum();
        (stat, cells.len() - 1)
    }

    #[test]
    fn single_node_is_empty() {
        let mut rng = RngSeed::new(1, 0).rng();
        for _ in 0..10 {
            assert_eq!(sample_uniform_dag(1, &mut rng).unwrap().edge_count(), 0);
        }
    }

    #[test]
    fn uniform_over_small_node_counts() {
        for (n, draws) in [(2usize, 100_000usize), (3, 100_000), (4, 100_000)] {
            let (stat, df) = chi2_uniform(n, draws, 11);
            let crit = CHI2_999.iter().find(|(d, _)| *d == df).unwrap().1;
            assert!(stat < crit, "n={n}: chi2 {stat} >= {crit}");
        }
    }

    #[test]
    fn empty_graph_frequency_on_four_nodes() {
        let sampler = DagSampler::new(4).unwrap();
        let mut rng = RngSeed::new(5, 0).rng();
        let draws = 543_000;
        let empty = (0..draws).filter(|_| sampler.sample(&mut rng).edge_count() == 0).count();
        // binomial sd is about 31
        assert!((empty as f64 - 1000.0).abs() < 150.0, "{empty}");
    }

    #[test]
    fn samples_are_acyclic_for_larger_n() {
        let sampler = DagSampler::new(40).unwrap();
        let mut rng = RngSeed::new(3, 0).rng();
        let mut edges = 0usize;
        for _ in 0..200 {
            let g = sampler.sample(&mut rng);
            assert!(g.is_acyclic());
            edges += g.edge_count();
        }
        // a uniform DAG has about n^2 / 4 edges
        let mean = edges as f64 / 200.0;
        assert!((mean - 400.0).abs() < 20.0, "{mean}");
        assert!(count_dags(40) > BigUint::zero());
    }

    #[test]
    fn too_many_nodes() {
        assert!(DagSampler::new(65).is_err());
    }
}
