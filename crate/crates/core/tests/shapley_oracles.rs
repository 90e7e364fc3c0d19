//! Enumeration checked against the permutation form of the Shapley value and
//! the axioms; the Monte-Carlo baseline checked against DShapley computed
//! exactly over a finite pool.

use dshap_core::baseline::{
    dshapley_mc_baseline, exact_data_shapley, BaselineControls, TabulatedUtility, Utility,
};
use dshap_core::{RandomStream, Result};
use proptest::prelude::*;

/// Average marginal contribution over all orderings.
fn permutation_average(u: &TabulatedUtility, n: usize) -> Vec<f64> {
    fn visit(order: &mut Vec<usize>, used: &mut Vec<bool>, n: usize, acc: &mut Vec<f64>, u: &TabulatedUtility, count: &mut usize) {
        if order.len() == n {
            let mut mask = 0usize;
            for &i in order.iter() {
                let before = u.value_of_mask(mask);
                mask |= 1 << i;
                acc[i] += u.value_of_mask(mask) - before;
            }
            *count += 1;
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                order.push(i);
                visit(order, used, n, acc, u, count);
                order.pop();
                used[i] = false;
            }
        }
    }
    let mut acc = vec![0.0; n];
    let mut count = 0;
    visit(&mut Vec::new(), &mut vec![false; n], n, &mut acc, u, &mut count);
    acc.iter().map(|v| v / count as f64).collect()
}

fn table(n: usize, seed: u64) -> TabulatedUtility {
    let mut rng = RandomStream::new(seed, 0);
    let mut values: Vec<f64> = (0..1usize << n).map(|_| 10.0 * rng.uniform() - 3.0).collect();
    values[0] = 0.0;
    TabulatedUtility::new(n, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_permutations(n in 1usize..=6, seed in any::<u64>()) {
        let u = table(n, seed);
        let exact = exact_data_shapley(&u.players(), &u).unwrap();
        let perm = permutation_average(&u, n);
        for (a, b) in exact.values.iter().zip(&perm) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let total: f64 = exact.values.iter().sum();
        prop_assert!((total - u.value_of_mask((1 << n) - 1)).abs() < 1e-8);
        prop_assert_eq!(exact.total, u.value_of_mask((1 << n) - 1));
    }

    #[test]
    fn additivity(n in 1usize..=6, s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = table(n, s1);
        let b = table(n, s2);
        let sum = a.add(&b).unwrap();
        let va = exact_data_shapley(&a.players(), &a).unwrap().values;
        let vb = exact_data_shapley(&b.players(), &b).unwrap().values;
        let vs = exact_data_shapley(&sum.players(), &sum).unwrap().values;
        for i in 0..n {
            prop_assert!((vs[i] - va[i] - vb[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn null_player(n in 2usize..=6, seed in any::<u64>(), null in 0usize..6) {
        let null = null % n;
        let base = table(n, seed);
        let bit = 1usize << null;
        let values = (0..1usize << n).map(|m| base.value_of_mask(m & !bit)).collect();
        let u = TabulatedUtility::new(n, values).unwrap();
        let r = exact_data_shapley(&u.players(), &u).unwrap();
        prop_assert!(r.values[null].abs() < 1e-12);
    }

    #[test]
    fn symmetric_players(n in 2usize..=6, seed in any::<u64>(), a in 0usize..6, b in 0usize..6) {
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b);
        let base = table(n, seed);
        // Symmetrise by taking the value of the coalition with a and b swapped
        // whenever exactly one of them is present and it is b.
        let swap = |m: usize| {
            let ha = m >> a & 1;
            let hb = m >> b & 1;
            if ha != hb { m ^ (1 << a) ^ (1 << b) } else { m }
        };
        let values = (0..1usize << n)
            .map(|m| if m >> b & 1 == 1 && m >> a & 1 == 0 { base.value_of_mask(swap(m)) } else { base.value_of_mask(m) })
            .collect();
        let u = TabulatedUtility::new(n, values).unwrap();
        let r = exact_data_shapley(&u.players(), &u).unwrap();
        prop_assert!((r.values[a] - r.values[b]).abs() < 1e-8);
    }
}

/// Nonlinear utility on real-valued items, gated at two items.
struct RootSum;

impl Utility for RootSum {
    type Item = f64;

    fn gate(&self) -> usize {
        2
    }

    fn evaluate_ungated(&self, subset: &[&f64]) -> Result<f64> {
        let s: f64 = subset.iter().map(|v| **v).sum();
        Ok(s.sqrt() - 0.1 * subset.len() as f64)
    }
}

/// DShapley over a finite pool sampled with replacement, by enumerating
/// every background tuple of size `m − 1`.
fn pool_dshapley(z: f64, pool: &[f64], m: usize) -> f64 {
    let k = pool.len();
    let total = k.pow((m - 1) as u32);
    let mut acc = 0.0;
    for code in 0..total {
        let mut items = vec![z];
        let mut c = code;
        for _ in 0..m - 1 {
            items.push(pool[c % k]);
            c /= k;
        }
        acc += exact_data_shapley(&items, &RootSum).unwrap().values[0];
    }
    acc / total as f64
}

#[test]
fn baseline_is_unbiased_over_a_finite_pool() {
    let pool = [0.5, 1.0, 4.0];
    for (z, m) in [(2.0, 4usize), (0.2, 6)] {
        let truth = pool_dshapley(z, &pool, m);
        let sampler = |r: &mut RandomStream| pool[r.index(pool.len())];
        let mut sum = 0.0;
        let mut var = 0.0;
        let seeds = 100;
        for seed in 0..seeds {
            let est = dshapley_mc_baseline(
                &z,
                &sampler,
                &RootSum,
                &BaselineControls::new(m, 2_000),
                &RandomStream::new(seed, 0),
            )
            .unwrap();
            sum += est.value;
            var += est.std_error.powi(2);
        }
        let mean = sum / seeds as f64;
        let pooled = var.sqrt() / seeds as f64;
        assert!((mean - truth).abs() < 3.0 * pooled, "z={z} m={m}: {mean} vs {truth} (se {pooled})");
    }
}
