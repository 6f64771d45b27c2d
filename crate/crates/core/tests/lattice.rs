//! Property tests for the bi-non-crossing lattice against brute-force
//! oracles written from scratch here.

use bifree_core::bnc::{enumerate_bnc, is_bnc, mobius_bnc, mobius_nc, noncrossing_partitions};
use bifree_core::{BncPartition, ChiWord, Partition, PartitionJson, Side};
use proptest::prelude::*;
use proptest::sample::Index;

fn chi_from(bits: &[bool]) -> ChiWord {
    ChiWord::new(
        bits.iter()
            .map(|&r| if r { Side::Right } else { Side::Left })
            .collect(),
    )
    .unwrap()
}

/// Lefts in increasing order followed by rights in decreasing order.
fn oracle_order(bits: &[bool]) -> Vec<usize> {
    let n = bits.len();
    let mut order: Vec<usize> = (0..n).filter(|&k| !bits[k]).collect();
    order.extend((0..n).rev().filter(|&k| bits[k]));
    order
}

/// Checks every quadruple a < b < c < d for a ~ c, b ~ d, a ≁ b.
fn crosses(labels: &[usize]) -> bool {
    let n = labels.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    if labels[a] == labels[c] && labels[b] == labels[d] && labels[a] != labels[b] {
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn oracle_is_bnc(labels: &[usize], bits: &[bool]) -> bool {
    let seen: Vec<usize> = oracle_order(bits).iter().map(|&k| labels[k]).collect();
    !crosses(&seen)
}

/// Every set partition of n points as restricted growth strings.
fn all_set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn rec(n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur.push(l);
            rec(n, cur, max.max(l), out);
            cur.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    cur.push(0);
    rec(n, &mut cur, 0, &mut out);
    out
}

fn labels_of(p: &Partition) -> Vec<usize> {
    p.labels().iter().map(|&l| l as usize).collect()
}

fn catalan(n: usize) -> i64 {
    let mut c = 1i64;
    for k in 0..n {
        c = c * 2 * (2 * k as i64 + 1) / (k as i64 + 2);
    }
    c
}

fn refines(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| a[i] != a[j] || b[i] == b[j]))
}

fn num_blocks(l: &[usize]) -> usize {
    let mut v = l.to_vec();
    v.sort();
    v.dedup();
    v.len()
}

/// Kreweras complement of a non-crossing partition of m points, by search
/// over all set partitions of the primed points.
fn kreweras(sigma: &[usize]) -> Vec<usize> {
    let m = sigma.len();
    let mut best: Option<Vec<usize>> = None;
    for tau in all_set_partitions(m) {
        // points 1, 1', 2, 2', ...; primed labels shifted past sigma's
        let offset = sigma.iter().max().map_or(0, |x| x + 1);
        let mut joint = Vec::with_capacity(2 * m);
        for k in 0..m {
            joint.push(sigma[k]);
            joint.push(offset + tau[k]);
        }
        if crosses(&joint) {
            continue;
        }
        if best
            .as_ref()
            .is_none_or(|b| num_blocks(&tau) < num_blocks(b))
        {
            best = Some(tau);
        }
    }
    best.expect("the singleton partition always works")
}

/// μ_NC(σ, π) = Π over blocks V of π, over blocks W of K(σ|_V), of
/// (−1)^{|W|−1} Cat(|W|−1).
fn oracle_mobius_nc(sigma: &[usize], pi: &[usize]) -> i64 {
    if !refines(sigma, pi) {
        return 0;
    }
    let mut blocks: Vec<usize> = pi.to_vec();
    blocks.sort();
    blocks.dedup();
    let mut mu = 1i64;
    for b in blocks {
        let restricted: Vec<usize> = (0..pi.len())
            .filter(|&i| pi[i] == b)
            .map(|i| sigma[i])
            .collect();
        let k = kreweras(&restricted);
        let mut labels = k.clone();
        labels.sort();
        labels.dedup();
        for l in labels {
            let size = k.iter().filter(|&&x| x == l).count();
            let sign = if size % 2 == 1 { 1 } else { -1 };
            mu *= sign * catalan(size - 1);
        }
    }
    mu
}

fn chi_strategy(max: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 1..=max)
}

#[test]
fn set_partition_oracle_counts_bell_numbers() {
    let bell = [1, 1, 2, 5, 15, 52, 203];
    for (n, &b) in bell.iter().enumerate() {
        assert_eq!(all_set_partitions(n).len(), b);
    }
}

#[test]
fn oracle_mobius_small_chains() {
    // μ(0̂, 1̂) in NC(3) is Cat(2) = 2
    assert_eq!(oracle_mobius_nc(&[0, 1, 2], &[0, 0, 0]), 2);
    assert_eq!(oracle_mobius_nc(&[0, 1], &[0, 0]), -1);
    assert_eq!(oracle_mobius_nc(&[0, 0, 1], &[0, 0, 0]), -1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn enumeration_has_catalan_size(bits in chi_strategy(8)) {
        let chi = chi_from(&bits);
        let n = bits.len();
        prop_assert_eq!(enumerate_bnc(&chi).unwrap().len() as i64, catalan(n));
    }

    #[test]
    fn membership_matches_brute_force(bits in chi_strategy(6)) {
        let chi = chi_from(&bits);
        let listed: std::collections::HashSet<Vec<usize>> = enumerate_bnc(&chi)
            .unwrap()
            .iter()
            .map(|p| labels_of(p.partition()))
            .collect();
        for raw in all_set_partitions(bits.len()) {
            let expected = oracle_is_bnc(&raw, &bits);
            let p = Partition::from_labels(&raw);
            prop_assert_eq!(is_bnc(&p, &chi).unwrap(), expected, "{:?}", raw);
            prop_assert_eq!(listed.contains(&labels_of(&p)), expected);
        }
    }

    #[test]
    fn s_chi_matches_oracle(bits in chi_strategy(8)) {
        let chi = chi_from(&bits);
        let expected: Vec<usize> = oracle_order(&bits).iter().map(|k| k + 1).collect();
        prop_assert_eq!(chi.s_chi(), expected);
    }

    #[test]
    fn mobius_recursion(bits in chi_strategy(6), a in any::<Index>(), b in any::<Index>()) {
        let chi = chi_from(&bits);
        let all = enumerate_bnc(&chi).unwrap();
        let pi = a.get(&all);
        let below: Vec<&BncPartition> = all.iter().filter(|t| t.leq(pi).unwrap()).collect();
        let sigma = *b.get(&below);
        let between: Vec<&BncPartition> = all
            .iter()
            .filter(|t| sigma.leq(t).unwrap() && t.leq(pi).unwrap())
            .collect();
        let up: i64 = between.iter().map(|t| mobius_bnc(t, pi).unwrap()).sum();
        let down: i64 = between.iter().map(|t| mobius_bnc(sigma, t).unwrap()).sum();
        let delta = i64::from(sigma == pi);
        prop_assert_eq!(up, delta);
        prop_assert_eq!(down, delta);
    }

    #[test]
    fn mobius_matches_kreweras_oracle(bits in chi_strategy(6), a in any::<Index>(), b in any::<Index>()) {
        let chi = chi_from(&bits);
        let all = enumerate_bnc(&chi).unwrap();
        let pi = a.get(&all);
        let below: Vec<&BncPartition> = all.iter().filter(|t| t.leq(pi).unwrap()).collect();
        let sigma = *b.get(&below);
        let order = oracle_order(&bits);
        let picture = |p: &BncPartition| -> Vec<usize> {
            let l = labels_of(p.partition());
            order.iter().map(|&k| l[k]).collect()
        };
        let expected = oracle_mobius_nc(&picture(sigma), &picture(pi));
        prop_assert_eq!(mobius_bnc(sigma, pi).unwrap(), expected);
        prop_assert_eq!(
            mobius_nc(&Partition::from_labels(&picture(sigma)), &Partition::from_labels(&picture(pi))),
            expected
        );
    }

    #[test]
    fn mobius_factorizes_over_unions_of_blocks(
        bits in chi_strategy(6),
        a in any::<Index>(),
        b in any::<Index>(),
        groups in prop::collection::vec(0usize..3, 6),
    ) {
        let chi = chi_from(&bits);
        let all = enumerate_bnc(&chi).unwrap();
        let pi = a.get(&all);
        let below: Vec<&BncPartition> = all.iter().filter(|t| t.leq(pi).unwrap()).collect();
        let sigma = b.get(&below);
        // each block of π goes to one of up to three groups
        let pl = labels_of(pi.partition());
        let group_of = |i: usize| groups[pl[i] % groups.len()];
        let mut product = 1i64;
        for g in 0..3 {
            let subset: Vec<usize> = (0..bits.len()).filter(|&i| group_of(i) == g).map(|i| i + 1).collect();
            if subset.is_empty() {
                continue;
            }
            product *= mobius_bnc(&sigma.restrict(&subset).unwrap(), &pi.restrict(&subset).unwrap()).unwrap();
        }
        prop_assert_eq!(mobius_bnc(sigma, pi).unwrap(), product);
    }

    #[test]
    fn join_and_meet_are_lattice_bounds(bits in chi_strategy(6), a in any::<Index>(), b in any::<Index>()) {
        let chi = chi_from(&bits);
        let all = enumerate_bnc(&chi).unwrap();
        let (x, y) = (a.get(&all), b.get(&all));
        let join = x.join(y).unwrap();
        let meet = x.meet(y).unwrap();
        prop_assert!(oracle_is_bnc(&labels_of(join.partition()), &bits));
        prop_assert!(oracle_is_bnc(&labels_of(meet.partition()), &bits));
        for t in &all {
            let (tl, xl, yl) = (labels_of(t.partition()), labels_of(x.partition()), labels_of(y.partition()));
            if refines(&xl, &tl) && refines(&yl, &tl) {
                prop_assert!(refines(&labels_of(join.partition()), &tl));
            }
            if refines(&tl, &xl) && refines(&tl, &yl) {
                prop_assert!(refines(&tl, &labels_of(meet.partition())));
            }
        }
    }

    #[test]
    fn json_round_trip(bits in chi_strategy(8), a in any::<Index>()) {
        let chi = chi_from(&bits);
        let all = enumerate_bnc(&chi).unwrap();
        let p = a.get(&all);
        let j = PartitionJson::from(p);
        let text = serde_json::to_string(&j).unwrap();
        let back: PartitionJson = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&BncPartition::try_from(&back).unwrap(), p);
    }
}

#[test]
fn noncrossing_lists_are_catalan() {
    for n in 1..=8 {
        let list = noncrossing_partitions(n);
        assert_eq!(list.len() as i64, catalan(n));
        assert!(list.iter().all(|p| !crosses(&labels_of(p))));
    }
}
