mod common;

use proptest::prelude::*;
use rand::Rng;
use sessionrank::listnet::{
    count_groups, enumerate_groups, listnet_backward, listnet_loss, topk_group_probability, ListLoss, TopKGroup,
};
use sessionrank::nn::{cross_entropy, softmax};

fn random_scores(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-3.0..3.0)).collect()
}

#[test]
fn group_probabilities_sum_to_one() {
    let mut r = common::rng(1);
    for n in 1..=8 {
        for k in 1..=3.min(n) {
            let groups = enumerate_groups(n, k);
            assert_eq!(groups.len() as u64, count_groups(n, k).unwrap());
            for _ in 0..100 {
                let s = random_scores(&mut r, n);
                let total: f64 = groups.iter().map(|g| topk_group_probability(&s, g).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-9, "n={n} k={k} total={total}");
            }
        }
    }
}

#[test]
fn group_probability_equals_permutation_marginal() {
    let mut r = common::rng(2);
    for n in 1..=6 {
        for k in 1..=3.min(n) {
            let s = random_scores(&mut r, n);
            let marginal = common::marginal_topk(&s, k);
            for g in enumerate_groups(n, k) {
                let p = topk_group_probability(&s, &g).unwrap();
                assert!((p - marginal[g.indices()]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn exact_loss_matches_brute_force() {
    let mut r = common::rng(3);
    for n in 1..=8 {
        for k in 1..=3.min(n) {
            for _ in 0..5 {
                let z = random_scores(&mut r, n);
                let y: Vec<f64> = (0..n).map(|_| r.gen_range(0..3) as f64).collect();
                let lib = listnet_loss(&z, &y, k).unwrap();
                let brute = common::brute_listnet_loss(&z, &y, k);
                assert!((lib - brute).abs() < 1e-10, "n={n} k={k}: {lib} vs {brute}");
            }
        }
    }
}

#[test]
fn top_one_is_softmax_cross_entropy() {
    let mut r = common::rng(4);
    for n in 1..=20 {
        let z = random_scores(&mut r, n);
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(0..3) as f64).collect();
        let ce = cross_entropy(&softmax(&y).unwrap(), &softmax(&z).unwrap()).unwrap();
        assert!((listnet_loss(&z, &y, 1).unwrap() - ce).abs() < 1e-12);
    }
}

#[test]
fn two_items_top_one_by_hand() {
    let g = TopKGroup::new(vec![1], 2).unwrap();
    let p = topk_group_probability(&[0.0, 2f64.ln()], &g).unwrap();
    assert!((p - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn past_the_cap_the_loss_is_top_one() {
    let mut r = common::rng(5);
    let z = random_scores(&mut r, 40);
    let y: Vec<f64> = (0..40).map(|_| r.gen_range(0..3) as f64).collect();
    let capped = ListLoss::with_k(10);
    assert_eq!(capped.effective_k(40), 1);
    assert_eq!(capped.loss(&z, &y).unwrap(), listnet_loss(&z, &y, 1).unwrap());
    // 18 * 17 * 16 = 4896 groups fit under 5000; 19 * 18 * 17 = 5814 do not.
    assert_eq!(ListLoss::with_k(3).effective_k(18), 3);
    assert_eq!(ListLoss::with_k(3).effective_k(19), 1);
}

#[test]
fn k_larger_than_list_is_rejected() {
    assert!(listnet_loss(&[1.0, 2.0], &[0.0, 1.0], 3).is_err());
    assert!(listnet_loss(&[1.0, 2.0], &[0.0, 1.0], 0).is_err());
}

#[test]
fn matching_distributions_have_zero_gradient() {
    let y = [0.0f64, 1.0, 2.0, 1.0];
    for k in 1..=3 {
        let g = listnet_backward(&y, &y, k).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12), "k={k}: {g:?}");
    }
}

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (2usize..=7, 1usize..=3).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(-4.0f64..4.0, n),
            prop::collection::vec(0u8..3, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            Just(k.min(n)),
        )
    })
}

proptest! {
    #[test]
    fn loss_is_shift_invariant((z, y, k) in scores_and_labels(), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let a = listnet_loss(&z, &y, k).unwrap();
        let b = listnet_loss(&shifted, &y, k).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn gradient_sums_to_zero((z, y, k) in scores_and_labels()) {
        let g = listnet_backward(&z, &y, k).unwrap();
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences((z, y, k) in scores_and_labels()) {
        let g = listnet_backward(&z, &y, k).unwrap();
        let h = 1e-5;
        for i in 0..z.len() {
            let mut p = z.clone();
            let mut m = z.clone();
            p[i] += h;
            m[i] -= h;
            let num = (listnet_loss(&p, &y, k).unwrap() - listnet_loss(&m, &y, k).unwrap()) / (2.0 * h);
            prop_assert!((num - g[i]).abs() < 1e-6, "i={} analytic {} numeric {}", i, g[i], num);
        }
    }

    #[test]
    fn loss_is_at_least_target_entropy((z, y, k) in scores_and_labels()) {
        let entropy = listnet_loss(&y, &y, k).unwrap();
        prop_assert!(listnet_loss(&z, &y, k).unwrap() >= entropy - 1e-10);
    }
}
