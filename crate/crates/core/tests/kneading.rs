use counterlase::kneading::{
    kneading_invariant, kneading_record, kneading_sequence, negate_map, positive_branch,
    unstable_branch, KneadingOptions, Symbols,
};
use counterlase::{ModelParams, Tolerances};
use num_rational::Ratio;
use proptest::prelude::*;

#[test]
fn sequences_do_not_depend_on_the_band_width() {
    for lp in [1.5325, 1.532895, 1.5329, 1.53305] {
        let p = ModelParams::transitional(lp);
        let seqs: Vec<String> = [0.18, 0.2, 0.22]
            .iter()
            .map(|&w| {
                let opts = KneadingOptions {
                    halfwidth: w,
                    ..Default::default()
                };
                kneading_record(&p, &opts).unwrap().symbols.to_string()
            })
            .collect();
        assert!(seqs.iter().all(|s| *s == seqs[0]), "{lp}: {seqs:?}");
    }
}

#[test]
fn positive_branch_carries_the_negated_sequence() {
    let p = ModelParams::transitional(1.53292);
    let neg = unstable_branch(&p, 1e-6, 5000.0, Tolerances::MANIFOLD).unwrap();
    let (a, full_a) = kneading_sequence(&neg, 12, 0.2);
    let (b, full_b) = kneading_sequence(&positive_branch(&neg), 12, 0.2);
    assert!(full_a && full_b);
    assert_eq!(b, a.negated());
    assert!(a.starts_with("0"));
}

#[test]
fn seed_offset_does_not_change_the_sequence() {
    let p = ModelParams::transitional(1.53305);
    let a = kneading_record(&p, &KneadingOptions::default()).unwrap();
    let b = kneading_record(
        &p,
        &KneadingOptions {
            delta1: 1e-7,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a.symbols, b.symbols);
}

#[test]
fn no_sequence_without_a_saddle() {
    assert!(kneading_record(&ModelParams::transitional(1.0), &KneadingOptions::default()).is_err());
}

fn bits(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, 1..max)
}

proptest! {
    #[test]
    fn invariant_is_a_dyadic_in_the_unit_interval(s in bits(40)) {
        let n = s.len();
        let k = kneading_invariant(&Symbols::new(s.clone()), n);
        let direct: f64 = s.iter().enumerate().map(|(i, b)| *b as f64 * 0.5f64.powi(i as i32 + 1)).sum();
        prop_assert!((k.to_f64() - direct).abs() < 1e-15);
        prop_assert!(k.to_f64() < 1.0);
    }

    #[test]
    fn negation_reflects_the_invariant(s in bits(40)) {
        let n = s.len();
        let a = kneading_invariant(&Symbols::new(s.clone()), n).ratio();
        let b = kneading_invariant(&Symbols::new(s).negated(), n).ratio();
        prop_assert_eq!(a + b, Ratio::new((1u64 << n) - 1, 1u64 << n));
    }

    #[test]
    fn negate_map_keeps_the_prefix_and_is_an_involution(prefix in bits(6), tail in bits(10)) {
        let k = prefix.len();
        let mut v = prefix.clone();
        v.push(1);
        v.extend(tail);
        let left = Symbols::new(v);
        let right = negate_map(&left, k).unwrap();
        prop_assert_eq!(&right.as_slice()[..k], &prefix[..]);
        prop_assert_eq!(right.as_slice()[k], 0);
        let mut flipped = right.as_slice().to_vec();
        flipped[k] = 1;
        let back = negate_map(&Symbols::new(flipped), k).unwrap();
        let mut expect = left.as_slice().to_vec();
        expect[k] = 0;
        prop_assert_eq!(back.as_slice(), &expect[..]);
    }

    #[test]
    fn eventual_limit_sums_the_series(pre in bits(5), block in bits(4)) {
        let mut v = pre.clone();
        while v.len() < pre.len() + 24 {
            v.extend(&block);
        }
        let s = Symbols::new(v.clone());
        let limit = s.eventual_limit().unwrap();
        let mut series = 0.0;
        for i in 0..60 {
            let b = if i < pre.len() { pre[i] } else { block[(i - pre.len()) % block.len()] };
            series += b as f64 * 0.5f64.powi(i as i32 + 1);
        }
        prop_assert!((*limit.numer() as f64 / *limit.denom() as f64 - series).abs() < 1e-12);
    }
}
