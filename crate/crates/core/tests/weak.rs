use std::sync::OnceLock;

use detsketch::planted::{planted, PlantedShape};
use detsketch::weak::{build_weak_matrix, lower_median, weak_decode, DecodeOptions, Flavor, WeakMatrix};
use detsketch::{apply, tail_norm, Error, LinearOperator, Signal};
use proptest::prelude::*;

const N: usize = 1024;

fn linf_layer() -> &'static WeakMatrix {
    static M: OnceLock<WeakMatrix> = OnceLock::new();
    M.get_or_init(|| build_weak_matrix(Flavor::Linf { k: 4, s: 4, w: 1.0 }, N, 31).unwrap())
}

fn background(seed: u64, mass: f64) -> Vec<f64> {
    let p = planted(N, 1, &PlantedShape { heavy: 0, distractors: 0, log10_scale: (0.0, 0.0), ..PlantedShape::standard(1) }, seed);
    p.signal.values().iter().map(|v| v * mass).collect()
}

#[test]
fn two_isolated_heavies_form_two_clusters() {
    let phi = linf_layer();
    let mut x = background(1, 1.0);
    x[17] = 40.0;
    x[900] = -25.0;
    let v = apply(phi, &Signal::from_vec(x)).unwrap();
    let r = weak_decode(phi, &v.values, &DecodeOptions::default()).unwrap();
    assert_eq!(r.stats.clusters, 2, "{:?}", r.stats);
    assert!(r.xhat.contains(17) && r.xhat.contains(900));
    assert!((r.xhat.get(17) - 40.0).abs() < 1.0);
    assert!((r.xhat.get(900) + 25.0).abs() < 1.0);
}

#[test]
fn recovers_planted_heavies() {
    let phi = linf_layer();
    let k = 4;
    let mut hits = 0;
    for seed in 0..30 {
        let p = planted(N, k, &PlantedShape::standard(k), seed);
        let v = apply(phi, &p.signal).unwrap();
        let r = weak_decode(phi, &v.values, &DecodeOptions::default()).unwrap();
        hits += p.heavy.iter().filter(|&&i| r.xhat.contains(i)).count();
        assert!(r.xhat.len() <= 4);
    }
    // At most a handful of the 120 planted heavies may be missed by one layer.
    assert!(hits >= 114, "{hits}");
}

#[test]
fn explicit_scale_is_respected_and_validated() {
    let phi = linf_layer();
    let mut x = vec![0.0; N];
    x[5] = 3.0;
    let v = apply(phi, &Signal::from_vec(x)).unwrap();
    // A scale far above the spike filters every bucket out.
    let r = weak_decode(phi, &v.values, &DecodeOptions::with_scale(1e6)).unwrap();
    assert!(r.xhat.is_empty());
    assert_eq!(r.stats.scale, 1e6);
    assert!(weak_decode(phi, &v.values, &DecodeOptions::with_scale(f64::NAN)).is_err());
    assert!(matches!(
        weak_decode(phi, &v.values[1..], &DecodeOptions::default()),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn decode_is_a_function_of_the_sketch() {
    let phi = linf_layer();
    let p = planted(N, 4, &PlantedShape::standard(4), 8);
    let v = apply(phi, &p.signal).unwrap();
    let a = weak_decode(phi, &v.values, &DecodeOptions::default()).unwrap();
    let b = weak_decode(phi, &v.values, &DecodeOptions::default()).unwrap();
    assert_eq!(a, b);
    let twin = build_weak_matrix(Flavor::Linf { k: 4, s: 4, w: 1.0 }, N, 31).unwrap();
    assert_eq!(twin.descriptor(), phi.descriptor());
}

#[test]
fn l1_flavor_layer_decodes_a_spike() {
    let phi = build_weak_matrix(Flavor::L1L1 { s: 8, eps: 0.5 }, N, 4).unwrap();
    let mut x = background(3, 0.5);
    x[333] = 12.0;
    let v = apply(&phi, &Signal::from_vec(x)).unwrap();
    let r = weak_decode(&phi, &v.values, &DecodeOptions::default()).unwrap();
    assert!(r.xhat.contains(333));
    assert!(r.candidates.iter().any(|&(i, _)| i == 333));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimate_is_an_element_of_e_i(
        entries in proptest::collection::vec((0usize..N, -100.0f64..100.0), 1..40),
        i in 0usize..N,
    ) {
        let phi = linf_layer();
        let x = Signal::from_pairs(N, &entries).unwrap();
        let v = apply(phi, &x).unwrap();
        let e = phi.estimates(&v.values, i);
        prop_assert_eq!(e.len(), phi.shape().d1 * phi.shape().d2);
        let m = phi.estimate(&v.values, i);
        prop_assert!(e.contains(&m));
        prop_assert_eq!(m, lower_median(e));
    }

    #[test]
    fn tail_lower_bound_never_exceeds_the_tail(
        entries in proptest::collection::vec((0usize..N, -100.0f64..100.0), 1..60),
        t in 0usize..8,
    ) {
        let phi = linf_layer();
        let x = Signal::from_pairs(N, &entries).unwrap();
        let v = apply(phi, &x).unwrap();
        let lb = phi.tail_lower_bound(&v.values, t);
        prop_assert!(lb <= tail_norm(&x, t).unwrap() * (1.0 + 1e-12) + 1e-9);
    }

    #[test]
    fn isolated_pairs_carry_the_value(i in 0usize..N, a in 1.0f64..1e3) {
        let phi = linf_layer();
        let x = Signal::from_pairs(N, &[(i, a)]).unwrap();
        let v = apply(phi, &x).unwrap();
        prop_assert!(phi.estimates(&v.values, i).iter().all(|&w| w == a));
    }
}
