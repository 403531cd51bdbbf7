//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line before
//! asserting, so `cargo test --test acceptance -- --nocapture` gives a
//! one-screen summary.

use std::time::{Duration, Instant};

use detsketch::coding::{bucket_message_matrix, extract_bit};
use detsketch::hashgraph::{decoy_count, sample_one_layer, Independence};
use detsketch::l1::{build_l1_scheme, l1_decode};
use detsketch::linf::{build_combined_scheme, build_linf_scheme, build_schedule, combined_decode, linf_decode};
use detsketch::oracle::{oracle_verify_l1, oracle_verify_linf};
use detsketch::planted::{planted, strict_zipf, zipf, PlantedShape};
use detsketch::sketch::ingest_all;
use detsketch::strict::{build_rs_matrix, build_split_tree, recursive_decode, reduce_noise, RsParams, BETA, LEAF_FACTOR};
use detsketch::{apply, head_set, Error, LinearOperator, Signal, Update};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 4096;
const INSTANCES: u64 = 100;

fn report(id: u32, name: &str, pass: bool, detail: &str, elapsed: Duration) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id:>2} {name}: {detail} ({:.1}s)", elapsed.as_secs_f64());
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn c01_worked_example() {
    let t0 = Instant::now();
    let buckets = vec![vec![0, 2, 3, 5], vec![1, 4, 6, 7]];
    let messages: Vec<Vec<u8>> =
        vec![vec![1, 1], vec![0, 0], vec![0, 1], vec![0, 1], vec![1, 0], vec![1, 0], vec![1, 1], vec![1, 0]];
    let phi = bucket_message_matrix(8, &buckets, &messages).unwrap();
    let expected_phi = [
        [0, 0, 1, 1, 0, 0, 0, 0],
        [1, 0, 0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 0, 1, 0, 0],
        [1, 0, 1, 1, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 1, 1],
        [0, 1, 0, 0, 1, 0, 0, 1],
        [0, 0, 0, 0, 0, 0, 1, 0],
    ];
    let phi_ok = (0..8).all(|r| (0..8).all(|c| phi.get(r, c) == expected_phi[r][c] as f64));

    let x = [10.1, -0.1, 0.3, 0.2, -9.7, 0.1, 0.2, -0.2];
    let y = phi.mul(&x).unwrap();
    let want_y = [0.5, 10.2, 0.1, 10.6, -0.1, -9.7, -10.0, 0.2];
    let y_ok = y.iter().zip(want_y).all(|(a, b)| close(*a, b, 1e-12));
    let bits: Vec<u8> = y.chunks(2).map(|p| extract_bit(p[0], p[1])).collect();
    let bits_ok = bits == [1, 1, 1, 0];

    let elapsed = t0.elapsed();
    let pass = phi_ok && y_ok && bits_ok && elapsed < Duration::from_secs(1);
    report(1, "worked example", pass, &format!("y = {y:?}, bits = {bits:?}"), elapsed);
    assert!(pass);
}

#[test]
fn c02_linf_oracle_equivalence() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for k in [2usize, 4, 8] {
        let scheme = build_linf_scheme(N, k, 7).unwrap();
        let ok = (0..INSTANCES)
            .filter(|&seed| {
                let p = planted(N, k, &PlantedShape::standard(k), seed);
                let v = apply(&scheme, &p.signal).unwrap();
                let r = linf_decode(&scheme, &v.values, None).unwrap();
                oracle_verify_linf(&p.signal, &r.xhat, k, k)
            })
            .count();
        pass &= ok >= 99;
        lines.push(format!("k={k}: {ok}/{INSTANCES}"));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    report(2, "linf/l1 scheme", pass, &lines.join(", "), elapsed);
    assert!(pass);
}

#[test]
fn c03_combined_scheme() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for k in [2usize, 3, 4] {
        let scheme = build_combined_scheme(N, k, 11).unwrap();
        let ok = (0..INSTANCES)
            .filter(|&seed| {
                let p = planted(N, k, &PlantedShape::standard(k), 1000 + seed);
                let v = apply(&scheme, &p.signal).unwrap();
                let r = combined_decode(&scheme, &v.values).unwrap();
                oracle_verify_linf(&p.signal, &r.xhat, k, k * k)
            })
            .count();
        pass &= ok >= 99;
        lines.push(format!("k={k}: {ok}/{INSTANCES}"));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    report(3, "combined scheme, tail k^2", pass, &lines.join(", "), elapsed);
    assert!(pass);
}

#[test]
fn c04_l1_scheme() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for k in [4usize, 16] {
        let scheme = build_l1_scheme(N, k, 1.0, 7).unwrap();
        let ok = (0..INSTANCES)
            .filter(|&seed| {
                let x = zipf(N, 1.5, 100.0, seed);
                let v = apply(&scheme, &x).unwrap();
                let r = l1_decode(&scheme, &v.values, None).unwrap();
                oracle_verify_l1(&x, &r.xhat, k, 2.0)
            })
            .count();
        pass &= ok >= 99;
        lines.push(format!("k={k}: {ok}/{INSTANCES}"));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    report(4, "l1/l1 scheme, factor 2", pass, &lines.join(", "), elapsed);
    assert!(pass);
}

#[test]
fn c05_strict_turnstile() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    let log_n = (N as f64).log2();
    for k in [2usize, 4] {
        let tree = build_split_tree(N, k).unwrap();
        let budget = 10.0 * (k as f64).powi(3) * log_n.powi(3);
        let mut ok = 0;
        let mut worst = 0;
        for seed in 0..INSTANCES {
            let x = strict_zipf(N, 1.2, 1000.0, seed);
            assert!(x.is_nonnegative());
            let v = apply(&tree, &x).unwrap();
            let r = recursive_decode(&tree, &v.values).unwrap();
            worst = worst.max(r.candidate_evaluations);
            if oracle_verify_linf(&x, &r.xhat, k, k) && (r.candidate_evaluations as f64) <= budget {
                ok += 1;
            }
        }
        pass &= ok == INSTANCES;
        lines.push(format!("k={k}: {ok}/{INSTANCES}, max evaluations {worst} <= {budget}"));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    report(5, "strict turnstile", pass, &lines.join(", "), elapsed);
    assert!(pass);
}

/// A signal whose mass sits mostly on a candidate set `S` containing every
/// `1/k`-heavy coordinate.
fn contraction_instance(k: usize, seed: u64) -> Option<(Signal, Vec<usize>)> {
    let shape = PlantedShape { background: 0.3, ..PlantedShape::standard(k) };
    let p = planted(N, k, &shape, seed);
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut s: Vec<usize> = p.heavy.iter().chain(&p.distractors).copied().collect();
    s.extend((0..10 * k).map(|_| r.gen_range(0..N)));
    s.sort_unstable();
    s.dedup();
    let x = p.signal;
    let heavy = head_set(&x, k, 1.0).unwrap();
    let inside: f64 = s.iter().map(|&i| x.get(i).abs()).sum();
    let outside = x.l1_norm() - inside;
    (heavy.iter().all(|i| s.binary_search(i).is_ok()) && inside >= 3.0 * outside).then_some((x, s))
}

#[test]
fn c06_reduce_noise_contraction() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut lines = Vec::new();
    for k in [2usize, 4] {
        let m = build_rs_matrix(N, BETA * k).unwrap();
        let mut worst = 0.0f64;
        let mut tested = 0;
        let mut seed = 0;
        while tested < 50 {
            seed += 1;
            assert!(seed < 10_000, "could not generate instances");
            let Some((x, s)) = contraction_instance(k, seed) else { continue };
            let u = apply(&m, &x).unwrap();
            let zhat = reduce_noise(&m, &u.values, &s, k).unwrap();
            let gamma = x.minus_sparse(&zhat).l1_norm() / x.l1_norm();
            worst = worst.max(gamma);
            pass &= gamma < 0.9;
            tested += 1;
        }
        lines.push(format!("k={k}: worst gamma {worst:.4} over {tested}"));
    }
    report(6, "reduce_noise contraction", pass, &lines.join(", "), t0.elapsed());
    assert!(pass);
}

#[test]
fn c07_decoy_bound() {
    // s = 2, eps = 0.5, gamma = 1, theta = 0.9, delta = 1/2, beta = 0.001
    // and zeta = 0.4 < delta - 64 beta / theta.
    let t0 = Instant::now();
    let (n_left, b, d, s) = (16usize, 16_000usize, 36usize, 2usize);
    let (eps, gamma, theta, delta, beta, zeta) = (0.5, 1.0, 0.9, 0.5, 0.001, 0.4);
    assert!(zeta < delta - 64.0 * beta / theta);
    let big_l = (6.0 / (gamma * eps)) as usize;
    let eta = eps * theta / 12.0;

    let mut certified = 0;
    let mut graph_seed = 0u64;
    let mut worst = 0;
    let mut pass = true;
    while certified < 50 {
        graph_seed += 1;
        assert!(graph_seed < 1000, "could not certify enough graphs");
        let g = sample_one_layer(n_left, b, d, Independence::FullTable, graph_seed).unwrap().graph();
        if !g.check_expansion(4 * s, beta * eps).unwrap() || !g.check_isolation(big_l, eta, zeta).unwrap() {
            continue;
        }
        certified += 1;
        let mut r = ChaCha8Rng::seed_from_u64(graph_seed);
        for _ in 0..20 {
            // x = y + z with |supp y| <= s and ||z||_1 <= 3/2.
            let mut x = vec![0.0; n_left];
            let mut idx: Vec<usize> = (0..n_left).collect();
            for t in 0..n_left {
                idx.swap(t, r.gen_range(t..n_left));
            }
            for &i in &idx[..s] {
                x[i] = r.gen_range(0.5..5.0) * if r.gen() { 1.0 } else { -1.0 };
            }
            let raw: Vec<f64> = (s..n_left).map(|_| r.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let z_mass = r.gen_range(0.0..1.5);
            for (&i, w) in idx[s..].iter().zip(raw) {
                x[i] = w / total * z_mass * if r.gen() { 1.0 } else { -1.0 };
            }
            let d_size = r.gen_range(1..=2 * s);
            let d_set: Vec<usize> = idx[r.gen_range(0..s)..].iter().copied().take(d_size).collect();
            let decoys = decoy_count(&g, &Signal::from_vec(x), &d_set, eps, gamma, delta).unwrap();
            worst = worst.max(decoys);
            pass &= decoys as f64 <= theta / gamma;
        }
    }
    let detail = format!("{certified} certified graphs of {graph_seed} sampled, max decoys {worst}");
    report(7, "decoy bound", pass, &detail, t0.elapsed());
    assert!(pass);
}

/// Rows of a weak layer: `2 * B2 * d1 * d2`.
fn weak_rows<'a>(parts: impl Iterator<Item = &'a detsketch::weak::WeakMatrix>) -> usize {
    parts
        .map(|p| {
            let s = p.shape();
            2 * s.b2 * s.d1 * s.d2
        })
        .sum()
}

/// `M(2^bits, k) + M(2^ceil(bits/2)) + M(2^floor(bits/2)) + ...` down to the leaves.
fn strict_rows(bits: u32, k: usize) -> usize {
    let p = RsParams::new(1 << bits, BETA * k).unwrap();
    let here = p.q * p.q;
    if (1usize << bits) <= LEAF_FACTOR * k * k || bits < 2 {
        here
    } else {
        here + strict_rows(bits.div_ceil(2), k) + strict_rows(bits / 2, k)
    }
}

#[test]
fn c08_row_counts() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut checked = 0;
    let mut rejected = 0;
    for n in [1usize << 10, 1 << 12] {
        let root = (n as f64).sqrt();
        let ln_n = (n as f64).ln();
        for k in [2usize, 4, 8, 16] {
            let linf = build_linf_scheme(n, k, 3);
            let l1 = build_l1_scheme(n, k, 1.0, 3);
            let combined = build_combined_scheme(n, k, 3);
            let fits = k as f64 <= root;
            let combined_fits = (6 * k) as f64 <= root && (k * k) as f64 <= root;

            match (fits, &linf) {
                (true, Ok(s)) => {
                    let steps = s.schedule().steps().count();
                    pass &= s.stack().len() == steps && s.m() == weak_rows(s.stack().parts().iter());
                    checked += 1;
                }
                (false, Err(Error::Parameter(_))) => rejected += 1,
                _ => pass = false,
            }
            match (fits, &l1) {
                (true, Ok(s)) => {
                    pass &= s.m() == weak_rows(s.stack().parts().iter());
                    checked += 1;
                }
                (false, Err(Error::Parameter(_))) => rejected += 1,
                _ => pass = false,
            }
            match (combined_fits, &combined) {
                (true, Ok(s)) => {
                    let kc = 6 * k;
                    let c_rows = (6.0 * (kc * kc) as f64 * ln_n).ceil() as usize;
                    let a = weak_rows(s.l1().stack().parts().iter());
                    let b = weak_rows(s.linf().stack().parts().iter());
                    pass &= s.incoherent().m() == c_rows && s.m() == a + b + c_rows;
                    checked += 1;
                }
                (false, Err(Error::Parameter(_))) => rejected += 1,
                _ => pass = false,
            }

            let tree = build_split_tree(n, k).unwrap();
            pass &= tree.m() == strict_rows(n.trailing_zeros(), k);
            // Level i holds 2^i nodes of universe n^(1/2^i).
            for (i, level) in tree.levels().iter().enumerate() {
                if level.nodes == 1 << i {
                    let bits = n.trailing_zeros() >> i;
                    if bits << i == n.trailing_zeros() {
                        let p = RsParams::new(1 << bits, BETA * k).unwrap();
                        pass &= level.rows == (1 << i) * p.rows();
                    }
                }
            }
            checked += 1;
        }
    }

    // Materialized length at the small size.
    let s = build_linf_scheme(1 << 10, 2, 3).unwrap();
    let x = Signal::from_vec((0..1 << 10).map(|i| i as f64).collect());
    pass &= apply(&s, &x).unwrap().len() == s.m();
    let tree = build_split_tree(1 << 10, 2).unwrap();
    pass &= apply(&tree, &x).unwrap().len() == tree.m();

    let detail = format!("{checked} constructions match, {rejected} rejected with k beyond sqrt(n)");
    report(8, "row counts", pass, &detail, t0.elapsed());
    assert!(pass);
}

fn random_updates(r: &mut ChaCha8Rng, n: usize) -> Vec<Update> {
    let len = r.gen_range(1..60);
    (0..len)
        .map(|_| {
            let mag = 10f64.powf(r.gen_range(-3.0..3.0));
            Update::new(r.gen_range(0..n) as u64, if r.gen() { mag } else { -mag })
        })
        .collect()
}

#[test]
fn c09_linearity_and_determinism() {
    let t0 = Instant::now();
    let n = 256;
    let schemes: Vec<Box<dyn LinearOperator>> = vec![
        Box::new(build_linf_scheme(n, 2, 5).unwrap()),
        Box::new(build_l1_scheme(n, 4, 1.0, 5).unwrap()),
        Box::new(build_combined_scheme(n, 2, 5).unwrap()),
        Box::new(build_split_tree(n, 2).unwrap()),
    ];
    let rebuilt: Vec<Box<dyn LinearOperator>> = vec![
        Box::new(build_linf_scheme(n, 2, 5).unwrap()),
        Box::new(build_l1_scheme(n, 4, 1.0, 5).unwrap()),
        Box::new(build_combined_scheme(n, 2, 5).unwrap()),
        Box::new(build_split_tree(n, 2).unwrap()),
    ];
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let mut pass = true;
    let mut worst = 0.0f64;
    for seq in 0..1000 {
        let phi = schemes[seq % schemes.len()].as_ref();
        let again = rebuilt[seq % schemes.len()].as_ref();
        let a = random_updates(&mut r, n);
        let b = random_updates(&mut r, n);
        let ab: Vec<Update> = a.iter().chain(&b).copied().collect();
        let mass: f64 = ab.iter().map(|u| u.delta.abs()).sum();

        let va = ingest_all(phi, &a).unwrap();
        let vb = ingest_all(phi, &b).unwrap();
        let vab = ingest_all(phi, &ab).unwrap();
        let sum = va.add(&vb).unwrap();
        let dense = apply(phi, &Signal::from_updates(n, &ab).unwrap()).unwrap();
        let repeat = ingest_all(again, &ab).unwrap();

        for i in 0..vab.len() {
            let e = (vab.values[i] - sum.values[i]).abs().max((vab.values[i] - dense.values[i]).abs());
            worst = worst.max(e / mass);
        }
        pass &= repeat == vab;
    }
    pass &= worst <= 1e-9;
    report(9, "linearity and determinism", pass, &format!("1000 sequences, worst relative error {worst:.2e}"), t0.elapsed());
    assert!(pass);
}

#[test]
fn c10_non_adaptivity() {
    let t0 = Instant::now();
    let n = 1024;
    let k = 4;
    let x1 = planted(n, k, &PlantedShape::standard(k), 1).signal;
    let x2 = zipf(n, 1.1, 50.0, 2);
    let mut pass = true;

    let schemes: Vec<(&str, Box<dyn Fn() -> Box<dyn LinearOperator>>)> = vec![
        ("linf", Box::new(move || Box::new(build_linf_scheme(n, k, 21).unwrap()))),
        ("l1", Box::new(move || Box::new(build_l1_scheme(n, k, 1.0, 21).unwrap()))),
        ("combined", Box::new(move || Box::new(build_combined_scheme(n, 2, 21).unwrap()))),
        ("strict", Box::new(move || Box::new(build_split_tree(n, k).unwrap()))),
    ];
    for (_, build) in &schemes {
        let a = build();
        let b = build();
        let before = a.descriptor().to_bytes();
        let _ = apply(a.as_ref(), &x1).unwrap();
        let _ = apply(b.as_ref(), &x2).unwrap();
        pass &= before == a.descriptor().to_bytes() && before == b.descriptor().to_bytes();
    }

    // Decoding different inputs leaves the matrices and schedules untouched.
    let s = build_linf_scheme(n, k, 21).unwrap();
    let sched = build_schedule(k).unwrap().to_bytes();
    let before = s.descriptor().to_bytes();
    for x in [&x1, &x2] {
        let v = apply(&s, x).unwrap();
        let _ = linf_decode(&s, &v.values, None).unwrap();
        pass &= s.descriptor().to_bytes() == before && s.schedule().to_bytes() == sched;
    }
    pass &= build_schedule(k).unwrap().to_bytes() == sched;

    report(10, "non-adaptivity", pass, "descriptors and schedules byte-identical", t0.elapsed());
    assert!(pass);
}
