//! Seeded instance generators with known structure, used by tests, the
//! benchmark suite and the CLI's demo mode.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::signal::{Signal, Update};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sign(r: &mut ChaCha8Rng) -> f64 {
    if r.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Shape of a planted heavy-hitter instance. Magnitudes are in units of
/// `tail / k` where `tail` is the dense background mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedShape {
    pub heavy: usize,
    pub heavy_range: (f64, f64),
    pub distractors: usize,
    pub distractor_range: (f64, f64),
    /// l1 mass of the background spread over all remaining coordinates.
    pub background: f64,
    /// Overall scale is `10^u` for `u` uniform in this range.
    pub log10_scale: (f64, f64),
    pub nonnegative: bool,
}

impl PlantedShape {
    /// `k` heavies in `[1, 4] tail/k`, `2k` distractors in `[0.1, 0.5] tail/k`,
    /// unit background, random overall scale.
    pub fn standard(k: usize) -> Self {
        Self {
            heavy: k,
            heavy_range: (1.0, 4.0),
            distractors: 2 * k,
            distractor_range: (0.1, 0.5),
            background: 1.0,
            log10_scale: (-2.0, 3.0),
            nonnegative: false,
        }
    }
}

/// A generated instance and where its mass was placed.
#[derive(Debug, Clone)]
pub struct Planted {
    pub signal: Signal,
    pub heavy: Vec<usize>,
    pub distractors: Vec<usize>,
    pub scale: f64,
}

pub fn planted(n: usize, k: usize, shape: &PlantedShape, seed: u64) -> Planted {
    let mut r = rng(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let nh = shape.heavy.min(n);
    let nd = shape.distractors.min(n - nh);
    let heavy: Vec<usize> = perm[..nh].to_vec();
    let distractors: Vec<usize> = perm[nh..nh + nd].to_vec();
    let rest = &perm[nh + nd..];

    let scale = 10f64.powf(r.gen_range(shape.log10_scale.0..=shape.log10_scale.1));
    let unit = scale / k.max(1) as f64;
    let mut x = vec![0.0; n];
    let signed = |r: &mut ChaCha8Rng, mag: f64| if shape.nonnegative { mag } else { sign(r) * mag };

    for &i in &heavy {
        let mag = r.gen_range(shape.heavy_range.0..=shape.heavy_range.1) * unit;
        x[i] = signed(&mut r, mag);
    }
    for &i in &distractors {
        let mag = r.gen_range(shape.distractor_range.0..=shape.distractor_range.1) * unit;
        x[i] = signed(&mut r, mag);
    }
    if !rest.is_empty() && shape.background > 0.0 {
        let raw: Vec<f64> = rest.iter().map(|_| r.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        for (&i, w) in rest.iter().zip(raw) {
            x[i] = signed(&mut r, w / total * shape.background * scale);
        }
    }
    Planted { signal: Signal::from_vec(x), heavy, distractors, scale }
}

/// Zipfian magnitudes `c * j^-exponent` for `j = 1..=n`, randomly placed
/// and signed.
pub fn zipf(n: usize, exponent: f64, scale: f64, seed: u64) -> Signal {
    let mut r = rng(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let mut x = vec![0.0; n];
    for (j, &i) in perm.iter().enumerate() {
        x[i] = sign(&mut r) * scale * ((j + 1) as f64).powf(-exponent);
    }
    Signal::from_vec(x)
}

/// Nonnegative integer counts `floor(total_head * j^-exponent)`, randomly placed.
pub fn strict_zipf(n: usize, exponent: f64, total_head: f64, seed: u64) -> Signal {
    let mut r = rng(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let mut x = vec![0.0; n];
    for (j, &i) in perm.iter().enumerate() {
        x[i] = (total_head * ((j + 1) as f64).powf(-exponent)).floor();
    }
    Signal::from_vec(x)
}

/// A shuffled update stream whose sum is `x`.
///
/// Each nonzero coordinate is split into `pieces` updates, and `noise`
/// extra insert/delete pairs on random coordinates cancel out exactly.
pub fn stream_for(x: &Signal, pieces: usize, noise: usize, seed: u64) -> Vec<Update> {
    let mut r = rng(seed);
    let mut ups = Vec::new();
    for (i, &v) in x.values().iter().enumerate().filter(|(_, v)| **v != 0.0) {
        let p = pieces.max(1);
        let mut left = v;
        for _ in 1..p {
            let part = v * r.gen_range(-0.5..1.0) / p as f64;
            ups.push(Update::new(i as u64, part));
            left -= part;
        }
        ups.push(Update::new(i as u64, left));
    }
    let n = x.len();
    for _ in 0..noise {
        if n == 0 {
            break;
        }
        let i = r.gen_range(0..n) as u64;
        let d = r.gen_range(-1.0..1.0);
        ups.push(Update::new(i, d));
        ups.push(Update::new(i, -d));
    }
    ups.shuffle(&mut r);
    ups
}

/// A strict-turnstile stream for a nonnegative integer signal: every
/// coordinate is over-inserted then trimmed back, and no prefix goes negative.
pub fn strict_stream_for(x: &Signal, seed: u64) -> Vec<Update> {
    let mut r = rng(seed);
    let mut inserts = Vec::new();
    let mut deletes = Vec::new();
    for (i, &v) in x.values().iter().enumerate().filter(|(_, v)| **v > 0.0) {
        let extra = r.gen_range(0..3) as f64;
        inserts.push(Update::new(i as u64, v + extra));
        if extra > 0.0 {
            deletes.push(Update::new(i as u64, -extra));
        }
    }
    inserts.shuffle(&mut r);
    deletes.shuffle(&mut r);
    inserts.extend(deletes);
    inserts
}

/// Whether every running prefix of `updates` keeps all coordinates `>= 0`.
pub fn is_strict_stream(n: usize, updates: &[Update]) -> bool {
    let mut x = vec![0.0f64; n];
    for u in updates {
        let Some(slot) = x.get_mut(u.index as usize) else {
            return false;
        };
        *slot += u.delta;
        if *slot < 0.0 {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{tail_norm, top_k_indices};

    #[test]
    fn planted_heavies_are_top() {
        let p = planted(1024, 4, &PlantedShape::standard(4), 9);
        let mut top = top_k_indices(&p.signal, 4);
        top.sort_unstable();
        let mut h = p.heavy.clone();
        h.sort_unstable();
        assert_eq!(top, h);
        let tail = tail_norm(&p.signal, 4).unwrap();
        assert!(tail > 0.9 * p.scale && tail < 2.1 * p.scale);
    }

    #[test]
    fn deterministic() {
        let a = planted(256, 2, &PlantedShape::standard(2), 3);
        let b = planted(256, 2, &PlantedShape::standard(2), 3);
        assert_eq!(a.signal, b.signal);
        assert_eq!(zipf(64, 1.1, 1.0, 5), zipf(64, 1.1, 1.0, 5));
    }

    #[test]
    fn streams_sum_to_signal() {
        let x = zipf(128, 1.0, 3.0, 1);
        let ups = stream_for(&x, 3, 50, 2);
        let y = Signal::from_updates(128, &ups).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn strict_streams_stay_nonnegative() {
        let x = strict_zipf(256, 1.2, 1000.0, 4);
        let ups = strict_stream_for(&x, 5);
        assert!(is_strict_stream(256, &ups));
        assert_eq!(Signal::from_updates(256, &ups).unwrap(), x);
        assert!(!is_strict_stream(2, &[Update::new(0, 1.0), Update::new(0, -2.0)]));
    }
}
