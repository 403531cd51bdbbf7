//! Seeded hashing schemes, the bipartite graphs they induce, and exhaustive
//! certification of expansion and isolation on small graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::par;
use crate::signal::Signal;

/// Upper limit on subsets enumerated by the exhaustive checkers.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// 2^61 - 1, the field used by polynomial hashing.
const MERSENNE61: u64 = (1 << 61) - 1;

/// SplitMix64 finalizer over a seed and two stream labels.
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mulmod61(a: u64, b: u64) -> u64 {
    let p = (a as u128) * (b as u128);
    let lo = (p as u64) & MERSENNE61;
    let hi = (p >> 61) as u64;
    let s = lo + hi;
    if s >= MERSENNE61 {
        s - MERSENNE61
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Independence {
    /// Explicit uniformly random table per function.
    FullTable,
    /// Degree `t - 1` polynomial over GF(2^61 - 1), reduced mod `B`.
    KWise(usize),
}

#[derive(Debug, Clone)]
enum Funcs {
    Small(Vec<u16>),
    Wide(Vec<u32>),
    Poly { t: usize, coeffs: Vec<u64> },
}

/// `d` independent hash functions `[N] -> [B]`.
#[derive(Debug, Clone)]
pub struct OneLayerHash {
    n: usize,
    b: usize,
    d: usize,
    independence: Independence,
    funcs: Funcs,
}

impl OneLayerHash {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn buckets(&self) -> usize {
        self.b
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn independence(&self) -> Independence {
        self.independence
    }

    /// `f_j(x)`.
    #[inline]
    pub fn eval(&self, j: usize, x: usize) -> usize {
        debug_assert!(j < self.d && x < self.n);
        match &self.funcs {
            Funcs::Small(t) => t[j * self.n + x] as usize,
            Funcs::Wide(t) => t[j * self.n + x] as usize,
            Funcs::Poly { t, coeffs } => {
                let c = &coeffs[j * t..(j + 1) * t];
                let xv = x as u64 % MERSENNE61;
                let mut acc = 0u64;
                for &a in c {
                    acc = mulmod61(acc, xv) + a;
                    if acc >= MERSENNE61 {
                        acc -= MERSENNE61;
                    }
                }
                (acc % self.b as u64) as usize
            }
        }
    }

    /// `(f_1(x), ..., f_d(x))`.
    pub fn tuple(&self, x: usize) -> Vec<usize> {
        (0..self.d).map(|j| self.eval(j, x)).collect()
    }

    /// Left node `x` joins right node `j * B + f_j(x)` for each `j`.
    pub fn graph(&self) -> BipartiteGraph {
        let mut adj = Vec::with_capacity(self.n * self.d);
        for x in 0..self.n {
            for j in 0..self.d {
                adj.push((j * self.b + self.eval(j, x)) as u32);
            }
        }
        BipartiteGraph { n_left: self.n, n_right: self.b * self.d, d: self.d, adj }
    }
}

/// Sample `d` functions `[N] -> [B]`, deterministic in `seed`.
pub fn sample_one_layer(n: usize, b: usize, d: usize, independence: Independence, seed: u64) -> Result<OneLayerHash> {
    if b == 0 || d == 0 {
        return param(format!("one-layer hash needs B >= 1 and d >= 1, got B = {b}, d = {d}"));
    }
    if n == 0 {
        return param("one-layer hash needs N >= 1");
    }
    if b > u32::MAX as usize {
        return param(format!("bucket count {b} exceeds 32 bits"));
    }
    let funcs = match independence {
        Independence::FullTable => {
            let total = n.checked_mul(d).ok_or_else(|| Error::Parameter("hash table too large".into()))?;
            // One ChaCha stream per function keeps tables stable if d changes.
            if b <= u16::MAX as usize + 1 {
                let mut t = vec![0u16; total];
                par::for_each_chunk_mut(&mut t, n, |j, row| {
                    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, j as u64));
                    for v in row.iter_mut() {
                        *v = r.gen_range(0..b) as u16;
                    }
                });
                Funcs::Small(t)
            } else {
                let mut t = vec![0u32; total];
                par::for_each_chunk_mut(&mut t, n, |j, row| {
                    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, j as u64));
                    for v in row.iter_mut() {
                        *v = r.gen_range(0..b) as u32;
                    }
                });
                Funcs::Wide(t)
            }
        }
        Independence::KWise(t) => {
            if t == 0 {
                return param("k-wise independence needs t >= 1");
            }
            let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, 0));
            let coeffs = (0..t * d).map(|_| r.gen_range(0..MERSENNE61)).collect();
            Funcs::Poly { t, coeffs }
        }
    };
    Ok(OneLayerHash { n, b, d, independence, funcs })
}

/// Parameters of a two-layer scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoLayerShape {
    pub n: usize,
    pub b1: usize,
    pub d1: usize,
    pub b2: usize,
    pub d2: usize,
}

/// `g: [N] -> [B1]` with `d1` repetitions, then `h_{r,j}: [B1] -> [B2]` for
/// each repetition `r` and `j < d2`.
#[derive(Debug, Clone)]
pub struct TwoLayerHash {
    shape: TwoLayerShape,
    g: OneLayerHash,
    h: OneLayerHash,
}

pub fn sample_two_layer(shape: TwoLayerShape, independence: Independence, seed: u64) -> Result<TwoLayerHash> {
    let TwoLayerShape { n, b1, d1, b2, d2 } = shape;
    if [n, b1, d1, b2, d2].contains(&0) {
        return param(format!("two-layer hash parameters must be positive: {shape:?}"));
    }
    let g = sample_one_layer(n, b1, d1, independence, derive_seed(seed, 10, 0))?;
    let h = sample_one_layer(b1, b2, d1 * d2, independence, derive_seed(seed, 11, 0))?;
    Ok(TwoLayerHash { shape, g, h })
}

impl TwoLayerHash {
    pub fn shape(&self) -> TwoLayerShape {
        self.shape
    }

    pub fn first_layer(&self) -> &OneLayerHash {
        &self.g
    }

    pub fn second_layer(&self) -> &OneLayerHash {
        &self.h
    }

    /// `idx(r, i) = g_r(i)`, the first-layer bucket of `i` in repetition `r`.
    #[inline]
    pub fn idx(&self, r: usize, i: usize) -> usize {
        self.g.eval(r, i)
    }

    /// `h_{r,j}(b)`.
    #[inline]
    pub fn second(&self, r: usize, j: usize, b: usize) -> usize {
        self.h.eval(r * self.shape.d2 + j, b)
    }

    /// Right node of `i` for the pair `(r, j)`: `(r * d2 + j) * B2 + h_{r,j}(g_r(i))`.
    #[inline]
    pub fn right_node(&self, r: usize, j: usize, i: usize) -> usize {
        (r * self.shape.d2 + j) * self.shape.b2 + self.second(r, j, self.idx(r, i))
    }

    /// Left-regular graph of degree `d1 * d2` with `B2 * d1 * d2` right nodes.
    pub fn graph(&self) -> BipartiteGraph {
        let TwoLayerShape { n, b2, d1, d2, .. } = self.shape;
        let mut adj = Vec::with_capacity(n * d1 * d2);
        for i in 0..n {
            for r in 0..d1 {
                for j in 0..d2 {
                    adj.push(self.right_node(r, j, i) as u32);
                }
            }
        }
        BipartiteGraph { n_left: n, n_right: b2 * d1 * d2, d: d1 * d2, adj }
    }
}

/// A `d`-left-regular bipartite multigraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    n_left: usize,
    n_right: usize,
    d: usize,
    adj: Vec<u32>,
}

/// Outcome of a sampled property check. Sampling can only refute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Refuted(Vec<usize>),
    NotRefuted { trials: usize },
}

impl BipartiteGraph {
    pub fn from_adjacency(n_right: usize, adjacency: &[Vec<usize>]) -> Result<Self> {
        let d = adjacency.first().map_or(0, |a| a.len());
        let mut adj = Vec::with_capacity(adjacency.len() * d);
        for (x, nbrs) in adjacency.iter().enumerate() {
            if nbrs.len() != d {
                return param(format!("left node {x} has degree {}, expected {d}", nbrs.len()));
            }
            for &y in nbrs {
                if y >= n_right {
                    return param(format!("right node {y} out of range {n_right}"));
                }
                adj.push(y as u32);
            }
        }
        Ok(Self { n_left: adjacency.len(), n_right, d, adj })
    }

    /// Left node `i` joins right nodes `i*d .. i*d + d`.
    pub fn disjoint(n_left: usize, d: usize) -> Self {
        let adj = (0..(n_left * d) as u32).collect();
        Self { n_left, n_right: n_left * d, d, adj }
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.n_right
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn neighbors(&self, x: usize) -> &[u32] {
        &self.adj[x * self.d..(x + 1) * self.d]
    }

    /// Adjacency list, one left node per line: `x: y1 y2 ...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for x in 0..self.n_left {
            out.push_str(&x.to_string());
            out.push(':');
            for y in self.neighbors(x) {
                out.push(' ');
                out.push_str(&y.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Number of subsets of size `1..=ell`.
    pub fn subset_count(&self, ell: usize) -> u128 {
        let n = self.n_left as u128;
        let mut total = 0u128;
        let mut c = 1u128;
        for s in 1..=ell.min(self.n_left) as u128 {
            c = c * (n - s + 1) / s;
            total = total.saturating_add(c);
        }
        total
    }

    fn gate(&self, ell: usize) -> Result<()> {
        let subsets = self.subset_count(ell);
        if subsets > EXHAUSTIVE_LIMIT {
            return Err(Error::TooManySubsets { subsets, limit: EXHAUSTIVE_LIMIT });
        }
        Ok(())
    }

    /// Exhaustively decide `|Gamma(S)| >= (1 - eps) d |S|` for all `|S| <= ell`.
    pub fn check_expansion(&self, ell: usize, eps: f64) -> Result<bool> {
        self.gate(ell)?;
        let ok = !par::any_range(self.n_left, |first| {
            let mut walk = Walk::new(self);
            walk.search_from(first, ell, &mut |w| (w.distinct as f64) < (1.0 - eps) * (self.d * w.members.len()) as f64)
        });
        Ok(ok)
    }

    /// Exhaustively decide the isolation property: every `|S| <= big_l` has
    /// at least `(1 - eta)|S|` members with `(1 - zeta) d` edges landing on
    /// right nodes no other member touches. Edges count with multiplicity.
    pub fn check_isolation(&self, big_l: usize, eta: f64, zeta: f64) -> Result<bool> {
        self.gate(big_l)?;
        let ok = !par::any_range(self.n_left, |first| {
            let mut walk = Walk::new(self);
            walk.search_from(first, big_l, &mut |w| {
                let isolated = w.members.iter().filter(|&&x| w.isolated_edges(x) as f64 >= (1.0 - zeta) * self.d as f64).count();
                (isolated as f64) < (1.0 - eta) * w.members.len() as f64
            })
        });
        Ok(ok)
    }

    /// Random subsets of size `1..=ell`; returns a counterexample if found.
    pub fn sample_expansion(&self, ell: usize, eps: f64, trials: usize, seed: u64) -> Verdict {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let s = self.random_subset(&mut r, ell);
            let distinct = self.distinct_neighbors(&s);
            if (distinct as f64) < (1.0 - eps) * (self.d * s.len()) as f64 {
                return Verdict::Refuted(s);
            }
        }
        Verdict::NotRefuted { trials }
    }

    /// Random subsets of size `1..=big_l`; returns a counterexample if found.
    pub fn sample_isolation(&self, big_l: usize, eta: f64, zeta: f64, trials: usize, seed: u64) -> Verdict {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let s = self.random_subset(&mut r, big_l);
            let mut walk = Walk::new(self);
            for &x in &s {
                walk.push(x);
            }
            let isolated = s.iter().filter(|&&x| walk.isolated_edges(x) as f64 >= (1.0 - zeta) * self.d as f64).count();
            if (isolated as f64) < (1.0 - eta) * s.len() as f64 {
                return Verdict::Refuted(s);
            }
        }
        Verdict::NotRefuted { trials }
    }

    fn random_subset(&self, r: &mut ChaCha8Rng, ell: usize) -> Vec<usize> {
        let size = r.gen_range(1..=ell.min(self.n_left).max(1));
        let mut s = rand::seq::index::sample(r, self.n_left, size).into_vec();
        s.sort_unstable();
        s
    }

    fn distinct_neighbors(&self, s: &[usize]) -> usize {
        let mut ys: Vec<u32> = s.iter().flat_map(|&x| self.neighbors(x).iter().copied()).collect();
        ys.sort_unstable();
        ys.dedup();
        ys.len()
    }

    /// Sum of `x` over each right node, counting edge multiplicity.
    pub fn bucket_sums(&self, x: &Signal) -> Result<Vec<f64>> {
        if x.len() != self.n_left {
            return Err(Error::DimensionMismatch { expected: self.n_left, got: x.len() });
        }
        let mut sums = vec![0.0; self.n_right];
        for (i, &v) in x.values().iter().enumerate() {
            if v != 0.0 {
                for &y in self.neighbors(i) {
                    sums[y as usize] += v;
                }
            }
        }
        Ok(sums)
    }

    /// `E_i`: the bucket sums over the edges of `i`.
    pub fn estimates_of(&self, sums: &[f64], i: usize) -> Vec<f64> {
        self.neighbors(i).iter().map(|&y| sums[y as usize]).collect()
    }
}

/// Depth-first subset enumeration with incremental right-node counts.
struct Walk<'g> {
    g: &'g BipartiteGraph,
    count: Vec<u16>,
    distinct: usize,
    members: Vec<usize>,
}

impl<'g> Walk<'g> {
    fn new(g: &'g BipartiteGraph) -> Self {
        Self { g, count: vec![0; g.n_right], distinct: 0, members: Vec::new() }
    }

    fn push(&mut self, x: usize) {
        for &y in self.g.neighbors(x) {
            let c = &mut self.count[y as usize];
            if *c == 0 {
                self.distinct += 1;
            }
            *c += 1;
        }
        self.members.push(x);
    }

    fn pop(&mut self) {
        let x = self.members.pop().expect("pop on empty walk");
        for &y in self.g.neighbors(x) {
            let c = &mut self.count[y as usize];
            *c -= 1;
            if *c == 0 {
                self.distinct -= 1;
            }
        }
    }

    /// Edges of `x` whose right endpoint is touched by no other member.
    fn isolated_edges(&self, x: usize) -> usize {
        let nb = self.g.neighbors(x);
        nb.iter()
            .filter(|&&y| {
                let own = nb.iter().filter(|&&z| z == y).count();
                self.count[y as usize] as usize == own
            })
            .count()
    }

    /// Visit every subset with minimum element `first` and size `<= ell`;
    /// stop early and return true when `bad` holds.
    fn search_from(&mut self, first: usize, ell: usize, bad: &mut dyn FnMut(&Self) -> bool) -> bool {
        if ell == 0 {
            return false;
        }
        self.push(first);
        let found = self.extend(first + 1, ell, bad);
        self.pop();
        found
    }

    fn extend(&mut self, next: usize, ell: usize, bad: &mut dyn FnMut(&Self) -> bool) -> bool {
        if bad(self) {
            return true;
        }
        if self.members.len() == ell {
            return false;
        }
        for x in next..self.g.n_left {
            self.push(x);
            let found = self.extend(x + 1, ell, bad);
            self.pop();
            if found {
                return true;
            }
        }
        false
    }
}

/// Number of `i` in `D` whose bucket estimates miss `x_i` by at least
/// `eps * gamma / 4` in at least `(1 - delta) d` of its edges.
pub fn decoy_count(g: &BipartiteGraph, x: &Signal, d_set: &[usize], eps: f64, gamma: f64, delta: f64) -> Result<usize> {
    let sums = g.bucket_sums(x)?;
    let thr = eps * gamma / 4.0;
    let need = (1.0 - delta) * g.degree() as f64;
    let mut decoys = 0;
    for &i in d_set {
        if i >= g.n_left() {
            return Err(Error::IndexOutOfRange { index: i as u64, n: g.n_left() });
        }
        let xi = x.get(i);
        let far = g.estimates_of(&sums, i).iter().filter(|w| (xi - **w).abs() >= thr).count();
        if far as f64 >= need {
            decoys += 1;
        }
    }
    Ok(decoys)
}
