//! Weak recovery systems: one sketch layer that finds most of the remaining
//! heavy coordinates of a residual and estimates them.
//!
//! Each column `i` is hashed into a first-layer bucket `g_r(i)` per
//! repetition `r`, and that bucket is hashed again into `B2` second-layer
//! buckets `d2` times. Bit `j` of the inner codeword for `(i, r)` decides
//! which row of the pair at `(r, j, h_{r,j}(g_r(i)))` receives the entry.
//!
//! Decoding reads a message out of every heavy first-layer bucket, links
//! messages across repetitions through a [`LinkGraph`], clusters the linked
//! fragments, and outer-decodes each cluster into an index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::coding::{self, BlockLayout, BlockMessage, CodeSpec, LinkGraph, OuterCode};
use crate::descriptor::{MatrixDescriptor, MatrixKind};
use crate::error::{param, Error, Result};
use crate::hashgraph::{derive_seed, sample_two_layer, Independence, TwoLayerHash, TwoLayerShape};
use crate::par;
use crate::signal::{magnitude_order, SparseVector};
use crate::sketch::LinearOperator;

/// Which guarantee a layer is sized for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Head bound `s/8`, tail growth `eps/4`; buckets kept above `eps/(4s)`.
    L1L1 { s: usize, eps: f64 },
    /// Head bound `sqrt(s w)`, estimates within `1/(2k)`; buckets kept above `1/(4k)`.
    Linf { k: usize, s: usize, w: f64 },
}

impl Flavor {
    /// Number of estimates kept.
    pub fn s(&self) -> usize {
        match *self {
            Flavor::L1L1 { s, .. } | Flavor::Linf { s, .. } => s,
        }
    }

    /// The accuracy parameter the hashing is sized with.
    pub fn effective_eps(&self) -> f64 {
        match *self {
            Flavor::L1L1 { eps, .. } => eps,
            Flavor::Linf { k, s, w } => (s as f64 * w).sqrt() / k as f64,
        }
    }

    /// Bucket filter threshold, in units of the tail scale.
    pub fn threshold(&self) -> f64 {
        match *self {
            Flavor::L1L1 { s, eps } => eps / (4.0 * s as f64),
            Flavor::Linf { k, .. } => 1.0 / (4.0 * k as f64),
        }
    }

    /// Tail size the default scale estimate is taken against.
    pub fn tail_size(&self) -> usize {
        match *self {
            Flavor::L1L1 { s, .. } => s,
            Flavor::Linf { k, .. } => k,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let root = (n as f64).sqrt();
        match *self {
            Flavor::L1L1 { s, eps } => {
                if s == 0 || s as f64 > root {
                    return param(format!("l1 weak system needs 1 <= s <= sqrt(n), got s = {s}, n = {n}"));
                }
                if !(eps > 0.0 && eps <= 1.0) {
                    return param(format!("l1 weak system needs 0 < eps <= 1, got {eps}"));
                }
            }
            Flavor::Linf { k, s, w } => {
                if k == 0 || k as f64 > root {
                    return param(format!("linf weak system needs 1 <= k <= sqrt(n), got k = {k}, n = {n}"));
                }
                // The closing call of the iterative decoder uses s = 4 even for k < 4.
                if s == 0 || s > k.max(4) {
                    return param(format!("linf weak system needs 1 <= s <= max(k, 4), got s = {s}, k = {k}"));
                }
                if !(w > 0.0 && w <= s as f64) {
                    return param(format!("linf weak system needs 0 < w <= s, got w = {w}, s = {s}"));
                }
            }
        }
        Ok(())
    }
}

/// Constants behind the asymptotic parameter choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub alpha: f64,
    pub zeta: f64,
    pub d1_min: usize,
    pub d1_max: usize,
    /// Degree of the link graph.
    pub delta: usize,
    pub independence: Independence,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c1: 4.0,
            c2: 2.0,
            c3: 4.0,
            c4: 2.0,
            alpha: 1.5,
            zeta: 0.5,
            d1_min: 8,
            d1_max: 24,
            delta: 4,
            independence: Independence::FullTable,
        }
    }
}

/// Resolved sizes of one weak layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakParams {
    pub flavor: Flavor,
    pub shape: TwoLayerShape,
    pub constants: Constants,
    pub layout: BlockLayout,
    pub inner: CodeSpec,
}

impl WeakParams {
    pub fn resolve(flavor: Flavor, n: usize, c: Constants) -> Result<Self> {
        flavor.validate(n)?;
        if n < 4 {
            return param(format!("weak system needs n >= 4, got {n}"));
        }
        if c.d1_min < 2 || c.d1_max < c.d1_min || !(c.zeta > 0.0) || !(c.alpha > 1.0) {
            return param(format!("invalid weak constants {c:?}"));
        }
        let s = flavor.s() as f64;
        let eps = flavor.effective_eps();
        let zeta = c.zeta;
        let ln_n = (n as f64).ln();

        let b1_raw = c.c1 * s.powf(c.alpha) / (zeta.powf(c.alpha) * eps.powf(2.0 * c.alpha));
        let b1 = clamp_ceil(b1_raw, 4, n);
        let ratio = (b1 as f64 / s).ln().max(1.0);
        let mut d1 = clamp_ceil(c.c2 * ln_n / (zeta * eps * ratio), c.d1_min, c.d1_max);
        d1 += d1 % 2;
        let b2 = clamp_ceil(c.c3 * s / (zeta * eps), 2, usize::MAX >> 8);
        let outer = OuterCode::new(n, d1)?;
        let layout = BlockLayout::new(outer.per_block, c.delta, b1);
        let d2_formula = (c.c4 * ratio / zeta).ceil() as usize;
        let inner = CodeSpec::reed_solomon(layout.bits(), d2_formula.max(2 * layout.bits()))?;
        let d2 = inner.block_bits();
        Ok(Self { flavor, shape: TwoLayerShape { n, b1, d1, b2, d2 }, constants: c, layout, inner })
    }

    /// `2 * B2 * d1 * d2`.
    pub fn rows(&self) -> usize {
        2 * self.shape.b2 * self.shape.d1 * self.shape.d2
    }
}

fn clamp_ceil(v: f64, lo: usize, hi: usize) -> usize {
    if !v.is_finite() || v >= hi as f64 {
        return hi;
    }
    (v.ceil() as usize).clamp(lo, hi)
}

/// The measurement matrix of one weak layer.
pub struct WeakMatrix {
    params: WeakParams,
    seed: u64,
    hash: TwoLayerHash,
    link: LinkGraph,
    outer: OuterCode,
    /// Packed inner codewords, `block_len` bytes per `(i, r)`.
    codewords: Vec<u8>,
}

/// Build a weak layer over `[0, n)`, deterministic in `seed`.
pub fn build_weak_matrix(flavor: Flavor, n: usize, seed: u64) -> Result<WeakMatrix> {
    build_weak_matrix_with(flavor, n, seed, Constants::default())
}

pub fn build_weak_matrix_with(flavor: Flavor, n: usize, seed: u64, constants: Constants) -> Result<WeakMatrix> {
    let params = WeakParams::resolve(flavor, n, constants)?;
    let TwoLayerShape { d1, .. } = params.shape;
    let hash = sample_two_layer(params.shape, constants.independence, derive_seed(seed, 20, 0))?;
    let link = LinkGraph::new(d1, constants.delta, derive_seed(seed, 21, 0))?;
    let outer = OuterCode::new(n, d1)?;
    let blen = params.inner.block_len;
    let mut codewords = vec![0u8; n * d1 * blen];
    par::for_each_chunk_mut(&mut codewords, d1 * blen, |i, chunk| {
        for r in 0..d1 {
            let msg = BlockMessage::assemble(i, r, &hash, &link, &outer).to_bits(&params.layout);
            let cw = params.inner.encode(&msg);
            chunk[r * blen..(r + 1) * blen].copy_from_slice(&coding::bits_to_bytes(&cw, blen));
        }
    });
    Ok(WeakMatrix { params, seed, hash, link, outer, codewords })
}

impl WeakMatrix {
    pub fn params(&self) -> &WeakParams {
        &self.params
    }

    pub fn shape(&self) -> TwoLayerShape {
        self.params.shape
    }

    pub fn hash(&self) -> &TwoLayerHash {
        &self.hash
    }

    pub fn link(&self) -> &LinkGraph {
        &self.link
    }

    pub fn outer(&self) -> &OuterCode {
        &self.outer
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Inner codeword bits carried by `i` in repetition `r`.
    pub fn codeword(&self, i: usize, r: usize) -> coding::Bits {
        let blen = self.params.inner.block_len;
        let off = (i * self.params.shape.d1 + r) * blen;
        coding::bytes_to_bits(&self.codewords[off..off + blen], self.params.shape.d2)
    }

    #[inline]
    fn codeword_bit(&self, i: usize, r: usize, j: usize) -> usize {
        let off = (i * self.params.shape.d1 + r) * self.params.inner.block_len;
        ((self.codewords[off + j / 8] >> (7 - j % 8)) & 1) as usize
    }

    /// Pair index of second-layer bucket `c` in `(r, j)`; rows `2p` and `2p + 1`.
    #[inline]
    pub fn pair(&self, r: usize, j: usize, c: usize) -> usize {
        let s = &self.params.shape;
        (r * s.d2 + j) * s.b2 + c
    }

    /// The `d2` measurement pairs read for first-layer bucket `b` in repetition `r`.
    pub fn bucket_pairs(&self, v: &[f64], r: usize, b: usize) -> Vec<(f64, f64)> {
        (0..self.params.shape.d2)
            .map(|j| {
                let p = self.pair(r, j, self.hash.second(r, j, b));
                (v[2 * p], v[2 * p + 1])
            })
            .collect()
    }

    /// `E_i`: every pair sum over the `d1 * d2` second-layer buckets of `i`.
    pub fn estimates(&self, v: &[f64], i: usize) -> Vec<f64> {
        let TwoLayerShape { d1, d2, .. } = self.params.shape;
        let mut out = Vec::with_capacity(d1 * d2);
        for r in 0..d1 {
            let b = self.hash.idx(r, i);
            for j in 0..d2 {
                let p = self.pair(r, j, self.hash.second(r, j, b));
                out.push(v[2 * p] + v[2 * p + 1]);
            }
        }
        out
    }

    /// Lower median of `E_i`.
    pub fn estimate(&self, v: &[f64], i: usize) -> f64 {
        lower_median(self.estimates(v, i))
    }

    /// A lower bound on `||x_{-t}||_1` read off the sketch.
    ///
    /// In each `(r, j)` every coordinate lands in exactly one pair, so the
    /// pair sums outside the `t` largest are bounded by the tail mass.
    pub fn tail_lower_bound(&self, v: &[f64], t: usize) -> f64 {
        let TwoLayerShape { d1, d2, b2, .. } = self.params.shape;
        let per = par::map_range(d1 * d2, |rj| {
            let base = rj * b2;
            let mut sums: Vec<f64> = (0..b2).map(|c| (v[2 * (base + c)] + v[2 * (base + c) + 1]).abs()).collect();
            if t >= sums.len() {
                return 0.0;
            }
            if t > 0 {
                sums.select_nth_unstable_by(t - 1, |a, b| b.total_cmp(a));
            }
            sums[t..].iter().sum::<f64>()
        });
        per.into_iter().fold(0.0, f64::max)
    }
}

impl LinearOperator for WeakMatrix {
    fn n(&self) -> usize {
        self.params.shape.n
    }

    fn m(&self) -> usize {
        self.params.rows()
    }

    fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        let TwoLayerShape { d1, d2, .. } = self.params.shape;
        for r in 0..d1 {
            let b = self.hash.idx(r, i);
            for j in 0..d2 {
                let p = self.pair(r, j, self.hash.second(r, j, b));
                f(2 * p + self.codeword_bit(i, r, j), 1.0);
            }
        }
    }

    fn accumulate_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        let TwoLayerShape { d1, d2, .. } = self.params.shape;
        for r in 0..d1 {
            let b = self.hash.idx(r, i);
            for j in 0..d2 {
                let p = self.pair(r, j, self.hash.second(r, j, b));
                out[2 * p + self.codeword_bit(i, r, j)] += scale;
            }
        }
    }

    // Fills one repetition's d2 blocks of 2 * B2 rows at a time so writes stay local.
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let TwoLayerShape { d1, d2, b2, .. } = self.params.shape;
        let blen = self.params.inner.block_len;
        let live: Vec<(usize, f64)> = x.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect();
        par::for_each_chunk_mut(out, 2 * b2 * d2, |r, rep| {
            let buckets: Vec<usize> = live.iter().map(|&(i, _)| self.hash.idx(r, i)).collect();
            let mut words = Vec::with_capacity(live.len() * blen);
            for &(i, _) in &live {
                let off = (i * d1 + r) * blen;
                words.extend_from_slice(&self.codewords[off..off + blen]);
            }
            for (j, block) in rep.chunks_mut(2 * b2).enumerate() {
                let (byte, shift) = (j / 8, 7 - j % 8);
                for (t, &(_, xi)) in live.iter().enumerate() {
                    let c = self.hash.second(r, j, buckets[t]);
                    let bit = (words[t * blen + byte] >> shift) & 1;
                    block[2 * c + bit as usize] += xi;
                }
            }
        });
    }

    fn descriptor(&self) -> MatrixDescriptor {
        MatrixDescriptor::leaf(
            MatrixKind::TwoLayerWeak,
            self.n(),
            self.m(),
            Some(self.seed),
            json!({
                "flavor": self.params.flavor,
                "shape": self.params.shape,
                "constants": self.params.constants,
            }),
        )
    }
}

/// Lower median: element `(len - 1) / 2` in sorted order; 0 when empty.
pub fn lower_median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// A decoded first-layer bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkNode {
    pub bucket: usize,
    pub rep: usize,
    pub message: BlockMessage,
}

/// Decoded buckets joined by mutual link suggestions.
#[derive(Debug, Clone, Default)]
pub struct ChunkGraph {
    pub nodes: Vec<ChunkNode>,
    pub edges: Vec<(usize, usize)>,
}

impl ChunkGraph {
    /// Node `(b, r)` suggests `(links[l], Gamma_l(r))` for every `l`; an edge
    /// joins two nodes that suggest each other through the same matching.
    pub fn build(nodes: Vec<ChunkNode>, link: &LinkGraph) -> Self {
        let index: HashMap<(usize, usize), usize> =
            nodes.iter().enumerate().map(|(id, n)| ((n.rep, n.bucket), id)).collect();
        let mut edges = Vec::new();
        for (id, node) in nodes.iter().enumerate() {
            for (l, &target) in node.message.links.iter().enumerate() {
                let r2 = link.neighbor(node.rep, l);
                let Some(&other) = index.get(&(r2, target)) else { continue };
                if other > id && nodes[other].message.links.get(l) == Some(&node.bucket) {
                    edges.push((id, other));
                }
            }
        }
        Self { nodes, edges }
    }
}

/// Partition a chunk graph into clusters of at least `floor` nodes.
pub trait Clusterer: Sync {
    fn cluster(&self, graph: &ChunkGraph, floor: usize) -> Vec<Vec<usize>>;
}

/// Connected components of the mutual-suggestion edges.
#[derive(Debug, Clone, Copy, Default)]
pub struct MutualComponents;

impl Clusterer for MutualComponents {
    fn cluster(&self, graph: &ChunkGraph, floor: usize) -> Vec<Vec<usize>> {
        let n = graph.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in &graph.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for x in 0..n {
            let root = find(&mut parent, x);
            groups.entry(root).or_default().push(x);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= floor.max(1)).collect();
        out.sort_by_key(|g| g[0]);
        out
    }
}

/// Cluster with the default clustering and the size floor of `d1`.
pub fn cluster_chunks(graph: &ChunkGraph, d1: usize) -> Vec<Vec<usize>> {
    MutualComponents.cluster(graph, cluster_floor(d1))
}

/// `(1 - 1/4) * d1 / 2`, rounded up.
pub fn cluster_floor(d1: usize) -> usize {
    (3 * d1).div_ceil(8)
}

/// Decoder knobs.
#[derive(Clone, Copy)]
pub struct DecodeOptions<'a> {
    /// Tail scale the thresholds are relative to; estimated from the sketch when absent.
    pub scale: Option<f64>,
    pub clusterer: &'a dyn Clusterer,
}

impl Default for DecodeOptions<'_> {
    fn default() -> Self {
        Self { scale: None, clusterer: &MutualComponents }
    }
}

impl DecodeOptions<'_> {
    pub fn with_scale(scale: f64) -> Self {
        Self { scale: Some(scale), ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeakStats {
    pub scale: f64,
    pub surviving_buckets: usize,
    pub decoded_buckets: usize,
    pub edges: usize,
    pub clusters: usize,
    pub candidate_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakResult {
    /// The `s` largest candidate estimates.
    pub xhat: SparseVector,
    /// Every decoded candidate with its estimate, before selection.
    pub candidates: Vec<(usize, f64)>,
    pub stats: WeakStats,
}

/// Decode one weak layer from its own sketch segment `v`.
pub fn weak_decode(phi: &WeakMatrix, v: &[f64], opts: &DecodeOptions) -> Result<WeakResult> {
    if v.len() != phi.m() {
        return Err(Error::DimensionMismatch { expected: phi.m(), got: v.len() });
    }
    let p = &phi.params;
    let TwoLayerShape { n, b1, d1, d2, .. } = p.shape;
    let scale = match opts.scale {
        Some(s) if s.is_finite() && s >= 0.0 => s,
        Some(s) => return param(format!("scale must be finite and nonnegative, got {s}")),
        None => phi.tail_lower_bound(v, p.flavor.tail_size()),
    };
    let thr = p.flavor.threshold() * scale;
    let mut stats = WeakStats { scale, ..WeakStats::default() };

    // Lower median of |a| + |b| is >= thr (and nonzero) iff at least `need` pairs are.
    let need = d2 - (d2 - 1) / 2;
    let per_rep = par::map_range(d1, |r| {
        let mut survived = 0usize;
        let mut nodes = Vec::new();
        for b in 0..b1 {
            let mut hits = 0;
            for j in 0..d2 {
                let q = phi.pair(r, j, phi.hash.second(r, j, b));
                let mag = v[2 * q].abs() + v[2 * q + 1].abs();
                if mag >= thr && mag > 0.0 {
                    hits += 1;
                }
                if hits + (d2 - 1 - j) < need {
                    break;
                }
            }
            if hits < need {
                continue;
            }
            survived += 1;
            let pairs = phi.bucket_pairs(v, r, b);
            let Some(bits) = coding::decode_bucket_message(&pairs, &p.inner) else { continue };
            let Some(message) = BlockMessage::from_bits(&bits, &p.layout) else { continue };
            if message.links.iter().any(|&l| l >= b1) {
                continue;
            }
            nodes.push(ChunkNode { bucket: b, rep: r, message });
        }
        (survived, nodes)
    });
    let mut nodes = Vec::new();
    for (survived, ns) in per_rep {
        stats.surviving_buckets += survived;
        nodes.extend(ns);
    }
    stats.decoded_buckets = nodes.len();

    let graph = ChunkGraph::build(nodes, &phi.link);
    stats.edges = graph.edges.len();
    let clusters = opts.clusterer.cluster(&graph, cluster_floor(d1));
    stats.clusters = clusters.len();

    let mut found: Vec<usize> = par::map_slice(&clusters, |c| decode_cluster(phi, &graph, c))
        .into_iter()
        .flatten()
        .collect();
    found.sort_unstable();
    found.dedup();
    stats.candidate_evaluations = found.len();

    let candidates: Vec<(usize, f64)> = par::map_slice(&found, |&i| (i, phi.estimate(v, i)));
    let mut ranked: Vec<(usize, f64)> = candidates.iter().copied().filter(|c| c.1 != 0.0).collect();
    ranked.sort_by(|a, b| magnitude_order(*a, *b));
    ranked.truncate(p.flavor.s());
    let xhat = SparseVector::from_pairs(n, p.flavor.s(), &ranked)?;
    Ok(WeakResult { xhat, candidates, stats })
}

/// Outer-decode one cluster into an index, if the cluster names one
/// consistently.
///
/// Repetitions claimed by two nodes are erased. The decoded index must hash
/// to the node's bucket for at least half of the cluster.
fn decode_cluster(phi: &WeakMatrix, graph: &ChunkGraph, cluster: &[usize]) -> Option<usize> {
    let d1 = phi.params.shape.d1;
    let per = phi.outer.per_block;
    let mut owner: Vec<Option<usize>> = vec![None; d1];
    let mut clash = vec![false; d1];
    for &id in cluster {
        let r = graph.nodes[id].rep;
        if owner[r].replace(id).is_some() {
            clash[r] = true;
        }
    }
    let mut received = vec![None; d1 * per];
    for r in 0..d1 {
        if clash[r] {
            continue;
        }
        if let Some(id) = owner[r] {
            for (t, &sym) in graph.nodes[id].message.outer.iter().enumerate() {
                received[r * per + t] = Some(sym);
            }
        }
    }
    let i = phi.outer.dec_index_erasures(&received)?;
    let agree = cluster
        .iter()
        .filter(|&&id| phi.hash.idx(graph.nodes[id].rep, i) == graph.nodes[id].bucket)
        .count();
    (2 * agree >= cluster.len()).then_some(i)
}
