//! Strict-turnstile recovery with seedless Reed-Solomon matrices.
//!
//! [`RsMatrix`] puts column `i` at rows `alpha * q + C_i(alpha)` for every
//! evaluation point `alpha`, where `C_i` is the polynomial whose base-`q`
//! digits spell `i`. Two columns share at most `message_len - 1` rows.
//!
//! [`SplitTree`] stacks one such matrix per node of a bit-splitting tree:
//! the children of a node see the signal summed over the high and the low
//! half of the index bits. Heavy coordinates of the parent are found by
//! pairing the heavy coordinates of both children, which only works because
//! projecting a nonnegative signal cannot cancel mass.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::descriptor::{MatrixDescriptor, MatrixKind};
use crate::error::{param, Error, Result};
use crate::par;
use crate::signal::{magnitude_order, SparseVector};
use crate::sketch::LinearOperator;
use crate::weak::lower_median;

/// Alphabet size is the smallest prime `>= C6 * k * ceil(log n / (log log n + log k))`.
pub const C6: usize = 4;
/// The tree's matrices are built for sparsity `BETA * k`.
pub const BETA: usize = 100;
/// Per-round contraction `1/2 + 2/BETA` of the residual on the candidate set.
pub const GAMMA: f64 = 0.5 + 2.0 / BETA as f64;
/// A node whose universe is at most `LEAF_FACTOR * k^2` enumerates it.
pub const LEAF_FACTOR: usize = 25;

fn is_prime(p: usize) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn next_prime(mut p: usize) -> usize {
    while !is_prime(p) {
        p += 1;
    }
    p
}

/// Shape of a Reed-Solomon matrix; fully determined by `(n, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsParams {
    pub n: usize,
    pub k: usize,
    /// Prime alphabet size.
    pub q: usize,
    /// Number of evaluation points; equal to `q`.
    pub b: usize,
    /// Base-`q` digits per index, `ceil(log_q n)`.
    pub message_len: usize,
}

impl RsParams {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n < 2 || k == 0 {
            return param(format!("reed-solomon matrix needs n >= 2 and k >= 1, got n = {n}, k = {k}"));
        }
        let log_n = (n as f64).log2();
        let denom = (log_n.log2() + (k as f64).log2()).max(1.0);
        let ratio = (log_n / denom).ceil().max(1.0) as usize;
        let q = next_prime(C6 * k * ratio);
        let mut message_len = 1;
        let mut reach = q as u128;
        while reach < n as u128 {
            reach *= q as u128;
            message_len += 1;
        }
        Ok(Self { n, k, q, b: q, message_len })
    }

    /// `q * b`.
    pub fn rows(&self) -> usize {
        self.q * self.b
    }
}

/// The Reed-Solomon code matrix. Every entry is computed on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsMatrix {
    params: RsParams,
}

pub fn build_rs_matrix(n: usize, k: usize) -> Result<RsMatrix> {
    Ok(RsMatrix { params: RsParams::new(n, k)? })
}

impl RsMatrix {
    pub fn params(&self) -> RsParams {
        self.params
    }

    /// Base-`q` digits of `i`, least significant first.
    fn digits(&self, mut i: usize) -> Vec<u64> {
        let q = self.params.q;
        (0..self.params.message_len)
            .map(|_| {
                let d = (i % q) as u64;
                i /= q;
                d
            })
            .collect()
    }

    /// `C_i(alpha)` for every `alpha` in `[b]`.
    pub fn codeword(&self, i: usize) -> Vec<usize> {
        let q = self.params.q as u64;
        let digits = self.digits(i);
        (0..self.params.b as u64)
            .map(|alpha| digits.iter().rev().fold(0u64, |acc, &d| (acc * alpha + d) % q) as usize)
            .collect()
    }

    /// Row of column `i` in block `alpha`.
    pub fn row(&self, i: usize, alpha: usize) -> usize {
        let q = self.params.q as u64;
        let a = alpha as u64;
        let c = self.digits(i).iter().rev().fold(0u64, |acc, &d| (acc * a + d) % q);
        alpha * self.params.q + c as usize
    }

    /// Whether entry `(row, i)` is 1.
    pub fn entry(&self, row: usize, i: usize) -> bool {
        row < self.params.rows() && self.row(i, row / self.params.q) == row
    }

    fn rows_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let q = self.params.q;
        self.codeword(i).into_iter().enumerate().map(move |(alpha, c)| alpha * q + c)
    }

    /// The `b` counters column `i` is added to.
    pub fn counters(&self, v: &[f64], i: usize) -> Vec<f64> {
        self.rows_of(i).map(|r| v[r]).collect()
    }
}

impl LinearOperator for RsMatrix {
    fn n(&self) -> usize {
        self.params.n
    }

    fn m(&self) -> usize {
        self.params.rows()
    }

    fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        for r in self.rows_of(i) {
            f(r, 1.0);
        }
    }

    fn accumulate_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        for r in self.rows_of(i) {
            out[r] += scale;
        }
    }

    fn descriptor(&self) -> MatrixDescriptor {
        MatrixDescriptor::leaf(MatrixKind::RsCode, self.n(), self.m(), None, json!(self.params))
    }
}

/// Lower median of the counters of `i`.
pub fn rs_point_query(m: &RsMatrix, v: &[f64], i: usize) -> Result<f64> {
    if i >= m.n() {
        return Err(Error::IndexOutOfRange { index: i as u64, n: m.n() });
    }
    if v.len() != m.m() {
        return Err(Error::DimensionMismatch { expected: m.m(), got: v.len() });
    }
    Ok(lower_median(m.counters(v, i)))
}

/// Estimate every index of `s` by its median counter and keep the `5k` largest.
pub fn reduce_noise(m: &RsMatrix, u: &[f64], s: &[usize], k: usize) -> Result<SparseVector> {
    if u.len() != m.m() {
        return Err(Error::DimensionMismatch { expected: m.m(), got: u.len() });
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= m.n()) {
        return Err(Error::IndexOutOfRange { index: bad as u64, n: m.n() });
    }
    let mut est: Vec<(usize, f64)> = par::map_slice(s, |&i| (i, lower_median(m.counters(u, i))));
    est.retain(|e| e.1 != 0.0);
    est.sort_by(|a, b| magnitude_order(*a, *b));
    est.truncate(5 * k);
    SparseVector::from_pairs(m.n(), 5 * k, &est)
}

/// `ceil(log2 n / log2(1/GAMMA)) + 2`.
pub fn noise_rounds(n: usize) -> usize {
    ((n.max(2) as f64).log2() / (1.0 / GAMMA).log2()).ceil() as usize + 2
}

/// Output of [`tail_point_query`].
#[derive(Debug, Clone, PartialEq)]
pub struct TailQuery {
    pub xhat: SparseVector,
    /// Median evaluations performed, `|S|` per round.
    pub evaluations: usize,
}

/// Repeat [`reduce_noise`] on the residual sketch for `noise_rounds(n) + 1`
/// rounds and sum the outputs. Requires `S` to contain `H(x, k, 1)`.
pub fn tail_point_query(m: &RsMatrix, v: &[f64], s: &[usize], k: usize) -> Result<TailQuery> {
    if v.len() != m.m() {
        return Err(Error::DimensionMismatch { expected: m.m(), got: v.len() });
    }
    let rounds = noise_rounds(m.n()) + 1;
    let mut residual = v.to_vec();
    let mut xhat = SparseVector::new(m.n(), s.len());
    let mut evaluations = 0;
    for _ in 0..rounds {
        let step = reduce_noise(m, &residual, s, k)?;
        evaluations += s.len();
        if step.is_empty() {
            break;
        }
        for (i, x) in step.iter() {
            m.accumulate_column(i, -x, &mut residual);
        }
        xhat = xhat.plus(&step).with_bound(s.len());
    }
    Ok(TailQuery { xhat, evaluations })
}

/// One node of the split tree: a universe of `2^bits` indices.
#[derive(Debug, Clone)]
struct Node {
    bits: u32,
    level: usize,
    matrix: RsMatrix,
    offset: usize,
    /// High-half and low-half children.
    children: Option<(usize, usize)>,
}

impl Node {
    /// Bits kept by the high-half child; the low half keeps the rest.
    fn high_bits(&self) -> u32 {
        self.bits.div_ceil(2)
    }

    fn low_bits(&self) -> u32 {
        self.bits - self.high_bits()
    }

    fn first(&self, i: usize) -> usize {
        i >> self.low_bits()
    }

    fn sec(&self, i: usize) -> usize {
        i & ((1usize << self.low_bits()) - 1)
    }

    fn join(&self, a: usize, b: usize) -> usize {
        (a << self.low_bits()) | b
    }
}

/// Per-level summary of the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub nodes: usize,
    /// Row count summed over the level's nodes.
    pub rows: usize,
}

/// Recursive bit-splitting of `[n]` (padded to a power of two) with one
/// Reed-Solomon matrix per node, built for sparsity `BETA * k`.
pub struct SplitTree {
    n: usize,
    k: usize,
    nodes: Vec<Node>,
    m: usize,
}

pub fn build_split_tree(n: usize, k: usize) -> Result<SplitTree> {
    if n < 2 || k == 0 {
        return param(format!("strict scheme needs n >= 2 and k >= 1, got n = {n}, k = {k}"));
    }
    let bits = n.next_power_of_two().trailing_zeros();
    let leaf = LEAF_FACTOR.saturating_mul(k).saturating_mul(k);
    let mut tree = SplitTree { n, k, nodes: Vec::new(), m: 0 };
    tree.grow(bits, 0, leaf)?;
    Ok(tree)
}

impl SplitTree {
    fn grow(&mut self, bits: u32, level: usize, leaf: usize) -> Result<usize> {
        let matrix = build_rs_matrix(1usize << bits, BETA * self.k)?;
        let id = self.nodes.len();
        let offset = self.m;
        self.m += matrix.m();
        self.nodes.push(Node { bits, level, matrix, offset, children: None });
        if (1usize << bits) > leaf && bits >= 2 {
            let high = bits.div_ceil(2);
            let a = self.grow(high, level + 1, leaf)?;
            let b = self.grow(bits - high, level + 1, leaf)?;
            self.nodes[id].children = Some((a, b));
        }
        Ok(id)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Universe size after padding to a power of two.
    pub fn padded_n(&self) -> usize {
        1usize << self.nodes[0].bits
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn levels(&self) -> Vec<Level> {
        let depth = self.nodes.iter().map(|n| n.level).max().unwrap_or(0);
        let mut out = vec![Level { nodes: 0, rows: 0 }; depth + 1];
        for node in &self.nodes {
            out[node.level].nodes += 1;
            out[node.level].rows += node.matrix.m();
        }
        out
    }

    /// The root's matrix.
    pub fn root(&self) -> &RsMatrix {
        &self.nodes[0].matrix
    }

    fn visit(&self, id: usize, i: usize, f: &mut dyn FnMut(usize, f64)) {
        let node = &self.nodes[id];
        let off = node.offset;
        node.matrix.for_each_in_column(i, &mut |r, c| f(off + r, c));
        if let Some((a, b)) = node.children {
            self.visit(a, node.first(i), f);
            self.visit(b, node.sec(i), f);
        }
    }

    fn accumulate(&self, id: usize, i: usize, scale: f64, out: &mut [f64]) {
        let node = &self.nodes[id];
        let m = node.matrix.m();
        node.matrix.accumulate_column(i, scale, &mut out[node.offset..node.offset + m]);
        if let Some((a, b)) = node.children {
            self.accumulate(a, node.first(i), scale, out);
            self.accumulate(b, node.sec(i), scale, out);
        }
    }
}

impl LinearOperator for SplitTree {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.m
    }

    fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        self.visit(0, i, f)
    }

    fn accumulate_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        self.accumulate(0, i, scale, out)
    }

    fn descriptor(&self) -> MatrixDescriptor {
        let children = self.nodes.iter().map(|n| n.matrix.descriptor()).collect();
        let mut d = MatrixDescriptor::stacked(
            self.n,
            json!({
                "scheme": "strict",
                "k": self.k,
                "beta": BETA,
                "padded_n": self.padded_n(),
                "levels": self.levels(),
            }),
            children,
        );
        d.n = self.n;
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrictResult {
    /// At most `5k` entries.
    pub xhat: SparseVector,
    /// Median evaluations over all nodes and rounds.
    pub candidate_evaluations: usize,
}

/// Decode every node bottom-up: leaves enumerate their universe, inner nodes
/// query the product of their children's supports.
///
/// Fails with a strict-turnstile violation if any counter is negative.
pub fn recursive_decode(tree: &SplitTree, v: &[f64]) -> Result<StrictResult> {
    if v.len() != tree.m {
        return Err(Error::DimensionMismatch { expected: tree.m, got: v.len() });
    }
    let (padded, evals) = decode_node(tree, 0, v)?;
    let pairs: Vec<(usize, f64)> = padded.iter().filter(|&(i, _)| i < tree.n).collect();
    let xhat = SparseVector::from_pairs(tree.n, 5 * tree.k, &pairs)?;
    Ok(StrictResult { xhat, candidate_evaluations: evals })
}

fn decode_node(tree: &SplitTree, id: usize, v: &[f64]) -> Result<(SparseVector, usize)> {
    let node = &tree.nodes[id];
    let seg = &v[node.offset..node.offset + node.matrix.m()];
    check_nonnegative(node, seg)?;
    let (candidates, below) = match node.children {
        None => ((0..1usize << node.bits).collect::<Vec<_>>(), 0),
        Some((a, b)) => {
            let (ra, rb) = par::join(|| decode_node(tree, a, v), || decode_node(tree, b, v));
            let ((high, ea), (low, eb)) = (ra?, rb?);
            let mut s = Vec::with_capacity(high.len() * low.len());
            for hi in high.indices() {
                for lo in low.indices() {
                    s.push(node.join(hi, lo));
                }
            }
            (s, ea + eb)
        }
    };
    let q = tail_point_query(&node.matrix, seg, &candidates, tree.k)?;
    Ok((q.xhat.truncate_top(5 * tree.k), below + q.evaluations))
}

/// Every counter of a nonnegative signal is nonnegative. Block 0 holds one
/// copy of `||x||_1`, which sets the rounding tolerance.
fn check_nonnegative(node: &Node, seg: &[f64]) -> Result<()> {
    let q = node.matrix.params().q;
    let mass: f64 = seg[..q].iter().map(|c| c.abs()).sum();
    let tol = 1e-9 * mass;
    if let Some((row, c)) = seg.iter().enumerate().find(|&(_, &c)| c < -tol) {
        return Err(Error::StrictViolation(format!(
            "counter {row} of the level-{} node is {c}, below zero",
            node.level
        )));
    }
    Ok(())
}
