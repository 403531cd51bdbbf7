//! Error-correcting codes for index messages and the per-bit pair embedding.
//!
//! Reed-Solomon codes here are in evaluation form over GF(2^8): a message of
//! `k` symbols is the coefficient list of a polynomial of degree `< k`, and
//! the codeword is its value at the field points `0, 1, ..., len - 1`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::hashgraph::TwoLayerHash;
use crate::sketch::DenseMatrix;

/// Bits are stored one per byte, each 0 or 1.
pub type Bits = Vec<u8>;

mod gf {
    const POLY: u16 = 0x11d;

    const fn tables() -> ([u8; 512], [u8; 256]) {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        let mut i = 0;
        while i < 255 {
            exp[i] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= POLY;
            }
            i += 1;
        }
        while i < 512 {
            exp[i] = exp[i - 255];
            i += 1;
        }
        (exp, log)
    }

    const TABLES: ([u8; 512], [u8; 256]) = tables();
    static EXP: [u8; 512] = TABLES.0;
    static LOG: [u8; 256] = TABLES.1;

    #[inline]
    pub fn mul(a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            0
        } else {
            EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
        }
    }

    #[inline]
    pub fn inv(a: u8) -> u8 {
        debug_assert!(a != 0);
        EXP[255 - LOG[a as usize] as usize]
    }

    /// Horner evaluation of `coeffs` (lowest degree first) at `x`.
    pub fn eval(coeffs: &[u8], x: u8) -> u8 {
        coeffs.iter().rev().fold(0, |acc, &c| mul(acc, x) ^ c)
    }
}

/// Solve `A z = b` over GF(2^8); free variables are set to zero.
fn solve(mut a: Vec<Vec<u8>>, mut b: Vec<u8>, unknowns: usize) -> Option<Vec<u8>> {
    let rows = a.len();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..unknowns {
        let Some(p) = (row..rows).find(|&r| a[r][col] != 0) else { continue };
        a.swap(row, p);
        b.swap(row, p);
        let inv = gf::inv(a[row][col]);
        for c in col..unknowns {
            a[row][c] = gf::mul(a[row][c], inv);
        }
        b[row] = gf::mul(b[row], inv);
        for r in 0..rows {
            if r != row && a[r][col] != 0 {
                let f = a[r][col];
                for c in col..unknowns {
                    let t = gf::mul(f, a[row][c]);
                    a[r][c] ^= t;
                }
                let t = gf::mul(f, b[row]);
                b[r] ^= t;
            }
        }
        pivots.push(col);
        row += 1;
        if row == rows {
            break;
        }
    }
    if b[row..].iter().any(|&v| v != 0) {
        return None;
    }
    let mut z = vec![0u8; unknowns];
    for (r, &col) in pivots.iter().enumerate() {
        z[col] = b[r];
    }
    Some(z)
}

/// Divide `num` by `den` (lowest degree first); `None` unless exact.
fn poly_div_exact(num: &[u8], den: &[u8]) -> Option<Vec<u8>> {
    let dd = den.iter().rposition(|&c| c != 0)?;
    let mut rem = num.to_vec();
    let Some(dn) = rem.iter().rposition(|&c| c != 0) else { return Some(Vec::new()) };
    if dn < dd {
        return None;
    }
    let lead = gf::inv(den[dd]);
    let mut q = vec![0u8; dn - dd + 1];
    for shift in (0..=dn - dd).rev() {
        let c = gf::mul(rem[shift + dd], lead);
        q[shift] = c;
        if c != 0 {
            for (t, &dc) in den[..=dd].iter().enumerate() {
                rem[shift + t] ^= gf::mul(c, dc);
            }
        }
    }
    rem.iter().all(|&v| v == 0).then_some(q)
}

/// Evaluation-form Reed-Solomon code with `k` message and `len` codeword symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReedSolomon {
    k: usize,
    len: usize,
}

impl ReedSolomon {
    pub fn new(k: usize, len: usize) -> Result<Self> {
        if k == 0 || len < k || len > 256 {
            return param(format!("Reed-Solomon needs 1 <= k <= len <= 256, got k = {k}, len = {len}"));
        }
        Ok(Self { k, len })
    }

    pub fn message_len(&self) -> usize {
        self.k
    }

    pub fn block_len(&self) -> usize {
        self.len
    }

    /// Symbol errors always corrected when there are no erasures.
    pub fn correctable(&self) -> usize {
        (self.len - self.k) / 2
    }

    pub fn encode(&self, msg: &[u8]) -> Vec<u8> {
        assert_eq!(msg.len(), self.k, "message length");
        (0..self.len).map(|x| gf::eval(msg, x as u8)).collect()
    }

    pub fn decode(&self, received: &[u8]) -> Option<Vec<u8>> {
        let r: Vec<Option<u8>> = received.iter().map(|&s| Some(s)).collect();
        self.decode_with_erasures(&r)
    }

    /// Decode with `None` marking erased positions. Succeeds whenever
    /// `2 * errors + erasures <= len - k`.
    pub fn decode_with_erasures(&self, received: &[Option<u8>]) -> Option<Vec<u8>> {
        if received.len() != self.len {
            return None;
        }
        let pts: Vec<(u8, u8)> = received
            .iter()
            .enumerate()
            .filter_map(|(x, s)| s.map(|y| (x as u8, y)))
            .collect();
        let k = self.k;
        if pts.len() < k {
            return None;
        }
        if let Some(f) = self.interpolate(&pts[..k]) {
            if pts[k..].iter().all(|&(x, y)| gf::eval(&f, x) == y) {
                return Some(f);
            }
        }
        let e = (pts.len() - k) / 2;
        if e == 0 {
            return None;
        }
        // Berlekamp-Welch: Q(x) = y E(x) with E monic of degree e.
        let nq = e + k;
        let unknowns = nq + e;
        let mut a = Vec::with_capacity(pts.len());
        let mut b = Vec::with_capacity(pts.len());
        for &(x, y) in &pts {
            let mut row = vec![0u8; unknowns];
            let mut p = 1u8;
            for (l, slot) in row.iter_mut().enumerate().take(nq) {
                *slot = p;
                if l + 1 < nq {
                    p = gf::mul(p, x);
                }
            }
            let mut p = 1u8;
            for l in 0..e {
                row[nq + l] = gf::mul(y, p);
                p = gf::mul(p, x);
            }
            a.push(row);
            b.push(gf::mul(y, p));
        }
        let z = solve(a, b, unknowns)?;
        let q = &z[..nq];
        let mut ep = z[nq..].to_vec();
        ep.push(1);
        let mut f = poly_div_exact(q, &ep)?;
        if f.len() > k && f[k..].iter().any(|&c| c != 0) {
            return None;
        }
        f.resize(k, 0);
        let wrong = pts.iter().filter(|&&(x, y)| gf::eval(&f, x) != y).count();
        (wrong <= e).then_some(f)
    }

    /// Coefficients of the unique degree `< k` polynomial through `pts`.
    fn interpolate(&self, pts: &[(u8, u8)]) -> Option<Vec<u8>> {
        let k = pts.len();
        let mut a = Vec::with_capacity(k);
        let mut b = Vec::with_capacity(k);
        for &(x, y) in pts {
            let mut row = vec![0u8; k];
            let mut p = 1u8;
            for slot in row.iter_mut() {
                *slot = p;
                p = gf::mul(p, x);
            }
            a.push(row);
            b.push(y);
        }
        solve(a, b, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    ReedSolomon,
    Repetition,
}

/// A block code over bit strings.
///
/// Reed-Solomon codes pack bits into bytes (alphabet of 8 bits) and correct
/// `theta * block_len` symbol errors. Repetition codes copy each bit
/// `block_len / message_len` times and decode by majority.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub kind: CodeKind,
    /// Message length in bits.
    pub message_bits: usize,
    /// Message length in symbols.
    pub message_len: usize,
    /// Codeword length in symbols.
    pub block_len: usize,
    pub alphabet_bits: usize,
    /// Correctable fraction of symbol errors.
    pub theta: f64,
}

impl CodeSpec {
    /// Reed-Solomon over bytes for `message_bits` bits with at least
    /// `min_block_bits` codeword bits and rate at most one half.
    pub fn reed_solomon(message_bits: usize, min_block_bits: usize) -> Result<Self> {
        if message_bits == 0 {
            return param("code needs a nonempty message");
        }
        let k = message_bits.div_ceil(8);
        let len = (2 * k).max(min_block_bits.div_ceil(8));
        let rs = ReedSolomon::new(k, len)?;
        Ok(Self {
            kind: CodeKind::ReedSolomon,
            message_bits,
            message_len: k,
            block_len: len,
            alphabet_bits: 8,
            theta: rs.correctable() as f64 / len as f64,
        })
    }

    /// Each bit repeated `copies` times.
    pub fn repetition(message_bits: usize, copies: usize) -> Result<Self> {
        if message_bits == 0 || copies == 0 {
            return param("repetition code needs message_bits >= 1 and copies >= 1");
        }
        let block_len = message_bits * copies;
        Ok(Self {
            kind: CodeKind::Repetition,
            message_bits,
            message_len: message_bits,
            block_len,
            alphabet_bits: 1,
            theta: ((copies - 1) / 2) as f64 / block_len as f64,
        })
    }

    /// Codeword length in bits.
    pub fn block_bits(&self) -> usize {
        self.block_len * self.alphabet_bits
    }

    pub fn correctable_symbols(&self) -> usize {
        (self.theta * self.block_len as f64 + 1e-9).floor() as usize
    }

    pub fn encode(&self, bits: &[u8]) -> Bits {
        assert_eq!(bits.len(), self.message_bits, "message bits");
        match self.kind {
            CodeKind::ReedSolomon => {
                let rs = ReedSolomon { k: self.message_len, len: self.block_len };
                bytes_to_bits(&rs.encode(&bits_to_bytes(bits, self.message_len)), self.block_bits())
            }
            CodeKind::Repetition => {
                let copies = self.block_len / self.message_bits;
                (0..copies).flat_map(|_| bits.iter().copied()).collect()
            }
        }
    }

    pub fn decode(&self, bits: &[u8]) -> Option<Bits> {
        if bits.len() != self.block_bits() {
            return None;
        }
        match self.kind {
            CodeKind::ReedSolomon => {
                let rs = ReedSolomon { k: self.message_len, len: self.block_len };
                let msg = rs.decode(&bits_to_bytes(bits, self.block_len))?;
                let out = bytes_to_bits(&msg, self.message_len * 8);
                // Padding bits beyond the message must decode to zero.
                if out[self.message_bits..].iter().any(|&b| b != 0) {
                    return None;
                }
                Some(out[..self.message_bits].to_vec())
            }
            CodeKind::Repetition => {
                let copies = self.block_len / self.message_bits;
                Some(
                    (0..self.message_bits)
                        .map(|j| {
                            let ones = (0..copies).filter(|c| bits[c * self.message_bits + j] == 1).count();
                            u8::from(2 * ones > copies)
                        })
                        .collect(),
                )
            }
        }
    }
}

/// Pack bits MSB-first into `bytes` bytes, zero padded.
pub fn bits_to_bytes(bits: &[u8], bytes: usize) -> Vec<u8> {
    let mut out = vec![0u8; bytes];
    for (p, &b) in bits.iter().enumerate() {
        if b != 0 {
            out[p / 8] |= 0x80 >> (p % 8);
        }
    }
    out
}

/// Unpack the first `nbits` bits MSB-first.
pub fn bytes_to_bits(bytes: &[u8], nbits: usize) -> Bits {
    (0..nbits).map(|p| (bytes[p / 8] >> (7 - p % 8)) & 1).collect()
}

/// `value` as `width` bits, most significant first.
pub fn to_binary(value: usize, width: usize) -> Bits {
    (0..width).rev().map(|b| ((value >> b) & 1) as u8).collect()
}

pub fn from_binary(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Number of bits needed to write values below `n` (at least 1).
pub fn bit_width(n: usize) -> usize {
    (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1) as usize
}

/// Outer code over indices: `i` written in `message_len` bytes, encoded with
/// Reed-Solomon into `d1 * per_block` symbols and cut into `d1` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterCode {
    pub n: usize,
    pub d1: usize,
    pub per_block: usize,
    rs: ReedSolomon,
}

impl OuterCode {
    /// Rate at most 1/4: `per_block = ceil(4 * message_len / d1)`.
    pub fn new(n: usize, d1: usize) -> Result<Self> {
        if n < 2 || d1 == 0 {
            return param(format!("outer code needs n >= 2 and d1 >= 1, got n = {n}, d1 = {d1}"));
        }
        let k = bit_width(n).div_ceil(8);
        let per_block = (4 * k).div_ceil(d1);
        let len = d1 * per_block;
        if len > 256 {
            return param(format!("outer codeword of {len} symbols exceeds 256; reduce d1"));
        }
        Ok(Self { n, d1, per_block, rs: ReedSolomon::new(k, len)? })
    }

    pub fn code(&self) -> ReedSolomon {
        self.rs
    }

    pub fn spec(&self) -> CodeSpec {
        CodeSpec {
            kind: CodeKind::ReedSolomon,
            message_bits: bit_width(self.n),
            message_len: self.rs.k,
            block_len: self.rs.len,
            alphabet_bits: 8,
            theta: self.rs.correctable() as f64 / self.rs.len as f64,
        }
    }

    /// `enc(i)` as symbols.
    pub fn enc_index(&self, i: usize) -> Vec<u8> {
        let k = self.rs.k;
        let msg: Vec<u8> = (0..k).map(|b| (i >> (8 * (k - 1 - b))) as u8).collect();
        self.rs.encode(&msg)
    }

    /// Block `r` of `enc(i)`.
    pub fn block(&self, i: usize, r: usize) -> Vec<u8> {
        self.enc_index(i)[r * self.per_block..(r + 1) * self.per_block].to_vec()
    }

    pub fn dec_index(&self, received: &[u8]) -> Option<usize> {
        let r: Vec<Option<u8>> = received.iter().map(|&s| Some(s)).collect();
        self.dec_index_erasures(&r)
    }

    /// Decode with erased symbols; rejects messages that name no index below `n`.
    pub fn dec_index_erasures(&self, received: &[Option<u8>]) -> Option<usize> {
        let msg = self.rs.decode_with_erasures(received)?;
        let i = msg.iter().fold(0usize, |acc, &b| (acc << 8) | b as usize);
        (i < self.n).then_some(i)
    }
}

/// Union of `delta` random perfect matchings on `d1` vertices (`d1` even).
///
/// `neighbor(r, l)` is the partner of `r` in matching `l`, so following the
/// same matching twice returns to `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkGraph {
    d1: usize,
    delta: usize,
    partner: Vec<u32>,
}

impl LinkGraph {
    pub fn new(d1: usize, delta: usize, seed: u64) -> Result<Self> {
        if d1 < 2 || !d1.is_multiple_of(2) {
            return param(format!("link graph needs an even d1 >= 2, got {d1}"));
        }
        if delta == 0 {
            return param("link graph needs delta >= 1");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Resample until connected; a single matching is connected only when d1 = 2.
        for _ in 0..1000 {
            let mut partner = vec![0u32; d1 * delta];
            for l in 0..delta {
                let mut perm: Vec<usize> = (0..d1).collect();
                perm.shuffle(&mut rng);
                for pair in perm.chunks(2) {
                    partner[pair[0] * delta + l] = pair[1] as u32;
                    partner[pair[1] * delta + l] = pair[0] as u32;
                }
            }
            let g = Self { d1, delta, partner };
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::Construction(format!("no connected link graph with d1 = {d1}, delta = {delta}")))
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.d1];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(r) = stack.pop() {
            for l in 0..self.delta {
                let q = self.neighbor(r, l);
                if !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// `Gamma_l(r)`.
    #[inline]
    pub fn neighbor(&self, r: usize, l: usize) -> usize {
        self.partner[r * self.delta + l] as usize
    }

    pub fn neighbors(&self, r: usize) -> Vec<usize> {
        (0..self.delta).map(|l| self.neighbor(r, l)).collect()
    }
}

/// Field widths of a block message: `per_block` outer symbols followed by
/// `delta` first-layer bucket indices of `link_bits` bits each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub per_block: usize,
    pub delta: usize,
    pub link_bits: usize,
}

impl BlockLayout {
    pub fn new(per_block: usize, delta: usize, b1: usize) -> Self {
        Self { per_block, delta, link_bits: bit_width(b1) }
    }

    pub fn bits(&self) -> usize {
        8 * self.per_block + self.delta * self.link_bits
    }
}

/// `m_{i,r}` followed by `idx(Gamma_l(r), i)` for each link `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMessage {
    pub outer: Vec<u8>,
    pub links: Vec<usize>,
}

impl BlockMessage {
    pub fn to_bits(&self, layout: &BlockLayout) -> Bits {
        let mut bits = bytes_to_bits(&self.outer, 8 * layout.per_block);
        for &l in &self.links {
            bits.extend(to_binary(l, layout.link_bits));
        }
        bits
    }

    pub fn from_bits(bits: &[u8], layout: &BlockLayout) -> Option<Self> {
        if bits.len() != layout.bits() {
            return None;
        }
        let head = 8 * layout.per_block;
        let outer = bits_to_bytes(&bits[..head], layout.per_block);
        let links = bits[head..].chunks(layout.link_bits).map(from_binary).collect();
        Some(Self { outer, links })
    }

    /// Assemble the block for index `i` in repetition `r`.
    pub fn assemble(i: usize, r: usize, hash: &TwoLayerHash, link: &LinkGraph, outer: &OuterCode) -> Self {
        Self {
            outer: outer.block(i, r),
            links: (0..link.delta()).map(|l| hash.idx(link.neighbor(r, l), i)).collect(),
        }
    }
}

/// The inner codeword bits carried by index `i` in repetition `r`.
///
/// Fails when the codeword does not fit in `d2` bits.
pub fn build_block_message(
    i: usize,
    r: usize,
    hash: &TwoLayerHash,
    link: &LinkGraph,
    outer: &OuterCode,
    inner: &CodeSpec,
) -> Result<Bits> {
    let d2 = hash.shape().d2;
    if r >= hash.shape().d1 {
        return param(format!("repetition {r} out of range {}", hash.shape().d1));
    }
    if inner.block_bits() > d2 {
        return Err(Error::Construction(format!(
            "inner codeword of {} bits does not fit d2 = {d2}",
            inner.block_bits()
        )));
    }
    let layout = BlockLayout::new(outer.per_block, link.delta(), hash.shape().b1);
    let bits = BlockMessage::assemble(i, r, hash, link, outer).to_bits(&layout);
    if bits.len() != inner.message_bits {
        return Err(Error::Construction(format!(
            "block message has {} bits, inner code expects {}",
            bits.len(),
            inner.message_bits
        )));
    }
    Ok(inner.encode(&bits))
}

/// Expand entry `a` into one pair per bit: `(a, 0)` for 0 and `(0, a)` for 1.
pub fn embed_bits(a: f64, bits: &[u8]) -> Vec<f64> {
    bits.iter()
        .flat_map(|&b| if b == 0 { [a, 0.0] } else { [0.0, a] })
        .collect()
}

/// 1 when `|a| < |b|`, else 0 (ties give 0).
#[inline]
pub fn extract_bit(a: f64, b: f64) -> u8 {
    u8::from(a.abs() < b.abs())
}

/// Read one bit per pair, then inner-decode. `None` when decoding fails.
pub fn decode_bucket_message(pairs: &[(f64, f64)], inner: &CodeSpec) -> Option<Bits> {
    if pairs.len() != inner.block_bits() {
        return None;
    }
    let bits: Bits = pairs.iter().map(|&(a, b)| extract_bit(a, b)).collect();
    inner.decode(&bits)
}

/// Bucket-message matrix without second-layer hashing: bucket `t` owns rows
/// `2 * bits * t ..`, and column `i` in bucket `t` places bit `j` of its
/// message in the pair starting at row `2 * bits * t + 2 * j`.
pub fn bucket_message_matrix(n: usize, buckets: &[Vec<usize>], messages: &[Bits]) -> Result<DenseMatrix> {
    if messages.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: messages.len() });
    }
    let bits = messages.first().map_or(0, |m| m.len());
    if messages.iter().any(|m| m.len() != bits) {
        return param("messages must share one length");
    }
    let mut owner = vec![None; n];
    for (t, b) in buckets.iter().enumerate() {
        for &i in b {
            if i >= n || owner[i].replace(t).is_some() {
                return param(format!("buckets must partition [0, {n}); bad index {i}"));
            }
        }
    }
    if owner.iter().any(Option::is_none) {
        return param("buckets must cover every index");
    }
    let m = 2 * bits * buckets.len();
    let mut rows = vec![vec![0.0; n]; m];
    for i in 0..n {
        let t = owner[i].expect("checked above");
        let col = embed_bits(1.0, &messages[i]);
        for (off, v) in col.iter().enumerate() {
            rows[2 * bits * t + off][i] = *v;
        }
    }
    DenseMatrix::from_rows(&rows)
}
