//! The l-infinity/l1 schemes.
//!
//! [`LinfScheme`] runs a fixed schedule of weak layers whose sparsity roughly
//! square-roots from step to step, closing with one layer at `s = 4`,
//! `w = 1/5`. [`CombinedScheme`] stacks an l1 scheme at sparsity `k^2`, an
//! l-infinity scheme at `6k` and an incoherent matrix for point queries,
//! which moves the error bound from the top-`k` tail to the top-`k^2` tail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::descriptor::{MatrixDescriptor, MatrixKind};
use crate::error::{param, Error, Result};
use crate::hashgraph::derive_seed;
use crate::l1::{build_l1_scheme_with, l1_decode, L1Result, L1Scheme};
use crate::par;
use crate::signal::{magnitude_order, SparseVector};
use crate::sketch::{LinearOperator, Stack};
use crate::weak::{build_weak_matrix_with, weak_decode, Constants, DecodeOptions, Flavor, WeakMatrix, WeakStats};

/// One weak-layer call of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Real-valued sparsity; the layer is built with `ceil(s)`.
    pub s: f64,
    pub w: f64,
}

impl Step {
    pub fn sparsity(&self) -> usize {
        self.s.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub k: f64,
    /// Last step index of the first phase; -1 when that phase is empty.
    pub i_star: i64,
    pub i_plus: usize,
    pub steps: Vec<Step>,
}

/// The precomputed step table; a function of `k` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub k: usize,
    pub rounds: Vec<Round>,
    pub last: Step,
}

impl Schedule {
    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        self.rounds.iter().flat_map(|r| r.steps.iter().copied()).chain(std::iter::once(self.last))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("schedule serialization is infallible")
    }
}

/// Rounds run while `k_r > 4`. Phase one takes `s = (i+1)^2 k_r^(2^-i)`,
/// `w = (i+1)^2` while `k_r^(2^-i) >= max((i+1)^2, 4 (1 + 1/(i+1))^4)`;
/// phase two keeps square-rooting the last phase-one sparsity with `w = 1`
/// while `s >= max(4, log2 log2 k_r)`. The first sparsity that fails is `k_{r+1}`.
pub fn build_schedule(k: usize) -> Result<Schedule> {
    if k == 0 {
        return param("schedule needs k >= 1");
    }
    let mut rounds = Vec::new();
    let mut kr = k as f64;
    while kr > 4.0 {
        let mut steps = Vec::new();
        let mut i = 0i64;
        loop {
            let root = kr.powf(0.5f64.powi(i as i32));
            let i1 = (i + 1) as f64;
            if root < (i1 * i1).max(4.0 * (1.0 + 1.0 / i1).powi(4)) {
                break;
            }
            steps.push(Step { s: i1 * i1 * root, w: i1 * i1 });
            i += 1;
        }
        let i_star = i - 1;
        // An empty first phase leaves nothing to square-root but k_r itself.
        let base = steps.last().map_or(kr, |st| st.s);
        let floor = 4f64.max(kr.log2().log2());
        let mut s = base;
        loop {
            if s < floor {
                break;
            }
            steps.push(Step { s, w: 1.0 });
            i += 1;
            s = base.powf(0.5f64.powi((i - i_star - 1) as i32));
        }
        let i_plus = (i - i_star - 1) as usize;
        rounds.push(Round { k: kr, i_star, i_plus, steps });
        kr = s;
    }
    Ok(Schedule { k, rounds, last: Step { s: 4.0, w: 0.2 } })
}

pub struct LinfScheme {
    k: usize,
    seed: u64,
    schedule: Schedule,
    stack: Stack<WeakMatrix>,
}

pub fn build_linf_scheme(n: usize, k: usize, seed: u64) -> Result<LinfScheme> {
    build_linf_scheme_with(n, k, seed, Constants::default())
}

pub fn build_linf_scheme_with(n: usize, k: usize, seed: u64, constants: Constants) -> Result<LinfScheme> {
    if k == 0 || (k as f64) > (n as f64).sqrt() {
        return param(format!("linf scheme needs 1 <= k <= sqrt(n), got k = {k}, n = {n}"));
    }
    let schedule = build_schedule(k)?;
    let parts = schedule
        .steps()
        .enumerate()
        .map(|(t, st)| {
            let flavor = Flavor::Linf { k, s: st.sparsity(), w: st.w };
            build_weak_matrix_with(flavor, n, derive_seed(seed, 50, t as u64), constants)
        })
        .collect::<Result<Vec<_>>>()?;
    let stack = Stack::new(n, parts)?;
    Ok(LinfScheme { k, seed, schedule, stack })
}

impl LinfScheme {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn stack(&self) -> &Stack<WeakMatrix> {
        &self.stack
    }

    pub fn support_bound(&self) -> usize {
        self.schedule.steps().map(|s| s.sparsity()).sum()
    }
}

impl LinearOperator for LinfScheme {
    fn n(&self) -> usize {
        self.stack.n()
    }

    fn m(&self) -> usize {
        self.stack.m()
    }

    fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        self.stack.for_each_in_column(i, f)
    }

    fn accumulate_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        self.stack.accumulate_column(i, scale, out)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.stack.apply_into(x, out)
    }

    fn descriptor(&self) -> MatrixDescriptor {
        MatrixDescriptor::stacked(
            self.n(),
            json!({ "scheme": "linf", "k": self.k, "seed": self.seed, "schedule": self.schedule }),
            self.stack.child_descriptors(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinfResult {
    pub xhat: SparseVector,
    pub steps: Vec<WeakStats>,
    pub scale: f64,
}

impl LinfResult {
    pub fn candidate_evaluations(&self) -> usize {
        self.steps.iter().map(|s| s.candidate_evaluations).sum()
    }
}

/// Run every scheduled step against the residual sketch and sum the outputs.
///
/// The tail scale is read from the first layer with `t = k` unless given.
pub fn linf_decode(scheme: &LinfScheme, v: &[f64], scale: Option<f64>) -> Result<LinfResult> {
    let stack = &scheme.stack;
    if v.len() != stack.m() {
        return Err(Error::DimensionMismatch { expected: stack.m(), got: v.len() });
    }
    let mut residual = v.to_vec();
    let scale = match scale {
        Some(s) => s,
        None => stack.parts()[0].tail_lower_bound(&residual[stack.range(0)], scheme.k),
    };
    let mut xhat = SparseVector::new(stack.n(), scheme.support_bound());
    let mut steps = Vec::with_capacity(stack.len());
    for (t, phi) in stack.parts().iter().enumerate() {
        let res = weak_decode(phi, &residual[stack.range(t)], &DecodeOptions::with_scale(scale))?;
        stack.subtract_from(t + 1, &res.xhat, &mut residual);
        xhat = xhat.plus(&res.xhat).with_bound(scheme.support_bound());
        steps.push(res.stats);
    }
    Ok(LinfResult { xhat, steps, scale })
}

/// Rows per `k^2 ln n` of the incoherent matrix.
pub const INCOHERENT_C: f64 = 6.0;

/// Seeded random-sign matrix with unit-norm columns, `ceil(6 k^2 ln n)` rows.
///
/// Column signs are stored packed, one bit per entry.
pub struct IncoherentMatrix {
    n: usize,
    k: usize,
    m: usize,
    seed: u64,
    words: usize,
    signs: Vec<u64>,
    unit: f64,
}

pub fn build_incoherent(n: usize, k: usize, seed: u64) -> Result<IncoherentMatrix> {
    if n < 2 || k == 0 {
        return param(format!("incoherent matrix needs n >= 2 and k >= 1, got n = {n}, k = {k}"));
    }
    let m = (INCOHERENT_C * (k * k) as f64 * (n as f64).ln()).ceil() as usize;
    let words = m.div_ceil(64);
    let mut signs = vec![0u64; n * words];
    par::for_each_chunk_mut(&mut signs, words, |i, col| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 60, i as u64));
        for w in col.iter_mut() {
            *w = rng.gen();
        }
        if !m.is_multiple_of(64) {
            col[words - 1] &= (1u64 << (m % 64)) - 1;
        }
    });
    Ok(IncoherentMatrix { n, k, m, seed, words, signs, unit: 1.0 / (m as f64).sqrt() })
}

impl IncoherentMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    fn column(&self, i: usize) -> &[u64] {
        &self.signs[i * self.words..(i + 1) * self.words]
    }

    /// `<c_i, y>`.
    pub fn dot(&self, i: usize, y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, &bits) in self.column(i).iter().enumerate() {
            let base = w * 64;
            let top = (self.m - base).min(64);
            for (b, &yv) in y[base..base + top].iter().enumerate() {
                if bits >> b & 1 == 1 {
                    acc -= yv;
                } else {
                    acc += yv;
                }
            }
        }
        acc * self.unit
    }

    /// `max_{i != j} |<c_i, c_j>|` over all pairs.
    pub fn coherence(&self) -> f64 {
        let worst = par::map_range(self.n, |i| {
            let a = self.column(i);
            let mut worst = 0i64;
            for j in i + 1..self.n {
                let diff: i64 = a.iter().zip(self.column(j)).map(|(x, y)| (x ^ y).count_ones() as i64).sum();
                worst = worst.max((self.m as i64 - 2 * diff).abs());
            }
            worst
        });
        worst.into_iter().max().unwrap_or(0) as f64 / self.m as f64
    }
}

impl LinearOperator for IncoherentMatrix {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.m
    }

    fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        let col = self.column(i);
        for r in 0..self.m {
            let neg = col[r / 64] >> (r % 64) & 1 == 1;
            f(r, if neg { -self.unit } else { self.unit });
        }
    }

    fn accumulate_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        let pos = scale * self.unit;
        for (w, &bits) in self.column(i).iter().enumerate() {
            let base = w * 64;
            let top = (self.m - base).min(64);
            for (b, o) in out[base..base + top].iter_mut().enumerate() {
                *o += if bits >> b & 1 == 1 { -pos } else { pos };
            }
        }
    }

    fn descriptor(&self) -> MatrixDescriptor {
        MatrixDescriptor::leaf(MatrixKind::Incoherent, self.n, self.m, Some(self.seed), json!({ "k": self.k }))
    }
}

/// Estimate `x_i` from `y = C x` as `<c_i, y>`.
pub fn point_query(c: &IncoherentMatrix, y: &[f64], i: usize) -> Result<f64> {
    if i >= c.n {
        return Err(Error::IndexOutOfRange { index: i as u64, n: c.n });
    }
    if y.len() != c.m {
        return Err(Error::DimensionMismatch { expected: c.m, got: y.len() });
    }
    Ok(c.dot(i, y))
}

/// `A` (l1 at `k^2`, `eps = 1`), `B` (l-infinity at `6k`) and `C`
/// (incoherent at `6k`), stacked in that order.
pub struct CombinedScheme {
    k: usize,
    seed: u64,
    a: L1Scheme,
    b: LinfScheme,
    c: IncoherentMatrix,
}

pub fn build_combined_scheme(n: usize, k: usize, seed: u64) -> Result<CombinedScheme> {
    build_combined_scheme_with(n, k, seed, Constants::default())
}

pub fn build_combined_scheme_with(n: usize, k: usize, seed: u64, constants: Constants) -> Result<CombinedScheme> {
    if k == 0 || ((6 * k) as f64) > (n as f64).sqrt() {
        return param(format!("combined scheme needs 1 <= 6k <= sqrt(n), got k = {k}, n = {n}"));
    }
    let a = build_l1_scheme_with(n, k * k, 1.0, derive_seed(seed, 70, 0), constants)?;
    let b = build_linf_scheme_with(n, 6 * k, derive_seed(seed, 70, 1), constants)?;
    let c = build_incoherent(n, 6 * k, derive_seed(seed, 70, 2))?;
    Ok(CombinedScheme { k, seed, a, b, c })
}

impl CombinedScheme {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l1(&self) -> &L1Scheme {
        &self.a
    }

    pub fn linf(&self) -> &LinfScheme {
        &self.b
    }

    pub fn incoherent(&self) -> &IncoherentMatrix {
        &self.c
    }

    /// Row ranges of `A`, `B` and `C` inside the stacked sketch.
    pub fn ranges(&self) -> [std::ops::Range<usize>; 3] {
        let (ma, mb, mc) = (self.a.m(), self.b.m(), self.c.m());
        [0..ma, ma..ma + mb, ma + mb..ma + mb + mc]
    }
}

impl LinearOperator for CombinedScheme {
    fn n(&self) -> usize {
        self.a.n()
    }

    fn m(&self) -> usize {
        self.a.m() + self.b.m() + self.c.m()
    }

    fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        let [_, rb, rc] = self.ranges();
        self.a.for_each_in_column(i, f);
        self.b.for_each_in_column(i, &mut |r, c| f(rb.start + r, c));
        self.c.for_each_in_column(i, &mut |r, c| f(rc.start + r, c));
    }

    fn accumulate_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        let [ra, rb, rc] = self.ranges();
        self.a.accumulate_column(i, scale, &mut out[ra]);
        self.b.accumulate_column(i, scale, &mut out[rb]);
        self.c.accumulate_column(i, scale, &mut out[rc]);
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let [ra, rb, rc] = self.ranges();
        self.a.apply_into(x, &mut out[ra]);
        self.b.apply_into(x, &mut out[rb]);
        self.c.apply_into(x, &mut out[rc]);
    }

    fn descriptor(&self) -> MatrixDescriptor {
        MatrixDescriptor::stacked(
            self.n(),
            json!({ "scheme": "combined", "k": self.k, "seed": self.seed }),
            vec![self.a.descriptor(), self.b.descriptor(), self.c.descriptor()],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedResult {
    pub xhat: SparseVector,
    pub l1: L1Result,
    pub linf: LinfResult,
    /// `supp(z) ∪ supp(w)`, every index that was point-queried.
    pub queried: Vec<usize>,
}

impl CombinedResult {
    pub fn candidate_evaluations(&self) -> usize {
        self.l1.candidate_evaluations() + self.linf.candidate_evaluations() + self.queried.len()
    }
}

/// Recover `z` from `A`, then `w` from `B (x - z)`, point-query every index
/// of `supp(z) ∪ supp(w)` against `C (x - z')` and keep the top `4k`.
pub fn combined_decode(scheme: &CombinedScheme, v: &[f64]) -> Result<CombinedResult> {
    if v.len() != scheme.m() {
        return Err(Error::DimensionMismatch { expected: scheme.m(), got: v.len() });
    }
    let [ra, rb, rc] = scheme.ranges();
    let l1 = l1_decode(&scheme.a, &v[ra], None)?;
    let z = &l1.xhat;

    let mut vb = v[rb].to_vec();
    for (i, zi) in z.iter() {
        scheme.b.accumulate_column(i, -zi, &mut vb);
    }
    let linf = linf_decode(&scheme.b, &vb, None)?;

    // C (x - z') = C (x - z) + z_i c_i, so the query is <c_i, C (x - z)> + z_i.
    let mut vc = v[rc].to_vec();
    for (i, zi) in z.iter() {
        scheme.c.accumulate_column(i, -zi, &mut vc);
    }
    let mut queried: Vec<usize> = z.indices();
    queried.extend(linf.xhat.indices());
    queried.sort_unstable();
    queried.dedup();
    let mut est: Vec<(usize, f64)> = par::map_slice(&queried, |&i| (i, scheme.c.dot(i, &vc) + z.get(i)));
    est.retain(|e| e.1 != 0.0);
    est.sort_by(|a, b| magnitude_order(*a, *b));
    let keep = 4 * scheme.k;
    est.truncate(keep);
    let xhat = SparseVector::from_pairs(scheme.n(), keep, &est)?;
    Ok(CombinedResult { xhat, l1, linf, queried })
}
