//! Signals, updates and sparse estimates, plus the tail-norm machinery every
//! guarantee in the crate is stated against.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// One turnstile update `x[index] += delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub index: u64,
    pub delta: f64,
}

impl Update {
    pub fn new(index: u64, delta: f64) -> Self {
        Self { index, delta }
    }
}

/// Order by magnitude descending, then index ascending.
///
/// This is the single tie-break used everywhere a "largest" set is taken.
pub fn magnitude_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0))
}

/// Compensated (Neumaier) summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Dense ground-truth vector of length `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    values: Vec<f64>,
}

impl Signal {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Build from `(index, value)` pairs; repeated indices accumulate.
    pub fn from_pairs(n: usize, pairs: &[(usize, f64)]) -> Result<Self> {
        let mut s = Self::zeros(n);
        for &(i, v) in pairs {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i as u64, n });
            }
            s.values[i] += v;
        }
        Ok(s)
    }

    /// Replay a stream of updates on the zero vector.
    pub fn from_updates(n: usize, updates: &[Update]) -> Result<Self> {
        let mut s = Self::zeros(n);
        for u in updates {
            s.apply_update(u)?;
        }
        Ok(s)
    }

    pub fn apply_update(&mut self, u: &Update) -> Result<()> {
        let n = self.len();
        let slot = usize::try_from(u.index)
            .ok()
            .filter(|&i| i < n)
            .ok_or(Error::IndexOutOfRange { index: u.index, n })?;
        self.values[slot] += u.delta;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Indices with nonzero value, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        compensated_sum(self.values.iter().map(|v| v.abs()))
    }

    /// `self - xhat` as a dense signal.
    pub fn minus_sparse(&self, xhat: &SparseVector) -> Signal {
        let mut out = self.clone();
        for (i, v) in xhat.iter() {
            out.values[i] -= v;
        }
        out
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|v| *v >= 0.0)
    }
}

/// Indices of the `k` largest-magnitude coordinates under [`magnitude_order`].
pub fn top_k_indices(x: &Signal, k: usize) -> Vec<usize> {
    let mut idx: Vec<(usize, f64)> = x.values.iter().copied().enumerate().collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    idx.select_nth_unstable_by(k - 1, |a, b| magnitude_order(*a, *b));
    let mut head: Vec<(usize, f64)> = idx[..k].to_vec();
    head.sort_by(|a, b| magnitude_order(*a, *b));
    head.into_iter().map(|(i, _)| i).collect()
}

/// `||x_{-k}||_1`: the l1 norm after zeroing the `k` largest-magnitude coordinates.
pub fn tail_norm(x: &Signal, k: usize) -> Result<f64> {
    if k > x.len() {
        return param(format!("tail size k = {k} exceeds n = {}", x.len()));
    }
    let mut mags: Vec<f64> = x.values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    Ok(compensated_sum(mags[k..].iter().copied()))
}

/// `H(x, k)`: the top-`k` index set, as a sorted vector.
pub fn head_indices(x: &Signal, k: usize) -> Vec<usize> {
    let mut h = top_k_indices(x, k);
    h.sort_unstable();
    h
}

/// `H(x, k, eps) = { i : |x_i| >= (eps / k) * ||x_{-k}||_1 }`, sorted ascending.
///
/// When the tail vanishes the set is the support of `x`, so the zero vector
/// yields the empty set.
pub fn head_set(x: &Signal, k: usize, eps: f64) -> Result<Vec<usize>> {
    if k == 0 {
        return param("head_set needs k >= 1");
    }
    if !(eps > 0.0) {
        return param(format!("head_set needs eps > 0, got {eps}"));
    }
    let tail = tail_norm(x, k.min(x.len()))?;
    if tail == 0.0 {
        return Ok(x.support());
    }
    let threshold = eps / k as f64 * tail;
    Ok(x
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= threshold)
        .map(|(i, _)| i)
        .collect())
}

/// Index to value map with a declared support bound; the output type of
/// every decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    n: usize,
    support_bound: usize,
    entries: BTreeMap<usize, f64>,
}

impl SparseVector {
    pub fn new(n: usize, support_bound: usize) -> Self {
        Self {
            n,
            support_bound,
            entries: BTreeMap::new(),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(n, 0)
    }

    /// Build from pairs, keeping the last value for repeated indices and
    /// dropping zeros.
    pub fn from_pairs(n: usize, support_bound: usize, pairs: &[(usize, f64)]) -> Result<Self> {
        let mut out = Self::new(n, support_bound);
        for &(i, v) in pairs {
            out.set(i, v)?;
        }
        Ok(out)
    }

    /// Keep the `s` largest-magnitude pairs (global tie-break), dropping zeros.
    pub fn top_of(n: usize, s: usize, pairs: &[(usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, f64)> = pairs.iter().copied().filter(|p| p.1 != 0.0).collect();
        sorted.sort_by(|a, b| magnitude_order(*a, *b));
        sorted.truncate(s);
        Self::from_pairs(n, s, &sorted)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support_bound(&self) -> usize {
        self.support_bound
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries.get(&i).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.entries.contains_key(&i)
    }

    /// Set coordinate `i`; a zero value removes the entry.
    pub fn set(&mut self, i: usize, v: f64) -> Result<()> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i as u64, n: self.n });
        }
        if v == 0.0 {
            self.entries.remove(&i);
            return Ok(());
        }
        if !self.entries.contains_key(&i) && self.entries.len() >= self.support_bound {
            return param(format!(
                "support bound {} exceeded while inserting index {i}",
                self.support_bound
            ));
        }
        self.entries.insert(i, v);
        Ok(())
    }

    /// Entries in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(i, v)| (*i, *v))
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    /// Entries sorted by the global tie-break.
    pub fn by_magnitude(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.iter().collect();
        v.sort_by(|a, b| magnitude_order(*a, *b));
        v
    }

    /// `self + other`; the support bound becomes the sum of both bounds.
    pub fn plus(&self, other: &SparseVector) -> SparseVector {
        let mut out = SparseVector::new(self.n, self.support_bound + other.support_bound);
        out.entries = self.entries.clone();
        for (i, v) in other.iter() {
            let e = out.entries.entry(i).or_insert(0.0);
            *e += v;
            if *e == 0.0 {
                out.entries.remove(&i);
            }
        }
        out
    }

    /// Copy with the support bound raised to at least `bound`.
    pub fn with_bound(mut self, bound: usize) -> SparseVector {
        self.support_bound = self.support_bound.max(bound);
        self
    }

    /// Keep only the `s` largest entries.
    pub fn truncate_top(&self, s: usize) -> SparseVector {
        let pairs = self.by_magnitude();
        let mut out = SparseVector::new(self.n, s);
        for &(i, v) in pairs.iter().take(s) {
            out.entries.insert(i, v);
        }
        out
    }

    pub fn to_signal(&self) -> Signal {
        let mut s = Signal::zeros(self.n);
        for (i, v) in self.iter() {
            s.values[i] = v;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_signal() -> Signal {
        Signal::from_vec(vec![10.1, -0.1, 0.3, 0.2, -9.7, 0.1, 0.2, -0.2])
    }

    #[test]
    fn tail_norm_examples() {
        assert_eq!(tail_norm(&Signal::zeros(4), 0).unwrap(), 0.0);
        assert_eq!(tail_norm(&Signal::from_vec(vec![3.0, -2.0, 1.0]), 1).unwrap(), 3.0);
        let t = tail_norm(&worked_signal(), 2).unwrap();
        assert!((t - 1.1).abs() < 1e-12, "{t}");
    }

    #[test]
    fn tail_norm_rejects_large_k() {
        assert!(matches!(tail_norm(&Signal::zeros(3), 4), Err(Error::Parameter(_))));
    }

    #[test]
    fn head_set_examples() {
        assert_eq!(head_set(&worked_signal(), 2, 1.0).unwrap(), vec![0, 4]);
        let flat = Signal::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(head_set(&flat, 4, 1.0).unwrap(), vec![0, 1, 2, 3]);
        assert!(head_set(&Signal::zeros(5), 2, 1.0).unwrap().is_empty());
        assert!(head_set(&flat, 0, 1.0).is_err());
        assert!(head_set(&flat, 1, 0.0).is_err());
    }

    #[test]
    fn top_k_tie_break_prefers_lower_index() {
        let x = Signal::from_vec(vec![1.0, -2.0, 2.0, 1.0]);
        assert_eq!(top_k_indices(&x, 3), vec![1, 2, 0]);
    }

    #[test]
    fn sparse_vector_respects_bound() {
        let mut v = SparseVector::new(10, 2);
        v.set(1, 1.0).unwrap();
        v.set(2, 1.0).unwrap();
        assert!(v.set(3, 1.0).is_err());
        v.set(2, 0.0).unwrap();
        v.set(3, 5.0).unwrap();
        assert_eq!(v.indices(), vec![1, 3]);
        assert!(v.set(10, 1.0).is_err());
    }

    #[test]
    fn top_of_keeps_largest() {
        let v = SparseVector::top_of(8, 2, &[(0, 1.0), (5, -3.0), (2, 3.0), (7, 0.0)]).unwrap();
        assert_eq!(v.by_magnitude(), vec![(2, 3.0), (5, -3.0)]);
    }

    #[test]
    fn update_out_of_range() {
        let mut s = Signal::zeros(4);
        assert!(s.apply_update(&Update::new(4, 1.0)).is_err());
        s.apply_update(&Update::new(3, 2.5)).unwrap();
        assert_eq!(s.get(3), 2.5);
    }
}
