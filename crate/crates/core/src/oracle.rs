//! Brute-force ground truth checks against a fully known signal.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signal::{compensated_sum, head_set, tail_norm, Signal, SparseVector};

/// `max_i |x_i - xhat_i|`.
pub fn linf_error(x: &Signal, xhat: &SparseVector) -> f64 {
    let mut worst = 0.0f64;
    for (i, &xi) in x.values().iter().enumerate() {
        worst = worst.max((xi - xhat.get(i)).abs());
    }
    worst
}

/// `||x - xhat||_1`, summed with compensation.
pub fn l1_error(x: &Signal, xhat: &SparseVector) -> f64 {
    compensated_sum(x.values().iter().enumerate().map(|(i, &xi)| (xi - xhat.get(i)).abs()))
}

/// Whether `||x - xhat||_inf <= (1/k) ||x_{-r}||_1`.
///
/// `r` is clamped to `n`. Returns false for `k = 0`.
pub fn oracle_verify_linf(x: &Signal, xhat: &SparseVector, k: usize, r: usize) -> bool {
    if k == 0 || xhat.n() != x.len() {
        return false;
    }
    let tail = tail_norm(x, r.min(x.len())).expect("r clamped to n");
    linf_error(x, xhat) <= tail / k as f64
}

/// Whether `||x - xhat||_1 <= factor * ||x_{-k}||_1`.
pub fn oracle_verify_l1(x: &Signal, xhat: &SparseVector, k: usize, factor: f64) -> bool {
    if xhat.n() != x.len() {
        return false;
    }
    let tail = tail_norm(x, k.min(x.len())).expect("k clamped to n");
    l1_error(x, xhat) <= factor * tail
}

/// Full comparison of an estimate with the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub linf_error: f64,
    pub l1_error: f64,
    pub tail_norm_k: f64,
    pub tail_norm_k2: f64,
    /// Heavy coordinates (`H(x, k, 1)`) absent from the estimate's support.
    pub missed_heavy: Vec<usize>,
}

impl Verification {
    pub fn compute(x: &Signal, xhat: &SparseVector, k: usize) -> Result<Self> {
        let n = x.len();
        let heavy = head_set(x, k.max(1), 1.0)?;
        Ok(Self {
            linf_error: linf_error(x, xhat),
            l1_error: l1_error(x, xhat),
            tail_norm_k: tail_norm(x, k.min(n))?,
            tail_norm_k2: tail_norm(x, (k * k).min(n))?,
            missed_heavy: heavy.into_iter().filter(|i| !xhat.contains(*i)).collect(),
        })
    }

    /// The ell-infinity bound against tail size `k` (or `k^2` when `squared`).
    pub fn linf_ok(&self, k: usize, squared: bool) -> bool {
        let tail = if squared { self.tail_norm_k2 } else { self.tail_norm_k };
        k > 0 && self.linf_error <= tail / k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_exact_passes() {
        let x = Signal::from_pairs(10, &[(2, 5.0), (7, -1.0)]).unwrap();
        let xhat = SparseVector::from_pairs(10, 2, &[(2, 5.0), (7, -1.0)]).unwrap();
        assert!(oracle_verify_linf(&x, &xhat, 2, 2));
        assert!(oracle_verify_linf(&x, &xhat, 2, 0));
    }

    #[test]
    fn missing_spike_fails() {
        let x = Signal::from_pairs(4, &[(0, 1.0)]).unwrap();
        assert!(!oracle_verify_linf(&x, &SparseVector::zero(4), 1, 1));
    }

    #[test]
    fn verification_reports_misses() {
        let x = Signal::from_vec(vec![10.1, -0.1, 0.3, 0.2, -9.7, 0.1, 0.2, -0.2]);
        let xhat = SparseVector::from_pairs(8, 1, &[(0, 10.0)]).unwrap();
        let v = Verification::compute(&x, &xhat, 2).unwrap();
        assert_eq!(v.missed_heavy, vec![4]);
        assert!(!v.linf_ok(2, false));
        assert!((v.tail_norm_k - 1.1).abs() < 1e-12);
    }

    #[test]
    fn l1_check() {
        let x = Signal::from_vec(vec![3.0, -2.0, 1.0]);
        let xhat = SparseVector::from_pairs(3, 1, &[(0, 3.0)]).unwrap();
        assert!(oracle_verify_l1(&x, &xhat, 1, 1.0));
        assert!(!oracle_verify_l1(&x, &SparseVector::zero(3), 1, 1.5));
    }
}
