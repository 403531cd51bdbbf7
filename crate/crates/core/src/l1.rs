//! The l1/l1 scheme: weak layers of geometrically decreasing sparsity,
//! each decoded against the residual left by the ones before it.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::descriptor::MatrixDescriptor;
use crate::error::{param, Error, Result};
use crate::hashgraph::derive_seed;
use crate::signal::SparseVector;
use crate::sketch::{LinearOperator, Stack};
use crate::weak::{build_weak_matrix_with, weak_decode, Constants, DecodeOptions, Flavor, WeakMatrix, WeakStats};

/// Sparsity falls by this factor from one layer to the next.
pub const DECAY: usize = 8;

/// Sparsity and accuracy of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Layer {
    pub s: usize,
    pub eps: f64,
}

/// `s_t = ceil(k / 8^t)` down to and including 1, with `eps_t = eps / 2^(t+2)`.
pub fn l1_layers(k: usize, eps: f64) -> Vec<L1Layer> {
    let mut out = Vec::new();
    let mut div = 1usize;
    for t in 0.. {
        let s = k.div_ceil(div);
        out.push(L1Layer { s, eps: eps / f64::powi(2.0, t + 2) });
        if s == 1 {
            break;
        }
        div = div.saturating_mul(DECAY);
    }
    out
}

pub struct L1Scheme {
    k: usize,
    eps: f64,
    seed: u64,
    layers: Vec<L1Layer>,
    stack: Stack<WeakMatrix>,
}

pub fn build_l1_scheme(n: usize, k: usize, eps: f64, seed: u64) -> Result<L1Scheme> {
    build_l1_scheme_with(n, k, eps, seed, Constants::default())
}

pub fn build_l1_scheme_with(n: usize, k: usize, eps: f64, seed: u64, constants: Constants) -> Result<L1Scheme> {
    if k == 0 || (k as f64) > (n as f64).sqrt() {
        return param(format!("l1 scheme needs 1 <= k <= sqrt(n), got k = {k}, n = {n}"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return param(format!("l1 scheme needs 0 < eps <= 1, got {eps}"));
    }
    let layers = l1_layers(k, eps);
    let parts = layers
        .iter()
        .enumerate()
        .map(|(t, l)| {
            let flavor = Flavor::L1L1 { s: l.s, eps: l.eps };
            build_weak_matrix_with(flavor, n, derive_seed(seed, 40, t as u64), constants)
        })
        .collect::<Result<Vec<_>>>()?;
    let stack = Stack::new(n, parts)?;
    Ok(L1Scheme { k, eps, seed, layers, stack })
}

impl L1Scheme {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn layers(&self) -> &[L1Layer] {
        &self.layers
    }

    pub fn stack(&self) -> &Stack<WeakMatrix> {
        &self.stack
    }

    /// Largest possible output support, `sum s_t`.
    pub fn support_bound(&self) -> usize {
        self.layers.iter().map(|l| l.s).sum()
    }
}

impl LinearOperator for L1Scheme {
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
            json!({ "scheme": "l1", "k": self.k, "eps": self.eps, "seed": self.seed, "layers": self.layers }),
            self.stack.child_descriptors(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Result {
    pub xhat: SparseVector,
    pub layers: Vec<WeakStats>,
    pub scale: f64,
}

impl L1Result {
    pub fn candidate_evaluations(&self) -> usize {
        self.layers.iter().map(|s| s.candidate_evaluations).sum()
    }
}

/// Decode every layer in order, subtracting each layer's output from the
/// segments of the layers after it.
///
/// The tail scale is read from the first layer with `t = k` unless given.
pub fn l1_decode(scheme: &L1Scheme, v: &[f64], scale: Option<f64>) -> Result<L1Result> {
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
    let mut layers = Vec::with_capacity(stack.len());
    for (t, phi) in stack.parts().iter().enumerate() {
        let res = weak_decode(phi, &residual[stack.range(t)], &DecodeOptions::with_scale(scale))?;
        stack.subtract_from(t + 1, &res.xhat, &mut residual);
        xhat = xhat.plus(&res.xhat).with_bound(scheme.support_bound());
        layers.push(res.stats);
    }
    Ok(L1Result { xhat, layers, scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_sparsities() {
        let s: Vec<usize> = l1_layers(64, 1.0).iter().map(|l| l.s).collect();
        assert_eq!(s, vec![64, 8, 1]);
        let s: Vec<usize> = l1_layers(1, 1.0).iter().map(|l| l.s).collect();
        assert_eq!(s, vec![1]);
        let s: Vec<usize> = l1_layers(16, 1.0).iter().map(|l| l.s).collect();
        assert_eq!(s, vec![16, 2, 1]);
    }

    #[test]
    fn eps_budget_sums_below_half() {
        let total: f64 = l1_layers(4096, 0.5).iter().map(|l| l.eps).sum();
        assert!(total <= 0.25);
    }

    #[test]
    fn rejects_large_k() {
        assert!(build_l1_scheme(256, 17, 1.0, 1).is_err());
        assert!(build_l1_scheme(256, 4, 0.0, 1).is_err());
    }
}
