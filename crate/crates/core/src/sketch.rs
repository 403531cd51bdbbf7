//! Linear measurement operators and the sketches they produce.

use crate::descriptor::MatrixDescriptor;
use crate::error::{param, Error, Result};
use crate::signal::{Signal, SparseVector, Update};

/// Largest `n * m` for which a matrix may be materialized densely.
pub const DENSE_LIMIT: usize = 1 << 26;

/// A fixed linear map `R^n -> R^m` accessed column by column.
///
/// Implementations are immutable after construction and must visit the
/// same entries in the same order on every call.
pub trait LinearOperator: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;

    /// Call `f(row, coefficient)` for every nonzero entry of column `i`.
    fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64));

    /// `out += scale * Phi e_i`. `out` has length `m`.
    fn accumulate_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        self.for_each_in_column(i, &mut |row, c| out[row] += c * scale);
    }

    /// `out += Phi x` for a dense `x` of length `n`.
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                self.accumulate_column(i, xi, out);
            }
        }
    }

    fn descriptor(&self) -> MatrixDescriptor;

    fn fingerprint(&self) -> u64 {
        self.descriptor().fingerprint()
    }
}

/// The measurement vector `v = Phi x`, tagged with the matrix fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchVector {
    pub values: Vec<f64>,
    pub fingerprint: u64,
}

impl SketchVector {
    pub fn zeros<P: LinearOperator + ?Sized>(phi: &P) -> Self {
        Self { values: vec![0.0; phi.m()], fingerprint: phi.fingerprint() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `v += delta * Phi e_index`.
    pub fn ingest<P: LinearOperator + ?Sized>(&mut self, phi: &P, u: &Update) -> Result<()> {
        let n = phi.n();
        let i = usize::try_from(u.index)
            .ok()
            .filter(|&i| i < n)
            .ok_or(Error::IndexOutOfRange { index: u.index, n })?;
        self.check_len(phi)?;
        phi.accumulate_column(i, u.delta, &mut self.values);
        Ok(())
    }

    /// `v -= Phi xhat`.
    pub fn subtract_sparse<P: LinearOperator + ?Sized>(&mut self, phi: &P, xhat: &SparseVector) -> Result<()> {
        self.check_len(phi)?;
        for (i, x) in xhat.iter() {
            phi.accumulate_column(i, -x, &mut self.values);
        }
        Ok(())
    }

    /// Componentwise sum; both sketches must come from the same matrix.
    pub fn add(&self, other: &SketchVector) -> Result<SketchVector> {
        if self.fingerprint != other.fingerprint {
            return Err(Error::SketchMismatch { expected: self.fingerprint, got: other.fingerprint });
        }
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(SketchVector { values, fingerprint: self.fingerprint })
    }

    /// Verify this sketch was produced by `phi`.
    pub fn check_matrix<P: LinearOperator + ?Sized>(&self, phi: &P) -> Result<()> {
        self.check_len(phi)?;
        let fp = phi.fingerprint();
        if fp != self.fingerprint {
            return Err(Error::SketchMismatch { expected: fp, got: self.fingerprint });
        }
        Ok(())
    }

    fn check_len<P: LinearOperator + ?Sized>(&self, phi: &P) -> Result<()> {
        if self.values.len() != phi.m() {
            return Err(Error::DimensionMismatch { expected: phi.m(), got: self.values.len() });
        }
        Ok(())
    }
}

/// `Phi x`.
pub fn apply<P: LinearOperator + ?Sized>(phi: &P, x: &Signal) -> Result<SketchVector> {
    if x.len() != phi.n() {
        return Err(Error::DimensionMismatch { expected: phi.n(), got: x.len() });
    }
    let mut out = SketchVector::zeros(phi);
    phi.apply_into(x.values(), &mut out.values);
    Ok(out)
}

/// `Phi xhat` for a sparse input.
pub fn apply_sparse<P: LinearOperator + ?Sized>(phi: &P, xhat: &SparseVector) -> Result<SketchVector> {
    if xhat.n() != phi.n() {
        return Err(Error::DimensionMismatch { expected: phi.n(), got: xhat.n() });
    }
    let mut out = SketchVector::zeros(phi);
    for (i, x) in xhat.iter() {
        phi.accumulate_column(i, x, &mut out.values);
    }
    Ok(out)
}

/// Replay an update stream onto a fresh sketch.
pub fn ingest_all<P: LinearOperator + ?Sized>(phi: &P, updates: &[Update]) -> Result<SketchVector> {
    let mut v = SketchVector::zeros(phi);
    for u in updates {
        v.ingest(phi, u)?;
    }
    Ok(v)
}

/// Row-major dense matrix. Only for small instances and test oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return param("ragged rows in dense matrix");
        }
        Self::check_size(n, m)?;
        Ok(Self { rows: m, cols: n, data: rows.concat() })
    }

    /// Materialize any operator, refusing when `n * m` exceeds [`DENSE_LIMIT`].
    pub fn materialize<P: LinearOperator + ?Sized>(phi: &P) -> Result<Self> {
        let (n, m) = (phi.n(), phi.m());
        Self::check_size(n, m)?;
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            phi.for_each_in_column(i, &mut |row, c| data[row * n + i] += c);
        }
        Ok(Self { rows: m, cols: n, data })
    }

    fn check_size(n: usize, m: usize) -> Result<()> {
        match n.checked_mul(m) {
            Some(cells) if cells <= DENSE_LIMIT => Ok(()),
            _ => param(format!("dense materialization of {m} x {n} exceeds 2^26 cells")),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Plain row-times-vector product.
    pub fn mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, got: x.len() });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }
}

impl LinearOperator for DenseMatrix {
    fn n(&self) -> usize {
        self.cols
    }

    fn m(&self) -> usize {
        self.rows
    }

    fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        for r in 0..self.rows {
            let c = self.data[r * self.cols + i];
            if c != 0.0 {
                f(r, c);
            }
        }
    }

    fn descriptor(&self) -> MatrixDescriptor {
        let bits: Vec<u64> = self.data.iter().map(|v| v.to_bits()).collect();
        MatrixDescriptor::leaf(
            crate::descriptor::MatrixKind::Dense,
            self.cols,
            self.rows,
            None,
            serde_json::json!({ "entries": bits }),
        )
    }
}

/// Vertical concatenation of operators over the same universe.
pub struct Stack<T> {
    parts: Vec<T>,
    offsets: Vec<usize>,
    n: usize,
}

impl<T: LinearOperator> Stack<T> {
    pub fn new(n: usize, parts: Vec<T>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(parts.len() + 1);
        let mut acc = 0;
        for p in &parts {
            if p.n() != n {
                return Err(Error::DimensionMismatch { expected: n, got: p.n() });
            }
            offsets.push(acc);
            acc += p.m();
        }
        offsets.push(acc);
        Ok(Self { parts, offsets, n })
    }

    pub fn parts(&self) -> &[T] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Row range of part `p` inside the stacked sketch.
    pub fn range(&self, p: usize) -> std::ops::Range<usize> {
        self.offsets[p]..self.offsets[p + 1]
    }

    pub fn m(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn for_each_in_column(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        for (p, part) in self.parts.iter().enumerate() {
            let off = self.offsets[p];
            part.for_each_in_column(i, &mut |row, c| f(off + row, c));
        }
    }

    pub fn accumulate_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        for (p, part) in self.parts.iter().enumerate() {
            part.accumulate_column(i, scale, &mut out[self.range(p)]);
        }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (p, part) in self.parts.iter().enumerate() {
            part.apply_into(x, &mut out[self.range(p)]);
        }
    }

    /// `v -= Phi xhat` restricted to parts `from..`.
    pub fn subtract_from(&self, from: usize, xhat: &SparseVector, v: &mut [f64]) {
        for p in from..self.parts.len() {
            let seg = &mut v[self.range(p)];
            for (i, x) in xhat.iter() {
                self.parts[p].accumulate_column(i, -x, seg);
            }
        }
    }

    pub fn child_descriptors(&self) -> Vec<MatrixDescriptor> {
        self.parts.iter().map(|p| p.descriptor()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, -1.0, 1.0]]).unwrap()
    }

    #[test]
    fn apply_matches_dense_product() {
        let phi = small();
        let x = Signal::from_vec(vec![1.0, 2.0, 3.0]);
        let v = apply(&phi, &x).unwrap();
        assert_eq!(v.values, phi.mul(x.values()).unwrap());
        assert_eq!(v.values, vec![7.0, 1.0]);
    }

    #[test]
    fn ingest_unit_update_gives_column() {
        let phi = small();
        let mut v = SketchVector::zeros(&phi);
        v.ingest(&phi, &Update::new(2, 1.0)).unwrap();
        assert_eq!(v.values, vec![2.0, 1.0]);
        assert!(v.ingest(&phi, &Update::new(3, 1.0)).is_err());
    }

    #[test]
    fn dimension_checks() {
        let phi = small();
        assert!(matches!(apply(&phi, &Signal::zeros(2)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn subtract_sparse_inverts_apply() {
        let phi = small();
        let xs = SparseVector::from_pairs(3, 2, &[(0, 1.5), (2, -2.0)]).unwrap();
        let mut v = apply_sparse(&phi, &xs).unwrap();
        v.subtract_sparse(&phi, &xs).unwrap();
        assert!(v.values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn stack_offsets_rows() {
        let s = Stack::new(3, vec![small(), small()]).unwrap();
        assert_eq!(s.m(), 4);
        assert_eq!(s.range(1), 2..4);
        let mut rows = Vec::new();
        s.for_each_in_column(1, &mut |r, c| rows.push((r, c)));
        assert_eq!(rows, vec![(1, -1.0), (3, -1.0)]);
    }

    #[test]
    fn materialize_refuses_huge() {
        struct Huge;
        impl LinearOperator for Huge {
            fn n(&self) -> usize {
                1 << 20
            }
            fn m(&self) -> usize {
                1 << 10
            }
            fn for_each_in_column(&self, _: usize, _: &mut dyn FnMut(usize, f64)) {}
            fn descriptor(&self) -> MatrixDescriptor {
                MatrixDescriptor::leaf(crate::descriptor::MatrixKind::Dense, 1 << 20, 1 << 10, None, serde_json::json!({}))
            }
        }
        assert!(DenseMatrix::materialize(&Huge).is_err());
    }
}
