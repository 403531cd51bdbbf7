//! Scheme selection and the descriptor file that pins a built matrix.

use std::time::Instant;

use detsketch::coding::{bucket_message_matrix, extract_bit};
use detsketch::descriptor::MatrixDescriptor;
use detsketch::l1::{build_l1_scheme, l1_decode, L1Scheme};
use detsketch::linf::{build_combined_scheme, combined_decode, CombinedScheme};
use detsketch::sketch::DenseMatrix;
use detsketch::strict::{build_split_tree, recursive_decode, SplitTree};
use detsketch::{LinearOperator, SparseVector};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Combined scheme: `||x - xhat||_inf <= (1/k) ||x_{-k^2}||_1`.
    GeneralLinf,
    /// Layered scheme: `||x - xhat||_1 <= 2 ||x_{-k}||_1`.
    GeneralL1l1,
    /// Seedless scheme for nonnegative signals: `||x - xhat||_inf <= (1/k) ||x_{-k}||_1`.
    Strict,
    /// The 8-column two-bucket example with two-bit messages.
    #[value(hide = true)]
    WorkedExample,
}

/// Everything needed to rebuild the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub n: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Contents of a descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorFile {
    pub config: SchemeConfig,
    pub m: usize,
    pub matrix: MatrixDescriptor,
}

pub enum Built {
    Linf(CombinedScheme),
    L1(L1Scheme),
    Strict(SplitTree),
    Worked(DenseMatrix),
}

/// Decoder output common to every scheme.
pub struct Decoded {
    pub xhat: SparseVector,
    pub candidate_evaluations: usize,
    pub seconds: f64,
    /// Bits read from the measurement pairs; worked example only.
    pub bits: Option<Vec<u8>>,
}

pub fn worked_example_matrix() -> DenseMatrix {
    let buckets = vec![vec![0, 2, 3, 5], vec![1, 4, 6, 7]];
    let messages = vec![
        vec![1, 1],
        vec![0, 0],
        vec![0, 1],
        vec![0, 1],
        vec![1, 0],
        vec![1, 0],
        vec![1, 1],
        vec![1, 0],
    ];
    bucket_message_matrix(8, &buckets, &messages).expect("fixed example is a partition")
}

impl SchemeConfig {
    /// Resolve `k` from `--k` or `--eps` (`k = ceil(1/eps)`), exactly one of which is given.
    pub fn new(scheme: SchemeKind, n: usize, k: Option<usize>, eps: Option<f64>, seed: u64) -> Result<Self, Failure> {
        let k = match (k, eps) {
            (None, None) if scheme == SchemeKind::WorkedExample => 1,
            (Some(k), None) => k,
            (None, Some(eps)) if eps > 0.0 && eps <= 1.0 => (1.0 / eps).ceil() as usize,
            (None, Some(eps)) => return Err(Failure::Param(format!("--eps must lie in (0, 1], got {eps}"))),
            _ => return Err(Failure::Param("give exactly one of --k and --eps".into())),
        };
        let (n, seed) = match scheme {
            SchemeKind::Strict => (n, None),
            SchemeKind::WorkedExample => (8, None),
            _ => (n, Some(seed)),
        };
        Ok(Self { scheme, n, k, seed })
    }

    pub fn build(&self) -> Result<Built, Failure> {
        let seed = self.seed.unwrap_or(0);
        Ok(match self.scheme {
            SchemeKind::GeneralLinf => Built::Linf(build_combined_scheme(self.n, self.k, seed)?),
            SchemeKind::GeneralL1l1 => Built::L1(build_l1_scheme(self.n, self.k, 1.0, seed)?),
            SchemeKind::Strict => Built::Strict(build_split_tree(self.n, self.k)?),
            SchemeKind::WorkedExample => Built::Worked(worked_example_matrix()),
        })
    }
}

impl Built {
    pub fn operator(&self) -> &dyn LinearOperator {
        match self {
            Built::Linf(s) => s,
            Built::L1(s) => s,
            Built::Strict(s) => s,
            Built::Worked(s) => s,
        }
    }

    pub fn support_bound(&self, k: usize) -> usize {
        match self {
            Built::Linf(_) => 4 * k,
            Built::L1(s) => s.support_bound(),
            Built::Strict(_) => 5 * k,
            Built::Worked(_) => 0,
        }
    }

    pub fn decode(&self, v: &[f64]) -> Result<Decoded, Failure> {
        let t0 = Instant::now();
        let (xhat, candidate_evaluations, bits) = match self {
            Built::Linf(s) => {
                let r = combined_decode(s, v)?;
                let c = r.candidate_evaluations();
                (r.xhat, c, None)
            }
            Built::L1(s) => {
                let r = l1_decode(s, v, None)?;
                let c = r.candidate_evaluations();
                (r.xhat, c, None)
            }
            Built::Strict(s) => {
                let r = recursive_decode(s, v)?;
                (r.xhat, r.candidate_evaluations, None)
            }
            Built::Worked(s) => {
                let bits = v.chunks(2).map(|p| extract_bit(p[0], p[1])).collect();
                (SparseVector::zero(s.n()), 0, Some(bits))
            }
        };
        Ok(Decoded { xhat, candidate_evaluations, seconds: t0.elapsed().as_secs_f64(), bits })
    }
}

impl DescriptorFile {
    pub fn new(config: SchemeConfig, built: &Built) -> Self {
        let op = built.operator();
        Self { config, m: op.m(), matrix: op.descriptor() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("descriptor serialization is infallible");
        out.push(b'\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::Format(format!("descriptor line {}: {e}", e.line())))
    }

    /// Rebuild the matrix and check it matches the stored descriptor.
    pub fn rebuild(&self) -> Result<Built, Failure> {
        let built = self.config.build()?;
        if DescriptorFile::new(self.config.clone(), &built) != *self {
            return Err(Failure::Format("descriptor does not match the matrix its config rebuilds".into()));
        }
        Ok(built)
    }
}
