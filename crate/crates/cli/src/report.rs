//! Decode reports and benchmark summaries, rendered as JSON or CSV.

use std::fmt::Write as _;

use detsketch::oracle::Verification;
use detsketch::Signal;
use serde::Serialize;

use crate::scheme::{Built, Decoded, SchemeConfig, SchemeKind};
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recovered {
    pub index: usize,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationBlock {
    pub linf_error: f64,
    pub l1_error: f64,
    pub tail_norm_k: f64,
    pub tail_norm_k2: f64,
    /// The error the scheme bounds: l1 for `general_l1l1`, l-infinity otherwise.
    pub measured_error: f64,
    pub bound: f64,
    pub guarantee_satisfied: bool,
}

impl VerificationBlock {
    fn new(kind: SchemeKind, k: usize, v: Verification) -> Self {
        let kf = k as f64;
        let (measured_error, bound) = match kind {
            SchemeKind::GeneralLinf => (v.linf_error, v.tail_norm_k2 / kf),
            SchemeKind::GeneralL1l1 => (v.l1_error, 2.0 * v.tail_norm_k),
            SchemeKind::Strict => (v.linf_error, v.tail_norm_k / kf),
            SchemeKind::WorkedExample => (v.linf_error, f64::INFINITY),
        };
        Self {
            linf_error: v.linf_error,
            l1_error: v.l1_error,
            tail_norm_k: v.tail_norm_k,
            tail_norm_k2: v.tail_norm_k2,
            measured_error,
            bound,
            guarantee_satisfied: measured_error <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scheme: SchemeKind,
    pub n: usize,
    pub k: usize,
    pub m_rows: usize,
    pub support_bound: usize,
    /// Sorted by decreasing magnitude, then increasing index.
    pub recovered: Vec<Recovered>,
    pub decode_wall_time: f64,
    pub candidate_evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationBlock>,
}

impl Report {
    pub fn new(config: &SchemeConfig, built: &Built, decoded: &Decoded, truth: Option<&Signal>) -> Result<Self, Failure> {
        let verification = match truth {
            Some(x) => Some(VerificationBlock::new(config.scheme, config.k, Verification::compute(x, &decoded.xhat, config.k)?)),
            None => None,
        };
        Ok(Self {
            scheme: config.scheme,
            n: config.n,
            k: config.k,
            m_rows: built.operator().m(),
            support_bound: built.support_bound(config.k),
            recovered: decoded
                .xhat
                .by_magnitude()
                .into_iter()
                .map(|(index, estimate)| Recovered { index, estimate })
                .collect(),
            decode_wall_time: decoded.seconds,
            candidate_evaluations: decoded.candidate_evaluations,
            measurements: None,
            bits: decoded.bits.clone(),
            verification,
        })
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => json(self),
            Format::Csv => {
                let mut out = String::new();
                let _ = writeln!(out, "# scheme={}", serde_json::to_value(self.scheme).unwrap().as_str().unwrap_or(""));
                let _ = writeln!(out, "# n={} k={} m_rows={}", self.n, self.k, self.m_rows);
                let _ = writeln!(out, "# decode_wall_time={} candidate_evaluations={}", self.decode_wall_time, self.candidate_evaluations);
                if let Some(v) = &self.measurements {
                    let _ = writeln!(out, "# measurements={}", join(v));
                }
                if let Some(b) = &self.bits {
                    let _ = writeln!(out, "# bits={}", join(b));
                }
                if let Some(v) = &self.verification {
                    let _ = writeln!(
                        out,
                        "# linf_error={} l1_error={} tail_norm_k={} tail_norm_k2={} guarantee_satisfied={}",
                        v.linf_error, v.l1_error, v.tail_norm_k, v.tail_norm_k2, v.guarantee_satisfied
                    );
                }
                out.push_str("index,estimate\n");
                for r in &self.recovered {
                    let _ = writeln!(out, "{},{:?}", r.index, r.estimate);
                }
                out
            }
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization is infallible");
    s.push('\n');
    s
}

fn join<T: std::fmt::Debug>(values: &[T]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub scheme: SchemeKind,
    pub n: usize,
    pub k: usize,
    pub m_rows: usize,
    pub instances: usize,
    pub guarantee_satisfied: usize,
    pub build_seconds: f64,
    pub mean_sketch_seconds: f64,
    pub mean_decode_seconds: f64,
    pub max_candidate_evaluations: usize,
}

impl BenchSummary {
    pub fn new(config: &SchemeConfig, m_rows: usize, build_seconds: f64, sketch_seconds: f64, reports: &[Report]) -> Self {
        let count = reports.len().max(1) as f64;
        Self {
            scheme: config.scheme,
            n: config.n,
            k: config.k,
            m_rows,
            instances: reports.len(),
            guarantee_satisfied: reports
                .iter()
                .filter(|r| r.verification.as_ref().is_some_and(|v| v.guarantee_satisfied))
                .count(),
            build_seconds,
            mean_sketch_seconds: sketch_seconds / count,
            mean_decode_seconds: reports.iter().map(|r| r.decode_wall_time).sum::<f64>() / count,
            max_candidate_evaluations: reports.iter().map(|r| r.candidate_evaluations).max().unwrap_or(0),
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => json(self),
            Format::Csv => {
                let scheme = serde_json::to_value(self.scheme).unwrap();
                format!(
                    "scheme,n,k,m_rows,instances,guarantee_satisfied,build_seconds,mean_sketch_seconds,mean_decode_seconds,max_candidate_evaluations\n{},{},{},{},{},{},{},{},{},{}\n",
                    scheme.as_str().unwrap_or(""),
                    self.n,
                    self.k,
                    self.m_rows,
                    self.instances,
                    self.guarantee_satisfied,
                    self.build_seconds,
                    self.mean_sketch_seconds,
                    self.mean_decode_seconds,
                    self.max_candidate_evaluations
                )
            }
        }
    }
}
