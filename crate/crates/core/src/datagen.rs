//! Synthetic logic-gate benchmark.
//!
//! Features are i.i.d. Bernoulli(0.5) bits; the label is a gate applied to
//! two generating columns `j0`, `j1`. Every other column is noise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, RngStream};

pub const DEFAULT_COUNT: usize = 128;
pub const DEFAULT_DIMS: [usize; 7] = [3, 4, 8, 16, 32, 64, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Gate {
    And,
    Or,
    Not,
    Xor,
    Xnor,
}

impl Gate {
    pub const ALL: [Gate; 5] = [Gate::And, Gate::Or, Gate::Not, Gate::Xor, Gate::Xnor];

    pub fn name(self) -> &'static str {
        match self {
            Gate::And => "and",
            Gate::Or => "or",
            Gate::Not => "not",
            Gate::Xor => "xor",
            Gate::Xnor => "xnor",
        }
    }

    /// NOT is unary: it reads `a` and ignores `b`.
    pub fn apply(self, a: bool, b: bool) -> bool {
        match self {
            Gate::And => a && b,
            Gate::Or => a || b,
            Gate::Not => !a,
            Gate::Xor => a != b,
            Gate::Xnor => a == b,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Gate::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown gate '{s}' (expected one of and, or, not, xor, xnor)"
                ))
            })
    }
}

/// Bit-level gate evaluation on `{0, 1}`.
pub fn apply_gate(op: Gate, a: u8, b: u8) -> u8 {
    u8::from(op.apply(a != 0, b != 0))
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateSpec {
    pub op: Gate,
    pub dim: usize,
    pub count: usize,
    pub seed: u64,
    pub j0: usize,
    pub j1: usize,
}

impl GateSpec {
    pub fn new(op: Gate, dim: usize, seed: u64) -> Self {
        Self {
            op,
            dim,
            count: DEFAULT_COUNT,
            seed,
            j0: 0,
            j1: 1,
        }
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::Config(format!(
                "gate datasets need at least 3 features, got {}",
                self.dim
            )));
        }
        if self.j0 == self.j1 || self.j0 >= self.dim || self.j1 >= self.dim {
            return Err(Error::Config(format!(
                "generating indices ({}, {}) must be distinct and below {}",
                self.j0, self.j1, self.dim
            )));
        }
        if self.count == 0 {
            return Err(Error::Config("instance count must be positive".into()));
        }
        Ok(())
    }
}

pub fn generate_gate_dataset(spec: &GateSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed);
    let mut data = Vec::with_capacity(spec.count * spec.dim);
    let mut labels = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let start = data.len();
        data.extend((0..spec.dim).map(|_| (rng.next_u64() >> 63) as f64));
        let row = &data[start..];
        let bit = apply_gate(spec.op, row[spec.j0] as u8, row[spec.j1] as u8);
        labels.push(usize::from(bit));
    }
    let features = Matrix::from_vec(spec.count, spec.dim, data)?;
    let mut ds = Dataset::new(features, labels, 2)?;
    ds.provenance = Some(spec.clone());
    Ok(ds)
}

/// Seed for one `(gate, dim, repetition)` cell of a suite.
pub fn suite_seed(base_seed: u64, gate: Gate, dim: usize, repetition: usize) -> u64 {
    let s = derive_seed(base_seed, gate as u64);
    let s = derive_seed(s, dim as u64);
    derive_seed(s, repetition as u64)
}

/// One dataset per `(gate, dim, repetition)`, in that nesting order.
pub fn generate_suite(
    gates: &[Gate],
    dims: &[usize],
    repetitions: usize,
    base_seed: u64,
) -> Result<Vec<Dataset>> {
    let mut out = Vec::with_capacity(gates.len() * dims.len() * repetitions);
    for &gate in gates {
        for &dim in dims {
            for rep in 0..repetitions {
                let spec = GateSpec::new(gate, dim, suite_seed(base_seed, gate, dim, rep));
                out.push(generate_gate_dataset(&spec)?);
            }
        }
    }
    Ok(out)
}

/// File stem used for generated datasets: `{gate}_d{dim}_r{rep}`.
pub fn dataset_stem(gate: Gate, dim: usize, repetition: usize) -> String {
    format!("{gate}_d{dim}_r{repetition}")
}
