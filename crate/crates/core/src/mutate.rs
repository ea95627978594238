//! Mutation transition matrices and their state-dependent mixtures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::space::check_bits;

/// Largest bit count for dense `2^n × 2^n` matrices (2^26 entries).
pub const DENSE_MAX_BITS: u32 = 13;

/// Row-sum tolerance for every stochastic matrix built here.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Entries below this magnitude are stored as exact zeros.
const UNDERFLOW: f64 = 1e-300;

/// A mutation operator with resolved parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Operator {
    /// Flip each bit independently with probability `p`.
    PerBitFlip { p: f64 },
    /// Flip exactly one uniformly chosen bit.
    SingleBitFlip,
}

impl Operator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::PerBitFlip { p } if !(p > 0.0 && p < 1.0) => Err(Error::Parameter(format!(
                "flip probability must lie strictly inside (0, 1), got {p}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::PerBitFlip { p } => format!("per-bit-flip(p={p})"),
            Self::SingleBitFlip => "single-bit-flip".to_string(),
        }
    }

    /// Dense kernel over all `2^n` states.
    pub fn kernel(&self, n: u32) -> Result<MutationKernel> {
        match *self {
            Self::PerBitFlip { p } => per_bit_flip(n, p),
            Self::SingleBitFlip => single_bit_flip(n),
        }
    }
}

/// Whether a kernel's rows index bitstrings or `|x|` levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelDomain {
    States,
    Levels,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MutationKernel {
    pub n: u32,
    pub domain: KernelDomain,
    pub matrix: Matrix,
    pub label: String,
}

impl MutationKernel {
    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.matrix.get(x, y)
    }

    fn checked(self) -> Result<Self> {
        let err = self.matrix.max_row_sum_error();
        if err > ROW_SUM_TOL {
            return Err(Error::Parameter(format!(
                "{} rows deviate from 1 by {err:e}",
                self.label
            )));
        }
        Ok(self)
    }
}

/// `p^H (1-p)^(n-H)` for each Hamming distance `H` in `0..=n`, via logs.
fn per_distance_probs(n: u32, p: f64) -> Vec<f64> {
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|h| {
            let v = (f64::from(h) * lp + f64::from(n - h) * lq).exp();
            if v < UNDERFLOW {
                0.0
            } else {
                v
            }
        })
        .collect()
}

pub fn per_bit_flip(n: u32, p: f64) -> Result<MutationKernel> {
    check_bits(n, DENSE_MAX_BITS)?;
    let op = Operator::PerBitFlip { p };
    op.validate()?;
    let by_distance = per_distance_probs(n, p);
    let size = 1usize << n;
    let mut matrix = Matrix::zeros(size, size);
    for x in 0..size {
        for (y, e) in matrix.row_mut(x).iter_mut().enumerate() {
            *e = by_distance[(x ^ y).count_ones() as usize];
        }
    }
    MutationKernel {
        n,
        domain: KernelDomain::States,
        matrix,
        label: op.label(),
    }
    .checked()
}

pub fn single_bit_flip(n: u32) -> Result<MutationKernel> {
    check_bits(n, DENSE_MAX_BITS)?;
    let size = 1usize << n;
    let mut matrix = Matrix::zeros(size, size);
    let share = 1.0 / f64::from(n);
    for x in 0..size {
        for i in 0..n {
            matrix.set(x, x ^ (1 << i), share);
        }
    }
    MutationKernel {
        n,
        domain: KernelDomain::States,
        matrix,
        label: Operator::SingleBitFlip.label(),
    }
    .checked()
}

/// Per-state probability vector over `kappa` operators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyDistribution {
    kappa: usize,
    /// Row `x` holds `q(x)`; flattened with stride `kappa`.
    table: Vec<f64>,
}

impl StrategyDistribution {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        let kappa = table.first().map_or(0, Vec::len);
        if kappa == 0 {
            return Err(Error::Parameter(
                "strategy needs at least one operator".into(),
            ));
        }
        if table.iter().any(|r| r.len() != kappa) {
            return Err(Error::Dimension(
                "strategy rows have differing operator counts".into(),
            ));
        }
        let q = Self {
            kappa,
            table: table.into_iter().flatten().collect(),
        };
        q.validate()?;
        Ok(q)
    }

    /// Unit vector on operator `k` at every state.
    pub fn pure(states: usize, kappa: usize, k: usize) -> Result<Self> {
        if k >= kappa {
            return Err(Error::Parameter(format!(
                "operator {k} out of range for kappa={kappa}"
            )));
        }
        let mut table = vec![0.0; states * kappa];
        for x in 0..states {
            table[x * kappa + k] = 1.0;
        }
        Ok(Self { kappa, table })
    }

    pub fn uniform(states: usize, kappa: usize) -> Result<Self> {
        Self::constant(states, &vec![1.0 / kappa as f64; kappa])
    }

    /// The same weight vector at every state.
    pub fn constant(states: usize, weights: &[f64]) -> Result<Self> {
        Self::new(vec![weights.to_vec(); states])
    }

    fn validate(&self) -> Result<()> {
        for (x, row) in self.table.chunks_exact(self.kappa).enumerate() {
            if row.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                return Err(Error::Parameter(format!(
                    "q({x}) has a weight outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Parameter(format!("q({x}) sums to {s}, not 1")));
            }
        }
        Ok(())
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn states(&self) -> usize {
        self.table.len() / self.kappa
    }

    /// `q(x)`.
    pub fn weights(&self, x: usize) -> &[f64] {
        &self.table[x * self.kappa..(x + 1) * self.kappa]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.table.chunks_exact(self.kappa)
    }

    /// Expands a per-level distribution (`n + 1` rows) to all `2^n` states.
    pub fn expand_levels(&self, n: u32) -> Result<Self> {
        if self.states() != n as usize + 1 {
            return Err(Error::Dimension(format!(
                "level strategy has {} rows, expected {}",
                self.states(),
                n + 1
            )));
        }
        let table = (0..1usize << n)
            .flat_map(|x| self.weights(x.count_ones() as usize).to_vec())
            .collect();
        Ok(Self {
            kappa: self.kappa,
            table,
        })
    }

    /// Collapses to one row per level when `q` is constant on every level.
    pub fn collapse_levels(&self, n: u32) -> Option<Self> {
        if self.states() != 1usize << n {
            return None;
        }
        let mut levels: Vec<Option<&[f64]>> = vec![None; n as usize + 1];
        for x in 0..self.states() {
            let slot = &mut levels[x.count_ones() as usize];
            match slot {
                None => *slot = Some(self.weights(x)),
                Some(w) if *w != self.weights(x) => return None,
                Some(_) => {}
            }
        }
        let table = levels
            .into_iter()
            .flat_map(|w| w.expect("level populated").to_vec())
            .collect();
        Some(Self {
            kappa: self.kappa,
            table,
        })
    }

    /// The operator index when `q(x)` is a unit vector.
    pub fn pure_choice(&self, x: usize) -> Option<usize> {
        let w = self.weights(x);
        w.iter().position(|&v| v == 1.0)
    }
}

/// `P_mix(x, y) = Σ_k q_k(x) P_k(x, y)`.
pub fn mix(kernels: &[MutationKernel], q: &StrategyDistribution) -> Result<MutationKernel> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::Parameter("mixture needs at least one kernel".into()))?;
    if q.kappa() != kernels.len() {
        return Err(Error::Dimension(format!(
            "strategy has {} operators but {} kernels were given",
            q.kappa(),
            kernels.len()
        )));
    }
    let size = first.size();
    if kernels
        .iter()
        .any(|k| k.n != first.n || k.domain != first.domain || k.size() != size)
    {
        return Err(Error::Dimension(
            "kernels differ in bit count or domain".into(),
        ));
    }
    if q.states() != size {
        return Err(Error::Dimension(format!(
            "strategy covers {} states, kernels have {size}",
            q.states()
        )));
    }
    let mut matrix = Matrix::zeros(size, size);
    for x in 0..size {
        let weights = q.weights(x);
        let row = matrix.row_mut(x);
        for (kernel, &w) in kernels.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            for (dst, &src) in row.iter_mut().zip(kernel.matrix.row(x)) {
                *dst += w * src;
            }
        }
    }
    let names: Vec<&str> = kernels.iter().map(|k| k.label.as_str()).collect();
    MutationKernel {
        n: first.n,
        domain: first.domain,
        matrix,
        label: format!("mix[{}]", names.join(", ")),
    }
    .checked()
}
