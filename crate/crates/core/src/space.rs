//! Bitstring search space, fitness landscapes and the optimal/non-optimal
//! partition.
//!
//! A state is an index in `0..2^n`; bit `i` of the index is `b_{i+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest bit count accepted for enumerated (dense) analysis by default.
pub const DEFAULT_MAX_BITS: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitState {
    pub index: usize,
    pub n: u32,
}

impl BitState {
    /// `|x|`, the number of one bits.
    pub fn ones(&self) -> u32 {
        self.index.count_ones()
    }

    /// `b_i` for `i` in `1..=n`.
    pub fn bit(&self, i: u32) -> bool {
        (self.index >> (i - 1)) & 1 == 1
    }
}

impl std::fmt::Display for BitState {
    /// Prints `b_1 … b_n` left to right.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 1..=self.n {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn check_bits(n: u32, limit: u32) -> Result<()> {
    if n == 0 || n > limit {
        return Err(Error::BitCount { n, limit });
    }
    Ok(())
}

/// All `2^n` states in index order.
pub fn enumerate(n: u32) -> Result<Vec<BitState>> {
    enumerate_with_limit(n, DEFAULT_MAX_BITS)
}

pub fn enumerate_with_limit(n: u32, limit: u32) -> Result<Vec<BitState>> {
    check_bits(n, limit)?;
    Ok((0..1usize << n)
        .map(|index| BitState { index, n })
        .collect())
}

/// Declarative description of a fitness function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LandscapeSpec {
    /// `f(x) = |x|`.
    Onemax { n: u32 },
    /// 0-1 knapsack: `Σ v_i b_i` when `Σ w_i b_i ≤ C`, else 0.
    #[serde(alias = "knapsack-example1")]
    Knapsack {
        values: Vec<f64>,
        weights: Vec<f64>,
        capacity: f64,
    },
    /// `|x| + 2` on odd levels below `n/2`, `|x|` elsewhere.
    #[serde(alias = "staircase-example3")]
    Staircase { n: u32 },
    /// Explicit fitness per state index.
    CustomTable { n: u32, values: Vec<f64> },
}

impl LandscapeSpec {
    /// Ten items, `v = (10, 1, …, 1)`, `w = (9, 1, …, 1)`, `C = 9`.
    pub fn knapsack_example1() -> Self {
        let mut values = vec![1.0; 10];
        let mut weights = vec![1.0; 10];
        values[0] = 10.0;
        weights[0] = 9.0;
        Self::Knapsack {
            values,
            weights,
            capacity: 9.0,
        }
    }

    pub fn n(&self) -> u32 {
        match self {
            Self::Onemax { n } | Self::Staircase { n } | Self::CustomTable { n, .. } => *n,
            Self::Knapsack { values, .. } => values.len() as u32,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Onemax { .. } => "onemax",
            Self::Knapsack { .. } => "knapsack",
            Self::Staircase { .. } => "staircase",
            Self::CustomTable { .. } => "custom-table",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Knapsack {
                values,
                weights,
                capacity,
            } => {
                if values.len() != weights.len() {
                    return Err(Error::Parameter(format!(
                        "knapsack has {} values but {} weights",
                        values.len(),
                        weights.len()
                    )));
                }
                if values
                    .iter()
                    .chain(weights)
                    .chain([capacity])
                    .any(|v| !v.is_finite())
                {
                    return Err(Error::Parameter(
                        "knapsack parameters must be finite".into(),
                    ));
                }
            }
            Self::CustomTable { n, values } => {
                if *n >= usize::BITS || values.len() != 1usize << n {
                    return Err(Error::Parameter(format!(
                        "custom table for n={n} needs 2^{n} values, got {}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parameter(
                        "custom table contains non-finite fitness".into(),
                    ));
                }
            }
            Self::Onemax { .. } | Self::Staircase { .. } => {}
        }
        Ok(())
    }

    /// Fitness of one state straight from the defining formula.
    pub fn evaluate(&self, x: usize) -> f64 {
        match self {
            Self::Onemax { .. } => x.count_ones() as f64,
            Self::Staircase { n } => staircase_level(x.count_ones(), *n),
            Self::Knapsack {
                values,
                weights,
                capacity,
            } => {
                let (mut v, mut w) = (0.0, 0.0);
                for i in 0..values.len() {
                    if (x >> i) & 1 == 1 {
                        v += values[i];
                        w += weights[i];
                    }
                }
                if w <= *capacity {
                    v
                } else {
                    0.0
                }
            }
            Self::CustomTable { values, .. } => values[x],
        }
    }

    /// Fitness per level `0..=n` for kinds defined through `|x|` alone.
    /// Needs no enumeration, so it works for any `n`.
    pub fn level_fitness(&self) -> Option<Vec<f64>> {
        match self {
            Self::Onemax { n } => Some((0..=*n).map(f64::from).collect()),
            Self::Staircase { n } => Some((0..=*n).map(|k| staircase_level(k, *n)).collect()),
            _ => None,
        }
    }
}

fn staircase_level(ones: u32, n: u32) -> f64 {
    // |x| < 0.5n without floating point
    if 2 * ones < n && ones % 2 == 1 {
        f64::from(ones + 2)
    } else {
        f64::from(ones)
    }
}

/// A landscape with its fitness table evaluated for every state.
#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    spec: LandscapeSpec,
    n: u32,
    values: Vec<f64>,
}

impl Landscape {
    pub fn build(spec: LandscapeSpec) -> Result<Self> {
        Self::build_with_limit(spec, DEFAULT_MAX_BITS)
    }

    pub fn build_with_limit(spec: LandscapeSpec, limit: u32) -> Result<Self> {
        let n = spec.n();
        check_bits(n, limit)?;
        spec.validate()?;
        let values: Vec<f64> = (0..1usize << n).map(|x| spec.evaluate(x)).collect();
        Ok(Self { spec, n, values })
    }

    pub fn onemax(n: u32) -> Result<Self> {
        Self::build(LandscapeSpec::Onemax { n })
    }

    pub fn staircase(n: u32) -> Result<Self> {
        Self::build(LandscapeSpec::Staircase { n })
    }

    pub fn knapsack_example1() -> Self {
        Self::build(LandscapeSpec::knapsack_example1()).expect("built-in parameters are valid")
    }

    pub fn custom(n: u32, values: Vec<f64>) -> Result<Self> {
        Self::build(LandscapeSpec::CustomTable { n, values })
    }

    pub fn spec(&self) -> &LandscapeSpec {
        &self.spec
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn fitness(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_fitness(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fitness per level if every state on a level shares one value.
    pub fn level_fitness(&self) -> Result<Vec<f64>> {
        let mut levels: Vec<Option<(usize, f64)>> = vec![None; self.n as usize + 1];
        for (x, &f) in self.values.iter().enumerate() {
            let slot = &mut levels[x.count_ones() as usize];
            match slot {
                None => *slot = Some((x, f)),
                Some((a, g)) if *g != f => return Err(Error::NotSymmetric { a: *a, b: x }),
                Some(_) => {}
            }
        }
        Ok(levels
            .into_iter()
            .map(|l| l.expect("every level is populated").1)
            .collect())
    }
}

/// States split into the optimal set and the fitness-ordered rest.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    /// Maximizers in ascending index order.
    pub optimal: Vec<usize>,
    /// Everything else by fitness descending, ties by ascending index.
    pub non_optimal: Vec<usize>,
    pub max_fitness: f64,
}

impl Partition {
    /// Partition of an arbitrary fitness vector (states or lumped levels).
    pub fn from_fitness(fitness: &[f64]) -> Self {
        let max_fitness = fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (optimal, mut non_optimal): (Vec<usize>, Vec<usize>) =
            (0..fitness.len()).partition(|&x| fitness[x] == max_fitness);
        non_optimal.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        Self {
            optimal,
            non_optimal,
            max_fitness,
        }
    }

    /// Canonical state order: optimal states first, then non-optimal.
    pub fn canonical_order(&self) -> Vec<usize> {
        self.optimal
            .iter()
            .chain(&self.non_optimal)
            .copied()
            .collect()
    }

    pub fn is_optimal(&self, x: usize) -> bool {
        self.optimal.binary_search(&x).is_ok()
    }
}

pub fn partition_optimal(landscape: &Landscape) -> Partition {
    Partition::from_fitness(landscape.values())
}
