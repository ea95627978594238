//! Direct simulation of pure and mixed strategy (1+1) EAs.
//!
//! Mutation is sampled bit by bit, never through a dense kernel, so runs
//! scale to any landscape that fits in memory. Each replica draws from its
//! own ChaCha8 stream, `ChaCha8Rng::seed_from_u64(master_seed)` with
//! `set_stream(run_index)`, which makes results independent of scheduling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{build_chain, build_lumped_chain, AnalysisReport, ElitistChain, TRAP_TOL};
use crate::error::{Error, Result};
use crate::mutate::{mix, Operator, StrategyDistribution, DENSE_MAX_BITS};
use crate::space::Landscape;

/// Identity of the per-run generator, recorded in reports.
pub const RNG_NAME: &str = "chacha8(seed_from_u64(master_seed), stream=run_index)";

pub const DEFAULT_MAX_GENERATIONS: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// Uniform over all `2^n` states.
    Uniform,
    Fixed(usize),
    /// Probability per state index.
    Custom(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimStrategy {
    Pure(Operator),
    /// `q` indexed by state.
    Mixed {
        operators: Vec<Operator>,
        q: StrategyDistribution,
    },
}

impl SimStrategy {
    pub fn operators(&self) -> Vec<Operator> {
        match self {
            Self::Pure(op) => vec![*op],
            Self::Mixed { operators, .. } => operators.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub strategy: SimStrategy,
    pub runs: usize,
    pub master_seed: u64,
    pub max_generations: u64,
    pub init: Init,
    /// Spread replicas over the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl RunConfig {
    pub fn new(strategy: SimStrategy, runs: usize, master_seed: u64) -> Self {
        Self {
            strategy,
            runs,
            master_seed,
            max_generations: DEFAULT_MAX_GENERATIONS,
            init: Init::Uniform,
            parallel: true,
        }
    }

    pub fn validate(&self, landscape: &Landscape) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Parameter("runs must be at least 1".into()));
        }
        if self.max_generations == 0 {
            return Err(Error::Parameter(
                "max_generations must be at least 1".into(),
            ));
        }
        for op in self.strategy.operators() {
            op.validate()?;
        }
        if let SimStrategy::Mixed { operators, q } = &self.strategy {
            if q.kappa() != operators.len() || q.states() != landscape.len() {
                return Err(Error::Dimension(format!(
                    "strategy table is {}x{}, expected {}x{}",
                    q.states(),
                    q.kappa(),
                    landscape.len(),
                    operators.len()
                )));
            }
        }
        match &self.init {
            Init::Uniform => {}
            Init::Fixed(s) if *s < landscape.len() => {}
            Init::Fixed(s) => {
                return Err(Error::Parameter(format!(
                    "initial state {s} outside the space"
                )))
            }
            Init::Custom(p) => {
                if p.len() != landscape.len() || p.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::Parameter(
                        "custom init must give a weight per state".into(),
                    ));
                }
                let s: f64 = p.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Parameter(format!("custom init sums to {s}, not 1")));
                }
            }
        }
        Ok(())
    }
}

/// Bits per precomputed flip-mask table.
const CHUNK_BITS: u32 = 8;

/// Samples one operator's offspring without a dense kernel. Per-bit flips
/// draw a flip mask for every byte of the bit string from a table of the
/// `2^8` mask probabilities, which is exact per bit and independent across
/// bits.
#[derive(Clone, Debug)]
pub struct Mutator {
    n: u32,
    chunks: Option<Vec<(u32, WeightedIndex<f64>)>>,
}

impl Mutator {
    pub fn new(op: &Operator, n: u32) -> Result<Self> {
        op.validate()?;
        let chunks = match *op {
            Operator::SingleBitFlip => None,
            Operator::PerBitFlip { p } => {
                let mut chunks = Vec::new();
                let mut offset = 0;
                while offset < n {
                    let width = CHUNK_BITS.min(n - offset);
                    let weights = (0u32..1 << width).map(|mask| {
                        let k = mask.count_ones() as i32;
                        p.powi(k) * (1.0 - p).powi(width as i32 - k)
                    });
                    let table = WeightedIndex::new(weights)
                        .map_err(|e| Error::Parameter(format!("flip rate {p}: {e}")))?;
                    chunks.push((offset, table));
                    offset += width;
                }
                Some(chunks)
            }
        };
        Ok(Self { n, chunks })
    }

    pub fn sample<R: Rng>(&self, x: usize, rng: &mut R) -> usize {
        match &self.chunks {
            None => x ^ (1 << rng.gen_range(0..self.n)),
            Some(chunks) => chunks.iter().fold(x, |child, (offset, table)| {
                child ^ (table.sample(rng) << offset)
            }),
        }
    }
}

/// One-off mutation; build a [`Mutator`] instead when sampling repeatedly.
pub fn mutate<R: Rng>(op: &Operator, x: usize, n: u32, rng: &mut R) -> usize {
    Mutator::new(op, n).expect("valid operator").sample(x, rng)
}

fn pick<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the total; take the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn run_rng(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

/// One replica. `observe` sees `(generation, state)` at the start and
/// after every accepted move. Returns the hitting generation, or `None`
/// when the cap was reached first.
pub fn run_once_observed(
    landscape: &Landscape,
    config: &RunConfig,
    run_index: u64,
    mut observe: impl FnMut(u64, usize),
) -> Option<u64> {
    let mut rng = run_rng(config.master_seed, run_index);
    let n = landscape.n();
    let mutators: Vec<Mutator> = config
        .strategy
        .operators()
        .iter()
        .map(|op| Mutator::new(op, n).expect("operators validated before running"))
        .collect();
    let target = landscape.max_fitness();
    let mut x = match &config.init {
        Init::Uniform => rng.gen_range(0..landscape.len()),
        Init::Fixed(s) => *s,
        Init::Custom(p) => pick(p, &mut rng),
    };
    let mut fx = landscape.fitness(x);
    observe(0, x);
    if fx == target {
        return Some(0);
    }
    for gen in 1..=config.max_generations {
        let child = match &config.strategy {
            SimStrategy::Pure(_) => mutators[0].sample(x, &mut rng),
            SimStrategy::Mixed { q, .. } => {
                let weights = q.weights(x);
                let k = q.pure_choice(x).unwrap_or_else(|| pick(weights, &mut rng));
                mutators[k].sample(x, &mut rng)
            }
        };
        let fc = landscape.fitness(child);
        if fc > fx {
            x = child;
            fx = fc;
            observe(gen, x);
            if fx == target {
                return Some(gen);
            }
        }
    }
    None
}

pub fn run_once(landscape: &Landscape, config: &RunConfig, run_index: u64) -> Option<u64> {
    run_once_observed(landscape, config, run_index, |_, _| {})
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    /// Hitting generation per run; `None` when censored at the cap.
    pub per_run: Vec<Option<u64>>,
    /// Over uncensored runs only.
    pub mean: Option<f64>,
    /// Standard error of `mean`; absent with fewer than two uncensored runs.
    pub stderr: Option<f64>,
    /// Mean with every censored run counted at the cap: a lower bound on the
    /// true mean that charges censoring against the strategy.
    pub capped_mean: Option<f64>,
    pub censored: usize,
    pub max_generations: u64,
    pub rng: &'static str,
}

impl RunOutcome {
    pub fn from_runs(per_run: Vec<Option<u64>>, max_generations: u64) -> Self {
        let done: Vec<f64> = per_run.iter().flatten().map(|&g| g as f64).collect();
        let censored = per_run.len() - done.len();
        let count = done.len() as f64;
        let mean = (!done.is_empty()).then(|| done.iter().sum::<f64>() / count);
        let stderr = mean.filter(|_| done.len() > 1).map(|m| {
            let var = done.iter().map(|g| (g - m).powi(2)).sum::<f64>() / (count - 1.0);
            (var / count).sqrt()
        });
        let capped_mean = (!per_run.is_empty()).then(|| {
            let total: f64 = per_run
                .iter()
                .map(|g| g.unwrap_or(max_generations) as f64)
                .sum();
            total / per_run.len() as f64
        });
        Self {
            per_run,
            mean,
            stderr,
            capped_mean,
            censored,
            max_generations,
            rng: RNG_NAME,
        }
    }

    pub fn uncensored(&self) -> usize {
        self.per_run.len() - self.censored
    }

    /// Every run hit the cap.
    pub fn no_uncensored_data(&self) -> bool {
        self.mean.is_none()
    }
}

pub fn estimate(landscape: &Landscape, config: &RunConfig) -> Result<RunOutcome> {
    config.validate(landscape)?;
    let one = |i: usize| run_once(landscape, config, i as u64);
    let per_run: Vec<Option<u64>> = if config.parallel {
        (0..config.runs).into_par_iter().map(one).collect()
    } else {
        (0..config.runs).map(one).collect()
    };
    Ok(RunOutcome::from_runs(per_run, config.max_generations))
}

/// Initial distribution over the landscape's states.
pub fn init_distribution(init: &Init, size: usize) -> Vec<f64> {
    match init {
        Init::Uniform => vec![1.0 / size as f64; size],
        Init::Fixed(s) => {
            let mut p = vec![0.0; size];
            p[*s] = 1.0;
            p
        }
        Init::Custom(p) => p.clone(),
    }
}

/// Exact chain and analysis for a simulated strategy, built densely when
/// the space is small enough and over levels otherwise.
pub fn exact_analysis(
    landscape: &Landscape,
    strategy: &SimStrategy,
) -> Result<(ElitistChain, AnalysisReport)> {
    let n = landscape.n();
    let chain = if n <= DENSE_MAX_BITS {
        match strategy {
            SimStrategy::Pure(op) => build_chain(&op.kernel(n)?, landscape)?,
            SimStrategy::Mixed { operators, q } => {
                let kernels = operators
                    .iter()
                    .map(|o| o.kernel(n))
                    .collect::<Result<Vec<_>>>()?;
                build_chain(&mix(&kernels, q)?, landscape)?
            }
        }
    } else {
        let levels = landscape.level_fitness()?;
        match strategy {
            SimStrategy::Pure(op) => build_lumped_chain(&levels, *op)?,
            SimStrategy::Mixed { operators, q } => {
                let q_levels = q.collapse_levels(n).ok_or_else(|| {
                    Error::Parameter(
                        "lumped analysis needs a strategy constant on each level".into(),
                    )
                })?;
                let kernels = operators
                    .iter()
                    .map(|o| crate::chain::lumped_kernel(n, *o))
                    .collect::<Result<Vec<_>>>()?;
                ElitistChain::from_kernel(&mix(&kernels, &q_levels)?, &levels)
            }
        }
    };
    let report = AnalysisReport::analyze(&chain)?;
    Ok((chain, report))
}

/// `p_0 · m` on either chain domain, from a per-state initial distribution.
pub fn exact_expected(
    chain: &ElitistChain,
    report: &AnalysisReport,
    p0_states: &[f64],
) -> Result<f64> {
    let size = chain.fitness.len();
    if size == p0_states.len() {
        return report.expected_hitting_from(chain, p0_states);
    }
    // lumped chain: aggregate the state distribution onto levels
    let mut p0 = vec![0.0; size];
    for (x, &p) in p0_states.iter().enumerate() {
        p0[x.count_ones() as usize] += p;
    }
    report.expected_hitting_from(chain, &p0)
}

/// Simulation against exact analysis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Agreement {
    pub exact: f64,
    pub empirical: Option<f64>,
    pub stderr: Option<f64>,
    pub z: Option<f64>,
    pub censored: usize,
    /// `|z| > 3`.
    pub flagged: bool,
    /// Exact side infinite yet no run was censored, or exact finite and
    /// nothing finished.
    pub inconsistent: bool,
}

pub const Z_LIMIT: f64 = 3.0;

pub fn compare(outcome: &RunOutcome, exact: f64) -> Agreement {
    let z = match (outcome.mean, outcome.stderr) {
        (Some(m), Some(se)) if exact.is_finite() => Some(if se > 0.0 {
            (m - exact) / se
        } else if (m - exact).abs() <= 1e-12 * exact.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY.copysign(m - exact)
        }),
        _ => None,
    };
    let inconsistent = if exact.is_finite() {
        outcome.no_uncensored_data()
    } else {
        outcome.censored == 0
    };
    Agreement {
        exact,
        empirical: outcome.mean,
        stderr: outcome.stderr,
        z,
        censored: outcome.censored,
        flagged: z.is_some_and(|z| z.abs() > Z_LIMIT),
        inconsistent,
    }
}

/// Runs the simulation and compares its mean with `p_0 · m`.
pub fn cross_validate(
    landscape: &Landscape,
    config: &RunConfig,
) -> Result<(RunOutcome, Agreement)> {
    let (chain, report) = exact_analysis(landscape, &config.strategy)?;
    let p0 = init_distribution(&config.init, landscape.len());
    let exact = exact_expected(&chain, &report, &p0)?;
    let outcome = estimate(landscape, config)?;
    let agreement = compare(&outcome, exact);
    Ok((outcome, agreement))
}

/// True when some start state with positive mass is a trap of the exact
/// chain; such runs can only end censored.
pub fn starts_in_trap(chain: &ElitistChain, p0: &[f64]) -> bool {
    chain
        .non_optimal()
        .iter()
        .zip(&chain.diag)
        .any(|(&x, &d)| d >= 1.0 - TRAP_TOL && p0.get(x).is_some_and(|&p| p > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure(op: Operator, runs: usize) -> RunConfig {
        RunConfig::new(SimStrategy::Pure(op), runs, 7)
    }

    #[test]
    fn forced_single_bit_move() {
        let l = Landscape::onemax(1).unwrap();
        let mut c = pure(Operator::SingleBitFlip, 20);
        c.init = Init::Fixed(0);
        let out = estimate(&l, &c).unwrap();
        assert!(out.per_run.iter().all(|&g| g == Some(1)));
        assert_eq!(out.mean, Some(1.0));
        assert_eq!(out.stderr, Some(0.0));
    }

    #[test]
    fn optimal_start_takes_zero_generations() {
        let l = Landscape::onemax(4).unwrap();
        let mut c = pure(Operator::PerBitFlip { p: 0.25 }, 5);
        c.init = Init::Fixed(15);
        let out = estimate(&l, &c).unwrap();
        assert!(out.per_run.iter().all(|&g| g == Some(0)));
    }

    #[test]
    fn single_run_has_no_stderr() {
        let l = Landscape::onemax(4).unwrap();
        let out = estimate(&l, &pure(Operator::SingleBitFlip, 1)).unwrap();
        assert!(out.mean.is_some());
        assert_eq!(out.stderr, None);
    }

    #[test]
    fn invalid_configs() {
        let l = Landscape::onemax(3).unwrap();
        assert!(estimate(&l, &pure(Operator::SingleBitFlip, 0)).is_err());
        let mut c = pure(Operator::SingleBitFlip, 1);
        c.max_generations = 0;
        assert!(estimate(&l, &c).is_err());
        c.max_generations = 10;
        c.init = Init::Custom(vec![0.5; 8]);
        assert!(estimate(&l, &c).is_err());
        c.init = Init::Fixed(8);
        assert!(estimate(&l, &c).is_err());
    }

    #[test]
    fn trap_start_is_censored() {
        let l = Landscape::staircase(6).unwrap();
        let mut c = pure(Operator::SingleBitFlip, 4);
        c.init = Init::Fixed(0b1);
        c.max_generations = 1000;
        let out = estimate(&l, &c).unwrap();
        assert_eq!(out.censored, 4);
        assert!(out.no_uncensored_data());
        let (chain, report) = exact_analysis(&l, &c.strategy).unwrap();
        let p0 = init_distribution(&c.init, l.len());
        assert!(starts_in_trap(&chain, &p0));
        let a = compare(&out, exact_expected(&chain, &report, &p0).unwrap());
        assert!(!a.inconsistent);
        assert_eq!(a.z, None);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let l = Landscape::knapsack_example1();
        let mut c = pure(Operator::PerBitFlip { p: 0.3 }, 64);
        c.max_generations = 5_000;
        let par = estimate(&l, &c).unwrap();
        c.parallel = false;
        assert_eq!(par, estimate(&l, &c).unwrap());
    }

    #[test]
    fn per_bit_flip_frequencies() {
        let mut rng = run_rng(1, 0);
        for p in [0.1, 0.9] {
            let m = Mutator::new(&Operator::PerBitFlip { p }, 11).unwrap();
            let mut counts = [0u32; 11];
            let draws = 20_000;
            for _ in 0..draws {
                let y = m.sample(0, &mut rng);
                for (b, c) in counts.iter_mut().enumerate() {
                    *c += ((y >> b) & 1) as u32;
                }
            }
            for c in counts {
                let freq = f64::from(c) / f64::from(draws);
                assert!((freq - p).abs() < 0.015, "p={p} freq={freq}");
            }
        }
    }
}
