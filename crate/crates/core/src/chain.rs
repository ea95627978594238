//! Strict-elitist Markov chains in canonical form and the quantities
//! derived from them: spectral radius of the non-optimal block, asymptotic
//! convergence rate, asymptotic hitting time and the exact hitting-time
//! vector from the fundamental matrix.

use crate::error::{Error, Result};
use crate::linalg::{power_iteration, Lu, Matrix, PowerIteration};
use crate::mutate::{KernelDomain, MutationKernel, Operator};
use crate::space::{Landscape, Partition};

/// A self-loop probability at or above `1 - TRAP_TOL` marks an absorbing
/// non-optimal state.
pub const TRAP_TOL: f64 = 1e-12;
/// Allowed disagreement between the diagonal rule and power iteration.
pub const ORACLE_TOL: f64 = 1e-10;
pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITERS: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct ElitistChain {
    pub domain: KernelDomain,
    /// Fitness per original index (state or level).
    pub fitness: Vec<f64>,
    pub partition: Partition,
    /// Transition matrix with rows and columns in canonical order.
    pub full_matrix: Matrix,
    /// Block over `partition.non_optimal`, same order.
    pub sub_matrix_t: Matrix,
    /// `P(x, x)` for each non-optimal `x`, same order.
    pub diag: Vec<f64>,
}

/// Applies strict elitist selection to a mutation kernel.
pub fn build_chain(kernel: &MutationKernel, landscape: &Landscape) -> Result<ElitistChain> {
    if kernel.domain != KernelDomain::States || kernel.n != landscape.n() {
        return Err(Error::Dimension(format!(
            "kernel over n={} ({:?}) does not match landscape n={}",
            kernel.n,
            kernel.domain,
            landscape.n()
        )));
    }
    Ok(ElitistChain::from_kernel(kernel, landscape.values()))
}

impl ElitistChain {
    /// Elitist chain of `kernel` under the given fitness vector; the
    /// vector is indexed the same way as the kernel rows.
    pub fn from_kernel(kernel: &MutationKernel, fitness: &[f64]) -> Self {
        let size = kernel.size();
        assert_eq!(size, fitness.len(), "fitness vector length");
        let partition = Partition::from_fitness(fitness);
        let order = partition.canonical_order();
        let mut position = vec![0usize; size];
        for (pos, &x) in order.iter().enumerate() {
            position[x] = pos;
        }
        let mut full_matrix = Matrix::zeros(size, size);
        for (pos, &x) in order.iter().enumerate() {
            let fx = fitness[x];
            let src = kernel.matrix.row(x);
            let dst = full_matrix.row_mut(pos);
            let mut moved = 0.0;
            for (y, &p) in src.iter().enumerate() {
                if y != x && fitness[y] > fx && p > 0.0 {
                    dst[position[y]] = p;
                    moved += p;
                }
            }
            // rounding can push the remainder a hair below zero
            dst[pos] = (1.0 - moved).max(0.0);
        }
        let non_pos: Vec<usize> = (partition.optimal.len()..size).collect();
        let sub_matrix_t = full_matrix.select(&non_pos, &non_pos);
        let diag = sub_matrix_t.diagonal();
        Self {
            domain: kernel.domain,
            fitness: fitness.to_vec(),
            partition,
            full_matrix,
            sub_matrix_t,
            diag,
        }
    }

    pub fn non_optimal(&self) -> &[usize] {
        &self.partition.non_optimal
    }

    /// Self-loop probability of an original index.
    pub fn self_loop(&self, x: usize) -> f64 {
        let pos = self
            .partition
            .canonical_order()
            .iter()
            .position(|&s| s == x)
            .expect("index belongs to the chain");
        self.full_matrix.get(pos, pos)
    }

    /// Non-optimal indices whose self-loop is (numerically) one.
    pub fn traps(&self) -> Vec<usize> {
        self.partition
            .non_optimal
            .iter()
            .zip(&self.diag)
            .filter(|(_, &d)| d >= 1.0 - TRAP_TOL)
            .map(|(&x, _)| x)
            .collect()
    }

    /// Uniform distribution over all bitstrings expressed on this chain's
    /// indices: flat for states, binomial for levels.
    pub fn uniform_init(&self) -> Vec<f64> {
        let size = self.fitness.len();
        match self.domain {
            KernelDomain::States => vec![1.0 / size as f64; size],
            KernelDomain::Levels => {
                let n = (size - 1) as u32;
                (0..=n)
                    .map(|i| (ln_choose(n, i) - f64::from(n) * std::f64::consts::LN_2).exp())
                    .collect()
            }
        }
    }
}

/// `ρ(T)` by the diagonal rule: the largest self-loop among non-optimal
/// states. Zero when every state is optimal.
pub fn spectral_radius(chain: &ElitistChain) -> f64 {
    chain.diag.iter().copied().fold(0.0, f64::max)
}

pub fn power_iteration_radius(t: &Matrix, tol: f64, max_iters: usize) -> Result<PowerIteration> {
    power_iteration(t, tol, max_iters)
}

/// Diagonal-rule radius alongside the power-iteration oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusCheck {
    pub diagonal: f64,
    pub oracle: PowerIteration,
}

impl RadiusCheck {
    pub fn difference(&self) -> f64 {
        (self.diagonal - self.oracle.estimate).abs()
    }

    pub fn agrees(&self) -> bool {
        self.difference() <= ORACLE_TOL
    }
}

pub fn check_spectral_radius(chain: &ElitistChain) -> Result<RadiusCheck> {
    let oracle = power_iteration_radius(&chain.sub_matrix_t, POWER_TOL, POWER_MAX_ITERS)?;
    Ok(RadiusCheck {
        diagonal: spectral_radius(chain),
        oracle,
    })
}

/// Diagonal-rule radius, failing if the oracle converged to something else.
pub fn spectral_radius_verified(chain: &ElitistChain) -> Result<f64> {
    let check = check_spectral_radius(chain)?;
    if check.oracle.converged && !check.agrees() {
        return Err(Error::TheoremViolation(format!(
            "max self-loop {} differs from power iteration {} by {:e}",
            check.diagonal,
            check.oracle.estimate,
            check.difference()
        )));
    }
    Ok(check.diagonal)
}

/// `R(T) = -ln ρ(T)`, zero at `ρ = 1`, infinite at `ρ = 0`.
pub fn convergence_rate(rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Parameter(format!(
            "spectral radius {rho} outside [0, 1]"
        )));
    }
    Ok(if rho == 1.0 {
        0.0
    } else if rho == 0.0 {
        f64::INFINITY
    } else {
        -rho.ln()
    })
}

/// `1 / (1 - ρ)`, infinite once `ρ` is within `TRAP_TOL` of one.
pub fn hitting_time_from_radius(rho: f64) -> f64 {
    if rho >= 1.0 - TRAP_TOL {
        f64::INFINITY
    } else {
        1.0 / (1.0 - rho)
    }
}

/// `R(T) · T(T) = -ln ρ / (1 - ρ)` for `ρ` in `(0, 1)`.
pub fn rate_time_product(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!(
            "rate-time product needs 0 < rho < 1, got {rho}"
        )));
    }
    Ok(-rho.ln() / (1.0 - rho))
}

/// Exact expected hitting times of the non-optimal states.
#[derive(Clone, Debug, PartialEq)]
pub enum HittingTimes {
    /// `m` in `partition.non_optimal` order and the residual
    /// `‖(I - T) m - 1‖∞` of the solve.
    Finite { m: Vec<f64>, residual: f64 },
    /// Some non-optimal state is absorbing (or `I - T` is singular).
    Infinite,
}

impl HittingTimes {
    pub fn finite(&self) -> Option<&[f64]> {
        match self {
            Self::Finite { m, .. } => Some(m),
            Self::Infinite => None,
        }
    }

    pub fn min(&self) -> f64 {
        self.finite().map_or(f64::INFINITY, |m| {
            m.iter().copied().fold(f64::INFINITY, f64::min)
        })
    }

    pub fn max(&self) -> f64 {
        self.finite()
            .map_or(f64::INFINITY, |m| m.iter().copied().fold(0.0, f64::max))
    }

    pub fn mean(&self) -> f64 {
        match self.finite() {
            Some([]) => 0.0,
            Some(m) => m.iter().sum::<f64>() / m.len() as f64,
            None => f64::INFINITY,
        }
    }
}

/// Solves `(I - T) m = 1` by LU with partial pivoting.
pub fn hitting_time_vector(chain: &ElitistChain) -> HittingTimes {
    if spectral_radius(chain) >= 1.0 - TRAP_TOL {
        return HittingTimes::Infinite;
    }
    let t = &chain.sub_matrix_t;
    let size = t.rows();
    let mut a = Matrix::identity(size);
    for r in 0..size {
        for (dst, &v) in a.row_mut(r).iter_mut().zip(t.row(r)) {
            *dst -= v;
        }
    }
    let lu = match Lu::factor(a, 0.0) {
        Ok(lu) => lu,
        Err(_) => return HittingTimes::Infinite,
    };
    let ones = vec![1.0; size];
    let m = lu.solve(&ones);
    let tm = t.mul_vec(&m);
    let residual = m
        .iter()
        .zip(&tm)
        .map(|(mi, ti)| (mi - ti - 1.0).abs())
        .fold(0.0, f64::max);
    HittingTimes::Finite { m, residual }
}

/// `ρ(N) = ρ((I - T)^{-1}) = 1 / (1 - ρ(T))`, or infinity.
pub fn asymptotic_hitting_time(chain: &ElitistChain) -> f64 {
    hitting_time_from_radius(spectral_radius(chain))
}

/// `p_0 · m` with `p0` indexed by the chain's original indices; mass on
/// optimal states contributes zero.
pub fn expected_hitting_from(
    chain: &ElitistChain,
    times: &HittingTimes,
    p0: &[f64],
) -> Result<f64> {
    if p0.len() != chain.fitness.len() {
        return Err(Error::Dimension(format!(
            "initial distribution has {} entries, chain has {}",
            p0.len(),
            chain.fitness.len()
        )));
    }
    let non = chain.non_optimal();
    match times {
        HittingTimes::Finite { m, .. } => Ok(non.iter().zip(m).map(|(&x, mx)| p0[x] * mx).sum()),
        // conservative: any non-optimal start counts as never finishing
        HittingTimes::Infinite => Ok(if non.iter().any(|&x| p0[x] > 0.0) {
            f64::INFINITY
        } else {
            0.0
        }),
    }
}

/// Everything the exact analysis reports for one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisReport {
    pub rho_t: f64,
    pub rate_r: f64,
    pub hitting_t: f64,
    pub times: HittingTimes,
    pub traps: Vec<usize>,
}

impl AnalysisReport {
    /// Runs the full analysis and checks the sandwich
    /// `min m ≤ 1 / (1 - ρ) ≤ max m`.
    pub fn analyze(chain: &ElitistChain) -> Result<Self> {
        let rho_t = spectral_radius(chain);
        let rate_r = convergence_rate(rho_t.clamp(0.0, 1.0))?;
        let hitting_t = asymptotic_hitting_time(chain);
        let times = hitting_time_vector(chain);
        if let HittingTimes::Finite { m, .. } = &times {
            if !m.is_empty() && hitting_t.is_finite() {
                let slack = 1e-9 * hitting_t.max(1.0);
                if hitting_t < times.min() - slack || hitting_t > times.max() + slack {
                    return Err(Error::TheoremViolation(format!(
                        "asymptotic hitting time {hitting_t} outside [{}, {}]",
                        times.min(),
                        times.max()
                    )));
                }
            }
        }
        Ok(Self {
            rho_t,
            rate_r,
            hitting_t,
            times,
            traps: chain.traps(),
        })
    }

    pub fn expected_hitting_from(&self, chain: &ElitistChain, p0: &[f64]) -> Result<f64> {
        expected_hitting_from(chain, &self.times, p0)
    }
}

fn ln_choose(n: u32, k: u32) -> f64 {
    let ln_fact = |m: u32| (1..=m).map(|i| f64::from(i).ln()).sum::<f64>();
    ln_fact(n) - ln_fact(k) - ln_fact(n - k)
}

/// Exact level-to-level mutation kernel for operators that treat bit
/// positions exchangeably. Row `i` is the distribution of `|y|` for a
/// parent with `|x| = i`.
pub fn lumped_kernel(n: u32, op: Operator) -> Result<MutationKernel> {
    if n == 0 {
        return Err(Error::BitCount { n, limit: u32::MAX });
    }
    op.validate()?;
    let size = n as usize + 1;
    let mut matrix = Matrix::zeros(size, size);
    match op {
        Operator::SingleBitFlip => {
            let nf = f64::from(n);
            for i in 0..=n {
                let row = matrix.row_mut(i as usize);
                if i > 0 {
                    row[i as usize - 1] = f64::from(i) / nf;
                }
                if i < n {
                    row[i as usize + 1] = f64::from(n - i) / nf;
                }
            }
        }
        Operator::PerBitFlip { p } => {
            let (lp, lq) = (p.ln(), (-p).ln_1p());
            for i in 0..=n {
                let row = matrix.row_mut(i as usize);
                // a ones cleared, b zeros set: j = i - a + b
                for a in 0..=i {
                    for b in 0..=(n - i) {
                        let flips = f64::from(a + b);
                        let ln = ln_choose(i, a)
                            + ln_choose(n - i, b)
                            + flips * lp
                            + (f64::from(n) - flips) * lq;
                        row[(i - a + b) as usize] += ln.exp();
                    }
                }
            }
        }
    }
    let kernel = MutationKernel {
        n,
        domain: KernelDomain::Levels,
        matrix,
        label: format!("lumped {}", op.label()),
    };
    let err = kernel.matrix.max_row_sum_error();
    if err > crate::mutate::ROW_SUM_TOL {
        return Err(Error::Parameter(format!(
            "lumped rows deviate from 1 by {err:e}"
        )));
    }
    Ok(kernel)
}

/// Elitist chain over levels `0..=n`. Exact for landscapes that depend on
/// `|x|` only.
pub fn build_lumped_chain(level_fitness: &[f64], op: Operator) -> Result<ElitistChain> {
    if level_fitness.len() < 2 {
        return Err(Error::Parameter(
            "level fitness needs entries for 0..=n with n ≥ 1".into(),
        ));
    }
    if level_fitness.iter().any(|f| !f.is_finite()) {
        return Err(Error::Parameter(
            "level fitness contains non-finite values".into(),
        ));
    }
    let kernel = lumped_kernel(level_fitness.len() as u32 - 1, op)?;
    Ok(ElitistChain::from_kernel(&kernel, level_fitness))
}
