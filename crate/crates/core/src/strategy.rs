//! Complementarity of mutation operators, the mixed strategies built from
//! it, and the dominance checks comparing mixed against pure strategies.
//!
//! All routines work on chains sharing one fitness vector, so they apply
//! unchanged to full state chains and to lumped level chains.

use serde::Serialize;

use crate::chain::{convergence_rate, hitting_time_from_radius, spectral_radius, ElitistChain};
use crate::error::{Error, Result};
use crate::mutate::{mix, MutationKernel, StrategyDistribution};

/// Tolerance for "equals ρ" and margin for every strict inequality.
pub const COMPLEMENT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateMode {
    Pairwise,
    Mutual,
}

/// A state where the hypothesis fired and the conclusion held.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub state: usize,
    /// Operator whose self-loop triggered the hypothesis.
    pub triggered_by: usize,
    pub triggered_self_loop: f64,
    /// Operator satisfying the strict inequality.
    pub operator: usize,
    pub self_loop: f64,
    pub threshold: f64,
}

/// A state where the hypothesis fired and no operator satisfied the
/// conclusion. `self_loops` lists `P_sk(x, x)` for every operator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub state: usize,
    pub triggered_by: usize,
    pub self_loops: Vec<f64>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplementarityCertificate {
    pub mode: CertificateMode,
    pub holds: bool,
    /// `ρ(T_sk)` per operator.
    pub radii: Vec<f64>,
    pub threshold: f64,
    pub witnesses: Vec<Witness>,
    pub violations: Vec<Violation>,
}

impl ComplementarityCertificate {
    /// Re-evaluates every recorded inequality against the chains.
    pub fn replay(&self, chains: &[&ElitistChain]) -> bool {
        let loops = |k: usize, x: usize| self_loop_of(chains[k], x);
        self.witnesses.iter().all(|w| {
            loops(w.triggered_by, w.state) == w.triggered_self_loop
                && loops(w.operator, w.state) == w.self_loop
                && w.self_loop < w.threshold - COMPLEMENT_TOL
        }) && self.violations.iter().all(|v| {
            v.self_loops
                .iter()
                .enumerate()
                .all(|(k, &p)| loops(k, v.state) == p)
        })
    }
}

fn self_loop_of(chain: &ElitistChain, x: usize) -> f64 {
    let pos = chain
        .non_optimal()
        .iter()
        .position(|&s| s == x)
        .expect("state is non-optimal");
    chain.diag[pos]
}

fn same_landscape(chains: &[&ElitistChain]) -> Result<()> {
    let first = chains[0];
    if chains
        .iter()
        .any(|c| c.fitness != first.fitness || c.domain != first.domain)
    {
        return Err(Error::Dimension(
            "chains were built on different landscapes".into(),
        ));
    }
    Ok(())
}

/// Tests whether `a` is complementary to `b`: at every non-optimal `x`
/// where `P_a(x, x) = ρ(T_a)`, require `P_b(x, x) < ρ(T_a)`.
///
/// The mixed strategy that beats `a` switches to `b` on exactly these
/// states (see [`design_against`]).
pub fn check_pairwise(a: &ElitistChain, b: &ElitistChain) -> Result<ComplementarityCertificate> {
    same_landscape(&[a, b])?;
    let rho_a = spectral_radius(a);
    let radii = vec![rho_a, spectral_radius(b)];
    let mut witnesses = Vec::new();
    let mut violations = Vec::new();
    for ((&x, &pa), &pb) in a.non_optimal().iter().zip(&a.diag).zip(&b.diag) {
        if (pa - rho_a).abs() > COMPLEMENT_TOL {
            continue;
        }
        if pb < rho_a - COMPLEMENT_TOL {
            witnesses.push(Witness {
                state: x,
                triggered_by: 0,
                triggered_self_loop: pa,
                operator: 1,
                self_loop: pb,
                threshold: rho_a,
            });
        } else {
            violations.push(Violation {
                state: x,
                triggered_by: 0,
                self_loops: vec![pa, pb],
                threshold: rho_a,
            });
        }
    }
    Ok(ComplementarityCertificate {
        mode: CertificateMode::Pairwise,
        holds: violations.is_empty(),
        radii,
        threshold: rho_a,
        witnesses,
        violations,
    })
}

/// Tests mutual complementarity: for every non-optimal `x` and operator
/// `l` with `P_l(x, x) ≥ min_k ρ(T_k)`, some other operator must have
/// `P_k(x, x) < min_k ρ(T_k)`.
///
/// The recorded witness is the operator with the smallest self-loop at
/// `x`, lowest index on ties.
pub fn check_mutual(chains: &[&ElitistChain]) -> Result<ComplementarityCertificate> {
    if chains.len() < 2 {
        return Err(Error::Parameter(format!(
            "mutual complementarity needs at least 2 operators, got {}",
            chains.len()
        )));
    }
    same_landscape(chains)?;
    let radii: Vec<f64> = chains.iter().map(|c| spectral_radius(c)).collect();
    let threshold = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let mut witnesses = Vec::new();
    let mut violations = Vec::new();
    for (pos, &x) in chains[0].non_optimal().iter().enumerate() {
        let loops: Vec<f64> = chains.iter().map(|c| c.diag[pos]).collect();
        let best = argmin(&loops);
        for (l, &pl) in loops.iter().enumerate() {
            if pl < threshold - COMPLEMENT_TOL {
                continue;
            }
            if best != l && loops[best] < threshold - COMPLEMENT_TOL {
                witnesses.push(Witness {
                    state: x,
                    triggered_by: l,
                    triggered_self_loop: pl,
                    operator: best,
                    self_loop: loops[best],
                    threshold,
                });
            } else {
                violations.push(Violation {
                    state: x,
                    triggered_by: l,
                    self_loops: loops.clone(),
                    threshold,
                });
            }
        }
    }
    Ok(ComplementarityCertificate {
        mode: CertificateMode::Mutual,
        holds: violations.is_empty(),
        radii,
        threshold,
        witnesses,
        violations,
    })
}

/// Lowest index among the minimal values.
fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v < values[best] { k } else { best })
}

/// How a designed strategy fills states the construction leaves open.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "operator")]
pub enum FreeStateRule {
    /// `1/κ` on every operator.
    #[default]
    Uniform,
    /// Unit vector on the given operator.
    Follow(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "operator")]
pub enum Provenance {
    Forced(usize),
    Free,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignedMixedStrategy {
    pub q: StrategyDistribution,
    pub provenance: Vec<Provenance>,
    pub certificate: ComplementarityCertificate,
}

fn free_weights(rule: FreeStateRule, kappa: usize) -> Result<Vec<f64>> {
    match rule {
        FreeStateRule::Uniform => Ok(vec![1.0 / kappa as f64; kappa]),
        FreeStateRule::Follow(k) if k < kappa => {
            let mut w = vec![0.0; kappa];
            w[k] = 1.0;
            Ok(w)
        }
        FreeStateRule::Follow(k) => Err(Error::Parameter(format!(
            "free-state rule names operator {k}, only {kappa} declared"
        ))),
    }
}

fn unit(kappa: usize, k: usize) -> Vec<f64> {
    let mut w = vec![0.0; kappa];
    w[k] = 1.0;
    w
}

/// Builds a mixed strategy strictly better than every pure strategy:
/// wherever some operator's self-loop reaches `min_k ρ(T_k)`, use the
/// witness operator exclusively; elsewhere apply `rule`.
///
/// Fails with [`Error::NotComplementary`] when the operators are not
/// mutually complementary, and with [`Error::TheoremViolation`] if the
/// resulting radius is not strictly below the best pure radius.
pub fn design_mixed(
    chains: &[&ElitistChain],
    rule: FreeStateRule,
) -> Result<DesignedMixedStrategy> {
    let certificate = check_mutual(chains)?;
    if !certificate.holds {
        return Err(Error::NotComplementary {
            violations: certificate.violations.len(),
        });
    }
    let kappa = chains.len();
    let size = chains[0].fitness.len();
    let free = free_weights(rule, kappa)?;
    let mut table = vec![free.clone(); size];
    let mut provenance = vec![Provenance::Free; size];
    for w in &certificate.witnesses {
        table[w.state] = unit(kappa, w.operator);
        provenance[w.state] = Provenance::Forced(w.operator);
    }
    let q = StrategyDistribution::new(table)?;
    let rho_q = mixed_radius(chains, &q);
    if !(rho_q < certificate.threshold - COMPLEMENT_TOL) {
        return Err(Error::TheoremViolation(format!(
            "designed strategy radius {rho_q} is not below the best pure radius {}",
            certificate.threshold
        )));
    }
    Ok(DesignedMixedStrategy {
        q,
        provenance,
        certificate,
    })
}

/// Two-operator construction that beats `a` alone: use `b` where `a`
/// attains its radius, `a` everywhere else. Requires `a` to be
/// complementary to `b` in the sense of [`check_pairwise`].
pub fn design_against(a: &ElitistChain, b: &ElitistChain) -> Result<DesignedMixedStrategy> {
    let certificate = check_pairwise(a, b)?;
    if !certificate.holds {
        return Err(Error::NotComplementary {
            violations: certificate.violations.len(),
        });
    }
    let size = a.fitness.len();
    let mut table = vec![unit(2, 0); size];
    let mut provenance = vec![Provenance::Forced(0); size];
    for w in &certificate.witnesses {
        table[w.state] = unit(2, 1);
        provenance[w.state] = Provenance::Forced(1);
    }
    let q = StrategyDistribution::new(table)?;
    let rho_q = mixed_radius(&[a, b], &q);
    if !(rho_q < certificate.threshold - COMPLEMENT_TOL) && certificate.threshold > 0.0 {
        return Err(Error::TheoremViolation(format!(
            "designed strategy radius {rho_q} is not below {}",
            certificate.threshold
        )));
    }
    Ok(DesignedMixedStrategy {
        q,
        provenance,
        certificate,
    })
}

/// `max_x Σ_k q_k(x) P_k(x, x)` over non-optimal `x`, straight from the
/// pure diagonals.
pub fn mixed_radius(chains: &[&ElitistChain], q: &StrategyDistribution) -> f64 {
    chains[0]
        .non_optimal()
        .iter()
        .enumerate()
        .map(|(pos, &x)| {
            q.weights(x)
                .iter()
                .zip(chains)
                .map(|(w, c)| w * c.diag[pos])
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Radius, rate and asymptotic hitting time of one strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StrategyMetrics {
    pub rho_t: f64,
    pub rate_r: f64,
    pub hitting_t: f64,
}

impl StrategyMetrics {
    pub fn of(chain: &ElitistChain) -> Result<Self> {
        let rho_t = spectral_radius(chain);
        Ok(Self {
            rho_t,
            rate_r: convergence_rate(rho_t.clamp(0.0, 1.0))?,
            hitting_t: hitting_time_from_radius(rho_t),
        })
    }
}

/// Pure strategies against one mixed strategy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceReport {
    pub pure: Vec<StrategyMetrics>,
    pub mixed: StrategyMetrics,
    /// Radius of the mixture predicted from the pure diagonals alone.
    pub predicted_rho: f64,
    /// Strictly better than every pure strategy.
    pub strictly_dominates: bool,
    /// Failed no-worse-than-worst checks; always empty unless the
    /// implementation is wrong.
    pub violations: Vec<String>,
}

impl DominanceReport {
    pub fn into_checked(self) -> Result<Self> {
        if self.violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::TheoremViolation(self.violations.join("; ")))
        }
    }
}

/// Builds the mixture chain of `kernels` under `q` and compares it with
/// each pure chain (which must come from the same kernels, in order).
pub fn dominance_report(
    kernels: &[MutationKernel],
    pure: &[&ElitistChain],
    q: &StrategyDistribution,
) -> Result<DominanceReport> {
    if pure.is_empty() || kernels.len() != pure.len() {
        return Err(Error::Dimension(format!(
            "{} kernels but {} pure chains",
            kernels.len(),
            pure.len()
        )));
    }
    same_landscape(pure)?;
    let mixture = mix(kernels, q)?;
    let mixed_chain = ElitistChain::from_kernel(&mixture, &pure[0].fitness);
    let mixed = StrategyMetrics::of(&mixed_chain)?;
    let pure_metrics = pure
        .iter()
        .map(|c| StrategyMetrics::of(c))
        .collect::<Result<Vec<_>>>()?;
    let predicted_rho = mixed_radius(pure, q);

    let worst_rho = pure_metrics.iter().map(|m| m.rho_t).fold(0.0, f64::max);
    let best_rho = pure_metrics
        .iter()
        .map(|m| m.rho_t)
        .fold(f64::INFINITY, f64::min);
    let worst_rate = pure_metrics
        .iter()
        .map(|m| m.rate_r)
        .fold(f64::INFINITY, f64::min);
    let worst_time = pure_metrics.iter().map(|m| m.hitting_t).fold(0.0, f64::max);

    let mut violations = Vec::new();
    if mixed.rho_t > worst_rho + COMPLEMENT_TOL {
        violations.push(format!(
            "mixed radius {} exceeds worst pure radius {worst_rho}",
            mixed.rho_t
        ));
    }
    // trivially satisfied when the worst rate is 0 or the worst time infinite
    if worst_rate > 0.0 && mixed.rate_r < worst_rate * (1.0 - 1e-9) {
        violations.push(format!(
            "mixed rate {} below worst pure rate {worst_rate}",
            mixed.rate_r
        ));
    }
    if worst_time.is_finite() && mixed.hitting_t > worst_time * (1.0 + 1e-9) {
        violations.push(format!(
            "mixed asymptotic hitting time {} exceeds worst pure time {worst_time}",
            mixed.hitting_t
        ));
    }
    if (predicted_rho - mixed.rho_t).abs() > COMPLEMENT_TOL {
        violations.push(format!(
            "mixture radius {} disagrees with diagonal average {predicted_rho}",
            mixed.rho_t
        ));
    }
    Ok(DominanceReport {
        pure: pure_metrics,
        mixed,
        predicted_rho,
        strictly_dominates: mixed.rho_t < best_rho - COMPLEMENT_TOL,
        violations,
    })
}
