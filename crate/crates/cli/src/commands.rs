//! The `analyze`, `simulate`, `design` and `curve` subcommands.

use anyhow::{anyhow, bail, Context};

use mixea_core::chain::{
    build_lumped_chain, hitting_time_from_radius, lumped_kernel, rate_time_product, AnalysisReport,
    ElitistChain, HittingTimes,
};
use mixea_core::montecarlo::{self, init_distribution, RunConfig, SimStrategy, RNG_NAME};
use mixea_core::mutate::{
    mix, KernelDomain, MutationKernel, Operator, StrategyDistribution, DENSE_MAX_BITS,
};
use mixea_core::space::Landscape;
use mixea_core::strategy::{
    check_mutual, check_pairwise, design_mixed, dominance_report, ComplementarityCertificate,
    DesignedMixedStrategy,
};

use crate::config::{
    AnalysisMode, CurveOptions, Designed, ExperimentConfig, StrategyEntry, StrategyRule,
};
use crate::report::{
    AnalysisRow, CrossValidation, DesignBlock, DesignedRow, DesignedTable, Metadata, Num,
    ReportBundle, SimulationRow,
};

/// Full chains are the default up to this size in `auto` mode.
const AUTO_FULL_MAX_BITS: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Runtime = 1,
    Config = 2,
    Infeasible = 3,
    NotComplementary = 4,
    TheoremViolation = 5,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        self as i32
    }

    /// Classifies an error by the first library error in its chain.
    pub fn of(err: &anyhow::Error) -> Self {
        use mixea_core::Error as E;
        for cause in err.chain() {
            if let Some(e) = cause.downcast_ref::<E>() {
                return match e {
                    E::BitCount { .. } => Self::Infeasible,
                    E::NotComplementary { .. } => Self::NotComplementary,
                    E::TheoremViolation(_) => Self::TheoremViolation,
                    E::Parameter(_) | E::Dimension(_) | E::NotSymmetric { .. } => Self::Config,
                    E::Singular { .. } => Self::Runtime,
                };
            }
            if cause.downcast_ref::<toml::de::Error>().is_some()
                || cause.downcast_ref::<crate::config::ConfigError>().is_some()
            {
                return Self::Config;
            }
            if let Some(f) = cause.downcast_ref::<Flagged>() {
                return f.0;
            }
        }
        Self::Runtime
    }
}

/// Error marker carrying an explicit failure kind.
#[derive(Debug)]
struct Flagged(FailureKind, String);

impl std::fmt::Display for Flagged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Flagged {}

fn flagged(kind: FailureKind, msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Flagged(kind, msg.into()))
}

/// A finished command: the report plus whether it signals a
/// non-complementary operator set.
#[derive(Debug)]
pub struct Outcome {
    pub bundle: ReportBundle,
    pub status: Status,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotComplementary,
}

impl Outcome {
    fn ok(bundle: ReportBundle) -> Self {
        Self {
            bundle,
            status: Status::Ok,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Ok => 0,
            Status::NotComplementary => FailureKind::NotComplementary.exit_code(),
        }
    }
}

/// Chains built either over bitstrings or over `|x|` levels.
pub struct Workbench<'a> {
    cfg: &'a ExperimentConfig,
    n: u32,
    domain: KernelDomain,
    fitness: Vec<f64>,
}

/// A strategy resolved to operators and a table over the chain domain.
pub struct Resolved {
    pub operators: Vec<Operator>,
    pub operator_names: Vec<String>,
    pub q: StrategyDistribution,
    pub chain: ElitistChain,
}

impl<'a> Workbench<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> anyhow::Result<Self> {
        let n = cfg.n();
        let levels = cfg.landscape.level_fitness();
        let use_lumped = match cfg.analysis.mode {
            AnalysisMode::Full => false,
            AnalysisMode::Lumped => true,
            AnalysisMode::Auto => {
                n > AUTO_FULL_MAX_BITS && (levels.is_some() || n > DENSE_MAX_BITS)
            }
        };
        if use_lumped {
            let fitness = match levels {
                Some(l) => l,
                None => Landscape::build(cfg.landscape.clone())?.level_fitness()?,
            };
            return Ok(Self {
                cfg,
                n,
                domain: KernelDomain::Levels,
                fitness,
            });
        }
        if n > DENSE_MAX_BITS {
            return Err(flagged(
                FailureKind::Infeasible,
                format!(
                    "n={n} exceeds the dense analysis limit of {DENSE_MAX_BITS} bits; \
                     set analysis.mode = \"lumped\" for |x|-symmetric landscapes"
                ),
            ));
        }
        let landscape = Landscape::build(cfg.landscape.clone())?;
        Ok(Self {
            cfg,
            n,
            domain: KernelDomain::States,
            fitness: landscape.values().to_vec(),
        })
    }

    pub fn domain_name(&self) -> &'static str {
        match self.domain {
            KernelDomain::States => "states",
            KernelDomain::Levels => "levels",
        }
    }

    fn size(&self) -> usize {
        self.fitness.len()
    }

    fn kernel(&self, op: Operator) -> anyhow::Result<MutationKernel> {
        Ok(match self.domain {
            KernelDomain::States => op.kernel(self.n)?,
            KernelDomain::Levels => lumped_kernel(self.n, op)?,
        })
    }

    fn chain_of(&self, op: Operator) -> anyhow::Result<ElitistChain> {
        Ok(match self.domain {
            KernelDomain::States => ElitistChain::from_kernel(&op.kernel(self.n)?, &self.fitness),
            KernelDomain::Levels => build_lumped_chain(&self.fitness, op)?,
        })
    }

    fn operators(&self, names: &[String]) -> anyhow::Result<Vec<Operator>> {
        names.iter().map(|n| self.cfg.operator(n)).collect()
    }

    fn table(&self, rows: &[Vec<f64>], levels: bool) -> anyhow::Result<StrategyDistribution> {
        let q = StrategyDistribution::new(rows.to_vec())?;
        match (levels, self.domain) {
            (true, KernelDomain::Levels) | (false, KernelDomain::States) => {
                if q.states() != self.size() {
                    bail!(
                        "strategy table has {} rows, expected {}",
                        q.states(),
                        self.size()
                    );
                }
                Ok(q)
            }
            (true, KernelDomain::States) => Ok(q.expand_levels(self.n)?),
            (false, KernelDomain::Levels) => q.collapse_levels(self.n).ok_or_else(|| {
                anyhow!("state table is not constant on levels; use analysis.mode = \"full\"")
            }),
        }
    }

    /// Pure chains for `names` plus the designed table.
    pub fn design(&self, d: &Designed) -> anyhow::Result<(Vec<ElitistChain>, DesignOutcome)> {
        let ops = self.operators(&d.operators)?;
        let chains = ops
            .iter()
            .map(|&o| self.chain_of(o))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let refs: Vec<&ElitistChain> = chains.iter().collect();
        let certificate = check_mutual(&refs)?;
        let pairwise = if refs.len() == 2 {
            vec![
                check_pairwise(refs[0], refs[1])?,
                check_pairwise(refs[1], refs[0])?,
            ]
        } else {
            Vec::new()
        };
        let designed = if certificate.holds {
            Some(design_mixed(&refs, d.free_rule())?)
        } else {
            None
        };
        Ok((
            chains,
            DesignOutcome {
                certificate,
                pairwise,
                designed,
            },
        ))
    }

    pub fn resolve(&self, entry: &StrategyEntry) -> anyhow::Result<Resolved> {
        let (names, q): (Vec<String>, StrategyDistribution) = match &entry.rule {
            StrategyRule::Pure(name) => (
                vec![name.clone()],
                StrategyDistribution::pure(self.size(), 1, 0)?,
            ),
            StrategyRule::Uniform(ops) => (
                ops.clone(),
                StrategyDistribution::uniform(self.size(), ops.len())?,
            ),
            StrategyRule::Constant { operators, weights } => {
                if weights.len() != operators.len() {
                    bail!(
                        "strategy {:?}: {} weights for {} operators",
                        entry.name,
                        weights.len(),
                        operators.len()
                    );
                }
                (
                    operators.clone(),
                    StrategyDistribution::constant(self.size(), weights)?,
                )
            }
            StrategyRule::LevelTable(t) => (t.operators.clone(), self.table(&t.rows, true)?),
            StrategyRule::StateTable(t) => (t.operators.clone(), self.table(&t.rows, false)?),
            StrategyRule::Designed(d) => {
                let (_, outcome) = self.design(d)?;
                let designed = outcome.designed.ok_or_else(|| {
                    flagged(
                        FailureKind::NotComplementary,
                        format!(
                            "strategy {:?}: operators are not mutually complementary ({} violations)",
                            entry.name,
                            outcome.certificate.violations.len()
                        ),
                    )
                })?;
                (d.operators.clone(), designed.q)
            }
        };
        let operators = self.operators(&names)?;
        let chain = if operators.len() == 1 {
            self.chain_of(operators[0])?
        } else {
            let kernels = operators
                .iter()
                .map(|&o| self.kernel(o))
                .collect::<anyhow::Result<Vec<_>>>()?;
            ElitistChain::from_kernel(&mix(&kernels, &q)?, &self.fitness)
        };
        Ok(Resolved {
            operators,
            operator_names: names,
            q,
            chain,
        })
    }

    /// The strategy table over all states, for simulation.
    pub fn state_table(&self, q: &StrategyDistribution) -> anyhow::Result<StrategyDistribution> {
        Ok(match self.domain {
            KernelDomain::States => q.clone(),
            KernelDomain::Levels => q.expand_levels(self.n)?,
        })
    }
}

pub struct DesignOutcome {
    pub certificate: ComplementarityCertificate,
    /// Both orientations of the pairwise test when there are two operators.
    pub pairwise: Vec<ComplementarityCertificate>,
    pub designed: Option<DesignedMixedStrategy>,
}

/// Declared strategies, or one pure strategy per operator.
fn strategies(cfg: &ExperimentConfig) -> Vec<StrategyEntry> {
    if !cfg.strategies.is_empty() {
        return cfg.strategies.clone();
    }
    cfg.operators
        .iter()
        .map(|o| StrategyEntry {
            name: format!("EA({})", o.name),
            rule: StrategyRule::Pure(o.name.clone()),
        })
        .collect()
}

fn analysis_row(
    name: &str,
    domain: &'static str,
    chain: &ElitistChain,
) -> anyhow::Result<AnalysisRow> {
    let report = AnalysisReport::analyze(chain)?;
    let expected = report.expected_hitting_from(chain, &chain.uniform_init())?;
    let residual = match &report.times {
        HittingTimes::Finite { residual, .. } => Some(Num(*residual)),
        HittingTimes::Infinite => None,
    };
    Ok(AnalysisRow {
        strategy: name.to_string(),
        domain,
        rho_t: Num(report.rho_t),
        rate_r: Num(report.rate_r),
        hitting_t: Num(report.hitting_t),
        m_min: Num(report.times.min()),
        m_max: Num(report.times.max()),
        m_mean: Num(report.times.mean()),
        expected_uniform: Num(expected),
        residual,
        traps: report.traps.clone(),
        non_optimal: chain.non_optimal().to_vec(),
        m: report
            .times
            .finite()
            .map(|m| m.iter().copied().map(Num).collect()),
    })
}

pub fn cmd_analyze(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let bench = Workbench::new(cfg)?;
    let mut bundle = ReportBundle::new(Metadata::new("analyze", &cfg.name, &cfg.to_toml()?));
    for entry in strategies(cfg) {
        let resolved = bench
            .resolve(&entry)
            .with_context(|| format!("strategy {:?}", entry.name))?;
        bundle.analysis.push(analysis_row(
            &entry.name,
            bench.domain_name(),
            &resolved.chain,
        )?);
    }
    Ok(Outcome::ok(bundle))
}

/// Overrides applied on top of the config's `[simulate]` block.
#[derive(Clone, Debug, Default)]
pub struct SimulateOverrides {
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub max_generations: Option<u64>,
    pub serial: bool,
}

pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    overrides: &SimulateOverrides,
) -> anyhow::Result<Outcome> {
    let mut cfg = cfg.clone();
    let sim = cfg
        .simulate
        .as_mut()
        .ok_or_else(|| flagged(FailureKind::Config, "config has no [simulate] block"))?;
    if let Some(r) = overrides.runs {
        sim.runs = r;
    }
    if let Some(s) = overrides.seed {
        sim.seed = s;
    }
    if let Some(g) = overrides.max_generations {
        sim.max_generations = g;
    }
    cfg.validate()
        .map_err(|e| flagged(FailureKind::Config, e.to_string()))?;
    let sim = cfg.simulate.clone().expect("present");
    let landscape = Landscape::build(cfg.landscape.clone())?;
    let bench = Workbench::new(&cfg)?;

    let mut metadata = Metadata::new("simulate", &cfg.name, &cfg.to_toml()?);
    metadata.seed = Some(sim.seed);
    metadata.rng = Some(RNG_NAME);
    let mut bundle = ReportBundle::new(metadata);

    let init = sim.init.to_init();
    for entry in strategies(&cfg) {
        let resolved = bench
            .resolve(&entry)
            .with_context(|| format!("strategy {:?}", entry.name))?;
        let strategy = if resolved.operators.len() == 1 {
            SimStrategy::Pure(resolved.operators[0])
        } else {
            SimStrategy::Mixed {
                operators: resolved.operators.clone(),
                q: bench.state_table(&resolved.q)?,
            }
        };
        let run_cfg = RunConfig {
            strategy,
            runs: sim.runs,
            master_seed: sim.seed,
            max_generations: sim.max_generations,
            init: init.clone(),
            parallel: !overrides.serial,
        };
        let outcome = montecarlo::estimate(&landscape, &run_cfg)?;
        let mut row = SimulationRow::new(&entry.name, &outcome);
        if sim.cross_validate {
            let report = AnalysisReport::analyze(&resolved.chain)?;
            let p0 = init_distribution(&init, landscape.len());
            let exact = montecarlo::exact_expected(&resolved.chain, &report, &p0)?;
            row.cross_validation =
                Some(CrossValidation::from(&montecarlo::compare(&outcome, exact)));
        }
        bundle.simulation.push(row);
    }
    Ok(Outcome::ok(bundle))
}

pub fn cmd_design(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let spec = match &cfg.design {
        Some(d) => d.clone(),
        None => Designed {
            operators: cfg.operators.iter().map(|o| o.name.clone()).collect(),
            free: crate::config::FreeRule::Uniform,
        },
    };
    if spec.operators.len() < 2 {
        return Err(flagged(
            FailureKind::Config,
            "design needs at least two operators",
        ));
    }
    let bench = Workbench::new(cfg)?;
    let mut bundle = ReportBundle::new(Metadata::new("design", &cfg.name, &cfg.to_toml()?));
    let (chains, outcome) = bench.design(&spec)?;
    let mut block = DesignBlock {
        operators: spec.operators.clone(),
        domain: bench.domain_name(),
        certificate: outcome.certificate,
        pairwise: outcome.pairwise,
        designed: None,
        dominance: None,
    };
    let status = match outcome.designed {
        Some(designed) => {
            let kernels = bench
                .operators(&spec.operators)?
                .into_iter()
                .map(|o| bench.kernel(o))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let refs: Vec<&ElitistChain> = chains.iter().collect();
            let dominance = dominance_report(&kernels, &refs, &designed.q)?.into_checked()?;
            if !dominance.strictly_dominates {
                return Err(flagged(
                    FailureKind::TheoremViolation,
                    "designed strategy does not strictly dominate every pure strategy",
                ));
            }
            block.designed = Some(DesignedTable {
                operators: spec.operators.clone(),
                domain: bench.domain_name(),
                rows: designed
                    .q
                    .rows()
                    .zip(&designed.provenance)
                    .enumerate()
                    .map(|(index, (w, p))| DesignedRow {
                        index,
                        weights: w.to_vec(),
                        provenance: *p,
                    })
                    .collect(),
            });
            block.dominance = Some(dominance);
            Status::Ok
        }
        None => Status::NotComplementary,
    };
    bundle.designs.push(block);
    Ok(Outcome { bundle, status })
}

/// One row of the rate/time curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub rho: f64,
    pub rate_r: f64,
    pub hitting_t: f64,
    pub product: f64,
}

pub fn cmd_curve(opts: &CurveOptions) -> anyhow::Result<Vec<CurvePoint>> {
    let CurveOptions {
        rho_min,
        rho_max,
        step,
    } = *opts;
    if !(rho_min > 0.0 && rho_max < 1.0) {
        return Err(flagged(
            FailureKind::Config,
            format!(
                "curve range must satisfy 0 < rho_min ≤ rho_max < 1, got [{rho_min}, {rho_max}]"
            ),
        ));
    }
    if rho_min > rho_max {
        return Err(flagged(
            FailureKind::Config,
            format!("empty curve range: rho_min {rho_min} > rho_max {rho_max}"),
        ));
    }
    if !(step > 0.0) {
        return Err(flagged(
            FailureKind::Config,
            format!("curve step must be positive, got {step}"),
        ));
    }
    let count = ((rho_max - rho_min) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| {
            // round to the step's decimal grid so 0.5 + 49 * 0.01 prints as 0.99
            let rho = ((rho_min + i as f64 * step) * 1e12).round() / 1e12;
            let product = rate_time_product(rho)?;
            Ok(CurvePoint {
                rho,
                rate_r: -rho.ln(),
                hitting_t: hitting_time_from_radius(rho),
                product,
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rho", "rate_R", "hitting_T", "rate_times_hitting"])?;
    for p in points {
        w.write_record([
            Num(p.rho).text(),
            Num(p.rate_r).text(),
            Num(p.hitting_t).text(),
            Num(p.product).text(),
        ])?;
    }
    Ok(w.into_inner()?)
}
