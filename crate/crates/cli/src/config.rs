//! Experiment configuration files (TOML).

use std::collections::HashSet;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mixea_core::montecarlo::{Init, DEFAULT_MAX_GENERATIONS};
use mixea_core::mutate::Operator;
use mixea_core::space::LandscapeSpec;
use mixea_core::strategy::FreeStateRule;

/// Flip probability: a number, or `"1/n"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Value(f64),
    Expr(String),
}

impl Rate {
    pub fn resolve(&self, n: u32) -> anyhow::Result<f64> {
        match self {
            Self::Value(p) => Ok(*p),
            Self::Expr(s) if s.replace(' ', "") == "1/n" => Ok(1.0 / f64::from(n)),
            Self::Expr(s) => {
                bail!("unsupported flip probability expression {s:?}; use a number or \"1/n\"")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OperatorKind {
    PerBitFlip { p: Rate },
    SingleBitFlip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorEntry {
    pub name: String,
    #[serde(flatten)]
    pub kind: OperatorKind,
}

impl OperatorEntry {
    pub fn resolve(&self, n: u32) -> anyhow::Result<Operator> {
        let op = match &self.kind {
            OperatorKind::PerBitFlip { p } => Operator::PerBitFlip { p: p.resolve(n)? },
            OperatorKind::SingleBitFlip => Operator::SingleBitFlip,
        };
        op.validate()
            .with_context(|| format!("operator {:?}", self.name))?;
        Ok(op)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreeRule {
    Uniform,
    /// Name of the operator to follow.
    Follow(String),
}

/// Operator weights per row: levels `0..=n` or states `0..2^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub operators: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Designed {
    pub operators: Vec<String>,
    #[serde(default = "default_free")]
    pub free: FreeRule,
}

fn default_free() -> FreeRule {
    FreeRule::Uniform
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyRule {
    /// One operator every generation.
    Pure(String),
    /// `1/κ` on each listed operator at every state.
    Uniform(Vec<String>),
    /// Fixed weights at every state.
    Constant {
        operators: Vec<String>,
        weights: Vec<f64>,
    },
    /// One row per level `|x| = 0..=n`.
    LevelTable(Table),
    /// One row per state index.
    StateTable(Table),
    /// Built from mutual complementarity of the listed operators.
    Designed(Designed),
}

impl StrategyRule {
    pub fn operator_names(&self) -> Vec<&str> {
        match self {
            Self::Pure(name) => vec![name.as_str()],
            Self::Uniform(ops) | Self::Constant { operators: ops, .. } => {
                ops.iter().map(String::as_str).collect()
            }
            Self::LevelTable(t) | Self::StateTable(t) => {
                t.operators.iter().map(String::as_str).collect()
            }
            Self::Designed(d) => d.operators.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub name: String,
    #[serde(flatten)]
    pub rule: StrategyRule,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisMode {
    /// Dense chains over bitstrings for small `n`, lumped chains otherwise.
    #[default]
    Auto,
    Full,
    Lumped,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default)]
    pub mode: AnalysisMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSpec {
    Uniform,
    Fixed(usize),
    Custom(Vec<f64>),
}

impl InitSpec {
    pub fn to_init(&self) -> Init {
        match self {
            Self::Uniform => Init::Uniform,
            Self::Fixed(s) => Init::Fixed(*s),
            Self::Custom(p) => Init::Custom(p.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOptions {
    pub runs: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub max_generations: u64,
    #[serde(default = "default_init")]
    pub init: InitSpec,
    /// Compare with the exact expectation where the analysis is feasible.
    #[serde(default = "default_true")]
    pub cross_validate: bool,
}

fn default_cap() -> u64 {
    DEFAULT_MAX_GENERATIONS
}

fn default_init() -> InitSpec {
    InitSpec::Uniform
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveOptions {
    pub rho_min: f64,
    pub rho_max: f64,
    pub step: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            rho_min: 0.5,
            rho_max: 0.99,
            step: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub landscape: LandscapeSpec,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    pub operators: Vec<OperatorEntry>,
    #[serde(default)]
    pub strategies: Vec<StrategyEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Designed>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveOptions>,
}

/// Marks a malformed or inconsistent configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()
            .map_err(|e| anyhow::Error::new(ConfigError(e.to_string())))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn n(&self) -> u32 {
        self.landscape.n()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let mut seen = HashSet::new();
        for op in &self.operators {
            if !seen.insert(op.name.as_str()) {
                bail!("operator name {:?} declared twice", op.name);
            }
        }
        let mut names = HashSet::new();
        for s in &self.strategies {
            if !names.insert(s.name.as_str()) {
                bail!("strategy name {:?} declared twice", s.name);
            }
            for op in s.rule.operator_names() {
                if !seen.contains(op) {
                    bail!(
                        "strategy {:?} references undeclared operator {op:?}",
                        s.name
                    );
                }
            }
            if let StrategyRule::Designed(d) = &s.rule {
                self.check_free_rule(d)?;
            }
        }
        if let Some(d) = &self.design {
            for op in &d.operators {
                if !seen.contains(op.as_str()) {
                    bail!("design references undeclared operator {op:?}");
                }
            }
            self.check_free_rule(d)?;
        }
        if let Some(sim) = &self.simulate {
            if sim.runs == 0 {
                bail!("simulate.runs must be at least 1");
            }
            if sim.max_generations == 0 {
                bail!("simulate.max_generations must be at least 1");
            }
        }
        Ok(())
    }

    fn check_free_rule(&self, d: &Designed) -> anyhow::Result<()> {
        if let FreeRule::Follow(name) = &d.free {
            if !d.operators.contains(name) {
                bail!("free-state rule follows {name:?}, which is not among the design operators");
            }
        }
        Ok(())
    }

    pub fn operator(&self, name: &str) -> anyhow::Result<Operator> {
        self.operators
            .iter()
            .find(|o| o.name == name)
            .with_context(|| format!("unknown operator {name:?}"))?
            .resolve(self.n())
    }
}

impl Designed {
    pub fn free_rule(&self) -> FreeStateRule {
        match &self.free {
            FreeRule::Uniform => FreeStateRule::Uniform,
            FreeRule::Follow(name) => FreeStateRule::Follow(
                self.operators
                    .iter()
                    .position(|o| o == name)
                    .expect("validated"),
            ),
        }
    }
}
