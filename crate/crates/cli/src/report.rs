//! Report bundles and their JSON/CSV encodings.
//!
//! Non-finite numbers are written as the strings `inf`, `-inf` and `nan`
//! in both formats. CSV cells use the shortest round-trip decimal form, so
//! parsing either file gives bit-identical values.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use mixea_core::montecarlo::{Agreement, RunOutcome};
use mixea_core::strategy::{ComplementarityCertificate, DominanceReport, Provenance};

/// A float that serializes infinities as strings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Num {
    pub fn text(self) -> String {
        let v = self.0;
        if v.is_nan() {
            "nan".into()
        } else if v == f64::INFINITY {
            "inf".into()
        } else if v == f64::NEG_INFINITY {
            "-inf".into()
        } else {
            format!("{v:?}")
        }
    }

    /// Inverse of [`Num::text`].
    pub fn parse(s: &str) -> Option<f64> {
        match s {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => s.parse().ok(),
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&self.text())
        }
    }
}

fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_name: String,
    /// SHA-256 of the canonical TOML form of the config.
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<&'static str>,
}

impl Metadata {
    pub fn new(command: &'static str, config_name: &str, canonical_config: &str) -> Self {
        Self {
            tool: "mixea",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_name: config_name.to_string(),
            config_hash: hex::encode(Sha256::digest(canonical_config.as_bytes())),
            seed: None,
            rng: None,
        }
    }
}

/// One analyzed strategy.
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisRow {
    pub strategy: String,
    /// `states` or `levels`.
    pub domain: &'static str,
    pub rho_t: Num,
    pub rate_r: Num,
    pub hitting_t: Num,
    pub m_min: Num,
    pub m_max: Num,
    pub m_mean: Num,
    /// `p_0 · m` under the uniform start.
    pub expected_uniform: Num,
    pub residual: Option<Num>,
    pub traps: Vec<usize>,
    /// Non-optimal indices in canonical order, aligned with `m`.
    pub non_optimal: Vec<usize>,
    pub m: Option<Vec<Num>>,
}

impl AnalysisRow {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.strategy.clone(),
            self.rho_t.text(),
            self.rate_r.text(),
            self.hitting_t.text(),
            self.m_min.text(),
            self.m_max.text(),
            self.m_mean.text(),
            self.traps
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        ]
    }

    pub fn hitting_times(&self, m: Option<&[f64]>) -> Option<Vec<Num>> {
        m.map(nums)
    }
}

pub const ANALYSIS_HEADER: [&str; 8] = [
    "strategy",
    "rho_T",
    "rate_R",
    "hitting_T",
    "m_min",
    "m_max",
    "m_mean",
    "traps",
];

#[derive(Clone, Debug, Serialize)]
pub struct SimulationRow {
    pub strategy: String,
    pub runs: usize,
    pub uncensored: usize,
    pub censored: usize,
    pub max_generations: u64,
    pub mean: Option<Num>,
    pub stderr: Option<Num>,
    pub capped_mean: Option<Num>,
    pub no_uncensored_data: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_validation: Option<CrossValidation>,
    #[serde(skip)]
    pub per_run: Vec<Option<u64>>,
}

impl SimulationRow {
    pub fn new(strategy: &str, outcome: &RunOutcome) -> Self {
        Self {
            strategy: strategy.to_string(),
            runs: outcome.per_run.len(),
            uncensored: outcome.uncensored(),
            censored: outcome.censored,
            max_generations: outcome.max_generations,
            mean: outcome.mean.map(Num),
            stderr: outcome.stderr.map(Num),
            capped_mean: outcome.capped_mean.map(Num),
            no_uncensored_data: outcome.no_uncensored_data(),
            cross_validation: None,
            per_run: outcome.per_run.clone(),
        }
    }
}

pub const SIMULATION_HEADER: [&str; 8] = [
    "strategy",
    "runs",
    "uncensored",
    "censored",
    "mean",
    "stderr",
    "capped_mean",
    "z",
];

#[derive(Clone, Debug, Serialize)]
pub struct CrossValidation {
    pub exact: Num,
    pub z: Option<Num>,
    pub flagged: bool,
    pub inconsistent: bool,
}

impl From<&Agreement> for CrossValidation {
    fn from(a: &Agreement) -> Self {
        Self {
            exact: Num(a.exact),
            z: a.z.map(Num),
            flagged: a.flagged,
            inconsistent: a.inconsistent,
        }
    }
}

/// Designed table as state (or level) index → operator weights.
#[derive(Clone, Debug, Serialize)]
pub struct DesignedTable {
    pub operators: Vec<String>,
    pub domain: &'static str,
    pub rows: Vec<DesignedRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DesignedRow {
    pub index: usize,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize)]
pub struct DesignBlock {
    pub operators: Vec<String>,
    pub domain: &'static str,
    pub certificate: ComplementarityCertificate,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pairwise: Vec<ComplementarityCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub designed: Option<DesignedTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominance: Option<DominanceReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportBundle {
    pub metadata: Metadata,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub analysis: Vec<AnalysisRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub simulation: Vec<SimulationRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub designs: Vec<DesignBlock>,
}

impl ReportBundle {
    pub fn new(metadata: Metadata) -> Self {
        Self {
            metadata,
            analysis: Vec::new(),
            simulation: Vec::new(),
            designs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    fn analysis_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(ANALYSIS_HEADER)?;
        for row in &self.analysis {
            w.write_record(row.csv_record())?;
        }
        Ok(w.into_inner()?)
    }

    fn simulation_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SIMULATION_HEADER)?;
        let opt = |v: Option<Num>| v.map(Num::text).unwrap_or_default();
        for row in &self.simulation {
            w.write_record([
                row.strategy.clone(),
                row.runs.to_string(),
                row.uncensored.to_string(),
                row.censored.to_string(),
                opt(row.mean),
                opt(row.stderr),
                opt(row.capped_mean),
                opt(row.cross_validation.as_ref().and_then(|c| c.z)),
            ])?;
        }
        Ok(w.into_inner()?)
    }

    fn runs_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["strategy", "run_index", "hitting_generation", "censored"])?;
        for row in &self.simulation {
            for (i, g) in row.per_run.iter().enumerate() {
                w.write_record([
                    row.strategy.clone(),
                    i.to_string(),
                    g.map(|g| g.to_string()).unwrap_or_default(),
                    g.is_none().to_string(),
                ])?;
            }
        }
        Ok(w.into_inner()?)
    }

    /// Writes `report.json`, `report.csv` and, for simulations, `runs.csv`.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("report.json"), self.to_json()?.as_bytes())?;
        if !self.simulation.is_empty() {
            write_file(&dir.join("report.csv"), &self.simulation_csv()?)?;
            write_file(&dir.join("runs.csv"), &self.runs_csv()?)?;
        } else {
            write_file(&dir.join("report.csv"), &self.analysis_csv()?)?;
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut f =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}
