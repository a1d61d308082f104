//! On-disk form of a fit. Matrices are row-major with their dimensions
//! alongside; statistics that are not finite are stored as `null`.

use std::path::Path;

use mlca_core::estimators::StageTrace;
use mlca_core::{
    ClassificationStats, FitResult, InformationCriteria, ItemSchema, Matrix, ModelSpec, Posteriors,
    StructuralParams,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub iterations: usize,
    pub ll_first: f64,
    pub ll_last: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub call: String,
    pub model: ModelSpec,
    pub items: Vec<ItemSchema>,
    pub low_covariates: Vec<String>,
    pub high_covariates: Vec<String>,
    pub group_labels: Vec<String>,
    pub stages: Vec<StageSummary>,
    /// Sample mean of P(G).
    pub group_proportions: Vec<f64>,
    /// M × T sample mean of P(C | G).
    pub class_proportions: Matrix,
    /// One T × C_h matrix per item.
    pub response_probabilities: Vec<Matrix>,
    pub structural: StructuralParams,
    pub information: InformationCriteria,
    pub classification: ClassificationStats,
    pub coefficients: Vec<Coefficient>,
    pub rank_deficient: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vcov: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posteriors: Option<Posteriors>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn summarize(s: &StageTrace) -> StageSummary {
    StageSummary {
        stage: s.stage.clone(),
        iterations: s.trace.iterations,
        ll_first: s.trace.ll_first,
        ll_last: s.trace.ll_last,
        converged: s.trace.converged,
    }
}

impl FitDocument {
    pub fn new(fit: &FitResult, call: String, extended: bool) -> Self {
        let c = &fit.coefficients;
        let coefficients = (0..c.names.len())
            .map(|k| Coefficient {
                name: c.names[k].clone(),
                estimate: c.estimate[k],
                se: finite(c.se[k]),
                z: finite(c.z[k]),
                p: finite(c.p[k]),
            })
            .collect();
        FitDocument {
            schema_version: SCHEMA_VERSION,
            call,
            model: fit.spec.clone(),
            items: fit.items.clone(),
            low_covariates: fit.low_names.clone(),
            high_covariates: fit.high_names.clone(),
            group_labels: fit.group_labels.clone(),
            stages: fit.stages.iter().map(summarize).collect(),
            group_proportions: fit.omega_avg.clone(),
            class_proportions: fit.pi_avg.clone(),
            response_probabilities: fit.phi.probs.clone(),
            structural: fit.structural.clone(),
            information: fit.ic.clone(),
            classification: fit.class_stats.clone(),
            coefficients,
            rank_deficient: c.rank_deficient,
            vcov: extended.then(|| c.vcov.clone()),
            posteriors: extended.then(|| fit.posteriors.clone()),
        }
    }

    /// Trace of the estimation stage that produced the reported estimates.
    pub fn final_stage(&self) -> Option<&StageSummary> {
        self.stages.last()
    }

    pub fn n_low(&self) -> usize {
        self.model.n_low
    }

    pub fn n_high(&self) -> usize {
        self.model.n_high
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit document serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Json { source, .. } => CliError::Json {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json_err = |source| CliError::Json {
            path: "<fit>".into(),
            source,
        };
        // check the version before the shape so old files get a clear error
        let raw: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(CliError::Schema {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        serde_json::from_value(raw).map_err(json_err)
    }
}
