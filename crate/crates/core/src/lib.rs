//! Maximum-likelihood estimation of single-level and multilevel latent
//! class models for categorical indicators, with multinomial-logit
//! covariate effects at both levels.

pub mod aggregate;
pub mod data;
pub mod em;
pub mod error;
pub mod estimators;
pub mod init;
pub mod matrix;
pub mod model;
pub mod numerics;
pub mod selection;
pub mod simulate;

pub use data::{filter_for_structural, load_csv, ColumnRoles, Dataset, ItemSchema, RawTable};
pub use em::{EmControl, EmTrace};
pub use error::{Error, Result};
pub use estimators::{fit, CoefficientTable, FitOptions, FitResult};
pub use init::ClusterMethod;
pub use matrix::Matrix;
pub use model::{
    compute_posteriors, multilevel_loglik, single_level_loglik, Estimator, MeasurementParams,
    ModelSpec, Posteriors, StructuralParams, PROB_FLOOR,
};
pub use selection::{select_sequential, select_simultaneous, ClassificationStats, InformationCriteria, Selection};
pub use simulate::{generate, TrueModel};
