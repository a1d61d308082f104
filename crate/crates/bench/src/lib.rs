//! Fixtures shared by the benchmarks under `benches/`.

use mlca_core::simulate::{CovariateGen, CovariateSpec};
use mlca_core::{generate, Dataset, Matrix, MeasurementParams, StructuralParams, TrueModel};

/// Ten binary items, three unit classes, two group classes and one
/// normal unit covariate.
pub fn truth() -> TrueModel {
    let rows: Vec<Vec<f64>> = (0..10).map(|h| vec![0.85, if h < 5 { 0.85 } else { 0.15 }, 0.15]).collect();
    let pi = Matrix::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]]);
    let base = StructuralParams::intercept_only(&[0.5, 0.5], &pi);
    let mut structural = StructuralParams::zeros(3, 2, 2, 1);
    for r in 0..structural.gamma.rows {
        structural.gamma[(r, 0)] = base.gamma[(r, 0)];
        structural.gamma[(r, 1)] = 0.3;
    }
    TrueModel {
        phi: MeasurementParams::binary(&rows),
        structural,
        low_covariates: vec![CovariateSpec {
            name: "z".into(),
            dist: CovariateGen::Normal { mean: 0.0, sd: 1.0 },
        }],
        high_covariates: vec![],
        item_names: None,
    }
}

pub fn dataset(groups: usize, group_size: usize) -> Dataset {
    generate(&truth(), &vec![group_size; groups], 7)
        .expect("fixture simulates")
        .dataset()
        .expect("fixture encodes")
}

/// Responses as a real-valued N × H matrix, the input the clustering
/// initializers see.
pub fn response_matrix(data: &Dataset) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..data.n_units())
        .map(|i| data.y_row(i).iter().map(|&v| v as f64).collect())
        .collect();
    Matrix::from_rows(&rows)
}
