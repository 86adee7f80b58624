//! The synthetic experiment configuration: schema, costs, covariance and the
//! two missingness mechanisms.

use nalgebra::{DMatrix, DVector};

use super::{LogisticTerm, MissingnessMechanism, MissingnessRule};
use crate::domain::{CostSpec, SuperMask, SuperfeatureSchema};

pub const N_ROWS: usize = 150_000;
pub const C_MC: f64 = 14.0;
/// Train / nuisance / test proportions.
pub const SPLITS: [f64; 3] = [0.2, 0.4, 0.4];

pub fn schema() -> SuperfeatureSchema {
    SuperfeatureSchema::synthetic_default()
}

pub fn costs() -> CostSpec {
    CostSpec::from_schema(&schema(), C_MC).expect("static costs are valid")
}

/// Per-column standard deviations of the default generator.
pub const STD_DEVS: [f64; 4] = [1.5, 2.5, 1.0, 1.0];

/// Diagonal covariance calibrated so the two mechanisms leave complete
/// cases in about 24% and 22% of rows.
pub fn covariance() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(4, STD_DEVS.iter().map(|s| s * s)))
}

pub fn mar() -> MissingnessMechanism {
    MissingnessMechanism {
        rules: vec![
            MissingnessRule::Always,
            MissingnessRule::Logistic {
                intercept: -0.3,
                terms: vec![LogisticTerm { column: 0, coef: 0.5 }],
            },
            MissingnessRule::Logistic {
                intercept: -0.1,
                terms: vec![LogisticTerm { column: 0, coef: 0.6 }],
            },
        ],
    }
}

pub fn mnar() -> MissingnessMechanism {
    MissingnessMechanism {
        rules: vec![
            MissingnessRule::Always,
            MissingnessRule::Constant { p: 0.7 },
            MissingnessRule::Logistic {
                intercept: -1.5,
                terms: vec![LogisticTerm { column: 1, coef: 1.0 }],
            },
        ],
    }
}

/// Superfeatures whose missingness is adjusted for by the missing-data part
/// of the hybrid estimator under [`mnar`].
pub fn mnar_adjustment_set() -> SuperMask {
    SuperMask::from_indices([1])
}
