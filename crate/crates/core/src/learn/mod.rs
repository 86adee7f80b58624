//! Small self-contained learners used for classifiers, propensity models and
//! fitted Q-functions.

mod logistic;
mod mlp;
mod regressor;
mod ridge;
mod tabular;

pub use logistic::{sigmoid, LogisticModel};
pub use mlp::{Mlp, MlpConfig};
pub use regressor::{Regressor, RegressorConfig};
pub use ridge::RidgeModel;
pub use tabular::TabularModel;
