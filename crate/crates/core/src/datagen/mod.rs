//! Synthetic data, missingness simulation and CSV input/output.

mod csvio;
mod mechanism;
pub mod presets;
mod synthetic;

pub use csvio::{load_csv, read_csv, read_dataset_csv, write_dataset_csv};
pub use mechanism::{apply_missingness, apply_missingness_keyed, LogisticTerm, MissingnessMechanism, MissingnessRule};
pub use synthetic::{cholesky_factor, generate_synthetic, label_probability};
