//! Domain types shared by every stage: schema and costs, datasets,
//! acquisition states, trajectories and estimate reports.

mod count;
mod data;
mod mask;
mod report;
mod schema;
mod state;
mod trajectory;

pub use count::count_trajectories;
pub use data::{FullDataset, ObservedDataset, RowValues};
pub use mask::{SuperMask, MAX_SUPERFEATURES};
pub use report::{diag, write_reports_csv, EstimateReport, REPORT_CSV_HEADER};
pub use schema::{CostSpec, CostTarget, Superfeature, SuperfeatureSchema};
pub use state::{AcquisitionState, Action};
pub use trajectory::{read_trajectories_csv, write_trajectories_csv, Step, Trajectory};
