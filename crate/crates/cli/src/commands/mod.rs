mod consistency;
mod estimate;
mod noise;
mod predict;
mod simulate;

pub use consistency::{consistency, trend_verdict, ConsistencyReport, ConsistencyRow};
pub use estimate::{estimate, read_q_est, ChainFile, EstimateReport, SolutionFile};
pub use noise::{noise, NoiseReport};
pub use predict::{predict, GroupRmse, PredictReport};
pub use simulate::{build_dataset, simulate, SimulateReport};

use std::path::Path;

use lqt_ioc::data::{self, Dataset};

use crate::CliError;

pub(crate) fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    data::read_dataset(path).map_err(|e| match e {
        lqt_ioc::Error::Io(io) => CliError::Config(format!("cannot read dataset `{}`: {io}", path.display())),
        other => CliError::Config(format!("dataset `{}`: {other}", path.display())),
    })
}
