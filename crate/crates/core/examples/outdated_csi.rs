//! Sum-rate loss when the assignment and precoders are computed on channels
//! that are `tau` milliseconds old.

use cran_ua::eval::{degradation_csv, run_outdated_csi, PipelineConfig};
use cran_ua::scenario::DeploymentConfig;

fn main() -> cran_ua::Result<()> {
    let cfg = DeploymentConfig::new(2, 2, 4, 8).with_seed(3);
    let rows = run_outdated_csi(&cfg, &[0.0, 1.0, 5.0, 10.0, 50.0], 20, 12.0, &PipelineConfig::new(vec![4, 4]))?;
    print!("{}", degradation_csv(&rows));
    Ok(())
}
