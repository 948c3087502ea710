//! Mean sum-rate of every scheme over a transmit-power sweep.

use cran_ua::eval::{run_monte_carlo, PipelineConfig, Scheme};
use cran_ua::scenario::DeploymentConfig;

fn main() -> cran_ua::Result<()> {
    let cfg = DeploymentConfig::new(2, 2, 4, 8).with_seed(1);
    let grid = [0.0, 10.0, 20.0, 30.0];
    let table = run_monte_carlo(&cfg, &Scheme::ALL, 10, &grid, &PipelineConfig::new(vec![4, 4]))?;
    print!("{:>12}", "dBm");
    for s in Scheme::ALL {
        print!("{:>13}", s.label());
    }
    println!();
    for p in grid {
        print!("{p:>12}");
        for s in Scheme::ALL {
            print!("{:>13.2}", table.mean(s, p).unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}
