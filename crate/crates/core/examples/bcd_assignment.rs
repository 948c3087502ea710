//! Block-coordinate descent on a drop's coupling matrix, checked against
//! exhaustive search on a tiny instance.

use cran_ua::bcd::{run_bcd, sequential_assignment, DEFAULT_MAX_SWEEPS};
use cran_ua::bounds::exhaustive_oracle;
use cran_ua::eval::coupling_instance;
use cran_ua::scenario::{generate_scenario, DeploymentConfig};
use cran_ua::DMatrix;

fn main() -> cran_ua::Result<()> {
    let psi = DMatrix::from_row_slice(3, 3, &[0.0, 5.0, 1.0, 1.0, 0.0, 1.0, 2.0, 3.0, 0.0]);
    let x0 = sequential_assignment(3, &[1, 1])?;
    let st = run_bcd(&psi, &[1, 1], &x0, DEFAULT_MAX_SWEEPS)?;
    let opt = exhaustive_oracle(&psi, &[1, 1])?;
    println!("toy: bcd {:?} f = {}, optimum {:?} f = {}", st.assignment.sets(), st.final_leakage(), opt.assignment.sets(), opt.f);

    let cfg = DeploymentConfig::new(3, 2, 2, 4).with_seed(11);
    let s = generate_scenario(&cfg)?;
    let rho = [3, 3, 3];
    let (psi, x0) = coupling_instance(&s, &cfg, &rho)?;
    let st = run_bcd(&psi.psi, &rho, &x0, DEFAULT_MAX_SWEEPS)?;
    println!("drop: {} sweeps, converged {}", st.sweeps, st.converged);
    for (i, f) in st.f_history.iter().enumerate() {
        println!("  after sweep {i}: f = {f:.4e}");
    }
    println!("  served sets {:?}", st.assignment.sets());
    Ok(())
}
