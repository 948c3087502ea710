//! Lower bounds on the optimal leakage: the Dantzig-Wolfe relaxation solved
//! in full and by column generation, its dual, and the gap certificates.

use cran_ua::bounds::{enumerate_columns, solve_dw_cgm, solve_dw_full, BoundsReport};
use cran_ua::eval::coupling_instance;
use cran_ua::scenario::{generate_scenario, DeploymentConfig};

fn main() -> cran_ua::Result<()> {
    let cfg = DeploymentConfig::new(2, 2, 2, 4).with_seed(5);
    let s = generate_scenario(&cfg)?;
    let rho = [3, 3];
    let (psi, x0) = coupling_instance(&s, &cfg, &rho)?;

    let cols = enumerate_columns(&psi.psi, &rho)?;
    let full = solve_dw_full(&cols)?;
    let cgm = solve_dw_cgm(&cols, rho.len())?;
    println!("{} columns; full master {:.6e}, column generation {:.6e} in {} iterations", cols.len(), full.value, cgm.value, cgm.iterations);

    let rep = BoundsReport::compute(&psi.psi, &rho, Some(&x0), 100)?;
    println!("{}", rep.to_json());
    if let Some(opt) = rep.f_oracle {
        println!("DW gap {:.2}%, BCD gap {:.2}%", 100.0 * (opt - rep.f_dw) / opt, 100.0 * (rep.f_bcd - opt) / opt);
    }
    Ok(())
}
