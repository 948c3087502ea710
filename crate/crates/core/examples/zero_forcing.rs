//! Leakage-minimising zero-forcing for one domain and the joint benchmark.

use cran_ua::bcd::initial_assignment;
use cran_ua::precoding::{global_zf_precoder, served_precoders, zero_forcing_precoder};
use cran_ua::scenario::{generate_scenario, DeploymentConfig};
use cran_ua::{Complex64, DMatrix};

fn main() -> cran_ua::Result<()> {
    let cfg = DeploymentConfig::new(2, 2, 4, 8).with_seed(7);
    let s = generate_scenario(&cfg)?;
    let own: Vec<usize> = (0..4).collect();
    let others: Vec<usize> = (8..12).collect();
    let h = s.channel_rows(0, &own);
    let g = s.channel_rows(0, &others);
    let zf = zero_forcing_precoder(&h, std::slice::from_ref(&g))?;

    let target = DMatrix::<Complex64>::identity(4, 4) * Complex64::from(zf.beta);
    println!("beta = {:.4e}, ||V||_F = {:.6}", zf.beta, zf.v.norm());
    println!("||HV - beta I|| / beta = {:.2e}", (&h * &zf.v - target).norm() / zf.beta);
    println!("leakage onto domain 1 users = {:.3e}", (&g * &zf.v).norm_squared());

    let x0 = initial_assignment(&s, &[4, 4])?;
    let per_domain = served_precoders(&s, &x0, true)?;
    let joint = global_zf_precoder(&s, &x0)?;
    for (name, set) in [("per-domain", &per_domain), ("global", &joint)] {
        let betas: Vec<String> = set.blocks.iter().map(|b| format!("{:.3e}", b.beta)).collect();
        println!("{name} blocks: beta [{}]", betas.join(", "));
    }
    Ok(())
}
