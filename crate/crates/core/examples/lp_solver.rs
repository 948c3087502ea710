//! The dense simplex solver with its dual certificate.

use cran_ua::lp::{certificate_residuals, solve_lp, LpProblem};

fn main() -> cran_ua::Result<()> {
    // min -x - 2y  s.t.  x + y <= 4,  x + 3y <= 6,  x - y = 0
    let p = LpProblem::new(vec![-1.0, -2.0])
        .le(vec![1.0, 1.0], 4.0)
        .le(vec![1.0, 3.0], 6.0)
        .eq(vec![1.0, -1.0], 0.0);
    let sol = solve_lp(&p)?;
    println!("status {:?} after {} pivots", sol.status, sol.pivots);
    println!("x = {:?}, objective {}", sol.x, sol.objective);
    println!("inequality duals {:?}, equality duals {:?}", sol.ineq_duals, sol.eq_duals);
    let (primal, slackness, gap) = certificate_residuals(&p, &sol);
    println!("residuals: primal {primal:.1e}, complementary slackness {slackness:.1e}, gap {gap:.1e}");

    let unbounded = solve_lp(&LpProblem::new(vec![-1.0]).le(vec![-1.0], 0.0))?;
    println!("min -x with x >= 0 alone: {:?}", unbounded.status);
    Ok(())
}
