//! Block-coordinate descent over the per-domain assignment vectors.
//!
//! Each block update fixes every other domain and solves the linear
//! subproblem `min r_k^T x  s.t.  1^T x = rho_k, 0 <= x <= omega_k` exactly by
//! picking the `rho_k` admissible users with the smallest residual.

use nalgebra::DMatrix;

use crate::coupling::{leakage_of_sets, Assignment};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Default cap on outer sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct BcdState {
    pub assignment: Assignment,
    /// `f` before the first sweep and after each completed sweep.
    pub f_history: Vec<f64>,
    /// `f` before the first sweep and after every single block update.
    pub update_trace: Vec<f64>,
    /// Completed outer sweeps.
    pub sweeps: usize,
    pub max_sweeps: usize,
    /// True when the last sweep left every block unchanged.
    pub converged: bool,
}

impl BcdState {
    pub fn final_leakage(&self) -> f64 {
        *self.f_history.last().expect("history holds the initial value")
    }
}

/// `(psi + psi^T)` applied to the sum of all blocks other than `k`.
pub fn residual(psi_sym: &DMatrix<f64>, blocks: &[Vec<bool>], k: usize) -> Vec<f64> {
    let n = psi_sym.nrows();
    let mut r = vec![0.0; n];
    for (l, block) in blocks.iter().enumerate() {
        if l == k {
            continue;
        }
        for (v, _) in block.iter().enumerate().filter(|(_, &x)| x) {
            for (u, ru) in r.iter_mut().enumerate() {
                *ru += psi_sym[(u, v)];
            }
        }
    }
    r
}

/// Users not taken by any block other than `k`.
pub fn feasible_mask(blocks: &[Vec<bool>], k: usize) -> Vec<bool> {
    let n = blocks.first().map_or(0, Vec::len);
    (0..n)
        .map(|u| !blocks.iter().enumerate().any(|(l, b)| l != k && b[u]))
        .collect()
}

/// The `rho` admissible indices with the smallest residual, ties broken by index.
pub fn solve_block_assignment(r: &[f64], omega: &[bool], rho: usize) -> Result<Vec<bool>> {
    if r.len() != omega.len() {
        return Err(Error::DimensionMismatch("residual and mask differ in length".into()));
    }
    let mut candidates: Vec<usize> = (0..r.len()).filter(|&u| omega[u]).collect();
    if candidates.len() < rho {
        return Err(Error::Infeasible(format!("{} admissible users for a load of {rho}", candidates.len())));
    }
    candidates.sort_by(|&a, &b| r[a].total_cmp(&r[b]).then(a.cmp(&b)));
    let mut x = vec![false; r.len()];
    for &u in &candidates[..rho] {
        x[u] = true;
    }
    Ok(x)
}

fn block_cost(r: &[f64], x: &[bool]) -> f64 {
    r.iter().zip(x).filter(|(_, &b)| b).map(|(v, _)| v).sum()
}

fn sets_of(blocks: &[Vec<bool>]) -> Vec<Vec<usize>> {
    blocks
        .iter()
        .map(|b| b.iter().enumerate().filter(|(_, &x)| x).map(|(u, _)| u).collect())
        .collect()
}

/// Gauss-Seidel sweeps over the domains until a sweep changes nothing or
/// `max_sweeps` is reached.
pub fn run_bcd(psi: &DMatrix<f64>, rho: &[usize], x_init: &Assignment, max_sweeps: usize) -> Result<BcdState> {
    if max_sweeps == 0 {
        return Err(Error::InvalidConfig("at least one sweep is required".into()));
    }
    if !psi.is_square() || psi.nrows() != x_init.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "coupling matrix is {}x{}, assignment covers {} users",
            psi.nrows(),
            psi.ncols(),
            x_init.num_users()
        )));
    }
    x_init.check_loading(rho)?;
    let psi_sym = psi + psi.transpose();
    let mut blocks = x_init.blocks();
    let f0 = leakage_of_sets(psi, &sets_of(&blocks));
    let mut f_history = vec![f0];
    let mut update_trace = vec![f0];
    let mut sweeps = 0;
    let mut converged = false;

    let mut f = f0;
    while sweeps < max_sweeps {
        let mut changed = false;
        for k in 0..rho.len() {
            let r = residual(&psi_sym, &blocks, k);
            let omega = feasible_mask(&blocks, k);
            let candidate = solve_block_assignment(&r, &omega, rho[k])?;
            // only strictly better blocks replace the incumbent
            if candidate != blocks[k] && block_cost(&r, &candidate) < block_cost(&r, &blocks[k]) {
                let previous = std::mem::replace(&mut blocks[k], candidate);
                let f_new = leakage_of_sets(psi, &sets_of(&blocks));
                if f_new <= f {
                    f = f_new;
                    changed = true;
                } else {
                    blocks[k] = previous;
                }
            }
            update_trace.push(f);
        }
        sweeps += 1;
        f_history.push(f);
        if !changed {
            converged = true;
            break;
        }
    }

    Ok(BcdState {
        assignment: Assignment::from_blocks(&blocks)?,
        f_history,
        update_trace,
        sweeps,
        max_sweeps,
        converged,
    })
}

/// The tile-based initial assignment, keeping the `rho_k` users of each tile
/// with the strongest channel to their own domain.
pub fn initial_assignment(scenario: &Scenario, rho: &[usize]) -> Result<Assignment> {
    let a = scenario.num_domains;
    let u = scenario.users_per_domain;
    if rho.len() != a {
        return Err(Error::DimensionMismatch(format!("{} loads for {a} domains", rho.len())));
    }
    let mut serving = vec![None; scenario.total_users()];
    for (k, &load) in rho.iter().enumerate() {
        if load > u {
            return Err(Error::InfeasibleAssignment(format!("domain {k} cannot serve {load} of its {u} users")));
        }
        let mut users: Vec<usize> = (k * u..(k + 1) * u).collect();
        users.sort_by(|&x, &y| {
            scenario.channel_gain(k, y).total_cmp(&scenario.channel_gain(k, x)).then(x.cmp(&y))
        });
        for &user in &users[..load] {
            serving[user] = Some(k);
        }
    }
    Assignment::from_serving(serving, a)
}

/// Domain `k` takes the next `rho_k` users in index order.
pub fn sequential_assignment(num_users: usize, rho: &[usize]) -> Result<Assignment> {
    let total: usize = rho.iter().sum();
    if total > num_users {
        return Err(Error::InfeasibleAssignment(format!("{total} slots for {num_users} users")));
    }
    let mut serving = vec![None; num_users];
    let mut next = 0;
    for (k, &load) in rho.iter().enumerate() {
        for s in serving.iter_mut().skip(next).take(load) {
            *s = Some(k);
        }
        next += load;
    }
    Assignment::from_serving(serving, rho.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::total_leakage_vector;
    use proptest::prelude::*;

    fn three_user() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 5.0, 1.0, 1.0, 0.0, 1.0, 2.0, 3.0, 0.0])
    }

    #[test]
    fn residual_examples() {
        let psi = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        let sym = &psi + psi.transpose();
        let blocks = vec![vec![true, false], vec![false, true]];
        assert_eq!(residual(&sym, &blocks, 0), vec![3.0, 0.0]);
        assert_eq!(residual(&DMatrix::zeros(2, 2), &blocks, 0), vec![0.0, 0.0]);
        let empty = vec![vec![true, false], vec![false, false]];
        assert_eq!(residual(&sym, &empty, 0), vec![0.0, 0.0]);
    }

    #[test]
    fn mask_examples() {
        let blocks = vec![vec![false; 3], vec![false, true, false]];
        assert_eq!(feasible_mask(&blocks, 0), vec![true, false, true]);
        assert_eq!(feasible_mask(&blocks, 1), vec![true; 3]);
        let full = vec![vec![false; 2], vec![true, true]];
        assert_eq!(feasible_mask(&full, 0), vec![false, false]);
    }

    #[test]
    fn block_solve_examples() {
        let x = solve_block_assignment(&[3.0, 1.0, 2.0, 5.0], &[true, true, true, false], 2).unwrap();
        assert_eq!(x, vec![false, true, true, false]);
        assert_eq!(solve_block_assignment(&[1.0, 2.0], &[true, true], 0).unwrap(), vec![false, false]);
        let tie = solve_block_assignment(&[1.0; 4], &[true; 4], 2).unwrap();
        assert_eq!(tie, vec![true, true, false, false]);
        assert!(matches!(solve_block_assignment(&[1.0, 1.0], &[true, false], 2), Err(Error::Infeasible(_))));
    }

    #[test]
    fn zero_coupling_stops_after_one_sweep() {
        let x0 = sequential_assignment(4, &[1, 2]).unwrap();
        let st = run_bcd(&DMatrix::zeros(4, 4), &[1, 2], &x0, 100).unwrap();
        assert_eq!(st.sweeps, 1);
        assert!(st.converged);
        assert!(st.f_history.iter().all(|&f| f == 0.0));
        assert_eq!(st.assignment, x0);
    }

    #[test]
    fn three_user_instance() {
        let psi = three_user();
        let x0 = Assignment::from_sets(3, &[vec![1], vec![2]]).unwrap();
        let st = run_bcd(&psi, &[1, 1], &x0, 100).unwrap();
        assert_eq!(st.final_leakage(), 3.0);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    let x = Assignment::from_sets(3, &[vec![a], vec![b]]).unwrap();
                    assert!(run_bcd(&psi, &[1, 1], &x, 100).unwrap().final_leakage() <= 4.0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_start() {
        let x0 = sequential_assignment(3, &[1, 1]).unwrap();
        assert!(run_bcd(&three_user(), &[2, 1], &x0, 10).is_err());
        assert!(run_bcd(&three_user(), &[1, 1], &x0, 0).is_err());
        assert!(sequential_assignment(3, &[2, 2]).is_err());
    }

    fn instance() -> impl Strategy<Value = (DMatrix<f64>, Vec<usize>)> {
        (2usize..=12, 1usize..=4).prop_flat_map(|(ut, a)| {
            (
                proptest::collection::vec(0.0f64..1.0, ut * ut),
                proptest::collection::vec(0usize..=ut / a, a),
            )
                .prop_map(move |(v, rho)| (DMatrix::from_vec(ut, ut, v), rho))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn every_block_update_is_monotone((psi, rho) in instance()) {
            let x0 = sequential_assignment(psi.nrows(), &rho).unwrap();
            let st = run_bcd(&psi, &rho, &x0, DEFAULT_MAX_SWEEPS).unwrap();
            for w in st.update_trace.windows(2) {
                prop_assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
            }
            for w in st.f_history.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            prop_assert!(st.converged);
            st.assignment.check_loading(&rho).unwrap();
            prop_assert_eq!(st.final_leakage(), total_leakage_vector(&psi, &st.assignment).unwrap());
        }
    }
}
