//! Dense two-phase simplex for small linear programs.
//!
//! Solves `min c^T x  s.t.  G x <= h,  E x = d,  x >= 0` and returns the
//! primal point together with the dual multipliers of every row.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

impl LpProblem {
    pub fn new(c: Vec<f64>) -> Self {
        Self { c, ..Self::default() }
    }

    pub fn le(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.g.push(row);
        self.h.push(rhs);
        self
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.e.push(row);
        self.d.push(rhs);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.g.len() != self.h.len() || self.e.len() != self.d.len() {
            return Err(Error::DimensionMismatch("row count differs from right-hand side".into()));
        }
        if self.g.iter().chain(&self.e).any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!("constraint rows must have {n} entries")));
        }
        let finite = self
            .c
            .iter()
            .chain(&self.h)
            .chain(&self.d)
            .chain(self.g.iter().flatten())
            .chain(self.e.iter().flatten())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("linear program has non-finite coefficients".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Multipliers of the `G x <= h` rows, non-negative.
    pub ineq_duals: Vec<f64>,
    /// Multipliers of the `E x = d` rows, free.
    pub eq_duals: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    fn without_optimum(status: LpStatus, pivots: usize) -> Self {
        Self { status, x: vec![], ineq_duals: vec![], eq_duals: vec![], objective: f64::NAN, pivots }
    }
}

struct Tableau {
    /// Row-major `rows x (cols + 1)`, last column is the right-hand side.
    a: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let factor = self.a[i * w + c];
            if factor != 0.0 {
                for j in 0..w {
                    self.a[i * w + j] -= factor * self.a[r * w + j];
                }
                self.a[i * w + c] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| cost[j] - (0..self.rows).map(|i| cost[self.basis[i]] * self.at(i, j)).sum::<f64>())
            .collect()
    }

    /// Runs Bland's rule over columns `< allowed`. Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize, max_pivots: usize) -> Result<bool> {
        loop {
            if self.pivots > max_pivots {
                return Err(Error::Numerical("simplex exceeded its pivot budget".into()));
            }
            let z = self.reduced_costs(cost);
            let Some(enter) = (0..allowed).find(|&j| z[j] < -PIVOT_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let aij = self.at(i, enter);
                if aij > PIVOT_TOL {
                    let ratio = self.rhs(i) / aij;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - PIVOT_TOL || (ratio <= best + PIVOT_TOL && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, enter),
            }
        }
    }
}

/// Solves the program with a two-phase tableau simplex and Bland's rule.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let n = p.num_vars();
    let mg = p.g.len();
    let me = p.e.len();
    let m = mg + me;
    let cols = n + mg + m;
    let art0 = n + mg;

    // rows with negative right-hand side are negated so that b >= 0
    let mut sign = vec![1.0; m];
    let mut a = vec![0.0; m * (cols + 1)];
    let w = cols + 1;
    for i in 0..m {
        let (row, rhs) = if i < mg { (&p.g[i], p.h[i]) } else { (&p.e[i - mg], p.d[i - mg]) };
        if rhs < 0.0 {
            sign[i] = -1.0;
        }
        for j in 0..n {
            a[i * w + j] = sign[i] * row[j];
        }
        if i < mg {
            a[i * w + n + i] = sign[i];
        }
        a[i * w + art0 + i] = 1.0;
        a[i * w + cols] = sign[i] * rhs;
    }
    // slack columns double as the initial basis where their sign allows it
    let basis: Vec<usize> = (0..m).map(|i| if i < mg && sign[i] > 0.0 { n + i } else { art0 + i }).collect();
    let mut t = Tableau { a, rows: m, cols, basis, pivots: 0 };
    let max_pivots = 50 * (cols + m) + 1000;

    let phase1: Vec<f64> = (0..cols).map(|j| if j >= art0 { 1.0 } else { 0.0 }).collect();
    t.optimize(&phase1, art0, max_pivots)?;
    let infeasibility: f64 = (0..m).filter(|&i| t.basis[i] >= art0).map(|i| t.rhs(i)).sum();
    let scale = 1.0 + p.h.iter().chain(&p.d).fold(0.0f64, |acc, x| acc.max(x.abs()));
    if infeasibility > FEAS_TOL * scale {
        return Ok(LpSolution::without_optimum(LpStatus::Infeasible, t.pivots));
    }
    // drive remaining artificials out of the basis; rows that cannot pivot are redundant
    for i in 0..m {
        if t.basis[i] >= art0 {
            if let Some(j) = (0..art0).find(|&j| t.at(i, j).abs() > PIVOT_TOL) {
                t.pivot(i, j);
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&p.c);
    if !t.optimize(&cost, art0, max_pivots)? {
        return Ok(LpSolution::without_optimum(LpStatus::Unbounded, t.pivots));
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rhs(i).max(0.0);
        }
    }

    // y^T = c_B^T B^-1, with B taken from the original columns of the basis
    let orig = |i: usize, j: usize| -> f64 {
        if j < n {
            sign[i] * if i < mg { p.g[i][j] } else { p.e[i - mg][j] }
        } else if j < art0 {
            if j - n == i {
                sign[i]
            } else {
                0.0
            }
        } else if j - art0 == i {
            1.0
        } else {
            0.0
        }
    };
    let b = DMatrix::from_fn(m, m, |i, r| orig(i, t.basis[r]));
    let cb = DVector::from_fn(m, |r, _| cost[t.basis[r]]);
    let y = if m == 0 {
        DVector::zeros(0)
    } else {
        b.transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| Error::Numerical("optimal basis is singular".into()))?
    };
    let ineq_duals: Vec<f64> = (0..mg).map(|i| (-sign[i] * y[i]).max(0.0)).collect();
    let eq_duals: Vec<f64> = (0..me).map(|i| sign[mg + i] * y[mg + i]).collect();
    let objective: f64 = p.c.iter().zip(&x).map(|(c, x)| c * x).sum();

    let sol = LpSolution { status: LpStatus::Optimal, x, ineq_duals, eq_duals, objective, pivots: t.pivots };
    check_certificate(p, &sol)?;
    Ok(sol)
}

/// Residuals of an optimal solution: (primal infeasibility, complementary slackness, duality gap).
pub fn certificate_residuals(p: &LpProblem, sol: &LpSolution) -> (f64, f64, f64) {
    let dot = |r: &[f64]| r.iter().zip(&sol.x).map(|(a, b)| a * b).sum::<f64>();
    let mut primal = sol.x.iter().fold(0.0f64, |acc, &v| acc.max(-v));
    let mut slack = 0.0f64;
    for (i, row) in p.g.iter().enumerate() {
        let s = p.h[i] - dot(row);
        primal = primal.max(-s);
        slack = slack.max((sol.ineq_duals[i] * s).abs());
    }
    for (i, row) in p.e.iter().enumerate() {
        primal = primal.max((dot(row) - p.d[i]).abs());
    }
    let dual_obj: f64 = -p.h.iter().zip(&sol.ineq_duals).map(|(h, mu)| h * mu).sum::<f64>()
        + p.d.iter().zip(&sol.eq_duals).map(|(d, nu)| d * nu).sum::<f64>();
    (primal, slack, (sol.objective - dual_obj).abs())
}

fn check_certificate(p: &LpProblem, sol: &LpSolution) -> Result<()> {
    let (primal, slack, gap) = certificate_residuals(p, sol);
    let scale = 1.0 + sol.objective.abs();
    if primal > 1e-8 * scale || slack > 1e-6 * scale || gap > 1e-7 * scale {
        return Err(Error::Numerical(format!(
            "simplex certificate failed (primal {primal:e}, slackness {slack:e}, gap {gap:e})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_programs() {
        let s = solve_lp(&LpProblem::new(vec![1.0])).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, 0.0);

        let s = solve_lp(&LpProblem::new(vec![-1.0]).le(vec![1.0], 1.0)).unwrap();
        assert_eq!(s.x, vec![1.0]);
        assert!((s.ineq_duals[0] - 1.0).abs() < 1e-12);
        assert!((s.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_over_costs_picks_cheapest_vertex() {
        let c = vec![4.0, 2.5, 7.0, 2.5001, 3.0];
        let s = solve_lp(&LpProblem::new(c.clone()).eq(vec![1.0; 5], 1.0)).unwrap();
        assert!((s.objective - 2.5).abs() < 1e-12);
        assert!((s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.eq_duals[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn statuses() {
        let s = solve_lp(&LpProblem::new(vec![-1.0])).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
        let s = solve_lp(&LpProblem::new(vec![1.0]).le(vec![1.0], -1.0)).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        let s = solve_lp(&LpProblem::new(vec![1.0, 1.0]).eq(vec![1.0, 1.0], 1.0).eq(vec![1.0, 1.0], 2.0)).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn redundant_and_negative_rows() {
        // x + y = 1 twice, x - y >= -0.5 written as -x + y <= 0.5, min -y
        let p = LpProblem::new(vec![0.0, -1.0])
            .eq(vec![1.0, 1.0], 1.0)
            .eq(vec![2.0, 2.0], 2.0)
            .le(vec![-1.0, 1.0], 0.5)
            .le(vec![-1.0, 0.0], -0.1);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[1] - 0.75).abs() < 1e-12);
        assert!((s.objective + 0.75).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        let p = LpProblem::new(vec![1.0, 2.0]).le(vec![1.0], 1.0);
        assert!(matches!(solve_lp(&p), Err(Error::DimensionMismatch(_))));
    }

    /// Minimum of `c^T x` over all basic feasible solutions of `{G x <= h, 0 <= x}`.
    fn vertex_oracle(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> Option<f64> {
        let n = c.len();
        // every constraint as (row, rhs) with row x <= rhs, including -x_j <= 0
        let mut rows: Vec<(Vec<f64>, f64)> = g.iter().cloned().zip(h.iter().copied()).collect();
        for j in 0..n {
            let mut r = vec![0.0; n];
            r[j] = -1.0;
            rows.push((r, 0.0));
        }
        let mut best: Option<f64> = None;
        let total = rows.len();
        let mut pick = (0..n).collect::<Vec<_>>();
        loop {
            let a = DMatrix::from_fn(n, n, |i, j| rows[pick[i]].0[j]);
            let b = DVector::from_fn(n, |i, _| rows[pick[i]].1);
            if a.determinant().abs() > 1e-9 {
                let x = a.lu().solve(&b).unwrap();
                let feasible = rows
                    .iter()
                    .all(|(r, rhs)| r.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9);
                if feasible {
                    let v: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
            // next n-combination of constraint indices
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if pick[i] < total - n + i {
                    break;
                }
            }
            pick[i] += 1;
            for k in i + 1..n {
                pick[k] = pick[k - 1] + 1;
            }
        }
    }

    fn bounded_lp() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..=6, 1usize..=4).prop_flat_map(|(n, extra)| {
            (
                proptest::collection::vec(-5.0f64..5.0, n),
                proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, n), extra),
                proptest::collection::vec(0.5f64..4.0, extra),
            )
                .prop_map(move |(c, mut g, mut h)| {
                    // a simplex-shaped cap keeps the feasible set bounded
                    g.push(vec![1.0; n]);
                    h.push(3.0);
                    (c, g, h)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn matches_vertex_enumeration((c, g, h) in bounded_lp()) {
            let mut p = LpProblem::new(c.clone());
            for (row, rhs) in g.iter().zip(&h) {
                p = p.le(row.clone(), *rhs);
            }
            let s = solve_lp(&p).unwrap();
            prop_assert_eq!(s.status, LpStatus::Optimal);
            let oracle = vertex_oracle(&c, &g, &h).unwrap();
            prop_assert!((s.objective - oracle).abs() < 1e-7, "{} vs {}", s.objective, oracle);
            let (primal, slack, gap) = certificate_residuals(&p, &s);
            prop_assert!(primal < 1e-8 && slack < 1e-6 && gap < 1e-7);
        }
    }
}
