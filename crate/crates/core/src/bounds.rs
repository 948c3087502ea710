//! Lower bounds on the optimal leakage and exact solvers for small instances.
//!
//! The Dantzig-Wolfe master problem optimises a convex combination of the
//! enumerated loading-feasible assignments `S_rho`:
//!
//! ```text
//! min alpha^T w   s.t.  Gamma w <= 0,  1^T w = 1,  w >= 0
//! ```
//!
//! where `alpha_j` is the leakage of member `j` and column `j` of `Gamma` is
//! `Q_j 1 - 1` (how often each user is over-assigned).

use nalgebra::DMatrix;

use crate::bcd::{run_bcd, sequential_assignment};
use crate::coupling::{leakage_of_sets, Assignment};
use crate::lp::{solve_lp, LpProblem, LpStatus};
use crate::numfmt::sig9;
use crate::{Error, Result};

/// Default cap on `|S_rho|`.
pub const COLUMN_CAP: u128 = 1_000_000;
/// Default cap on the number of assignments visited by the exhaustive search.
pub const ORACLE_CAP: u128 = 10_000_000;
/// Columns with a reduced cost above this value do not enter the master problem.
pub const REDUCED_COST_TOL: f64 = -1e-9;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// All `r`-subsets of `0..n` as bitmasks, in lexicographic order of their index lists.
fn combinations(n: usize, r: usize) -> Vec<u64> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    if r > n {
        return out;
    }
    loop {
        out.push(idx.iter().fold(0u64, |m, &i| m | (1 << i)));
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - r + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn users_in(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

fn check_psi(psi: &DMatrix<f64>) -> Result<usize> {
    if !psi.is_square() {
        return Err(Error::DimensionMismatch(format!("coupling matrix is {}x{}", psi.nrows(), psi.ncols())));
    }
    if psi.nrows() > 64 {
        return Err(Error::Unsupported("enumeration supports at most 64 users".into()));
    }
    Ok(psi.nrows())
}

/// Enumerated members of `S_rho` with their leakage and over-assignment vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSet {
    pub num_users: usize,
    pub rho: Vec<usize>,
    /// Per column, the bitmask of users picked by each domain.
    pub members: Vec<Vec<u64>>,
    pub alpha: Vec<f64>,
}

impl ColumnSet {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `Q_j 1 - 1`.
    pub fn qvec(&self, j: usize) -> Vec<i32> {
        (0..self.num_users)
            .map(|u| self.members[j].iter().filter(|&&m| m >> u & 1 == 1).count() as i32 - 1)
            .collect()
    }

    /// The `U_T x S` matrix whose columns are the `qvec`s.
    pub fn gamma(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.num_users, self.len());
        for j in 0..self.len() {
            for (u, q) in self.qvec(j).into_iter().enumerate() {
                g[(u, j)] = q as f64;
            }
        }
        g
    }

    /// True when no user is picked by two domains.
    pub fn is_disjoint(&self, j: usize) -> bool {
        let mut seen = 0u64;
        for &m in &self.members[j] {
            if seen & m != 0 {
                return false;
            }
            seen |= m;
        }
        true
    }

    pub fn sets(&self, j: usize) -> Vec<Vec<usize>> {
        self.members[j].iter().map(|&m| users_in(m)).collect()
    }

    pub fn min_alpha(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn scale(&self) -> f64 {
        let m = self.alpha.iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }
}

pub fn column_count(num_users: usize, rho: &[usize]) -> u128 {
    rho.iter().fold(1u128, |acc, &r| acc.saturating_mul(binomial(num_users, r)))
}

pub fn enumerate_columns(psi: &DMatrix<f64>, rho: &[usize]) -> Result<ColumnSet> {
    enumerate_columns_capped(psi, rho, COLUMN_CAP)
}

/// Enumerates `S_rho` with domain 0 as the most significant position.
pub fn enumerate_columns_capped(psi: &DMatrix<f64>, rho: &[usize], cap: u128) -> Result<ColumnSet> {
    let ut = check_psi(psi)?;
    if let Some(k) = rho.iter().position(|&r| r > ut) {
        return Err(Error::InfeasibleAssignment(format!("domain {k} cannot pick {} of {ut} users", rho[k])));
    }
    let count = column_count(ut, rho);
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }
    let combos: Vec<Vec<u64>> = rho.iter().map(|&r| combinations(ut, r)).collect();
    let count = count as usize;
    let mut members = Vec::with_capacity(count);
    let mut alpha = Vec::with_capacity(count);
    let mut digits = vec![0usize; rho.len()];
    for _ in 0..count {
        let masks: Vec<u64> = digits.iter().enumerate().map(|(k, &d)| combos[k][d]).collect();
        let sets: Vec<Vec<usize>> = masks.iter().map(|&m| users_in(m)).collect();
        alpha.push(leakage_of_sets(psi, &sets));
        members.push(masks);
        for k in (0..rho.len()).rev() {
            digits[k] += 1;
            if digits[k] < combos[k].len() {
                break;
            }
            digits[k] = 0;
        }
    }
    Ok(ColumnSet { num_users: ut, rho: rho.to_vec(), members, alpha })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwSolution {
    /// Non-zero weights as (column, weight).
    pub w: Vec<(usize, f64)>,
    pub value: f64,
    /// Columns present in the final master problem.
    pub active: Vec<usize>,
    /// Columns added by pricing.
    pub iterations: usize,
}

struct Master {
    value: f64,
    weights: Vec<f64>,
    mu: Vec<f64>,
    pi: f64,
}

/// Solves the master problem over `active`, with `alpha` normalised by `scale`.
fn solve_master(cols: &ColumnSet, active: &[usize], scale: f64, relaxed: bool) -> Result<Master> {
    let ut = cols.num_users;
    let qs: Vec<Vec<i32>> = active.iter().map(|&j| cols.qvec(j)).collect();
    let mut p = LpProblem::new(active.iter().map(|&j| cols.alpha[j] / scale).collect());
    for u in 0..ut {
        p = p.le(qs.iter().map(|q| q[u] as f64).collect(), 0.0);
    }
    p = if relaxed {
        p.le(vec![-1.0; active.len()], -1.0)
    } else {
        p.eq(vec![1.0; active.len()], 1.0)
    };
    let sol = solve_lp(&p)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(sol.status));
    }
    let pi = if relaxed { sol.ineq_duals[ut] } else { sol.eq_duals[0] };
    Ok(Master {
        value: sol.objective * scale,
        weights: sol.x,
        mu: sol.ineq_duals[..ut].to_vec(),
        pi,
    })
}

fn sparse(active: &[usize], weights: &[f64]) -> Vec<(usize, f64)> {
    let mut w: Vec<(usize, f64)> =
        active.iter().zip(weights).filter(|(_, &x)| x > 0.0).map(|(&j, &x)| (j, x)).collect();
    w.sort_by_key(|&(j, _)| j);
    w
}

/// The master problem over every enumerated column.
pub fn solve_dw_full(cols: &ColumnSet) -> Result<DwSolution> {
    let active: Vec<usize> = (0..cols.len()).collect();
    let m = solve_master(cols, &active, cols.scale(), false)?;
    Ok(DwSolution { w: sparse(&active, &m.weights), value: m.value, active, iterations: 0 })
}

/// The `m0` column-disjoint members with the smallest leakage.
pub fn initial_columns(cols: &ColumnSet, m0: usize) -> Vec<usize> {
    let mut disjoint: Vec<usize> = (0..cols.len()).filter(|&j| cols.is_disjoint(j)).collect();
    disjoint.sort_by(|&a, &b| cols.alpha[a].total_cmp(&cols.alpha[b]).then(a.cmp(&b)));
    disjoint.truncate(m0.max(1));
    disjoint
}

/// Column generation over the enumerated set, starting from [`initial_columns`].
pub fn solve_dw_cgm(cols: &ColumnSet, m0: usize) -> Result<DwSolution> {
    let active = initial_columns(cols, m0);
    if active.is_empty() {
        return Err(Error::Lp(LpStatus::Infeasible));
    }
    solve_dw_cgm_from(cols, active)
}

/// Column generation from an explicit initial active set.
pub fn solve_dw_cgm_from(cols: &ColumnSet, mut active: Vec<usize>) -> Result<DwSolution> {
    let scale = cols.scale();
    let mut in_master = vec![false; cols.len()];
    for &j in &active {
        in_master[j] = true;
    }
    let mut iterations = 0;
    loop {
        let m = solve_master(cols, &active, scale, false)?;
        if active.len() == cols.len() {
            return Ok(DwSolution { w: sparse(&active, &m.weights), value: m.value, active, iterations });
        }
        // d_j = alpha_j + q_j^T mu - pi, with mu >= 0 the multipliers of Gamma w <= 0
        let mut best: Option<(usize, f64)> = None;
        for j in (0..cols.len()).filter(|&j| !in_master[j]) {
            let q = cols.qvec(j);
            let d = cols.alpha[j] / scale + q.iter().zip(&m.mu).map(|(&q, mu)| q as f64 * mu).sum::<f64>() - m.pi;
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, d)) if d < REDUCED_COST_TOL => {
                in_master[j] = true;
                active.push(j);
                iterations += 1;
            }
            _ => return Ok(DwSolution { w: sparse(&active, &m.weights), value: m.value, active, iterations }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub value: f64,
    /// Multipliers of the over-assignment rows, non-negative.
    pub lambda: Vec<f64>,
}

/// Relaxed master problem with `1^T w >= 1`.
pub fn solve_dual(cols: &ColumnSet) -> Result<DualSolution> {
    let active: Vec<usize> = (0..cols.len()).collect();
    let scale = cols.scale();
    let m = solve_master(cols, &active, scale, true)?;
    Ok(DualSolution { value: m.value, lambda: m.mu.iter().map(|x| x * scale).collect() })
}

/// `sum_k sum_{l != k} rho_k rho_l`.
pub fn eta(rho: &[usize]) -> f64 {
    let s: usize = rho.iter().sum();
    let sq: usize = rho.iter().map(|r| r * r).sum();
    (s * s - sq) as f64
}

/// Largest and smallest singular value.
pub fn extreme_singular_values(psi: &DMatrix<f64>) -> (f64, f64) {
    if psi.is_empty() {
        return (0.0, 0.0);
    }
    let sv = psi.clone().singular_values();
    (sv.max(), sv.min())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapBounds {
    pub tight: f64,
    pub loose: f64,
    pub eta: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

/// `eta sigma_max - min alpha` and `eta (sigma_max - sigma_min)`.
pub fn dw_gap_bounds(psi: &DMatrix<f64>, rho: &[usize], cols: &ColumnSet) -> GapBounds {
    let eta = eta(rho);
    let (sigma_max, sigma_min) = extreme_singular_values(psi);
    GapBounds {
        tight: eta * sigma_max - cols.min_alpha(),
        loose: eta * (sigma_max - sigma_min),
        eta,
        sigma_max,
        sigma_min,
    }
}

/// `eta (sigma_max - sigma_min) + 1^T lambda - (sum rho) min lambda`.
pub fn duality_gap_bound(psi: &DMatrix<f64>, rho: &[usize], lambda: &[f64]) -> f64 {
    let (smax, smin) = extreme_singular_values(psi);
    let total: usize = rho.iter().sum();
    let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let min = if min.is_finite() { min } else { 0.0 };
    eta(rho) * (smax - smin) + lambda.iter().sum::<f64>() - total as f64 * min
}

/// Exact solver for two fully and equally loaded domains.
///
/// Scans `x` over all `rho`-subsets in lexicographic order and minimises
/// `x^T P 1 - x^T P x` with `P = psi + psi^T`; domain 1 takes the complement.
pub fn solve_two_domain_exact(psi: &DMatrix<f64>, rho: &[usize]) -> Result<(Assignment, f64)> {
    let ut = check_psi(psi)?;
    if rho.len() != 2 || rho[0] != rho[1] || rho[0] + rho[1] != ut {
        return Err(Error::Unsupported(format!(
            "two equally and fully loaded domains required, got {rho:?} for {ut} users"
        )));
    }
    let sym = psi + psi.transpose();
    let row_sums: Vec<f64> = (0..ut).map(|u| sym.row(u).sum()).collect();
    let mut best: Option<(u64, f64)> = None;
    for mask in combinations(ut, rho[0]) {
        let x = users_in(mask);
        let lin: f64 = x.iter().map(|&u| row_sums[u]).sum();
        let quad: f64 = x.iter().flat_map(|&a| x.iter().map(move |&b| (a, b))).map(|(a, b)| sym[(a, b)]).sum();
        let value = lin - quad;
        if best.is_none_or(|(_, b)| value < b) {
            best = Some((mask, value));
        }
    }
    let (mask, _) = best.expect("at least one subset");
    let sets = vec![users_in(mask), users_in(!mask & ((1u64 << ut) - 1))];
    let assignment = Assignment::from_sets(ut, &sets)?;
    let f = leakage_of_sets(psi, &sets);
    Ok((assignment, f))
}

/// Number of assignments with exactly `rho_k` users per domain and no sharing.
pub fn count_feasible_assignments(num_users: usize, rho: &[usize]) -> u128 {
    let mut left = num_users;
    let mut count = 1u128;
    for &r in rho {
        if r > left {
            return 0;
        }
        count = count.saturating_mul(binomial(left, r));
        left -= r;
    }
    count
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub assignment: Assignment,
    pub f: f64,
    pub visited: u128,
}

pub fn exhaustive_oracle(psi: &DMatrix<f64>, rho: &[usize]) -> Result<OracleResult> {
    exhaustive_oracle_capped(psi, rho, ORACLE_CAP)
}

/// Global minimiser by enumeration; the first minimiser in visiting order wins.
pub fn exhaustive_oracle_capped(psi: &DMatrix<f64>, rho: &[usize], cap: u128) -> Result<OracleResult> {
    let ut = check_psi(psi)?;
    let count = count_feasible_assignments(ut, rho);
    if count == 0 {
        return Err(Error::InfeasibleAssignment(format!("{rho:?} cannot be served by {ut} users")));
    }
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }
    struct Search<'a> {
        psi: &'a DMatrix<f64>,
        rho: &'a [usize],
        ut: usize,
        sets: Vec<Vec<usize>>,
        best: Option<(Vec<Vec<usize>>, f64)>,
        visited: u128,
    }
    impl Search<'_> {
        fn go(&mut self, k: usize, used: u64) {
            if k == self.rho.len() {
                self.visited += 1;
                let f = leakage_of_sets(self.psi, &self.sets);
                if self.best.as_ref().is_none_or(|(_, b)| f < *b) {
                    self.best = Some((self.sets.clone(), f));
                }
                return;
            }
            let free: Vec<usize> = (0..self.ut).filter(|&u| used >> u & 1 == 0).collect();
            for mask in combinations(free.len(), self.rho[k]) {
                let chosen: Vec<usize> = users_in(mask).into_iter().map(|i| free[i]).collect();
                let bits = chosen.iter().fold(0u64, |m, &u| m | (1 << u));
                self.sets[k] = chosen;
                self.go(k + 1, used | bits);
            }
        }
    }
    let mut search = Search { psi, rho, ut, sets: vec![vec![]; rho.len()], best: None, visited: 0 };
    search.go(0, 0);
    let (sets, f) = search.best.expect("feasible set is non-empty");
    Ok(OracleResult { assignment: Assignment::from_sets(ut, &sets)?, f, visited: search.visited })
}

/// Every bound and reference value for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub f_bcd: f64,
    pub f_oracle: Option<f64>,
    pub f_dw: f64,
    pub f_dw_cgm: f64,
    pub cgm_iterations: usize,
    pub f_dual: f64,
    pub eta: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub dw_gap_bound_tight: f64,
    pub dw_gap_bound_loose: f64,
    pub dual_gap_bound: f64,
    pub bcd_sweeps: usize,
}

impl BoundsReport {
    /// Runs every solver on `psi`. BCD starts from `x_init`, or from the
    /// sequential assignment when none is given.
    pub fn compute(psi: &DMatrix<f64>, rho: &[usize], x_init: Option<&Assignment>, max_sweeps: usize) -> Result<Self> {
        let ut = check_psi(psi)?;
        let fallback;
        let x0 = match x_init {
            Some(x) => x,
            None => {
                fallback = sequential_assignment(ut, rho)?;
                &fallback
            }
        };
        let bcd = run_bcd(psi, rho, x0, max_sweeps)?;
        let f_oracle = match exhaustive_oracle(psi, rho) {
            Ok(o) => Some(o.f),
            Err(Error::TooLarge { .. }) => None,
            Err(e) => return Err(e),
        };
        let cols = enumerate_columns(psi, rho)?;
        let full = solve_dw_full(&cols)?;
        let cgm = solve_dw_cgm(&cols, rho.len())?;
        let dual = solve_dual(&cols)?;
        let gap = dw_gap_bounds(psi, rho, &cols);
        Ok(Self {
            f_bcd: bcd.final_leakage(),
            f_oracle,
            f_dw: full.value,
            f_dw_cgm: cgm.value,
            cgm_iterations: cgm.iterations,
            f_dual: dual.value,
            eta: gap.eta,
            sigma_max: gap.sigma_max,
            sigma_min: gap.sigma_min,
            dw_gap_bound_tight: gap.tight,
            dw_gap_bound_loose: gap.loose,
            dual_gap_bound: duality_gap_bound(psi, rho, &dual.lambda),
            bcd_sweeps: bcd.sweeps,
        })
    }

    /// JSON object with every value in 9-significant-digit decimal.
    pub fn to_json(&self) -> String {
        let oracle = self.f_oracle.map_or_else(|| "null".to_string(), sig9);
        let fields = [
            ("f_bcd", sig9(self.f_bcd)),
            ("f_oracle", oracle),
            ("f_dw", sig9(self.f_dw)),
            ("f_dw_cgm", sig9(self.f_dw_cgm)),
            ("cgm_iterations", self.cgm_iterations.to_string()),
            ("f_dual", sig9(self.f_dual)),
            ("eta", sig9(self.eta)),
            ("sigma_max", sig9(self.sigma_max)),
            ("sigma_min", sig9(self.sigma_min)),
            ("dw_gap_bound_tight", sig9(self.dw_gap_bound_tight)),
            ("dw_gap_bound_loose", sig9(self.dw_gap_bound_loose)),
            ("dual_gap_bound", sig9(self.dual_gap_bound)),
            ("bcd_sweeps", self.bcd_sweeps.to_string()),
        ];
        let body: Vec<String> = fields.iter().map(|(k, v)| format!("  \"{k}\": {v}")).collect();
        format!("{{\n{}\n}}\n", body.join(",\n"))
    }
}
