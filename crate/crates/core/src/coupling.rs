//! Inter-domain coupling matrix, assignments and the leakage objective.
//!
//! Users carry a global index `u = j * U + n` (domain-major). Entry
//! `psi[(a, b)]` is the power that the beam of user `a`, sent by its initial
//! domain, leaks onto user `b`. Entries between users of the same initial
//! domain are zero.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::numfmt::sig9;
use crate::precoding::{PrecoderSet, Span};
use crate::scenario::Scenario;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub psi: DMatrix<f64>,
    /// `psi + psi^T`, the Hessian used by block updates.
    pub psi_sym: DMatrix<f64>,
    /// Initial domain of each user.
    pub domain_of: Vec<usize>,
}

impl CouplingMatrix {
    pub fn from_psi(psi: DMatrix<f64>, domain_of: Vec<usize>) -> Result<Self> {
        if !psi.is_square() || psi.nrows() != domain_of.len() {
            return Err(Error::DimensionMismatch(format!(
                "coupling matrix is {}x{} for {} users",
                psi.nrows(),
                psi.ncols(),
                domain_of.len()
            )));
        }
        if psi.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidConfig("coupling entries must be finite and non-negative".into()));
        }
        let psi_sym = &psi + psi.transpose();
        Ok(Self { psi, psi_sym, domain_of })
    }

    pub fn num_users(&self) -> usize {
        self.psi.nrows()
    }
}

/// Builds the coupling matrix from one beam per user, each transmitted by the
/// user's initial domain at `powers[domain]` watts.
pub fn coupling_matrix(scenario: &Scenario, precoders: &PrecoderSet, powers: &[f64]) -> Result<CouplingMatrix> {
    let ut = scenario.total_users();
    if powers.len() != scenario.num_domains {
        return Err(Error::DimensionMismatch(format!(
            "{} powers for {} domains",
            powers.len(),
            scenario.num_domains
        )));
    }
    let domain_of: Vec<usize> = (0..ut).map(|u| scenario.initial_domain(u)).collect();
    let mut psi = DMatrix::zeros(ut, ut);
    for a in 0..ut {
        let (block, col) = precoders.beam_of(a).ok_or(Error::UserNotServed(a))?;
        let span = precoders.blocks[block].span;
        if span != Span::Domain(domain_of[a]) {
            return Err(Error::Unsupported(format!(
                "beam of user {a} must be transmitted by its initial domain {}",
                domain_of[a]
            )));
        }
        let p = powers[domain_of[a]];
        for b in 0..ut {
            if domain_of[a] != domain_of[b] {
                psi[(a, b)] = p * precoders.response(scenario, block, col, b).norm_sqr();
            }
        }
    }
    CouplingMatrix::from_psi(psi, domain_of)
}

/// Users served by each domain, at most one domain per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    serving: Vec<Option<usize>>,
    rho: Vec<usize>,
}

impl Assignment {
    pub fn from_serving(serving: Vec<Option<usize>>, num_domains: usize) -> Result<Self> {
        let mut rho = vec![0; num_domains];
        for (u, s) in serving.iter().enumerate() {
            if let Some(k) = *s {
                if k >= num_domains {
                    return Err(Error::InfeasibleAssignment(format!("user {u} assigned to missing domain {k}")));
                }
                rho[k] += 1;
            }
        }
        Ok(Self { serving, rho })
    }

    /// Builds an assignment from per-domain indicator vectors.
    pub fn from_blocks(blocks: &[Vec<bool>]) -> Result<Self> {
        let ut = blocks.first().map_or(0, Vec::len);
        let mut serving = vec![None; ut];
        for (k, block) in blocks.iter().enumerate() {
            if block.len() != ut {
                return Err(Error::DimensionMismatch("indicator vectors differ in length".into()));
            }
            for (u, &x) in block.iter().enumerate() {
                if x {
                    if let Some(other) = serving[u] {
                        return Err(Error::InfeasibleAssignment(format!(
                            "user {u} served by domains {other} and {k}"
                        )));
                    }
                    serving[u] = Some(k);
                }
            }
        }
        Self::from_serving(serving, blocks.len())
    }

    /// Builds an assignment from the user sets of each domain.
    pub fn from_sets(num_users: usize, sets: &[Vec<usize>]) -> Result<Self> {
        let mut blocks = vec![vec![false; num_users]; sets.len()];
        for (k, set) in sets.iter().enumerate() {
            for &u in set {
                if u >= num_users {
                    return Err(Error::DimensionMismatch(format!("user {u} out of range")));
                }
                if blocks[k][u] {
                    return Err(Error::InfeasibleAssignment(format!("user {u} listed twice for domain {k}")));
                }
                blocks[k][u] = true;
            }
        }
        if sets.is_empty() {
            return Self::from_serving(vec![None; num_users], 0);
        }
        Self::from_blocks(&blocks)
    }

    /// Fails unless domain `k` serves exactly `rho[k]` users.
    pub fn check_loading(&self, rho: &[usize]) -> Result<()> {
        if self.rho != rho {
            return Err(Error::InfeasibleAssignment(format!("loading {:?} differs from {:?}", self.rho, rho)));
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }

    pub fn num_domains(&self) -> usize {
        self.rho.len()
    }

    pub fn rho(&self) -> &[usize] {
        &self.rho
    }

    pub fn domain_of(&self, user: usize) -> Option<usize> {
        self.serving[user]
    }

    pub fn serving(&self) -> &[Option<usize>] {
        &self.serving
    }

    /// Users served by domain `k`, in increasing order.
    pub fn served_by(&self, k: usize) -> Vec<usize> {
        (0..self.serving.len()).filter(|&u| self.serving[u] == Some(k)).collect()
    }

    pub fn sets(&self) -> Vec<Vec<usize>> {
        (0..self.num_domains()).map(|k| self.served_by(k)).collect()
    }

    pub fn blocks(&self) -> Vec<Vec<bool>> {
        (0..self.num_domains())
            .map(|k| self.serving.iter().map(|s| *s == Some(k)).collect())
            .collect()
    }

    /// The `U_T x A` indicator matrix `X`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_users(), self.num_domains(), |u, k| {
            if self.serving[u] == Some(k) {
                1.0
            } else {
                0.0
            }
        })
    }
}

fn check_dims(psi: &DMatrix<f64>, assignment: &Assignment) -> Result<()> {
    if !psi.is_square() || psi.nrows() != assignment.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "coupling matrix is {}x{}, assignment covers {} users",
            psi.nrows(),
            psi.ncols(),
            assignment.num_users()
        )));
    }
    Ok(())
}

/// `sum_k sum_{l != k} x_k^T psi x_l` over explicit user sets.
///
/// Summed over user pairs in index order, so the value is bit-identical
/// under any relabelling of the domains.
pub(crate) fn leakage_of_sets(psi: &DMatrix<f64>, sets: &[Vec<usize>]) -> f64 {
    let mut domain = vec![usize::MAX; psi.nrows()];
    for (k, sk) in sets.iter().enumerate() {
        for &a in sk {
            domain[a] = k;
        }
    }
    let served: Vec<usize> = (0..domain.len()).filter(|&u| domain[u] != usize::MAX).collect();
    let mut f = 0.0;
    for (i, &a) in served.iter().enumerate() {
        for &b in &served[i + 1..] {
            if domain[a] != domain[b] {
                f += psi[(a, b)] + psi[(b, a)];
            }
        }
    }
    f
}

/// Total leakage as a sum of bilinear forms.
pub fn total_leakage_vector(psi: &DMatrix<f64>, assignment: &Assignment) -> Result<f64> {
    check_dims(psi, assignment)?;
    Ok(leakage_of_sets(psi, &assignment.sets()))
}

/// Total leakage as `tr(X^T psi X Omega)` with `Omega = 1 1^T - I`.
pub fn total_leakage_matrix(psi: &DMatrix<f64>, assignment: &Assignment) -> Result<f64> {
    check_dims(psi, assignment)?;
    let x = assignment.matrix();
    let a = assignment.num_domains();
    let omega = DMatrix::from_fn(a, a, |i, j| if i == j { 0.0 } else { 1.0 });
    Ok((x.transpose() * psi * &x * omega).trace())
}

/// Leakage received by a served user from the users of all other domains.
pub fn per_user_leakage(psi: &DMatrix<f64>, assignment: &Assignment, user: usize) -> Result<f64> {
    check_dims(psi, assignment)?;
    if user >= assignment.num_users() {
        return Err(Error::DimensionMismatch(format!("user {user} out of range")));
    }
    let k = assignment.domain_of(user).ok_or(Error::UserNotServed(user))?;
    Ok((0..assignment.num_users())
        .filter(|&a| matches!(assignment.domain_of(a), Some(l) if l != k))
        .map(|a| psi[(a, user)])
        .sum())
}

/// Writes `psi` as CSV with a `user,0,1,...` header.
pub fn psi_to_csv(psi: &DMatrix<f64>) -> String {
    let mut out = String::from("user");
    for b in 0..psi.ncols() {
        write!(out, ",{b}").unwrap();
    }
    out.push('\n');
    for a in 0..psi.nrows() {
        write!(out, "{a}").unwrap();
        for b in 0..psi.ncols() {
            write!(out, ",{}", sig9(psi[(a, b)])).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a square matrix, either as written by [`psi_to_csv`] or as bare
/// comma-separated rows without header and index column.
pub fn psi_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("user") {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    let skip = if n > 0 && rows.iter().all(|r| r.len() == n + 1) { 1 } else { 0 };
    if n == 0 || rows.iter().any(|r| r.len() != n + skip) {
        return Err(Error::Parse(format!("expected a square matrix, got {n} rows")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j + skip]))
}
