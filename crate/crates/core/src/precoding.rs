//! Zero-forcing precoders.
//!
//! The per-domain precoder solves
//!
//! ```text
//! min tr(V^H R V)   s.t.  H V = beta I,      R = sum_j H_j^H H_j
//! ```
//!
//! whose solution is `V ∝ R^-1 H^H (H R^-1 H^H)^-1`, normalised so that
//! `||V||_F^2` equals the number of served users. `R` is regularised with
//! `eps = 1e-9 tr(R) / MN` because it is singular whenever the interfering
//! users span fewer than `MN` dimensions.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coupling::Assignment;
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Relative regularisation added to the leakage covariance.
pub const REGULARIZATION: f64 = 1e-9;

/// Smallest admissible ratio between the extreme singular values of the
/// intra-domain channel.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder {
    /// `MN x U'` precoding matrix.
    pub v: DMatrix<Complex64>,
    pub beta: f64,
    /// Regularisation actually added to `R` (0 when `R` was replaced by `I`).
    pub regularization_eps: f64,
}

/// Which antennas a precoder block drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Span {
    /// The `M N` antennas of one domain.
    Domain(usize),
    /// All `A M N` antennas treated as one array.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderBlock {
    pub span: Span,
    /// Global user index of every column of `v`.
    pub users: Vec<usize>,
    pub v: DMatrix<Complex64>,
    pub beta: f64,
    pub regularization_eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub blocks: Vec<PrecoderBlock>,
}

impl PrecoderSet {
    /// Locates the beam serving `user` as (block, column).
    pub fn beam_of(&self, user: usize) -> Option<(usize, usize)> {
        self.blocks.iter().enumerate().find_map(|(b, block)| {
            block.users.iter().position(|&u| u == user).map(|c| (b, c))
        })
    }

    /// Complex response `h v` of `victim` to the beam in column `col` of `block`.
    pub fn response(&self, scenario: &Scenario, block: usize, col: usize, victim: usize) -> Complex64 {
        let b = &self.blocks[block];
        let v = b.v.column(col);
        match b.span {
            Span::Domain(d) => scenario.channel_row(d, victim).iter().zip(v.iter()).map(|(a, b)| a * b).sum(),
            Span::Joint => {
                let h = scenario.full_channel_row(victim);
                h.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// `|h v|^2` between the beam of `source` and `victim`.
    pub fn gain(&self, scenario: &Scenario, source: usize, victim: usize) -> Option<f64> {
        self.beam_of(source)
            .map(|(b, c)| self.response(scenario, b, c, victim).norm_sqr())
    }

    /// Domain whose antennas transmit the beam of `user` (`None` for joint beams).
    pub fn domain_of(&self, user: usize) -> Option<usize> {
        self.beam_of(user).and_then(|(b, _)| match self.blocks[b].span {
            Span::Domain(d) => Some(d),
            Span::Joint => None,
        })
    }
}

fn frobenius(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Leakage-minimising zero-forcing precoder for one domain.
///
/// `h_intra` holds the channels to the served users (`U' x MN`), `h_inter`
/// the channels to the users whose interference should be minimised.
pub fn zero_forcing_precoder(h_intra: &DMatrix<Complex64>, h_inter: &[DMatrix<Complex64>]) -> Result<ZfPrecoder> {
    let (served, mn) = h_intra.shape();
    for h in h_inter {
        if h.ncols() != mn {
            return Err(Error::DimensionMismatch(format!(
                "interfering channel has {} columns, expected {mn}",
                h.ncols()
            )));
        }
    }
    if served == 0 {
        return Ok(ZfPrecoder { v: DMatrix::zeros(mn, 0), beta: 1.0, regularization_eps: 0.0 });
    }
    if served > mn {
        return Err(Error::RankDeficient(format!("{served} users cannot be zero-forced with {mn} antennas")));
    }
    let sv = h_intra.clone().singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    if smax.is_nan() || smax <= 0.0 || smin <= RANK_TOLERANCE * smax {
        return Err(Error::RankDeficient("served users' channels are linearly dependent".into()));
    }

    let mut r = DMatrix::<Complex64>::zeros(mn, mn);
    for h in h_inter {
        r += h.adjoint() * h;
    }
    let trace: f64 = (0..mn).map(|k| r[(k, k)].re).sum();
    let eps = REGULARIZATION * trace / mn as f64;
    let r_reg = if eps > 0.0 {
        for k in 0..mn {
            r[(k, k)] += Complex64::new(eps, 0.0);
        }
        r
    } else {
        DMatrix::identity(mn, mn)
    };

    let r_chol = r_reg
        .cholesky()
        .ok_or_else(|| Error::Numerical("leakage covariance is not positive definite".into()))?;
    let h_adj = h_intra.adjoint();
    let y = r_chol.solve(&h_adj);
    let g = h_intra * &y;
    let g_chol = g
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("effective Gram matrix is singular".into()))?;
    // W = Y G^-1, using the Hermitian symmetry of G
    let mut w = g_chol.solve(&y.adjoint()).adjoint();
    // one step of iterative refinement on H W = I, staying in range(Y)
    let residual = DMatrix::<Complex64>::identity(served, served) - h_intra * &w;
    w += &y * g_chol.solve(&residual);

    let norm = frobenius(&w);
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Numerical("precoder norm is not finite".into()));
    }
    let scale = (served as f64).sqrt() / norm;
    Ok(ZfPrecoder { v: w * Complex64::new(scale, 0.0), beta: scale, regularization_eps: eps })
}

/// Precoders of every domain for its initial users, minimising leakage
/// towards all users of the other domains.
pub fn initial_precoders(scenario: &Scenario) -> Result<PrecoderSet> {
    let a = scenario.num_domains;
    let u = scenario.users_per_domain;
    let blocks = (0..a)
        .map(|i| {
            let inter: Vec<_> = (0..a).filter(|&j| j != i).map(|j| scenario.channels[i][j].clone()).collect();
            let zf = zero_forcing_precoder(&scenario.channels[i][i], &inter)?;
            Ok(PrecoderBlock {
                span: Span::Domain(i),
                users: (i * u..(i + 1) * u).collect(),
                v: zf.v,
                beta: zf.beta,
                regularization_eps: zf.regularization_eps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecoderSet { blocks })
}

/// Rebuilds each domain's precoder for the users it serves under `assignment`.
///
/// With `leakage_aware` the precoder minimises leakage towards the users
/// served by the other domains, otherwise it is plain zero-forcing.
pub fn served_precoders(scenario: &Scenario, assignment: &Assignment, leakage_aware: bool) -> Result<PrecoderSet> {
    let a = scenario.num_domains;
    check_assignment_shape(scenario, assignment)?;
    let blocks = (0..a)
        .map(|k| {
            let served = assignment.served_by(k);
            let intra = scenario.channel_rows(k, &served);
            let inter = if leakage_aware {
                let others: Vec<usize> = (0..a).filter(|&l| l != k).flat_map(|l| assignment.served_by(l)).collect();
                if others.is_empty() {
                    vec![]
                } else {
                    vec![scenario.channel_rows(k, &others)]
                }
            } else {
                vec![]
            };
            let zf = zero_forcing_precoder(&intra, &inter)?;
            Ok(PrecoderBlock {
                span: Span::Domain(k),
                users: served,
                v: zf.v,
                beta: zf.beta,
                regularization_eps: zf.regularization_eps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecoderSet { blocks })
}

/// Zero-forcing over all `A N` radio-heads for every served user.
pub fn global_zf_precoder(scenario: &Scenario, assignment: &Assignment) -> Result<PrecoderSet> {
    check_assignment_shape(scenario, assignment)?;
    let served: Vec<usize> = (0..assignment.num_users()).filter(|&u| assignment.domain_of(u).is_some()).collect();
    let antennas = scenario.num_domains * scenario.domain_antennas();
    if served.len() > antennas {
        return Err(Error::Infeasible(format!(
            "{} served users exceed the {antennas} available antennas",
            served.len()
        )));
    }
    let h = DMatrix::from_fn(served.len(), antennas, |r, c| {
        let mn = scenario.domain_antennas();
        scenario.channel_row(c / mn, served[r])[c % mn]
    });
    let zf = zero_forcing_precoder(&h, &[])?;
    Ok(PrecoderSet {
        blocks: vec![PrecoderBlock {
            span: Span::Joint,
            users: served,
            v: zf.v,
            beta: zf.beta,
            regularization_eps: zf.regularization_eps,
        }],
    })
}

fn check_assignment_shape(scenario: &Scenario, assignment: &Assignment) -> Result<()> {
    if assignment.num_users() != scenario.total_users() || assignment.num_domains() != scenario.num_domains {
        return Err(Error::DimensionMismatch(format!(
            "assignment is {}x{}, scenario has {} users and {} domains",
            assignment.num_users(),
            assignment.num_domains(),
            scenario.total_users(),
            scenario.num_domains
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::complex_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
    }

    fn zf_error(h: &DMatrix<Complex64>, p: &ZfPrecoder) -> f64 {
        let n = h.nrows();
        let e = h * &p.v - DMatrix::<Complex64>::identity(n, n) * Complex64::new(p.beta, 0.0);
        frobenius(&e) / p.beta
    }

    #[test]
    fn identity_channel_gives_identity_precoder() {
        let h = DMatrix::<Complex64>::identity(4, 4);
        let p = zero_forcing_precoder(&h, &[]).unwrap();
        assert!((p.beta - 1.0).abs() < 1e-12);
        assert!(frobenius(&(&p.v - &h)) < 1e-12);
        assert_eq!(p.regularization_eps, 0.0);
    }

    #[test]
    fn norm_and_zf_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let h = random_matrix(&mut rng, 3, 6);
            let inter = vec![random_matrix(&mut rng, 4, 6)];
            let p = zero_forcing_precoder(&h, &inter).unwrap();
            assert!((frobenius(&p.v) - 3f64.sqrt()).abs() < 1e-10);
            assert!(zf_error(&h, &p) < 1e-8);
        }
    }

    #[test]
    fn nulls_leakage_when_dimensions_allow() {
        // 4 served users, 4 interfered users, 8 antennas
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let h = random_matrix(&mut rng, 4, 8);
            let g = random_matrix(&mut rng, 4, 8);
            let p = zero_forcing_precoder(&h, std::slice::from_ref(&g)).unwrap();
            let r = g.adjoint() * &g;
            let leak = (p.v.adjoint() * &r * &p.v).trace().re;
            let r_norm = r.clone().singular_values().max();
            assert!(leak <= 1e-8 * r_norm * 4.0, "leakage {leak}");
            assert!(zf_error(&h, &p) < 1e-8);
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let row = random_matrix(&mut rng, 1, 4);
        let mut h = DMatrix::zeros(2, 4);
        h.set_row(0, &row.row(0));
        h.set_row(1, &(row.row(0) * Complex64::new(2.0, 0.0)));
        assert!(matches!(zero_forcing_precoder(&h, &[]), Err(Error::RankDeficient(_))));
        let wide = random_matrix(&mut rng, 5, 4);
        assert!(matches!(zero_forcing_precoder(&wide, &[]), Err(Error::RankDeficient(_))));
        let bad_inter = random_matrix(&mut rng, 2, 3);
        let ok = random_matrix(&mut rng, 2, 4);
        assert!(matches!(zero_forcing_precoder(&ok, &[bad_inter]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn no_projected_gradient_improvement() {
        // On the affine set {V : H V = beta I} the closed form is the minimiser
        // of tr(V^H R V); descent along the null space of H must not help.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let h = random_matrix(&mut rng, 3, 6);
            let g = random_matrix(&mut rng, 8, 6);
            let p = zero_forcing_precoder(&h, std::slice::from_ref(&g)).unwrap();
            let r = g.adjoint() * &g;
            let cost = |v: &DMatrix<Complex64>| (v.adjoint() * &r * v).trace().re;
            let hh = &h * h.adjoint();
            let proj = DMatrix::<Complex64>::identity(6, 6) - h.adjoint() * hh.try_inverse().unwrap() * &h;
            let base = cost(&p.v);
            let lmax = r.clone().singular_values().max();
            let mut v = p.v.clone();
            for _ in 0..200 {
                let grad = &proj * (&r * &v);
                v -= grad * Complex64::new(0.5 / lmax, 0.0);
            }
            assert!(zf_error(&h, &ZfPrecoder { v: v.clone(), beta: p.beta, regularization_eps: 0.0 }) < 1e-8);
            assert!(cost(&v) >= base - 1e-6 * base.max(1.0), "{} < {}", cost(&v), base);
        }
    }
}
