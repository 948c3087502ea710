//! SINR and sum-rate evaluation, the assignment schemes, and the Monte Carlo
//! harness.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcd::{initial_assignment, run_bcd, DEFAULT_MAX_SWEEPS};
use crate::bounds::BoundsReport;
use crate::coupling::{coupling_matrix, total_leakage_vector, Assignment, CouplingMatrix};
use crate::numfmt::sig9;
use crate::precoding::{
    global_zf_precoder, initial_precoders, served_precoders, PrecoderSet, Span,
};
use crate::scenario::{advance_mobility, drop_seed, generate_scenario, DeploymentConfig, Scenario, TxPower};
use crate::{Error, Result};

/// How the SINR numerator and interference are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinrMode {
    /// Received powers through the actual precoders, with each domain's power
    /// split equally across its served users.
    #[default]
    Achieved,
    /// Unit effective gain for the served user and inter-domain interference
    /// only, at full domain power.
    Idealized,
}

impl FromStr for SinrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "achieved" => Ok(Self::Achieved),
            "idealized" => Ok(Self::Idealized),
            other => Err(Error::InvalidConfig(format!("unknown SINR mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    ProposedUa,
    Distance,
    IlmFixed,
    GlobalZf,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::ProposedUa, Scheme::Distance, Scheme::IlmFixed, Scheme::GlobalZf];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::ProposedUa => "proposed_ua",
            Scheme::Distance => "distance",
            Scheme::IlmFixed => "ilm_fixed",
            Scheme::GlobalZf => "global_zf",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub rho: Vec<usize>,
    pub mode: SinrMode,
    pub max_sweeps: usize,
}

impl PipelineConfig {
    pub fn new(rho: Vec<usize>) -> Self {
        Self { rho, mode: SinrMode::Achieved, max_sweeps: DEFAULT_MAX_SWEEPS }
    }

    pub fn with_mode(mut self, mode: SinrMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Copy of `cfg` with every domain transmitting at `dbm`.
pub fn at_operating_point(cfg: &DeploymentConfig, dbm: f64) -> DeploymentConfig {
    let mut out = cfg.clone();
    out.tx_power_dbm = TxPower::Uniform(dbm);
    out
}

/// Copy of `cfg` whose uniform transmit power puts the mean per-antenna
/// received SNR of `scenario`'s users, over their own domain, at `snr_db`.
pub fn at_mean_snr(scenario: &Scenario, cfg: &DeploymentConfig, snr_db: f64) -> DeploymentConfig {
    let total = scenario.total_users();
    let antennas = scenario.domain_antennas() as f64;
    let mean_gain = (0..total)
        .map(|u| scenario.channel_gain(scenario.initial_domain(u), u) / antennas)
        .sum::<f64>()
        / total as f64;
    let dbm = snr_db + cfg.noise_power_dbm - 10.0 * mean_gain.log10();
    at_operating_point(cfg, dbm)
}

/// Transmit power allotted to the beam of `user`.
fn beam_power(cfg: &DeploymentConfig, assignment: &Assignment, mode: SinrMode, user: usize) -> f64 {
    let k = assignment.domain_of(user).expect("only served users transmit");
    let p = cfg.tx_power_w(k);
    match mode {
        SinrMode::Achieved => p / assignment.rho()[k] as f64,
        SinrMode::Idealized => p,
    }
}

/// SINR of a served user.
pub fn sinr(
    scenario: &Scenario,
    cfg: &DeploymentConfig,
    precoders: &PrecoderSet,
    assignment: &Assignment,
    mode: SinrMode,
    user: usize,
) -> Result<f64> {
    let k = assignment.domain_of(user).ok_or(Error::UserNotServed(user))?;
    let noise = cfg.noise_power_w();
    let mut interference = 0.0;
    for w in 0..assignment.num_users() {
        let Some(l) = assignment.domain_of(w) else { continue };
        if w == user || (mode == SinrMode::Idealized && l == k) {
            continue;
        }
        let g = precoders.gain(scenario, w, user).ok_or(Error::UserNotServed(w))?;
        interference += beam_power(cfg, assignment, mode, w) * g;
    }
    let signal = match mode {
        SinrMode::Achieved => {
            beam_power(cfg, assignment, mode, user) * precoders.gain(scenario, user, user).ok_or(Error::UserNotServed(user))?
        }
        SinrMode::Idealized => cfg.tx_power_w(k),
    };
    Ok(signal / (interference + noise))
}

pub fn sum_rate(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|g| (1.0 + g).log2()).sum()
}

/// Leakage actually received across domains: `sum p_k |h_{k,u} v_w|^2` over
/// served pairs `(w, u)` whose serving domains differ.
pub fn realized_leakage(
    scenario: &Scenario,
    cfg: &DeploymentConfig,
    precoders: &PrecoderSet,
    assignment: &Assignment,
) -> Result<f64> {
    let served: Vec<usize> = (0..assignment.num_users()).filter(|&u| assignment.domain_of(u).is_some()).collect();
    let mut f = 0.0;
    for &w in &served {
        let k = assignment.domain_of(w).unwrap();
        for &u in &served {
            if assignment.domain_of(u) != Some(k) {
                f += cfg.tx_power_w(k) * precoders.gain(scenario, w, u).ok_or(Error::UserNotServed(w))?;
            }
        }
    }
    Ok(f)
}

/// Greedy assignment by channel gain, strongest (gain, user, domain) first.
pub fn distance_based_assignment(scenario: &Scenario, rho: &[usize]) -> Result<Assignment> {
    let a = scenario.num_domains;
    let ut = scenario.total_users();
    if rho.len() != a {
        return Err(Error::DimensionMismatch(format!("{} loads for {a} domains", rho.len())));
    }
    let total: usize = rho.iter().sum();
    if total > ut {
        return Err(Error::Infeasible(format!("{total} slots for {ut} users")));
    }
    let mut candidates: Vec<(f64, usize, usize)> =
        (0..ut).flat_map(|u| (0..a).map(move |k| (u, k))).map(|(u, k)| (scenario.channel_gain(k, u), u, k)).collect();
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut serving = vec![None; ut];
    let mut left = rho.to_vec();
    for (_, u, k) in candidates {
        if serving[u].is_none() && left[k] > 0 {
            serving[u] = Some(k);
            left[k] -= 1;
        }
    }
    if left.iter().any(|&l| l > 0) {
        return Err(Error::Infeasible("ranking could not fill every domain".into()));
    }
    Assignment::from_serving(serving, a)
}

/// Assignment and precoders chosen by a scheme, before evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub scheme: Scheme,
    pub assignment: Assignment,
    pub precoders: PrecoderSet,
    /// Coupling-matrix leakage of the initial assignment.
    pub leakage_initial: f64,
    pub iters: usize,
}

/// Runs a scheme's assignment and precoder design on `scenario`.
pub fn plan(scenario: &Scenario, cfg: &DeploymentConfig, scheme: Scheme, pc: &PipelineConfig) -> Result<Plan> {
    let x0 = initial_assignment(scenario, &pc.rho)?;
    let powers: Vec<f64> = (0..scenario.num_domains).map(|k| cfg.tx_power_w(k)).collect();
    let initial = || -> Result<_> {
        let pre = initial_precoders(scenario)?;
        let psi = coupling_matrix(scenario, &pre, &powers)?;
        let f0 = total_leakage_vector(&psi.psi, &x0)?;
        Ok((pre, psi, f0))
    };
    match scheme {
        Scheme::ProposedUa => {
            let (_, psi, f0) = initial()?;
            let st = run_bcd(&psi.psi, &pc.rho, &x0, pc.max_sweeps)?;
            let precoders = served_precoders(scenario, &st.assignment, true)?;
            Ok(Plan { scheme, assignment: st.assignment, precoders, leakage_initial: f0, iters: st.sweeps })
        }
        Scheme::IlmFixed => {
            let (_, _, f0) = initial()?;
            let precoders = served_precoders(scenario, &x0, true)?;
            Ok(Plan { scheme, assignment: x0, precoders, leakage_initial: f0, iters: 0 })
        }
        Scheme::Distance => {
            let assignment = distance_based_assignment(scenario, &pc.rho)?;
            let precoders = served_precoders(scenario, &assignment, false)?;
            Ok(Plan { scheme, assignment, precoders, leakage_initial: f64::NAN, iters: 0 })
        }
        Scheme::GlobalZf => {
            let precoders = global_zf_precoder(scenario, &x0)?;
            Ok(Plan { scheme, assignment: x0, precoders, leakage_initial: f64::NAN, iters: 0 })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub scheme: Scheme,
    pub drop: u64,
    pub snr_db: f64,
    pub users: Vec<usize>,
    pub sinr: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    /// Leakage received across domains with the final precoders.
    pub leakage: f64,
    /// Coupling-matrix leakage of the initial assignment (NaN where unused).
    pub leakage_initial: f64,
    pub iters: usize,
    pub assignment: Assignment,
}

/// Evaluates a plan on `scenario`, whose channels may differ from the ones
/// the plan was designed on.
pub fn evaluate(scenario: &Scenario, cfg: &DeploymentConfig, plan: &Plan, mode: SinrMode) -> Result<RateReport> {
    let users: Vec<usize> = (0..plan.assignment.num_users()).filter(|&u| plan.assignment.domain_of(u).is_some()).collect();
    let sinr = users
        .iter()
        .map(|&u| sinr(scenario, cfg, &plan.precoders, &plan.assignment, mode, u))
        .collect::<Result<Vec<_>>>()?;
    let rates: Vec<f64> = sinr.iter().map(|g| (1.0 + g).log2()).collect();
    Ok(RateReport {
        scheme: plan.scheme,
        drop: 0,
        snr_db: cfg.tx_power_dbm.dbm(0),
        users,
        sum_rate: sum_rate(&sinr),
        sinr,
        rates,
        leakage: realized_leakage(scenario, cfg, &plan.precoders, &plan.assignment)?,
        leakage_initial: plan.leakage_initial,
        iters: plan.iters,
        assignment: plan.assignment.clone(),
    })
}

pub fn run_pipeline(scenario: &Scenario, cfg: &DeploymentConfig, scheme: Scheme, pc: &PipelineConfig) -> Result<RateReport> {
    evaluate(scenario, cfg, &plan(scenario, cfg, scheme, pc)?, pc.mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub scheme: Scheme,
    pub drop: u64,
    pub snr_db: f64,
    pub rho: Vec<usize>,
    pub sum_rate: f64,
    pub leakage: f64,
    /// Leakage of the initial assignment; not part of the CSV.
    pub leakage_initial: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

pub const RATES_HEADER: &str = "scheme,drop,snr_db,rho,sum_rate_bps_hz,leakage,iters";

pub fn format_rho(rho: &[usize]) -> String {
    if rho.windows(2).all(|w| w[0] == w[1]) && !rho.is_empty() {
        rho[0].to_string()
    } else {
        rho.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
    }
}

impl ExperimentTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{RATES_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.scheme.label(),
                r.drop,
                sig9(r.snr_db),
                format_rho(&r.rho),
                sig9(r.sum_rate),
                sig9(r.leakage),
                r.iters
            )
            .unwrap();
        }
        out
    }

    /// Mean sum-rate of a scheme at one operating point.
    pub fn mean(&self, scheme: Scheme, snr_db: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && r.snr_db == snr_db)
            .map(|r| r.sum_rate)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn in_drop(drop: u64, e: Error) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("drop {drop}: {m}")),
        Error::RankDeficient(m) => Error::RankDeficient(format!("drop {drop}: {m}")),
        Error::Infeasible(m) => Error::Infeasible(format!("drop {drop}: {m}")),
        other => other,
    }
}

/// Sum-rate of every scheme, drop and operating point. Drop `d` uses the
/// seed `drop_seed(cfg.seed, d)`; rows are ordered by scheme, drop, then SNR.
pub fn run_monte_carlo(
    cfg: &DeploymentConfig,
    schemes: &[Scheme],
    drops: u64,
    snr_grid: &[f64],
    pc: &PipelineConfig,
) -> Result<ExperimentTable> {
    if drops == 0 {
        return Err(Error::InvalidConfig("at least one drop is required".into()));
    }
    cfg.validate()?;
    let per_drop = (0..drops)
        .into_par_iter()
        .map(|d| {
            let scenario = generate_scenario(&cfg.clone().with_seed(drop_seed(cfg.seed, d)))?;
            let mut rows = Vec::new();
            for &scheme in schemes {
                for &snr in snr_grid {
                    let op = at_operating_point(cfg, snr);
                    let r = run_pipeline(&scenario, &op, scheme, pc)?;
                    rows.push(ExperimentRow {
                        scheme,
                        drop: d,
                        snr_db: snr,
                        rho: pc.rho.clone(),
                        sum_rate: r.sum_rate,
                        leakage: r.leakage,
                        leakage_initial: r.leakage_initial,
                        iters: r.iters,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Vec<Result<Vec<ExperimentRow>>>>();
    let mut rows = Vec::new();
    for (d, r) in per_drop.into_iter().enumerate() {
        rows.extend(r.map_err(|e| in_drop(d as u64, e))?);
    }
    rows.sort_by_key(|r| (Scheme::ALL.iter().position(|&s| s == r.scheme), r.drop));
    Ok(ExperimentTable { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationRow {
    pub tau_ms: f64,
    pub mean_sum_rate: f64,
    pub degradation_pct: f64,
}

pub const MOBILITY_HEADER: &str = "tau_ms,mean_sum_rate_bps_hz,degradation_pct";

pub fn degradation_csv(rows: &[DegradationRow]) -> String {
    let mut out = format!("{MOBILITY_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{}", sig9(r.tau_ms), sig9(r.mean_sum_rate), sig9(r.degradation_pct)).unwrap();
    }
    out
}

/// Designs the proposed scheme on the channels of each drop and evaluates it
/// after the users have moved for `tau` milliseconds. Each drop transmits at
/// the power that puts its mean received SNR at `mean_snr_db`.
pub fn run_outdated_csi(
    cfg: &DeploymentConfig,
    tau_ms_list: &[f64],
    drops: u64,
    mean_snr_db: f64,
    pc: &PipelineConfig,
) -> Result<Vec<DegradationRow>> {
    if drops == 0 {
        return Err(Error::InvalidConfig("at least one drop is required".into()));
    }
    if tau_ms_list.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(Error::InvalidConfig("delays must be non-negative".into()));
    }
    cfg.validate()?;
    let per_drop = (0..drops)
        .into_par_iter()
        .map(|d| {
            let drop_cfg = cfg.clone().with_seed(drop_seed(cfg.seed, d));
            let s0 = generate_scenario(&drop_cfg)?;
            let op = at_mean_snr(&s0, cfg, mean_snr_db);
            let plan = plan(&s0, &op, Scheme::ProposedUa, pc)?;
            let fresh = evaluate(&s0, &op, &plan, pc.mode)?.sum_rate;
            let aged = tau_ms_list
                .iter()
                .map(|&tau| {
                    let st = advance_mobility(&s0, &drop_cfg, tau);
                    Ok(evaluate(&st, &op, &plan, pc.mode)?.sum_rate)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((fresh, aged))
        })
        .collect::<Vec<Result<(f64, Vec<f64>)>>>();
    let mut fresh_sum = 0.0;
    let mut aged_sum = vec![0.0; tau_ms_list.len()];
    for (d, r) in per_drop.into_iter().enumerate() {
        let (fresh, aged) = r.map_err(|e| in_drop(d as u64, e))?;
        fresh_sum += fresh;
        for (acc, v) in aged_sum.iter_mut().zip(aged) {
            *acc += v;
        }
    }
    let n = drops as f64;
    let base = fresh_sum / n;
    Ok(tau_ms_list
        .iter()
        .zip(aged_sum)
        .map(|(&tau_ms, s)| {
            let mean = s / n;
            DegradationRow { tau_ms, mean_sum_rate: mean, degradation_pct: 100.0 * (1.0 - mean / base) }
        })
        .collect())
}

/// Coupling matrix of a drop, from the initial precoders, and the initial assignment.
pub fn coupling_instance(scenario: &Scenario, cfg: &DeploymentConfig, rho: &[usize]) -> Result<(CouplingMatrix, Assignment)> {
    let powers: Vec<f64> = (0..scenario.num_domains).map(|k| cfg.tx_power_w(k)).collect();
    let psi = coupling_matrix(scenario, &initial_precoders(scenario)?, &powers)?;
    Ok((psi, initial_assignment(scenario, rho)?))
}

/// Bounds report of every drop; per-drop failures are returned, not raised.
pub fn run_bounds_drops(
    cfg: &DeploymentConfig,
    rho: &[usize],
    drops: u64,
    max_sweeps: usize,
) -> Result<Vec<(u64, Result<BoundsReport>)>> {
    if drops == 0 {
        return Err(Error::InvalidConfig("at least one drop is required".into()));
    }
    cfg.validate()?;
    Ok((0..drops)
        .into_par_iter()
        .map(|d| {
            let report = generate_scenario(&cfg.clone().with_seed(drop_seed(cfg.seed, d)))
                .and_then(|s| coupling_instance(&s, cfg, rho))
                .and_then(|(psi, x0)| BoundsReport::compute(&psi.psi, rho, Some(&x0), max_sweeps));
            (d, report)
        })
        .collect())
}

/// True when every beam of `precoders` is sent by a single domain.
pub fn is_per_domain(precoders: &PrecoderSet) -> bool {
    precoders.blocks.iter().all(|b| matches!(b.span, Span::Domain(_)))
}
