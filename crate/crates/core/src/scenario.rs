//! Deployments, spatially correlated Rician channels and user mobility.
//!
//! All randomness of a drop lives here. A [`Scenario`] is a pure function of
//! its [`DeploymentConfig`] (including the seed) and of the sequence of
//! [`advance_mobility`] calls applied to it.
//!
//! Channel model, per radio-head `r` of domain `i` and user `u`:
//!
//! ```text
//! h = sqrt(g) * ( sqrt(K/(K+1)) * a_los + sqrt(1/(K+1)) * L w )
//! g = 10^(-(PL(d) + S)/10),   PL(d) = 30 + 10 alpha log10(d)
//! ```
//!
//! where `S` is log-normal shadowing (fixed within a drop), `a_los` the
//! half-wavelength ULA response with a per-link phase drawn at drop time,
//! `L` the Cholesky factor of the exponential transmit correlation
//! `r^|a-b|` and `w` white circular Gaussian. During mobility `w` follows a
//! first-order Gauss-Markov process with Clarke correlation `J0(2 pi f_d dt)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Carrier frequency used for Doppler, in Hz.
pub const CARRIER_HZ: f64 = 2.0e9;
/// Upper end of the uniform user speed distribution, in km/h.
pub const MAX_SPEED_KMH: f64 = 40.0;
/// Distances are clamped to this value before entering the pathloss law.
pub const MIN_DISTANCE_M: f64 = 1.0;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn default_delta_m() -> f64 {
    100.0
}
fn default_tx_power() -> TxPower {
    TxPower::Uniform(15.0)
}
fn default_noise_dbm() -> f64 {
    -94.0
}
fn default_k_db() -> f64 {
    10.0
}
fn default_shadowing_db() -> f64 {
    4.0
}
fn default_pathloss_exponent() -> f64 {
    3.0
}
fn default_tx_correlation() -> f64 {
    0.5
}

/// Transmit power in dBm, either one value for every domain or one per domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TxPower {
    Uniform(f64),
    PerDomain(Vec<f64>),
}

impl TxPower {
    pub fn dbm(&self, domain: usize) -> f64 {
        match self {
            TxPower::Uniform(p) => *p,
            TxPower::PerDomain(ps) => ps[domain],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    /// Number of antenna domains.
    #[serde(rename = "A")]
    pub a: usize,
    /// Radio-heads per domain.
    #[serde(rename = "N")]
    pub n: usize,
    /// Antennas per radio-head.
    #[serde(rename = "M")]
    pub m: usize,
    /// Users dropped per domain tile.
    #[serde(rename = "U")]
    pub u: usize,
    #[serde(default = "default_delta_m")]
    pub delta_m: f64,
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: TxPower,
    #[serde(default = "default_noise_dbm")]
    pub noise_power_dbm: f64,
    #[serde(default = "default_k_db")]
    pub rician_k_db: f64,
    #[serde(default = "default_shadowing_db")]
    pub shadowing_sigma_db: f64,
    #[serde(default = "default_pathloss_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_tx_correlation")]
    pub tx_correlation: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DeploymentConfig {
    /// Configuration with default propagation parameters.
    pub fn new(a: usize, n: usize, m: usize, u: usize) -> Self {
        Self {
            a,
            n,
            m,
            u,
            delta_m: default_delta_m(),
            tx_power_dbm: default_tx_power(),
            noise_power_dbm: default_noise_dbm(),
            rician_k_db: default_k_db(),
            shadowing_sigma_db: default_shadowing_db(),
            pathloss_exponent: default_pathloss_exponent(),
            tx_correlation: default_tx_correlation(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_users(&self) -> usize {
        self.a * self.u
    }

    /// Antennas per domain (`M * N`).
    pub fn domain_antennas(&self) -> usize {
        self.m * self.n
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.a == 0 || self.n == 0 || self.m == 0 || self.u == 0 {
            return bad("A, N, M and U must all be at least 1");
        }
        if !(self.delta_m.is_finite() && self.delta_m > 0.0) {
            return bad("delta_m must be positive");
        }
        if !(0.0..1.0).contains(&self.tx_correlation) {
            return bad("tx_correlation must lie in [0, 1)");
        }
        match &self.tx_power_dbm {
            TxPower::Uniform(p) if !p.is_finite() => return bad("tx_power_dbm must be finite"),
            TxPower::PerDomain(ps) if ps.len() != self.a => {
                return bad("tx_power_dbm must list one value per domain")
            }
            TxPower::PerDomain(ps) if ps.iter().any(|p| !p.is_finite()) => {
                return bad("tx_power_dbm must be finite")
            }
            _ => {}
        }
        if !self.noise_power_dbm.is_finite() {
            return bad("noise_power_dbm must be finite");
        }
        if self.rician_k_db.is_nan() || self.rician_k_db == f64::NEG_INFINITY {
            return bad("rician_k_db must be a number (+inf allowed)");
        }
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return bad("shadowing_sigma_db must be non-negative");
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 0.0) {
            return bad("pathloss_exponent must be non-negative");
        }
        Ok(())
    }

    /// Transmit power of `domain` in watts.
    pub fn tx_power_w(&self, domain: usize) -> f64 {
        dbm_to_watts(self.tx_power_dbm.dbm(domain))
    }

    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub position: Point,
    /// Domain whose tile contained the user at drop time.
    pub initial_domain: usize,
    pub direction_rad: f64,
    pub speed_mps: f64,
}

/// Large-scale and small-scale state of every (domain, radio-head, user) link.
#[derive(Debug, Clone, PartialEq)]
struct LinkState {
    shadow_db: Vec<f64>,
    los_phase: Vec<f64>,
    /// White Gaussian fading state, `M` entries per link.
    white: Vec<Complex64>,
}

/// Borrowed `1 x MN` channel row.
pub type ChannelRow<'a> = nalgebra::MatrixView<'a, Complex64, nalgebra::U1, nalgebra::Dyn, nalgebra::U1, nalgebra::Dyn>;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub num_domains: usize,
    pub rrh_per_domain: usize,
    pub antennas_per_rrh: usize,
    pub users_per_domain: usize,
    /// Tile grid shape as (rows, cols).
    pub grid: (usize, usize),
    pub delta_m: f64,
    pub cp_positions: Vec<Point>,
    /// Radio-head positions, indexed `[domain][rrh]`.
    pub rrh_positions: Vec<Vec<Point>>,
    /// Users in global order (domain-major, then index within domain).
    pub users: Vec<UserState>,
    /// `channels[i][j]` is the `U x MN` channel from domain `i`'s antennas to
    /// the users initially in domain `j`; row `n` is `h_{i, j_n}`.
    pub channels: Vec<Vec<DMatrix<Complex64>>>,
    links: LinkState,
    seed: u64,
    epoch: u64,
}

impl Scenario {
    pub fn total_users(&self) -> usize {
        self.num_domains * self.users_per_domain
    }

    pub fn domain_antennas(&self) -> usize {
        self.rrh_per_domain * self.antennas_per_rrh
    }

    /// Number of mobility steps applied since the drop.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn initial_domain(&self, user: usize) -> usize {
        self.users[user].initial_domain
    }

    /// Channel row from the antennas of `domain` to global user `user`.
    pub fn channel_row(&self, domain: usize, user: usize) -> ChannelRow<'_> {
        let j = user / self.users_per_domain;
        let n = user % self.users_per_domain;
        self.channels[domain][j].row(n)
    }

    /// Stacks the rows `h_{domain, u}` for the given users into a matrix.
    pub fn channel_rows(&self, domain: usize, users: &[usize]) -> DMatrix<Complex64> {
        let mn = self.domain_antennas();
        DMatrix::from_fn(users.len(), mn, |r, c| self.channel_row(domain, users[r])[c])
    }

    /// Concatenated channel of `user` over all `A * M * N` antennas.
    pub fn full_channel_row(&self, user: usize) -> Vec<Complex64> {
        (0..self.num_domains)
            .flat_map(|d| self.channel_row(d, user).iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Squared norm of the channel from `domain` to `user`.
    pub fn channel_gain(&self, domain: usize, user: usize) -> f64 {
        self.channel_row(domain, user).iter().map(|h| h.norm_sqr()).sum()
    }

    /// Width and height of the deployment area.
    pub fn area_size(&self) -> (f64, f64) {
        (self.grid.1 as f64 * self.delta_m, self.grid.0 as f64 * self.delta_m)
    }

    fn link_index(&self, domain: usize, rrh: usize, user: usize) -> usize {
        (domain * self.rrh_per_domain + rrh) * self.total_users() + user
    }
}

/// Tile grid with exactly `a` tiles, as close to square as possible.
fn tile_grid(a: usize) -> (usize, usize) {
    let mut rows = 1;
    let mut r = 1;
    while r * r <= a {
        if a.is_multiple_of(r) {
            rows = r;
        }
        r += 1;
    }
    (rows, a / rows)
}

fn tile_origin(domain: usize, grid: (usize, usize), delta: f64) -> Point {
    let (_, cols) = grid;
    Point { x: (domain % cols) as f64 * delta, y: (domain / cols) as f64 * delta }
}

/// Radio-heads on a centred square grid inside the tile.
fn rrh_layout(n: usize, origin: Point, delta: f64) -> Vec<Point> {
    let side = (1..).find(|s| s * s >= n).unwrap();
    (0..n)
        .map(|k| Point {
            x: origin.x + ((k % side) as f64 + 0.5) * delta / side as f64,
            y: origin.y + ((k / side) as f64 + 0.5) * delta / side as f64,
        })
        .collect()
}

/// Exponential (Toeplitz) transmit correlation `r^|a-b|` of size `m x m`.
pub fn transmit_correlation(m: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |a, b| r.powi((a as i32 - b as i32).abs()))
}

/// Lower Cholesky factor of [`transmit_correlation`].
pub fn correlation_factor(m: usize, r: f64) -> DMatrix<f64> {
    transmit_correlation(m, r)
        .cholesky()
        .expect("exponential correlation with r < 1 is positive definite")
        .l()
}

/// Draws one unit-variance circular complex Gaussian sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Applies the transmit correlation factor to a white fading vector.
pub fn correlate(factor: &DMatrix<f64>, white: &[Complex64]) -> Vec<Complex64> {
    let m = white.len();
    (0..m)
        .map(|a| (0..=a).map(|b| white[b] * factor[(a, b)]).sum())
        .collect()
}

pub fn pathloss_db(distance_m: f64, exponent: f64) -> f64 {
    30.0 + 10.0 * exponent * distance_m.max(MIN_DISTANCE_M).log10()
}

/// Clarke/Jakes temporal correlation of the scattered component.
pub fn temporal_correlation(speed_mps: f64, dt_s: f64) -> f64 {
    let doppler = speed_mps * CARRIER_HZ / SPEED_OF_LIGHT;
    libm::j0(2.0 * PI * doppler * dt_s)
}

fn rician_weights(k_db: f64) -> (f64, f64) {
    if k_db == f64::INFINITY {
        return (1.0, 0.0);
    }
    let k = 10f64.powf(k_db / 10.0);
    ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of drop `drop` derived from a master seed.
pub fn drop_seed(master: u64, drop: u64) -> u64 {
    derive_seed(master, drop.wrapping_add(0x5EED))
}

pub fn generate_scenario(cfg: &DeploymentConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grid = tile_grid(cfg.a);
    let delta = cfg.delta_m;

    let cp_positions = (0..cfg.a)
        .map(|d| {
            let o = tile_origin(d, grid, delta);
            Point { x: o.x + delta / 2.0, y: o.y + delta / 2.0 }
        })
        .collect();
    let rrh_positions = (0..cfg.a)
        .map(|d| rrh_layout(cfg.n, tile_origin(d, grid, delta), delta))
        .collect();

    let max_speed = MAX_SPEED_KMH / 3.6;
    let mut users = Vec::with_capacity(cfg.total_users());
    for d in 0..cfg.a {
        let o = tile_origin(d, grid, delta);
        for _ in 0..cfg.u {
            let position = Point {
                x: o.x + rng.random::<f64>() * delta,
                y: o.y + rng.random::<f64>() * delta,
            };
            users.push(UserState {
                position,
                initial_domain: d,
                direction_rad: rng.random::<f64>() * 2.0 * PI,
                speed_mps: rng.random::<f64>() * max_speed,
            });
        }
    }

    let num_links = cfg.a * cfg.n * cfg.total_users();
    let mut links = LinkState {
        shadow_db: Vec::with_capacity(num_links),
        los_phase: Vec::with_capacity(num_links),
        white: Vec::with_capacity(num_links * cfg.m),
    };
    for _ in 0..num_links {
        let s: f64 = StandardNormal.sample(&mut rng);
        links.shadow_db.push(s * cfg.shadowing_sigma_db);
        links.los_phase.push(rng.random::<f64>() * 2.0 * PI);
        for _ in 0..cfg.m {
            links.white.push(complex_gaussian(&mut rng));
        }
    }

    let mut scenario = Scenario {
        num_domains: cfg.a,
        rrh_per_domain: cfg.n,
        antennas_per_rrh: cfg.m,
        users_per_domain: cfg.u,
        grid,
        delta_m: delta,
        cp_positions,
        rrh_positions,
        users,
        channels: Vec::new(),
        links,
        seed: cfg.seed,
        epoch: 0,
    };
    scenario.channels = build_channels(&scenario, cfg);
    Ok(scenario)
}

fn build_channels(s: &Scenario, cfg: &DeploymentConfig) -> Vec<Vec<DMatrix<Complex64>>> {
    let (w_los, w_scat) = rician_weights(cfg.rician_k_db);
    let factor = correlation_factor(cfg.m, cfg.tx_correlation);
    let m = cfg.m;
    let mn = s.domain_antennas();
    (0..s.num_domains)
        .map(|i| {
            (0..s.num_domains)
                .map(|j| {
                    let mut h = DMatrix::zeros(s.users_per_domain, mn);
                    for n in 0..s.users_per_domain {
                        let u = j * s.users_per_domain + n;
                        let pos = s.users[u].position;
                        for (r, rrh) in s.rrh_positions[i].iter().enumerate() {
                            let link = s.link_index(i, r, u);
                            let d = rrh.distance(&pos).max(MIN_DISTANCE_M);
                            let loss_db = pathloss_db(d, cfg.pathloss_exponent) + s.links.shadow_db[link];
                            let amp = 10f64.powf(-loss_db / 20.0);
                            let sin_theta = (pos.x - rrh.x) / d;
                            let phase = s.links.los_phase[link];
                            let scattered = if w_scat > 0.0 {
                                correlate(&factor, &s.links.white[link * m..(link + 1) * m])
                            } else {
                                vec![Complex64::new(0.0, 0.0); m]
                            };
                            for a in 0..m {
                                let los = Complex64::from_polar(1.0, phase + PI * a as f64 * sin_theta);
                                h[(n, r * m + a)] = (los * w_los + scattered[a] * w_scat) * amp;
                            }
                        }
                    }
                    h
                })
                .collect()
        })
        .collect()
}

/// Moves every user by `speed * dt` along its direction and evolves the
/// small-scale fading; shadowing and LoS phases stay fixed.
pub fn advance_mobility(s: &Scenario, cfg: &DeploymentConfig, dt_ms: f64) -> Scenario {
    let mut next = s.clone();
    if dt_ms <= 0.0 {
        return next;
    }
    let dt = dt_ms / 1000.0;
    let (width, height) = s.area_size();
    for user in next.users.iter_mut() {
        let step = user.speed_mps * dt;
        if step == 0.0 {
            continue;
        }
        let (x, dx) = reflect(user.position.x + step * user.direction_rad.cos(), width);
        let (y, dy) = reflect(user.position.y + step * user.direction_rad.sin(), height);
        user.position = Point { x, y };
        if dx || dy {
            let (mut c, mut sn) = (user.direction_rad.cos(), user.direction_rad.sin());
            if dx {
                c = -c;
            }
            if dy {
                sn = -sn;
            }
            user.direction_rad = sn.atan2(c).rem_euclid(2.0 * PI);
        }
    }

    next.epoch = s.epoch + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, next.epoch));
    let m = s.antennas_per_rrh;
    let total_users = s.total_users();
    let num_links = s.links.shadow_db.len();
    for link in 0..num_links {
        let user = link % total_users;
        let rho = temporal_correlation(s.users[user].speed_mps, dt);
        let innovation_scale = (1.0 - rho * rho).max(0.0).sqrt();
        for a in 0..m {
            // the innovation is always drawn so the stream does not depend on speeds
            let e = complex_gaussian(&mut rng);
            if rho != 1.0 {
                let w = &mut next.links.white[link * m + a];
                *w = *w * rho + e * innovation_scale;
            }
        }
    }
    next.channels = build_channels(&next, cfg);
    next
}

/// Reflects a coordinate back into `[0, size]`; reports whether it bounced.
fn reflect(v: f64, size: f64) -> (f64, bool) {
    if v < 0.0 {
        ((-v).min(size), true)
    } else if v > size {
        ((2.0 * size - v).max(0.0), true)
    } else {
        (v, false)
    }
}

/// Linear SNR `p_j / sigma^2` of `user`, with `j` its initial domain.
pub fn snr_of_user(s: &Scenario, cfg: &DeploymentConfig, user: usize) -> f64 {
    let j = s.initial_domain(user);
    cfg.tx_power_w(j) / cfg.noise_power_w()
}
