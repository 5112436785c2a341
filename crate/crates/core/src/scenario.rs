//! HetNet world model: stations, users, channel, delay, and deterministic
//! scenario generation.
//!
//! Conventions used throughout the crate: positions in feet, rates in bit/s,
//! times in seconds, powers in watts, bandwidth in hertz. Rates use base-2
//! logarithms (bit/s), so `expected_rate` is the Shannon form
//! `w * log2(1 + p*h^2/n0)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Station identifier, unique within a scenario. The MBS is always id 0.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct StationId(pub u32);

/// User identifier, unique within a scenario.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationKind {
    Mbs,
    Sbs,
}

/// Base-station parameters.
///
/// `p_max` caps the power spectral density spent on any single user; `w_max`
/// is the station's total bandwidth budget (only enforced at the MBS — SBS
/// bids are per-user and uncapped). `reward_markup` is the SBS reward
/// fraction rho added on top of its resource cost when bidding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationParams {
    pub id: StationId,
    pub kind: StationKind,
    pub position: Point,
    pub coverage_radius: f64,
    pub p_max: f64,
    pub w_max: f64,
    pub c_p: f64,
    pub c_w: f64,
    pub gamma: f64,
    pub reward_markup: f64,
}

/// A URLLC user and its service constraints.
///
/// `mean_gain` maps station id to the expected channel amplitude gain of the
/// link; `mean_noise` is the expected noise PSD in W/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub position: Point,
    pub r_th: f64,
    pub d_th: f64,
    pub delta_r: f64,
    pub delta_d: f64,
    pub mean_gain: BTreeMap<StationId, f64>,
    pub mean_noise: f64,
}

/// Deterministic delay model: MBS computation delay plus, for offloaded
/// users, three round trips for bidding, selection, and acknowledgement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    pub d_c: f64,
    pub rtt: f64,
}

impl DelayParams {
    /// Spectrum access delay of a user: `d_c` when MBS-served, `d_c + 3*rtt`
    /// when offloaded.
    pub fn delay_of(&self, served_by_mbs: bool) -> f64 {
        if served_by_mbs {
            self.d_c
        } else {
            self.d_c + 3.0 * self.rtt
        }
    }

    /// With deterministic delay the probabilistic constraint collapses to a
    /// threshold test: feasible iff the delay is strictly below `d_th`
    /// (hitting the threshold counts as a violation).
    pub fn delay_feasible(&self, d_th: f64, served_by_mbs: bool) -> bool {
        self.delay_of(served_by_mbs) < d_th
    }
}

/// Immutable world description. Generated scenarios are pure functions of
/// `(config, seed)` and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mbs: StationParams,
    pub sbss: Vec<StationParams>,
    pub users: Vec<User>,
    pub delay: DelayParams,
    pub seed: u64,
}

impl Scenario {
    pub fn station(&self, id: StationId) -> Option<&StationParams> {
        if self.mbs.id == id {
            return Some(&self.mbs);
        }
        self.sbss.iter().find(|s| s.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Log-distance path-loss model. Power gain is
/// `g0 * (max(d, d_ref)/d_ref)^(-alpha)`; [`channel_gain`] returns its square
/// root (an amplitude gain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub g0: f64,
    pub d_ref: f64,
    pub alpha: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            g0: 1.0,
            d_ref: 10.0,
            alpha: 3.0,
        }
    }
}

/// Expected channel amplitude gain at `distance` feet. Distances below the
/// reference distance are clamped, so the gain is monotone non-increasing.
pub fn channel_gain(distance: f64, model: &ChannelModel) -> f64 {
    let d = distance.max(model.d_ref);
    let power_gain = model.g0 * (d / model.d_ref).powf(-model.alpha);
    power_gain.sqrt()
}

/// Expected service rate `w * log2(1 + p*h^2/n0)` in bit/s.
pub fn expected_rate(p: f64, w: f64, h_bar: f64, n0_bar: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    w * (1.0 + p * h_bar * h_bar / n0_bar).log2()
}

/// Inclusive sampling range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.lo + (self.hi - self.lo) * rng.random::<f64>()
    }
}

/// Everything needed to generate a random scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub mbs_radius: f64,
    pub n_sbs: usize,
    pub sbs_coverage_radius: f64,
    /// SBS centers sit evenly spaced on a ring at this fraction of the MBS
    /// radius.
    pub sbs_ring_fraction: f64,
    pub channel: ChannelModel,
    pub noise_psd: f64,
    pub mbs_p_max: f64,
    pub mbs_w_max: f64,
    pub sbs_p_max: f64,
    pub sbs_w_max: f64,
    pub c_p: f64,
    pub c_w: f64,
    pub gamma: f64,
    pub reward_markup: f64,
    pub delay: DelayParams,
    pub r_th_range: Range,
    pub d_th_range: Range,
    pub delta_r_range: Range,
    pub delta_d_range: Range,
    /// Transmit power at which the SNR feature is computed; defaults to the
    /// MBS `p_max` when absent.
    pub reference_power: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

impl ScenarioConfig {
    /// Desk-scale baseline: one MBS with a 2000 ft cell, 8 SBSs with 600 ft
    /// coverage on a ring at 0.7 of the cell radius, 300 users.
    pub fn baseline() -> Self {
        Self {
            n_users: 300,
            mbs_radius: 2000.0,
            n_sbs: 8,
            sbs_coverage_radius: 600.0,
            sbs_ring_fraction: 0.7,
            channel: ChannelModel::default(),
            noise_psd: 1e-9,
            mbs_p_max: 1.0,
            mbs_w_max: 2.0e8,
            sbs_p_max: 1.0,
            sbs_w_max: 2.0e8,
            c_p: 3000.0,
            c_w: 1e-5,
            gamma: 1.0,
            reward_markup: 0.1,
            delay: DelayParams {
                d_c: 5e-4,
                rtt: 5e-4,
            },
            r_th_range: Range::new(1e6, 1e7),
            d_th_range: Range::new(2e-3, 2e-2),
            delta_r_range: Range::new(0.01, 0.1),
            delta_d_range: Range::new(0.01, 0.1),
            reference_power: None,
        }
    }

    pub fn with_users(mut self, n: usize) -> Self {
        self.n_users = n;
        self
    }

    pub fn with_sbs_count(mut self, k: usize) -> Self {
        self.n_sbs = k;
        self
    }

    pub fn reference_power_or_default(&self) -> f64 {
        self.reference_power.unwrap_or(self.mbs_p_max)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario must contain at least one user")]
    NoUsers,
    #[error("SBS coverage radius {sbs} exceeds MBS radius {mbs}")]
    SbsCoverageTooLarge { sbs: f64, mbs: f64 },
    #[error("invalid config: {0}")]
    BadConfig(String),
}

/// Generate a scenario deterministically from `(config, seed)`.
///
/// Users are uniform in the MBS disk; per-user constraints are sampled from
/// the config ranges. All of a user's draws happen before the next user's, so
/// the first `k` users are identical across configs that differ only in
/// `n_users`.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario, ScenarioError> {
    if config.n_users == 0 {
        return Err(ScenarioError::NoUsers);
    }
    if config.sbs_coverage_radius > config.mbs_radius {
        return Err(ScenarioError::SbsCoverageTooLarge {
            sbs: config.sbs_coverage_radius,
            mbs: config.mbs_radius,
        });
    }
    if !(config.mbs_radius > 0.0
        && config.mbs_p_max > 0.0
        && config.mbs_w_max > 0.0
        && config.gamma > 0.0
        && config.noise_psd > 0.0)
    {
        return Err(ScenarioError::BadConfig(
            "radii, power/bandwidth budgets, gamma and noise must be positive".into(),
        ));
    }

    let center = Point { x: 0.0, y: 0.0 };
    let mbs = StationParams {
        id: StationId(0),
        kind: StationKind::Mbs,
        position: center,
        coverage_radius: config.mbs_radius,
        p_max: config.mbs_p_max,
        w_max: config.mbs_w_max,
        c_p: config.c_p,
        c_w: config.c_w,
        gamma: config.gamma,
        reward_markup: 0.0,
    };

    let ring = config.sbs_ring_fraction * config.mbs_radius;
    let sbss: Vec<StationParams> = (0..config.n_sbs)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * (k as f64) / (config.n_sbs as f64);
            StationParams {
                id: StationId(1 + k as u32),
                kind: StationKind::Sbs,
                position: Point {
                    x: ring * angle.cos(),
                    y: ring * angle.sin(),
                },
                coverage_radius: config.sbs_coverage_radius,
                p_max: config.sbs_p_max,
                w_max: config.sbs_w_max,
                c_p: config.c_p,
                c_w: config.c_w,
                gamma: config.gamma,
                reward_markup: config.reward_markup,
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = (0..config.n_users)
        .map(|i| {
            // Uniform over the disk: radius via sqrt of a uniform draw.
            let radius = config.mbs_radius * rng.random::<f64>().sqrt();
            let angle = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let position = Point {
                x: radius * angle.cos(),
                y: radius * angle.sin(),
            };
            let r_th = config.r_th_range.sample(&mut rng);
            let d_th = config.d_th_range.sample(&mut rng);
            let delta_r = config.delta_r_range.sample(&mut rng);
            let delta_d = config.delta_d_range.sample(&mut rng);
            let mut mean_gain = BTreeMap::new();
            mean_gain.insert(
                mbs.id,
                channel_gain(position.distance(&mbs.position), &config.channel),
            );
            for sbs in &sbss {
                mean_gain.insert(
                    sbs.id,
                    channel_gain(position.distance(&sbs.position), &config.channel),
                );
            }
            User {
                id: UserId(i as u32),
                position,
                r_th,
                d_th,
                delta_r,
                delta_d,
                mean_gain,
                mean_noise: config.noise_psd,
            }
        })
        .collect();

    Ok(Scenario {
        mbs,
        sbss,
        users,
        delay: config.delay,
        seed,
    })
}

/// Classifier input: the six per-user features in fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub x: f64,
    pub d_th: f64,
    pub r_th: f64,
    pub delta_d: f64,
    pub delta_r: f64,
    pub snr: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.x,
            self.d_th,
            self.r_th,
            self.delta_d,
            self.delta_r,
            self.snr,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            x: a[0],
            d_th: a[1],
            r_th: a[2],
            delta_d: a[3],
            delta_r: a[4],
            snr: a[5],
        }
    }
}

/// Feature vector of a user: distance to the MBS, the four constraint fields,
/// and the expected SNR at the MBS measured at `reference_power`.
pub fn features_of(user: &User, scenario: &Scenario, reference_power: f64) -> FeatureVector {
    let x = user.position.distance(&scenario.mbs.position);
    let h = user.mean_gain.get(&scenario.mbs.id).copied().unwrap_or(0.0);
    FeatureVector {
        x,
        d_th: user.d_th,
        r_th: user.r_th,
        delta_d: user.delta_d,
        delta_r: user.delta_r,
        snr: reference_power * h * h / user.mean_noise,
    }
}
