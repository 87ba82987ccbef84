//! Network geometry, channel synthesis, and scenario configuration.
//!
//! A scenario places one `M`-antenna base station, `N` single-antenna
//! users, and one `K`-element reflecting surface per user in 3-D space.
//! Channels come in two flavors: pure line-of-sight steering vectors with
//! distance-based amplitude decay, or i.i.d. Rayleigh fading with the same
//! decay. Scenarios round-trip through a small `key = value` config format
//! so experiments can be pinned to files.
//!
//! Conventions baked in here:
//!
//! * Half-wavelength element spacing everywhere, so phase increments are
//!   `pi` times a direction sine.
//! * Surfaces are square `sqrt(K) x sqrt(K)` planar arrays; `K` must be a
//!   perfect square.
//! * The base station is a uniform linear array along the x-axis; its
//!   steering angle is measured from broadside (the y-axis), so element
//!   `m` sees phase `pi * m * (u_x / r_horizontal)` for a source offset
//!   `u`. Array response depends on horizontal direction only.
//! * Path loss scales signal *amplitude* by `d^-alpha`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;

use crate::numerics::{C64, CMat, CVec};
use crate::rand_util::standard_normal_pair;
use crate::{Error, Result};

/// Seed used by [`default_scenario`]. Pinned once so the stock experiment
/// is reproducible; it feeds both channel synthesis and the driver's
/// initial surface phases.
pub const DEFAULT_SEED: u64 = 5;

/// Fading model for synthesized channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    /// Deterministic line-of-sight steering vectors (no randomness).
    Los,
    /// I.i.d. circularly-symmetric Gaussian entries with the same
    /// distance-based amplitude decay as the LOS model.
    Rayleigh,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Los => "los",
            ChannelKind::Rayleigh => "rayleigh",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "los" => Ok(ChannelKind::Los),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            other => Err(Error::Config(format!(
                "channel_kind must be \"los\" or \"rayleigh\", got \"{other}\""
            ))),
        }
    }
}

/// Complete description of a network instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Number of users; each user owns one reflecting surface.
    pub n_users: usize,
    /// Base-station antenna count `M`.
    pub n_bs_antennas: usize,
    /// Elements per surface `K`; must be a perfect square.
    pub n_ris_elements: usize,
    /// Per-user SINR targets (linear scale, strictly positive).
    pub sinr_targets: Vec<f64>,
    /// Receiver noise power `sigma^2`.
    pub noise_power: f64,
    /// Amplitude path-loss exponent on user-surface and surface-station
    /// links.
    pub alpha_ris: f64,
    /// Amplitude path-loss exponent on the direct user-station link.
    pub alpha_direct: f64,
    /// Base-station position.
    pub bs_pos: [f64; 3],
    /// User positions, one per user.
    pub user_pos: Vec<[f64; 3]>,
    /// Surface positions, one per user.
    pub ris_pos: Vec<[f64; 3]>,
    /// Fading model.
    pub channel_kind: ChannelKind,
    /// Seed for stochastic channels and for the driver's phase
    /// initialization.
    pub seed: u64,
}

impl Scenario {
    /// Check structural consistency: positive counts, a perfect-square
    /// element count, positive targets and noise, finite exponents, and
    /// position lists sized to the user count.
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be at least 1".into()));
        }
        if self.n_bs_antennas == 0 {
            return Err(Error::Config("n_bs_antennas must be at least 1".into()));
        }
        if self.n_ris_elements == 0 || side_len(self.n_ris_elements).is_none() {
            return Err(Error::Config(format!(
                "n_ris_elements must be a positive perfect square, got {}",
                self.n_ris_elements
            )));
        }
        if self.sinr_targets.len() != self.n_users {
            return Err(Error::Config(format!(
                "{} SINR targets for {} users",
                self.sinr_targets.len(),
                self.n_users
            )));
        }
        if let Some(bad) = self
            .sinr_targets
            .iter()
            .find(|t| !(t.is_finite() && **t > 0.0))
        {
            return Err(Error::Config(format!(
                "SINR targets must be finite and positive, got {bad}"
            )));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::Config(format!(
                "noise_power must be finite and positive, got {}",
                self.noise_power
            )));
        }
        for (name, alpha) in [("alpha_ris", self.alpha_ris), ("alpha_direct", self.alpha_direct)]
        {
            if !(alpha.is_finite() && alpha >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative, got {alpha}"
                )));
            }
        }
        for (name, len) in [("user", self.user_pos.len()), ("ris", self.ris_pos.len())] {
            if len != self.n_users {
                return Err(Error::Config(format!(
                    "{len} {name} positions for {} users",
                    self.n_users
                )));
            }
        }
        Ok(())
    }

    /// Set every user's SINR target to the same linear value.
    pub fn set_common_target(&mut self, target_linear: f64) {
        self.sinr_targets = vec![target_linear; self.n_users];
    }

    /// Serialize to the config format accepted by [`Scenario::from_config_str`].
    ///
    /// The format carries one common SINR target, so this fails with
    /// [`Error::Config`] when per-user targets differ.
    pub fn to_config_string(&self) -> Result<String> {
        let first = *self.sinr_targets.first().ok_or_else(|| {
            Error::Config("cannot serialize a scenario with no users".into())
        })?;
        if self.sinr_targets.iter().any(|t| *t != first) {
            return Err(Error::Config(
                "config format carries a single common SINR target; per-user targets differ"
                    .into(),
            ));
        }
        let mut out = String::new();
        out.push_str(&format!("n_users = {}\n", self.n_users));
        out.push_str(&format!("n_bs_antennas = {}\n", self.n_bs_antennas));
        out.push_str(&format!("n_ris_elements = {}\n", self.n_ris_elements));
        out.push_str(&format!("sinr_target_linear = {first}\n"));
        out.push_str(&format!("noise_power = {}\n", self.noise_power));
        out.push_str(&format!("alpha_ris = {}\n", self.alpha_ris));
        out.push_str(&format!("alpha_direct = {}\n", self.alpha_direct));
        out.push_str(&format!("channel_kind = {}\n", self.channel_kind));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!(
            "bs_xyz = {}, {}, {}\n",
            self.bs_pos[0], self.bs_pos[1], self.bs_pos[2]
        ));
        for (i, p) in self.user_pos.iter().enumerate() {
            out.push_str(&format!("user_{i}_xyz = {}, {}, {}\n", p[0], p[1], p[2]));
        }
        for (i, p) in self.ris_pos.iter().enumerate() {
            out.push_str(&format!("ris_{i}_xyz = {}, {}, {}\n", p[0], p[1], p[2]));
        }
        Ok(out)
    }

    /// Parse a scenario from config text.
    ///
    /// Lines hold `key = value` pairs; `#` starts a comment and blank
    /// lines are ignored. Unspecified keys keep their [`default_scenario`]
    /// values (with positions rebuilt for the requested user count), and
    /// unknown or duplicate keys are errors, as is supplying both
    /// `sinr_target_db` and `sinr_target_linear`.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got \"{line}\"",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if pairs.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config(format!("duplicate key \"{key}\"")));
            }
            pairs.push((key, value));
        }

        // Counts first: position defaults and override bounds depend on them.
        let mut scenario = default_scenario();
        if let Some(v) = lookup(&pairs, "n_users") {
            scenario.n_users = parse_value::<usize>("n_users", v)?;
            let (bs, users, surfaces) = default_positions(scenario.n_users);
            scenario.bs_pos = bs;
            scenario.user_pos = users;
            scenario.ris_pos = surfaces;
            scenario.set_common_target(DEFAULT_SINR_TARGET);
        }

        let mut target_db: Option<f64> = None;
        let mut target_linear: Option<f64> = None;
        for (key, value) in &pairs {
            match key.as_str() {
                "n_users" => {} // handled above
                "n_bs_antennas" => {
                    scenario.n_bs_antennas = parse_value("n_bs_antennas", value)?
                }
                "n_ris_elements" => {
                    scenario.n_ris_elements = parse_value("n_ris_elements", value)?
                }
                "sinr_target_db" => target_db = Some(parse_value("sinr_target_db", value)?),
                "sinr_target_linear" => {
                    target_linear = Some(parse_value("sinr_target_linear", value)?)
                }
                "noise_power" => scenario.noise_power = parse_value("noise_power", value)?,
                "alpha_ris" => scenario.alpha_ris = parse_value("alpha_ris", value)?,
                "alpha_direct" => scenario.alpha_direct = parse_value("alpha_direct", value)?,
                "channel_kind" => scenario.channel_kind = value.parse()?,
                "seed" => scenario.seed = parse_value("seed", value)?,
                "bs_xyz" => scenario.bs_pos = parse_xyz(key, value)?,
                other => {
                    if let Some((role, index)) = parse_position_key(other) {
                        let pos = parse_xyz(key, value)?;
                        let slot = match role {
                            PositionRole::User => &mut scenario.user_pos,
                            PositionRole::Ris => &mut scenario.ris_pos,
                        };
                        if index >= slot.len() {
                            return Err(Error::Config(format!(
                                "position key \"{other}\" indexes user {} but n_users is {}",
                                index,
                                scenario.n_users
                            )));
                        }
                        slot[index] = pos;
                    } else {
                        return Err(Error::Config(format!("unknown key \"{other}\"")));
                    }
                }
            }
        }

        match (target_db, target_linear) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "sinr_target_db and sinr_target_linear are mutually exclusive".into(),
                ))
            }
            (Some(db), None) => scenario.set_common_target(10f64.powf(db / 10.0)),
            (None, Some(linear)) => scenario.set_common_target(linear),
            (None, None) => {}
        }

        scenario.validate()?;
        Ok(scenario)
    }

    /// Read and parse a config file.
    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }
}

/// Common SINR target used by the stock scenario (linear scale).
const DEFAULT_SINR_TARGET: f64 = 3.5;

/// The stock ten-user network used by the shipped experiments.
///
/// Ten users spread along a 200 m road segment, each with a 100-element
/// surface mounted 10 m from it toward the base station, an 8-antenna
/// station 25 m up, line-of-sight channels, and a common SINR target of
/// 3.5 (about 5.4 dB) at -130 dBW noise.
pub fn default_scenario() -> Scenario {
    let n = 10;
    let (bs, users, surfaces) = default_positions(n);
    Scenario {
        n_users: n,
        n_bs_antennas: 8,
        n_ris_elements: 100,
        sinr_targets: vec![DEFAULT_SINR_TARGET; n],
        noise_power: 1e-13,
        alpha_ris: 2.0,
        alpha_direct: 3.0,
        bs_pos: bs,
        user_pos: users,
        ris_pos: surfaces,
        channel_kind: ChannelKind::Los,
        seed: DEFAULT_SEED,
    }
}

/// Stock placement for `n` users: station at the origin 25 m up, users at
/// 1.5 m height spread over x in [-90, 110] with 25 m lateral steps, and
/// each surface 10 m from its user toward the station at 10 m height.
fn default_positions(n: usize) -> ([f64; 3], Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let bs = [0.0, 0.0, 25.0];
    let mut users = Vec::with_capacity(n);
    let mut surfaces = Vec::with_capacity(n);
    for i in 0..n {
        let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        let user = [-90.0 + 200.0 * frac, 25.0 * i as f64, 1.5];
        users.push(user);
        let dx = bs[0] - user[0];
        let dy = bs[1] - user[1];
        let len = (dx * dx + dy * dy).sqrt();
        // Unreachable for the stock grid: no user sits directly under the
        // station. Guard anyway so a zero division cannot slip through.
        assert!(len > 0.0, "default layout placed a user under the station");
        surfaces.push([user[0] + 10.0 * dx / len, user[1] + 10.0 * dy / len, 10.0]);
    }
    (bs, users, surfaces)
}

/// Synthesized channels for one scenario.
///
/// Indexing follows the link direction: `h[i][j]` is the user `i` to
/// surface `j` channel (length `K`), `g[j]` the surface `j` to station
/// matrix (`M x K`), and `h_direct[i]` the user `i` to station channel
/// (length `M`).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// User-to-surface channels, `h[user][surface]`.
    pub h: Vec<Vec<CVec>>,
    /// Surface-to-station matrices, one per surface.
    pub g: Vec<CMat>,
    /// Direct user-to-station channels.
    pub h_direct: Vec<CVec>,
}

impl ChannelSet {
    /// Number of users (and surfaces).
    pub fn n_users(&self) -> usize {
        self.h.len()
    }

    /// Station antenna count.
    pub fn n_bs_antennas(&self) -> usize {
        self.h_direct.first().map_or(0, Vec::len)
    }

    /// Elements per surface.
    pub fn n_ris_elements(&self) -> usize {
        self.h.first().and_then(|row| row.first()).map_or(0, Vec::len)
    }
}

/// Planar-array steering vector with half-wavelength spacing.
///
/// Element `(m, n)` of an `nx x ny` grid (stored at index `m * ny + n`)
/// responds with `exp(j pi (m sin(el) cos(az) + n sin(el) sin(az)))`, so a
/// source in the array plane (`elevation = 0`) yields the all-ones vector.
pub fn steering_vector(azimuth: f64, elevation: f64, nx: usize, ny: usize) -> CVec {
    let ux = elevation.sin() * azimuth.cos();
    let uy = elevation.sin() * azimuth.sin();
    let mut v = Vec::with_capacity(nx * ny);
    for m in 0..nx {
        for n in 0..ny {
            let phase = PI * (m as f64 * ux + n as f64 * uy);
            v.push(C64::from_polar(1.0, phase));
        }
    }
    v
}

/// Synthesize all channels for a scenario.
///
/// Line-of-sight channels are steering vectors toward the actual node
/// directions with `d^-alpha` amplitudes and consume no randomness;
/// Rayleigh channels draw i.i.d. unit-variance circular Gaussians (scaled
/// by the same `d^-alpha`) from a ChaCha stream seeded with
/// `scenario.seed`, in a fixed documented order (all `h[i][j]` first, then
/// each `g[j]` row-major, then `h_direct`). Coincident nodes and users or
/// surfaces directly above the station (undefined steering angle) are
/// rejected as [`Error::DegenerateGeometry`].
pub fn synthesize_channels(scenario: &Scenario) -> Result<ChannelSet> {
    scenario.validate()?;
    let n = scenario.n_users;
    let m = scenario.n_bs_antennas;
    let k = scenario.n_ris_elements;
    let side = side_len(k).expect("validate checked the perfect square");
    let mut rng = ChaCha12Rng::seed_from_u64(scenario.seed);

    let mut h = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let d = checked_distance(
                scenario.user_pos[i],
                scenario.ris_pos[j],
                &format!("user {i} and surface {j}"),
            )?;
            let amp = d.powf(-scenario.alpha_ris);
            let vec = match scenario.channel_kind {
                ChannelKind::Los => {
                    let (az, el) = upa_angles(scenario.ris_pos[j], scenario.user_pos[i]);
                    crate::numerics::scale_re(&steering_vector(az, el, side, side), amp)
                }
                ChannelKind::Rayleigh => random_cvec(&mut rng, k, amp),
            };
            row.push(vec);
        }
        h.push(row);
    }

    let mut g = Vec::with_capacity(n);
    for j in 0..n {
        let d = checked_distance(
            scenario.ris_pos[j],
            scenario.bs_pos,
            &format!("surface {j} and the station"),
        )?;
        let amp = d.powf(-scenario.alpha_ris);
        let mat = match scenario.channel_kind {
            ChannelKind::Los => {
                let a_bs = bs_steering(scenario.bs_pos, scenario.ris_pos[j], m, j, "surface")?;
                let (az, el) = upa_angles(scenario.ris_pos[j], scenario.bs_pos);
                let a_ris = steering_vector(az, el, side, side);
                // Rank-one outer product a_bs a_ris^H with the path
                // amplitude folded in.
                CMat::from_fn(m, k, |mi, ki| amp * a_bs[mi] * a_ris[ki].conj())
            }
            ChannelKind::Rayleigh => {
                let mut mat = CMat::zeros(m, k);
                for mi in 0..m {
                    for ki in 0..k {
                        mat[(mi, ki)] = random_c64(&mut rng, amp);
                    }
                }
                mat
            }
        };
        g.push(mat);
    }

    let mut h_direct = Vec::with_capacity(n);
    for i in 0..n {
        let d = checked_distance(
            scenario.user_pos[i],
            scenario.bs_pos,
            &format!("user {i} and the station"),
        )?;
        let amp = d.powf(-scenario.alpha_direct);
        let vec = match scenario.channel_kind {
            ChannelKind::Los => {
                let a_bs = bs_steering(scenario.bs_pos, scenario.user_pos[i], m, i, "user")?;
                crate::numerics::scale_re(&a_bs, amp)
            }
            ChannelKind::Rayleigh => random_cvec(&mut rng, m, amp),
        };
        h_direct.push(vec);
    }

    Ok(ChannelSet { h, g, h_direct })
}

/// Integer side length of a perfect square, if any.
fn side_len(k: usize) -> Option<usize> {
    let side = (k as f64).sqrt().round() as usize;
    (side * side == k).then_some(side)
}

fn checked_distance(a: [f64; 3], b: [f64; 3], what: &str) -> Result<f64> {
    let d = distance(a, b);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::DegenerateGeometry(format!("{what} coincide")))
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Azimuth and elevation of `toward` as seen from a surface at `at`:
/// azimuth from the x-axis in the horizontal plane, elevation from the
/// horizontal plane.
fn upa_angles(at: [f64; 3], toward: [f64; 3]) -> (f64, f64) {
    let u = [toward[0] - at[0], toward[1] - at[1], toward[2] - at[2]];
    let d = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    (u[1].atan2(u[0]), (u[2] / d).asin())
}

/// Station array response to a source at `from`: linear array along the
/// x-axis, phase `pi * m * sin(angle from broadside)`, which is the
/// horizontal x-direction cosine of the source offset.
fn bs_steering(
    bs: [f64; 3],
    from: [f64; 3],
    m: usize,
    index: usize,
    role: &str,
) -> Result<CVec> {
    let ux = from[0] - bs[0];
    let uy = from[1] - bs[1];
    let horiz = (ux * ux + uy * uy).sqrt();
    if horiz == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "{role} {index} sits directly above the station; its array angle is undefined"
        )));
    }
    let sin_psi = ux / horiz;
    Ok((0..m)
        .map(|mi| C64::from_polar(1.0, PI * mi as f64 * sin_psi))
        .collect())
}

fn random_c64(rng: &mut ChaCha12Rng, amp: f64) -> C64 {
    let (re, im) = standard_normal_pair(rng);
    // Unit-variance circular Gaussian scaled to the path amplitude.
    C64::new(re, im) * (amp * std::f64::consts::FRAC_1_SQRT_2)
}

fn random_cvec(rng: &mut ChaCha12Rng, len: usize, amp: f64) -> CVec {
    (0..len).map(|_| random_c64(rng, amp)).collect()
}

enum PositionRole {
    User,
    Ris,
}

/// Recognize `user_<i>_xyz` / `ris_<i>_xyz` keys.
fn parse_position_key(key: &str) -> Option<(PositionRole, usize)> {
    let (role, rest) = if let Some(rest) = key.strip_prefix("user_") {
        (PositionRole::User, rest)
    } else if let Some(rest) = key.strip_prefix("ris_") {
        (PositionRole::Ris, rest)
    } else {
        return None;
    };
    let index = rest.strip_suffix("_xyz")?.parse().ok()?;
    Some((role, index))
}

fn lookup<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse \"{value}\" for key {key}")))
}

fn parse_xyz(key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "key {key} needs three coordinates, got \"{value}\""
        )));
    }
    let mut xyz = [0.0; 3];
    for (slot, part) in xyz.iter_mut().zip(&parts) {
        *slot = parse_value(key, part)?;
    }
    Ok(xyz)
}
