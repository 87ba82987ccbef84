//! Solver state shared by the two optimization stages.
//!
//! A [`SolverState`] carries, per user, the transmit power, the receive
//! filter, and the *effective spatial signature* — the channel the station
//! actually sees once surface phases are applied. Three signature models
//! are supported: `Personal` (each user reflects only off its own
//! surface), `Parallel` (every surface reflects every user), and `Direct`
//! (no surfaces at all).

use std::fmt;
use std::str::FromStr;

use crate::numerics::{cdot, norm2, C64, CVec};
use crate::scenario::ChannelSet;
use crate::{Error, Result};

/// Which propagation paths contribute to a user's effective signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// User `i` reaches the station only through surface `i`.
    Personal,
    /// User `i` reaches the station through all `N` surfaces.
    Parallel,
    /// Surfaces removed; only the direct channel remains.
    Direct,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Personal => "personal",
            ModelKind::Parallel => "parallel",
            ModelKind::Direct => "direct",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "personal" => Ok(ModelKind::Personal),
            "parallel" => Ok(ModelKind::Parallel),
            "direct" => Ok(ModelKind::Direct),
            other => Err(Error::Config(format!(
                "model must be \"personal\", \"parallel\", or \"direct\", got \"{other}\""
            ))),
        }
    }
}

/// Per-surface phase configuration, `phi[surface][element]` in radians.
///
/// The applied reflection coefficient is `exp(j phi)` per element, so a
/// phase bank never changes channel magnitudes, only how the `K` element
/// contributions combine.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseBank {
    /// Phase angles, one row per surface.
    pub phi: Vec<Vec<f64>>,
}

impl PhaseBank {
    /// All-zero phases for `n` surfaces of `k` elements.
    pub fn zeros(n: usize, k: usize) -> Self {
        Self { phi: vec![vec![0.0; k]; n] }
    }

    /// Unit-modulus reflection coefficients `exp(j phi)` for surface `i`.
    pub fn coefficients(&self, i: usize) -> Result<CVec> {
        let row = self.phi.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            what: "phase bank",
            len: self.phi.len(),
        })?;
        Ok(row.iter().map(|&p| C64::from_polar(1.0, p)).collect())
    }
}

/// Powers, filters, and effective signatures for all users.
///
/// The stages mutate this in place. `signatures` must describe the same
/// phase bank and model the caller is currently working with; after any
/// phase change, [`sync_signatures`] re-derives them. Powers are watts,
/// filters are unnormalized station-side combining vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    /// Transmit powers, one per user.
    pub p: Vec<f64>,
    /// Receive filters, one length-`M` vector per user.
    pub filters: Vec<CVec>,
    /// Effective signatures, one length-`M` vector per user.
    pub signatures: Vec<CVec>,
}

impl SolverState {
    /// Fresh state: every power at the noise floor, filters and
    /// signatures zeroed until the first synchronization and filter pass.
    pub fn new(n_users: usize, n_bs_antennas: usize, noise_power: f64) -> Self {
        Self {
            p: vec![noise_power; n_users],
            filters: vec![vec![C64::new(0.0, 0.0); n_bs_antennas]; n_users],
            signatures: vec![vec![C64::new(0.0, 0.0); n_bs_antennas]; n_users],
        }
    }

    /// Number of users tracked.
    pub fn n_users(&self) -> usize {
        self.p.len()
    }

    /// Sum of transmit powers.
    pub fn total_power(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Station-side signature of user `i` under the given phases and model.
///
/// * `Personal`: `G_i diag(exp(j phi_i)) h_{i,i}`
/// * `Parallel`: `sum_j G_j diag(exp(j phi_j)) h_{i,j}`
/// * `Direct`: the direct channel, phases ignored.
pub fn effective_signature(
    channels: &ChannelSet,
    phases: &PhaseBank,
    i: usize,
    kind: ModelKind,
) -> Result<CVec> {
    let n = channels.n_users();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, what: "users", len: n });
    }
    match kind {
        ModelKind::Direct => Ok(channels.h_direct[i].clone()),
        ModelKind::Personal => surface_contribution(channels, phases, i, i),
        ModelKind::Parallel => {
            let mut acc = vec![C64::new(0.0, 0.0); channels.n_bs_antennas()];
            for j in 0..n {
                let term = surface_contribution(channels, phases, i, j)?;
                for (a, t) in acc.iter_mut().zip(&term) {
                    *a += t;
                }
            }
            Ok(acc)
        }
    }
}

/// Contribution of surface `j` to user `i`'s signature:
/// `G_j diag(exp(j phi_j)) h_{i,j}`.
pub fn surface_contribution(
    channels: &ChannelSet,
    phases: &PhaseBank,
    i: usize,
    j: usize,
) -> Result<CVec> {
    let n = channels.n_users();
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange {
            index: i.max(j),
            what: "users",
            len: n,
        });
    }
    let theta = phases.coefficients(j)?;
    let h = &channels.h[i][j];
    if theta.len() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "phase bank has {} elements per surface but channels have {}",
            theta.len(),
            h.len()
        )));
    }
    let reflected: CVec = theta.iter().zip(h).map(|(t, hk)| t * hk).collect();
    Ok(channels.g[j].mul_vec(&reflected))
}

/// Recompute every signature in `state` for the given phases and model.
pub fn sync_signatures(
    state: &mut SolverState,
    channels: &ChannelSet,
    phases: &PhaseBank,
    kind: ModelKind,
) -> Result<()> {
    if state.n_users() != channels.n_users() {
        return Err(Error::DimensionMismatch(format!(
            "state tracks {} users but channels have {}",
            state.n_users(),
            channels.n_users()
        )));
    }
    for i in 0..state.n_users() {
        state.signatures[i] = effective_signature(channels, phases, i, kind)?;
    }
    Ok(())
}

/// SINR of user `i` under the current powers, filters, and signatures:
///
/// `p_i |c_i^H s_i|^2 / (sum_{j != i} p_j |c_i^H s_j|^2 + sigma^2 ||c_i||^2)`
///
/// Scaling a filter by any nonzero complex factor leaves the value
/// unchanged; an identically zero filter is rejected as
/// [`Error::ZeroFilter`].
pub fn sinr(state: &SolverState, i: usize, noise_power: f64) -> Result<f64> {
    let n = state.n_users();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, what: "users", len: n });
    }
    let c = &state.filters[i];
    let c_norm = norm2(c);
    if c_norm == 0.0 {
        return Err(Error::ZeroFilter { user: i });
    }
    let mut interference = noise_power * c_norm * c_norm;
    for j in 0..n {
        if j != i {
            interference += state.p[j] * cdot(c, &state.signatures[j]).norm_sqr();
        }
    }
    let signal = state.p[i] * cdot(c, &state.signatures[i]).norm_sqr();
    Ok(signal / interference)
}
