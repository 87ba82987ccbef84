//! Stage 1: joint power control and MMSE receive filtering.
//!
//! With signatures frozen, the SINR constraints decouple into a classic
//! interference fixed point. Each Gauss–Seidel sweep visits users in
//! order, gives each the MMSE filter for the current interference, and
//! then sets its power to the smallest value meeting the SINR target
//! under that filter. The power map is a standard interference function,
//! so from any starting point the iteration converges to the unique
//! fixed point when the targets are jointly achievable, and grows without
//! bound when they are not — detected here by a power cap.

use crate::numerics::{cdot, norm2, scale_re, solve_hpd, CMat, CVec};
use crate::system::SolverState;
use crate::{Error, Result};

/// Below this inner-product magnitude a filter is treated as orthogonal
/// to its signature and the power update refuses to divide.
pub const ORTHOGONAL_FILTER_FLOOR: f64 = 1e-30;

/// Knobs for [`stage1_solve`].
#[derive(Clone, Copy, Debug)]
pub struct Stage1Config {
    /// Maximum Gauss–Seidel sweeps per call.
    pub inner_iters: usize,
    /// Any single power exceeding this is treated as divergence.
    pub power_cap: f64,
    /// Relative total-power stall that counts as convergence.
    pub tol: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self { inner_iters: 50, power_cap: 1e6, tol: 1e-9 }
    }
}

/// How a [`stage1_solve`] call ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage1Status {
    /// Total power stalled within tolerance.
    Converged,
    /// Sweep budget exhausted before the stall tolerance was met.
    IterLimit,
    /// A power exceeded the cap (or left the finite range): the targets
    /// are not jointly achievable with the current signatures.
    Infeasible,
}

/// Interference-plus-noise covariance seen by user `i`:
/// `A_i = sum_{j != i} p_j s_j s_j^H + sigma^2 I`, exactly Hermitian by
/// construction.
pub fn interference_matrix(state: &SolverState, i: usize, noise_power: f64) -> Result<CMat> {
    let n = state.n_users();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, what: "users", len: n });
    }
    let m = state.signatures[i].len();
    let mut a = CMat::zeros(m, m);
    a.add_scaled_identity(noise_power);
    for j in 0..n {
        if j != i {
            if state.signatures[j].len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "signature {j} has length {} but signature {i} has {m}",
                    state.signatures[j].len()
                )));
            }
            a.add_scaled_outer(state.p[j], &state.signatures[j]);
        }
    }
    Ok(a)
}

/// MMSE receive filter for user `i` under the current powers and
/// signatures:
///
/// `c_i = sqrt(p_i) / (1 + p_i s_i^H A_i^{-1} s_i) * A_i^{-1} s_i`
///
/// The prefactor only normalizes the estimator; every SINR computed from
/// this filter equals the SINR of the raw direction `A_i^{-1} s_i`.
pub fn filter_update(state: &SolverState, i: usize, noise_power: f64) -> Result<CVec> {
    let a = interference_matrix(state, i, noise_power)?;
    let s_i = &state.signatures[i];
    let d = solve_hpd(&a, s_i)?;
    // s^H A^{-1} s is real-positive up to rounding; keep the real part.
    let quad = cdot(s_i, &d).re;
    let prefactor = state.p[i].sqrt() / (1.0 + state.p[i] * quad);
    Ok(scale_re(&d, prefactor))
}

/// Smallest power letting user `i` meet `target` with its *current*
/// filter:
///
/// `p_i = target * (sum_{j != i} p_j |c^H s_j|^2 + sigma^2 ||c||^2) / |c^H s_i|^2`
///
/// Fails with [`Error::ZeroFilter`] for an all-zero filter and
/// [`Error::OrthogonalFilter`] when the filter carries no signal
/// component (`|c^H s_i|` below [`ORTHOGONAL_FILTER_FLOOR`] relative to
/// the operand scale).
pub fn power_update(state: &SolverState, i: usize, target: f64, noise_power: f64) -> Result<f64> {
    let n = state.n_users();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, what: "users", len: n });
    }
    let c = &state.filters[i];
    if norm2(c) == 0.0 {
        return Err(Error::ZeroFilter { user: i });
    }
    power_update_with_filter(state, i, c, target, noise_power)
}

/// Power update against an explicit filter direction (shared by the
/// public op and the sweep, which uses the unnormalized MMSE direction).
fn power_update_with_filter(
    state: &SolverState,
    i: usize,
    c: &[crate::numerics::C64],
    target: f64,
    noise_power: f64,
) -> Result<f64> {
    let gain = cdot(c, &state.signatures[i]).norm();
    // The floor is scale-free: compare against the natural magnitude of
    // the inner product so huge or tiny filter scales behave alike.
    let scale = norm2(c) * norm2(&state.signatures[i]);
    if gain <= ORTHOGONAL_FILTER_FLOOR * scale.max(1.0) {
        return Err(Error::OrthogonalFilter { user: i, gain });
    }
    let mut interference = noise_power * norm2(c).powi(2);
    for j in 0..state.n_users() {
        if j != i {
            interference += state.p[j] * cdot(c, &state.signatures[j]).norm_sqr();
        }
    }
    Ok(target * interference / (gain * gain))
}

/// Run Gauss–Seidel sweeps of filter and power updates until total power
/// stalls, the sweep budget runs out, or a power escapes the cap.
///
/// Each user visit refreshes that user's filter and then its power, so
/// later users in the same sweep already see the new values. On
/// `Infeasible` the state keeps the offending powers for inspection.
pub fn stage1_solve(
    state: &mut SolverState,
    config: &Stage1Config,
    targets: &[f64],
    noise_power: f64,
) -> Result<Stage1Status> {
    let n = state.n_users();
    if targets.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {n} users",
            targets.len()
        )));
    }
    for sweep in 0..config.inner_iters {
        let _ = sweep;
        let total_before = state.total_power();
        for i in 0..n {
            let a = interference_matrix(state, i, noise_power)?;
            let d = solve_hpd(&a, &state.signatures[i])?;
            let quad = cdot(&state.signatures[i], &d).re;
            let prefactor = state.p[i].sqrt() / (1.0 + state.p[i] * quad);
            state.filters[i] = scale_re(&d, prefactor);
            // The power update may use the unnormalized direction: the
            // update is invariant to filter scale, and d stays meaningful
            // even while p_i is zero.
            let p_new = power_update_with_filter(state, i, &d, targets[i], noise_power)?;
            if !p_new.is_finite() || p_new > config.power_cap {
                state.p[i] = p_new;
                return Ok(Stage1Status::Infeasible);
            }
            state.p[i] = p_new;
        }
        let total_after = state.total_power();
        if (total_after - total_before).abs()
            <= config.tol * total_after.max(f64::MIN_POSITIVE)
        {
            return Ok(Stage1Status::Converged);
        }
    }
    Ok(Stage1Status::IterLimit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;
    use crate::rand_util::standard_normal_pair;
    use crate::system::sinr;
    use rand_chacha::ChaCha12Rng;
    use rand_core::SeedableRng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_cvec(rng: &mut ChaCha12Rng, n: usize) -> CVec {
        (0..n)
            .map(|_| {
                let (re, im) = standard_normal_pair(rng);
                c(re, im)
            })
            .collect()
    }

    fn random_state(rng: &mut ChaCha12Rng, n: usize, m: usize) -> SolverState {
        SolverState {
            p: (0..n).map(|_| 0.1 + standard_normal_pair(rng).0.abs()).collect(),
            filters: vec![vec![c(0.0, 0.0); m]; n],
            signatures: (0..n).map(|_| random_cvec(rng, m)).collect(),
        }
    }

    #[test]
    fn interference_matrix_matches_explicit_sum_and_skips_own_user() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let state = random_state(&mut rng, 3, 4);
        let sigma2 = 0.07;
        let a = interference_matrix(&state, 1, sigma2).unwrap();
        assert_eq!((a.rows(), a.cols()), (4, 4));
        assert_eq!(a.max_asymmetry(), 0.0);
        for r in 0..4 {
            for cc in 0..4 {
                let mut expect = if r == cc { c(sigma2, 0.0) } else { c(0.0, 0.0) };
                for j in [0usize, 2] {
                    expect += state.p[j]
                        * state.signatures[j][r]
                        * state.signatures[j][cc].conj();
                }
                assert!((a[(r, cc)] - expect).norm() < 1e-12);
            }
        }
        // Changing the user's own power must not move its matrix.
        let mut state2 = state.clone();
        state2.p[1] *= 100.0;
        assert_eq!(a, interference_matrix(&state2, 1, sigma2).unwrap());
    }

    #[test]
    fn filter_update_single_user_closed_form() {
        // One user, A = sigma^2 I = I, s = e_0, p = 1:
        // c = sqrt(1)/(1 + 1) * s = s / 2, exactly.
        let state = SolverState {
            p: vec![1.0],
            filters: vec![vec![c(0.0, 0.0); 2]],
            signatures: vec![vec![c(1.0, 0.0), c(0.0, 0.0)]],
        };
        let f = filter_update(&state, 0, 1.0).unwrap();
        assert_eq!(f, vec![c(0.5, 0.0), c(0.0, 0.0)]);

        // Zero power zeroes the prefactor but not the direction's SINR
        // (the filter itself becomes zero).
        let mut zp = state.clone();
        zp.p[0] = 0.0;
        assert_eq!(filter_update(&zp, 0, 1.0).unwrap(), vec![c(0.0, 0.0); 2]);
    }

    #[test]
    fn mmse_filter_dominates_random_filters() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        for _ in 0..5 {
            let mut state = random_state(&mut rng, 3, 4);
            let sigma2 = 0.05;
            state.filters[0] = filter_update(&state, 0, sigma2).unwrap();
            let best = sinr(&state, 0, sigma2).unwrap();
            for _ in 0..50 {
                state.filters[0] = random_cvec(&mut rng, 4);
                let other = sinr(&state, 0, sigma2).unwrap();
                assert!(other <= best * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn power_update_hits_the_target_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for round in 0..20 {
            let n = 2 + round % 3;
            let mut state = random_state(&mut rng, n, 4);
            let sigma2 = 0.02;
            for i in 0..n {
                state.filters[i] = filter_update(&state, i, sigma2).unwrap();
            }
            let target = 0.5 + (round as f64) * 0.1;
            let i = round % n;
            state.p[i] = power_update(&state, i, target, sigma2).unwrap();
            let achieved = sinr(&state, i, sigma2).unwrap();
            assert!(
                (achieved - target).abs() <= 1e-10 * target,
                "achieved {achieved} vs target {target}"
            );
        }
    }

    #[test]
    fn power_update_is_filter_scale_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let mut state = random_state(&mut rng, 2, 3);
        state.filters[0] = random_cvec(&mut rng, 3);
        let base = power_update(&state, 0, 1.7, 0.01).unwrap();
        state.filters[0] = scale_re(&state.filters[0], 3.14);
        let scaled = power_update(&state, 0, 1.7, 0.01).unwrap();
        assert!((base - scaled).abs() <= 1e-12 * base);
    }

    #[test]
    fn power_update_rejects_bad_filters() {
        let mut state = SolverState {
            p: vec![1.0],
            filters: vec![vec![c(0.0, 0.0), c(0.0, 0.0)]],
            signatures: vec![vec![c(1.0, 0.0), c(0.0, 0.0)]],
        };
        assert!(matches!(
            power_update(&state, 0, 1.0, 1.0),
            Err(Error::ZeroFilter { user: 0 })
        ));
        // Orthogonal to the signature: no signal component to scale.
        state.filters[0] = vec![c(0.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(
            power_update(&state, 0, 1.0, 1.0),
            Err(Error::OrthogonalFilter { user: 0, .. })
        ));
    }

    #[test]
    fn stage1_single_user_closed_form() {
        // One user: fixed point at p = target * sigma^2 / ||s||^2.
        let sigma2 = 0.3;
        let target = 2.0;
        let s = vec![c(1.0, 1.0), c(2.0, 0.0)]; // ||s||^2 = 6
        let mut state = SolverState {
            p: vec![sigma2],
            filters: vec![vec![c(0.0, 0.0); 2]],
            signatures: vec![s],
        };
        let status =
            stage1_solve(&mut state, &Stage1Config::default(), &[target], sigma2).unwrap();
        assert_eq!(status, Stage1Status::Converged);
        let expect = target * sigma2 / 6.0;
        assert!((state.p[0] - expect).abs() <= 1e-12 * expect);
        assert!((sinr(&state, 0, sigma2).unwrap() - target).abs() <= 1e-10 * target);
    }

    #[test]
    fn stage1_zero_targets_drive_powers_to_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        let mut state = random_state(&mut rng, 3, 4);
        let status =
            stage1_solve(&mut state, &Stage1Config::default(), &[0.0; 3], 0.1).unwrap();
        assert_eq!(status, Stage1Status::Converged);
        assert_eq!(state.p, vec![0.0; 3]);
    }

    #[test]
    fn stage1_fixed_point_is_init_independent() {
        let mut rng = ChaCha12Rng::seed_from_u64(36);
        let sigma2 = 0.01;
        let targets = [1.5, 2.0];
        let tight = Stage1Config { inner_iters: 2000, power_cap: 1e6, tol: 1e-13 };

        let base = random_state(&mut rng, 2, 4);
        let mut from_noise = base.clone();
        from_noise.p = vec![sigma2; 2];
        let mut from_random = base.clone();
        from_random.p = vec![3.7, 0.4];

        let s1 = stage1_solve(&mut from_noise, &tight, &targets, sigma2).unwrap();
        let s2 = stage1_solve(&mut from_random, &tight, &targets, sigma2).unwrap();
        assert_eq!(s1, Stage1Status::Converged);
        assert_eq!(s2, Stage1Status::Converged);
        for i in 0..2 {
            let (a, b) = (from_noise.p[i], from_random.p[i]);
            assert!((a - b).abs() <= 1e-8 * a.max(b), "p[{i}]: {a} vs {b}");
            let achieved = sinr(&from_noise, i, sigma2).unwrap();
            assert!((achieved - targets[i]).abs() <= 1e-6 * targets[i]);
        }
    }

    #[test]
    fn stage1_totals_grow_monotonically_from_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let sigma2 = 0.05;
        let targets = [1.0, 1.8, 0.7];
        let mut state = random_state(&mut rng, 3, 4);
        state.p = vec![0.0; 3];

        let one_sweep = Stage1Config { inner_iters: 1, power_cap: 1e6, tol: 1e-9 };
        let mut totals = vec![state.total_power()];
        for _ in 0..200 {
            stage1_solve(&mut state, &one_sweep, &targets, sigma2).unwrap();
            totals.push(state.total_power());
        }
        for w in totals.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].max(1.0));
        }
        // And the tail is Cauchy: the map contracts near the fixed point.
        let last = totals[totals.len() - 1];
        let prev = totals[totals.len() - 2];
        assert!((last - prev).abs() <= 1e-9 * last);
    }

    #[test]
    fn stage1_detects_infeasible_targets() {
        // Two users sharing one antenna and the same signature: beyond
        // SIR 1 the pair of constraints cannot both hold, so gamma = 3.5
        // each must diverge.
        let mut state = SolverState {
            p: vec![1e-3, 1e-3],
            filters: vec![vec![c(0.0, 0.0)]; 2],
            signatures: vec![vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]],
        };
        let cfg = Stage1Config { inner_iters: 10_000, ..Stage1Config::default() };
        let status = stage1_solve(&mut state, &cfg, &[3.5, 3.5], 1e-3).unwrap();
        assert_eq!(status, Stage1Status::Infeasible);
        assert!(state.p.iter().any(|p| *p > 1e6));
    }

    #[test]
    fn stage1_respects_the_iteration_budget() {
        let mut rng = ChaCha12Rng::seed_from_u64(38);
        let mut state = random_state(&mut rng, 2, 4);
        state.p = vec![0.0; 2];
        // One sweep cannot reach the stall tolerance from a cold start.
        let cfg = Stage1Config { inner_iters: 1, power_cap: 1e6, tol: 1e-9 };
        let status = stage1_solve(&mut state, &cfg, &[1.0, 1.0], 0.01).unwrap();
        assert_eq!(status, Stage1Status::IterLimit);
    }

    #[test]
    fn stage1_rejects_target_count_mismatch() {
        let mut state = SolverState::new(2, 3, 1e-3);
        assert!(matches!(
            stage1_solve(&mut state, &Stage1Config::default(), &[1.0], 1e-3),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
