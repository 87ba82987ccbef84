//! Stage 2: surface phase design by target-signature tracking.
//!
//! With powers and filters frozen, each user first asks what spatial
//! signature would suit its MMSE filter best, subject to a norm budget —
//! a resolvent expression `sqrt(p) (p C C^H + mu I)^{-1} c` whose
//! Lagrange multiplier `mu` is found by bisection on the norm constraint.
//! The surface phases are then regressed toward that target: minimizing
//! `||B exp(j phi) - t||^2` over per-element phases is nonconvex, so the
//! solver takes successive-convex-approximation steps (gradient of the
//! smooth objective, step `1/lambda`, backtracking on `lambda`) that
//! descend monotonically and wrap phases to `(-pi, pi]`.
//!
//! A companion relaxation drops the unit-modulus constraint entirely and
//! projects the target onto the reachable subspace, yielding the
//! best-case signature any phase configuration could approach — useful
//! as an optimality gauge for the phase solver.

use crate::numerics::{cdot, norm2, scale_re, solve_hpd, spectral_norm, C64, CMat, CVec};
use crate::scenario::ChannelSet;
use crate::system::{surface_contribution, sync_signatures, ModelKind, PhaseBank, SolverState};
use crate::{Error, Result};

use std::f64::consts::PI;

/// Regularizer floor, as a fraction of `p_i * sigma_max(C)^2`: keeps the
/// resolvent solvable when the filter Gram matrix is rank deficient.
pub const MU_FLOOR_FACTOR: f64 = 1e-12;

/// Relative tolerance on `| ||s(mu)|| - bound |` for the bisection.
pub const NORM_TOL: f64 = 1e-8;

/// Iteration cap for the norm bisection.
const BISECT_MAX_ITERS: usize = 500;

/// Give-up threshold while doubling the bracket's upper edge.
const BRACKET_LIMIT: f64 = 1e300;

/// Step-scale doublings allowed per SCA iteration before declaring the
/// step stuck at floating-point resolution.
const MAX_BACKTRACKS: usize = 200;

/// Knobs for the SCA phase solver.
#[derive(Clone, Copy, Debug)]
pub struct ScaConfig {
    /// Gradient steps per solve.
    pub inner_iters: usize,
    /// Stop once `max |grad|` falls below this times the automatic step
    /// scale (which tracks the problem's magnitude, so the test is
    /// scale-free).
    pub grad_tol: f64,
    /// Multiplier applied to the step scale when a step fails to descend.
    pub backtrack_factor: f64,
    /// Fixed initial step scale; `None` derives `4 sigma_max(X) + 2 ||v||`
    /// from the problem, which upper-bounds the objective curvature.
    pub lambda_init: Option<f64>,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            inner_iters: 100,
            grad_tol: 1e-8,
            backtrack_factor: 2.0,
            lambda_init: None,
        }
    }
}

/// Phase-regression problem `min_phi ||B exp(j phi) - t||^2`, carrying
/// the factor `B`, the target `t`, and the derived quadratic form
/// `X = B^H B`, `v = B^H t` the solver actually iterates on.
#[derive(Clone, Debug)]
pub struct RegressionProblem {
    factor: CMat,
    target: CVec,
    quadratic: CMat,
    linear: CVec,
}

impl RegressionProblem {
    /// Build the problem for factor `B` and target `t`.
    pub fn new(factor: CMat, target: CVec) -> Result<Self> {
        if target.len() != factor.rows() {
            return Err(Error::DimensionMismatch(format!(
                "target length {} does not match factor rows {}",
                target.len(),
                factor.rows()
            )));
        }
        let quadratic = factor.gram_left();
        let linear = factor.herm_mul_vec(&target);
        Ok(Self { factor, target, quadratic, linear })
    }

    /// Number of phases being optimized.
    pub fn n_phases(&self) -> usize {
        self.factor.cols()
    }

    /// The factor `B`.
    pub fn factor(&self) -> &CMat {
        &self.factor
    }

    /// The target vector `t`.
    pub fn target(&self) -> &CVec {
        &self.target
    }

    /// The quadratic form `X = B^H B` (exactly Hermitian).
    pub fn quadratic(&self) -> &CMat {
        &self.quadratic
    }

    /// The linear term `v = B^H t`.
    pub fn linear(&self) -> &CVec {
        &self.linear
    }
}

/// Unit-modulus phase vector `exp(j phi)`.
fn unit_phases(phi: &[f64]) -> CVec {
    phi.iter().map(|&p| C64::from_polar(1.0, p)).collect()
}

/// Wrap an angle into `(-pi, pi]`.
fn wrap_phase(phi: f64) -> f64 {
    phi - 2.0 * PI * ((phi - PI) / (2.0 * PI)).ceil()
}

/// Variable part of the squared distance: for `theta = exp(j phi)`,
///
/// `f(phi) = theta^H X theta - 2 Re(theta^H v)`
///
/// which equals `||B theta - t||^2 - ||t||^2`.
///
/// # Panics
/// Panics if `phi.len()` differs from the problem size.
pub fn objective(problem: &RegressionProblem, phi: &[f64]) -> f64 {
    assert_eq!(phi.len(), problem.n_phases(), "objective phase count mismatch");
    let theta = unit_phases(phi);
    cdot(&theta, &problem.quadratic.mul_vec(&theta)).re
        - 2.0 * cdot(&theta, &problem.linear).re
}

/// Gradient of [`objective`] with respect to the phase angles:
///
/// `g_k = 2 Im( conj(theta_k) (X theta - v)_k )`
///
/// valid because `X` is Hermitian by construction.
pub fn sca_gradient(problem: &RegressionProblem, phi: &[f64]) -> Result<Vec<f64>> {
    if phi.len() != problem.n_phases() {
        return Err(Error::DimensionMismatch(format!(
            "{} phases for a problem of size {}",
            phi.len(),
            problem.n_phases()
        )));
    }
    let theta = unit_phases(phi);
    let mut inner = problem.quadratic.mul_vec(&theta);
    for (w, v) in inner.iter_mut().zip(&problem.linear) {
        *w -= v;
    }
    Ok(theta
        .iter()
        .zip(&inner)
        .map(|(t, w)| 2.0 * (t.conj() * w).im)
        .collect())
}

/// Run the SCA phase solver and return the final phases.
///
/// See [`sca_phase_solve_traced`] for the iteration details.
pub fn sca_phase_solve(
    problem: &RegressionProblem,
    phi0: &[f64],
    config: &ScaConfig,
) -> Result<Vec<f64>> {
    sca_phase_solve_traced(problem, phi0, config).map(|(phi, _)| phi)
}

/// Like [`sca_phase_solve`], also returning the objective value at the
/// start and after every accepted step.
///
/// Each iteration takes the gradient step `phi - g / lambda`, wraps it to
/// `(-pi, pi]`, and accepts it only if the objective does not increase;
/// otherwise `lambda` grows by the backtrack factor and the step is
/// retried. The returned trace is therefore non-increasing by
/// construction — asserting so in tests checks the gradient, not the
/// bookkeeping. Iteration stops early once the gradient is negligible
/// relative to the problem scale.
pub fn sca_phase_solve_traced(
    problem: &RegressionProblem,
    phi0: &[f64],
    config: &ScaConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if phi0.len() != problem.n_phases() {
        return Err(Error::DimensionMismatch(format!(
            "{} initial phases for a problem of size {}",
            phi0.len(),
            problem.n_phases()
        )));
    }
    if let Some(lam) = config.lambda_init {
        if !(lam.is_finite() && lam > 0.0) {
            return Err(Error::Config(format!(
                "lambda_init must be finite and positive, got {lam}"
            )));
        }
    }
    // Curvature bound: the Hessian of the objective is dominated by
    // 2 sigma_max(X) from the quadratic form, plus the linear term pulled
    // around the unit circle; doubling the quadratic contribution keeps
    // the bound safely above the exact constant.
    let lambda_auto = 4.0 * spectral_norm(&problem.quadratic)? + 2.0 * norm2(&problem.linear);
    let mut lambda = config.lambda_init.unwrap_or(lambda_auto);

    let mut phi: Vec<f64> = phi0.iter().map(|&p| wrap_phase(p)).collect();
    let mut f = objective(problem, &phi);
    let mut trace = vec![f];

    'outer: for _ in 0..config.inner_iters {
        let grad = sca_gradient(problem, &phi)?;
        let grad_max = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        // lambda_auto is the natural magnitude of this problem's
        // gradients; comparing against it makes the stop rule behave
        // identically across channel scales.
        if grad_max <= config.grad_tol * lambda_auto {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = phi
                .iter()
                .zip(&grad)
                .map(|(&p, &g)| wrap_phase(p - g / lambda))
                .collect();
            let f_candidate = objective(problem, &candidate);
            if f_candidate <= f {
                phi = candidate;
                f = f_candidate;
                trace.push(f);
                accepted = true;
                break;
            }
            lambda *= config.backtrack_factor;
        }
        if !accepted {
            // The step underflowed to no descent: nothing more to gain at
            // this precision.
            break 'outer;
        }
    }
    Ok((phi, trace))
}

/// Resolvent signature `sqrt(p_i) (p_i C C^H + mu I)^{-1} c_i` for a
/// given regularizer `mu`.
///
/// `filters` holds all users' receive filters as columns (`M x N`).
/// Failure to factor the (theoretically positive-definite) system maps
/// to [`Error::SingularSystem`].
///
/// # Panics
/// Panics if `p_i` is not strictly positive and finite, or if `c_i`'s
/// length differs from the filter row count.
pub fn resolvent_signature(filters: &CMat, p_i: f64, c_i: &[C64], mu: f64) -> Result<CVec> {
    assert!(
        p_i.is_finite() && p_i > 0.0,
        "resolvent_signature needs a positive power, got {p_i}"
    );
    assert_eq!(c_i.len(), filters.rows(), "filter length mismatch");
    let mut w = filters.gram_right();
    w.scale_in_place(p_i);
    w.add_scaled_identity(mu);
    let x = solve_hpd(&w, c_i).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::SingularSystem(format!(
            "resolvent system is singular at mu = {mu:.3e}"
        )),
        other => other,
    })?;
    Ok(scale_re(&x, p_i.sqrt()))
}

/// Norm-constrained target signature: the maximizer of the filter's
/// output SNR over `||s|| <= norm_bound`, found by bisecting the
/// resolvent's Lagrange multiplier.
///
/// Returns the signature together with the multiplier that produced it.
/// The multiplier is floored at `MU_FLOOR_FACTOR * p_i * sigma_max(C)^2`;
/// if the constraint is slack there, the floor solution is returned
/// directly. Otherwise the upper bracket edge starts at `max(1, 2 floor)`
/// and doubles until the norm drops below the bound, and bisection then
/// tightens until `| ||s|| - bound | <= NORM_TOL * bound`.
///
/// # Panics
/// As [`resolvent_signature`].
pub fn optimal_signature(
    filters: &CMat,
    p_i: f64,
    c_i: &[C64],
    norm_bound: f64,
) -> Result<(CVec, f64)> {
    if !(norm_bound.is_finite() && norm_bound > 0.0) {
        return Err(Error::BisectionFailure(format!(
            "norm bound must be finite and positive, got {norm_bound}"
        )));
    }
    let sigma_c = spectral_norm(filters)?;
    let mu_floor = MU_FLOOR_FACTOR * p_i * sigma_c * sigma_c;
    let s_floor = resolvent_signature(filters, p_i, c_i, mu_floor)?;
    if norm2(&s_floor) <= norm_bound {
        return Ok((s_floor, mu_floor));
    }

    // ||s(mu)|| decreases monotonically, so grow the upper edge until it
    // crosses the bound, then bisect.
    let mut lo = mu_floor;
    let mut hi = (2.0 * mu_floor).max(1.0);
    while norm2(&resolvent_signature(filters, p_i, c_i, hi)?) > norm_bound {
        hi *= 2.0;
        if hi > BRACKET_LIMIT {
            return Err(Error::BisectionFailure(format!(
                "no multiplier below {BRACKET_LIMIT:.1e} meets norm bound {norm_bound:.3e}"
            )));
        }
    }
    for _ in 0..BISECT_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let s = resolvent_signature(filters, p_i, c_i, mid)?;
        let norm = norm2(&s);
        if (norm - norm_bound).abs() <= NORM_TOL * norm_bound {
            return Ok((s, mid));
        }
        if norm > norm_bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BisectionFailure(format!(
        "norm bisection stalled after {BISECT_MAX_ITERS} iterations (bound {norm_bound:.3e})"
    )))
}

/// Accelerated target signature: take the resolvent at the multiplier
/// floor and rescale it onto the norm bound, skipping the bisection.
///
/// The rescaled direction matches the bisection solution in the limit of
/// a fully active constraint and costs one solve instead of dozens.
///
/// # Panics
/// As [`resolvent_signature`].
pub fn accelerated_signature(
    filters: &CMat,
    p_i: f64,
    c_i: &[C64],
    norm_bound: f64,
) -> Result<CVec> {
    if !(norm_bound.is_finite() && norm_bound > 0.0) {
        return Err(Error::BisectionFailure(format!(
            "norm bound must be finite and positive, got {norm_bound}"
        )));
    }
    let sigma_c = spectral_norm(filters)?;
    let mu_floor = MU_FLOOR_FACTOR * p_i * sigma_c * sigma_c;
    let s = resolvent_signature(filters, p_i, c_i, mu_floor)?;
    let norm = norm2(&s);
    if norm == 0.0 {
        return Err(Error::SingularSystem(
            "resolvent target vanished; the filter carries no signal".into(),
        ));
    }
    Ok(scale_re(&s, norm_bound / norm))
}

/// Projection of the problem's target onto the column space of its
/// factor: the signature an *unconstrained* (non-unit-modulus) surface
/// could realize, computed by twice-reorthogonalized Gram–Schmidt.
pub fn lower_bound_signature(problem: &RegressionProblem) -> Result<CVec> {
    let b = problem.factor();
    let m = b.rows();
    let mut basis: Vec<CVec> = Vec::new();
    let col_scale = (0..b.cols()).map(|j| norm2(&b.col(j))).fold(0.0f64, f64::max);
    if col_scale == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); m]);
    }
    let rank_tol = 1e-12 * col_scale;
    for j in 0..b.cols() {
        let mut v = b.col(j);
        // Two passes: classical Gram-Schmidt loses orthogonality at this
        // matrix size, one reorthogonalization restores it to roundoff.
        for _ in 0..2 {
            for q in &basis {
                let coeff = cdot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= coeff * qi;
                }
            }
        }
        let norm = norm2(&v);
        if norm > rank_tol {
            basis.push(scale_re(&v, 1.0 / norm));
        }
    }
    let mut s = vec![C64::new(0.0, 0.0); m];
    for q in &basis {
        let coeff = cdot(q, problem.target());
        for (si, qi) in s.iter_mut().zip(q) {
            *si += coeff * qi;
        }
    }
    Ok(s)
}

/// Per-user phase-regression problems for the current state: the factor
/// `B_i = G_i diag(h_{i,i})`, and as target the norm-bounded optimal
/// signature (minus, under the parallel model, the frozen contributions
/// of the other users' surfaces). Shared by [`phase_stage`] and
/// [`lower_bound_stage`] so both chase identical targets.
fn stage_problems(
    state: &SolverState,
    channels: &ChannelSet,
    phases: &PhaseBank,
    kind: ModelKind,
    accelerated: bool,
) -> Result<Vec<Option<RegressionProblem>>> {
    let n = state.n_users();
    if channels.n_users() != n {
        return Err(Error::DimensionMismatch(format!(
            "state tracks {n} users but channels have {}",
            channels.n_users()
        )));
    }
    if phases.phi.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "phase bank has {} surfaces for {n} users",
            phases.phi.len()
        )));
    }
    let k = channels.n_ris_elements();
    let filter_mat = CMat::from_cols(&state.filters);

    // Snapshot of every cross contribution under the *entry* phases, so
    // all users update against the same frozen interference picture.
    let cross: Option<Vec<Vec<CVec>>> = match kind {
        ModelKind::Parallel => {
            let mut all = Vec::with_capacity(n);
            for i in 0..n {
                let mut row = Vec::with_capacity(n);
                for j in 0..n {
                    row.push(surface_contribution(channels, phases, i, j)?);
                }
                all.push(row);
            }
            Some(all)
        }
        _ => None,
    };

    let mut problems = Vec::with_capacity(n);
    for i in 0..n {
        // A powerless user induces no interference and has no SNR to
        // shape; leave its phases alone.
        if state.p[i] <= 0.0 {
            problems.push(None);
            continue;
        }
        let b_i = channels.g[i].scale_cols(&channels.h[i][i]);
        let norm_bound = (k as f64).sqrt() * spectral_norm(&b_i)?;
        let c_i = &state.filters[i];
        let target_raw = if accelerated {
            accelerated_signature(&filter_mat, state.p[i], c_i, norm_bound)?
        } else {
            optimal_signature(&filter_mat, state.p[i], c_i, norm_bound)?.0
        };
        let target = match &cross {
            None => target_raw,
            Some(all) => {
                let mut t = target_raw;
                for j in 0..n {
                    if j != i {
                        for (ti, ci) in t.iter_mut().zip(&all[i][j]) {
                            *ti -= ci;
                        }
                    }
                }
                t
            }
        };
        problems.push(Some(RegressionProblem::new(b_i, target)?));
    }
    Ok(problems)
}

/// One phase-design pass: compute each user's target signature, regress
/// its surface phases toward it (warm-started from the current phases),
/// and refresh the state's signatures for the new phase bank.
///
/// Under `ModelKind::Direct` there are no phases to design and the call
/// is a no-op. Users whose power is zero are skipped.
pub fn phase_stage(
    state: &mut SolverState,
    channels: &ChannelSet,
    phases: &mut PhaseBank,
    kind: ModelKind,
    config: &ScaConfig,
    accelerated: bool,
) -> Result<()> {
    if kind == ModelKind::Direct {
        return Ok(());
    }
    let problems = stage_problems(state, channels, phases, kind, accelerated)?;
    for (i, problem) in problems.iter().enumerate() {
        if let Some(problem) = problem {
            phases.phi[i] = sca_phase_solve(problem, &phases.phi[i], config)?;
        }
    }
    sync_signatures(state, channels, phases, kind)
}

/// Relaxed phase-design pass: instead of running the phase solver, give
/// every user the *projection* of its target onto the reachable
/// subspace — the signature an unconstrained surface would realize.
///
/// The state's signatures are overwritten directly; the phase bank is
/// left untouched (no phase vector generally realizes these signatures),
/// so the state no longer corresponds to `phases` after this call.
pub fn lower_bound_stage(
    state: &mut SolverState,
    channels: &ChannelSet,
    phases: &PhaseBank,
    kind: ModelKind,
    accelerated: bool,
) -> Result<()> {
    if kind == ModelKind::Direct {
        return Ok(());
    }
    let problems = stage_problems(state, channels, phases, kind, accelerated)?;
    for (i, problem) in problems.iter().enumerate() {
        let Some(problem) = problem else { continue };
        let own = lower_bound_signature(problem)?;
        state.signatures[i] = match kind {
            ModelKind::Personal => own,
            ModelKind::Parallel => {
                // Add back the frozen cross contributions the target had
                // subtracted out.
                let mut s = own;
                for j in 0..channels.n_users() {
                    if j != i {
                        let contrib = surface_contribution(channels, phases, i, j)?;
                        for (si, ci) in s.iter_mut().zip(&contrib) {
                            *si += ci;
                        }
                    }
                }
                s
            }
            ModelKind::Direct => unreachable!("handled above"),
        };
    }
    Ok(())
}
