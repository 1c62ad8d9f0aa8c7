//! Verification tools: the consensus-gain certificate, a full-information
//! oracle for the variational GNE, Lyapunov/violation monitor channels, and
//! the skew operator behind the primal-dual coupling.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{CoreError, Result};
use crate::flow::{SingleState, StepCore, Trajectory};
use crate::game::{consensus_embed, GameConstants, GameSpec};
use crate::graph::CommGraph;
use crate::sets::ConvexSet;

/// Default target for the oracle's natural-residual stopping test.
pub const DEFAULT_ORACLE_TOL: f64 = 1e-10;
/// Default iteration budget for the oracle.
pub const DEFAULT_ORACLE_MAX_ITER: usize = 500_000;

/// The 2×2 gain-certificate matrix and the threshold c̲ it induces.
///
/// `M = [[μ/N, −(θ₀+θ)/(2√N)], [−(θ₀+θ)/(2√N), cλ₂ − θ]]` is positive
/// definite exactly when `c > c̲ = ((θ₀+θ)² + 4μθ)/(4μλ₂)`; its smallest
/// eigenvalue is the restricted-monotonicity margin of the consensus-coupled
/// pseudo-gradient.
#[derive(Debug, Clone)]
pub struct ConvergenceCert {
    pub mu: f64,
    pub theta0: f64,
    pub theta: f64,
    pub lambda2: f64,
    pub n_agents: usize,
    pub m: Matrix2<f64>,
    pub lambda_min_m: f64,
    pub c_lower: f64,
    pub c_used: f64,
    pub satisfied: bool,
}

pub fn compute_cert(
    k: &GameConstants,
    n_agents: usize,
    lambda2: f64,
    c: f64,
) -> Result<ConvergenceCert> {
    if n_agents == 0 {
        return Err(CoreError::InvalidParameter("certificate needs at least one agent".into()));
    }
    if !(k.mu.is_finite() && k.mu > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "certificate requires μ > 0, got {}",
            k.mu
        )));
    }
    if !(k.theta.is_finite() && k.theta0.is_finite() && k.mu <= k.theta && k.theta <= k.theta0) {
        return Err(CoreError::InvalidParameter(format!(
            "certificate requires μ ≤ θ ≤ θ₀, got μ={} θ={} θ₀={}",
            k.mu, k.theta, k.theta0
        )));
    }
    if !(lambda2.is_finite() && lambda2 > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "certificate requires λ₂ > 0, got {lambda2}"
        )));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(CoreError::InvalidParameter(format!("certificate requires c > 0, got {c}")));
    }
    let n = n_agents as f64;
    let a = k.mu / n;
    let b = -(k.theta0 + k.theta) / (2.0 * n.sqrt());
    let d = c * lambda2 - k.theta;
    let m = Matrix2::new(a, b, b, d);
    let mid = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let lambda_max = mid + disc;
    // det/λ_max is well conditioned near the PD boundary, where mid − disc
    // cancels catastrophically.
    let lambda_min_m = if lambda_max > 0.0 { (a * d - b * b) / lambda_max } else { mid - disc };
    let c_lower =
        ((k.theta0 + k.theta) * (k.theta0 + k.theta) + 4.0 * k.mu * k.theta) / (4.0 * k.mu * lambda2);
    Ok(ConvergenceCert {
        mu: k.mu,
        theta0: k.theta0,
        theta: k.theta,
        lambda2,
        n_agents,
        m,
        lambda_min_m,
        c_lower,
        c_used: c,
        satisfied: c > c_lower,
    })
}

/// Full-information v-GNE found by the oracle, with the natural residual it
/// achieves and the active coupling rows at the solution.
#[derive(Debug, Clone)]
pub struct EquilibriumReport {
    pub x_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub active: Vec<bool>,
}

/// Independent full-information solver for the variational GNE: projected
/// gradient descent-ascent on the KKT operator with a conservative constant
/// step, plus an exact active-set polish for quadratic games. Deliberately
/// shares no code with the distributed dynamics.
pub fn oracle_vgne(g: &GameSpec, tol: f64, max_iter: usize) -> Result<EquilibriumReport> {
    let x0 = g.omega().project(&DVector::zeros(g.total_dim()))?;
    let lam0 = DVector::zeros(g.n_constraints());
    oracle_vgne_with_start(g, &x0, &lam0, tol, max_iter)
}

pub fn oracle_vgne_with_start(
    g: &GameSpec,
    x0: &DVector<f64>,
    lam0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumReport> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CoreError::InvalidParameter(format!("oracle tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(CoreError::InvalidParameter("oracle needs at least one iteration".into()));
    }
    let consts = match g.constants() {
        Some(k) => k,
        None => g.estimate_constants(200, 10.0, 0)?,
    };
    if consts.mu <= 0.0 {
        return Err(CoreError::InvalidGame(
            "the oracle requires a strongly monotone pseudo-gradient (μ > 0)".into(),
        ));
    }
    let m = g.n_constraints();
    let a = g.a_global();
    let b = g.b_global();
    let a_norm = if m == 0 { 0.0 } else { a.clone().singular_values().max() };
    let gamma = consts.mu / ((consts.theta0 + a_norm) * (consts.theta0 + a_norm));

    let mut x = g.omega().project(x0)?;
    let mut lam = lam0.map(|v| v.max(0.0));
    if lam.len() != m {
        return Err(CoreError::DimensionMismatch {
            context: "oracle multiplier start",
            expected: m,
            got: lam.len(),
        });
    }
    let mut iterations = 0;
    let mut residual = g.kkt_residual(&x, &lam)?;
    if residual > tol {
        for k in 1..=max_iter {
            let fx = g.pseudo_gradient(&x)?;
            let x_next = if m == 0 {
                g.omega().project(&(&x - (&fx) * gamma))?
            } else {
                g.omega().project(&(&x - (fx + a.transpose() * &lam) * gamma))?
            };
            if m > 0 {
                let slack = a * &x - b;
                lam = (&lam + slack * gamma).map(|v| v.max(0.0));
            }
            x = x_next;
            iterations = k;
            if k % 25 == 0 || k == max_iter {
                residual = g.kkt_residual(&x, &lam)?;
                if residual <= tol {
                    break;
                }
            }
        }
        residual = g.kkt_residual(&x, &lam)?;
    }

    if let Some((xr, lr)) = active_set_polish(g, &x, &lam) {
        let r = g.kkt_residual(&xr, &lr)?;
        if r < residual {
            x = xr;
            lam = lr;
            residual = r;
        }
    }

    if residual > tol {
        return Err(CoreError::NoConvergence { max_iter, residual });
    }
    let active = if m == 0 {
        Vec::new()
    } else {
        let slack = g.a_global() * &x - g.b_global();
        (0..m).map(|k| lam[k] + slack[k] > 0.0).collect()
    };
    Ok(EquilibriumReport { x_star: x, lambda_star: lam, kkt_residual: residual, iterations, active })
}

/// Solve the KKT equalities exactly on the active set guessed from (x, λ):
/// stationarity Gx + A_𝒜ᵀλ_𝒜 + E_ℱᵀν = −g, active rows A_𝒜 x = b_𝒜, pinned
/// box faces E_ℱ x = bounds. Returns None unless the game is quadratic and
/// the polished point validates (multiplier and normal signs, feasibility).
fn active_set_polish(
    g: &GameSpec,
    x: &DVector<f64>,
    lam: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let (gmat, gvec) = g.quadratic_parts()?;
    let n = g.total_dim();
    let m = g.n_constraints();
    let a = g.a_global();
    let b = g.b_global();

    let active: Vec<usize> = if m == 0 {
        Vec::new()
    } else {
        let slack = a * x - b;
        (0..m).filter(|&k| lam[k] + slack[k] > 0.0).collect()
    };

    let (lower, upper) = g.omega().coordinate_bounds();
    let mut faces: Vec<(usize, f64, i8)> = Vec::new(); // (coordinate, pinned value, −1 lower / +1 upper)
    for j in 0..n {
        let scale = 1.0 + x[j].abs();
        if lower[j].is_finite() && x[j] - lower[j] <= 1e-7 * scale {
            faces.push((j, lower[j], -1));
        } else if upper[j].is_finite() && upper[j] - x[j] <= 1e-7 * scale {
            faces.push((j, upper[j], 1));
        }
    }

    let na = active.len();
    let nf = faces.len();
    let dim = n + na + nf;
    let mut sys = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    sys.view_mut((0, 0), (n, n)).copy_from(&gmat);
    rhs.rows_mut(0, n).copy_from(&(-&gvec));
    for (idx, &k) in active.iter().enumerate() {
        for j in 0..n {
            sys[(j, n + idx)] = a[(k, j)];
            sys[(n + idx, j)] = a[(k, j)];
        }
        rhs[n + idx] = b[k];
    }
    for (idx, &(j, val, _)) in faces.iter().enumerate() {
        sys[(j, n + na + idx)] = 1.0;
        sys[(n + na + idx, j)] = 1.0;
        rhs[n + na + idx] = val;
    }

    let sol = sys.lu().solve(&rhs)?;
    let x_ref = sol.rows(0, n).into_owned();
    let lam_act = sol.rows(n, na).into_owned();
    let nu = sol.rows(n + na, nf).into_owned();

    const SIGN_TOL: f64 = 1e-9;
    if lam_act.iter().any(|&v| v < -SIGN_TOL) {
        return None;
    }
    for (idx, &(_, _, side)) in faces.iter().enumerate() {
        if (side < 0 && nu[idx] > SIGN_TOL) || (side > 0 && nu[idx] < -SIGN_TOL) {
            return None;
        }
    }
    // Feasibility of what the guess left out.
    let x_ref = g.omega().project(&x_ref).ok()?;
    if m > 0 {
        let slack = a * &x_ref - b;
        for k in 0..m {
            if !active.contains(&k) && slack[k] > SIGN_TOL {
                return None;
            }
        }
    }
    let mut lam_full = DVector::zeros(m);
    for (idx, &k) in active.iter().enumerate() {
        lam_full[k] = lam_act[idx].max(0.0);
    }
    Some((x_ref, lam_full))
}

/// Fill the Lyapunov channel of a recorded trajectory:
/// `V(ω) = ½‖x̂ − 1⊗x*‖² + ½‖z − z̄‖² + ½‖λ − 1⊗λ*‖²` with (x*, λ*) from the
/// oracle and z̄ the run's own limit (the theory pins the primal and dual
/// components of the equilibrium but not z̄).
pub fn monitor_channels(g: &GameSpec, traj: &mut Trajectory, report: &EquilibriumReport) -> Result<()> {
    monitor_channels_with_reference(g, g, traj, report)
}

/// Same as [`monitor_channels`], but the coupling/local violation channels
/// are recomputed against `constraint_game` (for runs on a dualized game the
/// violations of interest are those of the original boxes).
pub fn monitor_channels_with_reference(
    run_game: &GameSpec,
    constraint_game: &GameSpec,
    traj: &mut Trajectory,
    report: &EquilibriumReport,
) -> Result<()> {
    if report.x_star.len() != run_game.total_dim() {
        return Err(CoreError::DimensionMismatch {
            context: "oracle solution",
            expected: run_game.total_dim(),
            got: report.x_star.len(),
        });
    }
    if traj.is_empty() {
        return Ok(());
    }
    let layout = traj.layout.clone();
    let n_agents = layout.n_agents;
    let xstar_stack = consensus_embed(n_agents, &report.x_star);
    let lam_stack = consensus_embed(n_agents, &report.lambda_star);
    let z_bar = traj
        .final_state()
        .rows(layout.z_range().start, layout.z_range().len())
        .into_owned();
    let same_constraints = std::ptr::eq(run_game, constraint_game);
    for k in 0..traj.len() {
        let flat = traj.states[k].as_slice();
        let mut v = 0.0;
        let hr = layout.hat_range();
        for (i, &s) in flat[hr.clone()].iter().enumerate() {
            let d = s - xstar_stack[i];
            v += d * d;
        }
        let zr = layout.z_range();
        for (i, &s) in flat[zr.clone()].iter().enumerate() {
            let d = s - z_bar[i];
            v += d * d;
        }
        let lr = layout.lambda_range();
        for (i, &s) in flat[lr.clone()].iter().enumerate() {
            let d = s - lam_stack[i];
            v += d * d;
        }
        traj.channels.lyapunov[k] = 0.5 * v;
        if !same_constraints {
            let x = traj.position(run_game, k)?;
            traj.channels.coupling_violation[k] = constraint_game.coupling_violation_inf(&x)?;
            traj.channels.local_violation[k] = constraint_game.local_violation_inf(&x)?;
        }
    }
    Ok(())
}

/// Step-resolution audit of the Lyapunov decrease for the single-integrator
/// loop: re-integrates from `s0` with the exact stepping rule and counts the
/// steps on which `V` increased by more than `10h²`.
#[derive(Debug, Clone)]
pub struct LyapunovAudit {
    pub steps: usize,
    pub violations: usize,
    pub max_increase: f64,
}

pub fn lyapunov_step_audit(
    g: &GameSpec,
    gph: &CommGraph,
    p: &crate::flow::FlowParams,
    s0: &SingleState,
    report: &EquilibriumReport,
    z_bar: &DVector<f64>,
) -> Result<LyapunovAudit> {
    s0.validate(g)?;
    let n_agents = g.n_agents();
    let (n, m) = (g.total_dim(), g.n_constraints());
    if z_bar.len() != n_agents * m {
        return Err(CoreError::DimensionMismatch {
            context: "Lyapunov audit z̄",
            expected: n_agents * m,
            got: z_bar.len(),
        });
    }
    let xstar_stack = consensus_embed(n_agents, &report.x_star);
    let lam_stack = consensus_embed(n_agents, &report.lambda_star);
    let value = |hat: &[f64], z: &[f64], lam: &[f64]| {
        let mut v = 0.0;
        for (i, &s) in hat.iter().enumerate() {
            let d = s - xstar_stack[i];
            v += d * d;
        }
        for (i, &s) in z.iter().enumerate() {
            let d = s - z_bar[i];
            v += d * d;
        }
        for (i, &s) in lam.iter().enumerate() {
            let d = s - lam_stack[i];
            v += d * d;
        }
        0.5 * v
    };

    let mut hat = s0.xhat.as_slice().to_vec();
    let mut z = s0.z.as_slice().to_vec();
    let mut lam = s0.lam.as_slice().to_vec();
    let mut core = StepCore::new(g);
    let slack = 10.0 * p.h * p.h;
    let steps_max = p.n_steps();
    let mut prev = value(&hat, &z, &lam);
    let mut violations = 0usize;
    let mut max_increase = 0.0f64;
    let mut steps = 0usize;
    let mut prev_state: Vec<f64> = Vec::with_capacity(n_agents * n + 2 * n_agents * m);
    for _ in 0..steps_max {
        prev_state.clear();
        prev_state.extend_from_slice(&hat);
        prev_state.extend_from_slice(&z);
        prev_state.extend_from_slice(&lam);
        core.step(g, gph, p.c, p.h, &mut hat, &mut z, &mut lam)?;
        steps += 1;
        let next = value(&hat, &z, &lam);
        if next > prev + slack {
            violations += 1;
            max_increase = max_increase.max(next - prev);
        }
        prev = next;
        let mut delta = 0.0;
        for (a, b) in prev_state
            .iter()
            .zip(hat.iter().chain(z.iter()).chain(lam.iter()))
        {
            let d = b - a;
            delta += d * d;
        }
        if delta.sqrt() / p.h <= p.eps_stop {
            break;
        }
    }
    Ok(LyapunovAudit { steps, violations, max_increase })
}

/// Restricted-monotonicity pairing from the certificate: returns
/// `(⟨x̂ − 1⊗x′, ℛᵀ(𝐅(x̂) − F(x′)) + cL_x(x̂ − 1⊗x′)⟩, ‖x̂ − 1⊗x′‖²)`.
/// The certificate promises the first component ≥ λ_min(M) times the second.
pub fn restricted_monotonicity_gap(
    g: &GameSpec,
    gph: &CommGraph,
    c: f64,
    xhat: &DVector<f64>,
    x_prime: &DVector<f64>,
) -> Result<(f64, f64)> {
    let n_agents = g.n_agents();
    let n = g.total_dim();
    if xhat.len() != n_agents * n {
        return Err(CoreError::DimensionMismatch {
            context: "estimate profile",
            expected: n_agents * n,
            got: xhat.len(),
        });
    }
    let xhat_prime = consensus_embed(n_agents, x_prime);
    let diff = xhat - &xhat_prime;
    let f_ext = g.extended_pseudo_gradient(xhat)?;
    let f_prime = g.pseudo_gradient(x_prime)?;
    let mut lhs = 0.0;
    for i in 0..n_agents {
        for idx in g.block_range(i) {
            lhs += diff[i * n + idx] * (f_ext[idx] - f_prime[idx]);
        }
    }
    let ldiff = gph.laplacian_apply(n, &diff)?;
    lhs += c * diff.dot(&ldiff);
    Ok((lhs, diff.norm_squared()))
}

/// The skew part of the primal-dual coupling: for ω = (x̂, z, λ),
/// `Φω = (ℛᵀΛᵀλ, −L_λλ, −Λℛx̂ + L_λz)`. Skewness (`⟨ω, Φω⟩ = 0`) is what
/// makes the multiplier/auxiliary exchange lossless.
pub fn phi_apply(
    g: &GameSpec,
    gph: &CommGraph,
    xhat: &DVector<f64>,
    z: &DVector<f64>,
    lam: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n_agents = g.n_agents();
    let (n, m) = (g.total_dim(), g.n_constraints());
    for (ctx, len, want) in [
        ("phi x̂", xhat.len(), n_agents * n),
        ("phi z", z.len(), n_agents * m),
        ("phi λ", lam.len(), n_agents * m),
    ] {
        if len != want {
            return Err(CoreError::DimensionMismatch { context: ctx, expected: want, got: len });
        }
    }
    let llam = gph.laplacian_apply(m, lam)?;
    let lz = gph.laplacian_apply(m, z)?;
    let mut hat_slot = DVector::zeros(n_agents * n);
    let mut lam_slot = DVector::zeros(n_agents * m);
    for (i, agent) in g.agents().iter().enumerate() {
        let r = g.block_range(i);
        let lam_i = lam.rows(i * m, m);
        let adj = agent.coupling_a.transpose() * lam_i;
        hat_slot.rows_mut(i * n + r.start, r.len()).copy_from(&adj);
        let own = xhat.rows(i * n + r.start, r.len());
        let ax = &agent.coupling_a * own;
        for k in 0..m {
            lam_slot[i * m + k] = -ax[k] + lz[i * m + k];
        }
    }
    Ok((hat_slot, -llam, lam_slot))
}

/// Projection of a full profile onto per-agent local sets without touching
/// the game: convenience for building feasible warm starts.
pub fn project_profile(omega: &ConvexSet, x: &DVector<f64>) -> Result<DVector<f64>> {
    omega.project(x)
}
