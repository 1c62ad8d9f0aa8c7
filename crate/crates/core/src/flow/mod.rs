//! Closed-loop dynamics and their projected forward-Euler discretization.
//!
//! `single` integrates the single-integrator primal-dual flow; `double`
//! integrates the double-integrator cascade in ζ-coordinates, reusing the
//! same core step so the two sub-trajectories coincide exactly. This module
//! holds what both share: parameters, the packed state layout, trajectory
//! recording, and the fused Euler step.

pub mod double;
pub mod single;

use std::time::Duration;

use nalgebra::DVector;

use crate::error::{CoreError, Result};
use crate::game::{GameConstants, GameSpec};
use crate::graph::CommGraph;
use crate::sets::ConvexSet;

pub use double::{from_zeta, to_zeta, simulate_double, vector_field_double, DoubleState, GainsH};
pub use single::{simulate_single, step_single, vector_field_single, SingleState};

pub const DEFAULT_EPS_STOP: f64 = 1e-8;
pub const DEFAULT_T_MAX: f64 = 200.0;
/// Recording stride is chosen so a default run keeps roughly this many rows.
pub const DEFAULT_TARGET_SAMPLES: usize = 4000;

/// Integrator parameters: consensus gain `c`, Euler step `h`, time budget,
/// stop tolerance on `‖s_{k+1}−s_k‖/h`, and the recording stride.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub c: f64,
    pub h: f64,
    pub t_max: f64,
    pub eps_stop: f64,
    pub stride: usize,
}

impl FlowParams {
    pub fn new(c: f64, h: f64, t_max: f64, eps_stop: f64, stride: usize) -> Result<Self> {
        for (name, v) in [("c", c), ("h", h), ("t_max", t_max), ("eps_stop", eps_stop)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::InvalidParameter(format!(
                    "flow parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        if stride == 0 {
            return Err(CoreError::InvalidParameter("stride must be at least 1".into()));
        }
        Ok(Self { c, h, t_max, eps_stop, stride })
    }

    /// Defaults: `h = min(0.1/(θ₀ + c·λ_max(L) + λ_max(L) + 1), 1e−2)`, which
    /// keeps explicit Euler well inside the stability region of the stiffest
    /// linear part; `ε_stop = 1e−8`, `t_max = 200`.
    pub fn default_for(constants: &GameConstants, gph: &CommGraph, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "consensus gain must be positive, got {c}"
            )));
        }
        let lmax = gph.lambda_max();
        let h = (0.1 / (constants.theta0 + c * lmax + lmax + 1.0)).min(1e-2);
        let steps = (DEFAULT_T_MAX / h).ceil();
        let stride = ((steps / DEFAULT_TARGET_SAMPLES as f64).ceil() as usize).max(1);
        Self::new(c, h, DEFAULT_T_MAX, DEFAULT_EPS_STOP, stride)
    }

    /// Keep everything but the time budget (stride is left alone so the
    /// sample density stays comparable across sweeps).
    pub fn with_t_max(self, t_max: f64) -> Result<Self> {
        Self::new(self.c, self.h, t_max, self.eps_stop, self.stride)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.h).ceil() as usize
    }
}

/// Where each block lives inside the packed state vector.
///
/// Single: `[x̂ (N·n) | z (N·m) | λ (N·m)]`.
/// Double: `[v (n) | ζ̂ (N·n) | z (N·m) | λ (N·m)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateLayout {
    pub double: bool,
    pub n_agents: usize,
    pub n: usize,
    pub m: usize,
}

impl StateLayout {
    pub fn single(g: &GameSpec) -> Self {
        Self {
            double: false,
            n_agents: g.n_agents(),
            n: g.total_dim(),
            m: g.n_constraints(),
        }
    }

    pub fn double(g: &GameSpec) -> Self {
        Self { double: true, ..Self::single(g) }
    }

    pub fn dim(&self) -> usize {
        let base = self.n_agents * self.n + 2 * self.n_agents * self.m;
        if self.double {
            base + self.n
        } else {
            base
        }
    }

    pub fn v_range(&self) -> Option<std::ops::Range<usize>> {
        self.double.then_some(0..self.n)
    }

    /// The stacked estimate block: x̂ in single mode, ζ̂ in double mode.
    pub fn hat_range(&self) -> std::ops::Range<usize> {
        let start = if self.double { self.n } else { 0 };
        start..start + self.n_agents * self.n
    }

    pub fn z_range(&self) -> std::ops::Range<usize> {
        let start = self.hat_range().end;
        start..start + self.n_agents * self.m
    }

    pub fn lambda_range(&self) -> std::ops::Range<usize> {
        let start = self.z_range().end;
        start..start + self.n_agents * self.m
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `‖s_{k+1} − s_k‖/h ≤ ε_stop`.
    Converged,
    /// `t_max` reached first.
    TimeBudget,
}

#[derive(Debug, Clone)]
pub struct StopInfo {
    pub reason: StopReason,
    pub steps: usize,
    pub t_end: f64,
    /// `‖Δs‖/h` at the final step.
    pub residual: f64,
    pub wall: Duration,
}

/// Per-sample monitor channels. `lyapunov` is NaN until the oracle-based
/// post-pass fills it (the equilibrium is not known during integration).
#[derive(Debug, Clone, Default)]
pub struct Channels {
    pub kkt: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub consensus_x: Vec<f64>,
    pub consensus_lambda: Vec<f64>,
    pub coupling_violation: Vec<f64>,
    pub local_violation: Vec<f64>,
}

/// A recorded run: stride-spaced samples of the packed state (the stop state
/// is always the last sample) plus monitor channels.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub layout: StateLayout,
    pub params: FlowParams,
    /// Present for double-integrator runs; needed to recover x = ζ − Hv.
    pub gains: Option<GainsH>,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub channels: Channels,
    pub stop: StopInfo,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory records at least the initial state")
    }

    /// Decision profile x at sample k: own blocks of x̂ in single mode,
    /// `ℛζ̂ − Hv` in double mode.
    pub fn position(&self, g: &GameSpec, k: usize) -> Result<DVector<f64>> {
        position_of(g, &self.layout, self.gains.as_ref(), &self.states[k])
    }

    pub fn final_position(&self, g: &GameSpec) -> Result<DVector<f64>> {
        self.position(g, self.len() - 1)
    }

    /// Mean of the N multiplier estimates at sample k.
    pub fn lambda_mean(&self, k: usize) -> DVector<f64> {
        lambda_mean_of(&self.layout, &self.states[k])
    }

    pub fn velocity(&self, k: usize) -> Option<DVector<f64>> {
        self.layout
            .v_range()
            .map(|r| DVector::from_column_slice(&self.states[k].as_slice()[r]))
    }
}

pub(crate) fn position_of(
    g: &GameSpec,
    layout: &StateLayout,
    gains: Option<&GainsH>,
    state: &DVector<f64>,
) -> Result<DVector<f64>> {
    let flat = state.as_slice();
    let hat = &flat[layout.hat_range()];
    let mut x = DVector::zeros(layout.n);
    for i in 0..layout.n_agents {
        let r = g.block_range(i);
        x.rows_mut(r.start, r.len())
            .copy_from_slice(&hat[i * layout.n + r.start..i * layout.n + r.end]);
    }
    if let Some(vr) = layout.v_range() {
        let gains = gains.ok_or(CoreError::InvalidParameter(
            "double-mode trajectory is missing its gains".into(),
        ))?;
        let v = DVector::from_column_slice(&flat[vr]);
        x -= gains.apply(&v)?;
    }
    Ok(x)
}

pub(crate) fn lambda_mean_of(layout: &StateLayout, state: &DVector<f64>) -> DVector<f64> {
    let lam = &state.as_slice()[layout.lambda_range()];
    let mut mean = DVector::zeros(layout.m);
    for i in 0..layout.n_agents {
        for r in 0..layout.m {
            mean[r] += lam[i * layout.m + r];
        }
    }
    mean / layout.n_agents as f64
}

/// One fused projected-Euler step on the (x̂, z, λ) core shared by both
/// integrators, with preallocated work buffers. Own-action blocks take the
/// full Euler step with the *unprojected* input and are then projected onto
/// Ω_i; estimates and z step plainly; λ is projected onto the orthant.
pub(crate) struct StepCore {
    /// `(L ⊗ I_n) x̂`.
    lx: Vec<f64>,
    /// `(L ⊗ I_m) λ`.
    llam: Vec<f64>,
    /// `(L ⊗ I_m) z`.
    lz: Vec<f64>,
    /// `A_i x_i` stacked.
    ax: Vec<f64>,
    /// Unprojected own-block input `−(𝐅(x̂) + Λᵀλ + c[ℛ L_x x̂])`.
    pub u_own: DVector<f64>,
}

impl StepCore {
    pub(crate) fn new(g: &GameSpec) -> Self {
        let (n_agents, n, m) = (g.n_agents(), g.total_dim(), g.n_constraints());
        Self {
            lx: vec![0.0; n_agents * n],
            llam: vec![0.0; n_agents * m],
            lz: vec![0.0; n_agents * m],
            ax: vec![0.0; n_agents * m],
            u_own: DVector::zeros(n),
        }
    }

    /// Fill the buffers from the current state; no state is mutated.
    pub(crate) fn read_phase(
        &mut self,
        g: &GameSpec,
        gph: &CommGraph,
        c: f64,
        hat: &[f64],
        z: &[f64],
        lam: &[f64],
    ) -> Result<()> {
        let (n_agents, n, m) = (g.n_agents(), g.total_dim(), g.n_constraints());
        gph.laplacian_apply_into(n, hat, &mut self.lx);
        if m > 0 {
            gph.laplacian_apply_into(m, lam, &mut self.llam);
            gph.laplacian_apply_into(m, z, &mut self.lz);
        }
        for i in 0..n_agents {
            let rng = g.block_range(i);
            let grad = g.grad_block_slice(i, &hat[i * n..(i + 1) * n])?;
            let a = &g.agents()[i];
            for (k, idx) in rng.clone().enumerate() {
                let mut u = -(grad[k] + c * self.lx[i * n + idx]);
                for r in 0..m {
                    u -= a.coupling_a[(r, k)] * lam[i * m + r];
                }
                self.u_own[idx] = u;
            }
            for r in 0..m {
                let mut s = 0.0;
                for (k, idx) in rng.clone().enumerate() {
                    s += a.coupling_a[(r, k)] * hat[i * n + idx];
                }
                self.ax[i * m + r] = s;
            }
        }
        Ok(())
    }

    /// Advance `(x̂, z, λ)` in place by one step of size `h`.
    pub(crate) fn step(
        &mut self,
        g: &GameSpec,
        gph: &CommGraph,
        c: f64,
        h: f64,
        hat: &mut [f64],
        z: &mut [f64],
        lam: &mut [f64],
    ) -> Result<()> {
        self.read_phase(g, gph, c, hat, z, lam)?;
        let (n_agents, n, m) = (g.n_agents(), g.total_dim(), g.n_constraints());
        for i in 0..n_agents {
            let rng = g.block_range(i);
            for q in 0..n {
                if !rng.contains(&q) {
                    hat[i * n + q] -= h * c * self.lx[i * n + q];
                }
            }
            for idx in rng.clone() {
                hat[i * n + idx] += h * self.u_own[idx];
            }
            g.agents()[i]
                .local_set
                .project_in_place(&mut hat[i * n + rng.start..i * n + rng.end]);
        }
        for k in 0..n_agents * m {
            z[k] += h * self.llam[k];
        }
        for i in 0..n_agents {
            let a = &g.agents()[i];
            for r in 0..m {
                let k = i * m + r;
                let dot = self.ax[k] - a.coupling_b[r] - self.llam[k] - self.lz[k];
                lam[k] = (lam[k] + h * dot).max(0.0);
            }
        }
        Ok(())
    }

    pub(crate) fn lx(&self) -> &[f64] {
        &self.lx
    }

    pub(crate) fn llam(&self) -> &[f64] {
        &self.llam
    }

    /// Unprojected dual input `Λℛx̂ − b − L_λλ − L_λz`, stacked.
    pub(crate) fn dual_input(&self, g: &GameSpec) -> Vec<f64> {
        let m = g.n_constraints();
        let mut d = vec![0.0; g.n_agents() * m];
        for i in 0..g.n_agents() {
            for r in 0..m {
                let k = i * m + r;
                d[k] = self.ax[k] - g.agents()[i].coupling_b[r] - self.llam[k] - self.lz[k];
            }
        }
        d
    }
}

/// Channel values for one recorded sample (Lyapunov is filled later).
pub(crate) fn sample_channels(
    g: &GameSpec,
    gph: &CommGraph,
    layout: &StateLayout,
    gains: Option<&GainsH>,
    state: &DVector<f64>,
) -> Result<[f64; 5]> {
    let flat = state.as_slice();
    let x = position_of(g, layout, gains, state)?;
    let lam_mean = lambda_mean_of(layout, state);
    let kkt = g.kkt_residual(&x, &lam_mean)?;
    let hat = DVector::from_column_slice(&flat[layout.hat_range()]);
    let consensus_x = gph.laplacian_apply(layout.n, &hat)?.norm();
    let consensus_lambda = if layout.m > 0 {
        let lam = DVector::from_column_slice(&flat[layout.lambda_range()]);
        gph.laplacian_apply(layout.m, &lam)?.norm()
    } else {
        0.0
    };
    let coupling = if layout.m > 0 { g.coupling_violation_inf(&x)? } else { 0.0 };
    let local = g.local_violation_inf(&x)?;
    Ok([kkt, consensus_x, consensus_lambda, coupling, local])
}

pub(crate) fn push_sample(
    traj: &mut Trajectory,
    g: &GameSpec,
    gph: &CommGraph,
    t: f64,
    state: &DVector<f64>,
) -> Result<()> {
    let ch = sample_channels(g, gph, &traj.layout, traj.gains.as_ref(), state)?;
    traj.times.push(t);
    traj.states.push(state.clone());
    traj.channels.kkt.push(ch[0]);
    traj.channels.lyapunov.push(f64::NAN);
    traj.channels.consensus_x.push(ch[1]);
    traj.channels.consensus_lambda.push(ch[2]);
    traj.channels.coupling_violation.push(ch[3]);
    traj.channels.local_violation.push(ch[4]);
    Ok(())
}

/// Tangent-cone projection of the dual field direction at λ ≥ 0.
pub(crate) fn orthant_tangent_in_place(lam: &[f64], d: &mut [f64]) {
    ConvexSet::NonnegOrthant(lam.len()).tangent_project_in_place(lam, d);
}

/// Shared integration loop: `advance` performs one in-place step on the
/// packed state and must leave it finite; recording and the stop test are
/// identical for both integrators.
pub(crate) fn integrate<F>(
    g: &GameSpec,
    gph: &CommGraph,
    p: &FlowParams,
    mut traj: Trajectory,
    mut state: DVector<f64>,
    mut advance: F,
) -> Result<Trajectory>
where
    F: FnMut(&mut DVector<f64>) -> Result<()>,
{
    let start = std::time::Instant::now();
    push_sample(&mut traj, g, gph, 0.0, &state)?;
    let mut last_recorded_step = 0usize;
    let steps_max = p.n_steps().max(1);
    let mut prev = state.clone();
    let mut reason = StopReason::TimeBudget;
    let mut residual = f64::INFINITY;
    let mut k = 0usize;
    while k < steps_max {
        prev.copy_from(&state);
        k += 1;
        advance(&mut state)?;
        if state.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Diverged { t: k as f64 * p.h, step: k });
        }
        residual = (&state - &prev).norm() / p.h;
        if residual <= p.eps_stop {
            reason = StopReason::Converged;
            break;
        }
        if k % p.stride == 0 && k < steps_max {
            push_sample(&mut traj, g, gph, k as f64 * p.h, &state)?;
            last_recorded_step = k;
        }
    }
    // Always end on the stop state; skip only an exact duplicate (a run
    // started at an equilibrium keeps its single initial sample).
    let duplicate = last_recorded_step == 0
        && traj.states.len() == 1
        && traj.states[0] == state;
    if !duplicate && last_recorded_step != k {
        push_sample(&mut traj, g, gph, k as f64 * p.h, &state)?;
    }
    traj.stop = StopInfo {
        reason,
        steps: k,
        t_end: k as f64 * p.h,
        residual,
        wall: start.elapsed(),
    };
    Ok(traj)
}

pub(crate) fn empty_trajectory(layout: StateLayout, p: &FlowParams, gains: Option<GainsH>) -> Trajectory {
    Trajectory {
        layout,
        params: *p,
        gains,
        times: Vec::new(),
        states: Vec::new(),
        channels: Channels::default(),
        stop: StopInfo {
            reason: StopReason::TimeBudget,
            steps: 0,
            t_end: 0.0,
            residual: f64::INFINITY,
            wall: Duration::ZERO,
        },
    }
}
