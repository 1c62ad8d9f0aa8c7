//! Single-integrator closed loop: each agent steers its action along the
//! projected input `Π_{Ω_i}(x_i, −(∇_{x_i}J_i(x_i, x̂ⁱ_{−i}) + A_iᵀλ_i +
//! c[ℛL_x x̂]_i))`, flows its estimates by consensus, and runs the local
//! primal-dual bookkeeping `ż = L_λλ`, `λ̇ = Π_{≥0}(λ, Λℛx̂ − b − L_λλ −
//! L_λz)`. Discretized by projected forward Euler: full Euler step with the
//! unprojected input, then exact projection of own blocks and multipliers.

use nalgebra::DVector;

use crate::error::{CoreError, Result};
use crate::game::GameSpec;
use crate::graph::CommGraph;
use crate::sets::TAU_MEM;

use super::{
    empty_trajectory, integrate, orthant_tangent_in_place, FlowParams, StateLayout, StepCore,
    Trajectory,
};

/// State of the single-integrator loop: stacked estimate vectors x̂ (own
/// blocks are the true actions), auxiliary z, and local multipliers λ.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleState {
    pub xhat: DVector<f64>,
    pub z: DVector<f64>,
    pub lam: DVector<f64>,
}

impl SingleState {
    pub fn new(g: &GameSpec, xhat: DVector<f64>, z: DVector<f64>, lam: DVector<f64>) -> Result<Self> {
        let s = Self { xhat, z, lam };
        s.validate(g)?;
        Ok(s)
    }

    /// Default initialization: own actions are `x0` projected onto Ω_i,
    /// estimates of others, z, and λ start at zero.
    pub fn from_positions(g: &GameSpec, x0: &DVector<f64>) -> Result<Self> {
        if x0.len() != g.total_dim() {
            return Err(CoreError::DimensionMismatch {
                context: "initial positions",
                expected: g.total_dim(),
                got: x0.len(),
            });
        }
        let (n_agents, n, m) = (g.n_agents(), g.total_dim(), g.n_constraints());
        let mut xhat = DVector::zeros(n_agents * n);
        for i in 0..n_agents {
            let r = g.block_range(i);
            let own = g.agents()[i].local_set.project(&x0.rows(r.start, r.len()).into_owned())?;
            xhat.rows_mut(i * n + r.start, r.len()).copy_from(&own);
        }
        Ok(Self {
            xhat,
            z: DVector::zeros(n_agents * m),
            lam: DVector::zeros(n_agents * m),
        })
    }

    pub fn validate(&self, g: &GameSpec) -> Result<()> {
        let (n_agents, n, m) = (g.n_agents(), g.total_dim(), g.n_constraints());
        if self.xhat.len() != n_agents * n {
            return Err(CoreError::DimensionMismatch {
                context: "SingleState.xhat",
                expected: n_agents * n,
                got: self.xhat.len(),
            });
        }
        for (field, v) in [("z", &self.z), ("lam", &self.lam)] {
            if v.len() != n_agents * m {
                return Err(CoreError::DimensionMismatch {
                    context: if field == "z" { "SingleState.z" } else { "SingleState.lam" },
                    expected: n_agents * m,
                    got: v.len(),
                });
            }
        }
        let flat = self.xhat.as_slice();
        for i in 0..n_agents {
            let r = g.block_range(i);
            let own = &flat[i * n + r.start..i * n + r.end];
            let viol = g.agents()[i].local_set.violation_inf(own);
            if viol > TAU_MEM {
                return Err(CoreError::NotInSet { index: i, violation: viol });
            }
        }
        if let Some((k, &v)) = self.lam.iter().enumerate().find(|(_, &v)| v < -TAU_MEM) {
            return Err(CoreError::NotInSet { index: k, violation: -v });
        }
        Ok(())
    }

    pub(crate) fn pack(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.xhat.len() + self.z.len() + self.lam.len());
        s.rows_mut(0, self.xhat.len()).copy_from(&self.xhat);
        s.rows_mut(self.xhat.len(), self.z.len()).copy_from(&self.z);
        s.rows_mut(self.xhat.len() + self.z.len(), self.lam.len()).copy_from(&self.lam);
        s
    }

}

fn check_graph(g: &GameSpec, gph: &CommGraph) -> Result<()> {
    if gph.n_agents() != g.n_agents() {
        return Err(CoreError::DimensionMismatch {
            context: "graph/game agent count",
            expected: g.n_agents(),
            got: gph.n_agents(),
        });
    }
    Ok(())
}

/// Right-hand side of the closed loop at `s`, in state shape: own blocks are
/// projected onto the tangent cone of Ω_i, the dual block onto the tangent
/// cone of the orthant; estimate and z blocks are unconstrained.
pub fn vector_field_single(
    g: &GameSpec,
    gph: &CommGraph,
    c: f64,
    s: &SingleState,
) -> Result<SingleState> {
    check_graph(g, gph)?;
    s.validate(g)?;
    let (n_agents, n) = (g.n_agents(), g.total_dim());
    let mut core = StepCore::new(g);
    core.read_phase(g, gph, c, s.xhat.as_slice(), s.z.as_slice(), s.lam.as_slice())?;

    let mut hat_dot: Vec<f64> = core.lx().iter().map(|&v| -c * v).collect();
    let flat = s.xhat.as_slice();
    for i in 0..n_agents {
        let r = g.block_range(i);
        for idx in r.clone() {
            hat_dot[i * n + idx] = core.u_own[idx];
        }
        let own = &flat[i * n + r.start..i * n + r.end];
        g.agents()[i]
            .local_set
            .tangent_project_in_place(own, &mut hat_dot[i * n + r.start..i * n + r.end]);
    }
    let z_dot = core.llam().to_vec();
    let mut lam_dot = core.dual_input(g);
    orthant_tangent_in_place(s.lam.as_slice(), &mut lam_dot);

    Ok(SingleState {
        xhat: DVector::from_vec(hat_dot),
        z: DVector::from_vec(z_dot),
        lam: DVector::from_vec(lam_dot),
    })
}

/// One projected-Euler step of size `p.h`. The result satisfies the state
/// invariants exactly (post-projection).
pub fn step_single(g: &GameSpec, gph: &CommGraph, p: &FlowParams, s: &SingleState) -> Result<SingleState> {
    check_graph(g, gph)?;
    s.validate(g)?;
    let mut xhat = s.xhat.clone();
    let mut z = s.z.clone();
    let mut lam = s.lam.clone();
    let mut core = StepCore::new(g);
    core.step(
        g,
        gph,
        p.c,
        p.h,
        xhat.as_mut_slice(),
        z.as_mut_slice(),
        lam.as_mut_slice(),
    )?;
    for v in xhat.iter().chain(z.iter()).chain(lam.iter()) {
        if !v.is_finite() {
            return Err(CoreError::Diverged { t: p.h, step: 1 });
        }
    }
    Ok(SingleState { xhat, z, lam })
}

/// Iterate `step_single` until `‖s_{k+1}−s_k‖/h ≤ ε_stop` or `t ≥ t_max`,
/// recording state and monitor channels every `stride` steps (the stop state
/// is always the final sample).
pub fn simulate_single(
    g: &GameSpec,
    gph: &CommGraph,
    p: &FlowParams,
    s0: &SingleState,
) -> Result<Trajectory> {
    check_graph(g, gph)?;
    s0.validate(g)?;
    let layout = StateLayout::single(g);
    let mut state = s0.pack();
    exact_project_initial(g, &layout, &mut state);
    let traj = empty_trajectory(layout, p, None);
    let mut core = StepCore::new(g);
    let hat_end = layout.hat_range().end;
    let z_len = layout.z_range().len();
    integrate(g, gph, p, traj, state, move |s| {
        let flat = s.as_mut_slice();
        let (hat, rest) = flat.split_at_mut(hat_end);
        let (z, lam) = rest.split_at_mut(z_len);
        core.step(g, gph, p.c, p.h, hat, z, lam)
    })
}

/// Make the invariants exact at t = 0: constructors tolerate a τ_mem overhang,
/// forward invariance from here on is exact.
pub(crate) fn exact_project_initial(g: &GameSpec, layout: &StateLayout, state: &mut DVector<f64>) {
    let n = layout.n;
    let hat_start = layout.hat_range().start;
    let flat = state.as_mut_slice();
    for i in 0..layout.n_agents {
        let r = g.block_range(i);
        g.agents()[i]
            .local_set
            .project_in_place(&mut flat[hat_start + i * n + r.start..hat_start + i * n + r.end]);
    }
    for k in layout.lambda_range() {
        flat[k] = flat[k].max(0.0);
    }
}
