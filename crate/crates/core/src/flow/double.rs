//! Double-integrator closed loop. Each agent has dynamics `ẋ_i = v_i`,
//! `v̇_i = u_i` and tracks the auxiliary coordinate `ζ_i = x_i + h_i v_i`.
//! In ζ-coordinates the loop is exactly the single-integrator one on
//! `Ω = ℝⁿ` driven by the unprojected input, cascaded with the velocity
//! filter `v̇ = H⁻¹(u − v)`; the position is recovered algebraically as
//! `x = ℛζ̂ − Hv`. Because the ζ-loop is unconstrained, bounded local sets
//! must be moved into the coupling constraints (`GameSpec::dualize_local_boxes`)
//! before simulating.

use nalgebra::DVector;

use crate::error::{CoreError, Result};
use crate::game::GameSpec;
use crate::graph::CommGraph;
use crate::sets::TAU_MEM;

use super::{
    empty_trajectory, integrate, orthant_tangent_in_place, FlowParams, StateLayout, StepCore,
    Trajectory,
};

/// Positive per-agent tracking gains `h_i` (the diagonal of H = diag(h_i I)).
#[derive(Debug, Clone, PartialEq)]
pub struct GainsH {
    per_agent: Vec<f64>,
    diag: DVector<f64>,
}

impl GainsH {
    pub fn new(g: &GameSpec, per_agent: Vec<f64>) -> Result<Self> {
        if per_agent.len() != g.n_agents() {
            return Err(CoreError::DimensionMismatch {
                context: "tracking gains",
                expected: g.n_agents(),
                got: per_agent.len(),
            });
        }
        if let Some(&bad) = per_agent.iter().find(|&&h| !(h.is_finite() && h > 0.0)) {
            return Err(CoreError::InvalidParameter(format!(
                "tracking gains must be finite and positive, got {bad}"
            )));
        }
        let mut diag = DVector::zeros(g.total_dim());
        for (i, &h) in per_agent.iter().enumerate() {
            let r = g.block_range(i);
            diag.rows_mut(r.start, r.len()).fill(h);
        }
        Ok(Self { per_agent, diag })
    }

    pub fn uniform(g: &GameSpec, h: f64) -> Result<Self> {
        Self::new(g, vec![h; g.n_agents()])
    }

    pub fn per_agent(&self) -> &[f64] {
        &self.per_agent
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    /// H v (coordinatewise h_i on agent i's block).
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v)?;
        Ok(v.component_mul(&self.diag))
    }

    /// H⁻¹ v.
    pub fn apply_inv(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v)?;
        Ok(v.component_div(&self.diag))
    }

    fn check(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.diag.len() {
            return Err(CoreError::DimensionMismatch {
                context: "gain application",
                expected: self.diag.len(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// ζ = x + Hv.
pub fn to_zeta(x: &DVector<f64>, v: &DVector<f64>, gains: &GainsH) -> Result<DVector<f64>> {
    gains.check(x)?;
    Ok(x + gains.apply(v)?)
}

/// x = ζ − Hv.
pub fn from_zeta(zeta: &DVector<f64>, v: &DVector<f64>, gains: &GainsH) -> Result<DVector<f64>> {
    gains.check(zeta)?;
    Ok(zeta - gains.apply(v)?)
}

/// State of the double-integrator loop. `x` and `v` are the physical
/// position and velocity; `zetahat` stacks each agent's estimate of the whole
/// auxiliary vector ζ = x + Hv (own blocks must agree with x + Hv exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub zetahat: DVector<f64>,
    pub z: DVector<f64>,
    pub lam: DVector<f64>,
}

impl DoubleState {
    pub fn new(
        g: &GameSpec,
        gains: &GainsH,
        x: DVector<f64>,
        v: DVector<f64>,
        zetahat: DVector<f64>,
        z: DVector<f64>,
        lam: DVector<f64>,
    ) -> Result<Self> {
        let s = Self { x, v, zetahat, z, lam };
        s.validate(g, gains)?;
        Ok(s)
    }

    /// Default initialization: estimates of others, z, and λ start at zero;
    /// own ζ-blocks are consistent with (x0, v0) by construction.
    pub fn from_positions(
        g: &GameSpec,
        gains: &GainsH,
        x0: &DVector<f64>,
        v0: &DVector<f64>,
    ) -> Result<Self> {
        let zeta = to_zeta(x0, v0, gains)?;
        let others = DVector::zeros(g.n_agents() * g.total_dim() - g.total_dim());
        let zetahat = g.embed(&zeta, &others)?;
        let m = g.n_constraints();
        Ok(Self {
            x: x0.clone(),
            v: v0.clone(),
            zetahat,
            z: DVector::zeros(g.n_agents() * m),
            lam: DVector::zeros(g.n_agents() * m),
        })
    }

    pub fn validate(&self, g: &GameSpec, gains: &GainsH) -> Result<()> {
        let (n_agents, n, m) = (g.n_agents(), g.total_dim(), g.n_constraints());
        for (ctx, len, want) in [
            ("DoubleState.x", self.x.len(), n),
            ("DoubleState.v", self.v.len(), n),
            ("DoubleState.zetahat", self.zetahat.len(), n_agents * n),
            ("DoubleState.z", self.z.len(), n_agents * m),
            ("DoubleState.lam", self.lam.len(), n_agents * m),
        ] {
            if len != want {
                return Err(CoreError::DimensionMismatch { context: ctx, expected: want, got: len });
            }
        }
        let zeta = to_zeta(&self.x, &self.v, gains)?;
        let own = g.select_own(&self.zetahat)?;
        if (own - zeta).amax() > TAU_MEM {
            return Err(CoreError::InvalidParameter(
                "own ζ-estimate blocks must equal x + Hv".into(),
            ));
        }
        if let Some((k, &v)) = self.lam.iter().enumerate().find(|(_, &v)| v < -TAU_MEM) {
            return Err(CoreError::NotInSet { index: k, violation: -v });
        }
        Ok(())
    }

    pub(crate) fn pack(&self, layout: &StateLayout) -> DVector<f64> {
        let mut s = DVector::zeros(layout.dim());
        s.rows_mut(0, self.v.len()).copy_from(&self.v);
        let hr = layout.hat_range();
        s.rows_mut(hr.start, hr.len()).copy_from(&self.zetahat);
        let zr = layout.z_range();
        s.rows_mut(zr.start, zr.len()).copy_from(&self.z);
        let lr = layout.lambda_range();
        s.rows_mut(lr.start, lr.len()).copy_from(&self.lam);
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

fn require_full_sets(g: &GameSpec) -> Result<()> {
    for (i, a) in g.agents().iter().enumerate() {
        if !a.local_set.is_full_space() {
            return Err(CoreError::BoundedLocalSet { agent: i + 1 });
        }
    }
    Ok(())
}

/// Right-hand side of the closed loop at `s`, in state shape: the `x` slot
/// carries ẋ = v, the `v` slot carries v̇ = H⁻¹(u − v), and the ζ-loop slots
/// carry the unconstrained single-integrator field driven by the raw input.
pub fn vector_field_double(
    g: &GameSpec,
    gph: &CommGraph,
    c: f64,
    gains: &GainsH,
    s: &DoubleState,
) -> Result<DoubleState> {
    check_graph(g, gph)?;
    require_full_sets(g)?;
    s.validate(g, gains)?;
    let (n_agents, n) = (g.n_agents(), g.total_dim());
    let mut core = StepCore::new(g);
    core.read_phase(g, gph, c, s.zetahat.as_slice(), s.z.as_slice(), s.lam.as_slice())?;

    let mut hat_dot: Vec<f64> = core.lx().iter().map(|&v| -c * v).collect();
    for i in 0..n_agents {
        for idx in g.block_range(i) {
            hat_dot[i * n + idx] = core.u_own[idx];
        }
    }
    let v_dot = gains.apply_inv(&(&core.u_own - &s.v))?;
    let z_dot = core.llam().to_vec();
    let mut lam_dot = core.dual_input(g);
    orthant_tangent_in_place(s.lam.as_slice(), &mut lam_dot);

    Ok(DoubleState {
        x: s.v.clone(),
        v: v_dot,
        zetahat: DVector::from_vec(hat_dot),
        z: DVector::from_vec(z_dot),
        lam: DVector::from_vec(lam_dot),
    })
}

/// Forward-Euler integration of the cascade until the combined update norm
/// `‖Δ(v, ζ̂, z, λ)‖/h` drops below ε_stop or the time budget runs out.
///
/// Per step the (ζ̂, z, λ) loop advances first with the input computed from
/// the pre-step state, then the velocity filter `v ← v + h·H⁻¹(u − v)` uses
/// the same input, so the recovered position satisfies
/// `x⁺ = ℛζ̂⁺ − Hv⁺ = x + h·v` up to roundoff.
pub fn simulate_double(
    g: &GameSpec,
    gph: &CommGraph,
    p: &FlowParams,
    gains: &GainsH,
    s0: &DoubleState,
) -> Result<Trajectory> {
    check_graph(g, gph)?;
    require_full_sets(g)?;
    s0.validate(g, gains)?;
    let layout = StateLayout::double(g);
    let mut state = s0.pack(&layout);
    for k in layout.lambda_range() {
        state[k] = state[k].max(0.0);
    }
    let traj = empty_trajectory(layout, p, Some(gains.clone()));
    let mut core = StepCore::new(g);
    let n = g.total_dim();
    let hat_len = layout.hat_range().len();
    let z_len = layout.z_range().len();
    let ranges: Vec<(std::ops::Range<usize>, f64)> = (0..g.n_agents())
        .map(|i| (g.block_range(i), gains.per_agent[i]))
        .collect();
    integrate(g, gph, p, traj, state, move |s| {
        let flat = s.as_mut_slice();
        let (v, rest) = flat.split_at_mut(n);
        let (hat, rest) = rest.split_at_mut(hat_len);
        let (z, lam) = rest.split_at_mut(z_len);
        core.step(g, gph, p.c, p.h, hat, z, lam)?;
        // u_own still holds the pre-step input; v was untouched by the core
        // step, so this is a plain Euler update of the velocity filter.
        for (r, h_i) in &ranges {
            for idx in r.clone() {
                v[idx] += p.h * (core.u_own[idx] - v[idx]) / h_i;
            }
        }
        Ok(())
    })
}
