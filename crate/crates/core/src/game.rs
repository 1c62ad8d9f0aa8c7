//! The generalized game: agent costs, local sets, affine coupling
//! constraints, and the maps built on top of them — the pseudo-gradient
//! `F(x) = col(∇_{x_i} J_i(x))`, its extension
//! `𝐅(x̂) = col(∇_{x_i} J_i(x_i, x̂ⁱ_{−i}))` evaluated on per-agent estimate
//! vectors, the selection operators ℛ/𝒮 realized as index maps, the KKT
//! residual certifying a variational equilibrium, and estimation of the
//! monotonicity/Lipschitz constants (μ, θ₀, θ) that parameterize the
//! convergence condition.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::sets::{ConvexSet, TAU_MEM};

/// Gradient callback: maps a full decision profile `y ∈ ℝⁿ` to the owning
/// agent's partial gradient `∇_{x_i} J_i(y) ∈ ℝ^{n_i}`.
pub type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Quadratic cost data `J_i(x) = ½ xᵀ Q_i x + q_iᵀ x`.
///
/// Only agent i's block-row of `Q_i` (and block of `q_i`) enters the
/// dynamics, via `∇_{x_i} J_i = [Q_i x + q_i]_{rows of agent i}`; the full
/// matrix is kept because exact constants come from the stacked Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    /// `n×n` cost matrix; the agent's own diagonal block must be symmetric
    /// positive definite (convexity in the own variable).
    pub q_mat: DMatrix<f64>,
    /// Linear term, length `n`.
    pub q_vec: DVector<f64>,
}

/// How an agent exposes its partial gradient: quadratic data (configurable
/// from files, exact constants available) or an opaque callback (library
/// API only; constants are Monte-Carlo estimates).
#[derive(Clone)]
pub enum CostGradient {
    Quadratic(QuadraticCost),
    Callback(GradFn),
}

impl fmt::Debug for CostGradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostGradient::Quadratic(q) => f.debug_tuple("Quadratic").field(q).finish(),
            CostGradient::Callback(_) => f.write_str("Callback(..)"),
        }
    }
}

/// One agent: decision dimension, cost gradient, local set `Ω_i`, and its
/// slice `A_i ∈ ℝ^{m×n_i}`, `b_i ∈ ℝ^m` of the shared affine constraint.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub dim: usize,
    pub cost: CostGradient,
    pub local_set: ConvexSet,
    pub coupling_a: DMatrix<f64>,
    pub coupling_b: DVector<f64>,
}

/// Monotonicity and Lipschitz constants of the game maps: μ for `F`,
/// θ₀ for `F`, θ for the extended map `𝐅`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConstants {
    pub mu: f64,
    pub theta0: f64,
    pub theta: f64,
}

/// An immutable generalized game among `N` agents with shared constraint
/// `Ax ≤ b`, `A = [A_1 … A_N]`, `b = Σ_i b_i`.
#[derive(Debug, Clone)]
pub struct GameSpec {
    agents: Vec<AgentSpec>,
    /// Start offset of each agent's block in ℝⁿ; `offsets[N] = n`.
    offsets: Vec<usize>,
    total_dim: usize,
    n_constraints: usize,
    omega: ConvexSet,
    a_global: DMatrix<f64>,
    b_global: DVector<f64>,
    constants: Option<GameConstants>,
}

impl GameSpec {
    /// Validate agent data and assemble the aggregate constraint. A single
    /// agent is allowed (the game degenerates to an optimization problem);
    /// the communication graph, not the game, requires `N ≥ 2`.
    pub fn new(agents: Vec<AgentSpec>) -> Result<Self> {
        if agents.is_empty() {
            return Err(CoreError::InvalidGame("game needs at least one agent".into()));
        }
        let mut offsets = Vec::with_capacity(agents.len() + 1);
        let mut total = 0usize;
        for a in &agents {
            if a.dim == 0 {
                return Err(CoreError::InvalidGame("agent dimension must be positive".into()));
            }
            offsets.push(total);
            total += a.dim;
        }
        offsets.push(total);

        let m = agents[0].coupling_b.len();
        for (i, a) in agents.iter().enumerate() {
            if a.coupling_b.len() != m || a.coupling_a.nrows() != m {
                return Err(CoreError::InvalidGame(format!(
                    "agent {} has {} coupling rows, expected {m}",
                    i + 1,
                    a.coupling_a.nrows().max(a.coupling_b.len())
                )));
            }
            if a.coupling_a.ncols() != a.dim {
                return Err(CoreError::InvalidGame(format!(
                    "agent {} coupling matrix has {} columns for dimension {}",
                    i + 1,
                    a.coupling_a.ncols(),
                    a.dim
                )));
            }
            if a.local_set.dim() != a.dim {
                return Err(CoreError::InvalidGame(format!(
                    "agent {} local set has dimension {}, expected {}",
                    i + 1,
                    a.local_set.dim(),
                    a.dim
                )));
            }
            if let CostGradient::Quadratic(q) = &a.cost {
                validate_quadratic(q, total, offsets[i], a.dim, i)?;
            }
        }

        let mut a_global = DMatrix::zeros(m, total);
        let mut b_global = DVector::zeros(m);
        for (i, a) in agents.iter().enumerate() {
            a_global.view_mut((0, offsets[i]), (m, a.dim)).copy_from(&a.coupling_a);
            b_global += &a.coupling_b;
        }
        let omega = ConvexSet::Product(agents.iter().map(|a| a.local_set.clone()).collect());

        Ok(Self {
            agents,
            offsets,
            total_dim: total,
            n_constraints: m,
            omega,
            a_global,
            b_global,
            constants: None,
        })
    }

    /// Attach user-supplied or precomputed constants (μ, θ₀, θ).
    pub fn with_constants(mut self, constants: GameConstants) -> Self {
        self.constants = Some(constants);
        self
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Total decision dimension `n = Σ n_i`.
    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Number of shared affine constraints `m`.
    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    /// Index range of agent `i`'s block inside ℝⁿ.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// The product set `Ω = Ω_1 × … × Ω_N`.
    pub fn omega(&self) -> &ConvexSet {
        &self.omega
    }

    /// Aggregate constraint matrix `A = [A_1 … A_N]`.
    pub fn a_global(&self) -> &DMatrix<f64> {
        &self.a_global
    }

    /// Aggregate right-hand side `b = Σ_i b_i`.
    pub fn b_global(&self) -> &DVector<f64> {
        &self.b_global
    }

    pub fn constants(&self) -> Option<GameConstants> {
        self.constants
    }

    /// True when every local set is the full space (the standing assumption
    /// of the double-integrator dynamics).
    pub fn all_sets_full(&self) -> bool {
        self.agents.iter().all(|a| a.local_set.is_full_space())
    }

    /// Agent i's partial gradient at a full profile given as a slice (the
    /// integrator hands in views of its packed state).
    pub(crate) fn grad_block_slice(&self, i: usize, profile: &[f64]) -> Result<DVector<f64>> {
        let a = &self.agents[i];
        match &a.cost {
            CostGradient::Quadratic(q) => {
                let pv = nalgebra::DVectorView::from_slice(profile, self.total_dim);
                Ok(q.q_mat.rows(self.offsets[i], a.dim) * pv
                    + q.q_vec.rows(self.offsets[i], a.dim))
            }
            CostGradient::Callback(f) => {
                let g = f(&DVector::from_column_slice(profile));
                if g.len() != a.dim {
                    return Err(CoreError::DimensionMismatch {
                        context: "cost gradient callback",
                        expected: a.dim,
                        got: g.len(),
                    });
                }
                Ok(g)
            }
        }
    }

    /// Pseudo-gradient `F(x) = col(∇_{x_i} J_i(x_i, x_{−i}))`.
    pub fn pseudo_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.total_dim {
            return Err(CoreError::DimensionMismatch {
                context: "pseudo_gradient",
                expected: self.total_dim,
                got: x.len(),
            });
        }
        let mut out = DVector::zeros(self.total_dim);
        for i in 0..self.agents.len() {
            out.rows_mut(self.offsets[i], self.agents[i].dim)
                .copy_from(&self.grad_block_slice(i, x.as_slice())?);
        }
        Ok(out)
    }

    /// Extended pseudo-gradient `𝐅(x̂) ∈ ℝⁿ`: agent i's partial gradient
    /// evaluated at its own estimate vector `x̂ⁱ ∈ ℝⁿ` (whose i-th block is
    /// the agent's true action).
    pub fn extended_pseudo_gradient(&self, xhat: &DVector<f64>) -> Result<DVector<f64>> {
        let nn = self.agents.len() * self.total_dim;
        if xhat.len() != nn {
            return Err(CoreError::DimensionMismatch {
                context: "extended_pseudo_gradient",
                expected: nn,
                got: xhat.len(),
            });
        }
        let mut out = DVector::zeros(self.total_dim);
        let flat = xhat.as_slice();
        for i in 0..self.agents.len() {
            let estimate = &flat[i * self.total_dim..(i + 1) * self.total_dim];
            out.rows_mut(self.offsets[i], self.agents[i].dim)
                .copy_from(&self.grad_block_slice(i, estimate)?);
        }
        Ok(out)
    }

    /// `ℛ x̂`: each agent's own block read out of its estimate vector.
    pub fn select_own(&self, xhat: &DVector<f64>) -> Result<DVector<f64>> {
        let (n_agents, n) = (self.agents.len(), self.total_dim);
        if xhat.len() != n_agents * n {
            return Err(CoreError::DimensionMismatch {
                context: "select_own",
                expected: n_agents * n,
                got: xhat.len(),
            });
        }
        let mut out = DVector::zeros(n);
        for i in 0..n_agents {
            let r = self.block_range(i);
            out.rows_mut(r.start, r.len())
                .copy_from(&xhat.rows(i * n + r.start, r.len()));
        }
        Ok(out)
    }

    /// `𝒮 x̂ ∈ ℝ^{(N−1)n}`: the estimate blocks of other agents, agent-major
    /// and skipping each agent's own block.
    pub fn select_others(&self, xhat: &DVector<f64>) -> Result<DVector<f64>> {
        let (n_agents, n) = (self.agents.len(), self.total_dim);
        if xhat.len() != n_agents * n {
            return Err(CoreError::DimensionMismatch {
                context: "select_others",
                expected: n_agents * n,
                got: xhat.len(),
            });
        }
        let mut out = DVector::zeros((n_agents - 1) * n);
        let mut at = 0;
        for i in 0..n_agents {
            for j in 0..n_agents {
                if j == i {
                    continue;
                }
                let r = self.block_range(j);
                out.rows_mut(at, r.len()).copy_from(&xhat.rows(i * n + r.start, r.len()));
                at += r.len();
            }
        }
        Ok(out)
    }

    /// Rebuild `x̂ = ℛᵀx + 𝒮ᵀ(𝒮x̂)` from own actions and others' estimates.
    pub fn embed(&self, x: &DVector<f64>, others: &DVector<f64>) -> Result<DVector<f64>> {
        let (n_agents, n) = (self.agents.len(), self.total_dim);
        if x.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "embed (own part)",
                expected: n,
                got: x.len(),
            });
        }
        if others.len() != (n_agents - 1) * n {
            return Err(CoreError::DimensionMismatch {
                context: "embed (others part)",
                expected: (n_agents - 1) * n,
                got: others.len(),
            });
        }
        let mut out = DVector::zeros(n_agents * n);
        let mut at = 0;
        for i in 0..n_agents {
            for j in 0..n_agents {
                let r = self.block_range(j);
                if j == i {
                    out.rows_mut(i * n + r.start, r.len()).copy_from(&x.rows(r.start, r.len()));
                } else {
                    out.rows_mut(i * n + r.start, r.len()).copy_from(&others.rows(at, r.len()));
                    at += r.len();
                }
            }
        }
        Ok(out)
    }

    /// `A x = Σ_i A_i x_i`.
    pub fn coupling_apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.total_dim {
            return Err(CoreError::DimensionMismatch {
                context: "coupling_apply",
                expected: self.total_dim,
                got: x.len(),
            });
        }
        let mut out = DVector::zeros(self.n_constraints);
        for (i, a) in self.agents.iter().enumerate() {
            out += &a.coupling_a * x.rows(self.offsets[i], a.dim);
        }
        Ok(out)
    }

    /// `Aᵀ λ = col(A_iᵀ λ)` for a single shared multiplier `λ ∈ ℝᵐ`.
    pub fn coupling_adjoint(&self, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        if lambda.len() != self.n_constraints {
            return Err(CoreError::DimensionMismatch {
                context: "coupling_adjoint",
                expected: self.n_constraints,
                got: lambda.len(),
            });
        }
        let mut out = DVector::zeros(self.total_dim);
        for (i, a) in self.agents.iter().enumerate() {
            out.rows_mut(self.offsets[i], a.dim)
                .copy_from(&(a.coupling_a.transpose() * lambda));
        }
        Ok(out)
    }

    /// `‖max(Ax − b, 0)‖_∞`: worst coupling-constraint violation.
    pub fn coupling_violation_inf(&self, x: &DVector<f64>) -> Result<f64> {
        let slack = self.coupling_apply(x)? - &self.b_global;
        Ok(slack.iter().fold(0.0f64, |acc, &s| acc.max(s.max(0.0))))
    }

    /// Worst local-set violation over all agents (∞-norm distance to Ω_i).
    pub fn local_violation_inf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.total_dim {
            return Err(CoreError::DimensionMismatch {
                context: "local_violation_inf",
                expected: self.total_dim,
                got: x.len(),
            });
        }
        Ok(self.omega.violation_inf(x.as_slice()))
    }

    /// The stacked pseudo-gradient Jacobian `G` and offset `g` such that
    /// `F(x) = Gx + g`, available iff every agent's cost is quadratic.
    pub fn quadratic_parts(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let mut g_mat = DMatrix::zeros(self.total_dim, self.total_dim);
        let mut g_vec = DVector::zeros(self.total_dim);
        for (i, a) in self.agents.iter().enumerate() {
            match &a.cost {
                CostGradient::Quadratic(q) => {
                    g_mat
                        .view_mut((self.offsets[i], 0), (a.dim, self.total_dim))
                        .copy_from(&q.q_mat.rows(self.offsets[i], a.dim));
                    g_vec
                        .rows_mut(self.offsets[i], a.dim)
                        .copy_from(&q.q_vec.rows(self.offsets[i], a.dim));
                }
                CostGradient::Callback(_) => return None,
            }
        }
        Some((g_mat, g_vec))
    }

    /// Monotonicity/Lipschitz constants: exact spectral values for quadratic
    /// games, seeded Monte-Carlo difference quotients otherwise. The sampled
    /// estimates are post-processed so that `μ̂ ≤ θ̂ ≤ θ̂₀` always holds.
    pub fn estimate_constants(
        &self,
        sample_count: usize,
        radius: f64,
        seed: u64,
    ) -> Result<GameConstants> {
        if sample_count < 2 {
            return Err(CoreError::InvalidParameter(format!(
                "constant estimation needs at least 2 sample pairs, got {sample_count}"
            )));
        }
        if !(radius > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "degenerate sampling radius {radius}"
            )));
        }

        if let Some((g_mat, _)) = self.quadratic_parts() {
            let sym = (&g_mat + g_mat.transpose()) * 0.5;
            let mu = sym
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &e| a.min(e));
            let theta0 = g_mat
                .singular_values()
                .iter()
                .fold(0.0f64, |a, &s| a.max(s));
            let theta = (0..self.agents.len())
                .map(|i| {
                    let block_row = g_mat.rows(self.offsets[i], self.agents[i].dim).into_owned();
                    block_row.singular_values().iter().fold(0.0f64, |a, &s| a.max(s))
                })
                .fold(0.0f64, f64::max);
            return Ok(GameConstants { mu, theta0, theta });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n_agents, n) = (self.agents.len(), self.total_dim);
        let sample = |rng: &mut ChaCha8Rng, dim: usize| {
            DVector::from_fn(dim, |_, _| rng.random_range(-radius..radius))
        };
        let mut mu_hat = f64::INFINITY;
        let mut theta0_raw = 0.0f64;
        let mut theta_raw = 0.0f64;
        for _ in 0..sample_count {
            let x = sample(&mut rng, n);
            let y = sample(&mut rng, n);
            let d = &x - &y;
            if d.norm() > 1e-9 * radius {
                let df = self.pseudo_gradient(&x)? - self.pseudo_gradient(&y)?;
                mu_hat = mu_hat.min(d.dot(&df) / d.norm_squared());
                theta0_raw = theta0_raw.max(df.norm() / d.norm());

                // Consensus embedding 1⊗x: 𝐅 restricted to the consensus
                // subspace reproduces F, so these pairs also bound θ.
                let xc = consensus_embed(n_agents, &x);
                let yc = consensus_embed(n_agents, &y);
                let dfc = self.extended_pseudo_gradient(&xc)?
                    - self.extended_pseudo_gradient(&yc)?;
                theta_raw = theta_raw.max(dfc.norm() / (&xc - &yc).norm());
            }

            let xh = sample(&mut rng, n_agents * n);
            let yh = sample(&mut rng, n_agents * n);
            let dh = &xh - &yh;
            if dh.norm() > 1e-9 * radius {
                let dfh = self.extended_pseudo_gradient(&xh)?
                    - self.extended_pseudo_gradient(&yh)?;
                theta_raw = theta_raw.max(dfh.norm() / dh.norm());
            }
        }
        let theta = theta_raw.max(mu_hat);
        Ok(GameConstants {
            mu: mu_hat,
            theta0: theta0_raw.max(theta),
            theta,
        })
    }

    /// Natural residual of the KKT system:
    /// `‖x − proj_Ω(x − F(x) − Aᵀλ)‖ + ‖λ − proj_{≥0}(λ + Ax − b)‖`.
    /// Zero exactly at a v-GNE primal-dual pair.
    pub fn kkt_residual(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64> {
        if x.len() != self.total_dim {
            return Err(CoreError::DimensionMismatch {
                context: "kkt_residual (primal)",
                expected: self.total_dim,
                got: x.len(),
            });
        }
        if lambda.len() != self.n_constraints {
            return Err(CoreError::DimensionMismatch {
                context: "kkt_residual (dual)",
                expected: self.n_constraints,
                got: lambda.len(),
            });
        }
        if let Some((k, &v)) = lambda.iter().enumerate().find(|(_, &v)| v < -TAU_MEM) {
            return Err(CoreError::NotInSet {
                index: k,
                violation: -v,
            });
        }
        let mut primal_arg = x - self.pseudo_gradient(x)?;
        if self.n_constraints > 0 {
            primal_arg -= self.coupling_adjoint(lambda)?;
        }
        let primal = (x - self.omega.project(&primal_arg)?).norm();
        let dual = if self.n_constraints > 0 {
            let slack = lambda + self.coupling_apply(x)? - &self.b_global;
            let projected = slack.map(|v| v.max(0.0));
            (lambda - projected).norm()
        } else {
            0.0
        };
        Ok(primal + dual)
    }

    /// Rewrite every non-full local set as coupling rows and relax Ω_i to the
    /// full space; the feasible set and the v-GNE are unchanged, only the
    /// multiplier layout grows. Appended rows are agent-major, coordinate
    /// ascending, lower bound before upper; each bound lands in the owning
    /// agent's `b_i` (other agents contribute zero rows).
    pub fn dualize_local_boxes(&self) -> Result<GameSpec> {
        struct Row {
            agent: usize,
            coord: usize,
            sign: f64,
            bound: f64,
        }
        let mut rows = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            if a.local_set.is_full_space() {
                continue;
            }
            let (lower, upper) = a.local_set.coordinate_bounds();
            for k in 0..a.dim {
                if lower[k].is_finite() {
                    rows.push(Row { agent: i, coord: k, sign: -1.0, bound: -lower[k] });
                }
                if upper[k].is_finite() {
                    rows.push(Row { agent: i, coord: k, sign: 1.0, bound: upper[k] });
                }
            }
        }
        let extra = rows.len();
        let m_new = self.n_constraints + extra;
        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut coupling_a = DMatrix::zeros(m_new, a.dim);
                coupling_a
                    .view_mut((0, 0), (self.n_constraints, a.dim))
                    .copy_from(&a.coupling_a);
                let mut coupling_b = DVector::zeros(m_new);
                coupling_b
                    .rows_mut(0, self.n_constraints)
                    .copy_from(&a.coupling_b);
                for (r, row) in rows.iter().enumerate() {
                    if row.agent == i {
                        coupling_a[(self.n_constraints + r, row.coord)] = row.sign;
                        coupling_b[self.n_constraints + r] = row.bound;
                    }
                }
                AgentSpec {
                    dim: a.dim,
                    cost: a.cost.clone(),
                    local_set: ConvexSet::FullSpace(a.dim),
                    coupling_a,
                    coupling_b,
                }
            })
            .collect();
        let mut g = GameSpec::new(agents)?;
        g.constants = self.constants;
        Ok(g)
    }
}

/// Stack `1_N ⊗ x`.
pub fn consensus_embed(n_agents: usize, x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let mut out = DVector::zeros(n_agents * n);
    for i in 0..n_agents {
        out.rows_mut(i * n, n).copy_from(x);
    }
    out
}

fn validate_quadratic(
    q: &QuadraticCost,
    n: usize,
    offset: usize,
    dim: usize,
    agent: usize,
) -> Result<()> {
    if q.q_mat.nrows() != n || q.q_mat.ncols() != n {
        return Err(CoreError::InvalidGame(format!(
            "agent {} quadratic matrix is {}×{}, expected {n}×{n}",
            agent + 1,
            q.q_mat.nrows(),
            q.q_mat.ncols()
        )));
    }
    if q.q_vec.len() != n {
        return Err(CoreError::InvalidGame(format!(
            "agent {} linear term has length {}, expected {n}",
            agent + 1,
            q.q_vec.len()
        )));
    }
    let block = q.q_mat.view((offset, offset), (dim, dim)).into_owned();
    let scale = 1.0 + block.amax();
    if (&block - block.transpose()).amax() > 1e-9 * scale {
        return Err(CoreError::InvalidGame(format!(
            "agent {} own cost block is not symmetric",
            agent + 1
        )));
    }
    let min_eig = block
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &e| a.min(e));
    if min_eig <= 0.0 {
        return Err(CoreError::InvalidGame(format!(
            "agent {} own cost block is not positive definite (λ_min = {min_eig:.3e})",
            agent + 1
        )));
    }
    Ok(())
}
