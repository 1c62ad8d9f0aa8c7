//! Ready-made experiment setups: the hand-checkable two-agent games, the
//! five-sensor positioning game with Chebyshev proximity coupling, and a
//! seeded family of random strongly monotone quadratic games.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{compute_cert, ConvergenceCert};
use crate::error::{CoreError, Result};
use crate::flow::{DoubleState, FlowParams, GainsH, SingleState};
use crate::game::{AgentSpec, CostGradient, GameConstants, GameSpec, QuadraticCost};
use crate::graph::CommGraph;
use crate::sets::ConvexSet;

/// Which closed loop(s) a scenario is meant to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Double,
    Both,
}

impl Mode {
    pub fn runs_single(self) -> bool {
        matches!(self, Mode::Single | Mode::Both)
    }

    pub fn runs_double(self) -> bool {
        matches!(self, Mode::Double | Mode::Both)
    }
}

/// A fully specified experiment: game, graph, integrator parameters, tracking
/// gains, initial conditions, and (when known) a strictly feasible point for
/// sanity checks.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub game: GameSpec,
    pub graph: CommGraph,
    pub params: FlowParams,
    pub gains: GainsH,
    pub mode: Mode,
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    pub seed: u64,
    pub slater_point: Option<DVector<f64>>,
}

impl ScenarioSpec {
    /// Replace the consensus gain, re-deriving the step size from the game
    /// constants (stopping tolerance and horizon are preserved).
    pub fn with_gain(mut self, c: f64) -> Result<Self> {
        let k = self
            .game
            .constants()
            .ok_or_else(|| CoreError::InvalidParameter("scenario lacks game constants".into()))?;
        let (t_max, eps) = (self.params.t_max, self.params.eps_stop);
        let mut p = FlowParams::default_for(&k, &self.graph, c)?.with_t_max(t_max)?;
        p.eps_stop = eps;
        self.params = p;
        Ok(self)
    }

    /// The gain certificate at this scenario's consensus gain.
    pub fn certificate(&self) -> Result<ConvergenceCert> {
        let k = self
            .game
            .constants()
            .ok_or_else(|| CoreError::InvalidParameter("scenario lacks game constants".into()))?;
        compute_cert(&k, self.game.n_agents(), self.graph.lambda2(), self.params.c)
    }

    /// Initial state for the single-integrator loop (own actions projected).
    pub fn initial_single(&self) -> Result<SingleState> {
        SingleState::from_positions(&self.game, &self.x0)
    }

    /// The game the double-integrator loop runs on (local boxes dualized when
    /// present) together with its initial state.
    pub fn for_double_run(&self) -> Result<(GameSpec, DoubleState)> {
        let run_game =
            if self.game.all_sets_full() { self.game.clone() } else { self.game.dualize_local_boxes()? };
        let gains = GainsH::new(&run_game, self.gains.per_agent().to_vec())?;
        let s0 = DoubleState::from_positions(&run_game, &gains, &self.x0, &self.v0)?;
        Ok((run_game, s0))
    }
}

fn twoagent_game(coupled: bool) -> Result<GameSpec> {
    let (a_row, b_half) = if coupled {
        (DMatrix::from_row_slice(1, 1, &[1.0]), DVector::from_row_slice(&[0.25]))
    } else {
        (DMatrix::zeros(0, 1), DVector::zeros(0))
    };
    let g = GameSpec::new(vec![
        AgentSpec {
            dim: 1,
            cost: CostGradient::Quadratic(QuadraticCost {
                q_mat: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 0.0]),
                q_vec: DVector::from_row_slice(&[-1.0, 0.0]),
            }),
            local_set: ConvexSet::FullSpace(1),
            coupling_a: a_row.clone(),
            coupling_b: b_half.clone(),
        },
        AgentSpec {
            dim: 1,
            cost: CostGradient::Quadratic(QuadraticCost {
                q_mat: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 2.0]),
                q_vec: DVector::from_row_slice(&[0.0, -2.0]),
            }),
            local_set: ConvexSet::FullSpace(1),
            coupling_a: a_row,
            coupling_b: b_half,
        },
    ])?;
    let k = g.estimate_constants(2, 1.0, 0)?;
    Ok(g.with_constants(k))
}

/// Two scalar agents with crossed quadratic costs and no constraints; the
/// Nash point is (0, 1).
pub fn twoagent_unconstrained() -> Result<ScenarioSpec> {
    let game = twoagent_game(false)?;
    let graph = CommGraph::from_edges(2, &[(1, 2, 1.0)])?;
    let k = game.constants().expect("constants attached above");
    let params = FlowParams::default_for(&k, &graph, 10.0)?;
    let gains = GainsH::uniform(&game, 1.0)?;
    Ok(ScenarioSpec {
        name: "twoagent-unconstrained".into(),
        game,
        graph,
        params,
        gains,
        mode: Mode::Both,
        x0: DVector::from_row_slice(&[2.0, -1.0]),
        v0: DVector::zeros(2),
        seed: 0,
        slater_point: None,
    })
}

/// The same two agents sharing the budget x₁ + x₂ ≤ 0.5 (0.25 per agent);
/// the v-GNE is x* = (−0.25, 0.75) with shared multiplier 0.75.
pub fn twoagent_coupled() -> Result<ScenarioSpec> {
    let game = twoagent_game(true)?;
    let graph = CommGraph::from_edges(2, &[(1, 2, 1.0)])?;
    let k = game.constants().expect("constants attached above");
    let params = FlowParams::default_for(&k, &graph, 10.0)?;
    let gains = GainsH::uniform(&game, 1.0)?;
    Ok(ScenarioSpec {
        name: "twoagent-coupled".into(),
        game,
        graph,
        params,
        gains,
        mode: Mode::Both,
        x0: DVector::from_row_slice(&[2.0, -1.0]),
        v0: DVector::zeros(2),
        seed: 0,
        slater_point: Some(DVector::zeros(2)),
    })
}

/// Offsets of the five committed sensing targets r_i.
pub const SENSOR_TARGETS: [[f64; 2]; 5] = [
    [0.12, -0.31],
    [-0.26, 0.18],
    [0.07, 0.04],
    [-0.14, -0.22],
    [0.33, 0.09],
];

/// Default seed for the sensor scenario's initial placement.
pub const SENSOR_SEED: u64 = 11;

/// Five planar sensors on a ring. Sensor i pays
/// `p_iᵀp_i + p_iᵀr_i + Σ_{j≠i}‖p_i − p_j‖²`, must keep its altitude
/// (y-coordinate) in [0.1, 0.5], and must stay within Chebyshev distance 0.2
/// of each ring neighbor (shared affine rows, responsibility split evenly).
/// The consensus gain is fixed at 30, below the certificate threshold — the
/// certificate is sufficient, not necessary, and the run still converges.
pub fn sensor_network_scenario(seed: u64) -> Result<ScenarioSpec> {
    sensor_network_with_targets(&SENSOR_TARGETS, seed)
}

pub fn sensor_network_with_targets(targets: &[[f64; 2]; 5], seed: u64) -> Result<ScenarioSpec> {
    const N: usize = 5;
    const DIM: usize = 2;
    let n = N * DIM;
    let edges: [(usize, usize); N] = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)];
    let m = 4 * edges.len();

    // Pseudo-gradient Jacobian: G = 12·I − 2·(1₅1₅ᵀ ⊗ I₂), shared by every
    // agent's quadratic cost (the cross-blocks are what each agent's own
    // gradient reads of the others).
    let mut g_mat = DMatrix::zeros(n, n);
    for i in 0..N {
        for j in 0..N {
            let v = if i == j { 10.0 } else { -2.0 };
            for a in 0..DIM {
                g_mat[(i * DIM + a, j * DIM + a)] = v;
            }
        }
    }

    let mut agents = Vec::with_capacity(N);
    for i in 0..N {
        let mut q_vec = DVector::zeros(n);
        q_vec[i * DIM] = targets[i][0];
        q_vec[i * DIM + 1] = targets[i][1];
        // Altitude band only: the x-coordinate is unconstrained locally.
        let local_set = ConvexSet::bounded(
            DVector::from_row_slice(&[f64::NEG_INFINITY, 0.1]),
            DVector::from_row_slice(&[f64::INFINITY, 0.5]),
        )?;
        let mut coupling_a = DMatrix::zeros(m, DIM);
        for (e, &(u, w)) in edges.iter().enumerate() {
            for a in 0..DIM {
                // Rows per edge: +x_u−x_w, −x_u+x_w, +y_u−y_w, −y_u+y_w.
                if i == u {
                    coupling_a[(4 * e + 2 * a, a)] = 1.0;
                    coupling_a[(4 * e + 2 * a + 1, a)] = -1.0;
                } else if i == w {
                    coupling_a[(4 * e + 2 * a, a)] = -1.0;
                    coupling_a[(4 * e + 2 * a + 1, a)] = 1.0;
                }
            }
        }
        let coupling_b = DVector::from_element(m, 0.2 / N as f64);
        agents.push(AgentSpec {
            dim: DIM,
            cost: CostGradient::Quadratic(QuadraticCost { q_mat: g_mat.clone(), q_vec }),
            local_set,
            coupling_a,
            coupling_b,
        });
    }
    let game = GameSpec::new(agents)?;
    let k = game.estimate_constants(2, 1.0, 0)?;
    let game = game.with_constants(k);

    let graph = CommGraph::from_edges(
        N,
        &[(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0), (5, 1, 1.0)],
    )?;
    // The velocity cascade converges noticeably slower than the plain loop on
    // this game (c sits below the certificate threshold), so give the run a
    // generous time budget; the stop rule ends it early once it settles.
    let params = FlowParams::default_for(&k, &graph, 30.0)?.with_t_max(1500.0)?;
    let gains = GainsH::uniform(&game, 1.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x0 = DVector::zeros(n);
    for i in 0..N {
        x0[i * DIM] = rng.random_range(-0.6..0.6);
        // Deliberately wider than the altitude band so unprojected starts
        // show a positive local violation.
        x0[i * DIM + 1] = rng.random_range(-0.05..0.65);
    }
    let slater = DVector::from_fn(n, |k, _| if k % 2 == 0 { 0.0 } else { 0.3 });

    Ok(ScenarioSpec {
        name: "sensor".into(),
        game,
        graph,
        params,
        gains,
        mode: Mode::Both,
        x0,
        v0: DVector::zeros(n),
        seed,
        slater_point: Some(slater),
    })
}

/// A seeded random strongly monotone quadratic game on a ring of `n_agents`
/// agents with `dim_each` decision variables each, `m` shared affine rows,
/// per-agent boxes, and exact monotonicity constant `mu_target`. The
/// consensus gain is set to 1.5× the certificate threshold.
pub fn random_quadratic_game(
    n_agents: usize,
    dim_each: usize,
    m: usize,
    mu_target: f64,
    seed: u64,
) -> Result<ScenarioSpec> {
    if n_agents < 2 {
        return Err(CoreError::InvalidParameter(
            "the communication ring needs at least two agents".into(),
        ));
    }
    if dim_each == 0 {
        return Err(CoreError::InvalidParameter("agents need at least one decision".into()));
    }
    if !(mu_target.is_finite() && mu_target > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "strong monotonicity target must be positive, got {mu_target}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_agents * dim_each;

    let mut g_raw = DMatrix::from_fn(n, n, |_, _, | rng.random_range(-0.3..0.3));
    for i in 0..n_agents {
        let off = i * dim_each;
        // Own diagonal blocks must be symmetric to be gradients of a cost.
        for r in 0..dim_each {
            for c in 0..r {
                let avg = 0.5 * (g_raw[(off + r, off + c)] + g_raw[(off + c, off + r)]);
                g_raw[(off + r, off + c)] = avg;
                g_raw[(off + c, off + r)] = avg;
            }
        }
    }
    let sym = (&g_raw + g_raw.transpose()) * 0.5;
    let lam_min = sym.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, &e| a.min(e));
    // Shifting every own diagonal by δI makes λ_min of the symmetrized
    // Jacobian exactly mu_target; eigenvalue interlacing then keeps every
    // own block positive definite.
    let delta = mu_target - lam_min;
    let mut g_mat = g_raw;
    for k in 0..n {
        g_mat[(k, k)] += delta;
    }

    let a_full = DMatrix::from_fn(m, n, |_, _, | rng.random_range(-0.5..0.5));
    let x_slater = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b_total = &a_full * &x_slater + DVector::from_element(m, 1.0);

    let mut agents = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let off = i * dim_each;
        let mut q_mat = DMatrix::zeros(n, n);
        q_mat.view_mut((off, 0), (dim_each, n)).copy_from(&g_mat.rows(off, dim_each));
        q_mat
            .view_mut((0, off), (n, dim_each))
            .copy_from(&g_mat.rows(off, dim_each).transpose());
        let mut q_vec = DVector::zeros(n);
        for k in 0..dim_each {
            q_vec[off + k] = rng.random_range(-1.0..1.0);
        }
        let lower = DVector::from_fn(dim_each, |_, _| -rng.random_range(1.2..2.5));
        let upper = DVector::from_fn(dim_each, |_, _| rng.random_range(1.2..2.5));
        agents.push(AgentSpec {
            dim: dim_each,
            cost: CostGradient::Quadratic(QuadraticCost { q_mat, q_vec }),
            local_set: ConvexSet::bounded(lower, upper)?,
            coupling_a: a_full.columns(off, dim_each).into_owned(),
            coupling_b: &b_total / n_agents as f64,
        });
    }
    let game = GameSpec::new(agents)?;
    let k_exact = game.estimate_constants(2, 1.0, 0)?;
    // Guard the μ ≤ θ ≤ θ₀ ordering against last-ulp spectral noise.
    let k = GameConstants {
        mu: k_exact.mu,
        theta: k_exact.theta.max(k_exact.mu),
        theta0: k_exact.theta0.max(k_exact.theta.max(k_exact.mu)),
    };
    let game = game.with_constants(k);

    let mut edges: Vec<(usize, usize, f64)> =
        (1..n_agents).map(|i| (i, i + 1, 1.0)).collect();
    if n_agents > 2 {
        edges.push((n_agents, 1, 1.0));
    }
    let graph = CommGraph::from_edges(n_agents, &edges)?;

    let c_lower = ((k.theta0 + k.theta) * (k.theta0 + k.theta) + 4.0 * k.mu * k.theta)
        / (4.0 * k.mu * graph.lambda2());
    let params = FlowParams::default_for(&k, &graph, 1.5 * c_lower)?;
    let gains = GainsH::new(&game, (0..n_agents).map(|_| rng.random_range(0.5..1.5)).collect())?;
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));

    Ok(ScenarioSpec {
        name: format!("random-quadratic-n{n_agents}-d{dim_each}-m{m}-s{seed}"),
        game,
        graph,
        params,
        gains,
        mode: Mode::Both,
        x0,
        v0: DVector::zeros(n),
        seed,
        slater_point: Some(x_slater),
    })
}
