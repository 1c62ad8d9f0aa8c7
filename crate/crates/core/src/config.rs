//! On-disk scenario and report formats: schema-versioned TOML mirrors of the
//! in-memory types. Only quadratic games are serializable (callback gradients
//! have no file form).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::flow::{FlowParams, GainsH};
use crate::game::{AgentSpec, CostGradient, GameConstants, GameSpec, QuadraticCost};
use crate::graph::CommGraph;
use crate::scenarios::{Mode, ScenarioSpec};
use crate::sets::ConvexSet;

/// Version stamp written into every file this module produces. Readers
/// reject anything else.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Single,
    Double,
    Both,
}

impl From<Mode> for ModeConfig {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Single => ModeConfig::Single,
            Mode::Double => ModeConfig::Double,
            Mode::Both => ModeConfig::Both,
        }
    }
}

impl From<ModeConfig> for Mode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Single => Mode::Single,
            ModeConfig::Double => Mode::Double,
            ModeConfig::Both => Mode::Both,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl SetConfig {
    fn from_set(s: &ConvexSet) -> Result<Self> {
        Ok(match s {
            ConvexSet::FullSpace(d) => {
                Self { kind: "full".into(), lower: None, upper: None, dim: Some(*d) }
            }
            ConvexSet::NonnegOrthant(d) => {
                Self { kind: "orthant".into(), lower: None, upper: None, dim: Some(*d) }
            }
            ConvexSet::Box { lower, upper } => Self {
                kind: "box".into(),
                lower: Some(lower.iter().copied().collect()),
                upper: Some(upper.iter().copied().collect()),
                dim: None,
            },
            ConvexSet::Product(_) => {
                // Flatten: every product of the supported leaves is a box in
                // coordinate bounds.
                let (lo, hi) = s.coordinate_bounds();
                Self {
                    kind: "box".into(),
                    lower: Some(lo.iter().copied().collect()),
                    upper: Some(hi.iter().copied().collect()),
                    dim: None,
                }
            }
        })
    }

    fn to_set(&self) -> Result<ConvexSet> {
        match self.kind.as_str() {
            "full" => {
                let d = self.dim.ok_or_else(|| {
                    CoreError::Config("full-space set needs a `dim` field".into())
                })?;
                Ok(ConvexSet::FullSpace(d))
            }
            "orthant" => {
                let d = self.dim.ok_or_else(|| {
                    CoreError::Config("orthant set needs a `dim` field".into())
                })?;
                Ok(ConvexSet::NonnegOrthant(d))
            }
            "box" => {
                let lo = self.lower.clone().ok_or_else(|| {
                    CoreError::Config("box set needs a `lower` field".into())
                })?;
                let hi = self.upper.clone().ok_or_else(|| {
                    CoreError::Config("box set needs an `upper` field".into())
                })?;
                ConvexSet::bounded(DVector::from_vec(lo), DVector::from_vec(hi))
            }
            other => Err(CoreError::Config(format!("unknown set kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub dim: usize,
    /// Row-major rows of the full cost Jacobian contribution Q_i.
    pub q_mat: Vec<Vec<f64>>,
    pub q_vec: Vec<f64>,
    pub set: SetConfig,
    pub coupling_a: Vec<Vec<f64>>,
    pub coupling_b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphConfig {
    pub n_agents: usize,
    /// 1-based endpoints with positive weights, each undirected edge once.
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsConfig {
    pub mu: f64,
    pub theta0: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub name: String,
    pub seed: u64,
    pub mode: ModeConfig,
    pub gain_c: f64,
    pub step_h: f64,
    pub t_max: f64,
    pub eps_stop: f64,
    pub stride: usize,
    pub gains_h: Vec<f64>,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slater_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
    pub graph: GraphConfig,
    pub agents: Vec<AgentConfig>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], context: &'static str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CoreError::Config(format!("{context}: ragged matrix rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl ScenarioConfig {
    pub fn from_scenario(s: &ScenarioSpec) -> Result<Self> {
        let mut agents = Vec::with_capacity(s.game.n_agents());
        for a in s.game.agents() {
            let q = match &a.cost {
                CostGradient::Quadratic(q) => q,
                CostGradient::Callback(_) => {
                    return Err(CoreError::Config(
                        "callback cost gradients cannot be serialized".into(),
                    ))
                }
            };
            let coupling_a = if a.coupling_a.nrows() == 0 {
                Vec::new()
            } else {
                matrix_rows(&a.coupling_a)
            };
            agents.push(AgentConfig {
                dim: a.dim,
                q_mat: matrix_rows(&q.q_mat),
                q_vec: q.q_vec.iter().copied().collect(),
                set: SetConfig::from_set(&a.local_set)?,
                coupling_a,
                coupling_b: a.coupling_b.iter().copied().collect(),
            });
        }
        Ok(Self {
            schema: SCHEMA_VERSION,
            name: s.name.clone(),
            seed: s.seed,
            mode: s.mode.into(),
            gain_c: s.params.c,
            step_h: s.params.h,
            t_max: s.params.t_max,
            eps_stop: s.params.eps_stop,
            stride: s.params.stride,
            gains_h: s.gains.per_agent().to_vec(),
            x0: s.x0.iter().copied().collect(),
            v0: s.v0.iter().copied().collect(),
            slater_point: s.slater_point.as_ref().map(|v| v.iter().copied().collect()),
            constants: s.game.constants().map(|k| ConstantsConfig {
                mu: k.mu,
                theta0: k.theta0,
                theta: k.theta,
            }),
            graph: GraphConfig { n_agents: s.graph.n_agents(), edges: s.graph.edge_list() },
            agents,
        })
    }

    pub fn to_scenario(&self) -> Result<ScenarioSpec> {
        if self.schema != SCHEMA_VERSION {
            return Err(CoreError::Config(format!(
                "unsupported schema version {} (this build reads {})",
                self.schema, SCHEMA_VERSION
            )));
        }
        let total_dim: usize = self.agents.iter().map(|a| a.dim).sum();
        let mut agents = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let q_mat = rows_matrix(&a.q_mat, "q_mat")?;
            let coupling_a = if a.coupling_a.is_empty() {
                DMatrix::zeros(0, a.dim)
            } else {
                rows_matrix(&a.coupling_a, "coupling_a")?
            };
            if q_mat.nrows() != total_dim || q_mat.ncols() != total_dim {
                return Err(CoreError::Config(format!(
                    "q_mat must be {total_dim}×{total_dim}, got {}×{}",
                    q_mat.nrows(),
                    q_mat.ncols()
                )));
            }
            agents.push(AgentSpec {
                dim: a.dim,
                cost: CostGradient::Quadratic(QuadraticCost {
                    q_mat,
                    q_vec: DVector::from_vec(a.q_vec.clone()),
                }),
                local_set: a.set.to_set()?,
                coupling_a,
                coupling_b: DVector::from_vec(a.coupling_b.clone()),
            });
        }
        let game = GameSpec::new(agents)?;
        let constants = match &self.constants {
            Some(k) => GameConstants { mu: k.mu, theta0: k.theta0, theta: k.theta },
            None => game.estimate_constants(2, 1.0, 0)?,
        };
        let game = game.with_constants(constants);
        let graph = CommGraph::from_edges(self.graph.n_agents, &self.graph.edges)?;
        let params = FlowParams::new(self.gain_c, self.step_h, self.t_max, self.eps_stop, self.stride)?;
        let gains = GainsH::new(&game, self.gains_h.clone())?;
        if self.x0.len() != game.total_dim() || self.v0.len() != game.total_dim() {
            return Err(CoreError::Config(format!(
                "x0/v0 must have length {}, got {}/{}",
                game.total_dim(),
                self.x0.len(),
                self.v0.len()
            )));
        }
        Ok(ScenarioSpec {
            name: self.name.clone(),
            game,
            graph,
            params,
            gains,
            mode: self.mode.into(),
            x0: DVector::from_vec(self.x0.clone()),
            v0: DVector::from_vec(self.v0.clone()),
            seed: self.seed,
            slater_point: self.slater_point.clone().map(DVector::from_vec),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| CoreError::Config(format!("serialization failed: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CoreError::Config(format!("parse failed: {e}")))
    }
}

/// Gain certificate as written into run reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertReport {
    pub mu: f64,
    pub theta0: f64,
    pub theta: f64,
    pub lambda2: f64,
    pub lambda_min_m: f64,
    pub c_lower: f64,
    pub c_used: f64,
    pub satisfied: bool,
}

/// Oracle solution as written into run reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub x_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Final-state summary of one integration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub reason: String,
    pub steps: usize,
    pub t_end: f64,
    pub update_residual: f64,
    pub wall_seconds: f64,
    pub kkt_final: f64,
    pub consensus_x_final: f64,
    pub consensus_lambda_final: f64,
    pub coupling_violation_final: f64,
    pub local_violation_final: f64,
    pub x_final: Vec<f64>,
    pub lambda_mean_final: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_final_norm: Option<f64>,
    pub oracle_distance: f64,
}

/// Everything a run leaves behind besides the trajectory CSV. Embeds the
/// full scenario so downstream analysis needs no other inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub mode: ModeConfig,
    pub outcome: RunOutcome,
    pub certificate: CertReport,
    pub oracle: OracleReport,
    pub scenario: ScenarioConfig,
}

impl RunReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| CoreError::Config(format!("serialization failed: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let rep: RunReport =
            toml::from_str(text).map_err(|e| CoreError::Config(format!("parse failed: {e}")))?;
        if rep.schema != SCHEMA_VERSION {
            return Err(CoreError::Config(format!(
                "unsupported schema version {} (this build reads {})",
                rep.schema, SCHEMA_VERSION
            )));
        }
        Ok(rep)
    }
}
