//! Subcommand implementations: scenario loading and overrides, the run
//! pipeline (integrate → oracle → monitor → CSV + report), certificate
//! printing, and post-hoc analysis of recorded runs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gne_core::analysis::{
    monitor_channels, monitor_channels_with_reference, oracle_vgne, ConvergenceCert,
    EquilibriumReport, DEFAULT_ORACLE_MAX_ITER, DEFAULT_ORACLE_TOL,
};
use gne_core::config::{
    CertReport, ModeConfig, OracleReport, RunOutcome, RunReport, ScenarioConfig, SCHEMA_VERSION,
};
use gne_core::scenarios::{
    self, random_quadratic_game, sensor_network_scenario, Mode, ScenarioSpec,
};
use gne_core::{
    simulate_double, simulate_single, FlowParams, GainsH, GameSpec, StopReason, Trajectory,
};

use crate::csvio;

/// Exit code for runs that hit the time budget and certificates that fail.
pub const EXIT_UNCONVERGED: u8 = 2;

/// Recognized `--override key=value` pairs. `c`, `h`, `t_max`, `eps_stop`,
/// and `stride` tune the integrator; `seed`, `n`, `d`, `m`, and `mu` re-seed
/// or resize the named generators (rejected for file-based scenarios).
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub c: Option<f64>,
    pub h: Option<f64>,
    pub t_max: Option<f64>,
    pub eps_stop: Option<f64>,
    pub stride: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub mu: Option<f64>,
}

impl Overrides {
    fn has_generator_keys(&self) -> bool {
        self.seed.is_some()
            || self.n.is_some()
            || self.d.is_some()
            || self.m.is_some()
            || self.mu.is_some()
    }
}

pub fn parse_overrides(items: &[String]) -> Result<Overrides> {
    let mut ov = Overrides::default();
    for item in items {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("override `{item}` is not of the form key=value"))?;
        let fval = || {
            value
                .parse::<f64>()
                .with_context(|| format!("override `{key}`: bad number `{value}`"))
        };
        let uval = || {
            value
                .parse::<usize>()
                .with_context(|| format!("override `{key}`: bad integer `{value}`"))
        };
        match key {
            "c" => ov.c = Some(fval()?),
            "h" => ov.h = Some(fval()?),
            "t_max" => ov.t_max = Some(fval()?),
            "eps_stop" => ov.eps_stop = Some(fval()?),
            "stride" => ov.stride = Some(uval()?),
            "seed" => {
                ov.seed = Some(value.parse::<u64>().with_context(|| {
                    format!("override `seed`: bad integer `{value}`")
                })?)
            }
            "n" => ov.n = Some(uval()?),
            "d" => ov.d = Some(uval()?),
            "m" => ov.m = Some(uval()?),
            "mu" => ov.mu = Some(fval()?),
            other => bail!(
                "unknown override key `{other}` (valid: c, h, t_max, eps_stop, stride, seed, n, d, m, mu)"
            ),
        }
    }
    Ok(ov)
}

/// Resolve a scenario by built-in name or TOML path and apply overrides.
pub fn load_scenario(name_or_path: &str, ov: &Overrides) -> Result<ScenarioSpec> {
    let mut sc = match name_or_path {
        "twoagent-unconstrained" => {
            reject_generator_overrides(name_or_path, ov)?;
            scenarios::twoagent_unconstrained()?
        }
        "twoagent-coupled" => {
            reject_generator_overrides(name_or_path, ov)?;
            scenarios::twoagent_coupled()?
        }
        "sensor" => sensor_network_scenario(ov.seed.unwrap_or(scenarios::SENSOR_SEED))?,
        "random-quadratic" => random_quadratic_game(
            ov.n.unwrap_or(4),
            ov.d.unwrap_or(2),
            ov.m.unwrap_or(2),
            ov.mu.unwrap_or(1.0),
            ov.seed.unwrap_or(0),
        )?,
        path => {
            if ov.has_generator_keys() {
                bail!("generator overrides (seed/n/d/m/mu) only apply to built-in scenario names");
            }
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("no built-in scenario or readable file `{path}`"))?;
            ScenarioConfig::from_toml(&text)?.to_scenario()?
        }
    };
    if let Some(c) = ov.c {
        sc = sc.with_gain(c)?;
    }
    let p = sc.params;
    sc.params = FlowParams::new(
        p.c,
        ov.h.unwrap_or(p.h),
        ov.t_max.unwrap_or(p.t_max),
        ov.eps_stop.unwrap_or(p.eps_stop),
        ov.stride.unwrap_or(p.stride),
    )?;
    Ok(sc)
}

fn reject_generator_overrides(name: &str, ov: &Overrides) -> Result<()> {
    if ov.has_generator_keys() {
        bail!("scenario `{name}` is deterministic; seed/n/d/m/mu overrides do not apply");
    }
    Ok(())
}

fn cert_report(cert: &ConvergenceCert) -> CertReport {
    CertReport {
        mu: cert.mu,
        theta0: cert.theta0,
        theta: cert.theta,
        lambda2: cert.lambda2,
        lambda_min_m: cert.lambda_min_m,
        c_lower: cert.c_lower,
        c_used: cert.c_used,
        satisfied: cert.satisfied,
    }
}

fn oracle_report(rep: &EquilibriumReport) -> OracleReport {
    OracleReport {
        x_star: rep.x_star.iter().copied().collect(),
        lambda_star: rep.lambda_star.iter().copied().collect(),
        kkt_residual: rep.kkt_residual,
        iterations: rep.iterations,
    }
}

fn run_mode(
    sc: &ScenarioSpec,
    double: bool,
    cert: &ConvergenceCert,
    out_dir: &Path,
) -> Result<StopReason> {
    let (run_game, mut traj, oracle): (GameSpec, Trajectory, EquilibriumReport) = if double {
        let (run_game, s0) = sc.for_double_run()?;
        let gains = GainsH::new(&run_game, sc.gains.per_agent().to_vec())?;
        let traj = simulate_double(&run_game, &sc.graph, &sc.params, &gains, &s0)?;
        let oracle = oracle_vgne(&run_game, DEFAULT_ORACLE_TOL, DEFAULT_ORACLE_MAX_ITER)?;
        (run_game, traj, oracle)
    } else {
        let s0 = sc.initial_single()?;
        let traj = simulate_single(&sc.game, &sc.graph, &sc.params, &s0)?;
        let oracle = oracle_vgne(&sc.game, DEFAULT_ORACLE_TOL, DEFAULT_ORACLE_MAX_ITER)?;
        (sc.game.clone(), traj, oracle)
    };
    if double {
        monitor_channels_with_reference(&run_game, &sc.game, &mut traj, &oracle)?;
    } else {
        monitor_channels(&run_game, &mut traj, &oracle)?;
    }

    let last = traj.len() - 1;
    let x_final = traj.final_position(&run_game)?;
    let lambda_mean_final = traj.lambda_mean(last);
    let oracle_distance = (&x_final - &oracle.x_star).amax();
    let mode_name = if double { "double" } else { "single" };
    let outcome = RunOutcome {
        reason: match traj.stop.reason {
            StopReason::Converged => "converged".into(),
            StopReason::TimeBudget => "time-budget".into(),
        },
        steps: traj.stop.steps,
        t_end: traj.stop.t_end,
        update_residual: traj.stop.residual,
        wall_seconds: traj.stop.wall.as_secs_f64(),
        kkt_final: traj.channels.kkt[last],
        consensus_x_final: traj.channels.consensus_x[last],
        consensus_lambda_final: traj.channels.consensus_lambda[last],
        coupling_violation_final: traj.channels.coupling_violation[last],
        local_violation_final: traj.channels.local_violation[last],
        x_final: x_final.iter().copied().collect(),
        lambda_mean_final: lambda_mean_final.iter().copied().collect(),
        v_final_norm: traj.velocity(last).map(|v| v.norm()),
        oracle_distance,
    };
    let report = RunReport {
        schema: SCHEMA_VERSION,
        mode: if double { ModeConfig::Double } else { ModeConfig::Single },
        outcome,
        certificate: cert_report(cert),
        oracle: oracle_report(&oracle),
        scenario: ScenarioConfig::from_scenario(sc)?,
    };

    let csv_path = out_dir.join(format!("{}-{mode_name}.csv", sc.name));
    let report_path = out_dir.join(format!("{}-{mode_name}-report.toml", sc.name));
    csvio::write_trajectory(&csv_path, &run_game, &traj)?;
    std::fs::write(&report_path, report.to_toml()?)
        .with_context(|| format!("writing {}", report_path.display()))?;

    println!(
        "mode {mode_name}: {} after {} steps (t = {:.4}), KKT {:.3e}, oracle distance {:.3e}",
        report.outcome.reason,
        report.outcome.steps,
        report.outcome.t_end,
        report.outcome.kkt_final,
        report.outcome.oracle_distance,
    );
    println!("  wrote {}", csv_path.display());
    println!("  wrote {}", report_path.display());
    Ok(traj.stop.reason)
}

pub fn run_scenario(sc: &ScenarioSpec, mode: Mode, out_dir: &Path) -> Result<u8> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let cert = sc.certificate()?;
    if !cert.satisfied {
        eprintln!(
            "warning: consensus gain c = {} is at or below the certificate threshold c_lower = {:.6}; \
             the run proceeds (the certificate is sufficient, not necessary)",
            cert.c_used, cert.c_lower
        );
    }
    let mut worst = 0u8;
    if mode.runs_single() && run_mode(sc, false, &cert, out_dir)? == StopReason::TimeBudget {
        worst = worst.max(EXIT_UNCONVERGED);
    }
    if mode.runs_double() && run_mode(sc, true, &cert, out_dir)? == StopReason::TimeBudget {
        worst = worst.max(EXIT_UNCONVERGED);
    }
    Ok(worst)
}

fn parse_sweep(expr: &str) -> Result<Vec<f64>> {
    let rest = expr
        .strip_prefix("c=")
        .context("sweep must be of the form c=v1,v2,...")?;
    let mut values = Vec::new();
    for part in rest.split(',') {
        let v: f64 = part
            .parse()
            .with_context(|| format!("sweep: bad gain value `{part}`"))?;
        if !(v.is_finite() && v > 0.0) {
            bail!("sweep: gains must be positive and finite, got {v}");
        }
        values.push(v);
    }
    if values.is_empty() {
        bail!("sweep lists no gain values");
    }
    Ok(values)
}

pub fn cmd_run(
    scenario: &str,
    mode_flag: Option<Mode>,
    overrides: &[String],
    sweep: Option<&str>,
    out: Option<PathBuf>,
) -> Result<u8> {
    let ov = parse_overrides(overrides)?;
    let out_base = out
        .or_else(|| std::env::var_os("GNE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let sc = load_scenario(scenario, &ov)?;
    let mode = mode_flag.unwrap_or(sc.mode);
    match sweep {
        None => run_scenario(&sc, mode, &out_base),
        Some(expr) => {
            let gains = parse_sweep(expr)?;
            let results: Vec<Result<u8>> = std::thread::scope(|scope| {
                let handles: Vec<_> = gains
                    .iter()
                    .map(|&c| {
                        let sc = sc.clone();
                        let dir = out_base.join(format!("{}-c{c}", sc.name));
                        scope.spawn(move || -> Result<u8> {
                            let sc = sc.with_gain(c)?;
                            run_scenario(&sc, mode, &dir)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("sweep worker panicked"))))
                    .collect()
            });
            let mut worst = 0u8;
            for r in results {
                worst = worst.max(r?);
            }
            Ok(worst)
        }
    }
}

pub fn cmd_certify(scenario: &str, overrides: &[String]) -> Result<u8> {
    let ov = parse_overrides(overrides)?;
    let sc = load_scenario(scenario, &ov)?;
    let cert = sc.certificate()?;
    println!("scenario:        {}", sc.name);
    println!("mu:              {}", cert.mu);
    println!("theta:           {}", cert.theta);
    println!("theta0:          {}", cert.theta0);
    println!("lambda2:         {}", cert.lambda2);
    println!("c:               {}", cert.c_used);
    println!("c_lower:         {}", cert.c_lower);
    println!("lambda_min(M):   {}", cert.lambda_min_m);
    println!("satisfied:       {}", if cert.satisfied { "yes" } else { "no" });
    Ok(if cert.satisfied { 0 } else { EXIT_UNCONVERGED })
}

pub fn cmd_export(scenario: &str, overrides: &[String]) -> Result<u8> {
    let ov = parse_overrides(overrides)?;
    let sc = load_scenario(scenario, &ov)?;
    let config = ScenarioConfig::from_scenario(&sc)?;
    print!("{}", config.to_toml()?);
    Ok(0)
}

pub fn cmd_analyze(traj_path: &Path, report_path: &Path) -> Result<u8> {
    let report_text = std::fs::read_to_string(report_path)
        .with_context(|| format!("reading {}", report_path.display()))?;
    let report = RunReport::from_toml(&report_text)?;
    let sc = report.scenario.to_scenario()?;
    let table = csvio::read_trajectory(traj_path)?;

    let double = report.mode == ModeConfig::Double;
    let n = sc.game.total_dim();
    let m_run = if double && !sc.game.all_sets_full() {
        sc.game.dualize_local_boxes()?.n_constraints()
    } else {
        sc.game.n_constraints()
    };
    let expected = csvio::header(n, m_run, double);
    let got = table.columns.join(",");
    if got != expected {
        bail!("trajectory columns do not match the report:\n  expected {expected}\n  got      {got}");
    }

    let t = table.column("t")?;
    if t[0] != 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
        bail!("time column must start at 0 and increase strictly");
    }
    let kkt = table.column("kkt_residual")?;
    let kkt_final = *kkt.last().unwrap();
    let in_sync = (kkt_final - report.outcome.kkt_final).abs()
        <= 1e-12 * (1.0 + kkt_final.abs());

    println!("samples:                  {}", t.len());
    println!("simulated time:           {}", t.last().unwrap());
    println!("final KKT residual:       {kkt_final:.6e}");
    println!(
        "consistent with report:   {}",
        if in_sync { "yes" } else { "NO (kkt_final differs)" }
    );

    let lyap = table.column("lyapunov")?;
    if lyap.iter().all(|v| v.is_finite()) {
        let slack = 10.0 * report.scenario.step_h * report.scenario.step_h
            * report.scenario.stride as f64;
        let gaps = lyap.len().saturating_sub(1);
        let bad = lyap.windows(2).filter(|w| w[1] > w[0] + slack).count();
        println!(
            "V monotone within tolerance: {} ({bad} of {gaps} sample gaps exceeded)",
            if bad == 0 { "yes" } else { "no" }
        );
    } else {
        println!("V monotone within tolerance: not recorded");
    }

    let coupling = table.column("coupling_violation")?;
    let local = table.column("local_violation")?;
    println!("coupling violation at stop: {:.6e}", coupling.last().unwrap());
    println!("local violation at stop:    {:.6e}", local.last().unwrap());
    if double {
        match local.iter().position(|&v| v < 1e-3) {
            Some(k) => println!("local violation first below 1e-3 at t = {}", t[k]),
            None => println!("local violation never dropped below 1e-3"),
        }
    }
    let consensus_x = table.column("consensus_x")?;
    let consensus_l = table.column("consensus_lambda")?;
    println!("consensus residual (x, lambda) at stop: ({:.6e}, {:.6e})",
        consensus_x.last().unwrap(),
        consensus_l.last().unwrap()
    );
    if !in_sync {
        return Ok(1);
    }
    Ok(0)
}
