use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use regret_control::bench::{ekf_style_loop, mpc_loop, FilterKind, PolicyKind};
use regret_control::hinf::{
    kalman_estimator, lqr_controller, optimal_hinf_controller, optimal_hinf_estimator,
    GammaCertificate,
};
use regret_control::noncausal::{noncausal_control, noncausal_estimate};
use regret_control::nonlinear::{fm_model, pendulum_model, NonlinearModel};
use regret_control::regret_controller::{
    optimal_certainty_equivalent_regret_controller, optimal_regret_controller,
};
use regret_control::regret_filter::{
    optimal_certainty_equivalent_regret_filter, optimal_regret_filter,
};
use regret_control::system::{
    simulate_control, simulate_estimation, ControlSystem, EstimationSystem, Signal,
};
use regret_control::{Error, Result};
use serde::Serialize;

use crate::config::{gen_disturbance, DisturbanceSpec, ExperimentConfig, SystemSource};

/// Settings resolved from the command line that apply across experiments.
#[derive(Debug, Clone)]
pub struct RunContext {
    /// Output directory override (`--out`); falls back to the config's
    /// `output` field, then to `out/`.
    pub out_override: Option<PathBuf>,
    pub gamma_tol: f64,
    /// Directory relative paths in the config are resolved against.
    pub base_dir: PathBuf,
}

/// Per-policy result row recorded in the summary JSON.
#[derive(Debug, Clone, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub total_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_vs_noncausal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_bound: Option<RegretBoundCheck>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// Cross-check of the additive-regret certificate on the realized record:
/// the incurred regret must not exceed `γ_opt²` times the disturbance
/// energy (up to a 1e-6 relative slack for roundoff).
#[derive(Debug, Clone, Serialize)]
pub struct RegretBoundCheck {
    pub regret: f64,
    pub disturbance_energy: f64,
    pub gamma_sq_times_energy: f64,
    pub satisfied: bool,
}

impl RegretBoundCheck {
    fn new(regret: f64, energy: f64, gamma_opt: f64) -> Self {
        let bound = gamma_opt * gamma_opt * energy;
        RegretBoundCheck {
            regret,
            disturbance_energy: energy,
            gamma_sq_times_energy: bound,
            satisfied: regret <= bound * (1.0 + 1e-6) + 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub id: String,
    pub steps: usize,
    pub gamma_tol: f64,
    /// Seeds of every stochastic record in the experiment, for replay.
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicySummary>,
    /// Echo of the configuration that produced this run.
    pub config: ExperimentConfig,
}

pub struct ExperimentOutcome {
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: ExperimentSummary,
}

/// One CSV column: a policy label and its cumulative cost series.
struct Column {
    cumulative: Vec<f64>,
    summary: PolicySummary,
}

/// Run one configured experiment end to end: generate the records, run
/// every requested policy, and write the cumulative-cost CSV plus the
/// summary JSON into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<ExperimentOutcome> {
    let gamma_tol = cfg.gamma_tol.unwrap_or(ctx.gamma_tol);
    if !(gamma_tol > 0.0) {
        return Err(Error::Validation(format!("gamma tolerance must be positive, got {gamma_tol}")));
    }
    reject_duplicate_policies(&cfg.policies)?;

    let columns = match &cfg.system {
        SystemSource::Pendulum => run_pendulum(cfg, ctx, gamma_tol)?,
        SystemSource::Fm => run_fm(cfg, ctx, gamma_tol)?,
        SystemSource::Control { path } => run_linear_control(cfg, ctx, path, gamma_tol)?,
        SystemSource::Estimation { path } => run_linear_estimation(cfg, ctx, path, gamma_tol)?,
    };

    let out_dir = ctx
        .out_override
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| {
        Error::Validation(format!("cannot create output directory {}: {e}", out_dir.display()))
    })?;

    let csv_path = out_dir.join(format!("{}.csv", cfg.id));
    write_csv(&csv_path, cfg.steps, &columns)?;

    let summary = ExperimentSummary {
        id: cfg.id.clone(),
        steps: cfg.steps,
        gamma_tol,
        seeds: collect_seeds(cfg),
        policies: columns.into_iter().map(|c| c.summary).collect(),
        config: cfg.clone(),
    };
    for row in &summary.policies {
        if let Some(check) = &row.regret_bound {
            if !check.satisfied {
                eprintln!(
                    "warning: policy {} exceeded its regret certificate ({:.6e} > {:.6e})",
                    row.policy, check.regret, check.gamma_sq_times_energy
                );
            }
        }
    }
    let summary_path = out_dir.join(format!("{}-summary.json", cfg.id));
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Numerical(format!("summary serialization: {e}")))?;
    std::fs::write(&summary_path, text + "\n").map_err(|e| {
        Error::Validation(format!("cannot write {}: {e}", summary_path.display()))
    })?;

    Ok(ExperimentOutcome { csv_path, summary_path, summary })
}

/// Print the per-policy comparison as an aligned text table.
pub fn print_table(summary: &ExperimentSummary) {
    println!(
        "{:<12} {:>16} {:>22} {:>14}",
        "policy", "total_cost", "regret_vs_noncausal", "gamma_opt"
    );
    for row in &summary.policies {
        let regret = row
            .regret_vs_noncausal
            .map_or_else(|| "-".to_string(), |r| format!("{r:.6e}"));
        let gamma = row
            .gamma
            .as_ref()
            .map_or_else(|| "-".to_string(), |g| format!("{:.6e}", g.gamma_opt));
        println!(
            "{:<12} {:>16} {:>22} {:>14}",
            row.policy,
            format!("{:.6e}", row.total_cost),
            regret,
            gamma
        );
    }
}

fn reject_duplicate_policies(policies: &[String]) -> Result<()> {
    for (i, p) in policies.iter().enumerate() {
        if policies[..i].contains(p) {
            return Err(Error::Validation(format!("policy '{p}' listed twice")));
        }
    }
    Ok(())
}

fn collect_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    [Some(&cfg.disturbance), cfg.noise.as_ref()]
        .into_iter()
        .flatten()
        .filter_map(DisturbanceSpec::seed)
        .collect()
}

fn resolve(path: &Path, base: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn cumulative(steps: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    steps
        .iter()
        .map(|v| {
            total += v;
            total
        })
        .collect()
}

/// Per-step quadratic cost of a control trajectory under the system weights.
fn quadratic_steps(sys: &ControlSystem, u: &Signal, x: &Signal) -> Vec<f64> {
    (0..sys.horizon())
        .map(|t| {
            let xt = &x.values[t];
            let ut = &u.values[t];
            (xt.transpose() * &sys.q[t] * xt)[(0, 0)] + (ut.transpose() * &sys.r[t] * ut)[(0, 0)]
        })
        .collect()
}

/// Per-step squared estimation error of target estimates against the truth.
fn error_steps(estimates: &Signal, truth: &Signal) -> Vec<f64> {
    estimates
        .values
        .iter()
        .zip(&truth.values)
        .map(|(e, s)| (e - s).norm_squared())
        .collect()
}

fn write_csv(path: &Path, steps: usize, columns: &[Column]) -> Result<()> {
    let mut text = String::from("t");
    for c in columns {
        text.push(',');
        text.push_str(&c.summary.policy);
    }
    text.push('\n');
    for k in 0..steps {
        text.push_str(&(k + 1).to_string());
        for c in columns {
            text.push_str(&format!(",{:.11e}", c.cumulative[k]));
        }
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))
}

/// The pendulum linearized about the origin, repeated over a window with
/// unit weights: the level bisected on this window is the certificate the
/// receding-horizon loop starts from.
fn origin_control_window(model: &NonlinearModel, horizon: usize) -> Result<ControlSystem> {
    let x0 = DVector::zeros(model.state_dim);
    let u0 = DVector::zeros(model.control_dim);
    let w0 = DVector::zeros(model.disturbance_dim);
    let (a, bu, bw) = model.linearize_dynamics(&x0, &u0, &w0);
    ControlSystem::new(
        vec![a; horizon],
        vec![bu; horizon],
        vec![bw; horizon],
        vec![DMatrix::identity(model.state_dim, model.state_dim); horizon],
        vec![DMatrix::identity(model.control_dim, model.control_dim); horizon],
    )
}

/// The demodulator linearized along the zero trajectory: constant dynamics,
/// a time-varying observation row, and an identity target map.
fn origin_estimation_window(model: &NonlinearModel, steps: usize) -> Result<EstimationSystem> {
    let x0 = DVector::zeros(model.state_dim);
    let u0 = DVector::zeros(model.control_dim);
    let w0 = DVector::zeros(model.disturbance_dim);
    let (a, b, _) = model.linearize_dynamics(&x0, &u0, &w0);
    let c = (0..steps)
        .map(|tau| model.jac_obs(&x0, tau as f64 * model.delta))
        .collect::<Result<Vec<_>>>()?;
    EstimationSystem::new(
        vec![a; steps],
        vec![b; steps],
        c,
        vec![DMatrix::identity(model.state_dim, model.state_dim); steps],
    )
}

fn run_pendulum(cfg: &ExperimentConfig, ctx: &RunContext, gamma_tol: f64) -> Result<Vec<Column>> {
    let model = pendulum_model(1.0, 1.0, 1.0, 1.0, 0.1)?;
    let steps = cfg.steps;
    let horizon = cfg.horizon.unwrap_or(steps);
    let kinds = cfg
        .policies
        .iter()
        .map(|p| match p.as_str() {
            "h2" => Ok(PolicyKind::H2),
            "hinf" => Ok(PolicyKind::Hinf),
            "regret" => Ok(PolicyKind::RegretOpt),
            "noncausal" => Ok(PolicyKind::Noncausal),
            other => Err(Error::Validation(format!(
                "unknown policy '{other}' for the pendulum benchmark (expected h2, hinf, regret, or noncausal)"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let w = gen_disturbance(&cfg.disturbance, steps, model.disturbance_dim, model.delta, &ctx.base_dir)?;

    let runs = kinds
        .iter()
        .map(|&kind| mpc_loop(&model, kind, &w, steps, horizon, gamma_tol))
        .collect::<Result<Vec<_>>>()?;
    let noncausal_total = match runs.iter().position(|r| r.label == "noncausal") {
        Some(i) => runs[i].total(),
        None => mpc_loop(&model, PolicyKind::Noncausal, &w, steps, horizon, gamma_tol)?.total(),
    };

    let window = origin_control_window(&model, horizon)?;
    kinds
        .iter()
        .zip(runs)
        .map(|(&kind, run)| {
            let gamma = match kind {
                PolicyKind::Hinf => Some(optimal_hinf_controller(&window, gamma_tol)?.1),
                PolicyKind::RegretOpt => {
                    Some(optimal_certainty_equivalent_regret_controller(&window, gamma_tol)?.1)
                }
                _ => None,
            };
            Ok(Column {
                summary: PolicySummary {
                    policy: run.label.clone(),
                    total_cost: run.total(),
                    regret_vs_noncausal: Some(run.total() - noncausal_total),
                    gamma,
                    regret_bound: None,
                    diagnostics: run.diagnostics.clone(),
                },
                cumulative: run.cumulative,
            })
        })
        .collect()
}

fn run_fm(cfg: &ExperimentConfig, ctx: &RunContext, gamma_tol: f64) -> Result<Vec<Column>> {
    let model = fm_model(1.0, 1.0, 0.1)?;
    let steps = cfg.steps;
    if cfg.horizon.is_some_and(|h| h != steps) {
        return Err(Error::Validation(
            "the filtering benchmark synthesizes on the full record; horizon must equal steps".into(),
        ));
    }
    let kinds = cfg
        .policies
        .iter()
        .map(|p| match p.as_str() {
            "ekf" => Ok(FilterKind::Ekf),
            "regret" => Ok(FilterKind::RegretOpt),
            other => Err(Error::Validation(format!(
                "unknown policy '{other}' for the filtering benchmark (expected ekf or regret)"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let u = gen_disturbance(&cfg.disturbance, steps, model.control_dim, model.delta, &ctx.base_dir)?;
    let v = match &cfg.noise {
        Some(spec) => gen_disturbance(spec, steps, model.observation_dim, model.delta, &ctx.base_dir)?,
        None => Signal::zeros(steps, model.observation_dim),
    };

    kinds
        .iter()
        .map(|&kind| {
            let run = ekf_style_loop(&model, kind, &u, &v, steps, gamma_tol)?;
            let gamma = match kind {
                FilterKind::RegretOpt => {
                    let nominal = origin_estimation_window(&model, steps)?;
                    Some(optimal_certainty_equivalent_regret_filter(&nominal, gamma_tol)?.1)
                }
                FilterKind::Ekf => None,
            };
            Ok(Column {
                summary: PolicySummary {
                    policy: run.label.clone(),
                    total_cost: run.total(),
                    regret_vs_noncausal: None,
                    gamma,
                    regret_bound: None,
                    diagnostics: run.diagnostics.clone(),
                },
                cumulative: run.cumulative,
            })
        })
        .collect()
}

fn load_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))
}

fn check_steps_match(cfg: &ExperimentConfig, horizon: usize) -> Result<()> {
    if cfg.steps != horizon {
        return Err(Error::Validation(format!(
            "steps ({}) must match the file system's horizon ({horizon})",
            cfg.steps
        )));
    }
    if cfg.horizon.is_some_and(|h| h != horizon) {
        return Err(Error::Validation(format!(
            "horizon override ({}) conflicts with the file system's horizon ({horizon})",
            cfg.horizon.unwrap()
        )));
    }
    Ok(())
}

fn run_linear_control(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    path: &Path,
    gamma_tol: f64,
) -> Result<Vec<Column>> {
    let sys = ControlSystem::from_json_str(&load_text(&resolve(path, &ctx.base_dir))?)?;
    check_steps_match(cfg, sys.horizon())?;
    // File-backed systems carry no sampling period; sinusoid frequencies are
    // interpreted per step.
    let w = gen_disturbance(&cfg.disturbance, sys.horizon(), sys.disturbance_dim(), 1.0, &ctx.base_dir)?;
    let (nc_u, nc_cost) = noncausal_control(&sys, &w)?;

    cfg.policies
        .iter()
        .map(|policy| {
            let (u, x, cost, gamma) = match policy.as_str() {
                "h2" => {
                    let (u, x, cost) = lqr_controller(&sys)?.run(&w)?;
                    (u, x, cost, None)
                }
                "hinf" => {
                    let (ctrl, cert) = optimal_hinf_controller(&sys, gamma_tol)?;
                    let (u, x, cost) = ctrl.run(&w)?;
                    (u, x, cost, Some(cert))
                }
                "regret" => {
                    let (ctrl, cert) = optimal_regret_controller(&sys, gamma_tol)?;
                    let (u, x, cost) = ctrl.run(&w)?;
                    (u, x, cost, Some(cert))
                }
                "noncausal" => {
                    let (x, cost) = simulate_control(&sys, &nc_u, &w)?;
                    (nc_u.clone(), x, cost, None)
                }
                other => {
                    return Err(Error::Validation(format!(
                        "unknown policy '{other}' for a control system (expected h2, hinf, regret, or noncausal)"
                    )))
                }
            };
            let regret = cost - nc_cost;
            let regret_bound = match (policy.as_str(), &gamma) {
                ("regret", Some(cert)) => Some(RegretBoundCheck::new(regret, w.energy(), cert.gamma_opt)),
                _ => None,
            };
            Ok(Column {
                cumulative: cumulative(&quadratic_steps(&sys, &u, &x)),
                summary: PolicySummary {
                    policy: policy.clone(),
                    total_cost: cost,
                    regret_vs_noncausal: Some(regret),
                    gamma,
                    regret_bound,
                    diagnostics: Vec::new(),
                },
            })
        })
        .collect()
}

fn run_linear_estimation(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    path: &Path,
    gamma_tol: f64,
) -> Result<Vec<Column>> {
    let sys = EstimationSystem::from_json_str(&load_text(&resolve(path, &ctx.base_dir))?)?;
    check_steps_match(cfg, sys.horizon())?;
    let u = gen_disturbance(&cfg.disturbance, sys.horizon(), sys.input_dim(), 1.0, &ctx.base_dir)?;
    let v = match &cfg.noise {
        Some(spec) => gen_disturbance(spec, sys.horizon(), sys.measurement_dim(), 1.0, &ctx.base_dir)?,
        None => Signal::zeros(sys.horizon(), sys.measurement_dim()),
    };
    let (y, truth) = simulate_estimation(&sys, &u, &v)?;
    let nc = noncausal_estimate(&sys, &y)?;
    let nc_total: f64 = error_steps(&nc, &truth).iter().sum();
    let driving_energy = u.energy() + v.energy();

    cfg.policies
        .iter()
        .map(|policy| {
            let (estimates, gamma) = match policy.as_str() {
                "kalman" => (kalman_estimator(&sys)?.run(&y)?, None),
                "hinf" => {
                    let (filter, cert) = optimal_hinf_estimator(&sys, gamma_tol)?;
                    (filter.run(&y)?, Some(cert))
                }
                "regret" => {
                    let (filter, cert) = optimal_regret_filter(&sys, gamma_tol)?;
                    (filter.run(&y)?, Some(cert))
                }
                "noncausal" => (nc.clone(), None),
                other => {
                    return Err(Error::Validation(format!(
                        "unknown policy '{other}' for an estimation system (expected kalman, hinf, regret, or noncausal)"
                    )))
                }
            };
            let steps = error_steps(&estimates, &truth);
            let total: f64 = steps.iter().sum();
            let regret = total - nc_total;
            let regret_bound = match (policy.as_str(), &gamma) {
                ("regret", Some(cert)) => {
                    Some(RegretBoundCheck::new(regret, driving_energy, cert.gamma_opt))
                }
                _ => None,
            };
            Ok(Column {
                cumulative: cumulative(&steps),
                summary: PolicySummary {
                    policy: policy.clone(),
                    total_cost: total,
                    regret_vs_noncausal: Some(regret),
                    gamma,
                    regret_bound,
                    diagnostics: Vec::new(),
                },
            })
        })
        .collect()
}

/// The named experiments behind `regretctl bench`.
pub const BUILTIN_EXPERIMENTS: [&str; 7] = [
    "pendulum-sin30",
    "pendulum-sin10",
    "pendulum-gaussian",
    "pendulum-sawtooth",
    "fm-sin10",
    "fm-sinusoid-sum",
    "fm-gaussian",
];

/// Construct the configuration for a named built-in experiment. A seed
/// override replaces the stochastic records' seeds (the measurement-noise
/// stream gets `seed + 1` to stay distinct from the process stream).
pub fn builtin_config(id: &str, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let control_policies =
        || vec!["h2".to_string(), "hinf".to_string(), "regret".to_string(), "noncausal".to_string()];
    let filter_policies = || vec!["ekf".to_string(), "regret".to_string()];
    let sin = |frequency: f64, amplitude: f64| DisturbanceSpec::Sinusoid {
        frequency,
        amplitude,
        wave: crate::config::Wave::Sin,
    };
    let cos = |frequency: f64, amplitude: f64| DisturbanceSpec::Sinusoid {
        frequency,
        amplitude,
        wave: crate::config::Wave::Cos,
    };

    let (system, disturbance, noise, policies) = match id {
        "pendulum-sin30" => (SystemSource::Pendulum, sin(30.0, 1.0), None, control_policies()),
        "pendulum-sin10" => (SystemSource::Pendulum, sin(10.0, 1.0), None, control_policies()),
        "pendulum-gaussian" => (
            SystemSource::Pendulum,
            DisturbanceSpec::Gaussian { seed: 12 },
            None,
            control_policies(),
        ),
        "pendulum-sawtooth" => (
            SystemSource::Pendulum,
            DisturbanceSpec::Sawtooth { period: 10, amplitude: 1.0 },
            None,
            control_policies(),
        ),
        "fm-sin10" => (SystemSource::Fm, sin(10.0, 1.0), Some(cos(10.0, 1.0)), filter_policies()),
        "fm-sinusoid-sum" => (
            SystemSource::Fm,
            DisturbanceSpec::SinusoidSum {
                terms: vec![
                    crate::config::SinusoidTerm {
                        wave: crate::config::Wave::Sin,
                        frequency: 10.0,
                        amplitude: 1.0,
                    },
                    crate::config::SinusoidTerm {
                        wave: crate::config::Wave::Cos,
                        frequency: 30.0,
                        amplitude: 2.0,
                    },
                ],
            },
            Some(DisturbanceSpec::SinusoidSum {
                terms: vec![
                    crate::config::SinusoidTerm {
                        wave: crate::config::Wave::Cos,
                        frequency: 10.0,
                        amplitude: 1.0,
                    },
                    crate::config::SinusoidTerm {
                        wave: crate::config::Wave::Sin,
                        frequency: 10.0,
                        amplitude: 0.5,
                    },
                ],
            }),
            filter_policies(),
        ),
        "fm-gaussian" => (
            SystemSource::Fm,
            DisturbanceSpec::Gaussian { seed: 11 },
            Some(DisturbanceSpec::Gaussian { seed: 12 }),
            filter_policies(),
        ),
        other => {
            return Err(Error::Validation(format!(
                "unknown experiment '{other}' (available: {})",
                BUILTIN_EXPERIMENTS.join(", ")
            )))
        }
    };

    let mut disturbance = disturbance;
    let mut noise = noise;
    if let Some(seed) = seed_override {
        disturbance.override_seed(seed);
        if let Some(spec) = noise.as_mut() {
            spec.override_seed(seed + 1);
        }
    }

    Ok(ExperimentConfig {
        id: id.to_string(),
        system,
        disturbance,
        noise,
        policies,
        steps: 100,
        horizon: None,
        gamma_tol: None,
        output: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_id_resolves() {
        for id in BUILTIN_EXPERIMENTS {
            let cfg = builtin_config(id, None).unwrap();
            assert_eq!(cfg.id, id);
            assert_eq!(cfg.steps, 100);
        }
        assert!(builtin_config("pendulum-square", None).is_err());
    }

    #[test]
    fn seed_override_reaches_both_streams() {
        let cfg = builtin_config("fm-gaussian", Some(40)).unwrap();
        assert_eq!(cfg.disturbance.seed(), Some(40));
        assert_eq!(cfg.noise.as_ref().unwrap().seed(), Some(41));
    }

    #[test]
    fn linear_control_rows_cross_check_the_certificate() {
        let dir = std::env::temp_dir().join(format!("regretctl-unit-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let sys_path = dir.join("sys.json");
        std::fs::write(
            &sys_path,
            r#"{"T": 6, "A": [[0.9, 0.2], [0.0, 0.8]], "Bu": [[1.0], [0.4]],
               "Bw": [[0.5], [1.0]], "Q": [[1.0, 0.0], [0.0, 1.0]], "R": [[1.0]]}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig {
            id: "unit".into(),
            system: SystemSource::Control { path: sys_path },
            disturbance: DisturbanceSpec::Gaussian { seed: 5 },
            noise: None,
            policies: vec!["h2".into(), "regret".into(), "noncausal".into()],
            steps: 6,
            horizon: None,
            gamma_tol: None,
            output: Some(dir.clone()),
        };
        let ctx = RunContext {
            out_override: None,
            gamma_tol: 1e-4,
            base_dir: dir.clone(),
        };
        let outcome = run_experiment(&cfg, &ctx).unwrap();
        let rows = &outcome.summary.policies;
        assert_eq!(rows.len(), 3);
        let nc = rows.iter().find(|r| r.policy == "noncausal").unwrap();
        assert!(nc.regret_vs_noncausal.unwrap().abs() < 1e-9);
        let regret = rows.iter().find(|r| r.policy == "regret").unwrap();
        let check = regret.regret_bound.as_ref().unwrap();
        assert!(check.satisfied, "regret {} bound {}", check.regret, check.gamma_sq_times_energy);
        for row in rows {
            assert!(row.total_cost >= nc.total_cost - 1e-9);
        }
        let csv = std::fs::read_to_string(&outcome.csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,h2,regret,noncausal");
        assert_eq!(lines.count(), 6);
        std::fs::remove_dir_all(&dir).ok();
    }
}
