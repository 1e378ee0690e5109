//! Scenario file format: parsing, validation and serialization.
//!
//! Scenarios are TOML documents. Syntax and type errors surface with the
//! parser's line/column information; semantic errors carry the path of the
//! offending field (`robots[1].specialization`, `params.kappa`, ...).
//! Omitted parameters fall back to the documented defaults.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use taskalloc::allocation::{AllocParams, GlobalSpec, Specialization};
use taskalloc::sim::{RobotSpec, Scenario};
use taskalloc::tasks::{GammaKind, GammaSpec, TaskSpec};
use thiserror::Error;

pub const DEFAULT_DT: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario syntax error: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("{path}: {message}")]
    Semantic { path: String, message: String },
}

fn semantic(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic {
        path: path.into(),
        message: message.into(),
    }
}

/// On-disk mirror of [`Scenario`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dimension: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub duration: f64,
    pub pi_star: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaFile>,
    pub robots: Vec<RobotFile>,
    pub tasks: Vec<TaskFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotFile {
    pub start: Vec<f64>,
    pub specialization: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    #[serde(rename = "type")]
    pub kind: String,
    pub target: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_reg: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaFile {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

/// Parses and validates a scenario document, applying defaults for any
/// omitted parameter.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text)?;
    scenario_from_file(&file)
}

pub fn scenario_from_file(file: &ScenarioFile) -> Result<Scenario, ScenarioError> {
    if file.dimension == 0 {
        return Err(semantic("dimension", "must be at least 1"));
    }
    let dt = file.dt.unwrap_or(DEFAULT_DT);
    if !(dt > 0.0) {
        return Err(semantic("dt", "must be positive"));
    }
    if !(file.duration > dt) {
        return Err(semantic("duration", "must exceed dt"));
    }
    if file.tasks.is_empty() {
        return Err(semantic("tasks", "at least one task required"));
    }
    if file.robots.is_empty() {
        return Err(semantic("robots", "at least one robot required"));
    }

    let mut tasks = Vec::with_capacity(file.tasks.len());
    for (t, task) in file.tasks.iter().enumerate() {
        if task.kind != "goto" {
            return Err(semantic(
                format!("tasks[{t}].type"),
                format!("unknown task type '{}', expected 'goto'", task.kind),
            ));
        }
        if task.target.len() != file.dimension {
            return Err(semantic(
                format!("tasks[{t}].target"),
                format!(
                    "expected {} coordinates, got {}",
                    file.dimension,
                    task.target.len()
                ),
            ));
        }
        let mut spec = TaskSpec::goto(DVector::from_row_slice(&task.target));
        if let Some(label) = &task.label {
            spec = spec.with_label(label.clone());
        }
        tasks.push(spec);
    }

    let mut robots = Vec::with_capacity(file.robots.len());
    for (i, robot) in file.robots.iter().enumerate() {
        if robot.start.len() != file.dimension {
            return Err(semantic(
                format!("robots[{i}].start"),
                format!(
                    "expected {} coordinates, got {}",
                    file.dimension,
                    robot.start.len()
                ),
            ));
        }
        if robot.specialization.len() != tasks.len() {
            return Err(semantic(
                format!("robots[{i}].specialization"),
                format!(
                    "expected one entry per task ({}), got {}",
                    tasks.len(),
                    robot.specialization.len()
                ),
            ));
        }
        if let Some(j) = robot.specialization.iter().position(|&s| !(s >= 0.0)) {
            return Err(semantic(
                format!("robots[{i}].specialization"),
                format!("negative entry at index {j}"),
            ));
        }
        robots.push(RobotSpec {
            start: DVector::from_row_slice(&robot.start),
            specialization: Specialization::new(DVector::from_row_slice(
                &robot.specialization,
            ))
            .expect("nonnegativity checked above"),
        });
    }

    if file.pi_star.len() != tasks.len() {
        return Err(semantic(
            "pi_star",
            format!(
                "expected one entry per task ({}), got {}",
                tasks.len(),
                file.pi_star.len()
            ),
        ));
    }
    if let Some(m) = file.pi_star.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(semantic(
            format!("pi_star[{m}]"),
            "must lie in [0, 1]".to_string(),
        ));
    }
    let global_spec = GlobalSpec::new(DVector::from_row_slice(&file.pi_star))
        .expect("range checked above");

    let defaults = AllocParams::default();
    let pf = file.params.clone().unwrap_or_default();
    let params = AllocParams {
        c: pf.c.unwrap_or(defaults.c),
        kappa: pf.kappa.unwrap_or(defaults.kappa),
        delta_max: pf.delta_max.unwrap_or(defaults.delta_max),
        eps_reg: pf.eps_reg.unwrap_or(defaults.eps_reg),
    };
    if !(params.c > 0.0) {
        return Err(semantic("params.C", "must be positive"));
    }
    if !(params.kappa > 1.0) {
        return Err(semantic("params.kappa", "kappa must exceed 1"));
    }
    if !(params.delta_max > 0.0) {
        return Err(semantic("params.delta_max", "must be positive"));
    }
    if !(params.eps_reg >= 0.0) {
        return Err(semantic("params.eps_reg", "must be nonnegative"));
    }

    let gamma = match &file.gamma {
        None => GammaSpec::default(),
        Some(g) => {
            let gain = g.gain.unwrap_or(1.0);
            if !(gain > 0.0) {
                return Err(semantic("gamma.gain", "must be positive"));
            }
            let kind = match g.kind.as_str() {
                "linear" => GammaKind::Linear,
                "cubic" => GammaKind::Cubic,
                other => {
                    return Err(semantic(
                        "gamma.kind",
                        format!("unknown kind '{other}', expected 'linear' or 'cubic'"),
                    ))
                }
            };
            GammaSpec { kind, gain }
        }
    };

    let scenario = Scenario {
        dim: file.dimension,
        robots,
        tasks,
        global_spec,
        params,
        gamma,
        dt,
        duration: file.duration,
    };
    scenario
        .validate()
        .map_err(|e| semantic("scenario", e.to_string()))?;
    Ok(scenario)
}

/// Serializes a scenario so that parsing the output reproduces it exactly.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    let file = ScenarioFile {
        dimension: scenario.dim,
        dt: Some(scenario.dt),
        duration: scenario.duration,
        pi_star: scenario.global_spec.pi_star.iter().copied().collect(),
        params: Some(ParamsFile {
            c: Some(scenario.params.c),
            kappa: Some(scenario.params.kappa),
            delta_max: Some(scenario.params.delta_max),
            eps_reg: Some(scenario.params.eps_reg),
        }),
        gamma: Some(GammaFile {
            kind: match scenario.gamma.kind {
                GammaKind::Linear => "linear".to_string(),
                GammaKind::Cubic => "cubic".to_string(),
            },
            gain: Some(scenario.gamma.gain),
        }),
        robots: scenario
            .robots
            .iter()
            .map(|r| RobotFile {
                start: r.start.iter().copied().collect(),
                specialization: r.specialization.entries().iter().copied().collect(),
            })
            .collect(),
        tasks: scenario
            .tasks
            .iter()
            .map(|t| TaskFile {
                kind: "goto".to_string(),
                target: t.target().iter().copied().collect(),
                label: t.label.clone(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("scenario files serialize")
}
