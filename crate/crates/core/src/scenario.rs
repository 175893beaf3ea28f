//! JSON scenario files: modes, transitions, obstacles, boundary states,
//! initial mode sequence and planner overrides.

use crate::environment::Environment;
use crate::manifold::Pose;
use crate::models::{ModeRegistry, ModeSpec, TransitionSpec};
use crate::planner::{BoundaryCondition, PlanProblem, PlannerConfig};
use crate::prm::looping_mode_sequence;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field '{field}': {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Pose plus optional velocity. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    /// World-frame velocity; omitted means free.
    #[serde(default)]
    pub velocity: Option<[f64; 3]>,
}

impl StateSpec {
    pub fn boundary(&self) -> BoundaryCondition {
        BoundaryCondition {
            pose: Pose::from_yaw_pitch(Vector3::from(self.position), self.yaw, self.pitch),
            velocity: self.velocity.map(Vector3::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopingSpec {
    pub modes: Vec<String>,
    pub n_transitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    /// Mode definitions added to (or replacing) the built-in taxi, flight
    /// and hover modes.
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
    pub environment: Environment,
    pub start: StateSpec,
    pub goal: StateSpec,
    #[serde(default)]
    pub mode_sequence: Option<Vec<String>>,
    #[serde(default)]
    pub looping: Option<LoopingSpec>,
    #[serde(default)]
    pub planner: PlannerConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        for m in &mut s.modes {
            m.normalize();
        }
        s.validate()?;
        Ok(s)
    }

    pub fn registry(&self) -> Result<ModeRegistry, ScenarioError> {
        let mut r = ModeRegistry::builtin();
        for (i, m) in self.modes.iter().enumerate() {
            r.register(m.clone())
                .map_err(|e| invalid(format!("modes[{i}]"), e.to_string()))?;
        }
        for (i, t) in self.transitions.iter().enumerate() {
            r.allow(t.clone())
                .map_err(|e| invalid(format!("transitions[{i}]"), e.to_string()))?;
        }
        Ok(r)
    }

    /// The initial mode sequence, expanding a looping spec.
    pub fn sigma(&self) -> Result<Vec<String>, ScenarioError> {
        match (&self.mode_sequence, &self.looping) {
            (Some(seq), None) => Ok(seq.clone()),
            (None, Some(l)) => {
                looping_mode_sequence(&l.modes, l.n_transitions).map_err(|e| invalid("looping", e.to_string()))
            }
            (Some(_), Some(_)) => Err(invalid(
                "mode_sequence",
                "give either mode_sequence or looping, not both",
            )),
            (None, None) => Err(invalid("mode_sequence", "missing; give mode_sequence or looping")),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let registry = self.registry()?;
        let sigma = self.sigma()?;
        if sigma.is_empty() {
            return Err(invalid("mode_sequence", "empty"));
        }
        self.environment
            .validate()
            .map_err(|e| invalid("environment", e.to_string()))?;
        for (i, id) in sigma.iter().enumerate() {
            let mode = registry
                .mode(id)
                .map_err(|e| invalid(format!("mode_sequence[{i}]"), e.to_string()))?;
            if !self.environment.has_set(&mode.obstacle_set) {
                return Err(invalid(
                    format!("modes.{id}.obstacle_set"),
                    format!("unknown obstacle set '{}'", mode.obstacle_set),
                ));
            }
        }
        for w in sigma.windows(2) {
            registry
                .transition(&w[0], &w[1])
                .map_err(|e| invalid("transitions", e.to_string()))?;
        }
        for (name, st) in [("start", &self.start), ("goal", &self.goal)] {
            let finite = st.position.iter().chain([&st.yaw, &st.pitch]).all(|v| v.is_finite())
                && st.velocity.is_none_or(|v| v.iter().all(|x| x.is_finite()));
            if !finite {
                return Err(invalid(name, "state must be finite"));
            }
        }
        self.planner.validate().map_err(|e| invalid("planner", e))?;
        Ok(())
    }

    pub fn problem(&self) -> Result<PlanProblem, ScenarioError> {
        Ok(PlanProblem {
            registry: self.registry()?,
            environment: Arc::new(self.environment.clone()),
            start: self.start.boundary(),
            goal: self.goal.boundary(),
            sigma_init: self.sigma()?,
        })
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "environment": {"workspace": {"min": [0, -5, 0], "max": [20, 5, 0]}, "obstacle_sets": {"taxi": []}},
        "start": {"position": [0, 0, 0]},
        "goal": {"position": [10, 0, 0]},
        "mode_sequence": ["taxi"]
    }"#;

    #[test]
    fn minimal_loads_with_defaults() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.planner, PlannerConfig::default());
        assert_eq!(s.sigma().unwrap(), vec!["taxi"]);
        assert!(s.start.velocity.is_none());
    }

    #[test]
    fn unknown_set_is_named() {
        let text = MINIMAL.replace(r#""taxi": []"#, r#""ground": []"#);
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("'taxi'"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = Scenario::from_json("{\n  \"start\": 3,\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn looping_expands() {
        let text = MINIMAL
            .replace(
                r#""mode_sequence": ["taxi"]"#,
                r#""looping": {"modes": ["taxi", "flight"], "n_transitions": 2}"#,
            )
            .replace(r#""taxi": []"#, r#""taxi": [], "flight": []"#);
        let s = Scenario::from_json(&text).unwrap();
        assert_eq!(s.sigma().unwrap().len(), 4);
    }

    #[test]
    fn planner_overrides_apply() {
        let text = MINIMAL.replace(
            r#""mode_sequence""#,
            r#""planner": {"n_outer_iterations": 7}, "mode_sequence""#,
        );
        let s = Scenario::from_json(&text).unwrap();
        assert_eq!(s.planner.n_outer_iterations, 7);
        assert_eq!(s.planner.d_min, 0.5);
    }
}
