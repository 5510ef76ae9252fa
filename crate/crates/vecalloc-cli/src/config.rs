//! On-disk configuration documents.
//!
//! A configuration file is a single JSON object whose top-level keys mirror
//! the library's domain types: `body` (required), and optional `smoothing`,
//! `convex`, `classic`, `scenario`, and `kb` sections. Angles in files are
//! degrees (operators quote servo rates and gimbal positions in degrees);
//! they are converted to radians at parse time. Forces are newtons, torques
//! newton-metres, positions metres, times seconds. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use vecalloc::nalgebra::{DVector, Vector3};
use vecalloc::{
    build_mapping, solve_kb, ActuatorCommand, ActuatorSpec, AllocatorChoice, Axis, BodyConfig,
    ClassicParams, ConvexWeights, KbProblem, KernelDirection, MappingMatrix, MountKind,
    ScenarioConfig, SmoothingMode, SmoothingParams, WrenchSignal, DEFAULT_SEEDS,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub body: BodyDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex: Option<ConvexDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classic: Option<ClassicDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb: Option<KbSectionDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDoc {
    pub actuators: Vec<ActuatorDoc>,
    /// Axis labels: "fx", "fy", "fz", "tx", "ty", "tz".
    pub controlled_axes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorDoc {
    /// Mount point in body frame [m].
    pub position: [f64; 3],
    /// Rotor handedness for the drag-torque model: -1, 0, or +1.
    #[serde(default)]
    pub spin: i8,
    /// Drag-to-thrust ratio [m]; must be 0 when spin is 0.
    #[serde(default)]
    pub kappa_d: f64,
    pub mount: MountDoc,
    /// Thrust saturation [N].
    pub t_max: f64,
    /// Gimbal slew-rate limit [deg/s].
    pub rate_limit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MountDoc {
    /// Azimuth steering at fixed elevation [deg]; elevation must be ±90.
    Azimuth { elevation: f64 },
    /// Elevation steering in the tilt plane selected by a fixed azimuth [deg].
    Elevation { azimuth: f64 },
    /// Fully orientable.
    Spherical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingDoc {
    pub k_a: f64,
    pub k_b: f64,
    /// Thrust floor the null-space term defends [N].
    pub eps2: f64,
    pub mode: SmoothingModeDoc,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingModeDoc {
    Sigmoid,
    StrictRamp,
}

/// A scalar replicated over a diagonal, or the full diagonal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    PerEntry(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(&self, len: usize, what: &str) -> Result<DVector<f64>, CliError> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(DVector::from_element(len, *v)),
            ScalarOrVec::PerEntry(v) => {
                if v.len() != len {
                    return Err(CliError::Config(format!(
                        "{what}: expected {len} entries, got {}",
                        v.len()
                    )));
                }
                Ok(DVector::from_vec(v.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexDoc {
    /// Thrust-energy weight; scalar = one value per force coordinate.
    pub w: ScalarOrVec,
    /// Slack penalty; scalar = one value per controlled axis.
    pub q: ScalarOrVec,
    /// Gain of the kernel-direction smoothing term.
    pub q1: f64,
    /// Kernel-direction thrust setpoint [N].
    pub q2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicDoc {
    /// Thrust-energy weight; scalar = one value per actuator.
    pub w: ScalarOrVec,
    /// Slack penalty; scalar = one value per controlled axis.
    pub q: ScalarOrVec,
    /// Angle-change penalty; scalar = one value per free gimbal angle.
    pub omega: ScalarOrVec,
    /// Singularity-penalty gain.
    pub rho: f64,
    /// Regularizer in the singularity-penalty denominator.
    pub eps_det: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub allocator: AllocatorDoc,
    pub signal: SignalDoc,
    /// Step size [s].
    pub dt: f64,
    /// Run length [s].
    pub duration: f64,
    /// Starting actuator state; thrusters at rest pointing along their zero
    /// angles when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<CommandDoc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorDoc {
    Pinv,
    Smooth,
    Convex,
    Classic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandDoc {
    /// [N]
    pub thrust: f64,
    /// Elevation [deg].
    #[serde(default)]
    pub alpha: f64,
    /// Azimuth [deg].
    #[serde(default)]
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalDoc {
    Sine {
        axis: String,
        /// [N] or [N·m]
        amplitude: f64,
        /// [Hz]
        frequency: f64,
    },
    RampHold {
        axis: String,
        peak: f64,
        rise_time: f64,
        fall_time: f64,
    },
    Constant {
        /// One entry per controlled axis.
        wrench: Vec<f64>,
    },
    Sum {
        components: Vec<SignalDoc>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbSectionDoc {
    /// Wrenches whose allocations the rest direction must not disturb.
    #[serde(default)]
    pub typical_wrenches: Vec<Vec<f64>>,
    /// Per-actuator floor on the rest-direction block norms.
    #[serde(default = "default_min_block_norm")]
    pub min_block_norm: f64,
    /// Random restarts of the direction search.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// RNG seed for the restarts.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_min_block_norm() -> f64 {
    1.0
}
fn default_seeds() -> usize {
    DEFAULT_SEEDS
}
fn default_seed() -> u64 {
    7
}

impl Default for KbSectionDoc {
    fn default() -> Self {
        Self {
            typical_wrenches: Vec::new(),
            min_block_norm: default_min_block_norm(),
            seeds: default_seeds(),
            seed: default_seed(),
        }
    }
}

pub fn load_config(path: &std::path::Path) -> Result<ConfigDocument, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<ConfigDocument, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("parse error: {e}")))
}

impl ConfigDocument {
    pub fn body(&self) -> Result<BodyConfig, CliError> {
        let mut actuators = Vec::with_capacity(self.body.actuators.len());
        for a in &self.body.actuators {
            let mount = match &a.mount {
                MountDoc::Azimuth { elevation } => MountKind::AzimuthOnly {
                    elevation: elevation.to_radians(),
                },
                MountDoc::Elevation { azimuth } => MountKind::ElevationOnly {
                    azimuth: azimuth.to_radians(),
                },
                MountDoc::Spherical => MountKind::FullSpherical,
            };
            actuators.push(ActuatorSpec {
                position: Vector3::new(a.position[0], a.position[1], a.position[2]),
                spin: a.spin,
                kappa_d: a.kappa_d,
                mount,
                t_max: a.t_max,
                rate_limit: a.rate_limit.to_radians(),
            });
        }
        let mut controlled_axes = Vec::with_capacity(self.body.controlled_axes.len());
        for label in &self.body.controlled_axes {
            controlled_axes.push(Axis::from_label(label).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown axis label {label:?}; expected one of fx, fy, fz, tx, ty, tz"
                ))
            })?);
        }
        Ok(BodyConfig {
            actuators,
            controlled_axes,
        })
    }

    pub fn smoothing_params(&self) -> Result<SmoothingParams, CliError> {
        let doc = self
            .smoothing
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no `smoothing` section".into()))?;
        let params = SmoothingParams {
            k_a: doc.k_a,
            k_b: doc.k_b,
            eps2: doc.eps2,
            mode: match doc.mode {
                SmoothingModeDoc::Sigmoid => SmoothingMode::Sigmoid,
                SmoothingModeDoc::StrictRamp => SmoothingMode::StrictRamp,
            },
        };
        params
            .validate()
            .map_err(|e| CliError::Config(format!("smoothing: {e}")))?;
        Ok(params)
    }

    pub fn convex_weights(&self, map: &MappingMatrix) -> Result<ConvexWeights, CliError> {
        let doc = self
            .convex
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no `convex` section".into()))?;
        Ok(ConvexWeights {
            w: doc.w.expand(map.force_dim(), "convex.w")?,
            q: doc.q.expand(map.wrench_dim(), "convex.q")?,
            q1: doc.q1,
            q2: doc.q2,
        })
    }

    pub fn classic_params(&self, body: &BodyConfig) -> Result<ClassicParams, CliError> {
        let doc = self
            .classic
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no `classic` section".into()))?;
        let free_angles: usize = body.actuators.iter().map(|a| a.mount.free_angles()).sum();
        Ok(ClassicParams {
            w: doc.w.expand(body.actuators.len(), "classic.w")?,
            q: doc.q.expand(body.controlled_axes.len(), "classic.q")?,
            omega: doc.omega.expand(free_angles, "classic.omega")?,
            rho: doc.rho,
            eps_det: doc.eps_det,
        })
    }

    /// Solve the rest direction requested by the `kb` section (defaults when
    /// the section is absent).
    pub fn solve_kernel(&self, map: &MappingMatrix) -> Result<KernelDirection, CliError> {
        let section = self.kb.clone().unwrap_or_default();
        let mut problem = KbProblem::new(map);
        problem.min_block_norm = section.min_block_norm;
        for (i, w) in section.typical_wrenches.iter().enumerate() {
            if w.len() != map.wrench_dim() {
                return Err(CliError::Config(format!(
                    "kb.typical_wrenches[{i}]: expected {} entries, got {}",
                    map.wrench_dim(),
                    w.len()
                )));
            }
            problem.typical_wrenches.push(DVector::from_vec(w.clone()));
        }
        let solution = solve_kb(&problem, section.seeds, section.seed)?;
        Ok(solution.direction)
    }

    fn build_signal(doc: &SignalDoc) -> Result<WrenchSignal, CliError> {
        let axis_of = |label: &str| {
            Axis::from_label(label)
                .ok_or_else(|| CliError::Config(format!("unknown axis label {label:?}")))
        };
        Ok(match doc {
            SignalDoc::Sine {
                axis,
                amplitude,
                frequency,
            } => WrenchSignal::Sine {
                axis: axis_of(axis)?,
                amplitude: *amplitude,
                frequency: *frequency,
            },
            SignalDoc::RampHold {
                axis,
                peak,
                rise_time,
                fall_time,
            } => WrenchSignal::RampHold {
                axis: axis_of(axis)?,
                peak: *peak,
                rise_time: *rise_time,
                fall_time: *fall_time,
            },
            SignalDoc::Constant { wrench } => {
                WrenchSignal::Constant(DVector::from_vec(wrench.clone()))
            }
            SignalDoc::Sum { components } => {
                let mut parts = Vec::with_capacity(components.len());
                for c in components {
                    parts.push(Self::build_signal(c)?);
                }
                WrenchSignal::Sum(parts)
            }
        })
    }

    pub fn initial_commands_for(
        &self,
        body: &BodyConfig,
    ) -> Result<Vec<ActuatorCommand>, CliError> {
        match self.scenario.as_ref().and_then(|s| s.initial.as_ref()) {
            None => Ok(vecalloc::initial_commands(body)),
            Some(docs) => {
                if docs.len() != body.actuators.len() {
                    return Err(CliError::Config(format!(
                        "scenario.initial: expected {} commands, got {}",
                        body.actuators.len(),
                        docs.len()
                    )));
                }
                Ok(docs
                    .iter()
                    .map(|d| ActuatorCommand {
                        thrust: d.thrust,
                        alpha: d.alpha.to_radians(),
                        beta: d.beta.to_radians(),
                    })
                    .collect())
            }
        }
    }

    /// Build the allocator named by the scenario section (or an explicit
    /// override), resolving weights and the kernel direction as needed.
    pub fn allocator_choice(
        &self,
        which: AllocatorDoc,
        map: &MappingMatrix,
    ) -> Result<AllocatorChoice, CliError> {
        Ok(match which {
            AllocatorDoc::Pinv => AllocatorChoice::Pinv,
            AllocatorDoc::Smooth => AllocatorChoice::Smooth {
                kernel: self.solve_kernel(map)?,
                params: self.smoothing_params()?,
            },
            AllocatorDoc::Convex => {
                let weights = self.convex_weights(map)?;
                let kernel = if weights.q1 > 0.0 {
                    Some((self.solve_kernel(map)?, self.smoothing_params()?))
                } else {
                    None
                };
                AllocatorChoice::Convex { kernel, weights }
            }
            AllocatorDoc::Classic => AllocatorChoice::Classic {
                params: self.classic_params(map.body())?,
            },
        })
    }

    /// Assemble the full scenario (body, allocator, signal, timing).
    pub fn scenario(&self, map: &MappingMatrix) -> Result<ScenarioConfig, CliError> {
        let doc = self
            .scenario
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no `scenario` section".into()))?;
        let body = map.body().clone();
        Ok(ScenarioConfig {
            initial: self.initial_commands_for(&body)?,
            allocator: self.allocator_choice(doc.allocator, map)?,
            signal: Self::build_signal(&doc.signal)?,
            dt: doc.dt,
            duration: doc.duration,
            body,
        })
    }
}

pub fn build_map(doc: &ConfigDocument) -> Result<MappingMatrix, CliError> {
    let body = doc.body()?;
    build_mapping(&body).map_err(|e| CliError::Config(format!("body: {e}")))
}
