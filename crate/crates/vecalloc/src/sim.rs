//! Discrete-time closed-loop scenario runner.
//!
//! Each step evaluates a wrench reference signal, runs the selected allocator
//! to produce *command references*, then passes them through a servo model:
//! free gimbal angles slew toward the reference at most `rate_limit * dt` per
//! step (along the shorter wrapped arc), while thrusts apply instantly but
//! clipped to `[0, t_max]`. The wrench actually produced is computed from the
//! slewed commands, so an allocator that emits discontinuous references shows
//! up as tracking error rather than as teleporting actuators.
//!
//! Recorded time series are deterministic, and the CSV writer is
//! byte-reproducible across runs (17 significant digits, fixed column order).

use crate::alloc::{
    allocate_pinv, commands_to_wrench, forces_to_commands, wrap_angle, ActuatorCommand, EPS_THRUST,
};
use crate::body::{build_mapping, Axis, BodyConfig, BodyError, MountKind};
use crate::classic::{solve_classic, ClassicError, ClassicParams};
use crate::convex::{
    build_rate_cone, ConeConstraint, ConvexAllocator, ConvexError, ConvexWeights, SolveStatus,
};
use crate::smooth::{allocate_smooth, KernelDirection, SmoothingParams};
use nalgebra::DVector;
use std::io::{self, Write};
use thiserror::Error;

/// Wrench reference as a function of time.
#[derive(Debug, Clone)]
pub enum WrenchSignal {
    /// `amplitude * sin(2 pi frequency t)` on one controlled axis.
    Sine {
        axis: Axis,
        amplitude: f64,
        frequency: f64,
    },
    /// Triangular pulse on one controlled axis: linear rise to `peak` over
    /// `rise_time`, holding the peak only at the crest, then linear fall back
    /// to zero over `fall_time` (instantaneous drop when `fall_time` is zero).
    RampHold {
        axis: Axis,
        peak: f64,
        rise_time: f64,
        fall_time: f64,
    },
    /// Fixed wrench (length = number of controlled axes).
    Constant(DVector<f64>),
    /// Pointwise sum of component signals.
    Sum(Vec<WrenchSignal>),
}

impl WrenchSignal {
    fn validate(&self, cfg: &BodyConfig) -> Result<(), SimError> {
        match self {
            WrenchSignal::Sine {
                axis,
                amplitude,
                frequency,
            } => {
                axis_row(cfg, *axis)?;
                if !amplitude.is_finite() {
                    return Err(SimError::Config("sine amplitude must be finite".into()));
                }
                if !(*frequency > 0.0 && frequency.is_finite()) {
                    return Err(SimError::Config(format!(
                        "sine frequency must be positive (got {frequency})"
                    )));
                }
            }
            WrenchSignal::RampHold {
                axis,
                peak,
                rise_time,
                fall_time,
            } => {
                axis_row(cfg, *axis)?;
                if !peak.is_finite() {
                    return Err(SimError::Config("ramp peak must be finite".into()));
                }
                if !(*rise_time > 0.0 && rise_time.is_finite()) {
                    return Err(SimError::Config(format!(
                        "ramp rise time must be positive (got {rise_time})"
                    )));
                }
                if !(*fall_time >= 0.0 && fall_time.is_finite()) {
                    return Err(SimError::Config(format!(
                        "ramp fall time must be non-negative (got {fall_time})"
                    )));
                }
            }
            WrenchSignal::Constant(wrench) => {
                if wrench.len() != cfg.controlled_axes.len() {
                    return Err(SimError::Config(format!(
                        "constant wrench has length {}, expected {}",
                        wrench.len(),
                        cfg.controlled_axes.len()
                    )));
                }
                if !wrench.iter().all(|x| x.is_finite()) {
                    return Err(SimError::Config("constant wrench must be finite".into()));
                }
            }
            WrenchSignal::Sum(parts) => {
                for part in parts {
                    part.validate(cfg)?;
                }
            }
        }
        Ok(())
    }

    /// Evaluate the signal at time `t` as a wrench over the controlled axes.
    pub fn value(&self, t: f64, cfg: &BodyConfig) -> DVector<f64> {
        let l = cfg.controlled_axes.len();
        match self {
            WrenchSignal::Sine {
                axis,
                amplitude,
                frequency,
            } => {
                let mut tau = DVector::zeros(l);
                if let Ok(row) = axis_row(cfg, *axis) {
                    tau[row] = amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin();
                }
                tau
            }
            WrenchSignal::RampHold {
                axis,
                peak,
                rise_time,
                fall_time,
            } => {
                let level = if t < 0.0 {
                    0.0
                } else if t <= *rise_time {
                    peak * t / rise_time
                } else if *fall_time > 0.0 && t < rise_time + fall_time {
                    peak * (1.0 - (t - rise_time) / fall_time)
                } else {
                    0.0
                };
                let mut tau = DVector::zeros(l);
                if let Ok(row) = axis_row(cfg, *axis) {
                    tau[row] = level;
                }
                tau
            }
            WrenchSignal::Constant(wrench) => wrench.clone(),
            WrenchSignal::Sum(parts) => parts
                .iter()
                .fold(DVector::zeros(l), |acc, part| acc + part.value(t, cfg)),
        }
    }
}

fn axis_row(cfg: &BodyConfig, axis: Axis) -> Result<usize, SimError> {
    cfg.controlled_axes
        .iter()
        .position(|&a| a == axis)
        .ok_or_else(|| {
            SimError::Config(format!(
                "signal drives axis {} which the body does not control",
                axis.label()
            ))
        })
}

/// Which allocator closes the loop, with its tuning.
#[derive(Debug, Clone)]
pub enum AllocatorChoice {
    /// Minimum-norm allocation, commands extracted directly.
    Pinv,
    /// Minimum-norm plus the null-space smoothing term.
    Smooth {
        kernel: KernelDirection,
        params: SmoothingParams,
    },
    /// Constrained convex allocation; gimbal-rate cones are rebuilt each step
    /// from the previous step's *actual* (slewed) commands.
    Convex {
        kernel: Option<(KernelDirection, SmoothingParams)>,
        weights: ConvexWeights,
    },
    /// Nonconvex thrust/angle baseline.
    Classic { params: ClassicParams },
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub body: BodyConfig,
    pub allocator: AllocatorChoice,
    pub signal: WrenchSignal,
    /// Step [s], > 0.
    pub dt: f64,
    /// Total span [s], >= dt; the run records floor(duration/dt)+1 samples.
    pub duration: f64,
    /// State of the actuators at t = 0 (thrusts >= 0).
    pub initial: Vec<ActuatorCommand>,
}

/// One recorded simulation step.
#[derive(Debug, Clone)]
pub struct Step {
    pub t: f64,
    pub tau_ref: DVector<f64>,
    /// Wrench produced by the slewed (actual) commands.
    pub tau_produced: DVector<f64>,
    /// What the allocator asked for.
    pub commands_ref: Vec<ActuatorCommand>,
    /// What the servos delivered.
    pub commands_actual: Vec<ActuatorCommand>,
    /// Solver slack (zero for the exact allocators).
    pub slack: DVector<f64>,
    /// Fraction of the maximum quadratic power drawn by the actual thrusts.
    pub power_fraction: f64,
    /// Iteration count, when the allocator reports one.
    pub iterations: Option<usize>,
    /// Convex solver status, when applicable.
    pub status: Option<SolveStatus>,
}

#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub steps: Vec<Step>,
    pub dt: f64,
    /// Labels of the controlled axes, for column naming.
    pub axis_labels: Vec<&'static str>,
    pub actuator_count: usize,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error("convex allocator at step {step}: {source}")]
    Convex { step: usize, source: ConvexError },
    #[error("baseline allocator at step {step}: {source}")]
    Classic { step: usize, source: ClassicError },
}

/// Quadratic power model: `sum T_i^2 / sum t_max_i^2`.
pub fn power_fraction(commands: &[ActuatorCommand], cfg: &BodyConfig) -> f64 {
    let used: f64 = commands.iter().map(|c| c.thrust * c.thrust).sum();
    let capacity: f64 = cfg.actuators.iter().map(|a| a.t_max * a.t_max).sum();
    used / capacity
}

/// Move `from` toward `to` along the shorter wrapped arc, at most `budget`.
fn slew_angle(from: f64, to: f64, budget: f64) -> f64 {
    let delta = wrap_angle(to - from);
    wrap_angle(from + delta.clamp(-budget, budget))
}

fn servo_step(
    cfg: &BodyConfig,
    prev: &[ActuatorCommand],
    reference: &[ActuatorCommand],
    dt: f64,
) -> Vec<ActuatorCommand> {
    cfg.actuators
        .iter()
        .zip(prev.iter().zip(reference))
        .map(|(spec, (was, want))| {
            let budget = spec.rate_limit * dt;
            let (alpha, beta) = match spec.mount {
                MountKind::FullSpherical => (
                    slew_angle(was.alpha, want.alpha, budget),
                    slew_angle(was.beta, want.beta, budget),
                ),
                MountKind::AzimuthOnly { .. } => {
                    (want.alpha, slew_angle(was.beta, want.beta, budget))
                }
                MountKind::ElevationOnly { .. } => {
                    (slew_angle(was.alpha, want.alpha, budget), want.beta)
                }
            };
            ActuatorCommand {
                thrust: want.thrust.clamp(0.0, spec.t_max),
                alpha,
                beta,
            }
        })
        .collect()
}

/// Run the closed loop and record every step.
pub fn run_scenario(sc: &ScenarioConfig) -> Result<TimeSeries, SimError> {
    if !(sc.dt > 0.0 && sc.dt.is_finite()) {
        return Err(SimError::Config(format!(
            "time step must be positive (got {})",
            sc.dt
        )));
    }
    if !(sc.duration >= sc.dt && sc.duration.is_finite()) {
        return Err(SimError::Config(format!(
            "duration must be at least one step (got {} with dt {})",
            sc.duration, sc.dt
        )));
    }
    let cfg = &sc.body;
    let map = build_mapping(cfg)?;
    sc.signal.validate(cfg)?;
    if sc.initial.len() != cfg.actuators.len() {
        return Err(SimError::Config(format!(
            "expected {} initial commands, got {}",
            cfg.actuators.len(),
            sc.initial.len()
        )));
    }
    for (i, cmd) in sc.initial.iter().enumerate() {
        if !(cmd.thrust >= 0.0 && cmd.thrust.is_finite())
            || !cmd.alpha.is_finite()
            || !cmd.beta.is_finite()
        {
            return Err(SimError::Config(format!(
                "initial command {i} must be finite with thrust >= 0"
            )));
        }
    }

    let l = cfg.controlled_axes.len();
    let t_max: Vec<f64> = cfg.actuators.iter().map(|a| a.t_max).collect();
    let mut convex_solver = match &sc.allocator {
        AllocatorChoice::Convex { kernel, weights } => Some(
            ConvexAllocator::new(&map, kernel.clone(), weights.clone())
                .map_err(|source| SimError::Convex { step: 0, source })?,
        ),
        _ => None,
    };

    let rows = (sc.duration / sc.dt).floor() as usize + 1;
    let mut steps = Vec::with_capacity(rows);
    let mut prev_ref = sc.initial.clone();
    let mut prev_actual = sc.initial.clone();

    for k in 0..rows {
        let t = k as f64 * sc.dt;
        let tau_ref = sc.signal.value(t, cfg);

        let (commands_ref, slack, iterations, status) = match &sc.allocator {
            AllocatorChoice::Pinv => {
                let f = allocate_pinv(&map, &tau_ref);
                let cmds = forces_to_commands(&map, &f, &prev_ref, EPS_THRUST);
                (cmds, DVector::zeros(l), None, None)
            }
            AllocatorChoice::Smooth { kernel, params } => {
                let (f, _diag) = allocate_smooth(&map, kernel, params, &tau_ref);
                let cmds = forces_to_commands(&map, &f, &prev_ref, EPS_THRUST);
                (cmds, DVector::zeros(l), None, None)
            }
            AllocatorChoice::Convex { .. } => {
                let cones: Vec<ConeConstraint> = cfg
                    .actuators
                    .iter()
                    .zip(&prev_actual)
                    .map(|(spec, cmd)| build_rate_cone(cmd, spec, sc.dt))
                    .collect();
                let solver = convex_solver.as_mut().expect("convex solver initialized");
                let sol = solver
                    .solve(&tau_ref, &t_max, Some(&cones))
                    .map_err(|source| SimError::Convex { step: k, source })?;
                let cmds = forces_to_commands(&map, &sol.f, &prev_ref, EPS_THRUST);
                (cmds, sol.slack, Some(sol.iterations), Some(sol.status))
            }
            AllocatorChoice::Classic { params } => {
                let (cmds, slack) = solve_classic(cfg, params, &tau_ref, &prev_ref, sc.dt)
                    .map_err(|source| SimError::Classic { step: k, source })?;
                (cmds, slack, None, None)
            }
        };

        let commands_actual = servo_step(cfg, &prev_actual, &commands_ref, sc.dt);
        let tau_produced = commands_to_wrench(cfg, &commands_actual);
        steps.push(Step {
            t,
            tau_ref,
            tau_produced,
            power_fraction: power_fraction(&commands_actual, cfg),
            slack,
            iterations,
            status,
            commands_ref: commands_ref.clone(),
            commands_actual: commands_actual.clone(),
        });
        prev_ref = commands_ref;
        prev_actual = commands_actual;
    }

    Ok(TimeSeries {
        steps,
        dt: sc.dt,
        axis_labels: cfg.controlled_axes.iter().map(|a| a.label()).collect(),
        actuator_count: cfg.actuators.len(),
    })
}

/// Scenario-level summary statistics.
#[derive(Debug, Clone)]
pub struct TrackingMetrics {
    /// Per-axis RMS of `tau_ref - tau_produced` over the whole run.
    pub rms_error: DVector<f64>,
    /// Largest |slack| component seen.
    pub max_slack: f64,
    /// Largest wrapped angle change between consecutive actual commands.
    pub max_angle_step: f64,
    /// Largest wrapped angle change between consecutive command references.
    pub max_ref_angle_step: f64,
    /// Time integral of the power fraction [s].
    pub power_integral: f64,
}

pub fn tracking_metrics(ts: &TimeSeries) -> TrackingMetrics {
    let l = ts.axis_labels.len();
    let n = ts.steps.len().max(1);
    let mut sq = DVector::zeros(l);
    let mut max_slack = 0.0f64;
    let mut power_integral = 0.0;
    for step in &ts.steps {
        let err = &step.tau_ref - &step.tau_produced;
        for j in 0..l {
            sq[j] += err[j] * err[j];
        }
        max_slack = max_slack.max(step.slack.amax());
        power_integral += step.power_fraction * ts.dt;
    }
    let rms_error = sq.map(|s: f64| (s / n as f64).sqrt());

    let mut max_angle_step = 0.0f64;
    let mut max_ref_angle_step = 0.0f64;
    for pair in ts.steps.windows(2) {
        for (a, b) in pair[0].commands_actual.iter().zip(&pair[1].commands_actual) {
            max_angle_step = max_angle_step
                .max(wrap_angle(b.alpha - a.alpha).abs())
                .max(wrap_angle(b.beta - a.beta).abs());
        }
        for (a, b) in pair[0].commands_ref.iter().zip(&pair[1].commands_ref) {
            max_ref_angle_step = max_ref_angle_step
                .max(wrap_angle(b.alpha - a.alpha).abs())
                .max(wrap_angle(b.beta - a.beta).abs());
        }
    }
    TrackingMetrics {
        rms_error,
        max_slack,
        max_angle_step,
        max_ref_angle_step,
        power_integral,
    }
}

/// RMS of `tau_ref - tau_produced` on one axis over the steps whose time the
/// predicate keeps; NaN if the predicate keeps nothing.
pub fn rms_axis_error<F: Fn(f64) -> bool>(ts: &TimeSeries, axis_row: usize, keep: F) -> f64 {
    let mut sq = 0.0;
    let mut n = 0usize;
    for step in &ts.steps {
        if keep(step.t) {
            let e = step.tau_ref[axis_row] - step.tau_produced[axis_row];
            sq += e * e;
            n += 1;
        }
    }
    (sq / n as f64).sqrt()
}

/// Write the run as CSV: a schema-version comment line, a header, then one
/// row per step with 17 significant digits — byte-identical across runs.
/// The command columns are the allocator references; the produced wrench
/// reflects the slewed commands.
pub fn write_csv<W: Write>(ts: &TimeSeries, out: &mut W) -> io::Result<()> {
    writeln!(out, "# vecalloc-timeseries v1")?;
    let mut columns = vec!["t".to_string()];
    for label in &ts.axis_labels {
        columns.push(format!("tau_ref_{label}"));
    }
    for label in &ts.axis_labels {
        columns.push(format!("tau_prod_{label}"));
    }
    for i in 1..=ts.actuator_count {
        columns.push(format!("T_{i}"));
    }
    for i in 1..=ts.actuator_count {
        columns.push(format!("alpha_{i}"));
    }
    for i in 1..=ts.actuator_count {
        columns.push(format!("beta_{i}"));
    }
    for label in &ts.axis_labels {
        columns.push(format!("slack_{label}"));
    }
    columns.push("power_fraction".to_string());
    writeln!(out, "{}", columns.join(","))?;

    for step in &ts.steps {
        let mut fields = Vec::with_capacity(columns.len());
        fields.push(format!("{:.16e}", step.t));
        for v in step.tau_ref.iter() {
            fields.push(format!("{v:.16e}"));
        }
        for v in step.tau_produced.iter() {
            fields.push(format!("{v:.16e}"));
        }
        for cmd in &step.commands_ref {
            fields.push(format!("{:.16e}", cmd.thrust));
        }
        for cmd in &step.commands_ref {
            fields.push(format!("{:.16e}", cmd.alpha));
        }
        for cmd in &step.commands_ref {
            fields.push(format!("{:.16e}", cmd.beta));
        }
        for v in step.slack.iter() {
            fields.push(format!("{v:.16e}"));
        }
        fields.push(format!("{:.16e}", step.power_fraction));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
