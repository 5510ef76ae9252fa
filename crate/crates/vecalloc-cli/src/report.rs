//! One-shot allocation: run a method on a single wrench and describe the
//! result as aligned text or a machine-readable JSON document.

use serde::{Deserialize, Serialize};
use vecalloc::nalgebra::DVector;
use vecalloc::{
    allocate_pinv, allocate_smooth, commands_to_forces, commands_to_wrench, forces_to_commands,
    solve_classic, ActuatorCommand, ConvexAllocator, MappingMatrix, SolveStatus, EPS_THRUST,
};

use crate::config::{AllocatorDoc, ConfigDocument};
use crate::kbdoc::KbDocument;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationReport {
    pub method: String,
    /// Extended force coordinates, actuator blocks concatenated.
    pub f: Vec<f64>,
    pub commands: Vec<CommandReport>,
    /// Requested wrench.
    pub wrench: Vec<f64>,
    /// Wrench left to the slack variables (zero for exact allocators).
    pub slack: Vec<f64>,
    /// Wrench the commanded forces actually produce.
    pub produced: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandReport {
    /// [N]
    pub thrust: f64,
    /// Elevation [deg].
    pub alpha: f64,
    /// Azimuth [deg].
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingReport {
    /// Null-space coefficient applied.
    pub b: f64,
    /// Smallest per-actuator force component orthogonal to the rest
    /// direction [N].
    pub min_orth: f64,
    /// Per-actuator lift coefficients.
    pub f_ker: Vec<f64>,
    /// Per-actuator angle-sensitivity base [rad/N].
    pub lipschitz_bound: Vec<f64>,
}

fn commands_report(cmds: &[ActuatorCommand]) -> Vec<CommandReport> {
    cmds.iter()
        .map(|c| CommandReport {
            thrust: c.thrust,
            alpha: c.alpha.to_degrees(),
            beta: c.beta.to_degrees(),
        })
        .collect()
}

/// Resolve the kernel direction: an explicit document wins over solving the
/// config's `kb` section.
fn kernel_direction(
    doc: &ConfigDocument,
    map: &MappingMatrix,
    kb_document: Option<&KbDocument>,
) -> Result<vecalloc::KernelDirection, CliError> {
    match kb_document {
        Some(d) => d.to_direction(map),
        None => doc.solve_kernel(map),
    }
}

pub fn run_allocation(
    doc: &ConfigDocument,
    map: &MappingMatrix,
    method: AllocatorDoc,
    tau: &DVector<f64>,
    kb_document: Option<&KbDocument>,
) -> Result<AllocationReport, CliError> {
    if tau.len() != map.wrench_dim() {
        return Err(CliError::Config(format!(
            "wrench has {} entries but the body controls {} axes",
            tau.len(),
            map.wrench_dim()
        )));
    }
    let body = map.body();
    let prev = doc.initial_commands_for(body)?;
    let l = map.wrench_dim();

    let report = match method {
        AllocatorDoc::Pinv => {
            let f = allocate_pinv(map, tau);
            let cmds = forces_to_commands(map, &f, &prev, EPS_THRUST);
            AllocationReport {
                method: "pinv".into(),
                f: f.iter().copied().collect(),
                commands: commands_report(&cmds),
                wrench: tau.iter().copied().collect(),
                slack: vec![0.0; l],
                produced: commands_to_wrench(body, &cmds).iter().copied().collect(),
                status: None,
                iterations: None,
                objective: None,
                smoothing: None,
            }
        }
        AllocatorDoc::Smooth => {
            let kd = kernel_direction(doc, map, kb_document)?;
            let params = doc.smoothing_params()?;
            let (f, diag) = allocate_smooth(map, &kd, &params, tau);
            let cmds = forces_to_commands(map, &f, &prev, EPS_THRUST);
            AllocationReport {
                method: "smooth".into(),
                f: f.iter().copied().collect(),
                commands: commands_report(&cmds),
                wrench: tau.iter().copied().collect(),
                slack: vec![0.0; l],
                produced: commands_to_wrench(body, &cmds).iter().copied().collect(),
                status: None,
                iterations: None,
                objective: None,
                smoothing: Some(SmoothingReport {
                    b: diag.b_value,
                    min_orth: diag.min_orth,
                    f_ker: diag.f_ker,
                    lipschitz_bound: diag.lipschitz_bound,
                }),
            }
        }
        AllocatorDoc::Convex => {
            let weights = doc.convex_weights(map)?;
            let kernel = if weights.q1 > 0.0 {
                Some((
                    kernel_direction(doc, map, kb_document)?,
                    doc.smoothing_params()?,
                ))
            } else {
                None
            };
            let mut solver = ConvexAllocator::new(map, kernel, weights)?;
            if let Some(cfg) = &doc.convex {
                if let Some(v) = cfg.eps_abs {
                    solver.settings.eps_abs = v;
                }
                if let Some(v) = cfg.eps_rel {
                    solver.settings.eps_rel = v;
                }
                if let Some(v) = cfg.max_iters {
                    solver.settings.max_iters = v;
                }
            }
            let t_max: Vec<f64> = body.actuators.iter().map(|a| a.t_max).collect();
            let solution = solver.solve(tau, &t_max, None)?;
            let cmds = forces_to_commands(map, &solution.f, &prev, EPS_THRUST);
            AllocationReport {
                method: "convex".into(),
                f: solution.f.iter().copied().collect(),
                commands: commands_report(&cmds),
                wrench: tau.iter().copied().collect(),
                slack: solution.slack.iter().copied().collect(),
                produced: commands_to_wrench(body, &cmds).iter().copied().collect(),
                status: Some(
                    match solution.status {
                        SolveStatus::Optimal => "optimal",
                        SolveStatus::MaxIters => "max_iters",
                    }
                    .into(),
                ),
                iterations: Some(solution.iterations),
                objective: Some(solution.objective),
                smoothing: None,
            }
        }
        AllocatorDoc::Classic => {
            let params = doc.classic_params(body)?;
            let (cmds, slack) = solve_classic(body, &params, tau, &prev, f64::INFINITY)?;
            let f = commands_to_forces(map, &cmds);
            AllocationReport {
                method: "classic".into(),
                f: f.iter().copied().collect(),
                commands: commands_report(&cmds),
                wrench: tau.iter().copied().collect(),
                slack: slack.iter().copied().collect(),
                produced: commands_to_wrench(body, &cmds).iter().copied().collect(),
                status: None,
                iterations: None,
                objective: None,
                smoothing: None,
            }
        }
    };
    Ok(report)
}

impl AllocationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn to_text(&self, axis_labels: &[&str], blocks: &[std::ops::Range<usize>]) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "method: {}", self.method).unwrap();
        writeln!(
            out,
            "{:>9} {:>14} {:>12} {:>12}  force block",
            "actuator", "thrust [N]", "alpha [deg]", "beta [deg]"
        )
        .unwrap();
        for (i, (c, range)) in self.commands.iter().zip(blocks).enumerate() {
            let block: Vec<String> = self.f[range.clone()]
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect();
            writeln!(
                out,
                "{:>9} {:>14.3} {:>12.3} {:>12.3}  [{}]",
                i + 1,
                c.thrust,
                c.alpha,
                c.beta,
                block.join(", ")
            )
            .unwrap();
        }
        writeln!(
            out,
            "{:>9} {:>14} {:>14} {:>14}",
            "axis", "wrench", "produced", "slack"
        )
        .unwrap();
        for (j, label) in axis_labels.iter().enumerate() {
            writeln!(
                out,
                "{:>9} {:>14.3} {:>14.3} {:>14.3}",
                label, self.wrench[j], self.produced[j], self.slack[j]
            )
            .unwrap();
        }
        if let Some(status) = &self.status {
            writeln!(
                out,
                "status: {status} ({} iterations, objective {:.6e})",
                self.iterations.unwrap_or(0),
                self.objective.unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        if let Some(s) = &self.smoothing {
            writeln!(
                out,
                "smoothing: b = {:.6} N, min_orth = {:.3} N",
                s.b, s.min_orth
            )
            .unwrap();
            let bounds: Vec<String> = s
                .lipschitz_bound
                .iter()
                .map(|v| format!("{v:.3e}"))
                .collect();
            writeln!(
                out,
                "angle sensitivity bound [rad/N]: [{}]",
                bounds.join(", ")
            )
            .unwrap();
        }
        out
    }
}
