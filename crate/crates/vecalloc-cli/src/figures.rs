//! Figure reproduction: each figure name maps to a fixed set of curves; every
//! curve is computed from a shipped configuration and written as one CSV named
//! after the figure. Curves of one figure may run in parallel, capped by the
//! `VECALLOC_THREADS` environment variable.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use vecalloc::nalgebra::DVector;
use vecalloc::{
    allocate_smooth, empirical_lipschitz, lipschitz_bound, run_scenario, Axis, MappingMatrix,
    TimeSeries,
};

use crate::config::{parse_config, AllocatorDoc};
use crate::CliError;

pub const USV_DOCKING_JSON: &str = include_str!("../../../configs/usv_docking.json");
pub const USV_SWEEP_JSON: &str = include_str!("../../../configs/usv_sweep.json");
pub const QUAD_FLIP_JSON: &str = include_str!("../../../configs/quad_flip.json");
pub const QUAD_SWEEP_JSON: &str = include_str!("../../../configs/quad_sweep.json");

/// Shipped configurations by file name (the same files live in `configs/`).
pub const SHIPPED_CONFIGS: &[(&str, &str)] = &[
    ("usv_docking.json", USV_DOCKING_JSON),
    ("usv_sweep.json", USV_SWEEP_JSON),
    ("quad_flip.json", QUAD_FLIP_JSON),
    ("quad_sweep.json", QUAD_SWEEP_JSON),
];

pub const FIGURE_NAMES: &[&str] = &[
    "usv-angles",
    "usv-thrusts",
    "usv-power",
    "usv-fx",
    "quad-angles",
    "quad-thrusts",
    "quad-tauy",
    "quad-power",
    "lipschitz-usv",
    "lipschitz-quad",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    UsvAngles,
    UsvThrusts,
    UsvPower,
    UsvFx,
    QuadAngles,
    QuadThrusts,
    QuadTauy,
    QuadPower,
    LipschitzUsv,
    LipschitzQuad,
}

impl Figure {
    pub fn from_name(name: &str) -> Result<Self, CliError> {
        Ok(match name {
            "usv-angles" => Figure::UsvAngles,
            "usv-thrusts" => Figure::UsvThrusts,
            "usv-power" => Figure::UsvPower,
            "usv-fx" => Figure::UsvFx,
            "quad-angles" => Figure::QuadAngles,
            "quad-thrusts" => Figure::QuadThrusts,
            "quad-tauy" => Figure::QuadTauy,
            "quad-power" => Figure::QuadPower,
            "lipschitz-usv" => Figure::LipschitzUsv,
            "lipschitz-quad" => Figure::LipschitzQuad,
            other => {
                return Err(CliError::Config(format!(
                    "unknown figure {other:?}; valid names: {}",
                    FIGURE_NAMES.join(", ")
                )))
            }
        })
    }
}

const SCHEMA_LINE: &str = "# vecalloc-figure v1";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Run one shipped scenario with the allocator overridden.
fn scenario_series(
    config_json: &str,
    allocator: AllocatorDoc,
) -> Result<(TimeSeries, MappingMatrix), CliError> {
    let doc = parse_config(config_json)?;
    let map = crate::config::build_map(&doc)?;
    let mut sc = doc.scenario(&map)?;
    sc.allocator = doc.allocator_choice(allocator, &map)?;
    let ts = run_scenario(&sc)?;
    Ok((ts, map))
}

fn angle_refs_csv(ts: &TimeSeries, azimuth: bool) -> String {
    let m = ts.actuator_count;
    let name = if azimuth { "beta" } else { "alpha" };
    let mut out = String::from(SCHEMA_LINE);
    out.push('\n');
    out.push('t');
    for i in 1..=m {
        out.push_str(&format!(",{name}{i}_deg"));
    }
    out.push('\n');
    for step in &ts.steps {
        out.push_str(&fmt(step.t));
        for c in &step.commands_ref {
            let angle = if azimuth { c.beta } else { c.alpha };
            out.push_str(&format!(",{}", fmt(angle.to_degrees())));
        }
        out.push('\n');
    }
    out
}

fn thrust_refs_csv(ts: &TimeSeries) -> String {
    let m = ts.actuator_count;
    let mut out = String::from(SCHEMA_LINE);
    out.push('\n');
    out.push('t');
    for i in 1..=m {
        out.push_str(&format!(",thrust{i}_n"));
    }
    out.push('\n');
    for step in &ts.steps {
        out.push_str(&fmt(step.t));
        for c in &step.commands_ref {
            out.push_str(&format!(",{}", fmt(c.thrust)));
        }
        out.push('\n');
    }
    out
}

fn power_csv(ts: &TimeSeries) -> String {
    let mut out = String::from(SCHEMA_LINE);
    out.push_str("\nt,power_fraction\n");
    for step in &ts.steps {
        out.push_str(&format!("{},{}\n", fmt(step.t), fmt(step.power_fraction)));
    }
    out
}

fn axis_row(map: &MappingMatrix, axis: Axis) -> Result<usize, CliError> {
    map.body()
        .controlled_axes
        .iter()
        .position(|a| *a == axis)
        .ok_or_else(|| CliError::Config(format!("axis {} is not controlled", axis.label())))
}

fn axis_tracking_csv(ts: &TimeSeries, map: &MappingMatrix, axis: Axis) -> Result<String, CliError> {
    let row = axis_row(map, axis)?;
    let label = axis.label();
    let mut out = String::from(SCHEMA_LINE);
    out.push_str(&format!("\nt,{label}_ref,{label}_produced\n"));
    for step in &ts.steps {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt(step.t),
            fmt(step.tau_ref[row]),
            fmt(step.tau_produced[row])
        ));
    }
    Ok(out)
}

/// The requested-wrench curve alone; identical whichever allocator runs.
fn axis_reference_csv(
    ts: &TimeSeries,
    map: &MappingMatrix,
    axis: Axis,
) -> Result<String, CliError> {
    let row = axis_row(map, axis)?;
    let label = axis.label();
    let mut out = String::from(SCHEMA_LINE);
    out.push_str(&format!("\nt,{label}_ref\n"));
    for step in &ts.steps {
        out.push_str(&format!("{},{}\n", fmt(step.t), fmt(step.tau_ref[row])));
    }
    Ok(out)
}

/// One CSV row per actuator: worst observed angle slope along the sweep and
/// the precomputed sensitivity bound over the same wrench box.
fn lipschitz_csv(
    config_json: &str,
    base: &[f64],
    axis_index: usize,
    half_range: f64,
    step: f64,
    unit: &str,
) -> Result<String, CliError> {
    let doc = parse_config(config_json)?;
    let map = crate::config::build_map(&doc)?;
    let params = doc.smoothing_params()?;
    let kd = doc.solve_kernel(&map)?;

    let samples = (2.0 * half_range / step).round() as usize + 1;
    let path: Vec<DVector<f64>> = (0..samples)
        .map(|k| {
            let mut tau = DVector::from_column_slice(base);
            tau[axis_index] = -half_range + k as f64 * step;
            tau
        })
        .collect();
    let empirical = empirical_lipschitz(&map, &path, |tau| {
        allocate_smooth(&map, &kd, &params, tau).0
    });

    let mut lo = DVector::from_column_slice(base);
    let mut hi = DVector::from_column_slice(base);
    lo[axis_index] = -half_range;
    hi[axis_index] = half_range;
    let bounds = lipschitz_bound(&map, &kd, &params, &lo, &hi);

    let mut out = String::from(SCHEMA_LINE);
    out.push_str(&format!(
        "\nactuator,empirical_rad_per_{unit},bound_rad_per_{unit}\n"
    ));
    for (i, (e, b)) in empirical.iter().zip(&bounds).enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, fmt(*e), fmt(*b)));
    }
    Ok(out)
}

type CurveJob = Box<dyn Fn() -> Result<String, CliError> + Send + Sync>;

fn scenario_curve(config: &'static str, alloc: AllocatorDoc, kind: CurveKind) -> CurveJob {
    Box::new(move || {
        let (ts, map) = scenario_series(config, alloc)?;
        Ok(match kind {
            CurveKind::Azimuths => angle_refs_csv(&ts, true),
            CurveKind::Elevations => angle_refs_csv(&ts, false),
            CurveKind::Thrusts => thrust_refs_csv(&ts),
            CurveKind::Power => power_csv(&ts),
            CurveKind::Tracking(axis) => axis_tracking_csv(&ts, &map, axis)?,
            CurveKind::Reference(axis) => axis_reference_csv(&ts, &map, axis)?,
        })
    })
}

#[derive(Clone, Copy)]
enum CurveKind {
    Azimuths,
    Elevations,
    Thrusts,
    Power,
    Tracking(Axis),
    Reference(Axis),
}

/// The USV surge sweep of the angle-sensitivity study: F_x over ±100 kN in
/// 10 N steps.
const USV_SWEEP_BASE: [f64; 3] = [0.0, 0.0, 0.0];
/// The quad pitch-torque sweep: tau_y over ±10 N·m in 1 mN·m steps while
/// compensating gravity.
const QUAD_SWEEP_BASE: [f64; 6] = [0.0, 0.0, 9.81, 0.0, 0.0, 0.0];

fn curves_for(figure: Figure) -> Vec<(String, CurveJob)> {
    let scenario_set = |figure_name: &str,
                        config: &'static str,
                        allocs: &[(&str, AllocatorDoc)],
                        kind: CurveKind| {
        allocs
            .iter()
            .map(|(label, alloc)| {
                (
                    format!("{figure_name}-{label}.csv"),
                    scenario_curve(config, *alloc, kind),
                )
            })
            .collect::<Vec<_>>()
    };
    let usv: &[(&str, AllocatorDoc)] = &[
        ("pinv", AllocatorDoc::Pinv),
        ("convex", AllocatorDoc::Convex),
        ("classic", AllocatorDoc::Classic),
    ];
    let quad: &[(&str, AllocatorDoc)] = &[
        ("convex", AllocatorDoc::Convex),
        ("pinv", AllocatorDoc::Pinv),
    ];
    match figure {
        Figure::UsvAngles => scenario_set("usv-angles", USV_DOCKING_JSON, usv, CurveKind::Azimuths),
        Figure::UsvThrusts => {
            scenario_set("usv-thrusts", USV_DOCKING_JSON, usv, CurveKind::Thrusts)
        }
        Figure::UsvPower => scenario_set("usv-power", USV_DOCKING_JSON, usv, CurveKind::Power),
        Figure::UsvFx => {
            let mut curves = vec![(
                "usv-fx-reference.csv".to_string(),
                scenario_curve(
                    USV_DOCKING_JSON,
                    AllocatorDoc::Pinv,
                    CurveKind::Reference(Axis::Fx),
                ),
            )];
            curves.extend(scenario_set(
                "usv-fx",
                USV_DOCKING_JSON,
                usv,
                CurveKind::Tracking(Axis::Fx),
            ));
            curves
        }
        Figure::QuadAngles => {
            scenario_set("quad-angles", QUAD_FLIP_JSON, quad, CurveKind::Elevations)
        }
        Figure::QuadThrusts => {
            scenario_set("quad-thrusts", QUAD_FLIP_JSON, quad, CurveKind::Thrusts)
        }
        Figure::QuadTauy => {
            let mut curves = vec![(
                "quad-tauy-reference.csv".to_string(),
                scenario_curve(
                    QUAD_FLIP_JSON,
                    AllocatorDoc::Pinv,
                    CurveKind::Reference(Axis::Ty),
                ),
            )];
            curves.extend(scenario_set(
                "quad-tauy",
                QUAD_FLIP_JSON,
                quad,
                CurveKind::Tracking(Axis::Ty),
            ));
            curves
        }
        Figure::QuadPower => scenario_set("quad-power", QUAD_FLIP_JSON, quad, CurveKind::Power),
        Figure::LipschitzUsv => vec![(
            "lipschitz-usv.csv".into(),
            Box::new(|| lipschitz_csv(USV_SWEEP_JSON, &USV_SWEEP_BASE, 0, 100e3, 10.0, "n"))
                as CurveJob,
        )],
        Figure::LipschitzQuad => vec![(
            "lipschitz-quad.csv".into(),
            Box::new(|| lipschitz_csv(QUAD_SWEEP_JSON, &QUAD_SWEEP_BASE, 4, 10.0, 1e-3, "nm"))
                as CurveJob,
        )],
    }
}

fn thread_cap() -> usize {
    std::env::var("VECALLOC_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Compute every curve of `figure` (in parallel up to the thread cap) and
/// write the CSVs into `out_dir`. Returns the written paths in curve order.
pub fn reproduce(figure: Figure, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let curves = curves_for(figure);
    let workers = thread_cap().min(curves.len()).max(1);
    let results: Vec<Mutex<Option<Result<String, CliError>>>> =
        curves.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= curves.len() {
                    break;
                }
                let outcome = (curves[i].1)();
                *results[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(curves.len());
    for ((name, _), slot) in curves.iter().zip(results) {
        let csv = slot
            .into_inner()
            .unwrap()
            .expect("every curve job ran to completion")?;
        let path = out_dir.join(name);
        std::fs::write(&path, csv)?;
        written.push(path);
    }
    Ok(written)
}
