//! Minimum-norm allocation and conversions between stacked force coordinates
//! and per-actuator `(thrust, elevation, azimuth)` commands.

use crate::body::{BodyConfig, MappingMatrix, MountKind};
use crate::numeric::min_norm_solve;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

/// Default thrust magnitude [N] below which gimbal angles are held at their
/// previous values: the direction of a near-zero force carries no information
/// and extracting it would make servo references jump.
pub const EPS_THRUST: f64 = 1e-6;

/// Reference for one actuator: thrust magnitude plus gimbal angles. Fixed
/// mount angles are echoed as constants so a command list is always complete.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorCommand {
    /// Thrust magnitude [N], >= 0.
    pub thrust: f64,
    /// Elevation from +z [rad].
    pub alpha: f64,
    /// Azimuth in the x/y plane [rad].
    pub beta: f64,
}

#[derive(Debug, Error)]
pub enum AllocError {
    #[error(
        "equality constraints are inconsistent with the requested wrench \
         (residual {residual:.3e} exceeds tolerance {tolerance:.3e})"
    )]
    InconsistentConstraints { residual: f64, tolerance: f64 },
    #[error("constraint matrix has {got} columns, expected the force dimension {expected}")]
    ConstraintShape { got: usize, expected: usize },
}

/// Wrap an angle to the principal interval (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let two_pi = 2.0 * PI;
    let mut x = a % two_pi;
    if x > PI {
        x -= two_pi;
    } else if x <= -PI {
        x += two_pi;
    }
    x
}

/// Shortest signed angular distance from `from` to `to`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_angle(to - from)
}

/// Minimum-2-norm force allocation `F* = M^+ tau`.
pub fn allocate_pinv(map: &MappingMatrix, tau: &DVector<f64>) -> DVector<f64> {
    map.pinv() * tau
}

/// Minimum-norm allocation subject to extra linear equalities `A F = b`,
/// solved as one stacked least-squares system. Errors when the equalities
/// contradict the wrench request.
pub fn allocate_pinv_constrained(
    map: &MappingMatrix,
    tau: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>, AllocError> {
    let l = map.wrench_dim();
    let d = map.force_dim();
    if a.nrows() > 0 && a.ncols() != d {
        return Err(AllocError::ConstraintShape {
            got: a.ncols(),
            expected: d,
        });
    }
    assert_eq!(a.nrows(), b.len(), "one rhs entry per constraint row");

    let mut stacked = DMatrix::zeros(l + a.nrows(), d);
    stacked.view_mut((0, 0), (l, d)).copy_from(map.matrix());
    if a.nrows() > 0 {
        stacked.view_mut((l, 0), (a.nrows(), d)).copy_from(a);
    }
    let mut rhs = DVector::zeros(l + b.len());
    rhs.rows_mut(0, l).copy_from(tau);
    if !b.is_empty() {
        rhs.rows_mut(l, b.len()).copy_from(b);
    }

    let f = min_norm_solve(&stacked, &rhs);
    let residual = (&stacked * &f - &rhs).norm();
    let tolerance = 1e-6 * (tau.norm() + b.norm());
    if residual > tolerance {
        return Err(AllocError::InconsistentConstraints {
            residual,
            tolerance,
        });
    }
    Ok(f)
}

/// Unit thrust direction of a command on a given mount, in the body frame.
pub fn thrust_direction(mount: &MountKind, alpha: f64, beta: f64) -> Vector3<f64> {
    match *mount {
        MountKind::FullSpherical => unit_from_angles(alpha, beta),
        MountKind::AzimuthOnly { elevation } => unit_from_angles(elevation, beta),
        MountKind::ElevationOnly { azimuth } => {
            let d = Vector3::new(-azimuth.sin(), azimuth.cos(), 0.0);
            alpha.sin() * d + alpha.cos() * Vector3::z()
        }
    }
}

/// `v(alpha, beta) = (sin a cos b, sin a sin b, cos a)`.
pub fn unit_from_angles(alpha: f64, beta: f64) -> Vector3<f64> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    Vector3::new(sa * cb, sa * sb, ca)
}

/// Neutral command set: zero thrust, fixed mount angles echoed, free angles 0.
pub fn initial_commands(cfg: &BodyConfig) -> Vec<ActuatorCommand> {
    cfg.actuators
        .iter()
        .map(|spec| {
            let (alpha, beta) = match spec.mount {
                MountKind::FullSpherical => (0.0, 0.0),
                MountKind::AzimuthOnly { elevation } => (wrap_angle(elevation), 0.0),
                MountKind::ElevationOnly { azimuth } => (0.0, wrap_angle(azimuth)),
            };
            ActuatorCommand {
                thrust: 0.0,
                alpha,
                beta,
            }
        })
        .collect()
}

/// Extract per-actuator commands from a stacked force vector.
///
/// Thrust is the block norm. Free angles come from the block direction; when
/// the thrust falls below `eps_thrust` they are carried over from `prev`.
pub fn forces_to_commands(
    map: &MappingMatrix,
    f: &DVector<f64>,
    prev: &[ActuatorCommand],
    eps_thrust: f64,
) -> Vec<ActuatorCommand> {
    let cfg = map.body();
    assert_eq!(
        prev.len(),
        cfg.actuators.len(),
        "one previous command per actuator"
    );
    let mut out = Vec::with_capacity(cfg.actuators.len());
    for (i, spec) in cfg.actuators.iter().enumerate() {
        let block = map.block_of(f, i);
        let thrust = block.norm();
        let cmd = if thrust < eps_thrust {
            ActuatorCommand { thrust, ..prev[i] }
        } else {
            match spec.mount {
                MountKind::FullSpherical => {
                    let (fx, fy, fz) = (block[0], block[1], block[2]);
                    ActuatorCommand {
                        thrust,
                        alpha: fx.hypot(fy).atan2(fz),
                        beta: fy.atan2(fx),
                    }
                }
                MountKind::AzimuthOnly { elevation } => {
                    // At elevation -90 deg the thrust points opposite the
                    // azimuth direction, so flip before extracting.
                    let sign = elevation.sin().signum();
                    ActuatorCommand {
                        thrust,
                        alpha: wrap_angle(elevation),
                        beta: (sign * block[1]).atan2(sign * block[0]),
                    }
                }
                MountKind::ElevationOnly { azimuth } => ActuatorCommand {
                    thrust,
                    alpha: block[0].atan2(block[1]),
                    beta: wrap_angle(azimuth),
                },
            }
        };
        out.push(cmd);
    }
    out
}

/// Inverse of [`forces_to_commands`]: stacked force coordinates of a command set.
pub fn commands_to_forces(map: &MappingMatrix, cmds: &[ActuatorCommand]) -> DVector<f64> {
    let cfg = map.body();
    assert_eq!(cmds.len(), cfg.actuators.len(), "one command per actuator");
    let mut f = DVector::zeros(map.force_dim());
    for (i, (spec, cmd)) in cfg.actuators.iter().zip(cmds).enumerate() {
        let f3 = cmd.thrust * thrust_direction(&spec.mount, cmd.alpha, cmd.beta);
        // Mount reduction columns are orthonormal, so coordinates = R^T f.
        let coords = spec.mount.reduction().transpose() * DVector::from_column_slice(f3.as_slice());
        let range = map.block(i);
        f.rows_mut(range.start, range.len()).copy_from(&coords);
    }
    f
}

/// Wrench actually produced by a command set, evaluated through the nonlinear
/// thrust-direction map (not through `M`), then projected onto the controlled
/// axes. This is what rate-limited servos deliver in simulation.
pub fn commands_to_wrench(cfg: &BodyConfig, cmds: &[ActuatorCommand]) -> DVector<f64> {
    assert_eq!(cmds.len(), cfg.actuators.len(), "one command per actuator");
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    for (spec, cmd) in cfg.actuators.iter().zip(cmds) {
        let f3 = cmd.thrust * thrust_direction(&spec.mount, cmd.alpha, cmd.beta);
        force += f3;
        torque += (crate::body::skew(&spec.position)
            - f64::from(spec.spin) * spec.kappa_d * Matrix3::identity())
            * f3;
    }
    let full = [force.x, force.y, force.z, torque.x, torque.y, torque.z];
    DVector::from_iterator(
        cfg.wrench_dim(),
        cfg.controlled_axes.iter().map(|a| full[a.index()]),
    )
}
