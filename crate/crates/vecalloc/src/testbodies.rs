//! Shared unit-test fixtures: the two reference geometries exercised throughout
//! the test suite and small deterministic random helpers.

use crate::body::{ActuatorSpec, Axis, BodyConfig, MountKind};
use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

/// Planar supply vessel: two stern azimuth thrusters and one bow azimuth
/// thruster, controlling surge/sway force and yaw torque.
pub fn planar_vessel() -> BodyConfig {
    let thruster = |x: f64, y: f64| ActuatorSpec {
        position: Vector3::new(x, y, 5.0),
        spin: 0,
        kappa_d: 0.0,
        mount: MountKind::AzimuthOnly {
            elevation: FRAC_PI_2,
        },
        t_max: 68e3,
        rate_limit: 25.0_f64.to_radians(),
    };
    BodyConfig {
        actuators: vec![
            thruster(-30.0, -8.0),
            thruster(-30.0, 8.0),
            thruster(30.0, 0.0),
        ],
        controlled_axes: vec![Axis::Fx, Axis::Fy, Axis::Tz],
    }
}

/// Quadcopter with tiltable rotors: four arms on the body axes, each rotor
/// tilting in a plane fixed 45 deg off its arm, all six wrench axes controlled.
pub fn tilt_quad() -> BodyConfig {
    let rotor = |x: f64, y: f64, azimuth: f64| ActuatorSpec {
        position: Vector3::new(x, y, 0.1),
        spin: 0,
        kappa_d: 0.0,
        mount: MountKind::ElevationOnly { azimuth },
        t_max: 10.0,
        rate_limit: 60.0_f64.to_radians() / 0.1,
    };
    BodyConfig {
        actuators: vec![
            rotor(1.0, 0.0, PI / 4.0),
            rotor(0.0, 1.0, 3.0 * PI / 4.0),
            rotor(-1.0, 0.0, 5.0 * PI / 4.0),
            rotor(0.0, -1.0, 7.0 * PI / 4.0),
        ],
        controlled_axes: Axis::ALL.to_vec(),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec3(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    )
}

pub fn rand_dvector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Random body with mixed mounts; may be rank-deficient for some axis choices,
/// so callers retry until `build_mapping` succeeds.
pub fn random_body(rng: &mut ChaCha8Rng, actuators: usize, axes: usize) -> BodyConfig {
    let mut acts = Vec::with_capacity(actuators);
    for _ in 0..actuators {
        let mount = match rng.gen_range(0..3) {
            0 => MountKind::FullSpherical,
            1 => MountKind::AzimuthOnly {
                elevation: if rng.gen_bool(0.5) {
                    FRAC_PI_2
                } else {
                    -FRAC_PI_2
                },
            },
            _ => MountKind::ElevationOnly {
                azimuth: rng.gen_range(-PI..PI),
            },
        };
        let spin = [-1i8, 0, 1][rng.gen_range(0..3)];
        acts.push(ActuatorSpec {
            position: rand_vec3(rng, 5.0),
            spin,
            kappa_d: if spin == 0 {
                0.0
            } else {
                rng.gen_range(0.0..0.2)
            },
            mount,
            t_max: rng.gen_range(5.0..50.0),
            rate_limit: rng.gen_range(0.2..3.0),
        });
    }
    let mut all = Axis::ALL.to_vec();
    for i in (1..all.len()).rev() {
        all.swap(i, rng.gen_range(0..=i));
    }
    all.truncate(axes.clamp(1, 6));
    BodyConfig {
        actuators: acts,
        controlled_axes: all,
    }
}
