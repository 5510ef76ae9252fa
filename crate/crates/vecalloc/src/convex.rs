//! Constrained allocation as a convex program, solved by operator splitting.
//!
//! Variables are the stacked force coordinates `F` plus a wrench slack `s`:
//!
//! ```text
//!   minimize   F' W F  +  s' Q s  +  q1 * b(tau) * (K_b' F - q2)^2
//!   subject to M F + s = tau,
//!              ||F_i|| <= t_max_i                        (thrust saturation)
//!              axis_i' F_i >= cos(half_angle_i) ||F_i||  (gimbal rate cone)
//! ```
//!
//! The slack keeps every instance feasible; the kernel term (coefficient
//! `b` precomputed from the unconstrained allocation, so the program stays
//! convex) pushes actuators toward the rest direction near singular wrenches.
//!
//! The solver alternates a linear KKT step (equality constraints eliminated
//! exactly through a cached LU factorization) with per-actuator projections
//! onto `cone intersect ball`, plus a scaled dual update — a standard
//! operator-splitting scheme for quadratic cone programs. The returned force
//! vector is the projection iterate, so saturation and cone feasibility hold
//! exactly; the slack is recomputed as `tau - M F` so the wrench balance is
//! exact as well.

use crate::alloc::thrust_direction;
use crate::body::{ActuatorSpec, MappingMatrix};
use crate::smooth::{eval_b, KernelDirection, SmoothingParams};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Objective weights of the convex program.
#[derive(Debug, Clone)]
pub struct ConvexWeights {
    /// Diagonal of the thrust-energy weight, length d, > 0.
    pub w: DVector<f64>,
    /// Diagonal of the slack penalty, length l, > 0.
    pub q: DVector<f64>,
    /// Gain of the kernel-direction term, >= 0.
    pub q1: f64,
    /// Kernel-direction thrust setpoint [N].
    pub q2: f64,
}

impl ConvexWeights {
    /// Scalar weights replicated over the diagonal.
    pub fn uniform(map: &MappingMatrix, w: f64, q: f64, q1: f64, q2: f64) -> Self {
        Self {
            w: DVector::from_element(map.force_dim(), w),
            q: DVector::from_element(map.wrench_dim(), q),
            q1,
            q2,
        }
    }

    fn validate(&self, map: &MappingMatrix) -> Result<(), ConvexError> {
        if self.w.len() != map.force_dim() || self.q.len() != map.wrench_dim() {
            return Err(ConvexError::WeightShape {
                w_len: self.w.len(),
                q_len: self.q.len(),
                force_dim: map.force_dim(),
                wrench_dim: map.wrench_dim(),
            });
        }
        if !self
            .w
            .iter()
            .chain(self.q.iter())
            .all(|&x| x.is_finite() && x > 0.0)
        {
            return Err(ConvexError::NonPositiveWeight);
        }
        if !(self.q1 >= 0.0 && self.q1.is_finite() && self.q2.is_finite()) {
            return Err(ConvexError::BadKernelTerm {
                q1: self.q1,
                q2: self.q2,
            });
        }
        Ok(())
    }
}

/// Per-actuator second-order cone around the previous thrust direction.
#[derive(Debug, Clone)]
pub struct ConeConstraint {
    /// Unit direction in the actuator's force coordinates (length d_i).
    pub axis: DVector<f64>,
    /// Half-aperture [rad] (> 0). At and beyond 90 degrees the set stops
    /// being convex and the constraint is treated as absent.
    pub half_angle: f64,
}

/// Rate cone for one step: the servo can travel `rate_limit * dt` away from
/// the previous command direction.
///
/// A thruster that produced no force has no force direction to preserve, so
/// it gets an absent (full-aperture) cone: its next force may point anywhere,
/// and the gimbal servo still limits how fast the physical angle follows.
/// Without this release, a thruster whose thrust passes through zero would
/// keep its stale direction forever — the cone pins the direction, the pinned
/// direction keeps the optimal thrust at zero, and the reference angles never
/// move again.
pub fn build_rate_cone(
    prev: &crate::alloc::ActuatorCommand,
    spec: &ActuatorSpec,
    dt: f64,
) -> ConeConstraint {
    assert!(dt > 0.0, "time step must be positive");
    let dir3 = thrust_direction(&spec.mount, prev.alpha, prev.beta);
    // Mount reduction columns are orthonormal, so this keeps unit norm.
    let axis = spec.mount.reduction().transpose() * DVector::from_column_slice(dir3.as_slice());
    let half_angle = if prev.thrust <= crate::alloc::EPS_THRUST {
        std::f64::consts::PI
    } else {
        spec.rate_limit * dt
    };
    ConeConstraint { axis, half_angle }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Residuals met the tolerances.
    Optimal,
    /// Iteration budget exhausted; the returned point is still feasible, just
    /// possibly short of optimal.
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    /// Stacked force coordinates; satisfies every cone and saturation exactly.
    pub f: DVector<f64>,
    /// Wrench slack `tau - M F`.
    pub slack: DVector<f64>,
    /// Objective value at the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Error)]
pub enum ConvexError {
    #[error(
        "weight diagonals have lengths {w_len}/{q_len}, expected force dimension \
         {force_dim} and wrench dimension {wrench_dim}"
    )]
    WeightShape {
        w_len: usize,
        q_len: usize,
        force_dim: usize,
        wrench_dim: usize,
    },
    #[error("weight diagonals must be positive and finite")]
    NonPositiveWeight,
    #[error("kernel term needs q1 >= 0 and finite q2 (got q1 = {q1}, q2 = {q2})")]
    BadKernelTerm { q1: f64, q2: f64 },
    #[error("expected one saturation bound per actuator ({expected}), got {got}")]
    SaturationCount { got: usize, expected: usize },
    #[error("saturation bounds must be positive (actuator {index}: {value})")]
    BadSaturation { index: usize, value: f64 },
    #[error("expected one cone per actuator ({expected}), got {got}")]
    ConeCount { got: usize, expected: usize },
    #[error("cone {index}: axis length {got} does not match the actuator's {expected} force coordinates")]
    ConeAxisShape {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("cone {index}: axis is numerically zero")]
    ConeAxisZero { index: usize },
    #[error("cone {index}: half-angle must be positive (got {value})")]
    BadConeAngle { index: usize, value: f64 },
    #[error("wrench has length {got}, expected {expected}")]
    WrenchShape { got: usize, expected: usize },
    #[error("the KKT system factorization failed; weights may be badly scaled")]
    Factorization,
}

/// Solver knobs; the defaults satisfy the library's accuracy contract.
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
    /// Initial penalty of the splitting scheme (adapted automatically).
    pub rho: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iters: 20_000,
            rho: 1.0,
        }
    }
}

/// Reusable solver with warm starting across consecutive calls (the previous
/// projection iterate and dual seed the next solve — effective in simulation
/// loops where the wrench moves slowly).
#[derive(Debug, Clone)]
pub struct ConvexAllocator {
    map: MappingMatrix,
    kernel: Option<(KernelDirection, SmoothingParams)>,
    weights: ConvexWeights,
    pub settings: SolverSettings,
    warm: Option<(DVector<f64>, DVector<f64>)>,
}

impl ConvexAllocator {
    pub fn new(
        map: &MappingMatrix,
        kernel: Option<(KernelDirection, SmoothingParams)>,
        weights: ConvexWeights,
    ) -> Result<Self, ConvexError> {
        weights.validate(map)?;
        if let Some((_, p)) = &kernel {
            // Invalid smoothing parameters would silently zero the kernel term.
            p.validate().map_err(|_| ConvexError::BadKernelTerm {
                q1: weights.q1,
                q2: weights.q2,
            })?;
        }
        Ok(Self {
            map: map.clone(),
            kernel,
            weights,
            settings: SolverSettings::default(),
            warm: None,
        })
    }

    /// Drop the warm-start state (use when the wrench jumps discontinuously).
    pub fn clear_warm_start(&mut self) {
        self.warm = None;
    }

    pub fn solve(
        &mut self,
        tau: &DVector<f64>,
        t_max: &[f64],
        cones: Option<&[ConeConstraint]>,
    ) -> Result<QpSolution, ConvexError> {
        let d = self.map.force_dim();
        let l = self.map.wrench_dim();
        let m = self.map.actuator_count();
        if tau.len() != l {
            return Err(ConvexError::WrenchShape {
                got: tau.len(),
                expected: l,
            });
        }
        if t_max.len() != m {
            return Err(ConvexError::SaturationCount {
                got: t_max.len(),
                expected: m,
            });
        }
        for (i, &t) in t_max.iter().enumerate() {
            if t.is_nan() || t <= 0.0 {
                return Err(ConvexError::BadSaturation { index: i, value: t });
            }
        }
        // Validate cones and precompute the per-actuator projection data;
        // half-angles of 90 degrees or more cannot bind a convex set.
        let mut cone_data: Vec<Option<(DVector<f64>, f64)>> = vec![None; m];
        if let Some(cones) = cones {
            if cones.len() != m {
                return Err(ConvexError::ConeCount {
                    got: cones.len(),
                    expected: m,
                });
            }
            for (i, cone) in cones.iter().enumerate() {
                let di = self.map.block(i).len();
                if cone.axis.len() != di {
                    return Err(ConvexError::ConeAxisShape {
                        index: i,
                        got: cone.axis.len(),
                        expected: di,
                    });
                }
                if cone.half_angle.is_nan() || cone.half_angle <= 0.0 {
                    return Err(ConvexError::BadConeAngle {
                        index: i,
                        value: cone.half_angle,
                    });
                }
                if cone.half_angle < std::f64::consts::FRAC_PI_2 {
                    let norm = cone.axis.norm();
                    if norm < 1e-12 {
                        return Err(ConvexError::ConeAxisZero { index: i });
                    }
                    cone_data[i] = Some((&cone.axis / norm, cone.half_angle));
                }
            }
        }

        // Kernel-term coefficient, fixed per call from the unconstrained
        // allocation so the program stays a convex QP over (F, s).
        let coefficient = match &self.kernel {
            Some((kd, p)) if self.weights.q1 > 0.0 => {
                let f_star = self.map.pinv() * tau;
                self.weights.q1 * eval_b(kd, p, &f_star).0
            }
            _ => 0.0,
        };

        // Internal scaling keeps the iterates near unit magnitude so the
        // absolute tolerance means the same thing for newtons and kilonewtons.
        let sigma = tau
            .amax()
            .max(
                t_max
                    .iter()
                    .cloned()
                    .filter(|t| t.is_finite())
                    .fold(0.0, f64::max),
            )
            .max(1.0);
        let tau_s = tau / sigma;
        let t_max_s: Vec<f64> = t_max.iter().map(|t| t / sigma).collect();
        let q2_s = self.weights.q2 / sigma;

        // Quadratic form: x = (F, s), objective = x' H x + c' x + const.
        let n = d + l;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..d {
            h[(i, i)] = self.weights.w[i];
        }
        for j in 0..l {
            h[(d + j, d + j)] = self.weights.q[j];
        }
        let mut c = DVector::zeros(n);
        if coefficient > 0.0 {
            let (kd, _) = self.kernel.as_ref().expect("coefficient implies kernel");
            let k_b = kd.vector();
            for i in 0..d {
                for j in 0..d {
                    h[(i, j)] += coefficient * k_b[i] * k_b[j];
                }
                c[i] = -2.0 * coefficient * q2_s * k_b[i];
            }
        }

        let mut rho = self.settings.rho;
        let factorize =
            |rho: f64,
             h: &DMatrix<f64>|
             -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, ConvexError> {
                let mut kkt = DMatrix::zeros(n + l, n + l);
                kkt.view_mut((0, 0), (n, n)).copy_from(&(2.0 * h));
                for i in 0..d {
                    kkt[(i, i)] += rho;
                }
                kkt.view_mut((n, 0), (l, n))
                    .copy_from(&assemble_eq(&self.map));
                kkt.view_mut((0, n), (n, l))
                    .copy_from(&assemble_eq(&self.map).transpose());
                let lu = kkt.lu();
                if !lu.is_invertible() {
                    return Err(ConvexError::Factorization);
                }
                Ok(lu)
            };
        let mut lu = factorize(rho, &h)?;

        let (mut z, mut u) = match &self.warm {
            Some((z, u)) if z.len() == d => (z / sigma, u / sigma),
            _ => (DVector::zeros(d), DVector::zeros(d)),
        };

        let mut status = SolveStatus::MaxIters;
        let mut iterations = self.settings.max_iters;
        let mut f_x = DVector::zeros(d);
        for iter in 0..self.settings.max_iters {
            // Equality-constrained quadratic step.
            let mut rhs = DVector::zeros(n + l);
            for i in 0..d {
                rhs[i] = -c[i] + rho * (z[i] - u[i]);
            }
            rhs.rows_mut(n, l).copy_from(&tau_s);
            let sol = lu.solve(&rhs).ok_or(ConvexError::Factorization)?;
            f_x.copy_from(&sol.rows(0, d));

            // Projection onto the cone/ball product, then dual update.
            let z_old = z.clone();
            z = &f_x + &u;
            for i in 0..m {
                let range = self.map.block(i);
                let mut block = z.rows_mut(range.start, range.len());
                if let Some((axis, half_angle)) = &cone_data[i] {
                    project_cone(&mut block, axis, *half_angle);
                }
                project_ball(&mut block, t_max_s[i]);
            }
            u += &f_x - &z;

            let r_pri = (&f_x - &z).norm();
            let r_dual = rho * (&z - &z_old).norm();
            let eps_pri = (d as f64).sqrt() * self.settings.eps_abs
                + self.settings.eps_rel * f_x.norm().max(z.norm());
            let eps_dual =
                (d as f64).sqrt() * self.settings.eps_abs + self.settings.eps_rel * rho * u.norm();
            if r_pri <= eps_pri && r_dual <= eps_dual {
                status = SolveStatus::Optimal;
                iterations = iter + 1;
                break;
            }

            // Rebalance the penalty when one residual dominates; the scaled
            // dual (u = y / rho) must be rescaled along with it.
            if iter % 25 == 24 {
                if r_pri > 10.0 * r_dual && rho < 1e6 {
                    rho *= 2.0;
                    u /= 2.0;
                    lu = factorize(rho, &h)?;
                } else if r_dual > 10.0 * r_pri && rho > 1e-6 {
                    rho /= 2.0;
                    u *= 2.0;
                    lu = factorize(rho, &h)?;
                }
            }
        }

        self.warm = Some((&z * sigma, &u * sigma));

        let f = &z * sigma;
        let slack = tau - self.map.matrix() * &f;
        let mut objective = 0.0;
        for i in 0..d {
            objective += self.weights.w[i] * f[i] * f[i];
        }
        for j in 0..l {
            objective += self.weights.q[j] * slack[j] * slack[j];
        }
        if coefficient > 0.0 {
            let (kd, _) = self.kernel.as_ref().expect("coefficient implies kernel");
            let dev = kd.vector().dot(&f) - self.weights.q2;
            objective += coefficient * dev * dev;
        }
        Ok(QpSolution {
            f,
            slack,
            objective,
            iterations,
            status,
        })
    }
}

fn assemble_eq(map: &MappingMatrix) -> DMatrix<f64> {
    let d = map.force_dim();
    let l = map.wrench_dim();
    let mut a = DMatrix::zeros(l, d + l);
    a.view_mut((0, 0), (l, d)).copy_from(map.matrix());
    for j in 0..l {
        a[(j, d + j)] = 1.0;
    }
    a
}

/// One-shot solve without keeping warm-start state.
pub fn solve_convex(
    map: &MappingMatrix,
    kernel: Option<(&KernelDirection, &SmoothingParams)>,
    weights: ConvexWeights,
    tau: &DVector<f64>,
    t_max: &[f64],
    cones: Option<&[ConeConstraint]>,
) -> Result<QpSolution, ConvexError> {
    let mut solver = ConvexAllocator::new(map, kernel.map(|(kd, p)| (kd.clone(), *p)), weights)?;
    solver.solve(tau, t_max, cones)
}

/// Euclidean projection onto the circular cone
/// `{f : axis . f >= cos(half_angle) ||f||}` (axis unit, half-angle < 90 deg).
fn project_cone(block: &mut nalgebra::DVectorViewMut<f64>, axis: &DVector<f64>, half_angle: f64) {
    let (sin_a, cos_a) = half_angle.sin_cos();
    let f = block.clone_owned();
    let along = axis.dot(&f);
    let perp = f - axis * along;
    let w = perp.norm();
    if cos_a * w <= sin_a * along {
        return; // already inside
    }
    if sin_a * w <= -cos_a * along {
        block.fill(0.0); // inside the polar cone: nearest point is the apex
        return;
    }
    // Project onto the boundary ray through the nearest generator.
    let coeff = cos_a * along + sin_a * w;
    let generator = axis * cos_a + (perp / w) * sin_a;
    block.copy_from(&(generator * coeff));
}

/// Euclidean projection onto the centered ball of the given radius. Composing
/// it after the cone projection projects exactly onto their intersection,
/// because radial scaling never leaves a cone.
fn project_ball(block: &mut nalgebra::DVectorViewMut<f64>, radius: f64) {
    if !radius.is_finite() {
        return;
    }
    let norm = block.norm();
    if norm > radius {
        *block *= radius / norm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{allocate_pinv, initial_commands, ActuatorCommand};
    use crate::body::build_mapping;
    use crate::smooth::SmoothingMode;
    use crate::testbodies::{planar_vessel, rand_dvector, random_body, rng, tilt_quad};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn vessel_kernel() -> (MappingMatrix, KernelDirection, SmoothingParams) {
        let map = build_mapping(&planar_vessel()).unwrap();
        let kd = KernelDirection::new(
            &map,
            DVector::from_vec(vec![-1.0, 0.0, -1.0, 0.0, 2.0, 0.0]),
        )
        .unwrap();
        let p = SmoothingParams {
            k_a: 0.008,
            k_b: 0.1,
            eps2: 4500.0,
            mode: SmoothingMode::Sigmoid,
        };
        (map, kd, p)
    }

    #[test]
    fn unconstrained_solution_matches_weighted_least_squares() {
        let mut r = rng(51);
        let mut tested = 0;
        while tested < 25 {
            let cfg = random_body(&mut r, 4, 3);
            let Ok(map) = build_mapping(&cfg) else {
                continue;
            };
            let d = map.force_dim();
            let l = map.wrench_dim();
            let w = DVector::from_fn(d, |_, _| r.gen_range(0.5..3.0));
            let q = DVector::from_fn(l, |_, _| r.gen_range(10.0..100.0));
            let tau = rand_dvector(&mut r, l, 20.0);

            let weights = ConvexWeights {
                w: w.clone(),
                q: q.clone(),
                q1: 0.0,
                q2: 0.0,
            };
            let t_max = vec![f64::INFINITY; map.actuator_count()];
            let sol = solve_convex(&map, None, weights, &tau, &t_max, None).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);

            // Eliminate s = tau - M F: (W + M' Q M) F = M' Q tau.
            let mq = map.matrix().transpose() * DMatrix::from_diagonal(&q);
            let lhs = DMatrix::from_diagonal(&w) + &mq * map.matrix();
            let expected = lhs.lu().solve(&(&mq * &tau)).unwrap();
            assert_relative_eq!(sol.f, expected, epsilon = 1e-5 * (1.0 + expected.norm()));
            tested += 1;
        }
    }

    #[test]
    fn heavy_slack_penalty_recovers_the_minimum_norm_solution() {
        let map = build_mapping(&planar_vessel()).unwrap();
        let tau = DVector::from_vec(vec![5e4, -1e4, 3e5]);
        let weights = ConvexWeights::uniform(&map, 1.0, 1e8, 0.0, 0.0);
        let t_max = vec![f64::INFINITY; 3];
        let sol = solve_convex(&map, None, weights, &tau, &t_max, None).unwrap();
        let expected = allocate_pinv(&map, &tau);
        assert_relative_eq!(sol.f, expected, epsilon = 1e-4 * expected.norm());
        assert!(sol.slack.norm() <= 1e-4 * tau.norm());
    }

    #[test]
    fn zero_wrench_with_kernel_setpoint_idles_along_the_rest_direction() {
        // With tau = 0 and a heavy slack penalty, F stays in the null space;
        // there the objective is gamma^2 k + q1 b (gamma k - q2)^2 over
        // F = gamma K_b (k = ||K_b||^2), minimized in closed form.
        let (map, kd, p) = vessel_kernel();
        let weights = ConvexWeights::uniform(&map, 1.0, 1e8, 0.5, 2e3);
        let tau = DVector::zeros(3);

        let f_star = map.pinv() * &tau;
        let b = eval_b(&kd, &p, &f_star).0;
        assert!(b > 0.0, "zero wrench must trigger the smoothing term");

        let t_max = vec![f64::INFINITY; 3];
        let sol = solve_convex(&map, Some((&kd, &p)), weights.clone(), &tau, &t_max, None).unwrap();
        let k = kd.vector().norm_squared();
        let q1b = weights.q1 * b;
        let gamma = q1b * weights.q2 / (1.0 + q1b * k);
        assert_relative_eq!(
            sol.f,
            kd.vector() * gamma,
            epsilon = 1e-4 * (kd.vector() * gamma).norm()
        );
        assert!((map.matrix() * &sol.f).norm() <= 1e-3);
        assert!(sol.slack.norm() <= 1e-3);
    }

    #[test]
    fn unreachable_surge_saturates_every_thruster_exactly() {
        // 300 kN of surge against three 68 kN thrusters: geometry forces all
        // of them to the boundary pointing forward; slack absorbs the rest.
        let (map, kd, p) = vessel_kernel();
        let weights = ConvexWeights::uniform(&map, 2.0, 4000.0, 0.1, 1e4);
        let tau = DVector::from_vec(vec![300e3, 0.0, 0.0]);
        let t_max = vec![68e3; 3];
        let sol = solve_convex(&map, Some((&kd, &p)), weights, &tau, &t_max, None).unwrap();
        for i in 0..3 {
            let block = map.block_of(&sol.f, i);
            assert!(
                (block.norm() - 68e3).abs() <= 1e-3,
                "thruster {i} off the boundary: {}",
                block.norm()
            );
            assert!(block[0] > 0.0, "thruster {i} not pushing forward");
        }
        assert_relative_eq!(sol.slack[0], 300e3 - 204e3, epsilon = 1.0);
    }

    #[test]
    fn rate_cones_are_respected() {
        let (map, _kd, _p) = vessel_kernel();
        let weights = ConvexWeights::uniform(&map, 2.0, 4000.0, 0.0, 0.0);
        // Previous commands all pointing stern (beta = pi); askew wrench.
        let prev: Vec<ActuatorCommand> = initial_commands(map.body())
            .into_iter()
            .map(|c| ActuatorCommand {
                thrust: 1e4,
                beta: std::f64::consts::PI,
                ..c
            })
            .collect();
        let cones: Vec<ConeConstraint> = map
            .body()
            .actuators
            .iter()
            .zip(&prev)
            .map(|(spec, cmd)| build_rate_cone(cmd, spec, 0.5))
            .collect();
        let tau = DVector::from_vec(vec![8e4, 3e4, -2e5]);
        let t_max = vec![68e3; 3];
        let sol = solve_convex(&map, None, weights, &tau, &t_max, Some(&cones)).unwrap();
        for (i, cone) in cones.iter().enumerate() {
            let block = map.block_of(&sol.f, i).into_owned();
            let along = cone.axis.dot(&block);
            assert!(
                along >= cone.half_angle.cos() * block.norm() - 1e-6 * 68e3,
                "cone {i} violated"
            );
            assert!(block.norm() <= 68e3 + 1e-6 * 68e3);
        }
    }

    #[test]
    fn rate_cone_construction_matches_the_servo_travel() {
        let vessel = planar_vessel();
        let spec = &vessel.actuators[0];
        let prev = ActuatorCommand {
            thrust: 1.0,
            alpha: std::f64::consts::FRAC_PI_2,
            beta: 0.3,
        };
        let cone = build_rate_cone(&prev, spec, 1.0);
        assert_relative_eq!(cone.half_angle, 25f64.to_radians(), epsilon = 1e-12);
        assert_relative_eq!(cone.axis[0], 0.3f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(cone.axis[1], 0.3f64.sin(), epsilon = 1e-12);

        let quad = tilt_quad();
        let spec = &quad.actuators[0];
        let prev = ActuatorCommand {
            thrust: 1.0,
            alpha: 0.2,
            beta: std::f64::consts::FRAC_PI_4,
        };
        let cone = build_rate_cone(&prev, spec, 0.01);
        assert_relative_eq!(cone.half_angle, 6f64.to_radians(), epsilon = 1e-12);
        // Coordinates are (tilt, vertical) = (sin alpha, cos alpha).
        assert_relative_eq!(cone.axis[0], 0.2f64.sin(), epsilon = 1e-12);
        assert_relative_eq!(cone.axis[1], 0.2f64.cos(), epsilon = 1e-12);
    }

    #[test]
    fn cone_projection_cases() {
        let axis = DVector::from_vec(vec![1.0, 0.0]);
        let half = 30f64.to_radians();

        // Inside: unchanged.
        let mut v = DVector::from_vec(vec![2.0, 0.5]);
        project_cone(&mut v.rows_mut(0, 2), &axis, half);
        assert_relative_eq!(v, DVector::from_vec(vec![2.0, 0.5]), epsilon = 1e-12);

        // Polar cone: collapses to the apex.
        let mut v = DVector::from_vec(vec![-2.0, 0.1]);
        project_cone(&mut v.rows_mut(0, 2), &axis, half);
        assert_relative_eq!(v.norm(), 0.0, epsilon = 1e-12);

        // Outside: lands on the boundary, and no sampled cone point is closer.
        let original = DVector::from_vec(vec![0.3, 2.0]);
        let mut v = original.clone();
        project_cone(&mut v.rows_mut(0, 2), &axis, half);
        let along = axis.dot(&v);
        assert_relative_eq!(along, half.cos() * v.norm(), epsilon = 1e-12);
        let best = (&original - &v).norm();
        let mut t = 0.0;
        while t <= 1.0 {
            for sign in [-1.0, 1.0] {
                let angle = sign * half * t;
                let candidate = DVector::from_vec(vec![angle.cos(), angle.sin()]) * 2.5;
                assert!((&original - candidate).norm() >= best - 1e-9);
            }
            t += 0.05;
        }
    }

    #[test]
    fn warm_start_accelerates_the_second_solve() {
        let (map, kd, p) = vessel_kernel();
        let weights = ConvexWeights::uniform(&map, 2.0, 4000.0, 0.1, 1e4);
        let mut solver = ConvexAllocator::new(&map, Some((kd, p)), weights).unwrap();
        let t_max = vec![68e3; 3];
        let tau = DVector::from_vec(vec![5e4, 1e4, -3e5]);
        let cold = solver.solve(&tau, &t_max, None).unwrap();
        let warm = solver.solve(&tau, &t_max, None).unwrap();
        assert!(warm.iterations <= cold.iterations);
        assert!(warm.iterations <= 2, "repeat solve should be nearly free");
    }

    #[test]
    fn stronger_slack_penalty_never_increases_the_slack() {
        let (map, _kd, _p) = vessel_kernel();
        let tau = DVector::from_vec(vec![250e3, 0.0, 0.0]);
        let t_max = vec![68e3; 3];
        let mut last = f64::INFINITY;
        for q in [1e2, 1e3, 1e4, 1e5] {
            let weights = ConvexWeights::uniform(&map, 2.0, q, 0.0, 0.0);
            let sol = solve_convex(&map, None, weights, &tau, &t_max, None).unwrap();
            let norm = sol.slack.norm();
            assert!(norm <= last + 1e-6 * last.max(1.0), "slack rose at q = {q}");
            last = norm;
        }
    }

    #[test]
    fn iteration_budget_is_honored() {
        let (map, _kd, _p) = vessel_kernel();
        let weights = ConvexWeights::uniform(&map, 2.0, 4000.0, 0.0, 0.0);
        let mut solver = ConvexAllocator::new(&map, None, weights).unwrap();
        solver.settings.max_iters = 1;
        let tau = DVector::from_vec(vec![250e3, 1e4, -2e5]);
        let sol = solver.solve(&tau, &[68e3; 3], None).unwrap();
        assert_eq!(sol.status, SolveStatus::MaxIters);
        assert_eq!(sol.iterations, 1);
        // Even the truncated answer is feasible.
        for i in 0..3 {
            assert!(map.block_of(&sol.f, i).norm() <= 68e3 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn objective_is_convex_along_feasible_segments() {
        let (map, kd, p) = vessel_kernel();
        let weights = ConvexWeights::uniform(&map, 2.0, 4000.0, 0.1, 1e4);
        let tau = DVector::from_vec(vec![1e5, 0.0, 0.0]);
        let f_star = map.pinv() * &tau;
        let coeff = weights.q1 * eval_b(&kd, &p, &f_star).0;
        let objective = |f: &DVector<f64>| -> f64 {
            let s = &tau - map.matrix() * f;
            let dev = kd.vector().dot(f) - weights.q2;
            f.iter()
                .zip(weights.w.iter())
                .map(|(x, w)| w * x * x)
                .sum::<f64>()
                + s.iter()
                    .zip(weights.q.iter())
                    .map(|(x, q)| q * x * x)
                    .sum::<f64>()
                + coeff * dev * dev
        };
        let mut r = rng(52);
        for _ in 0..50 {
            let a = rand_dvector(&mut r, 6, 50e3);
            let b2 = rand_dvector(&mut r, 6, 50e3);
            let mid = (&a + &b2) / 2.0;
            assert!(objective(&mid) <= (objective(&a) + objective(&b2)) / 2.0 + 1e-6);
        }
    }

    #[test]
    fn repeated_fresh_solves_are_bit_identical() {
        let (map, kd, p) = vessel_kernel();
        let weights = ConvexWeights::uniform(&map, 2.0, 4000.0, 0.1, 1e4);
        let tau = DVector::from_vec(vec![7e4, -2e4, 1e5]);
        let t_max = vec![68e3; 3];
        let a = solve_convex(&map, Some((&kd, &p)), weights.clone(), &tau, &t_max, None).unwrap();
        let b = solve_convex(&map, Some((&kd, &p)), weights, &tau, &t_max, None).unwrap();
        assert_eq!(a.f, b.f);
        assert_eq!(a.slack, b.slack);
        assert_eq!(a.iterations, b.iterations);
    }
}
