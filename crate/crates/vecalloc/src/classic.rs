//! Baseline allocator that optimizes thrust magnitudes and gimbal angles
//! directly:
//!
//! ```text
//!   minimize   T' W T + s' Q s + dtheta' Omega dtheta
//!                + rho / (eps_det + det(J(theta) J(theta)'))
//!   subject to J(theta) T + s = tau,
//!              0 <= T_i <= t_max_i,
//!              |theta - theta_prev| <= rate_limit * dt   (per free angle)
//! ```
//!
//! where `J(theta)` maps thrust magnitudes to the controlled wrench axes and
//! the determinant term penalizes singular gimbal arrangements. The problem is
//! nonconvex in `theta`; it is solved by alternating minimization — an exact
//! active-set box QP in `T`, then projected gradient over the angle box — and
//! is deliberately a *local* method. That is the point of keeping it around:
//! after a force-direction reversal it tends to stall in a local minimum
//! (thrusts collapse while the angles lag), which the convex reformulation
//! avoids.

use crate::alloc::{thrust_direction, wrap_angle, ActuatorCommand};
use crate::body::{BodyConfig, MountKind};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Weights of the baseline objective.
#[derive(Debug, Clone)]
pub struct ClassicParams {
    /// Diagonal thrust-energy weight, one entry per actuator, > 0.
    pub w: DVector<f64>,
    /// Diagonal slack penalty, one entry per controlled axis, > 0.
    pub q: DVector<f64>,
    /// Diagonal angle-change penalty, one entry per free angle, >= 0.
    pub omega: DVector<f64>,
    /// Gain of the singularity penalty, >= 0.
    pub rho: f64,
    /// Regularizer in the penalty denominator, > 0.
    pub eps_det: f64,
}

impl ClassicParams {
    /// Scalar weights replicated over the diagonals.
    pub fn uniform(cfg: &BodyConfig, w: f64, q: f64, omega: f64, rho: f64, eps_det: f64) -> Self {
        let free: usize = cfg.actuators.iter().map(|a| a.mount.free_angles()).sum();
        Self {
            w: DVector::from_element(cfg.actuators.len(), w),
            q: DVector::from_element(cfg.controlled_axes.len(), q),
            omega: DVector::from_element(free, omega),
            rho,
            eps_det,
        }
    }

    fn validate(&self, cfg: &BodyConfig) -> Result<(), ClassicError> {
        let free: usize = cfg.actuators.iter().map(|a| a.mount.free_angles()).sum();
        if self.w.len() != cfg.actuators.len()
            || self.q.len() != cfg.controlled_axes.len()
            || self.omega.len() != free
        {
            return Err(ClassicError::WeightShape {
                w_len: self.w.len(),
                q_len: self.q.len(),
                omega_len: self.omega.len(),
                actuators: cfg.actuators.len(),
                axes: cfg.controlled_axes.len(),
                free_angles: free,
            });
        }
        let diag_ok = self
            .w
            .iter()
            .chain(self.q.iter())
            .all(|&x| x.is_finite() && x > 0.0)
            && self.omega.iter().all(|&x| x.is_finite() && x >= 0.0);
        let rho_ok = self.rho.is_finite() && self.rho >= 0.0;
        let eps_ok = self.eps_det.is_finite() && self.eps_det > 0.0;
        if !diag_ok || !rho_ok || !eps_ok {
            return Err(ClassicError::BadWeightValue);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ClassicError {
    #[error(
        "weight diagonals have lengths {w_len}/{q_len}/{omega_len}, expected {actuators} \
         actuators, {axes} controlled axes and {free_angles} free angles"
    )]
    WeightShape {
        w_len: usize,
        q_len: usize,
        omega_len: usize,
        actuators: usize,
        axes: usize,
        free_angles: usize,
    },
    #[error("weights must be positive diagonals with rho >= 0 and eps_det > 0")]
    BadWeightValue,
    #[error("expected one previous command per actuator ({expected}), got {got}")]
    PrevCount { got: usize, expected: usize },
    #[error("wrench has length {got}, expected {expected}")]
    WrenchShape { got: usize, expected: usize },
    #[error("time step must be positive (got {0})")]
    BadTimeStep(f64),
}

/// Flattened free-angle coordinates: which actuator, and whether the entry is
/// the elevation (`alpha`) or the azimuth (`beta`).
#[derive(Clone, Copy)]
enum AngleSlot {
    Alpha(usize),
    Beta(usize),
}

fn angle_layout(cfg: &BodyConfig) -> Vec<AngleSlot> {
    let mut slots = Vec::new();
    for (i, spec) in cfg.actuators.iter().enumerate() {
        match spec.mount {
            MountKind::FullSpherical => {
                slots.push(AngleSlot::Alpha(i));
                slots.push(AngleSlot::Beta(i));
            }
            MountKind::AzimuthOnly { .. } => slots.push(AngleSlot::Beta(i)),
            MountKind::ElevationOnly { .. } => slots.push(AngleSlot::Alpha(i)),
        }
    }
    slots
}

fn angles_of(prev: &[ActuatorCommand], slots: &[AngleSlot]) -> DVector<f64> {
    DVector::from_iterator(
        slots.len(),
        slots.iter().map(|slot| match *slot {
            AngleSlot::Alpha(i) => prev[i].alpha,
            AngleSlot::Beta(i) => prev[i].beta,
        }),
    )
}

/// Commands with the free angles replaced by `theta` (fixed angles echoed).
fn apply_angles(
    prev: &[ActuatorCommand],
    slots: &[AngleSlot],
    theta: &DVector<f64>,
) -> Vec<ActuatorCommand> {
    let mut cmds = prev.to_vec();
    for (k, slot) in slots.iter().enumerate() {
        match *slot {
            AngleSlot::Alpha(i) => cmds[i].alpha = theta[k],
            AngleSlot::Beta(i) => cmds[i].beta = theta[k],
        }
    }
    cmds
}

/// Wrench produced per unit thrust by each actuator at the given angles
/// (l x m on the controlled axes).
fn effectiveness(cfg: &BodyConfig, cmds: &[ActuatorCommand]) -> DMatrix<f64> {
    let l = cfg.controlled_axes.len();
    let m = cfg.actuators.len();
    let mut j = DMatrix::zeros(l, m);
    for (i, (spec, cmd)) in cfg.actuators.iter().zip(cmds).enumerate() {
        let dir = thrust_direction(&spec.mount, cmd.alpha, cmd.beta);
        let torque = spec.position.cross(&dir) - f64::from(spec.spin) * spec.kappa_d * dir;
        for (row, axis) in cfg.controlled_axes.iter().enumerate() {
            let idx = axis.index();
            j[(row, i)] = if idx < 3 { dir[idx] } else { torque[idx - 3] };
        }
    }
    j
}

/// Local solve of the thrust/angle program. Always returns a feasible point:
/// thrusts inside `[0, t_max]`, free angles within `rate_limit * dt` of the
/// previous command. The slack is `tau - J(theta) T`.
pub fn solve_classic(
    cfg: &BodyConfig,
    params: &ClassicParams,
    tau: &DVector<f64>,
    prev: &[ActuatorCommand],
    dt: f64,
) -> Result<(Vec<ActuatorCommand>, DVector<f64>), ClassicError> {
    params.validate(cfg)?;
    if prev.len() != cfg.actuators.len() {
        return Err(ClassicError::PrevCount {
            got: prev.len(),
            expected: cfg.actuators.len(),
        });
    }
    if tau.len() != cfg.controlled_axes.len() {
        return Err(ClassicError::WrenchShape {
            got: tau.len(),
            expected: cfg.controlled_axes.len(),
        });
    }
    // `dt = +inf` is legal (it decouples the angle-change penalty for
    // one-shot solves); NaN and non-positive steps are not.
    if dt.is_nan() || dt <= 0.0 {
        return Err(ClassicError::BadTimeStep(dt));
    }

    let slots = angle_layout(cfg);
    let theta_prev = angles_of(prev, &slots);
    let travel: Vec<f64> = slots
        .iter()
        .map(|slot| {
            let i = match *slot {
                AngleSlot::Alpha(i) | AngleSlot::Beta(i) => i,
            };
            cfg.actuators[i].rate_limit * dt
        })
        .collect();
    let lo_theta: Vec<f64> = (0..slots.len())
        .map(|k| theta_prev[k] - travel[k])
        .collect();
    let hi_theta: Vec<f64> = (0..slots.len())
        .map(|k| theta_prev[k] + travel[k])
        .collect();
    let t_max: Vec<f64> = cfg.actuators.iter().map(|a| a.t_max).collect();

    let mut theta = theta_prev.clone();
    let mut thrust = DVector::from_iterator(
        prev.len(),
        prev.iter()
            .zip(&t_max)
            .map(|(c, &tm)| c.thrust.clamp(0.0, tm)),
    );

    let q_diag = DMatrix::from_diagonal(&params.q);
    let angle_cost = |theta: &DVector<f64>, j: &DMatrix<f64>, thrust: &DVector<f64>| -> f64 {
        let s = tau - j * thrust;
        let dth = theta - &theta_prev;
        let mut cost = s.dot(&(&q_diag * &s));
        cost += dth
            .iter()
            .zip(params.omega.iter())
            .map(|(d, om)| om * d * d)
            .sum::<f64>();
        if params.rho > 0.0 {
            cost += params.rho / (params.eps_det + (j * j.transpose()).determinant());
        }
        cost
    };

    for _outer in 0..50 {
        let theta_before = theta.clone();
        let thrust_before = thrust.clone();

        // Thrust step: exact box-constrained quadratic minimization.
        let j = effectiveness(cfg, &apply_angles(prev, &slots, &theta));
        let jq = j.transpose() * &q_diag;
        let h = DMatrix::from_diagonal(&params.w) * 2.0 + 2.0 * (&jq * &j);
        let g = -2.0 * (&jq * tau);
        thrust = box_qp(&h, &g, &thrust, &t_max);

        // Angle step: projected gradient with central differences.
        let mut cost = {
            let j = effectiveness(cfg, &apply_angles(prev, &slots, &theta));
            angle_cost(&theta, &j, &thrust)
        };
        for _inner in 0..40 {
            // Central differences give the gradient and, with the current
            // cost, a per-coordinate curvature estimate — used to scale the
            // descent direction, since the angle landscape is badly
            // conditioned (curvature grows with the thrust squared).
            let h_step = 1e-6;
            let mut grad = DVector::zeros(slots.len());
            let mut curv = DVector::zeros(slots.len());
            for k in 0..slots.len() {
                let mut plus = theta.clone();
                plus[k] += h_step;
                let mut minus = theta.clone();
                minus[k] -= h_step;
                let cp = angle_cost(
                    &plus,
                    &effectiveness(cfg, &apply_angles(prev, &slots, &plus)),
                    &thrust,
                );
                let cm = angle_cost(
                    &minus,
                    &effectiveness(cfg, &apply_angles(prev, &slots, &minus)),
                    &thrust,
                );
                grad[k] = (cp - cm) / (2.0 * h_step);
                curv[k] = ((cp - 2.0 * cost + cm) / (h_step * h_step)).max(0.0);
            }
            let gmax = grad.amax();
            if gmax <= 1e-14 * (1.0 + cost.abs()) {
                break;
            }
            let curv_floor = 1e-12 * (1.0 + curv.amax());
            // Scaled step, capped at one radian per coordinate; backtracking
            // handles any overshoot from the local curvature model.
            let dir = DVector::from_fn(slots.len(), |k, _| {
                (grad[k] / curv[k].max(curv_floor)).clamp(-1.0, 1.0)
            });
            let mut eta = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let mut trial = &theta - &dir * eta;
                for k in 0..slots.len() {
                    trial[k] = trial[k].clamp(lo_theta[k], hi_theta[k]);
                }
                let trial_cost = angle_cost(
                    &trial,
                    &effectiveness(cfg, &apply_angles(prev, &slots, &trial)),
                    &thrust,
                );
                if trial_cost < cost - 1e-18 {
                    theta = trial;
                    cost = trial_cost;
                    improved = true;
                    break;
                }
                eta /= 2.0;
            }
            if !improved {
                break;
            }
        }

        let moved = (&theta - &theta_before)
            .amax()
            .max((&thrust - &thrust_before).amax());
        if moved <= 1e-12 {
            break;
        }
    }

    let mut cmds = apply_angles(prev, &slots, &theta);
    for (cmd, t) in cmds.iter_mut().zip(thrust.iter()) {
        cmd.thrust = *t;
        cmd.alpha = wrap_angle(cmd.alpha);
        cmd.beta = wrap_angle(cmd.beta);
    }
    let j = effectiveness(cfg, &cmds);
    let slack = tau - &j * &thrust;
    Ok((cmds, slack))
}

#[derive(Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Exact minimizer of `0.5 T' H T + g' T` over the box `[0, t_max]` by a
/// primal active-set method (H symmetric positive definite).
fn box_qp(h: &DMatrix<f64>, g: &DVector<f64>, start: &DVector<f64>, t_max: &[f64]) -> DVector<f64> {
    let m = g.len();
    let mut t = start.clone();
    let mut working: Vec<Bound> = (0..m)
        .map(|i| {
            if t[i] <= 0.0 {
                Bound::Lower
            } else if t[i] >= t_max[i] {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    for (i, state) in working.iter().enumerate() {
        match state {
            Bound::Lower => t[i] = 0.0,
            Bound::Upper => t[i] = t_max[i],
            Bound::Free => {}
        }
    }
    let tol = 1e-10 * (1.0 + g.amax());

    for _ in 0..100 {
        let free: Vec<usize> = (0..m).filter(|&i| working[i] == Bound::Free).collect();
        let mut target = t.clone();
        if !free.is_empty() {
            // Solve the free block with the bound variables substituted in.
            let nf = free.len();
            let mut hff = DMatrix::zeros(nf, nf);
            let mut rhs = DVector::zeros(nf);
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = -g[i];
                for (b, &j) in free.iter().enumerate() {
                    hff[(a, b)] = h[(i, j)];
                }
                for j in 0..m {
                    if working[j] != Bound::Free {
                        rhs[a] -= h[(i, j)] * t[j];
                    }
                }
            }
            let sol = hff
                .clone()
                .cholesky()
                .map(|c| c.solve(&rhs))
                .unwrap_or_else(|| hff.lu().solve(&rhs).unwrap_or_else(|| rhs.clone()));
            for (a, &i) in free.iter().enumerate() {
                target[i] = sol[a];
            }

            // Longest feasible step toward the subproblem solution.
            let mut alpha = 1.0f64;
            let mut blocking: Option<(usize, Bound)> = None;
            for &i in &free {
                let delta = target[i] - t[i];
                if delta < 0.0 && target[i] < 0.0 {
                    let a = -t[i] / delta;
                    if a < alpha {
                        alpha = a;
                        blocking = Some((i, Bound::Lower));
                    }
                } else if delta > 0.0 && target[i] > t_max[i] {
                    let a = (t_max[i] - t[i]) / delta;
                    if a < alpha {
                        alpha = a;
                        blocking = Some((i, Bound::Upper));
                    }
                }
            }
            for &i in &free {
                t[i] += alpha * (target[i] - t[i]);
            }
            if let Some((i, bound)) = blocking {
                t[i] = match bound {
                    Bound::Lower => 0.0,
                    Bound::Upper => t_max[i],
                    Bound::Free => unreachable!(),
                };
                working[i] = bound;
                continue;
            }
        }

        // Full step taken: release the bound variable with the most negative
        // multiplier, if any; otherwise the KKT conditions hold.
        let grad = h * &t + g;
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..m {
            let violation = match working[i] {
                Bound::Lower => -grad[i],
                Bound::Upper => grad[i],
                Bound::Free => continue,
            };
            if violation > tol && worst.is_none_or(|(_, v)| violation > v) {
                worst = Some((i, violation));
            }
        }
        match worst {
            Some((i, _)) => working[i] = Bound::Free,
            None => break,
        }
    }
    t
}
