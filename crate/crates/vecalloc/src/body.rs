//! Rigid-body and actuator geometry: builds the linear map from stacked
//! per-actuator force coordinates to the body wrench.
//!
//! Each actuator applies a force `F_i = T_i * v(alpha_i, beta_i)` at a body-frame
//! position `p_i`, where `v(alpha, beta) = (sin a cos b, sin a sin b, cos a)` is the
//! unit thrust direction (elevation `alpha` from +z, azimuth `beta` in the x/y
//! plane). The 6D wrench contribution of actuator `i` is linear in `F_i`:
//!
//! ```text
//!   [ force  ]   [        I3         ]
//!   [ torque ] = [ S(p_i) - s_i*k_i*I3 ] * F_i
//! ```
//!
//! with `S(p)` the cross-product matrix and `s_i*k_i*I3` the reaction (drag)
//! torque of a spinning rotor, proportional to thrust with arm `k_i` and sign
//! `s_i`. Gimbal restrictions shrink the per-actuator coordinates from 3 to 2:
//!
//! * [`MountKind::AzimuthOnly`] (elevation fixed at +-90 deg): `F_i` lives in the
//!   x/y plane, coordinates `(F_x, F_y)`.
//! * [`MountKind::ElevationOnly`] (azimuth fixed at `b`): the thrust tilts inside
//!   the plane spanned by the vertical and the in-plane direction
//!   `d(b) = (-sin b, cos b, 0)`, coordinates `(F_xy, F_z)` with
//!   `F_i = F_xy * d(b) + F_z * e_z`. Positive elevation swings the thrust toward
//!   `d(b)`, i.e. 90 deg counter-clockwise from the mount azimuth.
//!
//! Stacking the per-actuator coordinates gives `tau = M * F` with `M` of size
//! `l x d`, `l` the number of controlled wrench axes and `d = sum d_i`. The
//! builder also computes the Moore-Penrose pseudo-inverse and an orthonormal
//! null-space basis of `M`, both via one SVD.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

/// Relative singular-value cutoff: sigma <= RANK_CUTOFF * sigma_max counts as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// One controlled wrench component, in body frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Fx,
    Fy,
    Fz,
    Tx,
    Ty,
    Tz,
}

impl Axis {
    pub const ALL: [Axis; 6] = [Axis::Fx, Axis::Fy, Axis::Fz, Axis::Tx, Axis::Ty, Axis::Tz];

    /// Row index in the full 6D wrench (forces first, then torques).
    pub fn index(self) -> usize {
        match self {
            Axis::Fx => 0,
            Axis::Fy => 1,
            Axis::Fz => 2,
            Axis::Tx => 3,
            Axis::Ty => 4,
            Axis::Tz => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::Fx => "fx",
            Axis::Fy => "fy",
            Axis::Fz => "fz",
            Axis::Tx => "tx",
            Axis::Ty => "ty",
            Axis::Tz => "tz",
        }
    }

    pub fn from_label(s: &str) -> Option<Axis> {
        Axis::ALL.iter().copied().find(|a| a.label() == s)
    }
}

/// Gimbal freedom of one actuator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MountKind {
    /// Both angles free; force coordinates are the full 3D force.
    FullSpherical,
    /// Azimuth free, elevation fixed (must be +-90 deg so the reachable force
    /// set is the x/y plane); coordinates `(F_x, F_y)`.
    AzimuthOnly { elevation: f64 },
    /// Elevation free, azimuth fixed; coordinates `(F_xy, F_z)` in the tilt
    /// plane spanned by `(-sin azimuth, cos azimuth, 0)` and `e_z`.
    ElevationOnly { azimuth: f64 },
}

impl MountKind {
    /// Number of force coordinates this mount contributes to the stacked vector.
    pub fn dof(&self) -> usize {
        match self {
            MountKind::FullSpherical => 3,
            _ => 2,
        }
    }

    /// Number of free command angles (2 for a spherical gimbal, 1 otherwise).
    pub fn free_angles(&self) -> usize {
        match self {
            MountKind::FullSpherical => 2,
            _ => 1,
        }
    }

    /// 3 x dof matrix mapping reduced force coordinates to the 3D force.
    pub fn reduction(&self) -> DMatrix<f64> {
        match *self {
            MountKind::FullSpherical => DMatrix::identity(3, 3),
            MountKind::AzimuthOnly { .. } => {
                DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
            }
            MountKind::ElevationOnly { azimuth } => DMatrix::from_column_slice(
                3,
                2,
                &[-azimuth.sin(), azimuth.cos(), 0.0, 0.0, 0.0, 1.0],
            ),
        }
    }
}

/// Geometry and limits of a single thruster.
#[derive(Debug, Clone)]
pub struct ActuatorSpec {
    /// Application point in body frame [m].
    pub position: Vector3<f64>,
    /// Rotor spin sign for reaction torque: -1, 0 or +1.
    pub spin: i8,
    /// Reaction-torque arm [m]: drag torque = -spin * kappa_d * F.
    pub kappa_d: f64,
    pub mount: MountKind,
    /// Thrust saturation [N], > 0.
    pub t_max: f64,
    /// Gimbal slew rate [rad/s], > 0, per free angle.
    pub rate_limit: f64,
}

impl ActuatorSpec {
    fn validate(&self, index: usize) -> Result<(), BodyError> {
        let err = |msg: String| BodyError::InvalidActuator { index, msg };
        if !self.position.iter().all(|c| c.is_finite()) {
            return Err(err("position must be finite".into()));
        }
        if ![-1i8, 0, 1].contains(&self.spin) {
            return Err(err(format!("spin must be -1, 0 or +1 (got {})", self.spin)));
        }
        if !(self.kappa_d.is_finite() && self.kappa_d >= 0.0) {
            return Err(err(format!("kappa_d must be >= 0 (got {})", self.kappa_d)));
        }
        if self.spin == 0 && self.kappa_d != 0.0 {
            return Err(err(
                "a non-spinning actuator produces no reaction torque; set kappa_d = 0".into(),
            ));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(err(format!("t_max must be > 0 (got {})", self.t_max)));
        }
        if !(self.rate_limit.is_finite() && self.rate_limit > 0.0) {
            return Err(err(format!(
                "rate_limit must be > 0 (got {})",
                self.rate_limit
            )));
        }
        match self.mount {
            MountKind::FullSpherical => {}
            MountKind::AzimuthOnly { elevation } => {
                if !elevation.is_finite() {
                    return Err(err("fixed elevation must be finite".into()));
                }
                if elevation.cos().abs() > 1e-9 {
                    return Err(err(
                        "azimuth-only mounts require elevation = +-90 deg; other fixed \
                         elevations trace a cone, not a plane, and have no linear force \
                         coordinates"
                            .into(),
                    ));
                }
            }
            MountKind::ElevationOnly { azimuth } => {
                if !azimuth.is_finite() {
                    return Err(err("fixed azimuth must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// A rigid body: its actuators and which wrench axes are commanded.
#[derive(Debug, Clone)]
pub struct BodyConfig {
    pub actuators: Vec<ActuatorSpec>,
    pub controlled_axes: Vec<Axis>,
}

impl BodyConfig {
    pub fn validate(&self) -> Result<(), BodyError> {
        if self.actuators.is_empty() {
            return Err(BodyError::NoActuators);
        }
        if self.controlled_axes.is_empty() {
            return Err(BodyError::NoControlledAxes);
        }
        for (i, a) in self.controlled_axes.iter().enumerate() {
            if self.controlled_axes[..i].contains(a) {
                return Err(BodyError::DuplicateAxis(a.label()));
            }
        }
        for (i, act) in self.actuators.iter().enumerate() {
            act.validate(i)?;
        }
        Ok(())
    }

    /// Total number of stacked force coordinates `d = sum d_i`.
    pub fn force_dim(&self) -> usize {
        self.actuators.iter().map(|a| a.mount.dof()).sum()
    }

    pub fn wrench_dim(&self) -> usize {
        self.controlled_axes.len()
    }
}

#[derive(Debug, Error)]
pub enum BodyError {
    #[error("body has no actuators")]
    NoActuators,
    #[error("no controlled axes selected")]
    NoControlledAxes,
    #[error("controlled axis {0} listed twice")]
    DuplicateAxis(&'static str),
    #[error("actuator {index}: {msg}")]
    InvalidActuator { index: usize, msg: String },
    #[error(
        "mapping rank {rank} cannot span the {expected} controlled axes; \
         the requested wrench space is unreachable with this geometry"
    )]
    RankDeficientTarget { rank: usize, expected: usize },
}

/// Cross-product matrix: `skew(p) * v == p x v`.
pub fn skew(p: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -p.z, p.y, p.z, 0.0, -p.x, -p.y, p.x, 0.0)
}

/// Full 6 x 3 wrench block of one actuator: rows are (force; torque) per unit force.
pub fn actuator_block(spec: &ActuatorSpec) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(6, 3);
    b.view_mut((0, 0), (3, 3)).copy_from(&Matrix3::identity());
    let torque = skew(&spec.position) - f64::from(spec.spin) * spec.kappa_d * Matrix3::identity();
    b.view_mut((3, 0), (3, 3)).copy_from(&torque);
    b
}

/// The assembled force-to-wrench map together with its pseudo-inverse and
/// null-space basis.
#[derive(Debug, Clone)]
pub struct MappingMatrix {
    body: BodyConfig,
    m: DMatrix<f64>,
    pinv: DMatrix<f64>,
    kernel: DMatrix<f64>,
    /// Per-actuator column ranges into the stacked force vector.
    blocks: Vec<std::ops::Range<usize>>,
}

impl MappingMatrix {
    pub fn body(&self) -> &BodyConfig {
        &self.body
    }

    /// The `l x d` map from stacked force coordinates to controlled wrench axes.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Moore-Penrose pseudo-inverse, `d x l`.
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// Orthonormal null-space basis, `d x k` (`k = d - rank`).
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn wrench_dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn force_dim(&self) -> usize {
        self.m.ncols()
    }

    pub fn actuator_count(&self) -> usize {
        self.blocks.len()
    }

    /// Column range of actuator `i` in the stacked force vector.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.blocks[i].clone()
    }

    /// Extract actuator `i`'s force coordinates from a stacked vector.
    pub fn block_of<'a>(&self, f: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        let r = &self.blocks[i];
        f.rows(r.start, r.end - r.start)
    }
}

/// Assemble the reduced mapping for a body, with pseudo-inverse and kernel.
///
/// Fails with [`BodyError::RankDeficientTarget`] when the actuators cannot span
/// the requested wrench axes.
pub fn build_mapping(cfg: &BodyConfig) -> Result<MappingMatrix, BodyError> {
    cfg.validate()?;
    let l = cfg.wrench_dim();
    let d = cfg.force_dim();

    let mut m = DMatrix::zeros(l, d);
    let mut blocks = Vec::with_capacity(cfg.actuators.len());
    let mut col = 0;
    for spec in &cfg.actuators {
        let dof = spec.mount.dof();
        let reduced = actuator_block(spec) * spec.mount.reduction();
        for (r, axis) in cfg.controlled_axes.iter().enumerate() {
            for c in 0..dof {
                m[(r, col + c)] = reduced[(axis.index(), c)];
            }
        }
        blocks.push(col..col + dof);
        col += dof;
    }

    // One SVD serves rank, pseudo-inverse and kernel. nalgebra's thin SVD of an
    // l x d matrix with l < d omits the null-space directions of V, so pad with
    // zero rows to at least d x d; the extra rows change nothing else.
    let rows = l.max(d);
    let mut padded = DMatrix::zeros(rows, d);
    padded.view_mut((0, 0), (l, d)).copy_from(&m);
    let svd = padded.svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_CUTOFF * sigma_max;

    let mut rank = 0;
    let mut pinv = DMatrix::zeros(d, l);
    let mut kernel_cols: Vec<DVector<f64>> = Vec::new();
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        let v_i = v_t.row(i).transpose();
        if sigma > cutoff {
            rank += 1;
            // M' = V S^+ U^T restricted to the first l rows of U.
            let u_top = u.column(i).rows(0, l).into_owned();
            pinv += v_i * u_top.transpose() / sigma;
        } else {
            kernel_cols.push(v_i);
        }
    }
    if rank < l {
        return Err(BodyError::RankDeficientTarget { rank, expected: l });
    }

    let kernel = if kernel_cols.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&kernel_cols)
    };

    Ok(MappingMatrix {
        body: cfg.clone(),
        m,
        pinv,
        kernel,
        blocks,
    })
}
