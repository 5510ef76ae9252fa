//! Null-space smoothing: a closed-form allocator `F = M^+ tau + K_b * b(tau)`
//! that keeps every thrust away from zero near singular wrenches, so the
//! force-to-angle extraction stays Lipschitz continuous.
//!
//! `K_b` is a fixed null-space direction of `M` (so exactness `M F = tau` is
//! untouched) whose per-actuator blocks all have norm >= 1. The scalar `b`
//! grows when some actuator's force block comes close to the line spanned by
//! its `K_b` block with a small magnitude — exactly the situation where the
//! extracted angles become arbitrarily sensitive to the wrench.

use crate::alloc::{angle_diff, forces_to_commands, initial_commands, EPS_THRUST};
use crate::body::MappingMatrix;
use crate::numeric::spectral_norm;
use nalgebra::{DMatrix, DVector};
use std::ops::Range;
use thiserror::Error;

/// How the smoothing coefficient tapers off away from the singular region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingMode {
    /// `b = max(0, max_i f_ker_i) * g(min_orth)` with an arctan taper
    /// `g(x) = (k_a/2) * (1 - (2/pi) * atan(k_b * (x - eps2)))`: smooth
    /// everywhere, saturating near `k_a` inside the singular region and
    /// decaying to zero far away.
    Sigmoid,
    /// `b = max(0, max_i f_ker_i)` whenever `min_orth < eps2`, else 0. Not
    /// continuous in `b` itself, but certifies the minimum-thrust inequality
    /// `||F_i|| >= eps2` for every actuator whenever the trigger fires.
    StrictRamp,
}

#[derive(Debug, Clone, Copy)]
pub struct SmoothingParams {
    /// Taper amplitude (Sigmoid mode), > 0.
    pub k_a: f64,
    /// Taper sharpness (Sigmoid mode) [1/N], > 0.
    pub k_b: f64,
    /// Thrust floor the smoothing defends [N], > 0.
    pub eps2: f64,
    pub mode: SmoothingMode,
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<(), SmoothError> {
        for (name, v) in [("k_a", self.k_a), ("k_b", self.k_b), ("eps2", self.eps2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SmoothError::InvalidParam { name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SmoothError {
    #[error("smoothing parameter {name} must be positive and finite (got {value})")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("kernel direction has length {got}, expected force dimension {expected}")]
    WrongLength { got: usize, expected: usize },
    #[error(
        "kernel direction is not in the null space of the mapping \
         (residual {residual:.3e} exceeds tolerance {tolerance:.3e})"
    )]
    NotInKernel { residual: f64, tolerance: f64 },
    #[error(
        "kernel-direction block {index} has norm {norm:.3e} < 1; the smoothing \
         coefficient could not defend this actuator's thrust floor"
    )]
    DegenerateKernelBlock { index: usize, norm: f64 },
}

/// Deterministic orthonormal basis whose first column is the given unit
/// vector: the Householder reflection that swaps `e_1` and `u` (identity when
/// they coincide).
pub fn complete_basis(unit: &DVector<f64>) -> DMatrix<f64> {
    let n = unit.len();
    let mut w = -unit.clone();
    w[0] += 1.0;
    let c = w.norm();
    if c < 1e-15 {
        return DMatrix::identity(n, n);
    }
    w /= c;
    DMatrix::identity(n, n) - 2.0 * &w * w.transpose()
}

/// A validated null-space direction of a mapping, with per-actuator blocks,
/// their norms and completed orthonormal bases.
#[derive(Debug, Clone)]
pub struct KernelDirection {
    k_b: DVector<f64>,
    blocks: Vec<Range<usize>>,
    norms: Vec<f64>,
    bases: Vec<DMatrix<f64>>,
    /// Spectral norm of each actuator's pseudo-inverse row block.
    pinv_block_norms: Vec<f64>,
}

impl KernelDirection {
    /// Validate `k_b` against the mapping: right length, inside the null space
    /// (`||M k_b|| <= 1e-8 ||M|| ||k_b||`) and every per-actuator block of
    /// norm >= 1 (so the smoothing coefficient translates one-to-one into a
    /// thrust floor).
    pub fn new(map: &MappingMatrix, k_b: DVector<f64>) -> Result<Self, SmoothError> {
        let d = map.force_dim();
        if k_b.len() != d {
            return Err(SmoothError::WrongLength {
                got: k_b.len(),
                expected: d,
            });
        }
        let residual = (map.matrix() * &k_b).norm();
        let tolerance = 1e-8 * map.matrix().norm() * k_b.norm();
        if residual > tolerance {
            return Err(SmoothError::NotInKernel {
                residual,
                tolerance,
            });
        }

        let m = map.actuator_count();
        let mut blocks = Vec::with_capacity(m);
        let mut norms = Vec::with_capacity(m);
        let mut bases = Vec::with_capacity(m);
        let mut pinv_block_norms = Vec::with_capacity(m);
        for i in 0..m {
            let range = map.block(i);
            let block = k_b.rows(range.start, range.len()).into_owned();
            let norm = block.norm();
            if norm < 1.0 - 1e-9 {
                return Err(SmoothError::DegenerateKernelBlock { index: i, norm });
            }
            bases.push(complete_basis(&(block / norm)));
            norms.push(norm);
            pinv_block_norms.push(spectral_norm(
                &map.pinv().rows(range.start, range.len()).into_owned(),
            ));
            blocks.push(range);
        }
        Ok(Self {
            k_b,
            blocks,
            norms,
            bases,
            pinv_block_norms,
        })
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.k_b
    }

    pub fn block_norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    /// Orthonormal basis of actuator `i`'s force coordinates, first column
    /// along the kernel block.
    pub fn basis(&self, i: usize) -> &DMatrix<f64> {
        &self.bases[i]
    }

    pub fn actuator_count(&self) -> usize {
        self.blocks.len()
    }
}

/// Per-allocation view of the smoothing decision.
#[derive(Debug, Clone)]
pub struct SmoothDiagnostics {
    /// The null-space coefficient actually applied.
    pub b_value: f64,
    /// Smallest per-actuator force component orthogonal to the kernel block
    /// [N]; the smoothing trigger compares this against `eps2`.
    pub min_orth: f64,
    /// Per-actuator coefficient that would lift that actuator's kernel-aligned
    /// force component to `eps2`.
    pub f_ker: Vec<f64>,
    /// Per-actuator angle-sensitivity base `(2/eps2) * ||pinv block||`
    /// [rad/N]: the Lipschitz bound with the smoothing-gradient term left out
    /// (see [`lipschitz_bound`] for the full bound over a wrench box).
    pub lipschitz_bound: Vec<f64>,
}

/// Evaluate the smoothing coefficient for an unsmoothed allocation `f_star`.
pub fn eval_b(
    kd: &KernelDirection,
    p: &SmoothingParams,
    f_star: &DVector<f64>,
) -> (f64, SmoothDiagnostics) {
    let m = kd.actuator_count();
    let mut f_ker = Vec::with_capacity(m);
    let mut min_orth = f64::INFINITY;
    for i in 0..m {
        let range = &kd.blocks[i];
        let block = f_star.rows(range.start, range.len());
        let y = kd.bases[i].transpose() * block;
        let along = y[0];
        let orth = y.rows(1, y.len() - 1).norm();
        min_orth = min_orth.min(orth);
        f_ker.push((p.eps2 - along) / kd.norms[i]);
    }
    let lift = f_ker.iter().cloned().fold(0.0, f64::max);
    let b = match p.mode {
        SmoothingMode::StrictRamp => {
            if min_orth < p.eps2 {
                lift
            } else {
                0.0
            }
        }
        SmoothingMode::Sigmoid => {
            let g = (p.k_a / 2.0)
                * (1.0 - (2.0 / std::f64::consts::PI) * (p.k_b * (min_orth - p.eps2)).atan());
            lift * g
        }
    };
    let lipschitz_bound = kd
        .pinv_block_norms
        .iter()
        .map(|n| 2.0 / p.eps2 * n)
        .collect();
    (
        b,
        SmoothDiagnostics {
            b_value: b,
            min_orth,
            f_ker,
            lipschitz_bound,
        },
    )
}

/// Smoothed minimum-norm allocation: `F = M^+ tau + K_b * b`.
///
/// The null-space term never disturbs exactness (`M F = tau` to working
/// precision); in [`SmoothingMode::StrictRamp`] it additionally guarantees
/// `||F_i|| >= eps2` for every actuator whenever the trigger fired.
pub fn allocate_smooth(
    map: &MappingMatrix,
    kd: &KernelDirection,
    p: &SmoothingParams,
    tau: &DVector<f64>,
) -> (DVector<f64>, SmoothDiagnostics) {
    let f_star = map.pinv() * tau;
    let (b, diag) = eval_b(kd, p, &f_star);
    (f_star + kd.vector() * b, diag)
}

/// Per-actuator upper bound on the angle-reference sensitivity over a wrench
/// box: `L_j = (2/eps2) * (||pinv block j|| + eps1)` where `eps1` bounds the
/// slope of the null-space term, `eps1 = ||K_b|| * max ||grad b||`, the max
/// taken over a sampled grid (33 points per axis of nonzero width) with
/// central differences of step `1e-4 * width`.
pub fn lipschitz_bound(
    map: &MappingMatrix,
    kd: &KernelDirection,
    p: &SmoothingParams,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Vec<f64> {
    let l = map.wrench_dim();
    assert_eq!(lo.len(), l, "box must match the wrench dimension");
    assert_eq!(hi.len(), l, "box must match the wrench dimension");
    const GRID: usize = 33;

    let mut active: Vec<usize> = Vec::new();
    for j in 0..l {
        let width = hi[j] - lo[j];
        assert!(width >= 0.0, "box must satisfy lo <= hi");
        if width > 0.0 {
            active.push(j);
        }
    }

    let b_at = |tau: &DVector<f64>| eval_b(kd, p, &(map.pinv() * tau)).0;

    let mut max_grad = 0.0_f64;
    let mut counter = vec![0usize; active.len()];
    loop {
        let mut tau = lo.clone();
        for (slot, &axis) in active.iter().enumerate() {
            let t = counter[slot] as f64 / (GRID - 1) as f64;
            tau[axis] = lo[axis] + t * (hi[axis] - lo[axis]);
        }
        let mut grad_sq = 0.0;
        for &axis in &active {
            let h = 1e-4 * (hi[axis] - lo[axis]);
            let mut plus = tau.clone();
            plus[axis] += h;
            let mut minus = tau.clone();
            minus[axis] -= h;
            let g = (b_at(&plus) - b_at(&minus)) / (2.0 * h);
            grad_sq += g * g;
        }
        max_grad = max_grad.max(grad_sq.sqrt());

        // Mixed-radix increment over the active axes; empty counter = one point.
        let mut slot = 0;
        loop {
            if slot == counter.len() {
                break;
            }
            counter[slot] += 1;
            if counter[slot] < GRID {
                break;
            }
            counter[slot] = 0;
            slot += 1;
        }
        if counter.iter().all(|&c| c == 0) {
            break;
        }
    }

    let eps1 = kd.vector().norm() * max_grad;
    kd.pinv_block_norms
        .iter()
        .map(|n| 2.0 / p.eps2 * (n + eps1))
        .collect()
}

/// Largest observed per-actuator angle slope along a sampled wrench path:
/// `max |wrapped angle step| / ||delta tau||` over consecutive samples, for
/// any allocator given as a closure. A divergent value under path refinement
/// exposes a discontinuous allocator.
pub fn empirical_lipschitz<F>(
    map: &MappingMatrix,
    path: &[DVector<f64>],
    mut allocate: F,
) -> Vec<f64>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let m = map.actuator_count();
    let mut prev_cmds = initial_commands(map.body());
    let mut prev_tau: Option<&DVector<f64>> = None;
    let mut max_slope = vec![0.0_f64; m];
    for tau in path {
        let f = allocate(tau);
        let cmds = forces_to_commands(map, &f, &prev_cmds, EPS_THRUST);
        if let Some(pt) = prev_tau {
            let dtau = (tau - pt).norm();
            if dtau > 1e-12 {
                for i in 0..m {
                    let da = angle_diff(cmds[i].alpha, prev_cmds[i].alpha).abs();
                    let db = angle_diff(cmds[i].beta, prev_cmds[i].beta).abs();
                    max_slope[i] = max_slope[i].max(da.max(db) / dtau);
                }
            }
        }
        prev_tau = Some(tau);
        prev_cmds = cmds;
    }
    max_slope
}
