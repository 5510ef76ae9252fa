//! Offline solver for the rest-configuration null-space direction `K_b`.
//!
//! The smooth allocator needs one fixed vector `K_b` in the null space of the
//! mapping whose per-actuator blocks all have norm >= 1 (so the smoothing
//! coefficient lifts every thrust at least one-for-one). Among those, the
//! shortest one wastes the least control effort, so we solve
//!
//! ```text
//!   minimize ||K_b||^2   subject to  M K_b = 0,  ||K_b,i|| >= 1 for all i,
//!                                    K_b,i . F*_i(tau_j) = 0 for each typical wrench
//! ```
//!
//! The optional "typical wrench" constraints keep the rest direction
//! orthogonal, actuator by actuator, to the forces the vehicle requests most
//! often, so steady operation pays no fighting-thrust penalty. They shrink the
//! search space and can make the problem infeasible.
//!
//! Parameterizing `K_b = Z w` over the orthonormal kernel basis makes the
//! kernel constraint implicit, and the orthogonality rows are eliminated by a
//! second null-space projection. What remains is scale-invariant: minimizing
//! `||w||^2 / min_i ||B_i w||^2` equals maximizing the smallest block norm
//! over the unit sphere, which we do by annealed soft-min gradient ascent from
//! multiple random starts, then rescale so the smallest block lands exactly on
//! the floor.

use crate::body::MappingMatrix;
use crate::smooth::{KernelDirection, SmoothError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default number of random starts for the nonconvex search.
pub const DEFAULT_SEEDS: usize = 64;

/// Inputs of the rest-direction program.
pub struct KbProblem<'a> {
    pub map: &'a MappingMatrix,
    /// Wrenches whose minimum-norm allocation the rest direction must not
    /// fight (per-actuator orthogonality).
    pub typical_wrenches: Vec<DVector<f64>>,
    /// Per-actuator block-norm floor; 1 matches what the smooth allocator
    /// requires.
    pub min_block_norm: f64,
}

impl<'a> KbProblem<'a> {
    pub fn new(map: &'a MappingMatrix) -> Self {
        Self {
            map,
            typical_wrenches: Vec::new(),
            min_block_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KbSolution {
    pub direction: KernelDirection,
    /// `||K_b||^2` of the returned vector.
    pub objective: f64,
    /// Null-space dimension left after eliminating the typical-wrench rows.
    pub reduced_dim: usize,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("the mapping has a trivial null space, so no rest direction exists")]
    EmptyKernel,
    #[error(
        "the typical-wrench orthogonality constraints exhaust the null space; \
         drop some of them or accept a fighting rest direction"
    )]
    ConstraintsExhaustKernel,
    #[error(
        "actuator {index}: no remaining null-space direction moves this actuator, \
         so its block norm can never reach the floor"
    )]
    ActuatorPinned { index: usize },
    #[error("solved direction failed validation: {0}")]
    Validation(#[from] SmoothError),
}

/// Solve the rest-direction program with `seeds` random starts drawn from a
/// generator seeded with `rng_seed`. Deterministic for fixed arguments, and
/// the objective is nonincreasing in `seeds` (starts are a prefix sequence).
pub fn solve_kb(problem: &KbProblem, seeds: usize, rng_seed: u64) -> Result<KbSolution, KbError> {
    let map = problem.map;
    let k = map.kernel_dim();
    if k == 0 {
        return Err(KbError::EmptyKernel);
    }
    assert!(
        problem.min_block_norm > 0.0 && problem.min_block_norm.is_finite(),
        "block-norm floor must be positive"
    );

    // Eliminate the orthogonality rows: constraints are linear in w, one row
    // F*_i(tau)^T Z_i per actuator and typical wrench.
    let reduced = if problem.typical_wrenches.is_empty() {
        map.kernel().clone()
    } else {
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for tau in &problem.typical_wrenches {
            let f_star = map.pinv() * tau;
            for i in 0..map.actuator_count() {
                let range = map.block(i);
                let z_i = map.kernel().rows(range.start, range.len());
                let row = z_i.transpose() * map.block_of(&f_star, i);
                if row.norm() > 1e-12 * f_star.norm().max(1.0) {
                    rows.push(row);
                }
            }
        }
        if rows.is_empty() {
            map.kernel().clone()
        } else {
            let mut c = DMatrix::zeros(rows.len().max(k), k);
            for (r, row) in rows.iter().enumerate() {
                c.row_mut(r).copy_from(&row.transpose());
            }
            let svd = c.svd(false, true);
            let v_t = svd.v_t.as_ref().expect("svd requested v_t");
            let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let cutoff = crate::body::RANK_CUTOFF * sigma_max;
            let null_cols: Vec<DVector<f64>> = svd
                .singular_values
                .iter()
                .enumerate()
                .filter(|&(_, &s)| s <= cutoff)
                .map(|(i, _)| v_t.row(i).transpose())
                .collect();
            if null_cols.is_empty() {
                return Err(KbError::ConstraintsExhaustKernel);
            }
            map.kernel() * DMatrix::from_columns(&null_cols)
        }
    };
    let k_red = reduced.ncols();

    // Per-actuator reduced blocks; a vanishing block can never reach the floor.
    let blocks: Vec<DMatrix<f64>> = (0..map.actuator_count())
        .map(|i| {
            let range = map.block(i);
            reduced.rows(range.start, range.len()).into_owned()
        })
        .collect();
    for (i, b) in blocks.iter().enumerate() {
        if b.norm() <= 1e-12 {
            return Err(KbError::ActuatorPinned { index: i });
        }
    }
    let grams: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.transpose() * b).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..seeds.max(1) {
        let mut w0 = DVector::from_fn(k_red, |_, _| rng.gen_range(-1.0..1.0));
        while w0.norm() < 1e-3 {
            w0 = DVector::from_fn(k_red, |_, _| rng.gen_range(-1.0..1.0));
        }
        w0 /= w0.norm();
        let w = maximize_min_block(&grams, w0);
        let g = min_block_norm(&blocks, &w);
        if g <= 1e-12 {
            continue;
        }
        let objective =
            (problem.min_block_norm / g).powi(2) * (reduced.columns(0, k_red) * &w).norm_squared();
        let better = match &best {
            None => true,
            Some((bo, _)) => objective < bo - 1e-12 * bo.max(1.0),
        };
        if better {
            best = Some((objective, w));
        }
    }
    let (objective, w) = best.ok_or(KbError::ConstraintsExhaustKernel)?;

    let g = min_block_norm(&blocks, &w);
    let mut k_b = &reduced * &w * (problem.min_block_norm / g);
    canonicalize_sign(&mut k_b);
    let direction = KernelDirection::new(map, k_b)?;
    Ok(KbSolution {
        direction,
        objective,
        reduced_dim: k_red,
    })
}

fn min_block_norm(blocks: &[DMatrix<f64>], w: &DVector<f64>) -> f64 {
    blocks
        .iter()
        .map(|b| (b * w).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Flip the overall sign so the first clearly nonzero component is positive,
/// removing the +-K_b ambiguity.
fn canonicalize_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-9 * scale.max(1e-300)) {
        if *first < 0.0 {
            *v = -v.clone();
        }
    }
}

/// Maximize `min_i w^T G_i w` over the unit sphere by gradient ascent on a
/// soft-min with a decreasing temperature, which stays differentiable through
/// the block-norm ties that characterize the maximin points.
fn maximize_min_block(grams: &[DMatrix<f64>], mut w: DVector<f64>) -> DVector<f64> {
    let k = w.len();
    if k == 1 {
        return w;
    }
    let q_values = |w: &DVector<f64>| -> Vec<f64> {
        grams.iter().map(|g| (w.transpose() * g * w)[0]).collect()
    };
    let soft_min = |q: &[f64], t: f64| -> f64 {
        let q_min = q.iter().cloned().fold(f64::INFINITY, f64::min);
        let sum: f64 = q.iter().map(|&qi| (-(qi - q_min) / t).exp()).sum();
        q_min - t * sum.ln()
    };

    let q0 = q_values(&w);
    let scale = q0.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    for stage in 0..10_i32 {
        let t = scale * 10f64.powi(-stage);
        for _ in 0..200 {
            let q = q_values(&w);
            let q_min = q.iter().cloned().fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = q.iter().map(|&qi| (-(qi - q_min) / t).exp()).collect();
            let wsum: f64 = weights.iter().sum();
            let mut grad = DVector::zeros(k);
            for (g, wt) in grams.iter().zip(&weights) {
                grad += g * &w * (2.0 * wt / wsum);
            }
            // Project onto the sphere's tangent space.
            let radial = w.dot(&grad);
            let tangent = &grad - &w * radial;
            let tnorm = tangent.norm();
            if tnorm <= 1e-14 * (1.0 + grad.norm()) {
                break;
            }
            let h0 = soft_min(&q, t);
            let mut step = 0.5;
            let mut accepted = false;
            for _ in 0..40 {
                let mut cand = &w + &tangent * (step / tnorm.max(1e-300));
                cand /= cand.norm();
                if soft_min(&q_values(&cand), t) > h0 + 1e-15 * h0.abs() {
                    w = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
    w
}
