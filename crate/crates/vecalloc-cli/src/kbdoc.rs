//! JSON document produced by `solve-kb` and consumed by later runs.

use serde::{Deserialize, Serialize};
use vecalloc::nalgebra::DVector;
use vecalloc::{KbSolution, KernelDirection, MappingMatrix};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbDocument {
    /// The rest direction in extended force coordinates.
    pub k_b: Vec<f64>,
    /// Per-actuator norms of its blocks.
    pub block_norms: Vec<f64>,
    /// `||M * k_b||` — how far the vector is from the exact null space.
    pub residual: f64,
    /// `||k_b||^2` attained by the search.
    pub objective: f64,
    /// Null-space dimension left after the typical-wrench constraints.
    pub reduced_dim: usize,
    /// Per-actuator orthonormal bases whose first column is the block
    /// direction (rows of the actuator's coordinate block).
    pub bases: Vec<Vec<Vec<f64>>>,
}

impl KbDocument {
    pub fn from_solution(map: &MappingMatrix, solution: &KbSolution) -> Self {
        let kd = &solution.direction;
        let m = kd.actuator_count();
        let residual = (map.matrix() * kd.vector()).norm();
        KbDocument {
            k_b: kd.vector().iter().copied().collect(),
            block_norms: (0..m).map(|i| kd.block_norm(i)).collect(),
            residual,
            objective: solution.objective,
            reduced_dim: solution.reduced_dim,
            bases: (0..m)
                .map(|i| {
                    let b = kd.basis(i);
                    (0..b.nrows())
                        .map(|r| (0..b.ncols()).map(|c| b[(r, c)]).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// Rebuild the kernel direction, re-validating null-space membership and
    /// block norms against the given mapping.
    pub fn to_direction(&self, map: &MappingMatrix) -> Result<KernelDirection, CliError> {
        KernelDirection::new(map, DVector::from_vec(self.k_b.clone()))
            .map_err(|e| CliError::Config(format!("rest-direction document: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serialization cannot fail")
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("rest-direction document: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
