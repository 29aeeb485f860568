use rayon::prelude::*;
use serde::Serialize;

use super::{cramer_law, CramerMethod};
use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::process::{law_at, SampledPath};
use crate::protocols::{limit_matrix_at, ProtocolSpec};
use crate::simplex::KahanSum;

const TANGENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct PathCost {
    pub value: f64,
    /// Cost of each segment, `L(midpoint, slope) · Δt`.
    pub segments: Vec<f64>,
    /// First segment with infinite cost.
    pub infinite_at: Option<usize>,
}

/// `c(φ) = ∫ L(φ_t, φ̇_t) dt` for a piecewise-affine path, with `L` evaluated
/// at each segment's midpoint.
pub fn path_cost(path: &SampledPath, game: &GameSpec, protocol: &ProtocolSpec) -> Result<PathCost> {
    let n = game.num_actions();
    if path.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: path.dim(),
        });
    }
    protocol.validate()?;
    let times = path.times();
    let states = path.states();
    for k in 0..path.len().saturating_sub(1) {
        let dt = times[k + 1] - times[k];
        let sum: f64 = states[k + 1].iter().zip(&states[k]).map(|(b, a)| (b - a) / dt).sum();
        if sum.abs() > TANGENT_TOL {
            return Err(Error::NonTangent { segment: k, sum });
        }
    }
    let segments: Vec<f64> = (0..path.len().saturating_sub(1))
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let dt = times[k + 1] - times[k];
            let (a, b) = (&states[k], &states[k + 1]);
            let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
            let z: Vec<f64> = b.iter().zip(a).map(|(q, p)| (q - p) / dt).collect();
            let z = crate::simplex::project_tangent(&z);
            let sigma = limit_matrix_at(game, protocol, &mid)?;
            let r = cramer_law(&law_at(&mid, &sigma), &z, CramerMethod::Dual)?;
            Ok(r.value * dt)
        })
        .collect::<Result<_>>()?;
    let infinite_at = segments.iter().position(|c| c.is_infinite());
    let value = if infinite_at.is_some() {
        f64::INFINITY
    } else {
        segments.iter().copied().collect::<KahanSum>().value()
    };
    Ok(PathCost {
        value,
        segments,
        infinite_at,
    })
}
