use crate::error::{Error, Result};
use crate::process::IncrementLaw;

/// Output of [`face_project`].
#[derive(Debug, Clone)]
pub struct FaceProjection {
    /// A law with the same mean that places no mass on rows outside `I`.
    pub projected: IncrementLaw,
    /// Length-`n` vector; zero off `I`.
    pub chi: Vec<f64>,
}

const RESIDUAL_TOL: f64 = 1e-12;

/// Moves all mass off the rows `k ∉ I` while preserving the mean, by
/// repeatedly cancelling an outflow `k → j` against an inflow `i → k`.
///
/// Requires `(E λ)_k ≥ 0` for every `k ∉ I`.
pub fn face_project(lambda: &IncrementLaw, face: &[usize]) -> Result<FaceProjection> {
    let n = lambda.dim();
    if face.iter().any(|&i| i >= n) {
        return Err(Error::Precondition("face index out of range".into()));
    }
    let in_face = |i: usize| face.contains(&i);
    let mean = lambda.mean();
    if let Some(k) = (0..n).find(|&k| !in_face(k) && mean[k] < -RESIDUAL_TOL) {
        return Err(Error::Precondition(format!(
            "mean is negative ({:e}) at action {} outside the face",
            mean[k],
            k + 1
        )));
    }
    let mut off: Vec<f64> = (0..n * n).map(|c| lambda.mass(c / n, c % n)).collect();
    let mut null = lambda.null_mass();
    let mut chi = vec![0.0; n];
    let at = |i: usize, j: usize| i * n + j;
    for k in (0..n).filter(|&k| !in_face(k)) {
        loop {
            let Some(j) = (0..n).find(|&j| j != k && off[at(k, j)] > 0.0) else {
                break;
            };
            let Some(i) = (0..n).find(|&i| i != k && off[at(i, k)] > 0.0) else {
                // Only rounding residue can be left without a matching inflow.
                let rest: f64 = (0..n).map(|j| off[at(k, j)]).sum();
                if rest > RESIDUAL_TOL {
                    return Err(Error::Precondition(format!(
                        "row {} keeps mass {rest:e} with no inflow",
                        k + 1
                    )));
                }
                for j in 0..n {
                    off[at(k, j)] = 0.0;
                }
                null += rest;
                break;
            };
            let (out, inn) = (off[at(k, j)], off[at(i, k)]);
            let c = out.min(inn);
            if out <= inn {
                off[at(k, j)] = 0.0;
                off[at(i, k)] = inn - c;
            } else {
                off[at(k, j)] = out - c;
                off[at(i, k)] = 0.0;
            }
            if i != j {
                off[at(i, j)] += c;
                null += c;
            } else {
                null += 2.0 * c;
                if in_face(i) {
                    chi[i] += c;
                }
            }
        }
    }
    Ok(FaceProjection {
        projected: IncrementLaw::from_parts(n, off, null),
        chi,
    })
}
