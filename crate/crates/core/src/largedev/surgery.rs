use crate::dynamics::{integrate, Direction, VectorField};
use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::process::SampledPath;
use crate::protocols::{varsigma_scan, ProtocolSpec};
use crate::simplex::SimplexPoint;

const VARSIGMA_MESH: u32 = 200;

/// Pushes `φ` into the interior: follow the mean dynamic from `φ_0` for time
/// `α`, then replay the increments of `φ` scaled by `1 − 2α/ς`. The result
/// lives on the same interval `[0, T]` as `φ`. With `beta`, the tail is
/// replaced by its piecewise-affine interpolation on the grid `α + kβ`.
pub fn path_surgery(
    path: &SampledPath,
    alpha: f64,
    beta: Option<f64>,
    game: &GameSpec,
    protocol: &ProtocolSpec,
) -> Result<SampledPath> {
    let varsigma = varsigma_scan(game, protocol, VARSIGMA_MESH)?;
    path_surgery_with(path, alpha, beta, game, protocol, varsigma)
}

/// [`path_surgery`] with an explicit lower bound `ς` on switch probabilities.
pub fn path_surgery_with(
    path: &SampledPath,
    alpha: f64,
    beta: Option<f64>,
    game: &GameSpec,
    protocol: &ProtocolSpec,
    varsigma: f64,
) -> Result<SampledPath> {
    if !(varsigma > 0.0 && varsigma <= 1.0) {
        return Err(Error::Precondition(format!("ς must lie in (0, 1], got {varsigma}")));
    }
    if !(alpha > 0.0 && alpha <= varsigma / 4.0) {
        return Err(Error::Precondition(format!(
            "α must lie in (0, ς/4] = (0, {:e}], got {alpha:e}",
            varsigma / 4.0
        )));
    }
    let t0 = path.times()[0];
    let horizon = path.times()[path.len() - 1] - t0;
    if t0 != 0.0 || horizon <= alpha {
        return Err(Error::Precondition("path must start at time 0 and last longer than α".into()));
    }
    let x = path.start().to_vec();
    let field = VectorField::mean_dynamic(game, protocol)?;
    let dt = (alpha / 100.0).min(1e-3);
    let head = integrate(&field, &SimplexPoint::new(x.clone())?, alpha, dt, &Direction::Forward)?;
    let anchor = head.terminal().to_vec();
    let scale = 1.0 - 2.0 * alpha / varsigma;
    let mut times = head.times().to_vec();
    let mut states = head.states().to_vec();
    let shifted = |s: f64| -> Vec<f64> {
        path.at(s)
            .iter()
            .zip(&x)
            .zip(&anchor)
            .map(|((p, x0), a)| a + scale * (p - x0))
            .collect()
    };
    for &s in path.times().iter().filter(|&&s| s > 0.0 && s + alpha < horizon) {
        times.push(s + alpha);
        states.push(shifted(s));
    }
    times.push(horizon);
    states.push(shifted(horizon - alpha));
    let surgery = SampledPath::from_parts(times, states, path.step());
    match beta {
        Some(b) => coarsen(&surgery, alpha, b),
        None => Ok(surgery),
    }
}

/// Keeps `φ^α` on `[0, α]` and interpolates it linearly between the knots
/// `α + kβ` and the final time. `1/β` must be an integer.
pub fn coarsen(path: &SampledPath, alpha: f64, beta: f64) -> Result<SampledPath> {
    let inv = 1.0 / beta;
    if !(beta > 0.0 && beta < 1.0) || (inv - inv.round()).abs() > 1e-9 {
        return Err(Error::Precondition(format!("1/β must be an integer, got β = {beta}")));
    }
    let end = path.times()[path.len() - 1];
    let mut times: Vec<f64> = path.times().iter().copied().filter(|&t| t <= alpha).collect();
    if times.last().is_none_or(|&t| t < alpha) {
        times.push(alpha);
    }
    let mut k = 1u64;
    loop {
        let t = alpha + k as f64 * beta;
        if t >= end - 1e-12 {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(end);
    let states = times.iter().map(|&t| path.at(t)).collect();
    Ok(SampledPath::from_parts(times, states, beta))
}
