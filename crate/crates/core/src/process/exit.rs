use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::simulate::Stepper;
use crate::error::{Error, Result};
use crate::games::{Evaluation, GameSpec};
use crate::protocols::ProtocolSpec;
use crate::rng::stream_rng;
use crate::simplex::{GridState, KahanSum, SimplexPoint};

type Constraint = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// An open region `O = {g < 0}` of the simplex.
#[derive(Clone)]
pub enum Region {
    /// `|x − center|₁ < radius`.
    Ball { center: Vec<f64>, radius: f64 },
    /// `⟨normal, x⟩ < offset`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// `g(x) < 0` for a user constraint `g`.
    Constraint(Arc<Constraint>),
    /// The whole simplex; its relative boundary is never reached.
    Whole,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Ball { center, radius } => f
                .debug_struct("Ball")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            Region::Halfspace { normal, offset } => f
                .debug_struct("Halfspace")
                .field("normal", normal)
                .field("offset", offset)
                .finish(),
            Region::Constraint(_) => f.write_str("Constraint(..)"),
            Region::Whole => f.write_str("Whole"),
        }
    }
}

impl Region {
    pub fn constraint(g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Region::Constraint(Arc::new(g))
    }

    /// Exit when this is `≥ 0`.
    pub fn g(&self, x: &[f64]) -> f64 {
        match self {
            Region::Ball { center, radius } => crate::simplex::l1(x, center) - radius,
            Region::Halfspace { normal, offset } => crate::simplex::dot(normal, x) - offset,
            Region::Constraint(g) => g(x),
            Region::Whole => -1.0,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.g(x) < 0.0
    }
}

#[derive(Debug, Clone)]
pub struct ExitProblem {
    pub region: Region,
    pub start: SimplexPoint,
    /// Largest clock time simulated per replica.
    pub cap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitSummary {
    pub pop_size: u32,
    pub replicas: usize,
    pub censored: usize,
    pub all_censored: bool,
    /// Over uncensored replicas.
    pub mean: f64,
    pub median: f64,
    pub quantiles: Vec<(f64, f64)>,
    /// `(1/N) log mean`.
    pub log_rate: f64,
    #[serde(skip)]
    pub times: Vec<f64>,
}

/// First time the piecewise-affine path from `a` to `b` (one period of
/// length `dt`) meets `{g ≥ 0}`, given `g(a) < 0 ≤ g(b)`.
fn crossing(region: &Region, a: &[f64], b: &[f64]) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = vec![0.0; a.len()];
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        for k in 0..a.len() {
            x[k] = a[k] + mid * (b[k] - a[k]);
        }
        if region.g(&x) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo exit times `τ̂^N_{∂O}` of the interpolated chain, one
/// independent stream per replica.
#[allow(clippy::too_many_arguments)]
pub fn exit_time_mc(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    pop_size: u32,
    problem: &ExitProblem,
    replicas: usize,
    seed: u64,
    mode: Evaluation,
) -> Result<ExitSummary> {
    if replicas == 0 {
        return Err(Error::Precondition("need at least one replica".into()));
    }
    if !(problem.cap > 0.0 && problem.cap.is_finite()) {
        return Err(Error::Precondition("exit cap must be finite and positive".into()));
    }
    let start = GridState::nearest(&problem.start, pop_size)?;
    let big_n = pop_size as f64;
    let max_steps = (problem.cap * big_n).ceil() as u64;
    let region = &problem.region;
    let outcomes: Vec<Option<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Option<f64>> {
            let mut prev = start.to_point().into_vec();
            if !region.contains(&prev) {
                return Ok(Some(0.0));
            }
            let mut rng = stream_rng(seed, r as u64);
            let mut stepper = Stepper::new(game, protocol, &start, mode)?;
            let mut next = prev.clone();
            for k in 0..max_steps {
                let Some((i, j)) = stepper.step(&mut rng)? else {
                    continue;
                };
                next[i] -= 1.0 / big_n;
                next[j] += 1.0 / big_n;
                if !region.contains(&next) {
                    let s = crossing(region, &prev, &next);
                    return Ok(Some((k as f64 + s) / big_n));
                }
                prev.copy_from_slice(&next);
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let mut times: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let censored = replicas - times.len();
    let mean = if times.is_empty() {
        f64::NAN
    } else {
        times.iter().copied().collect::<KahanSum>().value() / times.len() as f64
    };
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantiles = [0.1, 0.25, 0.75, 0.9]
        .iter()
        .map(|&q| (q, quantile(&times, q)))
        .collect();
    Ok(ExitSummary {
        pop_size,
        replicas,
        censored,
        all_censored: censored == replicas,
        mean,
        median: quantile(&times, 0.5),
        quantiles,
        log_rate: mean.ln() / big_n,
        times,
    })
}
