//! The mean dynamic `ẋ_i = Σ_j x_j σ_ji(x) − x_i`, its integration in both
//! time directions, logit rest points and deterministic-approximation runs.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::games::{Evaluation, GameSpec};
use crate::process::{simulate_with, SampledPath};
use crate::protocols::{limit_matrix_at, logit_choice, ProtocolSpec};
use crate::rng::stream_rng;
use crate::simplex::{l1, GridState, SimplexPoint};

/// Largest coordinate-sum drift tolerated in one integration step.
pub const DRIFT_LIMIT: f64 = 1e-8;
/// Distance to the rest point at which reverse-time integration stops.
pub const HALT_DISTANCE: f64 = 1e-9;

type FieldFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;

/// A tangent vector field on the simplex.
#[derive(Clone)]
pub struct VectorField {
    f: Arc<FieldFn>,
    provenance: String,
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VectorField({})", self.provenance)
    }
}

impl VectorField {
    pub fn new(
        provenance: impl Into<String>,
        f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            provenance: provenance.into(),
        }
    }

    /// Mean dynamic of `game` under `protocol` in the large-population limit.
    pub fn mean_dynamic(game: &GameSpec, protocol: &ProtocolSpec) -> Result<Self> {
        protocol.validate()?;
        let (g, p) = (game.clone(), protocol.clone());
        Ok(Self::new(format!("mean dynamic, {}", protocol.to_json()), move |x| {
            mean_field_at(&g, &p, x)
        }))
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.f)(x)
    }
}

pub(crate) fn mean_field_at(game: &GameSpec, protocol: &ProtocolSpec, x: &[f64]) -> Result<Vec<f64>> {
    let sigma = limit_matrix_at(game, protocol, x)?;
    let n = x.len();
    Ok((0..n)
        .map(|i| (0..n).map(|j| x[j] * sigma.get(j, i)).sum::<f64>() - x[i])
        .collect())
}

/// `V(x)` with `V_i(x) = Σ_j x_j σ_ji(x) − x_i`.
pub fn mean_field(game: &GameSpec, protocol: &ProtocolSpec, x: &SimplexPoint) -> Result<Vec<f64>> {
    protocol.validate()?;
    if x.dim() != game.num_actions() {
        return Err(Error::Dimension {
            expected: game.num_actions(),
            got: x.dim(),
        });
    }
    mean_field_at(game, protocol, x.coords())
}

/// The logit dynamic in the form `M^η(F(x)) − x`.
pub fn logit_field(game: &GameSpec, eta: f64, x: &[f64]) -> Vec<f64> {
    logit_choice(&game.limit_at(x), eta)
        .into_iter()
        .zip(x)
        .map(|(m, xi)| m - xi)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Direction {
    #[default]
    Forward,
    /// The path `ψ` on `[−T, 0]` with `ψ̇ = −V(ψ)` and `ψ_0 = x0`, found by
    /// stepping backward in time. Stops early once within
    /// [`HALT_DISTANCE`] of `halt_near`.
    Reverse { halt_near: Option<Vec<f64>> },
}

fn rk4_step(field: &VectorField, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let shift = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, v)| b + s * v).collect()
    };
    let k1 = field.eval(x)?;
    let k2 = field.eval(&shift(x, &k1, h / 2.0))?;
    let k3 = field.eval(&shift(x, &k2, h / 2.0))?;
    let k4 = field.eval(&shift(x, &k3, h))?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Fixed-step RK4 with renormalization onto the simplex after each step.
pub fn integrate(
    field: &VectorField,
    x0: &SimplexPoint,
    horizon: f64,
    dt: f64,
    direction: &Direction,
) -> Result<SampledPath> {
    if !(dt > 0.0 && horizon > 0.0 && dt.is_finite() && horizon.is_finite()) {
        return Err(Error::Precondition("dt and horizon must be positive".into()));
    }
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    let halt = match direction {
        Direction::Reverse { halt_near } => halt_near.as_deref(),
        Direction::Forward => None,
    };
    let mut x = x0.coords().to_vec();
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    for k in 1..=steps {
        let t = (k as f64 * dt).min(horizon);
        let h = t - times[times.len() - 1];
        let mut next = rk4_step(field, &x, h)?;
        let sum: f64 = next.iter().sum();
        let drift = (sum - 1.0).abs();
        if drift > DRIFT_LIMIT || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepSize {
                drift,
                limit: DRIFT_LIMIT,
            });
        }
        next.iter_mut().for_each(|v| *v /= sum);
        x = next;
        times.push(t);
        states.push(x.clone());
        if halt.is_some_and(|r| l1(&x, r) <= HALT_DISTANCE) {
            break;
        }
    }
    let path = SampledPath::from_parts(times, states, dt);
    Ok(match direction {
        Direction::Forward => path,
        Direction::Reverse { .. } => path.reversed(),
    })
}

/// Damped fixed-point iteration `x ← (1−ω)x + ω M^η(F(x))` for the logit
/// rest point. The damping starts at `omega` and halves whenever the residual
/// grows.
pub fn find_rest_point(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    x_init: &SimplexPoint,
    tol: f64,
) -> Result<SimplexPoint> {
    find_rest_point_with(game, protocol, x_init, tol, 0.5, 200_000)
}

pub fn find_rest_point_with(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    x_init: &SimplexPoint,
    tol: f64,
    omega: f64,
    max_iter: usize,
) -> Result<SimplexPoint> {
    let eta = protocol
        .logit_eta()
        .ok_or_else(|| Error::Precondition("rest-point iteration needs a logit protocol".into()))?;
    protocol.validate()?;
    let mut omega = omega;
    let mut x = x_init.coords().to_vec();
    let mut target = logit_choice(&game.limit_at(&x), eta);
    let mut residual = l1(&x, &target);
    for _ in 0..max_iter {
        if residual <= tol {
            return SimplexPoint::new(x);
        }
        let trial: Vec<f64> = x
            .iter()
            .zip(&target)
            .map(|(a, b)| (1.0 - omega) * a + omega * b)
            .collect();
        let trial_target = logit_choice(&game.limit_at(&trial), eta);
        let trial_residual = l1(&trial, &trial_target);
        if trial_residual > residual && omega > 1e-6 {
            omega *= 0.5;
            continue;
        }
        x = trial;
        target = trial_target;
        residual = trial_residual;
    }
    if residual <= tol {
        return SimplexPoint::new(x);
    }
    Err(Error::RestPoint {
        iterations: max_iter,
        residual,
        last: x,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceedanceRow {
    pub pop_size: u32,
    pub eps: f64,
    pub exceed_freq: f64,
    pub replicas: usize,
}

/// Least-squares fit of `log(frequency)` against `N` for one `ε`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub eps: f64,
    pub slope: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetApproxTable {
    pub rows: Vec<ExceedanceRow>,
    pub fits: Vec<DecayFit>,
}

impl DetApproxTable {
    /// CSV `N,eps,exceed_freq,replicas`.
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("N,eps,exceed_freq,replicas\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.pop_size, r.eps, r.exceed_freq, r.replicas);
        }
        out
    }
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Frequency with which `sup_{t≤T} |X̂^N_t − x_t|₁ ≥ ε`, for each `N` and
/// `ε`, and the fitted decay of `log(frequency)` in `N`. Zero counts enter the
/// fit as `(k + 1/2)/(R + 1)`.
#[allow(clippy::too_many_arguments)]
pub fn det_approx_experiment(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    x0: &SimplexPoint,
    horizon: f64,
    pop_sizes: &[u32],
    replicas: usize,
    eps_list: &[f64],
    seed: u64,
    mode: Evaluation,
) -> Result<DetApproxTable> {
    let field = VectorField::mean_dynamic(game, protocol)?;
    let mut rows = Vec::new();
    let mut corrected: Vec<Vec<f64>> = vec![Vec::new(); eps_list.len()];
    for (ni, &big_n) in pop_sizes.iter().enumerate() {
        let start = GridState::nearest(x0, big_n)?;
        let ode = integrate(&field, &start.to_point(), horizon, 1e-3, &Direction::Forward)?;
        let devs: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let stream = ((ni as u64) << 32) | r as u64;
                let mut rng = stream_rng(seed, stream);
                let path = simulate_with(
                    game, protocol, &start, horizon, mode, &mut rng,
                )?;
                Ok(path.sup_distance(&ode))
            })
            .collect::<Result<_>>()?;
        for (ei, &eps) in eps_list.iter().enumerate() {
            let k = devs.iter().filter(|&&d| d >= eps).count();
            rows.push(ExceedanceRow {
                pop_size: big_n,
                eps,
                exceed_freq: k as f64 / replicas as f64,
                replicas,
            });
            corrected[ei].push((k as f64 + 0.5) / (replicas as f64 + 1.0));
        }
    }
    let ns: Vec<f64> = pop_sizes.iter().map(|&n| n as f64).collect();
    let fits = eps_list
        .iter()
        .zip(&corrected)
        .map(|(&eps, freqs)| {
            let logs: Vec<f64> = freqs.iter().map(|f| f.ln()).collect();
            let (slope, r_squared) = linear_fit(&ns, &logs);
            DecayFit {
                eps,
                slope,
                r_squared,
            }
        })
        .collect();
    Ok(DetApproxTable { rows, fits })
}
