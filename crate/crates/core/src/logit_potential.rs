//! Closed-form large-deviations quantities for logit choice in potential
//! games: the logit potential `f^η = f/η − Σ x log x`, Lyapunov and
//! Hamilton-Jacobi checks, exit costs and rate comparisons.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{find_rest_point, integrate, logit_field, Direction, VectorField};
use crate::error::{Error, Result};
use crate::games::{poly_integral, Evaluation, GameSpec};
use crate::largedev::log_mgf_law;
use crate::process::{
    exit_time_mc, law_at, stationary_distribution, ExitProblem, IncrementLaw, Region,
    StationaryMethod,
};
use crate::protocols::{limit_matrix_at, logit_choice, ProtocolSpec};
use crate::rng::stream_rng;
use crate::simplex::{l1, log_sum_exp, project_tangent, simplex_mesh, SimplexPoint};

type PotentialFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A game `F` together with a potential `f` (`∇f = F`).
#[derive(Clone)]
pub struct PotentialGame {
    game: GameSpec,
    f: Arc<PotentialFn>,
}

impl fmt::Debug for PotentialGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialGame").field("game", &self.game).finish_non_exhaustive()
    }
}

impl PotentialGame {
    /// Pairs `game` with a user-supplied potential.
    pub fn new(game: GameSpec, potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            game,
            f: Arc::new(potential),
        }
    }

    /// `f(x) = −Σ_λ ∫₀^{u_λ(x)} ℓ_λ(s) ds` for a congestion game.
    pub fn congestion(game: GameSpec) -> Result<Self> {
        game.validate()?;
        let GameSpec::Congestion {
            facilities, usage, ..
        } = &game
        else {
            return Err(Error::Config("closed-form potential needs a congestion game".into()));
        };
        let (facilities, usage) = (facilities.clone(), usage.clone());
        Ok(Self::new(game, move |x| {
            -(0..facilities.len())
                .map(|l| {
                    let load: f64 = usage.iter().zip(x).filter(|(row, _)| row[l] == 1).map(|(_, v)| v).sum();
                    poly_integral(&facilities[l], load)
                })
                .sum::<f64>()
        }))
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// `∇f(x) = F(x)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.game.limit_at(x)
    }

    /// Largest gap between `P F(x)` and the projected central-difference
    /// gradient of `f` over random states.
    pub fn check_gradient(&self, states: usize, seed: u64) -> f64 {
        let n = self.game.num_actions();
        let mut rng = stream_rng(seed, 0);
        let h = 1e-6;
        (0..states)
            .map(|_| {
                let x = crate::games::random_point(&mut rng, n);
                let fd: Vec<f64> = (0..n)
                    .map(|k| {
                        let (mut up, mut dn) = (x.clone(), x.clone());
                        up[k] += h;
                        dn[k] -= h;
                        (self.potential(&up) - self.potential(&dn)) / (2.0 * h)
                    })
                    .collect();
                let a = project_tangent(&fd);
                let b = project_tangent(&self.gradient(&x));
                a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    fn protocol(eta: f64) -> ProtocolSpec {
        ProtocolSpec::logit(eta)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("eta must be positive, got {eta}")))
    }
}

fn support_within(x: &[f64], face: &[usize]) -> bool {
    x.iter().enumerate().all(|(i, &v)| v == 0.0 || face.contains(&i))
}

/// `f^η(x) = f(x)/η − Σ x_i log x_i`. With a face `R ⊇ supp(x)`, the entropy
/// runs over `R` only and `Σ_{j∉R} x_j` is subtracted.
pub fn logit_potential(pg: &PotentialGame, eta: f64, x: &SimplexPoint, face: Option<&[usize]>) -> Result<f64> {
    check_eta(eta)?;
    let x = x.coords();
    if let Some(r) = face {
        if !support_within(x, r) {
            return Err(Error::SupportMismatch);
        }
    }
    let in_face = |i: usize| face.is_none_or(|r| r.contains(&i));
    let entropy: f64 = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !in_face(i) {
                v
            } else if v > 0.0 {
                v * v.ln()
            } else {
                0.0
            }
        })
        .sum();
    Ok(pg.potential(x) / eta - entropy)
}

fn face_of(x: &[f64], face: Option<&[usize]>) -> Result<Vec<usize>> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    match face {
        None if support.len() == x.len() => Ok(support),
        None => Err(Error::SupportMismatch),
        Some(r) => {
            let mut r = r.to_vec();
            r.sort_unstable();
            r.dedup();
            if r == support {
                Ok(r)
            } else {
                Err(Error::SupportMismatch)
            }
        }
    }
}

/// `∇₀f^η_R(x) = P(F(x)/η − Σ_{i∈R} e_i log x_i)`.
pub fn tangent_gradient(pg: &PotentialGame, eta: f64, x: &[f64], face: &[usize]) -> Vec<f64> {
    let mut g: Vec<f64> = pg.gradient(x).iter().map(|v| v / eta).collect();
    for &i in face {
        g[i] -= x[i].ln();
    }
    project_tangent(&g)
}

/// Drops the moves into actions outside `face`. Evaluating `H` on the result
/// is the limit of `H(x, u − t Σ_{k∉R} e_k)` as `t → ∞`, which leaves
/// `u'ẋ` unchanged for any `ẋ` tangent to the face.
fn face_law(law: &IncrementLaw, face: &[usize]) -> IncrementLaw {
    let n = law.dim();
    let off = (0..n * n)
        .map(|c| if face.contains(&(c % n)) { law.mass(c / n, c % n) } else { 0.0 })
        .collect();
    IncrementLaw::from_parts(n, off, law.null_mass())
}

#[derive(Debug, Clone, Serialize)]
pub struct HjReport {
    /// `H(x, −∇₀f^η_R(x))`, with moves into unused actions given weight 0.
    pub hamiltonian: f64,
    /// `Σ_{i∈R} e^{F_i/η} / Σ_k e^{F_k/η}`.
    pub ratio: f64,
}

/// The Hamilton-Jacobi quantity `H(x, −∇₀f^η_R(x))` under logit choice,
/// with its closed-form exponential for comparison.
pub fn hj_residual(pg: &PotentialGame, eta: f64, x: &SimplexPoint, face: Option<&[usize]>) -> Result<HjReport> {
    check_eta(eta)?;
    let x = x.coords();
    let r = face_of(x, face)?;
    let u: Vec<f64> = tangent_gradient(pg, eta, x, &r).iter().map(|v| -v).collect();
    let sigma = limit_matrix_at(&pg.game, &PotentialGame::protocol(eta), x)?;
    let (hamiltonian, _) = log_mgf_law(&face_law(&law_at(x, &sigma), &r), &u);
    let scaled: Vec<f64> = pg.gradient(x).iter().map(|v| v / eta).collect();
    let log_ratio = log_sum_exp(r.iter().map(|&i| scaled[i])) - log_sum_exp(scaled.iter().copied());
    Ok(HjReport {
        hamiltonian,
        ratio: log_ratio.exp(),
    })
}

/// `∇_u H(x, −∇f^η(x)) + (M^η(F(x)) − x)` at an interior state.
pub fn hfoc_residual(pg: &PotentialGame, eta: f64, x: &SimplexPoint) -> Result<Vec<f64>> {
    check_eta(eta)?;
    let x = x.coords();
    let r = face_of(x, None)?;
    let u: Vec<f64> = tangent_gradient(pg, eta, x, &r).iter().map(|v| -v).collect();
    let sigma = limit_matrix_at(&pg.game, &PotentialGame::protocol(eta), x)?;
    let (_, grad) = log_mgf_law(&law_at(x, &sigma), &u);
    let drift = logit_field(&pg.game, eta, x);
    Ok(grad.iter().zip(&drift).map(|(a, b)| a + b).collect())
}

/// `d/dt f^η(x_t)` along the logit dynamic, as `∇f^η · ẋ` and as
/// `(log y − log x)·(y − x)` with `y = M^η(F(x))`.
pub fn lyapunov_derivative(pg: &PotentialGame, eta: f64, x: &[f64]) -> (f64, f64) {
    let face: Vec<usize> = (0..x.len()).collect();
    let grad = tangent_gradient(pg, eta, x, &face);
    let y = logit_choice(&pg.gradient(x), eta);
    let xdot: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let via_gradient = crate::simplex::dot(&grad, &xdot);
    let via_identity = y.iter().zip(x).map(|(a, b)| (a.ln() - b.ln()) * (a - b)).sum();
    (via_gradient, via_identity)
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovTrajectory {
    pub start: Vec<f64>,
    pub terminal: Vec<f64>,
    pub terminal_value: f64,
    /// Most negative one-step change of `f^η`.
    pub worst_step: f64,
    /// First time a step decreased `f^η` by more than the slack.
    pub violation_at: Option<f64>,
    /// `|M^η(F(x_T)) − x_T|₁`.
    pub terminal_speed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub slack: f64,
    pub trajectories: Vec<LyapunovTrajectory>,
    pub passed: bool,
}

const LYAPUNOV_SLACK: f64 = 1e-9;

/// Integrates the logit dynamic from each start and checks that `f^η` never
/// falls by more than `1e-9` in one step.
pub fn lyapunov_check(
    pg: &PotentialGame,
    eta: f64,
    starts: &[SimplexPoint],
    horizon: f64,
    dt: f64,
) -> Result<LyapunovReport> {
    check_eta(eta)?;
    let field = VectorField::mean_dynamic(&pg.game, &PotentialGame::protocol(eta))?;
    let trajectories = starts
        .par_iter()
        .map(|x0| -> Result<LyapunovTrajectory> {
            if !x0.is_interior() {
                return Err(Error::Precondition("Lyapunov starts must be interior".into()));
            }
            let path = integrate(&field, x0, horizon, dt, &Direction::Forward)?;
            let values: Vec<f64> = path
                .states()
                .iter()
                .map(|s| logit_potential(pg, eta, &SimplexPoint::new(s.clone())?, None))
                .collect::<Result<_>>()?;
            let mut worst_step = f64::INFINITY;
            let mut violation_at = None;
            for (k, w) in values.windows(2).enumerate() {
                let d = w[1] - w[0];
                worst_step = worst_step.min(d);
                if d < -LYAPUNOV_SLACK && violation_at.is_none() {
                    violation_at = Some(path.times()[k + 1]);
                }
            }
            let terminal = path.terminal().to_vec();
            Ok(LyapunovTrajectory {
                start: x0.coords().to_vec(),
                terminal_speed: l1(&logit_field(&pg.game, eta, &terminal), &vec![0.0; terminal.len()]),
                terminal_value: *values.last().expect("nonempty path"),
                terminal,
                worst_step,
                violation_at,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = trajectories.iter().all(|t| t.violation_at.is_none());
    Ok(LyapunovReport {
        slack: LYAPUNOV_SLACK,
        trajectories,
        passed,
    })
}

/// The logit rest point, the unique maximizer of `f^η`.
pub fn logit_rest_point(pg: &PotentialGame, eta: f64) -> Result<SimplexPoint> {
    check_eta(eta)?;
    let n = pg.game.num_actions();
    find_rest_point(&pg.game, &PotentialGame::protocol(eta), &SimplexPoint::barycenter(n), 1e-13)
}

/// What to leave: a single state or the boundary of a region around `x*`.
#[derive(Debug, Clone)]
pub enum ExitTarget {
    State(SimplexPoint),
    /// `∂O ∩ X`, found along rays from `x*`.
    Boundary { region: Region, rays: usize, seed: u64 },
    /// An explicit list of boundary states.
    Mesh(Vec<SimplexPoint>),
}

pub const DEFAULT_RAYS: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct ExitCost {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub rest_point: Vec<f64>,
}

/// Unit-`ℓ¹` directions in `R^n_0`: both signs for `n = 2`, an angular sweep
/// for `n = 3`, seeded random directions beyond.
fn ray_directions(n: usize, rays: usize, seed: u64) -> Vec<Vec<f64>> {
    let normalize = |v: Vec<f64>| -> Vec<f64> {
        let s: f64 = v.iter().map(|c| c.abs()).sum();
        v.into_iter().map(|c| c / s).collect()
    };
    match n {
        2 => vec![vec![0.5, -0.5], vec![-0.5, 0.5]],
        3 => {
            let b1 = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
            let b2 = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
            (0..rays)
                .map(|k| {
                    let th = std::f64::consts::TAU * k as f64 / rays as f64;
                    normalize((0..3).map(|i| th.cos() * b1[i] + th.sin() * b2[i]).collect())
                })
                .collect()
        }
        _ => {
            let mut rng = stream_rng(seed, 0);
            (0..rays)
                .map(|_| {
                    let g = crate::games::random_point(&mut rng, n);
                    normalize(project_tangent(&g))
                })
                .collect()
        }
    }
}

/// First point on `x + s d` (inside the simplex) where the region's `g`
/// becomes nonnegative.
fn boundary_on_ray(region: &Region, x: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let s_max = x
        .iter()
        .zip(d)
        .filter(|(_, &dv)| dv < 0.0)
        .map(|(&xv, &dv)| xv / -dv)
        .fold(f64::INFINITY, f64::min);
    let at = |s: f64| -> Vec<f64> { x.iter().zip(d).map(|(a, b)| (a + s * b).max(0.0)).collect() };
    if region.g(&at(s_max)) < 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, s_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if region.g(&at(mid)) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(at(hi))
}

/// `C_y = f^η(x*) − f^η(y)`, or its minimum over a discretized `∂O`.
pub fn exit_cost(pg: &PotentialGame, eta: f64, target: &ExitTarget) -> Result<ExitCost> {
    let rest = logit_rest_point(pg, eta)?;
    let top = logit_potential(pg, eta, &rest, None)?;
    let candidates: Vec<Vec<f64>> = match target {
        ExitTarget::State(y) => vec![y.coords().to_vec()],
        ExitTarget::Mesh(m) => m.iter().map(|y| y.coords().to_vec()).collect(),
        ExitTarget::Boundary { region, rays, seed } => {
            let n = rest.dim();
            ray_directions(n, (*rays).max(1), *seed)
                .iter()
                .filter_map(|d| boundary_on_ray(region, rest.coords(), d))
                .collect()
        }
    };
    let costs: Vec<f64> = candidates
        .par_iter()
        .map(|y| Ok(top - logit_potential(pg, eta, &SimplexPoint::new(y.clone())?, None)?))
        .collect::<Result<_>>()?;
    let (k, &value) = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Precondition("the target boundary was not reached from x*".into()))?;
    Ok(ExitCost {
        value,
        argmin: candidates[k].clone(),
        rest_point: rest.into_vec(),
    })
}

/// The minimum-cost path from `x*` to `y`: the logit flow from `y`, run
/// until it is within `1e-9` of `x*` or the horizon ends, then reversed onto
/// `[−T, 0]`.
pub fn reverse_exit_path(
    pg: &PotentialGame,
    eta: f64,
    y: &SimplexPoint,
    horizon: f64,
    dt: f64,
) -> Result<crate::process::SampledPath> {
    let rest = logit_rest_point(pg, eta)?;
    let field = VectorField::mean_dynamic(&pg.game, &PotentialGame::protocol(eta))?;
    integrate(
        &field,
        y,
        horizon,
        dt,
        &Direction::Reverse {
            halt_near: Some(rest.into_vec()),
        },
    )
}

#[derive(Debug, Clone)]
pub enum RateMode {
    /// `−(1/N) log μ^N(B_δ(y))` against `C_y` for each `y`.
    Stationary { states: Vec<SimplexPoint>, delta: f64 },
    /// `(1/N) log E τ` for leaving `O` from `x*` against `C_{∂O}`.
    ExitTime {
        region: Region,
        replicas: usize,
        seed: u64,
        cap: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub pop_size: u32,
    /// The state `y`, or `x*` in exit mode.
    pub target: Vec<f64>,
    pub rate: f64,
    pub cost: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Per target, whether `|rate − cost|` strictly decreases in `N`.
    pub gaps_shrinking: Vec<bool>,
}

impl RateTable {
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("N,target,rate,cost,gap\n");
        for r in &self.rows {
            let target: Vec<String> = r.target.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{},{},{},{},{}", r.pop_size, target.join(" "), r.rate, r.cost, r.gap);
        }
        out
    }
}

fn strictly_shrinking(gaps: &[f64]) -> bool {
    gaps.windows(2).all(|w| w[1] < w[0])
}

/// Empirical large-deviations rates of the finite chain against the closed
/// form exit costs.
pub fn rate_compare(
    pg: &PotentialGame,
    eta: f64,
    mode: &RateMode,
    pop_sizes: &[u32],
    evaluation: Evaluation,
) -> Result<RateTable> {
    let protocol = PotentialGame::protocol(eta);
    let n = pg.game.num_actions();
    let mut rows = Vec::new();
    let mut gaps_shrinking = Vec::new();
    match mode {
        RateMode::Stationary { states, delta } => {
            let costs: Vec<f64> = states
                .iter()
                .map(|y| exit_cost(pg, eta, &ExitTarget::State(y.clone())).map(|c| c.value))
                .collect::<Result<_>>()?;
            let mut per_state: Vec<Vec<f64>> = vec![Vec::new(); states.len()];
            for &big_n in pop_sizes {
                let method = if n == 2 {
                    StationaryMethod::BirthDeath
                } else {
                    StationaryMethod::default()
                };
                let mu = stationary_distribution(&pg.game, &protocol, big_n, evaluation, &method)?;
                for (k, y) in states.iter().enumerate() {
                    let log_mass = mu.log_mass_where(|x| l1(x, y.coords()) <= *delta + 1e-12);
                    let rate = -log_mass / big_n as f64;
                    let gap = (rate - costs[k]).abs();
                    per_state[k].push(gap);
                    rows.push(RateRow {
                        pop_size: big_n,
                        target: y.coords().to_vec(),
                        rate,
                        cost: costs[k],
                        gap,
                    });
                }
            }
            gaps_shrinking = per_state.iter().map(|g| strictly_shrinking(g)).collect();
        }
        RateMode::ExitTime {
            region,
            replicas,
            seed,
            cap,
        } => {
            let cost = exit_cost(
                pg,
                eta,
                &ExitTarget::Boundary {
                    region: region.clone(),
                    rays: DEFAULT_RAYS,
                    seed: *seed,
                },
            )?;
            let start = SimplexPoint::new(cost.rest_point.clone())?;
            let problem = ExitProblem {
                region: region.clone(),
                start: start.clone(),
                cap: *cap,
            };
            let mut gaps = Vec::new();
            for &big_n in pop_sizes {
                let s = exit_time_mc(&pg.game, &protocol, big_n, &problem, *replicas, *seed, evaluation)?;
                if s.all_censored {
                    return Err(Error::Precondition(format!(
                        "every exit-time replica was censored at N = {big_n}"
                    )));
                }
                let gap = (s.log_rate - cost.value).abs();
                gaps.push(gap);
                rows.push(RateRow {
                    pop_size: big_n,
                    target: start.coords().to_vec(),
                    rate: s.log_rate,
                    cost: cost.value,
                    gap,
                });
            }
            gaps_shrinking.push(strictly_shrinking(&gaps));
        }
    }
    Ok(RateTable { rows, gaps_shrinking })
}

/// `f^η` on the simplex mesh of spacing `1/resolution`.
pub fn level_set_grid(pg: &PotentialGame, eta: f64, resolution: u32) -> Result<Vec<(Vec<f64>, f64)>> {
    let mesh = simplex_mesh(pg.game.num_actions(), resolution);
    mesh.par_iter()
        .map(|x| Ok((x.coords().to_vec(), logit_potential(pg, eta, x, None)?)))
        .collect()
}

pub fn level_set_csv(grid: &[(Vec<f64>, f64)], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    if let Some((x, _)) = grid.first() {
        for i in 1..=x.len() {
            let _ = write!(out, "x{i},");
        }
    }
    out.push_str("f_eta\n");
    for (x, v) in grid {
        for c in x {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pg() -> PotentialGame {
        PotentialGame::congestion(GameSpec::three_link_congestion()).unwrap()
    }

    #[test]
    fn vertex_values() {
        let pg = pg();
        let e1 = SimplexPoint::vertex(3, 0);
        assert!((logit_potential(&pg, 0.25, &e1, None).unwrap() + 20.0).abs() < 1e-9);
        assert!((logit_potential(&pg, 0.1, &e1, None).unwrap() + 50.0).abs() < 1e-9);
    }

    #[test]
    fn face_version_agrees_on_its_face() {
        let pg = pg();
        let x = SimplexPoint::new(vec![0.4, 0.6, 0.0]).unwrap();
        let a = logit_potential(&pg, 0.25, &x, None).unwrap();
        let b = logit_potential(&pg, 0.25, &x, Some(&[0, 1])).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            logit_potential(&pg, 0.25, &x, Some(&[0, 2])),
            Err(Error::SupportMismatch)
        ));
    }

    #[test]
    fn gradient_is_payoff() {
        assert!(pg().check_gradient(200, 4) < 1e-6);
    }

    #[test]
    fn hj_vanishes_inside_and_is_negative_on_faces() {
        let pg = pg();
        let x = SimplexPoint::new(vec![0.2, 0.3, 0.5]).unwrap();
        let r = hj_residual(&pg, 0.25, &x, None).unwrap();
        assert!(r.hamiltonian.abs() < 1e-10);
        assert_eq!(r.ratio, 1.0);
        let y = SimplexPoint::new(vec![0.2, 0.8, 0.0]).unwrap();
        let r = hj_residual(&pg, 0.25, &y, Some(&[0, 1])).unwrap();
        assert!(r.hamiltonian < 0.0);
        assert!((r.hamiltonian.exp() - r.ratio).abs() < 1e-10);
        // The face value is the limit of a strongly negative tilt toward action 3.
        let sigma = limit_matrix_at(pg.game(), &ProtocolSpec::logit(0.25), y.coords()).unwrap();
        let mut u: Vec<f64> = tangent_gradient(&pg, 0.25, y.coords(), &[0, 1]).iter().map(|v| -v).collect();
        u[2] -= 60.0;
        let (h, _) = log_mgf_law(&law_at(y.coords(), &sigma), &u);
        assert!((h - r.hamiltonian).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_derivative_identity() {
        let pg = pg();
        let (a, b) = lyapunov_derivative(&pg, 0.25, &[0.2, 0.3, 0.5]);
        assert!((a - b).abs() < 1e-10);
        assert!(a > 0.0);
    }

    #[test]
    fn exit_cost_of_rest_point_is_zero() {
        let pg = pg();
        let rest = logit_rest_point(&pg, 0.25).unwrap();
        let c = exit_cost(&pg, 0.25, &ExitTarget::State(rest)).unwrap();
        assert!(c.value.abs() < 1e-12);
    }

    #[test]
    fn ball_boundary_cost_is_attained_on_the_sphere() {
        let pg = pg();
        let rest = logit_rest_point(&pg, 0.25).unwrap();
        let region = Region::Ball {
            center: rest.coords().to_vec(),
            radius: 0.1,
        };
        let c = exit_cost(
            &pg,
            0.25,
            &ExitTarget::Boundary {
                region,
                rays: 2000,
                seed: 1,
            },
        )
        .unwrap();
        assert!((l1(&c.argmin, rest.coords()) - 0.1).abs() < 1e-9);
        assert!(c.value > 0.0);
    }
}
