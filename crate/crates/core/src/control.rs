//! Exact small-N Laplace values `V^N = −(1/N) log E exp(−N h(X^N_1))` by
//! dynamic programming, the tilted one-step minimizers, and a local search
//! for `inf_φ (c_x(φ) + h(φ_1))` over piecewise-linear paths.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{integrate, Direction, VectorField};
use crate::error::{Error, Result};
use crate::games::{Evaluation, GameSpec};
use crate::largedev::{cramer_law, CramerMethod};
use crate::process::{law_at, transition_matrix, Increment, IncrementLaw, SampledPath, Transitions, DEFAULT_STATE_CAP};
use crate::protocols::{limit_matrix_at, ProtocolSpec};
use crate::rng::stream_rng;
use crate::simplex::{log_sum_exp, simplex_mesh, GridState, KahanSum, SimplexPoint};

type TerminalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A bounded continuous function of the terminal state.
#[derive(Clone)]
pub struct TerminalObjective {
    h: Arc<TerminalFn>,
    pub description: String,
}

impl fmt::Debug for TerminalObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TerminalObjective({})", self.description)
    }
}

impl TerminalObjective {
    pub fn new(description: impl Into<String>, h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            h: Arc::new(h),
            description: description.into(),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    /// `κ |x − y|²` (Euclidean).
    pub fn squared_distance(y: Vec<f64>, kappa: f64) -> Self {
        let description = format!("{kappa}*|x-{y:?}|^2");
        Self::new(description, move |x| {
            kappa * x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.h)(x)
    }

    /// Checks finiteness on the grid `𝒳^N`; returns `sup |h|`.
    pub fn check_bounded(&self, n: usize, pop_size: u32) -> Result<f64> {
        let mut sup = 0.0f64;
        for x in simplex_mesh(n, pop_size) {
            let v = self.eval(x.coords());
            if !v.is_finite() {
                return Err(Error::Precondition(format!(
                    "terminal objective is not finite at {:?}",
                    x.coords()
                )));
            }
            sup = sup.max(v.abs());
        }
        Ok(sup)
    }
}

#[derive(Debug, Clone)]
pub struct TiltedMinimizer {
    /// `−log Σ π e^{−γ}`.
    pub value: f64,
    /// `λ* ∝ π e^{−γ}`.
    pub lambda: IncrementLaw,
    /// `|value − (R(λ*‖π) + Σ γ λ*)|`.
    pub identity_gap: f64,
}

/// Minimizes `R(λ‖π) + Σ γ λ` over laws `λ`; `γ` may be `+∞` on atoms that
/// must not be used.
pub fn tilted_minimizer(pi: &IncrementLaw, gamma: impl Fn(Increment) -> f64) -> Result<TiltedMinimizer> {
    let n = pi.dim();
    let support: Vec<(Increment, f64, f64)> = pi.support().map(|(a, p)| (a, p, gamma(a))).collect();
    if support.iter().any(|t| t.2.is_nan() || t.2 == f64::NEG_INFINITY) {
        return Err(Error::Precondition("gamma must be finite or +inf on the support".into()));
    }
    let log_z = log_sum_exp(support.iter().map(|&(_, p, g)| p.ln() - g));
    if !log_z.is_finite() {
        return Err(Error::Precondition("gamma is +inf on the whole support".into()));
    }
    let mut off = vec![0.0; n * n];
    let mut null = 0.0;
    let mut check = KahanSum::default();
    for &(a, p, g) in &support {
        if g == f64::INFINITY {
            continue;
        }
        let w = (p.ln() - g - log_z).exp();
        match a {
            Some((i, j)) => off[i * n + j] = w,
            None => null = w,
        }
        if w > 0.0 {
            check.add(w * (w / p).ln() + g * w);
        }
    }
    let value = -log_z;
    Ok(TiltedMinimizer {
        value,
        lambda: IncrementLaw::from_parts(n, off, null),
        identity_gap: (value - check.value()).abs(),
    })
}

/// Optimal tilted transition rows `λ*_k(·|x)`, per stage and state.
#[derive(Debug, Clone)]
pub struct Controls {
    pub transitions: Transitions,
    pub stages: Vec<Vec<Vec<(usize, f64)>>>,
}

#[derive(Debug, Clone)]
pub struct LaplaceDp {
    pub pop_size: u32,
    /// `V^N` from the backward recursion.
    pub value: f64,
    /// `V^N` from the forward law of `X^N_1`.
    pub direct_value: f64,
    pub controls: Option<Controls>,
}

/// `V^N(x0)` over horizon 1 (`N` steps) by the backward functional equation
/// in log-sum-exp form, and again by pushing the law of the chain forward.
#[allow(clippy::too_many_arguments)]
pub fn laplace_dp_value(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    pop_size: u32,
    h: &TerminalObjective,
    x0: &GridState,
    mode: Evaluation,
    with_controls: bool,
) -> Result<LaplaceDp> {
    if x0.pop_size() != pop_size || x0.dim() != game.num_actions() {
        return Err(Error::Precondition("start state must lie on the N-grid of the game".into()));
    }
    let trans = transition_matrix(game, protocol, pop_size, mode, DEFAULT_STATE_CAP)?;
    let big_n = pop_size as f64;
    let terminal: Vec<f64> = trans
        .index
        .states()
        .map(|c| {
            let x: Vec<f64> = c.iter().map(|&v| v as f64 / big_n).collect();
            big_n * h.eval(&x)
        })
        .collect();
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("terminal objective must be finite on the grid".into()));
    }
    // w_k(x) = −log E[exp(−N h(X_N)) | X_k = x]
    let mut w = terminal.clone();
    let mut stages = Vec::new();
    for _ in 0..pop_size {
        let next = &w;
        if with_controls {
            let rows: Vec<Vec<(usize, f64)>> = trans
                .rows
                .par_iter()
                .map(|row| {
                    let lz = log_sum_exp(row.iter().map(|&(t, p)| p.ln() - next[t]));
                    row.iter().map(|&(t, p)| (t, (p.ln() - next[t] - lz).exp())).collect()
                })
                .collect();
            stages.push(rows);
        }
        w = trans
            .rows
            .par_iter()
            .map(|row| -log_sum_exp(row.iter().map(|&(t, p)| p.ln() - next[t])))
            .collect();
    }
    stages.reverse();
    let start = trans.index.rank(x0.counts());
    let value = w[start] / big_n;

    let mut mu = vec![0.0; trans.len()];
    mu[start] = 1.0;
    for _ in 0..pop_size {
        mu = trans.push_forward(&mu);
    }
    let log_e = log_sum_exp(
        mu.iter()
            .zip(&terminal)
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, t)| m.ln() - t),
    );
    let direct_value = -log_e / big_n;
    Ok(LaplaceDp {
        pop_size,
        value,
        direct_value,
        controls: with_controls.then_some(Controls {
            transitions: trans,
            stages,
        }),
    })
}

/// `E[(1/N) Σ_k R(λ_k(·|X̄_k) ‖ P(X̄_k, ·)) + h(X̄_N)]` for the chain driven by
/// `controls`, evaluated exactly by pushing its law forward.
pub fn sequence_objective(controls: &Controls, h: &TerminalObjective, x0: &GridState) -> f64 {
    let trans = &controls.transitions;
    let big_n = trans.index.pop_size() as f64;
    let mut mu = vec![0.0; trans.len()];
    mu[trans.index.rank(x0.counts())] = 1.0;
    let mut running = KahanSum::default();
    for stage in &controls.stages {
        let mut next = vec![0.0; mu.len()];
        for (s, (lam, base)) in stage.iter().zip(&trans.rows).enumerate() {
            if mu[s] == 0.0 {
                continue;
            }
            let mut re = 0.0;
            for (&(t, l), &(_, p)) in lam.iter().zip(base) {
                if l > 0.0 {
                    re += l * (l / p).ln();
                }
                next[t] += mu[s] * l;
            }
            running.add(mu[s] * re / big_n);
        }
        mu = next;
    }
    for (s, c) in trans.index.states().enumerate() {
        if mu[s] > 0.0 {
            let x: Vec<f64> = c.iter().map(|&v| v as f64 / big_n).collect();
            running.add(mu[s] * h.eval(&x));
        }
    }
    running.value()
}

#[derive(Debug, Clone)]
pub struct Variational {
    pub value: f64,
    pub path: SampledPath,
    pub knots: usize,
}

/// Number of equal sub-segments used to integrate the cost of each knot
/// segment.
const SUBSTEPS: usize = 8;

struct Problem<'a> {
    game: &'a GameSpec,
    protocol: &'a ProtocolSpec,
    h: &'a TerminalObjective,
    x0: Vec<f64>,
    knots: usize,
}

impl Problem<'_> {
    fn path(&self, nodes: &[Vec<f64>]) -> SampledPath {
        let m = self.knots * SUBSTEPS;
        let mut times = Vec::with_capacity(m + 1);
        let mut states = Vec::with_capacity(m + 1);
        for s in 0..=m {
            let (k, r) = (s / SUBSTEPS, s % SUBSTEPS);
            let a = if k == 0 { &self.x0 } else { &nodes[k - 1] };
            let state = if r == 0 {
                a.clone()
            } else {
                let b = &nodes[k];
                let w = r as f64 / SUBSTEPS as f64;
                a.iter().zip(b).map(|(p, q)| p + w * (q - p)).collect()
            };
            times.push(s as f64 / m as f64);
            states.push(state);
        }
        SampledPath::from_parts(times, states, 1.0 / m as f64)
    }

    /// Cost of the affine piece from `a` to `b` over time `1/knots`, with `L`
    /// at the midpoints of `SUBSTEPS` equal sub-pieces.
    fn segment(&self, a: &[f64], b: &[f64]) -> f64 {
        if b.iter().any(|&v| v < 0.0) {
            return f64::INFINITY;
        }
        let dt = 1.0 / self.knots as f64;
        let z: Vec<f64> = b.iter().zip(a).map(|(q, p)| (q - p) / dt).collect();
        let mut total = 0.0;
        for r in 0..SUBSTEPS {
            let w = (r as f64 + 0.5) / SUBSTEPS as f64;
            let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + w * (q - p)).collect();
            let cost = limit_matrix_at(self.game, self.protocol, &mid)
                .and_then(|sigma| cramer_law(&law_at(&mid, &sigma), &z, CramerMethod::Dual));
            match cost {
                Ok(c) => total += c.value * dt / SUBSTEPS as f64,
                Err(_) => return f64::INFINITY,
            }
        }
        total
    }

    fn node<'b>(&'b self, nodes: &'b [Vec<f64>], k: usize) -> &'b [f64] {
        if k == 0 {
            &self.x0
        } else {
            &nodes[k - 1]
        }
    }

    fn segments(&self, nodes: &[Vec<f64>]) -> Vec<f64> {
        (0..self.knots)
            .map(|k| self.segment(self.node(nodes, k), &nodes[k]))
            .collect()
    }

    fn objective(&self, nodes: &[Vec<f64>]) -> f64 {
        self.segments(nodes).iter().sum::<f64>() + self.h.eval(nodes.last().expect("at least one knot"))
    }

    fn nodes_of(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let m = self.x0.len() - 1;
        v.chunks(m)
            .map(|c| {
                let mut node = c.to_vec();
                node.push(1.0 - c.iter().sum::<f64>());
                node
            })
            .collect()
    }

    fn flat(&self, nodes: &[Vec<f64>]) -> Vec<f64> {
        let m = self.x0.len() - 1;
        nodes.iter().flat_map(|nd| nd[..m].to_vec()).collect()
    }

    fn value_at(&self, v: &[f64]) -> f64 {
        self.objective(&self.nodes_of(v))
    }

    /// Central differences; moving knot `k` only changes the pieces on
    /// either side of it and, for the last knot, `h`.
    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let m = self.x0.len() - 1;
        let nodes = self.nodes_of(v);
        let base = self.segments(&nodes);
        let local = |nodes: &[Vec<f64>], k: usize| -> f64 {
            let mut c = self.segment(self.node(nodes, k), &nodes[k]);
            if k + 1 < self.knots {
                c += self.segment(&nodes[k], &nodes[k + 1]);
            } else {
                c += self.h.eval(&nodes[k]);
            }
            c
        };
        let step = 1e-6;
        (0..v.len())
            .map(|c| {
                let k = c / m;
                let f0 = base[k]
                    + if k + 1 < self.knots {
                        base[k + 1]
                    } else {
                        self.h.eval(&nodes[k])
                    };
                let shifted = |delta: f64| {
                    let mut w = v.to_vec();
                    w[c] += delta;
                    local(&self.nodes_of(&w), k)
                };
                let (up, dn) = (shifted(step), shifted(-step));
                match (up.is_finite(), dn.is_finite()) {
                    (true, true) => (up - dn) / (2.0 * step),
                    (true, false) => (up - f0) / step,
                    _ => (f0 - dn) / step,
                }
            })
            .collect()
    }

    /// BFGS on the free knot coordinates with a finite-difference gradient
    /// and backtracking; leaving the simplex counts as `+∞`.
    fn descend(&self, nodes: Vec<Vec<f64>>) -> (f64, Vec<Vec<f64>>) {
        let mut v = self.flat(&nodes);
        let d = v.len();
        let mut fv = self.value_at(&v);
        if !fv.is_finite() {
            return (fv, nodes);
        }
        let mut g = self.gradient(&v);
        let mut hinv = nalgebra::DMatrix::<f64>::identity(d, d);
        for _ in 0..400 {
            let gv = nalgebra::DVector::from_column_slice(&g);
            if gv.amax() < 1e-8 {
                break;
            }
            let mut dir = -(&hinv * &gv);
            if dir.dot(&gv) >= 0.0 {
                hinv.fill_with_identity();
                dir = -gv.clone();
            }
            let slope = dir.dot(&gv);
            let mut step = 1.0;
            let mut next = None;
            for _ in 0..60 {
                let trial: Vec<f64> = v.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
                let ft = self.value_at(&trial);
                if ft.is_finite() && ft <= fv + 1e-4 * step * slope {
                    next = Some((trial, ft));
                    break;
                }
                step *= 0.5;
            }
            let Some((trial, ft)) = next else { break };
            let g_new = self.gradient(&trial);
            let s_vec = nalgebra::DVector::from_iterator(d, trial.iter().zip(&v).map(|(a, b)| a - b));
            let y_vec = nalgebra::DVector::from_iterator(d, g_new.iter().zip(&g).map(|(a, b)| a - b));
            let sy = s_vec.dot(&y_vec);
            if sy > 1e-16 {
                let rho = 1.0 / sy;
                let eye = nalgebra::DMatrix::<f64>::identity(d, d);
                let left = &eye - &s_vec * y_vec.transpose() * rho;
                let right = &eye - &y_vec * s_vec.transpose() * rho;
                hinv = &left * &hinv * &right + &s_vec * s_vec.transpose() * rho;
            }
            let done = fv - ft < 1e-13;
            v = trial;
            fv = ft;
            g = g_new;
            if done {
                break;
            }
        }
        (fv, self.nodes_of(&v))
    }
}

/// Local minimization of `c_x(φ) + h(φ_1)` over paths that are affine between
/// `knots` equally spaced free knots. Starts include the mean-dynamic
/// solution, its time reversal from the best mesh point for `h`, a straight
/// line to that point, and seeded perturbations.
pub fn laplace_variational(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    h: &TerminalObjective,
    x0: &SimplexPoint,
    knots: usize,
    restarts: usize,
    seed: u64,
) -> Result<Variational> {
    if knots < 2 {
        return Err(Error::Precondition("need at least two knots".into()));
    }
    let n = game.num_actions();
    let problem = Problem {
        game,
        protocol,
        h,
        x0: x0.coords().to_vec(),
        knots,
    };
    let field = VectorField::mean_dynamic(game, protocol)?;
    let sample = |path: &SampledPath, flip: bool| -> Vec<Vec<f64>> {
        (1..=knots)
            .map(|k| {
                let t = k as f64 / knots as f64;
                if flip {
                    path.at(t - 1.0)
                } else {
                    path.at(t)
                }
            })
            .collect()
    };
    let mut starts = Vec::new();
    let forward = integrate(&field, x0, 1.0, 1e-3, &Direction::Forward)?;
    starts.push(sample(&forward, false));
    let target = simplex_mesh(n, 100)
        .into_iter()
        .min_by(|a, b| h.eval(a.coords()).total_cmp(&h.eval(b.coords())))
        .expect("nonempty mesh");
    starts.push(
        (1..=knots)
            .map(|k| {
                let w = k as f64 / knots as f64;
                x0.coords().iter().zip(target.coords()).map(|(a, b)| a + w * (b - a)).collect()
            })
            .collect(),
    );
    // The reversed flow into the target, shifted so it starts at x0.
    let reverse = integrate(&field, &target, 1.0, 1e-3, &Direction::Reverse { halt_near: None })?;
    let origin = reverse.at(-1.0);
    starts.push(
        sample(&reverse, true)
            .into_iter()
            .map(|s| {
                s.iter()
                    .zip(&origin)
                    .zip(x0.coords())
                    .map(|((v, o), x)| (v - o + x).max(0.0))
                    .collect::<Vec<f64>>()
            })
            .map(|v| {
                let sum: f64 = v.iter().sum();
                v.into_iter().map(|c| c / sum).collect()
            })
            .collect(),
    );
    let base = starts.clone();
    let mut rng = stream_rng(seed, 0);
    for r in 0..restarts {
        let mut s = base[r % base.len()].clone();
        for node in s.iter_mut() {
            let noise = crate::games::random_point(&mut rng, n);
            let w: f64 = rng.random_range(0.0..0.2);
            for (c, z) in node.iter_mut().zip(&noise) {
                *c = (1.0 - w) * *c + w * z;
            }
        }
        starts.push(s);
    }
    let (value, nodes) = starts
        .into_par_iter()
        .map(|s| problem.descend(s))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");
    Ok(Variational {
        value,
        path: problem.path(&nodes),
        knots,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LaplaceRow {
    pub pop_size: u32,
    pub dp_value: f64,
    pub direct_value: f64,
    pub variational: f64,
    pub gap: f64,
}

pub fn laplace_csv(rows: &[LaplaceRow], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("N,V_N,direct,variational,gap\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.pop_size, r.dp_value, r.direct_value, r.variational, r.gap
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::increment_law;
    use crate::protocols::switch_matrix;

    fn two_link() -> (GameSpec, ProtocolSpec) {
        (
            GameSpec::parallel_links(vec![vec![0.0, 2.0], vec![1.0, 1.0]]),
            ProtocolSpec::logit(0.25),
        )
    }

    fn law() -> IncrementLaw {
        let (g, p) = two_link();
        let x = SimplexPoint::new(vec![0.3, 0.7]).unwrap();
        increment_law(&x, &switch_matrix(&g, &p, &x, Evaluation::Limit).unwrap()).unwrap()
    }

    #[test]
    fn constant_cost_is_its_own_value() {
        let pi = law();
        let t = tilted_minimizer(&pi, |_| 0.7).unwrap();
        assert!((t.value - 0.7).abs() < 1e-14);
        assert!(crate::simplex::l1(&t.lambda.mean(), &pi.mean()) < 1e-14);
        assert!(t.identity_gap < 1e-10);
    }

    #[test]
    fn forced_atom() {
        let pi = law();
        let z0 = Some((0, 1));
        let t = tilted_minimizer(&pi, |a| if a == z0 { 0.4 } else { f64::INFINITY }).unwrap();
        assert!((t.value - (0.4 - pi.prob(z0).ln())).abs() < 1e-14);
        assert_eq!(t.lambda.prob(z0), 1.0);
    }

    #[test]
    fn zero_objective_has_zero_value() {
        let (g, p) = two_link();
        let x0 = GridState::new(vec![10, 20]).unwrap();
        let r = laplace_dp_value(&g, &p, 30, &TerminalObjective::zero(), &x0, Evaluation::Simple, false).unwrap();
        assert!(r.value.abs() < 1e-15);
        assert!(r.direct_value.abs() < 1e-14);
    }

    #[test]
    fn controls_reproduce_the_value() {
        let (g, p) = two_link();
        let x0 = GridState::new(vec![5, 20]).unwrap();
        let h = TerminalObjective::squared_distance(vec![0.8, 0.2], 2.0);
        let r = laplace_dp_value(&g, &p, 25, &h, &x0, Evaluation::Simple, true).unwrap();
        assert!((r.value - r.direct_value).abs() < 1e-10);
        let seq = sequence_objective(r.controls.as_ref().unwrap(), &h, &x0);
        assert!((seq - r.value).abs() < 1e-8, "{seq} vs {}", r.value);
    }

    #[test]
    fn variational_zero_objective_follows_the_flow() {
        let (g, p) = two_link();
        let x0 = SimplexPoint::new(vec![0.2, 0.8]).unwrap();
        let coarse = laplace_variational(&g, &p, &TerminalObjective::zero(), &x0, 4, 0, 1).unwrap();
        let fine = laplace_variational(&g, &p, &TerminalObjective::zero(), &x0, 16, 0, 1).unwrap();
        assert!(fine.value <= coarse.value + 1e-9);
        assert!(fine.value < 1e-3, "{}", fine.value);
    }
}
