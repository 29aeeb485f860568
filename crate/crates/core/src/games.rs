//! Population games: matching in symmetric normal-form games, congestion
//! games, and directly specified payoff functions.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::simplex::{GridState, SimplexPoint};

/// How a revising agent evaluates payoffs in the finite population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// `F^N_{i→j}(x) = F^N_j(x)`.
    #[default]
    Simple,
    /// `F^N_{i→j}(x) = F^N_j(x + (e_j − e_i)/N)`.
    Clever,
    /// Limiting payoffs `F(x)`.
    Limit,
}

/// Cost polynomial `ℓ(u) = Σ_k c_k u^k`.
pub fn poly_eval(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

/// `∫_0^u ℓ(s) ds`.
pub fn poly_integral(coeffs: &[f64], u: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, c)| acc * u + c / (k as f64 + 1.0))
        * u
}

type PayoffFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A payoff function supplied as a closure; used for both `F^N` and `F`.
#[derive(Clone)]
pub struct DirectPayoff {
    n: usize,
    label: String,
    f: Arc<PayoffFn>,
}

impl DirectPayoff {
    pub fn new(
        n: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

impl fmt::Debug for DirectPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectPayoff")
            .field("n", &self.n)
            .field("label", &self.label)
            .finish()
    }
}

fn default_true() -> bool {
    true
}

/// Declarative description of a population game.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum GameSpec {
    /// Matching against the rest of the population in the symmetric game `A`.
    Matching {
        a: Vec<Vec<f64>>,
        #[serde(default = "default_true")]
        self_match_excluded: bool,
    },
    /// `F_i(x) = −Σ_{λ∈Λ_i} ℓ_λ(u_λ(x))`; `usage[i][λ] = 1` iff action `i`
    /// uses facility `λ`.
    Congestion {
        facilities: Vec<Vec<f64>>,
        usage: Vec<Vec<u8>>,
        /// Optional finite-population cost polynomials `ℓ^N`; defaults to `ℓ`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        finite_facilities: Option<Vec<Vec<f64>>>,
    },
    #[serde(skip)]
    Direct(DirectPayoff),
}

impl GameSpec {
    /// The three-link congestion network with `ℓ1 = 1 + 8u`, `ℓ2 = 2 + 4u`,
    /// `ℓ3 = 4`.
    pub fn three_link_congestion() -> Self {
        GameSpec::parallel_links(vec![vec![1.0, 8.0], vec![2.0, 4.0], vec![4.0]])
    }

    /// A parallel-link network: action `i` uses facility `i` only.
    pub fn parallel_links(facilities: Vec<Vec<f64>>) -> Self {
        let n = facilities.len();
        let usage = (0..n)
            .map(|i| (0..n).map(|l| u8::from(i == l)).collect())
            .collect();
        GameSpec::Congestion {
            facilities,
            usage,
            finite_facilities: None,
        }
    }

    pub fn matching(a: Vec<Vec<f64>>) -> Self {
        GameSpec::Matching {
            a,
            self_match_excluded: true,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let game: GameSpec =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("game JSON: {e}")))?;
        game.validate()?;
        Ok(game)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Config(format!("game JSON: {e}")))
    }

    pub fn num_actions(&self) -> usize {
        match self {
            GameSpec::Matching { a, .. } => a.len(),
            GameSpec::Congestion { usage, .. } => usage.len(),
            GameSpec::Direct(d) => d.n,
        }
    }

    /// Structural checks; see [`lipschitz_estimate`] for the sampled
    /// regularity check.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_actions();
        if n < 2 {
            return Err(Error::Config("a game needs at least two actions".into()));
        }
        match self {
            GameSpec::Matching { a, .. } => {
                for row in a {
                    if row.len() != n {
                        return Err(Error::Dimension {
                            expected: n,
                            got: row.len(),
                        });
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Config("payoff matrix must be finite".into()));
                    }
                }
            }
            GameSpec::Congestion {
                facilities,
                usage,
                finite_facilities,
            } => {
                let m = facilities.len();
                for row in usage {
                    if row.len() != m {
                        return Err(Error::Dimension {
                            expected: m,
                            got: row.len(),
                        });
                    }
                    if row.iter().any(|&v| v > 1) {
                        return Err(Error::Config("usage entries must be 0 or 1".into()));
                    }
                }
                if let Some(ff) = finite_facilities {
                    if ff.len() != m {
                        return Err(Error::Dimension {
                            expected: m,
                            got: ff.len(),
                        });
                    }
                }
                if facilities
                    .iter()
                    .chain(finite_facilities.iter().flatten())
                    .flatten()
                    .any(|c| !c.is_finite())
                {
                    return Err(Error::Config("cost coefficients must be finite".into()));
                }
            }
            GameSpec::Direct(_) => {}
        }
        Ok(())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        let n = self.num_actions();
        if got != n {
            return Err(Error::Dimension { expected: n, got });
        }
        Ok(())
    }

    /// Limiting payoffs `F(x)` at an arbitrary coordinate vector.
    pub(crate) fn limit_at(&self, x: &[f64]) -> Vec<f64> {
        match self {
            GameSpec::Matching { a, .. } => a
                .iter()
                .map(|row| row.iter().zip(x).map(|(aij, xj)| aij * xj).sum())
                .collect(),
            GameSpec::Congestion {
                facilities, usage, ..
            } => congestion_payoffs(facilities, usage, x),
            GameSpec::Direct(d) => d.eval(x),
        }
    }

    /// `F^N_j` for every `j`, evaluated at integer counts.
    pub(crate) fn finite_at(&self, counts: &[u32]) -> Vec<f64> {
        let pop: u32 = counts.iter().sum();
        let big_n = pop as f64;
        match self {
            GameSpec::Matching {
                a,
                self_match_excluded: true,
            } if pop >= 2 => a
                .iter()
                .enumerate()
                .map(|(j, row)| {
                    let total: f64 = row.iter().zip(counts).map(|(v, &c)| v * c as f64).sum();
                    (total - row[j]) / (big_n - 1.0)
                })
                .collect(),
            GameSpec::Congestion {
                facilities,
                usage,
                finite_facilities,
            } => {
                let x: Vec<f64> = counts.iter().map(|&c| c as f64 / big_n).collect();
                congestion_payoffs(finite_facilities.as_ref().unwrap_or(facilities), usage, &x)
            }
            _ => {
                let x: Vec<f64> = counts.iter().map(|&c| c as f64 / big_n).collect();
                self.limit_at(&x)
            }
        }
    }

    /// Finite-population payoff vector `F^N_{i→·}(x)` seen by an action-`actor`
    /// agent, written into `out`.
    pub(crate) fn finite_vector_into(
        &self,
        counts: &[u32],
        actor: usize,
        mode: Evaluation,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        out.clear();
        match mode {
            Evaluation::Simple => out.extend(self.finite_at(counts)),
            Evaluation::Limit => {
                let pop: u32 = counts.iter().sum();
                let x: Vec<f64> = counts.iter().map(|&c| c as f64 / pop as f64).collect();
                out.extend(self.limit_at(&x));
            }
            Evaluation::Clever => {
                let n = counts.len();
                let mut shifted = counts.to_vec();
                for j in 0..n {
                    if j == actor {
                        out.push(self.finite_at(counts)[j]);
                        continue;
                    }
                    if counts[actor] == 0 {
                        return Err(Error::NegativeCount { action: actor });
                    }
                    shifted[actor] -= 1;
                    shifted[j] += 1;
                    out.push(self.finite_at(&shifted)[j]);
                    shifted[actor] += 1;
                    shifted[j] -= 1;
                }
            }
        }
        Ok(())
    }
}

fn congestion_payoffs(facilities: &[Vec<f64>], usage: &[Vec<u8>], x: &[f64]) -> Vec<f64> {
    let loads: Vec<f64> = (0..facilities.len())
        .map(|l| {
            usage
                .iter()
                .zip(x)
                .filter(|(row, _)| row[l] == 1)
                .map(|(_, xi)| xi)
                .sum()
        })
        .collect();
    let costs: Vec<f64> = facilities
        .iter()
        .zip(&loads)
        .map(|(c, &u)| poly_eval(c, u))
        .collect();
    usage
        .iter()
        .map(|row| {
            -row.iter()
                .zip(&costs)
                .filter(|(&used, _)| used == 1)
                .map(|(_, c)| c)
                .sum::<f64>()
        })
        .collect()
}

/// Limiting payoff vector `F(x)`.
pub fn payoff_limit(game: &GameSpec, x: &SimplexPoint) -> Result<Vec<f64>> {
    game.check_dim(x.dim())?;
    Ok(game.limit_at(x.coords()))
}

/// Payoff vector `F^N_{i→·}(x)` considered by a revising action-`actor` agent.
pub fn payoff_finite(
    game: &GameSpec,
    state: &GridState,
    actor: usize,
    mode: Evaluation,
) -> Result<Vec<f64>> {
    game.check_dim(state.dim())?;
    if actor >= state.dim() {
        return Err(Error::Precondition(format!("actor {actor} out of range")));
    }
    let mut out = Vec::with_capacity(state.dim());
    game.finite_vector_into(state.counts(), actor, mode, &mut out)?;
    Ok(out)
}

/// Draws a uniform point of the simplex (flat Dirichlet).
pub(crate) fn random_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Largest sampled difference quotient `|F(x) − F(y)|₁ / |x − y|₁` over
/// `pairs` uniform random pairs. A heuristic, not a proof of Lipschitz
/// continuity.
pub fn lipschitz_estimate(game: &GameSpec, pairs: usize, seed: u64) -> f64 {
    let n = game.num_actions();
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = random_point(&mut rng, n);
        let y = random_point(&mut rng, n);
        let dx = crate::simplex::l1(&x, &y);
        if dx < 1e-12 {
            continue;
        }
        let df = crate::simplex::l1(&game.limit_at(&x), &game.limit_at(&y));
        worst = worst.max(df / dx);
    }
    worst
}

/// Fails when the sampled Lipschitz estimate is not finite or exceeds `bound`.
pub fn check_lipschitz(game: &GameSpec, pairs: usize, seed: u64, bound: f64) -> Result<f64> {
    let est = lipschitz_estimate(game, pairs, seed);
    if !est.is_finite() || est > bound {
        return Err(Error::Config(format!(
            "payoff difference quotient {est} exceeds bound {bound}"
        )));
    }
    Ok(est)
}
