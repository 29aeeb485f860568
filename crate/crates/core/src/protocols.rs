//! Revision protocols and the switch-probability matrix `σ^N(x)`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{Evaluation, GameSpec};
use crate::simplex::{simplex_mesh, GridState, SimplexPoint};

const ROW_TOL: f64 = 1e-12;

/// Affine payoff rescaling `π ↦ scale·π + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    pub fn apply(&self, v: f64) -> f64 {
        self.scale * v + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ProtocolSpec {
    Logit {
        eta: f64,
    },
    PairwiseLogit {
        eta: f64,
    },
    /// Imitate a random opponent with probability equal to her (normalized)
    /// payoff; mutate uniformly with probability `epsilon`.
    ImitationMutation {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        payoff_normalization: Option<AffineMap>,
    },
}

impl ProtocolSpec {
    pub fn logit(eta: f64) -> Self {
        ProtocolSpec::Logit { eta }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProtocolSpec::Logit { eta } | ProtocolSpec::PairwiseLogit { eta } => {
                if !(eta > 0.0 && eta.is_finite()) {
                    return Err(Error::Config(format!("noise level must be positive, got {eta}")));
                }
            }
            ProtocolSpec::ImitationMutation {
                epsilon,
                payoff_normalization,
            } => {
                if !(epsilon > 0.0 && epsilon <= 1.0) {
                    return Err(Error::Config(format!("mutation rate must lie in (0,1], got {epsilon}")));
                }
                if let Some(m) = payoff_normalization {
                    if !(m.scale.is_finite() && m.offset.is_finite()) {
                        return Err(Error::Config("normalization must be finite".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Noise level of the logit protocol, if this is one.
    pub fn logit_eta(&self) -> Option<f64> {
        match *self {
            ProtocolSpec::Logit { eta } => Some(eta),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("protocol specs always serialize")
    }
}

impl FromStr for ProtocolSpec {
    type Err = Error;

    /// Accepts JSON or the shorthand `logit:0.25`, `pairwise_logit:0.25`,
    /// `imitation_mutation:0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let spec = if s.starts_with('{') {
            serde_json::from_str(s).map_err(|e| Error::Config(format!("protocol JSON: {e}")))?
        } else {
            let (name, value) = s
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("protocol shorthand `{s}` lacks `:`")))?;
            let v: f64 = value
                .parse()
                .map_err(|_| Error::Config(format!("bad protocol parameter `{value}`")))?;
            match name {
                "logit" => ProtocolSpec::Logit { eta: v },
                "pairwise_logit" => ProtocolSpec::PairwiseLogit { eta: v },
                "imitation_mutation" => ProtocolSpec::ImitationMutation {
                    epsilon: v,
                    payoff_normalization: None,
                },
                other => return Err(Error::Config(format!("unknown protocol `{other}`"))),
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Logit choice probabilities `M^η(π)`, computed with max-subtraction.
pub fn logit_choice(payoffs: &[f64], eta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(payoffs.len());
    logit_choice_into(payoffs, eta, &mut out);
    out
}

pub(crate) fn logit_choice_into(payoffs: &[f64], eta: f64, out: &mut Vec<f64>) {
    let m = payoffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(payoffs.iter().map(|p| ((p - m) / eta).exp()));
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
}

/// `e^{a/η} / (e^{a/η} + e^{b/η})` without overflow.
fn pair_logit(a: f64, b: f64, eta: f64) -> f64 {
    1.0 / (1.0 + ((b - a) / eta).exp())
}

pub(crate) fn choice_into(
    protocol: &ProtocolSpec,
    payoffs: &[f64],
    actor: usize,
    x: &[f64],
    pop_size: Option<u32>,
    out: &mut Vec<f64>,
) -> Result<()> {
    let n = payoffs.len();
    if payoffs.iter().any(|p| !p.is_finite()) {
        return Err(Error::Precondition("payoffs must be finite".into()));
    }
    match *protocol {
        ProtocolSpec::Logit { eta } => logit_choice_into(payoffs, eta, out),
        ProtocolSpec::PairwiseLogit { eta } => {
            let w = 1.0 / (n as f64 - 1.0);
            out.clear();
            out.resize(n, 0.0);
            let mut stay = 0.0;
            for j in (0..n).filter(|&j| j != actor) {
                let go = pair_logit(payoffs[j], payoffs[actor], eta);
                out[j] = w * go;
                stay += w * (1.0 - go);
            }
            out[actor] = stay;
        }
        ProtocolSpec::ImitationMutation {
            epsilon,
            payoff_normalization,
        } => {
            let big_n = pop_size.ok_or_else(|| {
                Error::Config("imitation protocol needs the population size".into())
            })?;
            let pi: Vec<f64> = match payoff_normalization {
                Some(m) => payoffs.iter().map(|&p| m.apply(p)).collect(),
                None => payoffs.to_vec(),
            };
            if pi.iter().any(|&p| !(-ROW_TOL..=1.0 + ROW_TOL).contains(&p)) {
                return Err(Error::Config(
                    "imitation needs payoffs normalized to [0,1]".into(),
                ));
            }
            let nf = big_n as f64;
            if big_n < 2 {
                return Err(Error::Config("imitation needs at least two agents".into()));
            }
            // An opponent is drawn from the other N − 1 agents.
            let meet = |k: usize| {
                if k == actor {
                    (nf * x[k] - 1.0) / (nf - 1.0)
                } else {
                    nf * x[k] / (nf - 1.0)
                }
            };
            let mutate = epsilon / n as f64;
            out.clear();
            out.resize(n, 0.0);
            let mut stay = meet(actor);
            for j in (0..n).filter(|&j| j != actor) {
                out[j] = (1.0 - epsilon) * meet(j) * pi[j] + mutate;
                stay += meet(j) * (1.0 - pi[j]);
            }
            out[actor] = (1.0 - epsilon) * stay + mutate;
        }
    }
    Ok(())
}

/// Imitation protocol in the large-population limit.
fn imitation_limit_into(epsilon: f64, pi: &[f64], actor: usize, x: &[f64], out: &mut Vec<f64>) {
    let n = pi.len();
    let mutate = epsilon / n as f64;
    out.clear();
    out.resize(n, 0.0);
    let mut stay = x[actor];
    for j in (0..n).filter(|&j| j != actor) {
        out[j] = (1.0 - epsilon) * x[j] * pi[j] + mutate;
        stay += x[j] * (1.0 - pi[j]);
    }
    out[actor] = (1.0 - epsilon) * stay + mutate;
}

/// Choice probabilities of a revising action-`actor` agent facing `payoffs`
/// at state `x`. Imitation requires `pop_size`.
pub fn choice_distribution(
    protocol: &ProtocolSpec,
    payoffs: &[f64],
    actor: usize,
    x: &SimplexPoint,
    pop_size: Option<u32>,
) -> Result<Vec<f64>> {
    protocol.validate()?;
    if payoffs.len() != x.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: payoffs.len(),
        });
    }
    if actor >= x.dim() {
        return Err(Error::Precondition(format!("actor {actor} out of range")));
    }
    let mut out = Vec::new();
    choice_into(protocol, payoffs, actor, x.coords(), pop_size, &mut out)?;
    Ok(out)
}

/// Row-stochastic matrix `σ(x)`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchMatrix {
    n: usize,
    entries: Vec<f64>,
    /// Smallest entry of this matrix. For the uniform bound `ς` over the
    /// whole simplex use [`varsigma_scan`].
    pub lower_bound: f64,
}

impl SwitchMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidState("negative switch probability".into()));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidState(format!("switch row sums to {s}")));
            }
            entries.extend(row);
        }
        Ok(Self::from_entries(n, entries))
    }

    pub(crate) fn from_entries(n: usize, entries: Vec<f64>) -> Self {
        let lower_bound = entries.iter().cloned().fold(f64::INFINITY, f64::min);
        Self {
            n,
            entries,
            lower_bound,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// The matrix with every row equal to `1/n`.
    pub fn uniform(n: usize) -> Self {
        Self::from_entries(n, vec![1.0 / n as f64; n * n])
    }
}

/// Where a switch matrix is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Grid(&'a GridState),
    Point(&'a SimplexPoint),
}

impl<'a> From<&'a GridState> for StateRef<'a> {
    fn from(s: &'a GridState) -> Self {
        StateRef::Grid(s)
    }
}

impl<'a> From<&'a SimplexPoint> for StateRef<'a> {
    fn from(s: &'a SimplexPoint) -> Self {
        StateRef::Point(s)
    }
}

/// Row `i` of `σ` at grid counts, written into `out`.
pub(crate) fn grid_row_into(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    counts: &[u32],
    actor: usize,
    mode: Evaluation,
    payoff_buf: &mut Vec<f64>,
    out: &mut Vec<f64>,
) -> Result<()> {
    let pop: u32 = counts.iter().sum();
    let x: Vec<f64> = counts.iter().map(|&c| c as f64 / pop as f64).collect();
    if mode == Evaluation::Limit {
        *payoff_buf = game.limit_at(&x);
        return limit_row_into(protocol, payoff_buf, actor, &x, out);
    }
    // A clever evaluation for an absent action is never used by the chain:
    // its row carries zero weight. Fall back to simple payoffs there.
    let mode = if counts[actor] == 0 {
        Evaluation::Simple
    } else {
        mode
    };
    game.finite_vector_into(counts, actor, mode, payoff_buf)?;
    choice_into(protocol, payoff_buf, actor, &x, Some(pop), out)
}

fn limit_row_into(
    protocol: &ProtocolSpec,
    payoffs: &[f64],
    actor: usize,
    x: &[f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    match *protocol {
        ProtocolSpec::ImitationMutation {
            epsilon,
            payoff_normalization,
        } => {
            let pi: Vec<f64> = match payoff_normalization {
                Some(m) => payoffs.iter().map(|&p| m.apply(p)).collect(),
                None => payoffs.to_vec(),
            };
            if pi.iter().any(|&p| !(-ROW_TOL..=1.0 + ROW_TOL).contains(&p)) {
                return Err(Error::Config(
                    "imitation needs payoffs normalized to [0,1]".into(),
                ));
            }
            imitation_limit_into(epsilon, &pi, actor, x, out);
            Ok(())
        }
        _ => choice_into(protocol, payoffs, actor, x, None, out),
    }
}

/// Limiting switch matrix `σ(x)` at an arbitrary coordinate vector.
pub(crate) fn limit_matrix_at(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    x: &[f64],
) -> Result<SwitchMatrix> {
    let n = x.len();
    let payoffs = game.limit_at(x);
    let mut entries = Vec::with_capacity(n * n);
    let mut row = Vec::with_capacity(n);
    if let ProtocolSpec::Logit { eta } = *protocol {
        logit_choice_into(&payoffs, eta, &mut row);
        for _ in 0..n {
            entries.extend_from_slice(&row);
        }
    } else {
        for i in 0..n {
            limit_row_into(protocol, &payoffs, i, x, &mut row)?;
            entries.extend_from_slice(&row);
        }
    }
    Ok(SwitchMatrix::from_entries(n, entries))
}

/// `σ^N(x)` (simple or clever payoffs at a grid state) or `σ(x)` (limit mode).
pub fn switch_matrix<'a>(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    state: impl Into<StateRef<'a>>,
    mode: Evaluation,
) -> Result<SwitchMatrix> {
    protocol.validate()?;
    match state.into() {
        StateRef::Point(x) => {
            if x.dim() != game.num_actions() {
                return Err(Error::Dimension {
                    expected: game.num_actions(),
                    got: x.dim(),
                });
            }
            if mode != Evaluation::Limit {
                return Err(Error::Config(
                    "finite-population payoffs need a grid state".into(),
                ));
            }
            limit_matrix_at(game, protocol, x.coords())
        }
        StateRef::Grid(s) => {
            let n = s.dim();
            if n != game.num_actions() {
                return Err(Error::Dimension {
                    expected: game.num_actions(),
                    got: n,
                });
            }
            let mut entries = Vec::with_capacity(n * n);
            let (mut buf, mut row) = (Vec::new(), Vec::new());
            for i in 0..n {
                grid_row_into(game, protocol, s.counts(), i, mode, &mut buf, &mut row)?;
                entries.extend_from_slice(&row);
            }
            Ok(SwitchMatrix::from_entries(n, entries))
        }
    }
}

/// `ς`: smallest limiting switch probability over the deterministic mesh of
/// the simplex with spacing `1/resolution`.
pub fn varsigma_scan(game: &GameSpec, protocol: &ProtocolSpec, resolution: u32) -> Result<f64> {
    let mut lo = f64::INFINITY;
    for x in simplex_mesh(game.num_actions(), resolution) {
        lo = lo.min(limit_matrix_at(game, protocol, x.coords())?.lower_bound);
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(v: &[f64]) -> SimplexPoint {
        SimplexPoint::from_weights(v).unwrap()
    }

    #[test]
    fn logit_equal_payoffs_uniform() {
        let p = ProtocolSpec::logit(0.25);
        let x = SimplexPoint::barycenter(3);
        let c = choice_distribution(&p, &[-4.0, -4.0, -4.0], 0, &x, None).unwrap();
        for v in c {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn logit_two_actions_closed_form() {
        let p = ProtocolSpec::logit(1.0);
        let c = choice_distribution(&p, &[1.0, 0.0], 1, &SimplexPoint::barycenter(2), None).unwrap();
        let e = std::f64::consts::E;
        assert!((c[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((c[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn pairwise_logit_flat_payoffs() {
        let p = ProtocolSpec::PairwiseLogit { eta: 0.3 };
        let c = choice_distribution(&p, &[0.0; 3], 0, &SimplexPoint::barycenter(3), None).unwrap();
        assert_eq!(c, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn logit_survives_tiny_eta() {
        let c = logit_choice(&[-9.0, -2.0, -4.0], 1e-3);
        assert!(c.iter().all(|v| v.is_finite()));
        assert!((c[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn imitation_needs_population_and_normalized_payoffs() {
        let p = ProtocolSpec::ImitationMutation {
            epsilon: 0.1,
            payoff_normalization: None,
        };
        let x = SimplexPoint::barycenter(2);
        assert!(matches!(
            choice_distribution(&p, &[0.5, 0.5], 0, &x, None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            choice_distribution(&p, &[2.0, 0.5], 0, &x, Some(10)),
            Err(Error::Config(_))
        ));
        let q = ProtocolSpec::ImitationMutation {
            epsilon: 0.1,
            payoff_normalization: Some(AffineMap {
                scale: 0.25,
                offset: 0.0,
            }),
        };
        assert!(choice_distribution(&q, &[2.0, 0.5], 0, &x, Some(10)).is_ok());
    }

    #[test]
    fn imitation_rows_sum_to_one() {
        // Oracle: enumerate the three other agents at N = 4, x = (.5,.5).
        let p = ProtocolSpec::ImitationMutation {
            epsilon: 0.2,
            payoff_normalization: None,
        };
        let pi = [0.3, 0.9];
        let x = SimplexPoint::barycenter(2);
        let c = choice_distribution(&p, &pi, 0, &x, Some(4)).unwrap();
        let others = [0usize, 1, 1];
        let mut brute = [0.0; 2];
        for &k in &others {
            let w = 1.0 / others.len() as f64;
            brute[k] += w * pi[k];
            brute[0] += w * (1.0 - pi[k]);
        }
        for j in 0..2 {
            let expect = 0.8 * brute[j] + 0.1;
            assert!((c[j] - expect).abs() < 1e-15, "{c:?}");
        }
    }

    #[test]
    fn shorthand_and_json_parse() {
        assert_eq!("logit:0.25".parse::<ProtocolSpec>().unwrap(), ProtocolSpec::logit(0.25));
        let p: ProtocolSpec = r#"{"variant":"logit","eta":0.25}"#.parse().unwrap();
        assert_eq!(p, ProtocolSpec::logit(0.25));
        assert!("logit:-1".parse::<ProtocolSpec>().is_err());
        assert!("softmax:1".parse::<ProtocolSpec>().is_err());
        assert!("imitation_mutation:1.5".parse::<ProtocolSpec>().is_err());
    }

    #[test]
    fn congestion_nash_rows_uniform() {
        let g = GameSpec::three_link_congestion();
        let x = point(&[3.0, 4.0, 1.0]);
        let s = switch_matrix(&g, &ProtocolSpec::logit(0.25), &x, Evaluation::Limit).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((s.get(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let grid = GridState::new(vec![3, 4, 1]).unwrap();
        let s = switch_matrix(&g, &ProtocolSpec::logit(0.25), &grid, Evaluation::Simple).unwrap();
        assert!((s.get(2, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn point_state_requires_limit_mode() {
        let g = GameSpec::three_link_congestion();
        let x = SimplexPoint::barycenter(3);
        assert!(switch_matrix(&g, &ProtocolSpec::logit(0.25), &x, Evaluation::Simple).is_err());
    }

    #[test]
    fn varsigma_respects_payoff_range_bound() {
        let g = GameSpec::three_link_congestion();
        let eta = 0.25;
        let bound = (-8.0f64 / eta).exp() / 3.0;
        let s = varsigma_scan(&g, &ProtocolSpec::logit(eta), 100).unwrap();
        assert!(s >= bound && s > 0.0, "{s} vs {bound}");
    }
}
