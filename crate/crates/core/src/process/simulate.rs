use rand::Rng;

use super::{Increment, IncrementLaw, SampledPath};
use crate::error::{Error, Result};
use crate::games::{Evaluation, GameSpec};
use crate::protocols::{grid_row_into, ProtocolSpec};
use crate::rng::stream_rng;
use crate::simplex::{GridIndex, GridState};

// Memoize switch rows when the table stays below this many entries.
const ROW_CACHE_ENTRIES: u128 = 1 << 22;

struct RowCache {
    index: GridIndex,
    rows: Vec<f64>,
}

/// Advances one chain `X^N` a period at a time.
pub struct Stepper<'a> {
    game: &'a GameSpec,
    protocol: &'a ProtocolSpec,
    mode: Evaluation,
    counts: Vec<u32>,
    pop: u32,
    cache: Option<RowCache>,
    payoffs: Vec<f64>,
    row: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        game: &'a GameSpec,
        protocol: &'a ProtocolSpec,
        start: &GridState,
        mode: Evaluation,
    ) -> Result<Self> {
        let n = start.dim();
        if n != game.num_actions() {
            return Err(Error::Dimension {
                expected: game.num_actions(),
                got: n,
            });
        }
        protocol.validate()?;
        let index = GridIndex::new(n, start.pop_size());
        let cache = (index.len() * (n * n) as u128 <= ROW_CACHE_ENTRIES).then(|| RowCache {
            rows: vec![f64::NAN; index.len() as usize * n * n],
            index,
        });
        Ok(Self {
            game,
            protocol,
            mode,
            counts: start.counts().to_vec(),
            pop: start.pop_size(),
            cache,
            payoffs: Vec::with_capacity(n),
            row: Vec::with_capacity(n),
        })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn shares(&self) -> Vec<f64> {
        let p = self.pop as f64;
        self.counts.iter().map(|&c| c as f64 / p).collect()
    }

    fn load_row(&mut self, actor: usize) -> Result<()> {
        let n = self.counts.len();
        if let Some(cache) = &mut self.cache {
            let at = (cache.index.rank(&self.counts) * n + actor) * n;
            if cache.rows[at].is_nan() {
                grid_row_into(
                    self.game,
                    self.protocol,
                    &self.counts,
                    actor,
                    self.mode,
                    &mut self.payoffs,
                    &mut self.row,
                )?;
                cache.rows[at..at + n].copy_from_slice(&self.row);
            } else {
                self.row.clear();
                self.row.extend_from_slice(&cache.rows[at..at + n]);
            }
            return Ok(());
        }
        grid_row_into(
            self.game,
            self.protocol,
            &self.counts,
            actor,
            self.mode,
            &mut self.payoffs,
            &mut self.row,
        )
    }

    /// One period: a uniformly drawn agent revises. Returns the increment.
    pub fn step(&mut self, rng: &mut impl Rng) -> Result<Increment> {
        let mut agent = rng.random_range(0..self.pop);
        let mut actor = 0;
        while agent >= self.counts[actor] {
            agent -= self.counts[actor];
            actor += 1;
        }
        self.load_row(actor)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut choice = actor;
        for (j, &p) in self.row.iter().enumerate() {
            if p > 0.0 {
                choice = j;
                acc += p;
                if u < acc {
                    break;
                }
            }
        }
        if choice == actor {
            return Ok(None);
        }
        debug_assert!(self.counts[actor] > 0, "increment outside 𝒵(x)");
        self.counts[actor] -= 1;
        self.counts[choice] += 1;
        Ok(Some((actor, choice)))
    }
}

pub(crate) fn simulate_with(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    x0: &GridState,
    horizon: f64,
    mode: Evaluation,
    rng: &mut impl Rng,
) -> Result<SampledPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    let big_n = x0.pop_size() as f64;
    let steps = (big_n * horizon - 1e-9).ceil() as usize;
    let mut stepper = Stepper::new(game, protocol, x0, mode)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(stepper.shares());
    for k in 1..=steps {
        stepper.step(rng)?;
        times.push(k as f64 / big_n);
        states.push(stepper.shares());
    }
    Ok(SampledPath::from_parts(times, states, 1.0 / big_n))
}

/// Runs `⌈NT⌉` periods of the chain from `x0`, one period per `1/N` units of
/// clock time.
pub fn simulate_path(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    x0: &GridState,
    horizon: f64,
    seed: u64,
    mode: Evaluation,
) -> Result<SampledPath> {
    simulate_with(game, protocol, x0, horizon, mode, &mut stream_rng(seed, 0))
}

/// Empirical law of one increment from `state` over `draws` independent
/// periods.
pub fn transition_frequencies(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    state: &GridState,
    draws: usize,
    seed: u64,
    mode: Evaluation,
) -> Result<IncrementLaw> {
    let n = state.dim();
    let mut rng = stream_rng(seed, 0);
    let mut off = vec![0u64; n * n];
    let mut null = 0u64;
    let mut s = Stepper::new(game, protocol, state, mode)?;
    for _ in 0..draws {
        s.counts.copy_from_slice(state.counts());
        match s.step(&mut rng)? {
            Some((i, j)) => off[i * n + j] += 1,
            None => null += 1,
        }
    }
    let d = draws as f64;
    Ok(IncrementLaw::from_parts(
        n,
        off.into_iter().map(|c| c as f64 / d).collect(),
        null as f64 / d,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::switch_matrix;

    #[test]
    fn replay_is_bit_identical() {
        let g = GameSpec::three_link_congestion();
        let p = ProtocolSpec::logit(0.25);
        let x0 = GridState::new(vec![10, 10, 10]).unwrap();
        let a = simulate_path(&g, &p, &x0, 2.0, 5, Evaluation::Simple).unwrap();
        let b = simulate_path(&g, &p, &x0, 2.0, 5, Evaluation::Simple).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 61);
        for w in a.states().windows(2) {
            assert!(crate::simplex::l1(&w[0], &w[1]) <= 2.0 / 30.0 + 1e-12);
        }
    }

    #[test]
    fn first_step_leaves_vertex_at_exact_rate() {
        let g = GameSpec::three_link_congestion();
        let p = ProtocolSpec::logit(0.25);
        let x0 = GridState::new(vec![20, 0, 0]).unwrap();
        let sigma = switch_matrix(&g, &p, &x0, Evaluation::Simple).unwrap();
        let leave = 1.0 - sigma.get(0, 0);
        let draws = 100_000;
        let freq = transition_frequencies(&g, &p, &x0, draws, 11, Evaluation::Simple).unwrap();
        let observed = 1.0 - freq.null_mass();
        let se = (leave * (1.0 - leave) / draws as f64).sqrt();
        assert!((observed - leave).abs() <= 3.0 * se, "{observed} vs {leave}");
    }
}
