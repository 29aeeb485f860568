use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::simulate::Stepper;
use crate::error::{Error, Result};
use crate::games::{Evaluation, GameSpec};
use crate::protocols::{grid_row_into, ProtocolSpec};
use crate::rng::stream_rng;
use crate::simplex::{log_sum_exp, GridIndex, GridState, KahanSum};

/// Default state-space cap for exact solves.
pub const DEFAULT_STATE_CAP: u128 = 200_000;
const DENSE_LIMIT: usize = 2000;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum StationaryMethod {
    /// Linear solve over all of `X^N` (dense LU up to 2000 states, power
    /// iteration beyond), refused above `cap` states.
    Exact { cap: u128 },
    /// Detailed balance on the two-action line, in the log domain.
    BirthDeath,
    /// Visit frequencies of one long simulated run.
    Empirical { burn_in: u64, samples: u64, seed: u64 },
}

impl Default for StationaryMethod {
    fn default() -> Self {
        StationaryMethod::Exact {
            cap: DEFAULT_STATE_CAP,
        }
    }
}

/// Transition probabilities of `X^N`, one sparse row per grid state.
#[derive(Debug, Clone)]
pub struct Transitions {
    pub index: GridIndex,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Transitions {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `μ ↦ μP`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mu.len()];
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, p) in row {
                out[t] += mu[s] * p;
            }
        }
        out
    }

    fn check_ergodic(&self) -> Result<()> {
        let m = self.rows.len();
        let mut reverse = vec![Vec::new(); m];
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, p) in row {
                if p > 0.0 {
                    reverse[t].push(s);
                }
            }
        }
        let forward: Vec<Vec<usize>> = self
            .rows
            .iter()
            .map(|r| r.iter().filter(|(_, p)| *p > 0.0).map(|&(t, _)| t).collect())
            .collect();
        let level = bfs(&forward, 0);
        if level.iter().any(|l| l.is_none()) || bfs(&reverse, 0).iter().any(|l| l.is_none()) {
            return Err(Error::NotErgodic("chain is reducible".into()));
        }
        let mut period = 0usize;
        for (s, succ) in forward.iter().enumerate() {
            for &t in succ {
                let d = (level[s].unwrap() + 1).abs_diff(level[t].unwrap());
                period = gcd(period, d);
            }
        }
        if period != 1 {
            return Err(Error::NotErgodic(format!("chain has period {period}")));
        }
        Ok(())
    }
}

fn bfs(adj: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(s) = queue.pop_front() {
        let l = level[s].unwrap();
        for &t in &adj[s] {
            if level[t].is_none() {
                level[t] = Some(l + 1);
                queue.push_back(t);
            }
        }
    }
    level
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_cap(n: usize, pop_size: u32, cap: u128) -> Result<GridIndex> {
    let index = GridIndex::new(n, pop_size);
    if index.len() > cap {
        return Err(Error::CapExceeded {
            states: index.len(),
            cap,
        });
    }
    Ok(index)
}

/// Full transition table of `X^N` over the lexicographic grid order.
pub fn transition_matrix(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    pop_size: u32,
    mode: Evaluation,
    cap: u128,
) -> Result<Transitions> {
    protocol.validate()?;
    let n = game.num_actions();
    let index = check_cap(n, pop_size, cap)?;
    let big_n = pop_size as f64;
    let (mut buf, mut row) = (Vec::new(), Vec::new());
    let mut rows = Vec::with_capacity(index.len() as usize);
    for counts in index.states() {
        let s = index.rank(&counts);
        let mut out = Vec::with_capacity(n * (n - 1) + 1);
        let mut stay = KahanSum::default();
        let mut shifted = counts.clone();
        for i in 0..n {
            if counts[i] == 0 {
                continue;
            }
            let xi = counts[i] as f64 / big_n;
            grid_row_into(game, protocol, &counts, i, mode, &mut buf, &mut row)?;
            for j in 0..n {
                let p = xi * row[j];
                if j == i {
                    stay.add(p);
                } else if p > 0.0 {
                    shifted[i] -= 1;
                    shifted[j] += 1;
                    out.push((index.rank(&shifted), p));
                    shifted[i] += 1;
                    shifted[j] -= 1;
                }
            }
        }
        out.push((s, stay.value()));
        rows.push(out);
    }
    Ok(Transitions { index, rows })
}

/// A stationary distribution over `X^N` in grid order.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub index: GridIndex,
    pub mass: Vec<f64>,
    /// `log μ`, accurate where `mass` underflows (birth-death method).
    pub log_mass: Vec<f64>,
    /// `‖μP − μ‖₁`, when the method is exact.
    pub residual: Option<f64>,
}

impl Stationary {
    fn from_mass(index: GridIndex, mass: Vec<f64>, residual: Option<f64>) -> Self {
        let log_mass = mass.iter().map(|m| m.ln()).collect();
        Self {
            index,
            mass,
            log_mass,
            residual,
        }
    }

    /// `log μ(B)` for the grid states satisfying `inside`.
    pub fn log_mass_where(&self, inside: impl Fn(&[f64]) -> bool) -> f64 {
        let big_n = self.index.pop_size() as f64;
        log_sum_exp(self.index.states().enumerate().filter_map(|(s, c)| {
            let x: Vec<f64> = c.iter().map(|&v| v as f64 / big_n).collect();
            inside(&x).then_some(self.log_mass[s])
        }))
    }

    /// CSV `c1,..,cn,mass` with `# key=value` preamble.
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        for i in 1..=self.index.dim() {
            let _ = write!(out, "c{i},");
        }
        out.push_str("mass\n");
        for (s, c) in self.index.states().enumerate() {
            for v in c {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.mass[s]);
        }
        out
    }
}

fn residual(t: &Transitions, mu: &[f64]) -> f64 {
    crate::simplex::l1(&t.push_forward(mu), mu)
}

fn solve_exact(t: &Transitions) -> Result<Vec<f64>> {
    let m = t.len();
    if m <= DENSE_LIMIT {
        // Solve μ(P − I) = 0 with the last balance equation replaced by Σμ = 1.
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (s, row) in t.rows.iter().enumerate() {
            for &(u, p) in row {
                a[(u, s)] += p;
            }
            a[(s, s)] -= 1.0;
        }
        for c in 0..m {
            a[(m - 1, c)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(m);
        b[m - 1] = 1.0;
        let mu = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::NotErgodic("singular balance equations".into()))?;
        return Ok(mu.iter().map(|v| v.max(0.0)).collect());
    }
    let mut mu = vec![1.0 / m as f64; m];
    for _ in 0..POWER_MAX_ITER {
        let next = t.push_forward(&mu);
        let r = crate::simplex::l1(&next, &mu);
        mu = next;
        if r <= POWER_TOL {
            return Ok(mu);
        }
    }
    Err(Error::NotConverged {
        residual: residual(t, &mu),
    })
}

fn birth_death(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    pop_size: u32,
    mode: Evaluation,
) -> Result<Stationary> {
    if game.num_actions() != 2 {
        return Err(Error::Precondition("birth-death solve needs two actions".into()));
    }
    protocol.validate()?;
    let index = GridIndex::new(2, pop_size);
    let big_n = pop_size as f64;
    let (mut buf, mut row) = (Vec::new(), Vec::new());
    // k counts action-0 players; up: an action-1 player switches to 0.
    let mut log_up = vec![f64::NEG_INFINITY; pop_size as usize + 1];
    let mut log_down = vec![f64::NEG_INFINITY; pop_size as usize + 1];
    for k in 0..=pop_size {
        let counts = [k, pop_size - k];
        if k < pop_size {
            grid_row_into(game, protocol, &counts, 1, mode, &mut buf, &mut row)?;
            log_up[k as usize] = ((pop_size - k) as f64 / big_n).ln() + row[0].ln();
        }
        if k > 0 {
            grid_row_into(game, protocol, &counts, 0, mode, &mut buf, &mut row)?;
            log_down[k as usize] = (k as f64 / big_n).ln() + row[1].ln();
        }
    }
    let mut log_mass = vec![0.0; pop_size as usize + 1];
    for k in 0..pop_size as usize {
        let step = log_up[k] - log_down[k + 1];
        if !step.is_finite() {
            return Err(Error::NotErgodic(format!("no passage between counts {k} and {}", k + 1)));
        }
        log_mass[k + 1] = log_mass[k] + step;
    }
    let z = log_sum_exp(log_mass.iter().cloned());
    log_mass.iter_mut().for_each(|l| *l -= z);
    let mass: Vec<f64> = log_mass.iter().map(|l| l.exp()).collect();
    debug_assert_eq!(index.rank(&[1, pop_size - 1]), 1);
    Ok(Stationary {
        index,
        mass,
        log_mass,
        residual: None,
    })
}

/// Stationary distribution `μ^N` of the chain with `pop_size` agents.
pub fn stationary_distribution(
    game: &GameSpec,
    protocol: &ProtocolSpec,
    pop_size: u32,
    mode: Evaluation,
    method: &StationaryMethod,
) -> Result<Stationary> {
    match *method {
        StationaryMethod::Exact { cap } => {
            let t = transition_matrix(game, protocol, pop_size, mode, cap)?;
            t.check_ergodic()?;
            let mu = solve_exact(&t)?;
            let r = residual(&t, &mu);
            Ok(Stationary::from_mass(t.index, mu, Some(r)))
        }
        StationaryMethod::BirthDeath => {
            let mut st = birth_death(game, protocol, pop_size, mode)?;
            if pop_size as usize <= DENSE_LIMIT {
                let t = transition_matrix(game, protocol, pop_size, mode, DEFAULT_STATE_CAP)?;
                st.residual = Some(residual(&t, &st.mass));
            }
            Ok(st)
        }
        StationaryMethod::Empirical {
            burn_in,
            samples,
            seed,
        } => {
            if samples == 0 {
                return Err(Error::Precondition("empirical method needs samples".into()));
            }
            let n = game.num_actions();
            let start = GridState::nearest(&crate::simplex::SimplexPoint::barycenter(n), pop_size)?;
            let mut stepper = Stepper::new(game, protocol, &start, mode)?;
            let index = GridIndex::new(n, pop_size);
            if index.len() > DEFAULT_STATE_CAP {
                return Err(Error::CapExceeded {
                    states: index.len(),
                    cap: DEFAULT_STATE_CAP,
                });
            }
            let mut rng = stream_rng(seed, 0);
            for _ in 0..burn_in {
                stepper.step(&mut rng)?;
            }
            let mut visits = vec![0u64; index.len() as usize];
            for _ in 0..samples {
                stepper.step(&mut rng)?;
                visits[index.rank(stepper.counts())] += 1;
            }
            let mass = visits.iter().map(|&v| v as f64 / samples as f64).collect();
            Ok(Stationary::from_mass(index, mass, None))
        }
    }
}
