//! The finite-population chain `X^N`: transition law, simulation,
//! stationary distributions and exit times.

mod exit;
mod simulate;
mod stationary;

pub use exit::{exit_time_mc, ExitProblem, ExitSummary, Region};
pub use simulate::{simulate_path, transition_frequencies, Stepper};
pub(crate) use simulate::simulate_with;
pub use stationary::{
    stationary_distribution, transition_matrix, Stationary, StationaryMethod, Transitions,
    DEFAULT_STATE_CAP,
};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::protocols::SwitchMatrix;
use crate::simplex::{SimplexPoint, KahanSum};

/// Law of one raw increment `ζ` of the chain: mass on `e_j − e_i` for
/// `i ≠ j` and on the null increment.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementLaw {
    n: usize,
    off: Vec<f64>,
    null: f64,
}

/// One atom of an increment law: `Some((i, j))` is `e_j − e_i`, `None` is 0.
pub type Increment = Option<(usize, usize)>;

impl IncrementLaw {
    /// Builds a law from off-diagonal weights (diagonal ignored) and the null
    /// mass.
    pub fn new(n: usize, mut off: Vec<f64>, null: f64) -> Result<Self> {
        if off.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: off.len(),
            });
        }
        for i in 0..n {
            off[i * n + i] = 0.0;
        }
        if off.iter().chain([&null]).any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidState("increment masses must be nonnegative".into()));
        }
        let total: f64 = off.iter().sum::<f64>() + null;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("increment law has mass {total}")));
        }
        Ok(Self { n, off, null })
    }

    pub(crate) fn from_parts(n: usize, off: Vec<f64>, null: f64) -> Self {
        Self { n, off, null }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Mass on `e_j − e_i` (`i ≠ j`).
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.off[i * self.n + j]
        }
    }

    pub fn null_mass(&self) -> f64 {
        self.null
    }

    pub fn prob(&self, z: Increment) -> f64 {
        match z {
            Some((i, j)) => self.mass(i, j),
            None => self.null,
        }
    }

    /// All atoms of `𝒵`, null increment first, then `e_j − e_i` row-major.
    pub fn atoms(&self) -> impl Iterator<Item = (Increment, f64)> + '_ {
        std::iter::once((None, self.null)).chain((0..self.n).flat_map(move |i| {
            (0..self.n)
                .filter(move |&j| j != i)
                .map(move |j| (Some((i, j)), self.off[i * self.n + j]))
        }))
    }

    /// Atoms with positive mass.
    pub fn support(&self) -> impl Iterator<Item = (Increment, f64)> + '_ {
        self.atoms().filter(|(_, p)| *p > 0.0)
    }

    /// `E ζ`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                let p = self.mass(i, j);
                m[j] += p;
                m[i] -= p;
            }
        }
        m
    }

    /// Whether every atom with mass lies in `𝒵(x)`.
    pub fn respects_support_of(&self, x: &[f64]) -> bool {
        self.support().all(|(z, _)| match z {
            Some((i, _)) => x[i] > 0.0,
            None => true,
        })
    }
}

/// Displacement of an atom as a vector.
pub fn increment_vector(n: usize, z: Increment) -> Vec<f64> {
    let mut v = vec![0.0; n];
    if let Some((i, j)) = z {
        v[i] -= 1.0;
        v[j] += 1.0;
    }
    v
}

pub(crate) fn law_at(x: &[f64], sigma: &SwitchMatrix) -> IncrementLaw {
    let n = x.len();
    let mut off = vec![0.0; n * n];
    let mut null = KahanSum::default();
    for i in 0..n {
        for j in 0..n {
            let p = x[i] * sigma.get(i, j);
            if i == j {
                null.add(p);
            } else {
                off[i * n + j] = p;
            }
        }
    }
    IncrementLaw::from_parts(n, off, null.value())
}

/// `ν(e_j − e_i | x) = x_i σ_ij`, null mass `Σ_i x_i σ_ii`.
pub fn increment_law(x: &SimplexPoint, sigma: &SwitchMatrix) -> Result<IncrementLaw> {
    if sigma.dim() != x.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: sigma.dim(),
        });
    }
    Ok(law_at(x.coords(), sigma))
}

/// A time-stamped trajectory through the simplex, read as piecewise affine
/// between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    step: f64,
    piecewise_affine: bool,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>, step: f64) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::InvalidState("times and states must match and be nonempty".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidState("times must increase strictly".into()));
        }
        for s in &states {
            SimplexPoint::new(s.clone())?;
        }
        Ok(Self::from_parts(times, states, step))
    }

    pub(crate) fn from_parts(times: Vec<f64>, states: Vec<Vec<f64>>, step: f64) -> Self {
        Self {
            times,
            states,
            step,
            piecewise_affine: true,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn is_piecewise_affine(&self) -> bool {
        self.piecewise_affine
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn start(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("paths are nonempty")
    }

    /// Interpolated state at time `t`, clamped to the sampled interval.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k == self.times.len() {
            return self.terminal().to_vec();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.states[k - 1]
            .iter()
            .zip(&self.states[k])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// `sup_t |self(t) − other(t)|₁` over the sample times of both paths
    /// (exact for two piecewise-affine paths on a common interval).
    pub fn sup_distance(&self, other: &SampledPath) -> f64 {
        let own = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| crate::simplex::l1(s, &other.at(t)));
        let theirs = other
            .times
            .iter()
            .zip(&other.states)
            .map(|(&t, s)| crate::simplex::l1(s, &self.at(t)));
        own.chain(theirs).fold(0.0, f64::max)
    }

    /// Time reversal onto `[−T, 0]`.
    pub fn reversed(&self) -> SampledPath {
        let start = self.times[0];
        let times = self.times.iter().rev().map(|t| start - t).collect();
        let states = self.states.iter().rev().cloned().collect();
        SampledPath::from_parts(times, states, self.step)
    }

    /// CSV with header `time,x1,..,xn`, preceded by `# key=value` lines.
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("time");
        for i in 1..=self.dim() {
            let _ = write!(out, ",x{i}");
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t}");
            for v in s {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{Evaluation, GameSpec};
    use crate::protocols::{switch_matrix, ProtocolSpec};

    #[test]
    fn symmetric_two_action_law() {
        let sigma = SwitchMatrix::uniform(2);
        let law = increment_law(&SimplexPoint::barycenter(2), &sigma).unwrap();
        assert_eq!(law.mass(0, 1), 0.25);
        assert_eq!(law.mass(1, 0), 0.25);
        assert_eq!(law.null_mass(), 0.5);
    }

    #[test]
    fn vertex_has_no_outflow_from_unused_actions() {
        let g = GameSpec::three_link_congestion();
        let p = ProtocolSpec::logit(0.25);
        let x = SimplexPoint::vertex(3, 0);
        let sigma = switch_matrix(&g, &p, &x, Evaluation::Limit).unwrap();
        let law = increment_law(&x, &sigma).unwrap();
        for i in 1..3 {
            for j in 0..3 {
                assert_eq!(law.mass(i, j), 0.0);
            }
        }
        assert!(law.mass(0, 1) > 0.0);
        assert!(law.respects_support_of(x.coords()));
    }

    #[test]
    fn congestion_nash_law_is_share_over_three() {
        let g = GameSpec::three_link_congestion();
        let p = ProtocolSpec::logit(0.25);
        let x = SimplexPoint::from_weights(&[3.0, 4.0, 1.0]).unwrap();
        let sigma = switch_matrix(&g, &p, &x, Evaluation::Limit).unwrap();
        let law = increment_law(&x, &sigma).unwrap();
        for i in 0..3 {
            for j in (0..3).filter(|&j| j != i) {
                assert!((law.mass(i, j) - x.coords()[i] / 3.0).abs() < 1e-15);
            }
        }
        let total: f64 = law.atoms().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn path_interpolation_and_reversal() {
        let p = SampledPath::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]],
            1.0,
        )
        .unwrap();
        assert_eq!(p.at(0.5), vec![0.75, 0.25]);
        assert_eq!(p.at(9.0), vec![0.5, 0.5]);
        let r = p.reversed();
        assert_eq!(r.times(), &[-2.0, -1.0, 0.0]);
        assert_eq!(r.terminal(), &[1.0, 0.0]);
        assert!(SampledPath::new(vec![0.0, 0.0], vec![vec![1.0, 0.0]; 2], 1.0).is_err());
    }
}
