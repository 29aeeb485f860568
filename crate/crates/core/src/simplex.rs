//! Population states on the simplex and on the finite grid `X ∩ (1/N)Z^n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance accepted on the coordinate sum of user-supplied states before
/// they are renormalized.
pub const INPUT_SUM_TOL: f64 = 1e-9;

/// A population state: nonnegative shares summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    /// Validates `coords` (sum within `INPUT_SUM_TOL` of one, entries
    /// nonnegative, at least two actions) and renormalizes exactly.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidState(format!(
                "need at least two actions, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidState(format!(
                "coordinates must be finite and nonnegative: {coords:?}"
            )));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > INPUT_SUM_TOL {
            return Err(Error::InvalidState(format!(
                "coordinates sum to {sum}, not 1"
            )));
        }
        Ok(Self::renormalized(coords))
    }

    /// Builds a state from nonnegative weights by dividing by their total.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.len() < 2 || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidState(format!("bad weights {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidState("weights sum to zero".into()));
        }
        Ok(Self::renormalized(weights.iter().map(|w| w / sum).collect()))
    }

    fn renormalized(mut coords: Vec<f64>) -> Self {
        let sum: f64 = coords.iter().sum();
        for c in coords.iter_mut() {
            *c /= sum;
        }
        Self { coords }
    }

    /// Pure state `e_i` in an `n`-action game.
    pub fn vertex(n: usize, i: usize) -> Self {
        let mut coords = vec![0.0; n];
        coords[i] = 1.0;
        Self { coords }
    }

    /// Barycenter `(1/n, ..., 1/n)`.
    pub fn barycenter(n: usize) -> Self {
        Self {
            coords: vec![1.0 / n as f64; n],
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Indices of actions in use.
    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.coords[i] > 0.0).collect()
    }

    pub fn is_interior(&self) -> bool {
        self.coords.iter().all(|&c| c > 0.0)
    }

    pub fn l1_distance(&self, other: &SimplexPoint) -> f64 {
        l1(&self.coords, &other.coords)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SimplexPoint::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.coords
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

/// A state of the `N`-agent chain, stored as integer counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    counts: Vec<u32>,
    pop_size: u32,
}

impl GridState {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidState("need at least two actions".into()));
        }
        let pop_size: u64 = counts.iter().map(|&c| c as u64).sum();
        if pop_size == 0 || pop_size > u32::MAX as u64 {
            return Err(Error::InvalidState(format!(
                "population size {pop_size} out of range"
            )));
        }
        Ok(Self {
            counts,
            pop_size: pop_size as u32,
        })
    }

    /// Nearest grid state to `x` (largest-remainder rounding, ties to the
    /// lower action index).
    pub fn nearest(x: &SimplexPoint, pop_size: u32) -> Result<Self> {
        if pop_size == 0 {
            return Err(Error::InvalidState("population size must be positive".into()));
        }
        let scaled: Vec<f64> = x.coords().iter().map(|c| c * pop_size as f64).collect();
        let mut counts: Vec<u32> = scaled.iter().map(|s| s.floor() as u32).collect();
        let assigned: u32 = counts.iter().sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = scaled[a] - scaled[a].floor();
            let rb = scaled[b] - scaled[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().take((pop_size - assigned) as usize) {
            counts[i] += 1;
        }
        GridState::new(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn pop_size(&self) -> u32 {
        self.pop_size
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn to_point(&self) -> SimplexPoint {
        let n = self.pop_size as f64;
        SimplexPoint {
            coords: self.counts.iter().map(|&c| c as f64 / n).collect(),
        }
    }

    /// Moves one agent from `from` to `to`; `None` if `from` is unused.
    pub fn switched(&self, from: usize, to: usize) -> Option<GridState> {
        if self.counts[from] == 0 {
            return None;
        }
        let mut counts = self.counts.clone();
        counts[from] -= 1;
        counts[to] += 1;
        Some(GridState {
            counts,
            pop_size: self.pop_size,
        })
    }
}

/// Lexicographic enumeration of `X^N`: compositions of `N` into `n` parts
/// ordered by their count vectors.
#[derive(Debug, Clone)]
pub struct GridIndex {
    n: usize,
    pop_size: u32,
    // binom[m][k] = number of compositions of m into k parts, m ≤ N, k ≤ n
    compositions: Vec<Vec<u128>>,
}

impl GridIndex {
    pub fn new(n: usize, pop_size: u32) -> Self {
        let big_n = pop_size as usize;
        let mut compositions = vec![vec![0u128; n + 1]; big_n + 1];
        for row in compositions.iter_mut() {
            row[1] = 1;
        }
        // Split on whether the first part is zero.
        for m in 0..=big_n {
            for k in 2..=n {
                let rest = if m > 0 { compositions[m - 1][k] } else { 0 };
                compositions[m][k] = compositions[m][k - 1].saturating_add(rest);
            }
        }
        Self {
            n,
            pop_size,
            compositions,
        }
    }

    /// `|X^N| = C(N + n - 1, n - 1)`.
    pub fn len(&self) -> u128 {
        self.compositions[self.pop_size as usize][self.n]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pop_size(&self) -> u32 {
        self.pop_size
    }

    pub fn rank(&self, counts: &[u32]) -> usize {
        let mut remaining = self.pop_size as usize;
        let mut idx = 0u128;
        for (pos, &c) in counts.iter().enumerate().take(self.n - 1) {
            let parts = self.n - pos - 1;
            // Σ_{f<c} comp(remaining − f, parts) telescopes.
            idx += self.compositions[remaining][parts + 1]
                - self.compositions[remaining - c as usize][parts + 1];
            remaining -= c as usize;
        }
        idx as usize
    }

    pub fn unrank(&self, mut idx: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.n];
        let mut remaining = self.pop_size as usize;
        for pos in 0..self.n - 1 {
            let parts = self.n - pos - 1;
            let mut first = 0usize;
            loop {
                let block = self.compositions[remaining - first][parts] as usize;
                if idx < block {
                    break;
                }
                idx -= block;
                first += 1;
            }
            counts[pos] = first as u32;
            remaining -= first;
        }
        counts[self.n - 1] = remaining as u32;
        counts
    }

    /// All grid states in index order.
    pub fn states(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        (0..self.len() as usize).map(move |i| self.unrank(i))
    }
}

/// Compensated summation; the result does not depend on accumulation order
/// beyond rounding of the compensation term.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        for v in iter {
            k.add(v);
        }
        k
    }
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Orthogonal projection onto the tangent space `R^n_0`.
pub fn project_tangent(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log Σ exp(v_i)` computed with max-subtraction.
pub fn log_sum_exp(v: impl IntoIterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = v.into_iter().collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Deterministic mesh `{k / m : Σ k = m}` of the simplex, in grid order.
pub fn simplex_mesh(n: usize, resolution: u32) -> Vec<SimplexPoint> {
    let index = GridIndex::new(n, resolution);
    index
        .states()
        .map(|c| GridState::new(c).expect("mesh composition").to_point())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_points() {
        assert!(SimplexPoint::new(vec![1.0]).is_err());
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1]).is_err());
        let p = SimplexPoint::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(p.coords(), &[0.25, 0.75]);
    }

    #[test]
    fn grid_index_round_trip() {
        let idx = GridIndex::new(3, 7);
        assert_eq!(idx.len(), 36);
        let mut prev: Option<Vec<u32>> = None;
        for (i, c) in idx.states().enumerate() {
            assert_eq!(c.iter().sum::<u32>(), 7);
            assert_eq!(idx.rank(&c), i);
            if let Some(p) = prev {
                assert!(p < c, "lexicographic order");
            }
            prev = Some(c);
        }
    }

    #[test]
    fn two_action_index_is_first_count() {
        let idx = GridIndex::new(2, 10);
        for k in 0..=10u32 {
            assert_eq!(idx.rank(&[k, 10 - k]), k as usize);
        }
    }

    #[test]
    fn nearest_grid_state_sums_to_n() {
        let x = SimplexPoint::from_weights(&[0.3563, 0.4482, 0.1956]).unwrap();
        let g = GridState::nearest(&x, 100).unwrap();
        assert_eq!(g.counts(), &[36, 45, 19]);
    }

    #[test]
    fn kahan_matches_exact_small_sum() {
        let s: KahanSum = std::iter::repeat_n(0.1, 10).collect();
        assert!((s.value() - 1.0).abs() < 1e-15);
    }
}
