use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{increment_vector, law_at, Increment, IncrementLaw};
use crate::protocols::SwitchMatrix;
use crate::simplex::{dot, log_sum_exp, SimplexPoint};

const DEFAULT_MAX_N: u64 = 40;

/// `{z : lo ≤ ⟨normal, z⟩ ≤ hi}`; either bound may be infinite.
#[derive(Debug, Clone, Serialize)]
pub struct Slab {
    pub normal: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Slab {
    fn contains(&self, v: f64) -> bool {
        v >= self.lo - 1e-12 && v <= self.hi + 1e-12
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SanovRow {
    pub pop_size: u32,
    /// `log P(ζ̄^N ∈ V)`.
    pub log_probability: f64,
    /// `−(1/N) log P(ζ̄^N ∈ V)`.
    pub exact_rate: f64,
    /// `inf_{z ∈ V} L(x, z)`.
    pub inf_rate: f64,
    pub gap: f64,
}

fn binomial(n: u64, k: u64) -> u128 {
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c * (n as u128 - i) / (i + 1);
    }
    c
}

/// Number of compositions of `total` into `parts` nonnegative parts.
fn compositions(total: u64, parts: usize) -> u128 {
    binomial(total + parts as u64 - 1, parts as u64 - 1)
}

/// `inf_{z ∈ V} L(z)` through the one-dimensional transform of `⟨normal, ζ⟩`.
pub fn slab_rate(law: &IncrementLaw, slab: &Slab) -> f64 {
    let n = law.dim();
    let pts: Vec<(f64, f64)> = law
        .support()
        .map(|(a, p)| (dot(&slab.normal, &increment_vector(n, a)), p))
        .collect();
    let mean: f64 = pts.iter().map(|(v, p)| v * p).sum();
    if slab.contains(mean) {
        return 0.0;
    }
    // Reflect so that the target lies above the mean.
    let (b, sign) = if mean < slab.lo { (slab.lo, 1.0) } else { (-slab.hi, -1.0) };
    let pts: Vec<(f64, f64)> = pts.iter().map(|&(v, p)| (sign * v, p)).collect();
    let top = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if b > top + 1e-12 {
        return f64::INFINITY;
    }
    if b >= top - 1e-12 {
        let p: f64 = pts.iter().filter(|(v, _)| *v >= top - 1e-12).map(|p| p.1).sum();
        return -p.ln();
    }
    let lmgf = |t: f64| log_sum_exp(pts.iter().map(|&(v, p)| p.ln() + t * v));
    let tilted_mean = |t: f64| {
        let h = lmgf(t);
        pts.iter().map(|&(v, p)| v * (p.ln() + t * v - h).exp()).sum::<f64>()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while tilted_mean(hi) < b {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tilted_mean(mid) < b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    (t * b - lmgf(t)).max(0.0)
}

fn enumerate(
    atoms: &[(f64, f64)],
    remaining: u64,
    idx: usize,
    acc_log: f64,
    acc_val: f64,
    total: u64,
    log_fact: &[f64],
    slab: &Slab,
    out: &mut Vec<f64>,
) {
    let (v, p) = atoms[idx];
    if idx + 1 == atoms.len() {
        let c = remaining;
        let val = (acc_val + c as f64 * v) / total as f64;
        if slab.contains(val) {
            out.push(acc_log - log_fact[c as usize] + c as f64 * p.ln());
        }
        return;
    }
    for c in 0..=remaining {
        enumerate(
            atoms,
            remaining - c,
            idx + 1,
            acc_log - log_fact[c as usize] + c as f64 * p.ln(),
            acc_val + c as f64 * v,
            total,
            log_fact,
            slab,
            out,
        );
    }
}

/// Exact `P(ζ̄^N ∈ V)` for i.i.d. draws from `ν(·|x)`, by summing multinomial
/// weights over all empirical distributions, against `inf_V L(x,·)`.
///
/// `max_compositions` defaults to the number of compositions of 40 into
/// `|supp ν|` parts.
pub fn sanov_check(
    x: &SimplexPoint,
    sigma: &SwitchMatrix,
    pop_sizes: &[u32],
    target: &Slab,
    max_compositions: Option<u128>,
) -> Result<Vec<SanovRow>> {
    if sigma.dim() != x.dim() || target.normal.len() != x.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: target.normal.len(),
        });
    }
    let law = law_at(x.coords(), sigma);
    let support: Vec<(Increment, f64)> = law.support().collect();
    let cap = max_compositions.unwrap_or_else(|| compositions(DEFAULT_MAX_N, support.len()));
    let atoms: Vec<(f64, f64)> = support
        .iter()
        .map(|&(a, p)| (dot(&target.normal, &increment_vector(x.dim(), a)), p))
        .collect();
    let inf_rate = slab_rate(&law, target);
    pop_sizes
        .iter()
        .map(|&n| {
            let states = compositions(n as u64, atoms.len());
            if states > cap || n == 0 {
                return Err(Error::CapExceeded { states, cap });
            }
            let mut log_fact = vec![0.0; n as usize + 1];
            for k in 1..=n as usize {
                log_fact[k] = log_fact[k - 1] + (k as f64).ln();
            }
            let mut terms = Vec::new();
            enumerate(&atoms, n as u64, 0, log_fact[n as usize], 0.0, n as u64, &log_fact, target, &mut terms);
            let log_probability = log_sum_exp(terms);
            let exact_rate = -log_probability / n as f64;
            Ok(SanovRow {
                pop_size: n,
                log_probability,
                exact_rate,
                inf_rate,
                gap: (exact_rate - inf_rate).abs(),
            })
        })
        .collect()
}
