//! Relative entropy, the log moment generating function `H`, the Cramér
//! transform `L`, path costs, and the face-projection and path-surgery
//! constructions.

mod cost;
mod face;
mod primal;
mod sanov;
mod surgery;

pub use cost::{path_cost, PathCost};
pub use face::{face_project, FaceProjection};
pub use sanov::{sanov_check, slab_rate, SanovRow, Slab};
pub use surgery::{coarsen, path_surgery, path_surgery_with};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{increment_vector, law_at, Increment, IncrementLaw};
use crate::protocols::SwitchMatrix;
use crate::simplex::SimplexPoint;

const ZERO_TOL: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-10;
const DIVERGENCE_NORM: f64 = 1e3;
const MAX_NEWTON: usize = 200;
const MAX_STEP: f64 = 5.0;

/// `R(λ‖π) = Σ λ log(λ/π)` with `0 log 0 = 0`; `+∞` when `λ ≪ π` fails.
pub fn relative_entropy(lambda: &IncrementLaw, pi: &IncrementLaw) -> f64 {
    lambda
        .atoms()
        .zip(pi.atoms())
        .map(|((_, l), (_, p))| {
            if l <= 0.0 {
                0.0
            } else if p <= 0.0 {
                f64::INFINITY
            } else {
                l * (l / p).ln()
            }
        })
        .sum()
}

fn pairing(u: &[f64], z: Increment) -> f64 {
    match z {
        Some((i, j)) => u[j] - u[i],
        None => 0.0,
    }
}

/// `log Σ_a p_a e^{⟨u,a⟩}`, the tilted mean and the tilted covariance over an
/// explicit atom list.
fn tilt(atoms: &[(Increment, f64)], u: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let n = u.len();
    let exps: Vec<f64> = atoms.iter().map(|&(a, p)| p.ln() + pairing(u, a)).collect();
    let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = exps.iter().map(|e| (e - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let h = m + total.ln();
    let weights: Vec<f64> = w.iter().map(|v| v / total).collect();
    let mut mean = vec![0.0; n];
    let mut second = DMatrix::<f64>::zeros(n, n);
    for (&(a, _), &q) in atoms.iter().zip(&weights) {
        if let Some((i, j)) = a {
            mean[j] += q;
            mean[i] -= q;
            second[(i, i)] += q;
            second[(j, j)] += q;
            second[(i, j)] -= q;
            second[(j, i)] -= q;
        }
    }
    let mv = DVector::from_column_slice(&mean);
    let cov = second - &mv * mv.transpose();
    (h, mean, cov, weights)
}

/// `H(x,u)` and `∇_u H(x,u)` for the law `ν(·|x)` built from `sigma`.
pub fn log_mgf(x: &SimplexPoint, u: &[f64], sigma: &SwitchMatrix) -> Result<(f64, Vec<f64>)> {
    if u.len() != x.dim() || sigma.dim() != x.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: u.len(),
        });
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("u must be finite".into()));
    }
    Ok(log_mgf_law(&law_at(x.coords(), sigma), u))
}

/// `H` and its gradient for an arbitrary increment law.
pub fn log_mgf_law(law: &IncrementLaw, u: &[f64]) -> (f64, Vec<f64>) {
    let atoms: Vec<_> = law.support().collect();
    let (h, mean, _, _) = tilt(&atoms, u);
    (h, mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CramerMethod {
    #[default]
    Dual,
    PrimalOracle,
}

/// Where `z` sits relative to `Z(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    /// Relative interior of the support's hull; the full dual applies.
    Interior,
    /// A proper face; the problem was restricted to the face's atoms.
    Face,
    /// A single atom carries all the mass.
    Atom,
    /// Outside the hull: `L = +∞`.
    Infeasible,
}

#[derive(Debug, Clone, Serialize)]
pub struct CramerResult {
    pub value: f64,
    /// Maximizing `u*` of the (possibly face-restricted) dual problem.
    pub tilt: Option<Vec<f64>>,
    #[serde(skip)]
    pub minimizer: Option<IncrementLaw>,
    pub method: CramerMethod,
    pub feasibility: Feasibility,
    pub iterations: usize,
    pub residual: f64,
    /// A direction `d` with `⟨d, z⟩ > max_{a ∈ supp ν} ⟨d, a⟩` when infeasible.
    pub certificate: Option<Vec<f64>>,
}

impl CramerResult {
    fn infinite(method: CramerMethod, certificate: Vec<f64>) -> Self {
        Self {
            value: f64::INFINITY,
            tilt: None,
            minimizer: None,
            method,
            feasibility: Feasibility::Infeasible,
            iterations: 0,
            residual: f64::NAN,
            certificate: Some(certificate),
        }
    }
}

enum Reduced {
    Infeasible(Vec<f64>),
    Atoms(Vec<(Increment, f64)>, Feasibility),
}

fn unit(n: usize, k: usize, sign: f64) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[k] = sign;
    d
}

/// Shrinks the support of `law` to the atoms that any law with mean `z` must
/// use, or proves `z` infeasible.
fn reduce_support(law: &IncrementLaw, z: &[f64]) -> Reduced {
    let n = z.len();
    let mut atoms: Vec<(Increment, f64)> = law.support().collect();
    let mut feasibility = Feasibility::Interior;
    let plus: f64 = z.iter().filter(|v| **v > 0.0).sum();
    if plus > 1.0 + ZERO_TOL {
        let d = z.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        return Reduced::Infeasible(d);
    }
    if plus >= 1.0 - ZERO_TOL {
        // Only switches from a shrinking to a growing action reach Σz₊ = 1.
        atoms.retain(|&(a, _)| matches!(a, Some((i, j)) if z[i] < -ZERO_TOL && z[j] > ZERO_TOL));
        feasibility = Feasibility::Face;
    }
    loop {
        let before = atoms.len();
        for k in 0..n {
            let has_out = atoms.iter().any(|&(a, _)| matches!(a, Some((i, _)) if i == k));
            let has_in = atoms.iter().any(|&(a, _)| matches!(a, Some((_, j)) if j == k));
            if !has_out && z[k] < -ZERO_TOL {
                return Reduced::Infeasible(unit(n, k, -1.0));
            }
            if !has_in && z[k] > ZERO_TOL {
                return Reduced::Infeasible(unit(n, k, 1.0));
            }
            if !has_out && z[k].abs() <= ZERO_TOL {
                atoms.retain(|&(a, _)| !matches!(a, Some((_, j)) if j == k));
            }
            if !has_in && z[k].abs() <= ZERO_TOL {
                atoms.retain(|&(a, _)| !matches!(a, Some((i, _)) if i == k));
            }
        }
        if atoms.len() == before {
            break;
        }
        feasibility = Feasibility::Face;
    }
    if atoms.is_empty() {
        return Reduced::Infeasible(z.to_vec());
    }
    if atoms.len() == 1 {
        let a = increment_vector(n, atoms[0].0);
        if crate::simplex::l1(&a, z) > 1e-9 {
            let d: Vec<f64> = z.iter().zip(&a).map(|(p, q)| p - q).collect();
            return Reduced::Infeasible(d);
        }
        feasibility = Feasibility::Atom;
    }
    Reduced::Atoms(atoms, feasibility)
}

fn law_from_atoms(n: usize, atoms: &[(Increment, f64)]) -> IncrementLaw {
    let mut off = vec![0.0; n * n];
    let mut null = 0.0;
    for &(a, p) in atoms {
        match a {
            Some((i, j)) => off[i * n + j] = p,
            None => null = p,
        }
    }
    IncrementLaw::from_parts(n, off, null)
}

/// The only law on `atoms` with mean `z`, when the atoms are affinely
/// independent and that law is strictly positive. The dual optimum then sits
/// at infinity along directions the masses do not see, so Newton is avoided.
fn pinned_law(atoms: &[(Increment, f64)], z: &[f64]) -> Option<Vec<f64>> {
    let n = z.len();
    let m = atoms.len();
    let mut b = DMatrix::<f64>::zeros(n + 1, m);
    for (c, &(a, _)) in atoms.iter().enumerate() {
        b[(0, c)] = 1.0;
        for (r, v) in increment_vector(n, a).into_iter().enumerate() {
            b[(r + 1, c)] = v;
        }
    }
    // The Gram matrix has integer entries, so singularity is clear-cut.
    let gram = b.transpose() * &b;
    let eig = SymmetricEigen::new(gram.clone());
    let emax = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&e| e <= 1e-9 * emax) {
        return None;
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    rhs[0] = 1.0;
    for (r, v) in z.iter().enumerate() {
        rhs[r + 1] = *v;
    }
    let lambda = gram.cholesky()?.solve(&(b.transpose() * &rhs));
    if (&b * &lambda - &rhs).amax() > 1e-12 || lambda.iter().any(|&l| l <= 0.0) {
        return None;
    }
    Some(lambda.iter().copied().collect())
}

/// Newton ascent of `⟨u,z⟩ − H(u)` over `R^n_0`, with a pseudo-inverse of the
/// tilted covariance and Armijo backtracking.
fn dual_newton(atoms: &[(Increment, f64)], z: &[f64]) -> std::result::Result<(Vec<f64>, f64, usize, f64), Vec<f64>> {
    let n = z.len();
    let mut u = vec![0.0; n];
    let objective = |u: &[f64]| -> f64 {
        let (h, _, _, _) = tilt(atoms, u);
        crate::simplex::dot(u, z) - h
    };
    let mut value = objective(&u);
    for it in 0..MAX_NEWTON {
        let (h, mean, cov, _) = tilt(atoms, &u);
        value = crate::simplex::dot(&u, z) - h;
        let g: Vec<f64> = z.iter().zip(&mean).map(|(a, b)| a - b).collect();
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= GRAD_TOL {
            return Ok((u, value, it, gnorm));
        }
        let eig = SymmetricEigen::new(cov);
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let gv = DVector::from_column_slice(&g);
        let mut d = DVector::<f64>::zeros(n);
        let mut blind = DVector::<f64>::zeros(n);
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            if lam > 1e-12 * lmax.max(1e-300) {
                d += v * (v.dot(&gv) / lam);
            } else {
                blind += v * v.dot(&gv);
            }
        }
        // Atoms too light to register in the covariance still pull on the
        // gradient; the objective is nearly linear along them, so follow the
        // gradient there with a long step and let the line search trim it.
        let blind = crate::simplex::project_tangent(blind.as_slice());
        let reach = blind.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if reach > GRAD_TOL {
            for (a, b) in d.iter_mut().zip(&blind) {
                *a += b * MAX_STEP / reach;
            }
        }
        let mut d = crate::simplex::project_tangent(d.as_slice());
        // A long first step can wipe out the weight of a whole group of atoms
        // and leave the covariance blind to it.
        let longest = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if longest > MAX_STEP {
            d.iter_mut().for_each(|v| *v *= MAX_STEP / longest);
        }
        let slope = crate::simplex::dot(&g, &d);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let tv = objective(&trial);
            if tv >= value + 1e-4 * step * slope {
                u = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let unorm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if unorm > DIVERGENCE_NORM {
            return Err(u.iter().map(|v| v / unorm).collect());
        }
        if !accepted {
            let (h, mean, _, _) = tilt(atoms, &u);
            let g: f64 = z.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            return Ok((u.clone(), crate::simplex::dot(&u, z) - h, it, g));
        }
    }
    let (h, mean, _, _) = tilt(atoms, &u);
    let g: f64 = z.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let _ = value;
    Ok((u.clone(), crate::simplex::dot(&u, z) - h, MAX_NEWTON, g))
}

/// `L(x,z)` for an explicit increment law.
pub fn cramer_law(law: &IncrementLaw, z: &[f64], method: CramerMethod) -> Result<CramerResult> {
    let n = law.dim();
    if z.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: z.len(),
        });
    }
    let sum: f64 = z.iter().sum();
    if sum.abs() > 1e-10 || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("direction must be tangent, sums to {sum}")));
    }
    let z = crate::simplex::project_tangent(z);
    let (atoms, feasibility) = match reduce_support(law, &z) {
        Reduced::Infeasible(d) => return Ok(CramerResult::infinite(method, d)),
        Reduced::Atoms(a, f) => (a, f),
    };
    if feasibility == Feasibility::Atom {
        let (a, p) = atoms[0];
        return Ok(CramerResult {
            value: -p.ln(),
            tilt: None,
            minimizer: Some(law_from_atoms(n, &[(a, 1.0)])),
            method,
            feasibility,
            iterations: 0,
            residual: 0.0,
            certificate: None,
        });
    }
    if method == CramerMethod::Dual {
        if let Some(lambda) = pinned_law(&atoms, &z) {
            let value: f64 = lambda
                .iter()
                .zip(&atoms)
                .filter(|(l, _)| **l > 0.0)
                .map(|(l, (_, p))| l * (l / p).ln())
                .sum();
            let fitted: Vec<(Increment, f64)> = atoms.iter().zip(&lambda).map(|(&(a, _), &l)| (a, l)).collect();
            return Ok(CramerResult {
                value: value.max(0.0),
                tilt: None,
                minimizer: Some(law_from_atoms(n, &fitted)),
                method,
                feasibility,
                iterations: 0,
                residual: 0.0,
                certificate: None,
            });
        }
    }
    match method {
        CramerMethod::Dual => match dual_newton(&atoms, &z) {
            Ok((u, value, iterations, residual)) => {
                if residual > 1e-6 {
                    return Err(Error::NotConverged { residual });
                }
                let (_, _, _, weights) = tilt(&atoms, &u);
                let tilted: Vec<(Increment, f64)> =
                    atoms.iter().zip(&weights).map(|(&(a, _), &w)| (a, w)).collect();
                Ok(CramerResult {
                    value: value.max(0.0),
                    tilt: Some(u),
                    minimizer: Some(law_from_atoms(n, &tilted)),
                    method,
                    feasibility,
                    iterations,
                    residual,
                    certificate: None,
                })
            }
            Err(direction) => Ok(CramerResult::infinite(method, direction)),
        },
        CramerMethod::PrimalOracle => {
            let (lambda, iterations, residual) = primal::minimize(&atoms, &z)?;
            let value: f64 = lambda
                .iter()
                .zip(&atoms)
                .filter(|(l, _)| **l > 0.0)
                .map(|(l, (_, p))| l * (l / p).ln())
                .sum();
            let tilted: Vec<(Increment, f64)> =
                atoms.iter().zip(&lambda).map(|(&(a, _), &l)| (a, l)).collect();
            Ok(CramerResult {
                value: value.max(0.0),
                tilt: None,
                minimizer: Some(law_from_atoms(n, &tilted)),
                method,
                feasibility,
                iterations,
                residual,
                certificate: None,
            })
        }
    }
}

/// `L(x,z) = sup_u (⟨u,z⟩ − H(x,u))` for the law `ν(·|x)` built from `sigma`.
pub fn cramer_transform(
    x: &SimplexPoint,
    z: &[f64],
    sigma: &SwitchMatrix,
    method: CramerMethod,
) -> Result<CramerResult> {
    if sigma.dim() != x.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: sigma.dim(),
        });
    }
    cramer_law(&law_at(x.coords(), sigma), z, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{Evaluation, GameSpec};
    use crate::protocols::{switch_matrix, ProtocolSpec};

    fn setup(x: &[f64]) -> (SimplexPoint, SwitchMatrix) {
        let g = GameSpec::three_link_congestion();
        let x = SimplexPoint::new(x.to_vec()).unwrap();
        let s = switch_matrix(&g, &ProtocolSpec::logit(0.25), &x, Evaluation::Limit).unwrap();
        (x, s)
    }

    fn setup_eta(x: &[f64], eta: f64) -> (SimplexPoint, SwitchMatrix) {
        let g = GameSpec::three_link_congestion();
        let x = SimplexPoint::from_weights(x).unwrap();
        let s = switch_matrix(&g, &ProtocolSpec::logit(eta), &x, Evaluation::Limit).unwrap();
        (x, s)
    }

    #[test]
    fn negligible_atoms_do_not_stall_either_method() {
        // At low noise some atoms carry mass near 1e-17: the covariance
        // cannot see them and the primal Hessian reaches 1e20.
        let cases: [([f64; 3], [f64; 3]); 3] = [
            ([0.99236, 0.16022, 0.06541], [0.046363, -0.121507, 0.075144]),
            ([0.12845, 0.39835, 0.08347], [0.10625, -0.21716, 0.11091]),
            ([0.28397, 0.70716, 0.08988], [-0.05, 0.2, -0.15]),
        ];
        for (w, z) in cases {
            let (x, s) = setup_eta(&w, 0.05);
            let d = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap();
            let p = cramer_transform(&x, &z, &s, CramerMethod::PrimalOracle).unwrap();
            assert!((d.value - p.value).abs() < 1e-9 * d.value.max(1.0), "{w:?}: {} vs {}", d.value, p.value);
        }
    }

    #[test]
    fn primal_stays_on_the_constraint_set() {
        // A rank-deficient KKT matrix on which a general SVD loses accuracy.
        let (x, s) = setup_eta(&[0.62635, 0.90273, 0.65684], 0.25);
        let z = [0.127205, -0.11577, -0.011435];
        let p = cramer_transform(&x, &z, &s, CramerMethod::PrimalOracle).unwrap();
        let mean = p.minimizer.unwrap().mean();
        for (a, b) in mean.iter().zip(z) {
            assert!((a - b).abs() < 1e-10, "{mean:?}");
        }
        let d = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap();
        assert!((d.value - p.value).abs() < 1e-9);
    }

    #[test]
    fn relative_entropy_conventions() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        let nu = law_at(x.coords(), &s);
        assert_eq!(relative_entropy(&nu, &nu), 0.0);
        let delta = law_from_atoms(3, &[(Some((0, 1)), 1.0)]);
        assert!((relative_entropy(&delta, &nu) + nu.mass(0, 1).ln()).abs() < 1e-15);
        let (y, t) = setup(&[0.0, 0.5, 0.5]);
        let nu0 = law_at(y.coords(), &t);
        assert_eq!(relative_entropy(&delta, &nu0), f64::INFINITY);
    }

    #[test]
    fn mgf_at_zero_and_shift_invariance() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        let (h, g) = log_mgf(&x, &[0.0; 3], &s).unwrap();
        assert!(h.abs() < 1e-15);
        let mean = law_at(x.coords(), &s).mean();
        assert!(crate::simplex::l1(&g, &mean) < 1e-15);
        let u = [0.3, -1.2, 0.7];
        let (h1, _) = log_mgf(&x, &u, &s).unwrap();
        let (h2, _) = log_mgf(&x, &[u[0] + 5.0, u[1] + 5.0, u[2] + 5.0], &s).unwrap();
        assert!((h1 - h2).abs() < 1e-13);
    }

    #[test]
    fn mgf_gradient_matches_finite_differences() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        let u = [0.4, -0.8, 0.1];
        let (_, g) = log_mgf(&x, &u, &s).unwrap();
        let h = 1e-5;
        for k in 0..3 {
            let mut up = u;
            let mut dn = u;
            up[k] += h;
            dn[k] -= h;
            let fd = (log_mgf(&x, &up, &s).unwrap().0 - log_mgf(&x, &dn, &s).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_at_mean_increment() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        let mean = law_at(x.coords(), &s).mean();
        let r = cramer_transform(&x, &mean, &s, CramerMethod::Dual).unwrap();
        assert!(r.value <= 1e-10);
    }

    #[test]
    fn single_switch_closed_form() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        for (i, j) in [(0, 1), (2, 0), (1, 2)] {
            let z = increment_vector(3, Some((i, j)));
            let r = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap();
            let expect = -(x.coords()[i] * s.get(i, j)).ln();
            assert!((r.value - expect).abs() < 1e-9);
            assert_eq!(r.feasibility, Feasibility::Atom);
        }
    }

    #[test]
    fn leaving_unused_action_is_infeasible() {
        let (x, s) = setup(&[0.0, 0.4, 0.6]);
        let r = cramer_transform(&x, &[-0.1, 0.05, 0.05], &s, CramerMethod::Dual).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        let d = r.certificate.unwrap();
        assert!(crate::simplex::dot(&d, &[-0.1, 0.05, 0.05]) > 0.0);
    }

    #[test]
    fn too_fast_is_infeasible() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        let z = [-1.2, 0.6, 0.6];
        let r = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        assert!(crate::simplex::dot(&r.certificate.unwrap(), &z) > 1.0);
    }

    #[test]
    fn tilted_law_has_mean_z_and_entropy_l() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        let nu = law_at(x.coords(), &s);
        let z = [0.1, -0.25, 0.15];
        let r = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap();
        let lam = r.minimizer.unwrap();
        assert!(crate::simplex::l1(&lam.mean(), &z) < 1e-8);
        assert!((relative_entropy(&lam, &nu) - r.value).abs() < 1e-8);
    }

    #[test]
    fn face_case_matches_primal() {
        // x_3 = 0 and z_3 = 0: no mass may flow into action 3.
        let (x, s) = setup(&[0.5, 0.5, 0.0]);
        let z = [0.2, -0.2, 0.0];
        let d = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap();
        let p = cramer_transform(&x, &z, &s, CramerMethod::PrimalOracle).unwrap();
        assert_eq!(d.feasibility, Feasibility::Face);
        assert!((d.value - p.value).abs() < 1e-8, "{} vs {}", d.value, p.value);
    }

    #[test]
    fn dual_and_primal_agree_in_interior() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        for z in [[0.1, -0.25, 0.15], [-0.3, 0.1, 0.2], [0.0, 0.0, 0.0]] {
            let d = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap();
            let p = cramer_transform(&x, &z, &s, CramerMethod::PrimalOracle).unwrap();
            assert!((d.value - p.value).abs() < 1e-6, "{z:?}: {} vs {}", d.value, p.value);
        }
    }

    #[test]
    fn sum_plus_one_face() {
        let (x, s) = setup(&[0.2, 0.3, 0.5]);
        let z = [-0.6, 1.0, -0.4];
        let d = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap();
        let p = cramer_transform(&x, &z, &s, CramerMethod::PrimalOracle).unwrap();
        assert_eq!(d.feasibility, Feasibility::Face);
        assert!((d.value - p.value).abs() < 1e-8);
    }
}
