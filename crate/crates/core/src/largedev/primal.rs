//! Direct minimization of `R(λ‖ν)` over laws with a prescribed mean. Slow
//! and independent of the dual; used to cross-check it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::process::{increment_vector, Increment};

const MAX_NEWTON: usize = 500;
/// Largest violation of the mean constraint accepted at the optimum.
const FEASIBILITY_TOL: f64 = 1e-10;
/// Squared decrement below which full Newton steps are taken without a line
/// search; there the predicted decrease is under the objective's rounding.
const PURE_NEWTON: f64 = 1e-12;

/// Constraint matrix `B` (total mass and mean) and right-hand side.
fn constraints(atoms: &[(Increment, f64)], z: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = z.len();
    let m = atoms.len();
    let mut b = DMatrix::<f64>::zeros(n + 1, m);
    for (c, &(a, _)) in atoms.iter().enumerate() {
        b[(0, c)] = 1.0;
        for (k, v) in increment_vector(n, a).into_iter().enumerate() {
            b[(k + 1, c)] = v;
        }
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    rhs[0] = 1.0;
    for k in 0..n {
        rhs[k + 1] = z[k];
    }
    (b, rhs)
}

/// Minimum-norm solution of `m x = r` for symmetric positive semidefinite
/// `m`, dropping eigenvalues below a relative threshold.
fn eigen_solve(m: DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(m);
    let tol = 1e-13 * eig.eigenvalues.amax();
    let mut x = DVector::<f64>::zeros(r.len());
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        if e > tol {
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(r) / e);
        }
    }
    x
}

/// A strictly positive point of `{Bλ = rhs}` by alternating projections
/// between the affine set and `{λ ≥ floor}`, lowering the floor on failure.
fn interior_start(
    b: &DMatrix<f64>,
    rhs: &DVector<f64>,
    pinv: &DMatrix<f64>,
    proj: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let m = b.ncols();
    let onto_affine = |v: &DVector<f64>| -> DVector<f64> {
        let particular = pinv * rhs;
        &particular + proj * (v - &particular)
    };
    let mut floor = 0.1 / m as f64;
    while floor > 1e-14 {
        // Dykstra's scheme keeps the iterate near the projection of the start.
        let mut v = DVector::from_element(m, 1.0 / m as f64);
        let mut p = DVector::<f64>::zeros(m);
        let mut q = DVector::<f64>::zeros(m);
        for _ in 0..5000 {
            let y = onto_affine(&(&v + &p));
            p = &v + &p - &y;
            let w = (&y + &q).map(|c| c.max(floor));
            q = &y + &q - &w;
            v = w;
            let a = onto_affine(&v);
            if a.iter().all(|&c| c > 0.0) && (b * &a - rhs).amax() < 1e-13 {
                return Ok(a);
            }
        }
        floor *= 0.01;
    }
    Err(Error::Precondition("no strictly positive law with this mean".into()))
}

/// Newton's method in the affine feasible set, with step control keeping
/// every weight positive. The step solves the KKT system through
/// `(BΛBᵀ)ν = BΛg`, `d = −Λ(g − Bᵀν)`, which stays well scaled when some
/// weights are tiny. Returns weights, iterations and the final Newton
/// decrement.
pub(super) fn minimize(atoms: &[(Increment, f64)], z: &[f64]) -> Result<(Vec<f64>, usize, f64)> {
    let (b, rhs) = constraints(atoms, z);
    let m = atoms.len();
    let pinv = b
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Precondition(e.to_string()))?;
    let proj = DMatrix::<f64>::identity(m, m) - &pinv * &b;
    let mut lam = interior_start(&b, &rhs, &pinv, &proj)?;
    if proj.amax() < 1e-12 {
        // `B` is injective: the mean pins the law.
        return Ok((lam.iter().copied().collect(), 0, 0.0));
    }
    let p = DVector::from_iterator(m, atoms.iter().map(|a| a.1));
    let objective = |l: &DVector<f64>| -> f64 {
        l.iter().zip(p.iter()).map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 }).sum()
    };
    let mut decrement = f64::INFINITY;
    for it in 0..MAX_NEWTON {
        let grad = DVector::from_iterator(m, lam.iter().zip(p.iter()).map(|(a, b)| (a / b).ln() + 1.0));
        let bl = &b * DMatrix::from_diagonal(&lam);
        let nu = eigen_solve(&bl * b.transpose(), &(&bl * &grad));
        let d = -(&grad - b.transpose() * nu).component_mul(&lam);
        decrement = d.iter().zip(lam.iter()).map(|(di, li)| di * di / li).sum();
        if decrement < 1e-18 {
            let drift = (&b * &lam - &rhs).amax();
            if drift > FEASIBILITY_TOL {
                return Err(Error::NotConverged { residual: drift });
            }
            return Ok((lam.iter().copied().collect(), it, decrement.sqrt()));
        }
        let mut s: f64 = 1.0;
        for (a, da) in lam.iter().zip(d.iter()) {
            if *da < 0.0 {
                s = s.min(0.99 * a / -da);
            }
        }
        if decrement < PURE_NEWTON {
            lam += &d * s;
            continue;
        }
        let f0 = objective(&lam);
        let slope = grad.dot(&d);
        let mut accepted = false;
        for _ in 0..80 {
            let trial = &lam + &d * s;
            if objective(&trial) <= f0 + 1e-4 * s * slope {
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
        lam += &d * s;
    }
    Err(Error::NotConverged {
        residual: decrement.sqrt(),
    })
}
