use evo_ldp::control::{laplace_dp_value, TerminalObjective};
use evo_ldp::dynamics::mean_field;
use evo_ldp::games::{payoff_limit, Evaluation, GameSpec};
use evo_ldp::largedev::{cramer_law, cramer_transform, face_project, path_cost, relative_entropy, CramerMethod};
use evo_ldp::logit_potential::{logit_potential, PotentialGame};
use evo_ldp::process::{increment_law, simulate_path, IncrementLaw, SampledPath};
use evo_ldp::protocols::{logit_choice, switch_matrix, AffineMap, ProtocolSpec};
use evo_ldp::{GridState, SimplexPoint};
use proptest::prelude::*;

fn congestion() -> GameSpec {
    GameSpec::three_link_congestion()
}

fn point(w: &[f64]) -> SimplexPoint {
    SimplexPoint::from_weights(w).unwrap()
}

fn sigma_at(x: &SimplexPoint, eta: f64) -> evo_ldp::SwitchMatrix {
    switch_matrix(&congestion(), &ProtocolSpec::logit(eta), x, Evaluation::Limit).unwrap()
}

/// Mean of a law that spreads `weights` over the off-diagonal atoms of `ν`
/// and the null atom. Strictly positive weights give an interior direction.
fn direction_from(n: usize, weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut z = vec![0.0; n];
    let mut c = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z[i] -= weights[c] / total;
                z[j] += weights[c] / total;
                c += 1;
            }
        }
    }
    z
}

fn interior_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n)
}

fn atom_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n * (n - 1) + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn simplex_points_are_normalized(w in prop::collection::vec(0.0f64..5.0, 2..6)) {
        prop_assume!(w.iter().sum::<f64>() > 1e-3);
        let x = point(&w);
        prop_assert!((x.coords().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(x.coords().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn nearest_grid_state_has_population_n(w in interior_weights(3), n in 1u32..500) {
        let s = GridState::nearest(&point(&w), n).unwrap();
        prop_assert_eq!(s.counts().iter().sum::<u32>(), n);
        prop_assert!((s.to_point().coords().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn congestion_payoff_falls_with_own_share(w in interior_weights(3), i in 0usize..3, j in 0usize..3, t in 0.0f64..1.0) {
        prop_assume!(i != j);
        let x = point(&w);
        let mut y = x.coords().to_vec();
        let step = t * y[j];
        y[i] += step;
        y[j] -= step;
        let g = congestion();
        let before = payoff_limit(&g, &x).unwrap()[i];
        let after = payoff_limit(&g, &SimplexPoint::new(y).unwrap()).unwrap()[i];
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn payoff_evaluation_is_pure(w in interior_weights(3)) {
        let x = point(&w);
        let g = congestion();
        let a = payoff_limit(&g, &x).unwrap();
        let b = payoff_limit(&g, &x).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn logit_ignores_payoff_shifts(p in prop::collection::vec(-10.0f64..10.0, 2..6), c in -50.0f64..50.0, eta in 0.05f64..2.0) {
        let a = logit_choice(&p, eta);
        let shifted: Vec<f64> = p.iter().map(|v| v + c).collect();
        let b = logit_choice(&shifted, eta);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn logit_is_monotone(p in prop::collection::vec(-5.0f64..5.0, 2..6), bump in 1e-3f64..3.0, eta in 0.05f64..2.0, k in 0usize..6) {
        let k = k % p.len();
        let mut q = p.clone();
        q[k] += bump;
        let before = logit_choice(&p, eta)[k];
        // Strict increase is only visible below the rounding ceiling at 1.
        prop_assume!(before < 1.0 - 1e-9);
        prop_assert!(logit_choice(&q, eta)[k] > before);
    }

    #[test]
    fn switch_rows_are_stochastic(c in prop::collection::vec(0u32..30, 3), eps in 0.01f64..1.0, eta in 0.05f64..1.0) {
        prop_assume!(c.iter().sum::<u32>() >= 2);
        let s = GridState::new(c).unwrap();
        let g = congestion();
        let protocols = [
            ProtocolSpec::logit(eta),
            ProtocolSpec::PairwiseLogit { eta },
            ProtocolSpec::ImitationMutation {
                epsilon: eps,
                payoff_normalization: Some(AffineMap { scale: 1.0 / 9.0, offset: 1.0 }),
            },
        ];
        for p in &protocols {
            for mode in [Evaluation::Simple, Evaluation::Clever] {
                let m = switch_matrix(&g, p, &s, mode).unwrap();
                for i in 0..3 {
                    let r: f64 = m.row(i).iter().sum();
                    prop_assert!((r - 1.0).abs() <= 1e-12, "{p:?} row {i} sums to {r}");
                    prop_assert!(m.row(i).iter().all(|&v| v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn increment_law_respects_support(c in prop::collection::vec(0u32..6, 3), eta in 0.05f64..1.0) {
        prop_assume!(c.iter().sum::<u32>() >= 1);
        let x = GridState::new(c).unwrap().to_point();
        let law = increment_law(&x, &sigma_at(&x, eta)).unwrap();
        let mass: f64 = law.atoms().map(|(_, p)| p).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        prop_assert!(law.respects_support_of(x.coords()));
    }

    #[test]
    fn mean_field_is_tangent_and_repels_the_boundary(c in prop::collection::vec(0u32..8, 3), eta in 0.05f64..1.0) {
        prop_assume!(c.iter().sum::<u32>() >= 1);
        let x = GridState::new(c).unwrap().to_point();
        let p = ProtocolSpec::logit(eta);
        let v = mean_field(&congestion(), &p, &x).unwrap();
        prop_assert!(v.iter().sum::<f64>().abs() <= 1e-12);
        let floor = sigma_at(&x, eta).lower_bound;
        for (vi, xi) in v.iter().zip(x.coords()) {
            prop_assert!(*vi >= floor - xi - 1e-12);
        }
    }

    #[test]
    fn l_is_nonnegative_and_convex(w in interior_weights(3), a in atom_weights(3), b in atom_weights(3)) {
        let x = point(&w);
        let s = sigma_at(&x, 0.25);
        let z1 = direction_from(3, &a);
        let z2 = direction_from(3, &b);
        let mid: Vec<f64> = z1.iter().zip(&z2).map(|(p, q)| 0.5 * (p + q)).collect();
        let l = |z: &[f64]| cramer_transform(&x, z, &s, CramerMethod::Dual).unwrap().value;
        let (l1, l2, lm) = (l(&z1), l(&z2), l(&mid));
        prop_assert!(l1 >= 0.0 && l2 >= 0.0 && lm >= 0.0);
        prop_assert!(lm <= 0.5 * (l1 + l2) + 1e-8);
    }

    #[test]
    fn tilted_law_attains_l(w in interior_weights(3), a in atom_weights(3)) {
        let x = point(&w);
        let s = sigma_at(&x, 0.25);
        let nu = increment_law(&x, &s).unwrap();
        let z = direction_from(3, &a);
        let r = cramer_law(&nu, &z, CramerMethod::Dual).unwrap();
        let lam = r.minimizer.expect("finite value has a minimizer");
        for (m, zi) in lam.mean().iter().zip(&z) {
            prop_assert!((m - zi).abs() <= 1e-8);
        }
        prop_assert!((relative_entropy(&lam, &nu) - r.value).abs() <= 1e-8);
    }

    #[test]
    fn logit_potential_is_concave_along_segments(a in interior_weights(3), b in interior_weights(3), eta in 0.05f64..1.0) {
        let pg = PotentialGame::congestion(congestion()).unwrap();
        let (x, y) = (point(&a), point(&b));
        let m: Vec<f64> = x.coords().iter().zip(y.coords()).map(|(p, q)| 0.5 * (p + q)).collect();
        let f = |p: &SimplexPoint| logit_potential(&pg, eta, p, None).unwrap();
        prop_assert!(f(&SimplexPoint::new(m).unwrap()) >= 0.5 * (f(&x) + f(&y)) - 1e-9);
    }

    #[test]
    fn face_potential_agrees_on_its_face(w in prop::collection::vec(0.05f64..1.0, 2), drop in 0usize..3, eta in 0.05f64..1.0) {
        let mut full = vec![0.0; 3];
        let face: Vec<usize> = (0..3).filter(|&i| i != drop).collect();
        for (k, &i) in face.iter().enumerate() {
            full[i] = w[k];
        }
        let x = point(&full);
        let pg = PotentialGame::congestion(congestion()).unwrap();
        let a = logit_potential(&pg, eta, &x, None).unwrap();
        let b = logit_potential(&pg, eta, &x, Some(&face)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn potential_gradient_is_payoff(seed in any::<u64>()) {
        let pg = PotentialGame::congestion(congestion()).unwrap();
        prop_assert!(pg.check_gradient(20, seed) <= 1e-6);
    }

    #[test]
    fn face_projection_conditions(a in atom_weights(3), mask in prop::collection::vec(any::<bool>(), 7), drop in 0usize..3, boost in 0.0f64..0.5) {
        let lam = random_feasible_law(3, &a, &mask, drop, boost);
        check_face_projection(&lam, drop)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dual_and_primal_agree(w in interior_weights(3), a in atom_weights(3)) {
        let x = point(&w);
        let s = sigma_at(&x, 0.25);
        let z = direction_from(3, &a);
        let d = cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap().value;
        let p = cramer_transform(&x, &z, &s, CramerMethod::PrimalOracle).unwrap().value;
        prop_assert!((d - p).abs() <= 1e-6, "dual {d} primal {p}");
    }

    #[test]
    fn simulated_chain_stays_on_the_grid(c in prop::collection::vec(0u32..20, 3), seed in any::<u64>()) {
        prop_assume!(c.iter().sum::<u32>() >= 2);
        let s = GridState::new(c).unwrap();
        let n = s.pop_size() as f64;
        let path = simulate_path(&congestion(), &ProtocolSpec::logit(0.25), &s, 1.0, seed, Evaluation::Simple).unwrap();
        for st in path.states() {
            prop_assert!((st.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for v in st {
                let k = v * n;
                prop_assert!(k >= -1e-9 && (k - k.round()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn dp_value_is_monotone_in_the_objective(k1 in 0.0f64..4.0, extra in 0.0f64..2.0, y in 0.0f64..1.0, c0 in 0u32..=12) {
        let g = GameSpec::parallel_links(vec![vec![0.0, 2.0], vec![1.0, 1.0]]);
        let p = ProtocolSpec::logit(0.25);
        let h1 = TerminalObjective::squared_distance(vec![y, 1.0 - y], k1);
        let inner = h1.clone();
        let h2 = TerminalObjective::new("h1 + extra·x1²", move |x: &[f64]| inner.eval(x) + extra * x[0] * x[0]);
        let x0 = GridState::new(vec![c0, 12 - c0]).unwrap();
        let v1 = laplace_dp_value(&g, &p, 12, &h1, &x0, Evaluation::Simple, false).unwrap().value;
        let v2 = laplace_dp_value(&g, &p, 12, &h2, &x0, Evaluation::Simple, false).unwrap().value;
        prop_assert!(v1 <= v2 + 1e-12);
    }
}

/// A law on the off-diagonal atoms plus null with masked-out entries, whose
/// mean is nonnegative at `drop`.
fn random_feasible_law(n: usize, a: &[f64], mask: &[bool], drop: usize, boost: f64) -> IncrementLaw {
    let mut off = vec![0.0; n * n];
    let mut c = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off[i * n + j] = if mask[c] { a[c] } else { 0.0 };
                c += 1;
            }
        }
    }
    let mut null = if mask[c] { a[c] } else { 0.0 };
    let outflow: f64 = (0..n).map(|j| off[drop * n + j]).sum();
    let inflow: f64 = (0..n).map(|i| off[i * n + drop]).sum();
    if inflow < outflow {
        let from = (drop + 1) % n;
        off[from * n + drop] += outflow - inflow + boost;
    }
    if off.iter().sum::<f64>() + null == 0.0 {
        null = 1.0;
    }
    let total: f64 = off.iter().sum::<f64>() + null;
    for v in off.iter_mut() {
        *v /= total;
    }
    null /= total;
    let excess: f64 = off.iter().sum::<f64>() + null - 1.0;
    null = (null - excess).max(0.0);
    IncrementLaw::new(n, off, null).unwrap()
}

fn check_face_projection(lam: &IncrementLaw, drop: usize) -> Result<(), TestCaseError> {
    let n = lam.dim();
    let face: Vec<usize> = (0..n).filter(|&i| i != drop).collect();
    let f = face_project(lam, &face).unwrap();
    let bar = &f.projected;
    let d = |i: usize, j: usize| bar.mass(i, j) - lam.mass(i, j);
    let row = |i: usize| (0..n).filter(|&j| j != i).map(|j| d(i, j)).sum::<f64>();
    let col = |j: usize| (0..n).filter(|&i| i != j).map(|i| d(i, j)).sum::<f64>();
    let lam_k: f64 = (0..n).filter(|&j| j != drop).map(|j| lam.mass(drop, j)).sum();
    let chi_sum: f64 = face.iter().map(|&i| f.chi[i]).sum();
    for &i in &face {
        prop_assert!(f.chi[i] >= 0.0);
        prop_assert!((row(i) + f.chi[i]).abs() <= 1e-12, "(i) row {i}");
        prop_assert!((col(i) + f.chi[i]).abs() <= 1e-12, "(i) column {i}");
    }
    prop_assert!((bar.null_mass() - lam.null_mass() - lam_k - chi_sum).abs() <= 1e-12, "(ii)");
    prop_assert!(chi_sum <= lam_k + 1e-12, "(iii)");
    let tv: f64 = (0..n * n).filter(|c| c / n != c % n).map(|c| d(c / n, c % n).abs()).sum();
    prop_assert!(tv <= 3.0 * lam_k + 1e-12, "(iv)");
    for j in 0..n {
        prop_assert!(bar.mass(drop, j) == 0.0);
    }
    for (p, q) in bar.mean().iter().zip(&lam.mean()) {
        prop_assert!((p - q).abs() <= 1e-12, "mean");
    }
    Ok(())
}

#[test]
fn continuity_on_a_fixed_face_and_the_moving_direction_counterexample() {
    let g = congestion();
    let p = ProtocolSpec::logit(0.25);
    let limit = SimplexPoint::new(vec![0.0, 0.6, 0.4]).unwrap();
    let s_lim = switch_matrix(&g, &p, &limit, Evaluation::Limit).unwrap();
    // Fixed z in the feasible cone of the face {2, 3}.
    let z = vec![0.05, -0.2, 0.15];
    let at_limit = cramer_transform(&limit, &z, &s_lim, CramerMethod::Dual).unwrap().value;
    let mut gaps = Vec::new();
    for k in [4, 8, 12, 16] {
        let t = 10f64.powi(-k);
        let x = SimplexPoint::new(vec![t, 0.6 - t / 2.0, 0.4 - t / 2.0]).unwrap();
        let s = switch_matrix(&g, &p, &x, Evaluation::Limit).unwrap();
        gaps.push((cramer_transform(&x, &z, &s, CramerMethod::Dual).unwrap().value - at_limit).abs());
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 1e-6, "{gaps:?}");

    // z_α = e3 − (α e1 + (1 − α) e2) with α tied to x.
    let target = -(limit.coords()[1] * s_lim.get(1, 2)).ln();
    let jump_limit = 1.0 + target;
    let at_face = cramer_transform(&limit, &[0.0, -1.0, 1.0], &s_lim, CramerMethod::Dual).unwrap().value;
    assert!((at_face - target).abs() < 1e-9);
    let mut last = f64::INFINITY;
    let mut jumps = Vec::new();
    for k in [20, 60, 200] {
        let t = 10f64.powi(-k);
        let x = SimplexPoint::new(vec![t, 0.6 - t / 2.0, 0.4 - t / 2.0]).unwrap();
        let s = switch_matrix(&g, &p, &x, Evaluation::Limit).unwrap();
        let alpha = -1.0 / (t * s.get(0, 2)).ln();
        let za = vec![-alpha, -(1.0 - alpha), 1.0];
        let v = cramer_transform(&x, &za, &s, CramerMethod::Dual).unwrap().value;
        let err = (v - jump_limit).abs();
        assert!(err < last);
        last = err;
        jumps.push(v - at_face);
    }
    // The gap to L(x*, e3 − e2) tends to 1, not 0.
    assert!(jumps.windows(2).all(|w| w[1] > w[0]), "{jumps:?}");
    assert!(jumps[2] > 0.9, "{jumps:?}");
    assert!(last < 0.05, "{last}");
}

#[test]
fn path_cost_refines_at_second_order() {
    let g = congestion();
    let p = ProtocolSpec::logit(0.25);
    let a = [0.3, 0.3, 0.4];
    let b = [0.5, 0.35, 0.15];
    let phi = |t: f64| -> Vec<f64> {
        let s = 0.5 * (1.0 - (std::f64::consts::PI * t).cos());
        a.iter().zip(&b).map(|(p, q)| p + s * (q - p)).collect()
    };
    let cost = |m: usize| {
        let times: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
        let states = times.iter().map(|&t| phi(t)).collect();
        let path = SampledPath::new(times, states, 1.0 / m as f64).unwrap();
        path_cost(&path, &g, &p).unwrap().value
    };
    let c: Vec<f64> = [10, 20, 40, 80].iter().map(|&m| cost(m)).collect();
    let d: Vec<f64> = c.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let order = (d[1] / d[2]).log2();
    assert!(order >= 1.5, "fitted order {order}, costs {c:?}");
}

#[test]
fn face_projection_leaves_face_laws_alone() {
    let lam = IncrementLaw::new(3, vec![0.0, 0.2, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0], 0.7).unwrap();
    let f = face_project(&lam, &[0, 1]).unwrap();
    assert_eq!(f.projected, lam);
    assert_eq!(f.chi, vec![0.0; 3]);
}

#[test]
fn face_projection_rejects_infeasible_means() {
    // I = {2, 3}, λ = δ at e2 − e1.
    let lam = IncrementLaw::new(3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
    assert!(face_project(&lam, &[1, 2]).is_err());
}
