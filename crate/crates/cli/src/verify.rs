//! A fast self-check of the library on the three-link congestion game.

use evo_ldp::dynamics::mean_field;
use evo_ldp::largedev::{cramer_transform, CramerMethod};
use evo_ldp::logit_potential::{hj_residual, logit_rest_point, PotentialGame};
use evo_ldp::process::{increment_law, simulate_path, stationary_distribution, StationaryMethod};
use evo_ldp::protocols::{switch_matrix, AffineMap};
use evo_ldp::simplex::simplex_mesh;
use evo_ldp::{Evaluation, GameSpec, GridState, ProtocolSpec, SimplexPoint};

type Check = Result<String, String>;
type Named = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn game() -> GameSpec {
    GameSpec::three_link_congestion()
}

/// Congestion payoffs lie in [-9, 0], so imitation rescales them into [0, 1].
fn protocols() -> [ProtocolSpec; 3] {
    [
        ProtocolSpec::logit(0.25),
        "pairwise_logit:0.5".parse().unwrap(),
        ProtocolSpec::ImitationMutation {
            epsilon: 0.1,
            payoff_normalization: Some(AffineMap { scale: 1.0 / 9.0, offset: 1.0 }),
        },
    ]
}

fn mesh() -> Vec<SimplexPoint> {
    simplex_mesh(3, 12)
}

fn switch_rows() -> Check {
    let mut worst: f64 = 0.0;
    for p in protocols() {
        for x in mesh() {
            let s = switch_matrix(&game(), &p, &x, Evaluation::Limit).map_err(|e| e.to_string())?;
            for i in 0..3 {
                worst = worst.max((s.row(i).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("row sum error {worst:e}"))?;
    Ok(format!("row sums within {worst:.1e}"))
}

fn tangency() -> Check {
    let mut worst: f64 = 0.0;
    for p in protocols() {
        for x in mesh() {
            let v = mean_field(&game(), &p, &x).map_err(|e| e.to_string())?;
            worst = worst.max(v.iter().sum::<f64>().abs());
            for (vi, xi) in v.iter().zip(x.coords()) {
                ensure(*xi > 0.0 || *vi >= -1e-15, || format!("field leaves the simplex at {:?}", x.coords()))?;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("field sum {worst:e}"))?;
    Ok(format!("field sums within {worst:.1e}"))
}

fn cramer_zero_at_mean() -> Check {
    let p = ProtocolSpec::logit(0.25);
    let mut worst: f64 = 0.0;
    for x in mesh() {
        let s = switch_matrix(&game(), &p, &x, Evaluation::Limit).map_err(|e| e.to_string())?;
        let mean = increment_law(&x, &s).map_err(|e| e.to_string())?.mean();
        let l = cramer_transform(&x, &mean, &s, CramerMethod::Dual).map_err(|e| e.to_string())?;
        worst = worst.max(l.value.abs());
    }
    ensure(worst <= 1e-9, || format!("L at the mean {worst:e}"))?;
    Ok(format!("L(x, mean) within {worst:.1e}"))
}

fn cramer_dual_primal() -> Check {
    let p = ProtocolSpec::logit(0.25);
    let z = [0.1, -0.3, 0.2];
    let mut worst: f64 = 0.0;
    for x in mesh().into_iter().filter(SimplexPoint::is_interior) {
        let s = switch_matrix(&game(), &p, &x, Evaluation::Limit).map_err(|e| e.to_string())?;
        let d = cramer_transform(&x, &z, &s, CramerMethod::Dual).map_err(|e| e.to_string())?;
        let q = cramer_transform(&x, &z, &s, CramerMethod::PrimalOracle).map_err(|e| e.to_string())?;
        worst = worst.max((d.value - q.value).abs() / d.value.abs().max(1.0));
    }
    ensure(worst <= 1e-6, || format!("dual vs primal {worst:e}"))?;
    Ok(format!("dual vs primal within {worst:.1e}"))
}

fn rest_point() -> Check {
    let pg = PotentialGame::congestion(game()).map_err(|e| e.to_string())?;
    let x = logit_rest_point(&pg, 0.25).map_err(|e| e.to_string())?;
    let err = x
        .coords()
        .iter()
        .zip([0.3563, 0.4482, 0.1956])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(err <= 5e-4, || format!("rest point {:?}", x.coords()))?;
    Ok(format!("rest point within {err:.1e}"))
}

fn hamilton_jacobi() -> Check {
    let pg = PotentialGame::congestion(game()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for x in mesh().into_iter().filter(SimplexPoint::is_interior) {
        let r = hj_residual(&pg, 0.25, &x, None).map_err(|e| e.to_string())?;
        worst = worst.max(r.hamiltonian.abs());
    }
    ensure(worst <= 1e-9, || format!("H residual {worst:e}"))?;
    Ok(format!("H within {worst:.1e}"))
}

fn potential_gradient() -> Check {
    let pg = PotentialGame::congestion(game()).map_err(|e| e.to_string())?;
    let err = pg.check_gradient(200, 5);
    ensure(err <= 1e-6, || format!("gradient error {err:e}"))?;
    Ok(format!("gradient within {err:.1e}"))
}

fn reproducible_simulation() -> Check {
    let p = ProtocolSpec::logit(0.25);
    let x0 = GridState::nearest(&SimplexPoint::barycenter(3), 60).map_err(|e| e.to_string())?;
    let a = simulate_path(&game(), &p, &x0, 2.0, 11, Evaluation::Simple).map_err(|e| e.to_string())?;
    let b = simulate_path(&game(), &p, &x0, 2.0, 11, Evaluation::Simple).map_err(|e| e.to_string())?;
    ensure(a == b, || "same seed gave different paths".into())?;
    ensure(a.states().iter().all(|s| s.iter().all(|v| (v * 60.0 - (v * 60.0).round()).abs() < 1e-9)), || {
        "path left the grid".into()
    })?;
    Ok(format!("{} jumps, identical on rerun", a.len() - 1))
}

fn stationary_balance() -> Check {
    let p = ProtocolSpec::logit(0.25);
    let mu = stationary_distribution(&game(), &p, 12, Evaluation::Simple, &StationaryMethod::Exact { cap: 10_000 })
        .map_err(|e| e.to_string())?;
    let total: f64 = mu.mass.iter().sum();
    let res = mu.residual.unwrap_or(f64::INFINITY);
    ensure((total - 1.0).abs() <= 1e-12 && res <= 1e-10, || format!("mass {total}, residual {res:e}"))?;
    Ok(format!("residual {res:.1e}"))
}

/// Runs every check, printing one line each. True when all pass.
pub fn run() -> bool {
    let checks: [Named; 9] = [
        ("switch rows", switch_rows),
        ("mean field tangency", tangency),
        ("cramer at mean", cramer_zero_at_mean),
        ("cramer dual vs primal", cramer_dual_primal),
        ("logit rest point", rest_point),
        ("hamilton-jacobi", hamilton_jacobi),
        ("potential gradient", potential_gradient),
        ("reproducible simulation", reproducible_simulation),
        ("stationary balance", stationary_balance),
    ];
    let mut all = true;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                all = false;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    all
}
