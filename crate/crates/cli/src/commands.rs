use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, ensure, Context, Result};
use evo_ldp::control::{laplace_csv, laplace_dp_value, laplace_variational, LaplaceRow, TerminalObjective};
use evo_ldp::dynamics::{find_rest_point, integrate, Direction, VectorField};
use evo_ldp::largedev::{self, CramerMethod};
use evo_ldp::logit_potential::{level_set_csv, level_set_grid, logit_rest_point, rate_compare as compare_rates, PotentialGame, RateMode};
use evo_ldp::process::{exit_time_mc, simulate_path, stationary_distribution, ExitProblem, Region, SampledPath, StationaryMethod};
use evo_ldp::protocols::switch_matrix;
use evo_ldp::{Evaluation, GameSpec, GridState, ProtocolSpec, SimplexPoint};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{config_hash, load_game, parse_list, parse_points, parse_protocol, ExperimentConfig};
use crate::{Common, EvalArg};

/// Largest grid handled by the exact stationary solver.
const EXACT_STATES_CAP: u128 = 5_000_000;

/// Resolved inputs of one run, plus the record that is hashed into
/// `config_hash`.
pub struct Ctx {
    cfg: ExperimentConfig,
    common: Common,
    game: GameSpec,
    protocol: ProtocolSpec,
    evaluation: Evaluation,
    seed: u64,
    record: BTreeMap<String, Value>,
}

impl Ctx {
    pub fn new(common: Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::empty(),
        };
        let game = match (&common.game, &cfg.game) {
            (Some(g), _) => load_game(&Value::String(g.clone()), &cfg, true)?,
            (None, Some(g)) => load_game(g, &cfg, false)?,
            (None, None) => GameSpec::three_link_congestion(),
        };
        let protocol = match (&common.protocol, &cfg.protocol) {
            (Some(p), _) => parse_protocol(&Value::String(p.clone()))?,
            (None, Some(p)) => parse_protocol(p)?,
            (None, None) => ProtocolSpec::logit(common.eta.or(cfg.eta).unwrap_or(0.25)),
        };
        let evaluation = match common.evaluation {
            Some(EvalArg::Simple) => Evaluation::Simple,
            Some(EvalArg::Clever) => Evaluation::Clever,
            Some(EvalArg::Limit) => Evaluation::Limit,
            None => cfg.evaluation.unwrap_or_default(),
        };
        let seed = common.seed.or(cfg.seed).unwrap_or(0);
        let mut record = BTreeMap::new();
        record.insert("schema_version".into(), json!(crate::config::SCHEMA_VERSION));
        record.insert("game".into(), serde_json::to_value(&game)?);
        record.insert("protocol".into(), serde_json::to_value(&protocol)?);
        record.insert("evaluation".into(), serde_json::to_value(evaluation)?);
        record.insert("seed".into(), json!(seed));
        Ok(Self {
            cfg,
            common,
            game,
            protocol,
            evaluation,
            seed,
            record,
        })
    }

    fn n(&self) -> usize {
        self.game.num_actions()
    }

    fn note<T: Serialize + Clone>(&mut self, key: &str, v: T) -> T {
        self.record.insert(key.into(), serde_json::to_value(v.clone()).expect("parameters serialize"));
        v
    }

    fn hash(&self, command: &str) -> String {
        let mut r = self.record.clone();
        r.insert("command".into(), json!(command));
        config_hash(&serde_json::to_value(r).expect("record serializes"))
    }

    fn meta(&self, command: &str) -> Vec<(&'static str, String)> {
        vec![("config_hash", self.hash(command)), ("seed", self.seed.to_string())]
    }

    fn pop_size(&mut self, default: u32) -> Result<u32> {
        let n = self.common.pop_size.or(self.cfg.pop_size).unwrap_or(default);
        ensure!(n >= 1, "pop-size must be at least 1");
        Ok(self.note("pop_size", n))
    }

    fn pop_sizes(&mut self, flag: Option<String>, default: &[u32]) -> Result<Vec<u32>> {
        let sizes = match (flag, &self.cfg.pop_sizes, self.common.pop_size) {
            (Some(s), _, _) => parse_list(&s)?,
            (None, Some(v), _) => v.clone(),
            (None, None, Some(n)) => vec![n],
            (None, None, None) => default.to_vec(),
        };
        ensure!(!sizes.is_empty() && sizes.iter().all(|&n| n >= 1), "population sizes must be at least 1");
        Ok(self.note("pop_sizes", sizes))
    }

    fn horizon(&mut self, default: f64) -> Result<f64> {
        let t = self.common.horizon.or(self.cfg.horizon).unwrap_or(default);
        ensure!(t > 0.0 && t.is_finite(), "horizon must be positive, got {t}");
        Ok(self.note("horizon", t))
    }

    fn eta(&mut self) -> Result<f64> {
        let eta = self
            .common
            .eta
            .or(self.cfg.eta)
            .or(self.protocol.logit_eta())
            .ok_or_else(|| anyhow!("this command needs --eta or a logit protocol"))?;
        ensure!(eta > 0.0 && eta.is_finite(), "eta must be positive, got {eta}");
        Ok(self.note("eta", eta))
    }

    fn positive(&mut self, key: &str, flag: Option<f64>, cfg: Option<f64>, default: f64) -> Result<f64> {
        let v = flag.or(cfg).unwrap_or(default);
        ensure!(v > 0.0 && v.is_finite(), "{key} must be positive, got {v}");
        Ok(self.note(key, v))
    }

    fn count(&mut self, key: &str, flag: Option<usize>, cfg: Option<usize>, default: usize) -> Result<usize> {
        let v = flag.or(cfg).unwrap_or(default);
        ensure!(v >= 1, "{key} must be at least 1");
        Ok(self.note(key, v))
    }

    /// A point of the simplex from a flag or the config, with a default.
    fn point(
        &mut self,
        key: &str,
        flag: Option<String>,
        cfg: Option<Vec<f64>>,
        default: impl FnOnce(&Self) -> Result<SimplexPoint>,
    ) -> Result<SimplexPoint> {
        let x = match flag.map(|s| parse_list(&s)).transpose()?.or(cfg) {
            Some(v) => SimplexPoint::new(v).with_context(|| format!("--{key}"))?,
            None => default(self)?,
        };
        ensure!(x.dim() == self.n(), "--{key} has {} coordinates, the game has {} actions", x.dim(), self.n());
        self.note(key, x.coords().to_vec());
        Ok(x)
    }

    fn potential_game(&self) -> Result<PotentialGame> {
        PotentialGame::congestion(self.game.clone()).context("closed-form potentials need a congestion game")
    }

    fn emit(&self, text: &str) -> Result<()> {
        match self.common.out.clone().or(self.cfg.out.as_ref().map(PathBuf::from)) {
            Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn emit_json(&self, command: &str, result: impl Serialize) -> Result<()> {
        let doc = json!({
            "config_hash": self.hash(command),
            "seed": self.seed,
            "command": command,
            "result": result,
        });
        self.emit(&(serde_json::to_string_pretty(&doc)? + "\n"))
    }
}

fn barycenter(ctx: &Ctx) -> Result<SimplexPoint> {
    Ok(SimplexPoint::barycenter(ctx.n()))
}

pub fn simulate(ctx: &mut Ctx, start: Option<String>) -> Result<()> {
    let pop = ctx.pop_size(100)?;
    let horizon = ctx.horizon(10.0)?;
    let x0 = ctx.point("start", start, ctx.cfg.start.clone(), barycenter)?;
    let state = GridState::nearest(&x0, pop)?;
    let path = simulate_path(&ctx.game, &ctx.protocol, &state, horizon, ctx.seed, ctx.evaluation)?;
    ctx.emit(&path.to_csv(&ctx.meta("simulate")))
}

pub fn mean_dynamic(ctx: &mut Ctx, start: Option<String>, dt: Option<f64>, reverse: bool) -> Result<()> {
    let horizon = ctx.horizon(10.0)?;
    let dt = ctx.positive("dt", dt, ctx.cfg.dt, 0.01)?;
    let x0 = ctx.point("start", start, ctx.cfg.start.clone(), barycenter)?;
    ctx.note("reverse", reverse);
    let field = VectorField::mean_dynamic(&ctx.game, &ctx.protocol)?;
    let direction = if reverse {
        Direction::Reverse { halt_near: None }
    } else {
        Direction::Forward
    };
    let path = integrate(&field, &x0, horizon, dt, &direction)?;
    ctx.emit(&path.to_csv(&ctx.meta("mean-dynamic")))
}

pub fn rest_point(ctx: &mut Ctx, start: Option<String>) -> Result<()> {
    let x0 = ctx.point("start", start, ctx.cfg.start.clone(), barycenter)?;
    let x = find_rest_point(&ctx.game, &ctx.protocol, &x0, 1e-12)?;
    let mut out = String::new();
    for (k, v) in ctx.meta("rest-point") {
        out.push_str(&format!("# {k}={v}\n"));
    }
    let header: Vec<String> = (1..=x.dim()).map(|i| format!("x{i}")).collect();
    let values: Vec<String> = x.coords().iter().map(f64::to_string).collect();
    out.push_str(&format!("{}\n{}\n", header.join(","), values.join(",")));
    ctx.emit(&out)
}

pub fn cramer(ctx: &mut Ctx, start: Option<String>, direction: Option<String>, primal: bool) -> Result<()> {
    let x = ctx.point("start", start, ctx.cfg.start.clone(), barycenter)?;
    let z = match direction.map(|s| parse_list::<f64>(&s)).transpose()?.or(ctx.cfg.direction.clone()) {
        Some(z) => z,
        None => bail!("cramer needs --direction"),
    };
    ensure!(z.len() == ctx.n(), "--direction has {} coordinates, the game has {} actions", z.len(), ctx.n());
    ctx.note("direction", z.clone());
    let method = if primal { CramerMethod::PrimalOracle } else { CramerMethod::Dual };
    ctx.note("method", method);
    let sigma = switch_matrix(&ctx.game, &ctx.protocol, &x, Evaluation::Limit)?;
    let result = largedev::cramer_transform(&x, &z, &sigma, method)?;
    ctx.emit_json("cramer", json!({ "x": x.coords(), "z": z, "cramer": result }))
}

/// Reads `time,x1,..,xn` rows, skipping `#` lines and the header.
fn read_path_csv(text: &str) -> Result<SampledPath> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("time") {
            continue;
        }
        let row: Vec<f64> = parse_list(line).with_context(|| format!("path line {}", i + 1))?;
        ensure!(row.len() >= 2, "path line {} has no state", i + 1);
        times.push(row[0]);
        states.push(row[1..].to_vec());
    }
    ensure!(times.len() >= 2, "path needs at least two samples");
    let step = times[1] - times[0];
    Ok(SampledPath::new(times, states, step)?)
}

pub fn path_cost(ctx: &mut Ctx, path: Option<String>) -> Result<()> {
    let file = match (path, &ctx.cfg.path) {
        (Some(p), _) => PathBuf::from(p),
        (None, Some(p)) => ctx.cfg.resolve_file(p),
        (None, None) => bail!("path-cost needs --path"),
    };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading path {}", file.display()))?;
    ctx.note("path_sha256", hex::encode(Sha256::digest(text.as_bytes())));
    let sampled = read_path_csv(&text)?;
    ensure!(sampled.dim() == ctx.n(), "path has {} coordinates, the game has {} actions", sampled.dim(), ctx.n());
    let cost = largedev::path_cost(&sampled, &ctx.game, &ctx.protocol)?;
    ctx.emit_json("path-cost", cost)
}

fn default_rest(ctx: &Ctx) -> Result<SimplexPoint> {
    Ok(find_rest_point(&ctx.game, &ctx.protocol, &SimplexPoint::barycenter(ctx.n()), 1e-12)?)
}

pub fn exit_time(
    ctx: &mut Ctx,
    start: Option<String>,
    radius: Option<f64>,
    replicas: Option<usize>,
    cap: Option<f64>,
) -> Result<()> {
    let pop = ctx.pop_size(50)?;
    let center = ctx.point("start", start, ctx.cfg.start.clone(), default_rest)?;
    let radius = ctx.positive("radius", radius, ctx.cfg.radius, 0.1)?;
    let replicas = ctx.count("replicas", replicas, ctx.cfg.replicas, 64)?;
    let cap = ctx.positive("cap", cap, ctx.cfg.cap, 1e5)?;
    let problem = ExitProblem {
        region: Region::Ball {
            center: center.coords().to_vec(),
            radius,
        },
        start: center,
        cap,
    };
    let summary = exit_time_mc(&ctx.game, &ctx.protocol, pop, &problem, replicas, ctx.seed, ctx.evaluation)?;
    ctx.emit_json("exit-time", summary)
}

pub fn stationary(ctx: &mut Ctx) -> Result<()> {
    let pop = ctx.pop_size(50)?;
    let method = if ctx.n() == 2 {
        StationaryMethod::BirthDeath
    } else {
        StationaryMethod::Exact { cap: EXACT_STATES_CAP }
    };
    let mu = stationary_distribution(&ctx.game, &ctx.protocol, pop, ctx.evaluation, &method)?;
    ctx.emit(&mu.to_csv(&ctx.meta("stationary")))
}

pub fn rate_compare(
    ctx: &mut Ctx,
    pop_sizes: Option<String>,
    states: Option<String>,
    delta: Option<f64>,
    radius: Option<f64>,
    replicas: Option<usize>,
    cap: Option<f64>,
) -> Result<()> {
    let pg = ctx.potential_game()?;
    let eta = ctx.eta()?;
    let sizes = ctx.pop_sizes(pop_sizes, &[20, 40, 80])?;
    let mode = match radius.or(ctx.cfg.radius) {
        Some(_) => {
            let radius = ctx.positive("radius", radius, ctx.cfg.radius, 0.1)?;
            let replicas = ctx.count("replicas", replicas, ctx.cfg.replicas, 64)?;
            let cap = ctx.positive("cap", cap, ctx.cfg.cap, 1e6)?;
            let center = logit_rest_point(&pg, eta)?;
            RateMode::ExitTime {
                region: Region::Ball {
                    center: center.into_vec(),
                    radius,
                },
                replicas,
                seed: ctx.seed,
                cap,
            }
        }
        None => {
            let pts = match states.map(|s| parse_points(&s)).transpose()?.or(ctx.cfg.states.clone()) {
                Some(p) => p,
                None => vec![SimplexPoint::barycenter(ctx.n()).into_vec()],
            };
            ctx.note("states", pts.clone());
            let delta = ctx.positive("delta", delta, ctx.cfg.delta, 0.05)?;
            let states = pts.into_iter().map(SimplexPoint::new).collect::<Result<Vec<_>, _>>()?;
            RateMode::Stationary { states, delta }
        }
    };
    let table = compare_rates(&pg, eta, &mode, &sizes, ctx.evaluation)?;
    ctx.emit(&table.to_csv(&ctx.meta("rate-compare")))
}

pub fn laplace_dp(
    ctx: &mut Ctx,
    pop_sizes: Option<String>,
    start: Option<String>,
    target: Option<String>,
    kappa: Option<f64>,
    knots: Option<usize>,
    restarts: Option<usize>,
) -> Result<()> {
    let sizes = ctx.pop_sizes(pop_sizes, &[25, 50, 100])?;
    let x0 = ctx.point("start", start, ctx.cfg.start.clone(), barycenter)?;
    let y = ctx.point("target", target, ctx.cfg.target.clone(), |c| Ok(SimplexPoint::vertex(c.n(), 0)))?;
    let kappa = ctx.positive("kappa", kappa, ctx.cfg.kappa, 2.0)?;
    let knots = ctx.count("knots", knots, ctx.cfg.knots, 16)?;
    let restarts = ctx.count("restarts", restarts, ctx.cfg.restarts, 8)?;
    let h = TerminalObjective::squared_distance(y.into_vec(), kappa);
    let var = laplace_variational(&ctx.game, &ctx.protocol, &h, &x0, knots, restarts, ctx.seed)?;
    let rows = sizes
        .iter()
        .map(|&n| {
            let s = GridState::nearest(&x0, n)?;
            let dp = laplace_dp_value(&ctx.game, &ctx.protocol, n, &h, &s, ctx.evaluation, false)?;
            Ok(LaplaceRow {
                pop_size: n,
                dp_value: dp.value,
                direct_value: dp.direct_value,
                variational: var.value,
                gap: (dp.value - var.value).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.emit(&laplace_csv(&rows, &ctx.meta("laplace-dp")))
}

pub fn levelsets(ctx: &mut Ctx) -> Result<()> {
    let pg = ctx.potential_game()?;
    let eta = ctx.eta()?;
    let mesh = ctx.common.mesh.or(ctx.cfg.mesh).unwrap_or(100);
    ensure!(mesh >= 1, "mesh must be at least 1");
    ctx.note("mesh", mesh);
    let grid = level_set_grid(&pg, eta, mesh)?;
    ctx.emit(&level_set_csv(&grid, &ctx.meta("levelsets")))
}
