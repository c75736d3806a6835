use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use kimura_core::estimators::{
    corner_hit_probability, counterexample_frequency, counterexample_frequency_coupled, decompose, doubling_ratio,
    hitting_histogram, transverse_occupation, uniform_edges,
};
use kimura_core::operator::{parse_preset, AppendixParams, PresetSpec, DEFAULT_ASSUMPTION_SAMPLES};
use kimura_core::pde::plane::{solve_backward_2d, Problem2D};
use kimura_core::pde::{
    caloric_density, dirichlet_kernel, duhamel_solve, solve_backward, solve_dirichlet_direct, stochastic_rep_check, Grid1D,
    Stepping,
};
use kimura_core::sde::{CounterexampleConfig, SimConfig, Simulator};
use kimura_core::verify::{
    check_barrier_regularity, check_barrier_w1, check_barrier_w2, evaluate_regularity, evaluate_w1, evaluate_w2,
    growth_ratio, AppendixOperator, BarrierReport, W1Params,
};
use kimura_core::{Error, KimuraOperator, Point};

use crate::config::{ConfigError, RunConfig, Zeta};

/// Tasks, in the order of the subcommands.
pub const TASKS: [&str; 13] = [
    "check",
    "simulate",
    "decompose",
    "hitting",
    "occupation",
    "kernel",
    "duhamel",
    "crosscheck",
    "corner",
    "counterexample",
    "doubling",
    "barriers",
    "growth",
];

#[derive(Debug)]
pub enum TaskError {
    Config(ConfigError),
    Core(Error),
    Io(String),
}

impl From<ConfigError> for TaskError {
    fn from(e: ConfigError) -> Self {
        TaskError::Config(e)
    }
}

impl From<Error> for TaskError {
    fn from(e: Error) -> Self {
        TaskError::Core(e)
    }
}

impl From<std::io::Error> for TaskError {
    fn from(e: std::io::Error) -> Self {
        TaskError::Io(e.to_string())
    }
}

impl From<csv::Error> for TaskError {
    fn from(e: csv::Error) -> Self {
        TaskError::Io(e.to_string())
    }
}

/// Result of a task that ran to completion.
pub struct Outcome {
    pub results: Value,
    /// False when an assumption or barrier check failed.
    pub assumptions_hold: bool,
}

impl Outcome {
    fn ok(results: Value) -> Self {
        Self {
            results,
            assumptions_hold: true,
        }
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub task: &'a str,
    pub out: PathBuf,
}

impl Ctx<'_> {
    fn need<T: Clone>(&self, field: &'static str, v: &Option<T>) -> Result<T, TaskError> {
        Ok(self.cfg.need(field, v, self.task)?)
    }

    fn csv(&self, name: &str) -> Result<csv::Writer<BufWriter<File>>, TaskError> {
        Ok(csv::Writer::from_writer(BufWriter::new(File::create(self.out.join(name))?)))
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>, TaskError> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn kimura(&self) -> Result<KimuraOperator, TaskError> {
        Ok(parse_preset(&self.cfg.operator)?.into_kimura()?)
    }

    fn appendix(&self) -> Result<AppendixParams, TaskError> {
        match parse_preset(&self.cfg.operator)? {
            PresetSpec::AppendixA(p) => Ok(p),
            PresetSpec::Kimura(_) => Err(ConfigError::Invalid {
                field: "operator",
                message: format!("task `{}` needs an appendix-A(...) preset", self.task),
            }
            .into()),
        }
    }

    fn sim_config(&self, horizon: f64) -> Result<SimConfig, TaskError> {
        let mut s = SimConfig::new(self.need("dt", &self.cfg.dt)?, horizon, self.cfg.seed);
        s.allow_nonclean = self.cfg.allow_nonclean.unwrap_or(false);
        s.record_every = self.cfg.record_every;
        Ok(s)
    }

    fn point(&self, op: &KimuraOperator) -> Result<Point, TaskError> {
        let p0 = self.need("p0", &self.cfg.p0)?;
        if p0.len() != op.dim() {
            return Err(ConfigError::Invalid {
                field: "p0",
                message: format!("expected {} coordinates, got {}", op.dim(), p0.len()),
            }
            .into());
        }
        Ok(Point::from_coords(&p0, op.n()))
    }

    fn stepping(&self) -> Stepping {
        Stepping {
            dt: self.cfg.pde_dt.unwrap_or(1e-4),
            theta: self.cfg.theta.unwrap_or(1.0),
            store_every: self.cfg.store_every.unwrap_or(100),
        }
    }
}

pub fn run(ctx: &Ctx) -> Result<Outcome, TaskError> {
    std::fs::create_dir_all(&ctx.out)?;
    match ctx.task {
        "check" => check(ctx),
        "simulate" => simulate(ctx),
        "decompose" => decompose_task(ctx),
        "hitting" => hitting(ctx),
        "occupation" => occupation(ctx),
        "kernel" => kernel(ctx),
        "duhamel" => duhamel(ctx),
        "crosscheck" => crosscheck(ctx),
        "corner" => corner(ctx),
        "counterexample" => counterexample(ctx),
        "doubling" => doubling(ctx),
        "barriers" => barriers(ctx),
        "growth" => growth(ctx),
        other => Err(ConfigError::Invalid {
            field: "task",
            message: format!("unknown task {other:?}"),
        }
        .into()),
    }
}

fn check(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let samples = ctx.cfg.samples.unwrap_or(DEFAULT_ASSUMPTION_SAMPLES);
    let op = match parse_preset(&ctx.cfg.operator)? {
        PresetSpec::AppendixA(p) => {
            let b = AppendixOperator::from_params(&p).assumption_bounds(samples, ctx.cfg.seed);
            return Ok(Outcome {
                assumptions_hold: b.delta > 0.0,
                results: json!({ "kind": "appendix", "bounds": b }),
            });
        }
        PresetSpec::Kimura(op) => op,
    };
    let report = op.check_assumptions(samples, ctx.cfg.seed);
    let mut clean_ok = true;
    let cleanness = match op.classify_faces(kimura_core::operator::DEFAULT_WEIGHT_TOL, kimura_core::operator::DEFAULT_BETA0_MIN) {
        Ok(cls) => json!({
            "status": "clean",
            "tangent": cls.tangent,
            "transverse": cls.transverse,
            "beta0": cls.beta0,
            "weight_ranges": cls.ranges,
        }),
        Err(Error::NotClean {
            face,
            min,
            max,
            witnesses,
        }) => {
            clean_ok = false;
            json!({ "status": "violated", "face": face, "weight_min": min, "weight_max": max, "witnesses": witnesses })
        }
        Err(e) => return Err(e.into()),
    };
    Ok(Outcome {
        assumptions_hold: clean_ok && report.nonneg_ok && report.ellipticity_ok,
        results: json!({
            "operator": op.name(),
            "domain": op.domain().to_string(),
            "cleanness": cleanness,
            "assumptions": report,
        }),
    })
}

fn simulate(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let p0 = ctx.point(&op)?;
    let horizon = ctx.need("horizon", &ctx.cfg.horizon)?;
    let n = ctx.need("n_paths", &ctx.cfg.n_paths)?;
    let sim = Simulator::new(op.clone(), ctx.sim_config(horizon)?)?;
    let recs = sim.run(&p0, n, ctx.cfg.workers)?;
    let mut w = ctx.csv("paths.csv")?;
    let d = op.dim();
    let mut header = vec![
        "path".to_string(),
        "terminal_time".into(),
        "terminal_stratum".into(),
        "events".into(),
        "first_face".into(),
        "first_time".into(),
    ];
    header.extend((0..d).map(|k| format!("z{k}")));
    w.write_record(&header)?;
    let mut absorbed = 0u64;
    for r in &recs {
        let first = r.first_hit();
        if first.is_some() {
            absorbed += 1;
        }
        let mut row = vec![
            r.path_index.to_string(),
            r.terminal_time.to_string(),
            r.terminal_stratum.to_string(),
            r.events.len().to_string(),
            first.map(|e| e.face.to_string()).unwrap_or_default(),
            first.map(|e| e.time.to_string()).unwrap_or_default(),
        ];
        row.extend(r.terminal.coords().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    if ctx.cfg.record_every.is_some() {
        let mut t = ctx.csv("trajectories.csv")?;
        let mut header = vec!["path".to_string(), "time".into()];
        header.extend((0..d).map(|k| format!("z{k}")));
        t.write_record(&header)?;
        for r in &recs {
            for (time, z) in r.trajectory.iter().flatten() {
                let mut row = vec![r.path_index.to_string(), time.to_string()];
                row.extend(z.iter().map(f64::to_string));
                t.write_record(&row)?;
            }
        }
        t.flush()?;
    }
    let hit = kimura_core::estimators::Proportion::new(absorbed, n);
    Ok(Outcome::ok(json!({ "n_paths": n, "absorbed": hit })))
}

fn decompose_task(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let p0 = ctx.point(&op)?;
    let t = ctx.need("t", &ctx.cfg.t)?;
    let n = ctx.need("n_paths", &ctx.cfg.n_paths)?;
    let bins = ctx.cfg.bins.unwrap_or(20);
    let dec = decompose(&op, &p0, t, n, &ctx.sim_config(t)?, bins, ctx.cfg.workers)?;
    dec.write_masses_csv(ctx.file("masses.csv")?)?;
    dec.interior.write_csv(ctx.file("interior.csv")?, n)?;
    let masses: serde_json::Map<String, Value> =
        dec.masses.iter().map(|(s, p)| (s.to_string(), json!(p))).collect();
    Ok(Outcome::ok(json!({ "t": t, "n_paths": n, "masses": masses })))
}

fn hitting(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let p0 = ctx.point(&op)?;
    let face = ctx.need("face", &ctx.cfg.face)?;
    let horizon = ctx.need("horizon", &ctx.cfg.horizon)?;
    let n = ctx.need("n_paths", &ctx.cfg.n_paths)?;
    let time_edges = uniform_edges(0.0, horizon, ctx.cfg.time_bins.unwrap_or(50));
    let loc_edges = uniform_edges(0.0, op.domain().extent(), ctx.cfg.loc_bins.unwrap_or(1));
    let h = hitting_histogram(&op, &p0, face, n, &ctx.sim_config(horizon)?, time_edges, loc_edges, ctx.cfg.workers)?;
    h.write_csv(ctx.file("hitting.csv")?)?;
    Ok(Outcome::ok(json!({
        "face": face,
        "n_paths": n,
        "hit_mass": h.cumulative_mass(horizon),
        "time_density": h.time_density(),
        "time_edges": h.time_edges,
    })))
}

fn occupation(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let p0 = ctx.point(&op)?;
    let horizon = ctx.need("horizon", &ctx.cfg.horizon)?;
    let n = ctx.need("n_paths", &ctx.cfg.n_paths)?;
    let eps = ctx.need("eps", &ctx.cfg.eps)?;
    let occ = transverse_occupation(&op, &p0, horizon, n, &ctx.sim_config(horizon)?, &eps, ctx.cfg.workers)?;
    let mut w = ctx.csv("occupation.csv")?;
    w.write_record(["face", "eps", "mean", "stderr"])?;
    for c in &occ.curves {
        for i in 0..c.eps.len() {
            w.write_record([c.face.to_string(), c.eps[i].to_string(), c.mean[i].to_string(), c.stderr[i].to_string()])?;
        }
    }
    w.flush()?;
    Ok(Outcome::ok(json!(occ)))
}

fn kernel(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let p0 = ctx.need("p0", &ctx.cfg.p0)?;
    let horizon = ctx.need("horizon", &ctx.cfg.horizon)?;
    let grid = Grid1D::new(&op, ctx.cfg.grid.unwrap_or(400))?;
    let st = ctx.stepping();
    let ks = dirichlet_kernel(&grid, p0[0], horizon, &st)?;
    ks.write_csv(ctx.file("kernel.csv")?)?;
    let keep: Vec<usize> = (0..ks.times.len())
        .filter(|&i| i % st.store_every == 0 || i + 1 == ks.times.len())
        .collect();
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let mut caloric = serde_json::Map::new();
    for face in [1, 2] {
        match caloric_density(&ks, face) {
            Ok(h) => {
                caloric.insert(face.to_string(), json!({ "density": pick(&h.density), "cumulative": h.cumulative(horizon) }));
            }
            Err(Error::FaceNotTangent { .. } | Error::InvalidFace { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Outcome::ok(json!({
        "p0": p0[0],
        "source_node": ks.source_node,
        "times": pick(&ks.times),
        "survival": pick(&ks.survival),
        "flux": [pick(&ks.flux[0]), pick(&ks.flux[1])],
        "caloric": caloric,
    })))
}

fn zeta(ctx: &Ctx) -> Zeta {
    ctx.cfg.zeta.unwrap_or(Zeta::Ramp { t1: 1.0 })
}

fn duhamel(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let horizon = ctx.need("horizon", &ctx.cfg.horizon)?;
    let face = ctx.cfg.face.unwrap_or(1);
    let grid = Grid1D::new(&op, ctx.cfg.grid.unwrap_or(400))?;
    let z = zeta(ctx);
    let f = move |t: f64| z.eval(t);
    let st = ctx.stepping();
    let d = duhamel_solve(&grid, &f, face, horizon, &st)?;
    let e = solve_dirichlet_direct(&grid, &f, face, horizon, &st)?;
    let mut w = ctx.csv("duhamel.csv")?;
    w.write_record(["x", "duhamel", "direct", "difference"])?;
    let mut max_diff = 0.0f64;
    for (k, x) in grid.nodes.iter().enumerate() {
        let (a, b) = (d.last()[k], e.last()[k]);
        max_diff = max_diff.max((a - b).abs());
        w.write_record([x.to_string(), a.to_string(), b.to_string(), (a - b).to_string()])?;
    }
    w.flush()?;
    let mut results = json!({ "horizon": horizon, "face": face, "zeta": z, "max_difference": max_diff });
    if let (Some(p0), Some(n)) = (&ctx.cfg.p0, ctx.cfg.n_paths) {
        let rc = stochastic_rep_check(
            &op,
            &f,
            face,
            p0[0],
            horizon,
            n,
            grid.cells(),
            &st,
            &ctx.sim_config(horizon)?,
            ctx.cfg.workers,
        )?;
        results["stochastic"] = json!(rc);
    }
    Ok(Outcome::ok(results))
}

/// PDE survival against the Monte Carlo fraction of paths still away from the
/// tangent boundary, at each of `times`.
fn crosscheck(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let p0 = ctx.point(&op)?;
    let times = ctx.need("times", &ctx.cfg.times)?;
    let n = ctx.need("n_paths", &ctx.cfg.n_paths)?;
    let cells = ctx.cfg.grid.unwrap_or(800);
    let tmax = times.iter().copied().fold(0.0, f64::max);
    let st = ctx.stepping();
    let z = p0.coords();
    let survival = |cells: usize| -> Result<Vec<f64>, TaskError> {
        times
            .iter()
            .map(|&t| match op.dim() {
                1 => {
                    let g = Grid1D::new(&op, cells)?;
                    let u = solve_backward(&g, &vec![1.0; cells + 1], t, &st)?;
                    Ok(g.interpolate(u.last(), z[0]))
                }
                2 => {
                    let prob = Problem2D::from_operator(&op, cells)?;
                    let f = vec![1.0; prob.nx() * prob.ny()];
                    let u = solve_backward_2d(&prob, &f, t, st.dt, usize::MAX)?;
                    Ok(prob.interpolate(u.last(), z[0], z[1]))
                }
                d => Err(Error::InvalidParameter(format!("crosscheck solves in one or two dimensions, got {d}")).into()),
            })
            .collect()
    };
    let fine = survival(cells)?;
    let half = survival(cells / 2)?;
    let mut cfg = ctx.sim_config(tmax)?;
    cfg.stop_at_first_hit = true;
    let sim = Simulator::new(op.clone(), cfg)?;
    let recs = sim.run(&p0, n, ctx.cfg.workers)?;
    let mut w = ctx.csv("crosscheck.csv")?;
    w.write_record(["t", "pde", "pde_half_grid", "mc", "stderr", "difference", "budget"])?;
    let mut rows = Vec::new();
    let mut all_ok = true;
    for (i, &t) in times.iter().enumerate() {
        let alive = recs
            .iter()
            .filter(|r| r.first_hit().is_none_or(|e| e.time > t))
            .count() as u64;
        let mc = kimura_core::estimators::Proportion::new(alive, n);
        let diff = (fine[i] - mc.estimate).abs();
        let budget = 3.0 * mc.stderr + 2.0 * (fine[i] - half[i]).abs();
        all_ok &= diff <= budget;
        w.write_record([
            t.to_string(),
            fine[i].to_string(),
            half[i].to_string(),
            mc.estimate.to_string(),
            mc.stderr.to_string(),
            diff.to_string(),
            budget.to_string(),
        ])?;
        rows.push(json!({ "t": t, "pde": fine[i], "pde_half_grid": half[i], "mc": mc, "difference": diff, "budget": budget }));
    }
    w.flush()?;
    Ok(Outcome::ok(json!({ "rows": rows, "within_budget": all_ok })))
}

fn corner(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let p0 = ctx.point(&op)?;
    let horizon = ctx.need("horizon", &ctx.cfg.horizon)?;
    let n = ctx.need("n_paths", &ctx.cfg.n_paths)?;
    let faces = ctx.cfg.faces.unwrap_or([1, 2]);
    let eps = ctx
        .cfg
        .eps
        .clone()
        .unwrap_or_else(|| vec![kimura_core::estimators::DEFAULT_EPS_CORNER]);
    let c = corner_hit_probability(&op, &p0, (faces[0], faces[1]), n, &ctx.sim_config(horizon)?, &eps, ctx.cfg.workers)?;
    let mut w = ctx.csv("corner.csv")?;
    w.write_record(["eps", "count", "probability", "stderr", "ci_low", "ci_high"])?;
    for (e, p) in c.eps.iter().zip(&c.estimates) {
        w.write_record([
            e.to_string(),
            p.count.to_string(),
            p.estimate.to_string(),
            p.stderr.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(Outcome::ok(json!(c)))
}

fn counterexample(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let p0 = ctx.need("p0", &ctx.cfg.p0)?;
    if p0.len() != 2 {
        return Err(ConfigError::Invalid {
            field: "p0",
            message: "the counterexample lives in two corner coordinates".into(),
        }
        .into());
    }
    let cfg = CounterexampleConfig {
        dt: ctx.need("dt", &ctx.cfg.dt)?,
        horizon: ctx.need("horizon", &ctx.cfg.horizon)?,
        seed: ctx.cfg.seed,
        ..Default::default()
    };
    let n = ctx.need("n_paths", &ctx.cfg.n_paths)?;
    let p = [p0[0], p0[1]];
    let mut w = ctx.csv("counterexample.csv")?;
    w.write_record(["dt", "count", "frequency", "stderr", "ci_low", "ci_high"])?;
    let rows = if ctx.cfg.coupled.unwrap_or(false) {
        let (a, b) = counterexample_frequency_coupled(p, &cfg, n, ctx.cfg.workers)?;
        vec![(cfg.dt, a), (0.5 * cfg.dt, b)]
    } else {
        vec![(cfg.dt, counterexample_frequency(p, &cfg, n, ctx.cfg.workers)?)]
    };
    for (dt, f) in &rows {
        w.write_record([
            dt.to_string(),
            f.count.to_string(),
            f.estimate.to_string(),
            f.stderr.to_string(),
            f.ci_low.to_string(),
            f.ci_high.to_string(),
        ])?;
    }
    w.flush()?;
    let rows: Vec<Value> = rows.iter().map(|(dt, f)| json!({ "dt": dt, "frequency": f })).collect();
    Ok(Outcome::ok(json!({ "p0": p0, "horizon": cfg.horizon, "rows": rows })))
}

fn doubling(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let op = ctx.kimura()?;
    let p0 = ctx.point(&op)?;
    let face = ctx.need("face", &ctx.cfg.face)?;
    let horizon = ctx.need("horizon", &ctx.cfg.horizon)?;
    let t = ctx.need("t", &ctx.cfg.t)?;
    let n = ctx.need("n_paths", &ctx.cfg.n_paths)?;
    let radii = ctx.need("radii", &ctx.cfg.radii)?;
    let q = ctx.cfg.q.clone().unwrap_or_else(|| vec![0.0; op.dim() - 1]);
    let q = Point::from_coords(&q, (op.n() - 1).min(q.len()));
    let h = hitting_histogram(
        &op,
        &p0,
        face,
        n,
        &ctx.sim_config(horizon)?,
        uniform_edges(0.0, horizon, 1),
        uniform_edges(0.0, op.domain().extent(), 1),
        ctx.cfg.workers,
    )?;
    let pts = doubling_ratio(&h, &q, &radii, t)?;
    let mut w = ctx.csv("doubling.csv")?;
    w.write_record(["r", "count_r", "count_2r", "ratio", "stderr"])?;
    for d in &pts {
        w.write_record([
            d.r.to_string(),
            d.count_r.to_string(),
            d.count_2r.to_string(),
            d.ratio.to_string(),
            d.stderr.to_string(),
        ])?;
    }
    w.flush()?;
    let max_ratio = pts.iter().map(|d| d.ratio).fold(0.0, f64::max);
    Ok(Outcome::ok(json!({ "face": face, "t": t, "points": pts, "max_ratio": max_ratio })))
}

fn write_reports(ctx: &Ctx, reports: &[(&str, &BarrierReport)]) -> Result<(), TaskError> {
    let mut w = ctx.csv("barriers.csv")?;
    w.write_record(["check", "barrier", "grid", "points", "pass", "min_margin", "violations", "flags"])?;
    for (label, r) in reports {
        w.write_record([
            label.to_string(),
            r.barrier.clone(),
            r.grid.to_string(),
            r.points.to_string(),
            r.pass.to_string(),
            r.min_margin.to_string(),
            r.violation_count.to_string(),
            r.flags.join("; "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Barrier checks; each found parameter set is re-evaluated on a 10x finer grid.
fn barriers(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let grid = ctx.cfg.grid.unwrap_or(40);
    match parse_preset(&ctx.cfg.operator)? {
        PresetSpec::AppendixA(p) => {
            let op = AppendixOperator::from_params(&p);
            let nu = ctx.cfg.nu.unwrap_or(p.nu);
            let w2 = check_barrier_w2(&op, nu, ctx.cfg.h, grid)?;
            let w2_fine = evaluate_w2(&op, nu, w2.params["H"], 10 * grid)?;
            let theta2 = ctx.cfg.theta2.unwrap_or(0.5);
            let w1 = check_barrier_w1(&op, theta2, ctx.cfg.k.unwrap_or(0.25), ctx.cfg.beta, grid)?;
            let params = W1Params {
                theta2,
                k: w1.params["k"],
                beta: w1.params["beta"],
            };
            let w1_fine = evaluate_w1(&op, params, 10 * grid)?;
            write_reports(ctx, &[("w2", &w2), ("w2_fine", &w2_fine), ("w1", &w1), ("w1_fine", &w1_fine)])?;
            Ok(Outcome {
                assumptions_hold: w2.pass && w2_fine.pass && w1.pass && w1_fine.pass,
                results: json!({ "w2": w2, "w2_fine": w2_fine, "w1": w1, "w1_fine": w1_fine }),
            })
        }
        PresetSpec::Kimura(op) => {
            let reg = check_barrier_regularity(&op, ctx.cfg.rho, grid)?;
            let fine = evaluate_regularity(&op, reg.params["rho"], 10 * grid)?;
            write_reports(ctx, &[("w_reg", &reg), ("w_reg_fine", &fine)])?;
            Ok(Outcome {
                assumptions_hold: reg.pass && fine.pass,
                results: json!({ "w_reg": reg, "w_reg_fine": fine }),
            })
        }
    }
}

fn growth(ctx: &Ctx) -> Result<Outcome, TaskError> {
    let p = ctx.appendix()?;
    let op = AppendixOperator::from_params(&p);
    let radii = ctx
        .cfg
        .radii
        .clone()
        .unwrap_or_else(|| vec![0.5, 0.25, 0.125, 0.0625, 0.03125]);
    let rep = growth_ratio(&op, ctx.cfg.nu.unwrap_or(p.nu), ctx.cfg.far.unwrap_or(1.0), &radii, ctx.cfg.grid.unwrap_or(64))?;
    let mut w = ctx.csv("growth.csv")?;
    w.write_record(["r", "m_half", "m_one", "ratio"])?;
    for i in 0..radii.len() {
        w.write_record([
            radii[i].to_string(),
            rep.m_half[i].to_string(),
            rep.m_one[i].to_string(),
            rep.ratios[i].map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(Outcome {
        assumptions_hold: rep.theta_obs.is_none_or(|t| t < 1.0),
        results: json!(rep),
    })
}

pub fn output_dir(cfg: &RunConfig, flag: Option<&Path>, task: &str) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(task))
}
