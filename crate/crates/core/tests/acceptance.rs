//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! `cargo test -p kimura-core --test acceptance -- A4 A7` runs a subset.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kimura_core::estimators::{
    corner_hit_probability, decompose, doubling_ratio, hitting_histogram,
    transverse_occupation, uniform_edges, Proportion,
};
use kimura_core::operator::parse_preset;
use kimura_core::operator::Poly;
use kimura_core::operator::presets::{kimura1d, model1d, product, wright_fisher};
use kimura_core::pde::{
    caloric_density, dirichlet_kernel, duhamel_solve, solve_backward, solve_dirichlet_direct, solve_forward,
    stochastic_rep_check, Grid1D, Stepping,
};
use kimura_core::sde::{simulate_counterexample_coupled, CounterexampleConfig, SimConfig, Simulator};
use kimura_core::verify::{
    check_barrier_regularity, check_barrier_w1, check_barrier_w2, evaluate_regularity, evaluate_w1, evaluate_w2,
    growth_ratio, AppendixOperator, W1Params,
};
use kimura_core::{DomainSpec, KimuraOperator, Point, StratumId};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn pde_stepping(dt: f64) -> Stepping {
    Stepping {
        dt,
        theta: 1.0,
        store_every: 100,
    }
}

/// Neutral Wright-Fisher from 0.3: absorbed at 1 with probability 0.3.
fn a1() -> Outcome {
    let op = wright_fisher(1, &[0.0, 0.0]).unwrap();
    let n = 100_000;
    let start = Instant::now();
    let dec = decompose(&op, &Point::corner(vec![0.3]), 50.0, n, &SimConfig::new(1e-4, 50.0, 1), 20, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let interior = dec.mass(&StratumId::interior());
    let zero = dec.mass(&StratumId::from_faces([1]));
    let one = dec.mass(&StratumId::from_faces([2]));
    let pass = interior.estimate <= 0.01
        && (zero.estimate - 0.7).abs() <= 3.0 * zero.stderr.max(1e-12)
        && (one.estimate - 0.3).abs() <= 3.0 * one.stderr.max(1e-12)
        && secs <= 60.0;
    (
        pass,
        format!(
            "interior {:.5}, {{0}} {:.5} ± {:.5}, {{1}} {:.5} ± {:.5}, {secs:.1} s on one worker",
            interior.estimate, zero.estimate, zero.stderr, one.estimate, one.stderr
        ),
    )
}

fn a2() -> Outcome {
    let op = product(&[model1d(0.0, 1.0).unwrap(), model1d(0.0, 1.0).unwrap()]).unwrap();
    let eps = [1e-2, 1e-3, 1e-4];
    let start = Instant::now();
    let c = corner_hit_probability(&op, &Point::corner(vec![0.3, 0.3]), (1, 2), 10_000, &SimConfig::new(1e-4, 5.0, 2), &eps, 0)
        .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let at = |e: f64| c.estimates[eps.iter().position(|&v| v == e).unwrap()];
    let pass = at(1e-3).count == 0 && c.estimates.iter().all(|p| p.ci_high <= 3.7e-4) && secs <= 120.0;
    let counts: Vec<String> = c.estimates.iter().zip(eps).map(|(p, e)| format!("ε={e:e}: {} (≤{:.2e})", p.count, p.ci_high)).collect();
    (pass, format!("corner hits {}, {secs:.1} s", counts.join(", ")))
}

/// The sum process is a Feller branching diffusion; the exact probability of
/// reaching 0 by `T` is `exp(-s0 e^T / (e^T - 1))`.
fn a3() -> Outcome {
    let cfg = CounterexampleConfig {
        dt: 1e-4,
        horizon: 20.0,
        seed: 3,
        ..Default::default()
    };
    let n = 10_000;
    let start = Instant::now();
    let (mut coarse_hits, mut fine_hits, mut only_coarse, mut only_fine) = (0, 0, 0, 0);
    for i in 0..n {
        let (c, f) = simulate_counterexample_coupled([0.05, 0.05], &cfg, i).unwrap();
        coarse_hits += c.corner_hit as u64;
        fine_hits += f.corner_hit as u64;
        only_coarse += (c.corner_hit && !f.corner_hit) as u64;
        only_fine += (f.corner_hit && !c.corner_hit) as u64;
    }
    let secs = start.elapsed().as_secs_f64();
    let (coarse, fine) = (Proportion::new(coarse_hits, n), Proportion::new(fine_hits, n));
    let et = 20f64.exp();
    let exact = (-0.1 * et / (et - 1.0)).exp();
    let pass = coarse.estimate >= 0.9 && fine.estimate > coarse.estimate && secs <= 300.0;
    (
        pass,
        format!(
            "dt=1e-4: {:.4} ± {:.4}, dt=5e-5: {:.4} ± {:.4} ({only_fine} paths hit only at dt/2, {only_coarse} only at dt), exact {exact:.4}, {secs:.1} s",
            coarse.estimate, coarse.stderr, fine.estimate, fine.stderr
        ),
    )
}

fn a4() -> Outcome {
    let op = kimura1d(0.0, 0.0).unwrap();
    let times = [0.1, 0.5, 1.0];
    let st = pde_stepping(1e-4);
    let survival = |cells: usize, t: f64| {
        let g = Grid1D::new(&op, cells).unwrap();
        let u = solve_backward(&g, &vec![1.0; cells + 1], t, &st).unwrap();
        g.interpolate(u.last(), 0.3)
    };
    let n = 40_000;
    let mut cfg = SimConfig::new(1e-4, 1.0, 4);
    cfg.stop_at_first_hit = true;
    let recs = Simulator::new(op.clone(), cfg).unwrap().run(&Point::corner(vec![0.3]), n, 0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for t in times {
        let (fine, half) = (survival(800, t), survival(400, t));
        let alive = recs.iter().filter(|r| r.first_hit().is_none_or(|e| e.time > t)).count() as u64;
        let mc = Proportion::new(alive, n);
        let diff = (fine - mc.estimate).abs();
        let budget = 3.0 * mc.stderr + 2.0 * (fine - half).abs();
        pass &= diff <= budget;
        parts.push(format!("t={t}: |{fine:.4} - {:.4}| = {diff:.1e} ≤ {budget:.1e}", mc.estimate));
    }
    (pass, parts.join("; "))
}

fn a5() -> Outcome {
    let op = kimura1d(0.0, 0.0).unwrap();
    let bins = 50;
    let h = hitting_histogram(
        &op,
        &Point::corner(vec![0.3]),
        1,
        100_000,
        &SimConfig::new(1e-4, 1.0, 5),
        uniform_edges(0.0, 1.0, bins),
        uniform_edges(0.0, 1.0, 1),
        0,
    )
    .unwrap();
    let ks = dirichlet_kernel(&Grid1D::new(&op, 800).unwrap(), 0.3, 1.0, &pde_stepping(1e-4)).unwrap();
    let cal = caloric_density(&ks, 1).unwrap();
    let l1: f64 = h
        .time_density()
        .iter()
        .zip(h.time_edges.windows(2))
        .map(|((d, _), w)| (d - cal.bin_average(w[0], w[1])).abs() * (w[1] - w[0]))
        .sum();
    (l1 <= 0.05, format!("L1 distance {l1:.4} over {bins} bins"))
}

fn a6() -> Outcome {
    let eps = [1e-3, 10f64.powf(-2.5), 1e-2, 10f64.powf(-1.5), 1e-1];
    let mut pass = true;
    let mut parts = Vec::new();
    for (b, seed) in [(0.3, 61), (0.7, 62)] {
        let op = model1d(b, 1.0).unwrap();
        let occ = transverse_occupation(&op, &Point::corner(vec![0.5]), 1.0, 4000, &SimConfig::new(1e-5, 1.0, seed), &eps, 0)
            .unwrap();
        let c = &occ.curves[0];
        let ok = (c.slope - b).abs() <= 0.1 && c.intercept.abs() <= 3.0 * c.intercept_stderr;
        pass &= ok;
        parts.push(format!(
            "b={b}: slope {:.3}, intercept {:.1e} ± {:.1e}",
            c.slope, c.intercept, c.intercept_stderr
        ));
    }
    (pass, parts.join("; "))
}

fn a7() -> Outcome {
    let op = wright_fisher(1, &[0.3, 0.0]).unwrap();
    let g = Grid1D::new(&op, 200).unwrap();
    let st = Stepping {
        dt: 1e-3,
        theta: 0.5,
        store_every: 1000,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let f: Vec<f64> = (0..=200).map(|_| rng.random::<f64>() - 0.5).collect();
        let gv: Vec<f64> = (0..=200).map(|_| rng.random::<f64>() - 0.5).collect();
        let tg = solve_backward(&g, &gv, 0.1, &st).unwrap();
        let tf = solve_forward(&g, &f, 0.1, &st).unwrap();
        let (lhs, rhs) = (g.inner(&f, tg.last()), g.inner(tf.last(), &gv));
        worst = worst.max((lhs - rhs).abs());
    }
    let sym = model1d(0.6, 1.0).unwrap();
    let g = Grid1D::new(&sym, 800).unwrap();
    let st = pde_stepping(1e-4);
    let kp = dirichlet_kernel(&g, 0.2, 0.3, &st).unwrap();
    let kq = dirichlet_kernel(&g, 0.6, 0.3, &st).unwrap();
    let (a, b) = (kp.slices.last()[kq.source_node], kq.slices.last()[kp.source_node]);
    let asym = (a - b).abs();
    (
        worst <= 1e-10 && asym <= 1e-4,
        format!("duality error {worst:.1e} over 20 pairs, kernel asymmetry {asym:.1e}"),
    )
}

fn a8() -> Outcome {
    let op = kimura1d(0.0, 0.0).unwrap();
    let g = Grid1D::new(&op, 800).unwrap();
    let st = pde_stepping(1e-4);
    let zeta = |t: f64| {
        let s = ((t - 0.2) / 0.3).clamp(0.0, 1.0);
        s * s * (3.0 - 2.0 * s)
    };
    let d = duhamel_solve(&g, &zeta, 1, 1.0, &st).unwrap();
    let e = solve_dirichlet_direct(&g, &zeta, 1, 1.0, &st).unwrap();
    let diff = d.last().iter().zip(e.last()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rc = stochastic_rep_check(&op, &zeta, 1, 0.3, 1.0, 40_000, 800, &st, &SimConfig::new(1e-4, 1.0, 8), 0).unwrap();
    let budget = 3.0 * rc.stderr + 1e-3;
    (
        diff <= 1e-3 && rc.discrepancy <= budget,
        format!(
            "Duhamel vs direct {diff:.1e}; PDE {:.4} vs MC {:.4}, discrepancy {:.1e} ≤ {budget:.1e}",
            rc.pde, rc.mc, rc.discrepancy
        ),
    )
}

fn a9() -> Outcome {
    let appendix = |s: &str| match parse_preset(s).unwrap() {
        kimura_core::operator::PresetSpec::AppendixA(p) => AppendixOperator::from_params(&p),
        _ => unreachable!(),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for s in ["appendix-A(1, 1, 0, 0.5, 0.5)", "appendix-A(2, 0.5, 0, 1, 0.5)"] {
        let op = appendix(s);
        let w2 = check_barrier_w2(&op, 0.5, None, 40).unwrap();
        let w2f = evaluate_w2(&op, 0.5, w2.params["H"], 400).unwrap();
        let w1 = check_barrier_w1(&op, 0.5, 0.25, None, 40).unwrap();
        let p = W1Params {
            theta2: 0.5,
            k: w1.params["k"],
            beta: w1.params["beta"],
        };
        let w1f = evaluate_w1(&op, p, 400).unwrap();
        let reports = [&w2, &w2f, &w1, &w1f];
        pass &= reports.iter().all(|r| r.pass && r.min_margin > 0.0 && r.flags.is_empty());
        for r in reports.iter().filter(|r| !r.flags.is_empty()) {
            parts.push(format!("{s} {}: {}", r.barrier, r.flags.join("; ")));
        }
        parts.push(format!(
            "{s}: w2 H={:.3e} margin {:.2e}/{:.2e}, w1 β={:.3e} margin {:.2e}/{:.2e}",
            w2.params["H"], w2.min_margin, w2f.min_margin, p.beta, w1.min_margin, w1f.min_margin
        ));
    }
    let ops: [(&str, KimuraOperator); 2] = [
        ("model1d(0)", model1d(0.0, 1.0).unwrap()),
        ("product(model1d(0), model1d(0.5))", product(&[model1d(0.0, 1.0).unwrap(), model1d(0.5, 1.0).unwrap()]).unwrap()),
    ];
    for (s, op) in ops {
        let r = check_barrier_regularity(&op, None, 40).unwrap();
        let f = evaluate_regularity(&op, r.params["rho"], 400).unwrap();
        let ok = r.pass && f.pass && r.min_margin > 0.0 && f.min_margin > 0.0;
        pass &= ok;
        parts.push(format!("{s}: w ρ={} margin {:.2e}/{:.2e}", r.params["rho"], r.min_margin, f.min_margin));
    }
    (pass, parts.join("; "))
}

fn a10() -> Outcome {
    let op = AppendixOperator::from_params(&kimura_core::operator::AppendixParams {
        a11: 1.0,
        a22: 1.0,
        b1: 0.0,
        b2: 0.5,
        nu: 0.5,
    });
    let radii = [0.5, 0.25, 0.125, 0.0625, 0.03125];
    let coarse = growth_ratio(&op, 0.5, 1.0, &radii, 64).unwrap();
    let fine = growth_ratio(&op, 0.5, 1.0, &radii, 128).unwrap();
    let mut pass = !coarse.degenerate && !fine.degenerate;
    let theta = coarse.theta_obs.unwrap_or(f64::INFINITY);
    let mut drift: f64 = 0.0;
    for i in 0..radii.len() {
        let (Some(a), Some(b)) = (coarse.ratios[i], fine.ratios[i]) else {
            pass = false;
            continue;
        };
        pass &= a <= theta && b <= fine.theta_obs.unwrap_or(f64::INFINITY);
        drift = drift.max((a - b).abs());
    }
    pass &= theta < 1.0 && fine.theta_obs.is_some_and(|t| t < 1.0) && drift <= 0.05;
    let rs: Vec<String> = coarse.ratios.iter().map(|r| format!("{:.3}", r.unwrap_or(f64::NAN))).collect();
    (
        pass,
        format!("ratios [{}], θ_obs {theta:.4}, grid-doubling change {drift:.3}", rs.join(", ")),
    )
}

/// A flat density gives ratio 8 at a curve face; `C = 16` leaves a factor 2.
fn a11() -> Outcome {
    let op = product(&[model1d(0.0, 1.0).unwrap(), model1d(0.5, 1.0).unwrap()]).unwrap();
    let h = hitting_histogram(
        &op,
        &Point::corner(vec![0.1, 0.3]),
        1,
        100_000,
        &SimConfig::new(1e-4, 0.5, 11),
        uniform_edges(0.0, 0.5, 1),
        uniform_edges(0.0, 1.0, 1),
        0,
    )
    .unwrap();
    let radii = [0.4, 0.2, 0.1, 0.05, 0.025];
    let pts = doubling_ratio(&h, &Point::corner(vec![0.3]), &radii, 0.05).unwrap();
    let bound = 16.0;
    let upper = |i: usize| pts[i].ratio + 1.96 * pts[i].stderr;
    let lower = |i: usize| pts[i].ratio - 1.96 * pts[i].stderr;
    let n = pts.len();
    let bounded = (0..n).all(|i| upper(i) <= bound);
    // No blow-up: the two smallest radii agree within their intervals.
    let overlap = lower(n - 1) <= upper(n - 2) && lower(n - 2) <= upper(n - 1);
    let rs: Vec<String> = pts.iter().map(|d| format!("{:.2}±{:.2}", d.ratio, d.stderr)).collect();
    (
        bounded && overlap,
        format!("ratios [{}] for r = 0.4 .. 0.025, bound {bound}", rs.join(", ")),
    )
}

fn random_poly(rng: &mut ChaCha8Rng, nvars: usize) -> Poly {
    let mut terms = Vec::new();
    for _ in 0..6 {
        let exps: Vec<u32> = (0..nvars).map(|_| rng.random_range(0..4)).collect();
        terms.push((exps, rng.random_range(-2.0..2.0)));
    }
    Poly::from_terms(nvars, terms)
}

fn a12() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (x, y) = (Poly::var(2, 0), Poly::var(2, 1));
    let op = KimuraOperator::builder(DomainSpec::corner_box(1, 1, 1.0).unwrap())
        .a(0, 0, &x + &y.scale(0.2))
        .b(0, Poly::constant(2, 0.4) + (&x * &y))
        .c(0, 0, Poly::constant(2, 0.3) + y.clone())
        .d(0, 0, Poly::constant(2, 1.0) + (&x * &x).scale(0.1))
        .e(0, y.scale(-0.5))
        .build()
        .unwrap();
    let us: Vec<Poly> = (0..5).map(|_| random_poly(&mut rng, 2)).collect();
    let pts: Vec<[f64; 2]> = (0..100).map(|_| [rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let mut worst: f64 = 0.0;
    for lambda in [1.0, 0.5, 0.25] {
        let lp = op.rescale(lambda).unwrap();
        let sl = f64::sqrt(lambda);
        for u in &us {
            let v = u.scale_vars(&[lambda, sl]);
            for zp in &pts {
                let lhs = lambda * op.apply(u, &Point::new(vec![lambda * zp[0]], vec![sl * zp[1]]), false).unwrap();
                let rhs = lp.apply(&v, &Point::new(vec![zp[0]], vec![zp[1]]), false).unwrap();
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    (worst <= 1e-8, format!("max error {worst:.1e} over 1500 evaluations per λ set"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 12] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
        ("A11", a11),
        ("A12", a12),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = run();
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{id:<4} {verdict} [{:.1} s] {detail}", start.elapsed().as_secs_f64());
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
