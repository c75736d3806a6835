use super::plane::*;
use super::*;
use crate::operator::presets::{kimura1d, model1d, product, wright_fisher};
use rand::{Rng, SeedableRng};
use std::sync::Arc;

fn stepping(dt: f64) -> Stepping {
    Stepping {
        dt,
        theta: 1.0,
        store_every: 10,
    }
}

#[test]
fn grid_masses_match_closed_form() {
    // x∂² + b∂ has p = x^b, m = x^{b-1}.
    let op = model1d(0.5, 1.0).unwrap();
    let g = Grid1D::new(&op, 40).unwrap();
    assert_eq!(g.dirichlet, [false, false]);
    let mid = |k: usize| 0.5 * (g.nodes[k] + g.nodes[k + 1]);
    let exact0 = 2.0 * mid(0).sqrt();
    assert!((g.masses[0] - exact0).abs() < 1e-10 * exact0, "{} {}", g.masses[0], exact0);
    let exact5 = 2.0 * (mid(5).sqrt() - mid(4).sqrt());
    assert!((g.masses[5] - exact5).abs() < 1e-12);
    let total: f64 = g.masses.iter().sum();
    assert!((total - 2.0).abs() < 1e-10);
    // ∫ x^{-1/2} over the first cell is 2√x₁.
    assert!((1.0 / g.conductance[0] - 2.0 * g.nodes[1].sqrt()).abs() < 1e-12);
}

#[test]
fn tangent_ends_are_dirichlet() {
    let g = Grid1D::new(&kimura1d(0.0, 0.0).unwrap(), 20).unwrap();
    assert_eq!(g.dirichlet, [true, true]);
    assert_eq!(g.masses[0], 0.0);
    assert_eq!(g.masses[20], 0.0);
    assert!(g.masses[1..20].iter().all(|&m| m > 0.0));
    // Symmetric grading.
    for k in 0..=20 {
        assert!((g.nodes[k] + g.nodes[20 - k] - 1.0).abs() < 1e-15);
    }
    let g = Grid1D::new(&model1d(0.0, 2.0).unwrap(), 20).unwrap();
    assert_eq!(g.dirichlet, [true, false]);
    assert!(g.masses[20] > 0.0);
}

#[test]
fn transverse_ends_conserve_constants() {
    let op = kimura1d(0.5, 0.5).unwrap();
    let g = Grid1D::new(&op, 100).unwrap();
    let u = solve_backward(&g, &vec![1.0; 101], 1.0, &stepping(1e-3)).unwrap();
    for s in &u.values {
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}

#[test]
fn survival_decreases_and_norm_contracts() {
    let op = kimura1d(0.0, 0.0).unwrap();
    let g = Grid1D::new(&op, 100).unwrap();
    let u = solve_backward(&g, &vec![1.0; 101], 1.0, &stepping(1e-3)).unwrap();
    let j = g.node_of(0.3);
    for w in u.values.windows(2) {
        assert!(w[1][j] < w[0][j]);
        assert!(g.inner(&w[1], &w[1]) <= g.inner(&w[0], &w[0]) + 1e-14);
        assert!(w[1].iter().all(|&v| v >= -KERNEL_CLIP));
    }
}

/// Neutral Wright–Fisher: `u = x` solves `L u = 0` and is fixed by the
/// semigroup with boundary values 0 and 1.
#[test]
fn harmonic_function_is_stationary() {
    let op = kimura1d(0.0, 0.0).unwrap();
    let g = Grid1D::new(&op, 60).unwrap();
    let u = solve_dirichlet_direct(&g, &|t: f64| if t > 0.0 { 1.0 } else { 0.0 }, 2, 10.0, &stepping(1e-2)).unwrap();
    for (x, v) in g.nodes.iter().zip(u.last()) {
        assert!((x - v).abs() < 1e-6, "{x} {v}");
    }
}

/// For `x∂²` on `[0, ∞)` the survival probability is `1 - exp(-x/t)`.
#[test]
fn feller_survival_matches_closed_form() {
    let op = model1d(0.0, 20.0).unwrap();
    let g = Grid1D::new(&op, 800).unwrap();
    let t = 1.0;
    let u = solve_backward(&g, &vec![1.0; 801], t, &stepping(1e-3)).unwrap();
    for x in [0.1, 0.3, 1.0] {
        let exact = 1.0 - (-x / t).exp();
        assert!((g.interpolate(u.last(), x) - exact).abs() < 3e-3, "{x}");
    }
}

#[test]
fn kernel_survival_and_flux_balance() {
    let op = kimura1d(0.0, 0.0).unwrap();
    let g = Grid1D::new(&op, 200).unwrap();
    let ks = dirichlet_kernel(&g, 0.3, 1.0, &stepping(1e-3)).unwrap();
    assert!(ks.survival[1] > 0.99);
    assert!(ks.survival.windows(2).all(|w| w[1] <= w[0]));
    let (a0, a1) = (ks.absorbed(0), ks.absorbed(1));
    for i in 0..ks.times.len() {
        assert!((ks.survival[i] + a0[i] + a1[i] - 1.0).abs() < 1e-10);
    }
    for s in &ks.slices.values {
        assert!(s.iter().all(|&v| v >= -KERNEL_CLIP));
    }
    // Backward solve with f ≡ 1 gives the same survival probability.
    let u = solve_backward(&g, &vec![1.0; 201], 1.0, &stepping(1e-3)).unwrap();
    let back = u.last()[ks.source_node];
    assert!((back - ks.survival.last().unwrap()).abs() < 1e-10);
}

#[test]
fn caloric_density_accumulates_to_absorbed_mass() {
    let op = kimura1d(0.0, 0.0).unwrap();
    let g = Grid1D::new(&op, 400).unwrap();
    let ks = dirichlet_kernel(&g, 0.3, 1.0, &stepping(1e-4)).unwrap();
    let h0 = caloric_density(&ks, 1).unwrap();
    let h1 = caloric_density(&ks, 2).unwrap();
    assert!(h0.density.iter().chain(&h1.density).all(|&h| h >= 0.0));
    let loss = 1.0 - ks.survival.last().unwrap();
    let total = h0.cumulative(1.0) + h1.cumulative(1.0);
    assert!((total - loss).abs() < 0.02 * loss, "{total} vs {loss}");
    let a0 = *ks.absorbed(0).last().unwrap();
    assert!((h0.cumulative(1.0) - a0).abs() < 0.02 * a0);
}

#[test]
fn caloric_density_errors() {
    let ks = dirichlet_kernel(&Grid1D::new(&model1d(0.0, 1.0).unwrap(), 50).unwrap(), 0.3, 0.1, &stepping(1e-3)).unwrap();
    assert_eq!(caloric_density(&ks, 2).unwrap_err(), Error::InvalidFace { face: 2 });
    let mut coarse = ks.clone();
    // A tiny first cell leaves one node within ten first-cell widths.
    coarse.grid.nodes[1] = 1e-4 * coarse.grid.nodes[2];
    let r = caloric_density(&coarse, 1);
    assert!(matches!(r, Err(Error::GridTooCoarse { face: 1, .. })), "{r:?}");
    let t = dirichlet_kernel(&Grid1D::new(&model1d(0.5, 1.0).unwrap(), 50).unwrap(), 0.3, 0.1, &stepping(1e-3)).unwrap();
    assert_eq!(caloric_density(&t, 1).unwrap_err(), Error::FaceNotTangent { face: 1 });
}

#[test]
fn discrete_duality_is_exact() {
    let op = wright_fisher(1, &[0.3, 0.6]).unwrap();
    let g = Grid1D::new(&op, 80).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut f: Vec<f64> = (0..81).map(|_| rng.random::<f64>()).collect();
    let gv: Vec<f64> = (0..81).map(|_| rng.random::<f64>()).collect();
    f[0] = 0.0;
    let st = Stepping {
        dt: 1e-2,
        theta: 0.5,
        store_every: 1,
    };
    let tg = solve_backward(&g, &gv, 0.2, &st).unwrap();
    let hat = solve_forward(&g, &f, 0.2, &st).unwrap();
    let lhs = g.inner(&f, tg.last());
    let rhs = g.inner(hat.last(), &gv);
    assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
}

#[test]
fn self_adjoint_kernel_is_symmetric() {
    let op = model1d(0.6, 1.0).unwrap();
    let g = Grid1D::new(&op, 200).unwrap();
    let st = stepping(1e-3);
    let (p, q) = (0.2, 0.6);
    let kp = dirichlet_kernel(&g, p, 0.3, &st).unwrap();
    let kq = dirichlet_kernel(&g, q, 0.3, &st).unwrap();
    let (jp, jq) = (kp.source_node, kq.source_node);
    let a = kp.slices.last()[jq];
    let b = kq.slices.last()[jp];
    assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} {b}");
}

#[test]
fn duhamel_agrees_with_direct_solve() {
    let op = kimura1d(0.0, 0.0).unwrap();
    let g = Grid1D::new(&op, 200).unwrap();
    let zeta = |t: f64| t.min(1.0);
    let st = stepping(1e-3);
    let d = duhamel_solve(&g, &zeta, 1, 1.5, &st).unwrap();
    let e = solve_dirichlet_direct(&g, &zeta, 1, 1.5, &st).unwrap();
    let diff = d.last().iter().zip(e.last()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-3, "{diff}");
    assert!((d.last()[0] - 1.0).abs() < 1e-12);
    assert!((g.interpolate(d.last(), 1e-4) - 1.0).abs() < 1e-2);

    let zero = duhamel_solve(&g, &|_| 0.0, 1, 0.5, &st).unwrap();
    assert!(zero.values.iter().flatten().all(|&v| v == 0.0));
    assert_eq!(duhamel_solve(&g, &|_| 1.0, 1, 0.5, &st).unwrap_err(), Error::IncompatibleData { value: 1.0 });
}

/// Independent Feller coordinates: survival in both is `(1-e^{-x/t})(1-e^{-y/t})`.
#[test]
fn plane_product_survival() {
    let op = product(&[model1d(0.0, 10.0).unwrap(), model1d(0.0, 10.0).unwrap()]).unwrap();
    let prob = Problem2D::from_operator(&op, 60).unwrap();
    let f = vec![1.0; prob.nx() * prob.ny()];
    let t = 1.0;
    let u = solve_backward_2d(&prob, &f, t, 2e-3, 100).unwrap();
    for (x, y) in [(0.3, 0.3), (0.5, 1.0), (1.0, 2.0)] {
        let exact = (1.0 - (-x / t).exp()) * (1.0 - (-y / t).exp());
        let v = prob.interpolate(u.last(), x, y);
        assert!((v - exact).abs() < 1.5e-2, "({x},{y}) {v} {exact}");
    }
}

#[test]
fn plane_transverse_conserves_constants() {
    let op = product(&[model1d(0.5, 1.0).unwrap(), model1d(0.7, 1.0).unwrap()]).unwrap();
    let prob = Problem2D::from_operator(&op, 20).unwrap();
    let u = solve_backward_2d(&prob, &vec![1.0; prob.nx() * prob.ny()], 0.5, 1e-2, 10).unwrap();
    assert!(u.last().iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn steady_state_of_linear_data() {
    // Laplacian with affine data: the solution is the data.
    let one: Field2D = Arc::new(|_, _| 1.0);
    let zero: Field2D = Arc::new(|_, _| 0.0);
    let data: Field2D = Arc::new(|x, y| 1.0 + x - 2.0 * y);
    let prob = Problem2D {
        coeffs: Coefficients2D {
            a11: one.clone(),
            a12: zero.clone(),
            a22: one,
            b1: zero.clone(),
            b2: zero,
        },
        sides: [0; 4].map(|_| Side::Dirichlet(data.clone())),
        x: graded_axis(1.0, 12),
        y: graded_axis(1.0, 12),
    };
    let s = steady_state(&prob, &vec![0.0; 169], 1.0, 1e-10, 500).unwrap();
    let exact = prob.sample(|x, y| 1.0 + x - 2.0 * y);
    let err = s.values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
    assert!(matches!(
        steady_state(&prob, &vec![0.0; 169], 1e-6, 1e-12, 3),
        Err(Error::NoConvergence { iterations: 3, .. })
    ));
}
