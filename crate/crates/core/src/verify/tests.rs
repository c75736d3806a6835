use super::*;
use crate::operator::presets::model1d;

fn appendix(a11: f64, a22: f64, b1: f64, b2: f64) -> AppendixOperator {
    AppendixOperator::from_params(&AppendixParams {
        a11,
        a22,
        b1,
        b2,
        nu: 0.5,
    })
}

#[test]
fn grid_visits_every_point() {
    let mut seen = Vec::new();
    for_grid(&[vec![0.0, 1.0], vec![2.0, 3.0, 4.0]], |z| seen.push(z.to_vec()));
    assert_eq!(seen.len(), 6);
    assert_eq!(seen[1], vec![1.0, 2.0]);
    assert_eq!(seen[5], vec![1.0, 4.0]);
}

#[test]
fn assumption_bounds_of_constant_preset() {
    let b = appendix(1.0, 2.0, 0.0, 0.5).assumption_bounds(64, 1);
    assert!((b.k_bound - 2.5).abs() < 1e-15);
    assert!((b.delta - 1.0).abs() < 1e-12);
}

#[test]
fn w2_search_passes_and_reproduces() {
    let op = drift_in_x1();
    let rep = check_barrier_w2(&op, 0.5, None, 20).unwrap();
    assert!(rep.pass && rep.flags.is_empty());
    let h = rep.params["H"];
    assert!(h <= 0.5);
    assert!(rep.min_margin > 0.0);
    assert!(rep.params["w2_min_on_sides"] >= 1.0);
    let fine = check_barrier_w2(&op, 0.5, Some(h), 200).unwrap();
    assert!(fine.pass, "{fine:?}");
}

/// `A w₂ = (2b₁ - a₁₁)/(4√(Hx₁)) + 32(x₂a₂₂ + b₂(x₂-½))` for constant coefficients and `m = 0`.
#[test]
fn w2_matches_closed_form() {
    let (a11, a22, b1, b2, h) = (1.3, 0.7, 0.1, 0.4, 0.01);
    let op = appendix(a11, a22, b1, b2);
    let rep = evaluate_w2(&op, 0.5, h, 30).unwrap();
    let exact = |x1: f64, x2: f64| (2.0 * b1 - a11) / (4.0 * (h * x1).sqrt()) + 32.0 * (x2 * a22 + b2 * (x2 - 0.5));
    let mut min_margin = f64::INFINITY;
    for x1 in graded_open(h, 30) {
        for x2 in uniform(0.25, 0.75, 30) {
            min_margin = min_margin.min(-exact(x1, x2));
        }
    }
    assert!((rep.min_margin - min_margin).abs() < 1e-9 * min_margin.abs());
    assert_eq!(rep.points, 31 * 30);
    assert!(!rep.flags.is_empty());
}

#[test]
fn w2_flags_transverse_face() {
    let op = appendix(1.0, 1.0, 0.8, 0.5);
    let rep = evaluate_w2(&op, 0.5, 0.01, 20).unwrap();
    assert!(!rep.pass);
    assert!(rep.flags[0].contains("not tangent"));
    assert_eq!(rep.violations.len().min(MAX_WITNESSES), rep.violations.len());
    assert_eq!(check_barrier_w2(&op, 0.5, None, 10).unwrap_err(), Error::NoValidH { floor: PARAM_FLOOR });
}

#[test]
fn w1_search_passes_and_reproduces() {
    let op = appendix(1.0, 1.0, 0.0, 0.5);
    let rep = check_barrier_w1(&op, 0.5, 0.25, None, 20).unwrap();
    assert!(rep.pass && rep.flags.is_empty(), "{rep:?}");
    assert!(rep.params["theta4"] < 1.0);
    let p = W1Params {
        theta2: 0.5,
        k: rep.params["k"],
        beta: rep.params["beta"],
    };
    assert!(evaluate_w1(&op, p, 200).unwrap().pass);
}

#[test]
fn w1_margin_scales_with_one_minus_theta() {
    let op = appendix(1.0, 1.0, 0.0, 0.5);
    let at = |theta2| {
        evaluate_w1(
            &op,
            W1Params {
                theta2,
                k: 0.1,
                beta: 200.0,
            },
            15,
        )
        .unwrap()
        .min_margin
    };
    let (a, b) = (at(0.2), at(0.6));
    assert!((a / b - 2.0).abs() < 1e-12);
}

#[test]
fn w1_needs_positive_transverse_drift() {
    let op = AppendixOperator::new(2, 0).unwrap().with_b(
        1,
        CoefficientField::poly(Poly::var(2, 0) - Poly::constant(2, 0.5)),
    );
    let rep = evaluate_w1(
        &op,
        W1Params {
            theta2: 0.5,
            k: 0.1,
            beta: 10.0,
        },
        10,
    )
    .unwrap();
    assert!(!rep.flags.is_empty());
    assert!(matches!(check_barrier_w1(&op, 0.5, 0.1, None, 10), Err(Error::NoValidParams(_))));
}

/// For `x∂² + b∂` the barrier gives `L w = (2b - 1)/(4√(ρx))`, smallest in
/// magnitude at `x = ρ`.
#[test]
fn regularity_matches_closed_form() {
    for (b, flagged) in [(0.0, false), (0.3, true)] {
        let op = model1d(b, 1.0).unwrap();
        let rho = 0.2;
        let rep = check_barrier_regularity(&op, Some(rho), 50).unwrap();
        assert!(rep.pass);
        assert_eq!(!rep.flags.is_empty(), flagged);
        let exact = (1.0 - 2.0 * b) / (4.0 * rho);
        assert!((rep.min_margin - exact).abs() < 1e-12, "{} {exact}", rep.min_margin);
    }
    let op = model1d(0.0, 1.0).unwrap();
    assert!(check_barrier_regularity(&op, Some(0.0), 10).is_err());
    let searched = check_barrier_regularity(&op, None, 10).unwrap();
    assert_eq!(searched.params["rho"], 1.0);
    assert!(check_barrier_regularity(&model1d(0.8, 1.0).unwrap(), None, 10).is_err());
}

#[test]
fn growth_ratio_below_one() {
    let op = appendix(1.0, 1.0, 0.0, 0.5);
    let radii = [0.5, 0.25, 0.125, 0.0625, 0.03125];
    let rep = growth_ratio(&op, 0.5, 1.0, &radii, 48).unwrap();
    assert!(rep.flags.is_empty());
    for i in 0..radii.len() {
        assert!(rep.m_half[i] <= rep.m_one[i]);
        assert!(rep.ratios[i].unwrap() < 1.0);
    }
    assert!(rep.theta_obs.unwrap() < 1.0);
    assert!(!rep.degenerate);
}

#[test]
fn growth_ratio_with_zero_data_is_degenerate() {
    let op = appendix(1.0, 1.0, 0.0, 0.5);
    let rep = growth_ratio(&op, 0.0, 0.0, &[0.5, 0.25], 16).unwrap();
    assert!(rep.degenerate);
    assert!(rep.ratios.iter().all(Option::is_none));
    assert_eq!(rep.theta_obs, None);
}
