//! Barrier checks for the operator
//! `A u = Σ √(xᵢxⱼ) aᵢⱼ uᵢⱼ + Σ bᵢ uᵢ + Σ √xᵢ cᵢₗ u_{xᵢyₗ} + Σ dₗₖ u_{yₗyₖ} + Σ eₗ u_{yₗ}`
//! and the growth ratio of its harmonic functions near a tangent/transverse corner.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{AppendixParams, CoefficientField, KimuraOperator, Poly};
use crate::pde::plane::{graded_axis, Coefficients2D, Field2D, Problem2D, Side};

/// Iterations of every parameter bisection.
pub const BISECTION_STEPS: usize = 40;
/// Smallest parameter the bisections will try.
pub const PARAM_FLOOR: f64 = 1e-6;
/// Witness points kept in a report.
pub const MAX_WITNESSES: usize = 32;
/// Tolerance for "vanishes on the face" precondition checks.
pub const TANGENCY_TOL: f64 = 1e-8;

/// Operator with `√(xᵢxⱼ)` weights on the mixed corner derivatives.
#[derive(Clone)]
pub struct AppendixOperator {
    n: usize,
    m: usize,
    a: Vec<Vec<CoefficientField>>,
    b: Vec<CoefficientField>,
    c: Vec<Vec<CoefficientField>>,
    d: Vec<Vec<CoefficientField>>,
    e: Vec<CoefficientField>,
}

impl std::fmt::Debug for AppendixOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AppendixOperator(n={}, m={})", self.n, self.m)
    }
}

/// Sampled constants of the boundedness and ellipticity conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionBounds {
    /// `max‖a‖ + max‖b‖ + max‖c‖ + max‖d‖ + max‖e‖` over the samples.
    pub k_bound: f64,
    /// Smallest eigenvalue of `diag(sym a, sym d)` over the samples.
    pub delta: f64,
    pub samples: usize,
}

impl AppendixOperator {
    /// Identity second-order part, no drift.
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one corner coordinate".into()));
        }
        let nv = n + m;
        let sq = |k: usize| -> Vec<Vec<CoefficientField>> {
            (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| CoefficientField::constant(nv, if i == j { 1.0 } else { 0.0 }))
                        .collect()
                })
                .collect()
        };
        Ok(Self {
            n,
            m,
            a: sq(n),
            b: (0..n).map(|_| CoefficientField::zero(nv)).collect(),
            c: (0..n).map(|_| (0..m).map(|_| CoefficientField::zero(nv)).collect()).collect(),
            d: sq(m),
            e: (0..m).map(|_| CoefficientField::zero(nv)).collect(),
        })
    }

    /// Constant-coefficient two-dimensional operator `x₁a₁₁∂₁² + x₂a₂₂∂₂² + b₁∂₁ + b₂∂₂`.
    pub fn from_params(p: &AppendixParams) -> Self {
        let mut op = Self::new(2, 0).expect("n = 2");
        op.a[0][0] = CoefficientField::constant(2, p.a11);
        op.a[1][1] = CoefficientField::constant(2, p.a22);
        op.b[0] = CoefficientField::constant(2, p.b1);
        op.b[1] = CoefficientField::constant(2, p.b2);
        op
    }

    pub fn with_a(mut self, i: usize, j: usize, f: CoefficientField) -> Self {
        self.a[i][j] = f;
        self
    }

    pub fn with_b(mut self, i: usize, f: CoefficientField) -> Self {
        self.b[i] = f;
        self
    }

    pub fn with_c(mut self, i: usize, l: usize, f: CoefficientField) -> Self {
        self.c[i][l] = f;
        self
    }

    pub fn with_d(mut self, l: usize, k: usize, f: CoefficientField) -> Self {
        self.d[l][k] = f;
        self
    }

    pub fn with_e(mut self, l: usize, f: CoefficientField) -> Self {
        self.e[l] = f;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn b_at(&self, i: usize, z: &[f64]) -> f64 {
        self.b[i].eval(z)
    }

    /// `A u(z)` from the gradient and the row-major Hessian of `u` at `z`.
    pub fn apply(&self, z: &[f64], grad: &[f64], hess: &[f64]) -> f64 {
        let (n, m) = (self.n, self.m);
        let d = n + m;
        let x = &z[..n];
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let h = hess[i * d + j];
                if h != 0.0 {
                    s += (x[i] * x[j]).sqrt() * self.a[i][j].eval(z) * h;
                }
            }
            if grad[i] != 0.0 {
                s += self.b[i].eval(z) * grad[i];
            }
            for l in 0..m {
                let h = hess[i * d + n + l];
                if h != 0.0 {
                    s += x[i].sqrt() * self.c[i][l].eval(z) * h;
                }
            }
        }
        for l in 0..m {
            for k in 0..m {
                let h = hess[(n + l) * d + n + k];
                if h != 0.0 {
                    s += self.d[l][k].eval(z) * h;
                }
            }
            if grad[n + l] != 0.0 {
                s += self.e[l].eval(z) * grad[n + l];
            }
        }
        s
    }

    /// Estimate `K` and `δ` from random samples of the closed box `[0,1]ⁿ × [-1,1]ᵐ`.
    pub fn assumption_bounds(&self, samples: usize, seed: u64) -> AssumptionBounds {
        let (n, m) = (self.n, self.m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sup = [0.0f64; 5];
        let mut delta = f64::INFINITY;
        let mut z = vec![0.0; n + m];
        for _ in 0..samples.max(1) {
            for (k, v) in z.iter_mut().enumerate() {
                let u: f64 = rng.random();
                *v = if k < n { u } else { 2.0 * u - 1.0 };
            }
            let mut mat = DMatrix::<f64>::zeros(n + m, n + m);
            for i in 0..n {
                for j in 0..n {
                    let v = self.a[i][j].eval(&z);
                    sup[0] = sup[0].max(v.abs());
                    mat[(i, j)] += 0.5 * v;
                    mat[(j, i)] += 0.5 * v;
                }
                sup[1] = sup[1].max(self.b[i].eval(&z).abs());
                for l in 0..m {
                    sup[2] = sup[2].max(self.c[i][l].eval(&z).abs());
                }
            }
            for l in 0..m {
                for k in 0..m {
                    let v = self.d[l][k].eval(&z);
                    sup[3] = sup[3].max(v.abs());
                    mat[(n + l, n + k)] += 0.5 * v;
                    mat[(n + k, n + l)] += 0.5 * v;
                }
                sup[4] = sup[4].max(self.e[l].eval(&z).abs());
            }
            let ev = mat.symmetric_eigenvalues();
            delta = delta.min(ev.iter().copied().fold(f64::INFINITY, f64::min));
        }
        AssumptionBounds {
            k_bound: sup.iter().sum(),
            delta,
            samples: samples.max(1),
        }
    }

    /// Coefficients in the form `a₁₁u₁₁ + 2a₁₂u₁₂ + a₂₂u₂₂ + b₁u₁ + b₂u₂` (`n = 2`, `m = 0`).
    pub fn coefficients_2d(&self) -> Result<Coefficients2D> {
        if self.n != 2 || self.m != 0 {
            return Err(Error::InvalidParameter("planar solve needs n = 2, m = 0".into()));
        }
        let field = |f: CoefficientField, w: fn(f64, f64) -> f64| -> Field2D { Arc::new(move |x, y| w(x, y) * f.eval(&[x, y])) };
        let (a12, a21) = (self.a[0][1].clone(), self.a[1][0].clone());
        Ok(Coefficients2D {
            a11: field(self.a[0][0].clone(), |x, _| x),
            a12: Arc::new(move |x, y| 0.5 * (x * y).sqrt() * (a12.eval(&[x, y]) + a21.eval(&[x, y]))),
            a22: field(self.a[1][1].clone(), |_, y| y),
            b1: field(self.b[0].clone(), |_, _| 1.0),
            b2: field(self.b[1].clone(), |_, _| 1.0),
        })
    }
}

/// Outcome of evaluating a barrier on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierReport {
    pub barrier: String,
    /// Nodes per axis.
    pub grid: usize,
    pub points: usize,
    /// Minimum of `-A w` over the grid.
    pub min_margin: f64,
    pub violation_count: usize,
    /// First violating points (at most [`MAX_WITNESSES`]).
    pub violations: Vec<Vec<f64>>,
    /// Point attaining the minimum margin.
    pub worst_point: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    /// Failed preconditions; a report can pass with flags set.
    pub flags: Vec<String>,
    pub pass: bool,
}

impl BarrierReport {
    fn new(barrier: &str, grid: usize) -> Self {
        Self {
            barrier: barrier.into(),
            grid,
            points: 0,
            min_margin: f64::INFINITY,
            violation_count: 0,
            violations: Vec::new(),
            worst_point: Vec::new(),
            params: BTreeMap::new(),
            flags: Vec::new(),
            pass: true,
        }
    }

    fn record(&mut self, z: &[f64], value: f64) {
        self.points += 1;
        let margin = -value;
        if margin < self.min_margin || self.worst_point.is_empty() {
            self.min_margin = margin;
            self.worst_point = z.to_vec();
        }
        if !(value < 0.0) {
            self.violation_count += 1;
            if self.violations.len() < MAX_WITNESSES {
                self.violations.push(z.to_vec());
            }
        }
        self.pass = self.violation_count == 0;
    }
}

/// Visit every point of the tensor grid spanned by `axes`.
fn for_grid(axes: &[Vec<f64>], mut f: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; axes.len()];
    let mut z: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    if axes.iter().any(Vec::is_empty) {
        return;
    }
    loop {
        f(&z);
        let mut k = 0;
        loop {
            if k == axes.len() {
                return;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                z[k] = axes[k][idx[k]];
                break;
            }
            idx[k] = 0;
            z[k] = axes[k][0];
            k += 1;
        }
    }
}

fn uniform(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    (0..=cells).map(|k| lo + (hi - lo) * k as f64 / cells as f64).collect()
}

/// `(k/M)² width` for `k = 1..=M`; the degenerate edge itself is left out.
fn graded_open(width: f64, cells: usize) -> Vec<f64> {
    graded_axis(width, cells).split_off(1)
}

fn check_grid(grid: usize) -> Result<()> {
    if grid < 2 {
        return Err(Error::InvalidParameter("barrier grid needs at least 2 cells per axis".into()));
    }
    Ok(())
}

/// Largest `p ∈ [floor, hi]` with `ok(p)`, assuming `ok` holds below some threshold.
fn bisect_largest(hi: f64, mut ok: impl FnMut(f64) -> Result<bool>) -> Result<Option<f64>> {
    if ok(hi)? {
        return Ok(Some(hi));
    }
    if !ok(PARAM_FLOOR)? {
        return Ok(None);
    }
    // Geometric bisection: the bracket spans many decades.
    let (mut lo, mut up) = (PARAM_FLOOR, hi);
    for _ in 0..BISECTION_STEPS {
        let mid = (lo * up).sqrt();
        if ok(mid)? {
            lo = mid;
        } else {
            up = mid;
        }
    }
    Ok(Some(lo))
}

/// Evaluate `A w₂` on `W₂ = (0,H) × [¼,¾] × [-1,1]ᵐ` with
/// `w₂ = ν + 16(x₂-½)² + √(x₁/H) + Σ yₗ²`.
pub fn evaluate_w2(op: &AppendixOperator, nu: f64, h: f64, grid: usize) -> Result<BarrierReport> {
    check_grid(grid)?;
    if op.n < 2 {
        return Err(Error::InvalidParameter("w2 needs n >= 2".into()));
    }
    if !(0.0 < nu && nu < 1.0) || !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < nu < 1 and 0 < H < 1, got nu={nu}, H={h}")));
    }
    let (n, m) = (op.n, op.m);
    let d = n + m;
    let mut axes = vec![graded_open(h, grid), uniform(0.25, 0.75, grid)];
    // Remaining corner coordinates are held at zero.
    axes.extend((2..n).map(|_| vec![0.0]));
    axes.extend((0..m).map(|_| uniform(-1.0, 1.0, grid)));
    let mut rep = BarrierReport::new("w2", grid);
    rep.params.insert("nu".into(), nu);
    rep.params.insert("H".into(), h);
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut tangent_b1 = 0.0f64;
    let mut face = vec![0.0; d];
    for_grid(&axes, |z| {
        let (x1, x2) = (z[0], z[1]);
        grad[0] = 0.5 / (h * x1).sqrt();
        hess[0] = -0.25 / (h.sqrt() * x1.powf(1.5));
        grad[1] = 32.0 * (x2 - 0.5);
        hess[d + 1] = 32.0;
        for l in 0..m {
            grad[n + l] = 2.0 * z[n + l];
            hess[(n + l) * d + n + l] = 2.0;
        }
        rep.record(z, op.apply(z, &grad, &hess));
        face.copy_from_slice(z);
        face[0] = 0.0;
        tangent_b1 = tangent_b1.max(op.b_at(0, &face).abs());
    });
    if tangent_b1 > TANGENCY_TOL {
        rep.flags
            .push(format!("b1 does not vanish on x1 = 0 (max |b1| = {tangent_b1:.3e}): face 1 is not tangent"));
    }
    // Sides of W₂ inside the corner where w₂ must dominate u ≤ 1.
    let side_min = [0.25f64, 0.75].iter().map(|x2| nu + 16.0 * (x2 - 0.5) * (x2 - 0.5)).fold(f64::INFINITY, f64::min);
    rep.params.insert("w2_min_on_sides".into(), side_min.min(nu + 1.0));
    Ok(rep)
}

/// Find `H` with `A w₂ < 0` on `W₂`, or check a given `H`. The searched value
/// is half the largest passing `H`, so the margin survives grid refinement.
pub fn check_barrier_w2(op: &AppendixOperator, nu: f64, h: Option<f64>, grid: usize) -> Result<BarrierReport> {
    if let Some(h) = h {
        return evaluate_w2(op, nu, h, grid);
    }
    let best = bisect_largest(0.5, |h| Ok(evaluate_w2(op, nu, h, grid)?.pass))?;
    match best {
        Some(h) => {
            let mut rep = evaluate_w2(op, nu, 0.5 * h, grid)?;
            rep.params.insert("H_max".into(), h);
            Ok(rep)
        }
        None => Err(Error::NoValidH { floor: PARAM_FLOOR }),
    }
}

/// Parameters of the `w₁` barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct W1Params {
    pub theta2: f64,
    pub k: f64,
    pub beta: f64,
}

/// Evaluate `A w₁` on `W₁ = [¼,¾] × (0,k) × [-1,1]ᵐ` with
/// `w₁ = θ₂ + (1-θ₂)[16(x₁-½)² + β(k-x₂) + ½ + ½Σ yₗ²]`.
pub fn evaluate_w1(op: &AppendixOperator, p: W1Params, grid: usize) -> Result<BarrierReport> {
    check_grid(grid)?;
    if op.n < 2 {
        return Err(Error::InvalidParameter("w1 needs n >= 2".into()));
    }
    if !(0.0 < p.theta2 && p.theta2 < 1.0) || !(p.k > 0.0 && p.k < 0.5) || !(p.beta > 0.0) {
        return Err(Error::InvalidParameter(format!("need 0 < theta2 < 1, 0 < k < 1/2, beta > 0, got {p:?}")));
    }
    let (n, m) = (op.n, op.m);
    let d = n + m;
    let s = 1.0 - p.theta2;
    let mut axes = vec![uniform(0.25, 0.75, grid), graded_open(p.k, grid)];
    axes.extend((2..n).map(|_| vec![0.0]));
    axes.extend((0..m).map(|_| uniform(-1.0, 1.0, grid)));
    let mut rep = BarrierReport::new("w1", grid);
    rep.params.insert("theta2".into(), p.theta2);
    rep.params.insert("k".into(), p.k);
    rep.params.insert("beta".into(), p.beta);
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut b0 = f64::INFINITY;
    let mut edge = vec![0.0; d];
    for_grid(&axes, |z| {
        grad[0] = s * 32.0 * (z[0] - 0.5);
        hess[0] = s * 32.0;
        grad[1] = -s * p.beta;
        for l in 0..m {
            grad[n + l] = s * z[n + l];
            hess[(n + l) * d + n + l] = s;
        }
        rep.record(z, op.apply(z, &grad, &hess));
        // b₂ on the closure, including the transverse face x₂ = 0.
        edge.copy_from_slice(z);
        b0 = b0.min(op.b_at(1, z));
        edge[1] = 0.0;
        b0 = b0.min(op.b_at(1, &edge));
    });
    rep.params.insert("b0".into(), b0);
    if !(b0 > 0.0) {
        rep.flags.push(format!("b2 is not bounded below by a positive constant on W1 (min {b0:.3e})"));
    }
    // Bound on {x₁ = ½} × (0,k) × (0,k)ᵐ given by the comparison.
    let theta4 = p.theta2 + s * (p.beta * p.k + 0.5 + 0.5 * m as f64 * p.k * p.k);
    rep.params.insert("theta4".into(), theta4);
    Ok(rep)
}

/// Search `β` (the smallest passing value, doubled) for a given `θ₂` and
/// starting `k`, then shrink `k` until `βk + ½mk² ≤ ¼`, which keeps the
/// resulting bound `θ₄` below one. A given `β` is checked as is.
pub fn check_barrier_w1(op: &AppendixOperator, theta2: f64, k: f64, beta: Option<f64>, grid: usize) -> Result<BarrierReport> {
    if let Some(beta) = beta {
        return evaluate_w1(op, W1Params { theta2, k, beta }, grid);
    }
    let probe = evaluate_w1(
        op,
        W1Params {
            theta2,
            k,
            beta: 1.0,
        },
        grid,
    )?;
    if !probe.flags.is_empty() {
        return Err(Error::NoValidParams(probe.flags.join("; ")));
    }
    let beta_max = 1.0 / PARAM_FLOOR;
    let ok = |beta: f64| -> Result<bool> { Ok(evaluate_w1(op, W1Params { theta2, k, beta }, grid)?.pass) };
    if !ok(beta_max)? {
        return Err(Error::NoValidParams(format!("no beta <= {beta_max:e} makes A w1 negative")));
    }
    // A w₁ decreases in β: find the smallest passing value.
    let (mut lo, mut hi) = (PARAM_FLOOR, beta_max);
    if ok(lo)? {
        hi = lo;
    } else {
        for _ in 0..BISECTION_STEPS {
            let mid = (lo * hi).sqrt();
            if ok(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let beta = 2.0 * hi;
    let m = op.m as f64;
    // Largest k' ≤ k with βk' + ½mk'² ≤ ¼.
    let k_fit = if m == 0.0 {
        0.25 / beta
    } else {
        (-beta + (beta * beta + 0.5 * m).sqrt()) / m
    };
    let k_final = k.min(k_fit);
    if k_final < PARAM_FLOOR {
        return Err(Error::NoValidParams(format!("k fell below {PARAM_FLOOR:e} (beta = {beta})")));
    }
    let mut rep = evaluate_w1(
        op,
        W1Params {
            theta2,
            k: k_final,
            beta,
        },
        grid,
    )?;
    rep.params.insert("beta_min".into(), hi);
    Ok(rep)
}

/// Evaluate `L w` for `w = √(x₁/ρ) + Σ_{i≥2} xᵢ + Σ yₗ` on the closed box
/// `(0,ρ] × [0,ρ]^{n-1} × [-ρ,ρ]^m` (simplex points outside the domain are skipped).
pub fn evaluate_regularity(op: &KimuraOperator, rho: f64, grid: usize) -> Result<BarrierReport> {
    check_grid(grid)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let dom = op.domain();
    let (n, m) = (dom.n(), dom.m());
    let d = n + m;
    let mut axes = vec![graded_open(rho, grid)];
    axes.extend((1..n).map(|_| uniform(0.0, rho, grid)));
    axes.extend((0..m).map(|_| uniform(-rho, rho, grid)));
    let mut rep = BarrierReport::new("w_reg", grid);
    rep.params.insert("rho".into(), rho);
    let mut amat = vec![0.0; d * d];
    let mut beta = vec![0.0; d];
    let mut face = vec![0.0; d];
    let mut tangent_b1 = 0.0f64;
    let simplex = dom.is_simplex();
    for_grid(&axes, |z| {
        if simplex && z.iter().sum::<f64>() > 1.0 {
            return;
        }
        let x1 = z[0];
        op.diffusion_into(z, &mut amat);
        op.drift_into(z, &mut beta);
        let mut lw = -amat[0] * 0.25 / (rho.sqrt() * x1.powf(1.5)) + beta[0] * 0.5 / (rho * x1).sqrt();
        lw += beta[1..].iter().sum::<f64>();
        rep.record(z, lw);
        face.copy_from_slice(z);
        face[0] = 0.0;
        op.drift_into(&face, &mut beta);
        tangent_b1 = tangent_b1.max(beta[0].abs());
    });
    if tangent_b1 > TANGENCY_TOL {
        rep.flags
            .push(format!("drift does not vanish on x1 = 0 (max {tangent_b1:.3e}): face 1 is not tangent"));
    }
    Ok(rep)
}

/// Check `L w < 0` for a given `ρ`, or bisect `ρ` downward from the chart
/// extent and report half the largest passing value.
pub fn check_barrier_regularity(op: &KimuraOperator, rho: Option<f64>, grid: usize) -> Result<BarrierReport> {
    if let Some(rho) = rho {
        return evaluate_regularity(op, rho, grid);
    }
    let dom = op.domain();
    let top = if dom.is_simplex() { 1.0 / (dom.n() + dom.m()).max(1) as f64 } else { dom.extent() };
    match bisect_largest(top, |r| Ok(evaluate_regularity(op, r, grid)?.pass))? {
        Some(r) => {
            let half = if r == top { r } else { 0.5 * r };
            let mut rep = evaluate_regularity(op, half, grid)?;
            rep.params.insert("rho_max".into(), r);
            Ok(rep)
        }
        None => Err(Error::NoValidRho { floor: PARAM_FLOOR }),
    }
}

/// Maxima over `Q(r;½)` and `Q(r;1)` of the solution of `A u = 0` on `(0,1)²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub nu: f64,
    pub far: f64,
    pub cells: usize,
    pub radii: Vec<f64>,
    pub m_half: Vec<f64>,
    pub m_one: Vec<f64>,
    /// `None` when `M(r;1) = 0`.
    pub ratios: Vec<Option<f64>>,
    /// Largest ratio, if any ratio is defined.
    pub theta_obs: Option<f64>,
    pub degenerate: bool,
    pub iterations: usize,
    pub residual: f64,
    pub flags: Vec<String>,
}

/// Solve `A u = 0` on `(0,1)²` with `u = ν` on the tangent face `x₁ = 0`,
/// `u = far` on `x₁ = 1` and `x₂ = 1`, and no condition on the transverse
/// face `x₂ = 0`; then tabulate `M(r;½)/M(r;1)`.
pub fn growth_ratio(op: &AppendixOperator, nu: f64, far: f64, radii: &[f64], cells: usize) -> Result<GrowthReport> {
    if op.n != 2 || op.m != 0 {
        return Err(Error::InvalidParameter("growth ratio is computed for n = 2, m = 0".into()));
    }
    if !(0.0..=1.0).contains(&nu) || !(0.0..=1.0).contains(&far) || radii.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::InvalidParameter("need nu, far in [0,1] and radii in (0,1]".into()));
    }
    let mut flags = Vec::new();
    let b1_face = (0..=10).map(|k| op.b_at(0, &[0.0, k as f64 / 10.0]).abs()).fold(0.0, f64::max);
    if b1_face > TANGENCY_TOL {
        flags.push(format!("b1 does not vanish on x1 = 0 (max {b1_face:.3e})"));
    }
    let b2_face = (0..=10).map(|k| op.b_at(1, &[k as f64 / 10.0, 0.0])).fold(f64::INFINITY, f64::min);
    if !(b2_face > 0.0) {
        flags.push(format!("b2 is not positive on x2 = 0 (min {b2_face:.3e})"));
    }
    let prob = Problem2D {
        coeffs: op.coefficients_2d()?,
        sides: [Side::constant(nu), Side::constant(far), Side::Free, Side::constant(far)],
        x: graded_axis(1.0, cells),
        y: graded_axis(1.0, cells),
    };
    let u0 = prob.sample(|_, _| 0.5 * (nu + far));
    let ss = crate::pde::plane::steady_state(&prob, &u0, 1.0, 1e-8, 100_000)?;
    let sup_q = |side: f64| -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (j, &y) in prob.y.iter().enumerate() {
            for (i, &x) in prob.x.iter().enumerate() {
                if x <= side * (1.0 + 1e-12) && y <= side * (1.0 + 1e-12) {
                    best = best.max(ss.values[prob.index(i, j)]);
                }
            }
        }
        best
    };
    let mut m_half = Vec::new();
    let mut m_one = Vec::new();
    let mut ratios = Vec::new();
    for &r in radii {
        let (h, o) = (sup_q(0.5 * r), sup_q(r));
        m_half.push(h);
        m_one.push(o);
        ratios.push(if o > 0.0 { Some(h / o) } else { None });
    }
    let theta_obs = ratios.iter().flatten().copied().reduce(f64::max);
    Ok(GrowthReport {
        nu,
        far,
        cells,
        radii: radii.to_vec(),
        m_half,
        m_one,
        degenerate: ratios.iter().any(Option::is_none),
        ratios,
        theta_obs,
        iterations: ss.iterations,
        residual: ss.residual,
        flags,
    })
}

/// `x₁∂₁² + x₂∂₂² + x₁∂₂`.
pub fn drift_in_x1() -> AppendixOperator {
    AppendixOperator::new(2, 0)
        .expect("n = 2")
        .with_b(1, CoefficientField::poly(Poly::var(2, 0)))
}

#[cfg(test)]
mod tests;
