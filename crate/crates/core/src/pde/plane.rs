//! Finite differences for `L u = a₁₁u₁₁ + 2a₁₂u₁₂ + a₂₂u₂₂ + b₁u₁ + b₂u₂` on a
//! rectangle `[0, X] × [0, Y]` whose sides `x = 0` and `y = 0` may be
//! degenerate.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::linalg::BandMatrix;
use crate::operator::{KimuraOperator, DEFAULT_BETA0_MIN, DEFAULT_WEIGHT_TOL};

use super::Slices;

pub type Field2D = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Coefficients of a second-order operator in two variables.
#[derive(Clone)]
pub struct Coefficients2D {
    pub a11: Field2D,
    pub a12: Field2D,
    pub a22: Field2D,
    pub b1: Field2D,
    pub b2: Field2D,
}

impl Coefficients2D {
    /// Second-order and drift coefficients of a Kimura operator on `CornerBox(2, 0)`.
    pub fn from_operator(op: &KimuraOperator) -> Result<Self> {
        let dom = op.domain();
        if dom.n() != 2 || dom.m() != 0 || dom.is_simplex() {
            return Err(Error::InvalidParameter(format!("two-dimensional solver needs CornerBox(2, 0), got {dom}")));
        }
        let diff = |i: usize, j: usize| -> Field2D {
            let op = op.clone();
            Arc::new(move |x, y| {
                let mut a = [0.0; 4];
                op.diffusion_into(&[x, y], &mut a);
                a[2 * i + j]
            })
        };
        let drift = |i: usize| -> Field2D {
            let op = op.clone();
            Arc::new(move |x, y| {
                let mut b = [0.0; 2];
                op.drift_into(&[x, y], &mut b);
                b[i]
            })
        };
        Ok(Self {
            a11: diff(0, 0),
            a12: diff(0, 1),
            a22: diff(1, 1),
            b1: drift(0),
            b2: drift(1),
        })
    }
}

/// Condition on one side of the rectangle.
#[derive(Clone)]
pub enum Side {
    Dirichlet(Field2D),
    /// No condition: the operator degenerates there, or the side reflects.
    Free,
}

impl Side {
    pub fn zero() -> Self {
        Side::Dirichlet(Arc::new(|_, _| 0.0))
    }

    pub fn constant(v: f64) -> Self {
        Side::Dirichlet(Arc::new(move |_, _| v))
    }
}

/// Sides in the order `x = 0`, `x = X`, `y = 0`, `y = Y`.
#[derive(Clone)]
pub struct Problem2D {
    pub coeffs: Coefficients2D,
    pub sides: [Side; 4],
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Nodes `(k/M)² ℓ`, refined towards 0.
pub fn graded_axis(length: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|k| {
            let s = k as f64 / cells as f64;
            s * s * length
        })
        .collect()
}

impl Problem2D {
    /// Kimura operator on `CornerBox(2, 0, R)`: homogeneous Dirichlet data on
    /// tangent faces, the far edges reflect.
    pub fn from_operator(op: &KimuraOperator, cells: usize) -> Result<Self> {
        let coeffs = Coefficients2D::from_operator(op)?;
        let cls = op.classify_faces(DEFAULT_WEIGHT_TOL, DEFAULT_BETA0_MIN)?;
        let r = match op.domain() {
            DomainSpec::CornerBox { radius, .. } => *radius,
            _ => unreachable!(),
        };
        let face = |i| if cls.is_tangent(i) { Side::zero() } else { Side::Free };
        Ok(Self {
            coeffs,
            sides: [face(1), Side::Free, face(2), Side::Free],
            x: graded_axis(r, cells),
            y: graded_axis(r, cells),
        })
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    /// Dirichlet value at boundary node `(i, j)`, if any.
    fn dirichlet_at(&self, i: usize, j: usize) -> Option<f64> {
        let (x, y) = (self.x[i], self.y[j]);
        let checks = [
            (i == 0, 0),
            (i + 1 == self.nx(), 1),
            (j == 0, 2),
            (j + 1 == self.ny(), 3),
        ];
        for (on, s) in checks {
            if on {
                if let Side::Dirichlet(f) = &self.sides[s] {
                    return Some(f(x, y));
                }
            }
        }
        None
    }

    /// Row of the discrete operator at `(i, j)` as `(column, coefficient)` pairs.
    fn stencil(&self, i: usize, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let (nx, ny) = (self.nx(), self.ny());
        let (x, y) = (self.x[i], self.y[j]);
        let c = &self.coeffs;
        let me = self.index(i, j);
        let free_edge_x = i + 1 == nx;
        let free_edge_y = j + 1 == ny;

        // One axis: (second derivative coefficient, drift, neighbours).
        let mut axis = |a: f64, b: f64, lo: Option<(usize, f64)>, hi: Option<(usize, f64)>, far_edge: bool| {
            match (lo, hi) {
                (Some((l, hl)), Some((h, hh))) => {
                    let s = 2.0 * a / (hl + hh);
                    out.push((l, s / hl));
                    out.push((h, s / hh));
                    out.push((me, -s / hl - s / hh));
                    if b > 0.0 {
                        out.push((h, b / hh));
                        out.push((me, -b / hh));
                    } else {
                        out.push((me, -b / hl));
                        out.push((l, b / hl));
                    }
                }
                (None, Some((h, hh))) => {
                    // Near side without data: mirror for the second derivative,
                    // one-sided drift.
                    out.push((h, 2.0 * a / (hh * hh)));
                    out.push((me, -2.0 * a / (hh * hh)));
                    out.push((h, b / hh));
                    out.push((me, -b / hh));
                }
                (Some((l, hl)), None) => {
                    debug_assert!(far_edge);
                    out.push((l, 2.0 * a / (hl * hl)));
                    out.push((me, -2.0 * a / (hl * hl)));
                }
                (None, None) => {}
            }
        };
        let xl = (i > 0).then(|| (self.index(i - 1, j), x - self.x[i - 1]));
        let xh = (i + 1 < nx).then(|| (self.index(i + 1, j), self.x[i + 1] - x));
        axis((c.a11)(x, y), (c.b1)(x, y), xl, xh, free_edge_x);
        let yl = (j > 0).then(|| (self.index(i, j - 1), y - self.y[j - 1]));
        let yh = (j + 1 < ny).then(|| (self.index(i, j + 1), self.y[j + 1] - y));
        axis((c.a22)(x, y), (c.b2)(x, y), yl, yh, free_edge_y);

        if i > 0 && i + 1 < nx && j > 0 && j + 1 < ny {
            let a12 = (c.a12)(x, y);
            if a12 != 0.0 {
                let w = 2.0 * a12 / ((self.x[i + 1] - self.x[i - 1]) * (self.y[j + 1] - self.y[j - 1]));
                out.push((self.index(i + 1, j + 1), w));
                out.push((self.index(i - 1, j - 1), w));
                out.push((self.index(i + 1, j - 1), -w));
                out.push((self.index(i - 1, j + 1), -w));
            }
        }
    }

    /// `(L_h u)` on nodes without Dirichlet data (zero elsewhere).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        let mut row = Vec::with_capacity(16);
        for j in 0..self.ny() {
            for i in 0..self.nx() {
                if self.dirichlet_at(i, j).is_some() {
                    continue;
                }
                self.stencil(i, j, &mut row);
                out[self.index(i, j)] = row.iter().map(|&(c, v)| v * u[c]).sum();
            }
        }
        out
    }

    /// Factored `I - Δt L_h` with identity rows on Dirichlet nodes.
    fn implicit_matrix(&self, dt: f64) -> Result<BandMatrix> {
        let n = self.nx() * self.ny();
        let mut mat = BandMatrix::zeros(n, self.nx() + 1, self.nx() + 1);
        let mut row = Vec::with_capacity(16);
        for j in 0..self.ny() {
            for i in 0..self.nx() {
                let r = self.index(i, j);
                mat.add(r, r, 1.0);
                if self.dirichlet_at(i, j).is_some() {
                    continue;
                }
                self.stencil(i, j, &mut row);
                for &(c, v) in &row {
                    mat.add(r, c, -dt * v);
                }
            }
        }
        mat.factor()?;
        Ok(mat)
    }

    fn boundary_values(&self) -> Vec<Option<f64>> {
        let mut v = Vec::with_capacity(self.nx() * self.ny());
        for j in 0..self.ny() {
            for i in 0..self.nx() {
                v.push(self.dirichlet_at(i, j));
            }
        }
        v
    }

    /// Nodal values of `f`, row by row in `y`.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.nx() * self.ny());
        for &y in &self.y {
            for &x in &self.x {
                v.push(f(x, y));
            }
        }
        v
    }

    /// Bilinear interpolation at `(x, y)`.
    pub fn interpolate(&self, u: &[f64], x: f64, y: f64) -> f64 {
        let locate = |nodes: &[f64], v: f64| {
            let k = nodes.partition_point(|&t| t <= v).clamp(1, nodes.len() - 1);
            let s = ((v - nodes[k - 1]) / (nodes[k] - nodes[k - 1])).clamp(0.0, 1.0);
            (k - 1, s)
        };
        let (i, s) = locate(&self.x, x);
        let (j, t) = locate(&self.y, y);
        let at = |a, b| u[self.index(a, b)];
        (1.0 - s) * (1.0 - t) * at(i, j) + s * (1.0 - t) * at(i + 1, j) + (1.0 - s) * t * at(i, j + 1) + s * t * at(i + 1, j + 1)
    }
}

/// Implicit Euler for `u_t = L u`, `u(0) = f`, Dirichlet data held fixed in time.
pub fn solve_backward_2d(prob: &Problem2D, f: &[f64], horizon: f64, dt: f64, store_every: usize) -> Result<Slices> {
    let n = prob.nx() * prob.ny();
    if f.len() != n || !(dt > 0.0 && horizon > 0.0) || store_every == 0 {
        return Err(Error::InvalidParameter("initial data, dt, horizon or store_every invalid".into()));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let mat = prob.implicit_matrix(h)?;
    let bc = prob.boundary_values();
    let mut u = f.to_vec();
    for (k, b) in bc.iter().enumerate() {
        if let Some(v) = b {
            u[k] = *v;
        }
    }
    let mut out = Slices {
        times: vec![0.0],
        values: vec![u.clone()],
    };
    for s in 1..=steps {
        for (k, b) in bc.iter().enumerate() {
            if let Some(v) = b {
                u[k] = *v;
            }
        }
        mat.solve_in_place(&mut u);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure(format!("non-finite value at step {s}")));
        }
        if s % store_every == 0 || s == steps {
            out.times.push(s as f64 * h);
            out.values.push(u.clone());
        }
    }
    Ok(out)
}

/// Result of [`steady_state`].
#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Final `‖u_{n+1} - u_n‖∞ / Δt`.
    pub residual: f64,
}

/// Solve `L u = 0` with the Dirichlet data by implicit pseudo-time stepping
/// from `u₀` until `‖u_t‖∞ < tol`.
pub fn steady_state(prob: &Problem2D, u0: &[f64], dt: f64, tol: f64, max_iter: usize) -> Result<SteadyState> {
    let mat = prob.implicit_matrix(dt)?;
    let bc = prob.boundary_values();
    let mut u = u0.to_vec();
    let mut next = vec![0.0; u.len()];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        next.copy_from_slice(&u);
        for (k, b) in bc.iter().enumerate() {
            if let Some(v) = b {
                next[k] = *v;
            }
        }
        mat.solve_in_place(&mut next);
        residual = u.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / dt;
        if !residual.is_finite() {
            return Err(Error::LinearSolveFailure(format!("non-finite iterate at step {it}")));
        }
        std::mem::swap(&mut u, &mut next);
        if residual < tol {
            return Ok(SteadyState {
                values: u,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        residual,
        iterations: max_iter,
    })
}
