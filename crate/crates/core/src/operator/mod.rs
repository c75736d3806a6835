//! Generalized Kimura operators in normal form
//!
//! ```text
//! L u = γ [ Σ (x_i u_{x_i x_i} + b_i u_{x_i}) + Σ x_i x_j a_ij u_{x_i x_j}
//!         + Σ d_lk u_{y_l y_k} + Σ x_i c_il u_{x_i y_l} + Σ e_l u_{y_l} ]
//! ```
//!
//! on a [`DomainSpec`]. The constant `γ` (default 1) lets presets such as
//! Wright–Fisher keep their customary scaling.

mod field;
mod poly;
pub mod presets;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use field::{fd_step, CoefficientField, GradientFn, Provenance, ScalarFn};
pub(crate) use field::Embedding;
pub use poly::Poly;
pub use presets::{parse_preset, AppendixParams, PresetSpec};

use crate::error::{Error, Result};
use crate::geometry::{self, DomainSpec, Point};
use crate::linalg::{pivoted_cholesky, FactorWork};

pub const DEFAULT_WEIGHT_TOL: f64 = 1e-8;
pub const DEFAULT_BETA0_MIN: f64 = 1e-6;
pub const DEFAULT_ASSUMPTION_SAMPLES: usize = 4096;
pub const DEFAULT_FACE_SAMPLES: usize = 512;

/// A twice differentiable function used as the argument of [`KimuraOperator::apply`].
pub trait TestFunction {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
    /// `None` when second derivatives are not available analytically.
    fn hessian(&self, z: &[f64]) -> Option<Vec<Vec<f64>>>;
}

impl TestFunction for Poly {
    fn value(&self, z: &[f64]) -> f64 {
        self.eval(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        Poly::gradient(self, z)
    }
    fn hessian(&self, z: &[f64]) -> Option<Vec<Vec<f64>>> {
        Some(Poly::hessian(self, z))
    }
}

/// A test function known only through its values.
pub struct ValueOnly<F>(pub F);

impl<F: Fn(&[f64]) -> f64> TestFunction for ValueOnly<F> {
    fn value(&self, z: &[f64]) -> f64 {
        (self.0)(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut w = z.to_vec();
        (0..z.len())
            .map(|k| {
                let h = fd_step(z[k]);
                w[k] = z[k] + h;
                let up = (self.0)(&w);
                w[k] = z[k] - h;
                let dn = (self.0)(&w);
                w[k] = z[k];
                (up - dn) / (2.0 * h)
            })
            .collect()
    }
    fn hessian(&self, _z: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }
}

fn fd_hessian(u: &dyn TestFunction, z: &[f64]) -> Vec<Vec<f64>> {
    let d = z.len();
    let mut w = z.to_vec();
    let mut h = vec![vec![0.0; d]; d];
    let f0 = u.value(z);
    let step: Vec<f64> = z.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    for i in 0..d {
        w[i] = z[i] + step[i];
        let up = u.value(&w);
        w[i] = z[i] - step[i];
        let dn = u.value(&w);
        w[i] = z[i];
        h[i][i] = (up - 2.0 * f0 + dn) / (step[i] * step[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                w[i] = z[i] + si * step[i];
                w[j] = z[j] + sj * step[j];
                let v = u.value(&w);
                w[i] = z[i];
                w[j] = z[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * step[i] * step[j]);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

/// Weight function `B_face`, evaluated at points of the face given in the
/// parent chart.
pub type WeightFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct FaceClassification {
    pub tangent: BTreeSet<usize>,
    pub transverse: BTreeSet<usize>,
    /// Smallest sampled weight over transverse faces (`+inf` if there are none).
    pub beta0: f64,
    /// `weights[f - 1]` is `B_f`.
    pub weights: Vec<WeightFn>,
    /// Sampled `(min, max)` of each weight.
    pub ranges: Vec<(f64, f64)>,
}

impl fmt::Debug for FaceClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FaceClassification")
            .field("tangent", &self.tangent)
            .field("transverse", &self.transverse)
            .field("beta0", &self.beta0)
            .field("ranges", &self.ranges)
            .finish()
    }
}

impl FaceClassification {
    pub fn is_tangent(&self, face: usize) -> bool {
        self.tangent.contains(&face)
    }
    pub fn is_transverse(&self, face: usize) -> bool {
        self.transverse.contains(&face)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub condition: String,
    pub point: Vec<f64>,
    pub index: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub nonneg_ok: bool,
    pub ellipticity_ok: bool,
    pub lambda_estimate: f64,
    pub samples: usize,
    pub violations: Vec<Violation>,
}

const MAX_WITNESSES: usize = 16;

#[derive(Clone)]
pub struct KimuraOperator {
    dom: DomainSpec,
    scale: f64,
    a: Vec<Vec<CoefficientField>>,
    b: Vec<CoefficientField>,
    c: Vec<Vec<CoefficientField>>,
    d: Vec<Vec<CoefficientField>>,
    e: Vec<CoefficientField>,
    name: String,
}

impl fmt::Debug for KimuraOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KimuraOperator")
            .field("name", &self.name)
            .field("dom", &self.dom)
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

/// Incremental construction of a [`KimuraOperator`]; unset coefficients are zero.
pub struct OperatorBuilder {
    op: KimuraOperator,
}

impl OperatorBuilder {
    pub fn scale(mut self, gamma: f64) -> Self {
        self.op.scale = gamma;
        self
    }
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.op.name = name.into();
        self
    }
    pub fn a(mut self, i: usize, j: usize, f: impl Into<CoefficientField>) -> Self {
        self.op.a[i][j] = f.into();
        self
    }
    pub fn b(mut self, i: usize, f: impl Into<CoefficientField>) -> Self {
        self.op.b[i] = f.into();
        self
    }
    pub fn c(mut self, i: usize, l: usize, f: impl Into<CoefficientField>) -> Self {
        self.op.c[i][l] = f.into();
        self
    }
    pub fn d(mut self, l: usize, k: usize, f: impl Into<CoefficientField>) -> Self {
        self.op.d[l][k] = f.into();
        self
    }
    pub fn e(mut self, l: usize, f: impl Into<CoefficientField>) -> Self {
        self.op.e[l] = f.into();
        self
    }

    pub fn build(self) -> Result<KimuraOperator> {
        let op = self.op;
        let nv = op.dom.dim();
        if !(op.scale > 0.0) {
            return Err(Error::InvalidParameter(format!("operator scale must be positive, got {}", op.scale)));
        }
        let all = op
            .a
            .iter()
            .flatten()
            .chain(&op.b)
            .chain(op.c.iter().flatten())
            .chain(op.d.iter().flatten())
            .chain(&op.e);
        for f in all {
            if f.nvars() != nv {
                return Err(Error::InvalidParameter(format!(
                    "coefficient field has {} variables, domain has {nv}",
                    f.nvars()
                )));
            }
        }
        Ok(op)
    }
}

impl KimuraOperator {
    pub fn builder(dom: DomainSpec) -> OperatorBuilder {
        let (n, m, nv) = (dom.n(), dom.m(), dom.dim());
        let z = || CoefficientField::zero(nv);
        OperatorBuilder {
            op: KimuraOperator {
                dom,
                scale: 1.0,
                a: vec![vec![z(); n]; n],
                b: vec![z(); n],
                c: vec![vec![z(); m]; n],
                d: vec![vec![z(); m]; m],
                e: vec![z(); m],
                name: "custom".into(),
            },
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.dom
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn a(&self, i: usize, j: usize) -> &CoefficientField {
        &self.a[i][j]
    }
    pub fn b(&self, i: usize) -> &CoefficientField {
        &self.b[i]
    }
    pub fn c(&self, i: usize, l: usize) -> &CoefficientField {
        &self.c[i][l]
    }
    pub fn d(&self, l: usize, k: usize) -> &CoefficientField {
        &self.d[l][k]
    }
    pub fn e(&self, l: usize) -> &CoefficientField {
        &self.e[l]
    }

    pub fn n(&self) -> usize {
        self.dom.n()
    }
    pub fn m(&self) -> usize {
        self.dom.m()
    }
    pub fn dim(&self) -> usize {
        self.dom.dim()
    }

    /// `(L u)(p)`. Without analytic second derivatives of `u`, central
    /// differences are used when `fd_fallback` is set.
    pub fn apply(&self, u: &dyn TestFunction, p: &Point, fd_fallback: bool) -> Result<f64> {
        self.apply_z(u, &p.coords(), fd_fallback)
    }

    pub fn apply_z(&self, u: &dyn TestFunction, z: &[f64], fd_fallback: bool) -> Result<f64> {
        let (n, m) = (self.n(), self.m());
        let h = match u.hessian(z) {
            Some(h) => h,
            None if fd_fallback => fd_hessian(u, z),
            None => return Err(Error::DerivativeUnavailable),
        };
        let g = u.gradient(z);
        let x = &z[..n];
        let mut s = 0.0;
        for i in 0..n {
            s += x[i] * h[i][i] + self.b[i].eval(z) * g[i];
            for j in 0..n {
                if !self.a[i][j].is_zero() {
                    s += x[i] * x[j] * self.a[i][j].eval(z) * h[i][j];
                }
            }
            for l in 0..m {
                if !self.c[i][l].is_zero() {
                    s += x[i] * self.c[i][l].eval(z) * h[i][n + l];
                }
            }
        }
        for l in 0..m {
            s += self.e[l].eval(z) * g[n + l];
            for k in 0..m {
                if !self.d[l][k].is_zero() {
                    s += self.d[l][k].eval(z) * h[n + l][n + k];
                }
            }
        }
        Ok(self.scale * s)
    }

    /// First-order coefficients `γ (b, e)` written into `out`.
    #[inline]
    pub fn drift_into(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n();
        for (i, bi) in self.b.iter().enumerate() {
            out[i] = if bi.is_zero() { 0.0 } else { self.scale * bi.eval(z) };
        }
        for (l, el) in self.e.iter().enumerate() {
            out[n + l] = if el.is_zero() { 0.0 } else { self.scale * el.eval(z) };
        }
    }

    /// Second-order coefficient matrix (row-major, symmetric) written into `out`.
    #[inline]
    pub fn diffusion_into(&self, z: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n(), self.m());
        let dd = n + m;
        let g = self.scale;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let xi = z[i];
            out[i * dd + i] += g * xi;
            for j in 0..n {
                let aij = &self.a[i][j];
                if aij.is_zero() {
                    continue;
                }
                let v = 0.5 * g * xi * z[j] * aij.eval(z);
                out[i * dd + j] += v;
                out[j * dd + i] += v;
            }
            for l in 0..m {
                let cil = &self.c[i][l];
                if cil.is_zero() {
                    continue;
                }
                let v = 0.5 * g * xi * cil.eval(z);
                out[i * dd + n + l] += v;
                out[(n + l) * dd + i] += v;
            }
        }
        for l in 0..m {
            for k in 0..m {
                let dlk = &self.d[l][k];
                if dlk.is_zero() {
                    continue;
                }
                let v = 0.5 * g * dlk.eval(z);
                out[(n + l) * dd + n + k] += v;
                out[(n + k) * dd + n + l] += v;
            }
        }
    }

    /// `G` with `G Gᵀ = 2 A(z)`, written into `g`; `amat` is scratch of size `d²`.
    #[inline]
    pub fn factor_into(&self, z: &[f64], amat: &mut [f64], g: &mut [f64], work: &mut FactorWork) -> Result<()> {
        self.diffusion_into(z, amat);
        amat.iter_mut().for_each(|v| *v *= 2.0);
        pivoted_cholesky(amat, self.dim(), g, work)
    }

    pub fn drift(&self, p: &Point) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(&p.coords(), &mut out);
        out
    }

    pub fn diffusion_matrix(&self, p: &Point) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        self.diffusion_into(&p.coords(), &mut out);
        DMatrix::from_row_slice(d, d, &out)
    }

    pub fn diffusion_factor(&self, p: &Point) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut amat = vec![0.0; d * d];
        let mut g = vec![0.0; d * d];
        self.factor_into(&p.coords(), &mut amat, &mut g, &mut FactorWork::new(d))?;
        Ok(DMatrix::from_row_slice(d, d, &g))
    }

    /// `B_face` at a point `z` of the face (parent chart). The point is first
    /// projected onto the face.
    pub fn weight_at(&self, face: usize, z: &[f64]) -> f64 {
        match self.dom {
            DomainSpec::Simplex { dim } if face == dim + 1 => {
                let mut w = z.to_vec();
                let s: f64 = w.iter().sum();
                if s > 0.0 {
                    w.iter_mut().for_each(|v| *v /= s);
                }
                // Normal second-order coefficient of dist = 1 - Σx, divided
                // by dist, extrapolated to dist -> 0 (exact for quadratics).
                let d = dim;
                let mut amat = vec![0.0; d * d];
                let mut ratio = |h: f64| {
                    let zs: Vec<f64> = w.iter().map(|v| v - h / d as f64).collect();
                    self.diffusion_into(&zs, &mut amat);
                    amat.iter().sum::<f64>() / h
                };
                let h = 1e-3;
                let alpha = 2.0 * ratio(h) - ratio(2.0 * h);
                let mut drift = vec![0.0; d];
                self.drift_into(&w, &mut drift);
                let normal_drift = -drift.iter().sum::<f64>();
                if alpha.abs() < 1e-300 {
                    f64::NAN
                } else {
                    normal_drift / alpha
                }
            }
            _ => {
                let mut w = z.to_vec();
                w[face - 1] = 0.0;
                self.b[face - 1].eval(&w)
            }
        }
    }

    /// The weight `B_face` as a function on the face.
    pub fn weight(&self, face: usize) -> Result<WeightFn> {
        self.dom.check_face(face)?;
        let op = self.clone();
        Ok(Arc::new(move |z: &[f64]| op.weight_at(face, z)))
    }

    fn weight_samples(&self, face: usize, samples: usize) -> Vec<(Vec<f64>, f64)> {
        geometry::sample_face(&self.dom, face, samples)
            .into_iter()
            .map(|z| {
                let w = self.weight_at(face, &z);
                (z, w)
            })
            .collect()
    }

    pub fn classify_faces(&self, tol: f64, beta0_min: f64) -> Result<FaceClassification> {
        self.classify_faces_with(tol, beta0_min, DEFAULT_FACE_SAMPLES)
    }

    /// Label each face tangent (`sup |B| <= tol`) or transverse
    /// (`inf B >= beta0_min`) from face samples.
    pub fn classify_faces_with(&self, tol: f64, beta0_min: f64, samples: usize) -> Result<FaceClassification> {
        let mut out = FaceClassification {
            tangent: BTreeSet::new(),
            transverse: BTreeSet::new(),
            beta0: f64::INFINITY,
            weights: Vec::new(),
            ranges: Vec::new(),
        };
        for face in self.dom.faces() {
            let vals = self.weight_samples(face, samples);
            let min = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            let max = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
            let sup_abs = vals.iter().map(|v| v.1.abs()).fold(0.0, f64::max);
            if sup_abs <= tol {
                out.tangent.insert(face);
            } else if min >= beta0_min {
                out.transverse.insert(face);
                out.beta0 = out.beta0.min(min);
            } else {
                let mut witnesses: Vec<Vec<f64>> = vals
                    .iter()
                    .filter(|v| v.1 < beta0_min)
                    .take(MAX_WITNESSES / 2)
                    .map(|v| v.0.clone())
                    .collect();
                witnesses.extend(
                    vals.iter()
                        .filter(|v| v.1.abs() > tol)
                        .take(MAX_WITNESSES / 2)
                        .map(|v| v.0.clone()),
                );
                return Err(Error::NotClean { face, min, max, witnesses });
            }
            out.weights.push(self.weight(face)?);
            out.ranges.push((min, max));
        }
        Ok(out)
    }

    /// Sample-based check of non-negativity and strict ellipticity.
    ///
    /// On a corner box the quadratic form is the literal one,
    /// `|ξ|² + a ξ·ξ + c ξ·η + d η·η`. On a simplex the constant-coefficient
    /// form cannot be elliptic away from a vertex, so the check uses the
    /// scaled form `D^{-1/2} A D^{-1/2} / γ` in the chart adapted to the
    /// nearest vertex, and non-negativity is the inward normal drift on every
    /// face.
    pub fn check_assumptions(&self, samples: usize, seed: u64) -> AssumptionReport {
        let samples = samples.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
        let pts = geometry::sample_domain_shifted(&self.dom, samples, &shift);
        let mut violations = Vec::new();
        let mut nonneg_ok = true;
        let push = |v: Violation, list: &mut Vec<Violation>| {
            if list.len() < MAX_WITNESSES {
                list.push(v);
            }
        };
        match self.dom {
            DomainSpec::CornerBox { .. } => {
                for z in &pts {
                    for i in 0..self.n() {
                        let bi = self.b[i].eval(z);
                        if bi < -1e-12 {
                            nonneg_ok = false;
                            push(
                                Violation {
                                    condition: "non-negativity".into(),
                                    point: z.clone(),
                                    index: Some(i + 1),
                                    value: bi,
                                },
                                &mut violations,
                            );
                        }
                    }
                }
            }
            DomainSpec::Simplex { .. } => {
                for face in self.dom.faces() {
                    for (z, w) in self.weight_samples(face, (samples / 8).max(8)) {
                        if w < -1e-12 {
                            nonneg_ok = false;
                            push(
                                Violation {
                                    condition: "non-negativity".into(),
                                    point: z,
                                    index: Some(face),
                                    value: w,
                                },
                                &mut violations,
                            );
                        }
                    }
                }
            }
        }
        let mut lambda = f64::INFINITY;
        for z in &pts {
            let Some(q) = self.ellipticity_form(z) else { continue };
            let ev = SymmetricEigen::new(q).eigenvalues.min();
            if ev < lambda {
                lambda = ev;
            }
            if ev <= 0.0 {
                push(
                    Violation {
                        condition: "ellipticity".into(),
                        point: z.clone(),
                        index: None,
                        value: ev,
                    },
                    &mut violations,
                );
            }
        }
        AssumptionReport {
            nonneg_ok,
            ellipticity_ok: lambda > 0.0,
            lambda_estimate: lambda,
            samples: pts.len(),
            violations,
        }
    }

    fn ellipticity_form(&self, z: &[f64]) -> Option<DMatrix<f64>> {
        let (n, m) = (self.n(), self.m());
        match self.dom {
            DomainSpec::CornerBox { .. } => {
                let d = n + m;
                let mut q = DMatrix::zeros(d, d);
                for i in 0..n {
                    q[(i, i)] += 1.0;
                    for j in 0..n {
                        let v = 0.5 * self.a[i][j].eval(z);
                        q[(i, j)] += v;
                        q[(j, i)] += v;
                    }
                    for l in 0..m {
                        let v = 0.5 * self.c[i][l].eval(z);
                        q[(i, n + l)] += v;
                        q[(n + l, i)] += v;
                    }
                }
                for l in 0..m {
                    for k in 0..m {
                        let v = 0.5 * self.d[l][k].eval(z);
                        q[(n + l, n + k)] += v;
                        q[(n + k, n + l)] += v;
                    }
                }
                Some(q)
            }
            DomainSpec::Simplex { dim } => {
                let w = geometry::barycentric(z);
                if w.iter().any(|&v| v <= 1e-12) {
                    return None;
                }
                let vertex = (0..=dim).max_by(|&i, &j| w[i].total_cmp(&w[j])).unwrap();
                let mut amat = vec![0.0; dim * dim];
                self.diffusion_into(z, &mut amat);
                // Second-order matrix in barycentric coordinates: J A Jᵀ with J = [I; -1ᵀ].
                let a = DMatrix::from_row_slice(dim, dim, &amat);
                let mut jac = DMatrix::zeros(dim + 1, dim);
                for i in 0..dim {
                    jac[(i, i)] = 1.0;
                    jac[(dim, i)] = -1.0;
                }
                let wmat = &jac * a * jac.transpose();
                let keep: Vec<usize> = (0..=dim).filter(|&k| k != vertex).collect();
                let q = DMatrix::from_fn(dim, dim, |r, s| {
                    let (i, j) = (keep[r], keep[s]);
                    wmat[(i, j)] / (self.scale * (w[i] * w[j]).sqrt())
                });
                Some(q)
            }
        }
    }

    /// The operator induced on a tangent face: coefficients evaluated on the
    /// face and the row/column of the eliminated coordinate removed.
    pub fn restrict(&self, face: usize) -> Result<KimuraOperator> {
        self.dom.check_face(face)?;
        let vals = self.weight_samples(face, DEFAULT_FACE_SAMPLES);
        if vals.iter().any(|v| !(v.1.abs() <= DEFAULT_WEIGHT_TOL)) {
            return Err(Error::FaceNotTangent { face });
        }
        let drop = geometry::eliminated_coordinate(&self.dom, face);
        let child = geometry::face_domain(&self.dom, face)?;
        let emb = Embedding {
            drop,
            complement_of: match self.dom {
                DomainSpec::Simplex { dim } if face == dim + 1 => Some(dim - 1),
                _ => None,
            },
        };
        let keep = |k: &usize| *k != drop;
        let r = |f: &CoefficientField| f.restricted(emb);
        let n = self.n();
        Ok(KimuraOperator {
            dom: child,
            scale: self.scale,
            a: (0..n)
                .filter(keep)
                .map(|i| (0..n).filter(keep).map(|j| r(&self.a[i][j])).collect())
                .collect(),
            b: (0..n).filter(keep).map(|i| r(&self.b[i])).collect(),
            c: (0..n)
                .filter(keep)
                .map(|i| self.c[i].iter().map(r).collect())
                .collect(),
            d: self.d.iter().map(|row| row.iter().map(r).collect()).collect(),
            e: self.e.iter().map(r).collect(),
            name: format!("{}|face{}", self.name, face),
        })
    }

    /// Parabolic rescaling `x = λ x'`, `y = √λ y'`.
    pub fn rescale(&self, lambda: f64) -> Result<KimuraOperator> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!("rescaling factor must lie in (0,1], got {lambda}")));
        }
        let (n, m) = (self.n(), self.m());
        let sl = lambda.sqrt();
        let s: Vec<f64> = std::iter::repeat_n(lambda, n).chain(std::iter::repeat_n(sl, m)).collect();
        let map2 = |rows: &Vec<Vec<CoefficientField>>, mult: f64| -> Vec<Vec<CoefficientField>> {
            rows.iter()
                .map(|row| row.iter().map(|f| f.rescaled(&s, mult)).collect())
                .collect()
        };
        Ok(KimuraOperator {
            dom: self.dom,
            scale: self.scale,
            a: map2(&self.a, lambda),
            b: self.b.iter().map(|f| f.rescaled(&s, 1.0)).collect(),
            c: map2(&self.c, sl),
            d: map2(&self.d, 1.0),
            e: self.e.iter().map(|f| f.rescaled(&s, sl)).collect(),
            name: format!("{}@λ={lambda}", self.name),
        })
    }
}


/// Coefficient in a form that is cheap to evaluate on hot paths.
#[derive(Clone, Debug)]
pub(crate) enum Compiled {
    Zero,
    Const(f64),
    Affine(f64, Vec<(usize, f64)>),
    Field(CoefficientField),
}

impl Compiled {
    fn from_field(f: &CoefficientField) -> Self {
        let Some(p) = f.as_poly() else {
            return Compiled::Field(f.clone());
        };
        if p.is_zero() {
            return Compiled::Zero;
        }
        if let Some(c) = p.as_constant() {
            return Compiled::Const(c);
        }
        if p.degree() == 1 {
            let mut c0 = 0.0;
            let mut lin = Vec::new();
            for (e, c) in p.terms() {
                match e.iter().position(|&k| k == 1) {
                    Some(i) => lin.push((i, *c)),
                    None => c0 += c,
                }
            }
            return Compiled::Affine(c0, lin);
        }
        Compiled::Field(f.clone())
    }

    #[inline(always)]
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Compiled::Zero => 0.0,
            Compiled::Const(c) => *c,
            Compiled::Affine(c0, lin) => lin.iter().fold(*c0, |s, &(i, c)| s + c * z[i]),
            Compiled::Field(f) => f.eval(z),
        }
    }

    #[inline(always)]
    pub fn is_zero(&self) -> bool {
        matches!(self, Compiled::Zero)
    }
}

/// Flattened copy of an operator's coefficients for simulation.
#[derive(Clone, Debug)]
pub(crate) struct CompiledOperator {
    pub n: usize,
    pub m: usize,
    pub scale: f64,
    pub a: Vec<Compiled>,
    pub b: Vec<Compiled>,
    pub c: Vec<Compiled>,
    pub d: Vec<Compiled>,
    pub e: Vec<Compiled>,
}

impl CompiledOperator {
    pub fn new(op: &KimuraOperator) -> Self {
        let cm = Compiled::from_field;
        Self {
            n: op.n(),
            m: op.m(),
            scale: op.scale,
            a: op.a.iter().flatten().map(cm).collect(),
            b: op.b.iter().map(cm).collect(),
            c: op.c.iter().flatten().map(cm).collect(),
            d: op.d.iter().flatten().map(cm).collect(),
            e: op.e.iter().map(cm).collect(),
        }
    }

    #[inline]
    pub fn drift_into(&self, z: &[f64], out: &mut [f64]) {
        for (i, bi) in self.b.iter().enumerate() {
            out[i] = self.scale * bi.eval(z);
        }
        for (l, el) in self.e.iter().enumerate() {
            out[self.n + l] = self.scale * el.eval(z);
        }
    }

    /// Twice the second-order coefficient matrix, row-major.
    #[inline]
    pub fn covariance_into(&self, z: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let dd = n + m;
        let g = self.scale;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let xi = z[i];
            out[i * dd + i] += 2.0 * g * xi;
            for j in 0..n {
                let aij = &self.a[i * n + j];
                if aij.is_zero() {
                    continue;
                }
                let v = g * xi * z[j] * aij.eval(z);
                out[i * dd + j] += v;
                out[j * dd + i] += v;
            }
            for l in 0..m {
                let cil = &self.c[i * m + l];
                if cil.is_zero() {
                    continue;
                }
                let v = g * xi * cil.eval(z);
                out[i * dd + n + l] += v;
                out[(n + l) * dd + i] += v;
            }
        }
        for l in 0..m {
            for k in 0..m {
                let dlk = &self.d[l * m + k];
                if dlk.is_zero() {
                    continue;
                }
                let v = g * dlk.eval(z);
                out[(n + l) * dd + n + k] += v;
                out[(n + k) * dd + n + l] += v;
            }
        }
    }
}
