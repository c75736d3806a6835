//! Kolmogorov solvers for one-dimensional Kimura operators (finite volumes
//! in the speed measure) and a finite-difference solver on two-dimensional
//! corner boxes.
//!
//! In one dimension `L = A(x) ∂² + β(x) ∂` is written as `(1/m)(p u')'`
//! with `p = exp ∫ β/A` and `m = p/A`. Near a face with weight `B` the
//! speed density behaves like `x^{B-1}`, so `m dx` is the weighted measure
//! up to a smooth positive factor; kernels are densities against `m dx`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::linalg::solve_tridiagonal;
use crate::operator::{KimuraOperator, DEFAULT_BETA0_MIN, DEFAULT_WEIGHT_TOL};
use crate::quad::GaussLegendre;
use crate::sde::{SimConfig, Simulator};

pub mod plane;

/// Negative kernel values above `-KERNEL_CLIP` are rounding noise.
pub const KERNEL_CLIP: f64 = 1e-10;

const QUAD_POINTS: usize = 10;

/// Node grid on `[0, ℓ]` with speed-measure cell masses and edge conductances.
#[derive(Debug, Clone, Serialize)]
pub struct Grid1D {
    pub nodes: Vec<f64>,
    /// `∫ m` over the dual cell of each node; zero on Dirichlet nodes.
    pub masses: Vec<f64>,
    /// `1 / ∫ 1/p` over each cell `[x_k, x_{k+1}]`.
    pub conductance: Vec<f64>,
    /// Homogeneous Dirichlet condition at `x = 0` and `x = ℓ` (tangent faces).
    pub dirichlet: [bool; 2],
    pub length: f64,
    /// Face weights at `x = 0` and `x = ℓ` (zero at a non-degenerate box edge).
    pub weights: [f64; 2],
    /// Flux coefficient `p` at both ends.
    pub p_ends: [f64; 2],
    /// Whether `x = ℓ` is a face of the domain (simplex) rather than a box edge.
    pub degenerate_right: bool,
}

/// Coefficients of a one-dimensional operator in Sturm–Liouville form.
struct SturmLiouville<'a> {
    op: &'a KimuraOperator,
    length: f64,
    b0: f64,
    b1: f64,
    right: bool,
    gl: GaussLegendre,
}

impl SturmLiouville<'_> {
    fn diffusion(&self, x: f64) -> f64 {
        let mut a = [0.0];
        self.op.diffusion_into(&[x], &mut a);
        a[0]
    }

    fn drift(&self, x: f64) -> f64 {
        let mut b = [0.0];
        self.op.drift_into(&[x], &mut b);
        b[0]
    }

    /// Smooth part of `β/A` once the end singularities are removed.
    fn remainder(&self, x: f64) -> f64 {
        let mut r = self.drift(x) / self.diffusion(x) - self.b0 / x;
        if self.right {
            r += self.b1 / (self.length - x);
        }
        r
    }

    fn integral_remainder(&self, a: f64, b: f64) -> f64 {
        self.gl.integrate(a, b, |s| self.remainder(s))
    }

    /// `p(x) / (x^{B0} (ℓ-x)^{B1})` given `R(x_k)` at a node `xk <= x`.
    fn p_smooth(&self, rk: f64, xk: f64, x: f64) -> f64 {
        (rk + self.integral_remainder(xk, x)).exp()
    }

    fn end_factor(&self, x: f64) -> f64 {
        let mut v = x.powf(self.b0);
        if self.right {
            v *= (self.length - x).powf(self.b1);
        }
        v
    }
}

impl Grid1D {
    /// Graded grid with `cells` cells: `x_k = (k/M)² ℓ` towards `x = 0`, and
    /// mirrored about `ℓ/2` when both ends are faces.
    pub fn new(op: &KimuraOperator, cells: usize) -> Result<Self> {
        let dom = *op.domain();
        if dom.n() != 1 || dom.m() != 0 {
            return Err(Error::InvalidParameter(format!(
                "one-dimensional solver needs a single corner coordinate, got {dom}"
            )));
        }
        if cells < 4 {
            return Err(Error::InvalidParameter("grid needs at least 4 cells".into()));
        }
        let cls = op.classify_faces(DEFAULT_WEIGHT_TOL, DEFAULT_BETA0_MIN)?;
        let right = matches!(dom, DomainSpec::Simplex { .. });
        let length = dom.extent();
        let mut b0 = op.weight_at(1, &[0.0]);
        let mut b1 = if right { op.weight_at(2, &[length]) } else { 0.0 };
        if cls.is_tangent(1) {
            b0 = 0.0;
        }
        if right && cls.is_tangent(2) {
            b1 = 0.0;
        }
        let dirichlet = [cls.is_tangent(1), right && cls.is_tangent(2)];
        let nodes = graded_nodes(length, cells, right);
        let sl = SturmLiouville {
            op,
            length,
            b0,
            b1,
            right,
            gl: GaussLegendre::new(QUAD_POINTS),
        };

        // R(x_k) = ∫_0^{x_k} remainder, accumulated cell by cell.
        let mut rnode = vec![0.0; cells + 1];
        for k in 0..cells {
            rnode[k + 1] = rnode[k] + sl.integral_remainder(nodes[k], nodes[k + 1]);
        }
        let p_at = |k: usize, x: f64| sl.end_factor(x) * sl.p_smooth(rnode[k], nodes[k], x);
        let smooth_at = |k: usize, x: f64| sl.p_smooth(rnode[k], nodes[k], x);
        let gl = &sl.gl;

        let mut conductance = vec![0.0; cells];
        for k in 0..cells {
            let (a, b) = (nodes[k], nodes[k + 1]);
            let resistance = if k == 0 && b0 > 0.0 {
                if b0 >= 1.0 {
                    f64::INFINITY
                } else {
                    // ∫_0^b x^{-B0} g(x) dx
                    gl.integrate_power_singular(b, 1.0 - b0, |x| {
                        let mut g = 1.0 / smooth_at(0, x);
                        if right {
                            g /= (length - x).powf(b1);
                        }
                        g
                    })
                }
            } else if right && k + 1 == cells && b1 > 0.0 {
                if b1 >= 1.0 {
                    f64::INFINITY
                } else {
                    gl.integrate_power_singular(b - a, 1.0 - b1, |w| {
                        let x = length - w;
                        1.0 / (x.powf(b0) * smooth_at(k, x))
                    })
                }
            } else {
                gl.integrate(a, b, |x| 1.0 / p_at(k, x))
            };
            conductance[k] = 1.0 / resistance;
        }

        let m_at = |k: usize, x: f64| p_at(k, x) / sl.diffusion(x);
        // ∫ m over [a, b] ⊂ [x_k, x_{k+1}]
        let cell_mass = |k: usize, a: f64, b: f64| -> f64 {
            if k == 0 && a == 0.0 {
                // m = x^{B0-1} (ℓ-x)^{B1} e^R x/A
                gl.integrate_power_singular(b, b0, |x| {
                    let mut g = smooth_at(0, x) * x / sl.diffusion(x);
                    if right {
                        g *= (length - x).powf(b1);
                    }
                    g
                })
            } else if right && k + 1 == cells && b == length {
                gl.integrate_power_singular(b - a, b1, |w| {
                    let x = length - w;
                    x.powf(b0) * smooth_at(k, x) * w / sl.diffusion(x)
                })
            } else {
                gl.integrate(a, b, |x| m_at(k, x))
            }
        };
        let mut masses = vec![0.0; cells + 1];
        for k in 0..=cells {
            if (k == 0 && dirichlet[0]) || (k == cells && dirichlet[1]) {
                continue;
            }
            let mut mass = 0.0;
            if k > 0 {
                let mid = 0.5 * (nodes[k - 1] + nodes[k]);
                mass += cell_mass(k - 1, mid, nodes[k]);
            }
            if k < cells {
                let mid = 0.5 * (nodes[k] + nodes[k + 1]);
                mass += cell_mass(k, nodes[k], mid);
            }
            if !(mass.is_finite() && mass > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "speed measure of cell {k} is {mass}; weight at the boundary must be positive or zero"
                )));
            }
            masses[k] = mass;
        }
        // p vanishes at a face with positive weight; R(0) = 0.
        let p_ends = [
            if b0 == 0.0 { sl.end_factor(0.0) } else { 0.0 },
            if b1 == 0.0 { p_at(cells - 1, length) } else { 0.0 },
        ];
        Ok(Self {
            nodes,
            masses,
            conductance,
            dirichlet,
            length,
            weights: [b0, b1],
            p_ends,
            degenerate_right: right,
        })
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_active(&self, k: usize) -> bool {
        !((k == 0 && self.dirichlet[0]) || (k == self.cells() && self.dirichlet[1]))
    }

    /// `(K u)_k` for the symmetric stiffness matrix.
    pub fn stiffness_apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.nodes.len();
        for k in 0..n {
            let mut v = 0.0;
            if k > 0 {
                v += self.conductance[k - 1] * (u[k] - u[k - 1]);
            }
            if k + 1 < n {
                v += self.conductance[k] * (u[k] - u[k + 1]);
            }
            out[k] = v;
        }
    }

    /// Discrete generator `-M⁻¹ K u` on active nodes (zero on Dirichlet nodes).
    pub fn generator_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut ku = vec![0.0; u.len()];
        self.stiffness_apply(u, &mut ku);
        (0..u.len())
            .map(|k| if self.is_active(k) { -ku[k] / self.masses[k] } else { 0.0 })
            .collect()
    }

    /// `(f, g)` in the discrete weighted inner product.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.masses.iter().zip(f).zip(g).map(|((m, a), b)| m * a * b).sum()
    }

    /// Node whose dual cell contains `x`.
    pub fn node_of(&self, x: f64) -> usize {
        let k = self.nodes.partition_point(|&v| v < x).min(self.cells());
        if k > 0 && x - self.nodes[k - 1] < self.nodes[k] - x {
            k - 1
        } else {
            k
        }
    }

    /// Piecewise-linear interpolation of nodal values.
    pub fn interpolate(&self, u: &[f64], x: f64) -> f64 {
        let k = self.nodes.partition_point(|&v| v <= x).clamp(1, self.cells());
        let (a, b) = (self.nodes[k - 1], self.nodes[k]);
        let s = ((x - a) / (b - a)).clamp(0.0, 1.0);
        u[k - 1] * (1.0 - s) + u[k] * s
    }

    /// Nodal values of `f`.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}

fn graded_nodes(length: f64, cells: usize, symmetric: bool) -> Vec<f64> {
    if !symmetric {
        return (0..=cells)
            .map(|k| {
                let s = k as f64 / cells as f64;
                s * s * length
            })
            .collect();
    }
    let half = cells / 2;
    let mut nodes = vec![0.0; cells + 1];
    for k in 0..=half {
        let s = k as f64 / half as f64;
        nodes[k] = 0.5 * length * s * s;
    }
    let rest = cells - half;
    for k in 0..rest {
        let s = k as f64 / rest as f64;
        nodes[cells - k] = length - 0.5 * length * s * s;
    }
    nodes[cells] = length;
    nodes
}

/// Time stepping of the θ-scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stepping {
    pub dt: f64,
    /// `1` is implicit Euler, `1/2` Crank–Nicolson.
    pub theta: f64,
    /// Keep every `store_every`-th slice (the first and last are always kept).
    pub store_every: usize,
}

impl Default for Stepping {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            theta: 1.0,
            store_every: 100,
        }
    }
}

impl Stepping {
    fn validate(&self, horizon: f64) -> Result<u64> {
        if !(self.dt > 0.0 && horizon > 0.0 && (0.0..=1.0).contains(&self.theta)) || self.store_every == 0 {
            return Err(Error::InvalidParameter(format!(
                "need dt > 0, T > 0, theta in [0, 1], store_every > 0 (dt={}, T={horizon}, theta={})",
                self.dt, self.theta
            )));
        }
        if self.theta < 0.5 {
            log::warn!("theta = {} < 1/2: the scheme is only conditionally stable", self.theta);
        }
        Ok((horizon / self.dt - 1e-9).ceil().max(1.0) as u64)
    }
}

/// Stored time slices of a grid function.
#[derive(Debug, Clone, Serialize)]
pub struct Slices {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Slices {
    pub fn last(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Reusable tridiagonal buffers for one grid.
struct Stepper<'a> {
    grid: &'a Grid1D,
    theta: f64,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    ku: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(grid: &'a Grid1D, theta: f64) -> Self {
        let n = grid.nodes.len();
        Self {
            grid,
            theta,
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            ku: vec![0.0; n],
            scratch: Vec::with_capacity(n),
        }
    }

    /// Assemble `M + θ h K` with identity rows on Dirichlet nodes.
    fn assemble(&mut self, h: f64) {
        let g = self.grid;
        let n = g.nodes.len();
        let th = self.theta * h;
        for k in 0..n {
            if !g.is_active(k) {
                self.lower[k] = 0.0;
                self.upper[k] = 0.0;
                self.diag[k] = 1.0;
                continue;
            }
            let cl = if k > 0 { g.conductance[k - 1] } else { 0.0 };
            let cr = if k + 1 < n { g.conductance[k] } else { 0.0 };
            self.lower[k] = -th * cl;
            self.upper[k] = -th * cr;
            self.diag[k] = g.masses[k] + th * (cl + cr);
        }
    }

    /// One backward step `u ← (M+θhK)⁻¹ (M - (1-θ)hK) u` with boundary values
    /// `bc` imposed at the new time level on Dirichlet nodes.
    fn backward(&mut self, u: &mut [f64], h: f64, bc: [f64; 2]) -> Result<()> {
        let g = self.grid;
        let n = u.len();
        self.assemble(h);
        g.stiffness_apply(u, &mut self.ku);
        for k in 0..n {
            self.rhs[k] = if g.is_active(k) {
                g.masses[k] * u[k] - (1.0 - self.theta) * h * self.ku[k]
            } else if k == 0 {
                bc[0]
            } else {
                bc[1]
            };
        }
        solve_tridiagonal(&self.lower, &self.diag, &self.upper, &mut self.rhs, &mut self.scratch)?;
        u.copy_from_slice(&self.rhs);
        Ok(())
    }

    /// One forward step `k ← M⁻¹ (M - (1-θ)hK) (M+θhK)⁻¹ M k`, the adjoint of
    /// [`Stepper::backward`] in the weighted inner product. Returns the
    /// discrete flux into each Dirichlet end during the step.
    fn forward(&mut self, dens: &mut [f64], h: f64) -> Result<[f64; 2]> {
        let g = self.grid;
        let n = dens.len();
        self.assemble(h);
        for k in 0..n {
            self.rhs[k] = if g.is_active(k) { g.masses[k] * dens[k] } else { 0.0 };
        }
        let old_near = [dens[1], dens[n - 2]];
        solve_tridiagonal(&self.lower, &self.diag, &self.upper, &mut self.rhs, &mut self.scratch)?;
        g.stiffness_apply(&self.rhs, &mut self.ku);
        let th = self.theta;
        for k in 0..n {
            dens[k] = if g.is_active(k) {
                self.rhs[k] - (1.0 - th) * h * self.ku[k] / g.masses[k]
            } else {
                0.0
            };
        }
        // Flux across the edges adjacent to each Dirichlet node.
        let c0 = g.conductance[0];
        let cm = g.conductance[n - 2];
        let left = if g.dirichlet[0] {
            c0 * (th * self.rhs[1] + (1.0 - th) * old_near[0])
        } else {
            0.0
        };
        let right = if g.dirichlet[1] {
            cm * (th * self.rhs[n - 2] + (1.0 - th) * old_near[1])
        } else {
            0.0
        };
        Ok([left, right])
    }
}

/// Solve `u_t = L u`, `u(0) = f`, with homogeneous Dirichlet data on tangent ends.
pub fn solve_backward(grid: &Grid1D, f: &[f64], horizon: f64, stepping: &Stepping) -> Result<Slices> {
    if f.len() != grid.nodes.len() {
        return Err(Error::InvalidParameter("initial data does not match the grid".into()));
    }
    let nsteps = stepping.validate(horizon)?;
    let mut u = f.to_vec();
    for k in 0..u.len() {
        if !grid.is_active(k) {
            u[k] = 0.0;
        }
    }
    let mut st = Stepper::new(grid, stepping.theta);
    let mut out = Slices {
        times: vec![0.0],
        values: vec![u.clone()],
    };
    let mut t = 0.0;
    for n in 0..nsteps {
        let h = stepping.dt.min(horizon - t);
        st.backward(&mut u, h, [0.0, 0.0])?;
        t = if n + 1 == nsteps { horizon } else { t + h };
        if (n + 1) % stepping.store_every as u64 == 0 || n + 1 == nsteps {
            out.times.push(t);
            out.values.push(u.clone());
        }
    }
    Ok(out)
}

/// Solve the forward equation `T̂_t f` for a density `f` against the speed
/// measure. Mass reaching a tangent end leaves the grid.
pub fn solve_forward(grid: &Grid1D, f: &[f64], horizon: f64, stepping: &Stepping) -> Result<Slices> {
    if f.len() != grid.nodes.len() {
        return Err(Error::InvalidParameter("initial data does not match the grid".into()));
    }
    let nsteps = stepping.validate(horizon)?;
    let mut k: Vec<f64> = f.iter().enumerate().map(|(i, &v)| if grid.is_active(i) { v } else { 0.0 }).collect();
    let mut st = Stepper::new(grid, stepping.theta);
    let mut out = Slices {
        times: vec![0.0],
        values: vec![k.clone()],
    };
    let mut t = 0.0;
    for n in 0..nsteps {
        let h = stepping.dt.min(horizon - t);
        st.forward(&mut k, h)?;
        t = if n + 1 == nsteps { horizon } else { t + h };
        if (n + 1) % stepping.store_every as u64 == 0 || n + 1 == nsteps {
            out.times.push(t);
            out.values.push(k.clone());
        }
    }
    Ok(out)
}

/// Dirichlet heat kernel `k(t, p0, ·)` (density against the speed measure).
#[derive(Debug, Clone, Serialize)]
pub struct KernelSolution {
    pub grid: Grid1D,
    pub p0: f64,
    pub source_node: usize,
    /// Every time level, starting at 0.
    pub times: Vec<f64>,
    /// Surviving mass `Σ m_k k_k` at every time level.
    pub survival: Vec<f64>,
    /// Discrete absorption rate into each end at every step (index 0 is `t = 0`).
    pub flux: [Vec<f64>; 2],
    /// Stored kernel slices.
    pub slices: Slices,
    /// `p k'` at each end from the one-sided three-point stencil, every time level.
    pub trace: [Vec<f64>; 2],
}

fn stencil_trace(grid: &Grid1D, k: &[f64], end: usize) -> f64 {
    let n = grid.cells();
    let (x1, x2, k1, k2) = if end == 0 {
        (grid.nodes[1], grid.nodes[2], k[1], k[2])
    } else {
        (grid.length - grid.nodes[n - 1], grid.length - grid.nodes[n - 2], k[n - 1], k[n - 2])
    };
    let deriv = (k1 * x2 * x2 - k2 * x1 * x1) / (x1 * x2 * (x2 - x1));
    grid.p_ends[end] * deriv
}

/// Evolve a unit point mass at the node containing `p0` under the forward
/// (adjoint) scheme.
pub fn dirichlet_kernel(grid: &Grid1D, p0: f64, horizon: f64, stepping: &Stepping) -> Result<KernelSolution> {
    let nsteps = stepping.validate(horizon)?;
    let j = grid.node_of(p0);
    if !grid.is_active(j) || j == 0 || j == grid.cells() {
        return Err(Error::InvalidParameter(format!("start {p0} must be an interior grid point")));
    }
    let mut k = vec![0.0; grid.nodes.len()];
    k[j] = 1.0 / grid.masses[j];
    let mut st = Stepper::new(grid, stepping.theta);
    let mut sol = KernelSolution {
        grid: grid.clone(),
        p0,
        source_node: j,
        times: vec![0.0],
        survival: vec![1.0],
        flux: [vec![0.0], vec![0.0]],
        slices: Slices {
            times: vec![0.0],
            values: vec![k.clone()],
        },
        trace: [vec![stencil_trace(grid, &k, 0)], vec![stencil_trace(grid, &k, 1)]],
    };
    let mut t = 0.0;
    for n in 0..nsteps {
        let h = stepping.dt.min(horizon - t);
        let f = st.forward(&mut k, h)?;
        t = if n + 1 == nsteps { horizon } else { t + h };
        let surv = grid.inner(&grid.masses.iter().map(|_| 1.0).collect::<Vec<_>>(), &k);
        let prev = *sol.survival.last().unwrap();
        if surv > prev * (1.0 + 1e-12) + 1e-14 {
            return Err(Error::LinearSolveFailure(format!(
                "surviving mass increased from {prev} to {surv} at t = {t}"
            )));
        }
        sol.times.push(t);
        sol.survival.push(surv);
        sol.flux[0].push(f[0]);
        sol.flux[1].push(f[1]);
        sol.trace[0].push(stencil_trace(grid, &k, 0));
        sol.trace[1].push(stencil_trace(grid, &k, 1));
        if (n + 1) % stepping.store_every as u64 == 0 || n + 1 == nsteps {
            sol.slices.times.push(t);
            sol.slices.values.push(k.clone());
        }
    }
    Ok(sol)
}

impl KernelSolution {
    /// `∫ k(t, p0, q) f(q) dμ(q)` for the stored slice `i`.
    pub fn integrate_slice(&self, i: usize, f: &[f64]) -> f64 {
        self.grid.inner(&self.slices.values[i], f)
    }

    /// Absorbed mass at each end up to every time level (discrete flux, trapezoid-free since the
    /// fluxes are per-step rates).
    pub fn absorbed(&self, end: usize) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for i in 1..self.times.len() {
            acc += self.flux[end][i] * (self.times[i] - self.times[i - 1]);
            out.push(acc);
        }
        out
    }

    /// Rows `t, x, k, dmu_cell_mass` for the stored slices.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));
        wr.write_record(["t", "x", "k", "dmu_cell_mass"]).map_err(err)?;
        for (t, k) in self.slices.times.iter().zip(&self.slices.values) {
            for (i, x) in self.grid.nodes.iter().enumerate() {
                wr.write_record([t.to_string(), x.to_string(), k[i].to_string(), self.grid.masses[i].to_string()])
                    .map_err(err)?;
            }
        }
        wr.flush().map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

/// Hitting density `h(s)` at a tangent end (`face` 1 is `x = 0`, face 2 is `x = ℓ`).
#[derive(Debug, Clone, Serialize)]
pub struct CaloricDensity {
    pub face: usize,
    pub times: Vec<f64>,
    pub density: Vec<f64>,
}

impl CaloricDensity {
    /// `∫_0^t h` by the trapezoid rule on the stored levels.
    pub fn cumulative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.times.len() {
            let (a, b) = (self.times[i - 1], self.times[i]);
            if a >= t {
                break;
            }
            let bb = b.min(t);
            let hb = self.density[i - 1] + (self.density[i] - self.density[i - 1]) * (bb - a) / (b - a);
            acc += 0.5 * (self.density[i - 1] + hb) * (bb - a);
        }
        acc
    }

    /// Mean of `h` over `[a, b]`.
    pub fn bin_average(&self, a: f64, b: f64) -> f64 {
        (self.cumulative(b) - self.cumulative(a)) / (b - a)
    }
}

/// Normal derivative of the kernel at a tangent face, clipped at zero.
pub fn caloric_density(ks: &KernelSolution, face: usize) -> Result<CaloricDensity> {
    let g = &ks.grid;
    let end = match face {
        1 => 0,
        2 if g.degenerate_right => 1,
        _ => return Err(Error::InvalidFace { face }),
    };
    if !g.dirichlet[end] {
        return Err(Error::FaceNotTangent { face });
    }
    let n = g.cells();
    let dist: Vec<f64> = if end == 0 {
        g.nodes.clone()
    } else {
        g.nodes.iter().rev().map(|x| g.length - x).collect()
    };
    let first = dist[1];
    let interior_nodes = dist[1..n].iter().filter(|&&d| d <= 10.0 * first * (1.0 + 1e-12)).count();
    if interior_nodes < 3 {
        return Err(Error::GridTooCoarse { face, interior_nodes });
    }
    let density = ks.trace[end]
        .iter()
        .map(|&h| if h < 0.0 && h > -KERNEL_CLIP { 0.0 } else { h })
        .collect();
    Ok(CaloricDensity {
        face,
        times: ks.times.clone(),
        density,
    })
}

fn end_of(grid: &Grid1D, face: usize) -> Result<usize> {
    let end = match face {
        1 => 0,
        2 if grid.degenerate_right => 1,
        _ => return Err(Error::InvalidFace { face }),
    };
    if !grid.dirichlet[end] {
        return Err(Error::FaceNotTangent { face });
    }
    Ok(end)
}

/// Extension of unit boundary data at `end`: linear, vanishing at the
/// opposite end when that end is also Dirichlet, and constant otherwise.
fn boundary_extension(grid: &Grid1D, end: usize) -> Vec<f64> {
    let other = grid.dirichlet[1 - end];
    grid.sample(|x| {
        let s = if end == 0 { 1.0 - x / grid.length } else { x / grid.length };
        if other {
            s
        } else {
            1.0
        }
    })
}

fn check_compatible(zeta: &dyn Fn(f64) -> f64) -> Result<()> {
    let z0 = zeta(0.0);
    if z0.abs() > 1e-12 {
        return Err(Error::IncompatibleData { value: z0 });
    }
    Ok(())
}

/// Solve `u_t = L u`, `u(0) = 0`, `u = ζ(t)` on `face`, zero on the other
/// tangent end, by imposing the data in the Dirichlet rows.
pub fn solve_dirichlet_direct(
    grid: &Grid1D,
    zeta: &dyn Fn(f64) -> f64,
    face: usize,
    horizon: f64,
    stepping: &Stepping,
) -> Result<Slices> {
    let end = end_of(grid, face)?;
    check_compatible(zeta)?;
    let nsteps = stepping.validate(horizon)?;
    let mut u = vec![0.0; grid.nodes.len()];
    let mut st = Stepper::new(grid, stepping.theta);
    let mut out = Slices {
        times: vec![0.0],
        values: vec![u.clone()],
    };
    let mut t = 0.0;
    for n in 0..nsteps {
        let h = stepping.dt.min(horizon - t);
        t = if n + 1 == nsteps { horizon } else { t + h };
        let mut bc = [0.0, 0.0];
        bc[end] = zeta(t);
        st.backward(&mut u, h, bc)?;
        if (n + 1) % stepping.store_every as u64 == 0 || n + 1 == nsteps {
            out.times.push(t);
            out.values.push(u.clone());
        }
    }
    Ok(out)
}

fn derivative(zeta: &dyn Fn(f64) -> f64, t: f64) -> f64 {
    let h = 1e-6 * t.abs().max(1.0);
    if t <= h {
        (zeta(t + h) - zeta(t)) / h
    } else {
        (zeta(t + h) - zeta(t - h)) / (2.0 * h)
    }
}

/// Duhamel form `u(t) = ζ̃(t) - ∫_0^t T_{t-s} (∂_s - L) ζ̃(s) ds` with the
/// discrete semigroup and the trapezoid rule in time.
pub fn duhamel_solve(
    grid: &Grid1D,
    zeta: &dyn Fn(f64) -> f64,
    face: usize,
    horizon: f64,
    stepping: &Stepping,
) -> Result<Slices> {
    let end = end_of(grid, face)?;
    check_compatible(zeta)?;
    let nsteps = stepping.validate(horizon)?;
    let n = grid.nodes.len();
    let phi = boundary_extension(grid, end);
    let lphi = grid.generator_apply(&phi);
    let forcing = |t: f64| -> Vec<f64> {
        let (z, dz) = (zeta(t), derivative(zeta, t));
        (0..n)
            .map(|k| if grid.is_active(k) { dz * phi[k] - z * lphi[k] } else { 0.0 })
            .collect()
    };
    let mut st = Stepper::new(grid, stepping.theta);
    let mut s = vec![0.0; n];
    let mut g_prev = forcing(0.0);
    let mut out = Slices {
        times: vec![0.0],
        values: vec![vec![0.0; n]],
    };
    let mut t = 0.0;
    for step in 0..nsteps {
        let h = stepping.dt.min(horizon - t);
        t = if step + 1 == nsteps { horizon } else { t + h };
        for k in 0..n {
            s[k] += 0.5 * h * g_prev[k];
        }
        st.backward(&mut s, h, [0.0, 0.0])?;
        let g = forcing(t);
        for k in 0..n {
            s[k] += 0.5 * h * g[k];
        }
        g_prev = g;
        if (step + 1) % stepping.store_every as u64 == 0 || step + 1 == nsteps {
            let z = zeta(t);
            out.times.push(t);
            out.values.push((0..n).map(|k| z * phi[k] - s[k]).collect());
        }
    }
    Ok(out)
}

/// PDE value against the Monte Carlo estimate of `E[ζ(t - τ) 1{τ ≤ t, hit on face}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepresentationCheck {
    pub pde: f64,
    pub mc: f64,
    pub stderr: f64,
    pub discrepancy: f64,
}

/// Compare the Duhamel solution at `(t, p0)` with the stochastic representation.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_rep_check(
    op: &KimuraOperator,
    zeta: &(dyn Fn(f64) -> f64 + Sync),
    face: usize,
    p0: f64,
    t: f64,
    n_paths: u64,
    cells: usize,
    stepping: &Stepping,
    sim_cfg: &SimConfig,
    workers: usize,
) -> Result<RepresentationCheck> {
    let grid = Grid1D::new(op, cells)?;
    let sol = duhamel_solve(&grid, zeta, face, t, stepping)?;
    let pde = grid.interpolate(sol.last(), p0);
    let mut cfg = sim_cfg.clone();
    cfg.horizon = t;
    cfg.stop_at_first_hit = true;
    let sim = Simulator::new(op.clone(), cfg)?;
    let recs = sim.run(&crate::Point::corner(vec![p0]), n_paths, workers)?;
    let vals: Vec<f64> = recs
        .iter()
        .map(|r| match r.first_hit() {
            Some(ev) if ev.face == face && ev.time <= t => zeta(t - ev.time),
            _ => 0.0,
        })
        .collect();
    let nf = vals.len() as f64;
    let mc = vals.iter().sum::<f64>() / nf;
    let var = vals.iter().map(|v| (v - mc) * (v - mc)).sum::<f64>() / (nf - 1.0).max(1.0);
    Ok(RepresentationCheck {
        pde,
        mc,
        stderr: (var / nf).sqrt(),
        discrepancy: (pde - mc).abs(),
    })
}

#[cfg(test)]
mod tests;
