//! Euler–Maruyama simulation of Kimura diffusions with absorption on tangent
//! faces.
//!
//! Paths live in the chart of the original domain. Once a tangent face is
//! hit its coordinate is frozen at zero; the remaining coordinates then
//! evolve with the original coefficients evaluated on the face, which is the
//! restricted operator. A path whose free dimension drops to zero stops.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Point, StratumId};
use crate::linalg::{pivoted_cholesky, FactorWork, CLIP_TOL};
use crate::operator::{presets, CompiledOperator, FaceClassification, KimuraOperator, DEFAULT_BETA0_MIN, DEFAULT_WEIGHT_TOL};

pub const DEFAULT_DT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub max_steps: u64,
    /// Simulate operators that fail the cleanness check; only faces whose
    /// weight vanishes identically are then absorbing.
    pub allow_nonclean: bool,
    pub stop_at_first_hit: bool,
    /// Occupation windows `dist(ω, H) < ε` for transverse faces `H`.
    pub occupation_eps: Vec<f64>,
    /// Keep every `k`-th state.
    pub record_every: Option<usize>,
    pub weight_tol: f64,
    pub beta0_min: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: 1.0,
            seed: 0,
            max_steps: 100_000_000,
            allow_nonclean: false,
            stop_at_first_hit: false,
            occupation_eps: Vec::new(),
            record_every: None,
            weight_tol: DEFAULT_WEIGHT_TOL,
            beta0_min: DEFAULT_BETA0_MIN,
        }
    }
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt <= self.horizon) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt <= T (dt = {}, T = {})",
                self.dt, self.horizon
            )));
        }
        if self.occupation_eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidParameter("occupation windows must be positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        let r = self.horizon / self.dt;
        let n = r.round();
        if (r - n).abs() < 1e-9 * r.max(1.0) {
            n as u64
        } else {
            r.ceil() as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitEvent {
    /// Interpolated crossing time.
    pub time: f64,
    /// Face label in the original domain.
    pub face: usize,
    /// State at the end of the step, in the original chart.
    pub location: Point,
    /// Number of absorbed faces after this event.
    pub depth: usize,
    /// Index of the step in which the crossing happened.
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_index: u64,
    /// Tangent faces already containing the starting point.
    pub initial: StratumId,
    pub events: Vec<HitEvent>,
    pub terminal_time: f64,
    pub terminal: Point,
    /// Absorbed faces at the terminal time.
    pub terminal_stratum: StratumId,
    /// `occupation[k][j]`: time with distance to the `k`-th transverse face below `occupation_eps[j]`.
    pub occupation: Vec<Vec<f64>>,
    pub trajectory: Option<Vec<(f64, Vec<f64>)>>,
}

impl PathRecord {
    pub fn first_hit(&self) -> Option<&HitEvent> {
        self.events.first()
    }
}

/// Per-thread scratch buffers.
struct Work {
    drift: Vec<f64>,
    amat: Vec<f64>,
    g: Vec<f64>,
    factor: FactorWork,
    noise: Vec<f64>,
    znew: Vec<f64>,
    bary: Vec<f64>,
}

impl Work {
    fn new(d: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            amat: vec![0.0; d * d],
            g: vec![0.0; d * d],
            factor: FactorWork::new(d),
            noise: vec![0.0; d],
            znew: vec![0.0; d],
            bary: vec![0.0; d + 1],
        }
    }
}

/// Mirror a coordinate that overshot the outer box edge `|v| = radius`.
#[inline]
fn reflect_edge(v: f64, radius: f64) -> f64 {
    if v > radius {
        2.0 * radius - v
    } else if v < -radius {
        -2.0 * radius - v
    } else {
        v
    }
}

/// Project a post-step state back onto the closed domain. Coordinates listed
/// in `pinned` (faces) are set exactly onto their face.
fn project(dom: &DomainSpec, z: &mut [f64], pinned: &[bool], bary: &mut [f64]) {
    match *dom {
        DomainSpec::CornerBox { n, radius, .. } => {
            for (i, v) in z.iter_mut().enumerate() {
                if i >= n {
                    *v = reflect_edge(*v, radius);
                } else if pinned[i] {
                    *v = 0.0;
                } else {
                    *v = reflect_edge(v.max(0.0), radius).max(0.0);
                }
            }
        }
        DomainSpec::Simplex { dim } => {
            let mut s = 0.0;
            for i in 0..dim {
                bary[i] = z[i];
                s += z[i];
            }
            bary[dim] = 1.0 - s;
            let mut total = 0.0;
            let mut imax = 0;
            for k in 0..=dim {
                if pinned[k] || bary[k] < 0.0 {
                    bary[k] = 0.0;
                }
                total += bary[k];
                if bary[k] > bary[imax] {
                    imax = k;
                }
            }
            if total != 1.0 {
                let fixed = bary[imax] + (1.0 - total);
                if fixed >= 0.0 {
                    bary[imax] = fixed;
                } else {
                    bary.iter_mut().for_each(|v| *v /= total);
                }
            }
            z[..dim].copy_from_slice(&bary[..dim]);
        }
    }
}

/// One Euler–Maruyama step from `state` with the given standard normals,
/// followed by projection onto the closed domain.
pub fn step(op: &KimuraOperator, state: &Point, dt: f64, noise: &[f64]) -> Result<Point> {
    let d = op.dim();
    if noise.len() != d {
        return Err(Error::InvalidParameter(format!("need {d} normals, got {}", noise.len())));
    }
    let z = state.coords();
    let mut w = Work::new(d);
    op.drift_into(&z, &mut w.drift);
    op.factor_into(&z, &mut w.amat, &mut w.g, &mut w.factor)?;
    let sq = dt.sqrt();
    for i in 0..d {
        let mut v = z[i] + w.drift[i] * dt;
        for j in 0..d {
            v += w.g[i * d + j] * sq * noise[j];
        }
        if !v.is_finite() {
            return Err(Error::NonFinite { time: dt });
        }
        w.znew[i] = v;
    }
    let pinned = vec![false; op.domain().face_count()];
    project(op.domain(), &mut w.znew, &pinned, &mut w.bary);
    Ok(Point::from_coords(&w.znew, op.n()))
}

/// Path simulator for a fixed operator and configuration.
pub struct Simulator {
    op: KimuraOperator,
    fast: CompiledOperator,
    scalar: bool,
    cfg: SimConfig,
    tangent: Vec<bool>,
    transverse_faces: Vec<usize>,
    classification: Option<FaceClassification>,
}

impl Simulator {
    pub fn new(op: KimuraOperator, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let faces = op.domain().face_count();
        let (tangent, transverse_faces, classification) = match op.classify_faces(cfg.weight_tol, cfg.beta0_min) {
            Ok(c) => {
                let t = (1..=faces).map(|f| c.is_tangent(f)).collect();
                let tr = c.transverse.iter().copied().collect();
                (t, tr, Some(c))
            }
            Err(Error::NotClean { .. }) if cfg.allow_nonclean => {
                let mut t = vec![false; faces];
                let mut tr = Vec::new();
                for f in 1..=faces {
                    let w = op.weight(f)?;
                    let pts = crate::geometry::sample_face(op.domain(), f, 256);
                    let vals: Vec<f64> = pts.iter().map(|z| w(z)).collect();
                    if vals.iter().all(|v| v.abs() <= cfg.weight_tol) {
                        t[f - 1] = true;
                    } else if vals.iter().all(|&v| v >= cfg.beta0_min) {
                        tr.push(f);
                    }
                }
                (t, tr, None)
            }
            Err(e) => return Err(e),
        };
        Ok(Self {
            fast: CompiledOperator::new(&op),
            scalar: true,
            op,
            cfg,
            tangent,
            transverse_faces,
            classification,
        })
    }

    #[cfg(test)]
    fn without_scalar_path(mut self) -> Self {
        self.scalar = false;
        self
    }

    pub fn operator(&self) -> &KimuraOperator {
        &self.op
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn classification(&self) -> Option<&FaceClassification> {
        self.classification.as_ref()
    }

    pub fn is_tangent(&self, face: usize) -> bool {
        self.tangent[face - 1]
    }

    pub fn transverse_faces(&self) -> &[usize] {
        &self.transverse_faces
    }

    /// Per-path generator: stream `path_index` of the ChaCha8 generator seeded by `seed`.
    pub fn rng(seed: u64, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        rng
    }

    pub fn simulate(&self, p0: &Point, path_index: u64) -> Result<PathRecord> {
        let mut rng = Self::rng(self.cfg.seed, path_index);
        self.simulate_with(p0, path_index, &mut rng)
    }

    fn simulate_with(&self, p0: &Point, path_index: u64, rng: &mut ChaCha8Rng) -> Result<PathRecord> {
        let dom = *self.op.domain();
        let (n, d) = (self.op.n(), self.op.dim());
        let nfaces = dom.face_count();
        let stratum0 = crate::geometry::classify_point(p0, &dom, crate::geometry::DEFAULT_TOL)?;
        let nsteps = self.cfg.steps();
        if nsteps > self.cfg.max_steps {
            return Err(Error::MaxStepsExceeded {
                needed: nsteps,
                max_steps: self.cfg.max_steps,
            });
        }
        if self.scalar && n == 1 && d == 1 {
            return self.simulate_scalar(p0, path_index, rng, &stratum0, nsteps);
        }
        let mut w = Work::new(d);
        let mut z = p0.coords();
        let mut absorbed = vec![false; nfaces];
        let mut initial = StratumId::interior();
        for f in stratum0.faces() {
            if self.tangent[f - 1] {
                absorbed[f - 1] = true;
                initial.insert(f);
            }
        }
        // Put the start exactly on its absorbed faces.
        project(&dom, &mut z, &absorbed, &mut w.bary);
        let mut n_absorbed = initial.codim();
        let free = |k: usize| d.saturating_sub(k.min(n));
        let eps = &self.cfg.occupation_eps;
        let mut occupation = vec![vec![0.0; eps.len()]; self.transverse_faces.len()];
        let mut events: Vec<HitEvent> = Vec::new();
        let mut trajectory = self.cfg.record_every.map(|_| vec![(0.0, z.clone())]);
        let mut crossings: Vec<(f64, usize)> = Vec::with_capacity(nfaces);
        let tangent_faces: Vec<usize> = (1..=nfaces).filter(|&f| self.tangent[f - 1]).collect();
        let mut t = 0.0;
        let mut last_event = f64::NEG_INFINITY;

        for k in 0..nsteps {
            if free(n_absorbed) == 0 || (self.cfg.stop_at_first_hit && !events.is_empty()) {
                break;
            }
            let h = if k + 1 == nsteps {
                self.cfg.horizon - t
            } else {
                self.cfg.dt
            };
            if h <= 0.0 {
                break;
            }
            for (slot, &f) in self.transverse_faces.iter().enumerate() {
                let dist = dom.face_coordinate(&z, f);
                for (j, &e) in eps.iter().enumerate() {
                    if dist < e {
                        occupation[slot][j] += h;
                    }
                }
            }
            self.fast.drift_into(&z, &mut w.drift);
            self.fast.covariance_into(&z, &mut w.amat);
            pivoted_cholesky(&w.amat, d, &mut w.g, &mut w.factor)?;
            for v in w.noise.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let sq = h.sqrt();
            for i in 0..d {
                let mut v = z[i] + w.drift[i] * h;
                let row = &w.g[i * d..(i + 1) * d];
                for j in 0..d {
                    v += row[j] * sq * w.noise[j];
                }
                w.znew[i] = v;
            }
            if w.znew.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { time: t + h });
            }
            crossings.clear();
            for &f in &tangent_faces {
                if absorbed[f - 1] {
                    continue;
                }
                let wnew = dom.face_coordinate(&w.znew, f);
                if wnew <= 0.0 {
                    let wold = dom.face_coordinate(&z, f);
                    let theta = if wold > 0.0 { wold / (wold - wnew) } else { 0.0 };
                    crossings.push((theta, f));
                    absorbed[f - 1] = true;
                }
            }
            if !crossings.is_empty() {
                crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
                // Hit locations are read off the straight step at the crossing time.
                let mut pinned = absorbed.clone();
                for &(_, f) in &crossings {
                    pinned[f - 1] = false;
                }
                for &(theta, f) in &crossings {
                    let mut time = t + theta * h;
                    if time <= last_event {
                        time = last_event.next_up();
                    }
                    last_event = time;
                    n_absorbed += 1;
                    pinned[f - 1] = true;
                    let mut loc: Vec<f64> = z.iter().zip(&w.znew).map(|(a, b)| a + theta * (b - a)).collect();
                    project(&dom, &mut loc, &pinned, &mut w.bary);
                    events.push(HitEvent {
                        time,
                        face: f,
                        location: Point::from_coords(&loc, n),
                        depth: n_absorbed,
                        step: k,
                    });
                }
            }
            project(&dom, &mut w.znew, &absorbed, &mut w.bary);
            std::mem::swap(&mut z, &mut w.znew);
            t += h;
            if let (Some(tr), Some(every)) = (trajectory.as_mut(), self.cfg.record_every) {
                if (k + 1) % every as u64 == 0 {
                    tr.push((t, z.clone()));
                }
            }
        }
        let terminal_stratum = StratumId::from_faces((1..=nfaces).filter(|&f| absorbed[f - 1]));
        Ok(PathRecord {
            path_index,
            initial,
            events,
            terminal_time: t,
            terminal: Point::from_coords(&z, n),
            terminal_stratum,
            occupation,
            trajectory,
        })
    }

    /// Specialization of the path loop for operators on `[0, ∞)` or `[0, 1]`.
    fn simulate_scalar(
        &self,
        p0: &Point,
        path_index: u64,
        rng: &mut ChaCha8Rng,
        stratum0: &StratumId,
        nsteps: u64,
    ) -> Result<PathRecord> {
        let simplex = self.op.domain().is_simplex();
        let radius = self.op.domain().extent();
        let nfaces = if simplex { 2 } else { 1 };
        let (a, b, gamma) = (&self.fast.a[0], &self.fast.b[0], self.fast.scale);
        let tangent = [self.tangent[0], simplex && self.tangent[1]];
        let mut absorbed = [false; 2];
        let mut initial = StratumId::interior();
        for f in stratum0.faces() {
            if tangent[f - 1] {
                absorbed[f - 1] = true;
                initial.insert(f);
            }
        }
        let mut x = p0.x[0];
        if absorbed[0] {
            x = 0.0;
        } else if absorbed[1] {
            x = 1.0;
        }
        let eps = &self.cfg.occupation_eps;
        let mut occupation = vec![vec![0.0; eps.len()]; self.transverse_faces.len()];
        let mut events: Vec<HitEvent> = Vec::new();
        let mut trajectory = self.cfg.record_every.map(|_| vec![(0.0, vec![x])]);
        let dt = self.cfg.dt;
        let sq_dt = dt.sqrt();
        let mut t = 0.0;
        let z = |x: f64| [x];

        for k in 0..nsteps {
            if absorbed[0] || absorbed[1] || (self.cfg.stop_at_first_hit && !events.is_empty()) {
                break;
            }
            let (h, sq) = if k + 1 == nsteps {
                let h = self.cfg.horizon - t;
                (h, h.max(0.0).sqrt())
            } else {
                (dt, sq_dt)
            };
            if h <= 0.0 {
                break;
            }
            for (slot, &f) in self.transverse_faces.iter().enumerate() {
                let dist = if f == 1 { x } else { 1.0 - x };
                for (j, &e) in eps.iter().enumerate() {
                    if dist < e {
                        occupation[slot][j] += h;
                    }
                }
            }
            let zx = z(x);
            let drift = gamma * b.eval(&zx);
            let var = 2.0 * gamma * (x + x * x * a.eval(&zx));
            if var < -CLIP_TOL {
                return Err(Error::FactorizationFailure { pivot: var });
            }
            let xi: f64 = StandardNormal.sample(rng);
            let mut xn = x + drift * h + var.max(0.0).sqrt() * sq * xi;
            if !xn.is_finite() {
                return Err(Error::NonFinite { time: t + h });
            }
            let mut hit = None;
            if tangent[0] && xn <= 0.0 {
                hit = Some((1, x, xn));
                xn = 0.0;
            } else if tangent[1] && xn >= 1.0 {
                hit = Some((2, 1.0 - x, 1.0 - xn));
                xn = 1.0;
            }
            x = if simplex {
                xn.clamp(0.0, 1.0)
            } else {
                reflect_edge(xn.max(0.0), radius).max(0.0)
            };
            if let Some((f, wold, wnew)) = hit {
                let theta = if wold > 0.0 { wold / (wold - wnew) } else { 0.0 };
                absorbed[f - 1] = true;
                events.push(HitEvent {
                    time: t + theta * h,
                    face: f,
                    location: Point::corner(vec![x]),
                    depth: initial.codim() + 1,
                    step: k,
                });
            }
            t += h;
            if let (Some(tr), Some(every)) = (trajectory.as_mut(), self.cfg.record_every) {
                if (k + 1) % every as u64 == 0 {
                    tr.push((t, vec![x]));
                }
            }
        }
        let terminal_stratum = StratumId::from_faces((1..=nfaces).filter(|&f| absorbed[f - 1]));
        Ok(PathRecord {
            path_index,
            initial,
            events,
            terminal_time: t,
            terminal: Point::corner(vec![x]),
            terminal_stratum,
            occupation,
            trajectory,
        })
    }

    /// Simulate paths `0..n_paths` on `workers` threads (`0` = all cores).
    /// Records are returned in path order and do not depend on `workers`.
    pub fn run(&self, p0: &Point, n_paths: u64, workers: usize) -> Result<Vec<PathRecord>> {
        let body = || {
            (0..n_paths)
                .into_par_iter()
                .map(|i| self.simulate(p0, i))
                .collect::<Result<Vec<_>>>()
        };
        with_workers(workers, body)
    }
}

/// Run `f` on a pool of `workers` threads (`0` = the global pool).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Configuration of the non-clean corner example `dX_1 = X_2 dt + √(2X_1) dW_1`,
/// `dX_2 = X_1 dt + √(2X_2) dW_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// The corner counts as reached when the unprojected sum falls to this level.
    pub eps_abs: f64,
    /// Paths whose sum exceeds this level stop as non-hitting; the sum
    /// process returns from level `s` with probability `e^{-s}`.
    pub escape_level: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: 20.0,
            seed: 0,
            eps_abs: 1e-10,
            escape_level: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleOutcome {
    pub corner_hit: bool,
    pub hit_time: Option<f64>,
    /// `X_1 + X_2` at the stopping time.
    pub final_sum: f64,
}

struct CounterexampleStepper {
    op: KimuraOperator,
    work: Work,
}

impl CounterexampleStepper {
    fn new() -> Result<Self> {
        Ok(Self {
            op: presets::remark_counterexample()?,
            work: Work::new(2),
        })
    }

    /// Advance by `h`. The raw state may go negative; coefficients see its
    /// positive part. Returns the sum of positive parts.
    fn advance(&mut self, z: &mut [f64; 2], h: f64, xi: [f64; 2]) -> Result<f64> {
        let w = &mut self.work;
        let zp = [z[0].max(0.0), z[1].max(0.0)];
        self.op.drift_into(&zp, &mut w.drift);
        self.op.factor_into(&zp, &mut w.amat, &mut w.g, &mut w.factor)?;
        let sq = h.sqrt();
        for i in 0..2 {
            let v = z[i] + w.drift[i] * h + sq * (w.g[2 * i] * xi[0] + w.g[2 * i + 1] * xi[1]);
            if !v.is_finite() {
                return Err(Error::NonFinite { time: h });
            }
            z[i] = v;
        }
        Ok(positive_sum(z))
    }
}

struct CornerRun {
    z: [f64; 2],
    t: f64,
    done: Option<CounterexampleOutcome>,
}

impl CornerRun {
    fn start(p0: [f64; 2], eps_abs: f64) -> Self {
        let done = (p0[0] + p0[1] <= eps_abs).then_some(CounterexampleOutcome {
            corner_hit: true,
            hit_time: Some(0.0),
            final_sum: p0[0] + p0[1],
        });
        Self { z: p0, t: 0.0, done }
    }

    fn step(&mut self, st: &mut CounterexampleStepper, cfg: &CounterexampleConfig, h: f64, xi: [f64; 2]) -> Result<()> {
        if self.done.is_some() {
            return Ok(());
        }
        let before = positive_sum(&self.z);
        let after = st.advance(&mut self.z, h, xi)?;
        if after <= cfg.eps_abs {
            let theta = if before > after { (before - cfg.eps_abs) / (before - after) } else { 0.0 };
            self.done = Some(CounterexampleOutcome {
                corner_hit: true,
                hit_time: Some(self.t + theta.clamp(0.0, 1.0) * h),
                final_sum: 0.0,
            });
            self.z = [0.0, 0.0];
        } else if after >= cfg.escape_level {
            self.done = Some(CounterexampleOutcome {
                corner_hit: false,
                hit_time: None,
                final_sum: after,
            });
        }
        self.t += h;
        Ok(())
    }

    fn finish(self) -> CounterexampleOutcome {
        self.done.unwrap_or(CounterexampleOutcome {
            corner_hit: false,
            hit_time: None,
            final_sum: positive_sum(&self.z),
        })
    }
}

fn positive_sum(z: &[f64; 2]) -> f64 {
    z[0].max(0.0) + z[1].max(0.0)
}

fn validate_counterexample(p0: [f64; 2], cfg: &CounterexampleConfig) -> Result<()> {
    if p0.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::PointOutsideDomain {
            point: p0.to_vec(),
            tol: 0.0,
        });
    }
    SimConfig::new(cfg.dt, cfg.horizon, cfg.seed).validate()
}

/// Simulate the non-clean corner example and report whether the origin is reached.
pub fn simulate_counterexample(p0: [f64; 2], cfg: &CounterexampleConfig, path_index: u64) -> Result<CounterexampleOutcome> {
    validate_counterexample(p0, cfg)?;
    let mut rng = Simulator::rng(cfg.seed, path_index);
    let mut st = CounterexampleStepper::new()?;
    let mut run = CornerRun::start(p0, cfg.eps_abs);
    let nsteps = SimConfig::new(cfg.dt, cfg.horizon, cfg.seed).steps();
    for _ in 0..nsteps {
        if run.done.is_some() {
            break;
        }
        let h = cfg.dt.min(cfg.horizon - run.t);
        let xi = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        run.step(&mut st, cfg, h, xi)?;
    }
    Ok(run.finish())
}

/// The same path at steps `dt` and `dt/2`, driven by one Brownian path: the
/// coarse increment is the sum of the two fine ones.
pub fn simulate_counterexample_coupled(
    p0: [f64; 2],
    cfg: &CounterexampleConfig,
    path_index: u64,
) -> Result<(CounterexampleOutcome, CounterexampleOutcome)> {
    validate_counterexample(p0, cfg)?;
    let mut rng = Simulator::rng(cfg.seed, path_index);
    let mut st = CounterexampleStepper::new()?;
    let mut coarse = CornerRun::start(p0, cfg.eps_abs);
    let mut fine = CornerRun::start(p0, cfg.eps_abs);
    let nsteps = SimConfig::new(cfg.dt, cfg.horizon, cfg.seed).steps();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..nsteps {
        if coarse.done.is_some() && fine.done.is_some() {
            break;
        }
        let h = cfg.dt.min(cfg.horizon - coarse.t);
        let a = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        let b = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        fine.step(&mut st, cfg, 0.5 * h, a)?;
        fine.step(&mut st, cfg, 0.5 * h, b)?;
        coarse.step(&mut st, cfg, h, [r * (a[0] + b[0]), r * (a[1] + b[1])])?;
    }
    Ok((coarse.finish(), fine.finish()))
}
