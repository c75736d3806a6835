//! Monte Carlo estimators built on [`Simulator`] path records.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{classify_point, restrict_point, DomainSpec, Point, StratumId, DEFAULT_TOL};
use crate::sde::{
    simulate_counterexample, simulate_counterexample_coupled, with_workers, CounterexampleConfig, PathRecord,
    SimConfig, Simulator,
};

/// Two-sided normal quantile for 95% intervals.
pub const Z95: f64 = 1.959963984540054;

/// Default window for corner-hit detection.
pub const DEFAULT_EPS_CORNER: f64 = 1e-3;

/// Binomial proportion with a 95% interval. Zero (or full) counts use the
/// rule of three.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub count: u64,
    pub n: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(count: u64, n: u64) -> Self {
        let nf = n.max(1) as f64;
        let p = count as f64 / nf;
        let stderr = (p * (1.0 - p) / nf).sqrt();
        let (ci_low, ci_high) = if count == 0 {
            (0.0, (3.0 / nf).min(1.0))
        } else if count == n {
            ((1.0 - 3.0 / nf).max(0.0), 1.0)
        } else {
            ((p - Z95 * stderr).max(0.0), (p + Z95 * stderr).min(1.0))
        };
        Self {
            count,
            n,
            estimate: p,
            stderr,
            ci_low,
            ci_high,
        }
    }
}

/// Uniform tensor histogram on a box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridHistogram {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: usize,
    pub counts: Vec<u64>,
}

impl GridHistogram {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: usize) -> Result<Self> {
        if bins == 0 || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter("histogram needs bins > 0 and lo < hi".into()));
        }
        let cells = (bins as u128).pow(lo.len() as u32);
        if cells > 1 << 24 {
            return Err(Error::InvalidParameter(format!("{cells} histogram cells")));
        }
        Ok(Self {
            lo,
            hi,
            bins,
            counts: vec![0; cells as usize],
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Flat index of the cell containing `z`; points on the upper edge go to the last cell.
    pub fn index(&self, z: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for k in 0..self.dim() {
            let u = (z[k] - self.lo[k]) / (self.hi[k] - self.lo[k]);
            if !(0.0..=1.0).contains(&u) {
                return None;
            }
            let b = ((u * self.bins as f64) as usize).min(self.bins - 1);
            idx = idx * self.bins + b;
        }
        Some(idx)
    }

    pub fn add(&mut self, z: &[f64]) -> bool {
        match self.index(z) {
            Some(i) => {
                self.counts[i] += 1;
                true
            }
            None => false,
        }
    }

    /// Lower and upper corners of cell `idx`.
    pub fn cell(&self, mut idx: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for k in (0..d).rev() {
            let b = idx % self.bins;
            idx /= self.bins;
            let w = (self.hi[k] - self.lo[k]) / self.bins as f64;
            lo[k] = self.lo[k] + b as f64 * w;
            hi[k] = if b + 1 == self.bins { self.hi[k] } else { lo[k] + w };
        }
        (lo, hi)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// One row per cell: `lo_k, hi_k` per axis, count, mass and its stderr
    /// relative to `n_paths`.
    pub fn write_csv<W: Write>(&self, w: W, n_paths: u64) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = Vec::new();
        for k in 0..self.dim() {
            header.push(format!("lo{k}"));
            header.push(format!("hi{k}"));
        }
        header.extend(["count", "mass", "stderr"].map(String::from));
        wr.write_record(&header).map_err(io_err)?;
        for (i, &c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.cell(i);
            let p = Proportion::new(c, n_paths);
            let mut row: Vec<String> = Vec::new();
            for k in 0..self.dim() {
                row.push(lo[k].to_string());
                row.push(hi[k].to_string());
            }
            row.extend([c.to_string(), p.estimate.to_string(), p.stderr.to_string()]);
            wr.write_record(&row).map_err(io_err)?;
        }
        wr.flush().map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

/// Chart box covering `dom` (the y-range is `[-R, R]`).
fn chart_bounds(dom: &DomainSpec) -> (Vec<f64>, Vec<f64>) {
    let r = dom.extent();
    let mut lo = vec![0.0; dom.n()];
    let mut hi = vec![r; dom.n()];
    lo.extend(std::iter::repeat_n(-r, dom.m()));
    hi.extend(std::iter::repeat_n(r, dom.m()));
    (lo, hi)
}

/// Estimated transition measure at time `t` split by terminal stratum.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionDecomposition {
    pub t: f64,
    pub p0: Point,
    pub n_paths: u64,
    pub masses: BTreeMap<StratumId, Proportion>,
    pub interior: GridHistogram,
    pub strata: BTreeMap<StratumId, GridHistogram>,
}

impl TransitionDecomposition {
    /// Bin terminal states of `records` (all run to the same horizon `t`).
    pub fn from_records(dom: &DomainSpec, t: f64, p0: &Point, records: &[PathRecord], bins: usize) -> Result<Self> {
        let n = records.len() as u64;
        let (lo, hi) = chart_bounds(dom);
        let mut interior = GridHistogram::new(lo.clone(), hi.clone(), bins)?;
        let mut strata: BTreeMap<StratumId, GridHistogram> = BTreeMap::new();
        let mut counts: BTreeMap<StratumId, u64> = BTreeMap::new();
        for r in records {
            *counts.entry(r.terminal_stratum.clone()).or_default() += 1;
            let z = r.terminal.coords();
            if r.terminal_stratum.is_interior() {
                interior.add(&z);
            } else {
                let h = match strata.entry(r.terminal_stratum.clone()) {
                    std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(GridHistogram::new(lo.clone(), hi.clone(), bins)?)
                    }
                };
                h.add(&z);
            }
        }
        counts.entry(StratumId::interior()).or_default();
        let masses = counts.into_iter().map(|(s, c)| (s, Proportion::new(c, n))).collect();
        Ok(Self {
            t,
            p0: p0.clone(),
            n_paths: n,
            masses,
            interior,
            strata,
        })
    }

    pub fn mass(&self, s: &StratumId) -> Proportion {
        self.masses.get(s).copied().unwrap_or_else(|| Proportion::new(0, self.n_paths))
    }

    /// Rows `stratum, count, mass, stderr, ci_low, ci_high`.
    pub fn write_masses_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["stratum", "count", "mass", "stderr", "ci_low", "ci_high"])
            .map_err(io_err)?;
        for (s, p) in &self.masses {
            wr.write_record([
                s.to_string(),
                p.count.to_string(),
                p.estimate.to_string(),
                p.stderr.to_string(),
                p.ci_low.to_string(),
                p.ci_high.to_string(),
            ])
            .map_err(io_err)?;
        }
        wr.flush().map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

fn on_tangent_boundary(sim: &Simulator, p0: &Point) -> Result<bool> {
    let s = classify_point(p0, sim.operator().domain(), DEFAULT_TOL)?;
    let hit = s.faces().any(|f| sim.is_tangent(f));
    Ok(hit)
}

/// Simulate `n_paths` paths to time `t` and bin their terminal states.
pub fn decompose(
    op: &crate::KimuraOperator,
    p0: &Point,
    t: f64,
    n_paths: u64,
    cfg: &SimConfig,
    bins: usize,
    workers: usize,
) -> Result<TransitionDecomposition> {
    let mut cfg = cfg.clone();
    cfg.horizon = t;
    cfg.stop_at_first_hit = false;
    let sim = Simulator::new(op.clone(), cfg)?;
    if on_tangent_boundary(&sim, p0)? {
        return Err(Error::InvalidParameter("start point lies on the tangent boundary".into()));
    }
    let records = sim.run(p0, n_paths, workers)?;
    TransitionDecomposition::from_records(op.domain(), t, p0, &records, bins)
}

/// First tangent-boundary hit on one face.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitSample {
    pub time: f64,
    /// Hit location in the coordinates of the face.
    pub location: Point,
}

/// Joint histogram of first hitting time and hitting location on a face.
#[derive(Debug, Clone, Serialize)]
pub struct HittingHistogram {
    pub face: usize,
    pub time_edges: Vec<f64>,
    pub loc_edges: Vec<f64>,
    /// Row-major `time bin x location bin`.
    pub counts: Vec<u64>,
    pub n_paths: u64,
    /// Scale of the operator, used for intrinsic distances on the face.
    pub scale: f64,
    pub samples: Vec<HitSample>,
}

fn check_edges(e: &[f64]) -> Result<()> {
    if e.len() < 2 || e.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
    }
    Ok(())
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if v < edges[0] || v > edges[last] {
        return None;
    }
    Some(edges.partition_point(|&e| e <= v).saturating_sub(1).min(last - 1))
}

/// `count + 1` evenly spaced edges on `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|k| lo + (hi - lo) * k as f64 / count as f64).collect()
}

impl HittingHistogram {
    /// Build from records; only paths whose first event is on `face` count.
    /// The location axis is the first coordinate of the face point (a 0-dimensional
    /// face puts every hit in the first location bin).
    pub fn from_records(
        sim: &Simulator,
        face: usize,
        records: &[PathRecord],
        time_edges: Vec<f64>,
        loc_edges: Vec<f64>,
    ) -> Result<Self> {
        let dom = *sim.operator().domain();
        dom.check_face(face)?;
        if !sim.is_tangent(face) {
            return Err(Error::FaceNotTangent { face });
        }
        check_edges(&time_edges)?;
        check_edges(&loc_edges)?;
        let nl = loc_edges.len() - 1;
        let mut counts = vec![0; (time_edges.len() - 1) * nl];
        let mut samples = Vec::new();
        for r in records {
            let Some(ev) = r.first_hit() else { continue };
            if ev.face != face {
                continue;
            }
            let (loc, _) = restrict_point(&ev.location, face, &dom, DEFAULT_TOL.max(1e-9))?;
            let lc = loc.coords();
            let lb = if lc.is_empty() { Some(0) } else { bin_of(&loc_edges, lc[0]) };
            if let (Some(tb), Some(lb)) = (bin_of(&time_edges, ev.time), lb) {
                counts[tb * nl + lb] += 1;
            }
            samples.push(HitSample {
                time: ev.time,
                location: loc,
            });
        }
        Ok(Self {
            face,
            time_edges,
            loc_edges,
            counts,
            n_paths: records.len() as u64,
            scale: sim.operator().scale(),
            samples,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of paths whose first hit is on this face by time `t`.
    pub fn cumulative_mass(&self, t: f64) -> Proportion {
        let c = self.samples.iter().filter(|s| s.time <= t).count() as u64;
        Proportion::new(c, self.n_paths)
    }

    /// Time-marginal density per time bin, `(density, stderr)`.
    pub fn time_density(&self) -> Vec<(f64, f64)> {
        let nl = self.loc_edges.len() - 1;
        let n = self.n_paths.max(1) as f64;
        self.time_edges
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let c: u64 = self.counts[k * nl..(k + 1) * nl].iter().sum();
                let p = c as f64 / n;
                let width = w[1] - w[0];
                (p / width, (p * (1.0 - p) / n).sqrt() / width)
            })
            .collect()
    }

    /// Rows `t_lo, t_hi, loc_lo, loc_hi, count, mass, stderr`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t_lo", "t_hi", "loc_lo", "loc_hi", "count", "mass", "stderr"])
            .map_err(io_err)?;
        let nl = self.loc_edges.len() - 1;
        for (k, tw) in self.time_edges.windows(2).enumerate() {
            for (j, lw) in self.loc_edges.windows(2).enumerate() {
                let c = self.counts[k * nl + j];
                let p = Proportion::new(c, self.n_paths);
                wr.write_record([
                    tw[0].to_string(),
                    tw[1].to_string(),
                    lw[0].to_string(),
                    lw[1].to_string(),
                    c.to_string(),
                    p.estimate.to_string(),
                    p.stderr.to_string(),
                ])
                .map_err(io_err)?;
            }
        }
        wr.flush().map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

/// Simulate `n_paths` paths up to the first tangent hit and histogram the
/// hits landing on `face`.
pub fn hitting_histogram(
    op: &crate::KimuraOperator,
    p0: &Point,
    face: usize,
    n_paths: u64,
    cfg: &SimConfig,
    time_edges: Vec<f64>,
    loc_edges: Vec<f64>,
    workers: usize,
) -> Result<HittingHistogram> {
    let mut cfg = cfg.clone();
    cfg.stop_at_first_hit = true;
    let sim = Simulator::new(op.clone(), cfg)?;
    op.domain().check_face(face)?;
    if !sim.is_tangent(face) {
        return Err(Error::FaceNotTangent { face });
    }
    let records = sim.run(p0, n_paths, workers)?;
    HittingHistogram::from_records(&sim, face, &records, time_edges, loc_edges)
}

/// Intrinsic distance `2√(w/γ)` from a point at chart distance `w` of a face,
/// for an operator whose leading coefficient near the face is `γ w ∂_w²`.
pub fn intrinsic_face_distance(w: f64, scale: f64) -> f64 {
    2.0 * (w.max(0.0) / scale).sqrt()
}

/// Whether the first tangent hit of `r` lands on face `i` within intrinsic
/// distance `eps` of face `j`. A start on both faces counts as a hit.
pub fn is_corner_hit(r: &PathRecord, dom: &DomainSpec, scale: f64, faces: (usize, usize), eps: f64) -> bool {
    let (i, j) = faces;
    if r.initial.contains(i) && r.initial.contains(j) {
        return true;
    }
    let Some(ev) = r.first_hit() else { return false };
    if ev.face != i && ev.face != j {
        return false;
    }
    let other = if ev.face == i { j } else { i };
    let w = dom.face_coordinate(&ev.location.coords(), other);
    intrinsic_face_distance(w, scale) < eps
}

/// Corner-hit estimates for one sample at several windows.
#[derive(Debug, Clone, Serialize)]
pub struct CornerHit {
    pub faces: (usize, usize),
    pub eps: Vec<f64>,
    pub estimates: Vec<Proportion>,
}

/// Fraction of paths whose first tangent hit lands on `H_i` or `H_j` within
/// `eps` of `H_i ∩ H_j`, for each window in `eps`.
pub fn corner_hit_probability(
    op: &crate::KimuraOperator,
    p0: &Point,
    faces: (usize, usize),
    n_paths: u64,
    cfg: &SimConfig,
    eps: &[f64],
    workers: usize,
) -> Result<CornerHit> {
    let dom = *op.domain();
    dom.check_face(faces.0)?;
    dom.check_face(faces.1)?;
    let mut cfg = cfg.clone();
    cfg.stop_at_first_hit = true;
    let sim = Simulator::new(op.clone(), cfg)?;
    if !sim.is_tangent(faces.0) {
        return Err(Error::FaceNotTangent { face: faces.0 });
    }
    let records = sim.run(p0, n_paths, workers)?;
    let estimates = eps
        .iter()
        .map(|&e| {
            let c = records
                .iter()
                .filter(|r| is_corner_hit(r, &dom, op.scale(), faces, e))
                .count() as u64;
            Proportion::new(c, n_paths)
        })
        .collect();
    Ok(CornerHit {
        faces,
        eps: eps.to_vec(),
        estimates,
    })
}

/// Origin-hit frequency of the non-clean example.
pub fn counterexample_frequency(
    p0: [f64; 2],
    cfg: &CounterexampleConfig,
    n_paths: u64,
    workers: usize,
) -> Result<Proportion> {
    let hits = with_workers(workers, || {
        (0..n_paths)
            .into_par_iter()
            .map(|i| simulate_counterexample(p0, cfg, i).map(|o| o.corner_hit as u64))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Proportion::new(hits.iter().sum(), n_paths))
}

/// Origin-hit frequencies at `dt` and `dt/2` on shared Brownian paths.
pub fn counterexample_frequency_coupled(
    p0: [f64; 2],
    cfg: &CounterexampleConfig,
    n_paths: u64,
    workers: usize,
) -> Result<(Proportion, Proportion)> {
    let hits = with_workers(workers, || {
        (0..n_paths)
            .into_par_iter()
            .map(|i| simulate_counterexample_coupled(p0, cfg, i).map(|(a, b)| (a.corner_hit, b.corner_hit)))
            .collect::<Result<Vec<_>>>()
    })?;
    let coarse = hits.iter().filter(|h| h.0).count() as u64;
    let fine = hits.iter().filter(|h| h.1).count() as u64;
    Ok((Proportion::new(coarse, n_paths), Proportion::new(fine, n_paths)))
}

/// Mean time spent within `eps` of one transverse face.
#[derive(Debug, Clone, Serialize)]
pub struct OccupationCurve {
    pub face: usize,
    pub eps: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Least-squares slope of `log mean` against `log eps`.
    pub slope: f64,
    /// Mean over paths of the intercept of occupation regressed on `eps^slope`.
    pub intercept: f64,
    pub intercept_stderr: f64,
}

/// Occupation curves for every transverse face.
#[derive(Debug, Clone, Serialize)]
pub struct TransverseOccupation {
    pub horizon: f64,
    pub n_paths: u64,
    pub curves: Vec<OccupationCurve>,
}

fn mean_stderr(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Least-squares `(slope, intercept)` of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

impl TransverseOccupation {
    pub fn from_records(sim: &Simulator, records: &[PathRecord]) -> Result<Self> {
        let faces = sim.transverse_faces();
        if faces.is_empty() {
            return Err(Error::NoTransverseFaces);
        }
        let eps = sim.config().occupation_eps.clone();
        if eps.len() < 2 {
            return Err(Error::InvalidParameter("need at least two occupation windows".into()));
        }
        let mut curves = Vec::new();
        for (slot, &face) in faces.iter().enumerate() {
            let col = |j: usize| records.iter().map(move |r| r.occupation[slot][j]);
            let (mean, stderr): (Vec<f64>, Vec<f64>) = (0..eps.len()).map(|j| mean_stderr(col(j))).unzip();
            let (lx, ly): (Vec<f64>, Vec<f64>) = eps
                .iter()
                .zip(&mean)
                .filter(|(_, &m)| m > 0.0)
                .map(|(e, m)| (e.ln(), m.ln()))
                .unzip();
            let slope = if lx.len() >= 2 { linear_fit(&lx, &ly).0 } else { f64::NAN };
            let u: Vec<f64> = eps.iter().map(|e| e.powf(slope)).collect();
            let icpt = records.iter().map(|r| {
                if slope.is_finite() {
                    linear_fit(&u, &r.occupation[slot]).1
                } else {
                    f64::NAN
                }
            });
            let (intercept, intercept_stderr) = mean_stderr(icpt);
            curves.push(OccupationCurve {
                face,
                eps: eps.clone(),
                mean,
                stderr,
                slope,
                intercept,
                intercept_stderr,
            });
        }
        Ok(Self {
            horizon: sim.config().horizon,
            n_paths: records.len() as u64,
            curves,
        })
    }
}

/// Mean occupation times near the transverse boundary over `[0, T]`.
pub fn transverse_occupation(
    op: &crate::KimuraOperator,
    p0: &Point,
    horizon: f64,
    n_paths: u64,
    cfg: &SimConfig,
    eps: &[f64],
    workers: usize,
) -> Result<TransverseOccupation> {
    let mut cfg = cfg.clone();
    cfg.horizon = horizon;
    cfg.occupation_eps = eps.to_vec();
    let sim = Simulator::new(op.clone(), cfg)?;
    if sim.transverse_faces().is_empty() {
        return Err(Error::NoTransverseFaces);
    }
    let records = sim.run(p0, n_paths, workers)?;
    TransverseOccupation::from_records(&sim, &records)
}

/// Ratio of caloric masses of the boundary cylinders of radii `2r` and `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoublingPoint {
    pub r: f64,
    pub count_r: u64,
    pub count_2r: u64,
    pub ratio: f64,
    pub stderr: f64,
}

/// Intrinsic distance between two points of a face: corner coordinates are
/// mapped to `2√(x/γ)` and tangential ones to `y/√γ`.
fn face_distance(a: &Point, b: &Point, scale: f64) -> f64 {
    let sx: f64 = a
        .x
        .iter()
        .zip(&b.x)
        .map(|(u, v)| {
            let d = intrinsic_face_distance(*u, scale) - intrinsic_face_distance(*v, scale);
            d * d
        })
        .sum();
    let sy: f64 = a.y.iter().zip(&b.y).map(|(u, v)| (u - v) * (u - v) / scale).sum();
    (sx + sy).sqrt()
}

/// Count of first hits in the cylinder `(t - r², t + r²) × B_r(q)`.
pub fn cylinder_count(hist: &HittingHistogram, q: &Point, t: f64, r: f64) -> u64 {
    hist.samples
        .iter()
        .filter(|s| (s.time - t).abs() < r * r && face_distance(&s.location, q, hist.scale) < r)
        .count() as u64
}

/// Doubling ratios `mass(Δ_{2r}(t,q)) / mass(Δ_r(t,q))` for each radius.
/// The stderr treats the inner count as a binomial subsample of the outer one.
pub fn doubling_ratio(hist: &HittingHistogram, q: &Point, radii: &[f64], t: f64) -> Result<Vec<DoublingPoint>> {
    radii
        .iter()
        .map(|&r| {
            let n1 = cylinder_count(hist, q, t, r);
            if n1 == 0 {
                return Err(Error::EmptyBin { r });
            }
            let n2 = cylinder_count(hist, q, t, 2.0 * r);
            let ratio = n2 as f64 / n1 as f64;
            Ok(DoublingPoint {
                r,
                count_r: n1,
                count_2r: n2,
                ratio,
                stderr: (ratio * (ratio - 1.0) / n1 as f64).max(0.0).sqrt(),
            })
        })
        .collect()
}
