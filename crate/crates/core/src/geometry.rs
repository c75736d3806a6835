//! Corner domains: the box neighbourhood `[0,R]^n x [-R,R]^m` of a corner of
//! `S_{n,m}` and the standard simplex `Σ_N`.
//!
//! Face labels are 1-based throughout. For a box, face `i` is `{x_i = 0}`.
//! For `Σ_N`, faces `1..=N` are `{x_i = 0}` and face `N+1` is `{Σx = 1}`;
//! that last face is handled through barycentric coordinates so it behaves
//! like a coordinate face.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for stratum classification.
pub const DEFAULT_TOL: f64 = 1e-10;

/// A point `z = (x, y)` with corner coordinates `x` and tangential coordinates `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Point {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn corner(x: Vec<f64>) -> Self {
        Self { x, y: Vec::new() }
    }

    /// Concatenated coordinates `(x_1..x_n, y_1..y_m)`.
    pub fn coords(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.x.len() + self.y.len());
        z.extend_from_slice(&self.x);
        z.extend_from_slice(&self.y);
        z
    }

    pub fn from_coords(z: &[f64], n: usize) -> Self {
        Self {
            x: z[..n].to_vec(),
            y: z[n..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainSpec {
    /// `[0,R]^n x [-R,R]^m`, the sup-norm neighbourhood of the corner of `S_{n,m}`.
    /// Paths are not confined by `R`; it bounds sampling and PDE grids.
    CornerBox { n: usize, m: usize, radius: f64 },
    /// The standard simplex `{x_i >= 0, Σx_i <= 1}` in `R^N`.
    Simplex { dim: usize },
}

impl DomainSpec {
    pub fn corner_box(n: usize, m: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || n + m == 0 {
            return Err(Error::InvalidParameter(format!(
                "corner box needs R > 0 and n+m >= 1 (got n={n}, m={m}, R={radius})"
            )));
        }
        Ok(Self::CornerBox { n, m, radius })
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("simplex dimension must be >= 1".into()));
        }
        Ok(Self::Simplex { dim })
    }

    /// Number of corner coordinates.
    pub fn n(&self) -> usize {
        match *self {
            Self::CornerBox { n, .. } => n,
            Self::Simplex { dim } => dim,
        }
    }

    /// Number of tangential coordinates.
    pub fn m(&self) -> usize {
        match *self {
            Self::CornerBox { m, .. } => m,
            Self::Simplex { .. } => 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n() + self.m()
    }

    pub fn face_count(&self) -> usize {
        match *self {
            Self::CornerBox { n, .. } => n,
            Self::Simplex { dim } => dim + 1,
        }
    }

    pub fn faces(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.face_count()
    }

    pub fn is_simplex(&self) -> bool {
        matches!(self, Self::Simplex { .. })
    }

    pub fn check_face(&self, face: usize) -> Result<()> {
        if face == 0 || face > self.face_count() {
            Err(Error::InvalidFace { face })
        } else {
            Ok(())
        }
    }

    /// Signed chart distance of `z` to `face` (negative outside).
    pub fn face_coordinate(&self, z: &[f64], face: usize) -> f64 {
        match *self {
            Self::Simplex { dim } if face == dim + 1 => 1.0 - z[..dim].iter().sum::<f64>(),
            _ => z[face - 1],
        }
    }

    /// Inward unit-speed chart direction for `face` (not normalised for the
    /// simplex sum face, where it is `-(1,..,1)`).
    pub fn inward_normal(&self, face: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        match *self {
            Self::Simplex { dim } if face == dim + 1 => v[..dim].iter_mut().for_each(|c| *c = -1.0),
            _ => v[face - 1] = 1.0,
        }
        v
    }

    /// Edge of the sampling region for corner coordinates.
    pub fn extent(&self) -> f64 {
        match *self {
            Self::CornerBox { radius, .. } => radius,
            Self::Simplex { .. } => 1.0,
        }
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CornerBox { n, m, radius } => write!(f, "CornerBox({n},{m},R={radius})"),
            Self::Simplex { dim } => write!(f, "Simplex({dim})"),
        }
    }
}

/// Sorted set of 1-based face labels; empty for the interior.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumId(BTreeSet<usize>);

impl StratumId {
    pub fn interior() -> Self {
        Self::default()
    }

    pub fn from_faces<I: IntoIterator<Item = usize>>(faces: I) -> Self {
        Self(faces.into_iter().collect())
    }

    pub fn faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn codim(&self) -> usize {
        self.0.len()
    }

    pub fn is_interior(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, face: usize) -> bool {
        self.0.contains(&face)
    }

    pub fn insert(&mut self, face: usize) -> bool {
        self.0.insert(face)
    }

    pub fn is_subset(&self, other: &StratumId) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl fmt::Display for StratumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, face) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{face}")?;
        }
        write!(f, "}}")
    }
}

fn check_inside(p: &Point, dom: &DomainSpec, tol: f64) -> Result<()> {
    if p.x.len() != dom.n() || p.y.len() != dom.m() {
        return Err(Error::InvalidParameter(format!(
            "point has {}+{} coordinates, domain {dom} expects {}+{}",
            p.x.len(),
            p.y.len(),
            dom.n(),
            dom.m()
        )));
    }
    let outside = p.x.iter().chain(&p.y).any(|v| !v.is_finite())
        || p.x.iter().any(|&v| v < -tol)
        || (dom.is_simplex() && p.x.iter().sum::<f64>() > 1.0 + tol);
    if outside {
        return Err(Error::PointOutsideDomain { point: p.coords(), tol });
    }
    Ok(())
}

/// The set of faces `{i : x_i <= tol}` containing `p`, plus the simplex sum
/// face when `1 - Σx <= tol`.
pub fn classify_point(p: &Point, dom: &DomainSpec, tol: f64) -> Result<StratumId> {
    if tol < 0.0 {
        return Err(Error::InvalidParameter("tolerance must be non-negative".into()));
    }
    check_inside(p, dom, tol)?;
    let z = p.coords();
    Ok(StratumId::from_faces(
        dom.faces().filter(|&f| dom.face_coordinate(&z, f) <= tol),
    ))
}

/// Domain induced on `face`, with one fewer corner coordinate.
pub fn face_domain(dom: &DomainSpec, face: usize) -> Result<DomainSpec> {
    dom.check_face(face)?;
    Ok(match *dom {
        DomainSpec::CornerBox { n, m, radius } => DomainSpec::CornerBox { n: n - 1, m, radius },
        DomainSpec::Simplex { dim } => DomainSpec::Simplex { dim: dim - 1 },
    })
}

/// Index (0-based, into the parent's coordinates) of the coordinate that is
/// eliminated when restricting to `face`.
pub fn eliminated_coordinate(dom: &DomainSpec, face: usize) -> usize {
    match *dom {
        DomainSpec::Simplex { dim } if face == dim + 1 => dim - 1,
        _ => face - 1,
    }
}

/// For each face label of the face domain (position `k` holds label `k+1`),
/// the corresponding face label of the parent domain.
pub fn restricted_face_labels(dom: &DomainSpec, face: usize) -> Result<Vec<usize>> {
    dom.check_face(face)?;
    Ok(match *dom {
        DomainSpec::CornerBox { n, .. } => (1..=n).filter(|&f| f != face).collect(),
        DomainSpec::Simplex { dim } => {
            if face == dim + 1 {
                // Child face `dim` is {Σ_{j<dim} x_j = 1}, i.e. parent x_dim = 0.
                (1..=dim).collect()
            } else {
                (1..=dim + 1).filter(|&f| f != face).collect()
            }
        }
    })
}

/// Drop the coordinate eliminated by `face` from a point lying on it.
pub fn restrict_point(p: &Point, face: usize, dom: &DomainSpec, tol: f64) -> Result<(Point, DomainSpec)> {
    check_inside(p, dom, tol)?;
    let child = face_domain(dom, face)?;
    let z = p.coords();
    if dom.face_coordinate(&z, face) > tol {
        return Err(Error::NotOnFace { face });
    }
    let drop = eliminated_coordinate(dom, face);
    let x: Vec<f64> = p
        .x
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != drop)
        .map(|(_, &v)| v)
        .collect();
    Ok((Point::new(x, p.y.clone()), child))
}

/// Inverse of [`restrict_point`]: place a face point back in the parent chart.
pub fn embed_point(p: &Point, face: usize, parent: &DomainSpec) -> Result<Point> {
    parent.check_face(face)?;
    let drop = eliminated_coordinate(parent, face);
    let mut x = p.x.clone();
    let value = match *parent {
        DomainSpec::Simplex { dim } if face == dim + 1 => 1.0 - p.x.iter().sum::<f64>(),
        _ => 0.0,
    };
    x.insert(drop, value);
    Ok(Point::new(x, p.y.clone()))
}

/// Density `Π x_i^{B_i(p) - 1}` of the weighted measure against `dx dy`.
pub fn weighted_density(p: &Point, weights: &[&dyn Fn(&Point) -> f64]) -> Result<f64> {
    if weights.len() != p.x.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} corner coordinates",
            weights.len(),
            p.x.len()
        )));
    }
    let mut density = 1.0;
    for (i, (&xi, w)) in p.x.iter().zip(weights).enumerate() {
        let b = w(p);
        if xi <= 0.0 {
            if b < 1.0 {
                return Err(Error::BoundaryEvaluation { face: i + 1, weight: b });
            }
            if b > 1.0 {
                return Ok(0.0);
            }
            continue;
        }
        density *= xi.powf(b - 1.0);
    }
    Ok(density)
}

/// Barycentric coordinates `(x_1, .., x_N, 1 - Σx)` of a simplex point.
pub fn barycentric(x: &[f64]) -> Vec<f64> {
    let mut w = x.to_vec();
    w.push(1.0 - x.iter().sum::<f64>());
    w
}

/// Radical-inverse Halton sequence in `[0,1)^dim`.
pub fn halton(count: usize, dim: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    assert!(dim <= PRIMES.len(), "halton sequence limited to {} dimensions", PRIMES.len());
    (1..=count as u64)
        .map(|k| {
            PRIMES[..dim]
                .iter()
                .map(|&base| {
                    let (mut f, mut r, mut i) = (1.0, 0.0, k);
                    while i > 0 {
                        f /= base as f64;
                        r += f * (i % base) as f64;
                        i /= base;
                    }
                    r
                })
                .collect()
        })
        .collect()
}

fn unit_to_domain(u: &[f64], dom: &DomainSpec) -> Vec<f64> {
    match *dom {
        DomainSpec::CornerBox { n, radius, .. } => u
            .iter()
            .enumerate()
            .map(|(i, &v)| if i < n { v * radius } else { (2.0 * v - 1.0) * radius })
            .collect(),
        DomainSpec::Simplex { dim } => {
            // Sorted spacings of dim uniforms are uniform on the simplex.
            let mut s: Vec<f64> = u[..dim].to_vec();
            s.sort_by(|a, b| a.total_cmp(b));
            let mut prev = 0.0;
            s.iter()
                .map(|&v| {
                    let d = v - prev;
                    prev = v;
                    d
                })
                .collect()
        }
    }
}

/// Low-discrepancy sample of the closed domain, including its corners and
/// points on every face.
pub fn sample_domain(dom: &DomainSpec, count: usize) -> Vec<Vec<f64>> {
    sample_domain_shifted(dom, count, &vec![0.0; dom.dim()])
}

/// As [`sample_domain`], with the Halton points shifted by `shift` modulo 1.
pub fn sample_domain_shifted(dom: &DomainSpec, count: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    let d = dom.dim();
    let mut pts: Vec<Vec<f64>> = halton(count, d)
        .iter()
        .map(|u| {
            let v: Vec<f64> = u.iter().zip(shift).map(|(a, s)| (a + s).fract()).collect();
            unit_to_domain(&v, dom)
        })
        .collect();
    for face in dom.faces() {
        pts.extend(sample_face(dom, face, (count / 8).max(4)));
    }
    match *dom {
        DomainSpec::CornerBox { n, m, .. } => pts.push(vec![0.0; n + m]),
        DomainSpec::Simplex { dim } => {
            pts.push(vec![0.0; dim]);
            for i in 0..dim {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                pts.push(v);
            }
        }
    }
    pts
}

/// Low-discrepancy sample of the closed face, in parent coordinates.
pub fn sample_face(dom: &DomainSpec, face: usize, count: usize) -> Vec<Vec<f64>> {
    let child = match face_domain(dom, face) {
        Ok(c) => c,
        Err(_) => return Vec::new(),
    };
    let cd = child.dim();
    let mut pts = Vec::with_capacity(count + 2);
    if cd == 0 {
        pts.push(Point::new(Vec::new(), Vec::new()));
    } else {
        for u in halton(count, cd) {
            let z = unit_to_domain(&u, &child);
            pts.push(Point::from_coords(&z, child.n()));
        }
        // Face corners, where cleanness typically fails.
        pts.push(Point::from_coords(&vec![0.0; cd], child.n()));
        if let DomainSpec::Simplex { dim } = child {
            for i in 0..dim {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                pts.push(Point::corner(v));
            }
        }
    }
    pts.iter()
        .filter_map(|p| embed_point(p, face, dom).ok())
        .map(|p| p.coords())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex(n: usize) -> DomainSpec {
        DomainSpec::simplex(n).unwrap()
    }

    #[test]
    fn classify_examples() {
        let s2 = simplex(2);
        let id = classify_point(&Point::corner(vec![0.0, 0.3]), &s2, 1e-12).unwrap();
        assert_eq!(id, StratumId::from_faces([1]));
        let id = classify_point(&Point::corner(vec![0.2, 0.3]), &s2, 1e-12).unwrap();
        assert!(id.is_interior());
        let b = DomainSpec::corner_box(2, 0, 1.0).unwrap();
        let id = classify_point(&Point::corner(vec![0.0, 0.0]), &b, 1e-12).unwrap();
        assert_eq!(id, StratumId::from_faces([1, 2]));
        assert_eq!(id.codim(), 2);
        let id = classify_point(&Point::corner(vec![0.4, 0.6]), &s2, 1e-12).unwrap();
        assert_eq!(id, StratumId::from_faces([3]));
    }

    #[test]
    fn classify_rejects_outside_points() {
        let s2 = simplex(2);
        assert!(matches!(
            classify_point(&Point::corner(vec![-0.1, 0.3]), &s2, 1e-12),
            Err(Error::PointOutsideDomain { .. })
        ));
        assert!(matches!(
            classify_point(&Point::corner(vec![0.6, 0.6]), &s2, 1e-12),
            Err(Error::PointOutsideDomain { .. })
        ));
    }

    #[test]
    fn restrict_examples() {
        let b2 = DomainSpec::corner_box(2, 0, 1.0).unwrap();
        let (p, d) = restrict_point(&Point::corner(vec![0.0, 0.4]), 1, &b2, 1e-12).unwrap();
        assert_eq!(p, Point::corner(vec![0.4]));
        assert_eq!(d, DomainSpec::CornerBox { n: 1, m: 0, radius: 1.0 });

        let b21 = DomainSpec::corner_box(2, 1, 1.0).unwrap();
        let (p, d) = restrict_point(&Point::new(vec![0.0, 0.4], vec![0.1]), 1, &b21, 1e-12).unwrap();
        assert_eq!(p, Point::new(vec![0.4], vec![0.1]));
        assert_eq!(d, DomainSpec::CornerBox { n: 1, m: 1, radius: 1.0 });

        let (p, d) = restrict_point(&Point::corner(vec![0.3, 0.0]), 2, &simplex(2), 1e-12).unwrap();
        assert_eq!(p, Point::corner(vec![0.3]));
        assert_eq!(d, simplex(1));

        assert_eq!(
            restrict_point(&Point::corner(vec![0.3, 0.2]), 1, &simplex(2), 1e-12),
            Err(Error::NotOnFace { face: 1 })
        );
    }

    #[test]
    fn simplex_sum_face_restriction_and_labels() {
        let s2 = simplex(2);
        let p = Point::corner(vec![0.25, 0.75]);
        let (q, d) = restrict_point(&p, 3, &s2, 1e-12).unwrap();
        assert_eq!(q, Point::corner(vec![0.25]));
        assert_eq!(d, simplex(1));
        assert_eq!(embed_point(&q, 3, &s2).unwrap(), p);
        assert_eq!(restricted_face_labels(&s2, 3).unwrap(), vec![1, 2]);
        assert_eq!(restricted_face_labels(&s2, 1).unwrap(), vec![2, 3]);
    }

    #[test]
    fn restrict_then_embed_preserves_stratum() {
        let b = DomainSpec::corner_box(3, 1, 1.0).unwrap();
        let p = Point::new(vec![0.0, 0.0, 0.5], vec![-0.2]);
        let before = classify_point(&p, &b, DEFAULT_TOL).unwrap();
        let (q, child) = restrict_point(&p, 2, &b, DEFAULT_TOL).unwrap();
        let back = embed_point(&q, 2, &b).unwrap();
        assert_eq!(classify_point(&back, &b, DEFAULT_TOL).unwrap(), before);
        assert_eq!(classify_point(&q, &child, DEFAULT_TOL).unwrap(), StratumId::from_faces([1]));
    }

    #[test]
    fn weighted_density_examples() {
        let one = |_: &Point| 1.0;
        let two = |_: &Point| 2.0;
        let half = |_: &Point| 0.5;
        let three = |_: &Point| 3.0;
        let p = Point::corner(vec![0.25]);
        assert_eq!(weighted_density(&p, &[&one]).unwrap(), 1.0);
        assert!((weighted_density(&p, &[&two]).unwrap() - 0.25).abs() < 1e-15);
        let q = Point::corner(vec![0.5, 0.5]);
        // 0.5^-0.5 * 0.5^2 = sqrt(2)/4
        let v = weighted_density(&q, &[&half, &three]).unwrap();
        assert!((v - std::f64::consts::SQRT_2 / 4.0).abs() < 1e-15);
        let edge = Point::corner(vec![0.0]);
        assert!(matches!(
            weighted_density(&edge, &[&half]),
            Err(Error::BoundaryEvaluation { face: 1, .. })
        ));
    }

    /// ∫_(0,1)^n Π x_i^{b_i - 1} dx = Π 1/b_i, via the substitution x = s^{1/b}.
    #[test]
    fn weighted_density_integrates_to_inverse_weights() {
        let gl = crate::quad::GaussLegendre::new(16);
        for &(b1, b2) in &[(0.5, 2.0), (0.3, 0.7), (1.5, 1.0)] {
            let w1 = move |_: &Point| b1;
            let w2 = move |_: &Point| b2;
            // Integrand in s-variables: density(x(s)) * dx/ds with x_i = s_i^{1/b_i}.
            let total = gl.integrate_2d(0.0, 1.0, 0.0, 1.0, |s1, s2| {
                let x1 = s1.powf(1.0 / b1);
                let x2 = s2.powf(1.0 / b2);
                let jac = (x1 / (b1 * s1)) * (x2 / (b2 * s2));
                weighted_density(&Point::corner(vec![x1, x2]), &[&w1, &w2]).unwrap() * jac
            });
            assert!((total - 1.0 / (b1 * b2)).abs() < 1e-10, "{b1} {b2}: {total}");
        }
    }

    #[test]
    fn samples_stay_in_closed_domain() {
        for dom in [simplex(3), DomainSpec::corner_box(2, 1, 0.5).unwrap()] {
            for z in sample_domain(&dom, 256) {
                let p = Point::from_coords(&z, dom.n());
                classify_point(&p, &dom, 1e-12).unwrap();
            }
            for f in dom.faces() {
                for z in sample_face(&dom, f, 32) {
                    assert!(dom.face_coordinate(&z, f).abs() < 1e-12);
                }
            }
        }
    }
}
