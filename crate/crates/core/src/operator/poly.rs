//! Sparse multivariate polynomials with real coefficients.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    nvars: usize,
    /// Sorted by exponent vector, no zero coefficients.
    terms: Vec<(Vec<u32>, f64)>,
}

impl Poly {
    fn from_map(nvars: usize, map: BTreeMap<Vec<u32>, f64>) -> Self {
        let terms = map.into_iter().filter(|(_, c)| *c != 0.0).collect();
        Self { nvars, terms }
    }

    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: Vec::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(nvars, vec![0; nvars], c)
    }

    /// The coordinate function `z_i` (0-based).
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable {i} out of range for {nvars} variables");
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(nvars, e, 1.0)
    }

    pub fn monomial(nvars: usize, exps: Vec<u32>, coef: f64) -> Self {
        assert_eq!(exps.len(), nvars);
        let mut map = BTreeMap::new();
        map.insert(exps, coef);
        Self::from_map(nvars, map)
    }

    /// Build from `(exponents, coefficient)` pairs; repeated monomials are summed.
    pub fn from_terms<I: IntoIterator<Item = (Vec<u32>, f64)>>(nvars: usize, terms: I) -> Self {
        let mut map = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.len(), nvars);
            *map.entry(e).or_insert(0.0) += c;
        }
        Self::from_map(nvars, map)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [] => Some(0.0),
            [(e, c)] if e.iter().all(|&k| k == 0) => Some(*c),
            _ => None,
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn depends_on(&self, i: usize) -> bool {
        self.terms.iter().any(|(e, _)| e[i] > 0)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        debug_assert!(z.len() >= self.nvars);
        let mut s = 0.0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for (k, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => t *= z[k],
                    2 => t *= z[k] * z[k],
                    _ => t *= z[k].powi(p as i32),
                }
            }
            s += t;
        }
        s
    }

    pub fn partial(&self, i: usize) -> Self {
        let mut map = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = e.clone();
                f[i] -= 1;
                *map.entry(f).or_insert(0.0) += c * e[i] as f64;
            }
        }
        Self::from_map(self.nvars, map)
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (0..self.nvars).map(|i| self.partial(i).eval(z)).collect()
    }

    pub fn hessian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        (0..self.nvars)
            .map(|i| {
                let pi = self.partial(i);
                (0..self.nvars).map(|j| pi.partial(j).eval(z)).collect()
            })
            .collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_map(
            self.nvars,
            self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        )
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut out = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// `p(s_0 z_0, s_1 z_1, ...)`.
    pub fn scale_vars(&self, s: &[f64]) -> Self {
        assert_eq!(s.len(), self.nvars);
        Self::from_map(
            self.nvars,
            self.terms
                .iter()
                .map(|(e, c)| {
                    let f: f64 = e.iter().zip(s).map(|(&p, &sk)| sk.powi(p as i32)).product();
                    (e.clone(), c * f)
                })
                .collect(),
        )
    }

    /// Replace variable `i` by the polynomial `q` (same variable set).
    pub fn substitute(&self, i: usize, q: &Poly) -> Self {
        assert_eq!(q.nvars, self.nvars);
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut rest = e.clone();
            let p = rest[i];
            rest[i] = 0;
            let base = Self::monomial(self.nvars, rest, *c);
            out = &out + &(&base * &q.powi(p));
        }
        out
    }

    /// Drop variable `i`, which must not appear.
    pub fn remove_var(&self, i: usize) -> Self {
        assert!(!self.depends_on(i), "polynomial still depends on variable {i}");
        Self::from_terms(
            self.nvars - 1,
            self.terms.iter().map(|(e, c)| {
                let mut f = e.clone();
                f.remove(i);
                (f, *c)
            }),
        )
    }

    /// Insert a new variable at position `i` on which the polynomial does not depend.
    pub fn insert_var(&self, i: usize) -> Self {
        Self::from_terms(
            self.nvars + 1,
            self.terms.iter().map(|(e, c)| {
                let mut f = e.clone();
                f.insert(i, 0);
                (f, *c)
            }),
        )
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut map: BTreeMap<Vec<u32>, f64> = self.terms.iter().cloned().collect();
        for (e, c) in &rhs.terms {
            *map.entry(e.clone()).or_insert(0.0) += c;
        }
        Poly::from_map(self.nvars, map)
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &rhs.scale(-1.0)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut map = BTreeMap::new();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *map.entry(e).or_insert(0.0) += c1 * c2;
            }
        }
        Poly::from_map(self.nvars, map)
    }
}

macro_rules! forward_binop {
    ($tr:ident, $f:ident) => {
        impl $tr for Poly {
            type Output = Poly;
            fn $f(self, rhs: Poly) -> Poly {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&Poly> for Poly {
            type Output = Poly;
            fn $f(self, rhs: &Poly) -> Poly {
                (&self).$f(rhs)
            }
        }
    };
}
forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
