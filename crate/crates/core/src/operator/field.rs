use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::poly::Poly;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Preset,
    PolynomialTable,
    UserClosure,
}

#[derive(Clone)]
enum Repr {
    Poly(Poly),
    Closure {
        nvars: usize,
        f: ScalarFn,
        grad: Option<GradientFn>,
    },
}

/// A real coefficient of the operator as a function of the chart coordinates
/// `z = (x, y)`.
///
/// Closures must be re-entrant: they are evaluated concurrently from worker
/// threads.
#[derive(Clone)]
pub struct CoefficientField {
    repr: Repr,
    provenance: Provenance,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Poly(p) => write!(f, "Poly({:?}, {:?})", p.terms(), self.provenance),
            Repr::Closure { nvars, grad, .. } => write!(
                f,
                "Closure(nvars={nvars}, gradient={}, {:?})",
                grad.is_some(),
                self.provenance
            ),
        }
    }
}

/// Central-difference step for finite-difference fallbacks.
pub fn fd_step(v: f64) -> f64 {
    1e-5 * v.abs().max(1.0)
}

/// How a face chart sits inside its parent chart: the parent coordinate
/// `drop` is re-inserted, either as zero or as `1 - Σ x` (simplex sum face).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Embedding {
    pub drop: usize,
    /// `Some(n_child)` when the inserted value is `1 - Σ_{k<n_child} z_k`.
    pub complement_of: Option<usize>,
}

impl Embedding {
    pub fn lift(&self, zc: &[f64]) -> Vec<f64> {
        let v = match self.complement_of {
            Some(nc) => 1.0 - zc[..nc].iter().sum::<f64>(),
            None => 0.0,
        };
        let mut z = zc.to_vec();
        z.insert(self.drop, v);
        z
    }
}

impl CoefficientField {
    pub fn poly(p: Poly) -> Self {
        Self {
            repr: Repr::Poly(p),
            provenance: Provenance::PolynomialTable,
        }
    }

    pub(crate) fn preset(p: Poly) -> Self {
        Self {
            repr: Repr::Poly(p),
            provenance: Provenance::Preset,
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::poly(Poly::constant(nvars, c))
    }

    pub fn zero(nvars: usize) -> Self {
        Self::poly(Poly::zero(nvars))
    }

    pub fn closure<F>(nvars: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            repr: Repr::Closure {
                nvars,
                f: Arc::new(f),
                grad: None,
            },
            provenance: Provenance::UserClosure,
        }
    }

    pub fn closure_with_gradient<F, G>(nvars: usize, f: F, grad: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            repr: Repr::Closure {
                nvars,
                f: Arc::new(f),
                grad: Some(Arc::new(grad)),
            },
            provenance: Provenance::UserClosure,
        }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn nvars(&self) -> usize {
        match &self.repr {
            Repr::Poly(p) => p.nvars(),
            Repr::Closure { nvars, .. } => *nvars,
        }
    }

    pub fn as_poly(&self) -> Option<&Poly> {
        match &self.repr {
            Repr::Poly(p) => Some(p),
            Repr::Closure { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.repr, Repr::Poly(p) if p.is_zero())
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.as_poly().and_then(Poly::as_constant)
    }

    #[inline]
    pub fn eval(&self, z: &[f64]) -> f64 {
        match &self.repr {
            Repr::Poly(p) => p.eval(z),
            Repr::Closure { f, .. } => f(z),
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        match &self.repr {
            Repr::Poly(_) => true,
            Repr::Closure { grad, .. } => grad.is_some(),
        }
    }

    /// Analytic gradient when available, central differences otherwise.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Poly(p) => p.gradient(z),
            Repr::Closure { grad: Some(g), .. } => g(z),
            Repr::Closure { f, nvars, .. } => {
                let mut w = z.to_vec();
                (0..*nvars)
                    .map(|k| {
                        let h = fd_step(z[k]);
                        w[k] = z[k] + h;
                        let up = f(&w);
                        w[k] = z[k] - h;
                        let dn = f(&w);
                        w[k] = z[k];
                        (up - dn) / (2.0 * h)
                    })
                    .collect()
            }
        }
    }

    /// `z' -> mult * f(s ⊙ z')`.
    pub fn rescaled(&self, s: &[f64], mult: f64) -> Self {
        let repr = match &self.repr {
            Repr::Poly(p) => Repr::Poly(p.scale_vars(s).scale(mult)),
            Repr::Closure { nvars, f, grad } => {
                let s: Vec<f64> = s.to_vec();
                let f = f.clone();
                let s1 = s.clone();
                let fnew: ScalarFn = Arc::new(move |z: &[f64]| {
                    let w: Vec<f64> = z.iter().zip(&s1).map(|(a, b)| a * b).collect();
                    mult * f(&w)
                });
                let gnew = grad.clone().map(|g| -> GradientFn {
                    Arc::new(move |z: &[f64]| {
                        let w: Vec<f64> = z.iter().zip(&s).map(|(a, b)| a * b).collect();
                        g(&w).iter().zip(&s).map(|(gk, sk)| mult * gk * sk).collect()
                    })
                });
                Repr::Closure {
                    nvars: *nvars,
                    f: fnew,
                    grad: gnew,
                }
            }
        };
        Self {
            repr,
            provenance: self.provenance,
        }
    }

    /// View as a function of `nvars` variables, where old variable `k` is new
    /// variable `map[k]`.
    pub fn reindexed(&self, nvars: usize, map: &[usize]) -> Self {
        let repr = match &self.repr {
            Repr::Poly(p) => Repr::Poly(Poly::from_terms(
                nvars,
                p.terms().iter().map(|(e, c)| {
                    let mut f = vec![0; nvars];
                    for (k, &pk) in e.iter().enumerate() {
                        f[map[k]] += pk;
                    }
                    (f, *c)
                }),
            )),
            Repr::Closure { f, grad, .. } => {
                let f = f.clone();
                let m1 = map.to_vec();
                let m2 = map.to_vec();
                let fnew: ScalarFn = Arc::new(move |z: &[f64]| {
                    let w: Vec<f64> = m1.iter().map(|&k| z[k]).collect();
                    f(&w)
                });
                let gnew = grad.clone().map(|g| -> GradientFn {
                    Arc::new(move |z: &[f64]| {
                        let w: Vec<f64> = m2.iter().map(|&k| z[k]).collect();
                        let gw = g(&w);
                        let mut out = vec![0.0; nvars];
                        for (k, &t) in m2.iter().enumerate() {
                            out[t] += gw[k];
                        }
                        out
                    })
                });
                Repr::Closure { nvars, f: fnew, grad: gnew }
            }
        };
        Self {
            repr,
            provenance: self.provenance,
        }
    }

    /// Restriction to a face chart via `emb`.
    pub(crate) fn restricted(&self, emb: Embedding) -> Self {
        let repr = match &self.repr {
            Repr::Poly(p) => {
                let nv = p.nvars();
                let value = match emb.complement_of {
                    Some(nc) => {
                        let mut q = Poly::constant(nv, 1.0);
                        for k in 0..=nc {
                            if k != emb.drop {
                                q = q - Poly::var(nv, k);
                            }
                        }
                        q
                    }
                    None => Poly::zero(nv),
                };
                Repr::Poly(p.substitute(emb.drop, &value).remove_var(emb.drop))
            }
            Repr::Closure { nvars, f, grad } => {
                let f = f.clone();
                let fnew: ScalarFn = Arc::new(move |zc: &[f64]| f(&emb.lift(zc)));
                let gnew = grad.clone().map(|g| -> GradientFn {
                    Arc::new(move |zc: &[f64]| {
                        let gp = g(&emb.lift(zc));
                        let dropped = gp[emb.drop];
                        let mut gc: Vec<f64> = gp
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != emb.drop)
                            .map(|(_, &v)| v)
                            .collect();
                        if let Some(nc) = emb.complement_of {
                            gc[..nc].iter_mut().for_each(|v| *v -= dropped);
                        }
                        gc
                    })
                });
                Repr::Closure {
                    nvars: nvars - 1,
                    f: fnew,
                    grad: gnew,
                }
            }
        };
        Self {
            repr,
            provenance: self.provenance,
        }
    }
}

impl From<Poly> for CoefficientField {
    fn from(p: Poly) -> Self {
        Self::poly(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_gradient_fallback_matches_poly() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &(&x * &x) * &y + y.clone();
        let pc = p.clone();
        let field = CoefficientField::closure(2, move |z| pc.eval(z));
        assert_eq!(field.provenance(), Provenance::UserClosure);
        let g = field.gradient(&[0.3, 0.7]);
        let exact = p.gradient(&[0.3, 0.7]);
        for (a, b) in g.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn restriction_agrees_between_representations() {
        let x = Poly::var(3, 0);
        let y = Poly::var(3, 1);
        let w = Poly::var(3, 2);
        let p = &(&x * &y) * &w + x.clone() + w.scale(2.0);
        let pc = p.clone();
        let as_poly = CoefficientField::poly(p);
        let as_closure = CoefficientField::closure(3, move |z| pc.eval(z));
        for emb in [
            Embedding { drop: 1, complement_of: None },
            Embedding { drop: 2, complement_of: Some(2) },
        ] {
            let a = as_poly.restricted(emb);
            let b = as_closure.restricted(emb);
            for zc in [[0.1, 0.2], [0.4, 0.5]] {
                assert!((a.eval(&zc) - b.eval(&zc)).abs() < 1e-14);
                let ga = a.gradient(&zc);
                let gb = b.gradient(&zc);
                for (u, v) in ga.iter().zip(&gb) {
                    assert!((u - v).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn rescaling_agrees_between_representations() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &(&x * &y) * &y + x.clone();
        let pc = p.clone();
        let a = CoefficientField::poly(p).rescaled(&[0.25, 0.5], 0.5);
        let b = CoefficientField::closure_with_gradient(2, move |z| pc.eval(z), {
            let p = pc_clone_grad();
            move |z| p.gradient(z)
        })
        .rescaled(&[0.25, 0.5], 0.5);
        for z in [[0.3, -0.2], [1.0, 0.4]] {
            assert!((a.eval(&z) - b.eval(&z)).abs() < 1e-15);
            let (ga, gb) = (a.gradient(&z), b.gradient(&z));
            assert!(ga.iter().zip(&gb).all(|(u, v)| (u - v).abs() < 1e-14));
        }

        fn pc_clone_grad() -> Poly {
            let x = Poly::var(2, 0);
            let y = Poly::var(2, 1);
            &(&x * &y) * &y + x
        }
    }
}
