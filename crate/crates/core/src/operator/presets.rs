//! Named operators addressable from configuration strings such as
//! `"wright-fisher(2,[0.1,0,0.3])"` or `"product(model1d(0.5),model1d(0))"`.

use serde::{Deserialize, Serialize};

use super::{CoefficientField, KimuraOperator, Poly};
use crate::error::{Error, Result};
use crate::geometry::DomainSpec;

/// Constant-coefficient parameters of the two-dimensional operator
/// `a11 x1 ∂1² + a22 x2 ∂2² + b1 ∂1 + b2 ∂2` used by the barrier checks,
/// together with the barrier level `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixParams {
    pub a11: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    pub nu: f64,
}

#[derive(Debug, Clone)]
pub enum PresetSpec {
    Kimura(KimuraOperator),
    AppendixA(AppendixParams),
}

impl PresetSpec {
    pub fn into_kimura(self) -> Result<KimuraOperator> {
        match self {
            PresetSpec::Kimura(op) => Ok(op),
            PresetSpec::AppendixA(_) => Err(Error::InvalidParameter(
                "appendix-A describes a barrier-check operator, not a Kimura operator".into(),
            )),
        }
    }
}

/// `x ∂² + b ∂` on `[0, R]`.
pub fn model1d(b: f64, radius: f64) -> Result<KimuraOperator> {
    let dom = DomainSpec::corner_box(1, 0, radius)?;
    KimuraOperator::builder(dom)
        .b(0, CoefficientField::preset(Poly::constant(1, b)))
        .name(format!("model1d({b})"))
        .build()
}

/// `x(1-x) ∂² + (b0 - (b0+b1) x) ∂` on `[0, 1]`.
pub fn kimura1d(b0: f64, b1: f64) -> Result<KimuraOperator> {
    let dom = DomainSpec::simplex(1)?;
    let x = Poly::var(1, 0);
    let drift = Poly::constant(1, b0) - x.scale(b0 + b1);
    KimuraOperator::builder(dom)
        .a(0, 0, CoefficientField::preset(Poly::constant(1, -1.0)))
        .b(0, CoefficientField::preset(drift))
        .name(format!("kimura1d({b0},{b1})"))
        .build()
}

/// Wright–Fisher generator on `Σ_N` with mutation rates `b_1..b_{N+1}`:
/// `½ Σ x_i(δ_ij - x_j) ∂_ij + Σ (b_i - x_i Σ_k b_k) ∂_i`.
pub fn wright_fisher(dim: usize, rates: &[f64]) -> Result<KimuraOperator> {
    if rates.len() != dim + 1 {
        return Err(Error::InvalidParameter(format!(
            "wright-fisher({dim}) needs {} mutation rates, got {}",
            dim + 1,
            rates.len()
        )));
    }
    let dom = DomainSpec::simplex(dim)?;
    let total: f64 = rates.iter().sum();
    let mut builder = KimuraOperator::builder(dom).scale(0.5);
    for i in 0..dim {
        // normal form: ½ (x_i ∂_ii + 2 b_i ∂_i - 2 x_i Σb ∂_i)
        let bi = Poly::constant(dim, 2.0 * rates[i]) - Poly::var(dim, i).scale(2.0 * total);
        builder = builder.b(i, CoefficientField::preset(bi));
        for j in 0..dim {
            builder = builder.a(i, j, CoefficientField::preset(Poly::constant(dim, -1.0)));
        }
    }
    let list: Vec<String> = rates.iter().map(|r| r.to_string()).collect();
    builder.name(format!("wright-fisher({dim},[{}])", list.join(","))).build()
}

/// `x1 ∂1² + x2 ∂2² + x2 ∂1 + x1 ∂2`, which is not clean at the corner.
pub fn remark_counterexample() -> Result<KimuraOperator> {
    let dom = DomainSpec::corner_box(2, 0, 1.0)?;
    KimuraOperator::builder(dom)
        .b(0, CoefficientField::preset(Poly::var(2, 1)))
        .b(1, CoefficientField::preset(Poly::var(2, 0)))
        .name("remark-counterexample")
        .build()
}

/// Independent product of corner-box operators sharing the same scale.
pub fn product(factors: &[KimuraOperator]) -> Result<KimuraOperator> {
    if factors.is_empty() {
        return Err(Error::InvalidParameter("product needs at least one factor".into()));
    }
    let scale = factors[0].scale();
    let mut n = 0;
    let mut m = 0;
    let mut radius = f64::INFINITY;
    for f in factors {
        match *f.domain() {
            DomainSpec::CornerBox { n: fn_, m: fm, radius: r } => {
                n += fn_;
                m += fm;
                radius = radius.min(r);
            }
            DomainSpec::Simplex { .. } => {
                return Err(Error::InvalidParameter(format!(
                    "product factors must live on corner boxes, {} is on a simplex",
                    f.name()
                )))
            }
        }
        if (f.scale() - scale).abs() > 0.0 {
            return Err(Error::InvalidParameter("product factors must share the operator scale".into()));
        }
    }
    let dom = DomainSpec::corner_box(n, m, radius)?;
    let nv = n + m;
    let mut builder = KimuraOperator::builder(dom).scale(scale);
    let (mut x0, mut y0) = (0, n);
    let mut names = Vec::new();
    for f in factors {
        let (fnx, fm) = (f.n(), f.m());
        // factor variable k -> product variable
        let map: Vec<usize> = (0..fnx).map(|k| x0 + k).chain((0..fm).map(|l| y0 + l)).collect();
        let re = |c: &CoefficientField| c.reindexed(nv, &map);
        for i in 0..fnx {
            builder = builder.b(x0 + i, re(f.b(i)));
            for j in 0..fnx {
                builder = builder.a(x0 + i, x0 + j, re(f.a(i, j)));
            }
            for l in 0..fm {
                builder = builder.c(x0 + i, y0 + l, re(f.c(i, l)));
            }
        }
        for l in 0..fm {
            builder = builder.e(y0 + l, re(f.e(l)));
            for k in 0..fm {
                builder = builder.d(y0 + l, y0 + k, re(f.d(l, k)));
            }
        }
        x0 += fnx;
        y0 += fm;
        names.push(f.name().to_string());
    }
    builder.name(format!("product({})", names.join(","))).build()
}

#[derive(Debug, Clone)]
enum Arg {
    Num(f64),
    List(Vec<f64>),
    Call(String, Vec<Arg>),
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::UnknownPreset(format!("{}: {msg} at position {}", self.src, self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || b"+-.eE".contains(&self.s[self.pos])) {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| self.err("expected a number"))
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || b"-_".contains(&self.s[self.pos])) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a preset name"));
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn arg(&mut self) -> Result<Arg> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let mut v = Vec::new();
                if self.peek() != Some(b']') {
                    loop {
                        v.push(self.number()?);
                        if self.peek() == Some(b',') {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(b']')?;
                Ok(Arg::List(v))
            }
            Some(c) if c.is_ascii_alphabetic() => self.call(),
            _ => Ok(Arg::Num(self.number()?)),
        }
    }

    fn call(&mut self) -> Result<Arg> {
        let name = self.ident()?;
        let mut args = Vec::new();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            if self.peek() != Some(b')') {
                loop {
                    args.push(self.arg()?);
                    if self.peek() == Some(b',') {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
            }
            self.expect(b')')?;
        }
        Ok(Arg::Call(name, args))
    }
}

fn nums(name: &str, args: &[Arg], lo: usize, hi: usize) -> Result<Vec<f64>> {
    if args.len() < lo || args.len() > hi {
        return Err(Error::UnknownPreset(format!(
            "{name} takes {lo}..={hi} numeric arguments, got {}",
            args.len()
        )));
    }
    args.iter()
        .map(|a| match a {
            Arg::Num(v) => Ok(*v),
            _ => Err(Error::UnknownPreset(format!("{name}: expected numeric arguments"))),
        })
        .collect()
}

fn build(call: &Arg) -> Result<PresetSpec> {
    let Arg::Call(name, args) = call else {
        return Err(Error::UnknownPreset("expected a preset".into()));
    };
    let kim = |op: Result<KimuraOperator>| op.map(PresetSpec::Kimura);
    match name.as_str() {
        "model1d" => {
            let v = nums(name, args, 1, 2)?;
            kim(model1d(v[0], v.get(1).copied().unwrap_or(1.0)))
        }
        "kimura1d" => {
            let v = nums(name, args, 2, 2)?;
            kim(kimura1d(v[0], v[1]))
        }
        "wright-fisher" => match args.as_slice() {
            [Arg::Num(dim), Arg::List(rates)] if *dim >= 1.0 && dim.fract() == 0.0 => {
                kim(wright_fisher(*dim as usize, rates))
            }
            _ => Err(Error::UnknownPreset(
                "wright-fisher expects (N, [b_1, .., b_{N+1}])".into(),
            )),
        },
        "product" => {
            let factors = args
                .iter()
                .map(|a| build(a).and_then(PresetSpec::into_kimura))
                .collect::<Result<Vec<_>>>()?;
            kim(product(&factors))
        }
        "remark-counterexample" => {
            nums(name, args, 0, 0)?;
            kim(remark_counterexample())
        }
        "appendix-A" => {
            let v = nums(name, args, 5, 5)?;
            Ok(PresetSpec::AppendixA(AppendixParams {
                a11: v[0],
                a22: v[1],
                b1: v[2],
                b2: v[3],
                nu: v[4],
            }))
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Parse a preset expression.
pub fn parse_preset(src: &str) -> Result<PresetSpec> {
    let mut p = Parser {
        s: src.as_bytes(),
        pos: 0,
        src,
    };
    let call = p.call()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    build(&call)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_registry_names() {
        for s in [
            "model1d(0.5)",
            "model1d(0.5, 2)",
            "kimura1d(0,0)",
            "wright-fisher(2,[0.1,0,0.3])",
            "product(model1d(0.5), model1d(0))",
            "remark-counterexample",
        ] {
            assert!(matches!(parse_preset(s), Ok(PresetSpec::Kimura(_))), "{s}");
        }
        assert!(matches!(
            parse_preset("appendix-A(1,1,0,0.5,0.5)"),
            Ok(PresetSpec::AppendixA(AppendixParams { b2, .. })) if b2 == 0.5
        ));
    }

    #[test]
    fn rejects_malformed_presets() {
        assert!(matches!(parse_preset("heston(1)"), Err(Error::UnknownPreset(_))));
        assert!(parse_preset("wright-fisher(2,[0,0])").is_err());
        assert!(parse_preset("model1d(0.5").is_err());
        assert!(parse_preset("model1d(0.5) x").is_err());
        assert!(parse_preset("product(kimura1d(0,0))").is_err());
    }

    #[test]
    fn product_places_factor_coefficients() {
        let op = parse_preset("product(model1d(0.5), model1d(0.2))")
            .unwrap()
            .into_kimura()
            .unwrap();
        assert_eq!(op.n(), 2);
        assert_eq!(op.b(0).as_constant(), Some(0.5));
        assert_eq!(op.b(1).as_constant(), Some(0.2));
        assert!(op.a(0, 1).is_zero());
    }
}
