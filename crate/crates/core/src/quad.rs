//! Gauss–Legendre quadrature.

/// Nodes and weights on `[-1, 1]`, computed by Newton iteration on `P_n`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pn1 = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n == 1 {
            nodes[0] = 0.0;
            weights[0] = 2.0;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }

    pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(&self, a1: f64, b1: f64, a2: f64, b2: f64, mut f: F) -> f64 {
        self.integrate(a1, b1, |s| self.integrate(a2, b2, |t| f(s, t)))
    }

    /// `∫_0^c x^{b-1} g(x) dx` for `b > 0` via `x = u^{1/b}`.
    pub fn integrate_power_singular<F: FnMut(f64) -> f64>(&self, c: f64, b: f64, mut g: F) -> f64 {
        let top = c.powf(b);
        self.integrate(0.0, top, |u| g(u.powf(1.0 / b))) / b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        let gl = GaussLegendre::new(5);
        // degree 9 is exact with 5 nodes
        let v = gl.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-10);
        let gl1 = GaussLegendre::new(1);
        assert!((gl1.integrate(0.0, 1.0, |x| 3.0 * x) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn power_singular_integral() {
        let gl = GaussLegendre::new(12);
        let v = gl.integrate_power_singular(0.5, 0.3, |x| 1.0 + x);
        let exact = 0.5f64.powf(0.3) / 0.3 + 0.5f64.powf(1.3) / 1.3;
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
    }
}
