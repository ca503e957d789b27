//! Truncated multivariate Taylor series in one or two variables.
//!
//! A jet of order `d` stores `D^b f(a) / b!` for every multi-index with
//! `|b| <= d`, so kernel derivatives come out exact up to rounding.

/// Multi-indices of total degree `<= order`, sorted by degree.
pub fn multi_indices(n: usize, order: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    for deg in 0..=order {
        if n == 1 {
            out.push([deg, 0]);
        } else {
            for i in (0..=deg).rev() {
                out.push([i, deg - i]);
            }
        }
    }
    out
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    n: usize,
    order: usize,
    index: Vec<[usize; 2]>,
    coef: Vec<f64>,
}

impl Jet {
    pub fn constant(n: usize, order: usize, c: f64) -> Self {
        let index = multi_indices(n, order);
        let mut coef = vec![0.0; index.len()];
        coef[0] = c;
        Jet { n, order, index, coef }
    }

    /// The coordinate function `x_axis` expanded at a point whose `axis`
    /// coordinate is `value`.
    pub fn variable(n: usize, order: usize, axis: usize, value: f64) -> Self {
        let mut j = Jet::constant(n, order, value);
        if order >= 1 {
            let mut e = [0, 0];
            e[axis] = 1;
            let pos = j.position(e).expect("degree-one index exists");
            j.coef[pos] = 1.0;
        }
        j
    }

    fn position(&self, b: [usize; 2]) -> Option<usize> {
        self.index.iter().position(|x| *x == b)
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    /// `D^b f / b!`; zero beyond the truncation order.
    pub fn coefficient(&self, b: [usize; 2]) -> f64 {
        self.position(b).map_or(0.0, |p| self.coef[p])
    }

    /// `D^b f`.
    pub fn derivative(&self, b: [usize; 2]) -> f64 {
        self.coefficient(b) * factorial(b[0]) * factorial(b[1])
    }

    pub fn indices(&self) -> &[[usize; 2]] {
        &self.index
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let mut r = self.clone();
        for (a, b) in r.coef.iter_mut().zip(&o.coef) {
            *a += b;
        }
        r
    }

    pub fn add_const(&self, c: f64) -> Jet {
        let mut r = self.clone();
        r.coef[0] += c;
        r
    }

    pub fn scale(&self, c: f64) -> Jet {
        let mut r = self.clone();
        for a in &mut r.coef {
            *a *= c;
        }
        r
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let mut r = Jet::constant(self.n, self.order, 0.0);
        for (i, bi) in self.index.iter().enumerate() {
            if self.coef[i] == 0.0 {
                continue;
            }
            for (k, bk) in o.index.iter().enumerate() {
                let b = [bi[0] + bk[0], bi[1] + bk[1]];
                if b[0] + b[1] > self.order {
                    continue;
                }
                let p = r.position(b).expect("index within order");
                r.coef[p] += self.coef[i] * o.coef[k];
            }
        }
        r
    }

    /// `g(self)` given `derivs[k] = g^(k)(self.value())` for `k <= order`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coef[0] = 0.0;
        let mut out = Jet::constant(self.n, self.order, derivs[0]);
        let mut power = Jet::constant(self.n, self.order, 1.0);
        for (k, d) in derivs.iter().enumerate().take(self.order + 1).skip(1) {
            power = power.mul(&delta);
            out = out.add(&power.scale(d / factorial(k)));
        }
        out
    }

    /// `self^alpha`; the value must be positive.
    pub fn powf(&self, alpha: f64) -> Jet {
        let a0 = self.value();
        let mut derivs = Vec::with_capacity(self.order + 1);
        let mut falling = 1.0;
        for k in 0..=self.order {
            derivs.push(falling * a0.powf(alpha - k as f64));
            falling *= alpha - k as f64;
        }
        self.compose(&derivs)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    /// `sum_{|b| <= max_degree} coef_b offset^b`.
    pub fn eval_polynomial(&self, offset: &[f64], max_degree: usize) -> f64 {
        self.index
            .iter()
            .zip(&self.coef)
            .filter(|(b, _)| b[0] + b[1] <= max_degree)
            .map(|(b, c)| {
                let mut t = c * offset[0].powi(b[0] as i32);
                if self.n == 2 {
                    t *= offset[1].powi(b[1] as i32);
                }
                t
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_counts() {
        assert_eq!(multi_indices(1, 3).len(), 4);
        assert_eq!(multi_indices(2, 3).len(), 10);
    }

    #[test]
    fn power_derivatives_1d() {
        // (2 + x)^(-1.5) at x = 1
        let x = Jet::variable(1, 3, 0, 1.0);
        let f = x.add_const(2.0).powf(-1.5);
        let d3 = -1.5 * -2.5 * -3.5 * 3f64.powf(-4.5);
        assert!((f.derivative([3, 0]) - d3).abs() < 1e-14);
    }

    #[test]
    fn radial_second_derivative_2d() {
        // |u| at (3, 4): d^2/du0 du1 = -u0 u1 / |u|^3
        let u0 = Jet::variable(2, 2, 0, 3.0);
        let u1 = Jet::variable(2, 2, 1, 4.0);
        let r = u0.mul(&u0).add(&u1.mul(&u1)).sqrt();
        assert!((r.value() - 5.0).abs() < 1e-15);
        assert!((r.derivative([1, 1]) + 12.0 / 125.0).abs() < 1e-15);
        assert!((r.derivative([2, 0]) - 16.0 / 125.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_reproduces_function_nearby() {
        let x = Jet::variable(1, 6, 0, 0.5);
        let f = x.add_const(1.0).powf(0.5);
        let approx = f.eval_polynomial(&[0.01], 6);
        assert!((approx - 1.51f64.sqrt()).abs() < 1e-15);
    }
}
